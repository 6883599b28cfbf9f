"""Finite impulse response transfer matrices.

A transfer matrix ``M(z) = sum_tau z^-tau M[tau]`` truncated to the spectral
elements ``M[start], ..., M[T]``.  ``start == 1`` marks a strictly proper map
(no feedthrough term).
"""

from dataclasses import dataclass
import io

import numpy as np

from .errors import ConstructionError

__all__ = [
    "FirTransferMatrix",
    "fir_product",
    "dump_blocks",
    "load_blocks",
    "write_blocks",
    "read_blocks",
]


@dataclass(frozen=True)
class FirTransferMatrix:
    coeffs: np.ndarray  # (T - start + 1, rows, cols)
    start: int = 0

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.ndim != 3:
            raise ConstructionError(
                f"coefficients must be a 3-d stack of matrices, got shape {coeffs.shape}")
        if self.start not in (0, 1):
            raise ConstructionError(f"start index must be 0 or 1, got {self.start}")
        if coeffs.shape[0] == 0:
            raise ConstructionError("at least one spectral element is required")
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def from_list(cls, mats, start=0):
        return cls(np.stack([np.atleast_2d(np.asarray(m, dtype=float)) for m in mats]), start)

    @classmethod
    def zeros(cls, shape, T, start=0):
        return cls(np.zeros((T - start + 1,) + tuple(shape)), start)

    @property
    def T(self):
        return self.start + self.coeffs.shape[0] - 1

    @property
    def shape(self):
        return self.coeffs.shape[1:]

    def __getitem__(self, tau):
        """Spectral element ``tau``; zero outside the stored range."""
        if self.start <= tau <= self.T:
            return self.coeffs[tau - self.start]
        return np.zeros(self.shape)

    def dense(self, length=None):
        """Stack of elements ``0 .. length-1`` (defaults to ``0 .. T``)."""
        if length is None:
            length = self.T + 1
        out = np.zeros((length,) + self.shape)
        hi = min(self.T, length - 1)
        if hi >= self.start:
            out[self.start:hi + 1] = self.coeffs[:hi - self.start + 1]
        return out

    def h2_squared(self):
        return float(np.sum(self.coeffs ** 2))

    def response(self, signal):
        """Apply the map to a time series ``signal`` of shape ``(H, cols)``."""
        signal = np.asarray(signal, dtype=float)
        H = signal.shape[0]
        out = np.zeros((H, self.shape[0]))
        for tau in range(self.start, min(self.T, H - 1) + 1):
            out[tau:] += signal[:H - tau] @ self[tau].T
        return out


def fir_product(left, right, upto=None):
    """Coefficients ``0 .. upto`` of the product of two FIR transfer matrices.

    ``left`` and ``right`` may be :class:`FirTransferMatrix` objects or plain
    2-d arrays (treated as static gains).
    """
    a = _as_dense(left)
    b = _as_dense(right)
    if upto is None:
        upto = a.shape[0] + b.shape[0] - 2
    out = np.zeros((upto + 1, a.shape[1], b.shape[2]))
    for i in range(min(a.shape[0], upto + 1)):
        for j in range(min(b.shape[0], upto + 1 - i)):
            out[i + j] += a[i] @ b[j]
    return out


def _as_dense(m):
    if isinstance(m, FirTransferMatrix):
        return m.dense()
    m = np.asarray(m, dtype=float)
    return m[None] if m.ndim == 2 else m


# Spectral-element text format: for every block a header line
# ``name, rows, cols, start, T`` followed by T - start + 1 matrices written
# row by row.  Values use 17 significant digits so files round-trip exactly.

def dump_blocks(blocks, fh):
    for name, fir in blocks.items():
        rows, cols = fir.shape
        fh.write(f"{name}, {rows}, {cols}, {fir.start}, {fir.T}\n")
        for mat in fir.coeffs:
            for row in mat:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_blocks(fh):
    lines = [(n, ln.strip()) for n, ln in enumerate(fh, start=1)]
    lines = [(n, ln) for n, ln in lines if ln and not ln.startswith("#")]
    blocks = {}
    pos = 0
    while pos < len(lines):
        lineno, header = lines[pos]
        parts = [p.strip() for p in header.split(",")]
        if len(parts) != 5:
            raise ConstructionError(f"line {lineno}: malformed block header {header!r}")
        name = parts[0]
        try:
            rows, cols, start, T = (int(p) for p in parts[1:])
        except ValueError:
            raise ConstructionError(f"line {lineno}: non-integer field in header {header!r}")
        count = (T - start + 1) * rows
        body = lines[pos + 1:pos + 1 + count]
        if len(body) != count:
            raise ConstructionError(f"line {lineno}: block {name!r} is truncated")
        data = []
        for n, ln in body:
            try:
                row = [float(v) for v in ln.split()]
            except ValueError:
                raise ConstructionError(f"line {n}: non-numeric entry")
            if len(row) != cols:
                raise ConstructionError(f"line {n}: expected {cols} entries, got {len(row)}")
            data.append(row)
        coeffs = np.array(data, dtype=float).reshape(T - start + 1, rows, cols)
        blocks[name] = FirTransferMatrix(coeffs, start)
        pos += 1 + count
    return blocks


def write_blocks(blocks, path):
    with open(path, "w") as fh:
        dump_blocks(blocks, fh)


def read_blocks(path):
    with open(path) as fh:
        return load_blocks(fh)


def blocks_to_text(blocks):
    buf = io.StringIO()
    dump_blocks(blocks, buf)
    return buf.getvalue()
