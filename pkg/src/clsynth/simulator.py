"""Closed-loop time-domain simulation."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, UnsupportedFeedthrough

__all__ = ["SimulationResult", "Simulator", "ComparisonReport", "compare", "SIGNALS"]

SIGNALS = ("x", "y", "u", "w", "z")


@dataclass
class SimulationResult:
    """Histories of shape ``(horizon, dim)``; row ``t`` is the value at step ``t``."""

    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    w: np.ndarray
    z: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {name: getattr(self, name).shape[0] for name in SIGNALS}
        if len(set(lengths.values())) != 1:
            raise DimensionMismatch(f"signal histories differ in length: {lengths}")

    @property
    def horizon(self):
        return self.x.shape[0]

    def signal(self, name):
        return getattr(self, name)

    def energy(self, name):
        return float(np.sum(getattr(self, name) ** 2))

    def truncated(self, k):
        return SimulationResult(*(getattr(self, s)[:k] for s in SIGNALS),
                                metadata=dict(self.metadata, horizon=k))


class Simulator:
    """Runs the causal loop

        w[t] = noise(t);  y[t] = C2 x[t] + D21 w[t];  u[t] = K(y[t]);
        z[t] = C1 x[t] + D11 w[t] + D12 u[t];  x[t+1] = A x[t] + B1 w[t] + B2 u[t]

    The system and controller are reset before every run.  Plants with direct
    feedthrough ``D22 != 0`` are rejected because ``y[t]`` would depend on
    ``u[t]``.
    """

    def check(self, system, controller, noise):
        dims = system.dims
        if system.has_feedthrough:
            raise UnsupportedFeedthrough("closed-loop simulation requires D22 = 0")
        problems = []
        if controller.n_y != dims.n_y:
            problems.append(f"controller expects {controller.n_y} measurements, system has {dims.n_y}")
        if controller.n_u != dims.n_u:
            problems.append(f"controller emits {controller.n_u} controls, system takes {dims.n_u}")
        if noise.n_w != dims.n_w:
            problems.append(f"noise has dimension {noise.n_w}, system takes {dims.n_w}")
        if problems:
            raise DimensionMismatch("; ".join(problems))

    def simulate(self, system, controller, noise, horizon):
        self.check(system, controller, noise)
        dims = system.dims
        system.reset()
        controller.reset()
        noise.reset()
        hist = {name: np.zeros((horizon, d)) for name, d in
                zip(SIGNALS, (dims.n_x, dims.n_y, dims.n_u, dims.n_w, dims.n_z))}
        for t in range(horizon):
            w = noise.sample(t)
            hist["x"][t] = system.state
            y = system.measure(w)
            u = controller.control(y)
            _, _, z = system.step(u, w)
            hist["w"][t], hist["y"][t], hist["u"][t], hist["z"][t] = w, y, u, z
        metadata = {
            "horizon": horizon,
            "system": repr(system),
            "controller": type(controller).__name__,
            "noise": noise.describe(),
        }
        return SimulationResult(**hist, metadata=metadata)


@dataclass
class ComparisonReport:
    """``max_abs_diff[s][i, j]`` is ``max |s_i - s_j|`` over time and channels;
    ``energy[s][i]`` is the sum of squared norms of signal ``s`` in run ``i``."""

    max_abs_diff: dict
    energy: dict

    def table(self, labels=None):
        n = len(next(iter(self.energy.values())))
        labels = labels or [f"run{i}" for i in range(n)]
        lines = ["signal  " + "  ".join(f"{'E(' + l + ')':>14}" for l in labels)
                 + "  max|diff vs first|"]
        for s in SIGNALS:
            energies = "  ".join(f"{e:14.6e}" for e in self.energy[s])
            diffs = " ".join(f"{d:.3e}" for d in self.max_abs_diff[s][0, 1:])
            lines.append(f"{s:6}  {energies}  {diffs}")
        return "\n".join(lines)


def compare(results):
    results = list(results)
    if not results:
        raise DimensionMismatch("nothing to compare")
    ref = results[0]
    for r in results[1:]:
        for s in SIGNALS:
            if getattr(r, s).shape != getattr(ref, s).shape:
                raise DimensionMismatch(
                    f"signal {s}: shape {getattr(r, s).shape} vs {getattr(ref, s).shape}")
    n = len(results)
    diffs, energy = {}, {}
    for s in SIGNALS:
        d = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                a, b = getattr(results[i], s), getattr(results[j], s)
                d[i, j] = d[j, i] = float(np.max(np.abs(a - b), initial=0.0))
        diffs[s] = d
        energy[s] = [r.energy(s) for r in results]
    return ComparisonReport(diffs, energy)
