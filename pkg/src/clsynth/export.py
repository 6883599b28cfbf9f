"""CSV time series and log-magnitude graymap output."""

import os

import numpy as np

from .simulator import SIGNALS

__all__ = ["write_csv", "read_csv", "pgm_pixels", "write_pgm", "read_pgm",
           "write_result", "LOG_FLOOR", "LOG_CEIL"]

LOG_FLOOR = -8.0
LOG_CEIL = 1.0


def write_csv(path, history):
    """One row per time step: ``t`` followed by every channel, 9 significant digits."""
    history = np.atleast_2d(history)
    header = "t," + ",".join(str(i) for i in range(history.shape[1]))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for t, row in enumerate(history):
            fh.write(str(t) + "," + ",".join("%.8e" % v for v in row) + "\n")


def read_csv(path):
    """Inverse of :func:`write_csv`; returns the ``(horizon, dim)`` values."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1:]


def pgm_pixels(history):
    """Map ``history`` (time x channel) to 8-bit intensities, channels as rows.

    ``log10 |v|`` is clamped to ``[LOG_FLOOR, LOG_CEIL]`` and scaled linearly
    onto ``0 .. 255``; exact zeros land on the floor.
    """
    mag = np.abs(np.atleast_2d(history)).T
    with np.errstate(divide="ignore"):
        logs = np.where(mag > 0, np.log10(np.where(mag > 0, mag, 1.0)), LOG_FLOOR)
    logs = np.clip(logs, LOG_FLOOR, LOG_CEIL)
    return np.rint((logs - LOG_FLOOR) / (LOG_CEIL - LOG_FLOOR) * 255).astype(int)


def write_pgm(path, history):
    """Plain (P2) graymap with one pixel per (channel, time step)."""
    pix = pgm_pixels(history)
    rows, cols = pix.shape
    with open(path, "w") as fh:
        fh.write(f"P2\n# log10|value| from {LOG_FLOOR:g} to {LOG_CEIL:g}\n{cols} {rows}\n255\n")
        for row in pix:
            fh.write(" ".join(str(v) for v in row) + "\n")


def read_pgm(path):
    """Pixel array of a P2 file written by :func:`write_pgm`."""
    tokens = []
    with open(path) as fh:
        for line in fh:
            tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P2":
        raise ValueError(f"{path}: not a plain graymap")
    cols, rows, _ = (int(v) for v in tokens[1:4])
    return np.array(tokens[4:], dtype=int).reshape(rows, cols)


def write_result(result, directory, heatmaps=("x", "y", "u")):
    """Write ``<signal>.csv`` for every signal and ``<signal>.pgm`` for ``heatmaps``."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for name in SIGNALS:
        path = os.path.join(directory, name + ".csv")
        write_csv(path, result.signal(name))
        paths.append(path)
    for name in heatmaps:
        path = os.path.join(directory, name + ".pgm")
        write_pgm(path, result.signal(name))
        paths.append(path)
    return paths
