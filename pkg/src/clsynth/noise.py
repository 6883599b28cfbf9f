"""Disturbance generators for the simulation workflow."""

import numpy as np

from .errors import DimensionMismatch, InvalidArgument
from .framework import NoiseModel

__all__ = ["ZeroNoise", "FixedImpulse", "GaussianNoise", "SumNoise", "PRNG_NAME"]

# Recorded in simulation metadata so runs can be reproduced elsewhere.
PRNG_NAME = "numpy.random.PCG64"


class ZeroNoise(NoiseModel):
    def __init__(self, n_w):
        self.n_w = int(n_w)

    def sample(self, t):
        return np.zeros(self.n_w)


class FixedImpulse(NoiseModel):
    """Fires ``vector`` once at step ``fire_time`` and is zero otherwise."""

    def __init__(self, fire_time, vector):
        if fire_time < 0:
            raise InvalidArgument(f"fire_time must be nonnegative, got {fire_time}")
        self.fire_time = int(fire_time)
        self.vector = np.asarray(vector, dtype=float).reshape(-1)
        self.n_w = self.vector.shape[0]

    @classmethod
    def at_channel(cls, n_w, channel, magnitude, fire_time=0):
        v = np.zeros(n_w)
        v[channel] = magnitude
        return cls(fire_time, v)

    def sample(self, t):
        if t == self.fire_time:
            return self.vector.copy()
        return np.zeros(self.n_w)

    def describe(self):
        return {"type": "FixedImpulse", "n_w": self.n_w, "fire_time": self.fire_time,
                "vector": self.vector.tolist()}


class GaussianNoise(NoiseModel):
    """I.i.d. zero-mean Gaussian samples with a given covariance.

    Samples are drawn in time order from a PCG64 stream seeded with ``seed``
    and cached, so ``sample(t)`` does not depend on the order of the calls.
    The covariance may be singular (noise confined to some channels).
    """

    def __init__(self, covariance, seed=0):
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        if cov.shape[0] != cov.shape[1]:
            raise DimensionMismatch(f"covariance must be square, got {cov.shape}")
        if not np.allclose(cov, cov.T):
            raise InvalidArgument("covariance must be symmetric")
        evals, evecs = np.linalg.eigh(cov)
        if evals.min(initial=0.0) < -1e-12 * max(1.0, abs(evals).max(initial=0.0)):
            raise InvalidArgument("covariance must be positive semidefinite")
        self.covariance = cov
        self.seed = int(seed)
        self.n_w = cov.shape[0]
        self._factor = evecs * np.sqrt(np.clip(evals, 0.0, None))
        self._rng = np.random.Generator(np.random.PCG64(self.seed))
        self._cache = np.zeros((0, self.n_w))

    @classmethod
    def isotropic(cls, n_w, sigma, seed=0, channels=None):
        """``sigma**2`` variance on ``channels`` (all channels by default)."""
        diag = np.zeros(n_w)
        diag[slice(None) if channels is None else channels] = sigma ** 2
        return cls(np.diag(diag), seed)

    def _extend(self, t):
        need = t + 1 - self._cache.shape[0]
        if need > 0:
            block = max(need, 256)
            draws = self._rng.standard_normal((block, self.n_w)) @ self._factor.T
            self._cache = np.vstack([self._cache, draws])

    def sample(self, t):
        self._extend(t)
        return self._cache[t].copy()

    def describe(self):
        return {"type": "GaussianNoise", "n_w": self.n_w, "seed": self.seed,
                "generator": PRNG_NAME, "covariance_diag": np.diag(self.covariance).tolist()}


class SumNoise(NoiseModel):
    """Superposition of several noise models of equal dimension."""

    def __init__(self, *parts):
        if not parts:
            raise InvalidArgument("SumNoise needs at least one component")
        dims = {p.n_w for p in parts}
        if len(dims) != 1:
            raise DimensionMismatch(f"noise components disagree on n_w: {sorted(dims)}")
        self.parts = parts
        self.n_w = dims.pop()

    def sample(self, t):
        return sum(p.sample(t) for p in self.parts)

    def reset(self):
        for p in self.parts:
            p.reset()

    def describe(self):
        return {"type": "SumNoise", "n_w": self.n_w, "parts": [p.describe() for p in self.parts]}
