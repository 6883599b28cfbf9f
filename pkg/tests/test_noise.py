import numpy as np
import pytest

from clsynth.errors import DimensionMismatch, InvalidArgument
from clsynth.noise import PRNG_NAME, FixedImpulse, GaussianNoise, SumNoise, ZeroNoise


def test_impulse_fires_once():
    n = FixedImpulse.at_channel(4, 2, 10.0, fire_time=3)
    assert n.n_w == 4
    out = np.array([n.sample(t) for t in range(6)])
    assert out[3, 2] == 10.0
    assert np.count_nonzero(out) == 1


def test_zero_noise():
    assert not np.any(ZeroNoise(3).sample(7))


def test_gaussian_variance_within_five_percent():
    g = GaussianNoise(np.diag([0.25, 4.0]), seed=3)
    samples = np.array([g.sample(t) for t in range(100_000)])
    np.testing.assert_allclose(samples.var(axis=0), [0.25, 4.0], rtol=0.05)
    assert abs(np.corrcoef(samples.T)[0, 1]) < 0.02


def test_gaussian_is_reproducible_and_order_independent():
    a = GaussianNoise.isotropic(3, 1.0, seed=11)
    b = GaussianNoise.isotropic(3, 1.0, seed=11)
    first = np.array([a.sample(t) for t in range(50)])
    backwards = np.array([b.sample(t) for t in reversed(range(50))])[::-1]
    np.testing.assert_array_equal(first, backwards)
    a.reset()
    np.testing.assert_array_equal(a.sample(0), first[0])
    c = GaussianNoise.isotropic(3, 1.0, seed=12)
    assert not np.allclose(c.sample(0), first[0])
    assert a.describe()["generator"] == PRNG_NAME


def test_gaussian_channel_subset():
    g = GaussianNoise.isotropic(4, 2.0, seed=0, channels=slice(2, 4))
    s = np.array([g.sample(t) for t in range(100)])
    assert not np.any(s[:, :2])
    assert np.all(s[:, 2:].std(axis=0) > 1)


def test_gaussian_rejects_bad_covariance():
    with pytest.raises(InvalidArgument):
        GaussianNoise([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(InvalidArgument):
        GaussianNoise([[1.0, 0.5], [0.0, 1.0]])


def test_sum_noise():
    s = SumNoise(FixedImpulse.at_channel(2, 0, 1.0), FixedImpulse.at_channel(2, 1, 2.0))
    np.testing.assert_array_equal(s.sample(0), [1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        SumNoise(ZeroNoise(2), ZeroNoise(3))
