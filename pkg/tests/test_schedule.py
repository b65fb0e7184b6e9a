import numpy as np
import pytest

from citygen.errors import ConfigurationError, DataError
from citygen.schedule import NoiseSchedule, forward_noise, make_schedule


class TestMakeSchedule:
    def test_single_step(self):
        sched = make_schedule(1)
        assert sched.betas.tolist() == [1e-4]
        assert sched.alpha_bars.tolist() == [1 - 1e-4]

    def test_t1000_decreasing_and_small_tail(self):
        sched = make_schedule(1000)
        ab = sched.alpha_bars
        assert (np.diff(ab) < 0).all()
        assert ab[-1] < 0.01
        assert ab[0] > 0.999

    def test_cumprod_identity(self):
        sched = make_schedule(64)
        for t in range(2, 65):
            assert sched.alpha_bar(t) / (1 - sched.beta(t)) == pytest.approx(
                sched.alpha_bar(t - 1), rel=1e-12
            )

    def test_rejects_bad_t(self):
        with pytest.raises(ConfigurationError):
            make_schedule(0)

    def test_rejects_out_of_range_betas(self):
        with pytest.raises(ConfigurationError):
            NoiseSchedule(np.array([0.5, 1.5]))


class TestForwardNoise:
    def test_zero_noise(self):
        sched = make_schedule(10)
        s0 = np.ones((3, 3, 2))
        out = forward_noise(s0, 5, np.zeros_like(s0), sched)
        assert np.allclose(out, np.sqrt(sched.alpha_bar(5)) * s0)

    def test_small_t_stays_close(self):
        sched = make_schedule(1000)
        s0 = np.full((4, 4, 2), -1.0)
        eps = np.random.default_rng(0).normal(size=s0.shape)
        out = forward_noise(s0, 1, eps, sched)
        bound = np.sqrt(1 - sched.alpha_bar(1)) * np.abs(eps).max() + 1e-3
        assert np.abs(out - s0).max() <= bound

    def test_marginal_statistics_monte_carlo(self):
        sched = make_schedule(100)
        t = 40
        s0 = np.array([[[0.7, -0.4]]])
        rng = np.random.default_rng(123)
        n = 10_000
        draws = np.stack([forward_noise(s0, t, rng.normal(size=s0.shape), sched) for _ in range(n)])
        ab = sched.alpha_bar(t)
        se_mean = np.sqrt(1 - ab) / np.sqrt(n)
        assert np.abs(draws.mean(axis=0) - np.sqrt(ab) * s0).max() < 3 * se_mean
        var = draws.var(axis=0)
        se_var = (1 - ab) * np.sqrt(2.0 / (n - 1))
        assert np.abs(var - (1 - ab)).max() < 3 * se_var

    def test_shape_mismatch(self):
        sched = make_schedule(10)
        with pytest.raises(DataError):
            forward_noise(np.ones((2, 2)), 3, np.ones((3, 3)), sched)
