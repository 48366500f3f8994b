import numpy as np
import pytest

from adamsep.descent import check_descent, descent_terms, mc_conditional_mean
from adamsep.errors import ConfigurationError, InputError
from adamsep.optimizers import calibrate, run_trajectory
from adamsep.problems import Objective, Oracle
from adamsep.streams import derive_stream
from adamsep.suite import sample_calibrated_case


def _traj(noise="gaussian", sigma=1.0, beta1=0.5, T=40, seed=11, d=2, x1=None):
    p = calibrate(0.1, T, beta1=beta1)
    obj = Objective.quadratic_cosine(d)
    if noise == "zero":
        oracle = Oracle(objective=obj, noise="zero")
    else:
        oracle = Oracle(objective=obj, noise=noise, sigma=sigma)
    if x1 is None:
        x1 = [0.8] * d
    return run_trajectory(p, oracle, x1, T, derive_stream(seed, 0, "noise"))


class TestMcConditionalMean:
    def test_zero_noise_degenerate(self):
        traj = _traj(noise="zero")
        mean, se = mc_conditional_mean(traj, 3, "gamma_grad_g", 16, derive_stream(1, 0, "resample"))
        assert np.all(se == 0.0)
        realized = traj.gamma[2] * traj.grad[2] * traj.g[2]
        assert np.allclose(mean, realized, rtol=1e-15)

    def test_gradient_mean_recovers_truth(self):
        traj = _traj(sigma=0.8, seed=3)
        mean, se = mc_conditional_mean(traj, 5, "g", 4096, derive_stream(2, 0, "resample"))
        assert np.all(np.abs(mean - traj.grad[4]) <= 4.0 * se + 1e-12)

    def test_abs_delta_nonnegative(self):
        traj = _traj(sigma=2.0, seed=4)
        mean, _ = mc_conditional_mean(traj, 7, "abs_delta1", 256, derive_stream(3, 0, "resample"))
        assert np.all(mean >= 0.0)

    def test_resample_count_validated(self):
        traj = _traj()
        with pytest.raises(ConfigurationError):
            mc_conditional_mean(traj, 1, "g", 1, derive_stream(0, 0, "resample"))

    def test_unknown_quantity(self):
        traj = _traj()
        with pytest.raises(ConfigurationError):
            mc_conditional_mean(traj, 1, "what", 8, derive_stream(0, 0, "resample"))


class TestDescentTerms:
    def test_zero_noise_components_vanish(self):
        traj = _traj(noise="zero", beta1=0.5)
        dt = descent_terms(traj, 4, 32, derive_stream(5, 0, "resample"))
        assert dt.d1 == 0.0 and dt.d3 == 0.0
        assert abs(dt.d2) < 1e-15
        assert dt.se_d1 == dt.se_d3 == 0.0 and dt.se_d2 < 1e-18

    def test_no_momentum_kills_d3(self):
        traj = _traj(beta1=0.0, sigma=1.0, seed=7)
        dt = descent_terms(traj, 6, 64, derive_stream(6, 0, "resample"))
        assert dt.d3 == 0.0 and dt.se_d3 == 0.0

    def test_first_step_d3_vanishes(self):
        # m_0 = 0 makes the momentum component vanish at t = 1
        traj = _traj(beta1=0.9, sigma=1.0, seed=8)
        dt = descent_terms(traj, 1, 64, derive_stream(7, 0, "resample"))
        assert dt.d3 == 0.0

    def test_conditional_means_centered(self):
        # two independent resample batches: estimate minus fresh-realization
        # average should be within 4 combined SEs of zero for each component
        traj = _traj(beta1=0.5, sigma=1.5, seed=9, T=30)
        t = 5
        n = 4096
        a = descent_terms(traj, t, n, derive_stream(8, 0, "resample"))
        b = descent_terms(traj, t, n, derive_stream(8, 1, "resample"))
        # same functional estimated on disjoint draws: difference is centered
        for da, db, sa, sb in ((a.d1, b.d1, a.se_d1, b.se_d1),
                               (a.d2, b.d2, a.se_d2, b.se_d2),
                               (a.d3, b.d3, a.se_d3, b.se_d3)):
            assert abs(da - db) <= 4.0 * np.hypot(sa, sb) + 1e-12

    def test_index_validation(self):
        traj = _traj(T=20)
        with pytest.raises(InputError):
            descent_terms(traj, 20, 16, derive_stream(0, 0, "resample"))


class TestCheckDescent:
    def test_deterministic_case_holds_without_slack(self):
        traj = _traj(noise="zero", beta1=0.0, seed=12)
        result = check_descent(traj, 3, 16, derive_stream(9, 0, "resample"))
        assert result.holds
        assert result.stat_slack == 0.0

    def test_zero_noise_at_minimizer(self):
        traj = _traj(noise="zero", beta1=0.0, x1=[0.0, 0.0])
        result = check_descent(traj, 2, 16, derive_stream(10, 0, "resample"))
        assert result.holds
        assert result.lhs == 0.0

    def test_random_pairs_hold(self):
        held = 0
        for k in range(25):
            traj, _ = sample_calibrated_case(515, k)
            pick = derive_stream(515, k, "pick")
            t = 1 + int(pick.draw("uniform01") * (traj.T - 1))
            result = check_descent(traj, t, 2048, derive_stream(515, k, "resample"))
            held += result.holds
        assert held >= 24
