import math

import numpy as np
import pytest

from adamsep.errors import ConfigurationError, FitError, InputError
from adamsep.optimizers import StepSchedule, calibrate
from adamsep.problems import Objective, Oracle
from adamsep.tailstudy import (
    EnsembleSpec,
    QuantileCurve,
    empirical_quantile,
    fit_exponent,
    quantile_curve,
    run_ensemble,
    run_separation_study,
    separation_report,
)


class TestEmpiricalQuantile:
    def test_convention_example(self):
        assert empirical_quantile([1, 2, 3, 4, 5], 0.6) == 3.0

    def test_level_near_one_gives_max(self):
        assert empirical_quantile([5, 1, 9, 3], 0.9999) == 9.0

    def test_all_equal(self):
        assert empirical_quantile([2.5] * 10, 0.31) == 2.5

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            empirical_quantile([], 0.5)

    def test_inf_sentinels_sort_last(self):
        samples = [1.0, 2.0, math.inf, 0.5]
        assert empirical_quantile(samples, 0.5) == 1.0
        assert empirical_quantile(samples, 0.999) == math.inf


class TestFitExponent:
    def _curve(self, qs, deltas=(1e-1, 1e-2, 1e-3)):
        return QuantileCurve(deltas=tuple(deltas), qs=tuple(qs),
                             n_exceed=(0,) * len(deltas), N=10, metric="avg_gsq")

    def test_inverse_law(self):
        qs = [3.0 / d for d in (1e-1, 1e-2, 1e-3)]
        fit = fit_exponent(self._curve(qs))
        assert fit.slope == pytest.approx(1.0, abs=1e-12)
        assert fit.max_residual <= 1e-12

    def test_inverse_sqrt_law(self):
        qs = [2.0 / math.sqrt(d) for d in (1e-1, 1e-2, 1e-3)]
        fit = fit_exponent(self._curve(qs))
        assert fit.slope == pytest.approx(0.5, abs=1e-12)

    def test_constant_law(self):
        fit = fit_exponent(self._curve([4.2, 4.2, 4.2]))
        assert fit.slope == pytest.approx(0.0, abs=1e-12)

    def test_too_few_points(self):
        curve = QuantileCurve(deltas=(0.1, 0.01), qs=(1.0, 2.0), n_exceed=(0, 0), N=10, metric="E")
        with pytest.raises(InputError):
            fit_exponent(curve)

    def test_nonpositive_quantile_names_delta(self):
        with pytest.raises(FitError) as exc:
            fit_exponent(self._curve([1.0, 0.0, 2.0]))
        assert exc.value.delta == 1e-2


class TestCurves:
    def test_grid_must_decrease(self):
        with pytest.raises(InputError):
            QuantileCurve(deltas=(0.01, 0.1), qs=(1.0, 2.0), n_exceed=(0, 0), N=5, metric="E")

    def test_single_sample_set_curve_is_monotone(self):
        rng = np.random.default_rng(5)
        samples = rng.exponential(size=5000)
        deltas = (0.2, 0.1, 0.02, 0.005)
        curve = quantile_curve(deltas, {k: samples for k in range(4)}, "E", 100)
        assert curve.is_monotone


class TestSeparationReport:
    def _curve(self, qs):
        return QuantileCurve(deltas=(1e-1, 1e-2, 1e-3), qs=tuple(qs), n_exceed=(0, 0, 0),
                             N=10, metric="avg_gsq")

    def test_identical_curves_zero_gap(self):
        c = self._curve([1.0, 2.0, 4.0])
        rep = separation_report(c, c)
        assert rep.slope_gap == 0.0

    def test_synthetic_power_laws(self):
        adam = self._curve([1.0 / math.sqrt(d) for d in (1e-1, 1e-2, 1e-3)])
        sgd = self._curve([1.0 / d for d in (1e-1, 1e-2, 1e-3)])
        rep = separation_report(adam, sgd)
        assert rep.slope_gap == pytest.approx(0.5, abs=1e-12)
        assert rep.passes["gap_ok"]

    def test_grid_mismatch(self):
        a = self._curve([1.0, 2.0, 3.0])
        b = QuantileCurve(deltas=(0.2, 0.02, 0.002), qs=(1.0, 2.0, 3.0), n_exceed=(0, 0, 0),
                          N=10, metric="avg_gsq")
        with pytest.raises(InputError):
            separation_report(a, b)


class TestRunEnsemble:
    def test_zero_noise_from_minimizer_all_zero(self):
        spec = EnsembleSpec(
            oracle=Oracle(objective=Objective.quadratic_diag([1.0]), noise="zero"),
            optimizer=calibrate(0.1, 20),
            x_init=(0.0,), T=20, N=50, master_seed=0, metric="avg_gsq",
        )
        samples = run_ensemble(spec)
        assert np.all(samples == 0.0)

    def test_max_at_least_median(self):
        spec = EnsembleSpec(
            oracle=Oracle(objective=Objective.quadratic_diag([1.0]), noise="three-point", amplitude=7.0),
            optimizer=StepSchedule.constant(0.05),
            x_init=(0.0,), T=50, N=10_000, master_seed=3, metric="avg_gsq",
        )
        samples = run_ensemble(spec)
        assert samples.max() >= np.median(samples)

    def test_reproducible_bytes(self):
        spec = EnsembleSpec(
            oracle=Oracle(objective=Objective.quadratic_cosine(1), noise="gaussian", sigma=1.0),
            optimizer=calibrate(0.1, 30),
            x_init=(1.0,), T=30, N=200, master_seed=8, metric="E",
        )
        assert run_ensemble(spec).tobytes() == run_ensemble(spec).tobytes()

    def test_metric_optimizer_consistency(self):
        with pytest.raises(ConfigurationError):
            EnsembleSpec(
                oracle=Oracle(objective=Objective.quadratic_diag([1.0]), noise="zero"),
                optimizer=StepSchedule.constant(0.1),
                x_init=(0.0,), T=10, N=10, master_seed=0, metric="E",
            )
        with pytest.raises(ConfigurationError):
            EnsembleSpec(
                oracle=Oracle(objective=Objective.quadratic_diag([1.0]), noise="zero"),
                optimizer=calibrate(0.1, 10),
                x_init=(0.0,), T=10, N=10, master_seed=0, metric="w_gsq",
            )

    def test_n_guard(self):
        with pytest.raises(ConfigurationError):
            EnsembleSpec(
                oracle=Oracle(objective=Objective.quadratic_diag([1.0]), noise="zero"),
                optimizer=calibrate(0.1, 10),
                x_init=(0.0,), T=10, N=5, master_seed=0, metric="avg_gsq",
            )


class TestSeparationStudySmall:
    def test_small_scale_run_shape_and_determinism(self):
        # desk-check scale; the full-scale statistical assertions live in the
        # acceptance suite
        deltas = np.logspace(-1, -2, 3)
        a = run_separation_study(T=100, N=2000, delta_grid=deltas, master_seed=5)
        b = run_separation_study(T=100, N=2000, delta_grid=deltas, master_seed=5)
        assert a.sgd_curve.qs == b.sgd_curve.qs
        assert a.adam_curve.qs == b.adam_curve.qs
        assert a.report.slope_gap == b.report.slope_gap
        assert a.sgd_curve.is_monotone
        # SGD quantiles grow visibly faster than Adam ones even at small scale
        assert a.report.slope_gap > 0.0

    def test_sgd_exceedance_beats_confidence_level(self):
        # per-delta instances: the SGD exceedance frequency over the matching
        # threshold is itself a lower-bound witness and must exceed delta
        deltas = np.logspace(-1, -2, 3)
        study = run_separation_study(T=100, N=2000, delta_grid=deltas, master_seed=5)
        for delta, n_exc in zip(study.sgd_curve.deltas, study.sgd_curve.n_exceed):
            assert n_exc / study.sgd_curve.N > delta
