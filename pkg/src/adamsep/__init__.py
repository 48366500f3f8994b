"""Desk-scale laboratory for the high-probability tail behavior of Adam,
RMSProp-style updates, and SGD: exact optimizer recursions, executable
pathwise inequality checks, hard-instance event analytics, and
confidence-exponent measurement."""

from .checks import CheckResult, IDENTITY_CHECKS, LEMMA_CHECKS, run_pathwise_check
from .descent import DescentTerms, check_descent, descent_terms, mc_conditional_mean
from .errors import (
    ConfigurationError,
    DivergenceError,
    FitError,
    InputError,
    InstanceInvalidError,
)
from .instrument import DeltaSplit, Ledger, compute_ledger, delta_split, momentum_removed, stopping_time
from .lowerbound import (
    ConstStepInstance,
    LBReport,
    TVInstance,
    build_const_instance,
    build_tv_instance,
    enumerate_exceedance_prob,
    enumerate_one_shock_prob,
    mc_event_prob,
    one_shock_prob_exact,
    response_factor,
    shocked_trajectory,
    sign_choice,
    tv_response_factors,
    verify_const_instance,
    verify_tv_instance,
)
from .optimizers import (
    AdamParams,
    AdamState,
    StepSchedule,
    Trajectory,
    adam_init,
    adam_step,
    calibrate,
    d_beta1,
    max_eta,
    run_trajectory,
    sgd_step,
)
from .problems import Objective, Oracle, objective_eval, sample_gradient
from .streams import RngStream, derive_seed, derive_stream
from .tailstudy import (
    EnsembleSpec,
    ExponentFit,
    QuantileCurve,
    SeparationReport,
    SlopeThresholds,
    empirical_quantile,
    fit_exponent,
    run_ensemble,
    run_separation_study,
    separation_report,
)

__version__ = "0.1.0"
