"""Calibration of hybrid (traditional + index-based) covers for heavy-tail losses."""

from .calibrate import (
    CalibrationResult,
    LearningCurveRow,
    Method,
    learning_curve,
    one_step_calibrate,
    optimize_theta,
    two_step_calibrate,
)
from .compare import ComparisonRow, capped_premium, comparison_sweep, solve_cap
from .contract import (
    Branch,
    ContractPayout,
    PayoffFamily,
    PayoffKind,
    UpperStat,
    capped_payout,
    compensation_ratio,
    empirical_premium,
    hybrid_payout,
    hybrid_payouts,
    payoff_phi,
    split_premium,
    threshold_quantile,
    trigger_payout,
    trigger_payouts,
)
from .dists import (
    CovariateSample,
    FitResult,
    LossSample,
    ModelKind,
    TailLinkModel,
    fit_mle,
)
from .ingest import BuildResult, TornadoRecord, build_sample, parse_tornado_csv
from .objective import (
    FKind,
    LKind,
    MetricConfig,
    Phi0,
    Phi1,
    approx_objective,
    empirical_objective,
    metric_L,
    phi0,
    phi1,
    price_f,
    psi,
)

__version__ = "0.1.0"
