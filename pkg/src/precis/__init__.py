"""Precision-matrix estimation and minimum-variance portfolio evaluation."""

from .backtest import (
    PAPER_LABELS,
    BacktestReport,
    RollingConfig,
    StrategyRun,
    StrategySpec,
    build_report,
    condition_stats,
    oos_mean,
    oos_sharpe,
    oos_variance,
    run_rolling,
    sparsity,
    turnover,
    weight_distribution,
)
from .estimators import (
    PcaEstimate,
    PenaltySpec,
    PrecisionEstimate,
    SolverOptions,
    ledoit_wolf,
    ledoit_wolf_intensity,
    pca_precision,
    penalized_qml,
    sample_precision,
    tune_rho,
)
from .hedge import (
    HedgeRegression,
    lasso_hedge,
    ols_hedge,
    precision_from_hedges,
    soft_threshold,
)
from .linalg import (
    EigenDecomposition,
    condition_number,
    invert_spd,
    sample_covariance,
    sym_eigen,
)
from .panel import DescriptiveStats, ReturnsPanel, describe, forward_fill, parse_panel
from .portfolio import (
    KktCertificate,
    WeightVector,
    equal_weights,
    mean_variance_weights,
    mvp_weights,
    no_short_mvp,
)

__version__ = "0.1.0"

__all__ = [
    "BacktestReport",
    "DescriptiveStats",
    "EigenDecomposition",
    "HedgeRegression",
    "KktCertificate",
    "PAPER_LABELS",
    "PcaEstimate",
    "PenaltySpec",
    "PrecisionEstimate",
    "ReturnsPanel",
    "RollingConfig",
    "SolverOptions",
    "StrategyRun",
    "StrategySpec",
    "WeightVector",
    "build_report",
    "condition_number",
    "condition_stats",
    "describe",
    "equal_weights",
    "forward_fill",
    "invert_spd",
    "lasso_hedge",
    "ledoit_wolf",
    "ledoit_wolf_intensity",
    "mean_variance_weights",
    "mvp_weights",
    "no_short_mvp",
    "ols_hedge",
    "oos_mean",
    "oos_sharpe",
    "oos_variance",
    "parse_panel",
    "pca_precision",
    "penalized_qml",
    "precision_from_hedges",
    "run_rolling",
    "sample_covariance",
    "sample_precision",
    "soft_threshold",
    "sparsity",
    "sym_eigen",
    "tune_rho",
    "turnover",
    "weight_distribution",
]
