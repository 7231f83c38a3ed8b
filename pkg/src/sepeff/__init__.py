"""Separable direct and indirect effects for discrete-time competing risks."""

__version__ = "0.1.0"

from .bootstrap import BootstrapResult, bootstrap, bootstrap_ci
from .causal_graph import Dag, DccReport, check_dismissible, d_separated, load_fixture, parse_graph
from .effects import EffectCurve, EffectKind, Scale, contrast, separable_decomposition
from .event_history import (
    EventKind,
    PersonTimeTable,
    SubjectRecord,
    read_wide_csv,
    validate_and_expand,
    write_wide_csv,
)
from .gformula import Estimator, RiskCurve, estimate_gformula_risk
from .glm import (
    DesignSpec,
    HazardModelSet,
    LogisticFit,
    OutcomeRole,
    fit_hazards,
    fit_pooled_logistic,
    parse_formula,
    predict_hazard,
)
from .ipw import WeightKind, WeightTable, compute_weights, estimate_ipw_risk
from .nonparam import CifPair, aalen_johansen, stratified_aalen_johansen
from .pipeline import Pipeline
from .prostate import ProstateConfig, load_prostate
from .simulate import (
    ArmDesign,
    CoverageTable,
    DgpCoefficients,
    HazardCoefficients,
    run_coverage,
    simulate_cohort,
    true_risk,
)

__all__ = [
    "BootstrapResult",
    "bootstrap",
    "bootstrap_ci",
    "Dag",
    "DccReport",
    "check_dismissible",
    "d_separated",
    "load_fixture",
    "parse_graph",
    "EffectCurve",
    "EffectKind",
    "Scale",
    "contrast",
    "separable_decomposition",
    "EventKind",
    "PersonTimeTable",
    "SubjectRecord",
    "read_wide_csv",
    "validate_and_expand",
    "write_wide_csv",
    "Estimator",
    "RiskCurve",
    "estimate_gformula_risk",
    "DesignSpec",
    "HazardModelSet",
    "LogisticFit",
    "OutcomeRole",
    "fit_hazards",
    "fit_pooled_logistic",
    "parse_formula",
    "predict_hazard",
    "WeightKind",
    "WeightTable",
    "compute_weights",
    "estimate_ipw_risk",
    "CifPair",
    "aalen_johansen",
    "stratified_aalen_johansen",
    "Pipeline",
    "ProstateConfig",
    "load_prostate",
    "ArmDesign",
    "CoverageTable",
    "DgpCoefficients",
    "HazardCoefficients",
    "run_coverage",
    "simulate_cohort",
    "true_risk",
]
