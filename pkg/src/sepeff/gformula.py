"""Parametric g-formula for counterfactual cumulative incidence."""

from __future__ import annotations

import enum
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyArm, GridMismatch
from .event_history import PersonTimeTable
from .glm import HazardModelSet, hazard_matrix


class Estimator(enum.Enum):
    GFORMULA = "gformula"
    IPW1 = "ipw1"
    IPW2 = "ipw2"
    NONPARAM = "nonparam"
    TRUTH = "truth"


@dataclass(frozen=True, eq=False)
class RiskCurve:
    """Estimated risk of the event of interest by interval ``k = 1..K+1``
    under the joint assignment ``(a_y, a_d)`` and no censoring."""

    a_y: int
    a_d: int
    values: np.ndarray
    estimator: Estimator

    @property
    def K1(self) -> int:
        return len(self.values)

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, self.K1 + 1)

    @property
    def target(self) -> tuple[int, int]:
        return (self.a_y, self.a_d)

    def at(self, k: int) -> float:
        if not 1 <= k <= self.K1:
            raise GridMismatch(f"k={k} outside grid 1..{self.K1}")
        return float(self.values[k - 1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("k,estimate\n")
        for kk, v in zip(self.k, self.values):
            buf.write(f"{kk},{float(v)!r}\n")
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "estimator": self.estimator.value,
                "a_y": self.a_y,
                "a_d": self.a_d,
                "k": self.k.tolist(),
                "estimate": [float(v) for v in self.values],
            }
        )


def pattern_weights(table: PersonTimeTable, arm: int | None = None) -> np.ndarray:
    """Total subject weight in each covariate pattern, optionally for one arm."""
    _, pat = table.patterns
    w = table.subject_weight if arm is None else table.subject_weight * (table.arm == arm)
    return np.bincount(pat, weights=w, minlength=len(table.patterns[0]))


def cumulative_incidence(h_y: np.ndarray, h_d: np.ndarray) -> np.ndarray:
    """Risk of the event of interest from per-interval hazards.

    The competing event is resolved before the event of interest in each
    interval. Works along the last axis.
    """
    surv_d = 1.0 - h_d
    surv = np.cumprod(surv_d * (1.0 - h_y), axis=-1)
    prev = np.concatenate([np.ones(surv.shape[:-1] + (1,)), surv[..., :-1]], axis=-1)
    return np.cumsum(prev * surv_d * h_y, axis=-1)


def estimate_gformula_risk(
    models: HazardModelSet,
    table: PersonTimeTable,
    a_y: int,
    a_d: int,
    *,
    standardize_arm: int | None = None,
) -> RiskCurve:
    """G-formula risk under ``(a_y, a_d)``.

    Hazards of the event of interest are evaluated at ``a_y`` and those of
    the competing event at ``a_d``; the resulting risk is averaged over the
    empirical covariate distribution of all subjects, or of one arm when
    ``standardize_arm`` is given.
    """
    for fit, name in ((models.fit_y, "event-of-interest"), (models.fit_d, "competing-event")):
        if fit is None:
            raise ValueError(f"the g-formula needs a fitted {name} model")
        fit.require_converged()
    uniq, _ = table.patterns
    w = pattern_weights(table, standardize_arm)
    if w.sum() <= 0:
        raise EmptyArm(f"no subjects available for standardization (arm={standardize_arm})")
    h_y = hazard_matrix(models.fit_y, a_y, uniq, table.covariate_names, table.grid_K)
    h_d = hazard_matrix(models.fit_d, a_d, uniq, table.covariate_names, table.grid_K)
    risk = cumulative_incidence(h_y, h_d)
    values = (w @ risk) / w.sum()
    return RiskCurve(a_y, a_d, values, Estimator.GFORMULA)
