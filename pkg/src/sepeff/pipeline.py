"""Estimation configuration shared by the command line, bootstrap and simulations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .effects import EffectCurve, separable_decomposition
from .errors import InvalidPair, ValidationError
from .event_history import PersonTimeTable
from .gformula import Estimator, RiskCurve, estimate_gformula_risk
from .glm import HazardModelSet, OutcomeRole, fit_pooled_logistic, parse_formula
from .ipw import WeightKind, WeightTable, compute_weights, estimate_ipw_risk
from .nonparam import aalen_johansen

ALL_TARGETS = ((1, 1), (0, 0), (1, 0), (0, 1))


@dataclass(frozen=True)
class Pipeline:
    """Which estimators to run, for which ``(a_y, a_d)`` targets, with which models.

    The nonparametric estimator only applies to targets with ``a_y == a_d``
    and is skipped for the others.
    """

    y_formula: str
    d_formula: str
    c_formula: str | None = None
    estimators: tuple[Estimator, ...] = (Estimator.GFORMULA, Estimator.IPW1)
    targets: tuple[tuple[int, int], ...] = ALL_TARGETS
    truncate_quantile: float | None = None
    standardize_arm: int | None = None

    def __post_init__(self):
        est = tuple(e if isinstance(e, Estimator) else Estimator(e) for e in self.estimators)
        object.__setattr__(self, "estimators", est)
        tg = tuple((int(a), int(b)) for a, b in self.targets)
        for t in tg:
            if not set(t) <= {0, 1}:
                raise InvalidPair(f"target components must be 0 or 1, got {t}")
        object.__setattr__(self, "targets", tg)
        if not est:
            raise ValidationError("at least one estimator is required")
        for t in tg:
            if not any(e is not Estimator.NONPARAM or t[0] == t[1] for e in est):
                raise ValidationError(f"target {t} is not reachable by any requested estimator")
        # validate formulas eagerly
        self.specs()

    def specs(self):
        y = parse_formula(self.y_formula, OutcomeRole.EVENT_Y)
        d = parse_formula(self.d_formula, OutcomeRole.COMPETING_D)
        c = parse_formula(self.c_formula, OutcomeRole.CENSOR_C) if self.c_formula else None
        return y, d, c

    def keys(self) -> list[tuple[Estimator, int, int]]:
        return [
            (e, a_y, a_d)
            for e in self.estimators
            for a_y, a_d in self.targets
            if e is not Estimator.NONPARAM or a_y == a_d
        ]

    def fit(self, table: PersonTimeTable) -> HazardModelSet:
        y, d, c = self.specs()
        need_y = any(e in (Estimator.GFORMULA, Estimator.IPW2) for e in self.estimators)
        need_d = any(e in (Estimator.GFORMULA, Estimator.IPW1) for e in self.estimators)
        need_c = any(e in (Estimator.IPW1, Estimator.IPW2) for e in self.estimators)
        fit_y = fit_pooled_logistic(table, y) if need_y else None
        fit_d = fit_pooled_logistic(table, d) if need_d else None
        fit_c = None
        if need_c and c is not None and np.any(table.c[table.row_weight > 0]):
            fit_c = fit_pooled_logistic(table, c)
        return HazardModelSet(fit_y, fit_d, fit_c)

    def run(
        self, table: PersonTimeTable, *, return_weights: bool = False
    ) -> dict[tuple[Estimator, int, int], RiskCurve] | tuple[dict, dict]:
        models = self.fit(table) if any(e is not Estimator.NONPARAM for e in self.estimators) else None
        out: dict[tuple[Estimator, int, int], RiskCurve] = {}
        weights: dict[tuple[Estimator, int, int], WeightTable] = {}
        aj_cache: dict[int, RiskCurve] = {}
        for key in self.keys():
            est, a_y, a_d = key
            if est is Estimator.GFORMULA:
                out[key] = estimate_gformula_risk(models, table, a_y, a_d, standardize_arm=self.standardize_arm)
            elif est is Estimator.NONPARAM:
                if a_y not in aj_cache:
                    aj_cache[a_y] = aalen_johansen(table, a_y).risk_curve()
                out[key] = aj_cache[a_y]
            else:
                kind = WeightKind.FOR_NU1 if est is Estimator.IPW1 else WeightKind.FOR_NU2
                w = compute_weights(models, table, a_y, a_d, kind, truncate_quantile=self.truncate_quantile)
                weights[key] = w
                out[key] = estimate_ipw_risk(table, w)
        return (out, weights) if return_weights else out

    def effects(self, curves: dict[tuple[Estimator, int, int], RiskCurve]) -> dict[tuple[Estimator, str], EffectCurve]:
        """Total, direct and indirect effects for each estimator with enough targets."""
        out = {}
        for est in self.estimators:
            r11, r00 = curves.get((est, 1, 1)), curves.get((est, 0, 0))
            if r11 is None or r00 is None:
                continue
            for mid in ((0, 1), (1, 0)):
                r_mid = curves.get((est, *mid))
                if r_mid is None:
                    continue
                total, direct, indirect = separable_decomposition(r11, r_mid, r00)
                out[(est, "total")] = total
                out[(est, direct.label)] = direct
                out[(est, indirect.label)] = indirect
        return out

    def statistics(self, table: PersonTimeTable) -> dict[tuple, np.ndarray]:
        """Flat map of every risk and effect curve, used by the bootstrap."""
        curves = self.run(table)
        stats: dict[tuple, np.ndarray] = {("risk", *k): c.values for k, c in curves.items()}
        for (est, label), eff in self.effects(curves).items():
            stats[("effect", est, label)] = eff.values
        return stats
