"""Inverse-probability-weighted estimators of counterfactual risk.

Two weighted representations are available. ``FOR_NU1`` reweights the arm
with ``A = a_y`` by the ratio of competing-event survival under ``a_d`` and
``a_y``; ``FOR_NU2`` reweights the arm with ``A = a_d`` by the ratio of the
event-of-interest hazards under ``a_y`` and ``a_d``. Both include inverse
probability of remaining uncensored.
"""

from __future__ import annotations

import enum
import io
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ArmEmpty, ZeroDenominator
from .event_history import PersonTimeTable
from .gformula import Estimator, RiskCurve
from .glm import HazardModelSet, hazard_matrix

log = logging.getLogger(__name__)

ZERO_TOL = 1e-12


class WeightKind(enum.Enum):
    FOR_NU1 = "nu1"
    FOR_NU2 = "nu2"

    @property
    def estimator(self) -> Estimator:
        return Estimator.IPW1 if self is WeightKind.FOR_NU1 else Estimator.IPW2


@dataclass(frozen=True, eq=False)
class WeightTable:
    """Per person-interval weights for the recipient arm.

    ``rows`` indexes the source table rows; ``s = k - 1``.
    """

    kind: WeightKind
    target: tuple[int, int]
    rows: np.ndarray
    ids: np.ndarray
    s: np.ndarray
    w_d: np.ndarray
    w_c: np.ndarray
    w_y: np.ndarray
    combined: np.ndarray
    truncated_at: float | None = None

    @property
    def recipient_arm(self) -> int:
        a_y, a_d = self.target
        return a_y if self.kind is WeightKind.FOR_NU1 else a_d

    @property
    def diagnostics(self) -> dict:
        w = self.combined[self.w_c > 0]
        if w.size == 0:
            return {"mean": float("nan"), "max": float("nan"), "p99": float("nan")}
        return {"mean": float(w.mean()), "max": float(w.max()), "p99": float(np.quantile(w, 0.99))}

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("id,s,w_d,w_c,w_y\n")
        for i, s, wd, wc, wy in zip(self.ids, self.s, self.w_d, self.w_c, self.w_y):
            buf.write(f"{i},{int(s)},{float(wd)!r},{float(wc)!r},{float(wy)!r}\n")
        return buf.getvalue()


def _check_positive(den: np.ndarray, what: str) -> None:
    bad = den <= ZERO_TOL
    if np.any(bad):
        raise ZeroDenominator(f"{what} is zero for {int(bad.sum())} used person-intervals")


def compute_weights(
    models: HazardModelSet,
    table: PersonTimeTable,
    a_y: int,
    a_d: int,
    kind: WeightKind | str,
    *,
    truncate_quantile: float | None = None,
) -> WeightTable:
    kind = WeightKind(kind) if not isinstance(kind, WeightKind) else kind
    fits = [models.fit_d if kind is WeightKind.FOR_NU1 else models.fit_y]
    if models.fit_c is not None:
        fits.append(models.fit_c)
    for f in fits:
        f.require_converged()
    arm = a_y if kind is WeightKind.FOR_NU1 else a_d
    rows = np.flatnonzero(table.a == arm)
    uniq, pat = table.patterns
    names, K1 = table.covariate_names, table.grid_K
    rp = pat[table.row_subject[rows]]
    rs = table.k[rows] - 1

    ones = np.ones(len(rows))
    h_c = hazard_matrix(models.fit_c, arm, uniq, names, K1)
    surv_c = np.cumprod(1.0 - h_c, axis=1)
    _check_positive(surv_c[rp, rs], "probability of remaining uncensored")
    w_c = np.where(table.c[rows] == 0, 1.0 / surv_c[rp, rs], 0.0)

    if kind is WeightKind.FOR_NU1:
        num = 1.0 - hazard_matrix(models.fit_d, a_d, uniq, names, K1)
        den = 1.0 - hazard_matrix(models.fit_d, a_y, uniq, names, K1)
        _check_positive(den[rp, rs], "competing-event survival under a_y")
        ratio = np.cumprod(num / np.where(den > ZERO_TOL, den, 1.0), axis=1)
        w_d, w_y = ratio[rp, rs], ones
    else:
        hy_num = hazard_matrix(models.fit_y, a_y, uniq, names, K1)
        hy_den = hazard_matrix(models.fit_y, a_d, uniq, names, K1)
        _check_positive(hy_den[rp, rs], "event-of-interest hazard under a_d")
        _check_positive(1.0 - hy_den[rp, rs], "event-of-interest survival under a_d")
        safe = np.where(hy_den > ZERO_TOL, hy_den, 1.0)
        surv_ratio = np.cumprod((1.0 - hy_num) / np.where(1.0 - hy_den > ZERO_TOL, 1.0 - hy_den, 1.0), axis=1)
        prev = np.concatenate([np.ones((len(uniq), 1)), surv_ratio[:, :-1]], axis=1)
        w_y_mat = hy_num / safe * prev
        w_y, w_d = w_y_mat[rp, rs], ones

    combined = w_d * w_c * w_y
    cap = None
    if truncate_quantile is not None:
        live = combined[w_c > 0]
        cap = float(np.quantile(live, truncate_quantile)) if live.size else None
        if cap is not None:
            n_cut = int(np.sum(combined > cap))
            log.info("truncating %d of %d weights at the %.3g quantile (%.4g)", n_cut, len(combined),
                     truncate_quantile, cap)
            combined = np.minimum(combined, cap)
    return WeightTable(
        kind=kind,
        target=(a_y, a_d),
        rows=rows,
        ids=table.subject_ids[table.row_subject[rows]],
        s=rs,
        w_d=w_d,
        w_c=w_c,
        w_y=w_y,
        combined=combined,
        truncated_at=cap,
    )


def _arm_size(table: PersonTimeTable, arm: int) -> float:
    n = float(np.sum(table.subject_weight * (table.arm == arm)))
    if n <= 0:
        raise ArmEmpty(f"no subjects with A={arm}")
    return n


def estimate_ipw_risk(table: PersonTimeTable, weights: WeightTable, kind: WeightKind | str | None = None) -> RiskCurve:
    """Closed-form root of the weighted estimating equation at every ``k``."""
    kind = weights.kind if kind is None else WeightKind(kind) if not isinstance(kind, WeightKind) else kind
    if kind is not weights.kind:
        raise ValueError(f"weights were computed for {weights.kind.name}, not {kind.name}")
    n_arm = _arm_size(table, weights.recipient_arm)
    contrib = weights.combined * table.y[weights.rows] * table.row_weight[weights.rows]
    per_k = np.bincount(weights.s, weights=contrib, minlength=table.grid_K)
    a_y, a_d = weights.target
    return RiskCurve(a_y, a_d, np.cumsum(per_k) / n_arm, kind.estimator)


def estimate_ipw(
    models: HazardModelSet,
    table: PersonTimeTable,
    a_y: int,
    a_d: int,
    kind: WeightKind | str,
    *,
    truncate_quantile: float | None = None,
) -> RiskCurve:
    w = compute_weights(models, table, a_y, a_d, kind, truncate_quantile=truncate_quantile)
    return estimate_ipw_risk(table, w)


def estimating_equation_residual(table: PersonTimeTable, weights: WeightTable, nu: float, k: int) -> float:
    """Sum over subjects of the weighted estimating function at ``nu`` and ``k``."""
    arm = weights.recipient_arm
    sel = weights.s < k
    rows = weights.rows[sel]
    total = np.sum(weights.combined[sel] * table.y[rows] * table.row_weight[rows])
    return float(total - nu * _arm_size(table, arm))
