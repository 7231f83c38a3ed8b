"""Discrete-time Aalen-Johansen cumulative incidence."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import EmptyArm
from .event_history import PersonTimeTable
from .gformula import Estimator, RiskCurve, pattern_weights


@dataclass(frozen=True, eq=False)
class CifPair:
    arm: int
    cif_y: np.ndarray
    cif_d: np.ndarray
    risk_set_sizes: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("k,cif_y,cif_d,n_at_risk\n")
        for k, (y, d, n) in enumerate(zip(self.cif_y, self.cif_d, self.risk_set_sizes), start=1):
            buf.write(f"{k},{float(y)!r},{float(d)!r},{float(n)!r}\n")
        return buf.getvalue()

    def risk_curve(self) -> RiskCurve:
        return RiskCurve(self.arm, self.arm, self.cif_y, Estimator.NONPARAM)


def _cif_from_counts(n_risk, n_d, n_y):
    """Product-limit with the competing event resolved before the event of interest."""
    with np.errstate(invalid="ignore", divide="ignore"):
        lam_d = np.where(n_risk > 0, n_d / np.where(n_risk > 0, n_risk, 1), 0.0)
        left = n_risk - n_d
        lam_y = np.where(left > 0, n_y / np.where(left > 0, left, 1), 0.0)
    surv = np.cumprod((1 - lam_d) * (1 - lam_y), axis=-1)
    prev = np.concatenate([np.ones(surv.shape[:-1] + (1,)), surv[..., :-1]], axis=-1)
    cif_y = np.cumsum(prev * (1 - lam_d) * lam_y, axis=-1)
    cif_d = np.cumsum(prev * lam_d, axis=-1)
    return cif_y, cif_d


def _counts(table: PersonTimeTable, mask_rows: np.ndarray, group: np.ndarray | None = None, n_groups: int = 1):
    K1 = table.grid_K
    g = np.zeros(table.n_rows, dtype=np.intp) if group is None else group
    key = (g * K1 + table.k - 1)[mask_rows]
    w = table.row_weight[mask_rows]
    size = n_groups * K1
    n_risk = np.bincount(key[table.c[mask_rows] == 0], weights=w[table.c[mask_rows] == 0], minlength=size)
    n_d = np.bincount(key, weights=w * table.d[mask_rows], minlength=size)
    n_y = np.bincount(key, weights=w * table.y[mask_rows], minlength=size)
    return (x.reshape(n_groups, K1) for x in (n_risk, n_d, n_y))


def aalen_johansen(table: PersonTimeTable, arm: int) -> CifPair:
    """Cumulative incidence of both events in one arm.

    Subjects censored in interval ``k`` leave the risk set before the
    events of interval ``k`` are counted.
    """
    rows = table.a == arm
    if not np.any(rows & (table.row_weight > 0)):
        raise EmptyArm(f"no subjects with A={arm}")
    n_risk, n_d, n_y = _counts(table, rows)
    cif_y, cif_d = _cif_from_counts(n_risk[0], n_d[0], n_y[0])
    return CifPair(arm, cif_y, cif_d, n_risk[0])


def stratified_aalen_johansen(table: PersonTimeTable, arm: int, *, standardize_arm: int | None = None) -> RiskCurve:
    """Per-covariate-pattern Aalen-Johansen curves in one arm, averaged over
    the empirical covariate distribution (all subjects by default)."""
    rows = table.a == arm
    if not np.any(rows & (table.row_weight > 0)):
        raise EmptyArm(f"no subjects with A={arm}")
    uniq, pat = table.patterns
    P = len(uniq)
    n_risk, n_d, n_y = _counts(table, rows, pat[table.row_subject], P)
    cif_y, _ = _cif_from_counts(n_risk, n_d, n_y)
    w = pattern_weights(table, standardize_arm)
    return RiskCurve(arm, arm, (w @ cif_y) / w.sum(), Estimator.NONPARAM)
