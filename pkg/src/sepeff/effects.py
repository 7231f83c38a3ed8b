"""Risk contrasts: total, separable direct and separable indirect effects."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, InvalidPair, MixedEstimators
from .gformula import RiskCurve


class EffectKind(enum.Enum):
    TOTAL = "total"
    SEP_DIRECT = "sep_direct"
    SEP_INDIRECT = "sep_indirect"
    NULL = "null"


class Scale(enum.Enum):
    RISK_DIFFERENCE = "rd"
    RISK_RATIO = "rr"


@dataclass(frozen=True, eq=False)
class EffectCurve:
    """Pointwise contrast ``curve_a`` versus ``curve_b``.

    ``held`` is the component value kept fixed: ``a_d`` for a separable
    direct effect and ``a_y`` for a separable indirect effect.
    """

    kind: EffectKind
    scale: Scale
    values: np.ndarray
    curve_a: RiskCurve
    curve_b: RiskCurve
    held: int | None = None

    @property
    def k(self) -> np.ndarray:
        return self.curve_a.k

    def at(self, k: int) -> float:
        return float(self.values[k - 1])

    @property
    def label(self) -> str:
        if self.kind is EffectKind.SEP_DIRECT:
            return f"sep_direct(a_d={self.held})"
        if self.kind is EffectKind.SEP_INDIRECT:
            return f"sep_indirect(a_y={self.held})"
        return self.kind.value

    def records(self) -> list[dict]:
        return [
            {"kind": self.label, "scale": self.scale.value, "k": int(k), "estimate": float(v)}
            for k, v in zip(self.k, self.values)
        ]

    def to_json(self) -> str:
        return json.dumps(self.records())


def _check_compatible(a: RiskCurve, b: RiskCurve) -> None:
    if a.K1 != b.K1:
        raise GridMismatch(f"grids differ: {a.K1} vs {b.K1} intervals")
    if a.estimator is not b.estimator:
        raise MixedEstimators(f"cannot contrast {a.estimator.value} with {b.estimator.value}")


def classify(target_a: tuple[int, int], target_b: tuple[int, int]) -> tuple[EffectKind, int | None]:
    (ya, da), (yb, db) = target_a, target_b
    if (ya, da) == (yb, db):
        return EffectKind.NULL, None
    if da == db:
        return EffectKind.SEP_DIRECT, da
    if ya == yb:
        return EffectKind.SEP_INDIRECT, ya
    if ya == da and yb == db:
        return EffectKind.TOTAL, None
    raise InvalidPair(f"{target_a} vs {target_b} is neither a separable nor a total contrast")


def contrast(curve_a: RiskCurve, curve_b: RiskCurve, scale: Scale | str = Scale.RISK_DIFFERENCE) -> EffectCurve:
    """Contrast two risk curves; the effect kind follows from their targets.

    On the ratio scale, intervals where ``curve_b`` is zero give ``nan``.
    """
    scale = Scale(scale) if not isinstance(scale, Scale) else scale
    _check_compatible(curve_a, curve_b)
    kind, held = classify(curve_a.target, curve_b.target)
    if scale is Scale.RISK_DIFFERENCE:
        values = curve_a.values - curve_b.values
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            values = np.where(curve_b.values > 0, curve_a.values / np.where(curve_b.values > 0, curve_b.values, 1.0),
                              np.nan)
    return EffectCurve(kind, scale, values, curve_a, curve_b, held)


def separable_decomposition(
    r11: RiskCurve, r_mid: RiskCurve, r00: RiskCurve
) -> tuple[EffectCurve, EffectCurve, EffectCurve]:
    """Split the total effect into separable direct and indirect parts.

    With ``r_mid`` at ``(0, 1)`` the direct effect holds ``a_d = 1`` and the
    indirect effect holds ``a_y = 0``. With ``r_mid`` at ``(1, 0)`` the
    alternate path is used: direct at ``a_d = 0`` and indirect at ``a_y = 1``.
    Returns ``(total, direct, indirect)``; on the difference scale
    ``total = direct + indirect`` exactly up to rounding.
    """
    if r11.target != (1, 1) or r00.target != (0, 0):
        raise InvalidPair(f"expected targets (1,1) and (0,0), got {r11.target} and {r00.target}")
    for c in (r_mid, r00):
        _check_compatible(r11, c)
    total = contrast(r11, r00)
    if r_mid.target == (0, 1):
        direct = contrast(r11, r_mid)
        indirect = contrast(r_mid, r00)
    elif r_mid.target == (1, 0):
        direct = contrast(r_mid, r00)
        indirect = contrast(r11, r_mid)
    else:
        raise InvalidPair(f"intermediate curve must target (0,1) or (1,0), got {r_mid.target}")
    return total, direct, indirect
