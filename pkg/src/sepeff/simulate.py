"""Data-generating processes, analytic truth and the coverage harness.

Hazards take the form ``alpha * expit(eta)`` where ``eta`` is linear in the
interval index, both treatment components, two binary baseline covariates
and the component-by-``L1`` interactions. Coefficients are named by causal
role (``aY`` acts through the event-of-interest component, ``aD`` through
the competing-event component) rather than by Greek letter.
"""

from __future__ import annotations

import enum
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.special import expit

from .bootstrap import bootstrap, default_workers
from .causal_graph import Dag, parse_graph
from .errors import REPLICATE_FAILURES, InvalidDgp, PresetUnknown, TooManyFailures
from .event_history import EventKind, PersonTimeTable, SubjectRecord, table_from_arrays
from .gformula import Estimator, RiskCurve, cumulative_incidence
from .pipeline import ALL_TARGETS, Pipeline

log = logging.getLogger(__name__)

COVARIATES = ("L1", "L2")
TIME_INTERCEPT = "1 + k + k^2 + k^3"


class ArmDesign(enum.Enum):
    TWO_ARM = "two_arm"
    FOUR_ARM = "four_arm"


@dataclass(frozen=True)
class HazardCoefficients:
    intercept: float = 0.0
    time: float = 0.0
    aY: float = 0.0
    aD: float = 0.0
    l1: float = 0.0
    l2: float = 0.0
    aY_l1: float = 0.0
    aD_l1: float = 0.0

    def linear_predictor(self, s, a_y, a_d, l1, l2):
        """``s`` is the number of completed intervals (``k - 1``)."""
        return (
            self.intercept
            + self.time * s
            + self.aY * a_y
            + self.aD * a_d
            + self.l1 * l1
            + self.l2 * l2
            + self.aY_l1 * a_y * l1
            + self.aD_l1 * a_d * l1
        )

    @property
    def depends_on_aY(self) -> bool:
        return self.aY != 0 or self.aY_l1 != 0

    @property
    def depends_on_aD(self) -> bool:
        return self.aD != 0 or self.aD_l1 != 0


@dataclass(frozen=True)
class DgpCoefficients:
    """Simulation truth. ``K`` is the horizon, giving ``K + 1`` intervals."""

    alpha_y: float
    alpha_d: float
    y_hazard: HazardCoefficients
    d_hazard: HazardCoefficients
    K: int = 99
    l1_prob: float = 0.25
    name: str = "custom"

    def validate(self) -> "DgpCoefficients":
        for nm in ("alpha_y", "alpha_d", "l1_prob"):
            v = getattr(self, nm)
            if not (np.isfinite(v) and 0 <= v <= 1):
                raise InvalidDgp(f"{nm} must lie in [0, 1], got {v}")
        if not isinstance(self.K, (int, np.integer)) or self.K < 1:
            raise InvalidDgp(f"K must be a positive integer, got {self.K}")
        for h in (self.y_hazard, self.d_hazard):
            if not all(np.isfinite(list(vars(h).values()))):
                raise InvalidDgp("hazard coefficients must be finite")
        hy, hd = self.hazard_grid()
        for h in (hy, hd):
            if not np.all((h >= 0) & (h <= 1)):
                raise InvalidDgp("hazards leave [0, 1] for some reachable input")
        return self

    def hazard_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Hazards over every ``(a_y, a_d, l1, l2, s)`` combination."""
        a_y, a_d, l1, l2 = np.meshgrid([0, 1], [0, 1], [0, 1], [0, 1], indexing="ij")
        s = np.arange(self.K + 1)
        args = [x[..., None] for x in (a_y, a_d, l1, l2)]
        hy = self.alpha_y * expit(self.y_hazard.linear_predictor(s, *args))
        hd = self.alpha_d * expit(self.d_hazard.linear_predictor(s, *args))
        return hy, hd

    @property
    def covariate_cells(self) -> list[tuple[int, int, float]]:
        """``(l1, l2, probability)`` for the four baseline covariate cells."""
        p1 = self.l1_prob
        out = []
        for l1 in (0, 1):
            pl1 = p1 if l1 else 1 - p1
            p2 = 0.2 * l1 + 0.8 * (1 - l1)
            for l2 in (0, 1):
                out.append((l1, l2, pl1 * (p2 if l2 else 1 - p2)))
        return out

    @property
    def delta1_holds(self) -> bool:
        """No path from the competing-event component into the event-of-interest hazard."""
        return not self.y_hazard.depends_on_aD

    @property
    def delta2_holds(self) -> bool:
        """No path from the event-of-interest component into the competing-event hazard."""
        return not self.d_hazard.depends_on_aY


@dataclass(frozen=True)
class Scenario:
    dgp: DgpCoefficients
    y_formula: str
    d_formula: str


# Coverage scenarios. Competing-event hazards carry alpha_d = 0.03 and the
# event-of-interest hazards alpha_y = 0.01 throughout.
_COVERAGE = {
    1: (HazardCoefficients(aY=10, l1=5), HazardCoefficients(aD=-2, l1=5), "+ A + L1 + L2", "+ A + L1"),
    2: (HazardCoefficients(aY=10, l1=-2, l2=5), HazardCoefficients(aD=-2, l1=5, l2=-2), "+ A + L1 + L2", "+ A + L1"),
    3: (HazardCoefficients(aY=10, l1=5, l2=-10, aY_l1=5), HazardCoefficients(aD=-2, l1=5, l2=-10), "+ A + L1",
        "+ A + L1 + L2"),
    4: (HazardCoefficients(aY=10, aD=5, l1=5), HazardCoefficients(aD=-2, l1=5), "+ A + L1 + L2", "+ A + L1"),
    5: (HazardCoefficients(aY=10, l1=-10), HazardCoefficients(aD=-2), "+ A", "+ A"),
}

# Illustrative four-arm scenarios (event-of-interest effect of A_Y, competing
# effect of A_D).
_ILLUSTRATIVE = {
    1: (10, 0),
    2: (0, 5),
    3: (10, 5),
    4: (10, -5),
}


def coverage_scenario(number: int, K: int = 99) -> Scenario:
    if number not in _COVERAGE:
        raise PresetUnknown(f"unknown coverage scenario {number!r}; choose from {sorted(_COVERAGE)}")
    hy, hd, fy, fd = _COVERAGE[number]
    dgp = DgpCoefficients(0.01, 0.03, hy, hd, K=K, name=f"coverage-{number}").validate()
    return Scenario(dgp, f"{TIME_INTERCEPT} {fy}", f"{TIME_INTERCEPT} {fd}")


def illustrative_dgp(number: int, K: int = 99) -> DgpCoefficients:
    if number not in _ILLUSTRATIVE:
        raise PresetUnknown(f"unknown illustrative scenario {number!r}; choose from {sorted(_ILLUSTRATIVE)}")
    ay, ad = _ILLUSTRATIVE[number]
    return DgpCoefficients(
        0.01, 0.03, HazardCoefficients(aY=ay, l1=5), HazardCoefficients(aD=ad, l1=5), K=K,
        name=f"illustrative-{number}",
    ).validate()


def preset(name: str | int, K: int = 99) -> DgpCoefficients:
    """Look up ``"coverage-N"`` (or bare ``N``) and ``"illustrative-N"`` presets."""
    text = str(name)
    family, _, num = text.rpartition("-")
    try:
        n = int(num)
    except ValueError:
        raise PresetUnknown(f"unknown preset {name!r}") from None
    if family in ("", "coverage"):
        return coverage_scenario(n, K).dgp
    if family == "illustrative":
        return illustrative_dgp(n, K)
    raise PresetUnknown(f"unknown preset {name!r}")


def scenario_graph(dgp: DgpCoefficients, K: int = 2) -> Dag:
    """Causal graph implied by the nonzero coefficients of ``dgp``."""
    lines = ["A !> A_Y", "A !> A_D", f"expand K={K}"]
    for name, coef in (("L1", "l1"), ("L2", "l2")):
        if getattr(dgp.y_hazard, coef) or (name == "L1" and (dgp.y_hazard.aY_l1 or dgp.y_hazard.aD_l1)):
            lines.append(f"{name} -> Y*")
        if getattr(dgp.d_hazard, coef) or (name == "L1" and (dgp.d_hazard.aY_l1 or dgp.d_hazard.aD_l1)):
            lines.append(f"{name} -> D*")
    lines.append("L1 -> L2")
    if dgp.y_hazard.depends_on_aD:
        lines.append("A_D -> Y*")
    if dgp.d_hazard.depends_on_aY:
        lines.append("A_Y -> D*")
    return parse_graph("\n".join(lines))


def _rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(replicate,)))


@dataclass(frozen=True, eq=False)
class SimulatedArrays:
    l1: np.ndarray
    l2: np.ndarray
    a_y: np.ndarray
    a_d: np.ndarray
    kind: np.ndarray
    interval: np.ndarray
    K: int


def simulate_arrays(
    dgp: DgpCoefficients, n: int, seed: int, arm_design: ArmDesign | str = ArmDesign.TWO_ARM, replicate: int = 0
) -> SimulatedArrays:
    """Vectorised draw of ``n`` subjects; no censoring is generated."""
    dgp.validate()
    arm_design = ArmDesign(arm_design)
    if n < 1:
        raise InvalidDgp(f"n must be positive, got {n}")
    rng = _rng(seed, replicate)
    l1 = (rng.random(n) < dgp.l1_prob).astype(np.int8)
    l2 = (rng.random(n) < np.where(l1 == 1, 0.2, 0.8)).astype(np.int8)
    a_y = (rng.random(n) < 0.5).astype(np.int8)
    a_d = a_y.copy() if arm_design is ArmDesign.TWO_ARM else (rng.random(n) < 0.5).astype(np.int8)
    hy_grid, hd_grid = dgp.hazard_grid()
    cell = ((a_y * 2 + a_d) * 2 + l1) * 2 + l2
    hy_grid = hy_grid.reshape(16, -1)
    hd_grid = hd_grid.reshape(16, -1)
    kind = np.full(n, EventKind.ADMIN_END.value, dtype=np.int8)
    interval = np.full(n, dgp.K + 1, dtype=np.int64)
    alive = np.arange(n)
    for s in range(dgp.K + 1):
        if alive.size == 0:
            break
        c = cell[alive]
        u_d = rng.random(alive.size)
        u_y = rng.random(alive.size)
        d = u_d < hd_grid[c, s]
        y = ~d & (u_y < hy_grid[c, s])
        kind[alive[d]] = EventKind.COMPETING.value
        kind[alive[y]] = EventKind.INTEREST.value
        interval[alive[d | y]] = s + 1
        alive = alive[~(d | y)]
    return SimulatedArrays(l1, l2, a_y, a_d, kind, interval, dgp.K)


def simulate_table(
    dgp: DgpCoefficients, n: int, seed: int, replicate: int = 0
) -> PersonTimeTable:
    """Two-arm cohort expanded straight to a person-interval table."""
    sim = simulate_arrays(dgp, n, seed, ArmDesign.TWO_ARM, replicate)
    return table_from_arrays(
        sim.K, sim.a_y, np.column_stack([sim.l1, sim.l2]), COVARIATES, sim.kind, sim.interval
    )


def simulate_cohort(
    dgp: DgpCoefficients, n: int, seed: int, arm_design: ArmDesign | str = ArmDesign.TWO_ARM, replicate: int = 0
) -> list[SubjectRecord]:
    """Simulate subject records. In a four-arm cohort ``arm`` holds ``A_Y``
    and ``arm_d`` holds ``A_D``."""
    arm_design = ArmDesign(arm_design)
    sim = simulate_arrays(dgp, n, seed, arm_design, replicate)
    out = []
    for i in range(n):
        kind = EventKind(int(sim.kind[i]))
        out.append(
            SubjectRecord(
                id=i,
                arm=int(sim.a_y[i]),
                covariates={"L1": float(sim.l1[i]), "L2": float(sim.l2[i])},
                event_kind=kind,
                event_interval=None if kind is EventKind.ADMIN_END else int(sim.interval[i]),
                arm_d=None if arm_design is ArmDesign.TWO_ARM else int(sim.a_d[i]),
            )
        )
    return out


def true_risk(dgp: DgpCoefficients, a_y: int, a_d: int, K: int | None = None) -> RiskCurve:
    """Exact counterfactual risk under ``(a_y, a_d)`` by forward recursion,
    mixed over the baseline covariate cells."""
    dgp.validate()
    if K is not None and K != dgp.K:
        dgp = replace(dgp, K=K).validate()
    hy, hd = dgp.hazard_grid()
    values = np.zeros(dgp.K + 1)
    for l1, l2, p in dgp.covariate_cells:
        values += p * cumulative_incidence(hy[a_y, a_d, l1, l2], hd[a_y, a_d, l1, l2])
    return RiskCurve(a_y, a_d, values, Estimator.TRUTH)


def empirical_risk(sim: SimulatedArrays, a_y: int, a_d: int) -> tuple[np.ndarray, np.ndarray]:
    """Observed cumulative proportion with the event of interest in one
    ``(A_Y, A_D)`` cell and its binomial standard error."""
    cell = (sim.a_y == a_y) & (sim.a_d == a_d)
    m = int(cell.sum())
    events = (sim.kind == EventKind.INTEREST.value) & cell
    counts = np.bincount(sim.interval[events] - 1, minlength=sim.K + 1)
    p = np.cumsum(counts) / m
    return p, np.sqrt(p * (1 - p) / m)


# coverage harness ----------------------------------------------------------

COVERAGE_ESTIMATORS = (Estimator.GFORMULA, Estimator.NONPARAM, Estimator.IPW1, Estimator.IPW2)


@dataclass(frozen=True, eq=False)
class CoverageTable:
    """Coverage fraction per ``(target, estimator, k)``.

    ``counts`` holds the number of replicates that produced an interval.
    """

    scenario: int
    n: int
    reps: int
    B: int
    nominal: float
    ks: tuple[int, ...]
    coverage: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    failed_replicates: int = 0

    def get(self, target: tuple[int, int], estimator: Estimator | str, k: int) -> float:
        return self.coverage[(tuple(target), Estimator(estimator), int(k))]

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for (target, est, k), cov in self.coverage.items():
            rows.append(
                {"a_y": target[0], "a_d": target[1], "estimator": est.value, "k": k, "coverage": cov,
                 "replicates": self.counts[(target, est, k)]}
            )
        return pd.DataFrame(rows)

    def to_wide(self) -> pd.DataFrame:
        """One row per (target, estimator), one column per ``k`` (largest first)."""
        df = self.to_frame()
        wide = df.pivot_table(index=["a_y", "a_d", "estimator"], columns="k", values="coverage", sort=False)
        wide = wide[sorted(wide.columns, reverse=True)]
        wide.columns = [f"k={c}" for c in wide.columns]
        return wide.reset_index()

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.to_wide().to_csv(buf, index=False)
        return buf.getvalue()


def coverage_pipeline(scenario: Scenario) -> Pipeline:
    return Pipeline(
        y_formula=scenario.y_formula,
        d_formula=scenario.d_formula,
        estimators=COVERAGE_ESTIMATORS,
        targets=ALL_TARGETS,
    )


class _RiskStatistic:
    """Picklable statistic returning only risk curves."""

    def __init__(self, pipeline: Pipeline):
        self.pipeline = pipeline

    def __call__(self, table: PersonTimeTable):
        return {k: c.values for k, c in self.pipeline.run(table).items()}


def _coverage_replicate(scenario_number: int, K: int, n: int, B: int, nominal: float, seed: int, r: int, ks):
    sc = coverage_scenario(scenario_number, K)
    pipe = coverage_pipeline(sc)
    table = simulate_table(sc.dgp, n, seed, replicate=r)
    boot_seed = int(np.random.SeedSequence(entropy=seed, spawn_key=(r, 1)).generate_state(1)[0])
    try:
        res = bootstrap(table, _RiskStatistic(pipe), B, nominal, boot_seed, workers=1)
    except REPLICATE_FAILURES + (TooManyFailures,) as exc:
        log.warning("replicate %d failed: %s", r, exc)
        return None
    idx = np.asarray(ks) - 1
    return {key: (br.lower[idx], br.upper[idx]) for key, br in res.items()}


def run_coverage(
    scenario: int,
    n: int = 400,
    reps: int = 200,
    B: int = 200,
    ks: Sequence[int] = (25, 75, 100),
    nominal: float = 0.95,
    seed: int = 0,
    *,
    K: int = 99,
    workers: int | None = None,
) -> CoverageTable:
    """Empirical coverage of percentile bootstrap intervals over replicates.

    Each replicate simulates a two-arm cohort, estimates every target with
    the g-formula and both weighted estimators (plus the nonparametric
    estimator where ``a_y == a_d``) and checks whether the interval at each
    ``k`` contains the analytic truth.
    """
    sc = coverage_scenario(scenario, K)
    ks = tuple(int(k) for k in ks)
    truth = {t: true_risk(sc.dgp, *t).values[np.asarray(ks) - 1] for t in ALL_TARGETS}
    workers = default_workers() if workers is None else workers
    args = [(scenario, K, n, B, nominal, seed, r, ks) for r in range(reps)]
    if workers <= 1:
        results = [_coverage_replicate(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_coverage_replicate, *zip(*args)))
    hits: dict = {}
    counts: dict = {}
    failed = 0
    for res in results:
        if res is None:
            failed += 1
            continue
        for (est, a_y, a_d), (lo, hi) in res.items():
            tv = truth[(a_y, a_d)]
            for j, k in enumerate(ks):
                key = ((a_y, a_d), est, k)
                hits[key] = hits.get(key, 0) + int(lo[j] <= tv[j] <= hi[j])
                counts[key] = counts.get(key, 0) + 1
    coverage = {key: hits[key] / counts[key] for key in counts}
    return CoverageTable(scenario, n, reps, B, nominal, ks, coverage, counts, failed)


def truth_frame(dgp: DgpCoefficients) -> pd.DataFrame:
    curves = {t: true_risk(dgp, *t).values for t in ALL_TARGETS}
    df = pd.DataFrame({"k": np.arange(1, dgp.K + 2)})
    for (a_y, a_d), v in curves.items():
        df[f"risk_{a_y}{a_d}"] = v
    return df
