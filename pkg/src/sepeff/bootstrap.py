"""Subject-level nonparametric percentile bootstrap.

Replicates are represented as multinomial frequency weights on the original
subjects, which is equivalent to resampling whole histories with
replacement. Replicate ``b`` draws from its own generator seeded by
``SeedSequence(seed, spawn_key=(b,))``, so results do not depend on how
replicates are scheduled across workers.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from .errors import REPLICATE_FAILURES, InvalidLevel, TooManyFailures, ValidationError
from .event_history import PersonTimeTable, SubjectRecord, validate_and_expand
from .pipeline import Pipeline

log = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.10
WORKERS_ENV = "SEPEFF_WORKERS"

Statistic = Callable[[PersonTimeTable], Mapping[Hashable, np.ndarray]]


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    B: int
    level: float
    seed: int
    replicate_failures: int

    def covers(self, truth: np.ndarray) -> np.ndarray:
        truth = np.asarray(truth)
        return (self.lower <= truth) & (truth <= self.upper)

    def records(self) -> list[dict]:
        return [
            {"k": k, "estimate": float(p), "lower": float(lo), "upper": float(hi)}
            for k, (p, lo, hi) in enumerate(zip(self.point, self.lower, self.upper), start=1)
        ]


def replicate_weights(n: int, seed: int, b: int) -> np.ndarray:
    """Frequency weights of bootstrap replicate ``b``."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(b,)))
    return rng.multinomial(n, np.full(n, 1.0 / n)).astype(float)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _run_chunk(table: PersonTimeTable, statistic: Statistic, seed: int, indices: Sequence[int]):
    out = []
    for b in indices:
        w = replicate_weights(table.n_subjects, seed, b)
        try:
            out.append((b, statistic(table.with_weights(w))))
        except REPLICATE_FAILURES as exc:
            out.append((b, exc))
    return out


def bootstrap(
    table: PersonTimeTable,
    statistic: Statistic,
    B: int,
    level: float = 0.95,
    seed: int = 0,
    *,
    workers: int | None = None,
) -> dict[Hashable, BootstrapResult]:
    """Percentile intervals for every array returned by ``statistic``.

    Bounds are type-7 (linear interpolation) quantiles at ``(1-level)/2``
    and ``(1+level)/2`` over the successful replicates. Replicates that
    raise a numerical or positivity error are dropped and counted; more
    than 10% dropped raises :class:`TooManyFailures`.
    """
    if B < 2:
        raise ValidationError(f"B must be at least 2, got {B}")
    if not 0 < level < 1:
        raise InvalidLevel(f"level must lie in (0, 1), got {level}")
    if not np.all(table.subject_weight == 1):
        raise ValidationError("bootstrap requires a table with unit subject weights")
    point = statistic(table)
    workers = default_workers() if workers is None else workers
    if workers <= 1:
        results = _run_chunk(table, statistic, seed, range(B))
    else:
        chunks = [list(range(B))[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, table, statistic, seed, c) for c in chunks]
            results = [r for f in futures for r in f.result()]
        results.sort(key=lambda r: r[0])
    good = [r for _, r in results if not isinstance(r, Exception)]
    failures = B - len(good)
    if failures:
        log.warning("%d of %d bootstrap replicates failed and were dropped", failures, B)
    if failures > MAX_FAILURE_FRACTION * B:
        first = next(r for _, r in results if isinstance(r, Exception))
        raise TooManyFailures(f"{failures} of {B} bootstrap replicates failed (first: {first})")
    q = [(1 - level) / 2, (1 + level) / 2]
    out = {}
    for key, est in point.items():
        reps = np.stack([g[key] for g in good])
        lo, hi = np.quantile(reps, q, axis=0, method="linear")
        out[key] = BootstrapResult(np.asarray(est), lo, hi, B, level, seed, failures)
    return out


def bootstrap_ci(
    subjects: Sequence[SubjectRecord] | PersonTimeTable,
    pipeline: Pipeline,
    B: int,
    level: float = 0.95,
    seed: int = 0,
    *,
    K: int | None = None,
    workers: int | None = None,
) -> dict[Hashable, BootstrapResult]:
    """Bootstrap every risk and effect curve produced by ``pipeline``.

    Keys are ``("risk", estimator, a_y, a_d)`` and
    ``("effect", estimator, label)``.
    """
    if isinstance(subjects, PersonTimeTable):
        table = subjects
    else:
        if K is None:
            raise ValidationError("K is required when bootstrapping subject records")
        table = validate_and_expand(list(subjects), K)
    return bootstrap(table, pipeline.statistics, B, level, seed, workers=workers)
