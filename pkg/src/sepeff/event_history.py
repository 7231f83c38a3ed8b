"""Discrete-time competing-risk histories.

Each subject is followed over intervals ``k = 1, ..., K+1``. Within an
interval the censoring indicator is resolved first, then the competing
event, then the event of interest, so a subject censored in interval ``k``
contributes nothing to the interval-``k`` event risk sets and a subject with
a competing event in ``k`` cannot also have the event of interest there.
Interval 0 is implicit: every subject starts event-free.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DuplicateId, InvalidArm, InvalidInterval, SchemaMismatch, ValidationError


class EventKind(enum.Enum):
    CENSORED = 0
    INTEREST = 1
    COMPETING = 2
    ADMIN_END = 3


@dataclass(frozen=True)
class SubjectRecord:
    """Wide, one-row-per-subject view of a follow-up history.

    ``arm`` is the randomized treatment. For four-arm simulated cohorts the
    two components differ, and ``arm_d`` holds the component acting on the
    competing event; it is ``None`` whenever both components equal ``arm``.
    ``event_interval`` is ``None`` for subjects followed event-free to the end
    of the grid (``ADMIN_END``).
    """

    id: object
    arm: int
    covariates: Mapping[str, float]
    event_kind: EventKind
    event_interval: int | None = None
    arm_d: int | None = None

    @property
    def component_d(self) -> int:
        return self.arm if self.arm_d is None else self.arm_d


@dataclass(frozen=True, eq=False)
class PersonTimeTable:
    """Long person-interval table with subject-level attributes.

    Rows of one subject are contiguous and ordered by ``k``. ``K`` is the
    horizon, so the grid has ``K + 1`` intervals. ``subject_weight`` holds
    frequency weights (all ones unless the table is a bootstrap resample).
    Tables made by :meth:`with_weights` share the weight-free cache.
    """

    K: int
    subject_ids: np.ndarray
    arm: np.ndarray
    covariate_names: tuple[str, ...]
    covariates: np.ndarray
    subject_weight: np.ndarray
    row_subject: np.ndarray
    k: np.ndarray
    c: np.ndarray
    d: np.ndarray
    y: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    @property
    def n_rows(self) -> int:
        return len(self.k)

    @property
    def grid_K(self) -> int:
        """Number of intervals on the grid (``K + 1``)."""
        return self.K + 1

    @cached_property
    def a(self) -> np.ndarray:
        return self.arm[self.row_subject]

    @cached_property
    def row_weight(self) -> np.ndarray:
        return self.subject_weight[self.row_subject]

    @cached_property
    def at_risk_for_d(self) -> np.ndarray:
        return self.c == 0

    @cached_property
    def at_risk_for_y(self) -> np.ndarray:
        return (self.c == 0) & (self.d == 0)

    @property
    def patterns(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique covariate rows and the pattern index of each subject."""
        if "patterns" not in self._cache:
            if self.covariates.shape[1] == 0:
                self._cache["patterns"] = (np.zeros((1, 0)), np.zeros(self.n_subjects, dtype=np.intp))
            else:
                uniq, inverse = np.unique(self.covariates, axis=0, return_inverse=True)
                self._cache["patterns"] = (uniq, inverse.reshape(-1))
        return self._cache["patterns"]

    @cached_property
    def subject_slices(self) -> np.ndarray:
        """Start offset of each subject's rows, with a trailing sentinel."""
        counts = np.bincount(self.row_subject, minlength=self.n_subjects)
        return np.concatenate([[0], np.cumsum(counts)])

    def with_weights(self, weights: np.ndarray) -> "PersonTimeTable":
        """Return a table sharing all data but with new subject weights."""
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (self.n_subjects,):
            raise ValidationError("one weight per subject is required")
        return PersonTimeTable(
            K=self.K,
            subject_ids=self.subject_ids,
            arm=self.arm,
            covariate_names=self.covariate_names,
            covariates=self.covariates,
            subject_weight=weights,
            row_subject=self.row_subject,
            k=self.k,
            c=self.c,
            d=self.d,
            y=self.y,
            _cache=self._cache,
        )

    def covariate_columns(self, names: Iterable[str]) -> np.ndarray:
        idx = [self.covariate_names.index(n) for n in names]
        return self.covariates[:, idx]

    def iter_rows(self) -> Iterator[dict]:
        for r in range(self.n_rows):
            i = self.row_subject[r]
            yield {
                "id": self.subject_ids[i],
                "k": int(self.k[r]),
                "a": int(self.arm[i]),
                "l": dict(zip(self.covariate_names, self.covariates[i].tolist())),
                "c": int(self.c[r]),
                "d": int(self.d[r]),
                "y": int(self.y[r]),
                "at_risk_for_d": bool(self.at_risk_for_d[r]),
                "at_risk_for_y": bool(self.at_risk_for_y[r]),
            }

    def to_frame(self):
        import pandas as pd

        frame = pd.DataFrame(
            {
                "id": self.subject_ids[self.row_subject],
                "k": self.k,
                "a": self.a,
                "c": self.c,
                "d": self.d,
                "y": self.y,
                "at_risk_for_d": self.at_risk_for_d,
                "at_risk_for_y": self.at_risk_for_y,
            }
        )
        for j, name in enumerate(self.covariate_names):
            frame[name] = self.covariates[self.row_subject, j]
        return frame

    def to_subjects(self) -> list[SubjectRecord]:
        """Collapse back to one record per subject."""
        ends = self.subject_slices[1:] - 1
        out = []
        for i in range(self.n_subjects):
            r = ends[i]
            if self.y[r]:
                kind = EventKind.INTEREST
            elif self.d[r]:
                kind = EventKind.COMPETING
            elif self.c[r]:
                kind = EventKind.CENSORED
            else:
                kind = EventKind.ADMIN_END
            out.append(
                SubjectRecord(
                    id=self.subject_ids[i],
                    arm=int(self.arm[i]),
                    covariates=dict(zip(self.covariate_names, self.covariates[i].tolist())),
                    event_kind=kind,
                    event_interval=None if kind is EventKind.ADMIN_END else int(self.k[r]),
                )
            )
        return out


def _terminal_interval(rec: SubjectRecord, K: int, truncate: bool) -> tuple[EventKind, int]:
    kind = rec.event_kind
    if kind is EventKind.ADMIN_END:
        if rec.event_interval is not None and rec.event_interval != K + 1:
            if not (truncate and rec.event_interval > K + 1):
                raise InvalidInterval(
                    f"subject {rec.id!r}: ADMIN_END must end at K+1={K + 1}, got {rec.event_interval}"
                )
        return kind, K + 1
    if rec.event_interval is None:
        raise InvalidInterval(f"subject {rec.id!r}: {kind.name} requires an event interval")
    t = int(rec.event_interval)
    if t < 1:
        raise InvalidInterval(f"subject {rec.id!r}: event interval {t} < 1")
    if t > K + 1:
        if not truncate:
            raise InvalidInterval(f"subject {rec.id!r}: event interval {t} > K+1={K + 1}")
        return EventKind.ADMIN_END, K + 1
    return kind, t


def validate_and_expand(
    subjects: Sequence[SubjectRecord], K: int, *, truncate: bool = False
) -> PersonTimeTable:
    """Validate subject records and expand them to person-interval rows.

    A subject contributes rows ``1..t`` where ``t`` is its terminal interval
    (``K + 1`` for administrative end of follow-up). With ``truncate`` set,
    events after ``K + 1`` are recoded as administrative end instead of
    raising :class:`InvalidInterval`.
    """
    if K < 1:
        raise InvalidInterval(f"K must be at least 1, got {K}")
    n = len(subjects)
    names: tuple[str, ...] = tuple(subjects[0].covariates) if n else ()
    name_set = set(names)
    ids = np.empty(n, dtype=object)
    arm = np.empty(n, dtype=np.int8)
    cov = np.empty((n, len(names)), dtype=float)
    term = np.empty(n, dtype=np.int64)
    kinds = np.empty(n, dtype=np.int8)
    seen = set()
    for i, rec in enumerate(subjects):
        if rec.id in seen:
            raise DuplicateId(f"duplicate subject id {rec.id!r}")
        seen.add(rec.id)
        if rec.arm not in (0, 1):
            raise InvalidArm(f"subject {rec.id!r}: arm must be 0 or 1, got {rec.arm!r}")
        if set(rec.covariates) != name_set:
            raise SchemaMismatch(
                f"subject {rec.id!r} has covariates {sorted(rec.covariates)}, expected {sorted(names)}"
            )
        kind, t = _terminal_interval(rec, K, truncate)
        ids[i] = rec.id
        arm[i] = rec.arm
        cov[i] = [float(rec.covariates[nm]) for nm in names]
        term[i] = t
        kinds[i] = kind.value
    return _expand(K, ids, arm, names, cov, term, kinds)


def _expand(K, ids, arm, names, cov, term, kinds) -> PersonTimeTable:
    n = len(ids)
    row_subject = np.repeat(np.arange(n), term)
    starts = np.concatenate([[0], np.cumsum(term)[:-1]]) if n else np.zeros(0, dtype=np.int64)
    k = np.arange(len(row_subject)) - np.repeat(starts, term) + 1
    last = np.cumsum(term) - 1
    c = np.zeros(len(k), dtype=np.int8)
    d = np.zeros(len(k), dtype=np.int8)
    y = np.zeros(len(k), dtype=np.int8)
    c[last[kinds == EventKind.CENSORED.value]] = 1
    d[last[kinds == EventKind.COMPETING.value]] = 1
    y[last[kinds == EventKind.INTEREST.value]] = 1
    return PersonTimeTable(
        K=K,
        subject_ids=ids,
        arm=arm,
        covariate_names=tuple(names),
        covariates=cov,
        subject_weight=np.ones(n),
        row_subject=row_subject,
        k=k.astype(np.int64),
        c=c,
        d=d,
        y=y,
    )


def table_from_arrays(
    K: int,
    arm: np.ndarray,
    covariates: np.ndarray,
    covariate_names: Sequence[str],
    event_kind: np.ndarray,
    event_interval: np.ndarray,
    ids: np.ndarray | None = None,
) -> PersonTimeTable:
    """Vectorised constructor used by the simulators.

    ``event_kind`` holds :class:`EventKind` values; ``event_interval`` is
    ignored for administrative ends.
    """
    n = len(arm)
    kinds = np.asarray(event_kind, dtype=np.int8)
    term = np.where(kinds == EventKind.ADMIN_END.value, K + 1, np.asarray(event_interval)).astype(np.int64)
    if n and (term.min() < 1 or term.max() > K + 1):
        raise InvalidInterval("event intervals must lie in 1..K+1")
    if ids is None:
        ids = np.arange(n).astype(object)
    return _expand(
        K, ids, np.asarray(arm, dtype=np.int8), tuple(covariate_names),
        np.asarray(covariates, dtype=float).reshape(n, len(covariate_names)), term, kinds,
    )


_WIDE_FIXED = ("id", "arm")
_WIDE_TAIL = ("time", "event")


def read_wide_csv(path: str | Path) -> list[SubjectRecord]:
    """Read ``id,arm,<covariates...>,time,event`` rows.

    ``event`` codes: 0 censored, 1 event of interest, 2 competing event,
    3 administrative end (``time`` may then be blank).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header[:2]) != _WIDE_FIXED or tuple(header[-2:]) != _WIDE_TAIL:
            raise SchemaMismatch(f"{path}: header must be id,arm,<covariates...>,time,event; got {header}")
        cov_names = header[2:-2]
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaMismatch(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                kind = EventKind(int(row[-1]))
                t = None if row[-2].strip() == "" else int(float(row[-2]))
                arm = int(row[1])
                covs = {nm: float(v) for nm, v in zip(cov_names, row[2:-2])}
            except ValueError as exc:
                raise SchemaMismatch(f"{path}:{lineno}: {exc}") from None
            if kind is EventKind.ADMIN_END:
                t = None
            out.append(SubjectRecord(id=row[0], arm=arm, covariates=covs, event_kind=kind, event_interval=t))
    return out


def write_wide_csv(subjects: Sequence[SubjectRecord], path: str | Path, K: int | None = None) -> None:
    names = list(subjects[0].covariates) if subjects else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*_WIDE_FIXED, *names, *_WIDE_TAIL])
        for s in subjects:
            if s.event_kind is EventKind.ADMIN_END:
                t = "" if K is None else K + 1
            else:
                t = s.event_interval
            w.writerow([s.id, s.arm, *(repr(float(s.covariates[n])) for n in names), t, s.event_kind.value])
