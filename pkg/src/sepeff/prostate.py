"""Loader for the public prostate cancer trial extract.

Expected columns (as distributed by the Vanderbilt biostatistics archive):
``patno, rx, dtime, status, age, pf, hg, hx`` and others that are ignored.
``dtime`` is follow-up in months. Deaths from prostate cancer are the event
of interest; deaths from any other cause are the competing event.
"""

from __future__ import annotations

import json
import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import InvalidArm, MissingColumn, UnmappedStatus
from .event_history import EventKind, SubjectRecord

log = logging.getLogger(__name__)

DATA_ENV = "SEPEFF_PROSTATE_CSV"
EXPECTED_ARM_SIZES = {0: 127, 1: 125}

INTEREST_STATUS = ("dead - prostatic ca",)
COMPETING_STATUS = (
    "dead - heart or vascular",
    "dead - cerebrovascular",
    "dead - pulmonary embolus",
    "dead - other ca",
    "dead - respiratory disease",
    "dead - other specific non-ca",
    "dead - unspecified non-ca",
    "dead - unknown cause",
)
CENSORED_STATUS = ("alive",)

ACTIVITY_LEVELS = {
    "normal activity": None,
    "in bed < 50% daytime": "pf_bed_lt50",
    "in bed > 50% daytime": "pf_bed_ge50",
    "confined to bed": "pf_bed_ge50",
}

COVARIATES = ("pf_bed_lt50", "pf_bed_ge50", "age_75_79", "age_80plus", "hg", "hx")
_COV_TERMS = " + ".join(COVARIATES)
Y_FORMULA = f"1 + k + k^2 + k^3 + A + A*k + A*k^2 + {_COV_TERMS}"
D_FORMULA = Y_FORMULA
C_FORMULA = f"1 + k + k^2 + k^3 + A + {_COV_TERMS}"
REPORT_K = 36


class ArmCountMismatch(UserWarning):
    pass


@dataclass(frozen=True)
class ProstateConfig:
    arm_codes: dict = field(default_factory=lambda: {"placebo": 0, "5.0 mg estrogen": 1})
    interval_months: int = 1
    horizon_K: int = 59
    age_cutpoints: tuple[float, float] = (75.0, 80.0)
    activity_levels: dict = field(default_factory=lambda: dict(ACTIVITY_LEVELS))

    def __post_init__(self):
        if sorted(self.arm_codes.values()) != [0, 1]:
            raise InvalidArm("exactly two treatment labels must map to arms 0 and 1")
        if self.interval_months < 1:
            raise ValueError("interval_months must be positive")


REQUIRED = ("rx", "dtime", "status", "age", "pf", "hg", "hx")


def default_data_path() -> Path:
    env = os.environ.get(DATA_ENV)
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "data" / "prostate.csv"


def looks_like_prostate(columns) -> bool:
    return {"rx", "status", "dtime"} <= {c.strip().lower() for c in columns}


def _norm(x) -> str:
    return str(x).strip().lower()


def _hx(v) -> float:
    s = _norm(v)
    if s in ("1", "1.0", "y", "yes", "true"):
        return 1.0
    if s in ("0", "0.0", "n", "no", "false"):
        return 0.0
    return float("nan")


def _outcome(status: str, months: float, cfg: ProstateConfig) -> tuple[EventKind, int | None]:
    K1 = cfg.horizon_K + 1
    s = _norm(status)
    if s in CENSORED_STATUS:
        # followed event-free through the interval containing the last contact
        t = math.floor(months / cfg.interval_months) + 1
        return (EventKind.ADMIN_END, None) if t > K1 else (EventKind.CENSORED, t)
    if s in INTEREST_STATUS:
        kind = EventKind.INTEREST
    elif s in COMPETING_STATUS:
        kind = EventKind.COMPETING
    else:
        raise UnmappedStatus(f"status {status!r} has no event assignment")
    t = max(1, math.ceil(months / cfg.interval_months))
    return (EventKind.ADMIN_END, None) if t > K1 else (kind, t)


def load_prostate_with_audit(
    csv_path: str | Path | None = None, config: ProstateConfig | None = None
) -> tuple[list[SubjectRecord], dict]:
    cfg = config or ProstateConfig()
    path = Path(csv_path) if csv_path is not None else default_data_path()
    raw = pd.read_csv(path)
    raw.columns = [c.strip().lower() for c in raw.columns]
    missing = [c for c in REQUIRED if c not in raw.columns]
    if missing:
        raise MissingColumn(f"{path}: missing columns {missing}")
    if "patno" not in raw.columns:
        raw["patno"] = np.arange(1, len(raw) + 1)
    codes = {_norm(k): v for k, v in cfg.arm_codes.items()}
    arm = raw["rx"].map(lambda x: codes.get(_norm(x)))
    df = raw.loc[arm.notna()].copy()
    df["arm"] = arm[arm.notna()].astype(int)
    audit: dict = {"source_rows": int(len(raw)), "arm_rows": int(len(df))}
    levels = {_norm(k): v for k, v in cfg.activity_levels.items()}
    unknown_pf = sorted({str(v) for v in df["pf"].dropna() if _norm(v) not in levels})
    if unknown_pf:
        raise UnmappedStatus(f"activity levels without a recode: {unknown_pf}")
    lo, hi = cfg.age_cutpoints
    cov = pd.DataFrame(index=df.index)
    pf = df["pf"].map(lambda v: levels.get(_norm(v), "missing") if pd.notna(v) else "missing")
    cov["pf_bed_lt50"] = (pf == "pf_bed_lt50").astype(float).where(pf != "missing")
    cov["pf_bed_ge50"] = (pf == "pf_bed_ge50").astype(float).where(pf != "missing")
    age = pd.to_numeric(df["age"], errors="coerce")
    cov["age_75_79"] = ((age >= lo) & (age < hi)).astype(float).where(age.notna())
    cov["age_80plus"] = (age >= hi).astype(float).where(age.notna())
    cov["hg"] = pd.to_numeric(df["hg"], errors="coerce")
    cov["hx"] = df["hx"].map(_hx)
    complete = cov.notna().all(axis=1) & pd.to_numeric(df["dtime"], errors="coerce").notna()
    audit["dropped_incomplete"] = int((~complete).sum())
    if audit["dropped_incomplete"]:
        log.info("dropping %d subjects with missing covariates", audit["dropped_incomplete"])
    df, cov = df.loc[complete], cov.loc[complete]
    subjects = []
    kinds: dict[str, int] = {}
    for (idx, row), (_, c) in zip(df.iterrows(), cov.iterrows()):
        kind, t = _outcome(row["status"], float(row["dtime"]), cfg)
        kinds[kind.name] = kinds.get(kind.name, 0) + 1
        subjects.append(
            SubjectRecord(
                id=str(row["patno"]),
                arm=int(row["arm"]),
                covariates={k: float(c[k]) for k in COVARIATES},
                event_kind=kind,
                event_interval=t,
            )
        )
    arm_sizes = {a: int((df["arm"] == a).sum()) for a in (0, 1)}
    audit.update(
        {
            "arm_sizes": {str(a): n for a, n in arm_sizes.items()},
            "event_kinds": kinds,
            "activity": {str(k): int(v) for k, v in pf.value_counts().items()},
            "horizon_K": cfg.horizon_K,
            "interval_months": cfg.interval_months,
        }
    )
    raw_sizes = {a: int((arm == a).sum()) for a in (0, 1)}
    if raw_sizes != EXPECTED_ARM_SIZES:
        warnings.warn(f"arm sizes {raw_sizes} differ from the expected {EXPECTED_ARM_SIZES}", ArmCountMismatch)
    log.info("prostate extract: %s", json.dumps(audit))
    return subjects, audit


def load_prostate(csv_path: str | Path | None = None, config: ProstateConfig | None = None) -> list[SubjectRecord]:
    return load_prostate_with_audit(csv_path, config)[0]
