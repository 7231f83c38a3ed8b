import warnings

import pandas as pd
import pytest

from sepeff.errors import MissingColumn, UnmappedStatus
from sepeff.event_history import EventKind, validate_and_expand
from sepeff.prostate import (
    COVARIATES,
    ArmCountMismatch,
    ProstateConfig,
    load_prostate,
    load_prostate_with_audit,
    looks_like_prostate,
)

ROWS = [
    # patno, rx, dtime, status, age, pf, hg, hx
    (1, "placebo", 10, "dead - prostatic ca", 72, "normal activity", 13.8, 0),
    (2, "5.0 mg estrogen", 76, "alive", 81, "in bed < 50% daytime", 12.1, 1),
    (3, "5.0 mg estrogen", 12.5, "dead - heart or vascular", 77, "confined to bed", 11.0, 1),
    (4, "1.0 mg estrogen", 20, "dead - prostatic ca", 70, "normal activity", 14.0, 0),
    (5, "placebo", 30.2, "alive", 65, "normal activity", None, 0),
    (6, "placebo", 0, "dead - other ca", 75, "in bed > 50% daytime", 9.9, 0),
    (7, "placebo", 40, "alive", 66, "normal activity", 15.0, 0),
]


def _csv(tmp_path, rows=ROWS, drop=()):
    df = pd.DataFrame(rows, columns=["patno", "rx", "dtime", "status", "age", "pf", "hg", "hx"])
    df = df.drop(columns=list(drop))
    p = tmp_path / "prostate.csv"
    df.to_csv(p, index=False)
    return p


def _load(path, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ArmCountMismatch)
        return load_prostate_with_audit(path, ProstateConfig(**kw))


def test_mappings(tmp_path):
    subjects, audit = _load(_csv(tmp_path))
    by_id = {s.id: s for s in subjects}
    assert set(by_id) == {"1", "2", "3", "6", "7"}
    assert (by_id["1"].event_kind, by_id["1"].event_interval, by_id["1"].arm) == (EventKind.INTEREST, 10, 0)
    assert by_id["2"].event_kind is EventKind.ADMIN_END and by_id["2"].event_interval is None
    assert (by_id["3"].event_kind, by_id["3"].event_interval) == (EventKind.COMPETING, 13)
    assert (by_id["6"].event_kind, by_id["6"].event_interval) == (EventKind.COMPETING, 1)
    assert (by_id["7"].event_kind, by_id["7"].event_interval) == (EventKind.CENSORED, 41)
    assert by_id["2"].covariates == {
        "pf_bed_lt50": 1.0, "pf_bed_ge50": 0.0, "age_75_79": 0.0, "age_80plus": 1.0, "hg": 12.1, "hx": 1.0
    }
    assert by_id["3"].covariates["age_75_79"] == 1.0 and by_id["3"].covariates["pf_bed_ge50"] == 1.0
    assert audit["dropped_incomplete"] == 1
    assert audit["arm_sizes"] == {"0": 3, "1": 2}
    assert tuple(subjects[0].covariates) == COVARIATES


def test_expands_at_monthly_horizon(tmp_path):
    subjects, _ = _load(_csv(tmp_path))
    tab = validate_and_expand(subjects, 59)
    assert tab.grid_K == 60
    assert tab.n_rows == 10 + 60 + 13 + 1 + 41


def test_shorter_horizon_truncates(tmp_path):
    subjects, _ = _load(_csv(tmp_path), horizon_K=11)
    by_id = {s.id: s for s in subjects}
    assert by_id["3"].event_kind is EventKind.ADMIN_END
    assert by_id["1"].event_interval == 10


def test_idempotent(tmp_path):
    p = _csv(tmp_path)
    assert _load(p) == _load(p)


def test_arm_count_warning(tmp_path):
    with pytest.warns(ArmCountMismatch):
        load_prostate(_csv(tmp_path))


def test_errors(tmp_path):
    with pytest.raises(MissingColumn):
        _load(_csv(tmp_path, drop=("hg",)))
    bad = [r[:3] + ("dead - mystery",) + r[4:] for r in ROWS]
    with pytest.raises(UnmappedStatus):
        _load(_csv(tmp_path, rows=bad))


def test_format_detection():
    assert looks_like_prostate(["patno", "rx", "dtime", "status", "age"])
    assert not looks_like_prostate(["id", "arm", "L", "time", "event"])
