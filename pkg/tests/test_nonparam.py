import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sepeff.errors import EmptyArm
from sepeff.event_history import EventKind, SubjectRecord, table_from_arrays, validate_and_expand
from sepeff.nonparam import aalen_johansen, stratified_aalen_johansen


def test_four_subject_hand_enumeration():
    kinds = [(EventKind.INTEREST, 1), (EventKind.COMPETING, 1), (EventKind.INTEREST, 2), (EventKind.ADMIN_END, None)]
    subjects = [SubjectRecord(i, 1, {}, k, t) for i, (k, t) in enumerate(kinds)]
    cif = aalen_johansen(validate_and_expand(subjects, K=2), 1)
    assert cif.cif_y[0] == pytest.approx(0.25)
    assert cif.cif_d[0] == pytest.approx(0.25)
    assert cif.risk_set_sizes[1] == 2
    assert cif.cif_y[1] == pytest.approx(0.5)
    assert cif.risk_curve().target == (1, 1)
    assert cif.to_csv().splitlines()[1] == "1,0.25,0.25,4.0"


def test_censored_leave_risk_set_before_events():
    subjects = [
        SubjectRecord(0, 0, {}, EventKind.CENSORED, 1),
        SubjectRecord(1, 0, {}, EventKind.INTEREST, 1),
        SubjectRecord(2, 0, {}, EventKind.ADMIN_END),
    ]
    cif = aalen_johansen(validate_and_expand(subjects, K=1), 0)
    assert cif.risk_set_sizes[0] == 2
    assert cif.cif_y[0] == pytest.approx(0.5)


def test_no_competing_no_censoring_is_empirical_cdf():
    rng = np.random.default_rng(3)
    n, K = 200, 5
    kinds = rng.choice([1, 3], n)
    times = rng.integers(1, K + 2, n)
    tab = table_from_arrays(K, np.zeros(n, int), np.zeros((n, 0)), [], kinds, times)
    ecdf = [np.mean((kinds == 1) & (times <= k)) for k in range(1, K + 2)]
    np.testing.assert_allclose(aalen_johansen(tab, 0).cif_y, ecdf, atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(list(EventKind)), st.integers(1, 4)), min_size=1, max_size=40))
def test_bounds_and_monotonicity(rows):
    subjects = [
        SubjectRecord(i, 0, {}, k, None if k is EventKind.ADMIN_END else t) for i, (k, t) in enumerate(rows)
    ]
    cif = aalen_johansen(validate_and_expand(subjects, K=3), 0)
    assert np.all(cif.cif_y + cif.cif_d <= 1 + 1e-12)
    assert np.all(np.diff(cif.cif_y) >= -1e-15) and np.all(np.diff(cif.cif_d) >= -1e-15)


def test_stratified_mixture_weights():
    subjects = [
        SubjectRecord(0, 0, {"L": 0.0}, EventKind.INTEREST, 1),
        SubjectRecord(1, 0, {"L": 0.0}, EventKind.ADMIN_END),
        SubjectRecord(2, 0, {"L": 1.0}, EventKind.INTEREST, 1),
        SubjectRecord(3, 1, {"L": 1.0}, EventKind.ADMIN_END),
    ]
    tab = validate_and_expand(subjects, K=1)
    # strata risks in arm 0: L=0 -> 0.5, L=1 -> 1.0; overall L share is 1/2 each
    assert stratified_aalen_johansen(tab, 0).at(1) == pytest.approx(0.75)
    assert stratified_aalen_johansen(tab, 0, standardize_arm=0).at(1) == pytest.approx(2 / 3 * 0.5 + 1 / 3)


def test_empty_arm():
    tab = validate_and_expand([SubjectRecord(0, 0, {}, EventKind.ADMIN_END)], K=1)
    with pytest.raises(EmptyArm):
        aalen_johansen(tab, 1)
