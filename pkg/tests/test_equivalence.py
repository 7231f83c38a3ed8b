"""Exact agreement of the estimators under saturated models."""

import numpy as np
import pytest

from conftest import equivalence_dataset
from sepeff.gformula import Estimator
from sepeff.nonparam import aalen_johansen, stratified_aalen_johansen
from sepeff.pipeline import ALL_TARGETS, Pipeline

EST = (Estimator.GFORMULA, Estimator.IPW1, Estimator.IPW2, Estimator.NONPARAM)


@pytest.mark.parametrize("seed", range(10))
def test_saturated_estimators_agree(seed):
    tab, f = equivalence_dataset(seed)
    curves = Pipeline(f, f, estimators=EST).run(tab)
    for a_y, a_d in ALL_TARGETS:
        g = curves[(Estimator.GFORMULA, a_y, a_d)].values
        np.testing.assert_allclose(curves[(Estimator.IPW1, a_y, a_d)].values, g, rtol=0, atol=1e-10)
        np.testing.assert_allclose(curves[(Estimator.IPW2, a_y, a_d)].values, g, rtol=0, atol=1e-10)
        if a_y == a_d:
            np.testing.assert_allclose(stratified_aalen_johansen(tab, a_y).values, g, rtol=0, atol=1e-10)
            np.testing.assert_allclose(aalen_johansen(tab, a_y).cif_y, g, rtol=0, atol=1e-10)


def test_dataset_generator_is_saturated():
    tab, f = equivalence_dataset(0)
    K1 = tab.grid_K
    assert len(f.split("+")) == 4 * K1
