"""Acceptance criteria. Each test prints one PASS/FAIL line, repeated in the
terminal summary."""

import time
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, brute_force_d_separated, equivalence_dataset, random_dag
from sepeff.bootstrap import bootstrap_ci
from sepeff.effects import separable_decomposition
from sepeff.causal_graph import check_dismissible, d_separated, load_fixture
from sepeff.event_history import EventKind, SubjectRecord, validate_and_expand
from sepeff.gformula import Estimator
from sepeff.glm import OutcomeRole, fit_pooled_logistic, log_likelihood, parse_formula, score
from sepeff.nonparam import stratified_aalen_johansen
from sepeff.pipeline import ALL_TARGETS, Pipeline
from sepeff import prostate
from sepeff.simulate import (
    ArmDesign,
    coverage_pipeline,
    coverage_scenario,
    empirical_risk,
    run_coverage,
    simulate_arrays,
    simulate_table,
    true_risk,
)

G, N1, N2, NP = Estimator.GFORMULA, Estimator.IPW1, Estimator.IPW2, Estimator.NONPARAM
COVERAGE_SEED = 2024


def report(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


# prostate trial -------------------------------------------------------------

PUBLISHED = {
    # (estimator, a_y, a_d): (point, lower, upper) at 36 months
    (G, 1, 1): (0.14, 0.08, 0.20),
    (G, 1, 0): (0.15, 0.09, 0.21),
    (G, 0, 0): (0.21, 0.15, 0.28),
    (N1, 1, 1): (0.17, 0.10, 0.24),
    (N1, 1, 0): (0.18, 0.10, 0.26),
    (N1, 0, 0): (0.23, 0.17, 0.35),
}


@pytest.fixture(scope="module")
def prostate_run():
    path = prostate.default_data_path()
    if not path.is_file():
        return None
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", prostate.ArmCountMismatch)
        subjects = prostate.load_prostate(path)
    table = validate_and_expand(subjects, prostate.ProstateConfig().horizon_K)
    pipe = Pipeline(prostate.Y_FORMULA, prostate.D_FORMULA, prostate.C_FORMULA, estimators=(G, N1),
                    targets=((1, 1), (0, 0), (1, 0)))
    curves = pipe.run(table)
    boot = bootstrap_ci(table, pipe, B=500, seed=7)
    return curves, boot, time.perf_counter() - start


def _missing_data_detail():
    return (f"prostate extract not found at {prostate.default_data_path()} "
            f"(set {prostate.DATA_ENV}); criterion not evaluated")


def test_criterion_1_prostate_reproduction(prostate_run):
    if prostate_run is None:
        report(1, False, _missing_data_detail())
    curves, boot, elapsed = prostate_run
    k = prostate.REPORT_K
    worst_point = worst_bound = 0.0
    for (est, a_y, a_d), (p, lo, hi) in PUBLISHED.items():
        b = boot[("risk", est, a_y, a_d)]
        worst_point = max(worst_point, abs(curves[(est, a_y, a_d)].at(k) - p))
        worst_bound = max(worst_bound, abs(b.lower[k - 1] - lo), abs(b.upper[k - 1] - hi))
    ok = worst_point <= 0.03 and worst_bound <= 0.04 and elapsed <= 120
    report(1, ok, f"max point error {worst_point:.3f} (tol 0.03), max CI bound error {worst_bound:.3f} "
                  f"(tol 0.04), runtime {elapsed:.1f}s (limit 120s)")


def test_criterion_2_indirect_effect_magnitude(prostate_run):
    if prostate_run is None:
        report(2, False, _missing_data_detail())
    curves, _, _ = prostate_run
    k = prostate.REPORT_K
    gaps = {est: abs(curves[(est, 1, 1)].at(k) - curves[(est, 1, 0)].at(k)) for est in (G, N1)}
    report(2, all(g <= 0.03 for g in gaps.values()),
           ", ".join(f"{e.value} |indirect| {g:.3f}" for e, g in gaps.items()) + " (tol 0.03)")


# exact identities -----------------------------------------------------------

@pytest.fixture(scope="module")
def equivalence_runs():
    runs = []
    for seed in range(50):
        tab, f = equivalence_dataset(1000 + seed)
        pipe = Pipeline(f, f, estimators=(G, N1, N2, NP))
        runs.append((tab, pipe, pipe.run(tab)))
    return runs


def test_criterion_3_estimator_equivalence(equivalence_runs):
    worst = 0.0
    for tab, pipe, curves in equivalence_runs:
        for a_y, a_d in ALL_TARGETS:
            g = curves[(G, a_y, a_d)].values
            worst = max(worst, np.max(np.abs(curves[(N1, a_y, a_d)].values - g)),
                        np.max(np.abs(curves[(N2, a_y, a_d)].values - g)))
            if a_y == a_d:
                worst = max(worst, np.max(np.abs(curves[(NP, a_y, a_d)].values - g)),
                            np.max(np.abs(stratified_aalen_johansen(tab, a_y).values - g)))
    report(3, worst <= 1e-10, f"50 datasets, max deviation {worst:.2e} (tol 1e-10)")


def test_criterion_4_decomposition_identity(equivalence_runs):
    worst = 0.0
    n_checks = 0
    runs = [(p, c) for _, p, c in equivalence_runs]
    for scenario in range(1, 6):
        sc = coverage_scenario(scenario)
        pipe = coverage_pipeline(sc)
        runs.append((pipe, pipe.run(simulate_table(sc.dgp, 400, seed=scenario))))
    for pipe, curves in runs:
        effects = pipe.effects(curves)
        for est in pipe.estimators:
            if (est, "total") not in effects:
                continue
            for mid_direct, mid_indirect in (("sep_direct(a_d=1)", "sep_indirect(a_y=0)"),
                                             ("sep_direct(a_d=0)", "sep_indirect(a_y=1)")):
                total = effects[(est, "total")].values
                mid = (0, 1) if mid_direct.endswith("1)") else (1, 0)
                t, d, i = separable_decomposition(curves[(est, 1, 1)], curves[(est, *mid)], curves[(est, 0, 0)])
                assert d.label == mid_direct and i.label == mid_indirect
                worst = max(worst, np.max(np.abs(t.values - (d.values + i.values))),
                            np.max(np.abs(total - t.values)))
                n_checks += 1
    report(4, worst <= 1e-12, f"{n_checks} decompositions, max |total - direct - indirect| {worst:.1e} (tol 1e-12)")


# coverage -------------------------------------------------------------------

TABLE4 = {
    ((1, 1), G): (0.95, 0.94, 0.93),
    ((1, 1), NP): (0.95, 0.94, 0.95),
    ((0, 0), G): (0.94, 0.93, 0.92),
    ((0, 0), NP): (0.94, 0.95, 0.95),
    ((1, 0), G): (0.95, 0.96, 0.94),
    ((1, 0), N1): (0.94, 0.95, 0.95),
    ((1, 0), N2): (0.96, 0.95, 0.95),
}
KS = (100, 75, 25)


def test_criterion_5_scenario1_coverage():
    start = time.perf_counter()
    table = run_coverage(1, n=400, reps=200, B=200, ks=KS, seed=COVERAGE_SEED)
    elapsed = time.perf_counter() - start
    worst, where = 0.0, None
    for (target, est), published in TABLE4.items():
        for k, ref in zip(KS, published):
            dev = abs(table.get(target, est, k) - ref)
            if dev > worst:
                worst, where = dev, (target, est.value, k, table.get(target, est, k), ref)
    ok = worst <= 0.05 + 1e-12 and elapsed <= 1800
    report(5, ok, f"max deviation from published coverage {worst:.3f} at {where} (tol 0.05), "
                  f"{table.failed_replicates} failed replicates, runtime {elapsed:.0f}s")


def test_criterion_6_scenario4_asymmetry():
    table = run_coverage(4, n=400, reps=200, B=200, ks=(100,), seed=COVERAGE_SEED)
    low = table.get((0, 1), G, 100)
    high = table.get((1, 0), G, 100)
    report(6, low <= 0.15 and high >= 0.88,
           f"g-formula coverage at k=100: (0,1) {low:.3f} (need <= 0.15), (1,0) {high:.3f} (need >= 0.88)")


def test_criterion_7_four_arm_identity():
    dgp = coverage_scenario(1).dgp
    sim = simulate_arrays(dgp, 100_000, seed=7, arm_design=ArmDesign.FOUR_ARM)
    idx = np.array([25, 75, 100]) - 1
    worst = 0.0
    for a_y in (0, 1):
        for a_d in (0, 1):
            p, se = empirical_risk(sim, a_y, a_d)
            z = np.abs(p[idx] - true_risk(dgp, a_y, a_d).values[idx]) / se[idx]
            worst = max(worst, float(z.max()))
    report(7, worst <= 3.0, f"max |empirical - truth| / SE over 4 cells x 3 times = {worst:.2f} (tol 3)")


# numerical core and graphs --------------------------------------------------

def _column_scale(tab, spec):
    covs = {c: tab.covariates[tab.row_subject, tab.covariate_names.index(c)] for c in spec.covariates}
    scale = np.abs(spec.design(tab.a.astype(float), tab.k.astype(float), covs)).max(axis=0)
    return np.where(scale > 0, scale, 1.0)


def _scaled_gradients(tab, spec, beta, h=1e-6):
    """Analytic and central-difference gradients with respect to the
    coefficients of unit-scaled design columns."""
    s = _column_scale(tab, spec)
    analytic = score(tab, spec, beta) / s
    numeric = np.empty_like(beta)
    for j in range(len(beta)):
        e = np.zeros_like(beta)
        e[j] = h / s[j]
        numeric[j] = (log_likelihood(tab, spec, beta + e) - log_likelihood(tab, spec, beta - e)) / (2 * h)
    return analytic, numeric


def test_criterion_8_numerical_core():
    worst_rel = worst_sol = 0.0
    for scenario in (1, 2, 3):
        sc = coverage_scenario(scenario)
        tab = simulate_table(sc.dgp, 2000, seed=scenario)
        for text, role in ((sc.y_formula, OutcomeRole.EVENT_Y), (sc.d_formula, OutcomeRole.COMPETING_D)):
            spec = parse_formula(text, role)
            fit = fit_pooled_logistic(tab, spec)
            beta = fit.coefficients
            # at the solution the gradient vanishes, so compare on the absolute scale
            a, n = _scaled_gradients(tab, spec, beta)
            worst_sol = max(worst_sol, np.max(np.abs(a - n)))
            # half a standard error away the gradient is informative
            a, n = _scaled_gradients(tab, spec, beta + 0.5 * fit.standard_errors())
            worst_rel = max(worst_rel, np.max(np.abs(a - n)) / np.max(np.abs(n)))
    subjects = [SubjectRecord(i, 0, {}, EventKind.INTEREST, 1) for i in range(3)]
    subjects += [SubjectRecord(i, 0, {}, EventKind.CENSORED, 2) for i in range(3, 10)]
    b0 = fit_pooled_logistic(validate_and_expand(subjects, 2), parse_formula("1")).coefficients[0]
    closed = abs(b0 - np.log(0.3 / 0.7))
    ok = worst_rel < 1e-4 and worst_sol < 1e-4 and closed <= 1e-8
    report(8, ok, f"gradient relative error {worst_rel:.1e}, absolute at solutions {worst_sol:.1e} (tol 1e-4); "
                  f"intercept-only error {closed:.1e} (tol 1e-8)")


def test_criterion_9_graph_engine():
    rng = np.random.default_rng(99)
    agree = 0
    for _ in range(200):
        g = random_dag(rng, 8)
        nodes = list(g.nodes)
        x, y = rng.choice(len(nodes), 2, replace=False)
        rest = [n for i, n in enumerate(nodes) if i not in (x, y)]
        z = {n for n in rest if rng.random() < 0.4}
        agree += d_separated(g, {nodes[x]}, {nodes[y]}, z) == brute_force_d_separated(g, {nodes[x]}, {nodes[y]}, z)
    verdicts = {
        "shared_cause": (False, False),
        "separate_causes": (True, True),
        "measured_confounder": (True, True),
        "four_arm_trial": (True, True),
    }
    got = {}
    for name in verdicts:
        r = check_dismissible(load_fixture(name))
        got[name] = (r.delta1_holds, r.delta2_holds)
    fixtures_ok = got == verdicts
    report(9, agree == 200 and fixtures_ok,
           f"{agree}/200 random DAGs agree with path enumeration; fixture verdicts "
           f"{'match' if fixtures_ok else 'differ: ' + str(got)}")
