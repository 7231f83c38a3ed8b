"""Formula parsing and pooled logistic regression for discrete-time hazards.

Formulas use a small grammar::

    formula := term ('+' term)*
    term    := factor ('*' factor)*
    factor  := '1' | 'A' | 'k' | 'k^' INT | identifier

A term is a product of factors. ``k^p`` with ``p <= 3`` and products of
time powers multiply out (``k*k^2`` is ``k^3``). Identifiers are baseline
covariate names.

Fits are computed on the data aggregated by (covariate pattern, arm,
interval), which gives the same likelihood as the person-interval rows and
lets bootstrap frequency weights enter as counts.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit, log_expit

from .errors import (
    CovariateSchemaMismatch,
    EmptyRiskSet,
    MissingCovariate,
    ParseError,
    RankDeficient,
    Separation,
    UnconvergedModel,
    UnknownExponent,
)
from .event_history import PersonTimeTable

TOL = 1e-10
MAX_ITER = 100
MAX_HALVINGS = 20
PROB_EPS = 1e-12
SEPARATION_EPS = 1e-8


class OutcomeRole(enum.Enum):
    EVENT_Y = "y"
    COMPETING_D = "d"
    CENSOR_C = "c"


@dataclass(frozen=True, order=True)
class Term:
    """Product of factors: ``A**a * k**kpow * prod(covs)``."""

    a: bool = False
    kpow: int = 0
    covs: tuple[str, ...] = ()

    @property
    def is_intercept(self) -> bool:
        return not self.a and self.kpow == 0 and not self.covs

    def __str__(self) -> str:
        parts = []
        if self.a:
            parts.append("A")
        if self.kpow == 1:
            parts.append("k")
        elif self.kpow > 1:
            parts.append(f"k^{self.kpow}")
        parts.extend(self.covs)
        return "*".join(parts) if parts else "1"


@dataclass(frozen=True)
class DesignSpec:
    terms: tuple[Term, ...]
    outcome_role: OutcomeRole = OutcomeRole.EVENT_Y

    @property
    def covariates(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for t in self.terms:
            for c in t.covs:
                seen[c] = None
        return tuple(seen)

    @property
    def intercept_index(self) -> int:
        return next(i for i, t in enumerate(self.terms) if t.is_intercept)

    def __str__(self) -> str:
        return " + ".join(str(t) for t in self.terms)

    def design(self, a: np.ndarray, k: np.ndarray, covs: Mapping[str, np.ndarray]) -> np.ndarray:
        """Design matrix for aligned arrays of arm, interval and covariates."""
        a = np.asarray(a, dtype=float)
        k = np.asarray(k, dtype=float)
        n = np.broadcast(a, k).shape[0] if a.ndim else k.shape[0]
        X = np.ones((n, len(self.terms)))
        for j, t in enumerate(self.terms):
            if t.a:
                X[:, j] *= a
            if t.kpow:
                X[:, j] *= k ** t.kpow
            for c in t.covs:
                if c not in covs:
                    raise MissingCovariate(f"covariate {c!r} required by term {t} is missing")
                X[:, j] *= np.asarray(covs[c], dtype=float)
        return X


_TOKEN = re.compile(r"\s*(?:(\*\*)|([+*^])|(\d+)|([A-Za-z_][A-Za-z0-9_.]*)|(\S))")


def _tokenize(text: str):
    pos = 0
    raw = text.encode("utf-8")
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        start = m.start(m.lastindex)
        offset = len(text[:start].encode("utf-8"))
        if m.group(1):
            raise ParseError("unexpected '**'; use '*' for products and '^' for powers", offset=offset)
        if m.group(5):
            raise ParseError(f"unexpected character {m.group(5)!r}", offset=offset)
        kind = "op" if m.group(2) else "int" if m.group(3) else "name"
        out.append((kind, m.group(m.lastindex), offset))
        pos = m.end()
    out.append(("end", "", len(raw)))
    return out


def parse_formula(text: str, role: OutcomeRole | str = OutcomeRole.EVENT_Y) -> DesignSpec:
    """Parse a hazard-model formula.

    Examples
    --------
    >>> str(parse_formula("1 + k + A*k^2"))
    '1 + k + A*k^2'
    """
    role = OutcomeRole(role) if not isinstance(role, OutcomeRole) else role
    toks = _tokenize(text)
    i = 0

    def expect_factor():
        nonlocal i
        kind, val, off = toks[i]
        i += 1
        if kind == "int":
            if val != "1":
                raise ParseError(f"numeric factor {val!r} not allowed; only '1'", offset=off)
            return ("one", 0, off)
        if kind == "name":
            if val == "A":
                return ("A", 0, off)
            if val == "k":
                if toks[i][1] == "^":
                    i += 1
                    pk, pv, poff = toks[i]
                    i += 1
                    if pk != "int":
                        raise ParseError("expected an integer exponent after '^'", offset=poff)
                    p = int(pv)
                    if p < 1:
                        raise ParseError(f"exponent must be positive, got {p}", offset=poff)
                    if p > 3:
                        raise UnknownExponent(f"time exponent {p} exceeds 3", offset=poff)
                    return ("k", p, off)
                return ("k", 1, off)
            return ("cov", val, off)
        what = "end of formula" if kind == "end" else repr(val)
        raise ParseError(f"expected a factor, found {what}", offset=off)

    terms: list[Term] = []
    while True:
        term_off = toks[i][2]
        a = False
        kpow = 0
        covs: list[str] = []
        while True:
            kind, val, off = expect_factor()
            if kind == "A":
                if a:
                    raise ParseError("factor 'A' repeated within a term", offset=off)
                a = True
            elif kind == "k":
                kpow += val
                if kpow > 3:
                    raise UnknownExponent(f"time exponent {kpow} exceeds 3", offset=off)
            elif kind == "cov":
                if val in covs:
                    raise ParseError(f"covariate {val!r} repeated within a term", offset=off)
                covs.append(val)
            if toks[i][1] == "*":
                i += 1
                continue
            break
        term = Term(a=a, kpow=kpow, covs=tuple(sorted(covs)))
        if term in terms:
            raise ParseError(f"duplicate term {term}", offset=term_off)
        terms.append(term)
        kind, val, off = toks[i]
        if val == "+":
            i += 1
            continue
        if kind == "end":
            break
        raise ParseError(f"expected '+' or end of formula, found {val!r}", offset=off)
    if not any(t.is_intercept for t in terms):
        raise ParseError("formula needs an intercept term '1'", offset=0)
    return DesignSpec(tuple(terms), role)


@dataclass(frozen=True)
class LogisticFit:
    """Pooled logistic fit of one discrete-time hazard.

    ``max_abs_score`` is the sup-norm of the score with each design column
    rescaled to unit maximum, divided by the total weight of the risk set.
    """

    spec: DesignSpec
    coefficients: np.ndarray
    converged: bool
    iterations: int
    max_abs_score: float
    n_rows: int
    loglik: float = float("nan")
    covariance: np.ndarray | None = field(default=None, repr=False)

    @property
    def outcome_role(self) -> OutcomeRole:
        return self.spec.outcome_role

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def to_dict(self) -> dict:
        return {
            "role": self.spec.outcome_role.value,
            "terms": [str(t) for t in self.spec.terms],
            "coefficients": [float(c) for c in self.coefficients],
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def linear_predictor(self, a, k, covs: Mapping[str, np.ndarray]) -> np.ndarray:
        return self.spec.design(a, k, covs) @ self.coefficients

    def require_converged(self) -> None:
        if not self.converged:
            raise UnconvergedModel(
                f"{self.spec.outcome_role.name} model did not converge in {self.iterations} iterations"
            )


def constant_fit(role: OutcomeRole, value: float = 0.0) -> LogisticFit:
    """A fit whose hazard is identically ``expit(value)``; ``-inf`` gives zero."""
    return LogisticFit(
        spec=DesignSpec((Term(),), role),
        coefficients=np.array([value]),
        converged=True,
        iterations=0,
        max_abs_score=0.0,
        n_rows=0,
    )


@dataclass(frozen=True)
class HazardModelSet:
    fit_y: LogisticFit
    fit_d: LogisticFit
    fit_c: LogisticFit | None = None

    def __post_init__(self):
        for fit, role in ((self.fit_y, OutcomeRole.EVENT_Y), (self.fit_d, OutcomeRole.COMPETING_D),
                          (self.fit_c, OutcomeRole.CENSOR_C)):
            if fit is not None and fit.outcome_role is not role:
                raise CovariateSchemaMismatch(f"fit in slot {role.name} has role {fit.outcome_role.name}")


# aggregated binomial data --------------------------------------------------

@dataclass(frozen=True)
class _Grouped:
    a: np.ndarray
    k: np.ndarray
    pattern: np.ndarray
    trials: np.ndarray
    events: np.ndarray
    n_rows: int


def _risk_set(table: PersonTimeTable, role: OutcomeRole) -> tuple[np.ndarray, np.ndarray]:
    if role is OutcomeRole.EVENT_Y:
        return table.at_risk_for_y, table.y
    if role is OutcomeRole.COMPETING_D:
        return table.at_risk_for_d, table.d
    return np.ones(table.n_rows, dtype=bool), table.c


def _group(table: PersonTimeTable, role: OutcomeRole) -> _Grouped:
    cache_key = ("group_keys", role)
    if cache_key not in table._cache:
        mask, outcome = _risk_set(table, role)
        _, pat_of_subject = table.patterns
        row_pat = pat_of_subject[table.row_subject]
        key = ((row_pat * 2 + table.a) * table.grid_K + (table.k - 1))[mask]
        size = int(key.max()) + 1 if key.size else 0
        table._cache[cache_key] = (np.flatnonzero(mask), key, outcome[mask].astype(float), size)
    rows, key, out, size = table._cache[cache_key]
    K1 = table.grid_K
    w = table.subject_weight[table.row_subject[rows]]
    trials = np.bincount(key, weights=w, minlength=size)
    events = np.bincount(key, weights=w * out, minlength=size)
    used = np.flatnonzero(trials > 0)
    return _Grouped(
        a=(used // K1) % 2,
        k=used % K1 + 1,
        pattern=used // (2 * K1),
        trials=trials[used],
        events=events[used],
        n_rows=int(np.count_nonzero(w)),
    )


def _pattern_covs(table: PersonTimeTable, spec: DesignSpec) -> dict[str, np.ndarray]:
    uniq, _ = table.patterns
    out = {}
    for c in spec.covariates:
        if c not in table.covariate_names:
            raise MissingCovariate(f"covariate {c!r} not in table (has {list(table.covariate_names)})")
        out[c] = uniq[:, table.covariate_names.index(c)]
    return out


def _grouped_design(table: PersonTimeTable, spec: DesignSpec):
    g = _group(table, spec.outcome_role)
    pcovs = _pattern_covs(table, spec)
    covs = {c: v[g.pattern] for c, v in pcovs.items()}
    X = spec.design(g.a, g.k, covs)
    return g, X


def _loglik(eta, trials, events):
    return float(np.sum(events * log_expit(eta) + (trials - events) * log_expit(-eta)))


def _irls(X, trials, events, start=None):
    """Damped Newton on a binomial likelihood. Returns (beta, info dict)."""
    N = trials.sum()
    scale = np.abs(X).max(axis=0)
    scale[scale == 0] = 1.0
    Xs = X / scale
    p = Xs.shape[1]
    if np.linalg.matrix_rank(Xs) < p:
        raise RankDeficient(f"design matrix has rank {np.linalg.matrix_rank(Xs)} < {p} columns")
    beta = np.zeros(p) if start is None else np.asarray(start, dtype=float) * scale
    eta = Xs @ beta
    ll = _loglik(eta, trials, events)
    converged = False
    it = 0
    score_norm = np.inf
    for it in range(1, MAX_ITER + 1):
        mu = expit(eta)
        score = Xs.T @ (events - trials * mu)
        score_norm = np.max(np.abs(score)) / N
        wts = trials * mu * (1 - mu)
        H = (Xs * wts[:, None]).T @ Xs
        try:
            step = np.linalg.solve(H, score)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, score, rcond=None)[0]
        if score_norm <= TOL:
            converged = True
            it -= 1
            # polishing Newton steps take the solution to rounding level
            for _ in range(3):
                cand = beta + step
                eta_c = Xs @ cand
                mu_c = expit(eta_c)
                score_c = Xs.T @ (events - trials * mu_c)
                norm_c = np.max(np.abs(score_c)) / N
                if not (np.all(np.isfinite(cand)) and norm_c < score_norm):
                    break
                beta, eta, score_norm = cand, eta_c, norm_c
                ll = _loglik(eta, trials, events)
                wts = trials * mu_c * (1 - mu_c)
                H = (Xs * wts[:, None]).T @ Xs
                step = np.linalg.lstsq(H, score_c, rcond=None)[0]
            break
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = beta + t * step
            eta_c = Xs @ cand
            ll_c = _loglik(eta_c, trials, events)
            if ll_c >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        else:
            break
        beta, eta, ll = cand, eta_c, ll_c
    else:
        mu = expit(eta)
        score_norm = np.max(np.abs(Xs.T @ (events - trials * mu))) / N
        converged = score_norm <= TOL
    mu = expit(eta)
    wts = trials * mu * (1 - mu)
    H = (Xs * wts[:, None]).T @ Xs
    try:
        cov_s = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        cov_s = np.full((p, p), np.nan)
    cov = cov_s / np.outer(scale, scale)
    return beta / scale, {
        "converged": converged,
        "iterations": it,
        "score": float(score_norm),
        "loglik": ll,
        "mu": mu,
        "cov": cov,
    }


def fit_pooled_logistic(table: PersonTimeTable, spec: DesignSpec) -> LogisticFit:
    """Maximum-likelihood pooled logistic fit of one hazard.

    The risk set depends on ``spec.outcome_role``: the event-of-interest
    model uses rows uncensored and free of the competing event in the
    interval, the competing-event model uses uncensored rows, and the
    censoring model uses every row.
    """
    g, X = _grouped_design(table, spec)
    N = g.trials.sum()
    if N <= 0:
        raise EmptyRiskSet(f"no rows at risk for the {spec.outcome_role.name} model")
    E = g.events.sum()
    if E <= 0 or E >= N:
        raise Separation(f"{spec.outcome_role.name} outcome is constant in the risk set")
    start = np.zeros(X.shape[1])
    ybar = E / N
    start[spec.intercept_index] = np.log(ybar / (1 - ybar))
    beta, info = _irls(X, g.trials, g.events, start)
    mu = info["mu"]
    extreme = (mu < PROB_EPS) | (mu > 1 - PROB_EPS)
    # quasi-separation: the score vanishes while a cell is fitted perfectly
    perfect = ((mu < SEPARATION_EPS) & (g.events == 0)) | ((mu > 1 - SEPARATION_EPS) & (g.events == g.trials))
    if (not info["converged"] and np.any(extreme)) or np.any(perfect):
        raise Separation(
            f"{spec.outcome_role.name} model: fitted probabilities reach 0 or 1; coefficients diverge"
        )
    return LogisticFit(
        spec=spec,
        coefficients=beta,
        converged=info["converged"],
        iterations=info["iterations"],
        max_abs_score=info["score"],
        n_rows=g.n_rows,
        loglik=info["loglik"],
        covariance=info["cov"],
    )


def fit_hazards(
    table: PersonTimeTable,
    y_formula: str | DesignSpec,
    d_formula: str | DesignSpec,
    c_formula: str | DesignSpec | None = None,
) -> HazardModelSet:
    """Fit the event, competing-event and (when censoring occurs) censoring models."""

    def _spec(f, role):
        return f if isinstance(f, DesignSpec) else parse_formula(f, role)

    fit_y = fit_pooled_logistic(table, _spec(y_formula, OutcomeRole.EVENT_Y))
    fit_d = fit_pooled_logistic(table, _spec(d_formula, OutcomeRole.COMPETING_D))
    fit_c = None
    if c_formula is not None and np.any(table.c):
        fit_c = fit_pooled_logistic(table, _spec(c_formula, OutcomeRole.CENSOR_C))
    return HazardModelSet(fit_y, fit_d, fit_c)


def log_likelihood(table: PersonTimeTable, spec: DesignSpec, coefficients: np.ndarray) -> float:
    g, X = _grouped_design(table, spec)
    return _loglik(X @ np.asarray(coefficients, dtype=float), g.trials, g.events)


def score(table: PersonTimeTable, spec: DesignSpec, coefficients: np.ndarray) -> np.ndarray:
    """Analytic gradient of :func:`log_likelihood`."""
    g, X = _grouped_design(table, spec)
    mu = expit(X @ np.asarray(coefficients, dtype=float))
    return X.T @ (g.events - g.trials * mu)


def predict_hazard(fit: LogisticFit, a: int, l: Mapping[str, float], k: int | np.ndarray) -> float | np.ndarray:
    """Fitted hazard at arm ``a``, covariates ``l`` and interval(s) ``k``."""
    k_arr = np.atleast_1d(np.asarray(k, dtype=float))
    covs = {}
    for c in fit.spec.covariates:
        if c not in l:
            raise MissingCovariate(f"covariate {c!r} missing from input")
        covs[c] = np.full(k_arr.shape, float(l[c]))
    eta = fit.spec.design(np.full(k_arr.shape, float(a)), k_arr, covs) @ fit.coefficients
    h = expit(eta)
    return float(h[0]) if np.ndim(k) == 0 else h


def hazard_matrix(
    fit: LogisticFit | None,
    a: int,
    pattern_covs: np.ndarray,
    covariate_names: Sequence[str],
    K1: int,
) -> np.ndarray:
    """Hazards for every covariate pattern (rows) and interval ``1..K1`` (columns).

    ``fit=None`` denotes an identically zero hazard.
    """
    P = pattern_covs.shape[0]
    if fit is None:
        return np.zeros((P, K1))
    names = list(covariate_names)
    for c in fit.spec.covariates:
        if c not in names:
            raise CovariateSchemaMismatch(f"model covariate {c!r} not present in table schema")
    kk = np.tile(np.arange(1, K1 + 1, dtype=float), P)
    covs = {c: np.repeat(pattern_covs[:, names.index(c)], K1) for c in fit.spec.covariates}
    eta = fit.spec.design(np.full(P * K1, float(a)), kk, covs) @ fit.coefficients
    return expit(eta).reshape(P, K1)
