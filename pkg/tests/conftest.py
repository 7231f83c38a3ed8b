import numpy as np
import pytest

from sepeff.event_history import EventKind, table_from_arrays


def saturated_formula(K: int) -> str:
    """Formula with one free parameter per (A, L, k) cell on a grid of K+1 intervals."""
    kterms = ["k" if p == 1 else f"k^{p}" for p in range(1, K + 1)]
    terms = ["1", *kterms]
    for prefix in ("A", "L", "A*L"):
        terms.append(prefix)
        terms += [f"{prefix}*{t}" for t in kterms]
    return " + ".join(terms)


def balanced_dataset(rng: np.random.Generator, K: int, m_l0: int, m_l1: int, censor: float = 0.0):
    """Two arms with identical L composition; hazards drawn per (A, L, k) cell.

    Returns a table whose every cell has both events and non-events for the
    generating hazards, unless ``m_l0``/``m_l1`` are very small.
    """
    K1 = K + 1
    hy = rng.uniform(0.1, 0.35, size=(2, 2, K1))
    hd = rng.uniform(0.1, 0.35, size=(2, 2, K1))
    arms, ls, kinds, times = [], [], [], []
    for a in (0, 1):
        for l, m in ((0, m_l0), (1, m_l1)):
            for _ in range(m):
                kind, t = EventKind.ADMIN_END, K1
                for k in range(K1):
                    if censor and rng.random() < censor:
                        kind, t = EventKind.CENSORED, k + 1
                        break
                    if rng.random() < hd[a, l, k]:
                        kind, t = EventKind.COMPETING, k + 1
                        break
                    if rng.random() < hy[a, l, k]:
                        kind, t = EventKind.INTEREST, k + 1
                        break
                arms.append(a)
                ls.append(l)
                kinds.append(kind.value)
                times.append(t)
    return table_from_arrays(K, np.array(arms), np.array(ls, float)[:, None], ["L"], np.array(kinds), np.array(times))


def equivalence_dataset(seed: int):
    """A small uncensored dataset on which saturated models are estimable."""
    from sepeff.errors import Separation
    from sepeff.glm import fit_hazards

    rng = np.random.default_rng(seed)
    while True:
        K = int(rng.integers(1, 4))
        tab = balanced_dataset(rng, K, int(rng.integers(60, 160)), int(rng.integers(60, 160)))
        f = saturated_formula(K)
        try:
            fit_hazards(tab, f, f)
        except Separation:
            continue
        return tab, f


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_dag(rng: np.random.Generator, max_nodes: int = 8):
    """Random DAG on up to ``max_nodes`` nodes with a random edge density."""
    from sepeff.causal_graph import Dag

    n = int(rng.integers(2, max_nodes + 1))
    names = [f"V{i}" for i in range(n)]
    order = rng.permutation(n)
    p = rng.uniform(0.1, 0.6)
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                edges.add((names[order[i]], names[order[j]]))
    return Dag(tuple(names), frozenset(edges))


def brute_force_d_separated(g, x, y, z) -> bool:
    """Enumerate every simple path of the skeleton and apply the blocking rules."""
    x, y, z = set(x), set(y), set(z)
    parents = {n: {u for u, v in g.edges if v == n} for n in g.nodes}
    children = {n: {v for u, v in g.edges if u == n} for n in g.nodes}

    def descendants(n):
        out, stack = set(), [n]
        while stack:
            m = stack.pop()
            if m not in out:
                out.add(m)
                stack.extend(children[m])
        return out

    def active(path):
        for a, b, c in zip(path, path[1:], path[2:]):
            if a in parents[b] and c in parents[b]:
                if not descendants(b) & z:
                    return False
            elif b in z:
                return False
        return True

    def walk(path):
        last = path[-1]
        if last in y:
            return active(path)
        for nb in parents[last] | children[last]:
            if nb not in path and walk(path + [nb]):
                return True
        return False

    return not any(walk([s]) for s in x)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
