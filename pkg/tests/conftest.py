import itertools

import numpy as np
import pytest

from fcpd import KruskalTensor


def random_kruskal(rng, shape, rank, weights=None):
    factors = [rng.standard_normal((i, rank)) for i in shape]
    w = rng.uniform(0.5, 2.0, rank) if weights is None else weights
    return KruskalTensor(w, factors)


def loop_dense(k):
    """Sum of outer products, one entry at a time."""
    out = np.zeros(k.shape)
    for idx in itertools.product(*[range(s) for s in k.shape]):
        total = 0.0
        for r in range(k.rank):
            term = k.weights[r]
            for n, i in enumerate(idx):
                term *= k.factors[n][i, r]
            total += term
        out[idx] = total
    return out


def loop_unfold(arr, groups):
    """Unfolding by explicit column-major index arithmetic inside each group."""
    sizes = [int(np.prod([arr.shape[k] for k in g])) for g in groups]
    out = np.zeros(sizes)
    for idx in itertools.product(*[range(s) for s in arr.shape]):
        target = []
        for g in groups:
            lin, stride = 0, 1
            for k in g:
                lin += idx[k] * stride
                stride *= arr.shape[k]
            target.append(lin)
        out[tuple(target)] = arr[idx]
    return out


def rel(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm((a - b).ravel()) / max(np.linalg.norm(b.ravel()), 1e-300))


def random_rule(rng, order):
    perm = list(rng.permutation(order))
    cuts = sorted(rng.choice(np.arange(1, order), size=rng.integers(0, order), replace=False))
    groups, start = [], 0
    for c in list(cuts) + [order]:
        groups.append(tuple(int(x) for x in perm[start:c]))
        start = c
    return tuple(groups)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
