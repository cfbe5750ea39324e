import itertools
import sys
from fractions import Fraction

import numpy as np
import pytest

from robustlocal.core import Alphabet, LocalAlgorithm, leaf, node


def ref_eval(tree, x):
    """Plain recursive evaluation, independent of the library's evaluator."""
    queried = []
    while hasattr(tree, "coord"):
        queried.append(tree.coord)
        tree = tree.children[x[tree.coord]]
    return set(queried), tree.label


def ref_distribution(trees, x):
    counts = [0, 0, 0]
    for t in trees:
        counts[ref_eval(t, x)[1]] += 1
    return tuple(Fraction(c, len(trees)) for c in counts)


def words(n, s=2):
    return list(itertools.product(range(s), repeat=n))


def fig4_tree():
    """The 3-local tree of the worked figure, with 0-based coordinates.

    Root queries x0; on 0 it queries x3, and x3=1 leads to x1; on 1 it
    queries x2, and x2=0 leads to x4 whose 0-branch outputs 1.
    """
    return node(
        0,
        node(3, node(2, leaf(0), leaf(1)), node(1, leaf(0), leaf(1))),
        node(2, node(4, leaf(1), leaf(0)), node(3, leaf(0), leaf(1))),
    )


def random_tree(rng, n, depth, s=2, allow_repeats=True, bot=False):
    labels = (0, 1, 2) if bot else (0, 1)
    if depth == 0 or rng.random() < 0.15:
        return leaf(int(rng.choice(labels)))
    c = int(rng.integers(n))
    return node(c, *(random_tree(rng, n, depth - 1, s, allow_repeats, bot) for _ in range(s)))


def random_algorithm(rng, n, q, m, s=2, relaxed=False):
    trees = [random_tree(rng, n, q, s, bot=relaxed) for _ in range(m)]
    return LocalAlgorithm(n=n, alphabet=Alphabet(s), trees={0: trees}, q=q, sigma=Fraction(1, 3),
                          rho0=0, rho1=0, relaxed=relaxed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        ok, detail = results[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'} | {detail}")
