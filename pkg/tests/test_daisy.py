import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpus import collection_corpus, random_bounded_graph, random_collection
from robustlocal.core import StructuralError
from robustlocal.daisy import (
    DaisyPartition,
    PreconditionError,
    check_coloring,
    check_partition,
    equitable_color,
    h_bound,
    partition,
    petal_overlap_bound_check,
    simplify,
)


def ref_partition(sets, n, q):
    """Straight-line greedy construction with Python sets."""
    deg = [0] * n
    for S in sets:
        for i in S:
            deg[i] += 1
    h = lambda k: n ** (max(1, k - 1) / q)  # noqa: E731
    remaining = list(range(len(sets)))
    D, K = [], []
    for j in range(q):
        Kj = {i for i in range(n) if deg[i] >= h(j + 1)}
        Dj = [s for s in remaining if len(set(sets[s]) - Kj) == j]
        remaining = [s for s in remaining if s not in set(Dj)]
        D.append(Dj)
        K.append(Kj)
    D.append(remaining)
    K.append(set())
    return D, K, deg


def ref_hdaisy_ok(sets, D, K, deg, n, q):
    h = lambda k: n ** (max(1, k - 1) / q)  # noqa: E731
    for j in range(1, q + 1):
        for s in D[j]:
            petal_deg = sorted(deg[i] for i in sets[s] if i not in K[j])
            if any(petal_deg[k - 1] > h(k) for k in range(1, j + 1)):
                return False
    return True


def test_h_bound_examples():
    assert [round(h_bound(k, 64, 3), 9) for k in (1, 2, 3)] == [4, 4, 16]
    assert all(h_bound(k, 1, 3) == 1 for k in range(1, 5))
    assert [h_bound(k, 4, 2) for k in (1, 2, 3)] == [2, 2, 4]
    with pytest.raises(ValueError):
        h_bound(0, 4, 2)


def test_star_fixture():
    part = partition([[0, 1], [0, 2], [0, 3]], 4, 2)
    assert part.kernels[0] == part.kernels[1] == {0}
    assert [len(D) for D in part.daisies] == [0, 3, 0]
    assert check_partition(part)["ok"]
    ov = petal_overlap_bound_check(part)
    assert ov["per_daisy"][1]["max_count"] == 1 and ov["ok"]


def test_disjoint_fixture():
    part = partition([[0, 1], [2, 3]], 4, 2)
    assert all(not K for K in part.kernels)
    assert [len(D) for D in part.daisies] == [0, 0, 2]


def test_empty_collection():
    part = partition([], 5, 2)
    assert all(not D for D in part.daisies) and all(not K for K in part.kernels)
    assert check_partition(part)["ok"]


def test_wrong_set_size():
    with pytest.raises(StructuralError):
        partition([[0, 1, 2]], 4, 2)
    with pytest.raises(StructuralError):
        partition([[0, 0]], 4, 2)


def test_matches_reference_on_corpus():
    for sets, n, q in collection_corpus(count=60, seed=99):
        part = partition(sets, n, q)
        D, K, deg = ref_partition(sets, n, q)
        assert [list(d) for d in part.daisies] == D
        assert [set(k) for k in part.kernels] == K
        assert ref_hdaisy_ok(sets, D, K, deg, n, q)
        assert check_partition(part)["ok"]


def test_json_round_trip():
    sets, n, q = random_collection(np.random.default_rng(1), n=20, q=3, size=200)
    part = partition(sets, n, q)
    again = DaisyPartition.from_json(part.to_json())
    assert again.daisies == part.daisies and again.kernels == part.kernels


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_adding_a_copy_is_monotone(seed):
    rng = np.random.default_rng(seed)
    sets, n, q = random_collection(rng, size=int(rng.integers(1, 300)))
    before = partition(sets, n, q)
    after = partition(sets + [sets[int(rng.integers(len(sets)))]], n, q)
    assert all(a <= b for a, b in zip(before.kernels, after.kernels))


def test_overlap_simple_daisy():
    part = partition([[0, 1], [0, 2], [0, 3], [0, 4]], 16, 2)
    assert petal_overlap_bound_check(part)["ok"]


def test_overlap_against_direct_count():
    for sets, n, q in collection_corpus(count=30, seed=5):
        part = partition(sets, n, q)
        rep = petal_overlap_bound_check(part)
        for j in range(1, q + 1):
            K = part.kernels[j]
            petals = [set(part.sets[i]) - K for i in part.daisies[j]]
            direct = max((sum(1 for p2 in petals if p & p2) for p in petals), default=0)
            assert rep["per_daisy"][j]["max_count"] == direct
            assert direct <= 2 * h_bound(j, n, q) - 1 + 1e-9


def ref_is_equitable(adj, color, k):
    proper = all(color[u] != color[v] for u in range(len(adj)) for v in adj[u])
    sizes = [color.count(c) for c in range(k)]
    return proper and max(sizes) - min(sizes) <= 1


def test_coloring_examples():
    c = equitable_color([set() for _ in range(5)], 2)
    assert sorted(check_coloring([set()] * 5, c, 2)["sizes"]) == [2, 3]
    cycle = [{(i - 1) % 6, (i + 1) % 6} for i in range(6)]
    c = equitable_color(cycle, 3)
    assert ref_is_equitable(cycle, c, 3) and sorted(c.count(x) for x in range(3)) == [2, 2, 2]
    star = [{1, 2, 3}, {0}, {0}, {0}]
    assert sorted(equitable_color(star, 4)) == [0, 1, 2, 3]


def test_coloring_precondition():
    with pytest.raises(PreconditionError):
        equitable_color([{1}, {0}], 1)


def test_six_cycle_feasibility_exhaustive():
    cycle = [{(i - 1) % 6, (i + 1) % 6} for i in range(6)]
    feasible = [c for c in itertools.product(range(3), repeat=6) if ref_is_equitable(cycle, list(c), 3)]
    assert feasible
    assert ref_is_equitable(cycle, equitable_color(cycle, 3), 3)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_coloring_property(seed):
    rng = np.random.default_rng(seed)
    adj = random_bounded_graph(rng, m=int(rng.integers(1, 80)))
    k = max((len(a) for a in adj), default=0) + 1 + int(rng.integers(0, 3))
    assert ref_is_equitable(adj, equitable_color(adj, k, seed=seed % 1000), k)


def test_simplify_examples():
    fam = simplify([[0, 1], [0, 2], [0, 3]], {0}, 0)
    assert fam.sizes() == [3]
    fam = simplify([[0, 1], [0, 1], [2, 1]], {0, 2}, 2)
    assert sorted(fam.sizes()) == [1, 1, 1]
    with pytest.raises(PreconditionError):
        simplify([[0, 1], [0, 1], [2, 1]], {0, 2}, 1)


def test_simplify_twelve_sets_cycle():
    # petals {i, i+1 mod 12} form a 12-cycle in the intersection graph
    daisy = [[0, 1 + i, 1 + (i + 1) % 12] for i in range(12)]
    fam = simplify(daisy, {0}, 2)
    assert sorted(fam.sizes()) == [4, 4, 4]
    for cls in fam.classes:
        petals = [set(daisy[i]) - {0} for i in cls]
        assert all(not (a & b) for a, b in itertools.combinations(petals, 2))
    assert math.fsum(fam.sizes()) == 12
