import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import words
from robustlocal import transforms
from robustlocal.core import Alphabet, LocalAlgorithm, eval_tree, leaf, node, normalize
from robustlocal.oracle import check_robustness, exact_output_dist
from robustlocal.transforms import (
    AmplifiedAlgorithm,
    DerandomizationError,
    derandomized_support,
    error_reduce,
    majority,
    majority_distribution,
    nearest_int,
    prepare,
    prepared_query_complexity,
    prepared_sigma,
    prepared_support,
    randomness_reduce,
    repetition_count,
)
from robustlocal.zoo import get_instance


def noisy_dictator(n=4, good=7, bad=3, sigma=Fraction(1, 3)):
    """Outputs x0 with probability good/(good+bad), else its complement."""
    t_good = node(0, leaf(0), leaf(1))
    t_bad = node(0, leaf(1), leaf(0))
    return LocalAlgorithm(n=n, alphabet=Alphabet(2), trees={0: [t_good] * good + [t_bad] * bad}, q=1,
                          sigma=sigma, rho0=0, rho1=0)


def test_repetition_formula_values():
    assert repetition_count(Fraction(1, 3), Fraction(1, 8)) == 972
    assert repetition_count(Fraction(1, 3), Fraction(1, 2)) == 324


def test_support_formula_values():
    assert derandomized_support(8, 2, Fraction(1, 16)) == 266
    assert abs(derandomized_support(8, 2, Fraction(1, 16)) - 3 * 8 * math.log(2) * 16) <= 0.5
    with pytest.raises(ValueError):
        derandomized_support(8, 2, 0)


def test_prepared_formulas():
    assert prepared_sigma(2) == Fraction(1, 16)
    value = 48 * 2 * 16 * math.log(2)
    assert prepared_support(2, 16, 2) == nearest_int(value) == 1065
    assert abs(prepared_support(2, 16, 2) - value) <= 0.5
    # the combined support 6 n ln|S| / sigma agrees with 48 q n ln|S|
    for q, n, s in [(2, 16, 2), (3, 10, 3), (8, 8, 2)]:
        assert prepared_support(q, n, s) == nearest_int(6 * n * math.log(s) / float(prepared_sigma(q)))


def test_majority_ties():
    assert majority((2, 2, 0)) == 0
    assert majority((0, 2, 2)) == 1
    assert majority((1, 1, 1)) == 0
    assert majority((0, 0, 3)) == 2


def test_majority_distribution_against_enumeration():
    p = (Fraction(1, 2), Fraction(1, 3), Fraction(1, 6))
    for t in range(1, 7):
        brute = [Fraction(0)] * 3
        for draw in itertools.product(range(3), repeat=t):
            w = Fraction(1)
            for a in draw:
                w *= p[a]
            brute[majority([draw.count(a) for a in range(3)])] += w
        assert majority_distribution(p, t, exact=True) == brute
        assert np.allclose(majority_distribution(p, t, exact=False), [float(v) for v in brute])


def test_error_reduce_truncated_exhaustive():
    alg = noisy_dictator()
    amp = error_reduce(alg, Fraction(1, 8), t=5)
    table = np.array([[eval_tree(tr, x)[1] for x in words(4)] for tr in alg.trees_for(0)])
    M = len(alg.trees_for(0))
    for xi, x in enumerate(words(4)):
        brute = [0, 0, 0]
        for idx in itertools.product(range(M), repeat=5):
            outs = table[list(idx), xi]
            brute[majority([int((outs == a).sum()) for a in range(3)])] += 1
        total = M**5
        exact = amp.output_distribution(0, x)
        assert exact == [Fraction(c, total) for c in brute]
        assert exact_output_dist(alg, 0, x)[1 - x[0]] == Fraction(3, 10)


def test_error_reduce_formula_reaches_target():
    alg = noisy_dictator()
    amp = error_reduce(alg, Fraction(1, 8))
    assert isinstance(amp, AmplifiedAlgorithm) and amp.t == 972
    assert amp.rho0 == alg.rho0 and amp.rho1 == alg.rho1
    for x in words(4):
        dist = amp.output_distribution(0, x)
        assert 1 - dist[x[0]] <= 1 / 8


def test_error_reduce_noop_and_bad_sigma():
    alg = noisy_dictator()
    assert error_reduce(alg, Fraction(1, 2)) is alg
    with pytest.raises(ValueError):
        error_reduce(noisy_dictator(sigma=Fraction(1, 2)), Fraction(1, 8))


def test_amplified_run_matches_distribution():
    amp = error_reduce(noisy_dictator(), Fraction(1, 8), t=9)
    x = (1, 0, 0, 0)
    runs = [amp.run(0, x, seed) for seed in range(2000)]
    p1 = float(amp.output_distribution(0, x)[1])
    assert abs(runs.count(1) / 2000 - p1) < 0.04


def test_randomness_reduce_identical_trees():
    t = node(0, leaf(0), leaf(1))
    alg = LocalAlgorithm(n=4, alphabet=Alphabet(2), trees={0: [t] * 5}, q=1, sigma=Fraction(1, 8), rho0=0, rho1=0)
    out, info = randomness_reduce(alg, seed=0)
    assert info["attempts"] == {"0": 1}
    assert out.support_size(0) == derandomized_support(4, 2, Fraction(1, 8))
    assert out.sigma == Fraction(1, 4)


def test_randomness_reduce_zoo_exhaustive():
    inst = get_instance("repetition_n6")
    alg = inst.algorithm
    out, info = randomness_reduce(alg, seed=3)
    assert info["scope"] == "exhaustive" and info["scope_size"] == 64
    assert out.support_size(0) == derandomized_support(6, 2, alg.sigma)
    source = set(alg.trees_for(0))
    assert all(t in source for t in out.trees_for(0))
    for x in words(6):
        before = exact_output_dist(alg, 0, x)
        b, pb = max(before.items(), key=lambda kv: kv[1])
        if pb >= 1 - alg.sigma:
            assert exact_output_dist(out, 0, x).get(b, 0) >= 1 - 2 * alg.sigma


def test_randomness_reduce_failure_carries_worst_input(monkeypatch):
    alg = noisy_dictator(sigma=Fraction(3, 10))
    monkeypatch.setattr(transforms, "_verify", lambda outputs, strict, relaxed, sigma: (False, Fraction(1, 2), 5))
    with pytest.raises(DerandomizationError) as exc:
        randomness_reduce(alg, seed=0, max_attempts=3)
    assert exc.value.worst_input == words(4)[5]
    with pytest.raises(ValueError):
        randomness_reduce(alg, seed=0, max_attempts=0)


def test_prepare_constant_algorithm():
    alg = LocalAlgorithm(n=4, alphabet=Alphabet(2), trees={0: [leaf(1)]}, q=1, sigma=Fraction(1, 3), rho0=0, rho1=0)
    prepared, report = prepare(alg, seed=0)
    assert report.achieved_sigma == prepared_sigma(report.query_complexity)
    assert report.support_size == prepared_support(report.query_complexity, 4, 2)
    for x in words(4):
        assert exact_output_dist(prepared, 0, x) == {1: 1}


def test_prepare_q2_n16_support():
    # deterministic 2-query algorithm with sigma 1/32 needs no amplification, so q' = 2
    t = node(0, node(1, leaf(0), leaf(1)), node(1, leaf(1), leaf(0)))
    alg = LocalAlgorithm(n=16, alphabet=Alphabet(2), trees={0: [t]}, q=2, sigma=Fraction(1, 32), rho0=0, rho1=0)
    assert prepared_query_complexity(alg) == (2, 1)
    prepared, report = prepare(alg, seed=0)
    assert report.achieved_sigma == Fraction(1, 16)
    assert report.support_size == prepared.support_size(0) == 1065
    assert report.error_reduction_skipped


def test_prepare_preserves_function_and_radii():
    inst = get_instance("all_equal_n4")
    prepared, report = prepare(inst.algorithm, seed=0)
    assert (prepared.rho0, prepared.rho1) == (inst.algorithm.rho0, inst.algorithm.rho1)
    assert report.achieved_sigma == Fraction(1, 8 * report.query_complexity)
    for x, b in inst.domain(0):
        assert exact_output_dist(prepared, 0, x).get(b, 0) >= 1 - prepared.sigma
    assert check_robustness(prepared, inst.spec).ok


@pytest.mark.slow
def test_prepare_query_complexity_saturates_at_desk_scale():
    """At n = 8 the amplified query count exceeds n, so q' = n and every coordinate joins K_0."""
    from robustlocal.sampler import preprocess

    prepared, report = prepare(get_instance("all_equal_n8").algorithm, seed=0)
    assert report.query_complexity == 8 and report.repetitions == 2268
    assert report.support_size == prepared_support(8, 8, 2) == 2129
    pre = preprocess(prepared)
    assert len(pre.kernels(0)[0]) == 8
    assert normalize(prepared).q == 8
