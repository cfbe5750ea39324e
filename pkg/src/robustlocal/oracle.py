"""Brute-force oracles: exact output distributions, robustness certification,
the volume lemma, and confidence intervals for Monte Carlo checks."""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from .core import (
    BOT,
    OUTSIDE,
    LocalAlgorithm,
    ProblemSpec,
    all_words,
    eval_tree,
    induced_distribution,
    output_table,
    word_str,
)
from .daisy import PreconditionError
from .transforms import AmplifiedAlgorithm

DEFAULT_BUDGET = 2**16


def exact_output_dist(alg, z, x: Sequence[int]) -> dict:
    """Output distribution of ``alg`` on (z, x) as exact fractions.

    Amplified algorithms with many repetitions fall back to floating point.
    """
    if isinstance(alg, AmplifiedAlgorithm):
        probs = alg.output_distribution(z, x)
        return {b: p for b, p in zip((0, 1, BOT), probs) if p}
    trees = alg.trees_for(z)
    counts = Counter(eval_tree(t, x)[1] for t in trees)
    return {b: Fraction(c, len(trees)) for b, c in sorted(counts.items())}


def output_counts(alg: LocalAlgorithm, z, X: np.ndarray) -> np.ndarray:
    """Counts of each output symbol per row of X, shape (|X|, 3)."""
    table = output_table(alg, z, X)
    return np.stack([(table == a).sum(axis=0) for a in range(3)], axis=1)


def brute_force_label(spec: ProblemSpec, z, x: Sequence[int]) -> int:
    return spec.membership(z, tuple(int(a) for a in x))


def wilson_interval(successes: int, trials: int, alpha: float = 0.01) -> tuple[float, float]:
    lo, hi = proportion_confint(successes, trials, alpha=alpha, method="wilson")
    return float(lo), float(hi)


@dataclass
class RobustnessReport:
    exhaustive: bool
    sigma: Fraction
    declared: dict
    certified_abs: dict
    certified: dict
    worst: dict = field(default_factory=dict)
    counterexample: dict | None = None
    points_checked: int = 0
    ok: bool = True

    def to_json(self) -> dict:
        return {
            "exhaustive": self.exhaustive,
            "sigma": str(self.sigma),
            "declared": {str(b): str(r) for b, r in self.declared.items()},
            "certified_abs": {str(b): r for b, r in self.certified_abs.items()},
            "certified": {str(b): str(r) for b, r in self.certified.items()},
            "worst": self.worst,
            "counterexample": self.counterexample,
            "points_checked": self.points_checked,
            "ok": self.ok,
        }


def _domain(spec: ProblemSpec, z, X: np.ndarray) -> np.ndarray:
    return np.fromiter((spec.membership(z, tuple(int(a) for a in row)) for row in X), dtype=np.int64, count=len(X))


def _good(counts: np.ndarray, b: int, sigma: Fraction, relaxed: bool) -> np.ndarray:
    m = counts.sum(axis=1)
    mass = counts[:, b] + (counts[:, BOT] if relaxed else 0)
    # mass / m >= 1 - sigma, in integers
    return mass * sigma.denominator >= (sigma.denominator - sigma.numerator) * m


def check_robustness(
    alg: LocalAlgorithm,
    spec: ProblemSpec | None = None,
    rho0=None,
    rho1=None,
    budget: int | None = None,
    samples: int = 2000,
    seed: int = 0,
) -> RobustnessReport:
    """Certify Pr[M^w(z) = f(z,x)] >= 1 - sigma throughout rho_b-balls.

    Radii are absolute: floor(rho_b n) changed coordinates.  For relaxed
    algorithms the mass on {b, BOT} is checked inside the ball and the mass
    on b alone at valid points.  When |Sigma|^n exceeds the budget, random
    words stand in for exhaustive enumeration and the report says so.
    """
    spec = spec or alg.spec
    if spec is None:
        raise ValueError("a problem spec is needed to certify robustness")
    rho = {0: Fraction(alg.rho0 if rho0 is None else rho0), 1: Fraction(alg.rho1 if rho1 is None else rho1)}
    n, s, sigma = alg.n, alg.alphabet.size, alg.sigma
    budget = DEFAULT_BUDGET if budget is None else budget
    exhaustive = s**n <= budget
    if exhaustive:
        X = all_words(n, s)
    else:
        rng = np.random.default_rng(seed)
        X = np.unique(rng.integers(s, size=(samples, n)).astype(np.uint8), axis=0)
    radius = {b: math.floor(rho[b] * n) for b in (0, 1)}
    certified_abs = {0: n, 1: n}
    worst: dict = {}
    counterexample = None
    points = 0
    for z in alg.zs:
        counts = output_counts(alg, z, X)
        labels = _domain(spec, z, X)
        for b in (0, 1):
            good = _good(counts, b, sigma, alg.relaxed)
            mass = counts[:, b] + (counts[:, BOT] if alg.relaxed else 0)
            prob = mass / counts.sum(axis=1)
            bad_rows = X[~good]
            for ci in np.flatnonzero(labels == b):
                points += 1
                center = X[ci]
                dist = (X != center).sum(axis=1)
                inside = dist <= radius[b]
                wi = int(np.argmin(np.where(inside, prob, np.inf)))
                key = f"z={z}:{word_str(center)}"
                worst[key] = float(prob[wi])
                if len(bad_rows):
                    dmin = int((bad_rows != center).sum(axis=1).min())
                    certified_abs[b] = min(certified_abs[b], dmin - 1)
                if counterexample is None and not good[wi]:
                    counterexample = {
                        "z": z, "center": word_str(center), "word": word_str(X[wi]),
                        "distance": int(dist[wi]), "label": b, "probability": float(prob[wi]),
                    }
                if alg.relaxed and spec.valid is not None and spec.valid(z, tuple(int(a) for a in center)):
                    exact = counts[ci, b] * sigma.denominator >= (sigma.denominator - sigma.numerator) * counts[ci].sum()
                    if not exact:
                        certified_abs[b] = -1
                        if counterexample is None:
                            counterexample = {
                                "z": z, "center": word_str(center), "word": word_str(center), "distance": 0,
                                "label": b, "probability": float(counts[ci, b] / counts[ci].sum()), "valid_point": True,
                            }
    certified = {b: Fraction(max(certified_abs[b], 0), n) for b in (0, 1)}
    ok = counterexample is None and all(radius[b] <= certified_abs[b] for b in (0, 1))
    return RobustnessReport(
        exhaustive=exhaustive, sigma=sigma, declared=rho, certified_abs=certified_abs, certified=certified,
        worst=worst, counterexample=counterexample, points_checked=points, ok=ok,
    )


def ball(center: Sequence[int], r: int, alphabet_size: int):
    """All words within Hamming distance r of ``center``."""
    n = len(center)
    for d in range(r + 1):
        for pos in itertools.combinations(range(n), d):
            choices = [[a for a in range(alphabet_size) if a != center[i]] for i in pos]
            for syms in itertools.product(*choices):
                w = list(center)
                for i, a in zip(pos, syms):
                    w[i] = a
                yield tuple(w)


def _point_robust(alg, z, y, b, r) -> tuple[bool, tuple | None]:
    sigma = alg.sigma
    for w in ball(y, r, alg.alphabet.size):
        p = exact_output_dist(alg, z, w).get(b, Fraction(0))
        if alg.relaxed:
            p += exact_output_dist(alg, z, w).get(BOT, Fraction(0))
        if p < 1 - sigma:
            return False, w
    return True, None


def check_volume_lemma(
    alg: LocalAlgorithm,
    x: Sequence[int],
    y_witness: Sequence[int],
    z=None,
    spec: ProblemSpec | None = None,
    exhaustive_support: int = 12,
    coordinate_budget: int = 200_000,
    seed: int = 0,
) -> dict:
    """Heaviest sub-collection of supp(mu_x) covering fewer than rho n coordinates.

    The witness y must carry the other label and be robust at its radius.
    The maximum is found exactly when the support has at most 12 distinct
    sets (enumerating sub-collections) or when the number of coordinate
    subsets of the largest admissible size is within budget; otherwise a
    randomized greedy packing gives a heuristic lower estimate.
    """
    spec = spec or alg.spec
    if alg.relaxed:
        raise ValueError("the volume lemma check applies to standard (non-relaxed) algorithms")
    z = alg.zs[0] if z is None else z
    x = tuple(int(a) for a in x)
    y = tuple(int(a) for a in y_witness)
    fx, fy = spec.membership(z, x), spec.membership(z, y)
    if fx == OUTSIDE or fy == OUTSIDE or fx == fy:
        raise PreconditionError("x and the witness must be domain points with different labels")
    rho = alg.rho0 if fy == 0 else alg.rho1
    r = math.floor(rho * alg.n)
    robust, w = _point_robust(alg, z, y, fy, r)
    if not robust:
        raise PreconditionError(f"witness {word_str(y)} is not robust: {word_str(w)} breaks it")
    sets = induced_distribution(alg, x, z)
    total = len(sets)
    weights = Counter(frozenset(S) for S in sets)
    cap = rho * alg.n  # unions must have size < cap
    limit = 2 * alg.sigma
    methods: dict = {}
    support = list(weights)
    if len(support) <= exhaustive_support:
        best = 0
        for mask in range(1 << len(support)):
            chosen = [support[i] for i in range(len(support)) if mask >> i & 1]
            union = frozenset().union(*chosen)
            if len(union) < cap:
                best = max(best, sum(weights[S] for S in chosen))
        methods["support_subsets"] = Fraction(best, total)
    size = max(0, math.ceil(cap) - 1)
    size = min(size, alg.n)
    if math.comb(alg.n, size) <= coordinate_budget:
        best = 0
        for U in itertools.combinations(range(alg.n), size):
            Us = frozenset(U)
            best = max(best, sum(c for S, c in weights.items() if S <= Us))
        methods["coordinate_subsets"] = Fraction(best, total)
    methods["greedy"] = _greedy_packing(weights, cap, total, seed)
    exact = [v for k, v in methods.items() if k != "greedy"]
    value = max(exact) if exact else methods["greedy"]
    agree = len(set(exact)) <= 1
    return {
        "x": word_str(x),
        "witness": word_str(y),
        "rho": str(rho),
        "cap": str(cap),
        "max_weight": str(value),
        "bound": str(limit),
        "exhaustive": bool(exact),
        "methods": {k: str(v) for k, v in methods.items()},
        "methods_agree": agree,
        "ok": value <= limit and agree,
    }


def _greedy_packing(weights: Counter, cap, total: int, seed: int, rounds: int = 32) -> Fraction:
    rng = np.random.default_rng(seed)
    items = sorted(weights.items(), key=lambda kv: (-kv[1], sorted(kv[0])))
    best = 0
    for r in range(rounds):
        order = items if r == 0 else [items[i] for i in rng.permutation(len(items))]
        union: frozenset = frozenset()
        w = 0
        for S, c in order:
            if len(union | S) < cap:
                union |= S
                w += c
        best = max(best, w)
    return Fraction(best, total)


def distributions_equal(a: LocalAlgorithm, b: LocalAlgorithm) -> bool:
    """Exact equality of output distributions on every (z, x)."""
    X = all_words(a.n, a.alphabet.size)
    for z in a.zs:
        ca, cb = output_counts(a, z, X), output_counts(b, z, X)
        ma, mb = ca.sum(axis=1, keepdims=True), cb.sum(axis=1, keepdims=True)
        if not np.array_equal(ca * mb, cb * ma):
            return False
    return True


def robust_witnesses(alg: LocalAlgorithm, spec: ProblemSpec, z, label: int, limit: int | None = None) -> list[tuple]:
    """Domain points with the given label that are robust at their radius."""
    rho = alg.rho0 if label == 0 else alg.rho1
    r = math.floor(rho * alg.n)
    out = []
    for row in all_words(alg.n, alg.alphabet.size):
        y = tuple(int(a) for a in row)
        if spec.membership(z, y) == label and _point_robust(alg, z, y, label, r)[0]:
            out.append(y)
            if limit is not None and len(out) >= limit:
                break
    return out


def volume_lemma_suite(alg: LocalAlgorithm, spec: ProblemSpec | None = None, witnesses_per_label: int = 1) -> dict:
    """Run check_volume_lemma for every domain point against robust opposite-label witnesses."""
    spec = spec or alg.spec
    X = all_words(alg.n, alg.alphabet.size)
    checks = []
    for z in alg.zs:
        labels = _domain(spec, z, X)
        for b in (0, 1):
            ws = robust_witnesses(alg, spec, z, 1 - b, limit=witnesses_per_label)
            for y in ws:
                for xi in np.flatnonzero(labels == b):
                    res = check_volume_lemma(alg, X[xi], y, z=z, spec=spec)
                    checks.append({"z": z, **{k: res[k] for k in ("x", "witness", "max_weight", "bound",
                                                                  "exhaustive", "ok")}})
    return {"ok": all(c["ok"] for c in checks), "checked": len(checks),
            "violations": [c for c in checks if not c["ok"]]}
