"""Error reduction, randomness reduction and their composition."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import (
    BOT,
    BudgetError,
    Leaf,
    LocalAlgorithm,
    Node,
    all_words,
    as_fraction,
    eval_tree,
    normalize,
    output_table,
)

EXACT_T_MAX = 64
SCOPE_LIMIT = 2**16
MATERIALIZE_LIMIT = 4_000_000


class DerandomizationError(RuntimeError):
    def __init__(self, message: str, worst_input=None, z=None, error=None):
        super().__init__(message)
        self.worst_input = worst_input
        self.z = z
        self.error = error


def nearest_int(x: float) -> int:
    return int(math.floor(x + 0.5))


def repetition_count(sigma, target_sigma) -> int:
    """t = 108 log2(1/sigma') / sigma, rounded to the nearest integer."""
    return nearest_int(108 * math.log2(1 / float(target_sigma)) / float(sigma))


def derandomized_support(n: int, alphabet_size: int, sigma) -> int:
    """3 n ln|Sigma| / sigma, rounded to the nearest integer."""
    if sigma <= 0:
        raise ValueError("the support formula needs sigma > 0")
    return nearest_int(3 * n * math.log(alphabet_size) / float(sigma))


def prepared_sigma(q: int) -> Fraction:
    return Fraction(1, 8 * q)


def prepared_support(q: int, n: int, alphabet_size: int) -> int:
    return nearest_int(48 * q * n * math.log(alphabet_size))


def majority(counts: Sequence[int]) -> int:
    """Most frequent output symbol; ties go to the smallest of 0, 1, BOT."""
    best = 0
    for a in (1, BOT):
        if counts[a] > counts[best]:
            best = a
    return best


def majority_distribution(p: Sequence, t: int, exact: bool | None = None) -> list:
    """Distribution of the majority of t i.i.d. draws from p = (p0, p1, pbot)."""
    if exact is None:
        exact = t <= EXACT_T_MAX
    if exact:
        p = [as_fraction(v) for v in p]
        dp = {(0, 0): Fraction(1)}
        for _ in range(t):
            nxt: dict = {}
            for (c0, c1), w in dp.items():
                for a, pa in enumerate(p):
                    if pa == 0:
                        continue
                    key = (c0 + (a == 0), c1 + (a == 1))
                    nxt[key] = nxt.get(key, 0) + w * pa
            dp = nxt
        out = [Fraction(0)] * 3
        for (c0, c1), w in dp.items():
            out[majority((c0, c1, t - c0 - c1))] += w
        return out
    p = np.asarray([float(v) for v in p])
    lg = np.array([math.lgamma(i + 1) for i in range(t + 1)])
    c0, c1 = np.meshgrid(np.arange(t + 1), np.arange(t + 1), indexing="ij")
    c2 = t - c0 - c1
    ok = c2 >= 0
    c2 = np.where(ok, c2, 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.log(p)
        terms = np.zeros(c0.shape)
        for c, lp in ((c0, logp[0]), (c1, logp[1]), (c2, logp[2])):
            terms = terms + np.where(c > 0, c * lp, 0.0)
    logpmf = lg[t] - lg[c0] - lg[c1] - lg[c2] + terms
    pmf = np.where(ok, np.exp(logpmf), 0.0)
    win = np.where((c0 >= c1) & (c0 >= c2), 0, np.where(c1 >= c2, 1, BOT))
    return [float(pmf[ok & (win == a)].sum()) for a in range(3)]


@dataclass(frozen=True)
class AmplifiedAlgorithm:
    """Majority vote over t independent runs of ``base`` (kept lazy)."""

    base: LocalAlgorithm
    t: int
    sigma: Fraction

    @property
    def n(self):
        return self.base.n

    @property
    def alphabet(self):
        return self.base.alphabet

    @property
    def q(self) -> int:
        # repeated coordinates collapse, so no branch exceeds n distinct queries
        return min(self.base.n, self.t * self.base.q)

    @property
    def q_uncapped(self) -> int:
        return self.t * self.base.q

    @property
    def rho0(self):
        return self.base.rho0

    @property
    def rho1(self):
        return self.base.rho1

    @property
    def relaxed(self):
        return self.base.relaxed

    @property
    def spec(self):
        return self.base.spec

    @property
    def zs(self):
        return self.base.zs

    def output_distribution(self, z, x, exact: bool | None = None) -> list:
        trees = self.base.trees_for(z)
        counts = [0, 0, 0]
        for tr in trees:
            counts[eval_tree(tr, x)[1]] += 1
        m = len(trees)
        return majority_distribution([Fraction(c, m) for c in counts], self.t, exact)

    def run(self, z, x, seed) -> int:
        trees = self.base.trees_for(z)
        rng = np.random.default_rng(seed)
        counts = [0, 0, 0]
        for i in rng.integers(len(trees), size=self.t):
            counts[eval_tree(trees[int(i)], x)[1]] += 1
        return majority(counts)


def error_reduce(alg: LocalAlgorithm, target_sigma, t: int | None = None):
    """Amplify by majority over t = 108 log2(1/target)/sigma runs.

    Returns ``alg`` itself when its error rate is already at most the target.
    ``t`` may be given explicitly to study truncated repetition counts.
    """
    target = as_fraction(target_sigma)
    if alg.sigma > Fraction(1, 3):
        raise ValueError(f"error reduction needs sigma <= 1/3, got {alg.sigma}")
    if target <= 0:
        raise ValueError("target sigma must be positive")
    if t is None:
        if target >= alg.sigma:
            return alg
        t = repetition_count(alg.sigma, target)
    return AmplifiedAlgorithm(alg, int(t), target)


def _source_distributions(source, z, X: np.ndarray):
    """Per-word output distribution of the source (rows of X) as floats."""
    base = source.base if isinstance(source, AmplifiedAlgorithm) else source
    table = output_table(base, z, X)
    m = table.shape[0]
    counts = np.stack([(table == a).sum(axis=0) for a in range(3)], axis=1)
    if not isinstance(source, AmplifiedAlgorithm):
        return table, counts / m
    cache: dict = {}
    probs = np.empty(counts.shape)
    for w, row in enumerate(map(tuple, counts)):
        if row not in cache:
            cache[row] = majority_distribution([Fraction(c, m) for c in row], source.t)
        probs[w] = [float(v) for v in cache[row]]
    return table, probs


def _targets(probs: np.ndarray, sigma: float):
    """Per-word majority symbol (or -1) and relaxed target (symbol or -1)."""
    tol = 1e-12
    strict = np.full(len(probs), -1)
    relaxed = np.full(len(probs), -1)
    for a in (0, 1, BOT):
        strict[probs[:, a] >= 1 - sigma - tol] = a
    for a in (0, 1):
        relaxed[probs[:, a] + probs[:, BOT] >= 1 - sigma - tol] = a
    both = (probs[:, 0] + probs[:, BOT] >= 1 - sigma - tol) & (probs[:, 1] + probs[:, BOT] >= 1 - sigma - tol)
    relaxed[both] = -1
    return strict, relaxed


def _composite_outputs(hist: np.ndarray, table: np.ndarray) -> np.ndarray:
    onehots = [(table == a).astype(np.int64) for a in range(3)]
    c0, c1, c2 = (hist @ oh for oh in onehots)
    return np.where((c0 >= c1) & (c0 >= c2), 0, np.where(c1 >= c2, 1, BOT)).astype(np.int8)


def _verify(outputs: np.ndarray, strict, relaxed, sigma: Fraction):
    """Worst per-word error of a candidate (rows: sampled trees, columns: words)."""
    R = outputs.shape[0]
    worst_err, worst_word = Fraction(0), None
    limit = 2 * sigma
    sel = np.flatnonzero(strict >= 0)
    if sel.size:
        wrong = (outputs[:, sel] != strict[sel]).sum(axis=0)
        i = int(np.argmax(wrong))
        worst_err, worst_word = Fraction(int(wrong[i]), R), int(sel[i])
    sel = np.flatnonzero(relaxed >= 0)
    if sel.size:
        out = outputs[:, sel]
        wrong = ((out != relaxed[sel]) & (out != BOT)).sum(axis=0)
        i = int(np.argmax(wrong))
        if Fraction(int(wrong[i]), R) > worst_err:
            worst_err, worst_word = Fraction(int(wrong[i]), R), int(sel[i])
    return worst_err <= limit, worst_err, worst_word


def randomness_reduce(
    alg,
    seed,
    sigma=None,
    witnesses: Sequence[Sequence[int]] | None = None,
    max_attempts: int = 20,
    scope_limit: int = SCOPE_LIMIT,
):
    """Sample-and-verify a small multi-collection per z.

    Draws ``3 n ln|Sigma| / sigma`` random strings of ``alg`` uniformly and
    keeps the draw once every verified word with a (1 - sigma)-majority
    output keeps that output with probability at least 1 - 2 sigma.
    Returns ``(algorithm, info)``.
    """
    sigma = as_fraction(alg.sigma if sigma is None else sigma)
    if max_attempts < 1:
        raise ValueError("max_attempts must be at least 1")
    if sigma < alg.sigma:
        raise ValueError("the verification sigma cannot be below the algorithm's error rate")
    n, s = alg.n, alg.alphabet.size
    support = derandomized_support(n, s, sigma)
    if s**n <= scope_limit:
        X = all_words(n, s)
        scope = "exhaustive"
    elif witnesses is not None:
        X = np.asarray(witnesses, dtype=np.uint8).reshape(-1, n)
        scope = "witnesses"
    else:
        raise BudgetError(f"|Sigma|^n = {s**n} exceeds the verification scope; pass witnesses")
    amplified = isinstance(alg, AmplifiedAlgorithm)
    base = alg.base if amplified else alg
    new_trees: dict = {}
    attempts_used: dict = {}
    worst: dict = {}
    for zi, z in enumerate(alg.zs):
        table, probs = _source_distributions(alg, z, X)
        strict, relaxed = _targets(probs, float(sigma))
        base_trees = base.trees_for(z)
        M = len(base_trees)
        found = None
        bad = None
        for attempt in range(max_attempts):
            rng = np.random.default_rng([*_seed_entropy(seed), zi, attempt])
            if amplified:
                draws = rng.integers(M, size=(support, alg.t))
                offsets = (np.arange(support)[:, None] * M + draws).ravel()
                hist = np.bincount(offsets, minlength=support * M).reshape(support, M)
                outputs = _composite_outputs(hist, table)
                candidate = hist
            else:
                idx = np.sort(rng.integers(M, size=support))
                outputs = table[idx]
                candidate = idx
            ok, err, word = _verify(outputs, strict, relaxed, sigma)
            if ok:
                found = candidate
                attempts_used[z] = attempt + 1
                worst[z] = err
                break
            if bad is None or err > bad[0]:
                bad = (err, word)
        if found is None:
            err, word = bad
            raise DerandomizationError(
                f"no verified multi-sample for z={z!r} after {max_attempts} attempts",
                worst_input=tuple(int(a) for a in X[word]) if word is not None else None,
                z=z,
                error=err,
            )
        if amplified:
            new_trees[z] = materialize_composites(base_trees, found, n, s)
        else:
            new_trees[z] = [base_trees[int(i)] for i in found]
    q = alg.q
    out = LocalAlgorithm(
        n=n, alphabet=alg.alphabet, trees=new_trees, q=q, sigma=2 * sigma, rho0=alg.rho0,
        rho1=alg.rho1, spec=alg.spec, relaxed=alg.relaxed, name=getattr(base, "name", ""),
    )
    info = {
        "support_size": support,
        "attempts": {str(z): a for z, a in attempts_used.items()},
        "worst_error": {str(z): str(e) for z, e in worst.items()},
        "scope": scope,
        "scope_size": int(len(X)),
    }
    return out, info


def _seed_entropy(seed) -> list[int]:
    if isinstance(seed, (list, tuple)):
        return [int(v) for v in seed]
    return [int(seed)]


_LEAVES = {b: Leaf(b) for b in (0, 1, BOT)}


def materialize_composites(base_trees: Sequence, hist: np.ndarray, n: int, s: int) -> list:
    """Explicit decision trees for majority votes given base-tree histograms.

    Rows of ``hist`` count how often each base tree occurs in a composite.
    Composites over the same set of base trees share one query structure,
    so the structure is built once and only the leaf labels vary.
    """
    R, M = hist.shape
    present = hist > 0
    groups: dict = {}
    for r in range(R):
        groups.setdefault(tuple(np.flatnonzero(present[r])), []).append(r)
    intern: dict = {}
    out: list = [None] * R
    total = 0
    for members, rows in groups.items():
        template, leaves = _template([base_trees[i] for i in members], s)
        total += len(leaves) * len(rows)
        if total > MATERIALIZE_LIMIT:
            raise BudgetError("materializing the derandomized majority trees exceeds the size budget")
        labels = np.array(leaves, dtype=np.int64).reshape(len(leaves), len(members))
        counts = hist[np.ix_(rows, members)]
        c = [counts @ (labels == a).T.astype(np.int64) for a in range(3)]
        win = np.where((c[0] >= c[1]) & (c[0] >= c[2]), 0, np.where(c[1] >= c[2], 1, BOT))
        for k, r in enumerate(rows):
            out[r] = _instantiate(template, win[k], intern)
    return out


def _template(trees: Sequence, s: int):
    """Joint query structure of several trees; leaves carry each tree's label."""
    leaves: list = []

    def build(assign: dict):
        for t in trees:
            node = t
            while isinstance(node, Node) and node.coord in assign:
                node = node.children[assign[node.coord]]
            if isinstance(node, Node):
                c = node.coord
                kids = []
                for a in range(s):
                    assign[c] = a
                    kids.append(build(assign))
                del assign[c]
                return ("node", c, kids)
        labels = []
        for t in trees:
            node = t
            while isinstance(node, Node):
                node = node.children[assign[node.coord]]
            labels.append(node.label)
        leaves.append(labels)
        return ("leaf", len(leaves) - 1)

    return build({}), leaves


def _instantiate(template, labels, intern: dict):
    if template[0] == "leaf":
        return _LEAVES[int(labels[template[1]])]
    kids = tuple(_instantiate(k, labels, intern) for k in template[2])
    key = (template[1], tuple(id(k) for k in kids))
    node = intern.get(key)
    if node is None:
        node = intern[key] = Node(template[1], kids)
    return node


@dataclass(frozen=True)
class PreparationReport:
    achieved_sigma: Fraction
    support_size: int
    repetitions: int
    query_complexity: int
    error_reduction_skipped: bool
    attempts: dict
    scope: str
    scope_size: int

    def to_json(self) -> dict:
        d = asdict(self)
        d["achieved_sigma"] = str(self.achieved_sigma)
        return d


def prepared_query_complexity(alg: LocalAlgorithm) -> tuple[int, int]:
    """Fixed point q' = min(n, t q) with t the repetition count for 1/(16 q')."""
    q_prime = alg.q
    while True:
        target = Fraction(1, 16 * q_prime)
        t = 1 if alg.sigma <= target else repetition_count(alg.sigma, target)
        nxt = min(alg.n, t * alg.q) if t > 1 else alg.q
        if nxt == q_prime:
            return q_prime, t
        q_prime = nxt


def prepare(alg: LocalAlgorithm, seed=0, max_attempts: int = 20, witnesses=None):
    """Error reduction to 1/(16 q') followed by randomness reduction.

    The result has error rate 1/(8 q'), about 48 q' n ln|Sigma| trees per z,
    and is normalized to q' queries.
    """
    if alg.sigma > Fraction(1, 3):
        raise ValueError(f"prepare needs sigma <= 1/3, got {alg.sigma}")
    q_prime, t = prepared_query_complexity(alg)
    target = Fraction(1, 16 * q_prime)
    if t > 1:
        amplified = error_reduce(alg, target, t=t)
    else:
        amplified = alg
    reduced, info = randomness_reduce(amplified, seed, sigma=target, witnesses=witnesses, max_attempts=max_attempts)
    if reduced.q != q_prime:
        reduced = reduced.with_trees(reduced.trees, q=q_prime)
    prepared = normalize(reduced)
    report = PreparationReport(
        achieved_sigma=prepared.sigma,
        support_size=info["support_size"],
        repetitions=t,
        query_complexity=q_prime,
        error_reduction_skipped=t == 1,
        attempts=info["attempts"],
        scope=info["scope"],
        scope_size=info["scope_size"],
    )
    return prepared, report


__all__ = [
    "AmplifiedAlgorithm",
    "DerandomizationError",
    "PreparationReport",
    "derandomized_support",
    "error_reduce",
    "majority",
    "majority_distribution",
    "materialize_composites",
    "nearest_int",
    "prepare",
    "prepared_query_complexity",
    "prepared_sigma",
    "prepared_support",
    "randomness_reduce",
    "repetition_count",
]

