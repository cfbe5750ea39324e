"""Concrete robust local algorithms: testers, decoders, a relaxed decoder and
partial-tester unions compiled into a single sample-based tester."""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np

from .core import (
    BOT,
    OUTSIDE,
    Alphabet,
    Leaf,
    LocalAlgorithm,
    Node,
    ProblemSpec,
    StructuralError,
    all_words,
    as_fraction,
    word_index,
)
from .sampler import WordOracle, preprocess, repetition_seed, shared_sample_multirun
from .transforms import nearest_int

DEFAULT_SIGMA = Fraction(1, 3)
MAX_N = 16


class UnsupportedInstance(ValueError):
    pass


@dataclass(frozen=True)
class ZooInstance:
    name: str
    spec: ProblemSpec
    algorithm: LocalAlgorithm
    rho0: Fraction
    rho1: Fraction
    kind: str
    notes: str = ""
    distance: Callable[[Sequence[int]], int] | None = field(default=None, compare=False)
    encode: Callable[[Sequence[int]], tuple] | None = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return self.spec.n

    def domain(self, z=None) -> list[tuple[tuple, int]]:
        """Every domain point with its label at explicit input z."""
        z = self.spec.domain_z[0] if z is None else z
        table = _label_table(self.spec)
        X = all_words(self.spec.n, self.spec.alphabet.size)
        zi = self.spec.domain_z.index(z)
        return [(tuple(int(a) for a in X[i]), int(table[zi, i])) for i in np.flatnonzero(table[zi] != OUTSIDE)]


def _label_table(spec: ProblemSpec) -> np.ndarray:
    return spec.params["_table"]


def _table_spec(name, n, s, zs, table, params, valid_table=None) -> ProblemSpec:
    def membership(z, x):
        return int(table[zs.index(z), word_index(x, s)])

    valid = None
    if valid_table is not None:
        def valid(z, x):
            return bool(valid_table[word_index(x, s)])

    params = dict(params)
    params["_table"] = table
    return ProblemSpec(n=n, alphabet=Alphabet(s), domain_z=tuple(zs), membership=membership, valid=valid,
                       name=name, params=params)


def _check_scale(n: int, s: int) -> None:
    if s**n > 2**MAX_N:
        raise UnsupportedInstance(f"zoo instances are capped at |Sigma|^n <= 2^{MAX_N}")


def _equality_tree(i: int, j: int, s: int) -> Node:
    return Node(i, [Node(j, [Leaf(1 if b == a else 0) for b in range(s)]) for a in range(s)])


def _matching_pairs(prop: str, n: int, pairs) -> list[tuple[int, int]]:
    if prop == "repetition":
        if n % 2:
            raise UnsupportedInstance("the repetition-code tester needs even n")
        return [(i, i + 1) for i in range(0, n, 2)]
    pairs = [tuple(sorted(map(int, p))) for p in pairs]
    used = [c for p in pairs for c in p]
    if len(used) != len(set(used)) or any(not 0 <= c < n for c in used):
        raise UnsupportedInstance("matching pairs must be disjoint coordinates in range")
    return pairs


def make_tester_instance(
    prop: str,
    epsilon,
    n: int,
    alphabet_size: int = 2,
    pairs: Sequence[Sequence[int]] | None = None,
    far=None,
    sigma=DEFAULT_SIGMA,
    name: str | None = None,
) -> ZooInstance:
    """A tester cast as an (epsilon, 0)-robust local algorithm.

    f = 1 on the property and f = 0 on words farther than ``far`` (default
    2 epsilon) from it.  Built-in properties: ``all_equal`` (constant words,
    pair-equality tester), ``repetition`` (consecutive pairs equal) and
    ``matching`` (given disjoint pairs equal), the last two being small
    linear codes tested by checking one random pair, and ``everything``.
    """
    epsilon = as_fraction(epsilon)
    far = 2 * epsilon if far is None else as_fraction(far)
    s = alphabet_size
    _check_scale(n, s)
    X = all_words(n, s)
    if prop == "all_equal":
        counts = np.stack([(X == a).sum(axis=1) for a in range(s)], axis=1)
        dist = n - counts.max(axis=1)
        trees = [_equality_tree(i, j, s) for i, j in itertools.combinations(range(n), 2)]
        q = 2

        def distance(x):
            return n - max(list(x).count(a) for a in range(s))
    elif prop in ("repetition", "matching"):
        if prop == "matching" and pairs is None:
            raise UnsupportedInstance("the matching tester needs its pairs")
        mpairs = _matching_pairs(prop, n, pairs)
        dist = sum((X[:, a] != X[:, b]).astype(np.int64) for a, b in mpairs)
        trees = [_equality_tree(a, b, s) for a, b in mpairs]
        q = 2

        def distance(x):
            return sum(x[a] != x[b] for a, b in mpairs)
    elif prop == "everything":
        dist = np.zeros(len(X), dtype=np.int64)
        trees = [Leaf(1)]
        q = 1

        def distance(x):
            return 0
    else:
        raise UnsupportedInstance(f"no built-in tester for property {prop!r}")
    labels = np.where(dist == 0, 1, np.where(dist > far * n, 0, OUTSIDE)).astype(np.int8)
    params = {"kind": "tester", "property": prop, "epsilon": str(epsilon), "far": str(far), "n": n,
              "alphabet_size": s, "sigma": str(as_fraction(sigma))}
    if pairs is not None:
        params["pairs"] = [list(p) for p in pairs]
    name = name or f"{prop}_n{n}"
    spec = _table_spec(name, n, s, (0,), labels[None, :], params)
    alg = LocalAlgorithm(n=n, alphabet=Alphabet(s), trees={0: trees}, q=q, sigma=sigma, rho0=epsilon,
                         rho1=0, spec=spec, name=name)
    return ZooInstance(name, spec, alg, epsilon, Fraction(0), "tester",
                       notes=f"{prop} tester, far threshold {far}", distance=distance)


def hadamard_encode(message: Sequence[int]) -> tuple:
    k = len(message)
    return tuple(sum(message[i] for i in range(k) if a >> i & 1) % 2 for a in range(2**k))


def repetition3_encode(message: Sequence[int]) -> tuple:
    return tuple(int(b) for b in message for _ in range(3))


def _hadamard_trees(k: int, z: int) -> list:
    e = 1 << z
    return [Node(a, [Node(a | e, [Leaf(0), Leaf(1)]), Node(a | e, [Leaf(1), Leaf(0)])])
            for a in range(2**k) if not a & e]


def _majority3_tree(block: Sequence[int]) -> Node:
    c0, c1, c2 = block

    def third(a, b):
        return Node(c2, [Leaf(int(a + b + c >= 2)) for c in (0, 1)])

    return Node(c0, [Node(c1, [third(a, b) for b in (0, 1)]) for a in (0, 1)])


def _consistency_tree(block: Sequence[int]) -> Node:
    c0, c1, c2 = block

    def after(a):
        return Node(c1, [Node(c2, [Leaf(a if c == a else BOT) for c in (0, 1)]) if b == a else Leaf(BOT)
                         for b in (0, 1)])

    return Node(c0, [after(a) for a in (0, 1)])


def _code_table(codewords: np.ndarray, messages: np.ndarray, n: int, radius: int):
    X = all_words(n, 2)
    dist = np.stack([(X != c).sum(axis=1) for c in codewords], axis=1)
    nearest = dist.argmin(axis=1)
    dmin = dist.min(axis=1)
    inside = dmin <= radius
    k = messages.shape[1]
    table = np.full((k, len(X)), OUTSIDE, dtype=np.int8)
    for z in range(k):
        table[z, inside] = messages[nearest[inside], z]
    return table, dmin


def make_decoder_instance(code: str, delta, k: int, sigma=DEFAULT_SIGMA, name: str | None = None) -> ZooInstance:
    """A local decoder cast as a (delta/2, delta/2)-robust local algorithm.

    f(z, w) = x_z for every w within delta/2 of the codeword C(x).
    ``hadamard`` (k <= 4) uses the 2-query decoder w_a + w_(a+e_z) over
    the 2^(k-1) pairs; ``repetition3`` (k <= 5) takes the majority of the
    three copies of bit z.
    """
    delta = as_fraction(delta)
    if code == "hadamard":
        if not 1 <= k <= 4:
            raise UnsupportedInstance("the Hadamard toy code supports k <= 4")
        n, encode, q = 2**k, hadamard_encode, 2
        trees = {z: _hadamard_trees(k, z) for z in range(k)}
    elif code == "repetition3":
        if not 1 <= k <= 5:
            raise UnsupportedInstance("the repetition toy code supports k <= 5")
        n, encode, q = 3 * k, repetition3_encode, 3
        trees = {z: [_majority3_tree(range(3 * z, 3 * z + 3))] for z in range(k)}
    else:
        raise UnsupportedInstance(f"no built-in decoder for code {code!r}")
    messages = all_words(k, 2)
    codewords = np.array([encode(m) for m in messages], dtype=np.uint8)
    radius = math.floor(delta / 2 * n)
    table, _ = _code_table(codewords, messages, n, radius)
    name = name or f"{code}_k{k}"
    params = {"kind": "decoder", "code": code, "k": k, "delta": str(delta), "sigma": str(as_fraction(sigma))}
    spec = _table_spec(name, n, 2, tuple(range(k)), table, params)
    alg = LocalAlgorithm(n=n, alphabet=Alphabet(2), trees=trees, q=q, sigma=sigma, rho0=delta / 2,
                         rho1=delta / 2, spec=spec, name=name)
    return ZooInstance(name, spec, alg, delta / 2, delta / 2, "decoder",
                       notes=f"{code} decoder, decoding radius {delta}", encode=encode)


def make_relaxed_decoder_instance(code: str, delta, k: int, sigma=DEFAULT_SIGMA, name: str | None = None) -> ZooInstance:
    """Toy relaxed decoder for the 3-repetition code.

    Reads the three copies of bit z and outputs their common value, or BOT
    as soon as two copies disagree.  Valid inputs are the codewords.
    """
    if code != "repetition3":
        raise UnsupportedInstance(f"no built-in relaxed decoder for code {code!r}")
    if not 1 <= k <= 5:
        raise UnsupportedInstance("the relaxed repetition code supports k <= 5")
    delta = as_fraction(delta)
    n = 3 * k
    messages = all_words(k, 2)
    codewords = np.array([repetition3_encode(m) for m in messages], dtype=np.uint8)
    radius = math.floor(delta / 2 * n)
    table, dmin = _code_table(codewords, messages, n, radius)
    valid_table = dmin == 0
    name = name or f"relaxed_repetition3_k{k}"
    params = {"kind": "relaxed_decoder", "code": code, "k": k, "delta": str(delta),
              "sigma": str(as_fraction(sigma))}
    spec = _table_spec(name, n, 2, tuple(range(k)), table, params, valid_table)
    trees = {z: [_consistency_tree(range(3 * z, 3 * z + 3))] for z in range(k)}
    alg = LocalAlgorithm(n=n, alphabet=Alphabet(2), trees=trees, q=3, sigma=sigma, rho0=delta / 2,
                         rho1=delta / 2, spec=spec, relaxed=True, name=name)
    return ZooInstance(name, spec, alg, delta / 2, delta / 2, "relaxed_decoder",
                       notes="3-repetition code with a consistency-check decoder", encode=repetition3_encode)


# perfect matchings of K_{3,3} between even and odd positions of a length-6 word
MATCHINGS_N6 = (
    ((0, 1), (2, 3), (4, 5)),
    ((1, 2), (3, 4), (0, 5)),
    ((0, 3), (1, 4), (2, 5)),
)


_REGISTRY: dict[str, Callable[[], ZooInstance]] = {
    "all_equal_n8": lambda: make_tester_instance("all_equal", Fraction(1, 4), 8, name="all_equal_n8"),
    "all_equal_n4": lambda: make_tester_instance("all_equal", Fraction(1, 4), 4, name="all_equal_n4"),
    "repetition_n6": lambda: make_tester_instance("repetition", Fraction(1, 6), 6, name="repetition_n6"),
    "matching_a_n6": lambda: make_tester_instance("matching", Fraction(1, 6), 6, pairs=MATCHINGS_N6[0], name="matching_a_n6"),
    "matching_b_n6": lambda: make_tester_instance("matching", Fraction(1, 6), 6, pairs=MATCHINGS_N6[1], name="matching_b_n6"),
    "matching_c_n6": lambda: make_tester_instance("matching", Fraction(1, 6), 6, pairs=MATCHINGS_N6[2], name="matching_c_n6"),
    "hadamard_k3": lambda: make_decoder_instance("hadamard", Fraction(1, 8), 3, name="hadamard_k3"),
    "hadamard_k4": lambda: make_decoder_instance("hadamard", Fraction(1, 8), 4, name="hadamard_k4"),
    "repetition3_k2": lambda: make_decoder_instance("repetition3", Fraction(1, 6), 2, name="repetition3_k2"),
    "relaxed_repetition3_k2": lambda: make_relaxed_decoder_instance("repetition3", Fraction(1, 3), 2, name="relaxed_repetition3_k2"),
    "relaxed_repetition3_k5": lambda: make_relaxed_decoder_instance("repetition3", Fraction(2, 15), 5, name="relaxed_repetition3_k5"),
}


def names() -> list[str]:
    return sorted(_REGISTRY)


@functools.lru_cache(maxsize=None)
def get_instance(name: str, verify: bool = False) -> ZooInstance:
    """Look up a shipped instance; with ``verify`` its radii are certified first."""
    if name not in _REGISTRY:
        raise UnsupportedInstance(f"unknown zoo instance {name!r}; known: {', '.join(names())}")
    inst = _REGISTRY[name]()
    if verify:
        from .oracle import check_robustness

        report = check_robustness(inst.algorithm, inst.spec)
        if not report.ok:
            raise StructuralError(f"zoo instance {name} fails robustness certification: {report.counterexample}")
    return inst


def instance_from_params(params: dict) -> ZooInstance:
    """Rebuild an instance from the parameters stored in its spec."""
    kind = params["kind"]
    if kind == "tester":
        return make_tester_instance(params["property"], Fraction(params["epsilon"]), params["n"],
                                    params.get("alphabet_size", 2), params.get("pairs"), Fraction(params["far"]),
                                    Fraction(params["sigma"]))
    if kind == "decoder":
        return make_decoder_instance(params["code"], Fraction(params["delta"]), params["k"], Fraction(params["sigma"]))
    if kind == "relaxed_decoder":
        return make_relaxed_decoder_instance(params["code"], Fraction(params["delta"]), params["k"],
                                             Fraction(params["sigma"]))
    raise UnsupportedInstance(f"unknown instance kind {kind!r}")


def public_params(spec: ProblemSpec) -> dict:
    return {k: v for k, v in spec.params.items() if not k.startswith("_")}


@dataclass(frozen=True)
class MapResult:
    accept: bool
    majorities: tuple
    repetitions: int
    sampling_steps: int
    seed: Any


@dataclass(frozen=True)
class CompositeTester:
    """Accept iff some partial tester's majority verdict is 1."""

    testers: tuple
    samplers: tuple
    repetitions: int
    m: int
    epsilon: Fraction
    far: Fraction

    @property
    def n(self) -> int:
        return self.testers[0].n

    def label(self, x: Sequence[int]) -> int:
        """1 on the union of the properties, 0 beyond the far threshold, else OUTSIDE."""
        d = min(t.distance(x) for t in self.testers)
        if d == 0:
            return 1
        return 0 if d > self.far * self.n else OUTSIDE

    def run(self, x, seed=0) -> MapResult:
        oracle = x if isinstance(x, WordOracle) else WordOracle(x)
        votes = [[] for _ in self.samplers]
        memo: dict = {}
        for r in range(self.repetitions):
            results = shared_sample_multirun(list(self.samplers), oracle, seed=repetition_seed(seed, r), memo=memo)
            for i, res in enumerate(results):
                votes[i].append(res.output)
        majorities = tuple(int(2 * sum(v) > len(v)) for v in votes)
        return MapResult(any(majorities), majorities, self.repetitions, oracle.sampling_steps, seed)


def map_repetitions(alphabet_size: int, m: int, sigma) -> int:
    return nearest_int(108 * math.log2(3 * alphabet_size**m) / float(sigma))


def map_to_tester(partial_testers: Sequence[ZooInstance], m: int | None = None, prepare: bool = False,
                  seed: int = 0, repetitions: int | None = None) -> CompositeTester:
    """Compile partial testers indexed by proofs into one sample-based tester.

    Each partial tester is preprocessed into a sample-based algorithm (after
    ``transforms.prepare`` when ``prepare`` is set).  A run repeats the
    shared sampling step k = 108 log2(3 |Sigma|^m) / sigma times, takes the
    majority verdict per tester and accepts iff some majority is 1.
    """
    if not partial_testers:
        raise StructuralError("at least one partial tester is required")
    first = partial_testers[0]
    for t in partial_testers[1:]:
        if t.n != first.n or t.spec.alphabet != first.spec.alphabet or t.rho0 != first.rho0:
            raise StructuralError("partial testers must share n, alphabet and epsilon")
    s = first.spec.alphabet.size
    if m is None:
        m = math.ceil(math.log(len(partial_testers), s)) if len(partial_testers) > 1 else 0
    if len(partial_testers) > s**m:
        raise StructuralError(f"{len(partial_testers)} testers need proofs longer than m={m}")
    algs = []
    for t in partial_testers:
        alg = t.algorithm
        if prepare:
            from .transforms import prepare as _prepare

            alg, _ = _prepare(alg, seed=seed)
        algs.append(alg)
    samplers = tuple(preprocess(a) for a in algs)
    ps = {pre.config.p for pre in samplers}
    if len(ps) != 1:
        samplers = tuple(pre.with_config(pre.config.with_overrides(p=min(ps))) for pre in samplers)
    sigma = max(a.sigma for a in algs)
    k = map_repetitions(s, m, sigma) if repetitions is None else int(repetitions)
    far = Fraction(first.spec.params["far"])
    return CompositeTester(tuple(partial_testers), samplers, k, m, first.rho0, far)


__all__ = [
    "CompositeTester",
    "MATCHINGS_N6",
    "ZooInstance",
    "get_instance",
    "hadamard_encode",
    "make_decoder_instance",
    "make_relaxed_decoder_instance",
    "make_tester_instance",
    "map_repetitions",
    "map_to_tester",
    "names",
    "repetition3_encode",
]

