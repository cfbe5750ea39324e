"""Words, problem specifications, decision trees and description tuples.

Coordinates are 0-based throughout.  Output symbols are ``0``, ``1`` and
``BOT`` (the rejection/unknown symbol of relaxed algorithms).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

BOT = 2
OUTSIDE = -1
OUTPUT_SYMBOLS = (0, 1, BOT)


class StructuralError(ValueError):
    """Raised when an object violates a structural precondition."""


class BudgetError(RuntimeError):
    """Raised when an enumeration would exceed its configured budget."""


def as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10**9)
    return Fraction(value)


def output_name(b: int) -> str:
    return "bot" if b == BOT else str(int(b))


@dataclass(frozen=True)
class Alphabet:
    size: int

    def __post_init__(self):
        if int(self.size) < 2:
            raise StructuralError(f"alphabet size must be at least 2, got {self.size}")

    def check(self, x: Sequence[int]) -> None:
        for a in x:
            if not 0 <= a < self.size:
                raise StructuralError(f"symbol {a} outside alphabet of size {self.size}")


Word = tuple


def make_word(symbols: Iterable[int] | str, alphabet: Alphabet | int = 2, n: int | None = None) -> Word:
    """Build a word from an iterable of symbol indices or a digit string."""
    size = alphabet.size if isinstance(alphabet, Alphabet) else int(alphabet)
    if isinstance(symbols, str):
        x = tuple(int(c, 36) for c in symbols.strip())
    else:
        x = tuple(int(a) for a in symbols)
    if n is not None and len(x) != n:
        raise StructuralError(f"word has length {len(x)}, expected {n}")
    Alphabet(size).check(x)
    return x


def word_str(x: Sequence[int]) -> str:
    return "".join(np.base_repr(int(a), 36).lower() for a in x)


@dataclass(frozen=True)
class ProblemSpec:
    """A partial function f on Z x Sigma^n given by a membership predicate.

    ``membership(z, x)`` returns 0 or 1 for domain points and ``OUTSIDE``
    otherwise.  ``valid(z, x)`` marks the valid inputs of relaxed problems.
    """

    n: int
    alphabet: Alphabet
    domain_z: tuple
    membership: Callable[[Any, Word], int] = field(compare=False)
    valid: Callable[[Any, Word], bool] | None = field(default=None, compare=False)
    name: str = ""
    params: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def label(self, z, x: Word) -> int:
        return self.membership(z, x)


class Leaf:
    __slots__ = ("label", "_hash")
    n_leaves = 1
    depth = 0

    def __init__(self, label: int):
        if label not in OUTPUT_SYMBOLS:
            raise StructuralError(f"leaf label {label!r} not in {{0, 1, BOT}}")
        self.label = int(label)
        self._hash = hash(("leaf", self.label))

    def __eq__(self, other):
        return isinstance(other, Leaf) and other.label == self.label

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Leaf({output_name(self.label)})"


class Node:
    """Inner node querying ``coord``; ``children[a]`` is followed on symbol a."""

    __slots__ = ("coord", "children", "n_leaves", "depth", "_hash")

    def __init__(self, coord: int, children: Sequence):
        if coord < 0:
            raise StructuralError(f"negative coordinate {coord}")
        if len(children) < 2:
            raise StructuralError("an inner node needs one child per alphabet symbol")
        self.coord = int(coord)
        self.children = tuple(children)
        self.n_leaves = sum(c.n_leaves for c in self.children)
        self.depth = 1 + max(c.depth for c in self.children)
        self._hash = hash((self.coord, self.children))

    def __eq__(self, other):
        if self is other:
            return True
        return (
            isinstance(other, Node)
            and self._hash == other._hash
            and self.coord == other.coord
            and self.children == other.children
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Node({self.coord}, {list(self.children)!r})"


DecisionTree = Leaf | Node


def tree_coords(tree: DecisionTree) -> set[int]:
    out: set[int] = set()
    stack = [tree]
    while stack:
        t = stack.pop()
        if isinstance(t, Node):
            out.add(t.coord)
            stack.extend(t.children)
    return out


def check_tree(tree: DecisionTree, n: int, alphabet_size: int) -> None:
    stack = [tree]
    while stack:
        t = stack.pop()
        if isinstance(t, Node):
            if t.coord >= n:
                raise StructuralError(f"coordinate {t.coord} out of range for n={n}")
            if len(t.children) != alphabet_size:
                raise StructuralError(
                    f"node on {t.coord} has {len(t.children)} children, alphabet has {alphabet_size}"
                )
            stack.extend(t.children)


class DescriptionTuple(NamedTuple):
    """A flattened branch: queried set, its answers, the output and its origin."""

    S: tuple
    a_S: tuple
    b: int
    s: int
    t: int

    def consistent_with(self, x: Sequence[int]) -> bool:
        return all(x[i] == a for i, a in zip(self.S, self.a_S))


def _sorted_branch(path: Mapping[int, int]) -> tuple[tuple, tuple]:
    S = tuple(sorted(path))
    return S, tuple(path[i] for i in S)


def eval_tree(tree: DecisionTree, x: Sequence[int], s: int = 0) -> tuple[DescriptionTuple, int]:
    """Follow ``x`` from the root; return the branch as a tuple and its label."""
    path: dict[int, int] = {}
    t = 0
    node = tree
    n = len(x)
    while isinstance(node, Node):
        c = node.coord
        if c >= n:
            raise StructuralError(f"coordinate {c} out of range for n={n}")
        a = x[c]
        path.setdefault(c, a)
        for sibling in node.children[:a]:
            t += sibling.n_leaves
        node = node.children[a]
    S, a_S = _sorted_branch(path)
    return DescriptionTuple(S, a_S, node.label, s, t), node.label


@dataclass(frozen=True)
class LocalAlgorithm:
    """A uniform multi-collection of decision trees per explicit input z."""

    n: int
    alphabet: Alphabet
    trees: Mapping[Any, tuple]
    q: int
    sigma: Fraction
    rho0: Fraction
    rho1: Fraction
    spec: ProblemSpec | None = None
    relaxed: bool = False
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "sigma", as_fraction(self.sigma))
        object.__setattr__(self, "rho0", as_fraction(self.rho0))
        object.__setattr__(self, "rho1", as_fraction(self.rho1))
        object.__setattr__(self, "trees", {z: tuple(ts) for z, ts in self.trees.items()})
        if not self.trees:
            raise StructuralError("an algorithm needs at least one explicit input z")
        for z, ts in self.trees.items():
            if not ts:
                raise StructuralError(f"empty tree collection for z={z!r}")
            for t in ts:
                check_tree(t, self.n, self.alphabet.size)
                if not self.relaxed and _has_bot(t):
                    raise StructuralError("BOT leaves are only allowed in relaxed algorithms")

    @property
    def zs(self) -> tuple:
        return tuple(self.trees)

    def support_size(self, z=None) -> int:
        return len(self.trees[self._z(z)])

    def _z(self, z):
        if z is None:
            if len(self.trees) != 1:
                raise StructuralError("z is required for algorithms with several explicit inputs")
            return next(iter(self.trees))
        if z not in self.trees:
            raise StructuralError(f"unknown explicit input z={z!r}")
        return z

    def trees_for(self, z=None) -> tuple:
        return self.trees[self._z(z)]

    def with_trees(self, trees: Mapping[Any, Sequence], **changes) -> "LocalAlgorithm":
        fields = dict(
            n=self.n, alphabet=self.alphabet, q=self.q, sigma=self.sigma, rho0=self.rho0,
            rho1=self.rho1, spec=self.spec, relaxed=self.relaxed, name=self.name,
        )
        fields.update(changes)
        return LocalAlgorithm(trees=trees, **fields)


def _has_bot(tree: DecisionTree) -> bool:
    stack = [tree]
    while stack:
        t = stack.pop()
        if isinstance(t, Node):
            stack.extend(t.children)
        elif t.label == BOT:
            return True
    return False


def run_algorithm(alg: LocalAlgorithm, z, x: Sequence[int], seed) -> int:
    trees = alg.trees_for(z)
    if len(x) != alg.n:
        raise StructuralError(f"word has length {len(x)}, expected {alg.n}")
    rng = np.random.default_rng(seed)
    tree = trees[int(rng.integers(len(trees)))]
    return eval_tree(tree, x)[1]


def normalize_tree(tree: DecisionTree, q: int, n: int, alphabet_size: int) -> DecisionTree:
    """Make every branch query exactly q distinct coordinates."""
    if q > n:
        raise StructuralError(f"cannot pad to q={q} distinct queries with n={n}")

    def pad(label_leaf: Leaf, known: dict[int, int], depth: int) -> DecisionTree:
        if depth == q:
            return label_leaf
        c = next(i for i in range(n) if i not in known)
        known[c] = 0
        child = pad(label_leaf, known, depth + 1)
        del known[c]
        return Node(c, (child,) * alphabet_size)

    def rec(t: DecisionTree, known: dict[int, int], depth: int) -> DecisionTree:
        if isinstance(t, Leaf):
            return t if depth == q else pad(t, known, depth)
        c = t.coord
        if c in known:
            return rec(t.children[known[c]], known, depth)
        if depth == q:
            raise StructuralError(f"a branch makes more than q={q} distinct queries")
        kids = []
        for a, child in enumerate(t.children):
            known[c] = a
            kids.append(rec(child, known, depth + 1))
        del known[c]
        if all(k is old for k, old in zip(kids, t.children)):
            return t
        return Node(c, kids)

    return rec(tree, {}, 0)


def normalize(alg: LocalAlgorithm) -> LocalAlgorithm:
    if alg.q > alg.n:
        raise StructuralError(f"cannot pad to q={alg.q} distinct queries with n={alg.n}")
    cache: dict[int, DecisionTree] = {}

    def norm(t):
        key = id(t)
        if key not in cache:
            cache[key] = normalize_tree(t, alg.q, alg.n, alg.alphabet.size)
        return cache[key]

    return alg.with_trees({z: [norm(t) for t in ts] for z, ts in alg.trees.items()})


def branches(tree: DecisionTree, s: int = 0) -> list[DescriptionTuple]:
    """All branches of a tree in depth-first order (children by symbol)."""
    out: list[DescriptionTuple] = []

    def rec(t, path):
        if isinstance(t, Leaf):
            S, a_S = _sorted_branch(path)
            out.append(DescriptionTuple(S, a_S, t.label, s, len(out)))
            return
        c = t.coord
        fresh = c not in path
        for a, child in enumerate(t.children):
            if fresh:
                path[c] = a
            rec(child, path)
        if fresh:
            del path[c]

    rec(tree, {})
    return out


def is_normalized_tree(tree: DecisionTree, q: int) -> bool:
    def rec(t, seen, depth):
        if isinstance(t, Leaf):
            return depth == q
        if t.coord in seen or depth >= q:
            return False
        seen.add(t.coord)
        ok = all(rec(c, seen, depth + 1) for c in t.children)
        seen.discard(t.coord)
        return ok

    return rec(tree, set(), 0)


def extract_tuples(alg: LocalAlgorithm, z=None) -> list[DescriptionTuple]:
    """One description tuple per (tree, branch) of a normalized algorithm."""
    out: list[DescriptionTuple] = []
    checked: dict[int, list[DescriptionTuple]] = {}
    for s, tree in enumerate(alg.trees_for(z)):
        key = id(tree)
        if key not in checked:
            if not is_normalized_tree(tree, alg.q):
                raise StructuralError(f"tree {s} is not normalized to q={alg.q}")
            checked[key] = branches(tree, 0)
        out.extend(tp._replace(s=s) for tp in checked[key])
    return out


def induced_distribution(alg: LocalAlgorithm, x: Sequence[int], z=None) -> list[tuple]:
    """The multi-collection mu_x: the queried set of every tree on x."""
    return [eval_tree(t, x)[0].S for t in alg.trees_for(z)]


def replace(x: Sequence[int], K: Sequence[int] | Mapping[int, int], kappa: Sequence[int] | None = None) -> Word:
    """The hybrid word x_kappa: kappa on K, x elsewhere."""
    y = list(x)
    items = K.items() if isinstance(K, Mapping) else zip(K, kappa if kappa is not None else ())
    for i, a in items:
        y[i] = a
    return tuple(y)


def distance(x: Sequence[int], y: Sequence[int]) -> Fraction:
    if len(x) != len(y):
        raise StructuralError(f"length mismatch: {len(x)} vs {len(y)}")
    if not x:
        return Fraction(0)
    return Fraction(sum(a != b for a, b in zip(x, y)), len(x))


def hamming(x: Sequence[int], y: Sequence[int]) -> int:
    return sum(a != b for a, b in zip(x, y))


def all_words(n: int, alphabet_size: int = 2) -> np.ndarray:
    """Every word of length n in lexicographic order, as rows of a uint8 array."""
    m = alphabet_size**n
    idx = np.arange(m, dtype=np.int64)
    out = np.empty((m, n), dtype=np.uint8)
    for i in range(n - 1, -1, -1):
        out[:, i] = idx % alphabet_size
        idx //= alphabet_size
    return out


def word_index(x: Sequence[int], alphabet_size: int = 2) -> int:
    v = 0
    for a in x:
        v = v * alphabet_size + int(a)
    return v


def eval_tree_batch(tree: DecisionTree, X: np.ndarray) -> np.ndarray:
    """Leaf labels of ``tree`` on every row of ``X``."""
    out = np.empty(len(X), dtype=np.int8)

    def rec(t, rows):
        if rows.size == 0:
            return
        if isinstance(t, Leaf):
            out[rows] = t.label
            return
        col = X[rows, t.coord]
        for a, child in enumerate(t.children):
            rec(child, rows[col == a])

    rec(tree, np.arange(len(X)))
    return out


def output_table(alg: LocalAlgorithm, z, X: np.ndarray) -> np.ndarray:
    """Array of shape (|trees|, |X|) with the output of each tree on each row."""
    trees = alg.trees_for(z)
    cache: dict[int, np.ndarray] = {}
    rows = []
    for t in trees:
        key = id(t)
        if key not in cache:
            cache[key] = eval_tree_batch(t, X)
        rows.append(cache[key])
    return np.vstack(rows)


def leaf(b: int) -> Leaf:
    return Leaf(b)


def node(coord: int, *children) -> Node:
    return Node(coord, children)
