"""Daisy partitions of q-set multi-collections and their simple-daisy decomposition."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import StructuralError


class PreconditionError(ValueError):
    pass


class InvariantError(AssertionError):
    pass


def h_bound(k: int, n: int, q: int) -> float:
    if k < 1 or n < 1 or q < 1:
        raise ValueError("h_bound needs k, n, q >= 1")
    return float(n) ** (max(1, k - 1) / q)


@dataclass(frozen=True)
class DaisyPartition:
    """Daisies D_0..D_q as lists of member ids into ``sets``, with kernels K_0..K_q."""

    n: int
    q: int
    sets: tuple
    daisies: tuple
    kernels: tuple
    degrees: tuple = field(repr=False, default=())

    def members(self, j: int) -> list[tuple]:
        return [self.sets[i] for i in self.daisies[j]]

    def petal(self, member: int, j: int) -> tuple:
        K = self.kernels[j]
        return tuple(i for i in self.sets[member] if i not in K)

    def h(self, k: int) -> float:
        return h_bound(k, self.n, self.q)

    def to_json(self) -> dict:
        return {
            "format": 1,
            "n": self.n,
            "q": self.q,
            "kernels": [sorted(K) for K in self.kernels],
            "daisies": [
                [{"id": i, "set": list(self.sets[i])} for i in D] for D in self.daisies
            ],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "DaisyPartition":
        n, q = int(obj["n"]), int(obj["q"])
        entries = sorted(
            ((m["id"], tuple(m["set"]), j) for j, D in enumerate(obj["daisies"]) for m in D)
        )
        sets = tuple(s for _, s, _ in entries)
        daisies = [[] for _ in range(q + 1)]
        for i, _, j in entries:
            daisies[j].append(i)
        kernels = tuple(frozenset(K) for K in obj["kernels"])
        return cls(n, q, sets, tuple(tuple(D) for D in daisies), kernels, _degrees(sets, n))


def _as_sets(S: Sequence[Sequence[int]], n: int, q: int) -> tuple:
    out = []
    for s in S:
        t = tuple(sorted(int(i) for i in s))
        if len(t) != q or len(set(t)) != q:
            raise StructuralError(f"member {tuple(s)} is not a {q}-set")
        if t and (t[0] < 0 or t[-1] >= n):
            raise StructuralError(f"member {t} has a coordinate outside [0, {n})")
        out.append(t)
    return tuple(out)


def _degrees(sets: tuple, n: int) -> tuple:
    if not sets:
        return (0,) * n
    arr = np.fromiter((i for s in sets for i in s), dtype=np.int64)
    return tuple(int(d) for d in np.bincount(arr, minlength=n))


def partition(S: Sequence[Sequence[int]], n: int, q: int) -> DaisyPartition:
    """Greedy daisy partition; degrees are counted in the whole collection."""
    sets = _as_sets(S, n, q)
    deg = np.array(_degrees(sets, n), dtype=np.int64)
    arr = np.array(sets, dtype=np.int64).reshape(len(sets), q)
    remaining = np.ones(len(sets), dtype=bool)
    daisies, kernels = [], []
    for j in range(q):
        in_kernel = deg >= h_bound(j + 1, n, q)
        petal_size = (~in_kernel[arr]).sum(axis=1) if q else np.zeros(len(sets), dtype=np.int64)
        if np.any(remaining & (petal_size < j)):
            raise InvariantError(f"a remaining set has fewer than {j} petal elements at step {j}")
        chosen = remaining & (petal_size == j)
        daisies.append(tuple(int(i) for i in np.flatnonzero(chosen)))
        kernels.append(frozenset(int(i) for i in np.flatnonzero(in_kernel)))
        remaining &= ~chosen
    daisies.append(tuple(int(i) for i in np.flatnonzero(remaining)))
    kernels.append(frozenset())
    return DaisyPartition(n, q, sets, tuple(daisies), tuple(kernels), tuple(int(d) for d in deg))


def kernel_size_bound(j: int, n: int, q: int, size: int) -> float:
    return q * size * float(n) ** (-max(1, j) / q)


def check_partition(part: DaisyPartition) -> dict:
    """Check the five partition invariants; returns a report with failures listed."""
    n, q, sets = part.n, part.q, part.sets
    failures: list[str] = []
    ids = sorted(i for D in part.daisies for i in D)
    cover = ids == list(range(len(sets)))
    if not cover:
        failures.append("daisies do not form a disjoint cover of the collection")
    petals = True
    for j, D in enumerate(part.daisies):
        K = part.kernels[j]
        for i in D:
            if sum(1 for c in sets[i] if c not in K) != j:
                petals = False
                failures.append(f"member {i} of D_{j} has petal size != {j}")
                break
    K = part.kernels
    chain = len(K) == q + 1 and not K[q] and all(K[j + 1] <= K[j] for j in range(q))
    if q >= 1:
        chain = chain and K[0] == K[1]
    if not chain:
        failures.append("kernel chain K_q <= ... <= K_1 = K_0 violated")
    size_ok = True
    for j in range(q + 1):
        if len(K[j]) > kernel_size_bound(j, n, q, len(sets)) + 1e-9:
            size_ok = False
            failures.append(f"|K_{j}| = {len(K[j])} exceeds the kernel size bound")
    deg = part.degrees or _degrees(sets, n)
    hdaisy = True
    for j in range(1, q + 1):
        hs = [h_bound(k, n, q) for k in range(1, j + 1)]
        for i in part.daisies[j]:
            pd = [deg[c] for c in sets[i] if c not in K[j]]
            for k, hk in enumerate(hs, start=1):
                if sum(1 for d in pd if d <= hk) < k:
                    hdaisy = False
                    failures.append(f"member {i} of D_{j} fails the degree criterion at k={k}")
                    break
            if not hdaisy:
                break
    return {
        "disjoint_cover": cover,
        "petal_sizes": petals,
        "kernel_chain": chain,
        "kernel_size_bound": size_ok,
        "h_daisy": hdaisy,
        "ok": cover and petals and chain and size_ok and hdaisy,
        "failures": failures,
    }


def petal_overlap_bound_check(part: DaisyPartition) -> dict:
    """Largest number of D_j members whose petal meets a given member's petal, per j."""
    per_daisy = {}
    violations = []
    for j in range(1, part.q + 1):
        members = part.daisies[j]
        K = part.kernels[j]
        by_coord: dict[int, list[int]] = defaultdict(list)
        petals = {}
        for i in members:
            p = tuple(c for c in part.sets[i] if c not in K)
            petals[i] = p
            for c in p:
                by_coord[c].append(i)
        bound = 2 * h_bound(j, part.n, part.q) - 1
        worst = 0
        for i in members:
            hit = set()
            for c in petals[i]:
                hit.update(by_coord[c])
            worst = max(worst, len(hit))
            if len(hit) > bound + 1e-9:
                violations.append({"j": j, "member": i, "set": list(part.sets[i]), "count": len(hit)})
        per_daisy[j] = {"max_count": worst, "bound": bound}
    return {"per_daisy": per_daisy, "violations": violations, "ok": not violations}


def _normalize_graph(graph) -> list[set[int]]:
    if isinstance(graph, Mapping):
        m = max((max([v, *nb]) for v, nb in graph.items()), default=-1) + 1
        adj = [set() for _ in range(m)]
        for v, nb in graph.items():
            for u in nb:
                if u != v:
                    adj[v].add(u)
                    adj[u].add(v)
        return adj
    adj = [set(int(u) for u in nb) for nb in graph]
    for v, nb in enumerate(adj):
        nb.discard(v)
        for u in nb:
            adj[u].add(v)
    return adj


def equitable_color(graph, k: int, budget: int = 100_000, seed: int = 0) -> list[int]:
    """Proper k-coloring with class sizes differing by at most one.

    ``graph`` is an adjacency list (or dict).  Requires k > max degree.
    Starts from a greedy coloring and moves vertices along chains of
    classes (X_0 -> X_1 -> ... -> X_r, each step moving a vertex with no
    neighbour in the next class) from an oversized to an undersized class.
    """
    adj = _normalize_graph(graph)
    m = len(adj)
    delta = max((len(nb) for nb in adj), default=0)
    if k <= delta:
        raise PreconditionError(f"k={k} colors needs k > max degree {delta}")
    rng = np.random.default_rng(seed)
    order = list(range(m))
    steps = 0
    while True:
        color = _greedy(adj, k, order)
        ok, steps = _rebalance(adj, k, color, budget, steps)
        if ok:
            return color
        if steps >= budget:
            raise RuntimeError(f"equitable coloring exceeded its iteration budget ({budget})")
        order = list(rng.permutation(m))


def _greedy(adj, k, order) -> list[int]:
    color = [-1] * len(adj)
    sizes = [0] * k
    for v in order:
        banned = {color[u] for u in adj[v]}
        c = min((c for c in range(k) if c not in banned), key=lambda c: (sizes[c], c))
        color[v] = c
        sizes[c] += 1
    return color


def _rebalance(adj, k, color, budget, steps):
    classes = [set() for _ in range(k)]
    for v, c in enumerate(color):
        classes[c].add(v)
    while True:
        sizes = [len(c) for c in classes]
        lo, hi = min(sizes), max(sizes)
        if hi - lo <= 1:
            return True, steps
        steps += 1
        if steps >= budget:
            return False, steps
        path = _find_chain(adj, classes, color, sizes, lo, hi)
        if path is None:
            return False, steps
        for v, target in path:
            classes[color[v]].discard(v)
            classes[target].add(v)
            color[v] = target


def _find_chain(adj, classes, color, sizes, lo, hi):
    """Breadth-first search over classes for a chain from a largest to a smallest class."""

    def mover(src, dst):
        for v in sorted(classes[src]):
            if all(color[u] != dst for u in adj[v]):
                return v
        return None

    k = len(classes)
    start = [c for c in range(k) if sizes[c] == hi]
    prev: dict[int, tuple[int, int] | None] = {c: None for c in start}
    frontier = list(start)
    while frontier:
        nxt = []
        for src in frontier:
            for dst in range(k):
                if dst in prev:
                    continue
                v = mover(src, dst)
                if v is None:
                    continue
                prev[dst] = (src, v)
                if sizes[dst] <= hi - 2:
                    path = []
                    cur = dst
                    while prev[cur] is not None:
                        s, w = prev[cur]
                        path.append((w, cur))
                        cur = s
                    return path[::-1]
                nxt.append(dst)
        frontier = nxt
    return None


@dataclass(frozen=True)
class SimpleDaisyFamily:
    parent: object
    classes: tuple

    def sizes(self) -> list[int]:
        return [len(c) for c in self.classes]


def petal_graph(daisy: Sequence[Sequence[int]], kernel) -> list[set[int]]:
    kernel = frozenset(kernel)
    petals = [frozenset(S) - kernel for S in daisy]
    by_coord: dict[int, list[int]] = defaultdict(list)
    for i, p in enumerate(petals):
        for c in p:
            by_coord[c].append(i)
    adj = [set() for _ in petals]
    for members in by_coord.values():
        for a in members:
            adj[a].update(members)
    for i, nb in enumerate(adj):
        nb.discard(i)
    return adj


def simplify(daisy: Sequence[Sequence[int]], kernel, t: int, parent=None, seed: int = 0) -> SimpleDaisyFamily:
    """Split a daisy into t+1 simple daisies (pairwise disjoint petals) of balanced size."""
    adj = petal_graph(daisy, kernel)
    delta = max((len(nb) for nb in adj), default=0)
    if delta > t:
        raise PreconditionError(f"a petal meets {delta} other petals, more than t={t}")
    color = equitable_color(adj, t + 1, seed=seed)
    classes = [[] for _ in range(t + 1)]
    for i, c in enumerate(color):
        classes[c].append(i)
    return SimpleDaisyFamily(parent, tuple(tuple(c) for c in classes))


def check_coloring(graph, color: Sequence[int], k: int) -> dict:
    adj = _normalize_graph(graph)
    proper = all(color[u] != color[v] for v in range(len(adj)) for u in adj[v])
    in_range = all(0 <= c < k for c in color)
    sizes = [0] * k
    for c in color:
        if 0 <= c < k:
            sizes[c] += 1
    m = len(adj)
    balanced = all(s in (m // k, math.ceil(m / k)) for s in sizes)
    return {"proper": proper and in_range, "balanced": balanced, "sizes": sizes}
