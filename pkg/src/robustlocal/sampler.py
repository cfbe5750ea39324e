"""The sample-based algorithm N and its relaxed, global and shared-sample variants.

Preprocessing turns a local algorithm into description tuples, partitions
the query sets of the voting tuples into daisies and fixes the sampling
probability p, the thresholds tau_j and the capping parameter alpha.  A run
samples every coordinate with probability p once, then for j = 1..q and
every assignment kappa to the kernel K_j (lexicographic order) counts the
tuples of D_j that are fully visible and consistent with x_kappa.
"""

from __future__ import annotations

import itertools
import math
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Sequence

import numpy as np

from .core import (
    BOT,
    BudgetError,
    DescriptionTuple,
    LocalAlgorithm,
    StructuralError,
    extract_tuples,
    normalize,
    output_name,
)
from .daisy import DaisyPartition, InvariantError, kernel_size_bound, partition

DEFAULT_BUDGET = 2**20
BUDGET_ENV = "ROBUSTLOCAL_BUDGET"


def default_budget() -> int:
    value = os.environ.get(BUDGET_ENV)
    return int(value) if value else DEFAULT_BUDGET


@dataclass(frozen=True)
class SamplerConfig:
    n: int
    alphabet_size: int
    q: int
    gamma: float
    p: float
    p_raw: float
    alpha: float
    rho: Fraction
    sigma: Fraction
    budget: int
    cap_factor: float = 2.0
    overrides: Mapping[str, Any] = field(default_factory=dict)

    @property
    def p_clamped(self) -> bool:
        return "p" not in self.overrides and self.p_raw > 1

    @property
    def sample_cap(self) -> float:
        return self.cap_factor * self.p * self.n

    def thresholds(self, support: int) -> tuple:
        return tuple(support / (4 * self.q) * self.p**j for j in range(1, self.q + 1))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "alphabet_size": self.alphabet_size,
            "q": self.q,
            "gamma": self.gamma,
            "p": self.p,
            "p_raw": self.p_raw,
            "p_clamped": self.p_clamped,
            "alpha": None if math.isinf(self.alpha) else self.alpha,
            "rho": str(self.rho),
            "sigma": str(self.sigma),
            "budget": self.budget,
            "cap_factor": self.cap_factor,
            "sample_cap": self.sample_cap,
            "overrides": dict(self.overrides),
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "SamplerConfig":
        return cls(
            n=d["n"], alphabet_size=d["alphabet_size"], q=d["q"], gamma=d["gamma"], p=d["p"],
            p_raw=d["p_raw"], alpha=math.inf if d["alpha"] is None else d["alpha"],
            rho=Fraction(d["rho"]), sigma=Fraction(d["sigma"]), budget=d["budget"],
            cap_factor=d.get("cap_factor", 2.0), overrides=dict(d.get("overrides", {})),
        )

    def with_overrides(self, p=None, gamma=None, cap_factor=None, budget=None) -> "SamplerConfig":
        overrides = dict(self.overrides)
        gamma_v, p_raw, p_v = self.gamma, self.p_raw, self.p
        if gamma is not None:
            gamma_v = float(gamma)
            overrides["gamma"] = gamma_v
            p_raw = gamma_v * self.n ** (-1 / (2 * self.q**2))
            p_v = min(1.0, p_raw)
        if p is not None:
            p_v = float(p)
            if not 0 < p_v <= 1:
                raise ValueError("p must lie in (0, 1]")
            overrides["p"] = p_v
        cap = self.cap_factor
        if cap_factor is not None:
            cap = float(cap_factor)
            overrides["cap_factor"] = cap
        bud = self.budget
        if budget is not None:
            bud = int(budget)
            overrides["budget"] = bud
        return SamplerConfig(
            n=self.n, alphabet_size=self.alphabet_size, q=self.q, gamma=gamma_v, p=p_v, p_raw=p_raw,
            alpha=self.alpha, rho=self.rho, sigma=self.sigma, budget=bud, cap_factor=cap, overrides=overrides,
        )


def sampler_gamma(q: int, alphabet_size: int) -> float:
    return 48 * alphabet_size**q * math.log(alphabet_size)


def sampling_probability(gamma: float, n: int, q: int) -> float:
    return gamma * n ** (-1 / (2 * q * q))


def capping_parameter(alphabet_size: int, rho, sigma) -> float:
    if rho <= 0 or sigma <= 0:
        return math.inf
    return 12 * math.log(alphabet_size) / (float(rho) * float(sigma))


@dataclass(frozen=True)
class VoteSide:
    """Tuples voting for ``b`` at one explicit input, with their daisy partition."""

    z: Any
    b: int
    support: int
    tuples: tuple
    partition: DaisyPartition
    groups: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "groups", _index(self))


def _index(side: VoteSide) -> tuple:
    """Per j: members with their petal and kernel constraints split out."""
    part = side.partition
    out = [()]
    for j in range(1, part.q + 1):
        K = part.kernels[j]
        rows = []
        for m in part.daisies[j]:
            tp = side.tuples[m]
            petal = tuple((i, a) for i, a in zip(tp.S, tp.a_S) if i not in K)
            kern = tuple((i, a) for i, a in zip(tp.S, tp.a_S) if i in K)
            rows.append((m, petal, kern))
        out.append(tuple(rows))
    return tuple(out)


@dataclass(frozen=True)
class PreparedSampler:
    config: SamplerConfig
    sides: Mapping[Any, tuple]
    relaxed: bool
    flipped: bool = False
    name: str = ""
    instance: Mapping[str, Any] | None = None

    @property
    def vote_symbol(self) -> int:
        return 0 if self.flipped else 1

    @property
    def zs(self) -> tuple:
        return tuple(self.sides)

    def side(self, z, b: int) -> VoteSide:
        for sd in self.sides[z]:
            if sd.b == b:
                return sd
        raise StructuralError(f"no tuples voting for {output_name(b)} at z={z!r}")

    def thresholds(self, z) -> tuple:
        return self.config.thresholds(self.sides[z][0].support)

    def kernels(self, z, b: int | None = None) -> tuple:
        return self.side(z, self.vote_symbol if b is None else b).partition.kernels

    def with_config(self, config: SamplerConfig) -> "PreparedSampler":
        return PreparedSampler(config, self.sides, self.relaxed, self.flipped, self.name, self.instance)


def preprocess(
    alg: LocalAlgorithm,
    relaxed: bool | None = None,
    budget: int | None = None,
    gamma: float | None = None,
    p: float | None = None,
    cap_factor: float | None = None,
) -> PreparedSampler:
    """Build the sample-based algorithm for every explicit input of ``alg``."""
    alg = normalize(alg)
    relaxed = alg.relaxed if relaxed is None else relaxed
    n, s, q = alg.n, alg.alphabet.size, alg.q
    flipped = not relaxed and alg.rho0 == 0 and alg.rho1 > 0
    if flipped:
        rho = alg.rho1
    else:
        rho = alg.rho0 if alg.rho0 > 0 else alg.rho1
    g = sampler_gamma(q, s)
    p_raw = sampling_probability(g, n, q)
    config = SamplerConfig(
        n=n, alphabet_size=s, q=q, gamma=g, p=min(1.0, p_raw), p_raw=p_raw,
        alpha=capping_parameter(s, rho, alg.sigma), rho=rho, sigma=alg.sigma,
        budget=default_budget() if budget is None else int(budget),
    )
    config = config.with_overrides(p=p, gamma=gamma, cap_factor=cap_factor)
    vote_symbols = (0, 1) if relaxed else ((0,) if flipped else (1,))
    sides = {}
    for z in alg.zs:
        tuples = extract_tuples(alg, z)
        support = alg.support_size(z)
        zsides = []
        for b in vote_symbols:
            chosen = tuple(tp for tp in tuples if tp.b == b)
            part = partition([tp.S for tp in chosen], n, q)
            _check_kernels(part, config, support, s)
            zsides.append(VoteSide(z, b, support, chosen, part))
        sides[z] = tuple(zsides)
    return PreparedSampler(config, sides, relaxed, flipped, alg.name, _instance_ref(alg))


def _instance_ref(alg: LocalAlgorithm):
    if alg.spec is not None and alg.spec.name:
        return {"name": alg.spec.name, "params": {k: v for k, v in alg.spec.params.items() if not k.startswith("_")}}
    return None


def _check_kernels(part: DaisyPartition, config: SamplerConfig, support: int, s: int) -> None:
    n, q = part.n, part.q
    for j in range(1, q + 1):
        size = len(part.kernels[j])
        if size and s**size > config.budget:
            raise BudgetError(
                f"kernel K_{j} has {size} coordinates: {s}^{size} assignments exceed the budget {config.budget}"
            )
    m = len(part.sets)
    for i in range(q + 1):
        if len(part.kernels[i]) > kernel_size_bound(i, n, q, m) + 1e-9:
            raise InvariantError(f"|K_{i}| = {len(part.kernels[i])} exceeds q|S| n^(-max(1,i)/q)")
    if support <= 48 * q * n * math.log(s) + 1e-9:
        g = sampler_gamma(q, s)
        for i in range(1, q + 1):
            if len(part.kernels[i]) > g * q * q * n ** (1 - max(1, i) / q) + 1e-9:
                raise InvariantError(f"|K_{i}| exceeds gamma q^2 n^(1-max(1,i)/q)")


class WordOracle:
    """Query access to a word with instrumentation counters."""

    def __init__(self, x: Sequence[int]):
        self._x = tuple(int(a) for a in x)
        self.n = len(self._x)
        self.sampling_steps = 0
        self.queries = 0

    def sample(self, p: float, seed, cap_factor: float = 2.0) -> tuple[tuple, bool, dict]:
        Q, aborted = sample_coords(self.n, p, seed, cap_factor)
        self.sampling_steps += 1
        observed = {}
        if not aborted:
            observed = {i: self._x[i] for i in Q}
            self.queries += len(Q)
        return Q, aborted, observed


def _as_oracle(x) -> WordOracle:
    return x if isinstance(x, WordOracle) else WordOracle(x)


def _rng(seed):
    if isinstance(seed, (list, tuple)):
        return np.random.default_rng([int(v) for v in seed])
    return np.random.default_rng(seed)


def sample_coords(n: int, p: float, seed, cap_factor: float = 2.0) -> tuple[tuple, bool]:
    """Include every coordinate independently with probability p."""
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    mask = _rng(seed).random(n) < p
    Q = tuple(int(i) for i in np.flatnonzero(mask))
    return Q, len(Q) >= cap_factor * p * n


def _kappa_tuple(side: VoteSide, j: int, kappa) -> tuple:
    K = sorted(side.partition.kernels[j])
    if isinstance(kappa, Mapping):
        missing = [i for i in K if i not in kappa]
        if missing:
            raise StructuralError(f"kappa does not assign kernel coordinates {missing}")
        return tuple(int(kappa[i]) for i in K)
    kappa = tuple(kappa)
    if len(kappa) != len(K):
        raise StructuralError(f"kappa has {len(kappa)} symbols, kernel K_{j} has {len(K)} coordinates")
    return kappa


def _visible(side: VoteSide, j: int, Q, observed: Mapping[int, int]) -> list:
    """Members of D_j whose petal lies in Q and agrees with the observed symbols."""
    Qs = Q if isinstance(Q, (set, frozenset)) else set(Q)
    out = []
    for m, petal, kern in side.groups[j]:
        if all(i in Qs and observed.get(i) == a for i, a in petal):
            out.append((m, petal, kern))
    return out


def _votes_from(visible: list, kappa_map: Mapping[int, int], j: int, alpha: float) -> int:
    counted = [(m, petal) for m, petal, kern in visible if all(kappa_map[i] == a for i, a in kern)]
    if j != 1:
        return len(counted)
    per_coord = Counter(petal[0][0] for _, petal in counted)
    return sum(c for c in per_coord.values() if c < alpha)


def count_votes(pre: PreparedSampler, b: int, j: int, kappa, Q, observed, z=None) -> int:
    """Votes v for symbol b in D_j under kernel assignment kappa."""
    z = pre.zs[0] if z is None else z
    side = pre.side(z, b)
    if not 1 <= j <= pre.config.q:
        raise StructuralError(f"j must lie in 1..{pre.config.q}")
    K = sorted(side.partition.kernels[j])
    kt = _kappa_tuple(side, j, kappa)
    obs = observed if isinstance(observed, Mapping) else {i: observed[i] for i in Q}
    visible = _visible(side, j, Q, obs)
    return _votes_from(visible, dict(zip(K, kt)), j, pre.config.alpha)


def _enumerate(pre: PreparedSampler, side: VoteSide, Q, observed) -> dict | None:
    """First (j, kappa) in the fixed order whose vote count reaches tau_j."""
    cfg = pre.config
    taus = cfg.thresholds(side.support)
    s = cfg.alphabet_size
    Qs = set(Q)
    for j in range(1, cfg.q + 1):
        if not side.groups[j]:
            continue
        visible = _visible(side, j, Qs, observed)
        if len(visible) < taus[j - 1]:
            continue
        K = sorted(side.partition.kernels[j])
        if K and s ** len(K) > cfg.budget:
            raise BudgetError(f"kernel K_{j} needs {s}^{len(K)} assignments, budget {cfg.budget}")
        for kt in itertools.product(range(s), repeat=len(K)):
            v = _votes_from(visible, dict(zip(K, kt)), j, cfg.alpha)
            if v >= taus[j - 1]:
                return {"j": j, "kappa": list(kt), "votes": v, "threshold": taus[j - 1]}
    return None


@dataclass(frozen=True)
class RunResult:
    output: int
    Q: tuple
    aborted: bool
    trigger: Mapping | None
    seed: Any
    z: Any = None
    side_triggers: Mapping | None = None

    def to_json(self) -> dict:
        d = {
            "output": output_name(self.output),
            "Q": list(self.Q),
            "aborted": self.aborted,
            "trigger": self.trigger,
            "seed": self.seed if not isinstance(self.seed, tuple) else list(self.seed),
            "z": self.z,
        }
        if self.side_triggers is not None:
            d["side_triggers"] = {str(k): v for k, v in self.side_triggers.items()}
        return d


def _standard_output(pre, z, Q, aborted, observed, seed) -> RunResult:
    vote = pre.vote_symbol
    if aborted:
        return RunResult(1 - vote, Q, True, None, seed, z)
    trig = _enumerate(pre, pre.side(z, vote), Q, observed)
    return RunResult(vote if trig else 1 - vote, Q, False, trig, seed, z)


def _relaxed_output(pre, z, Q, aborted, observed, seed) -> RunResult:
    if aborted:
        return RunResult(BOT, Q, True, None, seed, z, side_triggers={0: None, 1: None})
    trig = {b: _enumerate(pre, pre.side(z, b), Q, observed) for b in (0, 1)}
    crossed = [b for b in (0, 1) if trig[b] is not None]
    out = crossed[0] if len(crossed) == 1 else BOT
    return RunResult(out, Q, False, trig.get(out) if out != BOT else None, seed, z, side_triggers=trig)


def _decide(pre, z, Q, aborted, observed, seed) -> RunResult:
    if pre.relaxed:
        return _relaxed_output(pre, z, Q, aborted, observed, seed)
    return _standard_output(pre, z, Q, aborted, observed, seed)


def run_sample_based(pre: PreparedSampler, x, z=None, seed=0) -> RunResult:
    """One execution of N: a single sampling step, then the enumeration."""
    if pre.relaxed:
        raise StructuralError("use run_relaxed for relaxed samplers")
    z = pre.zs[0] if z is None else z
    oracle = _as_oracle(x)
    Q, aborted, observed = oracle.sample(pre.config.p, seed, pre.config.cap_factor)
    return _standard_output(pre, z, Q, aborted, observed, seed)


def run_relaxed(pre: PreparedSampler, x, z=None, seed=0) -> RunResult:
    """Shared sampling step for both sides; output b if only side b crosses, else BOT."""
    if not pre.relaxed:
        raise StructuralError("run_relaxed needs a relaxed sampler")
    z = pre.zs[0] if z is None else z
    oracle = _as_oracle(x)
    Q, aborted, observed = oracle.sample(pre.config.p, seed, pre.config.cap_factor)
    return _relaxed_output(pre, z, Q, aborted, observed, seed)


def repetition_seed(seed, r: int):
    return seed if r == 0 else (seed, r) if not isinstance(seed, tuple) else (*seed, r)


def _mode(values: Sequence[int], tie: int) -> int:
    counts = Counter(values)
    top = max(counts.values())
    winners = [b for b, c in counts.items() if c == top]
    return winners[0] if len(winners) == 1 else tie


@dataclass(frozen=True)
class GlobalDecodeResult:
    outputs: tuple
    repetitions: int
    sampling_steps: int
    seed: Any

    def to_json(self) -> dict:
        return {
            "outputs": [output_name(b) for b in self.outputs],
            "repetitions": self.repetitions,
            "sampling_steps": self.sampling_steps,
            "seed": self.seed,
        }


def global_decode(pre: PreparedSampler, w, seed=0, repetitions: int = 1) -> GlobalDecodeResult:
    """Decode every index from one sampling stage per repetition.

    Each repetition samples Q once and reuses it for the enumeration at
    every explicit input; per-index outputs are combined by plurality with
    ties resolved to BOT.
    """
    oracle = _as_oracle(w)
    per_index: dict = defaultdict(list)
    memo: dict = {}
    for r in range(repetitions):
        Q, aborted, observed = oracle.sample(pre.config.p, repetition_seed(seed, r), pre.config.cap_factor)
        key = (Q, aborted)
        if key not in memo:
            memo[key] = tuple(_decide(pre, z, Q, aborted, observed, seed).output for z in pre.zs)
        for z, b in zip(pre.zs, memo[key]):
            per_index[z].append(b)
    tie = BOT if pre.relaxed else 1 - pre.vote_symbol
    outputs = tuple(_mode(per_index[z], tie) for z in pre.zs)
    return GlobalDecodeResult(outputs, repetitions, oracle.sampling_steps, seed)


def shared_sample_multirun(
    pres: Sequence[PreparedSampler], x, zs: Sequence | None = None, seed=0, memo: dict | None = None
) -> list[RunResult]:
    """Run several samplers on one shared sampling step.

    ``memo`` may carry verdicts across calls on the same word: they depend
    only on the sampled set, so repeated samples reuse earlier enumerations.
    """
    if not pres:
        return []
    n, p = pres[0].config.n, pres[0].config.p
    for pre in pres[1:]:
        if pre.config.n != n or pre.config.p != p or pre.config.alphabet_size != pres[0].config.alphabet_size:
            raise StructuralError("shared sampling needs equal n, alphabet and p")
    zs = [pre.zs[0] for pre in pres] if zs is None else list(zs)
    oracle = _as_oracle(x)
    Q, aborted, observed = oracle.sample(p, seed, pres[0].config.cap_factor)
    key = (Q, aborted, tuple(zs))
    if memo is not None and key in memo:
        return [replace_seed(r, seed) for r in memo[key]]
    results = [_decide(pre, z, Q, aborted, observed, seed) for pre, z in zip(pres, zs)]
    if memo is not None:
        memo[key] = results
    return results


def replace_seed(result: RunResult, seed) -> RunResult:
    return RunResult(result.output, result.Q, result.aborted, result.trigger, seed, result.z, result.side_triggers)


def tuples_to_json(tuples: Sequence[DescriptionTuple]) -> list:
    return [[list(tp.S), list(tp.a_S), tp.b, tp.s, tp.t] for tp in tuples]


def tuples_from_json(rows) -> tuple:
    return tuple(DescriptionTuple(tuple(S), tuple(a), int(b), int(s), int(t)) for S, a, b, s, t in rows)


def sampler_to_json(pre: PreparedSampler) -> dict:
    return {
        "format": 1,
        "kind": "prepared_sampler",
        "name": pre.name,
        "instance": pre.instance,
        "relaxed": pre.relaxed,
        "flipped": pre.flipped,
        "config": pre.config.to_json(),
        "sides": [
            {
                "z": sd.z,
                "b": sd.b,
                "support": sd.support,
                "tuples": tuples_to_json(sd.tuples),
                "partition": {
                    "kernels": [sorted(K) for K in sd.partition.kernels],
                    "daisies": [list(D) for D in sd.partition.daisies],
                },
            }
            for z in pre.zs
            for sd in pre.sides[z]
        ],
    }


def sampler_from_json(obj: Mapping) -> PreparedSampler:
    if obj.get("format") != 1:
        raise StructuralError(f"unsupported sampler format {obj.get('format')!r}")
    config = SamplerConfig.from_json(obj["config"])
    sides: dict = {}
    for d in obj["sides"]:
        tuples = tuples_from_json(d["tuples"])
        sets = tuple(tp.S for tp in tuples)
        part = DaisyPartition(
            config.n, config.q, sets,
            tuple(tuple(D) for D in d["partition"]["daisies"]),
            tuple(frozenset(K) for K in d["partition"]["kernels"]),
        )
        sides.setdefault(d["z"], []).append(VoteSide(d["z"], d["b"], d["support"], tuples, part))
    return PreparedSampler(
        config, {z: tuple(v) for z, v in sides.items()}, obj["relaxed"], obj.get("flipped", False),
        obj.get("name", ""), obj.get("instance"),
    )


__all__ = [
    "GlobalDecodeResult",
    "PreparedSampler",
    "RunResult",
    "SamplerConfig",
    "WordOracle",
    "capping_parameter",
    "count_votes",
    "global_decode",
    "preprocess",
    "run_relaxed",
    "run_sample_based",
    "sample_coords",
    "sampler_from_json",
    "sampler_gamma",
    "sampler_to_json",
    "sampling_probability",
    "shared_sample_multirun",
]

