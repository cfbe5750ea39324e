"""Command-line experiment runner.

Subcommands: ``partition``, ``transform``, ``run``, ``verify`` and ``zoo list``.
Exit codes: 0 success, 1 run or suite failure, 2 parse error, 3 budget
exceeded, 4 derandomization failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

from . import __version__
from .core import BOT, BudgetError, StructuralError, extract_tuples, make_word, normalize, output_name, word_str
from .daisy import check_partition, partition, petal_overlap_bound_check
from .oracle import check_robustness, distributions_equal, volume_lemma_suite, wilson_interval
from .sampler import (
    default_budget,
    preprocess,
    run_relaxed,
    run_sample_based,
    sampler_from_json,
    sampler_to_json,
)
from .serialize import algorithm_from_json, algorithm_to_json, dumps, read_json, write_json
from .transforms import DerandomizationError, prepare
from .zoo import UnsupportedInstance, get_instance, instance_from_params, names

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_BUDGET, EXIT_DERANDOMIZE = 0, 1, 2, 3, 4
CSV_COLUMNS = ("instance", "seed", "p", "output", "aborted", "triggering_j", "votes", "elapsed",
               "z", "input", "label", "correct")


class ParseError(ValueError):
    pass


def config_hash(config: dict) -> str:
    return hashlib.sha256(dumps(config).encode()).hexdigest()


def _stamp(config: dict, seed=None) -> dict:
    return {"config": config, "config_hash": config_hash(config), "seed": seed, "version": __version__}


def _emit(obj, out) -> None:
    if out:
        write_json(out, obj)
    else:
        print(json.dumps(obj, sort_keys=True, indent=1))


def parse_seeds(text: str | None, single: int | None) -> list[int]:
    """``"0:1000"`` is a half-open range; ``"1,5,9"`` a list."""
    if text is None:
        return [0 if single is None else single]
    try:
        if ":" in text:
            lo, hi = text.split(":")
            return list(range(int(lo), int(hi)))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ParseError(f"bad seed specification {text!r}") from exc


def _load_algorithm(args):
    if getattr(args, "algorithm", None):
        try:
            return algorithm_from_json(read_json(args.algorithm))
        except (OSError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"cannot read algorithm file {args.algorithm}: {exc}") from exc
    if not args.instance:
        raise ParseError("give --instance or --algorithm")
    return get_instance(args.instance).algorithm


def _read_sets(path, n, q):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(str(exc)) from exc
    try:
        obj = json.loads(text) if text.strip() else []
    except json.JSONDecodeError:
        try:
            obj = [[int(t) for t in line.replace(",", " ").split()] for line in text.splitlines() if line.strip()]
        except ValueError as exc:
            raise ParseError(f"malformed set file {path}") from exc
    if isinstance(obj, dict):
        n, q, obj = obj.get("n", n), obj.get("q", q), obj.get("sets", [])
    if not isinstance(obj, list) or not all(isinstance(S, list) and all(isinstance(i, int) for i in S) for S in obj):
        raise ParseError(f"malformed set file {path}")
    if n is None or q is None:
        raise ParseError("the set file needs n and q (in the file or via --n/--q)")
    return obj, int(n), int(q)


def cmd_partition(args) -> int:
    config = {"command": "partition", "instance": args.instance, "sets": args.sets, "n": args.n, "q": args.q,
              "z": args.z, "side": args.side}
    if args.sets:
        sets, n, q = _read_sets(args.sets, args.n, args.q)
        try:
            jobs = [("sets", partition(sets, n, q))]
        except StructuralError as exc:
            raise ParseError(str(exc)) from exc
    else:
        alg = normalize(_load_algorithm(args))
        jobs = []
        for z in alg.zs:
            if args.z is not None and str(z) != args.z:
                continue
            for b in (0, 1):
                if args.side is not None and b != args.side:
                    continue
                sets = [t.S for t in extract_tuples(alg, z) if t.b == b]
                jobs.append((f"z={z},b={b}", partition(sets, alg.n, alg.q)))
    body = []
    ok = True
    for label, part in jobs:
        check = check_partition(part)
        overlap = petal_overlap_bound_check(part)
        ok &= check["ok"] and overlap["ok"]
        body.append({"collection": label, "partition": part.to_json(), "check": check, "overlap": overlap})
    report = {**_stamp(config), "ok": ok, "partitions": body}
    _emit(report, args.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_transform(args) -> int:
    config = {"command": "transform", "instance": args.instance, "algorithm": args.algorithm,
              "prepare": not args.no_prepare, "seed": args.seed, "budget": args.budget,
              "overrides": _overrides(args)}
    alg = _load_algorithm(args)
    prep_report = None
    if not args.no_prepare:
        alg, rep = prepare(alg, seed=args.seed, max_attempts=args.max_attempts)
        prep_report = rep.to_json()
    pre = preprocess(alg, budget=args.budget)
    pre = _apply_overrides(pre, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "sampler.json", sampler_to_json(pre))
    if args.save_algorithm:
        write_json(out / "algorithm.json", algorithm_to_json(alg))
    report = {
        **_stamp(config, args.seed),
        "sampler": {"name": pre.name, "relaxed": pre.relaxed, "flipped": pre.flipped,
                    "config": pre.config.to_json(), "p_clamped": pre.config.p_clamped,
                    "thresholds": {str(z): list(pre.thresholds(z)) for z in pre.zs},
                    "kernel_sizes": {str(z): [len(K) for K in pre.kernels(z)] for z in pre.zs}},
        "preparation": prep_report,
    }
    write_json(out / "report.json", report)
    print(json.dumps({"config_hash": report["config_hash"], "out": str(out)}))
    return EXIT_OK


def _overrides(args) -> dict:
    return {k: v for k, v in (("p", args.override_p), ("gamma", args.override_gamma),
                              ("cap_factor", args.override_cap)) if v is not None}


def _apply_overrides(pre, args, budget=None):
    ov = _overrides(args)
    if not ov and budget is None:
        return pre
    return pre.with_config(pre.config.with_overrides(budget=budget, **ov))


def _read_inputs(path, pre, inst):
    """Lines of ``word`` or ``z word``; the label column is filled when the instance is known."""
    rows = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ParseError(str(exc)) from exc
    for line in lines:
        parts = line.split()
        if not parts:
            continue
        try:
            if len(parts) == 1:
                z, w = pre.zs[0], parts[0]
            else:
                z, w = type(pre.zs[0])(parts[0]), parts[1]
            x = make_word(w, pre.config.alphabet_size, pre.config.n)
        except (ValueError, StructuralError) as exc:
            raise ParseError(f"bad input line {line!r}") from exc
        if z not in pre.zs:
            raise ParseError(f"unknown explicit input z={parts[0]}")
        label = inst.spec.membership(z, x) if inst is not None else None
        rows.append((z, x, label))
    return rows


def _correct(inst, pre, z, x, label, out) -> bool | None:
    if label is None or label < 0:
        return None
    if out == label:
        return True
    return pre.relaxed and out == BOT and inst is not None and inst.spec.valid is not None \
        and not inst.spec.valid(z, x)


def cmd_run(args) -> int:
    try:
        pre = sampler_from_json(read_json(args.sampler))
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"cannot read sampler {args.sampler}: {exc}") from exc
    pre = _apply_overrides(pre, args, budget=args.budget)
    seeds = parse_seeds(args.seeds, args.seed)
    inst = instance_from_params(pre.instance["params"]) if pre.instance else None
    if args.inputs:
        inputs = _read_inputs(args.inputs, pre, inst)
    elif inst is not None:
        inputs = [(z, x, b) for z in pre.zs for x, b in inst.domain(z)]
    else:
        raise ParseError("no --inputs given and the sampler carries no instance to generate them")
    config = {"command": "run", "sampler": sampler_hash(pre), "seeds": seeds,
              "inputs": [[str(z), word_str(x)] for z, x, _ in inputs], "overrides": dict(pre.config.overrides)}
    digest = config_hash(config)
    runner = run_relaxed if pre.relaxed else run_sample_based
    name = pre.name or (pre.instance or {}).get("name", "")

    def one(job):
        z, x, label, seed = job
        t0 = time.perf_counter()
        r = runner(pre, x, z, seed=seed)
        elapsed = time.perf_counter() - t0
        trig = r.trigger or {}
        return {
            "instance": name, "seed": seed, "p": pre.config.p, "output": output_name(r.output),
            "aborted": r.aborted, "triggering_j": trig.get("j", ""), "votes": trig.get("votes", ""),
            "elapsed": f"{elapsed:.6f}" if args.timing else "", "z": z, "input": word_str(x),
            "label": "" if label is None else output_name(label) if label >= 0 else "outside",
            "correct": _correct(inst, pre, z, x, label, r.output),
        }

    jobs = [(z, x, label, seed) for z, x, label in inputs for seed in seeds]
    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        rows = list(pool.map(one, jobs))  # map preserves submission order
    text = _format_rows(rows, args.format, digest)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    agg = aggregate(rows, alpha=args.alpha)
    summary = {**_stamp(config, seeds[0] if len(seeds) == 1 else None), "aggregate": agg}
    if args.summary:
        write_json(args.summary, summary)
    else:
        print(json.dumps({"config_hash": digest, "overall": agg["overall"]}), file=sys.stderr)
    return EXIT_OK


def sampler_hash(pre) -> str:
    return hashlib.sha256(dumps(sampler_to_json(pre)).encode()).hexdigest()


def _format_rows(rows, fmt, digest) -> str:
    if fmt == "jsonl":
        return "".join(dumps({**r, "config_hash": digest}) + "\n" for r in rows)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=(*CSV_COLUMNS, "config_hash"), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "correct": "" if r["correct"] is None else int(r["correct"]), "config_hash": digest})
    return buf.getvalue()


def aggregate(rows, alpha: float = 0.01) -> dict:
    """Per-input success frequencies with Wilson intervals, plus the worst input."""
    per: dict = {}
    for r in rows:
        if r["correct"] is None:
            continue
        k = f"z={r['z']}:{r['input']}"
        hit, tot = per.get(k, (0, 0))
        per[k] = (hit + bool(r["correct"]), tot + 1)
    inputs = {}
    for k, (hit, tot) in per.items():
        lo, hi = wilson_interval(hit, tot, alpha)
        inputs[k] = {"successes": hit, "trials": tot, "frequency": hit / tot, "wilson": [lo, hi],
                     "meets_two_thirds": hi >= 2 / 3}
    worst = min(inputs, key=lambda k: inputs[k]["frequency"]) if inputs else None
    aborted = sum(bool(r["aborted"]) for r in rows)
    return {
        "inputs": inputs,
        "overall": {"runs": len(rows), "aborted": aborted, "worst_input": worst,
                    "all_meet_two_thirds": all(v["meets_two_thirds"] for v in inputs.values())},
    }


def cmd_verify(args) -> int:
    config = {"command": "verify", "instance": args.instance, "rho0": args.rho0, "rho1": args.rho1,
              "budget": args.budget}
    inst = get_instance(args.instance)
    alg = inst.algorithm
    rho0 = Fraction(args.rho0) if args.rho0 is not None else None
    rho1 = Fraction(args.rho1) if args.rho1 is not None else None
    suites: dict = {}
    warnings = []

    rob = check_robustness(alg, inst.spec, rho0=rho0, rho1=rho1, budget=args.budget)
    suites["robustness"] = {"ok": rob.ok, **rob.to_json()}
    if not rob.exhaustive:
        warnings.append("robustness checked on random words only (n beyond the exhaustive budget)")

    exhaustive = alg.alphabet.size ** alg.n <= (args.budget or 2**16)
    if exhaustive:
        suites["normalize"] = {"ok": distributions_equal(alg, normalize(alg))}
    else:
        suites["normalize"] = {"ok": True, "skipped": "beyond exhaustive budget"}
        warnings.append("normalize equivalence skipped (beyond exhaustive budget)")

    suites["volume_lemma"] = _volume_suite(inst, alg, exhaustive, rho0, rho1)

    norm = normalize(alg)
    parts = []
    for z in norm.zs:
        for b in (0, 1):
            part = partition([t.S for t in extract_tuples(norm, z) if t.b == b], norm.n, norm.q)
            c, o = check_partition(part), petal_overlap_bound_check(part)
            parts.append({"z": z, "b": b, "ok": c["ok"] and o["ok"], "failures": c["failures"],
                          "overlap_violations": o["violations"]})
    suites["partition"] = {"ok": all(p["ok"] for p in parts), "collections": parts}

    failed = [k for k, v in suites.items() if not v["ok"]]
    report = {**_stamp(config), "instance": inst.name, "exhaustive": exhaustive and rob.exhaustive,
              "warnings": warnings, "failed": failed, "suites": suites}
    _emit(report, args.out)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def _volume_suite(inst, alg, exhaustive, rho0, rho1) -> dict:
    if alg.relaxed:
        return {"ok": True, "skipped": "relaxed algorithm"}
    if not exhaustive or alg.n > 8:
        return {"ok": True, "skipped": "n > 8"}
    if rho0 is not None or rho1 is not None:
        alg = alg.with_trees(alg.trees, rho0=rho0 if rho0 is not None else alg.rho0,
                             rho1=rho1 if rho1 is not None else alg.rho1)
    return volume_lemma_suite(alg, inst.spec)


def cmd_zoo(args) -> int:
    for nm in names():
        inst = get_instance(nm)
        a = inst.algorithm
        print(f"{nm}\tkind={inst.kind}\tn={a.n}\tq={a.q}\trho0={a.rho0}\trho1={a.rho1}\tsigma={a.sigma}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robustlocal", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def add_source(p):
        p.add_argument("--instance", help="zoo instance name")
        p.add_argument("--algorithm", help="algorithm JSON file")

    def add_overrides(p):
        p.add_argument("--override-p", type=float)
        p.add_argument("--override-gamma", type=float)
        p.add_argument("--override-cap", type=float, help="sample cap factor (cap = factor * p * n)")
        p.add_argument("--budget", type=int, default=None, help="kernel enumeration budget")

    p = sub.add_parser("partition", help="daisy partition of a set file or of an instance's tuples")
    add_source(p)
    p.add_argument("--sets", help="JSON list of sets, or {n, q, sets}; or one set per line")
    p.add_argument("--n", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--z")
    p.add_argument("--side", type=int, choices=(0, 1))
    p.add_argument("--out")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("transform", help="prepare and preprocess into a persisted sampler")
    add_source(p)
    add_overrides(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-prepare", action="store_true", help="skip error and randomness reduction")
    p.add_argument("--max-attempts", type=int, default=20, help="derandomization draws before giving up")
    p.add_argument("--save-algorithm", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("run", help="execute a persisted sampler over seeds and inputs")
    p.add_argument("--sampler", required=True)
    p.add_argument("--inputs", help="file of words, one per line, optionally prefixed by z")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", help="range a:b or comma list")
    add_overrides(p)
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--out")
    p.add_argument("--summary", help="write the aggregate JSON here")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--timing", action="store_true", help="fill the elapsed column (breaks byte-identical replay)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run the oracle suites on a zoo instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--rho0")
    p.add_argument("--rho1")
    p.add_argument("--budget", type=int, default=None, help="exhaustive enumeration budget")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("zoo", help="zoo utilities")
    zsub = p.add_subparsers(dest="zoo_command", required=True)
    zl = zsub.add_parser("list")
    zl.set_defaults(func=cmd_zoo)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    if getattr(args, "budget", None) is None and args.command in ("transform", "run"):
        args.budget = None if args.command == "run" else default_budget()
    try:
        return args.func(args)
    except (ParseError, UnsupportedInstance) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except BudgetError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except DerandomizationError as exc:
        print(f"derandomization failed: {exc}", file=sys.stderr)
        return EXIT_DERANDOMIZE
    except StructuralError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
