"""Versioned JSON for local algorithms.

Trees are nested objects: ``{"leaf": "0"}`` or ``{"q": i, "c": [...]}``.
Problem specs are not serialized; a zoo parameter block is stored instead
and the instance is rebuilt on load.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Mapping

from .core import BOT, Alphabet, Leaf, LocalAlgorithm, Node, StructuralError, output_name

FORMAT = 1
_LABELS = {"0": 0, "1": 1, "bot": BOT}


def tree_to_json(tree) -> dict:
    if isinstance(tree, Leaf):
        return {"leaf": output_name(tree.label)}
    return {"q": tree.coord, "c": [tree_to_json(c) for c in tree.children]}


def tree_from_json(obj: Mapping, intern: dict | None = None):
    intern = {} if intern is None else intern
    if "leaf" in obj:
        if obj["leaf"] not in _LABELS:
            raise StructuralError(f"bad leaf label {obj['leaf']!r}")
        t = Leaf(_LABELS[obj["leaf"]])
    else:
        t = Node(int(obj["q"]), [tree_from_json(c, intern) for c in obj["c"]])
    return intern.setdefault(t, t)


def algorithm_to_json(alg: LocalAlgorithm) -> dict:
    from .zoo import public_params

    # identical subtrees are stored once per z and referenced by index
    out_z = []
    for z in alg.zs:
        table: dict = {}
        refs = [table.setdefault(t, len(table)) for t in alg.trees_for(z)]
        out_z.append({"z": z, "distinct": [tree_to_json(t) for t in table], "trees": refs})
    return {
        "format": FORMAT,
        "kind": "local_algorithm",
        "name": alg.name,
        "n": alg.n,
        "alphabet_size": alg.alphabet.size,
        "q": alg.q,
        "sigma": str(alg.sigma),
        "rho0": str(alg.rho0),
        "rho1": str(alg.rho1),
        "relaxed": alg.relaxed,
        "instance": public_params(alg.spec) if alg.spec is not None and alg.spec.params else None,
        "inputs": out_z,
    }


def algorithm_from_json(obj: Mapping) -> LocalAlgorithm:
    if obj.get("format") != FORMAT or obj.get("kind") != "local_algorithm":
        raise StructuralError("not a format-1 local algorithm document")
    intern: dict = {}
    trees = {}
    for block in obj["inputs"]:
        distinct = [tree_from_json(t, intern) for t in block["distinct"]]
        trees[block["z"]] = tuple(distinct[i] for i in block["trees"])
    spec = None
    if obj.get("instance"):
        from .zoo import instance_from_params

        spec = instance_from_params(obj["instance"]).spec
    return LocalAlgorithm(
        n=int(obj["n"]), alphabet=Alphabet(int(obj["alphabet_size"])), trees=trees, q=int(obj["q"]),
        sigma=Fraction(obj["sigma"]), rho0=Fraction(obj["rho0"]), rho1=Fraction(obj["rho1"]),
        spec=spec, relaxed=bool(obj["relaxed"]), name=obj.get("name", ""),
    )


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, no whitespace variation."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
