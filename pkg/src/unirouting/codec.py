"""Versioned JSON files for instances and solutions."""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
import tempfile

import numpy as np

from .instance import OMEGA_FIELDS, UnifiedInstance, euclidean
from .variants import ConstraintSpec, SpecError

VERSION = 1


class CodecError(ValueError):
    reason = "codec"


class VersionError(CodecError):
    reason = "version"


class MalformedError(CodecError):
    reason = "malformed"


class SizeError(CodecError):
    reason = "size"


def _num(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r} cannot be written")
    s = "%.17g" % x
    return s if any(c in s for c in ".en") else s + ".0"


def dumps(obj) -> str:
    """JSON text with every real written at 17 significant digits."""
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def instance_to_dict(inst: UnifiedInstance) -> dict:
    nodes = []
    for i in range(inst.n_nodes):
        rec = {"eta": inst.rho[i, 0], "x": inst.rho[i, 1], "y": inst.rho[i, 2]}
        rec.update({k: inst.omega[i, c] for c, k in enumerate(OMEGA_FIELDS)})
        rec["type"] = [int(b) for b in inst.xi[i]]
        nodes.append(rec)
    pairs = None
    if inst.relation is not None:
        ii, jj = np.nonzero(inst.relation == 0)
        pairs = [[int(a), int(b)] for a, b in zip(ii, jj) if a < b]
    return {
        "version": VERSION,
        "spec": inst.spec.to_dict(),
        "seed": int(inst.seed),
        "depots": inst.depot_indices,
        "nodes": nodes,
        "dist": None if inst.symmetric else inst.dist.ravel(),
        "relation_pairs": pairs,
    }


def to_text(inst: UnifiedInstance) -> str:
    return dumps(instance_to_dict(inst)) + "\n"


def content_hash(inst: UnifiedInstance) -> str:
    return hashlib.sha256(to_text(inst).encode()).hexdigest()


def _real(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise MalformedError(f"{where}: expected a finite number, got {v!r}")
    return float(v)


def instance_from_dict(doc) -> UnifiedInstance:
    if not isinstance(doc, dict):
        raise MalformedError("top level must be an object")
    if "version" not in doc:
        raise VersionError("missing 'version' key")
    if doc["version"] != VERSION:
        raise VersionError(f"unsupported version {doc['version']!r}, expected {VERSION}")
    try:
        spec = ConstraintSpec.from_dict(doc["spec"])
        seed = int(doc["seed"])
        nodes = doc["nodes"]
    except SpecError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedError(f"bad spec/seed/nodes: {exc}") from exc
    n = len(nodes)
    if n != spec.n_nodes:
        raise SizeError(f"{n} nodes listed but spec implies {spec.n_nodes}")
    rho = np.zeros((n, 3))
    omega = np.zeros((n, 6))
    xi = np.zeros((n, 5), dtype=np.int8)
    for i, rec in enumerate(nodes):
        try:
            rho[i] = [_real(rec[k], f"node {i}.{k}") for k in ("eta", "x", "y")]
            omega[i] = [_real(rec[k], f"node {i}.{k}") for k in OMEGA_FIELDS]
            bits = rec["type"]
        except (KeyError, TypeError) as exc:
            raise MalformedError(f"node {i}: {exc}") from exc
        if len(bits) != 5 or any(b not in (0, 1) or isinstance(b, float) for b in bits):
            raise MalformedError(f"node {i}: type must be five 0/1 bits")
        xi[i] = bits
    raw = doc.get("dist")
    if raw is None:
        if spec.asymmetric:
            raise MalformedError("asymmetric instances must carry their distance matrix")
        dist = euclidean(rho[:, 1:])
    else:
        flat = np.asarray(raw, dtype=object).ravel()
        if flat.size != n * n:
            raise SizeError(f"distance matrix has {flat.size} entries, expected {n * n}")
        dist = np.array([_real(v, "dist") for v in flat]).reshape(n, n)
    relation = None
    pairs = doc.get("relation_pairs")
    if pairs is not None:
        relation = np.ones((n, n), dtype=np.int8)
        for pr in pairs:
            if len(pr) != 2 or not all(isinstance(v, int) and 0 <= v < n for v in pr):
                raise MalformedError(f"bad relation pair {pr!r}")
            relation[pr[0], pr[1]] = relation[pr[1], pr[0]] = 0
    try:
        return UnifiedInstance(rho, omega, xi, dist, relation, spec, seed)
    except ValueError as exc:
        raise MalformedError(str(exc)) from exc


def atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_instance(inst: UnifiedInstance, target) -> None:
    text = to_text(inst)
    if isinstance(target, (str, os.PathLike)):
        atomic_write(target, text)
    else:
        target.write(text)


def read_instance(source) -> UnifiedInstance:
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    elif isinstance(source, io.IOBase) or hasattr(source, "read"):
        text = source.read()
    else:
        raise TypeError("expected a path or a readable stream")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedError(f"not valid JSON: {exc}") from exc
    return instance_from_dict(doc)


def solution_to_dict(inst, sequence, objective, feasible, extra=None) -> dict:
    doc = {
        "version": VERSION,
        "instance_ref": content_hash(inst),
        "sequence": [int(v) for v in sequence],
        "objective": float(objective.value),
        "sense": "max" if objective.sense == "maximize" else "min",
        "feasible": bool(feasible),
    }
    if extra:
        doc.update(extra)
    return doc
