"""Binary checkpoint: magic, JSON header with a tensor manifest, float32 payload."""

from __future__ import annotations

import json
import os
import struct

import numpy as np
import torch

from .model import PolicyConfig, UnifiedPolicy

MAGIC = b"UNIRTCK1"
FORMAT_VERSION = 1
LAMBDA_DIM = 13


class CheckpointError(ValueError):
    pass


def to_bytes(model: UnifiedPolicy, extra=None) -> bytes:
    manifest = []
    chunks = []
    offset = 0
    for name, p in model.named_parameters():
        arr = p.detach().cpu().numpy().astype("<f4", copy=False)
        raw = np.ascontiguousarray(arr).tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": "float32",
                         "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "version": FORMAT_VERSION,
        "lambda_dim": LAMBDA_DIM,
        "config": model.config.to_dict(),
        "manifest": manifest,
        "extra": extra or {},
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<I", len(head)) + head + b"".join(chunks)


def save(model: UnifiedPolicy, path, extra=None) -> None:
    data = to_bytes(model, extra)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def read_header(data: bytes) -> tuple:
    if data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (n,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12:12 + n].decode())
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')!r}")
    return header, 12 + n


def from_bytes(data: bytes, dtype=torch.float32) -> tuple:
    header, start = read_header(data)
    config = PolicyConfig.from_dict(header["config"])
    model = UnifiedPolicy(config, seed=0, dtype=dtype)
    params = dict(model.named_parameters())
    names = [m["name"] for m in header["manifest"]]
    if sorted(names) != sorted(params):
        raise CheckpointError("manifest does not match the parameter set of its config")
    with torch.no_grad():
        for m in header["manifest"]:
            p = params[m["name"]]
            if list(p.shape) != m["shape"]:
                raise CheckpointError(f"{m['name']}: shape {m['shape']} != expected {list(p.shape)}")
            lo = start + m["offset"]
            arr = np.frombuffer(data[lo:lo + m["nbytes"]], dtype="<f4").reshape(m["shape"])
            p.copy_(torch.from_numpy(arr.astype(np.float32)).to(dtype))
    return model, header


def load(path, dtype=torch.float32) -> tuple:
    with open(path, "rb") as fh:
        return from_bytes(fh.read(), dtype)
