"""Checkpoint directories: one binary file per tensor plus ``state.json``.

Tensor file layout (little endian)::

    b"TDTN" | u32 name length | name (utf-8) | u32 ndim | u32 dims[ndim] | f32 data
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"TDTN"


class CheckpointError(RuntimeError):
    pass


def write_tensor(path, name: str, tensor: torch.Tensor) -> None:
    arr = tensor.detach().cpu().to(torch.float32).numpy()
    encoded = name.encode("utf-8")
    header = MAGIC + struct.pack("<I", len(encoded)) + encoded + struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.astype("<f4").tobytes())


def read_tensor(path) -> tuple[str, torch.Tensor]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    (n,) = struct.unpack_from("<I", data, 4)
    name = data[8:8 + n].decode("utf-8")
    pos = 8 + n
    (ndim,) = struct.unpack_from("<I", data, pos)
    pos += 4
    shape = struct.unpack_from(f"<{ndim}I", data, pos)
    pos += 4 * ndim
    count = int(np.prod(shape)) if ndim else 1
    arr = np.frombuffer(data, dtype="<f4", count=count, offset=pos)
    if arr.size != count:
        raise CheckpointError(f"{path}: truncated tensor data")
    return name, torch.from_numpy(arr.astype(np.float32).reshape(shape))


def save_state_dict(directory: Path, prefix: str, state: dict[str, torch.Tensor]) -> list[str]:
    files = []
    for name, tensor in state.items():
        full = f"{prefix}.{name}"
        fname = f"{full}.tensor"
        write_tensor(directory / fname, full, tensor)
        files.append(fname)
    return files


def load_state_dict(directory: Path, prefix: str, names) -> dict[str, torch.Tensor]:
    out = {}
    for name in names:
        path = directory / f"{prefix}.{name}.tensor"
        if not path.is_file():
            raise CheckpointError(f"missing tensor file {path.name}")
        stored, tensor = read_tensor(path)
        if stored != f"{prefix}.{name}":
            raise CheckpointError(f"{path.name} holds {stored!r}")
        out[name] = tensor
    return out


def optimizer_to_files(directory: Path, prefix: str, optimizer: torch.optim.Optimizer) -> dict:
    sd = optimizer.state_dict()
    state = {}
    for idx, slots in sd["state"].items():
        entry = {}
        for key, value in slots.items():
            if torch.is_tensor(value) and value.numel() > 1 or key.startswith("exp_avg"):
                fname = f"{prefix}.{idx}.{key}.tensor"
                write_tensor(directory / fname, f"{prefix}.{idx}.{key}", value)
                entry[key] = {"file": fname}
            else:
                entry[key] = float(value)
        state[str(idx)] = entry
    return {"param_groups": sd["param_groups"], "state": state}


def optimizer_from_files(directory: Path, meta: dict) -> dict:
    state = {}
    for idx, slots in meta["state"].items():
        entry = {}
        for key, value in slots.items():
            if isinstance(value, dict):
                _, entry[key] = read_tensor(directory / value["file"])
            else:
                entry[key] = torch.tensor(value, dtype=torch.float32)
        state[int(idx)] = entry
    return {"param_groups": meta["param_groups"], "state": state}


def write_json_atomic(path: Path, payload: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=1, sort_keys=True))
    os.replace(tmp, path)
