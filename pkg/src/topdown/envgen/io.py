"""On-disk dataset layout.

    <root>/manifest.json
    <root>/<split>/ep_<seed>/obs_00000.png, target_00000.png, visibility_00000.pbm,
                             poses.csv, env.json
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .episode import Episode, simulate_episode
from .world import (
    EnvironmentSpec, GenerationConfig, Pose, sample_environment,
    SKY_COLOR, UNKNOWN_COLOR, MARKER_COLOR,
)

FORMAT_VERSION = 1
TEST_SEED_OFFSET = 500_000


class DatasetError(RuntimeError):
    """Missing, corrupt or inconsistent dataset on disk."""


def split_seed_ranges(root_seed: int, n_train: int, n_test: int) -> dict[str, tuple[int, int]]:
    """Disjoint half-open environment seed ranges for the train and test splits."""
    if max(n_train, n_test) > TEST_SEED_OFFSET:
        raise ValueError("too many environments per split")
    base = int(root_seed) * 1_000_000
    return {
        "train": (base, base + n_train),
        "test": (base + TEST_SEED_OFFSET, base + TEST_SEED_OFFSET + n_test),
    }


def generate_split(seed_range: tuple[int, int], config: GenerationConfig,
                   episodes_per_env: int = 1) -> list[Episode]:
    episodes = []
    for env_seed in range(*seed_range):
        env = sample_environment(env_seed, config)
        for k in range(episodes_per_env):
            ep_seed = env_seed if episodes_per_env == 1 else env_seed * 1000 + k
            episodes.append(simulate_episode(env, config=config, seed=ep_seed))
    return episodes


def generate_dataset(n_train: int, n_test: int, seed: int, config: GenerationConfig | None = None,
                     episodes_per_env: int = 1) -> tuple[dict[str, list[Episode]], dict]:
    config = config or GenerationConfig()
    if n_train < 1 or n_test < 0:
        raise ValueError("need at least one training environment")
    ranges = split_seed_ranges(seed, n_train, n_test)
    splits = {name: generate_split(r, config, episodes_per_env) for name, r in ranges.items()}
    return splits, ranges


# -- portable bitmap -------------------------------------------------------

def encode_pbm(mask: np.ndarray) -> bytes:
    h, w = mask.shape
    bits = np.packbits(mask.astype(bool), axis=1)  # 1 = black = visible
    return f"P4\n{w} {h}\n".encode("ascii") + bits.tobytes()


def decode_pbm(data: bytes) -> np.ndarray:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P4":
        raise DatasetError(f"not a binary PBM (magic {tokens[0]!r})")
    w, h = int(tokens[1]), int(tokens[2])
    pos += 1
    row_bytes = (w + 7) // 8
    raw = np.frombuffer(data[pos:pos + row_bytes * h], dtype=np.uint8)
    if raw.size != row_bytes * h:
        raise DatasetError("truncated PBM")
    return np.unpackbits(raw.reshape(h, row_bytes), axis=1)[:, :w].astype(bool)


# -- writing ---------------------------------------------------------------

def _png_bytes(img: np.ndarray) -> bytes:
    u8 = np.round(np.asarray(img) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8).save(buf, format="PNG")
    return buf.getvalue()


def _episode_files(ep: Episode) -> dict[str, bytes]:
    files: dict[str, bytes] = {}
    for i in range(len(ep)):
        files[f"obs_{i:05d}.png"] = _png_bytes(ep.frames[i])
        files[f"target_{i:05d}.png"] = _png_bytes(ep.targets[i])
        files[f"visibility_{i:05d}.pbm"] = encode_pbm(ep.visibility[i])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "x", "z", "yaw"])
    for i, p in enumerate(ep.poses):
        writer.writerow([i, repr(p.position[0]), repr(p.position[1]), repr(p.yaw)])
    files["poses.csv"] = buf.getvalue().encode("ascii")
    meta = {"episode_seed": ep.seed, "fov_deg": ep.fov_deg, "env": ep.env.to_dict()}
    files["env.json"] = json.dumps(meta, indent=1, sort_keys=True).encode("utf-8")
    return files


def _digest(files: dict[str, bytes]) -> str:
    h = hashlib.sha256()
    for name in sorted(files):
        h.update(name.encode("utf-8"))
        h.update(len(files[name]).to_bytes(8, "little"))
        h.update(files[name])
    return h.hexdigest()


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_dataset(episodes, root, config: GenerationConfig | None = None,
                  seed_ranges: dict | None = None) -> dict:
    """Write episodes (a list, or a mapping split -> list) under ``root``.

    The manifest is written last, atomically, and returned.
    """
    if not isinstance(episodes, dict):
        episodes = {"train": list(episodes)}
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    config = config or GenerationConfig()
    splits = {}
    for split, eps in episodes.items():
        entries = []
        seen = set()
        for ep in eps:
            if ep.seed in seen:
                raise ValueError(f"duplicate episode seed {ep.seed} in split {split!r}")
            seen.add(ep.seed)
            name = f"ep_{ep.seed}"
            ep_dir = root / split / name
            ep_dir.mkdir(parents=True, exist_ok=True)
            files = _episode_files(ep)
            for fname, data in files.items():
                (ep_dir / fname).write_bytes(data)
            entries.append({"dir": f"{split}/{name}", "episode_seed": ep.seed,
                            "env_seed": ep.env.seed, "length": len(ep),
                            "sha256": _digest(files)})
        splits[split] = {"episodes": entries}
        if seed_ranges and split in seed_ranges:
            splits[split]["seed_range"] = list(seed_ranges[split])

    total = hashlib.sha256()
    for split in sorted(splits):
        for e in splits[split]["episodes"]:
            total.update(e["sha256"].encode("ascii"))
    manifest = {
        "format_version": FORMAT_VERSION,
        "generation_config": config.to_dict(),
        "fov_deg": config.fov_deg,
        "colors": {
            "wall": list(config.wall_color), "floor": list(config.floor_color),
            "sky": list(SKY_COLOR), "unknown": list(UNKNOWN_COLOR), "marker": list(MARKER_COLOR),
            "objects": [list(c) for c in config.palette],
        },
        "splits": splits,
        "checksum": total.hexdigest(),
    }
    _atomic_write(root / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True).encode("utf-8"))
    return manifest


# -- reading ---------------------------------------------------------------

def read_manifest(root) -> dict:
    path = Path(root) / "manifest.json"
    if not path.is_file():
        raise DatasetError(f"no manifest at {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"corrupt manifest: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION or "splits" not in manifest:
        raise DatasetError("unsupported or incomplete manifest")
    return manifest


def _decode_png(data: bytes, name: str) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:  # PIL raises a zoo of exception types
        raise DatasetError(f"cannot decode {name}: {exc}") from exc
    arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return arr.astype(np.float32) / np.float32(255.0)


def _read_episode(ep_dir: Path, entry: dict, verify: bool) -> Episode:
    files = {p.name: p.read_bytes() for p in ep_dir.iterdir() if p.is_file()}
    if verify and _digest(files) != entry["sha256"]:
        raise DatasetError(f"checksum mismatch in {ep_dir}")
    T = int(entry["length"])
    try:
        meta = json.loads(files["env.json"])
        env = EnvironmentSpec.from_dict(meta["env"])
        rows = list(csv.DictReader(io.StringIO(files["poses.csv"].decode("ascii"))))
        frames = np.stack([_decode_png(files[f"obs_{i:05d}.png"], f"obs_{i:05d}.png") for i in range(T)])
        targets = np.stack([_decode_png(files[f"target_{i:05d}.png"], f"target_{i:05d}.png")
                            for i in range(T)])
        vis = np.stack([decode_pbm(files[f"visibility_{i:05d}.pbm"]) for i in range(T)])
    except KeyError as exc:
        raise DatasetError(f"missing file {exc} in {ep_dir}") from exc
    if len(rows) != T:
        raise DatasetError(f"poses.csv in {ep_dir} has {len(rows)} rows, expected {T}")
    poses = [Pose(position=(float(r["x"]), float(r["z"])), yaw=float(r["yaw"])) for r in rows]
    return Episode(env=env, frames=frames, poses=poses, visibility=vis, targets=targets,
                   seed=int(meta["episode_seed"]), fov_deg=float(meta["fov_deg"]))


def read_dataset(root, splits=None, verify: bool = True) -> dict[str, list[Episode]]:
    """Load every episode listed in the manifest, checking counts and checksums."""
    root = Path(root)
    manifest = read_manifest(root)
    out = {}
    for split, info in manifest["splits"].items():
        if splits is not None and split not in splits:
            continue
        entries = info["episodes"]
        split_dir = root / split
        on_disk = sorted(p.name for p in split_dir.iterdir() if p.is_dir()) if split_dir.is_dir() else []
        if len(on_disk) != len(entries):
            raise DatasetError(
                f"split {split!r}: manifest lists {len(entries)} episodes, found {len(on_disk)} directories"
            )
        out[split] = [_read_episode(root / e["dir"], e, verify) for e in entries]
    return out
