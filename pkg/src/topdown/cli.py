"""Command line entry point: ``topdown {gen-data,train,eval,sample}``."""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .checkpoint import CheckpointError
from .config import ConfigError, TrainConfig, load_config_file, resolve_config
from .encoders import ENCODERS, KNOWN_NONLEARNING
from .envgen import DatasetError, GenerationConfig, generate_dataset, read_dataset, read_manifest, write_dataset
from .losses import TrainingFault
from .metrics import OracleModel, evaluate_model, reports_to_csv, reports_to_table
from .obsmodel import window_frames

log = logging.getLogger("topdown")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
DATA_ENV = "TOPDOWN_DATA_ROOT"

GEN_KEYS = {"train_envs": int, "test_envs": int, "episode_len": int, "episodes_per_env": int,
            "policy": str, "room_size": float, "fov_deg": float}
EVAL_KEYS = {"samples": int, "eval_seed": int}
SAMPLE_KEYS = {"frames": int}


def _utcnow() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_run_manifest(out: Path, command: str, resolved: dict, seed: int, dataset_checksum: str | None) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "config": resolved,
        "seed": seed,
        "version": __version__,
        "started": _utcnow(),
        "dataset_checksum": dataset_checksum,
        "argv": sys.argv[1:],
    }
    path = out / "run_manifest.json"
    path.write_text(json.dumps(payload, indent=1, sort_keys=True, default=str))
    return path


def _print_resolved(resolved: dict, sources: dict, args=None, flags: dict | None = None) -> None:
    """``flags`` maps resolved keys to argparse dests whose origin decides the label."""
    sources = dict(sources)
    if args is not None:
        from_file = getattr(args, "from_file", set())
        for key, dest in (flags or {}).items():
            if dest in from_file:
                sources[key] = "file"
            elif getattr(args, dest, None) not in (None, False):
                sources[key] = "cli"
        for key in list(sources):
            if key in from_file:
                sources[key] = "file"
    for key in sorted(resolved):
        print(f"  {key} = {resolved[key]}  [{sources.get(key, 'default')}]")


def _merge(defaults: dict, file_values: dict, cli_values: dict, types: dict):
    """CLI > file > defaults for the keys in ``types``."""
    resolved, sources = dict(defaults), {}
    for key, value in file_values.items():
        if key in types:
            try:
                resolved[key] = types[key](value)
            except ValueError as exc:
                raise ConfigError(f"{key}: cannot parse {value!r}") from exc
            sources[key] = "file"
    for key, value in cli_values.items():
        if key in types and value is not None:
            resolved[key] = value
            sources[key] = "cli"
    return resolved, sources


def _file_values(args) -> dict:
    return load_config_file(args.config) if args.config else {}


def _data_root(args) -> Path:
    root = getattr(args, "data", None) or os.environ.get(DATA_ENV)
    if not root:
        raise ConfigError(f"no dataset given (use --data or set {DATA_ENV})")
    return Path(root)


# -- gen-data --------------------------------------------------------------

def cmd_gen_data(args) -> int:
    defaults = {"train_envs": 64, "test_envs": 16, "episode_len": 40, "episodes_per_env": 1,
                "policy": "fixed", "room_size": 8.0, "fov_deg": 60.0}
    cli = {k: getattr(args, k, None) for k in GEN_KEYS}
    resolved, sources = _merge(defaults, _file_values(args), cli, GEN_KEYS)
    seed = args.seed if args.seed is not None else 0
    resolved["seed"] = seed
    print("gen-data configuration:")
    _print_resolved(resolved, sources, args, {"seed": "seed"})
    if resolved["train_envs"] < 1 or resolved["test_envs"] < 1:
        raise ConfigError("--train-envs and --test-envs must be >= 1")
    if resolved["episode_len"] < 1 or resolved["episodes_per_env"] < 1:
        raise ConfigError("--episode-len and --episodes-per-env must be >= 1")
    out = Path(args.out or os.environ.get(DATA_ENV) or "data")
    if out.exists() and any(out.iterdir()) and not args.force:
        raise ConfigError(f"{out} is not empty (use --force to overwrite)")
    gen = GenerationConfig(room_size=resolved["room_size"], fov_deg=resolved["fov_deg"],
                           episode_length=resolved["episode_len"], rotation_policy=resolved["policy"])
    try:
        gen.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    write_run_manifest(out, "gen-data", resolved, seed, None)
    splits, ranges = generate_dataset(resolved["train_envs"], resolved["test_envs"], seed, gen,
                                      resolved["episodes_per_env"])
    manifest = write_dataset(splits, out, gen, ranges)
    print(f"wrote {sum(len(v) for v in splits.values())} episodes; manifest {out / 'manifest.json'}")
    print(f"checksum {manifest['checksum']}")
    return EXIT_OK


# -- train -----------------------------------------------------------------

def cmd_train(args) -> int:
    file_values = _file_values(args)
    train_keys = set(TrainConfig.__dataclass_fields__)
    known = train_keys | set(GEN_KEYS) | set(EVAL_KEYS) | set(SAMPLE_KEYS) | getattr(args, "flag_keys", set())
    unknown = set(file_values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    file_values = {k: v for k, v in file_values.items() if k in train_keys}
    data = args.data or file_values.get("data") or os.environ.get(DATA_ENV) or ""
    cli = {
        "encoder": args.encoder, "profile": args.profile, "seed": args.seed,
        "batch_size": args.batch_size, "total_iterations": args.iterations,
        "checkpoint_every": args.checkpoint_every, "lambda_gp": args.lambda_gp,
        "deterministic": args.deterministic, "out": args.out, "data": data or None,
    }
    cfg = resolve_config(file_values, cli)
    if not cfg.out:
        cfg = cfg.replace(out=str(Path("runs") / cfg.encoder))
    sources = {k: ("cli" if cli.get(k) is not None else "file" if k in file_values else "default")
               for k in cfg.to_dict()}
    print("train configuration:")
    _print_resolved(cfg.to_dict(), sources, args, {"total_iterations": "iterations"})
    if cfg.encoder in KNOWN_NONLEARNING:
        print(f"warning: encoder {cfg.encoder!r} is known-nonlearning on this task; "
              "its results are reported but excluded from comparisons", file=sys.stderr)
    if not cfg.data:
        raise ConfigError(f"no dataset given (use --data or set {DATA_ENV})")
    manifest = read_manifest(cfg.data)
    write_run_manifest(Path(cfg.out), "train", cfg.to_dict(), cfg.seed, manifest["checksum"])
    (Path(cfg.out) / "config.txt").write_text("".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items()))

    from .trainer import run_training
    written = run_training(cfg, resume=args.resume)
    for path in written:
        print(f"checkpoint {path}")
    return EXIT_OK


# -- eval ------------------------------------------------------------------

def _resolve_checkpoint(path: Path) -> Path:
    if (path / "state.json").is_file():
        return path
    ckpts = sorted(p for p in path.glob("ckpt_*") if (p / "state.json").is_file())
    if not ckpts:
        raise CheckpointError(f"no checkpoint found in {path}")
    return ckpts[-1]


def _parse_runs(specs) -> list[tuple[str | None, Path]]:
    runs = []
    for spec in specs or []:
        name, sep, path = spec.partition("=")
        runs.append((name, Path(path)) if sep else (None, Path(spec)))
    return runs


def cmd_eval(args) -> int:
    from .trainer import Trainer

    resolved, sources = _merge({"samples": 512, "eval_seed": 0}, _file_values(args),
                               {"samples": args.samples, "eval_seed": args.seed}, EVAL_KEYS)
    runs = _parse_runs(args.run)
    if not runs and not args.oracle:
        raise ConfigError("nothing to evaluate (give --run and/or --oracle)")
    root = _data_root(args)
    out = Path(args.out or "eval")
    resolved.update(data=str(root), runs=[str(p) for _, p in runs], oracle=args.oracle)
    print("eval configuration:")
    _print_resolved(resolved, sources, args, {"data": "data", "runs": "run", "oracle": "oracle",
                                              "eval_seed": "seed"})
    manifest = read_manifest(root)
    write_run_manifest(out, "eval", resolved, resolved["eval_seed"], manifest["checksum"])
    splits = read_dataset(root)
    for name in ("train", "test"):
        if not splits.get(name):
            raise DatasetError(f"split {name!r} is empty or missing")
    reports = []
    for label, path in runs:
        trainer = Trainer.from_checkpoint(_resolve_checkpoint(path))
        enc = trainer.config.encoder
        flags = ["known-nonlearning"] if enc in KNOWN_NONLEARNING else []
        expected = args.expected_scale or trainer.config.final_scale
        if trainer.scale != expected:
            flags.append(f"scale={trainer.scale}")
        reports.append(evaluate_model(trainer, splits, method=label or enc, encoder=enc,
                                      n_samples=resolved["samples"], seed=resolved["eval_seed"],
                                      expected_scale=None, flags=flags))
    if args.oracle:
        oracle = OracleModel([ep for eps in splits.values() for ep in eps], scale=64)
        reports.append(evaluate_model(oracle, splits, method="oracle", n_samples=resolved["samples"],
                                      seed=resolved["eval_seed"], flags=["debug-oracle"]))
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(reports_to_csv(reports))
    table = reports_to_table(reports)
    (out / "metrics.txt").write_text(table)
    print(table)
    return EXIT_OK


# -- sample ----------------------------------------------------------------

def _to_u8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)


def _upsample(img: np.ndarray, size: int) -> np.ndarray:
    f = size // img.shape[0]
    return img.repeat(f, axis=0).repeat(f, axis=1) if f > 1 else img


def sample_grid(model, episode, steps, n_frames: int = 4, pad: int = 2) -> np.ndarray:
    """Rows of (last ``n_frames`` observations, ground truth, generated)."""
    rows = []
    for i in steps:
        window = window_frames(episode.frames, i)
        gen = model.predict(window[None])[0]
        tiles = list(window[-n_frames:]) + [episode.targets[i], _upsample(gen, 64)]
        row = np.ones((64, len(tiles) * (64 + pad) - pad, 3), dtype=np.float32)
        for k, tile in enumerate(tiles):
            row[:, k * (64 + pad):k * (64 + pad) + 64] = tile
        rows.append(row)
    grid = np.ones((len(rows) * (64 + pad) - pad, rows[0].shape[1], 3), dtype=np.float32)
    for k, row in enumerate(rows):
        grid[k * (64 + pad):k * (64 + pad) + 64] = row
    return _to_u8(grid)


def cmd_sample(args) -> int:
    from .trainer import Trainer

    resolved, sources = _merge({"frames": 4}, _file_values(args), {"frames": args.frames}, SAMPLE_KEYS)
    if not args.checkpoint:
        raise ConfigError("--checkpoint is required")
    root = _data_root(args)
    out = Path(args.out or "samples")
    steps = [int(s) for s in args.steps.split(",") if s.strip()]
    resolved.update(checkpoint=args.checkpoint, data=str(root), split=args.split,
                    episode=args.episode, steps=steps)
    print("sample configuration:")
    _print_resolved(resolved, sources, args, {k: k for k in ("checkpoint", "data", "split", "episode", "steps")})
    manifest = read_manifest(root)
    write_run_manifest(out, "sample", resolved, 0, manifest["checksum"])
    episodes = read_dataset(root, splits=(args.split,)).get(args.split, [])
    if not 0 <= args.episode < len(episodes):
        raise ConfigError(f"episode {args.episode} out of range (split has {len(episodes)})")
    ep = episodes[args.episode]
    bad = [s for s in steps if not 0 <= s < len(ep.frames)]
    if bad or not steps:
        raise ConfigError(f"step(s) {bad} out of range for an episode of length {len(ep.frames)}")
    trainer = Trainer.from_checkpoint(_resolve_checkpoint(Path(args.checkpoint)))
    grid = sample_grid(trainer, ep, steps, resolved["frames"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"sample_{args.split}_ep{args.episode}.png"
    Image.fromarray(grid).save(path)
    print(f"wrote {path}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="root seed")
    common.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None,
                        help="force deterministic torch kernels (default on)")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log growth steps and other progress")

    parser = argparse.ArgumentParser(prog="topdown", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="generate a synthetic dataset")
    g.add_argument("--train-envs", dest="train_envs", type=int, help="number of training environments")
    g.add_argument("--test-envs", dest="test_envs", type=int, help="number of test environments")
    g.add_argument("--episode-len", dest="episode_len", type=int, help="steps per episode")
    g.add_argument("--episodes-per-env", dest="episodes_per_env", type=int,
                   help="episodes simulated in each environment")
    g.add_argument("--policy", choices=("fixed", "random"), help="rotation policy")
    g.add_argument("--room-size", dest="room_size", type=float, help="side length of the room")
    g.add_argument("--fov-deg", dest="fov_deg", type=float, help="horizontal field of view in degrees")
    g.add_argument("--force", action="store_true", help="write into a non-empty output directory")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", parents=[common], help="train a model")
    t.add_argument("--encoder", choices=ENCODERS, help="observation encoder")
    t.add_argument("--profile", choices=("paper", "desk"), help="schedule profile")
    t.add_argument("--data", help="dataset root")
    t.add_argument("--resume", help="checkpoint directory to resume from")
    t.add_argument("--iterations", type=int, help="stop after this many iterations")
    t.add_argument("--batch-size", dest="batch_size", type=int, help="minibatch size")
    t.add_argument("--checkpoint-every", dest="checkpoint_every", type=int,
                   help="checkpoint cadence in iterations")
    t.add_argument("--lambda-gp", dest="lambda_gp", type=float, help="gradient penalty weight")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="PSNR/SSIM table for trained runs")
    e.add_argument("--run", action="append", help="[name=]checkpoint or run directory (repeatable)")
    e.add_argument("--data", help="dataset root")
    e.add_argument("--samples", type=int, help="evaluation pairs drawn per split")
    e.add_argument("--expected-scale", dest="expected_scale", type=int,
                   help="note runs that stopped below this scale")
    e.add_argument("--oracle", action="store_true", help="add a ground-truth debug row")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sample", parents=[common], help="write observation/target/prediction grids")
    s.add_argument("--checkpoint", help="checkpoint or run directory")
    s.add_argument("--data", help="dataset root")
    s.add_argument("--split", default="train", help="train or test")
    s.add_argument("--episode", type=int, default=0, help="episode index within the split")
    s.add_argument("--steps", default="0,10,39", help="comma separated steps, one grid row each")
    s.add_argument("--frames", type=int, help="window frames shown per row")
    s.set_defaults(func=cmd_sample)
    return parser


def _fill_from_file(args, parser) -> None:
    """Give flags left at their defaults the value from ``--config`` (file < CLI)."""
    args.from_file = set()
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    args.flag_keys = {a.dest for p in sub.choices.values() for a in p._actions}
    if not getattr(args, "config", None):
        return
    values = load_config_file(args.config)
    for action in sub.choices[args.command]._actions:
        key = action.dest
        if key in ("help", "config") or key not in values:
            continue
        if getattr(args, key) != action.default:
            continue
        raw = values[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse.BooleanOptionalAction)):
            value = str(raw).strip().lower() in ("1", "true", "yes", "on")
        else:
            try:
                value = action.type(raw) if action.type else raw
            except ValueError as exc:
                raise ConfigError(f"{key}: cannot parse {raw!r}") from exc
            if action.choices is not None and value not in action.choices:
                raise ConfigError(f"{key}: {value!r} not one of {list(action.choices)}")
        setattr(args, key, value)
        args.from_file.add(key)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _fill_from_file(args, parser)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, CheckpointError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
