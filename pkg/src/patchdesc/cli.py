"""Command-line surface: ingest / train / eval / extract / describe / protocol.

Runs are driven by a flat "key = value" UTF-8 config file with "#"
comments.  Unknown keys are rejected so typos fail fast.  Exit codes:
0 success, 2 usage/config/data-format problems, 3 runtime or numeric
failures (training divergence, degenerate evaluation labels).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config, kernels
from .data import SynthConfig, ingest_scene, load_match_file, sample_pairs, save_packed_store, synth_scene
from .errors import (
    CacheMismatchError,
    CheckpointFormatError,
    ConfigError,
    ConsistencyError,
    DatasetStructureError,
    DegenerateLabelsError,
    DivergenceError,
    EmptyBatchError,
    InvalidShapeError,
    MatchFileParseError,
    MosaicFormatError,
    NonFiniteError,
    PatchdescError,
    SamplingInfeasibleError,
    ShapeMismatchError,
)
from .evaluate import evaluate, extract_descriptors, write_descriptors, write_roc_csv
from .harness import run_protocol
from .loss import LossConfig
from .model import STANDARD, init_params, param_count, shape_plan
from .train import TrainConfig, load_checkpoint, save_checkpoint, train

_USAGE_ERRORS = (
    ConfigError,
    DatasetStructureError,
    MosaicFormatError,
    ConsistencyError,
    MatchFileParseError,
    CheckpointFormatError,
    SamplingInfeasibleError,
    InvalidShapeError,
    ShapeMismatchError,
    EmptyBatchError,
)
_RUNTIME_ERRORS = (DivergenceError, DegenerateLabelsError, NonFiniteError, CacheMismatchError)

# key -> (parser, default); None default means required for the commands that use it
_CONFIG_SCHEMA = {
    "precision": (str, "f32"),
    "seed": (int, 0),
    "learning_rate": (float, None),
    "batch_size": (int, None),
    "max_epochs": (int, None),
    "plateau_patience": (int, None),
    "plateau_rel_tol": (float, None),
    "balanced_batches": (None, None),  # bool, parsed specially
    "pull_scale": (float, None),
    "pull_margin": (float, None),
    "push_scale": (float, None),
    "push_margin": (float, None),
    "synth_points": (int, 40),
    "synth_patches_per_point": (int, 8),
    "synth_noise_std": (float, 4.0),
    "synth_jitter_px": (int, 2),
    "synth_seed": (int, 0),
    "n_train_similar": (int, 300),
    "n_train_dissimilar": (int, 300),
    "pair_seed": (int, 0),
    "dataset_root": (str, None),
    "match_file": (str, None),
    "checkpoint_out": (str, "model.ckpt"),
    "history_out": (str, "history.csv"),
    "protocol_scenes": (int, 3),
    "n_test_similar": (int, 100),
    "n_test_dissimilar": (int, 100),
}


def _parse_bool(raw: str, key: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ConfigError(f"config key {key!r}: expected a boolean, got {raw!r}")


def parse_run_config(path) -> dict:
    """Flat key = value file; '#' starts a comment; unknown keys rejected."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    values: dict = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_SCHEMA:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        if key == "balanced_batches":
            values[key] = _parse_bool(raw, key)
            continue
        parser, _ = _CONFIG_SCHEMA[key]
        try:
            values[key] = parser(raw)
        except ValueError:
            raise ConfigError(
                f"config line {lineno}: key {key!r} expects {parser.__name__}, got {raw!r}"
            ) from None
    return values


def _cfg_get(values: dict, key: str):
    if key in values:
        return values[key]
    return _CONFIG_SCHEMA[key][1]


def _apply_precision(values: dict) -> None:
    # The PATCHDESC_PRECISION environment variable wins over the config file.
    if not config.precision_from_env:
        config.set_precision(_cfg_get(values, "precision"))


def _train_config(values: dict) -> TrainConfig:
    defaults = TrainConfig()
    loss_defaults = LossConfig()
    loss = LossConfig(
        pull_scale=values.get("pull_scale", loss_defaults.pull_scale),
        pull_margin=values.get("pull_margin", loss_defaults.pull_margin),
        push_scale=values.get("push_scale", loss_defaults.push_scale),
        push_margin=values.get("push_margin", loss_defaults.push_margin),
    )
    return TrainConfig(
        learning_rate=values.get("learning_rate", defaults.learning_rate),
        batch_size=values.get("batch_size", defaults.batch_size),
        max_epochs=values.get("max_epochs", defaults.max_epochs),
        plateau_patience=values.get("plateau_patience", defaults.plateau_patience),
        plateau_rel_tol=values.get("plateau_rel_tol", defaults.plateau_rel_tol),
        loss=loss,
        seed=values.get("seed", defaults.seed),
        precision=config.active_precision(),
        balanced_batches=values.get("balanced_batches", defaults.balanced_batches),
    )


def _synth_config(values: dict, seed_offset: int = 0) -> SynthConfig:
    return SynthConfig(
        n_points=_cfg_get(values, "synth_points"),
        patches_per_point=_cfg_get(values, "synth_patches_per_point"),
        noise_std=_cfg_get(values, "synth_noise_std"),
        jitter_px=_cfg_get(values, "synth_jitter_px"),
        seed=_cfg_get(values, "synth_seed") + seed_offset,
    )


def cmd_describe(args) -> int:
    print(f"backend: {kernels.BACKEND}")
    print(f"precision: {config.active_precision()}")
    print("activation: tanh (fixed); subsampling: 2x2 average")
    print("stage plan for a 1x64x64 patch:")
    for stage, shape in shape_plan(STANDARD):
        print(f"  {stage:8s} {'x'.join(str(s) for s in shape)}")
    print(f"learnable parameters: {param_count(init_params(0))}")
    return 0


def cmd_ingest(args) -> int:
    root = Path(args.root)
    if root.exists() and not root.is_dir():
        raise DatasetStructureError(f"--root {root} is a file, expected a dataset directory")
    store = ingest_scene(root)
    if args.out:
        save_packed_store(store, args.out)
    print(f"patches={len(store)} points={store.n_points}")
    return 0


def cmd_train(args) -> int:
    values = parse_run_config(args.config)
    _apply_precision(values)
    cfg = _train_config(values)
    if args.synthetic:
        store = synth_scene(_synth_config(values))
    else:
        root = _cfg_get(values, "dataset_root")
        if root is None:
            raise ConfigError("config needs dataset_root (or run with --synthetic)")
        store = ingest_scene(root)
    match_file = _cfg_get(values, "match_file")
    if match_file is not None and not args.synthetic:
        pairs = load_match_file(match_file, store)
    else:
        pairs = sample_pairs(
            store,
            _cfg_get(values, "n_train_similar"),
            _cfg_get(values, "n_train_dissimilar"),
            seed=_cfg_get(values, "pair_seed"),
        )
    params, history = train(store, pairs, cfg, log=lambda msg: print(msg, file=sys.stderr))
    save_checkpoint(params, _cfg_get(values, "checkpoint_out"))
    history_path = Path(_cfg_get(values, "history_out"))
    lines = ["epoch,objective"]
    lines += [f"{epoch},{value:.9g}" for epoch, value in enumerate(history.objectives)]
    history_path.write_bytes(("\n".join(lines) + "\n").encode("ascii"))
    print(f"checkpoint={_cfg_get(values, 'checkpoint_out')} best_epoch={history.best_epoch}")
    return 0


def cmd_eval(args) -> int:
    params = load_checkpoint(args.checkpoint, expect_arch=STANDARD)
    store = ingest_scene(args.root)
    pairs = load_match_file(args.pairs, store)
    report, summary = evaluate(params, store, pairs)
    print(f"fpr95={report.fpr_at_95}")
    print(summary, file=sys.stderr)
    if args.roc_out:
        write_roc_csv(report, args.roc_out)
    return 0


def cmd_extract(args) -> int:
    params = load_checkpoint(args.checkpoint, expect_arch=STANDARD)
    store = ingest_scene(args.root)
    write_descriptors(extract_descriptors(params, store), args.out)
    print(f"descriptors={len(store)} dim={STANDARD.fc_units} out={args.out}")
    return 0


def cmd_protocol(args) -> int:
    values = parse_run_config(args.config)
    _apply_precision(values)
    cfg = _train_config(values)
    scenes = [
        synth_scene(_synth_config(values, seed_offset=i))
        for i in range(_cfg_get(values, "protocol_scenes"))
    ]
    result = run_protocol(
        scenes,
        cfg,
        n_train_pairs=(_cfg_get(values, "n_train_similar"), _cfg_get(values, "n_train_dissimilar")),
        n_test_pairs=(_cfg_get(values, "n_test_similar"), _cfg_get(values, "n_test_dissimilar")),
        pair_seed=_cfg_get(values, "pair_seed"),
        log=lambda msg: print(msg, file=sys.stderr),
    )
    table = result.format_table()
    print(table)
    if args.out:
        Path(args.out).write_text(table + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patchdesc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe", help="print the stage plan, backend and parameter count")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("ingest", help="validate a dataset directory and report counts")
    p.add_argument("--root", required=True)
    p.add_argument("--out", help="optional packed-store cache (.npz)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train from a run config, write checkpoint + history")
    p.add_argument("--config", required=True)
    p.add_argument("--synthetic", action="store_true", help="generate the scene instead of loading one")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="error rate at 95%% recall on a pair file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--root", required=True)
    p.add_argument("--roc-out", dest="roc_out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("extract", help="embed every patch of a scene to a descriptor file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("protocol", help="cross-scene train/eval grid on synthetic scenes")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="also write the table to a file")
    p.set_defaults(func=cmd_protocol)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PatchdescError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
