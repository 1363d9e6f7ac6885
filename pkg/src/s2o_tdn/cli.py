"""Command-line entry point: ``s2o-tdn {synth,train,eval,translate,gradcheck,ablate}``.

Every training-config field can be set with ``--key value`` (dashes or
underscores) on top of ``--config FILE`` and ``--preset``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .data import SCENE_STYLES, DatasetManifest, SpeckleParams, load_pairs, synth_pairs, write_dataset
from .errors import CheckpointError, ConfigError, DivergenceError, IngestionError
from .metrics import format_table
from .train.config import DESK_PAIRS, DESK_PRESET, FIELD_TYPES, TrainConfig, dump_config, load_config

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3, 4
PRESETS = {"default": {}, "desk": DESK_PRESET}

log = logging.getLogger("s2o_tdn")


def split_overrides(extra: list[str]) -> dict:
    """Turn leftover ``--key value`` / ``--key=value`` tokens into config overrides."""
    out, i = {}, 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key, eq, value = tok[2:].partition("=")
        key = key.replace("-", "_")
        if key not in FIELD_TYPES:
            raise ConfigError(f"unknown option --{key}")
        if not eq:
            if i + 1 >= len(extra):
                raise ConfigError(f"--{key} needs a value")
            i += 1
            value = extra[i]
        out[key] = value
        i += 1
    return out


def resolve_config(args, overrides: dict) -> TrainConfig:
    return load_config(args.config, overrides, PRESETS[args.preset])


def read_manifest(path, split=None):
    try:
        manifest = DatasetManifest.read(path, split)
        return manifest, list(load_pairs(manifest))
    except OSError as exc:
        raise IngestionError(f"cannot read dataset {path}: {exc}") from exc


# -- commands ------------------------------------------------------------------

def cmd_synth(args, overrides) -> int:
    out = Path(args.out)
    params = SpeckleParams(looks=args.looks, geometry_warp=args.warp, seed=args.seed)
    train = synth_pairs(args.n, args.size, params, style="mixed", prefix="train_")
    print(write_dataset(train, out / "train", "train"))
    for i, style in enumerate(SCENE_STYLES, 1):
        test_params = SpeckleParams(args.looks, args.warp, seed=args.seed + 1000 * i)
        pairs = synth_pairs(args.n_test, args.size, test_params, style=style, prefix=f"test{i}_")
        print(write_dataset(pairs, out / f"test{i}", f"test{i}"))
    return EXIT_OK


def cmd_train(args, overrides) -> int:
    from .train.trainer import Trainer

    _, pairs = read_manifest(args.data)
    out = Path(args.out)
    if args.resume:
        cfg = None
        if args.config or overrides:
            cfg = resolve_config(args, overrides)
        trainer = Trainer.resume(args.resume, pairs, out, cfg)
    else:
        cfg = resolve_config(args, overrides)
        trainer = Trainer(cfg, pairs, out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(trainer.cfg))
    trainer.run(max_steps=args.max_steps)
    if trainer.last_checkpoint is None or trainer.step % trainer.steps_per_epoch:
        trainer.save_checkpoint(out / f"ckpt_step_{trainer.step:07d}")
    print(trainer.last_checkpoint)
    return EXIT_OK


def cmd_eval(args, overrides) -> int:
    from .train.evaluate import evaluate, split_rows

    cfg = resolve_config(args, overrides) if (args.config or overrides) else None
    splits = {}
    for path in args.data:
        manifest, pairs = read_manifest(path)
        splits[manifest.split] = pairs
    reports = evaluate(args.checkpoint, splits, cfg, workers=args.workers)
    rows = split_rows(reports)
    print(format_table(rows))
    if args.json:
        Path(args.json).write_text(json.dumps(rows, indent=1))
    return EXIT_OK


def cmd_translate(args, overrides) -> int:
    from .train.evaluate import translate_images

    cfg = resolve_config(args, overrides) if (args.config or overrides) else None
    _, pairs = read_manifest(args.data)
    for path in translate_images(args.checkpoint, {p.id: p.sar for p in pairs}, args.out, cfg):
        print(path)
    return EXIT_OK


def cmd_gradcheck(args, overrides) -> int:
    from .gradsuite import checks

    ok = True
    for name, thunk in checks(args.seed):
        rep = thunk()
        ok &= rep.passed
        print(f"{'PASS' if rep.passed else 'FAIL'}  {name:24s} max_rel_err={rep.max_rel_err:.3e}  n={rep.n_checked}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_ablate(args, overrides) -> int:
    from .train.ablate import COMPONENT_VARIANTS, WIRING_VARIANTS, ablate, format_report, grid_variants

    cfg = resolve_config(args, overrides)
    _, pairs = read_manifest(args.data)
    splits = {}
    for path in args.tests:
        manifest, test_pairs = read_manifest(path)
        splits[manifest.split] = test_pairs
    variants = {"components": COMPONENT_VARIANTS, "wiring": WIRING_VARIANTS, "grid": grid_variants()}[args.table]
    if args.only:
        variants = [v for v in variants if v.name in args.only]
    rows = ablate(cfg, variants, args.seeds, pairs, splits)
    text = format_report(rows, tuple(splits))
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
        Path(args.out).with_suffix(".json").write_text(json.dumps(rows, indent=1))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="s2o-tdn", description="SAR-to-optical translation: data, training, evaluation and ablation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--preset", choices=sorted(PRESETS), default="default")
        return p

    p = sub.add_parser("synth", help="write a seeded synthetic SAR/optical dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=DESK_PAIRS)
    p.add_argument("--n-test", type=int, default=40)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--looks", type=float, default=1.0)
    p.add_argument("--warp", type=float, default=0.0, help="max geometric jitter in pixels / degrees")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = with_config(sub.add_parser("train", help="train a model; checkpoints once per epoch"))
    p.add_argument("--data", required=True, help="training manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="checkpoint directory to continue from")
    p.add_argument("--max-steps", type=int)
    p.set_defaults(func=cmd_train)

    p = with_config(sub.add_parser("eval", help="MSE / PSNR / SSIM per split"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, nargs="+", help="one manifest per split")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--json")
    p.set_defaults(func=cmd_eval)

    p = with_config(sub.add_parser("translate", help="write optical and FLT images for each SAR input"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = with_config(sub.add_parser("ablate", help="train variants over seeds and tabulate"))
    p.add_argument("--data", required=True)
    p.add_argument("--tests", required=True, nargs="+")
    p.add_argument("--table", choices=("components", "wiring", "grid"), default="components")
    p.add_argument("--only", nargs="+", help="restrict to these variant names")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = split_overrides(extra)
        if overrides and args.command in ("synth", "gradcheck"):
            raise ConfigError(f"{args.command} takes no config overrides")
        return args.func(args, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}; terms={exc.terms}; last good checkpoint: {exc.checkpoint}", file=sys.stderr)
        return EXIT_DIVERGED
    except (IngestionError, CheckpointError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
