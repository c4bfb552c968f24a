"""Command-line interface.

Subcommands: synth, extract, train, eval, rank, gradcheck, ablate.
Exit status: 0 success, 1 validation/usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import experiment
from .checkpoint import load_checkpoint, params_from_checkpoint, save_checkpoint
from .data import SplitSpec, load_manifest, build_dataset
from .errors import ConfigurationError, SpsError
from .gradcheck import run_gradcheck
from .model import POOLING_MODES
from .synth import SynthSpec, gen_synthetic
from .training import TrainConfig, evaluate, init_params
from .views import ViewConfig

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with defaults for any flag of this subcommand")


def _add_view_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--views", default="deep,color,hsv,sift",
                   help="comma-separated extractor list, deep first")
    p.add_argument("--deep-dim", type=int, default=16)
    p.add_argument("--C", type=int, default=16, help="common view dimension")
    p.add_argument("--color-bins", type=int, default=8)
    p.add_argument("--hue-bins", type=int, default=16)
    p.add_argument("--orient-bins", type=int, default=8)
    p.add_argument("--cache", default=os.environ.get("SPS_CACHE_DIR"),
                   help="feature cache directory (default: $SPS_CACHE_DIR)")


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d-hidden", type=int, default=16)
    p.add_argument("--r", type=int, default=4, help="attention reduction ratio")
    p.add_argument("--h1", type=int, default=None)
    p.add_argument("--h2", type=int, default=None)
    p.add_argument("--pooling", choices=POOLING_MODES, default="max_avg")


def _add_train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=5e-2)
    p.add_argument("--weight-decay", type=float, default=1e-5)
    p.add_argument("--decay-factor", type=float, default=0.5)
    p.add_argument("--decay-every", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="graph edge threshold (default 1/l)")
    p.add_argument("--target-acc", type=float, default=None,
                   help="stop early once validation accuracy reaches this value")


def _add_split_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--split", default="0.8,0.1,0.1",
                   help="train,val,test fractions over series")
    p.add_argument("--split-seed", type=int, default=0)


def _view_config(args) -> ViewConfig:
    views = tuple(v.strip() for v in args.views.split(",") if v.strip())
    return ViewConfig(views, args.deep_dim, args.color_bins, args.hue_bins,
                      args.orient_bins, args.C)


def _train_config(args, views: tuple[str, ...]) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr0=args.lr,
        weight_decay=args.weight_decay, decay_factor=args.decay_factor,
        decay_every=args.decay_every, seed=args.seed, lam=args.lam,
        pooling_mode=args.pooling, views=views,
    )


def _split_spec(args) -> SplitSpec:
    parts = [float(x) for x in args.split.split(",")]
    if len(parts) != 3:
        raise ConfigurationError(f"--split needs 3 fractions, got {args.split!r}")
    return SplitSpec(parts[0], parts[1], parts[2], args.split_seed)


def _config_echo(view_cfg: ViewConfig, train_cfg: TrainConfig, split: SplitSpec) -> dict:
    return {
        "view": dataclasses.asdict(view_cfg) | {"extractors": list(view_cfg.extractors)},
        "train": dataclasses.asdict(train_cfg) | {"views": list(train_cfg.views)},
        "split": dataclasses.asdict(split),
    }


def _configs_from_echo(echo: dict) -> tuple[ViewConfig, TrainConfig, SplitSpec]:
    v = dict(echo["view"])
    v["extractors"] = tuple(v["extractors"])
    t = dict(echo["train"])
    t["views"] = tuple(t["views"])
    s = dict(echo["split"])
    return ViewConfig(**v), TrainConfig(**t), SplitSpec(**s)


def _select_split(parts, which: str):
    return {"train": parts[0], "val": parts[1], "test": parts[2]}[which]


# ---------------------------------------------------------------------------
# subcommands

def _cmd_synth(args) -> int:
    spec = SynthSpec(args.series, args.photos, args.size, args.seed, args.deep_dim)
    manifest = gen_synthetic(args.out, spec)
    n_images = spec.series * spec.photos_per_series
    print(f"wrote {n_images} images and {manifest}")
    return 0


def _cmd_extract(args) -> int:
    if args.cache is None:
        raise ConfigurationError("extract needs --cache or $SPS_CACHE_DIR")
    manifest = load_manifest(args.manifest)
    view_cfg = _view_config(args)
    ds = build_dataset(manifest, view_cfg, args.cache)
    print(f"cached {len(ds.index)} images x {len(view_cfg.extractors)} views "
          f"under {args.cache}")
    return 0


def _cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    if args.resume:
        ckpt = load_checkpoint(args.resume)
        view_cfg, train_cfg, split = _configs_from_echo(ckpt.train_config)
        train_cfg = dataclasses.replace(train_cfg, epochs=args.epochs)
        params = params_from_checkpoint(ckpt)
        start_epoch = ckpt.epoch
    else:
        view_cfg = _view_config(args)
        train_cfg = _train_config(args, view_cfg.extractors)
        split = _split_spec(args)
        hyper = experiment.make_hyper(view_cfg, args.d_hidden, args.r, args.h1,
                                      args.h2, args.pooling)
        params = init_params(hyper, train_cfg.seed)
        start_epoch = 0
    train_ds, val_ds, _ = experiment.prepare_splits(manifest, view_cfg, split, args.cache)

    def report(log: experiment.EpochLog) -> None:
        print(f"epoch={log.epoch} lr={log.lr:.6g} "
              f"train_loss={log.train.loss:.6f} train_acc={log.train.accuracy:.4f} "
              f"val_loss={log.val.loss:.6f} val_acc={log.val.accuracy:.4f} "
              f"val_f1={log.val.f1:.4f}")

    logs = experiment.train_model(train_ds, val_ds, params, train_cfg,
                                  start_epoch=start_epoch,
                                  target_acc=args.target_acc, on_epoch=report)
    if args.out:
        final_epoch = logs[-1].epoch + 1 if logs else start_epoch
        save_checkpoint(params, _config_echo(view_cfg, train_cfg, split),
                        final_epoch, train_cfg.seed, args.out)
        print(f"checkpoint written to {args.out}")
    return 0


def _load_eval_setup(args):
    ckpt = load_checkpoint(args.checkpoint)
    view_cfg, train_cfg, split = _configs_from_echo(ckpt.train_config)
    params = params_from_checkpoint(ckpt)
    manifest = load_manifest(args.manifest)
    from .data import split_by_series

    if args.split_part == "all":
        part = manifest
    else:
        part = _select_split(split_by_series(manifest, split), args.split_part)
    ds = build_dataset(manifest, view_cfg, args.cache, part.pairs)
    return manifest, part, ds, params, train_cfg


def _cmd_eval(args) -> int:
    _, _, ds, params, train_cfg = _load_eval_setup(args)
    m = evaluate(ds, params, train_cfg)
    print(f"pairs={len(ds)} loss={m.loss:.6f} accuracy={m.accuracy:.6f} f1={m.f1:.6f}")
    return 0


def _cmd_rank(args) -> int:
    _, part, ds, params, train_cfg = _load_eval_setup(args)
    for res in experiment.rank_manifest(part, ds, params, train_cfg):
        print(json.dumps({
            "series_id": res.series_id,
            "photos": list(res.photos),
            "scores": [float(s) for s in res.scores],
            "order": list(res.order),
            "best": res.best,
            "best_photo": res.photos[res.best],
        }))
    return 0


def _cmd_gradcheck(args) -> int:
    modes = POOLING_MODES if args.pooling == "all" else (args.pooling,)
    worst = 0.0
    for mode in modes:
        err = run_gradcheck(mode, seed=args.seed, eps=args.eps)
        worst = max(worst, err)
        print(f"mode={mode} max_rel_err={err:.3e}")
    print(f"overall max_rel_err={worst:.3e} tol={args.tol:.1e}")
    return 0 if worst <= args.tol else 1


def _cmd_ablate(args) -> int:
    manifest = load_manifest(args.manifest)
    view_cfg = _view_config(args)
    train_cfg = _train_config(args, view_cfg.extractors)
    split = _split_spec(args)
    print(f"{'Pooling':<10}{'Views':<10}{'Accuracy':<12}{'F1 Score':<12}")
    experiment.run_ablation(
        manifest, view_cfg, train_cfg, split, args.cache, seed=args.seed,
        on_row=lambda row: print(
            f"{row['pooling']:<10}{row['views']:<10}"
            f"{row['accuracy']:<12.4f}{row['f1']:<12.4f}"
        ),
    )
    return 0


def build_parser() -> tuple[_Parser, dict[str, _Parser]]:
    parser = _Parser(prog="spsmvg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    subs: dict[str, _Parser] = {}

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--series", type=int, default=40)
    p.add_argument("--photos", type=int, default=4)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deep-dim", type=int, default=16)
    _add_common(p)
    p.set_defaults(func=_cmd_synth)
    subs["synth"] = p

    p = sub.add_parser("extract", help="populate the feature cache")
    p.add_argument("--manifest", required=True)
    _add_view_args(p)
    _add_common(p)
    p.set_defaults(func=_cmd_extract)
    subs["extract"] = p

    p = sub.add_parser("train", help="train the siamese comparator")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="checkpoint output path")
    p.add_argument("--resume", help="resume from a checkpoint")
    _add_view_args(p)
    _add_model_args(p)
    _add_train_args(p)
    _add_split_args(p)
    _add_common(p)
    p.set_defaults(func=_cmd_train)
    subs["train"] = p

    for name, fn, help_text in (
        ("eval", _cmd_eval, "print accuracy/F1 of a checkpoint"),
        ("rank", _cmd_rank, "print per-series Bradley-Terry rankings as JSON lines"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--manifest", required=True)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--split-part", choices=("train", "val", "test", "all"),
                       default="test")
        p.add_argument("--cache", default=os.environ.get("SPS_CACHE_DIR"))
        _add_common(p)
        p.set_defaults(func=fn)
        subs[name] = p

    p = sub.add_parser("gradcheck",
                       help="verify analytic gradients against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pooling", choices=POOLING_MODES + ("all",), default="all")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    _add_common(p)
    p.set_defaults(func=_cmd_gradcheck)
    subs["gradcheck"] = p

    p = sub.add_parser("ablate",
                       help="pooling x view-combination ablation grid")
    p.add_argument("--manifest", required=True)
    _add_view_args(p)
    _add_model_args(p)
    _add_train_args(p)
    _add_split_args(p)
    _add_common(p)
    p.set_defaults(func=_cmd_ablate)
    subs["ablate"] = p

    return parser, subs


def _apply_config_file(args, subparser: _Parser) -> None:
    if not getattr(args, "config", None):
        return
    try:
        data = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config file {args.config}: {exc}") from exc
    for key, value in data.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise ConfigurationError(f"config file sets unknown option {key!r}")
        # explicit command-line flags win over config-file values
        if getattr(args, dest) == subparser.get_default(dest):
            setattr(args, dest, value)


def main(argv=None) -> int:
    parser, subs = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _apply_config_file(args, subs[args.command])
        return args.func(args)
    except SpsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failure boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
