"""High-level experiment pipelines shared by the CLI, scripts, and tests."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .data import Manifest, PairDataset, SplitSpec, build_dataset, load_manifest, split_by_series
from .model import Hyper, ModelParams
from .ranking import SeriesResult, pairwise_probs, rank_series
from .training import Metrics, TrainConfig, evaluate, init_params, lr_schedule, train_epoch
from .views import ViewConfig

__all__ = [
    "EpochLog",
    "prepare_splits",
    "make_hyper",
    "train_model",
    "rank_manifest",
    "run_ablation",
    "ABLATION_VIEW_COMBOS",
]

ABLATION_VIEW_COMBOS = (
    ("deep", "color", "hsv"),
    ("deep", "color", "sift"),
    ("deep", "hsv", "sift"),
)

# deep features come from a VGG-style extractor, hence the V shorthand
_VIEW_LETTER = {"deep": "V", "color": "C", "hsv": "H", "sift": "S"}


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    lr: float
    train: Metrics
    val: Metrics


def make_hyper(
    view_config: ViewConfig,
    d_hidden: int = 16,
    r: int = 4,
    h1: int | None = None,
    h2: int | None = None,
    pooling_mode: str = "max_avg",
) -> Hyper:
    return Hyper(
        view_config.view_dims(), C=view_config.C, d_hidden=d_hidden, r=r,
        h1=h1, h2=h2, pooling_mode=pooling_mode,
    )


def prepare_splits(
    manifest: Manifest,
    view_config: ViewConfig,
    split: SplitSpec,
    cache_dir: str | Path | None = None,
) -> tuple[PairDataset, PairDataset, PairDataset]:
    parts = split_by_series(manifest, split)
    return tuple(build_dataset(manifest, view_config, cache_dir, m.pairs) for m in parts)  # type: ignore[return-value]


def train_model(
    train_ds: PairDataset,
    val_ds: PairDataset,
    params: ModelParams,
    config: TrainConfig,
    start_epoch: int = 0,
    target_acc: float | None = None,
    on_epoch: Callable[[EpochLog], None] | None = None,
) -> list[EpochLog]:
    """Run epochs [start_epoch, config.epochs); early-stop at target val accuracy."""
    logs: list[EpochLog] = []
    for epoch in range(start_epoch, config.epochs):
        train_m = train_epoch(train_ds, params, config, epoch)
        val_m = evaluate(val_ds, params, config)
        log = EpochLog(epoch, lr_schedule(epoch, config), train_m, val_m)
        logs.append(log)
        if on_epoch is not None:
            on_epoch(log)
        if target_acc is not None and val_m.accuracy >= target_acc:
            break
    return logs


def rank_manifest(
    manifest: Manifest,
    dataset: PairDataset,
    params: ModelParams,
    config: TrainConfig,
) -> list[SeriesResult]:
    results = []
    for sid, photos in manifest.series_photos().items():
        P = pairwise_probs(photos, dataset, params, config)
        results.append(rank_series(P, sid, tuple(photos)))
    return results


def run_ablation(
    manifest: Manifest,
    base_view_config: ViewConfig,
    base_config: TrainConfig,
    split: SplitSpec,
    cache_dir: str | Path | None = None,
    seed: int = 0,
    on_row: Callable[[dict], None] | None = None,
) -> list[dict]:
    """Pooling modes x three-view combinations grid; one row per run.

    Accuracy/F1 are measured on the held-out validation split.
    """
    from .model import POOLING_MODES

    rows: list[dict] = []
    for mode in POOLING_MODES:
        for views in ABLATION_VIEW_COMBOS:
            view_cfg = dataclasses.replace(base_view_config, extractors=views)
            cfg = dataclasses.replace(base_config, pooling_mode=mode, views=views)
            train_ds, val_ds, _ = prepare_splits(manifest, view_cfg, split, cache_dir)
            hyper = make_hyper(view_cfg, pooling_mode=mode)
            params = init_params(hyper, seed)
            train_model(train_ds, val_ds, params, cfg)
            val_m = evaluate(val_ds, params, cfg)
            row = {
                "pooling": mode,
                "views": "+".join(_VIEW_LETTER[v] for v in views),
                "accuracy": val_m.accuracy,
                "f1": val_m.f1,
            }
            rows.append(row)
            if on_row is not None:
                on_row(row)
    return rows
