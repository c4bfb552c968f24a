#!/usr/bin/env python3
"""Pooling-mode x view-combination ablation grid on a synthetic corpus.

Trains one model per (pooling mode, three-view combination) cell and prints
validation accuracy/F1 as a table.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from spsmvg.data import SplitSpec, load_manifest
from spsmvg.experiment import run_ablation
from spsmvg.synth import SynthSpec, gen_synthetic
from spsmvg.training import TrainConfig
from spsmvg.views import ViewConfig


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/ablation", help="working directory")
    ap.add_argument("--series", type=int, default=40)
    ap.add_argument("--photos", type=int, default=4)
    ap.add_argument("--corpus-seed", type=int, default=7)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    manifest = load_manifest(gen_synthetic(
        out / "corpus", SynthSpec(args.series, args.photos, 32, args.corpus_seed)
    ))
    config = TrainConfig(epochs=args.epochs, seed=args.seed)

    print(f"{'Pooling':<10}{'Views':<10}{'Accuracy':<12}{'F1 Score':<12}")
    t0 = time.time()
    run_ablation(
        manifest, ViewConfig(), config, SplitSpec(), out / "cache", seed=args.seed,
        on_row=lambda row: print(
            f"{row['pooling']:<10}{row['views']:<10}"
            f"{row['accuracy']:<12.4f}{row['f1']:<12.4f}"
        ),
    )
    print(f"grid finished in {time.time() - t0:.1f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
