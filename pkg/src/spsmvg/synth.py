"""Synthetic desk-scale corpus generator.

Each series gets a smooth random base image; each photo degrades it under a
latent quality q in [0, 1] that controls additive noise amplitude and a
brightness shift. Fabricated "deep" feature vectors correlate with the same
q, so both shallow extractors and the central view carry learnable signal.
Labels are y = [q_a > q_b]; by construction an ideal classifier reaches
accuracy 1 and the best photo of each series is the one with maximal q.

Regeneration with the same seed is byte-identical, including feature files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import MANIFEST_HEADER
from .errors import ConfigurationError, ManifestError
from .views import Image, encode_ppm_p6, write_view_file

__all__ = ["SynthSpec", "gen_synthetic", "load_truth"]

TRUTH_HEADER = "#sps-truth v1"


@dataclass(frozen=True)
class SynthSpec:
    series: int = 40
    photos_per_series: int = 4
    size: int = 32
    seed: int = 0
    deep_dim: int = 16

    def __post_init__(self) -> None:
        if not 2 <= self.photos_per_series <= 8:
            raise ConfigurationError("photos per series must be in [2, 8]")
        if self.series < 1 or self.size < 3 or self.deep_dim < 1:
            raise ConfigurationError("invalid synthetic corpus spec")


def _smooth_field(rng: np.random.Generator, size: int) -> np.ndarray:
    """Bilinear upsample of a 4x4 random color grid to size x size."""
    coarse = rng.uniform(40.0, 215.0, size=(4, 4, 3))
    pos = np.linspace(0.0, 3.0, size)
    i0 = np.clip(pos.astype(int), 0, 2)
    frac = pos - i0
    rows = (
        coarse[i0] * (1.0 - frac)[:, None, None]
        + coarse[i0 + 1] * frac[:, None, None]
    )
    return (
        rows[:, i0] * (1.0 - frac)[None, :, None]
        + rows[:, i0 + 1] * frac[None, :, None]
    )


def gen_synthetic(out_dir: str | Path, spec: SynthSpec) -> Path:
    """Write images, deep-feature files, manifest.tsv, and truth.tsv.

    Returns the manifest path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    quality_dir = rng.normal(size=spec.deep_dim)
    quality_dir /= np.linalg.norm(quality_dir)

    img_lines: list[str] = []
    pair_lines: list[str] = []
    truth_lines: list[str] = []
    for k in range(spec.series):
        sid = f"s{k:03d}"
        base = _smooth_field(rng, spec.size)
        center = 0.3 * rng.normal(size=spec.deep_dim)
        qs = rng.uniform(size=spec.photos_per_series)
        while len(set(qs.tolist())) != spec.photos_per_series:
            qs = rng.uniform(size=spec.photos_per_series)
        ids = []
        for i, q in enumerate(qs):
            img_id = f"{sid}_p{i}"
            ids.append(img_id)
            noise = rng.normal(size=(spec.size, spec.size, 3)) * (1.0 - q) * 50.0
            pixels = np.clip(base + (q - 0.5) * 60.0 + noise, 0.0, 255.0)
            img = Image(spec.size, spec.size, pixels.astype(np.uint8))
            (out / f"{img_id}.ppm").write_bytes(encode_ppm_p6(img))
            deep = center + 2.0 * q * quality_dir + 0.05 * rng.normal(size=spec.deep_dim)
            write_view_file(out / f"{img_id}.deep", deep)
            img_lines.append(f"@img\t{img_id}\t{img_id}.ppm\t{img_id}.deep")
            truth_lines.append(f"{sid}\t{img_id}\t{float(q)!r}")
        for i in range(spec.photos_per_series):
            for j in range(i + 1, spec.photos_per_series):
                a, b = (i, j) if rng.random() < 0.5 else (j, i)
                y = 1 if qs[a] > qs[b] else 0
                pair_lines.append(f"{sid}\t{ids[a]}\t{ids[b]}\t{y}")

    manifest = out / "manifest.tsv"
    manifest.write_text(
        "\n".join([MANIFEST_HEADER, *img_lines, *pair_lines]) + "\n"
    )
    (out / "truth.tsv").write_text("\n".join([TRUTH_HEADER, *truth_lines]) + "\n")
    return manifest


def load_truth(path: str | Path) -> dict[str, list[tuple[str, float]]]:
    """Read truth.tsv: series -> [(image_id, latent quality)] in photo order."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != TRUTH_HEADER:
        raise ManifestError(f"{path}:1: missing '{TRUTH_HEADER}' header")
    out: dict[str, list[tuple[str, float]]] = {}
    for raw in lines[1:]:
        if not raw.strip():
            continue
        sid, img_id, q = raw.split("\t")
        out.setdefault(sid, []).append((img_id, float(q)))
    return out
