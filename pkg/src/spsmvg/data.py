"""Dataset manifests, series-level splits, and in-memory pair datasets.

Manifest format (line-delimited, tab-separated):

    #sps-manifest v1
    @img<TAB>id<TAB>path[<TAB>deep_feature_path]
    series_id<TAB>image_a<TAB>image_b<TAB>y

Paths are resolved relative to the manifest file. Splits operate on whole
series so no photo pair leaks across train/val/test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ManifestError
from .views import ViewConfig, extract_raw_views

__all__ = [
    "ImageEntry",
    "PairSample",
    "Manifest",
    "SplitSpec",
    "load_manifest",
    "split_by_series",
    "PairDataset",
    "build_dataset",
]

MANIFEST_HEADER = "#sps-manifest v1"


@dataclass(frozen=True)
class ImageEntry:
    id: str
    path: Path
    deep_path: Path | None = None


@dataclass(frozen=True)
class PairSample:
    series_id: str
    image_a: str
    image_b: str
    y: int


@dataclass
class Manifest:
    images: dict[str, ImageEntry]
    pairs: list[PairSample]

    def series_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for p in self.pairs:
            seen.setdefault(p.series_id, None)
        return list(seen)

    def series_photos(self) -> dict[str, list[str]]:
        """Photo ids per series, in first-appearance order."""
        out: dict[str, list[str]] = {}
        for p in self.pairs:
            photos = out.setdefault(p.series_id, [])
            for img in (p.image_a, p.image_b):
                if img not in photos:
                    photos.append(img)
        return out


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        fr = (self.train, self.val, self.test)
        if any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigurationError(f"split fractions must be positive and sum to 1, got {fr}")


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ManifestError(f"{path}: cannot read manifest: {exc}") from exc
    if not lines or lines[0].strip() != MANIFEST_HEADER:
        raise ManifestError(f"{path}:1: missing '{MANIFEST_HEADER}' header")
    base = path.parent
    images: dict[str, ImageEntry] = {}
    pairs: list[PairSample] = []
    image_series: dict[str, str] = {}
    seen_pairs: dict[tuple[str, str, str], tuple[int, int]] = {}

    def err(lineno: int, msg: str) -> ManifestError:
        return ManifestError(f"{path}:{lineno}: {msg}")

    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if fields[0] == "@img":
            if len(fields) not in (3, 4):
                raise err(lineno, f"image line needs 3 or 4 fields, got {len(fields)}")
            img_id = fields[1]
            if img_id in images:
                raise err(lineno, f"duplicate image id {img_id!r}")
            img_path = base / fields[2]
            if not img_path.exists():
                raise err(lineno, f"image file does not exist: {img_path}")
            deep = None
            if len(fields) == 4:
                deep = base / fields[3]
                if not deep.exists():
                    raise err(lineno, f"deep feature file does not exist: {deep}")
            images[img_id] = ImageEntry(img_id, img_path, deep)
            continue
        if len(fields) != 4:
            raise err(lineno, f"pair line needs 4 fields, got {len(fields)}")
        series_id, a, b, y_str = fields
        if y_str not in ("0", "1"):
            raise err(lineno, f"label must be 0 or 1, got {y_str!r}")
        y = int(y_str)
        if a == b:
            raise err(lineno, f"pair compares image {a!r} with itself")
        for img in (a, b):
            if img not in images:
                raise err(lineno, f"pair references unregistered image {img!r}")
            prev = image_series.get(img)
            if prev is not None and prev != series_id:
                raise err(
                    lineno,
                    f"image {img!r} appears in series {prev!r} and {series_id!r}",
                )
            image_series[img] = series_id
        key = (series_id, a, b)
        if key in seen_pairs:
            raise err(lineno, f"duplicate pair {key}")
        rev = (series_id, b, a)
        if rev in seen_pairs:
            rev_lineno, rev_y = seen_pairs[rev]
            if rev_y != 1 - y:
                raise err(
                    lineno,
                    f"inconsistent labels for pair ({a!r}, {b!r}): "
                    f"line {rev_lineno} says {rev_y}, this line says {y}",
                )
        seen_pairs[key] = (lineno, y)
        pairs.append(PairSample(series_id, a, b, y))
    return Manifest(images, pairs)


def split_by_series(manifest: Manifest, spec: SplitSpec) -> tuple[Manifest, Manifest, Manifest]:
    """Shuffle series and assign each whole series to train/val/test."""
    series = manifest.series_ids()
    if len(series) < 3:
        raise ConfigurationError(
            f"need at least 3 series to split, manifest has {len(series)}"
        )
    rng = np.random.default_rng(spec.seed)
    order = [series[i] for i in rng.permutation(len(series))]
    n = len(order)
    n_train = int(round(spec.train * n))
    n_val = int(round((spec.train + spec.val) * n)) - n_train
    n_train = max(1, min(n_train, n - 2))
    n_val = max(1, min(n_val, n - n_train - 1))
    buckets = {
        sid: (0 if i < n_train else 1 if i < n_train + n_val else 2)
        for i, sid in enumerate(order)
    }
    split_pairs: list[list[PairSample]] = [[], [], []]
    for p in manifest.pairs:
        split_pairs[buckets[p.series_id]].append(p)
    return tuple(Manifest(manifest.images, ps) for ps in split_pairs)  # type: ignore[return-value]


@dataclass
class PairDataset:
    """Pairs plus the raw feature matrix of every image they reference."""

    raws: dict[str, np.ndarray]  # extractor -> (n_images, dim)
    index: dict[str, int]  # image id -> row
    pairs: list[PairSample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def labels(self) -> np.ndarray:
        return np.array([p.y for p in self.pairs], dtype=np.float64)

    def batch(self, pair_indices) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Assemble (2P, dim) raw arrays (first-image rows, then second-image rows)."""
        sel = [self.pairs[i] for i in pair_indices]
        rows_a = [self.index[p.image_a] for p in sel]
        rows_b = [self.index[p.image_b] for p in sel]
        rows = rows_a + rows_b
        raws = {name: mat[rows] for name, mat in self.raws.items()}
        y = np.array([p.y for p in sel], dtype=np.float64)
        return raws, y

    def batch_images(self, image_ids) -> dict[str, np.ndarray]:
        rows = [self.index[i] for i in image_ids]
        return {name: mat[rows] for name, mat in self.raws.items()}


def build_dataset(
    manifest: Manifest,
    config: ViewConfig,
    cache_dir: str | Path | None = None,
    pairs: list[PairSample] | None = None,
) -> PairDataset:
    """Extract raw views for every image referenced by the pairs."""
    use_pairs = manifest.pairs if pairs is None else pairs
    ids: dict[str, None] = {}
    for p in use_pairs:
        ids.setdefault(p.image_a, None)
        ids.setdefault(p.image_b, None)
    index = {img_id: i for i, img_id in enumerate(ids)}
    mats = {name: np.empty((len(index), config.raw_dim(name))) for name in config.extractors}
    for img_id, row in index.items():
        entry = manifest.images[img_id]
        raws = extract_raw_views(entry.path, entry.deep_path, config, cache_dir)
        for name in config.extractors:
            mats[name][row] = raws[name].values
    return PairDataset(mats, index, list(use_pairs))
