"""Feature extraction unit: turn one image into its stack of feature views.

Four view sources are supported: a precomputed "deep" vector loaded from
disk (the central node of the view graph), a per-channel color histogram,
HSV statistics with a circular hue histogram, and a magnitude-weighted
gradient-orientation histogram standing in for SIFT-style shallow features.
Heterogeneous raw dimensions are unified by trainable affine projections
into a common dimension C, giving the l x C view matrix.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import (
    ConfigurationError,
    DegenerateInputError,
    DegenerateViewError,
    IngestionError,
    ManifestError,
)

__all__ = [
    "Image",
    "RawView",
    "ViewConfig",
    "ViewMatrix",
    "decode_image",
    "extract_color_hist",
    "extract_hsv_stats",
    "extract_grad_orient",
    "load_precomputed",
    "write_view_file",
    "extract_raw_views",
    "project_view",
    "build_view_matrix",
]

EXTRACTORS = ("deep", "color", "hsv", "sift")


@dataclass(frozen=True)
class Image:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self) -> None:
        if self.pixels.shape != (self.height, self.width, 3):
            raise IngestionError(
                f"pixel buffer shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3"
            )


@dataclass(frozen=True)
class RawView:
    extractor_id: str
    values: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class ViewConfig:
    """Which extractors run, their bin counts, and the common dimension C."""

    extractors: tuple[str, ...] = EXTRACTORS
    deep_dim: int = 16
    color_bins: int = 8
    hue_bins: int = 16
    orient_bins: int = 8
    C: int = 16

    def __post_init__(self) -> None:
        if not self.extractors or self.extractors[0] != "deep":
            raise ConfigurationError("the deep view must be enabled and listed first")
        unknown = set(self.extractors) - set(EXTRACTORS)
        if unknown:
            raise ConfigurationError(f"unknown extractors: {sorted(unknown)}")

    @property
    def l(self) -> int:
        return len(self.extractors)

    def raw_dim(self, extractor: str) -> int:
        return {
            "deep": self.deep_dim,
            "color": 3 * self.color_bins,
            "hsv": 4 + self.hue_bins,
            "sift": self.orient_bins,
        }[extractor]

    def view_dims(self) -> tuple[tuple[str, int], ...]:
        return tuple((name, self.raw_dim(name)) for name in self.extractors)


@dataclass(frozen=True)
class ViewMatrix:
    """l x C matrix of projected views; row 0 is always the central deep view."""

    data: np.ndarray
    central_index: int = 0

    def __post_init__(self) -> None:
        if self.data.ndim != 2 or self.data.shape[0] < 2:
            raise ConfigurationError(f"view matrix needs >= 2 rows, got {self.data.shape}")
        if self.central_index != 0:
            raise ConfigurationError("central view is fixed at row 0")
        if not np.all(np.isfinite(self.data)):
            raise DegenerateViewError("view matrix contains non-finite entries")
        if np.any(np.linalg.norm(self.data, axis=1) == 0.0):
            raise DegenerateViewError("view matrix contains an all-zero row")


# ---------------------------------------------------------------------------
# image decoding

def _decode_ppm_p6(data: bytes, path: str) -> Image:
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise IngestionError(f"{path}: truncated PPM header")
        return data[start:pos]

    if token() != b"P6":
        raise IngestionError(f"{path}: not a binary PPM (P6) file")
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise IngestionError(f"{path}: malformed PPM header") from exc
    if maxval != 255:
        raise IngestionError(f"{path}: unsupported PPM maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + width * height * 3]
    if len(raster) != width * height * 3:
        raise IngestionError(f"{path}: truncated PPM raster")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return Image(width, height, pixels.copy())


def decode_image(path: str | os.PathLike) -> Image:
    """Decode a PNG or binary PPM (P6) file into 8-bit RGB pixels."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IngestionError(f"{path}: cannot read file: {exc}") from exc
    if not data:
        raise IngestionError(f"{path}: empty file")
    if data[:2] == b"P6":
        return _decode_ppm_p6(data, str(path))
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        try:
            with PILImage.open(io.BytesIO(data)) as img:
                rgb = img.convert("RGB")
                pixels = np.asarray(rgb, dtype=np.uint8)
        except Exception as exc:
            raise IngestionError(f"{path}: PNG decode failed: {exc}") from exc
        return Image(pixels.shape[1], pixels.shape[0], pixels)
    raise IngestionError(f"{path}: unsupported image format (need PNG or PPM P6)")


def encode_ppm_p6(img: Image) -> bytes:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.astype(np.uint8).tobytes()


# ---------------------------------------------------------------------------
# shallow extractors

def extract_color_hist(img: Image, bins_per_channel: int = 8) -> RawView:
    """Concatenated per-channel histograms, each block L1-normalized."""
    if bins_per_channel < 2:
        raise ConfigurationError("bins_per_channel must be >= 2")
    blocks = []
    for c in range(3):
        hist, _ = np.histogram(
            img.pixels[:, :, c], bins=bins_per_channel, range=(0, 256)
        )
        blocks.append(hist / hist.sum())
    return RawView("color", np.concatenate(blocks))


def _rgb_to_hsv(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rgb = pixels.astype(np.float64) / 255.0
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    v = mx
    s = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    safe = np.where(delta > 0, delta, 1.0)
    h = np.where(
        mx == r,
        (g - b) / safe,
        np.where(mx == g, 2.0 + (b - r) / safe, 4.0 + (r - g) / safe),
    )
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)  # gray pixels: hue 0
    return h, s, v


def extract_hsv_stats(img: Image, hue_bins: int = 16) -> RawView:
    """(S mean, S std, V mean, V std) plus an L1-normalized circular hue histogram."""
    h, s, v = _rgb_to_hsv(img.pixels)
    hist, _ = np.histogram(h, bins=hue_bins, range=(0.0, 1.0))
    hist = hist / hist.sum()
    stats = np.array([s.mean(), s.std(), v.mean(), v.std()])
    return RawView("hsv", np.concatenate([stats, hist]))


def extract_grad_orient(img: Image, orient_bins: int = 8) -> RawView:
    """Magnitude-weighted gradient-orientation histogram over [0, 2pi).

    A constant image has no gradient anywhere; it maps to the uniform
    histogram rather than 0/0.
    """
    if orient_bins < 4:
        raise ConfigurationError("orient_bins must be >= 4")
    if img.width < 3 or img.height < 3:
        raise DegenerateInputError(
            f"gradient extractor needs at least 3x3, got {img.width}x{img.height}"
        )
    gray = img.pixels.astype(np.float64) @ np.array([0.299, 0.587, 0.114]) / 255.0
    gx = 0.5 * (gray[1:-1, 2:] - gray[1:-1, :-2])
    gy = 0.5 * (gray[2:, 1:-1] - gray[:-2, 1:-1])
    mag = np.hypot(gx, gy)
    total = mag.sum()
    if total <= 0.0:
        return RawView("sift", np.full(orient_bins, 1.0 / orient_bins))
    orient = np.arctan2(gy, gx) % (2.0 * np.pi)
    hist, _ = np.histogram(orient, bins=orient_bins, range=(0.0, 2.0 * np.pi), weights=mag)
    return RawView("sift", hist / total)


# ---------------------------------------------------------------------------
# precomputed deep view + cache files

def load_precomputed(path: str | os.PathLike, expected_dim: int | None = None) -> RawView:
    """Read a `dim N` / values text file produced by an external extractor."""
    values = _read_view_file(path)
    if expected_dim is not None and values.size != expected_dim:
        raise ManifestError(
            f"{path}: declared deep dimension {values.size} does not match "
            f"expected {expected_dim}"
        )
    return RawView("deep", values)


def _read_view_file(path: str | os.PathLike) -> np.ndarray:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IngestionError(f"{path}: cannot read file: {exc}") from exc
    lines = text.splitlines()
    if len(lines) < 2 or not lines[0].startswith("dim "):
        raise IngestionError(f"{path}: malformed view file (expected 'dim N' header)")
    try:
        dim = int(lines[0].split()[1])
    except (IndexError, ValueError) as exc:
        raise IngestionError(f"{path}: malformed dim header") from exc
    try:
        values = np.array([float(t) for t in lines[1].split()], dtype=np.float64)
    except ValueError as exc:
        raise IngestionError(f"{path}: non-numeric value in view file") from exc
    if values.size != dim:
        raise ManifestError(
            f"{path}: header declares dim {dim} but file contains {values.size} values"
        )
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise IngestionError(f"{path}: non-finite value at offset {bad[0]}")
    return values


def write_view_file(path: str | os.PathLike, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=np.float64).ravel()
    body = " ".join(repr(float(x)) for x in values)
    Path(path).write_text(f"dim {values.size}\n{body}\n")


def extract_raw_views(
    image_path: str | os.PathLike,
    deep_path: str | os.PathLike | None,
    config: ViewConfig,
    cache_dir: str | os.PathLike | None = None,
) -> dict[str, RawView]:
    """Compute every enabled raw view for one image, using the cache if given.

    Cache layout: <cache>/<extractor>/<image-stem>.view, write-once per key.
    """
    stem = Path(image_path).stem
    raws: dict[str, RawView] = {}
    img: Image | None = None
    for name in config.extractors:
        if name == "deep":
            if deep_path is None:
                raise ConfigurationError(f"{image_path}: no deep feature file registered")
            raws[name] = load_precomputed(deep_path, config.deep_dim)
            continue
        if cache_dir is not None:
            cpath = Path(cache_dir) / name / f"{stem}.view"
            if cpath.exists():
                raws[name] = RawView(name, _read_view_file(cpath))
                continue
        if img is None:
            img = decode_image(image_path)
        if name == "color":
            raws[name] = extract_color_hist(img, config.color_bins)
        elif name == "hsv":
            raws[name] = extract_hsv_stats(img, config.hue_bins)
        elif name == "sift":
            raws[name] = extract_grad_orient(img, config.orient_bins)
        if cache_dir is not None:
            cpath = Path(cache_dir) / name / f"{stem}.view"
            cpath.parent.mkdir(parents=True, exist_ok=True)
            if not cpath.exists():
                write_view_file(cpath, raws[name].values)
    return raws


# ---------------------------------------------------------------------------
# projection into the common dimension

def project_view(raw: RawView, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map of one raw view into the common dimension C."""
    if weight.shape[1] != raw.dim:
        raise ConfigurationError(
            f"projection for '{raw.extractor_id}' expects dim {weight.shape[1]}, "
            f"raw view has dim {raw.dim}"
        )
    return raw.values @ weight.T + bias


def build_view_matrix(raws: list[RawView], params, config: ViewConfig) -> ViewMatrix:
    """Project the ordered raw views and stack them into the l x C matrix."""
    if len(raws) != config.l or any(
        r.extractor_id != name for r, name in zip(raws, config.extractors)
    ):
        got = [r.extractor_id for r in raws]
        raise ConfigurationError(
            f"raw view order {got} does not match config {list(config.extractors)}"
        )
    rows = []
    for raw in raws:
        w = params[f"proj/{raw.extractor_id}/w"].value
        b = params[f"proj/{raw.extractor_id}/b"].value
        rows.append(project_view(raw, w, b))
    return ViewMatrix(np.stack(rows))
