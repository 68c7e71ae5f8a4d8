"""Character-level elastic page distortion with provenance tracking.

A per-pixel random displacement field is smoothed with a Gaussian kernel and
rescaled so its largest displacement magnitude equals the configured cap,
then applied by bilinear resampling.  Distortions therefore stay local and
bounded, deforming character parts without destroying the writing style.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imgcore import BinaryImage, GrayImage, binarize, load_gray, save_gray
from .manifest import ManifestEntry
from .seeds import derive_seed


@dataclass
class MorphParams:
    """Distortion parameters; radius and displacement are in pixels."""

    smoothing_radius: int = 8
    displacement: float = 1.0
    seed: int = 0
    copies: int = 3  # use 15 for very small collections

    def __post_init__(self) -> None:
        if self.smoothing_radius < 1:
            raise ValueError("smoothing_radius must be >= 1")
        if self.displacement < 0:
            raise ValueError("displacement must be >= 0")
        if self.copies < 1:
            raise ValueError("copies must be >= 1")


@dataclass
class DisplacementField:
    """Per-pixel real-valued offsets, one plane per axis."""

    dx: np.ndarray
    dy: np.ndarray

    @property
    def width(self) -> int:
        return self.dx.shape[1]

    @property
    def height(self) -> int:
        return self.dx.shape[0]


def make_field(w: int, h: int, params: MorphParams) -> DisplacementField:
    """Smoothed random displacement field with max magnitude = displacement.

    Offsets are drawn i.i.d. uniform in [-1, 1] per pixel per axis, each
    axis is convolved with a Gaussian of sigma = radius / 2 truncated at
    +-radius (kernel renormalized), and both planes are rescaled together.
    """
    if w < 1 or h < 1:
        raise ValueError("field dimensions must be >= 1")
    rng = np.random.default_rng(params.seed)
    dx = rng.uniform(-1.0, 1.0, size=(h, w))
    dy = rng.uniform(-1.0, 1.0, size=(h, w))
    if params.displacement == 0.0:
        return DisplacementField(dx=np.zeros((h, w)), dy=np.zeros((h, w)))
    sigma = params.smoothing_radius / 2.0
    # truncate = radius / sigma keeps the kernel support at +-radius
    dx = ndimage.gaussian_filter(dx, sigma=sigma, truncate=2.0, mode="reflect")
    dy = ndimage.gaussian_filter(dy, sigma=sigma, truncate=2.0, mode="reflect")
    magnitude = np.sqrt(dx * dx + dy * dy)
    peak = magnitude.max()
    if peak > 0:
        scale = params.displacement / peak
        dx *= scale
        dy *= scale
    return DisplacementField(dx=dx, dy=dy)


def _bilinear(data: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``data`` at float coordinates, clamping to the nearest edge."""
    h, w = data.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = data[y0, x0] * (1.0 - fx) + data[y0, x1] * fx
    bot = data[y1, x0] * (1.0 - fx) + data[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def morph(img: GrayImage, params: MorphParams) -> GrayImage:
    """Resample the image through a fresh displacement field.

    output(x, y) samples the input at (x + dx, y + dy); a zero displacement
    reproduces the input bit-exactly.
    """
    field = make_field(img.width, img.height, params)
    return warp(img, field)


def warp(img: GrayImage, field: DisplacementField) -> GrayImage:
    """Apply an existing displacement field by bilinear resampling."""
    if (field.height, field.width) != (img.height, img.width):
        raise ValueError("field dimensions must match the image")
    ys, xs = np.mgrid[0 : img.height, 0 : img.width].astype(np.float64)
    sampled = _bilinear(img.data.astype(np.float64), xs + field.dx, ys + field.dy)
    return GrayImage(np.rint(sampled).astype(np.uint8))


def morph_entry_path(source_path: str | Path, copy_index: int) -> Path:
    source_path = Path(source_path)
    return source_path.with_name(f"{source_path.stem}.morph{copy_index}.png")


def augment_batch(
    entries: list[ManifestEntry],
    params: MorphParams,
    post_binarize: bool = False,
    write_images: bool = True,
) -> list[ManifestEntry]:
    """Emit ``copies`` distorted variants per source entry.

    The merged manifest interleaves each source with its variants in copy
    order.  Each variant carries provenance (source id) and a derived seed
    that depends only on (seed, source id, copy index), so extending the
    corpus never reshuffles existing variants.  With ``post_binarize`` the
    distortion is applied to the binarized page instead of the raw grays.
    """
    merged: list[ManifestEntry] = []
    for entry in entries:
        if entry.source_id is not None:
            raise ValueError(f"refusing to augment an augmented sample: {entry.id}")
        merged.append(entry)
        img = load_gray(entry.path) if write_images else None
        if img is not None and post_binarize:
            ink = binarize(img, empty_on_constant=True)
            img = GrayImage(np.where(ink.mask, 0, 255).astype(np.uint8))
        for k in range(params.copies):
            seed = derive_seed(params.seed, entry.id, k)
            out_path = morph_entry_path(entry.path, k)
            if img is not None:
                warped = morph(img, replace(params, seed=seed))
                save_gray(warped, out_path)
            merged.append(
                ManifestEntry(
                    id=f"{entry.id}.morph{k}",
                    path=str(out_path),
                    label_year=entry.label_year,
                    writer=entry.writer,
                    source_id=entry.id,
                    seed=seed,
                )
            )
    return merged


def ink_area_ratio(original: BinaryImage, morphed: BinaryImage) -> float:
    """Morphed-to-original ink area ratio (realism diagnostic)."""
    base = original.ink_count()
    if base == 0:
        return 1.0 if morphed.ink_count() == 0 else float("inf")
    return morphed.ink_count() / base
