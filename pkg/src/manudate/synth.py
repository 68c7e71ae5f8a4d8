"""Deterministic pseudo-handwriting corpus with style drift across classes.

Pages carry rows of small glyphs built from crossing curved strokes.  Mean
stroke slant and curvature drift linearly with the class index while
per-writer jitter adds nuisance variation, so the class label is
recoverable from writing style alone (and only from style: layout and
stroke counts stay fixed across classes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imgcore import GrayImage, save_gray
from .manifest import ManifestEntry, save as save_manifest
from .seeds import derive_seed

BACKGROUND = 236
INK = 38


@dataclass
class SyntheticSpec:
    """Corpus shape and the style-drift parameters."""

    n_classes: int = 5
    samples_per_class: int = 40
    strokes_per_page: int = 80
    slant_drift_deg: float = 9.0     # added mean slant per class step
    curvature_drift: float = 0.12    # added curve bow per class step
    writer_jitter: float = 0.25      # per-writer fraction of one class step
    writers_per_class: int = 4
    canvas: tuple[int, int] = (256, 192)  # (width, height)
    base_year: int = 1300
    year_step: int = 25
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.samples_per_class < 1 or self.strokes_per_page < 2:
            raise ValueError("samples_per_class and strokes_per_page must be positive")
        w, h = self.canvas
        if w < 64 or h < 48:
            raise ValueError("canvas too small for glyph strokes")
        for name in ("slant_drift_deg", "curvature_drift", "writer_jitter"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def key_years(self) -> list[int]:
        return [self.base_year + self.year_step * c for c in range(self.n_classes)]


def _stamp_curve(canvas: np.ndarray, pts: np.ndarray) -> None:
    """Accumulate soft ink density along a sampled curve."""
    h, w = canvas.shape
    offsets = [(-1, -1), (0, -1), (1, -1), (-1, 0), (0, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
    xs = pts[:, 0]
    ys = pts[:, 1]
    for ox, oy in offsets:
        px = np.rint(xs + 0.45 * ox).astype(np.intp)
        py = np.rint(ys + 0.45 * oy).astype(np.intp)
        keep = (px >= 0) & (px < w) & (py >= 0) & (py < h)
        np.add.at(canvas, (py[keep], px[keep]), 0.5)


def _bezier(p0, p1, p2, n: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)[:, None]
    return (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t ** 2 * p2


def render_page(spec: SyntheticSpec, class_index: int, writer_index: int,
                sample_seed: int) -> GrayImage:
    """Render one page for a (class, writer) pair under a private seed."""
    w, h = spec.canvas
    rng = np.random.default_rng(sample_seed)
    writer_rng = np.random.default_rng(
        derive_seed(spec.seed, "writer", class_index, writer_index))
    centered = class_index - (spec.n_classes - 1) / 2.0
    slant = math.radians(
        spec.slant_drift_deg * (centered + spec.writer_jitter * writer_rng.normal()))
    bow = spec.curvature_drift * (centered + spec.writer_jitter * writer_rng.normal())

    glyphs = max(1, spec.strokes_per_page // 2)
    cols = max(1, int(round(math.sqrt(glyphs * w / h))))
    rows_n = max(1, math.ceil(glyphs / cols))
    cell_w = w / cols
    cell_h = h / rows_n
    glyph_len = min(cell_w, cell_h) * 0.62

    density = np.zeros((h, w), dtype=np.float64)
    placed = 0
    for gy in range(rows_n):
        for gx in range(cols):
            if placed >= glyphs:
                break
            cx = (gx + 0.5) * cell_w + rng.uniform(-0.08, 0.08) * cell_w
            cy = (gy + 0.5) * cell_h + rng.uniform(-0.08, 0.08) * cell_h
            ang = slant + math.pi / 2 + rng.normal(0.0, 0.05)
            half = glyph_len / 2.0
            d = np.array([math.cos(ang), -math.sin(ang)])
            n_vec = np.array([-d[1], d[0]])
            p0 = np.array([cx, cy]) - half * d
            p2 = np.array([cx, cy]) + half * d
            ctrl = np.array([cx, cy]) + (bow + rng.normal(0.0, 0.04)) * glyph_len * n_vec
            pts = _bezier(p0, ctrl, p2, int(glyph_len * 3))
            _stamp_curve(density, pts)
            # crossing bar gives the glyph a branch point
            bar_ang = ang + math.pi / 2 + rng.normal(0.0, 0.08)
            bd = np.array([math.cos(bar_ang), -math.sin(bar_ang)])
            offset = rng.uniform(-0.22, 0.22) * glyph_len * d
            b0 = np.array([cx, cy]) + offset - 0.3 * glyph_len * bd
            b2 = np.array([cx, cy]) + offset + 0.3 * glyph_len * bd
            bctrl = (b0 + b2) / 2.0 + rng.normal(0.0, 0.03) * glyph_len * n_vec
            pts = _bezier(b0, bctrl, b2, int(glyph_len * 2))
            _stamp_curve(density, pts)
            placed += 1

    ink_strength = np.clip(density, 0.0, 1.0)
    page = BACKGROUND - (BACKGROUND - INK) * ink_strength
    return GrayImage(np.rint(page).astype(np.uint8))


def generate_corpus(spec: SyntheticSpec, out_dir: str | Path) -> list[ManifestEntry]:
    """Render every page, write images plus manifest, return the entries."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images_dir = out_dir / "images"
    images_dir.mkdir(exist_ok=True)
    entries: list[ManifestEntry] = []
    years = spec.key_years()
    for ci in range(spec.n_classes):
        for si in range(spec.samples_per_class):
            writer_index = si % spec.writers_per_class
            sample_seed = derive_seed(spec.seed, "sample", ci, si)
            page = render_page(spec, ci, writer_index, sample_seed)
            sample_id = f"y{years[ci]}_s{si:03d}"
            path = images_dir / f"{sample_id}.png"
            save_gray(page, path)
            entries.append(ManifestEntry(
                id=sample_id,
                path=str(path),
                label_year=years[ci],
                writer=f"w{ci}_{writer_index}",
            ))
    save_manifest(entries, out_dir / "manifest.jsonl")
    return entries
