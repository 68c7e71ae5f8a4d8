"""Textural features over traced contours: five normalized histograms.

Every feature walks the contours of a page and accumulates joint statistics
of local orientation, curvature, or chain codes.  Angles live in the y-up
frame, so a step east is 0 and a step north is pi/2.  Closed contours wrap
around; open contours contribute only where both legs fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .featurevec import (
    KIND_COHINGE,
    KIND_DELTAHINGE,
    KIND_HINGE,
    KIND_QUADHINGE,
    KIND_TCC,
    FeatureVector,
    normalized,
)
from .imgcore import Contour

TWO_PI = 2.0 * np.pi


@dataclass
class HingeConfig:
    """Knobs for the contour features; defaults match the shipped pipeline."""

    leg_length: int = 7
    hinge_bins: int = 23
    cohinge_bins: int = 10
    cohinge_distance: int = 7
    quad_orient_bins: int = 12
    quad_curv_bins: int = 6
    quad_scales: tuple[int, ...] = (5, 10, 15)
    delta_step: int = 1
    delta_bins: int = 23
    tcc_distance: int = 7

    def __post_init__(self) -> None:
        if self.leg_length < 2:
            raise ValueError("leg_length must be >= 2")
        for name in ("hinge_bins", "cohinge_bins", "cohinge_distance",
                     "quad_orient_bins", "quad_curv_bins", "delta_step",
                     "delta_bins", "tcc_distance"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.quad_scales:
            raise ValueError("quad_scales must be nonempty")

    @property
    def hinge_dim(self) -> int:
        return self.hinge_bins * (self.hinge_bins - 1) // 2

    @property
    def cohinge_dim(self) -> int:
        return self.cohinge_bins ** 4

    @property
    def quad_dim(self) -> int:
        return self.quad_orient_bins ** 2 * self.quad_curv_bins ** 2

    @property
    def delta_dim(self) -> int:
        return self.delta_bins ** 2

    @property
    def tcc_dim(self) -> int:
        return 512


def _pair_index_table(bins: int) -> np.ndarray:
    """Flat index for ordered bin pairs (a, b) with a < b; -1 on the diagonal."""
    table = np.full((bins, bins), -1, dtype=np.int64)
    idx = 0
    for a in range(bins):
        for b in range(a + 1, bins):
            table[a, b] = idx
            idx += 1
    return table


_PAIR_TABLES: dict[int, np.ndarray] = {}


def _pair_table(bins: int) -> np.ndarray:
    if bins not in _PAIR_TABLES:
        _PAIR_TABLES[bins] = _pair_index_table(bins)
    return _PAIR_TABLES[bins]


def _legs(contour: Contour, span: int):
    """Center indices plus integer leg vectors span steps back / ahead.

    Returns (pts, centers, back, fwd) or None when the contour is too short.
    """
    pts = contour.points.astype(np.int64)
    n = len(pts)
    if n < 2 * span + 1:
        return None
    if contour.closed:
        centers = np.arange(n)
        back = pts[(centers - span) % n] - pts
        fwd = pts[(centers + span) % n] - pts
    else:
        centers = np.arange(span, n - span)
        back = pts[centers - span] - pts[centers]
        fwd = pts[centers + span] - pts[centers]
    return pts, centers, back, fwd


def _angles(vectors: np.ndarray) -> np.ndarray:
    """Orientation of (dx, dy) image-frame vectors in [0, 2*pi)."""
    ang = np.arctan2(-vectors[:, 1].astype(np.float64), vectors[:, 0].astype(np.float64))
    return np.mod(ang, TWO_PI)


def _quantize(angles: np.ndarray, bins: int) -> np.ndarray:
    return np.minimum((angles / TWO_PI * bins).astype(np.int64), bins - 1)


def hinge(contours: list[Contour], cfg: HingeConfig | None = None) -> FeatureVector:
    """Joint histogram of the two leg orientations at each contour pixel.

    Leg angle bins form an ordered pair (low, high); events falling in the
    same bin are discarded.
    """
    cfg = cfg or HingeConfig()
    table = _pair_table(cfg.hinge_bins)
    counts = np.zeros(cfg.hinge_dim, dtype=np.float64)
    for contour in contours:
        legs = _legs(contour, cfg.leg_length)
        if legs is None:
            continue
        _, _, back, fwd = legs
        a = _quantize(_angles(back), cfg.hinge_bins)
        b = _quantize(_angles(fwd), cfg.hinge_bins)
        idx = table[np.minimum(a, b), np.maximum(a, b)]
        np.add.at(counts, idx[idx >= 0], 1.0)
    return normalized(KIND_HINGE, counts)


def cohinge(contours: list[Contour], cfg: HingeConfig | None = None) -> FeatureVector:
    """Hinge pairs at two contour locations a Manhattan distance apart.

    The partner of point i is the first point along the contour whose
    Manhattan distance from i reaches the configured threshold; the two
    (low, high) orientation-bin pairs form a 4-D histogram.
    """
    cfg = cfg or HingeConfig()
    bins = cfg.cohinge_bins
    counts = np.zeros(cfg.cohinge_dim, dtype=np.float64)
    for contour in contours:
        legs = _legs(contour, cfg.leg_length)
        if legs is None:
            continue
        pts, centers, back, fwd = legs
        n = len(pts)
        a = _quantize(_angles(back), bins)
        b = _quantize(_angles(fwd), bins)
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        # leg pair of point index p sits at slot p - centers[0]
        offset = int(centers[0])
        partner = np.full(len(centers), -1, dtype=np.int64)
        unresolved = np.arange(len(centers))
        max_k = n - 1 if contour.closed else len(centers) - 1
        for k in range(1, max_k + 1):
            if contour.closed:
                cand = (centers[unresolved] + k) % n
            else:
                cand = centers[unresolved] + k
                keep = cand <= centers[-1]
                unresolved = unresolved[keep]
                cand = cand[keep]
            if unresolved.size == 0:
                break
            dist = np.abs(pts[cand] - pts[centers[unresolved]]).sum(axis=1)
            hit = dist >= cfg.cohinge_distance
            partner[unresolved[hit]] = cand[hit] - offset
            unresolved = unresolved[~hit]
            if unresolved.size == 0:
                break
        valid = partner >= 0
        if not valid.any():
            continue
        j = partner[valid]
        idx = ((lo[valid] * bins + hi[valid]) * bins + lo[j]) * bins + hi[j]
        np.add.at(counts, idx, 1.0)
    return normalized(KIND_COHINGE, counts)


_ARC_STRIDE = 3


def _fragment_arcs(pts: np.ndarray, span: int) -> np.ndarray:
    """Arc length of every forward fragment of ``span`` steps.

    Lengths sum chords over stride-3 sub-spans instead of raw pixel steps,
    which keeps the measure stable against the staircase zigzag that pixel
    boundaries (especially nearest-neighbor rescales) introduce.  Each arc
    is at least the fragment chord, so chord / arc stays in (0, 1].
    Indices wrap; callers on open contours only read wrap-free positions.
    """
    p = pts.astype(np.float64)

    def chord(offset: int, shift: int) -> np.ndarray:
        d = np.roll(p, -(offset + shift), axis=0) - np.roll(p, -offset, axis=0)
        return np.sqrt((d ** 2).sum(axis=1))

    arcs = np.zeros(len(p))
    whole, tail = divmod(span, _ARC_STRIDE)
    for k in range(whole):
        arcs += chord(k * _ARC_STRIDE, _ARC_STRIDE)
    if tail:
        arcs += chord(whole * _ARC_STRIDE, tail)
    return arcs


def quadhinge(contours: list[Contour], cfg: HingeConfig | None = None) -> FeatureVector:
    """Leg orientations joined with per-leg straightness, summed over scales.

    Straightness of a leg is its endpoint distance over its arc length
    (1 for straight fragments, smaller the more the fragment curls).
    """
    cfg = cfg or HingeConfig()
    ob = cfg.quad_orient_bins
    cb = cfg.quad_curv_bins
    counts = np.zeros(cfg.quad_dim, dtype=np.float64)
    for contour in contours:
        pts = contour.points.astype(np.int64)
        n = len(pts)
        for s in cfg.quad_scales:
            legs = _legs(contour, s)
            if legs is None:
                continue
            _, centers, back, fwd = legs
            arcs = _fragment_arcs(pts, s)
            arc_fwd = arcs[centers]
            arc_back = arcs[(centers - s) % n]
            a = _quantize(_angles(back), ob)
            b = _quantize(_angles(fwd), ob)
            chord_back = np.sqrt((back.astype(np.float64) ** 2).sum(axis=1))
            chord_fwd = np.sqrt((fwd.astype(np.float64) ** 2).sum(axis=1))
            ratio_back = np.divide(chord_back, arc_back,
                                   out=np.zeros_like(chord_back), where=arc_back > 0)
            ratio_fwd = np.divide(chord_fwd, arc_fwd,
                                  out=np.zeros_like(chord_fwd), where=arc_fwd > 0)
            c1 = np.minimum((ratio_back * cb).astype(np.int64), cb - 1)
            c2 = np.minimum((ratio_fwd * cb).astype(np.int64), cb - 1)
            idx = ((a * ob + b) * cb + c1) * cb + c2
            np.add.at(counts, idx, 1.0)
    return normalized(KIND_QUADHINGE, counts)


def _signed_turn(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Angle of v relative to u in (-pi, pi], exact under 90-degree rotations.

    Cross and dot products of the integer image-frame vectors are computed
    in int64, so simultaneously rotating both vectors by a quarter turn
    leaves the result bit-identical.
    """
    cross = u[:, 1] * v[:, 0] - u[:, 0] * v[:, 1]  # y-up frame cross product
    dot = u[:, 0] * v[:, 0] + u[:, 1] * v[:, 1]
    return np.arctan2(cross.astype(np.float64), dot.astype(np.float64))


def deltahinge(contours: list[Contour], cfg: HingeConfig | None = None) -> FeatureVector:
    """First difference of the leg orientations along the contour.

    For each point, both leg angles are differenced against the next point's
    (step ``delta_step`` ahead), wrapped to (-pi, pi], and binned jointly.
    Because only angle differences enter, the histogram is invariant to
    global rotations of the page.
    """
    cfg = cfg or HingeConfig()
    bins = cfg.delta_bins
    counts = np.zeros(cfg.delta_dim, dtype=np.float64)
    for contour in contours:
        legs = _legs(contour, cfg.leg_length)
        if legs is None:
            continue
        _, centers, back, fwd = legs
        if contour.closed:
            back_next = np.roll(back, -cfg.delta_step, axis=0)
            fwd_next = np.roll(fwd, -cfg.delta_step, axis=0)
        else:
            if len(centers) <= cfg.delta_step:
                continue
            back, back_next = back[: -cfg.delta_step], back[cfg.delta_step :]
            fwd, fwd_next = fwd[: -cfg.delta_step], fwd[cfg.delta_step :]
        d_alpha = _signed_turn(back_next, back) / cfg.delta_step
        d_beta = _signed_turn(fwd_next, fwd) / cfg.delta_step
        ba = np.minimum(((d_alpha + np.pi) / TWO_PI * bins).astype(np.int64), bins - 1)
        bb = np.minimum(((d_beta + np.pi) / TWO_PI * bins).astype(np.int64), bins - 1)
        np.add.at(counts, ba * bins + bb, 1.0)
    return normalized(KIND_DELTAHINGE, counts)


def tcc(contours: list[Contour], cfg: HingeConfig | None = None) -> FeatureVector:
    """Triples of chain codes sampled at three equidistant contour locations."""
    cfg = cfg or HingeConfig()
    l = cfg.tcc_distance
    counts = np.zeros(512, dtype=np.float64)
    for contour in contours:
        if len(contour.points) < 2 * l + 1 or len(contour.chain) == 0:
            continue
        codes = contour.chain.astype(np.int64) - 1
        if contour.closed:
            c1 = codes
            c2 = np.roll(codes, -l)
            c3 = np.roll(codes, -2 * l)
        else:
            if len(codes) < 2 * l + 1:
                continue
            c1 = codes[: -2 * l]
            c2 = codes[l : -l]
            c3 = codes[2 * l :]
        np.add.at(counts, (c1 * 8 + c2) * 8 + c3, 1.0)
    return normalized(KIND_TCC, counts)


_EXTRACTORS = {
    KIND_HINGE: hinge,
    KIND_COHINGE: cohinge,
    KIND_QUADHINGE: quadhinge,
    KIND_DELTAHINGE: deltahinge,
    KIND_TCC: tcc,
}


def extract(kind: str, contours: list[Contour], cfg: HingeConfig | None = None) -> FeatureVector:
    """Dispatch to one of the five contour features by kind name."""
    try:
        fn = _EXTRACTORS[kind]
    except KeyError:
        raise ValueError(f"unknown textural feature kind {kind!r}") from None
    return fn(contours, cfg)


def rotation90_tcc_permutation() -> np.ndarray:
    """Bin permutation of the chain-code triple histogram under a quarter turn.

    A quarter turn maps chain code c to c + 2 (mod 8), so bin (c1, c2, c3)
    moves to the shifted triple's flat index.
    """
    perm = np.empty(512, dtype=np.int64)
    for c1 in range(8):
        for c2 in range(8):
            for c3 in range(8):
                src = (c1 * 8 + c2) * 8 + c3
                dst = (((c1 + 2) % 8) * 8 + (c2 + 2) % 8) * 8 + (c3 + 2) % 8
                perm[src] = dst
    return perm
