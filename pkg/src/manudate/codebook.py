"""Vector-quantization codebooks: square self-organizing grids chained by year.

Sub-grids are trained one key year at a time in ascending order, each
initialized from its predecessor so temporal structure carries over; the
concatenated grids quantize junction descriptors into usage histograms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .featurevec import KIND_JUNCLETS, FeatureVector, normalized


@dataclass
class SomParams:
    """Online training schedule; the learning rate decays linearly to zero."""

    epochs: int = 500
    alpha0: float = 0.99
    seed: int = 0
    sigma_divisor: float = 3.0  # neighborhood sigma = radius / divisor

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 < self.alpha0 < 1.0:
            raise ValueError("alpha0 must be in (0, 1)")


@dataclass
class SomGrid:
    """Grid of weight vectors labeled with a key year.

    Codebook sub-grids are always square (built from perfect-square sizes);
    the type itself permits rectangular grids for standalone training.
    """

    rows: int
    cols: int
    nodes: np.ndarray  # (rows * cols, dim)
    key_year: int = 0

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have positive dimensions")
        if self.nodes.shape[0] != self.rows * self.cols:
            raise ValueError("node count must equal rows * cols")
        if not np.isfinite(self.nodes).all():
            raise ValueError("grid weights must be finite")

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @property
    def dim(self) -> int:
        return int(self.nodes.shape[1])


@dataclass
class Codebook:
    """Concatenation of per-key-year sub-grids, ascending by year."""

    subs: list[SomGrid] = field(default_factory=list)

    def __post_init__(self) -> None:
        years = [s.key_year for s in self.subs]
        if years != sorted(years) or len(set(years)) != len(years):
            raise ValueError("sub-codebooks must have strictly ascending key years")

    @property
    def total_size(self) -> int:
        return sum(s.size for s in self.subs)

    @property
    def years(self) -> list[int]:
        return [s.key_year for s in self.subs]

    def weights(self) -> np.ndarray:
        return np.concatenate([s.nodes for s in self.subs], axis=0)


def grid_side(sub_size: int) -> int:
    side = math.isqrt(sub_size)
    if side * side != sub_size:
        raise ValueError(f"sub-codebook size {sub_size} is not a perfect square")
    return side


def learning_rate(epoch: int, params: SomParams) -> float:
    """Linear decay from alpha0; exactly zero at epoch == epochs."""
    return params.alpha0 * (1.0 - epoch / params.epochs)


def neighborhood_radius(epoch: int, rows: int, cols: int, params: SomParams) -> float:
    """Linear decay from max(rows, cols) / 2 down to 1 over the epochs."""
    r0 = max(max(rows, cols) / 2.0, 1.0)
    if params.epochs == 1:
        return r0
    frac = epoch / (params.epochs - 1)
    return r0 + (1.0 - r0) * frac


def init_grid(
    patterns: np.ndarray,
    sub_size: int,
    seed: int,
    key_year: int = 0,
) -> SomGrid:
    """Random grid drawn uniformly from the per-dimension data range."""
    patterns = np.asarray(patterns, dtype=np.float64)
    if patterns.ndim != 2 or len(patterns) == 0:
        raise ValueError("patterns must be a nonempty 2-D array")
    side = grid_side(sub_size)
    rng = np.random.default_rng(seed)
    lo = patterns.min(axis=0)
    hi = patterns.max(axis=0)
    nodes = rng.uniform(0.0, 1.0, size=(sub_size, patterns.shape[1])) * (hi - lo) + lo
    return SomGrid(rows=side, cols=side, nodes=nodes, key_year=key_year)


def _grid_distance_sq(rows: int, cols: int) -> np.ndarray:
    rr, cc = np.divmod(np.arange(rows * cols), cols)
    dr = rr[:, None] - rr[None, :]
    dc = cc[:, None] - cc[None, :]
    return (dr * dr + dc * dc).astype(np.float64)


def train_som(grid: SomGrid, patterns: np.ndarray, params: SomParams) -> SomGrid:
    """Classic online training: per pattern, pull nodes toward the winner.

    Patterns are visited in a seeded shuffled order each epoch; the winner
    is the Euclidean-nearest node (ties to the lowest index) and the pull
    strength falls off as a Gaussian of grid distance from the winner.
    The winner search uses the expanded form ||n||^2 - 2 n.x with node
    norms maintained incrementally, and updates skip nodes whose
    neighborhood weight is below 1e-6.
    """
    patterns = np.asarray(patterns, dtype=np.float64)
    if patterns.ndim != 2 or len(patterns) == 0:
        raise ValueError("patterns must be a nonempty 2-D array")
    if patterns.shape[1] != grid.dim:
        raise ValueError("pattern dimension does not match grid")
    from ._kernels import som_epoch_kernel

    patterns = np.ascontiguousarray(patterns)
    nodes = np.ascontiguousarray(grid.nodes, dtype=np.float64).copy()
    rng = np.random.default_rng(params.seed)
    gd2 = _grid_distance_sq(grid.rows, grid.cols)
    norms = np.einsum("ij,ij->i", nodes, nodes)
    for epoch in range(params.epochs):
        alpha = learning_rate(epoch, params)
        radius = neighborhood_radius(epoch, grid.rows, grid.cols, params)
        sigma = max(radius / params.sigma_divisor, 1e-9)
        h = np.exp(-gd2 / (2.0 * sigma * sigma))
        order = rng.permutation(len(patterns)).astype(np.int64)
        som_epoch_kernel(nodes, norms, patterns, order, h, alpha)
    return SomGrid(rows=grid.rows, cols=grid.cols, nodes=nodes, key_year=grid.key_year)


def train_sotm(
    patterns_by_year: dict[int, np.ndarray],
    sub_size: int,
    params: SomParams,
) -> Codebook:
    """Chain-train one sub-grid per key year, in ascending year order.

    The first grid is randomly initialized from its year's data range; each
    later grid starts as a copy of its trained predecessor.
    """
    if not patterns_by_year:
        raise ValueError("need at least one key year")
    years = sorted(patterns_by_year)
    for year in years:
        pats = np.asarray(patterns_by_year[year])
        if pats.ndim != 2 or len(pats) == 0:
            raise ValueError(f"no descriptors for key year {year}")
    subs: list[SomGrid] = []
    prev: SomGrid | None = None
    for year in years:
        pats = np.asarray(patterns_by_year[year], dtype=np.float64)
        if prev is None:
            grid = init_grid(pats, sub_size, seed=params.seed, key_year=year)
        else:
            grid = SomGrid(rows=prev.rows, cols=prev.cols,
                           nodes=prev.nodes.copy(), key_year=year)
        trained = train_som(grid, pats, params)
        subs.append(trained)
        prev = trained
    return Codebook(subs=subs)


def nearest_node(descriptor: np.ndarray, weights: np.ndarray) -> int:
    """Index of the Euclidean-nearest codebook node; ties to the lowest index."""
    diff = weights - descriptor
    return int(np.argmin(np.einsum("ij,ij->i", diff, diff)))


def encode(descriptors: list[np.ndarray] | np.ndarray, cb: Codebook) -> FeatureVector:
    """Histogram of nearest-node usage over the concatenated codebook."""
    weights = cb.weights()
    counts = np.zeros(cb.total_size, dtype=np.float64)
    descriptors = np.asarray(descriptors, dtype=np.float64)
    if descriptors.size == 0:
        return FeatureVector(kind=KIND_JUNCLETS, values=counts, empty=True)
    if descriptors.ndim == 1:
        descriptors = descriptors[None, :]
    chunk = max(1, int(4_000_000 // max(weights.size, 1)))
    for start in range(0, len(descriptors), chunk):
        block = descriptors[start : start + chunk]
        d2 = ((block[:, None, :] - weights[None, :, :]) ** 2).sum(axis=2)
        np.add.at(counts, np.argmin(d2, axis=1), 1.0)
    return normalized(KIND_JUNCLETS, counts)


def quantization_error(patterns: np.ndarray, grid: SomGrid) -> float:
    """Mean distance from each pattern to its nearest node."""
    patterns = np.asarray(patterns, dtype=np.float64)
    total = 0.0
    for p in patterns:
        diff = grid.nodes - p
        total += math.sqrt(float(np.einsum("ij,ij->i", diff, diff).min()))
    return total / len(patterns)


def save_codebook(cb: Codebook, params: SomParams, path: str | Path) -> None:
    """JSON header line plus a little-endian float64 weight block."""
    header = {
        "years": cb.years,
        "sub_size": cb.subs[0].size if cb.subs else 0,
        "dim": cb.subs[0].dim if cb.subs else 0,
        "total_size": cb.total_size,
        "epochs": params.epochs,
        "alpha0": params.alpha0,
        "seed": params.seed,
        "sigma_divisor": params.sigma_divisor,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(cb.weights().astype("<f8").tobytes())


def load_codebook(path: str | Path) -> tuple[Codebook, dict]:
    blob = Path(path).read_bytes()
    end = blob.index(b"\n")
    header = json.loads(blob[:end].decode("utf-8"))
    dim = int(header["dim"])
    sub_size = int(header["sub_size"])
    years = [int(y) for y in header["years"]]
    flat = np.frombuffer(blob[end + 1 :], dtype="<f8").reshape(-1, dim)
    side = grid_side(sub_size)
    subs = []
    for i, year in enumerate(years):
        nodes = flat[i * sub_size : (i + 1) * sub_size].copy()
        subs.append(SomGrid(rows=side, cols=side, nodes=nodes, key_year=year))
    return Codebook(subs=subs), header
