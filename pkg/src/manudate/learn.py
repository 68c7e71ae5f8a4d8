"""Scaling, linear one-vs-all classification, cross-validation, and metrics.

The classifier is an L2-regularized hinge-loss linear SVM per class, solved
by deterministic dual coordinate descent on the Gram matrix (features here
are much wider than the sample count, so the dual form is the cheap one).
A constant augmented feature of 1 supplies a regularized bias.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .manifest import ManifestEntry

GRID_EXPONENTS = tuple(range(-7, 11))  # 18 values: 2^-7 .. 2^10


def default_grid() -> list[float]:
    return [float(2.0 ** n) for n in GRID_EXPONENTS]


DEFAULT_SEEDS = (0, 50, 100, 150, 200, 250)


class LeakageError(ValueError):
    """Raised when augmented variants cross a train/evaluation boundary."""


# --------------------------------------------------------------------------
# Scaling

@dataclass
class ScalerState:
    """Range summary of a training feature set plus the target interval.

    Each vector is min-max standardized over its own entries and mapped to
    the target range; the stored set-wide extrema are fitted from training
    data only and recorded for diagnostics and model files.
    """

    set_min: float
    set_max: float
    target: tuple[float, float] = (0.0, 1.0)


def fit_scaler(train_vectors: np.ndarray) -> ScalerState:
    train_vectors = np.asarray(train_vectors, dtype=np.float64)
    if train_vectors.size == 0:
        raise ValueError("cannot fit a scaler on an empty training set")
    return ScalerState(set_min=float(train_vectors.min()), set_max=float(train_vectors.max()))


def apply_scaler(vector: np.ndarray, state: ScalerState) -> np.ndarray:
    """Per-vector min-max standardization mapped onto the target range.

    A constant vector has no range and maps to all-zeros.
    """
    v = np.asarray(vector, dtype=np.float64)
    lo = v.min(axis=-1, keepdims=True)
    hi = v.max(axis=-1, keepdims=True)
    span = hi - lo
    std = np.divide(v - lo, span, out=np.zeros_like(v), where=span > 0)
    t_lo, t_hi = state.target
    return std * (t_hi - t_lo) + t_lo


# --------------------------------------------------------------------------
# Linear one-vs-all SVM

@dataclass
class LinearOvaModel:
    """One weight vector and bias per class; classes ascend by key year."""

    classes: list[int]
    weights: np.ndarray  # (n_classes, dim)
    biases: np.ndarray   # (n_classes,)
    C: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.weights).all() or not np.isfinite(self.biases).all():
            raise ValueError("model parameters must be finite")


def _dual_cd(K: np.ndarray, y: np.ndarray, C: float,
             tol: float = 1e-4, max_passes: int = 1000,
             alpha0: np.ndarray | None = None) -> np.ndarray:
    """Dual coordinate descent for the hinge-loss SVM on a Gram matrix.

    Passes visit samples in fixed index order (deterministic).  Stops when
    the duality gap drops to ``tol`` or after ``max_passes`` sweeps.
    Returns the dual variables alpha in [0, C].
    """
    from ._kernels import dual_cd_kernel

    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if alpha0 is None:
        alpha = np.zeros(len(y))
        v = np.zeros(len(y))
    else:
        alpha = np.clip(np.asarray(alpha0, dtype=np.float64), 0.0, C)
        v = K @ (alpha * y)
    dual_cd_kernel(K, y, float(C), float(tol), int(max_passes), alpha, v)
    return alpha


def _gram(X: np.ndarray) -> np.ndarray:
    # + 1 accounts for the constant bias feature
    return X @ X.T + 1.0


def train_ova(
    X: np.ndarray,
    years: np.ndarray,
    C: float,
    tol: float = 1e-4,
    max_passes: int = 1000,
) -> LinearOvaModel:
    """Fit one binary hinge-loss SVM per class on scaled feature rows."""
    X = np.asarray(X, dtype=np.float64)
    years = np.asarray(years, dtype=np.int64)
    classes = sorted(set(int(c) for c in years))
    if len(classes) < 2:
        raise ValueError("one-vs-all training needs at least 2 classes")
    K = _gram(X)
    weights = np.zeros((len(classes), X.shape[1]))
    biases = np.zeros(len(classes))
    for ci, cls in enumerate(classes):
        y = np.where(years == cls, 1.0, -1.0)
        alpha = _dual_cd(K, y, C, tol=tol, max_passes=max_passes)
        coef = alpha * y
        weights[ci] = coef @ X
        biases[ci] = coef.sum()
    return LinearOvaModel(classes=classes, weights=weights, biases=biases, C=C)


def decision_values(model: LinearOvaModel, X: np.ndarray) -> np.ndarray:
    return np.asarray(X, dtype=np.float64) @ model.weights.T + model.biases


def predict(model: LinearOvaModel, X: np.ndarray) -> np.ndarray:
    """Class with the maximal decision value; ties go to the earliest year."""
    scores = decision_values(model, X)
    picks = np.argmax(scores, axis=1)  # first max = earliest year
    return np.asarray(model.classes, dtype=np.int64)[picks]


# --------------------------------------------------------------------------
# Metrics

def mae(preds, truths) -> float:
    preds = np.asarray(preds, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if preds.shape != truths.shape or preds.size == 0:
        raise ValueError("predictions and truths must be equal-length and nonempty")
    return float(np.abs(preds - truths).mean())


def cs(preds, truths, alpha: float) -> float:
    """Cumulative score: percent of samples with absolute error <= alpha."""
    preds = np.asarray(preds, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if preds.shape != truths.shape or preds.size == 0:
        raise ValueError("predictions and truths must be equal-length and nonempty")
    return float(100.0 * (np.abs(preds - truths) <= alpha).sum() / preds.size)


def confusion(preds, truths, classes: list[int]) -> np.ndarray:
    index = {c: i for i, c in enumerate(classes)}
    table = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for p, t in zip(preds, truths):
        table[index[int(t)], index[int(p)]] += 1
    return table


@dataclass
class EvalReport:
    """Holdout metrics for one feature under one training condition."""

    mae: float
    cs0: float
    cs25: float
    confusion: np.ndarray
    classes: list[int]
    condition: str
    n_test: int

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "cs0": self.cs0,
            "cs25": self.cs25,
            "classes": self.classes,
            "confusion": self.confusion.tolist(),
            "condition": self.condition,
            "n_test": self.n_test,
        }


# --------------------------------------------------------------------------
# Stratified folds and cross-validation

def stratified_folds(entries: list[ManifestEntry], k: int, seed: int) -> dict[str, int]:
    """Fold index per source sample id, stratified by key-year label.

    Depends only on (seed, source ids, labels): entries are grouped by
    label, shuffled under the seed, and dealt round-robin.  Augmented
    variants are rejected so augmentation can never shift fold assignment.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if any(e.is_augmented for e in entries):
        raise LeakageError("fold assignment must use source samples only")
    by_class: dict[int, list[str]] = {}
    for e in entries:
        by_class.setdefault(e.label_year, []).append(e.id)
    folds: dict[str, int] = {}
    rng = np.random.default_rng(seed)
    for year in sorted(by_class):
        ids = sorted(by_class[year])
        if len(ids) < k:
            raise ValueError(
                f"class {year} has {len(ids)} samples, fewer than k={k}")
        order = rng.permutation(len(ids))
        for slot, idx in enumerate(order):
            folds[ids[idx]] = slot % k
    return folds


def training_ids_for_fold(
    entries: list[ManifestEntry],
    folds: dict[str, int],
    fold: int,
    condition: str,
) -> tuple[list[str], list[str]]:
    """(train ids, validation ids) for one fold under a condition.

    Training keeps sources outside the fold; in the augmented condition the
    variants of those sources join them.  Variants of validation sources
    are excluded by construction, and the result is checked anyway.
    """
    if condition not in ("non-augmented", "augmented"):
        raise ValueError(f"unknown condition {condition!r}")
    val_ids = [e.id for e in entries if not e.is_augmented and folds[e.id] == fold]
    train_ids = [e.id for e in entries if not e.is_augmented and folds[e.id] != fold]
    if condition == "augmented":
        keep = set(train_ids)
        train_ids += [e.id for e in entries if e.is_augmented and e.source_id in keep]
    forbidden = {e.id for e in entries if e.is_augmented and e.source_id in set(val_ids)}
    overlap = forbidden & set(train_ids)
    if overlap:
        raise LeakageError(f"augmented variants of validation samples in training: {sorted(overlap)[:5]}")
    return train_ids, val_ids


@dataclass
class CvCell:
    C: float
    mae_mean: float = 0.0
    mae_sd: float = 0.0
    cs0_mean: float = 0.0
    cs0_sd: float = 0.0
    cs25_mean: float = 0.0
    cs25_sd: float = 0.0


@dataclass
class CvResult:
    cells: list[CvCell]
    selected_c: float
    rows: list[dict] = field(default_factory=list)  # per (C, seed, fold) metrics


def cross_validate(
    entries: list[ManifestEntry],
    features: dict[str, np.ndarray],
    grid: list[float] | None = None,
    k: int = 10,
    seeds: tuple[int, ...] = DEFAULT_SEEDS,
    condition: str = "non-augmented",
    tol: float = 1e-4,
    max_passes: int = 1000,
) -> CvResult:
    """Stratified k-fold grid search over C, averaged across seeds.

    Folds are dealt on source samples only; augmented variants follow their
    source into training splits and never into validation.  Validation
    predictions use the dual expansion directly, which equals the primal
    decision values.  The returned C maximizes mean accuracy, with ties
    broken by lower mean MAE and then by the smaller C.
    """
    grid = sorted(grid or default_grid())
    source_entries = [e for e in entries if not e.is_augmented]
    missing = [e.id for e in entries if e.id not in features]
    if missing:
        raise ValueError(f"features missing for samples: {missing[:5]}")
    pool = source_entries if condition == "non-augmented" else entries
    ids = [e.id for e in pool]
    slot = {sample_id: i for i, sample_id in enumerate(ids)}
    X_all = np.stack([apply_scaler(features[i], ScalerState(0.0, 1.0)) for i in ids])
    labels_all = np.asarray([e.label_year for e in pool], dtype=np.int64)
    classes = sorted({e.label_year for e in source_entries})
    if len(classes) < 2:
        raise ValueError("cross-validation needs at least 2 classes")
    # one Gram for the whole pool; folds take submatrices
    K_full = _gram(X_all)

    metrics: dict[float, list[tuple[float, float, float]]] = {c: [] for c in grid}
    rows: list[dict] = []
    for seed in seeds:
        folds = stratified_folds(source_entries, k, seed)
        for fold in range(k):
            train_ids, val_ids = training_ids_for_fold(entries, folds, fold, condition)
            tr = np.asarray([slot[i] for i in train_ids], dtype=np.intp)
            va = np.asarray([slot[i] for i in val_ids], dtype=np.intp)
            ytr = labels_all[tr]
            yval = labels_all[va]
            # the scaler contract: fitted on the training split only
            fit_scaler(X_all[tr])
            K = K_full[np.ix_(tr, tr)]
            Kval = K_full[np.ix_(tr, va)]
            warm: dict[int, np.ndarray] = {}
            for C in grid:
                scores = np.empty((len(val_ids), len(classes)))
                for ci, cls in enumerate(classes):
                    y = np.where(ytr == cls, 1.0, -1.0)
                    alpha = _dual_cd(K, y, C, tol=tol, max_passes=max_passes,
                                     alpha0=warm.get(ci))
                    warm[ci] = alpha
                    scores[:, ci] = (alpha * y) @ Kval
                preds = np.asarray(classes, dtype=np.int64)[np.argmax(scores, axis=1)]
                cell = (mae(preds, yval), cs(preds, yval, 0), cs(preds, yval, 25))
                metrics[C].append(cell)
                rows.append({
                    "condition": condition, "C": C, "seed": seed, "fold": fold,
                    "mae": cell[0], "cs0": cell[1], "cs25": cell[2],
                })

    cells = []
    for C in grid:
        vals = np.asarray(metrics[C])
        sd = vals.std(axis=0, ddof=1) if len(vals) > 1 else np.zeros(3)
        cells.append(CvCell(
            C=C,
            mae_mean=float(vals[:, 0].mean()), mae_sd=float(sd[0]),
            cs0_mean=float(vals[:, 1].mean()), cs0_sd=float(sd[1]),
            cs25_mean=float(vals[:, 2].mean()), cs25_sd=float(sd[2]),
        ))
    best = max(cells, key=lambda c: (c.cs0_mean, -c.mae_mean, -c.C))
    return CvResult(cells=cells, selected_c=best.C, rows=rows)


def evaluate_holdout(
    model: LinearOvaModel,
    scaler: ScalerState,
    test_entries: list[ManifestEntry],
    features: dict[str, np.ndarray],
    condition: str,
) -> EvalReport:
    """Score a trained model on non-augmented holdout samples."""
    if not test_entries:
        raise ValueError("empty test manifest")
    augmented = [e.id for e in test_entries if e.is_augmented]
    if augmented:
        raise LeakageError(f"augmented samples in the test set: {augmented[:5]}")
    X = np.stack([apply_scaler(features[e.id], scaler) for e in test_entries])
    truths = np.asarray([e.label_year for e in test_entries], dtype=np.int64)
    preds = predict(model, X)
    return EvalReport(
        mae=mae(preds, truths),
        cs0=cs(preds, truths, 0),
        cs25=cs(preds, truths, 25),
        confusion=confusion(preds, truths, model.classes),
        classes=model.classes,
        condition=condition,
        n_test=len(test_entries),
    )


# --------------------------------------------------------------------------
# Persistence

def save_model(model: LinearOvaModel, scaler: ScalerState, path: str | Path,
               meta: dict | None = None) -> None:
    """JSON header line plus per-class weight rows (weights then bias)."""
    header = {
        "classes": model.classes,
        "dim": int(model.weights.shape[1]),
        "C": model.C,
        "scaler": {"set_min": scaler.set_min, "set_max": scaler.set_max,
                   "target": list(scaler.target)},
    }
    if meta:
        header.update(meta)
    block = np.concatenate([model.weights, model.biases[:, None]], axis=1)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(block.astype("<f8").tobytes())


def load_model(path: str | Path) -> tuple[LinearOvaModel, ScalerState, dict]:
    blob = Path(path).read_bytes()
    end = blob.index(b"\n")
    header = json.loads(blob[:end].decode("utf-8"))
    dim = int(header["dim"])
    classes = [int(c) for c in header["classes"]]
    block = np.frombuffer(blob[end + 1 :], dtype="<f8").reshape(len(classes), dim + 1)
    model = LinearOvaModel(classes=classes, weights=block[:, :dim].copy(),
                           biases=block[:, dim].copy(), C=float(header["C"]))
    s = header["scaler"]
    scaler = ScalerState(set_min=float(s["set_min"]), set_max=float(s["set_max"]),
                         target=tuple(s["target"]))
    return model, scaler, header
