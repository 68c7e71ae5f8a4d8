"""End-to-end experiment driver: two training conditions over six features.

Stages: stratified holdout split, elastic augmentation of training sources,
feature extraction, codebook size sweep plus per-condition codebooks for the
junction feature, cross-validated grid search, final training, and holdout
evaluation.  Test images are never opened before the evaluation stage, and
every artifact write is deterministic for a fixed configuration.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import codebook as cbk
from . import contour_features as cft
from . import junclets as jct
from . import learn
from .augment import MorphParams, augment_batch
from .featurevec import (
    ALL_KINDS,
    KIND_JUNCLETS,
    KIND_JUNCLETS_RAW,
    TEXTURAL_KINDS,
    check_contract,
    write_records,
)
from .imgcore import binarize, load_gray, record_image_reads, trace_contours
from .manifest import ManifestEntry, save as save_manifest, sources, validate
from .seeds import derive_seed

log = logging.getLogger("manudate")

CONDITIONS = ("non-augmented", "augmented")


@dataclass
class ExperimentConfig:
    features: tuple[str, ...] = ALL_KINDS
    conditions: tuple[str, ...] = CONDITIONS
    k: int = 10
    seeds: tuple[int, ...] = learn.DEFAULT_SEEDS
    grid_exponents: tuple[int, ...] = learn.GRID_EXPONENTS
    test_fraction: float = 0.10
    test_ids: tuple[str, ...] | None = None
    split_seed: int = 17
    morph: MorphParams = field(default_factory=MorphParams)
    sub_size_candidates: tuple[int, ...] = (25, 100, 225, 400, 625, 900)
    som_epochs: int = 500
    som_alpha0: float = 0.99
    som_seed: int = 0
    descriptor_cap: int | None = None  # per key year, for codebook training
    hinge: cft.HingeConfig = field(default_factory=cft.HingeConfig)
    polarity: str = "ink-darker"
    svm_tol: float = 1e-4
    svm_max_passes: int = 1000
    jobs: int = 1

    def __post_init__(self) -> None:
        unknown = [f for f in self.features if f not in ALL_KINDS]
        if unknown:
            raise ValueError(f"unknown feature kinds: {unknown}")
        unknown = [c for c in self.conditions if c not in CONDITIONS]
        if unknown:
            raise ValueError(f"unknown conditions: {unknown}")
        if not self.sub_size_candidates:
            raise ValueError("sub_size_candidates must be nonempty")
        if not (self.test_ids or 0.0 < self.test_fraction < 1.0):
            raise ValueError("need a test fraction in (0, 1) or explicit test ids")

    def grid(self) -> list[float]:
        return [float(2.0 ** n) for n in self.grid_exponents]

    def som_params(self) -> cbk.SomParams:
        return cbk.SomParams(epochs=self.som_epochs, alpha0=self.som_alpha0,
                             seed=self.som_seed)


def holdout_split(
    entries: list[ManifestEntry],
    test_fraction: float,
    seed: int,
    test_ids: tuple[str, ...] | None = None,
) -> tuple[list[ManifestEntry], list[ManifestEntry]]:
    """Stratified (train, test) split over source samples."""
    srcs = sources(entries)
    if test_ids:
        wanted = set(test_ids)
        missing = wanted - {e.id for e in srcs}
        if missing:
            raise ValueError(f"unknown test ids: {sorted(missing)[:5]}")
        test = [e for e in srcs if e.id in wanted]
        train = [e for e in srcs if e.id not in wanted]
        return train, test
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[ManifestEntry]] = {}
    for e in srcs:
        by_class.setdefault(e.label_year, []).append(e)
    test: list[ManifestEntry] = []
    train: list[ManifestEntry] = []
    for year in sorted(by_class):
        group = sorted(by_class[year], key=lambda e: e.id)
        n_test = max(1, int(round(len(group) * test_fraction)))
        picks = set(rng.choice(len(group), size=n_test, replace=False).tolist())
        for i, e in enumerate(group):
            (test if i in picks else train).append(e)
    return train, test


def _extract_one(args: tuple) -> tuple[str, dict[str, np.ndarray], np.ndarray]:
    """Worker: all textural histograms plus raw junction profiles for one page."""
    entry_id, path, polarity, hinge_cfg = args
    gray = load_gray(path)
    ink = binarize(gray, polarity=polarity, empty_on_constant=True)
    contours = trace_contours(ink)
    vectors: dict[str, np.ndarray] = {}
    for kind in TEXTURAL_KINDS:
        vec = cft.extract(kind, contours, hinge_cfg)
        check_contract(vec)
        vectors[kind] = vec.values
    descriptors = jct.extract_junctions(ink)
    raw = (np.stack([d.values for d in descriptors])
           if descriptors else np.empty((0, jct.N_DIRECTIONS)))
    return entry_id, vectors, raw


def extract_features(
    entries: list[ManifestEntry],
    cfg: ExperimentConfig,
) -> tuple[dict[str, dict[str, np.ndarray]], dict[str, np.ndarray]]:
    """Per-kind feature maps plus raw junction descriptor stacks, by sample."""
    tasks = [(e.id, e.path, cfg.polarity, cfg.hinge) for e in entries]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_extract_one, tasks, chunksize=8))
    else:
        results = [_extract_one(t) for t in tasks]
    features: dict[str, dict[str, np.ndarray]] = {k: {} for k in TEXTURAL_KINDS}
    raw: dict[str, np.ndarray] = {}
    for entry_id, vectors, descriptors in results:
        for kind, vec in vectors.items():
            features[kind][entry_id] = vec
        raw[entry_id] = descriptors
    return features, raw


def _capped_patterns_by_year(
    entries: list[ManifestEntry],
    raw: dict[str, np.ndarray],
    cap: int | None,
    seed: int,
) -> dict[int, np.ndarray]:
    by_year: dict[int, list[np.ndarray]] = {}
    for e in entries:
        block = raw[e.id]
        if len(block):
            by_year.setdefault(e.label_year, []).append(block)
    out: dict[int, np.ndarray] = {}
    for year in sorted(by_year):
        stack = np.concatenate(by_year[year], axis=0)
        if cap is not None and len(stack) > cap:
            rng = np.random.default_rng(derive_seed(seed, "cap", year))
            keep = np.sort(rng.choice(len(stack), size=cap, replace=False))
            stack = stack[keep]
        out[year] = stack
    if not out:
        raise ValueError("no junction descriptors available for codebook training")
    return out


def _train_codebook(args: tuple) -> tuple[int, cbk.Codebook]:
    sub_size, patterns_by_year, params = args
    return sub_size, cbk.train_sotm(patterns_by_year, sub_size, params)


def _encode_all(ids: list[str], raw: dict[str, np.ndarray], book: cbk.Codebook) -> dict[str, np.ndarray]:
    encoded = {}
    for entry_id in ids:
        vec = cbk.encode(raw[entry_id], book)
        check_contract(vec)
        encoded[entry_id] = vec.values
    return encoded


def sweep_codebook_sizes(
    train_entries: list[ManifestEntry],
    raw: dict[str, np.ndarray],
    cfg: ExperimentConfig,
) -> tuple[int, list[dict], dict[int, cbk.Codebook]]:
    """Cross-validate every candidate size on non-augmented training data.

    Returns the selected size (best mean accuracy, ties toward lower MAE
    then the smaller size), per-size summary rows, and the trained books.
    """
    srcs = sources(train_entries)
    patterns = _capped_patterns_by_year(srcs, raw, cfg.descriptor_cap, cfg.som_seed)
    tasks = [(s, patterns, cfg.som_params()) for s in cfg.sub_size_candidates]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            books = dict(pool.map(_train_codebook, tasks))
    else:
        books = dict(_train_codebook(t) for t in tasks)
    rows = []
    scored = []
    for size in cfg.sub_size_candidates:
        encoded = _encode_all([e.id for e in srcs], raw, books[size])
        cv = learn.cross_validate(
            srcs, encoded, grid=cfg.grid(), k=cfg.k, seeds=cfg.seeds,
            condition="non-augmented", tol=cfg.svm_tol, max_passes=cfg.svm_max_passes)
        best = next(c for c in cv.cells if c.C == cv.selected_c)
        rows.append({
            "sub_size": size, "C": cv.selected_c,
            "mae_mean": best.mae_mean, "mae_sd": best.mae_sd,
            "cs0_mean": best.cs0_mean, "cs0_sd": best.cs0_sd,
            "cs25_mean": best.cs25_mean, "cs25_sd": best.cs25_sd,
        })
        scored.append((best.cs0_mean, -best.mae_mean, -size))
    best_idx = max(range(len(scored)), key=lambda i: scored[i])
    return cfg.sub_size_candidates[best_idx], rows, books


def _fmt(value: float) -> str:
    return format(value, ".6f")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            _fmt(v) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_experiment(
    entries: list[ManifestEntry],
    cfg: ExperimentConfig,
    out_dir: str | Path,
) -> dict:
    """Run both conditions for every configured feature; write the bundle."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    validate(entries)
    if any(e.is_augmented for e in entries):
        raise ValueError("experiment input must contain source samples only")

    train_reads: list[str] = []
    eval_reads: list[str] = []

    with record_image_reads(train_reads):
        train_sources, test_sources = holdout_split(
            entries, cfg.test_fraction, cfg.split_seed, cfg.test_ids)
        log.info("split: %d train sources, %d test sources",
                 len(train_sources), len(test_sources))

        train_all = augment_batch(train_sources, cfg.morph)
        save_manifest(train_all, out_dir / "train_manifest.jsonl")
        save_manifest(test_sources, out_dir / "test_manifest.jsonl")
        log.info("augmented training set: %d entries", len(train_all))

        features, raw = extract_features(train_all, cfg)
        for kind in TEXTURAL_KINDS:
            write_records(
                out_dir / f"features_{kind}.bin",
                [({"kind": kind, "sample": e.id}, features[kind][e.id]) for e in train_all])
        write_records(
            out_dir / f"features_{KIND_JUNCLETS_RAW}.bin",
            [({"kind": KIND_JUNCLETS_RAW, "sample": e.id, "index": i}, row)
             for e in train_all for i, row in enumerate(raw[e.id])])

        junclets_wanted = KIND_JUNCLETS in cfg.features
        sweep_rows: list[dict] = []
        selected_size = None
        condition_books: dict[str, cbk.Codebook] = {}
        if junclets_wanted:
            selected_size, sweep_rows, books = sweep_codebook_sizes(train_all, raw, cfg)
            log.info("selected sub-codebook size: %d", selected_size)
            for condition in cfg.conditions:
                if condition == "non-augmented":
                    # the sweep already trained this book on source descriptors
                    condition_books[condition] = books[selected_size]
                else:
                    patterns = _capped_patterns_by_year(
                        train_all, raw, cfg.descriptor_cap, cfg.som_seed)
                    condition_books[condition] = cbk.train_sotm(
                        patterns, selected_size, cfg.som_params())
                cbk.save_codebook(condition_books[condition], cfg.som_params(),
                                  out_dir / f"codebook_{condition}.bin")

        cv_rows: list[dict] = []
        chosen: dict[tuple[str, str], float] = {}
        models: dict[tuple[str, str], tuple[learn.LinearOvaModel, learn.ScalerState]] = {}
        encoded_by_condition: dict[str, dict[str, np.ndarray]] = {}
        for condition in cfg.conditions:
            if junclets_wanted:
                encoded_by_condition[condition] = _encode_all(
                    [e.id for e in train_all], raw, condition_books[condition])
            train_ids = ([e.id for e in sources(train_all)]
                         if condition == "non-augmented" else [e.id for e in train_all])
            labels = {e.id: e.label_year for e in train_all}
            for kind in cfg.features:
                feats = (encoded_by_condition[condition] if kind == KIND_JUNCLETS
                         else features[kind])
                cv = learn.cross_validate(
                    train_all, feats, grid=cfg.grid(), k=cfg.k, seeds=cfg.seeds,
                    condition=condition, tol=cfg.svm_tol, max_passes=cfg.svm_max_passes)
                chosen[(kind, condition)] = cv.selected_c
                for row in cv.rows:
                    cv_rows.append({"feature": kind, **row})
                raw_train = np.stack([feats[i] for i in train_ids])
                scaler = learn.fit_scaler(raw_train)
                X = np.stack([learn.apply_scaler(feats[i], scaler) for i in train_ids])
                y = np.asarray([labels[i] for i in train_ids], dtype=np.int64)
                model = learn.train_ova(X, y, C=cv.selected_c,
                                        tol=cfg.svm_tol, max_passes=cfg.svm_max_passes)
                models[(kind, condition)] = (model, scaler)
                learn.save_model(model, scaler, out_dir / f"model_{kind}_{condition}.bin",
                                 meta={"feature": kind, "condition": condition})
                log.info("cv %s/%s: C=%g", kind, condition, cv.selected_c)

    # evaluation stage: the only stage allowed to open test images
    with record_image_reads(eval_reads):
        test_features, test_raw = extract_features(test_sources, cfg)
        reports: dict[tuple[str, str], learn.EvalReport] = {}
        for condition in cfg.conditions:
            test_encoded = (_encode_all([e.id for e in test_sources], test_raw,
                                        condition_books[condition])
                            if junclets_wanted else {})
            for kind in cfg.features:
                feats = test_encoded if kind == KIND_JUNCLETS else test_features[kind]
                model, scaler = models[(kind, condition)]
                reports[(kind, condition)] = learn.evaluate_holdout(
                    model, scaler, test_sources, feats, condition)

    results_rows = []
    for kind in cfg.features:
        for condition in cfg.conditions:
            rep = reports[(kind, condition)]
            results_rows.append([kind, condition, chosen[(kind, condition)],
                                 rep.mae, rep.cs0, rep.cs25])
    _write_csv(out_dir / "results.csv",
               ["feature", "condition", "C", "mae", "cs0", "cs25"], results_rows)

    _write_csv(out_dir / "cv_results.csv",
               ["feature", "condition", "C", "seed", "fold", "mae", "cs0", "cs25"],
               [[r["feature"], r["condition"], r["C"], r["seed"], r["fold"],
                 r["mae"], r["cs0"], r["cs25"]] for r in cv_rows])

    if sweep_rows:
        _write_csv(out_dir / "fig_codebook_mae.csv",
                   ["sub_size", "mae_mean", "mae_sd"],
                   [[r["sub_size"], r["mae_mean"], r["mae_sd"]] for r in sweep_rows])
        _write_csv(out_dir / "fig_codebook_cs.csv",
                   ["sub_size", "cs0_mean", "cs0_sd", "cs25_mean", "cs25_sd"],
                   [[r["sub_size"], r["cs0_mean"], r["cs0_sd"],
                     r["cs25_mean"], r["cs25_sd"]] for r in sweep_rows])

    for metric in ("mae", "cs0", "cs25"):
        rows = []
        for kind in cfg.features:
            row = [kind]
            for condition in cfg.conditions:
                row.append(getattr(reports[(kind, condition)], metric))
            rows.append(row)
        _write_csv(out_dir / f"fig_test_{metric}.csv",
                   ["feature", *cfg.conditions], rows)

    test_paths = {str(Path(e.path)) for e in test_sources}
    leaked = sorted(test_paths & set(train_reads))
    report = {
        "config": _config_dict(cfg),
        "n_train_sources": len(train_sources),
        "n_test": len(test_sources),
        "selected_sub_size": selected_size,
        "selected_c": {f"{k}/{c}": v for (k, c), v in sorted(chosen.items())},
        "codebook_sweep": sweep_rows,
        "results": {f"{k}/{c}": rep.to_dict() for (k, c), rep in sorted(reports.items())},
        "augmentation_effect_cs0": (
            {kind: (reports[(kind, "augmented")].cs0
                    - reports[(kind, "non-augmented")].cs0)
             for kind in cfg.features}
            if {"augmented", "non-augmented"} <= set(cfg.conditions) else {}
        ),
        "test_paths_read_during_training": leaked,
    }
    if leaked:
        raise learn.LeakageError(f"test images read during training: {leaked[:5]}")
    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report


def _config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)
