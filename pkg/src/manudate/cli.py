"""Command-line pipeline: independently runnable, idempotent stages.

Every stage reads and writes the documented file formats (JSON-lines
manifests, binary feature containers, codebook and model files, CSV
results), so reruns with unchanged inputs rewrite identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import codebook as cbk
from . import contour_features as cft
from . import learn
from .augment import MorphParams, augment_batch
from .experiment import ExperimentConfig, run_experiment
from .featurevec import (
    ALL_KINDS,
    KIND_JUNCLETS,
    KIND_JUNCLETS_RAW,
    TEXTURAL_KINDS,
    read_records,
    write_csv,
    write_records,
)
from .imgcore import binarize, binarize_sauvola, load_gray, save_binary, trace_contours
from .junclets import extract_junctions, N_DIRECTIONS
from .manifest import load as load_manifest, save as save_manifest
from .synth import SyntheticSpec, generate_corpus

log = logging.getLogger("manudate")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    return json.loads(p.read_text(encoding="utf-8"))


def _require(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"missing {what}: expected {p}")
    return p


def _features_from_file(path: Path) -> dict[str, np.ndarray]:
    return {header["sample"]: values for header, values in read_records(path)}


def _descriptors_from_file(path: Path) -> dict[str, np.ndarray]:
    grouped: dict[str, list[np.ndarray]] = {}
    for header, values in read_records(path):
        grouped.setdefault(header["sample"], []).append(values)
    return {k: np.stack(v) for k, v in grouped.items()}


# --------------------------------------------------------------------------
# Subcommands

def cmd_synth(args: argparse.Namespace, config: dict) -> int:
    section = dict(config.get("synth", {}))
    overrides = {
        "n_classes": args.classes,
        "samples_per_class": args.samples_per_class,
        "strokes_per_page": args.strokes,
        "slant_drift_deg": args.slant_drift,
        "curvature_drift": args.curvature_drift,
        "writer_jitter": args.writer_jitter,
        "seed": args.seed,
    }
    section.update({k: v for k, v in overrides.items() if v is not None})
    if args.canvas:
        w, h = (int(x) for x in args.canvas.lower().split("x"))
        section["canvas"] = (w, h)
    if "canvas" in section:
        section["canvas"] = tuple(section["canvas"])
    spec = SyntheticSpec(**section)
    entries = generate_corpus(spec, args.out_dir)
    log.info("wrote %d pages under %s", len(entries), args.out_dir)
    return 0


def cmd_binarize(args: argparse.Namespace, config: dict) -> int:
    entries = load_manifest(_require(args.manifest, "manifest"))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for entry in entries:
        gray = load_gray(_require(entry.path, f"image for sample {entry.id}"))
        if args.method == "sauvola":
            ink = binarize_sauvola(gray, window=args.window)
        else:
            ink = binarize(gray, polarity=args.polarity, empty_on_constant=True)
        save_binary(ink, out_dir / f"{entry.id}.png")
    log.info("binarized %d images into %s", len(entries), out_dir)
    return 0


def cmd_augment(args: argparse.Namespace, config: dict) -> int:
    entries = load_manifest(_require(args.manifest, "manifest"))
    params = MorphParams(
        smoothing_radius=args.radius,
        displacement=args.displacement,
        seed=args.seed if args.seed is not None else 0,
        copies=args.copies,
    )
    merged = augment_batch(entries, params, post_binarize=args.post_binarize)
    out = Path(args.out_dir) / "augmented_manifest.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_manifest(merged, out)
    log.info("augmented manifest with %d entries at %s", len(merged), out)
    return 0


def cmd_extract(args: argparse.Namespace, config: dict) -> int:
    entries = load_manifest(_require(args.manifest, "manifest"))
    kinds = list(TEXTURAL_KINDS) + [KIND_JUNCLETS_RAW] if args.feature == "all" \
        else [args.feature]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    hinge_cfg = cft.HingeConfig()
    per_kind: dict[str, list] = {k: [] for k in kinds}
    for entry in entries:
        gray = load_gray(_require(entry.path, f"image for sample {entry.id}"))
        ink = binarize(gray, polarity=args.polarity, empty_on_constant=True)
        contours = trace_contours(ink) if any(k in TEXTURAL_KINDS for k in kinds) else []
        for kind in kinds:
            if kind == KIND_JUNCLETS_RAW:
                for i, d in enumerate(extract_junctions(ink)):
                    per_kind[kind].append(
                        ({"kind": kind, "sample": entry.id, "index": i,
                          "origin": list(d.origin), "category": d.category}, d.values))
            else:
                vec = cft.extract(kind, contours, hinge_cfg)
                per_kind[kind].append(({"kind": kind, "sample": entry.id}, vec.values))
    for kind in kinds:
        path = out_dir / f"features_{kind}.bin"
        write_records(path, per_kind[kind])
        if args.csv:
            write_csv(path.with_suffix(".csv"), per_kind[kind])
        log.info("wrote %d records to %s", len(per_kind[kind]), path)
    return 0


def cmd_codebook(args: argparse.Namespace, config: dict) -> int:
    entries = load_manifest(_require(args.manifest, "manifest"))
    raw = _descriptors_from_file(_require(args.descriptors, "descriptor container"))
    label = {e.id: e.label_year for e in entries if not e.is_augmented}
    by_year: dict[int, list[np.ndarray]] = {}
    for sample_id, block in raw.items():
        if sample_id in label:
            by_year.setdefault(label[sample_id], []).append(block)
    patterns = {y: np.concatenate(v) for y, v in sorted(by_year.items())}
    params = cbk.SomParams(epochs=args.epochs, alpha0=args.alpha0,
                           seed=args.seed if args.seed is not None else 0)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sizes = [int(s) for s in args.sizes.split(",")] if args.sizes else [args.sub_size]
    rows = []
    for size in sizes:
        book = cbk.train_sotm(patterns, size, params)
        path = out_dir / (f"codebook_{size}.bin" if len(sizes) > 1 else "codebook.bin")
        cbk.save_codebook(book, params, path)
        encoded = {sid: cbk.encode(raw.get(sid, np.empty((0, N_DIRECTIONS))), book).values
                   for sid in label}
        cv = learn.cross_validate(
            [e for e in entries if not e.is_augmented], encoded,
            k=args.k, seeds=tuple(args.seeds), condition="non-augmented")
        best = next(c for c in cv.cells if c.C == cv.selected_c)
        rows.append((size, cv.selected_c, best.mae_mean, best.mae_sd,
                     best.cs0_mean, best.cs0_sd, best.cs25_mean, best.cs25_sd))
        log.info("size %d: mae %.3f cs0 %.2f", size, best.mae_mean, best.cs0_mean)
    lines = ["sub_size,C,mae_mean,mae_sd,cs0_mean,cs0_sd,cs25_mean,cs25_sd"]
    lines += [",".join(format(v, ".6f") if isinstance(v, float) else str(v) for v in r)
              for r in rows]
    (out_dir / "codebook_sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def cmd_encode(args: argparse.Namespace, config: dict) -> int:
    raw = _descriptors_from_file(_require(args.descriptors, "descriptor container"))
    book, _ = cbk.load_codebook(_require(args.codebook, "codebook file"))
    records = []
    for sample_id in sorted(raw):
        vec = cbk.encode(raw[sample_id], book)
        records.append(({"kind": KIND_JUNCLETS, "sample": sample_id}, vec.values))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_records(out, records)
    log.info("encoded %d samples to %s", len(records), out)
    return 0


def cmd_train(args: argparse.Namespace, config: dict) -> int:
    entries = load_manifest(_require(args.manifest, "manifest"))
    features = _features_from_file(_require(args.features, "feature container"))
    ids = [e.id for e in entries]
    missing = [i for i in ids if i not in features]
    if missing:
        raise ValueError(f"features missing for samples: {missing[:5]}")
    raw = np.stack([features[i] for i in ids])
    scaler = learn.fit_scaler(raw)
    X = np.stack([learn.apply_scaler(features[i], scaler) for i in ids])
    y = np.asarray([e.label_year for e in entries], dtype=np.int64)
    model = learn.train_ova(X, y, C=args.c)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    learn.save_model(model, scaler, out)
    log.info("trained on %d samples, classes %s", len(ids), model.classes)
    return 0


def cmd_eval(args: argparse.Namespace, config: dict) -> int:
    entries = load_manifest(_require(args.manifest, "manifest"))
    if not entries:
        raise ValueError("empty test manifest")
    features = _features_from_file(_require(args.features, "feature container"))
    model, scaler, _header = learn.load_model(_require(args.model, "model file"))
    report = learn.evaluate_holdout(model, scaler, entries, features,
                                    condition=args.condition)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
                   encoding="utf-8")
    print(f"mae={report.mae:.3f} cs0={report.cs0:.2f} cs25={report.cs25:.2f}")
    return 0


def cmd_experiment(args: argparse.Namespace, config: dict) -> int:
    entries = load_manifest(_require(args.manifest, "manifest"))
    section = dict(config.get("experiment", {}))
    if "morph" in section:
        section["morph"] = MorphParams(**section["morph"])
    if "hinge" in section:
        section["hinge"] = cft.HingeConfig(**section["hinge"])
    for key in ("features", "conditions", "seeds", "grid_exponents",
                "sub_size_candidates", "test_ids"):
        if key in section and section[key] is not None:
            section[key] = tuple(section[key])
    if args.features:
        section["features"] = tuple(args.features.split(","))
    if args.k is not None:
        section["k"] = args.k
    if args.test_fraction is not None:
        section["test_fraction"] = args.test_fraction
    if args.copies is not None:
        morph = section.get("morph", MorphParams())
        section["morph"] = MorphParams(
            smoothing_radius=morph.smoothing_radius, displacement=morph.displacement,
            seed=morph.seed, copies=args.copies)
    if args.som_epochs is not None:
        section["som_epochs"] = args.som_epochs
    if args.descriptor_cap is not None:
        section["descriptor_cap"] = args.descriptor_cap
    if args.sizes:
        section["sub_size_candidates"] = tuple(int(s) for s in args.sizes.split(","))
    if args.seed is not None:
        section["split_seed"] = args.seed
    if args.jobs is not None:
        section["jobs"] = args.jobs
    cfg = ExperimentConfig(**section)
    report = run_experiment(entries, cfg, args.out_dir)
    for key, rep in sorted(report["results"].items()):
        print(f"{key}: mae={rep['mae']:.3f} cs0={rep['cs0']:.2f} cs25={rep['cs25']:.2f}")
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="manudate",
        description="Style-based dating of handwritten document images.")
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--seed", type=int, default=None, help="stage seed override")
    parser.add_argument("--jobs", type=int, default=None, help="worker processes")
    parser.add_argument("--out-dir", default="out", help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a deterministic synthetic corpus")
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--samples-per-class", type=int, default=None)
    p.add_argument("--strokes", type=int, default=None)
    p.add_argument("--slant-drift", type=float, default=None)
    p.add_argument("--curvature-drift", type=float, default=None)
    p.add_argument("--writer-jitter", type=float, default=None)
    p.add_argument("--canvas", default=None, help="WxH, e.g. 256x192")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("binarize", help="write ink masks for every sample")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", choices=["otsu", "sauvola"], default="otsu")
    p.add_argument("--polarity", choices=["ink-darker", "ink-lighter"],
                   default="ink-darker")
    p.add_argument("--window", type=int, default=31, help="sauvola window size")
    p.set_defaults(func=cmd_binarize)

    p = sub.add_parser("augment", help="emit distorted copies of each sample")
    p.add_argument("--manifest", required=True)
    p.add_argument("--copies", type=int, default=3)
    p.add_argument("--radius", type=int, default=8)
    p.add_argument("--displacement", type=float, default=1.0)
    p.add_argument("--post-binarize", action="store_true")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("extract", help="compute feature containers")
    p.add_argument("--manifest", required=True)
    p.add_argument("--feature", default="all",
                   choices=["all", *TEXTURAL_KINDS, KIND_JUNCLETS_RAW])
    p.add_argument("--polarity", choices=["ink-darker", "ink-lighter"],
                   default="ink-darker")
    p.add_argument("--csv", action="store_true", help="also write CSV mirrors")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("codebook", help="train year-chained codebooks")
    p.add_argument("--manifest", required=True)
    p.add_argument("--descriptors", required=True)
    p.add_argument("--sub-size", type=int, default=225)
    p.add_argument("--sizes", default=None, help="comma list for a sweep")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--alpha0", type=float, default=0.99)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seeds", type=int, nargs="+", default=list(learn.DEFAULT_SEEDS))
    p.set_defaults(func=cmd_codebook)

    p = sub.add_parser("encode", help="map descriptors onto a codebook")
    p.add_argument("--descriptors", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="fit a one-vs-all model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a model on a holdout manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--condition", default="non-augmented")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run the full two-condition study")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", default=None, help="comma list of feature kinds")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--test-fraction", type=float, default=None)
    p.add_argument("--copies", type=int, default=None)
    p.add_argument("--som-epochs", type=int, default=None)
    p.add_argument("--descriptor-cap", type=int, default=None)
    p.add_argument("--sizes", default=None, help="comma list of sub-codebook sizes")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    config = _load_config(args.config)
    return args.func(args, config)


if __name__ == "__main__":
    sys.exit(main())
