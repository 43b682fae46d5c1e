"""Command-line pipeline: generate, extract, evaluate, compare.

Exit codes: 0 success, 2 input validation, 3 semantic mismatch, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import glob
import hashlib
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import (dumps_json, read_dataset, read_manifest, write_dataset,
                       write_dataset_csv, write_manifest)
from .evaluation import MODEL_KINDS, default_config, evaluate, load_report, write_latent_csv
from .exceptions import (ConditioningError, ConfigError, DegenerateDirectionError,
                         DegenerateLabelError, EmptyBandError, InputValidationError,
                         SpectralRangeError)
from .spectral import DEFAULT_DB_REFS, DEFAULT_HALF_BAND, extract_features, read_frame, write_frame
from .synthbench import default_suite, generate_suite, load_suite, render_waveforms

EXIT_OK, EXIT_INVALID, EXIT_MISMATCH, EXIT_NUMERICAL = 0, 2, 3, 4
DEFAULT_LAMBDA = 300.0
COMPARE_FIELDS = ("mse", "rmse", "r2", "acc_lt2db", "acc_lt3db", "wasserstein_2lv")


class MismatchError(Exception):
    pass


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- generate -------------------------------------------------------------------

def cmd_generate(args):
    suite = load_suite(args.spec) if args.spec else default_suite()
    provenance = {"tool": "tonaldipls", "version": __version__,
                  "spec": Path(args.spec).name if args.spec else "default_suite",
                  "spec_seed": suite.seed}
    if args.seed is not None:
        suite = replace(suite, seed=args.seed)
        provenance["seed_override"] = args.seed
    provenance["seed"] = suite.seed
    provenance["suite"] = suite.to_dict()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    datasets = generate_suite(suite)
    for d in datasets:
        name = f"{d.condition_id}.csv"
        write_dataset(out / name, d)
        files[d.condition_id] = name

    if args.waveforms:
        wdir = out / "waveforms"
        for spec in suite.conditions:
            for i in range(min(args.waveform_limit, spec.n_samples)):
                write_frame(wdir, render_waveforms(spec, suite, i), encoding=args.encoding)
        provenance["waveforms"] = {"dir": "waveforms", "per_condition": args.waveform_limit,
                                   "encoding": args.encoding}

    write_manifest(out / "manifest.json", feature_names=suite.feature_names,
                   feature_kinds=suite.feature_kinds,
                   conditions=[c.condition_id for c in suite.conditions],
                   db_references=DEFAULT_DB_REFS, files=files, provenance=provenance)
    print(f"wrote {len(datasets)} condition files "
          f"({sum(d.n_samples for d in datasets)} samples) to {out}")
    return EXIT_OK


# -- extract --------------------------------------------------------------------

def cmd_extract(args):
    wdir = Path(args.waveform_dir)
    if not wdir.is_dir():
        raise InputValidationError(f"{wdir}: not a directory")
    manifest = read_manifest(args.manifest) if args.manifest else None
    refs = dict(manifest.get("db_references", DEFAULT_DB_REFS) if manifest else DEFAULT_DB_REFS)
    if args.db_ref_accel is not None:
        refs["acceleration"] = args.db_ref_accel
    if args.db_ref_mic is not None:
        refs["microphone"] = args.db_ref_mic

    order = list(manifest["feature_names"]) if manifest else None
    rows, names = [], order
    for header in sorted(wdir.glob("*.json")):
        frame = read_frame(header)
        try:
            row = extract_features(frame, args.half_band, refs, window=args.window,
                                   feature_order=order)
        except (InputValidationError, SpectralRangeError, EmptyBandError) as exc:
            raise type(exc)(f"{header}: {exc}") from None
        if names is None:
            names = list(row.feature_names)
        elif list(row.feature_names) != names:
            raise InputValidationError(f"{header}: channel set differs from earlier frames")
        rows.append((row.sample_id, row.condition_id, row.label_db, row.features))
    write_dataset_csv(args.out, rows, names or [])
    print(f"extracted {len(rows)} frames to {args.out}")
    return EXIT_OK


# -- evaluate -------------------------------------------------------------------

def _expand(patterns):
    paths = []
    for pat in patterns:
        p = Path(pat)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.csv")))
            continue
        hits = sorted(glob.glob(pat))
        if not hits:
            raise InputValidationError(f"{pat}: no matching dataset files")
        paths.extend(Path(h) for h in hits)
    return paths


def _load_datasets(patterns, manifest_path):
    paths = _expand(patterns)
    if not paths:
        raise InputValidationError("no dataset files given")
    if manifest_path is None:
        guess = paths[0].parent / "manifest.json"
        manifest_path = guess if guess.exists() else None
    manifest = read_manifest(manifest_path) if manifest_path else None
    datasets = []
    for p in paths:
        datasets.extend(read_dataset(p, manifest))
    for d in datasets:
        if not d.is_labeled:
            raise InputValidationError(f"condition {d.condition_id!r} has unlabeled rows")
    inputs = {p.name: _sha256(p) for p in paths}
    return datasets, inputs


def _config(args, lam):
    return default_config(n_components=args.components, lam=lam,
                          centering=args.centering, gap_handling=args.gap_handling)


def cmd_evaluate(args):
    datasets, inputs = _load_datasets(args.datasets, args.manifest)
    report = evaluate(datasets, args.model, _config(args, args.lam), args.features, jobs=args.jobs)
    report.provenance = {"tool": "tonaldipls", "version": __version__, "inputs": inputs}
    doc = report.to_dict()

    if args.lambda_sweep:
        lo, hi, n = args.lambda_sweep
        if not (0 < lo <= hi) or int(n) < 1:
            raise ConfigError("--lambda-sweep needs 0 < LO <= HI and N >= 1")
        sweep = []
        for lam in np.geomspace(lo, hi, int(n)):
            r = evaluate(datasets, "dipls", _config(args, float(lam)), args.features, jobs=args.jobs)
            sweep.append({"lambda": float(lam), "aggregate": r.aggregate.to_dict(),
                          "folds": {f.target_condition_id: {"mse": f.per_fold_metrics.mse,
                                                            "wasserstein_2lv": f.wasserstein_2lv}
                                    for f in r.folds}})
        doc["lambda_sweep"] = sweep

    Path(args.out).write_text(dumps_json(doc))
    if args.latent_dir:
        ldir = Path(args.latent_dir)
        ldir.mkdir(parents=True, exist_ok=True)
        for f in report.folds:
            write_latent_csv(ldir / f"latent_{f.target_condition_id}.csv", f)

    agg = report.aggregate
    r2 = "undefined" if agg.r2 is None else f"{agg.r2:.4f}"
    print(f"{args.model} ({args.features}): mse={agg.mse:.4f} rmse={agg.rmse:.4f} r2={r2} "
          f"acc<2dB={agg.acc_lt2db:.3f} acc<3dB={agg.acc_lt3db:.3f} n={agg.n}")
    k_eff = sorted({f.k_effective for f in report.folds})
    if k_eff != [args.components]:
        print(f"note: k_effective {k_eff} (requested {args.components})")
    return EXIT_OK


# -- compare --------------------------------------------------------------------

def _fold_row(fold):
    m = dict(fold["metrics"])
    m["wasserstein_2lv"] = fold["wasserstein_2lv"]
    return {k: m.get(k) for k in COMPARE_FIELDS}


def _delta(a, b):
    return {k: (None if a[k] is None or b[k] is None else b[k] - a[k]) for k in COMPARE_FIELDS}


def compare_reports(doc_a, doc_b):
    folds_a = {f["target_condition_id"]: f for f in doc_a["folds"]}
    folds_b = {f["target_condition_id"]: f for f in doc_b["folds"]}
    if set(folds_a) != set(folds_b):
        raise MismatchError(f"condition sets differ: A={sorted(folds_a)} B={sorted(folds_b)}")
    rows = []
    for cid in sorted(folds_a):
        a, b = _fold_row(folds_a[cid]), _fold_row(folds_b[cid])
        rows.append({"condition_id": cid, "a": a, "b": b, "delta": _delta(a, b)})
    agg_a = {k: doc_a["aggregate"].get(k) for k in COMPARE_FIELDS[:-1]}
    agg_b = {k: doc_b["aggregate"].get(k) for k in COMPARE_FIELDS[:-1]}
    agg_delta = {k: (None if agg_a[k] is None or agg_b[k] is None else agg_b[k] - agg_a[k])
                 for k in agg_a}

    def scatter(folds):
        return {cid: [[t, p] for t, p in zip(f["y_true"], f["y_pred"])]
                for cid, f in sorted(folds.items())}

    def label(doc):
        return {"model_kind": doc["model_kind"], "feature_kind": doc["feature_kind"],
                "config": doc["config"]}

    return {
        "schema_version": "1.0",
        "a": label(doc_a),
        "b": label(doc_b),
        "conditions": rows,
        "aggregate": {"a": agg_a, "b": agg_b, "delta": agg_delta},
        "scatter": {"a": scatter(folds_a), "b": scatter(folds_b)},
    }


def _fmt(v):
    return "n/a" if v is None else f"{v:.4f}"


def render_comparison(cmp):
    head = f"{'condition':<12} {'mse A':>10} {'mse B':>10} {'d mse':>10} " \
           f"{'W2lv A':>10} {'W2lv B':>10} {'d W2lv':>10}"
    lines = [f"A = {cmp['a']['model_kind']}/{cmp['a']['feature_kind']}  "
             f"B = {cmp['b']['model_kind']}/{cmp['b']['feature_kind']}", head, "-" * len(head)]
    for r in cmp["conditions"]:
        lines.append(f"{r['condition_id']:<12} {_fmt(r['a']['mse']):>10} {_fmt(r['b']['mse']):>10} "
                     f"{_fmt(r['delta']['mse']):>10} {_fmt(r['a']['wasserstein_2lv']):>10} "
                     f"{_fmt(r['b']['wasserstein_2lv']):>10} {_fmt(r['delta']['wasserstein_2lv']):>10}")
    lines.append("-" * len(head))
    ag = cmp["aggregate"]
    for k in ("mse", "r2", "acc_lt2db", "acc_lt3db"):
        lines.append(f"{'aggregate ' + k:<22} A={_fmt(ag['a'][k])}  B={_fmt(ag['b'][k])}  "
                     f"delta={_fmt(ag['delta'][k])}")
    return "\n".join(lines)


def cmd_compare(args):
    cmp = compare_reports(load_report(args.report_a), load_report(args.report_b))
    if args.out:
        Path(args.out).write_text(dumps_json(cmp))
    print(render_comparison(cmp))
    return EXIT_OK


# -- entry point ----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="tonaldipls",
                                     description="Cross-condition 2f tonal-noise regression.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic multi-condition suite")
    g.add_argument("spec", nargs="?", help="suite spec JSON (default: built-in 6-condition suite)")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int, help="override the suite seed")
    g.add_argument("--waveforms", action="store_true", help="also write waveform containers")
    g.add_argument("--waveform-limit", type=int, default=1,
                   help="frames rendered per condition (each is ~75 MB at 10 s / 20 kHz)")
    g.add_argument("--encoding", choices=["f64le", "csv"], default="f64le")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("extract", help="2f band features from waveform containers")
    e.add_argument("waveform_dir")
    e.add_argument("--manifest", help="dataset manifest fixing the feature order")
    e.add_argument("--out", required=True, help="output dataset CSV")
    e.add_argument("--half-band", type=float, default=DEFAULT_HALF_BAND)
    e.add_argument("--db-ref-accel", type=float)
    e.add_argument("--db-ref-mic", type=float)
    e.add_argument("--window", choices=["rect", "hann"], default="rect")
    e.set_defaults(func=cmd_extract)

    v = sub.add_parser("evaluate", help="leave-one-condition-out evaluation")
    v.add_argument("datasets", nargs="+", help="dataset CSVs, globs or directories")
    v.add_argument("--manifest", help="default: manifest.json next to the first dataset")
    v.add_argument("--model", choices=MODEL_KINDS, default="dipls")
    v.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    v.add_argument("--lambda-sweep", type=float, nargs=3, metavar=("LO", "HI", "N"),
                   help="also run di-PLS on N geometrically spaced lambdas")
    v.add_argument("--components", type=int, default=14)
    v.add_argument("--features", choices=["acceleration", "thermodynamic", "all"],
                   default="acceleration")
    v.add_argument("--centering", choices=["per_domain", "source_only"], default="per_domain")
    v.add_argument("--gap-handling", choices=["exact", "closed_form"], default="exact")
    v.add_argument("--out", required=True, help="report JSON")
    v.add_argument("--latent-dir", help="write per-fold 2-LV projections here")
    v.add_argument("--jobs", type=int, default=int(os.environ.get("DIPLS_JOBS", "1")))
    v.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("compare", help="side-by-side comparison of two reports")
    c.add_argument("report_a")
    c.add_argument("report_b")
    c.add_argument("--out", help="comparison JSON")
    c.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (ConditioningError, DegenerateLabelError, DegenerateDirectionError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputValidationError, ConfigError, SpectralRangeError, EmptyBandError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
