"""Domain datasets and the on-disk dataset CSV + JSON manifest format."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .exceptions import InputValidationError

SCHEMA_VERSION = "1.0"

FEATURE_KINDS = ("acceleration", "thermodynamic")


@dataclass(frozen=True)
class DomainDataset:
    """Feature matrix of one operating condition, optionally labeled.

    Parameters
    ----------
    features : ndarray of shape (n_samples, n_features)
        2f band levels in dB (acceleration) or window-mean temperatures.
    labels : ndarray of shape (n_samples,) or None
        Mic-averaged 2f sound pressure level in dB.
    condition_id : str
    sample_ids : sequence of str, optional
        Defaults to ``"<condition_id>-0000"`` style ids.
    feature_names, feature_kinds : sequence of str, optional
        Column manifest. Kinds are ``"acceleration"`` or ``"thermodynamic"``.
    """

    features: np.ndarray
    labels: Optional[np.ndarray]
    condition_id: str
    sample_ids: tuple = ()
    feature_names: tuple = ()
    feature_kinds: tuple = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2:
            raise InputValidationError(f"features must be 2-D, got shape {X.shape}")
        n, p = X.shape
        if n < 2 or p < 1:
            raise InputValidationError(
                f"condition {self.condition_id!r}: need n_samples >= 2 and "
                f"n_features >= 1, got {X.shape}"
            )
        if not np.all(np.isfinite(X)):
            raise InputValidationError(f"condition {self.condition_id!r}: non-finite features")
        object.__setattr__(self, "features", X)

        if self.labels is not None:
            y = np.asarray(self.labels, dtype=float).ravel()
            if y.shape[0] != n:
                raise InputValidationError(
                    f"condition {self.condition_id!r}: {y.shape[0]} labels for {n} samples"
                )
            if not np.all(np.isfinite(y)):
                raise InputValidationError(f"condition {self.condition_id!r}: non-finite labels")
            object.__setattr__(self, "labels", y)

        ids = tuple(self.sample_ids) or tuple(f"{self.condition_id}-{i:04d}" for i in range(n))
        if len(ids) != n:
            raise InputValidationError("sample_ids length does not match n_samples")
        object.__setattr__(self, "sample_ids", ids)

        names = tuple(self.feature_names) or tuple(f"f{j:03d}" for j in range(p))
        if len(names) != p:
            raise InputValidationError("feature_names length does not match n_features")
        object.__setattr__(self, "feature_names", names)
        kinds = tuple(self.feature_kinds)
        if kinds and len(kinds) != p:
            raise InputValidationError("feature_kinds length does not match n_features")
        object.__setattr__(self, "feature_kinds", kinds)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None

    def select_kind(self, kind: str) -> "DomainDataset":
        """Return a view restricted to one feature kind (``"all"`` is a no-op)."""
        if kind == "all":
            return self
        if not self.feature_kinds:
            raise InputValidationError("dataset carries no feature_kinds manifest")
        mask = np.array([k == kind for k in self.feature_kinds])
        if not mask.any():
            raise InputValidationError(f"no features of kind {kind!r}")
        return DomainDataset(
            features=self.features[:, mask],
            labels=self.labels,
            condition_id=self.condition_id,
            sample_ids=self.sample_ids,
            feature_names=tuple(np.array(self.feature_names)[mask]),
            feature_kinds=tuple(np.array(self.feature_kinds)[mask]),
            meta=self.meta,
        )

    def without_labels(self) -> "DomainDataset":
        return DomainDataset(self.features, None, self.condition_id, self.sample_ids,
                             self.feature_names, self.feature_kinds, self.meta)


def concatenate(datasets: Sequence[DomainDataset], condition_id: str) -> DomainDataset:
    """Stack several conditions into one dataset (labels kept only if all have them)."""
    if not datasets:
        raise InputValidationError("nothing to concatenate")
    names = datasets[0].feature_names
    for d in datasets[1:]:
        if d.feature_names != names:
            raise InputValidationError(
                f"feature manifest of {d.condition_id!r} differs from {datasets[0].condition_id!r}"
            )
    labels = None
    if all(d.is_labeled for d in datasets):
        labels = np.concatenate([d.labels for d in datasets])
    return DomainDataset(
        features=np.vstack([d.features for d in datasets]),
        labels=labels,
        condition_id=condition_id,
        sample_ids=tuple(s for d in datasets for s in d.sample_ids),
        feature_names=names,
        feature_kinds=datasets[0].feature_kinds,
        meta={"conditions": [d.condition_id for d in datasets],
              "row_conditions": [d.condition_id for d in datasets for _ in range(d.n_samples)]},
    )


# -- CSV / manifest I/O -------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def dumps_json(obj) -> str:
    """Byte-stable JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_dataset_csv(path, rows: Iterable[tuple], feature_names: Sequence[str]) -> None:
    """Write rows of ``(sample_id, condition_id, label_or_None, features)``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "condition_id", "label_db", *feature_names])
        for sid, cid, label, feats in rows:
            w.writerow([sid, cid, "" if label is None else _fmt(label), *(_fmt(v) for v in feats)])


def write_dataset(path, dataset: DomainDataset) -> None:
    labels = dataset.labels if dataset.is_labeled else [None] * dataset.n_samples
    rows = zip(dataset.sample_ids, [dataset.condition_id] * dataset.n_samples, labels,
               dataset.features)
    write_dataset_csv(path, rows, dataset.feature_names)


def read_dataset_rows(path):
    """Parse a dataset CSV into (feature_names, list of row tuples)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputValidationError(f"{path}: empty file") from None
        if header[:3] != ["sample_id", "condition_id", "label_db"]:
            raise InputValidationError(f"{path}: unexpected header {header[:3]}")
        names = header[3:]
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise InputValidationError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                label = float(rec[2]) if rec[2] != "" else None
                feats = [float(v) for v in rec[3:]]
            except ValueError as exc:
                raise InputValidationError(f"{path}:{lineno}: {exc}") from None
            rows.append((rec[0], rec[1], label, feats))
    return names, rows


def read_dataset(path, manifest: Optional[dict] = None) -> list[DomainDataset]:
    """Load a dataset CSV, one DomainDataset per condition_id found in it."""
    names, rows = read_dataset_rows(path)
    kinds = ()
    if manifest is not None:
        if list(manifest["feature_names"]) != list(names):
            raise InputValidationError(f"{path}: CSV columns do not match manifest feature list")
        kinds = tuple(manifest["feature_kinds"])
        known = set(manifest.get("conditions", []))
        stray = sorted({r[1] for r in rows} - known) if known else []
        if stray:
            raise InputValidationError(f"{path}: condition ids not in manifest: {stray}")
    by_cond: dict[str, list] = {}
    for r in rows:
        by_cond.setdefault(r[1], []).append(r)
    out = []
    for cid, recs in by_cond.items():
        labels = [r[2] for r in recs]
        if all(lab is None for lab in labels):
            y = None
        elif any(lab is None for lab in labels):
            raise InputValidationError(f"{path}: condition {cid!r} is partially labeled")
        else:
            y = np.array(labels)
        out.append(DomainDataset(
            features=np.array([r[3] for r in recs], dtype=float).reshape(len(recs), len(names)),
            labels=y,
            condition_id=cid,
            sample_ids=tuple(r[0] for r in recs),
            feature_names=tuple(names),
            feature_kinds=kinds,
        ))
    return out


def write_manifest(path, *, feature_names, feature_kinds, conditions, db_references,
                   files=None, provenance=None) -> dict:
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "feature_names": list(feature_names),
        "feature_kinds": list(feature_kinds),
        "conditions": list(conditions),
        "db_references": dict(db_references),
        "files": dict(files or {}),
        "provenance": dict(provenance or {}),
    }
    Path(path).write_text(dumps_json(manifest))
    return manifest


def read_manifest(path) -> dict:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputValidationError(f"{path}: cannot read manifest ({exc})") from None
    for key in ("feature_names", "feature_kinds"):
        if key not in manifest:
            raise InputValidationError(f"{path}: manifest missing {key!r}")
    if len(manifest["feature_names"]) != len(manifest["feature_kinds"]):
        raise InputValidationError(f"{path}: feature_names/feature_kinds length mismatch")
    return manifest
