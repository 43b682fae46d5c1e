"""Leave-one-condition-out evaluation, engineering metrics and latent alignment."""

from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse import csr_matrix, eye, kron, vstack
from scipy.spatial.distance import cdist
from scipy.stats import wasserstein_distance as _wasserstein_1d

from .datasets import DomainDataset, concatenate, dumps_json
from .exceptions import InputValidationError, RankDeficiencyWarning, TonalDiPLSError
from .model import DiPLSRegressor, PLSRegressor

REPORT_SCHEMA_VERSION = "1.0"
MODEL_KINDS = ("pls", "dipls")
MAX_EXACT_OT = 10 ** 6


# -- metrics -------------------------------------------------------------------

@dataclass(frozen=True)
class MetricRecord:
    mse: float
    rmse: float
    r2: Optional[float]  # None when the reference labels have zero variance
    acc_lt2db: float
    acc_lt3db: float
    n: int

    def to_dict(self):
        return {"mse": self.mse, "rmse": self.rmse, "r2": self.r2,
                "r2_defined": self.r2 is not None, "acc_lt2db": self.acc_lt2db,
                "acc_lt3db": self.acc_lt3db, "n": self.n}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mse"], d["rmse"], d["r2"], d["acc_lt2db"], d["acc_lt3db"], d["n"])


def compute_metrics(y_true, y_pred) -> MetricRecord:
    """MSE (dB^2), RMSE, R^2 and the share of samples with |error| < 2 dB and < 3 dB."""
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise InputValidationError(f"length mismatch: {y_true.size} vs {y_pred.size}")
    if y_true.size == 0:
        raise InputValidationError("no samples to score")
    err = y_pred - y_true
    sse = float(err @ err)
    mse = sse / err.size
    sst = float(np.sum((y_true - y_true.mean()) ** 2))
    abs_err = np.abs(err)
    return MetricRecord(
        mse=mse,
        rmse=float(np.sqrt(mse)),
        r2=1.0 - sse / sst if sst > 0 else None,
        acc_lt2db=float(np.mean(abs_err < 2.0)),
        acc_lt3db=float(np.mean(abs_err < 3.0)),
        n=int(err.size),
    )


# -- Wasserstein -----------------------------------------------------------------

def wasserstein_method(n_a, n_b, max_exact=MAX_EXACT_OT):
    return "exact" if n_a * n_b <= max_exact else "sliced"


def _exact_w1(A, B):
    C = cdist(A, B)
    n_a, n_b = C.shape
    if n_a == n_b:
        # uniform equal-size clouds: an optimal plan is a permutation
        rows, cols = linear_sum_assignment(C)
        return float(C[rows, cols].mean())
    row_sums = kron(eye(n_a, format="csr"), csr_matrix(np.ones((1, n_b))))
    col_sums = kron(csr_matrix(np.ones((1, n_a))), eye(n_b, format="csr"))
    A_eq = vstack([row_sums, col_sums]).tocsr()[:-1]  # one marginal constraint is redundant
    b_eq = np.concatenate([np.full(n_a, 1.0 / n_a), np.full(n_b, 1.0 / n_b)])[:-1]
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise TonalDiPLSError(f"optimal transport LP failed: {res.message}")
    return float(res.fun)


def _sliced_w1(A, B, n_projections, seed):
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n_projections, A.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return float(np.mean([_wasserstein_1d(A @ u, B @ u) for u in dirs]))


def wasserstein_distance(A, B, *, max_exact=MAX_EXACT_OT, n_projections=256, seed=0):
    """Empirical 1-Wasserstein distance, Euclidean ground cost, uniform weights.

    Solved exactly when ``n_a * n_b <= max_exact``; otherwise a seeded sliced
    approximation over ``n_projections`` random directions (a lower bound).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise InputValidationError(f"point dimension mismatch: {A.shape} vs {B.shape}")
    if A.shape[0] < 1 or B.shape[0] < 1:
        raise InputValidationError("empty point cloud")
    if wasserstein_method(A.shape[0], B.shape[0], max_exact) == "exact":
        return _exact_w1(A, B)
    return _sliced_w1(A, B, max(256, n_projections), seed)


# -- LOCO ----------------------------------------------------------------------

@dataclass(frozen=True)
class Fold:
    source: DomainDataset
    target: DomainDataset  # labels kept for scoring only


def loco_split(datasets: Sequence[DomainDataset]) -> list[Fold]:
    """One fold per condition: that condition is the target, the rest the source."""
    if len(datasets) < 2:
        raise InputValidationError("leave-one-condition-out needs at least 2 conditions")
    ids = [d.condition_id for d in datasets]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise InputValidationError(f"duplicate condition ids: {dupes}")
    for d in datasets:
        if not d.is_labeled:
            raise InputValidationError(f"condition {d.condition_id!r} has no labels")
    folds = []
    for i, target in enumerate(datasets):
        rest = [d for j, d in enumerate(datasets) if j != i]
        folds.append(Fold(concatenate(rest, f"not-{target.condition_id}"), target))
    return folds


def make_model(model_kind, config):
    params = dict(config)
    if model_kind == "pls":
        params.pop("lam", None)
        params.pop("gap_handling", None)
        return PLSRegressor(**params)
    if model_kind == "dipls":
        return DiPLSRegressor(**params)
    raise InputValidationError(f"model_kind must be one of {MODEL_KINDS}, got {model_kind!r}")


@dataclass
class FoldResult:
    target_condition_id: str
    y_true: np.ndarray
    y_pred: np.ndarray
    per_fold_metrics: MetricRecord
    latent_source: np.ndarray
    latent_target: np.ndarray
    wasserstein_2lv: float
    wasserstein_method: str = "exact"
    k_effective: int = 0
    gap_branch: list = field(default_factory=list)
    domain_gap: list = field(default_factory=list)
    sample_ids: tuple = ()
    source_conditions: tuple = ()

    def to_dict(self):
        return {
            "target_condition_id": self.target_condition_id,
            "metrics": self.per_fold_metrics.to_dict(),
            "wasserstein_2lv": self.wasserstein_2lv,
            "wasserstein_method": self.wasserstein_method,
            "k_effective": self.k_effective,
            "gap_branch": list(self.gap_branch),
            "domain_gap": [float(g) for g in self.domain_gap],
            "sample_ids": list(self.sample_ids),
            "y_true": [float(v) for v in self.y_true],
            "y_pred": [float(v) for v in self.y_pred],
        }


def _two_lv(model, X, domain):
    k = min(2, model.k_effective_)
    T = model.transform(X, domain=domain, n_components=k)
    if k < 2:
        T = np.hstack([T, np.zeros((T.shape[0], 2 - k))])
    return T


def run_fold(fold: Fold, model_kind, config) -> FoldResult:
    """Fit on labeled source + unlabeled target, score the target, measure alignment."""
    model = make_model(model_kind, config)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RankDeficiencyWarning)
        model.fit(fold.source.features, fold.source.labels, X_target=fold.target.features)
    for w in caught:
        if not issubclass(w.category, RankDeficiencyWarning):
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    y_pred = model.predict(fold.target.features, domain="target")
    lat_s = _two_lv(model, fold.source.features, "source")
    lat_t = _two_lv(model, fold.target.features, "target")
    return FoldResult(
        target_condition_id=fold.target.condition_id,
        y_true=fold.target.labels,
        y_pred=y_pred,
        per_fold_metrics=compute_metrics(fold.target.labels, y_pred),
        latent_source=lat_s,
        latent_target=lat_t,
        wasserstein_2lv=wasserstein_distance(lat_s, lat_t),
        wasserstein_method=wasserstein_method(lat_s.shape[0], lat_t.shape[0]),
        k_effective=int(model.k_effective_),
        gap_branch=list(model.gap_branch_),
        domain_gap=list(model.domain_gap_),
        sample_ids=fold.target.sample_ids,
        source_conditions=tuple(fold.source.meta.get("row_conditions",
                                                     [fold.source.condition_id] * fold.source.n_samples)),
    )


@dataclass
class EvaluationReport:
    model_kind: str
    feature_kind: str
    config: dict
    folds: list
    aggregate: MetricRecord
    provenance: dict = field(default_factory=dict)

    def fold(self, condition_id) -> FoldResult:
        for f in self.folds:
            if f.target_condition_id == condition_id:
                return f
        raise KeyError(condition_id)

    def to_dict(self):
        k_eff = sorted({f.k_effective for f in self.folds})
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "model_kind": self.model_kind,
            "feature_kind": self.feature_kind,
            "config": dict(self.config),
            "aggregation": "pooled",
            "aggregate": self.aggregate.to_dict(),
            "k_requested": self.config.get("n_components"),
            "k_effective": k_eff,
            "folds": [f.to_dict() for f in self.folds],
            "provenance": dict(self.provenance),
        }

    def to_json(self):
        return dumps_json(self.to_dict())


def aggregate(folds: Sequence[FoldResult], model_kind="dipls", feature_kind="all",
              config=None) -> EvaluationReport:
    """Pool every fold's predictions and score them together."""
    if not folds:
        raise InputValidationError("nothing to aggregate")
    folds = sorted(folds, key=lambda f: f.target_condition_id)
    y_true = np.concatenate([f.y_true for f in folds])
    y_pred = np.concatenate([f.y_pred for f in folds])
    return EvaluationReport(model_kind, feature_kind, dict(config or {}), list(folds),
                            compute_metrics(y_true, y_pred))


def default_config(n_components=14, lam=0.0, **extra):
    cfg = {"n_components": n_components, "lam": float(lam), "ridge_epsilon": 1e-10,
           "centering": "per_domain", "gap_handling": "exact"}
    cfg.update(extra)
    return cfg


def evaluate(datasets: Sequence[DomainDataset], model_kind="dipls", config=None,
             feature_kind="all", jobs=1) -> EvaluationReport:
    """Full leave-one-condition-out run on one feature kind."""
    config = default_config() if config is None else dict(config)
    if model_kind not in MODEL_KINDS:
        raise InputValidationError(f"model_kind must be one of {MODEL_KINDS}")
    data = [d.select_kind(feature_kind) for d in datasets]
    folds = loco_split(data)
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda f: run_fold(f, model_kind, config), folds))
    else:
        results = [run_fold(f, model_kind, config) for f in folds]
    report = aggregate(results, model_kind, feature_kind, config)
    return report


# -- outputs -------------------------------------------------------------------

def write_report(path, report: EvaluationReport):
    Path(path).write_text(report.to_json())


def load_report(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputValidationError(f"{path}: cannot read report ({exc})") from None
    if doc.get("schema_version") != REPORT_SCHEMA_VERSION or "folds" not in doc:
        raise InputValidationError(f"{path}: not an evaluation report")
    return doc


def write_latent_csv(path, fold: FoldResult):
    """Rows of ``domain, condition_id, lv1, lv2`` for both domains of one fold."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["domain", "condition_id", "lv1", "lv2"])
        for cid, (a, b) in zip(fold.source_conditions, fold.latent_source):
            w.writerow(["source", cid, repr(float(a)), repr(float(b))])
        for a, b in fold.latent_target:
            w.writerow(["target", fold.target_condition_id, repr(float(a)), repr(float(b))])
