"""PLS and domain-invariant PLS (di-PLS) regression.

The di-PLS weight for one latent variable minimizes

    ||X - y w'||_F^2 + lam * | w' Cs w - w' Ct w |

where ``Cs = Xs'Xs / (ns - 1)`` and ``Ct = Xt'Xt / (nt - 1)`` are the source
and target feature covariances. Where the covariance gap is non-negative the
stationary point is available in closed form:

    w' = (y'X / y'y) [I + (lam / y'y) (Cs - Ct)]^-1

Some write the bracket with ``lam / (2 y'y)``; that is the same solution for a
regularizer weighted by ``lam / 2``, so only the scale of ``lam`` differs.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.optimize import brentq
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (check_labeled, check_lambda, check_matrix, check_positive_int,
                          check_same_width)
from .exceptions import (ConditioningError, ConfigError, DegenerateDirectionError,
                         DegenerateLabelError, InputValidationError, RankDeficiencyWarning)

MODEL_SCHEMA_VERSION = "1.0"

CENTERING_POLICIES = ("per_domain", "source_only")

# cond(M) above this is treated as numerically singular
_SINGULAR_COND = 1e12


# -- single-component building blocks -----------------------------------------

def center_domains(Xs, ys, Xt, policy="per_domain", scale=False):
    """Mean-center source features, source labels and target features.

    Returns ``(Xs_c, ys_c, Xt_c, means)`` with ``means`` holding the
    ``source``, ``target`` and ``label`` means for reuse at prediction time.
    ``per_domain`` centers each domain by its own feature means;
    ``source_only`` centers the target with the source means too. With
    ``scale=True`` columns are also divided by the source standard deviation,
    which requires every column of both domains to vary.
    """
    if policy not in CENTERING_POLICIES:
        raise ConfigError(f"unknown centering policy {policy!r}")
    Xs = check_matrix(Xs, "source")
    Xt = check_matrix(Xt, "target")
    check_same_width(Xs.shape[1], Xt, "target")
    ys = np.asarray(ys, dtype=float).ravel()
    if ys.shape[0] != Xs.shape[0] or not np.all(np.isfinite(ys)):
        raise InputValidationError("source labels must be finite and match source rows")

    mu_s = Xs.mean(axis=0)
    mu_t = Xt.mean(axis=0) if policy == "per_domain" else mu_s
    y_mean = float(ys.mean())
    Xs_c, Xt_c = Xs - mu_s, Xt - mu_t
    means = {"source": mu_s, "target": mu_t, "label": y_mean}
    if scale:
        for name, M in (("source", Xs), ("target", Xt)):
            if np.any(np.ptp(M, axis=0) == 0):
                raise InputValidationError(f"{name} has a zero-variance column; cannot scale")
        sd = Xs.std(axis=0, ddof=1)
        Xs_c, Xt_c = Xs_c / sd, Xt_c / sd
        means["scale"] = sd
    return Xs_c, ys - y_mean, Xt_c, means


def covariance_gap(Xs, Xt):
    """``Cs - Ct`` for centered source and target matrices."""
    ns, nt = Xs.shape[0], Xt.shape[0]
    if ns < 2 or nt < 2:
        raise InputValidationError("each domain needs at least 2 samples")
    return Xs.T @ Xs / (ns - 1) - Xt.T @ Xt / (nt - 1)


def _label_energy(y):
    yy = float(y @ y)
    if not yy > 0:
        raise DegenerateLabelError("y'y = 0: labels carry no variance")
    return yy


def _unit(w, scale):
    norm = np.linalg.norm(w)
    if not norm > 1e-12 * scale:
        raise DegenerateDirectionError("weight vector vanished: no covariance between X and y")
    return w / norm


def pls_weight(X, y, normalize=True):
    """PLS weight ``w = X'y / y'y``, unit-normalized unless ``normalize=False``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    yy = _label_energy(y)
    w = X.T @ y / yy
    scale = np.linalg.norm(X) / np.sqrt(yy) if X.size else 0.0
    w_unit = _unit(w, max(scale, np.finfo(float).tiny))
    return w_unit if normalize else w


def _solve_stabilized(M, rhs, ridge_epsilon, scale=1.0):
    """Solve ``M x = rhs``; singularity is judged against ``scale``, the size of M's terms."""

    def rcond(A):
        sv = np.linalg.svd(A, compute_uv=False)
        return sv[-1] / max(sv[0], scale)

    r = rcond(M)
    if not r > 1.0 / _SINGULAR_COND:
        ridge = ridge_epsilon * max(np.mean(np.abs(np.diag(M))), scale)
        M = M + ridge * np.eye(M.shape[0])
        r = rcond(M)
        if not r > 1.0 / _SINGULAR_COND:
            raise ConditioningError("di-PLS system singular after ridge stabilization",
                                    np.inf if r == 0 else 1.0 / r)
    return np.linalg.solve(M, rhs)


GAP_HANDLING = ("exact", "closed_form")


def _dipls_weight_info(X, y, Xs, Xt, lam, ridge_epsilon=1e-10, gap_handling="exact"):
    """Unnormalized di-PLS weight plus ``(branch, multiplier)`` diagnostics.

    ``w(nu) = (y'y I + nu D)^-1 X'y`` minimizes ``fit + nu * gap``. Because
    ``lam |gap| >= nu * gap`` for every ``|nu| <= lam``, ``w(nu)`` minimizes
    the absolute-value criterion whenever its own gap agrees in sign with
    ``nu``: ``nu = lam`` (closed form, gap >= 0), ``nu = -lam`` (gap <= 0),
    or the ``nu`` in between that drives the gap to zero.
    """
    lam = check_lambda(lam)
    if gap_handling not in GAP_HANDLING:
        raise ConfigError(f"gap_handling must be one of {GAP_HANDLING}, got {gap_handling!r}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    yy = _label_energy(y)
    rhs = X.T @ y / yy
    if lam == 0.0:
        return rhs, "pls", 0.0
    D = covariance_gap(np.asarray(Xs, float), np.asarray(Xt, float))
    eye = np.eye(X.shape[1])

    d_scale = np.abs(D).max() / yy

    def solve(nu):
        return _solve_stabilized(eye + (nu / yy) * D, rhs, ridge_epsilon, 1.0 + abs(nu) * d_scale)

    def gap(w):
        return float(w @ D @ w)

    w = solve(lam)
    tol = 1e-12 * np.abs(D).max() * (w @ w)
    if gap_handling == "closed_form" or gap(w) >= -tol:
        return w, "+", lam
    w_neg = solve(-lam)
    if gap(w_neg) <= tol:
        return w_neg, "-", -lam
    nu = brentq(lambda v: gap(solve(v)), -lam, lam, xtol=1e-12 * max(lam, 1.0), rtol=1e-12)
    return solve(nu), "0", nu


def dipls_weight(X, y, Xs, Xt, lam, ridge_epsilon=1e-10, normalize=True, gap_handling="exact"):
    """Di-PLS weight for centered inputs.

    ``X`` is the labeled matrix the fit term reconstructs (the source). With
    ``gap_handling="closed_form"`` this is always
    ``(X'y / y'y) [I + (lam / y'y)(Cs - Ct)]^-1``; the default ``"exact"``
    returns that same vector whenever its covariance gap is non-negative and
    otherwise the minimizer of the absolute-value criterion (see
    :func:`_dipls_weight_info`). Linear systems are solved, never inverted; a
    trace-scaled ridge of relative size ``ridge_epsilon`` is added only if a
    system is singular.
    """
    w, _, _ = _dipls_weight_info(X, y, Xs, Xt, lam, ridge_epsilon, gap_handling)
    if not normalize:
        return w
    yy = float(np.asarray(y, float).ravel() @ np.asarray(y, float).ravel())
    scale = np.linalg.norm(X) / np.sqrt(yy)
    return _unit(w, max(scale, np.finfo(float).tiny))


def dipls_objective(w, X, y, Xs, Xt, lam):
    """Value of the di-PLS criterion ``||X - y w'||_F^2 + lam |w'(Cs - Ct)w|``."""
    w = np.asarray(w, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    Xs = np.asarray(Xs, dtype=float)
    Xt = np.asarray(Xt, dtype=float)
    p = X.shape[1]
    if w.shape[0] != p or y.shape[0] != X.shape[0] or Xs.shape[1] != p or Xt.shape[1] != p:
        raise InputValidationError("dimension mismatch in dipls_objective")
    fit_term = np.sum((X - np.outer(y, w)) ** 2)
    return float(fit_term + lam * abs(w @ covariance_gap(Xs, Xt) @ w))


# -- multi-component estimator -------------------------------------------------

class DiPLSRegressor(RegressorMixin, BaseEstimator):
    """Domain-invariant PLS regression with closed-form per-component weights.

    Labeled source data and unlabeled target data are fitted jointly; each
    latent variable trades source covariance with ``y`` against the gap
    between source and target variance along the weight direction.

    Parameters
    ----------
    n_components : int, default=14
        Number of latent variables. Values above ``min(n_source - 1,
        n_features)`` are truncated with a :class:`RankDeficiencyWarning`.
    lam : float, default=0.0
        Domain regularization weight. ``lam=0`` is plain PLS.
    ridge_epsilon : float, default=1e-10
        Relative ridge added to a singular weight system.
    centering : {"per_domain", "source_only"}, default="per_domain"
        ``per_domain`` centers source and target by their own feature means.
    gap_handling : {"exact", "closed_form"}, default="exact"
        ``closed_form`` always uses the non-negative-gap closed form;
        ``exact`` switches branch when that form's gap comes out negative.

    Attributes
    ----------
    weights_ : ndarray of shape (n_features, k_effective_)
        Unit-norm weight vectors.
    loadings_ : ndarray of shape (n_features, k_effective_)
        Source loadings.
    target_loadings_ : ndarray of shape (n_features, k_effective_)
    y_loadings_ : ndarray of shape (k_effective_,)
    coef_ : ndarray of shape (n_features,)
        ``W (P'W)^-1 q``.
    source_mean_, target_mean_ : ndarray of shape (n_features,)
    label_mean_ : float
    source_scores_, target_scores_ : ndarray
        Training scores of each domain.
    domain_gap_ : ndarray of shape (k_effective_,)
        ``w'(Cs - Ct)w`` per component on the deflated data.
    k_effective_ : int

    Examples
    --------
    >>> import numpy as np
    >>> rng = np.random.default_rng(0)
    >>> X, Xt = rng.normal(size=(40, 6)), 2 * rng.normal(size=(30, 6))
    >>> y = X @ rng.normal(size=6)
    >>> model = DiPLSRegressor(n_components=3, lam=10.0).fit(X, y, X_target=Xt)
    >>> model.predict(Xt).shape
    (30,)
    """

    def __init__(self, n_components=14, lam=0.0, ridge_epsilon=1e-10, centering="per_domain",
                 gap_handling="exact"):
        self.n_components = n_components
        self.lam = lam
        self.ridge_epsilon = ridge_epsilon
        self.centering = centering
        self.gap_handling = gap_handling

    def _lambda(self):
        return check_lambda(self.lam)

    def _gap_handling(self):
        return self.gap_handling

    def fit(self, X, y, X_target=None):
        """Fit on labeled source ``X, y`` and unlabeled ``X_target``.

        Without ``X_target`` the source doubles as target, which zeroes the
        regularizer and yields plain PLS.
        """
        X, y = check_labeled(X, y)
        Xt = X if X_target is None else check_matrix(X_target, "X_target", min_samples=2)
        check_same_width(X.shape[1], Xt, "X_target")
        k_req = check_positive_int(self.n_components, "n_components")
        lam = self._lambda()
        if float(self.ridge_epsilon) < 0:
            raise ConfigError("ridge_epsilon must be non-negative")

        Xs, yc, Xt_c, means = center_domains(X, y, Xt, self.centering)
        self.n_features_in_ = X.shape[1]
        self.source_mean_ = means["source"]
        self.target_mean_ = means["target"]
        self.label_mean_ = means["label"]

        k_max = min(X.shape[0] - 1, X.shape[1])
        if k_req > k_max:
            warnings.warn(f"n_components={k_req} exceeds rank bound {k_max}; truncating",
                          RankDeficiencyWarning, stacklevel=2)
        k_cap = min(k_req, k_max)

        p = X.shape[1]
        W, Ps, Pt = (np.zeros((p, k_cap)) for _ in range(3))
        q, gaps = np.zeros(k_cap), np.zeros(k_cap)
        branches = []
        Ts, Tt = np.zeros((X.shape[0], k_cap)), np.zeros((Xt.shape[0], k_cap))

        yy0 = _label_energy(yc)
        x_scale = np.linalg.norm(Xs)
        k = 0
        stop_reason = None
        while k < k_cap:
            if yc @ yc <= 1e-20 * yy0:
                stop_reason = "label residual exhausted"
                break
            try:
                w, branch, _ = _dipls_weight_info(Xs, yc, Xs, Xt_c, lam, self.ridge_epsilon,
                                                  self._gap_handling())
                w = _unit(w, x_scale / np.sqrt(yc @ yc))
            except DegenerateDirectionError:
                if k == 0:
                    raise
                stop_reason = "weight direction vanished"
                break
            ts, tt = Xs @ w, Xt_c @ w
            tts = ts @ ts
            if not np.sqrt(tts) > 1e-10 * x_scale:
                stop_reason = "source score norm below tolerance"
                break
            ttt = tt @ tt
            ps = Xs.T @ ts / tts
            pt = Xt_c.T @ tt / ttt if ttt > 0 else np.zeros(p)
            qk = yc @ ts / tts
            gaps[k] = w @ covariance_gap(Xs, Xt_c) @ w
            branches.append(branch)
            W[:, k], Ps[:, k], Pt[:, k], q[k] = w, ps, pt, qk
            Ts[:, k], Tt[:, k] = ts, tt
            Xs = Xs - np.outer(ts, ps)
            Xt_c = Xt_c - np.outer(tt, pt)
            yc = yc - qk * ts
            k += 1

        if k < k_req and stop_reason is not None:
            warnings.warn(f"extracted {k} of {k_req} components ({stop_reason})",
                          RankDeficiencyWarning, stacklevel=2)

        self.k_effective_ = k
        self.weights_ = W[:, :k]
        self.loadings_ = Ps[:, :k]
        self.target_loadings_ = Pt[:, :k]
        self.y_loadings_ = q[:k]
        self.domain_gap_ = gaps[:k]
        self.gap_branch_ = branches
        self.source_scores_ = Ts[:, :k]
        self.target_scores_ = Tt[:, :k]
        self.coef_ = self._assemble_coef()
        return self

    def _assemble_coef(self):
        W, P = self.weights_, self.loadings_
        return W @ np.linalg.solve(P.T @ W, self.y_loadings_)

    def _center(self, X, domain):
        if domain == "target":
            return X - self.target_mean_
        if domain == "source":
            return X - self.source_mean_
        raise ConfigError(f"domain must be 'source' or 'target', got {domain!r}")

    def predict(self, X, domain="target"):
        """Predict labels; ``domain`` picks which feature means center ``X``."""
        check_is_fitted(self, "coef_")
        X = check_matrix(X)
        check_same_width(self.n_features_in_, X)
        return self._center(X, domain) @ self.coef_ + self.label_mean_

    def transform(self, X, domain="target", n_components=None):
        """Latent scores of ``X`` via the same sequential deflation as ``fit``."""
        check_is_fitted(self, "coef_")
        X = check_matrix(X)
        check_same_width(self.n_features_in_, X)
        k = self.k_effective_ if n_components is None else n_components
        if isinstance(k, bool) or int(k) != k or not 1 <= k <= self.k_effective_:
            raise ConfigError(f"n_components must be in [1, {self.k_effective_}], got {k!r}")
        P = self.target_loadings_ if domain == "target" else self.loadings_
        E = self._center(X, domain)
        T = np.zeros((X.shape[0], int(k)))
        for j in range(int(k)):
            t = E @ self.weights_[:, j]
            T[:, j] = t
            E = E - np.outer(t, P[:, j])
        return T

    # -- persistence ------------------------------------------------------

    def to_dict(self):
        """Versioned, JSON-ready snapshot (matrices as row-major nested lists)."""
        check_is_fitted(self, "coef_")
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "estimator": type(self).__name__,
            "params": self.get_params(),
            "k_effective": int(self.k_effective_),
            "n_features": int(self.n_features_in_),
            "weights": self.weights_.tolist(),
            "source_loadings": self.loadings_.tolist(),
            "target_loadings": self.target_loadings_.tolist(),
            "y_loadings": self.y_loadings_.tolist(),
            "source_feature_means": self.source_mean_.tolist(),
            "target_feature_means": self.target_mean_.tolist(),
            "label_mean": float(self.label_mean_),
            "coefficients": self.coef_.tolist(),
            "domain_gap": self.domain_gap_.tolist(),
            "gap_branch": list(self.gap_branch_),
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise InputValidationError(f"unsupported model schema {doc.get('schema_version')!r}")
        registry = {c.__name__: c for c in (DiPLSRegressor, PLSRegressor)}
        est_cls = registry.get(doc.get("estimator"), cls)
        model = est_cls(**doc["params"])
        k, p = doc["k_effective"], doc["n_features"]

        def mat(key):
            return np.asarray(doc[key], dtype=float).reshape(p, k)

        model.n_features_in_ = p
        model.k_effective_ = k
        model.weights_ = mat("weights")
        model.loadings_ = mat("source_loadings")
        model.target_loadings_ = mat("target_loadings")
        model.y_loadings_ = np.asarray(doc["y_loadings"], dtype=float)
        model.source_mean_ = np.asarray(doc["source_feature_means"], dtype=float)
        model.target_mean_ = np.asarray(doc["target_feature_means"], dtype=float)
        model.label_mean_ = float(doc["label_mean"])
        model.coef_ = np.asarray(doc["coefficients"], dtype=float)
        model.domain_gap_ = np.asarray(doc["domain_gap"], dtype=float)
        model.gap_branch_ = list(doc.get("gap_branch", []))
        return model


class PLSRegressor(DiPLSRegressor):
    """Plain PLS: :class:`DiPLSRegressor` with the domain term switched off.

    Target features may still be passed to ``fit`` so that per-domain
    centering matches the di-PLS pipeline exactly.
    """

    def __init__(self, n_components=14, ridge_epsilon=1e-10, centering="per_domain"):
        self.n_components = n_components
        self.ridge_epsilon = ridge_epsilon
        self.centering = centering

    def _lambda(self):
        return 0.0

    def _gap_handling(self):
        return "closed_form"
