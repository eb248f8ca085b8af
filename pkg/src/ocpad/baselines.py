"""Classical one-class baselines fit on bonafide features.

Every model's ``score`` is oriented so that higher means more bonafide:

* Mahalanobis: negative squared Mahalanobis distance
* GMM: log-likelihood under a diagonal-covariance mixture
* linear OC-SVM: ``w.x - rho``
* linear SVDD: negative squared distance to the center

OC-SVM and SVDD are linear (no kernel) and trained by full-batch
subgradient descent on the reduced objective, with the offset/radius solved
exactly at every iterate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from .errors import ContractError, FitError, ShapeError

LOG_2PI = math.log(2.0 * math.pi)


def _train_matrix(train):
    x = np.asarray(getattr(train, "features", train), dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"training data must be 2-D, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise FitError("training data contains non-finite values")
    return x


def _query(samples, dim):
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"samples must be (n, {dim}), got {x.shape}")
    return x


# -- Mahalanobis ------------------------------------------------------------

@dataclass
class MahalanobisModel:
    mean: np.ndarray
    covariance: np.ndarray
    kind = "md"

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.covariance = np.asarray(self.covariance, dtype=np.float64)
        try:
            self._factor = cho_factor(self.covariance, lower=True)
        except np.linalg.LinAlgError:
            raise FitError("covariance is not positive definite") from None

    def distance2(self, samples):
        diff = _query(samples, self.mean.shape[0]) - self.mean
        return np.einsum("ij,ij->i", diff, cho_solve(self._factor, diff.T).T)

    def score(self, samples):
        return -self.distance2(samples)

    def params(self):
        return {"mean": self.mean, "covariance": self.covariance}


def fit_mahalanobis(train) -> MahalanobisModel:
    x = _train_matrix(train)
    n, d = x.shape
    if n < 2:
        raise FitError("Mahalanobis fit needs at least 2 samples")
    mean = x.mean(axis=0)
    cov = np.cov(x, rowvar=False, ddof=1).reshape(d, d)
    cov = (cov + cov.T) / 2.0
    trace = float(np.trace(cov))
    eps = 1e-6 * trace / d if trace > 0 else 1e-6
    return MahalanobisModel(mean, cov + eps * np.eye(d))


# -- diagonal GMM -------------------------------------------------------------

@dataclass
class EmConfig:
    max_iter: int = 200
    tol: float = 1e-6
    restarts: int = 5
    var_floor: float = 1e-6
    seed: int = 0


@dataclass
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood_trace: list = field(default_factory=list)
    restart_traces: list = field(default_factory=list)
    kind = "gmm"

    def component_log_density(self, samples):
        x = _query(samples, self.means.shape[1])
        d = x.shape[1]
        quad = np.empty((x.shape[0], self.means.shape[0]))
        for j, (mu, var) in enumerate(zip(self.means, self.variances)):
            quad[:, j] = np.sum((x - mu) ** 2 / var, axis=1)
        return -0.5 * (quad + np.sum(np.log(self.variances), axis=1) + d * LOG_2PI)

    def score(self, samples):
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return logsumexp(self.component_log_density(samples) + logw, axis=1)

    def params(self):
        return {"weights": self.weights, "means": self.means, "variances": self.variances}


def default_components(n, cap=50):
    return max(1, min(cap, n // 10))


def _kmeanspp(x, k, rng):
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def _em_run(x, k, cfg, rng):
    n, d = x.shape
    means = _kmeanspp(x, k, rng)
    variances = np.tile(np.maximum(x.var(axis=0), cfg.var_floor), (k, 1))
    weights = np.full(k, 1.0 / k)
    model = GmmModel(weights, means, variances)
    trace = []
    prev = -math.inf
    for _ in range(cfg.max_iter):
        with np.errstate(divide="ignore"):
            joint = model.component_log_density(x) + np.log(model.weights)
        ll_rows = logsumexp(joint, axis=1)
        ll = float(ll_rows.sum())
        trace.append(ll)
        if not math.isfinite(ll):
            raise FitError("EM produced a non-finite log-likelihood")
        if ll - prev < cfg.tol:
            break
        prev = ll
        resp = np.exp(joint - ll_rows[:, None])
        nk = resp.sum(axis=0)
        alive = nk > 1e-12
        new_means = model.means.copy()
        new_vars = model.variances.copy()
        new_means[alive] = (resp[:, alive].T @ x) / nk[alive, None]
        second = (resp[:, alive].T @ (x * x)) / nk[alive, None]
        new_vars[alive] = np.maximum(second - new_means[alive] ** 2, cfg.var_floor)
        model = GmmModel(nk / n, new_means, new_vars)
    else:
        trace.append(float(model.score(x).sum()))
    model.log_likelihood_trace = trace
    return model


def fit_gmm(train, k=None, em_cfg: EmConfig | None = None) -> GmmModel:
    """EM with k-means++ seeding; keeps the best of ``em_cfg.restarts`` runs.

    Stops when the total log-likelihood improves by less than ``tol`` or
    after ``max_iter`` iterations. Variances are floored at ``var_floor``.
    """
    cfg = EmConfig() if em_cfg is None else em_cfg
    x = _train_matrix(train)
    n = x.shape[0]
    k = default_components(n) if k is None else int(k)
    if k < 1:
        raise FitError("need at least one component")
    if n < k:
        raise FitError(f"{n} samples cannot support {k} components")
    rng = np.random.default_rng(cfg.seed)
    best, traces = None, []
    for _ in range(max(1, cfg.restarts)):
        model = _em_run(x, k, cfg, rng)
        traces.append(model.log_likelihood_trace)
        if best is None or model.log_likelihood_trace[-1] > best.log_likelihood_trace[-1]:
            best = model
    best.restart_traces = traces
    return best


# -- linear OC-SVM ------------------------------------------------------------

@dataclass
class SgdConfig:
    iterations: int = 3000
    step: float = 1.0
    seed: int = 0
    batch_size: int | None = None


@dataclass
class LinearOcSvmModel:
    w: np.ndarray
    rho: float
    nu: float
    objective: float = math.nan
    kind = "ocsvm"

    def score(self, samples):
        return _query(samples, self.w.shape[0]) @ self.w - self.rho

    def params(self):
        return {"w": self.w, "rho": self.rho, "nu": self.nu, "objective": self.objective}


def _check_nu(nu):
    if not 0.0 < nu <= 1.0:
        raise ContractError(f"nu must lie in (0, 1], got {nu}")


def ocsvm_objective(w, rho, x, nu):
    s = x @ w
    return 0.5 * float(w @ w) - rho + float(np.maximum(0.0, rho - s).sum()) / (nu * x.shape[0])


def _ocsvm_best_rho(s, nu):
    # smallest minimizer over rho: the ceil(nu*n)-th smallest projection
    m = max(1, math.ceil(nu * s.size - 1e-9))
    return float(np.partition(s, m - 1)[m - 1])


def _multipliers(values, nu, largest):
    """Weights of a subgradient once the offset/radius is minimized out.

    The ``m - 1`` most extreme values get ``1 / (nu n)`` each and the m-th,
    which sits on the boundary, takes the remainder so the weights sum to 1.
    """
    n = values.size
    m = max(1, math.ceil(nu * n - 1e-9))
    order = np.argsort(-values if largest else values, kind="stable")
    alpha = np.zeros(n)
    alpha[order[:m - 1]] = 1.0 / (nu * n)
    alpha[order[m - 1]] = 1.0 - (m - 1) / (nu * n)
    return alpha


def _batches(n, cfg, rng):
    if cfg.batch_size is None or cfg.batch_size >= n:
        return None
    return rng.choice(n, size=cfg.batch_size, replace=False)


def fit_linear_ocsvm(train, nu=0.1, sgd_cfg: SgdConfig | None = None) -> LinearOcSvmModel:
    """Minimize ``0.5|w|^2 - rho + sum(max(0, rho - w.x_i)) / (nu n)``.

    The objective is 1-strongly convex in ``w`` once ``rho`` is minimized
    out, so steps shrink as ``step / t``; the best iterate is returned.
    """
    _check_nu(nu)
    cfg = SgdConfig() if sgd_cfg is None else sgd_cfg
    x = _train_matrix(train)
    n, d = x.shape
    rng = np.random.default_rng(cfg.seed)
    w = x.mean(axis=0)
    best_w, best_obj = w.copy(), math.inf
    for t in range(1, cfg.iterations + 1):
        rho = _ocsvm_best_rho(x @ w, nu)
        obj = ocsvm_objective(w, rho, x, nu)
        if not math.isfinite(obj):
            raise FitError("OC-SVM objective diverged")
        if obj < best_obj:
            best_w, best_obj = w.copy(), obj
        idx = _batches(n, cfg, rng)
        xb = x if idx is None else x[idx]
        grad = w - _multipliers(xb @ w, nu, largest=False) @ xb
        w = w - (cfg.step / t) * grad
    rho = _ocsvm_best_rho(x @ best_w, nu)
    return LinearOcSvmModel(best_w, rho, float(nu), ocsvm_objective(best_w, rho, x, nu))


# -- linear SVDD --------------------------------------------------------------

@dataclass
class LinearSvddModel:
    center: np.ndarray
    radius: float
    nu: float
    objective: float = math.nan
    kind = "svdd"

    def distance2(self, samples):
        diff = _query(samples, self.center.shape[0]) - self.center
        return np.einsum("ij,ij->i", diff, diff)

    def score(self, samples):
        return -self.distance2(samples)

    def params(self):
        return {"center": self.center, "radius": self.radius, "nu": self.nu, "objective": self.objective}


def svdd_objective(c, r2, x, nu):
    d2 = np.sum((x - c) ** 2, axis=1)
    return r2 + float(np.maximum(0.0, d2 - r2).sum()) / (nu * x.shape[0])


def _svdd_best_r2(d2, nu):
    # largest minimizer over R^2: the ceil(nu*n)-th largest squared distance
    m = max(1, math.ceil(nu * d2.size - 1e-9))
    return float(-np.partition(-d2, m - 1)[m - 1])


def fit_linear_svdd(train, nu=0.1, sgd_cfg: SgdConfig | None = None) -> LinearSvddModel:
    """Minimize ``R^2 + sum(max(0, |x_i - c|^2 - R^2)) / (nu n)`` over ``c`` and ``R``.

    ``R^2`` is solved exactly for each center (ties broken toward the larger
    radius); the center follows diminishing subgradient steps from the data
    mean. The best iterate is returned.
    """
    _check_nu(nu)
    cfg = SgdConfig() if sgd_cfg is None else sgd_cfg
    x = _train_matrix(train)
    n, d = x.shape
    rng = np.random.default_rng(cfg.seed)
    c = x.mean(axis=0)
    best_c, best_obj = c.copy(), math.inf
    for t in range(1, cfg.iterations + 1):
        d2 = np.sum((x - c) ** 2, axis=1)
        r2 = _svdd_best_r2(d2, nu)
        obj = svdd_objective(c, r2, x, nu)
        if not math.isfinite(obj):
            raise FitError("SVDD objective diverged")
        if obj < best_obj:
            best_c, best_obj = c.copy(), obj
        idx = _batches(n, cfg, rng)
        xb = x if idx is None else x[idx]
        alpha = _multipliers(d2 if idx is None else d2[idx], nu, largest=True)
        grad = 2.0 * (c - alpha @ xb)
        # the reduced objective has curvature 2 in c
        c = c - (cfg.step * 0.5 / t) * grad
    d2 = np.sum((x - best_c) ** 2, axis=1)
    r2 = _svdd_best_r2(d2, nu)
    return LinearSvddModel(best_c, math.sqrt(max(r2, 0.0)), float(nu), svdd_objective(best_c, r2, x, nu))


# -- dispatch -----------------------------------------------------------------

BASELINE_KINDS = ("md", "gmm", "ocsvm", "svdd")


def baseline_score(model, samples) -> np.ndarray:
    """Bonafideness scores for any fitted baseline (higher = more bonafide)."""
    if not isinstance(model, (MahalanobisModel, GmmModel, LinearOcSvmModel, LinearSvddModel)):
        raise ContractError(f"not a fitted baseline: {type(model).__name__}")
    return model.score(samples)
