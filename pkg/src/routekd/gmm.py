"""Diagonal-covariance Gaussian mixtures fitted by EM.

Used to learn the joint distribution of encoded driving records and draw
synthetic ones. Diagonal covariances with a variance floor keep the fit
stable on low-count ordinal data; the floor also makes the constrained
M-step exact, so the log-likelihood stays non-decreasing.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from routekd import backend as K
from routekd.data import Dataset
from routekd.errors import ShapeError, ValidationError
from routekd.schema import FEATURE_DIM

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-4
DEGENERATE_WEIGHT = 1e-8


@dataclass
class GmmModel:
    weights: np.ndarray  # (k,)
    means: np.ndarray  # (k, d)
    variances: np.ndarray  # (k, d) diagonal variances
    fit_log_likelihoods: list = field(default_factory=list, compare=False)

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.means = np.ascontiguousarray(self.means, dtype=np.float64)
        self.variances = np.ascontiguousarray(self.variances, dtype=np.float64)
        k = self.weights.shape[0]
        if self.means.ndim != 2 or self.means.shape[0] != k:
            raise ShapeError("means must be (k, d)")
        if self.variances.shape != self.means.shape:
            raise ShapeError("variances must match means shape")
        if (self.weights < 0).any() or abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValidationError("weights must be nonnegative and sum to 1")
        if (self.variances < VARIANCE_FLOOR * (1 - 1e-12)).any():
            raise ValidationError(f"variances must be >= {VARIANCE_FLOOR}")

    @property
    def k(self):
        return self.weights.shape[0]

    @property
    def d(self):
        return self.means.shape[1]


def _check_data(model, data):
    data = np.ascontiguousarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != model.d:
        raise ShapeError(f"data must be (n, {model.d}), got {data.shape}")
    return data


def _log_joint(model, data):
    """(n, k) matrix of log w_j + log N(x_i | mu_j, sigma_j)."""
    return K.gmm_log_components(
        data, model.means, model.variances, np.log(model.weights.clip(1e-300))
    )


def log_likelihood(model, data):
    """Mean per-record log density under the mixture."""
    data = _check_data(model, data)
    return float(K.logsumexp_rows(_log_joint(model, data)).mean())


def responsibilities(model, data):
    """E-step posteriors; rows sum to 1."""
    data = _check_data(model, data)
    lj = _log_joint(model, data)
    lse = K.logsumexp_rows(lj)
    return np.exp(lj - lse[:, None])


def _kmeanspp_means(data, k, rng):
    """Seeded k-means++-style spread of initial means."""
    n = data.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((data - data[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, ((data - data[idx]) ** 2).sum(axis=1))
    return data[chosen].copy()


def _kmeans_refine(data, means, iters=10):
    """A few Lloyd iterations to harden the k-means++ seeds; empty
    clusters keep their previous mean."""
    for _ in range(iters):
        d2 = ((data[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        for j in range(means.shape[0]):
            members = data[assign == j]
            if members.shape[0]:
                means[j] = members.mean(axis=0)
    return means


def fit_em(data, k, max_iter=200, tol=1e-6, seed=0, init="kmeans++"):
    """Fit a k-component diagonal GMM by EM.

    Stops once the mean log-likelihood improves by less than `tol` or
    after `max_iter` steps. The per-iteration log-likelihoods (starting
    with the initialization) are kept on the returned model. `init` is
    the seeded k-means++ mean selection, optionally Lloyd-refined
    (init="kmeans"), which lands in far better optima on clustered data.
    """
    data = np.ascontiguousarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ShapeError(f"data must be 2-D, got shape {data.shape}")
    n, d = data.shape
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if k > n:
        raise ValidationError(f"k={k} exceeds the {n} available records")
    if init not in ("kmeans++", "kmeans"):
        raise ValidationError(f"unknown init {init!r}")
    rng = np.random.default_rng(seed)
    global_var = np.maximum(data.var(axis=0), VARIANCE_FLOOR)
    means = _kmeanspp_means(data, k, rng)
    if init == "kmeans":
        means = _kmeans_refine(data, means)
    model = GmmModel(
        weights=np.full(k, 1.0 / k),
        means=means,
        variances=np.tile(global_var, (k, 1)),
    )
    ll = log_likelihood(model, data)
    history = [ll]
    for _ in range(max_iter):
        resp = responsibilities(model, data)
        nk = resp.sum(axis=0)
        weights = nk / n
        safe_nk = np.maximum(nk, 1e-300)
        means = (resp.T @ data) / safe_nk[:, None]
        variances = np.empty_like(means)
        for j in range(k):
            diff = data - means[j]
            variances[j] = (resp[:, j][:, None] * diff * diff).sum(axis=0) / safe_nk[j]
        variances = np.maximum(variances, VARIANCE_FLOOR)
        degenerate = np.flatnonzero(weights < DEGENERATE_WEIGHT)
        if degenerate.size:
            for j in degenerate:
                idx = int(rng.integers(n))
                means[j] = data[idx]
                variances[j] = global_var
                weights[j] = 1.0 / n
                log.warning("re-seeded degenerate GMM component %d from record %d", j, idx)
            weights = weights / weights.sum()
        model = GmmModel(weights=weights, means=means, variances=variances)
        new_ll = log_likelihood(model, data)
        history.append(new_ll)
        improvement = new_ll - ll
        ll = new_ll
        if improvement < tol:
            break
    model.fit_log_likelihoods = history
    return model


def bic(model, data):
    """Bayesian information criterion; lower is better."""
    n = data.shape[0]
    n_params = (model.k - 1) + 2 * model.k * model.d
    return -2.0 * log_likelihood(model, data) * n + n_params * np.log(n)


def fit_em_bic(data, k_range=range(1, 11), max_iter=200, tol=1e-6, seed=0, restarts=6,
               init="kmeans"):
    """Pick the component count by BIC.

    EM is sensitive to initialization, so each k gets `restarts`
    independently seeded Lloyd-refined fits and keeps the best
    log-likelihood before BIC compares across k. Deterministic given
    (data, k_range, seed).
    """
    best = None
    best_bic = np.inf
    for k in k_range:
        if k > data.shape[0]:
            break
        fits = []
        for r in range(restarts):
            run_seed = int(np.random.SeedSequence((seed, k, r)).generate_state(1)[0])
            fits.append(fit_em(data, k, max_iter=max_iter, tol=tol, seed=run_seed, init=init))
        model = max(fits, key=lambda m: m.fit_log_likelihoods[-1])
        score = bic(model, data)
        if score < best_bic:
            best, best_bic = model, score
    if best is None:
        raise ValidationError("k_range produced no feasible component count")
    return best


def sample(model, n, ordinal_schema, seed=0):
    """Draw n synthetic records and map them onto the schema.

    Components are drawn by weight, then a diagonal Gaussian vector per
    record; ordinal coordinates are rounded and clipped, the travel-time
    coordinate clipped to its continuous range.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if ordinal_schema.dim != model.d:
        raise ShapeError(
            f"schema has {ordinal_schema.dim} columns but the model is {model.d}-dimensional"
        )
    if model.d != FEATURE_DIM + 1:
        raise ShapeError(f"record sampling expects {FEATURE_DIM + 1}-column models")
    rng = np.random.default_rng(seed)
    components = rng.choice(model.k, size=n, p=model.weights)
    noise = rng.standard_normal((n, model.d))
    raw = model.means[components] + noise * np.sqrt(model.variances[components])
    mat = ordinal_schema.round_clip(raw)
    return Dataset(
        mat[:, :FEATURE_DIM], mat[:, FEATURE_DIM].astype(np.int64) - 1, provenance="vr"
    )
