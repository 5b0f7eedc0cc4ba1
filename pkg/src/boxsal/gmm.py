"""Full-covariance Gaussian mixture models fitted with EM.

Used as the foreground/background appearance models inside the GrabCut
pseudo-label generator.  Fitting starts from k-means++ seeding and runs
plain EM; every covariance gets a small identity floor so flat color
regions never produce a singular matrix.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

COVARIANCE_FLOOR = 1e-5
NLL_CAP = 1e6
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(eq=False)
class GmmModel:
    """A K-component mixture with cached precisions and log-determinants."""

    weights: np.ndarray       # (K,), nonnegative, sums to 1
    means: np.ndarray         # (K, D)
    covariances: np.ndarray   # (K, D, D), symmetric positive definite
    precisions: np.ndarray = field(default=None)  # type: ignore[assignment]
    log_dets: np.ndarray = field(default=None)    # type: ignore[assignment]
    log_likelihood_history: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.covariances = np.asarray(self.covariances, dtype=np.float64)
        if abs(self.weights.sum() - 1.0) > 1e-9 or (self.weights < 0).any():
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        if self.precisions is None:
            self.precisions = np.linalg.inv(self.covariances)
        if self.log_dets is None:
            sign, logdet = np.linalg.slogdet(self.covariances)
            if (sign <= 0).any():
                raise ValueError("covariances must be positive definite")
            self.log_dets = logdet

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]


def _log_component_densities(gmm: GmmModel, pixels: np.ndarray) -> np.ndarray:
    """Per-component log Gaussian densities, shape (N, K)."""
    n, d = pixels.shape
    out = np.empty((n, gmm.n_components))
    for k in range(gmm.n_components):
        diff = pixels - gmm.means[k]
        maha = np.einsum("ij,jk,ik->i", diff, gmm.precisions[k], diff)
        out[:, k] = -0.5 * (d * _LOG_2PI + gmm.log_dets[k] + maha)
    return out


def _log_mixture_density(gmm: GmmModel, pixels: np.ndarray) -> np.ndarray:
    log_comp = _log_component_densities(gmm, pixels)
    with np.errstate(divide="ignore"):
        log_weighted = log_comp + np.log(gmm.weights)[None, :]
    m = log_weighted.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(log_weighted - m).sum(axis=1, keepdims=True)))[:, 0]


def neg_log_likelihood(gmm: GmmModel, pixel) -> float | np.ndarray:
    """Negative log mixture density, capped at a finite value.

    Accepts a single D-vector or an (N, D) batch; the cap keeps the
    graph-cut data terms finite for any input color.
    """
    arr = np.asarray(pixel, dtype=np.float64)
    single = arr.ndim == 1
    pts = arr[None, :] if single else arr
    nll = np.minimum(-_log_mixture_density(gmm, pts), NLL_CAP)
    return float(nll[0]) if single else nll


def _kmeans_pp_centers(pixels: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each next center drawn with probability ~ D^2."""
    n = pixels.shape[0]
    centers = np.empty((k, pixels.shape[1]))
    centers[0] = pixels[rng.integers(n)]
    d2 = ((pixels - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[i] = pixels[rng.integers(n)]
        else:
            centers[i] = pixels[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((pixels - centers[i]) ** 2).sum(axis=1))
    return centers


def _m_step(pixels: np.ndarray, resp: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, d = pixels.shape
    nk = resp.sum(axis=0)
    weights = nk / n
    safe_nk = np.maximum(nk, 1e-12)
    means = (resp.T @ pixels) / safe_nk[:, None]
    covs = np.empty((resp.shape[1], d, d))
    for k in range(resp.shape[1]):
        diff = pixels - means[k]
        covs[k] = (resp[:, k, None] * diff).T @ diff / safe_nk[k]
        covs[k] += COVARIANCE_FLOOR * np.eye(d)
    # weights of empty components underflow to ~0; renormalize exactly
    weights = weights / weights.sum()
    return weights, means, covs


def fit_gmm(pixels, k: int = 5, max_iters: int = 50, tol: float = 1e-6,
            rng: np.random.Generator | int | None = 17) -> GmmModel:
    """Fit a K-component full-covariance GMM by EM from k-means++ seeding.

    Stops after ``max_iters`` EM steps or when the log-likelihood improves
    by less than ``tol``.  If a step would decrease the log-likelihood
    (possible only through the covariance floor), the previous parameters
    are kept, so the recorded history is non-decreasing.  When the data
    has fewer distinct points than ``k``, the component count is reduced
    with a warning.
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 2 or pixels.shape[0] == 0:
        raise ValueError("pixels must be a non-empty (N, D) array")
    if k < 1:
        raise ValueError("k must be >= 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)

    n_distinct = np.unique(pixels, axis=0).shape[0]
    if n_distinct < k:
        warnings.warn(f"only {n_distinct} distinct pixels; reducing GMM components "
                      f"from {k} to {n_distinct}", stacklevel=2)
        k = n_distinct

    centers = _kmeans_pp_centers(pixels, k, rng)
    d2 = ((pixels[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros((pixels.shape[0], k))
    resp[np.arange(pixels.shape[0]), d2.argmin(axis=1)] = 1.0
    weights, means, covs = _m_step(pixels, resp)

    history: list[float] = []
    prev = None
    for it in range(max_iters + 1):
        model = GmmModel(weights, means, covs)
        ll = float(_log_mixture_density(model, pixels).sum())
        if history and ll < history[-1]:
            weights, means, covs = prev  # type: ignore[misc]
            break
        history.append(ll)
        if len(history) > 1 and history[-1] - history[-2] < tol:
            break
        if it == max_iters:
            break
        log_comp = _log_component_densities(model, pixels)
        with np.errstate(divide="ignore"):
            log_post = log_comp + np.log(weights)[None, :]
        log_post -= log_post.max(axis=1, keepdims=True)
        resp = np.exp(log_post)
        resp /= resp.sum(axis=1, keepdims=True)
        prev = (weights, means, covs)
        weights, means, covs = _m_step(pixels, resp)

    return GmmModel(weights, means, covs, log_likelihood_history=tuple(history))
