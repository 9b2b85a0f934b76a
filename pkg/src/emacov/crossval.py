"""K-fold cross-validated eigenvalue correction for weighted covariance matrices.

The estimator projects held-out (weighted) observations onto eigenvectors
fitted on the complementary folds, averages the squared projections into
bias-corrected eigenvalues, makes them monotone by isotonic regression against
the full-sample eigenvalue order, and rebuilds the covariance on the
full-sample eigenvectors.

Shuffling before the fold split is essential for weighted data: it breaks the
deterministic time profile of the weights so each fold carries close-to-unit
average weight. The fold partition uses numpy's PCG64 generator, so plans are
bit-reproducible across platforms for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral
from .estimators import auxiliary_transform, ema_weights

__all__ = [
    "FoldPlan",
    "CvEigenvalues",
    "kfold_partition",
    "cv_eigenvalues",
    "isotonic_regression",
    "positivity_floor",
    "ema_cv_eigenvalues",
    "ema_cv_estimate",
    "scm_cv_eigenvalues",
    "scm_cv_estimate",
]

# Floor on corrected eigenvalues, relative to the largest one; guarantees the
# reconstructed matrix is invertible for portfolio use.
FLOOR_RATIO = 1e-10

DEFAULT_FOLDS = 10


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of T observations to K shuffled folds.

    ``assignments[t]`` is the fold label (0-based) of row t; fold sizes differ
    by at most one and the plan is a pure function of ``(T, K, seed)``.
    """

    K: int
    assignments: np.ndarray
    seed: int

    @property
    def T(self) -> int:
        return self.assignments.shape[0]

    def fold_indices(self, k: int) -> np.ndarray:
        return np.nonzero(self.assignments == k)[0]


@dataclass(frozen=True)
class CvEigenvalues:
    """Raw and isotonic cross-validated eigenvalues, ascending-eigenvalue order."""

    raw: np.ndarray
    isotonic: np.ndarray
    beta: float | None


def kfold_partition(T: int, K: int, seed: int) -> FoldPlan:
    """Shuffle ``range(T)`` and chunk it into K near-equal contiguous folds."""
    T, K = int(T), int(K)
    if not 2 <= K <= T:
        raise ValueError(f"fold count must satisfy 2 <= K <= T, got K={K}, T={T}")
    perm = np.random.default_rng(seed).permutation(T)
    assignments = np.empty(T, dtype=np.int64)
    base, extra = divmod(T, K)
    start = 0
    for k in range(K):
        size = base + (1 if k < extra else 0)
        assignments[perm[start : start + size]] = k
        start += size
    return FoldPlan(K=K, assignments=assignments, seed=int(seed))


def cv_eigenvalues(
    X_tilde,
    plan: FoldPlan,
    weights=None,
    fold_renormalize: bool = False,
) -> np.ndarray:
    """Cross-validated eigenvalues of the covariance of ``X_tilde``.

    For each fold, eigenvectors are fitted on the complement and the held-out
    rows are projected onto them; the squared projections are averaged within
    the fold and then across folds. Eigenvector slots are aligned across folds
    by ascending-eigenvalue rank.

    ``fold_renormalize`` divides each fold's contribution by the realized mean
    observation weight of that fold (requires ``weights``); the default keeps
    the plain average, which matches the estimator's defining formula.
    """
    a = np.asarray(X_tilde, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a T x N matrix, got shape {a.shape}")
    if a.shape[0] != plan.T:
        raise ValueError(f"plan covers {plan.T} rows but data has {a.shape[0]}")
    if fold_renormalize and weights is None:
        raise ValueError("fold_renormalize requires the observation weights")

    T, N = a.shape
    w = None if weights is None else np.asarray(weights, dtype=np.float64)
    acc = np.zeros(N)
    for k in range(plan.K):
        held_out = plan.assignments == k
        train = a[~held_out]
        if train.shape[0] < 2:
            raise ValueError(f"training complement of fold {k} has fewer than 2 rows")
        basis = spectral.eigh(train.T @ train / train.shape[0]).eigenvectors
        proj = a[held_out] @ basis
        if not np.all(np.isfinite(proj)):
            raise ValueError(f"non-finite projections in fold {k}")
        contribution = np.mean(proj**2, axis=0)
        if fold_renormalize:
            contribution = contribution / np.mean(w[held_out])
        acc += contribution
    return acc / plan.K


def isotonic_regression(values, order_keys=None) -> np.ndarray:
    """L2 projection onto nondecreasing sequences by pool-adjacent-violators.

    ``order_keys`` (typically the sample eigenvalues) define the regression
    order; when omitted the values are regressed in their given order. The
    projection preserves the mean exactly and is idempotent.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d sequence, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("values contain non-finite entries")
    if order_keys is not None:
        keys = np.asarray(order_keys, dtype=np.float64)
        if keys.shape != v.shape:
            raise ValueError(f"order_keys shape {keys.shape} does not match values {v.shape}")
        order = np.argsort(keys, kind="stable")
    else:
        order = np.arange(v.shape[0])

    seq = v[order]
    # Pool adjacent violators: maintain a stack of (mean, count) blocks.
    means: list[float] = []
    counts: list[int] = []
    for x in seq:
        means.append(float(x))
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, c2 = means.pop(), counts.pop()
            m1, c1 = means.pop(), counts.pop()
            c = c1 + c2
            means.append((m1 * c1 + m2 * c2) / c)
            counts.append(c)
    fitted = np.repeat(means, counts)

    out = np.empty_like(v)
    out[order] = fitted
    return out


def positivity_floor(eigenvalues) -> np.ndarray:
    """Floor eigenvalues at ``FLOOR_RATIO`` times the largest one."""
    xi = np.asarray(eigenvalues, dtype=np.float64)
    top = xi.max()
    if top <= 0.0:
        raise ValueError("cannot floor a spectrum with no positive eigenvalue")
    return np.maximum(xi, FLOOR_RATIO * top)


def _cv_pipeline(
    X_for_cov,
    weights,
    K: int,
    seed: int,
    fold_renormalize: bool,
    beta: float | None,
) -> tuple[CvEigenvalues, spectral.SymmetricSpectrum]:
    T = X_for_cov.shape[0]
    spectrum = spectral.eigh(X_for_cov.T @ X_for_cov / T)
    plan = kfold_partition(T, K, seed)
    raw = cv_eigenvalues(X_for_cov, plan, weights=weights, fold_renormalize=fold_renormalize)
    iso = positivity_floor(isotonic_regression(raw, order_keys=spectrum.eigenvalues))
    return CvEigenvalues(raw=raw, isotonic=iso, beta=beta), spectrum


def ema_cv_eigenvalues(
    X,
    beta: float,
    K: int = DEFAULT_FOLDS,
    seed: int = 0,
    fold_renormalize: bool = False,
) -> tuple[CvEigenvalues, spectral.SymmetricSpectrum]:
    """Cross-validated eigenvalue correction of the exponentially weighted covariance.

    Returns the corrected eigenvalues together with the full-sample spectrum
    whose eigenvectors they belong to. Row 0 of ``X`` must be the most recent
    observation.
    """
    X_tilde = auxiliary_transform(X, beta)
    weights = ema_weights(beta, X_tilde.shape[0]).weights
    return _cv_pipeline(X_tilde, weights, K, seed, fold_renormalize, beta)


def ema_cv_estimate(
    X,
    beta: float,
    K: int = DEFAULT_FOLDS,
    seed: int = 0,
    fold_renormalize: bool = False,
) -> np.ndarray:
    """Full covariance estimate: corrected eigenvalues on the weighted eigenvectors."""
    cv, spectrum = ema_cv_eigenvalues(X, beta, K=K, seed=seed, fold_renormalize=fold_renormalize)
    return spectral.reconstruct(spectrum, cv.isotonic)


def scm_cv_eigenvalues(
    X, K: int = DEFAULT_FOLDS, seed: int = 0
) -> tuple[CvEigenvalues, spectral.SymmetricSpectrum]:
    """Unweighted variant: the same pipeline with all observation weights equal."""
    a = np.asarray(X, dtype=np.float64)
    return _cv_pipeline(a, None, K, seed, False, None)


def scm_cv_estimate(X, K: int = DEFAULT_FOLDS, seed: int = 0) -> np.ndarray:
    """Cross-validated correction of the plain sample covariance."""
    cv, spectrum = scm_cv_eigenvalues(X, K=K, seed=seed)
    return spectral.reconstruct(spectrum, cv.isotonic)
