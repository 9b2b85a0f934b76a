"""Sample and exponentially weighted covariance estimators with shrinkage benchmarks.

Row-time convention used throughout the package: row 0 of a data matrix is the
most recent observation and row T-1 the oldest, so the exponential weight on
row t is proportional to beta**t. Callers holding chronologically ascending
data (as return panels do) must reverse rows before estimating.

Data are assumed pre-demeaned; pass ``demean=True`` to subtract column means
first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral import SymmetricSpectrum

__all__ = [
    "WeightProfile",
    "EmaParams",
    "sample_covariance",
    "ema_weights",
    "ema_covariance",
    "ema_update",
    "auxiliary_transform",
    "linear_shrinkage",
    "estimate_ls_intensity",
    "nonlinear_shrinkage",
    "kernel_stieltjes",
    "fsopt_oracle",
    "characteristic_timescale",
    "effective_concentration",
]


@dataclass(frozen=True)
class WeightProfile:
    """Diagonal observation weights of the exponentially weighted estimator.

    ``weights[t] = T * (1 - beta) * beta**t / (1 - beta**T)`` with index 0 the
    most recent observation; the weights average to one, so the weighted
    covariance stays an unbiased estimator.
    """

    beta: float
    length: int
    weights: np.ndarray


@dataclass(frozen=True)
class EmaParams:
    """Bulk parameters of an exponentially weighted estimation problem."""

    beta: float
    T: int
    N: int

    @property
    def timescale(self) -> float:
        return characteristic_timescale(self.beta)

    @property
    def q(self) -> float:
        return self.N / self.T

    @property
    def q_effective(self) -> float:
        return effective_concentration(self.N, self.beta)


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not 0.0 < beta < 1.0 or not math.isfinite(beta):
        raise ValueError(f"decay rate beta must lie in (0, 1), got {beta}")
    return beta


def _check_data(X, min_rows: int = 1) -> np.ndarray:
    a = np.asarray(X, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a T x N data matrix, got shape {a.shape}")
    if a.shape[0] < min_rows:
        raise ValueError(f"need at least {min_rows} observations, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise ValueError("data matrix contains non-finite entries")
    return a


def sample_covariance(X, demean: bool = False) -> np.ndarray:
    """Equal-weight covariance ``X'X / T`` of a T x N data matrix."""
    a = _check_data(X, min_rows=2)
    if demean:
        a = a - a.mean(axis=0, keepdims=True)
    return a.T @ a / a.shape[0]


def ema_weights(beta: float, T: int) -> WeightProfile:
    """Exponential weight profile with unit mean over ``T`` observations."""
    beta = _check_beta(beta)
    T = int(T)
    if T < 1:
        raise ValueError(f"window length must be at least 1, got {T}")
    # T*(1-beta)/(1-beta^T) * beta^t, computed via expm1 for stability at beta ~ 1.
    log_beta = math.log(beta)
    scale = T * (-math.expm1(log_beta)) / (-math.expm1(T * log_beta))
    w = scale * np.exp(log_beta * np.arange(T))
    return WeightProfile(beta=beta, length=T, weights=w)


def ema_covariance(X, beta: float, demean: bool = False) -> np.ndarray:
    """Exponentially weighted covariance with row 0 the most recent observation.

    Equals ``X' B X / T`` with ``B = diag(ema_weights(beta, T).weights)``; the
    weights sum to T so the per-observation masses sum to one.
    """
    a = _check_data(X, min_rows=1)
    if demean:
        a = a - a.mean(axis=0, keepdims=True)
    w = ema_weights(beta, a.shape[0]).weights
    return (a.T * w) @ a / a.shape[0]


def ema_update(E_prev, x, beta: float) -> np.ndarray:
    """One recurrence step: ``beta * E_prev + (1 - beta) * x x'``."""
    beta = _check_beta(beta)
    E = np.asarray(E_prev, dtype=np.float64)
    v = np.asarray(x, dtype=np.float64).ravel()
    if E.shape != (v.shape[0], v.shape[0]):
        raise ValueError(f"dimension mismatch: E is {E.shape}, x has length {v.shape[0]}")
    return beta * E + (1.0 - beta) * np.outer(v, v)


def auxiliary_transform(X, beta: float) -> np.ndarray:
    """Scale row t by the square root of its exponential weight.

    The transformed matrix satisfies ``Xt' Xt / T == ema_covariance(X, beta)``
    exactly, which is what lets the cross-validation machinery treat weighted
    data like an ordinary sample.
    """
    a = _check_data(X, min_rows=1)
    w = ema_weights(beta, a.shape[0]).weights
    return a * np.sqrt(w)[:, None]


def linear_shrinkage(eigenvalues, rho: float) -> np.ndarray:
    """Pull eigenvalues toward their grand mean: ``rho*g + (1-rho)*mean(g)``."""
    g = np.asarray(eigenvalues, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise ValueError("eigenvalues contain non-finite entries")
    rho = float(rho)
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"shrinkage intensity must lie in [0, 1], got {rho}")
    return rho * g + (1.0 - rho) * g.mean()


def estimate_ls_intensity(X) -> float:
    """Plug-in shrinkage intensity for :func:`linear_shrinkage`.

    Pilot statistics on the data matrix that formed the covariance (pass the
    auxiliary-transformed matrix for weighted estimators): with
    ``S = X'X/T``, ``mu = tr(S)/N``,

        d2 = ||S - mu I||_F^2,   b2 = min(d2, (1/T^2) sum_t ||x_t x_t' - S||_F^2)

    the intensity is ``1 - b2/d2``, clamped into [0, 1]. Near-spherical data
    give 0 (full shrinkage), strongly dispersed spectra with T >> N give ~1.
    """
    a = _check_data(X, min_rows=2)
    T, N = a.shape
    S = a.T @ a / T
    mu = np.trace(S) / N
    centered = S - mu * np.eye(N)
    d2 = float(np.sum(centered * centered))
    if d2 <= 0.0:
        return 0.0
    # sum_t ||x_t x_t' - S||_F^2 = sum_t ||x_t||^4 - 2 sum_t x_t'Sx_t + T ||S||_F^2
    row_sq = np.sum(a * a, axis=1)
    quad = np.sum((a @ S) * a, axis=1)
    b2_bar = (np.sum(row_sq**2) - 2.0 * np.sum(quad) + T * float(np.sum(S * S))) / T**2
    b2 = min(max(b2_bar, 0.0), d2)
    return float(min(max(1.0 - b2 / d2, 0.0), 1.0))


def kernel_stieltjes(x, eigenvalues, T: float) -> np.ndarray:
    """Kernel estimate of the spectral Stieltjes transform on the real axis.

    Uses the Epanechnikov kernel (support ``[-sqrt(5), sqrt(5)]``, unit
    variance) with per-eigenvalue bandwidth ``h_j = lam_j * T**(-1/3)`` and its
    closed-form Hilbert transform. Returns the boundary value in the
    ``m(z) = integral f(t)/(t - z) dt`` convention, i.e.
    ``m(x + i0) = PV integral f(t)/(t - x) dt + i pi f(x)``, which is the
    convention the nonlinear shrinkage denominator expects.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    pts = np.atleast_1d(np.asarray(x, dtype=np.float64))
    h = lam * float(T) ** (-1.0 / 3.0)  # one bandwidth per eigenvalue
    u = (pts[:, None] - lam[None, :]) / h[None, :]

    root5 = math.sqrt(5.0)
    inside = np.maximum(1.0 - u**2 / 5.0, 0.0)
    density = np.mean(3.0 / (4.0 * root5) * inside / h[None, :], axis=1)

    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.log(np.abs((root5 - u) / (root5 + u)))
    hilbert_kernel = (-3.0 / (10.0 * math.pi)) * u + (
        3.0 / (4.0 * root5 * math.pi)
    ) * (1.0 - u**2 / 5.0) * log_term
    on_edge = np.abs(np.abs(u) - root5) < 1e-14
    hilbert_kernel[on_edge] = (-3.0 / (10.0 * math.pi)) * u[on_edge]
    hilbert = np.mean(hilbert_kernel / h[None, :], axis=1)

    out = math.pi * hilbert + 1j * math.pi * density
    return out if np.ndim(x) else out[0]


def nonlinear_shrinkage(eigenvalues, q: float) -> np.ndarray:
    """Kernel-based nonlinear shrinkage of sample eigenvalues.

    Each eigenvalue is mapped to ``g / |1 - q - q*g*m(g)|**2`` where ``m`` is
    the kernel Stieltjes estimate from :func:`kernel_stieltjes` evaluated at
    the eigenvalue itself. Zero sample eigenvalues map to zero (callers floor
    them downstream); the kernel sums run over the positive eigenvalues only.
    """
    g = np.asarray(eigenvalues, dtype=np.float64)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("expected a nonempty eigenvalue sequence")
    if not np.all(np.isfinite(g)) or np.any(g < 0.0):
        raise ValueError("eigenvalues must be finite and nonnegative")
    q = float(q)
    if q <= 0.0:
        raise ValueError(f"concentration ratio must be positive, got {q}")

    positive = g > g.max() * 1e-12
    if not np.any(positive):
        raise ValueError("all eigenvalues are zero; spectrum carries no signal")
    lam = g[positive]
    T_eff = g.size / q  # q = N/T with N the full dimension
    m = kernel_stieltjes(lam, lam, T_eff)

    out = np.zeros_like(g)
    out[positive] = lam / np.abs(1.0 - q - q * lam * m) ** 2
    return out


def fsopt_oracle(C, sample_spectrum: SymmetricSpectrum) -> np.ndarray:
    """Finite-sample optimal eigenvalues ``xi_i = u_i' C u_i``.

    Requires the true population covariance, so this is a simulation-only
    oracle: it gives the best eigenvalues achievable while keeping the sample
    eigenvectors.
    """
    Cm = np.asarray(C, dtype=np.float64)
    U = sample_spectrum.eigenvectors
    if Cm.shape != (U.shape[0], U.shape[0]):
        raise ValueError(f"dimension mismatch: C is {Cm.shape}, spectrum dim {U.shape[0]}")
    return np.einsum("ji,jk,ki->i", U, Cm, U)


def characteristic_timescale(beta: float) -> float:
    """Effective memory length of the exponential weights, ``-1/ln(beta)``."""
    return -1.0 / math.log(_check_beta(beta))


def effective_concentration(N: int, beta: float) -> float:
    """Dimension relative to the effective window length, ``N * (1 - beta)``."""
    N = int(N)
    if N < 1:
        raise ValueError(f"dimension must be at least 1, got {N}")
    return N * (1.0 - _check_beta(beta))
