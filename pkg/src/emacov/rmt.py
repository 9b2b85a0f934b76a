"""Limiting spectral density of exponentially weighted Wishart matrices.

The bulk spectrum of a weighted covariance matrix built from i.i.d. data is
characterized by two numbers: the concentration ratio ``q = N/T`` and the
effective concentration ``q_e = N(1-beta)``. Free-probability addition of the
weighted rank-one updates yields a closed-form Blue function (the functional
inverse of the Stieltjes transform), from which this module computes the
transform itself, the density on a grid, and the support edges. As
``q_e -> 0`` everything reduces to the Marchenko-Pastur law.

Sign convention (package-wide): the Stieltjes transform is

    G(z) = integral rho(t) / (z - t) dt,

so ``G(z) ~ 1/z`` for large ``|z|``, ``Im G(z) < 0`` in the upper half-plane,
``B(G(z)) = z`` for the Blue function below, and the density is recovered as
``rho(lambda) = -(1/pi) * lim Im G(lambda + i eta)``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import NumericalError

__all__ = [
    "LsdParams",
    "DensityGrid",
    "mp_density",
    "mp_point_mass",
    "mp_edges",
    "mp_stieltjes",
    "blue_ema",
    "stieltjes_ema",
    "lsd_density",
    "spectral_edges",
    "lower_edge_smallq",
    "default_grid",
]

# Damped-Picard solver settings for the self-consistent equation.
PICARD_DAMPING = 0.5
MAX_ITERATIONS = 10_000
RESIDUAL_TOL = 1e-10

DEFAULT_ETA = 1e-4
DEFAULT_GRID_SIZE = 512


@dataclass(frozen=True)
class LsdParams:
    """Parameters (q, q_e, sigma2) of the weighted-Wishart limiting density.

    ``alpha = q_e * sigma2 / (1 - exp(-q_e / q))`` is the leading weight scale
    that appears in the Blue function.
    """

    q: float
    q_e: float
    sigma2: float = 1.0

    def __post_init__(self) -> None:
        for name in ("q", "q_e", "sigma2"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be finite and positive, got {value}")

    @property
    def alpha(self) -> float:
        return self.q_e * self.sigma2 / -math.expm1(-self.q_e / self.q)

    @property
    def weight_decay(self) -> float:
        """exp(-q_e/q), the weight ratio between the oldest and newest observation."""
        return math.exp(-self.q_e / self.q)


@dataclass(frozen=True)
class DensityGrid:
    """A probability density sampled on a strictly increasing grid.

    ``point_mass_at_zero`` carries the q > 1 atom separately; the grid holds
    only the continuous part.
    """

    lambdas: np.ndarray
    densities: np.ndarray
    point_mass_at_zero: float = 0.0

    def __post_init__(self) -> None:
        lam = np.asarray(self.lambdas, dtype=np.float64)
        den = np.asarray(self.densities, dtype=np.float64)
        if lam.ndim != 1 or lam.shape != den.shape or lam.size < 2:
            raise ValueError("grid and densities must be matching 1-d arrays of length >= 2")
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(den))):
            raise ValueError("density grid contains non-finite entries")
        if np.any(np.diff(lam) <= 0.0):
            raise ValueError("grid must be strictly increasing")
        if np.any(den < 0.0):
            raise ValueError("densities must be nonnegative")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "densities", den)

    def mass(self) -> float:
        """Trapezoidal integral of the continuous part."""
        return float(np.trapezoid(self.densities, self.lambdas))


def mp_edges(q: float) -> tuple[float, float]:
    """Support edges ``(1 -+ sqrt(q))**2`` of the Marchenko-Pastur density."""
    q = float(q)
    if q <= 0.0:
        raise ValueError(f"concentration ratio must be positive, got {q}")
    return (1.0 - math.sqrt(q)) ** 2, (1.0 + math.sqrt(q)) ** 2


def mp_point_mass(q: float) -> float:
    """Mass of the atom at zero: ``1 - 1/q`` when q > 1, else 0."""
    q = float(q)
    if q <= 0.0:
        raise ValueError(f"concentration ratio must be positive, got {q}")
    return max(0.0, 1.0 - 1.0 / q)


def mp_density(lam, q: float):
    """Continuous Marchenko-Pastur density at ``lam`` (scalar or array).

    The q > 1 atom at zero is reported by :func:`mp_point_mass`, never on the
    grid.
    """
    lo, hi = mp_edges(q)
    x = np.asarray(lam, dtype=np.float64)
    inside = (x > lo) & (x < hi) & (x > 0.0)
    out = np.zeros_like(x, dtype=np.float64)
    xi = x[inside]
    out[inside] = np.sqrt((xi - lo) * (hi - xi)) / (2.0 * math.pi * q * xi)
    return out if np.ndim(lam) else float(out)


def mp_stieltjes(z: complex, q: float) -> complex:
    """Closed-form Marchenko-Pastur Stieltjes transform, ``G ~ 1/z`` branch."""
    q = float(q)
    if q <= 0.0:
        raise ValueError(f"concentration ratio must be positive, got {q}")
    z = complex(z)
    s = cmath.sqrt((z + q - 1.0) ** 2 - 4.0 * q * z)
    # Pick the square-root branch that makes G decay like 1/z.
    g_minus = (z + q - 1.0 - s) / (2.0 * q * z)
    g_plus = (z + q - 1.0 + s) / (2.0 * q * z)
    return g_minus if abs(g_minus) <= abs(g_plus) else g_plus


def _clog1p(w: complex) -> complex:
    """Complex log(1 + w) with full relative accuracy for small |w|."""
    return complex(
        0.5 * math.log1p(2.0 * w.real + w.real * w.real + w.imag * w.imag),
        math.atan2(w.imag, 1.0 + w.real),
    )


def _log_ratio(G: complex, params: LsdParams) -> complex:
    """log((1 - alpha G) / (1 - alpha b G)) on the principal branch.

    The ratio equals ``1 + alpha G (b - 1)/(1 - alpha b G)`` with
    ``b - 1 = expm1(-q_e/q)``, so evaluating through log1p keeps the result
    relatively accurate even when q_e (and hence the whole quantity) is tiny;
    this matters because the self-consistent map divides it by q_e.
    """
    a = params.alpha
    b1 = math.expm1(-params.q_e / params.q)  # b - 1
    w = a * G * b1 / (1.0 - a * (1.0 + b1) * G)
    return _clog1p(w)


def blue_ema(g: complex, params: LsdParams) -> complex:
    """Blue function (functional inverse of the Stieltjes transform).

    ``B(g) = (1/g) * (1 - log(1 - alpha g)/q_e + log(1 - alpha b g)/q_e)``
    with ``b = exp(-q_e/q)``. Raises when either log factor lands on the
    negative real branch cut (where the principal branch is ambiguous).
    """
    g = complex(g)
    if g == 0:
        raise ValueError("Blue function is singular at g = 0")
    a = params.alpha
    for label, factor in (("1 - alpha*g", 1.0 - a * g), ("1 - alpha*b*g", 1.0 - a * params.weight_decay * g)):
        if factor.imag == 0.0 and factor.real <= 0.0:
            raise ValueError(f"branch-cut collision: factor {label} = {factor} is on the cut")
    return (1.0 - _log_ratio(g, params) / params.q_e) / g


def _self_consistent_map(G: complex, z: complex, params: LsdParams) -> complex:
    """Fixed-point form of ``z = B(G)``: returns ``(1 - log_ratio/q_e) / z``."""
    return (1.0 - _log_ratio(G, params) / params.q_e) / z


def _solve_stieltjes(z: complex, params: LsdParams, G0: complex) -> complex:
    """Damped Picard iteration with a Newton polish for the transform at z."""
    G = G0
    residual = math.inf
    for _ in range(MAX_ITERATIONS):
        F = _self_consistent_map(G, z, params)
        residual = abs(G - F)
        if residual < RESIDUAL_TOL:
            return G
        G = (1.0 - PICARD_DAMPING) * G + PICARD_DAMPING * F

    # Newton refinement on R(G) = z*G - (1 - log_ratio/q_e);
    # d/dG log((1-aG)/(1-abG)) = -a/(1-aG) + ab/(1-abG).
    a, b, qe = params.alpha, params.weight_decay, params.q_e
    for _ in range(100):
        R = z * G - 1.0 + _log_ratio(G, params) / qe
        dR = z + (-a / (1.0 - a * G) + a * b / (1.0 - a * b * G)) / qe
        if dR == 0:
            break
        G = G - R / dR
        F = _self_consistent_map(G, z, params)
        residual = abs(G - F)
        if residual < RESIDUAL_TOL:
            return G
    raise NumericalError(
        f"self-consistent equation did not converge at z = {z}: last residual {residual:.3e}"
    )


def stieltjes_ema(z: complex, params: LsdParams) -> complex:
    """Stieltjes transform of the weighted-Wishart limiting density at ``z``.

    Requires ``Im z > 0``. The returned solution satisfies the package sign
    convention (``Im G < 0`` in the upper half-plane, ``blue_ema(G) = z``).
    """
    z = complex(z)
    if z.imag <= 0.0:
        raise ValueError(f"stieltjes_ema requires Im z > 0, got z = {z}")
    G = _solve_stieltjes(z, params, G0=1.0 / z)
    if G.imag > 0.0:
        # Wrong branch: restart from the reflected iterate.
        G = _solve_stieltjes(z, params, G0=G.conjugate())
    return G


def lsd_density(grid, params: LsdParams, eta: float = DEFAULT_ETA) -> DensityGrid:
    """Limiting spectral density on a grid by inverting the Stieltjes transform.

    Evaluates ``-(1/pi) Im G(lambda + i eta)`` at ``eta`` and ``2 eta`` and
    extrapolates linearly toward ``eta -> 0``. Grid points are swept from the
    top down so each solve warm-starts from its neighbour. For q > 1 the atom
    at zero is attached as ``point_mass_at_zero``.
    """
    lam = np.asarray(grid, dtype=np.float64)
    if lam.ndim != 1 or lam.size < 2 or np.any(np.diff(lam) <= 0.0):
        raise ValueError("grid must be a strictly increasing 1-d array of length >= 2")
    eta = float(eta)
    if eta <= 0.0:
        raise ValueError(f"eta must be positive, got {eta}")

    im_eta = np.empty(lam.size)
    im_2eta = np.empty(lam.size)
    warm2 = None
    for pos in range(lam.size - 1, -1, -1):
        z2 = complex(lam[pos], 2.0 * eta)
        warm2 = _solve_stieltjes(z2, params, G0=warm2 if warm2 is not None else 1.0 / z2)
        z1 = complex(lam[pos], eta)
        g1 = _solve_stieltjes(z1, params, G0=warm2)
        im_2eta[pos] = warm2.imag
        im_eta[pos] = g1.imag

    # Linear Richardson step toward eta -> 0: f(0) ~ 2 f(eta) - f(2 eta).
    densities = np.maximum(0.0, -(2.0 * im_eta - im_2eta) / math.pi)
    return DensityGrid(lambdas=lam, densities=densities, point_mass_at_zero=mp_point_mass(params.q))


def _edge_objective(g: float, params: LsdParams) -> float:
    """g*P'(g) - P(g); zero exactly where the Blue function is stationary."""
    a, b, qe = params.alpha, params.weight_decay, params.q_e
    fa, fb = 1.0 - a * g, 1.0 - a * b * g
    # P(g) = 1 - log1p(a*g*(b-1)/fb)/qe, stable for q_e near zero.
    P = 1.0 - math.log1p(a * g * (b - 1.0) / fb) / qe
    dP = (a / qe) * (1.0 / fa - b / fb)
    return g * dP - P


def _bracketed_root(params: LsdParams, grid: np.ndarray) -> float:
    values = np.array([_edge_objective(g, params) for g in grid])
    sign_change = np.nonzero(np.diff(np.sign(values)) != 0)[0]
    if sign_change.size == 0:
        raise NumericalError(
            "no stationary point of the Blue function in the scanned interval "
            f"[{grid[0]:.6g}, {grid[-1]:.6g}]"
        )
    k = sign_change[0]
    return brentq(_edge_objective, grid[k], grid[k + 1], args=(params,), xtol=1e-14, rtol=1e-15)


def spectral_edges(params: LsdParams) -> tuple[float, float]:
    """Support edges of the limiting density.

    The edges are the values of the Blue function at its stationary points on
    the real axis: the upper edge comes from the branch ``g in (0, 1/alpha)``,
    the lower edge from the negative axis. Raises
    :class:`~emacov.errors.NumericalError` when bracketing fails (the negative
    branch disappears for q >= 1, where an atom at zero replaces the lower
    edge).
    """
    cap = 1.0 / params.alpha
    upper_scan = cap * (1.0 - np.geomspace(1e-12, 1.0 - 1e-9, 600))[::-1]
    g_plus = _bracketed_root(params, upper_scan)

    lower_scan = -np.geomspace(cap * 1e-9, cap * 1e12, 800)
    g_minus = _bracketed_root(params, lower_scan)

    lam_lo = blue_ema(g_minus, params).real
    lam_hi = blue_ema(g_plus, params).real
    if not lam_lo < lam_hi:
        raise NumericalError(f"edge solver returned a degenerate support [{lam_lo}, {lam_hi}]")
    return lam_lo, lam_hi


def lower_edge_smallq(q_e: float) -> float:
    """Small-q lower edge: the root of ``lam - log(lam) = q_e + 1`` in (0, 1].

    At ``q_e = 0`` the equation is tangent and the root is exactly 1; the root
    decreases (exponentially fast for large q_e) toward zero as q_e grows.
    """
    q_e = float(q_e)
    if q_e < 0.0 or not math.isfinite(q_e):
        raise ValueError(f"q_e must be finite and nonnegative, got {q_e}")
    if q_e == 0.0:
        return 1.0
    target = q_e + 1.0

    def f(lam: float) -> float:
        return lam - math.log(lam) - target

    lo = math.exp(-target - 1.0)  # f(lo) = lo + 1 > 0
    hi = 1.0  # f(1) = -q_e < 0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * hi:
            break
    return 0.5 * (lo + hi)


def default_grid(params: LsdParams, size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Evaluation grid spanning the support with margin.

    Logarithmically spaced below ``0.1 * upper_edge`` (the lower edge can sit
    exponentially close to zero) and linearly spaced above, covering
    ``[max(1e-6, 0.5 * lower_edge), 1.2 * upper_edge]``.
    """
    size = int(size)
    if size < 8:
        raise ValueError(f"grid size must be at least 8, got {size}")
    lam_lo, lam_hi = spectral_edges(params)
    lo = max(1e-6, 0.5 * lam_lo)
    hi = 1.2 * lam_hi
    split = 0.1 * lam_hi
    if lo < split:
        n_log = size // 3
        log_part = np.geomspace(lo, split, n_log, endpoint=False)
        lin_part = np.linspace(split, hi, size - n_log)
        return np.concatenate([log_part, lin_part])
    return np.linspace(lo, hi, size)
