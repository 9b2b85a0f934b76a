"""Symmetric eigendecomposition and rotation-equivariant reconstruction.

Every estimator in this package works by decomposing a symmetric covariance
matrix, replacing its eigenvalues, and rebuilding the matrix on the original
eigenvectors. This module owns that round trip plus the CSV serialization of
covariance matrices.

Conventions: eigenvalues are always sorted ascending, and each eigenvector's
sign is fixed so that its first nonzero coordinate is positive (eigensolvers
return arbitrary signs; the convention makes cross-validation folds and tests
reproducible).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "SymmetricSpectrum",
    "eigh",
    "reconstruct",
    "validate_covariance",
    "save_covariance_csv",
    "load_covariance_csv",
]

# Asymmetry beyond this (absolute, entrywise) is rejected rather than repaired.
SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class SymmetricSpectrum:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    ``eigenvectors[:, i]`` is the unit eigenvector paired with ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]


def _as_square_matrix(matrix) -> np.ndarray:
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def validate_covariance(matrix, *, require_pd: bool = False) -> np.ndarray:
    """Check symmetry and finiteness; optionally positive-definiteness.

    Returns the validated array (float64, not copied when already conforming).
    """
    a = _as_square_matrix(matrix)
    if not np.all(np.isfinite(a)):
        raise ValueError("covariance matrix contains non-finite entries")
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    if asym > SYMMETRY_TOL:
        raise ValueError(f"matrix is asymmetric beyond tolerance: max |A - A'| = {asym:.3e}")
    if require_pd:
        smallest = np.linalg.eigvalsh(a)[0]
        if smallest <= 0.0:
            raise ValueError(f"matrix is not positive-definite (smallest eigenvalue {smallest:.3e})")
    return a


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip eigenvector signs so the first nonzero coordinate of each column is positive."""
    v = vectors.copy()
    n = v.shape[1]
    # Treat coordinates below a dimension-scaled epsilon as zero when locating
    # the leading entry, so round-off does not make the convention unstable.
    tol = np.finfo(np.float64).eps * v.shape[0] * 16
    for j in range(n):
        col = v[:, j]
        nz = np.nonzero(np.abs(col) > tol)[0]
        lead = nz[0] if nz.size else int(np.argmax(np.abs(col)))
        if col[lead] < 0.0:
            v[:, j] = -col
    return v


def eigh(matrix) -> SymmetricSpectrum:
    """Eigendecomposition of a symmetric matrix with deterministic ordering.

    Eigenvalues come back ascending; eigenvectors are orthonormal columns with
    the package-wide sign convention applied. Rejects non-finite input and
    asymmetry beyond ``SYMMETRY_TOL``.
    """
    a = validate_covariance(matrix)
    a = 0.5 * (a + a.T)
    values, vectors = np.linalg.eigh(a)
    return SymmetricSpectrum(eigenvalues=values, eigenvectors=_fix_signs(vectors))


def reconstruct(spectrum: SymmetricSpectrum, new_eigenvalues) -> np.ndarray:
    """Rebuild ``V diag(xi) V'`` with replaced eigenvalues.

    The eigenvectors are untouched, so the output commutes with the source
    matrix and its trace equals ``sum(new_eigenvalues)``.
    """
    xi = np.asarray(new_eigenvalues, dtype=np.float64)
    if xi.ndim != 1 or xi.shape[0] != spectrum.dim:
        raise ValueError(f"expected {spectrum.dim} eigenvalues, got shape {xi.shape}")
    if not np.all(np.isfinite(xi)):
        raise ValueError("replacement eigenvalues contain non-finite entries")
    v = spectrum.eigenvectors
    out = (v * xi) @ v.T
    return 0.5 * (out + out.T)


def save_covariance_csv(path, matrix, header: str | None = None) -> None:
    """Write an N x N covariance matrix as headerless CSV at full precision.

    ``header`` (optional) is emitted as ``#``-prefixed comment lines before the
    data; loaders skip comments, so the payload stays headerless.
    """
    a = _as_square_matrix(matrix)
    np.savetxt(path, a, fmt="%.17g", delimiter=",", header=header or "", comments="# ")


def load_covariance_csv(path) -> np.ndarray:
    """Read a covariance matrix written by :func:`save_covariance_csv`."""
    a = np.loadtxt(Path(path), delimiter=",", comments="#", ndmin=2)
    return _as_square_matrix(a)
