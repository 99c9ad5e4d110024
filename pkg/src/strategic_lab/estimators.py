"""Shared statistical primitives: empirical moments, OLS, eigenvalue utilities.

The OLS fit carries the minimum eigenvalue of the empirical second moment of
its design and the resulting fixed-design error bound ``d / (n * kappa_min)``
(expected squared coefficient error under unit-variance subgaussian noise),
so callers can see how well-conditioned their data was.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

# Relative eigenvalue cutoff below which a design counts as rank-deficient.
_RANK_TOL = 1e-12


def empirical_mean(samples: np.ndarray) -> np.ndarray:
    """Arithmetic mean of the rows of an (n, m) sample matrix."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 1:
        raise InvalidInputError("samples must be a nonempty (n, m) matrix")
    return samples.mean(axis=0)


def empirical_second_moment(samples: np.ndarray) -> np.ndarray:
    """Uncentered second moment ``(1/n) sum x_i x_i^T``; symmetric PSD."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 1:
        raise InvalidInputError("samples must be a nonempty (n, m) matrix")
    out = samples.T @ samples / samples.shape[0]
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class OlsFit:
    """Least-squares coefficients plus conditioning diagnostics.

    ``kappa_min`` is the smallest eigenvalue of ``(1/n) X^T X``;
    ``error_bound`` is ``d / (n * kappa_min)``, or ``inf`` on rank-deficient
    designs (where the coefficients are the minimum-norm solution).
    """

    coefficients: np.ndarray
    n_samples: int
    kappa_min: float
    error_bound: float


def ols_fit(X: np.ndarray, y: np.ndarray) -> OlsFit:
    """Ordinary least squares via a rank-revealing (SVD) solve."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise InvalidInputError("X must be a nonempty (n, d) matrix")
    n, d = X.shape
    if y.shape != (n,):
        raise InvalidInputError(f"y must have shape ({n},), got {y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidInputError("ols_fit requires finite inputs")

    coef, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    second = X.T @ X / n
    eigs = np.linalg.eigvalsh(0.5 * (second + second.T))
    kappa = float(max(eigs[0], 0.0))
    rank_deficient = eigs[-1] <= 0.0 or kappa <= eigs[-1] * _RANK_TOL
    bound = float("inf") if rank_deficient else d / (n * kappa)
    return OlsFit(coefficients=coef, n_samples=n, kappa_min=kappa, error_bound=bound)


def min_eigenvalue(S: np.ndarray, sym_tol: float = 1e-9) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue of a symmetric matrix and a unit eigenvector.

    The input is symmetrized before decomposition; asymmetry beyond
    ``sym_tol`` (relative to the matrix scale) is rejected.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidInputError("S must be a square matrix")
    _scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if not np.all(np.isfinite(S)):
        raise InvalidInputError("S must have finite entries")
    if np.max(np.abs(S - S.T)) > sym_tol * _scale:
        raise InvalidInputError("S is asymmetric beyond tolerance")
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    return float(vals[0]), vecs[:, 0].copy()
