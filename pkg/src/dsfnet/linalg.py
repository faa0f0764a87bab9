"""Dense symmetric linear algebra for covariance-based spatial features.

Covariance estimation, Oracle Approximating Shrinkage, symmetric
eigendecomposition, matrix logarithm (exact and truncated Taylor series)
and upper-triangle vectorization. All functions are pure and operate on
float64 numpy arrays.
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

EIG_FLOOR = 1e-12
SYM_TOL = 1e-9


class DegenerateInputError(ValueError):
    """Input carries too few samples or no variance to work with."""


class NotPSDError(ValueError):
    """Matrix has a significantly negative eigenvalue."""


@dataclass(frozen=True)
class SymEigDecomp:
    """Eigendecomposition S = U diag(eigenvalues) U^T, eigenvalues descending."""

    eigenvalues: NDArray
    eigenvectors: NDArray


@dataclass(frozen=True)
class ShrunkCovariance:
    """OAS-shrunk covariance along with the shrinkage coefficient used."""

    matrix: NDArray
    rho: float
    degenerate: bool = False


def _check_finite(S: NDArray, name: str = "matrix") -> None:
    if not np.all(np.isfinite(S)):
        raise ValueError(f"{name} contains non-finite entries")


def sample_covariance(X: NDArray) -> NDArray:
    """Unbiased covariance X_c X_c^T / (T-1) of a C x T window.

    Rows are mean-centered first, so the zero-mean assumption holds by
    construction. Output is exactly symmetric.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 2:
        raise DegenerateInputError(
            f"need a 2-D window with at least 2 samples, got shape {X.shape}"
        )
    _check_finite(X, "window")
    Xc = X - X.mean(axis=1, keepdims=True)
    S = Xc @ Xc.T / (X.shape[1] - 1)
    return (S + S.T) / 2.0


def oas_shrink(S: NDArray, n_samples: int) -> ShrunkCovariance:
    """Oracle Approximating Shrinkage toward the scaled identity.

    shrunk = (1 - rho) S + rho (tr(S)/C) I with

        rho = min(1, [(1 - 2/C) tr(S^2) + tr(S)^2]
                     / [(n + 1 - 2/C) (tr(S^2) - tr(S)^2 / C)])

    Guarantees an SPD output whenever tr(S) > 0. A zero-trace input is
    degenerate and maps to EIG_FLOOR * I.
    """
    S = np.asarray(S, dtype=np.float64)
    C = S.shape[0]
    if S.shape != (C, C):
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    if n_samples < 2:
        raise DegenerateInputError("OAS needs n_samples >= 2")
    _check_finite(S)

    tr_S = float(np.trace(S))
    if tr_S <= 0.0:
        return ShrunkCovariance(EIG_FLOOR * np.eye(C), rho=1.0, degenerate=True)

    tr_S2 = float(np.sum(S * S))
    num = (1.0 - 2.0 / C) * tr_S2 + tr_S**2
    den = (n_samples + 1.0 - 2.0 / C) * (tr_S2 - tr_S**2 / C)
    rho = 1.0 if den <= 0.0 else min(1.0, num / den)

    mu = tr_S / C
    shrunk = (1.0 - rho) * S + rho * mu * np.eye(C)
    return ShrunkCovariance((shrunk + shrunk.T) / 2.0, rho=rho)


def sym_eig(S: NDArray) -> SymEigDecomp:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""
    S = np.asarray(S, dtype=np.float64)
    _check_finite(S)
    asym = float(np.max(np.abs(S - S.T))) if S.size else 0.0
    if asym >= SYM_TOL:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    Ssym = (S + S.T) / 2.0
    w, U = np.linalg.eigh(Ssym)
    order = np.argsort(w)[::-1]
    return SymEigDecomp(eigenvalues=w[order], eigenvectors=U[:, order])


def matrix_log_eig(S: NDArray) -> NDArray:
    """Matrix logarithm of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues at or below EIG_FLOOR have their logarithm replaced by 0
    (flat-channel rule); eigenvalues below -SYM_TOL raise NotPSDError.
    """
    dec = sym_eig(S)
    w = dec.eigenvalues
    if np.any(w < -SYM_TOL):
        raise NotPSDError(f"matrix has negative eigenvalue {w.min():.3g}")
    logw = np.where(w > EIG_FLOOR, np.log(np.maximum(w, EIG_FLOOR)), 0.0)
    out = (dec.eigenvectors * logw) @ dec.eigenvectors.T
    return (out + out.T) / 2.0


def matrix_exp_eig(S: NDArray) -> NDArray:
    """Matrix exponential of a symmetric matrix via eigendecomposition."""
    dec = sym_eig(S)
    out = (dec.eigenvectors * np.exp(dec.eigenvalues)) @ dec.eigenvectors.T
    return (out + out.T) / 2.0


def matrix_log_taylor(A: NDArray, n_terms: int) -> NDArray:
    """Truncated Taylor-series matrix logarithm for SPD matrices.

    log(A) = sum_{k=1..n} (-1)^{k+1} (A_hat - I)^k / k + log(s) I,
    where A_hat = A / s and s = ||A||_F / 2. Halving the Frobenius norm
    before normalizing centers the spectrum inside the convergence disk
    ||A_hat - I|| < 1.
    """
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    A = np.asarray(A, dtype=np.float64)
    _check_finite(A)
    C = A.shape[0]
    s = float(np.linalg.norm(A, "fro")) / 2.0
    if s <= 0.0:
        raise DegenerateInputError("matrix has zero Frobenius norm")
    D = A / s - np.eye(C)
    acc = np.zeros_like(A)
    term = np.eye(C)
    for k in range(1, n_terms + 1):
        term = term @ D
        acc += ((-1.0) ** (k + 1)) * term / k
    return acc + np.log(s) * np.eye(C)


def vec_upper(S: NDArray) -> NDArray:
    """Row-major flattening of the diagonal and strict upper triangle.

    Returns C(C+1)/2 values (S11, S12, ..., S1C, S22, ...); no off-diagonal
    rescaling is applied.
    """
    S = np.asarray(S, dtype=np.float64)
    C = S.shape[0]
    iu = np.triu_indices(C)
    return S[iu]


def unvec_upper(v: NDArray) -> NDArray:
    """Inverse of vec_upper: rebuild the symmetric matrix."""
    v = np.asarray(v, dtype=np.float64)
    m = len(v)
    C = int(round((np.sqrt(8 * m + 1) - 1) / 2))
    if C * (C + 1) // 2 != m:
        raise ValueError(f"length {m} is not a triangular number")
    S = np.zeros((C, C))
    iu = np.triu_indices(C)
    S[iu] = v
    return S + np.triu(S, k=1).T
