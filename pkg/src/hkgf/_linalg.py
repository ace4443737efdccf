"""Small symmetric-matrix helpers shared across the package."""

import numpy as np

from hkgf.errors import DomainError


def sym(M):
    """Return the symmetric part (M + M^T)/2; broadcasts over leading axes."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def check_symmetric(M, name, rtol=1e-12):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError(f"{name} must be a square matrix, got shape {M.shape}")
    scale = max(np.linalg.norm(M), 1.0)
    if np.linalg.norm(M - M.T) > rtol * scale:
        raise DomainError(f"{name} is not symmetric within {rtol:g} relative tolerance")
    return sym(M)


def cholesky_spd(M, name="matrix"):
    """Cholesky factor of a symmetric matrix; failure means "not SPD".

    The error reports the smallest eigenvalue so callers can see how far off
    the matrix is.
    """
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        lam = np.linalg.eigvalsh(sym(M))[0]
        raise DomainError(f"{name} is not positive definite (smallest eigenvalue {lam:.6g})") from None


def logdet_spd(M, name="matrix"):
    L = cholesky_spd(M, name)
    return 2.0 * np.sum(np.log(np.diag(L)))


def inv_spd(M, name="matrix"):
    L = cholesky_spd(M, name)
    Linv = np.linalg.solve(L, np.eye(M.shape[0]))
    return sym(Linv.T @ Linv)


def sym_fn(M, fn):
    """Apply a scalar function to a symmetric matrix through its eigendecomposition."""
    w, V = np.linalg.eigh(sym(M))
    return sym((V * fn(w)) @ V.T)


def sqrtm_spd(M):
    return sym_fn(M, np.sqrt)


def inv_sqrtm_spd(M):
    return sym_fn(M, lambda w: 1.0 / np.sqrt(w))


def expm_sym(M):
    return sym_fn(M, np.exp)


def frob(A, B=None):
    """Frobenius pairing A:B (or |A|^2 when B is omitted)."""
    if B is None:
        B = A
    return float(np.sum(np.asarray(A) * np.asarray(B)))
