"""Dense complex/real matrix kernels shared by every other module.

All functions are pure and operate on numpy arrays.  ``vec`` is column-major
so that ``vec(A @ X @ B) == kron(B.T, A) @ vec(X)``.
"""

import numpy as np
import scipy.linalg as sla

# eigenvalues in [-PSD_CLAMP * ||A||, 0) are treated as round-off and clamped
PSD_CLAMP = 1e-10
PSD_REJECT = 1e-8


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


class NotPsd(ValueError):
    pass


def hermitian_part(A):
    return 0.5 * (A + A.conj().T)


def gram(X):
    """Return ``X @ X^H``, written ``[X]^2`` in the docstrings."""
    X = np.asarray(X)
    return X @ X.conj().T


def inner(A, B):
    """Frobenius inner product ``trace(A^H B)``."""
    return np.vdot(A, B)


def logdet_hpd(A):
    """Natural log-determinant of a Hermitian positive definite matrix.

    A Cholesky factorization is tried first; if it fails the eigenvalues are
    used, and any non-positive eigenvalue raises ``NotPositiveDefinite``.
    """
    A = hermitian_part(np.atleast_2d(np.asarray(A)))
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return logdet_eig(A)
    return float(2.0 * np.sum(np.log(np.diag(L).real)))


def logdet_eig(A):
    w = np.linalg.eigvalsh(hermitian_part(np.atleast_2d(A)))
    if w[0] <= 0.0:
        raise NotPositiveDefinite(f"smallest eigenvalue {w[0]:.3e} is not positive")
    return float(np.sum(np.log(w)))


def psd_clamped_eigh(A):
    """Hermitian eigendecomposition with tiny negative eigenvalues set to zero."""
    A = hermitian_part(np.atleast_2d(np.asarray(A)))
    w, U = np.linalg.eigh(A)
    scale = max(float(np.max(np.abs(w))), np.finfo(float).tiny) if w.size else 1.0
    if w.size and w[0] < -PSD_REJECT * scale:
        raise NotPsd(f"smallest eigenvalue {w[0]:.3e} below -{PSD_REJECT:g} * {scale:.3e}")
    return np.clip(w, 0.0, None), U


def is_psd(A, tol=PSD_CLAMP):
    A = np.atleast_2d(np.asarray(A))
    if not np.allclose(A, A.conj().T, atol=1e-12 * max(1.0, np.abs(A).max())):
        return False
    w = np.linalg.eigvalsh(hermitian_part(A))
    return bool(w[0] >= -tol * max(np.abs(w).max(), 1e-300))


def psd_sqrt(A):
    """Hermitian PSD square root ``S`` with ``S @ S == A``."""
    w, U = psd_clamped_eigh(A)
    S = (U * np.sqrt(w)) @ U.conj().T
    return S if np.iscomplexobj(A) else S.real


def kron(A, B):
    return np.kron(A, B)


def vec(X):
    """Stack the columns of ``X`` into a 1-D array."""
    return np.asarray(X).reshape(-1, order="F")


def unvec(v, shape):
    return np.asarray(v).reshape(shape, order="F")


def hpd_factor(A, jitter=1e-12):
    """Cholesky factor of a Hermitian PD matrix, adding diagonal jitter on failure.

    The jitter is ``jitter * trace(A) / n`` and is escalated tenfold up to six
    times before giving up.
    """
    A = hermitian_part(np.atleast_2d(np.asarray(A)))
    n = A.shape[0]
    eps = jitter * max(float(np.trace(A).real) / n, np.finfo(float).tiny)
    for attempt in range(7):
        try:
            shift = 0.0 if attempt == 0 else eps * 10 ** (attempt - 1)
            return sla.cho_factor(A + shift * np.eye(n), lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefinite("matrix is not positive definite even after jitter")


def hpd_solve(A, B, jitter=1e-12):
    """Solve ``A Z = B`` for Hermitian PD ``A`` without forming the inverse."""
    return sla.cho_solve(hpd_factor(A, jitter), B, check_finite=False)


def hpd_inv(A, jitter=1e-12):
    """Explicit inverse of an HPD matrix; for small expansion-point matrices only."""
    A = np.atleast_2d(A)
    inv = hpd_solve(A, np.eye(A.shape[0], dtype=A.dtype), jitter)
    return hermitian_part(inv)


def complex_to_real_form(C):
    """Real symmetric ``[[Re, -Im], [Im, Re]]`` representation of Hermitian ``C``.

    For ``z = [Re w; Im w]`` this gives ``z^T R z == w^H C w``.
    """
    Cr, Ci = C.real, C.imag
    return np.block([[Cr, -Ci], [Ci, Cr]])
