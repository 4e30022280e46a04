"""Linear algebra on the cone of positive definite hermitian forms.

Forms are stored as dense complex matrices in the fixed reference basis of
sections.  Endomorphisms handed to the flow usually live in the
orthonormal frame of the current form; helpers below convert between the two.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack


class DefinitenessError(ValueError):
    """Raised when a matrix that must be positive definite is not."""

    def __init__(self, minor: int, what: str = "hermitian form"):
        self.minor = minor
        super().__init__(f"{what} is not positive definite: leading minor of order {minor} fails")


def hermitize(M: np.ndarray) -> np.ndarray:
    """Average a matrix with its conjugate transpose."""
    M = np.asarray(M)
    return 0.5 * (M + M.conj().T)


def cholesky_lower(H: np.ndarray, what: str = "hermitian form") -> np.ndarray:
    """Lower Cholesky factor L with H = L L^*, reporting the failing minor."""
    H = np.ascontiguousarray(hermitize(np.asarray(H, dtype=complex)))
    L, info = lapack.zpotrf(H, lower=1, clean=1)
    if info > 0:
        raise DefinitenessError(int(info), what)
    if info < 0:
        raise ValueError("invalid argument to Cholesky factorization")
    return L


def orthonormal_frame(H: np.ndarray) -> np.ndarray:
    """Basis change P with P^* H P = I.

    P = L^{-*} for the lower Cholesky factor L of H, so P is upper triangular
    with positive diagonal.  This is the unique such matrix, and it is exactly
    what Gram-Schmidt on the reference basis produces.
    """
    L = cholesky_lower(H)
    N = L.shape[0]
    Linv = sla.solve_triangular(L, np.eye(N, dtype=complex), lower=True)
    return Linv.conj().T


def frame_to_form(P: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Form whose matrix in the frame P is M, written in the reference basis."""
    Pinv = np.linalg.inv(P)
    return hermitize(Pinv.conj().T @ M @ Pinv)


def endo_to_frame(P: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Express an endomorphism of the reference basis in the frame P."""
    return np.linalg.solve(P, xi @ P)


def frame_to_endo(P: np.ndarray, xi_frame: np.ndarray) -> np.ndarray:
    return P @ xi_frame @ np.linalg.inv(P)


def expm_hermitian(M: np.ndarray) -> np.ndarray:
    """Matrix exponential (Pade 13 scaling and squaring), re-hermitized."""
    return hermitize(sla.expm(np.asarray(M, dtype=complex)))


def logm_pd(M: np.ndarray) -> np.ndarray:
    """Principal logarithm of a positive definite hermitian matrix."""
    w, U = np.linalg.eigh(hermitize(M))
    if np.any(w <= 0):
        raise DefinitenessError(int(np.argmax(w <= 0)) + 1, "matrix")
    return hermitize((U * np.log(w)) @ U.conj().T)


def geodesic_frame(H: np.ndarray, B_frame: np.ndarray, t: float, P: np.ndarray | None = None) -> np.ndarray:
    """Point e^{tB}H of the geodesic through H, with B given in the frame of H."""
    if P is None:
        P = orthonormal_frame(H)
    return frame_to_form(P, expm_hermitian(t * hermitize(B_frame)))


def geodesic_step(H: np.ndarray, B: np.ndarray, t: float) -> np.ndarray:
    """Geodesic e^{tB}H for an endomorphism B that is self-adjoint for H.

    In an H-orthonormal frame the result has matrix exp(t B~), B~ = P^{-1} B P.
    """
    H = np.asarray(H, dtype=complex)
    if t == 0:
        return H.copy()
    P = orthonormal_frame(H)
    return geodesic_frame(H, endo_to_frame(P, np.asarray(B, dtype=complex)), t, P)


def norms(xi: np.ndarray, H: np.ndarray) -> tuple[float, float]:
    """Hilbert-Schmidt and operator norm of xi measured in an H-orthonormal frame."""
    P = orthonormal_frame(H)
    xt = hermitize(endo_to_frame(P, np.asarray(xi, dtype=complex)))
    ev = np.linalg.eigvalsh(xt)
    hs = float(np.sqrt(np.sum(np.abs(xt) ** 2)))
    op = float(np.max(np.abs(ev))) if ev.size else 0.0
    return hs, op


def hs_norm(M: np.ndarray) -> float:
    """Frobenius norm of a matrix already written in an orthonormal frame."""
    return float(np.sqrt(np.sum(np.abs(M) ** 2)))


def normalize_det(H: np.ndarray) -> np.ndarray:
    """Rescale H to unit determinant."""
    sign, logdet = np.linalg.slogdet(H)
    return H * np.exp(-logdet.real / H.shape[0])


def is_diagonal(M: np.ndarray, tol: float = 0.0) -> bool:
    M = np.asarray(M)
    off = M - np.diag(np.diag(M))
    scale = max(float(np.max(np.abs(M))), 1e-300)
    return bool(np.max(np.abs(off), initial=0.0) <= tol * scale)
