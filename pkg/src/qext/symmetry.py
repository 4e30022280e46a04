"""Torus symmetry data, Hamiltonians and the L2 splitting of traceless endomorphisms."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hermitian_core import endo_to_frame, hermitize, is_diagonal, orthonormal_frame
from .toric_geometry import QuadratureScheme, SectionBasis


class SymmetryDegeneracyError(ValueError):
    pass


@dataclass
class LieData:
    """Diagonal generators of the torus action, one per coordinate direction.

    The j-th generator acts on the section z^alpha by alpha_j minus the mean of
    alpha_j over the lattice points, so every generator is traceless.
    """

    basis: list
    gram_cache: np.ndarray | None = field(default=None, repr=False)
    stamp: object = field(default=None, repr=False)

    @classmethod
    def toric(cls, basis: SectionBasis) -> "LieData":
        e = basis.exponents.astype(float)
        mats = [np.diag(e[:, j] - e[:, j].mean()).astype(complex) for j in range(basis.n)]
        return cls(mats)

    @property
    def r(self) -> int:
        return len(self.basis)

    def in_frame(self, H: np.ndarray) -> list:
        """Generators written in the H-orthonormal frame (unchanged for diagonal H)."""
        if is_diagonal(H):
            return [A.copy() for A in self.basis]
        P = orthonormal_frame(H)
        return [endo_to_frame(P, A) for A in self.basis]

    def gram(self, H: np.ndarray, scheme: QuadratureScheme, mode: str = "l2") -> np.ndarray:
        """Pairing matrix of the generators at H; cached against the bytes of H."""
        key = (np.asarray(H).tobytes(), mode, id(scheme))
        if self.stamp != key or self.gram_cache is None:
            mats = self.in_frame(H)
            self.gram_cache = pairing_matrix(mats, mats, H, scheme, mode)
            self.stamp = key
        return self.gram_cache


def _samples_for(H, scheme: QuadratureScheme, mats) -> object:
    if all(is_diagonal(m) for m in mats):
        return scheme.samples(H)
    if is_diagonal(H):
        return scheme.samples(H, angular=scheme.exact_angular())
    return scheme.samples(H, angular=scheme.angular)


def pairing_matrix(left, right, H, scheme: QuadratureScheme, mode: str = "l2") -> np.ndarray:
    """Matrix of pairings between two lists of frame matrices."""
    if mode == "hs":
        return np.array([[float(np.real(np.trace(a.conj().T @ b))) for b in right] for a in left])
    if mode != "l2":
        raise ValueError(f"unknown pairing mode {mode!r}")
    s = _samples_for(H, scheme, list(left) + list(right))
    u = s.u
    if s.collapsed:
        # diagonal directions at an invariant form: a covariance under |u|^2
        p = np.abs(u) ** 2
        L = np.array([np.real(np.diag(a)) for a in left]).T
        R = np.array([np.real(np.diag(b)) for b in right]).T
        pL, pR = p @ L, p @ R
        wa = s.weight @ p
        return L.T @ (wa[:, None] * R) - (pL * s.weight[:, None]).T @ pR
    if np.any(np.sum(np.abs(u) ** 2, axis=1) == 0):
        raise ValueError("all sections vanish at a node (corrupted data)")
    XL = [_field(u, a) for a in left]
    XR = [_field(u, b) for b in right]
    out = np.empty((len(left), len(right)))
    for i, x in enumerate(XL):
        for j, y in enumerate(XR):
            out[i, j] = float(np.sum(s.weight * np.real(np.sum(x.conj() * y, axis=1))))
    return out


def _field(u: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Component of xi u orthogonal to u: the projective vector field at each node."""
    v = u @ xi.T
    return v - np.sum(u.conj() * v, axis=1)[:, None] * u


def projective_field_pairing(xi: np.ndarray, eta: np.ndarray, H: np.ndarray, scheme: QuadratureScheme) -> float:
    """L2 inner product of the projective fields of xi and eta (frame matrices)."""
    return float(pairing_matrix([np.asarray(xi, complex)], [np.asarray(eta, complex)], H, scheme)[0, 0])


@dataclass
class Split:
    alpha: np.ndarray
    beta: np.ndarray
    coeffs: np.ndarray
    trace: complex


def project_perp(xi: np.ndarray, lie: LieData, H: np.ndarray, scheme: QuadratureScheme, mode: str = "l2") -> Split:
    """Split xi = alpha + beta with alpha in the span of the generators and beta orthogonal.

    xi is a frame matrix.  Its trace part pairs to zero with everything and is
    left inside beta; the trace is reported separately.
    """
    xi = np.asarray(xi, dtype=complex)
    N = xi.shape[0]
    tr = np.trace(xi)
    xi0 = xi - tr / N * np.eye(N)
    mats = lie.in_frame(H)
    G = lie.gram(H, scheme, mode)
    rhs = pairing_matrix([xi0], mats, H, scheme, mode)[0]
    ev = np.linalg.eigvalsh(G)
    if ev[0] <= 1e-12 * max(ev[-1], 1e-300):
        raise SymmetryDegeneracyError("generator Gram matrix is singular for this embedding")
    L = np.linalg.cholesky(G)
    c = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    alpha = sum((cj * A for cj, A in zip(c, mats)), np.zeros_like(xi))
    return Split(alpha=alpha, beta=xi - alpha, coeffs=c, trace=tr)


def hamiltonian_of(A: np.ndarray, H: np.ndarray, scheme: QuadratureScheme, angular=None) -> np.ndarray:
    """psi = -(1/2 pi k) sum A_ij h_FS(s_i, s_j) at the nodes, with zero mean.

    A is hermitian in the H-orthonormal frame.
    """
    s = scheme.samples(H, angular=angular)
    A = hermitize(np.asarray(A, dtype=complex))
    k = scheme.basis.k
    val = np.real(np.sum(s.u.conj() * (s.u @ A.T), axis=1))
    psi = -val / (2 * np.pi * k)
    return psi - np.sum(s.weight * psi) / np.sum(s.weight)
