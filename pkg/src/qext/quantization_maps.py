"""Hilb, FS, the Bergman function, the centre of mass and the T-operator.

Conventions: a form H has entries H_ab = <s_b, s_a>, so a basis change P with
P^* H P = I gives the orthonormal sections s'_i = sum_a P_ai s_a.  At a point,
the FS inner products of those sections are h(s'_i, s'_j) = conj(u_i) u_j for the
unit vector u returned by the quadrature scheme, and matrices of integrals such as
the centre of mass are assembled as sum w u u^*, matching the same index order
as H.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .hermitian_core import cholesky_lower, hermitize, is_diagonal, orthonormal_frame
from .toric_geometry import QuadratureScheme, Samples, ToricPotential


def gram(s: Samples, vec: np.ndarray | None = None) -> np.ndarray:
    """Weighted Gram matrix sum_m w_m u_m u_m^*, hermitized.

    For torus-invariant samples taken at theta = 0 only the diagonal is
    meaningful; the off-diagonal entries integrate to zero over the torus.
    """
    u = s.u if vec is None else vec
    if s.collapsed:
        return np.diag(s.weight @ np.abs(u) ** 2).astype(complex)
    G = (u.T * s.weight) @ u.conj()
    return hermitize(G)


def centre_of_mass(H: np.ndarray, scheme: QuadratureScheme) -> np.ndarray:
    """mu' = integral of h_FS(s'_i, s'_j) k^n omega_FS^n/n! in the H-orthonormal frame."""
    return gram(scheme.samples(H))


def bergman_samples(s: Samples, G: np.ndarray) -> np.ndarray:
    """Pointwise u^* G^{-1} u via the Cholesky factor of G (no explicit inverse)."""
    L = cholesky_lower(G, "L2 Gram matrix (quadrature under-resolved?)")
    z = sla.solve_triangular(L, s.u.T, lower=True)
    return np.sum(np.abs(z) ** 2, axis=0)


@dataclass
class MetricRep:
    """Metric h on L^k written as h^k = exp(-psi_k) FS(H_source)^k.

    potential, when given, is the invariant total potential F = k phi of h in
    log coordinates and fixes psi_k = F - log sum |s'_i|^2; otherwise h = FS(H).
    log_shift adds a constant to psi_k (the scaling h -> e^{-c} h).
    """

    H_source: np.ndarray
    scheme: QuadratureScheme
    potential: ToricPotential | None = None
    log_shift: float = 0.0

    def evaluate(self, angular=None):
        """Unit vectors, measure weights and conformal factor at the nodes.

        Returns (samples, psi) where the pointwise h^k inner products of the
        H_source-orthonormal sections are exp(-psi) conj(u_i) u_j and the
        weights are those of k^n omega_h^n / n!.
        """
        s = self.scheme.samples(self.H_source, angular=angular)
        if self.potential is None:
            return s, np.full(len(s.weight), self.log_shift)
        if not s.invariant:
            raise ValueError("a potential-based metric needs a diagonal source form")
        M = len(s.weight) // self.scheme.m
        F, _, hess = self.potential.derivatives(self.scheme.t, order=2)
        det = np.linalg.det(hess) if hess.shape[1] == 2 else hess[:, 0, 0]
        psi = np.repeat(F, M) - s.logy2 + self.log_shift
        w = np.repeat(self.scheme.wt * det, M) / M
        return Samples(u=s.u, tangent=s.tangent, weight=w, invariant=s.invariant, logy2=s.logy2, P=s.P,
                       collapsed=s.collapsed), psi

    def scaled(self, c: float) -> "MetricRep":
        """The metric e^c h (so h^k picks up e^{kc})."""
        return MetricRep(self.H_source, self.scheme, self.potential, self.log_shift - self.scheme.basis.k * c)


def fs(H: np.ndarray, scheme: QuadratureScheme) -> MetricRep:
    return MetricRep(np.asarray(H, dtype=complex), scheme)


def fs_norms(H: np.ndarray, scheme: QuadratureScheme, angular=None) -> np.ndarray:
    """|s'_i|^2_{FS(H)^k} at the nodes for the H-orthonormal sections (rows sum to 1)."""
    return np.abs(scheme.samples(H, angular=angular).u) ** 2


def _l2_gram(h: MetricRep, angular=None):
    s, psi = h.evaluate(angular)
    k = h.scheme.basis.k
    n = h.scheme.basis.n
    s_w = Samples(u=s.u * np.exp(-0.5 * psi)[:, None], tangent=s.tangent,
                  weight=s.weight / float(k) ** n, invariant=s.invariant, logy2=s.logy2, P=s.P,
                  collapsed=s.collapsed)
    return s_w, gram(s_w)


def hilb(h: MetricRep, angular=None) -> np.ndarray:
    """Hilb(h) = (N/V) integral h^k(s_a, s_b) omega_h^n / n!, in the reference basis."""
    b = h.scheme.basis
    _, G = _l2_gram(h, angular)
    P = orthonormal_frame(h.H_source)
    Pinv = np.linalg.inv(P)
    return hermitize((b.N / b.V) * Pinv.conj().T @ G @ Pinv)


def bergman(h: MetricRep, angular=None) -> tuple[np.ndarray, np.ndarray]:
    """Bergman function rho_k of h at the nodes, and rho_bar = (V/N) rho_k."""
    b = h.scheme.basis
    s_w, G = _l2_gram(h, angular)
    rho = bergman_samples(s_w, G)
    return rho, rho * b.V / b.N


def t_operator(H: np.ndarray, scheme: QuadratureScheme) -> np.ndarray:
    """Hilb(FS(H)); its fixed points are the balanced forms."""
    return hilb(fs(H, scheme))


def hilb_of_fs_in_frame(H: np.ndarray, scheme: QuadratureScheme, mu: np.ndarray | None = None) -> np.ndarray:
    """T(H) computed from the centre of mass: (N/(V k^n)) P^{-*} mu' P^{-1}."""
    b = scheme.basis
    if mu is None:
        mu = centre_of_mass(H, scheme)
    P = orthonormal_frame(H)
    Pinv = np.linalg.inv(P)
    return hermitize((b.N / b.knV) * Pinv.conj().T @ mu @ Pinv)


def balanced_residual(mu: np.ndarray, knV: float) -> float:
    """||mu' - (k^nV/N) I||_HS divided by k^nV/N."""
    N = mu.shape[0]
    c = knV / N
    return float(np.linalg.norm(mu - c * np.eye(N)) / c)


def is_invariant(H) -> bool:
    return is_diagonal(H)


def fs_log_ratio(H_new: np.ndarray, H_src: np.ndarray, scheme: QuadratureScheme, angular=None) -> np.ndarray:
    """log(FS(H_src)^k / FS(H_new)^k) at the nodes."""
    a = scheme.samples(H_new, angular=angular).logy2
    b = scheme.samples(H_src, angular=angular).logy2
    return a - b
