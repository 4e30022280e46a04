"""Balancing energies Z and Z^A, their first variation, C_A bookkeeping and the Hessian."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .hermitian_core import expm_hermitian, hermitize, is_diagonal, logm_pd, orthonormal_frame
from .quantization_maps import centre_of_mass
from .toric_geometry import QuadratureScheme

log = logging.getLogger(__name__)

# Ratio between the second derivative of Z along e^{t xi} H and the L2 norm of
# the normal part of the projective field of xi.  Measured as 1 on P^1 at k = 2
# (at k = 1 both sides vanish identically) and frozen.
HESSIAN_FS_CONSTANT = 1.0


class ContextError(ValueError):
    pass


class RecenteringError(RuntimeError):
    pass


@dataclass
class EnergyContext:
    """Modification direction A (frame matrix, diagonal in the toric case) and constant C_A."""

    A: np.ndarray
    C_A: float
    k: int
    n: int
    N: int
    V: float
    H_ref: np.ndarray = field(repr=False, default=None)

    @classmethod
    def for_basis(cls, basis, A=None, C_A: float = 0.0, H_ref=None) -> "EnergyContext":
        N = basis.N
        A = np.zeros((N, N), complex) if A is None else np.asarray(A, dtype=complex)
        H_ref = np.eye(N, dtype=complex) if H_ref is None else np.asarray(H_ref, dtype=complex)
        return cls(A, float(C_A), basis.k, basis.n, N, basis.V, H_ref)

    @property
    def scale(self) -> float:
        """V k^n / N."""
        return self.V * float(self.k) ** self.n / self.N

    def modifier(self) -> np.ndarray:
        """I + C_A I - A / (2 pi k), checked positive definite."""
        M = hermitize((1.0 + self.C_A) * np.eye(self.N) - self.A / (2 * np.pi * self.k))
        ev = np.linalg.eigvalsh(M)
        if ev.min() <= 1e-8 * max(1.0, ev.max()):
            raise ContextError(f"I + C_A I - A/2 pi k is not safely positive definite (min eigenvalue {ev.min():.3e})")
        return M

    def modifier_inv(self) -> np.ndarray:
        w, U = np.linalg.eigh(self.modifier())
        return hermitize((U / w) @ U.conj().T)

    def with_(self, **kw) -> "EnergyContext":
        return replace(self, **kw)


def delta_ZA(H: np.ndarray, ctx: EnergyContext, scheme: QuadratureScheme, mu: np.ndarray | None = None) -> np.ndarray:
    """First variation -mu' + (V k^n/N)(I + C_A I - A/2 pi k)^{-1} in the H-orthonormal frame."""
    if mu is None:
        mu = centre_of_mass(H, scheme)
    return hermitize(-mu + ctx.scale * ctx.modifier_inv())


def _mu_in_frame(H, Q, scheme):
    """Centre of mass of FS(H) written in an arbitrary H-orthonormal frame Q."""
    P = orthonormal_frame(H)
    U = np.linalg.solve(P, Q)
    return hermitize(U.conj().T @ centre_of_mass(H, scheme) @ U)


def _simpson(f, a: float, b: float, panels: int) -> float:
    x = np.linspace(a, b, 2 * panels + 1)
    y = np.array([f(xi) for xi in x])
    h = (b - a) / (2 * panels)
    return float(h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum()))


def i_functional(H: np.ndarray, scheme: QuadratureScheme, H_ref: np.ndarray, panels: int = 21) -> float:
    """I(FS(H)) - I(FS(H_ref)), by integrating -tr(X mu') along the geodesic from H_ref to H."""
    P0 = orthonormal_frame(H_ref)
    X = logm_pd(P0.conj().T @ H @ P0)
    if not np.any(X):
        return 0.0
    diag = is_diagonal(H) and is_diagonal(H_ref)

    def integrand(s):
        E = expm_hermitian(-0.5 * s * X)
        Q = P0 @ E
        Hs = np.linalg.inv(Q).conj().T @ np.linalg.inv(Q)
        Hs = hermitize(Hs)
        if diag:
            Hs = np.diag(np.real(np.diag(Hs))).astype(complex)
            mu = centre_of_mass(Hs, scheme)
            return -float(np.real(np.sum(np.diag(X) * np.diag(mu))))
        mu = _mu_in_frame(Hs, Q, scheme)
        return -float(np.real(np.trace(X @ mu)))

    return _simpson(integrand, 0.0, 1.0, panels)


def log_term(H: np.ndarray, ctx: EnergyContext) -> float:
    """(V k^n / N) tr((I + C_A I - A/2 pi k)^{-1} log H), log taken relative to H_ref."""
    P0 = orthonormal_frame(ctx.H_ref)
    X = logm_pd(P0.conj().T @ H @ P0)
    if np.any(ctx.A) and not (is_diagonal(H) and is_diagonal(ctx.H_ref)):
        raise ContextError("Z^A with A != 0 is only defined on torus-invariant forms")
    return ctx.scale * float(np.real(np.trace(ctx.modifier_inv() @ X)))


def energy_ZA(H: np.ndarray, ctx: EnergyContext, scheme: QuadratureScheme, panels: int = 21) -> float:
    """Z^A(H) = I(FS(H)) + (V k^n/N) tr((I + C_A I - A/2 pi k)^{-1} log H), zero I-term at H_ref."""
    return i_functional(H, scheme, ctx.H_ref, panels) + log_term(H, ctx)


def energy_Z(H: np.ndarray, ctx: EnergyContext, scheme: QuadratureScheme, panels: int = 21) -> float:
    """The unmodified balancing energy (A = 0, C_A = 0)."""
    return energy_ZA(H, ctx.with_(A=np.zeros_like(ctx.A), C_A=0.0), scheme, panels)


def energy_increment(H: np.ndarray, B_frame: np.ndarray, ctx: EnergyContext, scheme: QuadratureScheme,
                     nodes: int = 4) -> float:
    """Z^A(e^{B}H) - Z^A(H) along the geodesic, B given in the frame of H.

    The slope tr(B dZ^A) is smooth in the geodesic parameter, so a Gauss rule
    with a few nodes is accurate far below the size of a typical step.
    """
    P = orthonormal_frame(H)
    B = hermitize(B_frame)
    Minv = ctx.modifier_inv()

    def integrand(s):
        E = expm_hermitian(-0.5 * s * B)
        Q = P @ E
        Qi = np.linalg.inv(Q)
        Hs = hermitize(Qi.conj().T @ Qi)
        if is_diagonal(H) and is_diagonal(B):
            Hs = np.diag(np.real(np.diag(Hs))).astype(complex)
        mu = _mu_in_frame(Hs, Q, scheme)
        return float(np.real(np.trace(B @ (-mu + ctx.scale * Minv))))

    x, w = np.polynomial.legendre.leggauss(nodes)
    return float(sum(0.5 * wi * integrand(0.5 * (xi + 1)) for xi, wi in zip(x, w)))


def compute_CA(A: np.ndarray, mu: np.ndarray, ctx: EnergyContext) -> float:
    """C_A = tr(A mu') / (2 pi k^{n+1} V); logs a warning if |C_A| exceeds ||A||_op / 2 pi k."""
    C = float(np.real(np.trace(A @ mu))) / (2 * np.pi * float(ctx.k) ** (ctx.n + 1) * ctx.V)
    bound = np.max(np.abs(np.linalg.eigvalsh(hermitize(A)))) / (2 * np.pi * ctx.k) if np.any(A) else 0.0
    if abs(C) > bound * (1 + 1e-9) + 1e-15:
        log.warning("C_A = %.6e violates the bound %.6e", C, bound)
    return C


def ca_bound_ok(A: np.ndarray, C: float, k: int) -> bool:
    bound = np.max(np.abs(np.linalg.eigvalsh(hermitize(A)))) / (2 * np.pi * k) if np.any(A) else 0.0
    return abs(C) <= bound * (1 + 1e-9) + 1e-15


def recenter_constant(A: np.ndarray, C0: float, E: np.ndarray, ctx: EnergyContext,
                      max_newton: int = 50) -> tuple[float, np.ndarray]:
    """Shift C0 by delta so that the error term E becomes traceless.

    Solves c U(delta) = c U(0) + tr(E) with U(delta) = tr((I + (C0 + delta) I - A/2 pi k)^{-1})
    and c = V k^n / N by Newton's method.  Returns delta and the traceless
    E_tf = c M_0^{-1} - c M_delta^{-1} + E.
    """
    N = ctx.N
    c = ctx.scale
    lam = 1.0 + C0 - np.linalg.eigvalsh(hermitize(A)) / (2 * np.pi * ctx.k)
    if lam.min() <= 0:
        raise ContextError("I + C0 I - A/2 pi k is not positive definite")
    trE = float(np.real(np.trace(E)))
    if abs(trE) > N / 4:
        log.warning("large trace %.3e in recentering", trE)
    target = c * np.sum(1 / lam) + trE
    if target <= 0:
        raise RecenteringError("trace shift has no solution inside the positive cone")
    delta = 0.0
    if trE != 0.0:
        for _ in range(max_newton):
            f = c * np.sum(1 / (lam + delta)) - target
            df = -c * np.sum(1 / (lam + delta) ** 2)
            step = f / df
            delta -= step
            if not np.isfinite(delta) or np.min(lam + delta) <= 0:
                raise RecenteringError("recentering left the positive cone")
            if abs(step) <= 1e-15 * max(1.0, abs(delta)):
                break
        else:
            raise RecenteringError("Newton iteration for the trace constant did not converge")
    ctx0 = ctx.with_(A=np.asarray(A, complex), C_A=C0)
    ctx1 = ctx.with_(A=np.asarray(A, complex), C_A=C0 + delta)
    E_tf = hermitize(c * ctx0.modifier_inv() - c * ctx1.modifier_inv() + E)
    if abs(delta) > 4 * abs(trE) / N * (1 + 1e-6) + 1e-300:
        log.warning("recentering shift %.3e exceeds 4|tr E|/N", delta)
    return delta, E_tf


def hessian_quadform(xi: np.ndarray, H: np.ndarray, scheme: QuadratureScheme) -> float:
    """tr(xi Hess xi): squared L2 norm of the normal part of the projective field of xi.

    xi is a frame matrix.  The normal part is taken against the span of the
    position vector and the tangent vectors of the embedded torus orbit.
    """
    xi = hermitize(np.asarray(xi, dtype=complex))
    if is_diagonal(xi) and is_diagonal(H):
        s = scheme.samples(H)
    elif is_diagonal(H):
        s = scheme.samples(H, angular=scheme.exact_angular())
    else:
        s = scheme.samples(H, angular=scheme.angular)
    u = s.u
    v = u @ xi.T
    v = v - np.sum(u.conj() * v, axis=1)[:, None] * u
    T = s.tangents()
    g = np.einsum("mia,mja->mij", T.conj(), T)
    b = np.einsum("mia,ma->mi", T.conj(), v)
    coef = np.linalg.solve(g, b[..., None])[..., 0]
    normal = v - np.einsum("mi,mia->ma", coef, T)
    val = np.sum(np.abs(normal) ** 2, axis=1)
    return HESSIAN_FS_CONSTANT * float(np.sum(s.weight * val))
