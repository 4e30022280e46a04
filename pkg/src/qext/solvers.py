"""Balanced T-iteration, the projected gradient flow of Z^A, the outer A-correction
loop for q-ext metrics and the modified T-operator."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .energies import (EnergyContext, compute_CA, delta_ZA, energy_ZA, energy_increment,
                       recenter_constant)
from .hermitian_core import (frame_to_form, geodesic_frame, hermitize, hs_norm, is_diagonal,
                             normalize_det, orthonormal_frame)
from .quantization_maps import balanced_residual, bergman_samples, centre_of_mass, gram, hilb_of_fs_in_frame
from .symmetry import LieData, project_perp
from .toric_geometry import Polytope, QuadratureScheme, build_toric_basis

log = logging.getLogger(__name__)


@dataclass
class FlowState:
    """Solver state plus its full history.

    residuals holds one record per step: outer index, inner step, ||pr_perp dZ^A||_HS,
    ||A~||_HS, |C_i - C_{i-1}|, the energy and elapsed seconds.
    """

    H: np.ndarray
    ctx: EnergyContext
    iter: int = 0
    residuals: list = field(default_factory=list)
    wallclock: float = 0.0
    status: str = "running"
    a_tilde_norms: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def warm_start(P: Polytope, k: int, profile: str = "fubini_study", seed: int = 0,
               amplitude: float = 0.0) -> np.ndarray:
    """Identity, or exp(eps D) for a seeded traceless diagonal D with ||eps D||_op = amplitude."""
    N = len(P.lattice_points(k))
    if profile == "fubini_study" or amplitude == 0:
        return np.eye(N, dtype=complex)
    if profile != "perturbed":
        raise ValueError(f"unknown warm-start profile {profile!r}")
    d = np.random.default_rng(seed).standard_normal(N)
    d -= d.mean()
    d *= amplitude / np.max(np.abs(d))
    return np.diag(np.exp(d)).astype(complex)


def solve_balanced(H0: np.ndarray, scheme: QuadratureScheme, tol: float = 1e-8, max_iter: int = 2000,
                   damping: float = 1.0) -> FlowState:
    """Iterate H <- T(H) until mu' is scalar to relative tolerance tol.

    With damping < 1 the update moves only that fraction of the way along the
    geodesic from H to T(H).
    """
    b = scheme.basis
    t0 = time.perf_counter()
    H = np.asarray(H0, dtype=complex)
    st = FlowState(H=H, ctx=EnergyContext.for_basis(b))
    for it in range(max_iter + 1):
        mu = centre_of_mass(H, scheme)
        res = balanced_residual(mu, b.knV)
        st.residuals.append({"outer": 0, "inner": it, "perp": res, "a_tilde": 0.0, "dC": 0.0,
                             "energy": float("nan"), "wallclock": time.perf_counter() - t0})
        st.H, st.iter = H, it
        if res < tol:
            st.status = "converged"
            break
        if it == max_iter:
            st.status = "stalled"
            break
        T = hilb_of_fs_in_frame(H, scheme, mu)
        if damping != 1.0:
            P = orthonormal_frame(H)
            w, U = np.linalg.eigh(hermitize(P.conj().T @ T @ P))
            T = geodesic_frame(H, (U * np.log(w)) @ U.conj().T, damping, P)
        H = normalize_det(T)
        if is_diagonal(H0):
            H = np.diag(np.real(np.diag(H))).astype(complex)
    st.wallclock = time.perf_counter() - t0
    return st


def _clean(H, invariant):
    return np.diag(np.real(np.diag(H))).astype(complex) if invariant else hermitize(H)


def gradient_flow_ZA(state: FlowState, scheme: QuadratureScheme, lie: LieData, tol: float | None = None,
                     max_steps: int = 20000, eta0: float = 1.0, mode: str = "l2",
                     armijo: float = 0.25, eta_max: float = 1e3) -> FlowState:
    """Geodesic Euler descent along -pr_perp(dZ^A) with the context frozen.

    The trace pairings tr(A_j dZ^A) with the generators are invariant along
    every geodesic, so the trace-orthogonal part alpha_hs of dZ^A never moves.
    Step control therefore uses the compensated energy Z^A - tr(alpha_hs log H),
    whose slope along -beta is exactly -||beta_hs||^2 for either splitting.  A
    step is accepted on sufficient decrease of that energy (Armijo with the
    given fraction); otherwise the step halves.  Accepted steps grow it by 1.2.
    """
    ctx = state.ctx
    if tol is None:
        tol = 1e-9 * ctx.scale
    t0 = time.perf_counter()
    H = state.H
    inv = is_diagonal(H)
    eta = min(state.info.get("eta", eta0), eta_max)
    energy = state.info.get("energy", 0.0)
    comp = state.info.get("energy_compensated", energy)
    mu = centre_of_mass(H, scheme)
    dz = delta_ZA(H, ctx, scheme, mu)
    split = project_perp(dz, lie, H, scheme, mode)
    fixed = project_perp(dz, lie, H, scheme, "hs")
    entry_g, entry_hs = split.alpha.copy(), fixed.alpha.copy()
    steps = 0
    status = "converged"
    history = state.info.setdefault("compensated_history", [])
    while True:
        beta = split.beta - np.trace(split.beta) / ctx.N * np.eye(ctx.N)
        res = hs_norm(beta)
        history.append(comp)
        state.residuals.append({"outer": state.iter, "inner": steps, "perp": res, "a_tilde": float("nan"),
                                "dC": float("nan"), "energy": energy,
                                "wallclock": state.wallclock + time.perf_counter() - t0})
        if res < tol:
            break
        if steps >= max_steps:
            status = "stalled"
            break
        gamma = hermitize(dz - fixed.alpha)
        slope = float(np.real(np.trace(beta @ gamma)))
        floor = 64 * np.finfo(float).eps * hs_norm(dz) * res * max(1.0, hs_norm(mu))
        while True:
            B = -eta * beta
            dE = energy_increment(H, B, ctx, scheme)
            dC = dE - float(np.real(np.trace(entry_hs @ B)))
            if dC <= -armijo * eta * slope + eta * floor:
                break
            eta *= 0.5
            if eta < 1e-12:
                status = "stalled"
                break
        if status == "stalled":
            break
        H = _clean(normalize_det(geodesic_frame(H, B, 1.0)), inv)
        energy += dE
        comp += dC
        eta = min(1.2 * eta, eta_max)
        steps += 1
        mu = centre_of_mass(H, scheme)
        dz = delta_ZA(H, ctx, scheme, mu)
        split = project_perp(dz, lie, H, scheme, mode)
        fixed = project_perp(dz, lie, H, scheme, "hs")
    state.H = H
    state.status = status
    state.info["energy"] = energy
    state.info["energy_compensated"] = comp
    state.info["pr_g_entry"] = entry_g
    state.info["pr_g_exit"] = split.alpha
    state.info["pr_g_hs_entry"] = entry_hs
    state.info["pr_g_hs_exit"] = fixed.alpha
    state.info["inner_steps"] = steps
    state.info["eta"] = eta
    state.wallclock += time.perf_counter() - t0
    return state


def _recentered_ctx(H, A, scheme, ctx):
    """Fresh C_A from the centre of mass, shifted so that dZ^A is traceless."""
    mu = centre_of_mass(H, scheme)
    C0 = compute_CA(A, mu, ctx)
    c0 = ctx.with_(A=A, C_A=C0)
    delta, _ = recenter_constant(A, C0, -delta_ZA(H, c0, scheme, mu), c0)
    return c0.with_(C_A=C0 + delta)


def solve_qext(H0: np.ndarray, scheme: QuadratureScheme, lie: LieData, A0: np.ndarray | None = None,
               tol: float = 1e-8, max_outer: int = 40, inner_tol: float | None = None,
               mode: str = "l2") -> FlowState:
    """Alternate the projected flow with the update A <- A + 2 pi k A~ until dZ^A vanishes."""
    b = scheme.basis
    t0 = time.perf_counter()
    N = b.N
    H = normalize_det(np.asarray(H0, dtype=complex))
    A = np.zeros((N, N), complex) if A0 is None else np.asarray(A0, dtype=complex)
    ctx = _recentered_ctx(H, A, scheme, EnergyContext.for_basis(b, A))
    st = FlowState(H=H, ctx=ctx)
    if inner_tol is None:
        inner_tol = min(1e-9 * ctx.scale, 0.1 * tol)
    st.info["energy"] = energy_ZA(H, ctx, scheme)
    st.info["energy_compensated"] = st.info["energy"]
    st.info["C_history"] = {0: ctx.C_A}
    for i in range(max_outer + 1):
        st.iter = i
        st = gradient_flow_ZA(st, scheme, lie, inner_tol, mode=mode)
        if st.status == "stalled":
            log.warning("inner flow stalled at outer step %d", i)
            break
        H = st.H
        dz = delta_ZA(H, st.ctx, scheme)
        total = hs_norm(dz)
        split = project_perp(dz, lie, H, scheme, mode)
        a_tilde = -split.alpha / st.ctx.scale
        st.a_tilde_norms.append(hs_norm(a_tilde))
        st.residuals[-1]["a_tilde"] = st.a_tilde_norms[-1]
        if total < tol:
            st.status = "converged"
            break
        if i == max_outer:
            st.status = "stalled"
            break
        A_new = st.ctx.A + 2 * np.pi * b.k * a_tilde
        H = normalize_det(H)
        ctx_new = _recentered_ctx(H, A_new, scheme, st.ctx)
        dC = abs(ctx_new.C_A - st.ctx.C_A)
        st.H, st.ctx = H, ctx_new
        st.info["energy"] = energy_ZA(H, ctx_new, scheme)
        st.info["energy_compensated"] = st.info["energy"]
        st.info["C_history"][i + 1] = ctx_new.C_A
        st.residuals[-1]["dC"] = dC
    st.wallclock = time.perf_counter() - t0
    return st


def _sqrt_pd(M):
    w, U = np.linalg.eigh(hermitize(M))
    return hermitize((U * np.sqrt(w)) @ U.conj().T)


def modified_t_operator(H: np.ndarray, ctx: EnergyContext, scheme: QuadratureScheme) -> np.ndarray:
    """Form whose orthonormal basis is sqrt(V/N) M^{-1/2} applied to an L2-orthonormal basis of FS(H).

    Here M = I + C_A I - A/2 pi k.  In the frame of H the new form is
    (N/V) G^{1/2} M G^{1/2} with G the L2 Gram matrix; A = 0 gives T(H).
    """
    b = scheme.basis
    G = centre_of_mass(H, scheme) / float(b.k) ** b.n
    R = _sqrt_pd(G)
    new = (b.N / b.V) * R @ ctx.modifier() @ R
    P = orthonormal_frame(H)
    return frame_to_form(P, hermitize(new))


def solve_modified_t(H0: np.ndarray, ctx: EnergyContext, scheme: QuadratureScheme, tol: float = 1e-8,
                     max_iter: int = 5000) -> FlowState:
    """Fixed-point iteration of the modified T-operator for a fixed context."""
    t0 = time.perf_counter()
    H = normalize_det(np.asarray(H0, dtype=complex))
    inv = is_diagonal(H)
    st = FlowState(H=H, ctx=ctx)
    for it in range(max_iter + 1):
        mu = centre_of_mass(H, scheme)
        res = hs_norm(mu - ctx.scale * ctx.modifier_inv())
        st.residuals.append({"outer": 0, "inner": it, "perp": res, "a_tilde": 0.0, "dC": 0.0,
                             "energy": float("nan"), "wallclock": time.perf_counter() - t0})
        st.H, st.iter = H, it
        if res < tol:
            st.status = "converged"
            break
        if it == max_iter:
            st.status = "stalled"
            break
        H = _clean(normalize_det(modified_t_operator(H, ctx, scheme)), inv)
    st.wallclock = time.perf_counter() - t0
    return st


def certificates(H: np.ndarray, ctx: EnergyContext, scheme: QuadratureScheme, lie: LieData | None = None) -> dict:
    """The three equivalent q-ext residuals plus the distance of dZ^A from the symmetry span.

    delta     ||dZ^A||_HS
    moment    ||mu' - (V k^n/N)(I + C I - A/2 pi k)^{-1}||_HS
    pointwise sup |rho_bar - sum (I + C I - A/2 pi k)_ij h(s_i, s_j)|
    perp      HS distance from dZ^A to the span of the generators
    """
    b = scheme.basis
    s = scheme.samples(H)
    mu = gram(s)
    Minv = ctx.modifier_inv()
    dz = hermitize(-mu + ctx.scale * Minv)
    out = {"delta": hs_norm(dz), "moment": hs_norm(mu - ctx.scale * Minv)}
    rho = float(b.k) ** b.n * bergman_samples(s, mu)
    rho_bar = rho * b.V / b.N
    M = ctx.modifier()
    rhs = np.real(np.sum(s.u.conj() * (s.u @ M.T), axis=1))
    out["pointwise"] = float(np.max(np.abs(rho_bar - rhs)))
    if lie is not None:
        mats = lie.in_frame(H)
        G = np.array([[np.real(np.trace(a @ c)) for c in mats] for a in mats])
        rhs_c = np.array([np.real(np.trace(a @ dz)) for a in mats])
        coef = np.linalg.solve(G, rhs_c)
        out["perp"] = hs_norm(dz - sum(c * a for c, a in zip(coef, mats)))
    return out


def default_basis(P: Polytope, k: int):
    return build_toric_basis(P, k)
