"""Checks tying solver output to the Bergman expansion, the inverse centre of mass
identity, toric scalar curvature and the large-k extremal limit."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .energies import hessian_quadform
from .hermitian_core import hermitize, hs_norm, is_diagonal
from .quantization_maps import MetricRep, bergman, bergman_samples, centre_of_mass, fs
from .symmetry import LieData, hamiltonian_of, pairing_matrix
from .toric_geometry import (Polytope, QuadratureScheme, SectionBasis, ToricPotential, build_toric_basis,
                             default_scheme)

log = logging.getLogger(__name__)

# S = SCALAR_CURVATURE_CONSTANT * S_abreu, where S_abreu = -sum d^2 u^{ij}/dx_i dx_j
# (equal to 2 on the unit interval).  Fixed by requiring 4 pi k (rho_bar - 1) -> S - S_bar.
SCALAR_CURVATURE_CONSTANT = 2 * np.pi


class CurvatureSingularityError(ArithmeticError):
    pass


@dataclass
class SweepReport:
    """Per-k rows of raw numbers plus verdicts recomputable from them."""

    k_values: list
    rows: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.k_values, self.k_values[1:])):
            raise ValueError("k_values must be strictly increasing")

    def verdict(self, key: str, passed, tolerance, value, **raw):
        self.verdicts[key] = {"passed": passed, "tolerance": tolerance, "value": value, **raw}

    @property
    def passed(self) -> bool:
        return all(v["passed"] is True for v in self.verdicts.values())

    @property
    def inconclusive(self) -> bool:
        return any(v["passed"] is None for v in self.verdicts.values())

    def to_document(self) -> dict:
        return {"name": self.name, "k_values": list(self.k_values), "rows": self.rows, "verdicts": self.verdicts}


def fit_loglog_slope(ks, errs) -> float:
    """Least squares slope of log(err) against log(k)."""
    return float(np.polyfit(np.log(np.asarray(ks, float)), np.log(np.asarray(errs, float)), 1)[0])


def check_inverse_moment_identity(H: np.ndarray, scheme: QuadratureScheme) -> float:
    """sup |rho_k(FS(H)) - k^n u^* mu'^{-1} u| / (N/V).

    The Bergman side is computed on the given rule and the centre of mass on
    the rule refined twice, so the residual measures quadrature error only.
    """
    b = scheme.basis
    rho, _ = bergman(fs(H, scheme))
    mu = centre_of_mass(H, scheme.refined(2))
    rhs = float(b.k) ** b.n * bergman_samples(scheme.samples(H), mu)
    return float(np.max(np.abs(rho - rhs)) / (b.N / b.V))


def toric_scalar_curvature(potential, t: np.ndarray, basis: SectionBasis | None = None,
                           normalization: str = "kahler") -> np.ndarray:
    """Scalar curvature at log coordinates t of the invariant metric with Kahler potential phi.

    potential is a ToricPotential (its derivatives are those of phi) or a
    diagonal form H, in which case phi = (1/k) log sum |s'_i|^2 on the given
    basis.  With g = Hess phi in t, S_abreu = -tr(g^{-1} Hess log det g).
    normalization "abreu" returns S_abreu, "kahler" multiplies by
    SCALAR_CURVATURE_CONSTANT.
    """
    if not isinstance(potential, ToricPotential):
        if basis is None:
            raise ValueError("a form needs its section basis")
        potential = ToricPotential.from_form(basis, potential, level=1)
    _, _, g, g3, g4 = potential.derivatives(t, order=4)
    det = np.linalg.det(g)
    if np.any(~np.isfinite(det)) or np.any(det <= 1e-300):
        bad = int(np.argmax(~(det > 1e-300)))
        raise CurvatureSingularityError(f"degenerate potential Hessian at node {bad}")
    gi = np.linalg.inv(g)
    # d_i d_j log det g = tr(g^{-1} g_ij) - tr(g^{-1} g_i g^{-1} g_j)
    second = np.einsum("mab,mbaij->mij", gi, g4)
    gg = np.einsum("mab,mbci->maci", gi, g3)
    second = second - np.einsum("maci,mcaj->mij", gg, gg)
    S = -np.einsum("mij,mij->m", gi, second)
    if normalization == "abreu":
        return S
    if normalization != "kahler":
        raise ValueError(f"unknown normalization {normalization!r}")
    return SCALAR_CURVATURE_CONSTANT * S


def perturbed_potential(P: Polytope, seed: int = 0, amplitude: float = 0.2, base_level: int = 2) -> ToricPotential:
    """phi = (1/m) log sum c_a e^{<a,t> - d_a} over the level-m lattice points, ||d||_inf = amplitude."""
    b = build_toric_basis(P, base_level)
    d = np.random.default_rng(seed).standard_normal(b.N)
    d -= d.mean()
    d *= amplitude / np.max(np.abs(d))
    return ToricPotential.from_form(b, np.diag(np.exp(d)).astype(complex), level=1)


def _metric_at_level(potential: ToricPotential, P: Polytope, k: int, resolution=None):
    b = build_toric_basis(P, k)
    q = default_scheme(b, resolution)
    pot_k = ToricPotential(potential.alpha, potential.logw, potential.scale * k)
    return b, q, MetricRep(np.eye(b.N, dtype=complex), q, pot_k)


def check_bergman_first_order(P: Polytope, potential: ToricPotential, k_values, resolution=None,
                              slope_tol: float = -0.8) -> SweepReport:
    """sup |4 pi k (rho_bar_k - 1) - (S - S_bar)| over k for a fixed metric phi.

    The fitted log-log slope must be at most slope_tol; the sweep is
    inconclusive unless max(k)/min(k) >= 4.
    """
    ks = sorted(int(k) for k in k_values)
    rep = SweepReport(ks, name="bergman_first_order")
    errs = []
    for k in ks:
        b, q, h = _metric_at_level(potential, P, k, resolution)
        _, rho_bar = bergman(h)
        s, _ = h.evaluate()
        S = toric_scalar_curvature(potential, q.t)
        S_bar = float(np.sum(s.weight * S) / np.sum(s.weight))
        err = float(np.max(np.abs(4 * np.pi * k * (rho_bar - 1) - (S - S_bar))))
        errs.append(err)
        rep.rows.append({"k": k, "N": b.N, "resolution": q.resolution, "sup_error": err, "S_bar": S_bar,
                         "sup_S_dev": float(np.max(np.abs(S - S_bar)))})
    ratios = [e1 / e0 for e0, e1 in zip(errs, errs[1:])]
    if len(ks) < 2 or ks[-1] < 4 * ks[0]:
        rep.verdict("slope", None, slope_tol, None, reason="k range spans less than a factor 4")
    else:
        slope = fit_loglog_slope(ks, errs)
        rep.verdict("slope", slope <= slope_tol, slope_tol, slope, errors=errs)
    rep.verdict("monotone", all(r < 1 for r in ratios) if ratios else None, "decreasing", ratios)
    return rep


def affine_fit(S: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Weighted least squares fit of S by c0 + <c, x>; returns coefficients and residual."""
    X = np.column_stack([np.ones(len(S)), x])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], S * sw, rcond=None)
    return coef, S - X @ coef


def extremal_profile(H: np.ndarray, A: np.ndarray, scheme: QuadratureScheme) -> dict:
    """S of FS(H) against its affine fit in moment coordinates, and the Hamiltonian of A."""
    b = scheme.basis
    phi = ToricPotential.from_form(b, H, level=1)
    _, x, g = phi.derivatives(scheme.t, order=2)
    w = scheme.wt * (np.linalg.det(g) if b.n == 2 else g[:, 0, 0])
    S = toric_scalar_curvature(phi, scheme.t)
    coef, r = affine_fit(S, x, w)
    mass = float(np.sum(w))
    S_bar = float(np.sum(w * S) / mass)
    ham = 4 * np.pi * b.k * hamiltonian_of(np.diag(np.diag(A)), H, scheme)
    ham_coef, _ = affine_fit(ham, x, w)
    return {"rms": float(np.sqrt(np.sum(w * r ** 2) / mass)), "sup": float(np.max(np.abs(r))),
            "coef": coef.tolist(), "hamiltonian_coef": ham_coef.tolist(),
            "hamiltonian_error": float(np.max(np.abs(ham - (S - S_bar)))), "S_bar": S_bar}


def check_semiclassical_extremal(sweep, floor: float = 1e-6, stabilize: float = 0.1) -> SweepReport:
    """Distance of S(FS(H_inf(k))) from affine functions of the moment variable over a q-ext sweep.

    sweep is a list of (k, FlowState, scheme).  Unconverged states are
    dropped with a warning.  Distances within floor of each other count as
    equal, since the solver tolerance limits how well they are resolved.  The
    extremal field is read off the linear part of the affine fit; its
    successive relative change must stay below stabilize.  The linear part of
    4 pi k psi_{A_inf} is reported against it as a cross-check.
    """
    kept = []
    for k, st, q in sweep:
        if not st.converged:
            log.warning("excluding k = %d: flow status %s", k, st.status)
            continue
        kept.append((k, st, q))
    kept.sort(key=lambda e: e[0])
    rep = SweepReport([k for k, _, _ in kept], name="semiclassical_extremal")
    for k, st, q in kept:
        prof = extremal_profile(st.H, st.ctx.A, q)
        rep.rows.append({"k": k, **prof, "C_A": st.ctx.C_A})
    d = [r["rms"] for r in rep.rows]
    if len(d) < 2:
        rep.verdict("non_increasing", None, floor, d, reason="fewer than two converged k")
        return rep
    steps = [b - a for a, b in zip(d, d[1:])]
    rep.verdict("non_increasing", all(s <= floor for s in steps), floor, d, increments=steps)
    lin = [np.asarray(r["coef"][1:]) for r in rep.rows]
    scale = max(np.linalg.norm(lin[-1]), 1.0)
    changes = [float(np.linalg.norm(b - a) / scale) for a, b in zip(lin, lin[1:])]
    rep.verdict("field_stable", all(c < stabilize for c in changes), stabilize, changes)
    last = rep.rows[-1]
    gap = float(np.linalg.norm(np.asarray(last["hamiltonian_coef"][1:]) - lin[-1]) / scale)
    rep.verdict("hamiltonian_matches_field", gap < stabilize, stabilize, gap,
                hamiltonian_coef=last["hamiltonian_coef"], field_coef=last["coef"])
    return rep


def _normal_parts(H, scheme, mats):
    """Normal components of the projective fields of a list of diagonal directions."""
    s = scheme.samples(H)
    u = s.u
    T = s.tangents()
    g = np.einsum("mia,mja->mij", T.conj(), T)
    out = []
    for xi in mats:
        v = u * np.diag(xi)[None, :]
        v = v - np.sum(u.conj() * v, axis=1)[:, None] * u
        b = np.einsum("mia,ma->mi", T.conj(), v)
        coef = np.linalg.solve(g, b[..., None])[..., 0]
        out.append(v - np.einsum("mi,mia->ma", coef, T))
    return s, out


def hessian_matrix_diagonal(H: np.ndarray, scheme: QuadratureScheme) -> np.ndarray:
    """Matrix of the Hessian quadratic form on real diagonal directions e_a."""
    N = scheme.basis.N
    E = [np.diag(np.eye(N)[a]).astype(complex) for a in range(N)]
    s, nor = _normal_parts(H, scheme, E)
    Nm = np.stack(nor, axis=1)  # (m, N dirs, N comps)
    from .energies import HESSIAN_FS_CONSTANT
    return HESSIAN_FS_CONSTANT * np.real(np.einsum("m,mia,mja->ij", s.weight, Nm.conj(), Nm))


def r_bound(H: np.ndarray, scheme: QuadratureScheme, H_ref: np.ndarray | None = None) -> float:
    """Smallest R with R^{-1} g_ref <= g_H <= R g_ref at every node (potential Hessians in t)."""
    b = scheme.basis
    H_ref = np.eye(b.N, dtype=complex) if H_ref is None else H_ref
    _, _, g = ToricPotential.from_form(b, H, level=1).derivatives(scheme.t, 2)
    _, _, g0 = ToricPotential.from_form(b, H_ref, level=1).derivatives(scheme.t, 2)
    L = np.linalg.cholesky(g0)
    Li = np.linalg.inv(L)
    ev = np.linalg.eigvalsh(Li @ g @ Li.transpose(0, 2, 1))
    return float(max(ev.max(), 1 / ev.min()))


def hessian_spectrum_report(H: np.ndarray, lie: LieData, scheme: QuadratureScheme, seed: int = 0,
                            draws: int = 200, refinements: int = 20, R: float = 10.0) -> dict:
    """Smallest Rayleigh quotient of the Hessian on the L2 complement of the symmetry directions.

    Directions are real diagonal (torus invariant).  The best of draws random
    directions is improved by refinements steps of shifted power iteration; the
    exact minimum over the subspace is reported next to it.
    """
    if not is_diagonal(H):
        raise ValueError("the spectrum report works with torus-invariant forms")
    b = scheme.basis
    N = b.N
    Rv = r_bound(H, scheme)
    Hm = hessian_matrix_diagonal(H, scheme)
    mats = lie.in_frame(H)
    E = [np.diag(np.eye(N)[a]).astype(complex) for a in range(N)]
    # constraints: zero trace and L2-orthogonality to every generator
    pair = pairing_matrix(E, mats, H, scheme, "l2")
    C = np.column_stack([np.ones(N), pair]).T
    _, sv, Vt = np.linalg.svd(C)
    rank = int(np.sum(sv > 1e-12 * sv[0]))
    V = Vt[rank:].T  # HS-orthonormal basis of the complement
    Q = V.T @ Hm @ V
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((Q.shape[0], draws))
    quot = np.einsum("id,ij,jd->d", Z, Q, Z) / np.einsum("id,id->d", Z, Z)
    v = Z[:, int(np.argmin(quot))]
    v /= np.linalg.norm(v)
    shift = np.linalg.norm(Q, 2)
    for _ in range(refinements):
        w = shift * v - Q @ v
        nw = np.linalg.norm(w)
        if nw <= 1e-14 * shift:  # v already spans a top eigenspace of the shifted matrix
            break
        v = w / nw
    rq = float(v @ Q @ v)
    exact = float(np.linalg.eigvalsh(Q)[0])
    gen_q = [hessian_quadform(a, H, scheme) / hs_norm(a) ** 2 for a in mats]
    return {"k": b.k, "N": N, "min_draw": float(quot.min()), "min_refined": min(rq, float(quot.min())),
            "min_exact": exact, "min_refined_k2": min(rq, float(quot.min())) * b.k ** 2,
            "k_minus_2": float(b.k) ** -2, "generator_quotients": gen_q, "r_bound": Rv,
            "in_regime": Rv <= R, "all_positive": bool(np.all(quot > 0))}


def hessian_spectrum_sweep(P: Polytope, k_values, seed: int = 0, band: float = 5.0, **kw) -> SweepReport:
    """hessian_spectrum_report at the reference form over k; min quotient * k^2 must stay in a band."""
    ks = sorted(int(k) for k in k_values)
    rep = SweepReport(ks, name="hessian_spectrum")
    for k in ks:
        b = build_toric_basis(P, k)
        q = default_scheme(b)
        rep.rows.append(hessian_spectrum_report(np.eye(b.N, dtype=complex), LieData.toric(b), q, seed, **kw))
    scaled = [r["min_refined_k2"] for r in rep.rows]
    spread = max(scaled) / min(scaled) if min(scaled) > 0 else float("inf")
    rep.verdict("k2_band", spread <= band, band, spread, scaled=scaled)
    rep.verdict("positive", all(r["all_positive"] for r in rep.rows), 0.0,
                [r["min_draw"] for r in rep.rows])
    return rep
