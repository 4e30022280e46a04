"""Acceptance suite: one printed PASS/FAIL line per criterion, tolerances pinned below."""
import json
import time

import numpy as np
import pytest

from qext import LieData, polytope_from_spec, warm_start
from qext.cli import main
from qext.diagnostics import (check_bergman_first_order, check_inverse_moment_identity, check_semiclassical_extremal,
                              perturbed_potential)
from qext.energies import EnergyContext, delta_ZA, energy_Z, energy_ZA, hessian_quadform
from qext.hermitian_core import geodesic_frame, hs_norm, normalize_det
from qext.quantization_maps import bergman, centre_of_mass, fs, fs_log_ratio, fs_norms, hilb
from qext.solvers import _recentered_ctx, certificates, solve_balanced, solve_modified_t, solve_qext
from qext.toric_geometry import QuadratureScheme, build_toric_basis, default_scheme, projective_line

from conftest import random_hermitian, seeded_form, setup

FS_SUM_TOL = 1e-12
RAWNSLEY_TOL = 1e-9
TRACE_TOL = 1e-9
BALANCED_TOL = 1e-8
BERGMAN_FLAT_TOL = 1e-6
INVERSE_MOMENT_TOL = 1e-8
REFINE_GAIN = 10.0
GRADIENT_TOL = 1e-5
HESSIAN_TOL = 1e-4
CONVEXITY_FLOOR = -1e-10
DEGENERACY_TOL = 1e-10
LINEARITY_TOL = 1e-10
QEXT_TOL = 1e-7
CONTRACTION = 0.9
CROSS_TOL = 1e-5
BERGMAN_SLOPE = -0.8
# affine-fit distances closer than this count as equal: with |S| ~ 4 pi it is
# about ten times the q-ext certificate tolerance in relative terms
EXTREMAL_TIE = 1e-6
TRAPEZOID = [[0, 0], [2, 0], [1, 1], [0, 1]]

# (polytope, k, diagonal?) for the 20 seeded forms shared by criteria 1-3 and 5
FORM_SET = ([("P1", k, d) for k in (1, 2, 4, 8, 16) for d in (True, False)]
            + [("P1", k, False) for k in (3, 6, 12, 16)]
            + [("P2", k, True) for k in (1, 2, 3, 4)]
            + [("P2", 1, False), ("P2", 1, False)])


def report(capsys, number, passed, detail):
    with capsys.disabled():
        print(f"\n[criterion {number}] {'PASS' if passed else 'FAIL'}: {detail}")


@pytest.fixture(scope="module")
def form_set():
    rng = np.random.default_rng(2024)
    out = []
    for name, k, diagonal in FORM_SET:
        _, b, q = setup(name, k)
        out.append((name, k, b, q, seeded_form(rng, b.N, 0.5, diagonal=diagonal)))
    return out


@pytest.fixture(scope="module")
def qext_sweep():
    runs = {}
    for k in (6, 10, 16):
        P, b, q = setup("P1", k)
        lie = LieData.toric(b)
        t0 = time.perf_counter()
        st = solve_qext(warm_start(P, k, "perturbed", 2, 0.5), q, lie, 0.5 * lie.basis[0], tol=1e-8)
        runs[k] = (st, q, lie, time.perf_counter() - t0)
    return runs


def test_criterion_01_fs_defining_equation(form_set, capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for name, k, b, q, H in form_set:
        worst = max(worst, float(np.max(np.abs(fs_norms(H, q).sum(axis=1) - 1))))
    elapsed = time.perf_counter() - t0
    ok = worst < FS_SUM_TOL and elapsed < 10
    report(capsys, 1, ok, f"sup |sum |s_i|^2 - 1| = {worst:.2e} < {FS_SUM_TOL:.0e} over {len(form_set)} forms, "
                          f"{elapsed:.1f} s < 10 s")
    assert ok


def test_criterion_02_rawnsley(form_set, capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for name, k, b, q, H in form_set:
        h = fs(H, q)
        _, rho_bar = bergman(h)
        ratio = fs_log_ratio(hilb(h), H, q)
        worst = max(worst, float(np.max(np.abs(np.expm1((ratio - np.log(rho_bar)) / k)))))
    elapsed = time.perf_counter() - t0
    ok = worst < RAWNSLEY_TOL and elapsed < 30
    report(capsys, 2, ok, f"sup relative error {worst:.2e} < {RAWNSLEY_TOL:.0e}, {elapsed:.1f} s < 30 s")
    assert ok


def test_criterion_03_trace_law(form_set, capsys):
    worst = 0.0
    for name, k, b, q, H in form_set:
        worst = max(worst, abs(np.trace(centre_of_mass(H, q)).real / b.knV - 1))
    ok = worst < TRACE_TOL
    report(capsys, 3, ok, f"max |tr(mu)/(k^n V) - 1| = {worst:.2e} < {TRACE_TOL:.0e}")
    assert ok


def test_criterion_04_balanced_solve(capsys):
    t0 = time.perf_counter()
    lines, ok = [], True
    for name, k in (("P1", 4), ("P1", 8), ("P1", 16), ("P2", 2), ("P2", 3)):
        P, b, q = setup(name, k)
        st = solve_balanced(warm_start(P, k, "perturbed", k, 0.5), q, tol=BALANCED_TOL)
        rho, _ = bergman(fs(st.H, q))
        spread = float(np.ptp(rho) / (b.N / b.V))
        res = st.residuals[-1]["perp"]
        ok &= st.converged and res < BALANCED_TOL and spread < BERGMAN_FLAT_TOL
        lines.append(f"{name} k={k}: {res:.1e}/{spread:.1e} ({st.iter} it)")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    report(capsys, 4, ok, f"residual/rho spread (tol {BALANCED_TOL:.0e}/{BERGMAN_FLAT_TOL:.0e}): "
                          + "; ".join(lines) + f"; {elapsed:.1f} s < 300 s")
    assert ok


def test_criterion_05_inverse_moment(form_set, capsys):
    worst = max(check_inverse_moment_identity(H, q) for _, _, _, q, H in form_set)
    # the default rule sits at round-off, so convergence under refinement is
    # observed on a coarse rule (order 4, one panel per axis) where the error is visible
    gains = []
    for name, k, b, q, H in form_set:
        coarse = QuadratureScheme(b, resolution=1, order=4)
        e1 = check_inverse_moment_identity(H, coarse)
        e2 = check_inverse_moment_identity(H, coarse.refined(2))
        if e1 > 1e-12:
            gains.append(e1 / e2)
    ok = worst < INVERSE_MOMENT_TOL and min(gains) >= REFINE_GAIN
    report(capsys, 5, ok, f"default residual {worst:.2e} < {INVERSE_MOMENT_TOL:.0e}; "
                          f"min refinement gain {min(gains):.1f} >= {REFINE_GAIN:.0f} over {len(gains)} forms")
    assert ok


def test_criterion_06_gradient_and_hessian(capsys):
    rng = np.random.default_rng(6)
    _, b, q = setup("P1", 4)
    lie = LieData.toric(b)
    H = seeded_form(rng, b.N, 0.4, diagonal=True)
    ctx = _recentered_ctx(H, 0.8 * lie.basis[0], q, EnergyContext.for_basis(b))
    dz = delta_ZA(H, ctx, q)
    t, h = 1e-4, 1e-3
    g_err, h_err = 0.0, 0.0
    for _ in range(10):
        xi = np.diag(rng.standard_normal(b.N)).astype(complex)
        xi -= np.trace(xi) / b.N * np.eye(b.N)
        zp, zm = (energy_ZA(geodesic_frame(H, xi, s), ctx, q) for s in (t, -t))
        exact = np.real(np.trace(xi @ dz))
        g_err = max(g_err, abs((zp - zm) / (2 * t) - exact) / abs(exact))
        z = [energy_ZA(geodesic_frame(H, xi, s), ctx, q) for s in (-h, 0.0, h)]
        hq = hessian_quadform(xi, H, q)
        h_err = max(h_err, abs((z[0] - 2 * z[1] + z[2]) / h ** 2 - hq) / abs(hq))
    ok = g_err < GRADIENT_TOL and h_err < HESSIAN_TOL
    report(capsys, 6, ok, f"gradient rel err {g_err:.1e} < {GRADIENT_TOL:.0e}; Hessian rel err {h_err:.1e} "
                          f"< {HESSIAN_TOL:.0e} (10 directions, P1 k=4, A != 0)")
    assert ok


def test_criterion_07_convexity_and_degeneracy(capsys):
    rng = np.random.default_rng(7)
    low, degenerate, linear = np.inf, 0.0, 0.0
    cases = [("P1", 4, False), ("P1", 8, True), ("P2", 2, True), ("P2", 3, True), ("square", 2, True)]
    for name, k, diagonal in cases:
        _, b, q = setup(name, k)
        H = seeded_form(rng, b.N, 0.5, diagonal=diagonal)
        for _ in range(40):
            xi = random_hermitian(rng, b.N) if b.n == 1 else np.diag(rng.standard_normal(b.N)).astype(complex)
            low = min(low, hessian_quadform(xi, H, q) / np.linalg.norm(xi) ** 2)
        lie = LieData.toric(b)
        if diagonal:
            # the generators are H-hermitian only at torus-invariant forms
            degenerate = max(degenerate, *(abs(hessian_quadform(A, H, q)) for A in lie.in_frame(H)))
            ctx = EnergyContext.for_basis(b, lie.basis[0], 0.0)
            B = np.diag(rng.standard_normal(b.N)).astype(complex)
            d = [energy_ZA(geodesic_frame(H, B, s), ctx, q) - energy_Z(geodesic_frame(H, B, s), ctx, q)
                 for s in (-0.1, 0.0, 0.1)]
            linear = max(linear, abs(d[0] - 2 * d[1] + d[2]))
    ok = low >= CONVEXITY_FLOOR and degenerate < DEGENERACY_TOL and linear < LINEARITY_TOL
    report(capsys, 7, ok, f"min quotient {low:.2e} >= {CONVEXITY_FLOOR:.0e} (200 directions); generator "
                          f"quotient {degenerate:.1e} < {DEGENERACY_TOL:.0e}; second difference of Z^A - Z "
                          f"{linear:.1e} < {LINEARITY_TOL:.0e}")
    assert ok


def test_criterion_08_qext_solve(qext_sweep, capsys):
    lines, ok, total = [], True, 0.0
    for k, (st, q, lie, elapsed) in qext_sweep.items():
        cert = certificates(st.H, st.ctx, q, lie)
        a = st.a_tilde_norms
        burn = [y / x for x, y in zip(a[1:], a[2:]) if x > 1e-14]
        decay = a[1] / a[0] < CONTRACTION and all(r < CONTRACTION for r in burn)
        three = max(cert["delta"], cert["moment"], cert["pointwise"]) < 10 * QEXT_TOL
        ok &= st.converged and cert["moment"] < QEXT_TOL and cert["perp"] < QEXT_TOL and three and decay
        total += elapsed
        lines.append(f"k={k}: moment {cert['moment']:.1e}, perp {cert['perp']:.1e}, pointwise "
                     f"{cert['pointwise']:.1e}, A~ ratios {[round(x, 6) for x in [a[1] / a[0]] + burn]}")
    ok &= total < 600
    report(capsys, 8, ok, "; ".join(lines) + f"; {total:.1f} s < 600 s (tol {QEXT_TOL:.0e})")
    assert ok


def test_criterion_09_cross_solver(qext_sweep, capsys):
    st, q, lie, _ = qext_sweep[6]
    P = projective_line()
    alt = solve_modified_t(warm_start(P, 6, "perturbed", 2, 0.5), st.ctx, q, tol=1e-9)
    c_flow = certificates(st.H, st.ctx, q, lie)["moment"]
    c_alt = certificates(alt.H, alt.ctx, q, lie)["moment"]
    diff = hs_norm(centre_of_mass(normalize_det(alt.H), q) - centre_of_mass(normalize_det(st.H), q))
    ok = alt.converged and c_flow < QEXT_TOL and c_alt < QEXT_TOL and diff < CROSS_TOL
    report(capsys, 9, ok, f"certificates flow {c_flow:.1e}, modified T {c_alt:.1e} < {QEXT_TOL:.0e}; "
                          f"||mu_flow - mu_T||_HS = {diff:.1e} < {CROSS_TOL:.0e} ({alt.iter} T-steps)")
    assert ok


def test_criterion_10a_bergman_first_order(capsys):
    P = projective_line()
    t0 = time.perf_counter()
    rep = check_bergman_first_order(P, perturbed_potential(P, seed=0, amplitude=0.2), [8, 16, 32])
    v = rep.verdicts["slope"]
    errs = [r["sup_error"] for r in rep.rows]
    ok = v["passed"] is True
    report(capsys, "10a", ok, f"log-log slope {v['value']:.3f} <= {BERGMAN_SLOPE} over k = 8, 16, 32; "
                              f"sup errors {[f'{e:.3e}' for e in errs]}; {time.perf_counter() - t0:.1f} s")
    assert ok


def test_criterion_10b_extremal_limit(qext_sweep, capsys):
    t0 = time.perf_counter()
    line_rep = check_semiclassical_extremal([(k, st, q) for k, (st, q, _, _) in qext_sweep.items()],
                                            floor=EXTREMAL_TIE)
    P = polytope_from_spec(TRAPEZOID)
    runs = []
    for k in (2, 3, 4):
        b = build_toric_basis(P, k)
        q = default_scheme(b)
        runs.append((k, solve_qext(np.eye(b.N, dtype=complex), q, LieData.toric(b), tol=1e-8), q))
    trap_rep = check_semiclassical_extremal(runs, floor=EXTREMAL_TIE)
    elapsed = time.perf_counter() - t0
    ok = all(r.verdicts["non_increasing"]["passed"] is True for r in (line_rep, trap_rep))
    ok &= len(trap_rep.k_values) == 3 and elapsed < 900
    d_line = [f"{x:.1e}" for x in line_rep.verdicts["non_increasing"]["value"]]
    d_trap = [f"{x:.4f}" for x in trap_rep.verdicts["non_increasing"]["value"]]
    report(capsys, "10b", ok, f"affine-fit distance (ties below {EXTREMAL_TIE:.0e}) P1 k=6,10,16 {d_line}; trapezoid k=2,3,4 {d_trap}; "
                              f"{elapsed:.1f} s < 900 s")
    assert ok


def test_criterion_11_determinism(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"geometry": {"polytope": "P1"}, "k": 6, "solver": "qext", "A0": [0.5],
                               "warm_start": {"profile": "perturbed", "seed": 2, "amplitude": 0.5}}))
    cfg2 = tmp_path / "bal.json"
    cfg2.write_text(json.dumps({"geometry": {"polytope": "P2"}, "k": 3, "seed": 5,
                                "warm_start": {"profile": "perturbed", "seed": 5, "amplitude": 0.5}}))
    names = ("iterations.csv", "final_state.json", "verdicts.json", "config.json")
    same = True
    for c in (cfg, cfg2):
        outs = []
        for threads in (1, 8, 1):
            out = tmp_path / f"{c.stem}_{threads}_{len(outs)}"
            assert main(["solve", "--config", str(c), "--out", str(out), "--threads", str(threads)]) == 0
            outs.append([(out / n).read_bytes() for n in names])
        same &= outs[0] == outs[1] == outs[2]
    from qext.cli import usable_threads
    report(capsys, 11, same, "artifacts byte-identical across --threads 1 vs 8 and repeated runs "
                             f"(q-ext P1 k=6, balanced P2 k=3; 8 requested, {usable_threads(8)} usable here)")
    assert same
