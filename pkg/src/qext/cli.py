"""Command line: ``qext solve|sweep|diagnose --config run.json --out dir``.

Exit codes: 0 converged / all checks pass, 1 error, 2 stalled or failed check.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import io as qio
from .diagnostics import (check_bergman_first_order, check_inverse_moment_identity, check_semiclassical_extremal,
                          hessian_spectrum_sweep, perturbed_potential)
from .energies import EnergyContext
from .hermitian_core import DefinitenessError, cholesky_lower
from .solvers import certificates, solve_balanced, solve_modified_t, solve_qext, warm_start
from .symmetry import LieData
from .toric_geometry import (CloudScheme, QuadratureScheme, build_toric_basis, default_scheme, load_point_cloud,
                             polytope_from_spec)

log = logging.getLogger("qext")

EXIT_OK, EXIT_ERROR, EXIT_STALLED = 0, 1, 2


def _scheme(cfg, k):
    geo = cfg["geometry"]
    if "cloud" in geo:
        cloud = load_point_cloud(geo["cloud"])
        return None, CloudScheme(cloud)
    P = polytope_from_spec(geo["polytope"])
    b = build_toric_basis(P, k)
    quad = cfg["quadrature"]
    q = default_scheme(b, quad["resolution"], quad["order"])
    if quad["grading"] != q.grading:
        q = QuadratureScheme(b, q.resolution, q.order, grading=quad["grading"])
    return P, q


def _tol_scale(scheme) -> float:
    b = scheme.basis
    return b.knV / b.N


def _lie_and_A0(cfg, scheme):
    lie = LieData.toric(scheme.basis)
    coeffs = cfg["A0"]
    if coeffs and len(coeffs) != lie.r:
        raise qio.ConfigError(f"A0: expected {lie.r} generator coefficients, got {len(coeffs)}")
    A0 = sum((c * a for c, a in zip(coeffs, lie.basis)), np.zeros((scheme.basis.N,) * 2, complex))
    return lie, A0


def run_solve(cfg: dict, k: int, out: Path) -> tuple[int, dict]:
    """One solve at level k; writes its artifacts under out.  Returns the exit code and a summary."""
    out.mkdir(parents=True, exist_ok=True)
    P, q = _scheme(cfg, k)
    tol = cfg["tolerances"]
    ws = cfg["warm_start"]
    solver = cfg["solver"]
    N = q.basis.N
    if P is None:
        if solver != "balanced":
            raise qio.ConfigError("geometry/cloud: point clouds only support the balanced solver")
        H0 = np.eye(N, dtype=complex)
        lie = None
    else:
        H0 = warm_start(P, k, ws["profile"], ws["seed"], ws["amplitude"])
        lie = LieData.toric(q.basis)
    if solver == "balanced":
        st = solve_balanced(H0, q, tol["tol"], tol["max_iter"])
        C_hist = {0: 0.0}
    elif solver == "qext":
        lie, A0 = _lie_and_A0(cfg, q)
        st = solve_qext(H0, q, lie, A0, tol["tol"], tol["max_outer"], tol["inner_tol"])
        C_hist = st.info.get("C_history", {})
    else:
        lie, A0 = _lie_and_A0(cfg, q)
        from .solvers import _recentered_ctx
        ctx = _recentered_ctx(H0, A0, q, EnergyContext.for_basis(q.basis, A0))
        st = solve_modified_t(H0, ctx, q, tol["tol"] * _tol_scale(q), tol["max_iter"])
        C_hist = {0: ctx.C_A}
    cert = certificates(st.H, st.ctx, q, lie)
    if P is not None:
        cert["inverse_moment"] = check_inverse_moment_identity(st.H, q)
    bound = 10 * tol["tol"] * _tol_scale(q)
    verdicts = {"status": st.status,
                "certificates": {key: {"value": val, "tolerance": 1e-8 if key == "inverse_moment" else bound,
                                       "passed": bool(val < (1e-8 if key == "inverse_moment" else bound))}
                                 for key, val in cert.items()}}
    verdicts["passed"] = st.converged and all(v["passed"] for v in verdicts["certificates"].values())
    (out / "iterations.csv").write_text(qio.iteration_csv(st.residuals, C_hist))
    (out / "timing.csv").write_text(qio.timing_csv(st.residuals))
    qio.write_document(out / "final_state.json",
                       qio.state_document(st.H, st.ctx.A, st.ctx.C_A, k, cert, st.status, cfg))
    qio.write_document(out / "verdicts.json", verdicts)
    code = EXIT_OK if st.converged else EXIT_STALLED
    return code, {"k": k, "state": st, "scheme": q, "verdicts": verdicts}


def cmd_solve(cfg: dict, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    k = cfg.get("k", (cfg.get("k_list") or [None])[0])
    cfg = dict(cfg, k=k)
    qio.write_document(out / "config.json", cfg)
    code, summary = run_solve(cfg, k, out)
    print(f"solve k={k}: {summary['state'].status}, passed={summary['verdicts']['passed']}")
    return code


def cmd_sweep(cfg: dict, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    ks = sorted(cfg.get("k_list") or [cfg["k"]])
    qio.write_document(out / "config.json", cfg)
    if "polytope" not in cfg["geometry"]:
        raise qio.ConfigError("geometry: sweeps need a polytope")
    P = polytope_from_spec(cfg["geometry"]["polytope"])
    report = {"format_version": qio.FORMAT_VERSION, "k_values": ks, "per_k": [], "checks": {}}
    runs, failed = [], []
    for k in ks:
        try:
            code, summary = run_solve(cfg, k, out / f"k{k}")
        except Exception as exc:  # recorded per k, the sweep carries on
            report["per_k"].append({"k": k, "error": f"{type(exc).__name__}: {exc}"})
            failed.append(k)
            continue
        report["per_k"].append({"k": k, "status": summary["state"].status, "verdicts": summary["verdicts"]})
        if code != EXIT_OK:
            failed.append(k)
        runs.append((k, summary["state"], summary["scheme"]))
    diag = cfg["diagnostics"]
    pot = perturbed_potential(P, diag["bergman_seed"], diag["bergman_amplitude"])
    report["checks"]["bergman_first_order"] = check_bergman_first_order(P, pot, ks).to_document()
    report["checks"]["hessian_spectrum"] = hessian_spectrum_sweep(P, ks, seed=cfg["seed"],
                                                                  draws=diag["hessian_draws"]).to_document()
    if cfg["solver"] == "qext":
        report["checks"]["semiclassical_extremal"] = check_semiclassical_extremal(runs).to_document()
    inconclusive = len(ks) < 2 or ks[-1] < 4 * ks[0]
    report["inconclusive"] = inconclusive
    report["failed_k"] = failed
    qio.write_document(out / "report.json", report)
    for name, chk in report["checks"].items():
        for key, v in chk["verdicts"].items():
            print(f"{name}.{key}: {'inconclusive' if v['passed'] is None else ('pass' if v['passed'] else 'fail')}")
    return EXIT_STALLED if failed else EXIT_OK


def cmd_diagnose(cfg: dict | None, out: Path, state_path: Path) -> int:
    try:
        doc = qio.read_document(state_path)
        state = qio.parse_state(doc)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: cannot read state {state_path}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    cfg = cfg or qio.validate_config(state["config"])
    H, k = state["H"], state["k"]
    cholesky_lower(H, "stored form H")
    _, q = _scheme(cfg, k)
    ctx = EnergyContext.for_basis(q.basis, state["A"], state["C_A"])
    lie = LieData.toric(q.basis) if "polytope" in cfg["geometry"] else None
    cert = certificates(H, ctx, q, lie)
    if lie is not None:
        cert["inverse_moment"] = check_inverse_moment_identity(H, q)
    bound = 10 * cfg["tolerances"]["tol"] * _tol_scale(q)
    ok = True
    lines = []
    for key, val in cert.items():
        tol = 1e-8 if key == "inverse_moment" else bound
        good = val < tol
        ok &= good
        stored = state["certificates"].get(key)
        match = "" if stored is None else f" (stored {stored:.3e}, diff {abs(stored - val):.1e})"
        lines.append(f"{key}: {'pass' if good else 'fail'} {val:.3e} < {tol:.1e}{match}")
    print("\n".join(lines))
    out.mkdir(parents=True, exist_ok=True)
    qio.write_document(out / "diagnose.json", {"format_version": qio.FORMAT_VERSION, "certificates": cert,
                                               "passed": bool(ok)})
    return EXIT_OK if ok else EXIT_STALLED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qext", description="Balanced and quantized extremal metrics on toric varieties")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("solve", "sweep", "diagnose"):
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, required=name != "diagnose")
        s.add_argument("--out", type=Path, default=None)
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--resolution", type=int, default=None)
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "diagnose":
            s.add_argument("--state", type=Path, default=None, help="final_state.json (default: <out>/final_state.json)")
    return p


def usable_threads(requested: int) -> int:
    """Requested BLAS threads, capped at the CPUs this process may run on.

    OpenBLAS sizes its buffers for the CPU count at load time, and raising the
    pool beyond it can crash, so extra threads are dropped with a notice.
    """
    try:
        avail = len(os.sched_getaffinity(0))
    except AttributeError:
        avail = os.cpu_count() or 1
    if requested > avail:
        log.info("using %d BLAS threads instead of %d (CPUs available)", avail, requested)
    return max(1, min(requested, avail))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = qio.load_config(args.config) if args.config else None
        if cfg is not None:
            if args.resolution is not None:
                cfg["quadrature"]["resolution"] = args.resolution
            if args.seed is not None:
                cfg["seed"] = args.seed
                cfg["warm_start"]["seed"] = args.seed
        out = args.out or Path(cfg["output"] if cfg else ".")
        with threadpool_limits(limits=usable_threads(args.threads)):
            if args.command == "solve":
                return cmd_solve(cfg, out)
            if args.command == "sweep":
                return cmd_sweep(cfg, out)
            return cmd_diagnose(cfg, out, args.state or out / "final_state.json")
    except qio.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except DefinitenessError as exc:
        print(f"definiteness error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
