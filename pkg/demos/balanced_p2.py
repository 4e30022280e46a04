"""Balanced form on the projective plane from a perturbed warm start."""
import numpy as np

from qext import build_toric_basis, certificates, default_scheme, projective_plane, solve_balanced, warm_start

P = projective_plane()
for k in (1, 2, 3):
    basis = build_toric_basis(P, k)
    scheme = default_scheme(basis)
    H0 = warm_start(P, k, "perturbed", seed=1, amplitude=0.5)
    st = solve_balanced(H0, scheme, tol=1e-10)
    cert = certificates(st.H, st.ctx, scheme)
    off_diag = np.linalg.norm(st.H - np.diag(np.diag(st.H)))
    print(f"k={k} N={basis.N} {st.status} after {st.iter} steps, "
          f"off-diagonal mass {off_diag:.1e}, certificates {cert}")
