"""q-ext forms on a trapezoid, where the extremal vector field is non-zero."""
import numpy as np

from qext import LieData, build_toric_basis, certificates, default_scheme, polytope_from_spec, solve_qext
from qext.diagnostics import extremal_profile

P = polytope_from_spec([[0, 0], [2, 0], [1, 1], [0, 1]])
for k in (2, 3, 4):
    basis = build_toric_basis(P, k)
    scheme = default_scheme(basis)
    lie = LieData.toric(basis)
    st = solve_qext(np.eye(basis.N, dtype=complex), scheme, lie, tol=1e-8)
    cert = certificates(st.H, st.ctx, scheme, lie)
    prof = extremal_profile(st.H, st.ctx.A, scheme)
    print(f"k={k} N={basis.N} {st.status} outer={st.iter} C_A={st.ctx.C_A:.6f} "
          f"perp residual {cert['perp']:.1e}, affine-fit distance sup {prof['sup']:.4f} rms {prof['rms']:.4f}")
