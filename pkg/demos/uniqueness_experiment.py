"""Do q-ext limits from different warm starts agree up to the torus action?

The complex torus rescales a diagonal form by exp of an affine function of the
exponent, so the comparison removes the best affine fit from log H_aa - log H'_aa.
Recorded as an observation only.
"""
import numpy as np

from qext import LieData, build_toric_basis, default_scheme, polytope_from_spec, solve_qext, warm_start

P = polytope_from_spec([[0, 0], [2, 0], [1, 1], [0, 1]])
k = 3
basis = build_toric_basis(P, k)
scheme = default_scheme(basis)
lie = LieData.toric(basis)
limits = []
for seed in (0, 1, 2):
    H0 = warm_start(P, k, "perturbed", seed=seed, amplitude=0.5)
    st = solve_qext(H0, scheme, lie, tol=1e-9)
    limits.append(st.H)
    print(f"seed {seed}: {st.status}, outer {st.iter}")

design = np.column_stack([np.ones(basis.N), basis.exponents])
for i in range(1, len(limits)):
    d = np.log(np.diag(limits[i]).real) - np.log(np.diag(limits[0]).real)
    coef, *_ = np.linalg.lstsq(design, d, rcond=None)
    resid = d - design @ coef
    off = np.linalg.norm(limits[i] - np.diag(np.diag(limits[i])))
    print(f"seed {i} vs 0: non-affine part of log-ratio {np.max(np.abs(resid)):.2e}, off-diagonal {off:.1e}")
