"""Balanced and quantized extremal (q-ext) hermitian forms on toric varieties."""
from .hermitian_core import (DefinitenessError, cholesky_lower, expm_hermitian, geodesic_frame, geodesic_step,
                             hermitize, hs_norm, logm_pd, norms, normalize_det, orthonormal_frame)
from .toric_geometry import (Polytope, QuadratureScheme, SectionBasis, ToricPotential, build_toric_basis,
                             default_scheme, integrate, load_point_cloud, polytope_from_spec, projective_line,
                             projective_plane, unit_square)
from .quantization_maps import (MetricRep, bergman, centre_of_mass, fs, fs_log_ratio, fs_norms, hilb, hilb_of_fs_in_frame,
                                t_operator)
from .symmetry import LieData, hamiltonian_of, project_perp
from .energies import (EnergyContext, compute_CA, delta_ZA, energy_increment, energy_Z, energy_ZA,
                       hessian_quadform, recenter_constant)
from .solvers import (FlowState, certificates, gradient_flow_ZA, modified_t_operator, solve_balanced,
                      solve_modified_t, solve_qext, warm_start)
from .diagnostics import (SweepReport, check_bergman_first_order, check_inverse_moment_identity,
                          check_semiclassical_extremal, hessian_spectrum_report, toric_scalar_curvature)

__all__ = [name for name in dir() if not name.startswith("_")]
