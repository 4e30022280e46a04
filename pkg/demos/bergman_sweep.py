"""First-order Bergman density check for a perturbed potential on the projective line."""
from qext import check_bergman_first_order, projective_line
from qext.diagnostics import perturbed_potential

P = projective_line()
pot = perturbed_potential(P, seed=0, amplitude=0.2)
rep = check_bergman_first_order(P, pot, [8, 16, 32])
for name, v in rep.verdicts.items():
    print(name, v)
