import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qext.symmetry import (LieData, SymmetryDegeneracyError, hamiltonian_of, pairing_matrix, project_perp,
                           projective_field_pairing)
from qext.toric_geometry import QuadratureScheme, fs_potential_eval

from conftest import random_hermitian, seeded_form, setup


def test_scalar_field_vanishes():
    _, b, q = setup("P1", 3)
    assert abs(projective_field_pairing(1j * np.eye(b.N), 1j * np.eye(b.N), np.eye(b.N), q)) < 1e-14


def test_pairing_positive_on_traceless(rng):
    _, b, q = setup("P1", 3)
    H = seeded_form(rng, b.N, 0.3, diagonal=True)
    for _ in range(50):
        xi = random_hermitian(rng, b.N)
        xi -= np.trace(xi) / b.N * np.eye(b.N)
        assert projective_field_pairing(xi, xi, H, q) > 0


def test_lie_gram_against_dense_oracle():
    _, b, q = setup("P1", 3)
    lie = LieData.toric(b)
    G = lie.gram(np.eye(b.N), q)
    fine = QuadratureScheme(b, resolution=10 * q.resolution, order=q.order)
    # full angular grid instead of the collapsed invariant shortcut
    dense = pairing_matrix(lie.basis, lie.basis, np.eye(b.N) + 0j, fine)
    s = fine.samples(np.eye(b.N), angular=64)
    from qext.symmetry import _field
    X = _field(s.u, lie.basis[0])
    brute = float(np.sum(s.weight * np.sum(np.abs(X) ** 2, axis=1)))
    assert G[0, 0] == pytest.approx(dense[0, 0], rel=1e-9)
    assert G[0, 0] == pytest.approx(brute, rel=1e-9)


def test_generator_properties():
    for name, k in (("P1", 4), ("P2", 3), ("square", 2)):
        _, b, q = setup(name, k)
        lie = LieData.toric(b)
        assert lie.r == b.n
        for A in lie.basis:
            assert abs(np.trace(A)) < 1e-14
            np.testing.assert_array_equal(A, A.conj().T)
            np.testing.assert_array_equal(A, np.diag(np.diag(A)))
        assert np.all(np.linalg.eigvalsh(lie.gram(np.eye(b.N), q)) > 0)


def test_split_identities(rng):
    _, b, q = setup("P2", 3)
    lie = LieData.toric(b)
    H = seeded_form(rng, b.N, 0.5, diagonal=True)
    xi = 0.7 * lie.basis[0] - 1.3 * lie.basis[1]
    assert np.max(np.abs(project_perp(xi, lie, H, q).beta)) < 1e-10
    x = np.diag(rng.standard_normal(b.N)).astype(complex)
    sp = project_perp(x, lie, H, q)
    again = project_perp(sp.beta, lie, H, q)
    assert np.max(np.abs(again.alpha)) < 1e-12
    assert np.max(np.abs(project_perp(sp.alpha, lie, H, q).beta - 0)) < 1e-12
    np.testing.assert_allclose(pairing_matrix([sp.beta - np.trace(sp.beta) / b.N * np.eye(b.N)], lie.basis, H, q),
                               0, atol=1e-12)


def test_hs_mode_split(rng):
    _, b, q = setup("P1", 5)
    lie = LieData.toric(b)
    x = np.diag(rng.standard_normal(b.N)).astype(complex)
    sp = project_perp(x, lie, np.eye(b.N), q, mode="hs")
    assert abs(np.trace(sp.beta @ lie.basis[0])) < 1e-12


def test_degenerate_generators_raise():
    _, b, q = setup("P1", 3)
    A = LieData.toric(b).basis[0]
    with pytest.raises(SymmetryDegeneracyError):
        project_perp(A, LieData([A, 2 * A]), np.eye(b.N), q)


def test_hamiltonian_trivial_cases(rng):
    _, b, q = setup("P2", 2)
    H = seeded_form(rng, b.N, 0.5, diagonal=True)
    assert np.max(np.abs(hamiltonian_of(np.eye(b.N), H, q))) < 1e-14
    assert np.max(np.abs(hamiltonian_of(np.zeros((b.N, b.N)), H, q))) == 0


def test_hamiltonian_on_line_symbolic():
    _, b, q = setup("P1", 1)
    psi = hamiltonian_of(np.diag([1.0, -1.0]), np.eye(2), q)
    t = q.t[:, 0]
    expected = -(1 - np.exp(t)) / (1 + np.exp(t)) / (2 * np.pi)
    np.testing.assert_allclose(psi, expected, atol=1e-14)


def test_hamiltonian_matches_potential_derivative(rng):
    _, b, q = setup("P1", 6)
    H = seeded_form(rng, b.N, 0.5, diagonal=True)
    A = LieData.toric(b).basis[0]
    psi = hamiltonian_of(A, H, q)
    h = 1e-5
    dphi = np.array([(fs_potential_eval(H, b, [t + h])[0] - fs_potential_eval(H, b, [t - h])[0]) / (2 * h)
                     for t in q.t[:, 0]])
    moment = b.k * dphi
    raw = -(moment - b.exponents[:, 0].mean()) / (2 * np.pi * b.k)
    s = q.samples(H)
    oracle = raw - np.sum(s.weight * raw) / np.sum(s.weight)
    np.testing.assert_allclose(psi, oracle, rtol=1e-6, atol=1e-6 * np.abs(oracle).max())


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_projection_is_idempotent(seed):
    r = np.random.default_rng(seed)
    _, b, q = setup("P1", 4)
    lie = LieData.toric(b)
    H = seeded_form(r, b.N, 0.5, diagonal=True)
    x = np.diag(r.standard_normal(b.N)).astype(complex)
    sp = project_perp(x, lie, H, q)
    sp2 = project_perp(sp.alpha + sp.beta, lie, H, q)
    np.testing.assert_allclose(sp2.alpha, sp.alpha, atol=1e-12)
