import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qext.toric_geometry import (DegeneratePolytopeError, InvarianceError, NumericError, Polytope, build_toric_basis,
                                 default_scheme, fs_potential_eval, integrate, load_point_cloud, projective_line,
                                 projective_plane, unit_square)
from qext.quantization_maps import fs_norms

from conftest import seeded_form, setup


@pytest.mark.parametrize("P, k, N", [(projective_line(), 3, 4), (projective_plane(), 2, 6), (unit_square(), 1, 4),
                                     (unit_square(), 3, 16), (projective_plane(), 4, 15)])
def test_section_counts(P, k, N):
    b = build_toric_basis(P, k)
    assert b.N == N
    rows = [tuple(r) for r in b.exponents]
    assert rows == sorted(rows)


def test_line_exponents():
    b = build_toric_basis(projective_line(), 3)
    assert b.exponents[:, 0].tolist() == [0, 1, 2, 3]


@settings(max_examples=20, deadline=None)
@given(k=st.integers(1, 6), w=st.integers(1, 3), h=st.integers(1, 3))
def test_lattice_points_match_box_scan(k, w, h):
    P = Polytope.from_vertices([[0, 0], [w, 0], [w, h], [0, h]])
    pts = {tuple(p) for p in P.lattice_points(k)}
    assert pts == set(itertools.product(range(k * w + 1), range(k * h + 1)))


def test_trapezoid_is_delzant_with_volume():
    P = Polytope.from_vertices([[0, 0], [2, 0], [1, 1], [0, 1]])
    assert P.is_delzant and P.volume == pytest.approx(1.5)
    assert not Polytope.from_vertices([[0, 0], [2, 0], [0, 1]]).is_delzant


def test_bad_level_rejected():
    with pytest.raises(ValueError):
        build_toric_basis(projective_line(), 0)
    assert issubclass(DegeneratePolytopeError, ValueError)


def test_potential_at_origin_by_direct_sum():
    for k in (1, 3, 7):
        b = build_toric_basis(projective_line(), k)
        phi, _, _ = fs_potential_eval(np.eye(b.N), b, [0.0])
        assert phi == pytest.approx(np.log(np.sum(np.exp(b.logc))) / k, rel=1e-14)


def test_potential_gradient_and_hessian(rng):
    b = build_toric_basis(projective_plane(), 3)
    H = seeded_form(rng, b.N, 0.5)
    h = 1e-5
    for t in rng.normal(size=(5, 2)):
        phi, grad, hess = fs_potential_eval(H, b, t)
        fd = [(fs_potential_eval(H, b, t + h * e)[0] - fs_potential_eval(H, b, t - h * e)[0]) / (2 * h)
              for e in np.eye(2)]
        np.testing.assert_allclose(grad, fd, rtol=1e-8)
        assert np.all(np.linalg.eigvalsh(hess) > 0)


def test_potential_invariance_flag(rng):
    b = build_toric_basis(projective_line(), 2)
    with pytest.raises(InvarianceError):
        fs_potential_eval(seeded_form(rng, 3), b, [0.0], require_invariant=True)


def test_potential_is_overflow_safe():
    b = build_toric_basis(projective_line(), 50)
    phi, grad, _ = fs_potential_eval(np.eye(b.N), b, [800.0])
    assert np.isfinite(phi) and grad[0] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("name, k", [("P1", 1), ("P1", 9), ("P2", 3), ("square", 2)])
def test_unit_integrand_gives_volume(name, k, rng):
    _, b, q = setup(name, k)
    for H in (np.eye(b.N, dtype=complex), seeded_form(rng, b.N, 0.5, diagonal=True)):
        assert integrate(H, np.ones(q.m), q) == pytest.approx(b.knV, rel=1e-10)


def test_single_section_mass_on_line():
    _, b, q = setup("P1", 5)
    f = lambda s: np.abs(s.u[:, 0]) ** 2
    assert integrate(np.eye(b.N), f, q) == pytest.approx(b.knV / b.N, rel=1e-12)


def test_sum_of_sections_integrates_to_volume(rng):
    _, b, q = setup("P2", 2)
    H = seeded_form(rng, b.N, 0.5)
    total = integrate(H, lambda s: np.sum(np.abs(s.u) ** 2, axis=1), q)
    assert total == pytest.approx(b.knV, rel=1e-10)


def test_nonfinite_integrand_reports_node():
    _, b, q = setup("P1", 2)
    vals = np.ones(q.m)
    vals[7] = np.nan
    with pytest.raises(NumericError, match="node 7"):
        integrate(np.eye(b.N), vals, q)


def test_weights_positive_and_fs_sum(rng):
    _, b, q = setup("P2", 4)
    for H in (seeded_form(rng, b.N, 0.5, diagonal=True), seeded_form(rng, b.N, 0.5)):
        s = q.samples(H, angular=6)
        assert np.all(s.weight > 0)
        assert np.max(np.abs(fs_norms(H, q, angular=6).sum(axis=1) - 1)) < 1e-12


def test_point_cloud_round_trip(tmp_path):
    doc = {"k": 1, "dim": 1, "volume": 1.0,
           "nodes": [{"id": f"n{i}", "weight": 0.25, "values": [[1.0, 0.0], [0.5 * i, 0.1]]} for i in range(4)]}
    path = tmp_path / "cloud.json"
    path.write_text(json.dumps(doc))
    cloud = load_point_cloud(path)
    assert cloud.N == 2 and cloud.knV == 1.0
    doc["nodes"][0]["weight"] = 0.5
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        load_point_cloud(path)


def test_refinement_keeps_structure():
    _, b, q = setup("P1", 4)
    r = q.refined(2)
    assert r.split == 2 * q.split and r.grading == q.grading and r.m == 2 * q.m
    assert np.sum(r.wx) == pytest.approx(b.knV, rel=1e-12)
    assert default_scheme(b).resolution == 2
