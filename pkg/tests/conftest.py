import numpy as np
import pytest

from qext import build_toric_basis, default_scheme, projective_line, projective_plane, unit_square
from qext.hermitian_core import expm_hermitian, hermitize


def random_hermitian(rng, N, scale=1.0):
    X = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    return scale * hermitize(X)


def random_spd(rng, N):
    X = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    return X @ X.conj().T + N * np.eye(N)


def seeded_form(rng, N, amplitude=0.5, diagonal=False):
    """exp of a seeded hermitian matrix with operator norm equal to amplitude."""
    if diagonal:
        d = rng.standard_normal(N)
        d *= amplitude / np.max(np.abs(d))
        return np.diag(np.exp(d)).astype(complex)
    X = random_hermitian(rng, N)
    X *= amplitude / np.max(np.abs(np.linalg.eigvalsh(X)))
    return expm_hermitian(X)


def setup(name, k, **kw):
    P = {"P1": projective_line, "P2": projective_plane, "square": unit_square}[name]()
    b = build_toric_basis(P, k)
    return P, b, default_scheme(b, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
