import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contactline.errors import DegenerateMap
from contactline.geometry import (
    curvature_remainder,
    curvature_remainder_dy,
    curvature_remainder_dz,
    cutoff_phi,
    pull_back_divergence,
    remainders,
)
from contactline.surface import SurfaceFunction


def random_surface(rng, n, ell, amp=0.05):
    a = np.zeros(n)
    a[1:7] = amp * rng.standard_normal(6) / np.arange(1, 7) ** 2
    return SurfaceFunction(a, ell)


def _field(x):
    """A smooth non-solenoidal reference field with its gradient."""
    x1, x2 = x[:, 0], x[:, 1]
    v = np.stack([np.sin(x1) * x2 + x2**2, np.cos(x2) * x1 - x1**3], -1)
    G = np.zeros((len(x1), 2, 2))
    G[:, 0, 0] = np.cos(x1) * x2
    G[:, 0, 1] = np.sin(x1) + 2 * x2
    G[:, 1, 0] = np.cos(x2) - 3 * x1**2
    G[:, 1, 1] = -np.sin(x2) * x1
    return v, G


def test_identities_random_surfaces(space, rng):
    ell, n = space.mesh.ell, space.n_surface
    for _ in range(5):
        eta, deta = random_surface(rng, n, ell), random_surface(rng, n, ell)
        geo = space.geometry(eta, deta)
        MtN = np.einsum("pji,pj->pi", geo.top.M, geo.N_top)
        N0 = np.stack([-space.zeta0(space.top.x[:, 0], 1), np.ones(len(MtN))], -1)
        assert np.abs(MtN - N0).max() < 1e-10
        v, G = _field(space.bulk.x)
        lhs, rhs = pull_back_divergence(v, G, geo.bulk)
        assert np.abs(geo.bulk.J * lhs - geo.bulk.J * rhs).max() < 1e-10
        vw, _ = _field(space.wall.x)
        # impermeable: u . nu = 0 on walls and bottom
        xw = space.wall.x
        vw = vw * np.stack([ell**2 - xw[:, 0] ** 2, xw[:, 1] + space.depth], -1)
        Rn = np.einsum("pij,pj,pi->p", geo.wall.R, vw, space.wall_nu)
        assert np.abs(Rn).max() < 1e-10


def test_identity_geometry(geo_id):
    c = geo_id.bulk
    assert c.identity
    assert np.all(c.J == 1.0)
    np.testing.assert_array_equal(c.M, np.broadcast_to(np.eye(2), c.M.shape))


def test_degenerate_map_detected(space):
    ell, n = space.mesh.ell, space.n_surface
    eta = SurfaceFunction.mode(1, ell, n, 0.5)
    with pytest.raises(DegenerateMap) as exc:
        space.geometry(eta, SurfaceFunction.zeros(ell, n))
    assert exc.value.min_j < 0


def test_cutoff(zeta0):
    m = zeta0.min_height
    z = np.array([0.0, 0.2 * m, 0.5 * m, 0.8 * m])
    phi, dphi = cutoff_phi(z, m)
    assert phi[0] == 0 and phi[1] == 0
    assert phi[2] == pytest.approx(0.5 * m) and phi[3] == pytest.approx(0.8 * m)
    assert dphi[3] == 1.0


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(-0.5, 0.5))
def test_remainder_properties(y, z):
    assert curvature_remainder(y, 0.0) == 0.0
    assert curvature_remainder_dz(y, 0.0) == 0.0
    assert abs(curvature_remainder(y, z)) <= 3.0 * z * z + 1e-15
    h = 1e-6
    fd_y = (curvature_remainder(y + h, z) - curvature_remainder(y - h, z)) / (2 * h)
    fd_z = (curvature_remainder(y, z + h) - curvature_remainder(y, z - h)) / (2 * h)
    assert fd_y == pytest.approx(curvature_remainder_dy(y, z), abs=1e-7)
    assert fd_z == pytest.approx(curvature_remainder_dz(y, z), abs=1e-7)


def test_remainder_forcing_derivative(zeta0, law, rng):
    eta = random_surface(rng, 32, zeta0.ell, 0.2)
    x = np.linspace(-0.9, 0.9, 11)
    h = 1e-6
    r = remainders(zeta0, eta, x, np.array([0.1, -0.2]), 1.5, law)
    fd = (remainders(zeta0, eta, x + h, 0.0, 1.5, law).F3 - remainders(zeta0, eta, x - h, 0.0, 1.5, law).F3) / (2 * h)
    np.testing.assert_allclose(fd, r.dF3, atol=1e-7)
    np.testing.assert_allclose(r.F7, law.kappa * law.hatW(np.array([0.1, -0.2])))
