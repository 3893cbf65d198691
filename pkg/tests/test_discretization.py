from math import factorial

import numpy as np
import pytest

from contactline.discretization import (
    DiscreteSpace,
    assemble,
    build_initial_basis,
    discrete_dimension,
    load_basis,
    orthonormality_defects,
    push_forward,
    save_basis,
)
from contactline.errors import CheckpointMismatch, SubspaceTooSmall
from contactline.mesh import line_rule, load_mesh, p2_shape, save_mesh, triangle_rule
from contactline.surface import SurfaceFunction


@pytest.mark.parametrize("n", [2, 3, 4])
def test_triangle_rule_exactness(n):
    xi, w = triangle_rule(n)
    for a in range(2 * n):
        for b in range(2 * n - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            assert w @ (xi[:, 0] ** a * xi[:, 1] ** b) == pytest.approx(exact, rel=1e-12)


def test_line_rule_exactness():
    x, w = line_rule(5)
    for k in range(10):
        assert w @ x**k == pytest.approx(1.0 / (k + 1), rel=1e-13)


def test_p2_shape_nodal():
    nodes = np.array([[0, 0], [1, 0], [0, 1], [0.5, 0], [0.5, 0.5], [0, 0.5]])
    N, dN, _ = p2_shape(nodes)
    np.testing.assert_allclose(N, np.eye(6), atol=1e-15)
    np.testing.assert_allclose(dN.sum(axis=-2), 0.0, atol=1e-14)


def test_bulk_area(space, zeta0, params):
    area = space.bulk.weights.sum()
    exact = params.volume + 2 * zeta0.ell * space.depth
    assert area == pytest.approx(exact, rel=1e-6)


def test_mesh_roundtrip(space, zeta0, tmp_path):
    path = tmp_path / "mesh.txt"
    save_mesh(path, space.mesh)
    m = load_mesh(path, zeta0)
    np.testing.assert_array_equal(m.cells, space.mesh.cells)
    np.testing.assert_allclose(m.nodes, space.mesh.nodes, atol=1e-14)


def test_basis_orthonormal_and_ordered(space, geo_id, params, basis24):
    dm, dk = orthonormality_defects(space, geo_id, params, basis24)
    assert dm <= 1e-10 and dk <= 1e-10
    assert basis24.lam[0] > 0
    assert np.all(np.diff(basis24.lam) >= 0)


def test_basis_constraints(space, basis24):
    X = basis24.X
    div = space.B @ X
    assert np.abs(div).max() < 1e-10
    assert np.abs(space.Tmean @ X).max() < 1e-10
    assert np.abs(X[space.fixed]).max() == 0.0
    # trace coefficients carry zero mean
    np.testing.assert_allclose(basis24.dct.mean(axis=0), 0.0, atol=1e-14)


def test_sparse_matches_dense(space, geo_id, params, basis24):
    b = build_initial_basis(space, geo_id, params, 0.1, 6, method="sparse")
    np.testing.assert_allclose(b.lam, basis24.lam[:6], rtol=1e-8)


def test_identity_forms_diagonal(space, geo_id, params, basis24):
    f = assemble(space, basis24, geo_id, params)
    np.testing.assert_allclose(f.mass, np.diag(1.0 / basis24.lam), atol=1e-10)
    assert f.asymmetry < 1e-12
    np.testing.assert_allclose(f.rcoup, 0.0, atol=1e-14)


def test_pushed_basis_weakly_solenoidal(space, params, basis24):
    ell, n = space.mesh.ell, space.n_surface
    eta = SurfaceFunction.mode(2, ell, n, 0.05)
    geo = space.geometry(eta, SurfaceFunction.mode(3, ell, n, 0.1))
    pb = push_forward(space, basis24, geo)
    # J div_A (M phi) = div phi pointwise, so the weak divergence is unchanged
    weak = space.Lp.T @ (space.bulk.weights[:, None] * geo.bulk.J[:, None] * pb.div)
    assert np.abs(weak).max() < 1e-10


def test_subspace_too_small(space, geo_id, params):
    with pytest.raises(SubspaceTooSmall):
        build_initial_basis(space, geo_id, params, 0.1, discrete_dimension(space) + 1)


def test_checkpoint_roundtrip(space, basis24, zeta0, params, tmp_path):
    path = tmp_path / "basis.bin"
    save_basis(path, basis24, space)
    b, header = load_basis(path, space)
    np.testing.assert_array_equal(b.lam, basis24.lam)
    np.testing.assert_array_equal(b.X, basis24.X)
    assert header["m"] == 24
    other = DiscreteSpace(zeta0, params, 6, 4)
    with pytest.raises(CheckpointMismatch):
        load_basis(path, other)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"garbage!" + bytes(16))
    with pytest.raises(CheckpointMismatch):
        load_basis(bad, space)
