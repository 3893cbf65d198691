import pytest

from contactline.errors import CompatibilityFailure, SmallnessViolation
from contactline.nonlinear import (
    IterationConfig,
    epsilon_continuation,
    fixed_point_solve,
    horizon,
    metric,
    prepare_initial_data,
    size,
    zero_iterate,
)
from contactline.surface import SurfaceFunction

EPS = 0.1


def _eta(space, amp, mode=1):
    return SurfaceFunction.mode(mode, space.mesh.ell, space.n_surface, amp)


@pytest.fixture(scope="module")
def init_small(space, params, indices, law):
    return prepare_initial_data(_eta(space, 1e-3), space, params, indices, law, EPS, m=24)


@pytest.fixture(scope="module")
def solved(init_small):
    return fixed_point_solve(init_small, IterationConfig(T=0.01, n_steps=10))


def test_horizon():
    assert horizon(0.1, 0.05) == pytest.approx(0.01)
    assert horizon(0.5, 0.05, scale=2.0) == pytest.approx(0.1)


def test_config_validation():
    with pytest.raises(ValueError):
        IterationConfig(T=0.0)
    with pytest.raises(ValueError):
        IterationConfig(n_steps=1)


def test_zero_data_is_a_fixed_point(space, params, indices, law):
    init = prepare_initial_data(_eta(space, 0.0), space, params, indices, law, EPS, m=12)
    res = fixed_point_solve(init, IterationConfig(T=0.01, n_steps=4))
    assert res.iterations == 1
    assert res.distances == [0.0]


def test_small_data_contracts(solved):
    assert solved.iterations <= 8
    assert all(r < 1.0 for r in solved.ratios)
    assert solved.distances[0] == pytest.approx(1.293e-2, rel=0.02)
    assert solved.distances[-1] < 1e-8
    assert all(solved.in_ball)
    assert len(solved.reports[0].components) == 15


def test_compatibility_residuals(init_small):
    assert set(init_small.residuals) == {"div_A u0", "u0.nu on walls", "u0.N - d_t eta(0)", "galerkin system at t=0"}
    assert max(init_small.residuals.values()) <= 1e-8


def test_surface_mean_conserved(solved):
    for eta in solved.iterate.etas:
        assert abs(eta.mean) < 1e-10


def test_nonzero_mean_rejected(space, params, indices, law):
    eta = _eta(space, 1e-3) + SurfaceFunction.mode(0, space.mesh.ell, space.n_surface, 1e-3)
    with pytest.raises(CompatibilityFailure) as exc:
        prepare_initial_data(eta, space, params, indices, law, EPS, m=12)
    assert exc.value.condition == "zero-average"


def test_smallness_violation(space, params, indices, law):
    with pytest.raises(SmallnessViolation):
        prepare_initial_data(_eta(space, 0.1), space, params, indices, law, EPS, m=12, delta0=1e-3)


def test_metric_axioms(solved, init_small, indices):
    it = solved.iterate
    a = it.fields
    z = zero_iterate(init_small, a.t).fields
    b = z.__class__(**{**a.__dict__, "v": 0.5 * a.v, "G": 0.5 * a.G, "H": 0.5 * a.H})
    assert metric(a, a, indices, EPS).total == 0.0
    dab, dba = metric(a, b, indices, EPS).total, metric(b, a, indices, EPS).total
    assert dab == pytest.approx(dba, rel=1e-14)
    assert metric(a, z, indices, EPS).total <= dab + metric(b, z, indices, EPS).total + 1e-14
    assert size(it, indices, EPS) > 0
    with pytest.raises(ValueError):
        metric(a, zero_iterate(init_small, a.t[:-1]).fields, indices, EPS)


def test_continuation_contracts(space, params, indices, law):
    cfg = IterationConfig(T=0.05, n_steps=6, eps_list=(0.1, 0.05))
    res = epsilon_continuation(_eta(space, 1e-3), space, params, indices, law, cfg, m=12, threads=2)
    assert res.T == pytest.approx(0.0025)
    assert len(res.distances) == 1 and res.distances[0] > 0
    assert all(r.T == res.T for r in res.results)
    single = epsilon_continuation(_eta(space, 1e-3), space, params, indices, law,
                                  IterationConfig(eps_list=(0.1,), n_steps=4), m=12)
    assert single.distances == [] and single.T == pytest.approx(0.01)
    with pytest.raises(ValueError):
        epsilon_continuation(_eta(space, 1e-3), space, params, indices, law,
                             IterationConfig(eps_list=(0.05, 0.1)), m=12)
