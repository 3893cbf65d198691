from dataclasses import replace

import numpy as np
import pytest

from contactline.errors import HistoryGap, SingularStepMatrix
from contactline.linear_solver import (
    LinearProblem,
    initial_state,
    run_linear,
    step,
    trapezoid_volterra,
    write_timeseries,
)
from contactline.verification import Manufactured, solution_errors

EPS = 0.1


def _exact(t):
    # d' + d + Y = 0, Y' = d, d(0) = 1, Y(0) = 0
    r = np.sqrt(3.0) / 2
    return np.exp(-t / 2) * (np.cos(r * t) - np.sin(r * t) / (2 * r))


def _volterra_error(n, T=2.0):
    dt = T / n
    d, dd, Y = np.array([1.0]), np.array([-1.0]), np.zeros(1)
    for _ in range(n):
        d, dd, Y = trapezoid_volterra(1.0, 1.0, 1.0, d, dd, Y, np.zeros(1), dt)
    return abs(d[0] - _exact(T))


def test_volterra_second_order():
    errs = np.array([_volterra_error(n) for n in (20, 40, 80, 160)])
    orders = np.log2(errs[:-1] / errs[1:])
    np.testing.assert_allclose(orders, 2.0, atol=0.02)
    assert errs[0] == pytest.approx(4.47e-4, rel=0.01)


def test_singular_step_matrix():
    with pytest.raises(SingularStepMatrix):
        trapezoid_volterra(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)),
                           np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2), 0.1)


def test_rest_state_stays_at_rest(space, basis24, params):
    prob = LinearProblem(space, basis24, params, EPS)
    traj = run_linear(prob, 0.05, 4)
    for s in traj.states:
        assert np.all(s.d == 0.0) and np.all(s.Y == 0.0)
        assert np.abs(s.q).max() < 1e-12
    assert traj.max_identity_residual() == 0.0


def test_history_gap(space, basis24, params):
    prob = LinearProblem(space, basis24, params, EPS)
    s0 = initial_state(prob)
    with pytest.raises(HistoryGap):
        step(s0, prob, prob.forms_at(2, 0.1), 0.05)
    with pytest.raises(HistoryGap):
        step(replace(s0, history=()), prob, prob.forms_at(1, 0.05), 0.05)


def test_unforced_energy_decays(space, basis24, params, rng):
    d0 = rng.standard_normal(24) / basis24.lam
    res = []
    for dt in (0.02, 0.01):
        traj = run_linear(LinearProblem(space, basis24, params, EPS, d0=d0), dt, int(round(0.4 / dt)), pressure=False)
        E = traj.column("E_basic")
        assert np.all(np.diff(E) < 0)
        res.append(traj.max_identity_residual())
    assert res[0] < 1e-2 * E[0]
    assert 3.5 <= res[0] / res[1] <= 4.5


@pytest.fixture(scope="module")
def mms(params, zeta0):
    return Manufactured(params, EPS, zeta0)


@pytest.fixture(scope="module")
def mms_run(space, basis_full, params, mms):
    prob = LinearProblem(space, basis_full, params, EPS, forcing=mms.sampler(space))
    return run_linear(prob, 0.05, 8, residuals=True)


def test_mms_coarse_errors(mms_run, mms):
    err = solution_errors(mms_run, mms)
    assert err["velocity"] == pytest.approx(8.88e-4, rel=0.02)
    assert err["pressure"] == pytest.approx(6.50e-3, rel=0.02)
    assert err["theta"] == pytest.approx(4.88e-4, rel=0.02)
    r = mms_run.records[-1]
    assert r["kinematic"] < 1e-12
    assert abs(r["q0_mean"]) < 1e-12


def test_mms_timeseries_columns(mms_run):
    text = write_timeseries(mms_run)
    head = text.splitlines()[0].split(",")
    assert head[:3] == ["t", "E_basic", "D_basic"]
    assert len(text.splitlines()) == 10


def test_identity_residual_quarters(space, basis_full, params, mms):
    res = []
    for dt in (0.05, 0.025):
        prob = LinearProblem(space, basis_full, params, EPS, forcing=mms.sampler(space))
        res.append(run_linear(prob, dt, int(round(0.4 / dt)), pressure=False).max_identity_residual())
    assert res[0] == pytest.approx(2.7596e-3, rel=0.01)
    assert 3.5 <= res[0] / res[1] <= 4.5


def test_surface_forcing_integrates_by_parts(space, basis_full, params, mms, mms_run):
    ell = space.mesh.ell
    phi = lambda x, k=0: [0.2 * np.sin(2 * x) + 0.1 * x * x, 0.4 * np.cos(2 * x) + 0.2 * x][k]

    def shifted(k, t, geo):
        F = mms.forcing(space, t)
        x1, a = space.surf.x1, np.sin(2 * t)
        F3c = a * phi(np.array([-ell, ell]))
        return replace(
            F, F3=a * phi(x1), dF3=a * phi(x1, 1), F3c=F3c,
            F4=F.F4 + (a * phi(x1, 1))[:, None] * geo.N_top,
            F7=F.F7 + np.array([F3c[0], -F3c[1]]),
        )

    prob = LinearProblem(space, basis_full, params, EPS, forcing=shifted)
    traj = run_linear(prob, 0.05, 8, pressure=False)
    np.testing.assert_allclose(traj.states[-1].d, mms_run.states[-1].d, atol=1e-9)
