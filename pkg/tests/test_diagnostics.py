import io

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from contactline.diagnostics import (
    LEDGER_COLUMNS,
    cumulative_identity,
    fit_decay,
    identity_residual,
    ledger,
    write_ledger,
)
from contactline.discretization import build_initial_basis
from contactline.errors import DegenerateSeries
from contactline.linear_solver import LinearProblem, run_linear

T = np.linspace(0.0, 2.0, 41)


def test_fit_exact_exponential():
    lam, C = fit_decay(T, 3.0 * np.exp(-2.0 * T))
    assert lam == pytest.approx(2.0, abs=1e-8)
    assert C == pytest.approx(1.0, abs=1e-8)


def test_fit_constant_series():
    lam, C = fit_decay(T, np.full_like(T, 0.7))
    assert lam == pytest.approx(0.0, abs=1e-12)
    assert C == pytest.approx(1.0, abs=1e-12)


def test_fit_window_and_overshoot():
    E = np.exp(-T) * (1 + 0.5 * np.sin(3 * T) ** 2)
    lam, C = fit_decay(T, E)
    assert C > 1.0
    lam_w, _ = fit_decay(T, np.exp(-T), window=(0.5, 1.5))
    assert lam_w == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(-3.0, 3.0), st.floats(0.0, 10.0))
def test_fit_invariant_under_scaling_and_shift(c, rate, t0):
    E = np.exp(-rate * T) * (1.2 + np.cos(T))
    lam, C = fit_decay(T, E)
    lam2, C2 = fit_decay(T + t0, c * E)
    assert lam2 == pytest.approx(lam, abs=1e-8)
    assert C2 == pytest.approx(C, rel=1e-8)


@pytest.mark.parametrize(
    "t,E",
    [([0.0], [1.0]), ([0.0, 1.0, 2.0], [1.0, 0.5, 0.0]), ([0.0, 1.0], [1.0, np.nan])],
)
def test_degenerate_series(t, E):
    with pytest.raises(DegenerateSeries):
        fit_decay(t, E)


def test_cumulative_identity_exact_on_linear_data():
    t = np.linspace(0, 1, 11)
    D = 2.0 + t
    E = 5.0 - (2.0 * t + 0.5 * t**2)
    np.testing.assert_allclose(cumulative_identity(t, E, D, np.zeros_like(t)), 0.0, atol=1e-14)


def test_zero_trajectory_ledger(space, basis24, params, indices):
    traj = run_linear(LinearProblem(space, basis24, params, 0.1), 0.05, 4)
    rows = ledger(traj, indices)
    assert len(rows) == 5
    for r in rows:
        assert all(getattr(r, c) == 0.0 for c in LEDGER_COLUMNS if c != "t")
    buf = io.StringIO()
    write_ledger(rows, buf)
    assert buf.getvalue().splitlines()[0] == ",".join(LEDGER_COLUMNS)
    with pytest.raises(ValueError):
        ledger(run_linear(LinearProblem(space, basis24, params, 0.1), 0.05, 1), indices)


def test_one_mode_energy_matches_closed_form(space, geo_id, params):
    eps = 0.1
    b1 = build_initial_basis(space, geo_id, params, eps, 1)
    errs = []
    for n in (10, 20, 40):
        prob = LinearProblem(space, b1, params, eps, d0=np.ones(1))
        traj = run_linear(prob, 1.0 / n, n, pressure=False)
        f = prob.forms_at(0, 0.0)
        M, B, S = f.mass[0, 0], (f.stiff + eps * f.surf + f.corner)[0, 0], f.surf[0, 0]
        # M Y'' + B Y' + S Y = 0, Y(0) = 0, Y'(0) = 1
        A = np.array([[0.0, 1.0], [-S / M, -B / M]])
        Y, d = sla.expm(A * 1.0) @ np.array([0.0, 1.0])
        exact = 0.5 * M * d * d + 0.5 * S * Y * Y
        errs.append(abs(traj.column("E_basic")[-1] - exact))
        assert traj.column("E_basic")[0] == pytest.approx(0.5 / b1.lam[0], rel=1e-10)
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders > 1.8)
    r, rmax = identity_residual(traj)
    assert rmax == np.abs(r).max()
