"""epsilon-regularized linear problem in Galerkin coefficients.

With v = sum_j d_j w^j(t), theta = xi0 + sum_j Y_j a_j and Y' = d, testing
the pressureless weak form against w^i gives the Volterra system

    Mass d' + (Rcoup + Stiff + eps Surf + Corner) d + Surf Y = F - g0,

where a_j = w^j . N is time independent, so the memory kernel is the
constant matrix Surf and the history integral is the running sum Y.
Both d and Y are advanced by the implicit trapezoidal rule.
"""

import csv
import io
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .discretization import assemble, identity_geometry, pushed_fields, surface_fe, sym_grad
from .errors import HistoryGap, SaddlePointSolveFailure, SingularStepMatrix
from .surface import SurfaceFunction


@dataclass
class Forcing:
    """Forcing samples at one time on the quadrature sets of a DiscreteSpace."""

    F1: np.ndarray = None  # (P, 2) bulk
    F3: np.ndarray = None  # (Pt,) top
    dF3: np.ndarray = None  # (Pt,) x1-derivative of F3
    F3c: np.ndarray = None  # (2,) F3 at -ell, +ell
    F4: np.ndarray = None  # (Pt, 2)
    F5: np.ndarray = None  # (Pw,) walls and bottom
    F7: np.ndarray = None  # (2,) at -ell, +ell


def load_fe(space, geo, forcing):
    """Right side on all reference dofs: the forcing functional at w = M phi_a."""
    out = np.zeros(space.ndof)
    if forcing is None:
        return out
    if forcing.F1 is not None:
        c = geo.bulk
        y = np.einsum("pji,pj->pi", c.M, (space.bulk.weights * c.J)[:, None] * forcing.F1)
        out += space.Ev.T @ y.ravel()
    sd = space.surf
    if forcing.F3 is not None:
        out -= sd.Tr1.T @ (sd.weights * forcing.F3)
    if forcing.F4 is not None:
        y = np.einsum("pji,pj->pi", geo.top.M, sd.weights[:, None] * forcing.F4)
        out -= space.Ev_t.T @ y.ravel()
    if forcing.F5 is not None:
        c = geo.wall
        tM = np.einsum("pj,pji->pi", space.wall_tau, c.M)
        y = (space.wall.weights * c.J * forcing.F5)[:, None] * tM
        out -= space.Ev_w.T @ y.ravel()
    if forcing.F7 is not None:
        out -= space.Tc.T @ np.asarray(forcing.F7, float)
    return out


@dataclass
class LinearProblem:
    space: object
    basis: object
    params: object
    epsilon: float
    xi0: SurfaceFunction = None
    d0: np.ndarray = None
    geometry: object = None  # callable (k, t) -> GeometrySet; None for eta = 0
    forcing: object = None  # callable (k, t, geo) -> Forcing or None

    def __post_init__(self):
        sp_ = self.space
        if self.xi0 is None:
            self.xi0 = SurfaceFunction.zeros(sp_.mesh.ell, sp_.n_surface)
        if self.d0 is None:
            self.d0 = np.zeros(self.basis.m)
        sd = sp_.surf
        x = sd.x1
        self._xi = (self.xi0(x), self.xi0(x, 1), self.xi0(x, 2))
        self._xi_c = np.array([self.xi0(-sp_.mesh.ell, 1), self.xi0(sp_.mesh.ell, 1)])
        g, s = self.params.g, self.params.sigma
        w = sd.weights
        a, a1 = self.basis.a, self.basis.a1
        self.g0 = a.T @ (g * w * self._xi[0]) + a1.T @ (s * w * sd.curv_w * self._xi[1])
        self.g0_fe = sd.Tr.T @ (g * w * self._xi[0]) + sd.Tr1.T @ (s * w * sd.curv_w * self._xi[1])
        self._static = None

    def geometry_at(self, k, t):
        if self.geometry is None:
            if self._static is None:
                self._static = identity_geometry(self.space)
            return self._static
        return self.geometry(k, t)

    def forcing_at(self, k, t, geo):
        return None if self.forcing is None else self.forcing(k, t, geo)

    def forms_at(self, k, t):
        geo = self.geometry_at(k, t)
        if self.geometry is None and getattr(self, "_static_forms", None) is not None:
            return replace(self._static_forms, t=t)
        forms = assemble(self.space, self.basis, geo, self.params, t=t)
        if self.geometry is None:
            self._static_forms = forms
        return forms

    def damping(self, forms):
        return forms.rcoup + forms.stiff + self.epsilon * forms.surf + forms.corner

    def rhs(self, forms, forcing):
        fe = load_fe(self.space, forms.geo, forcing)
        return self.basis.scaled.T @ fe, fe


@dataclass(frozen=True)
class SimState:
    t: float
    k: int
    d: np.ndarray
    ddot: np.ndarray
    Y: np.ndarray
    load: np.ndarray  # forcing part of the right side (without g0)
    theta: SurfaceFunction
    dtheta: SurfaceFunction
    history: tuple = ()
    times: tuple = ()
    q: np.ndarray = None  # full P1 pressure q0 + qbar
    q0: np.ndarray = None
    qbar: float = None


def trapezoid_volterra(mass1, B1, K, d, ddot, Y, rhs1, dt):
    """One trapezoidal step of mass d' + B d + K Y = rhs, Y' = d."""
    mass1 = np.atleast_2d(mass1)
    A = mass1 + 0.5 * dt * np.atleast_2d(B1) + 0.25 * dt * dt * np.atleast_2d(K)
    b = mass1 @ (d + 0.5 * dt * ddot) + 0.5 * dt * (rhs1 - np.atleast_2d(K) @ (Y + 0.5 * dt * d))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(A, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularStepMatrix(np.inf) from exc
    piv = np.abs(np.diag(lu[0]))
    if not np.all(piv > 1e-14 * np.abs(A).max()):
        with np.errstate(all="ignore"):
            raise SingularStepMatrix(float(np.linalg.cond(A)) if piv.min() > 0 else np.inf)
    d1 = sla.lu_solve(lu, b)
    Y1 = Y + 0.5 * dt * (d + d1)
    ddot1 = np.linalg.solve(mass1, rhs1 - np.atleast_2d(B1) @ d1 - np.atleast_2d(K) @ Y1)
    return d1, ddot1, Y1


def _surface_state(problem, Y, d):
    b = problem.basis
    ell = problem.space.mesh.ell
    theta = SurfaceFunction(problem.xi0.coeffs + SurfaceFunction.from_nodal(b.dct @ Y, ell).coeffs, ell)
    dtheta = SurfaceFunction.from_nodal(b.dct @ d, ell)
    return theta, dtheta


def initial_state(problem, forms0=None):
    forms0 = forms0 or problem.forms_at(0, 0.0)
    forcing = problem.forcing_at(0, 0.0, forms0.geo)
    load, _ = problem.rhs(forms0, forcing)
    d = np.asarray(problem.d0, float)
    Y = np.zeros_like(d)
    ddot = np.linalg.solve(forms0.mass, load - problem.g0 - problem.damping(forms0) @ d)
    theta, dtheta = _surface_state(problem, Y, d)
    return SimState(0.0, 0, d, ddot, Y, load, theta, dtheta, (d,), (0.0,))


def step(state, problem, forms_next, dt):
    t1 = state.t + dt
    if forms_next.t is not None and abs(forms_next.t - t1) > 1e-12 * max(1.0, abs(t1)):
        raise HistoryGap(f"forms at t={forms_next.t} but step targets t={t1}")
    if len(state.history) != state.k + 1:
        raise HistoryGap(f"history has {len(state.history)} entries at step {state.k}")
    forcing = problem.forcing_at(state.k + 1, t1, forms_next.geo)
    load, _ = problem.rhs(forms_next, forcing)
    d1, ddot1, Y1 = trapezoid_volterra(
        forms_next.mass, problem.damping(forms_next), forms_next.surf,
        state.d, state.ddot, state.Y, load - problem.g0, dt,
    )
    theta, dtheta = _surface_state(problem, Y1, d1)
    return SimState(
        t1, state.k + 1, d1, ddot1, Y1, load, theta, dtheta,
        state.history + (d1,), state.times + (t1,),
    )


# pressure


def _saddle(space):
    lu = space.__dict__.get("_saddle_lu")
    if lu is None:
        f = space.free
        R = space.gram_h1[f][:, f]
        B = space.B[:, f]
        A = sp.bmat([[R, B.T], [B, None]]).tocsc()
        try:
            lu = splu(A)
        except RuntimeError as exc:
            raise SaddlePointSolveFailure(str(exc)) from exc
        space._saddle_lu = lu
    return lu


def fe_residual(state, problem, forms, forcing=None):
    """Lambda(M phi_a): forcing minus all velocity/surface terms of the weak form."""
    sp_, p = problem.space, problem.params
    Xs = problem.basis.scaled
    u, ut, Yb = Xs @ state.d, Xs @ state.ddot, Xs @ state.Y
    fe = forms.fe
    surf, corner, _ = surface_fe(sp_, p)
    load = load_fe(sp_, forms.geo, forcing)
    return (
        load - problem.g0_fe
        - fe.mass @ ut - fe.rcoup @ u - fe.stiff @ u
        - problem.epsilon * (surf @ u) - corner @ u - surf @ Yb
    )


@dataclass
class PressureResult:
    q: np.ndarray  # q0 + qbar on P1 nodes
    q0: np.ndarray
    qbar: float
    q0_mean: float
    mean_gap: float  # J-mean of the least-squares pressure minus qbar
    defect: float  # size of the part of Lambda not represented by a pressure


def recover_pressure(state, problem, forms, forcing=None):
    sp_ = problem.space
    lam = fe_residual(state, problem, forms, forcing)
    f = sp_.free
    lu = _saddle(sp_)
    rhs = np.concatenate([-lam[f], np.zeros(sp_.B.shape[0])])
    sol = lu.solve(rhs)
    if not np.all(np.isfinite(sol)):
        raise SaddlePointSolveFailure("non-finite pressure")
    z, q = sol[: len(f)], sol[len(f):]
    c = forms.geo.bulk
    wJ = sp_.bulk.weights * c.J
    meanJ = lambda qq: float(wJ @ (sp_.Lp @ qq) / wJ.sum())
    q_ls_mean = meanJ(q)
    q0 = q - q_ls_mean
    qbar = mean_normal_stress(state, problem, forms, q0, forcing)
    return PressureResult(q0 + qbar, q0, qbar, meanJ(q0), q_ls_mean - qbar, float(np.sqrt(abs(z @ (sp_.gram_h1[f][:, f] @ z)))))


def _surface_f(state, problem):
    """f = theta + eps theta_t and x1-derivatives at surface quadrature points and corners."""
    b, eps = problem.basis, problem.epsilon
    c = state.Y + eps * state.d
    xi = problem._xi
    f = (xi[0] + b.a @ c, xi[1] + b.a1 @ c, xi[2] + b.a2 @ c)
    fc1 = problem._xi_c + b.corner1 @ c
    return f, fc1


def capillary_operator(state, problem):
    """K(f) = g f - sigma (f'/c)' at surface points and its integral over (-ell, ell)."""
    p, sd = problem.params, problem.space.surf
    (f, f1, f2), fc1 = _surface_f(state, problem)
    z1 = sd.slope
    z2 = problem.space.zeta0(sd.x1, 2)
    ic = sd.curv_w
    dic = -3.0 * z1 * z2 * (1.0 + z1**2) ** -2.5
    Kf = p.g * f - p.sigma * (f2 * ic + f1 * dic)
    ell = problem.space.mesh.ell
    zc = problem.space.zeta0(np.array([-ell, ell]), 1)
    icc = (1.0 + zc**2) ** -1.5
    integral = p.g * (sd.weights @ f) - p.sigma * (fc1[1] * icc[1] - fc1[0] * icc[0])
    return Kf, integral, fc1, icc


def _top_fields(state, problem, forms):
    sp_ = problem.space
    u = problem.basis.scaled @ state.d
    c = forms.geo.top
    f = pushed_fields(sp_, c, u[:, None], "top")
    D = sym_grad(c, f["G"])[..., 0]
    return f["W"][..., 0], D


def mean_normal_stress(state, problem, forms, q0, forcing=None):
    """The constant qbar making the Sigma-average of the normal stress balance hold."""
    sp_, p = problem.space, problem.params
    sd = sp_.surf
    N = forms.geo.N_top
    nn = np.einsum("pi,pi->p", N, N)
    _, Kint, _, _ = capillary_operator(state, problem)
    _, D = _top_fields(state, problem, forms)
    visc = p.mu * np.einsum("pi,pij,pj->p", N, D, N) / nn
    total = Kint - sd.weights @ (sp_.Lp_t @ q0) + sd.weights @ visc
    if forcing is not None and forcing.F3c is not None:
        total -= forcing.F3c[1] - forcing.F3c[0]
    if forcing is not None and forcing.F4 is not None:
        total += sd.weights @ (np.einsum("pi,pi->p", forcing.F4, N) / nn)
    return float(total / (2.0 * sp_.mesh.ell))


# strong residuals


def strong_residuals(state, problem, forms, pressure, forcing=None):
    """Discrete L2 norms of the seven equations of the linear problem."""
    sp_, p = problem.space, problem.params
    Xs = problem.basis.scaled
    u, ut = Xs @ state.d, Xs @ state.ddot
    c = forms.geo.bulk
    F = forcing or Forcing()
    fb = pushed_fields(sp_, c, np.stack([u, ut], -1))
    vt_ref = fb["W"][..., 1]
    G, H = fb["G"][..., 0], fb["H"][..., 0]
    dtv = vt_ref + np.einsum("pij,pj->pi", c.dtM, fb["U"][..., 0])
    gq = (sp_.Gp @ pressure.q).reshape(-1, 2)
    grad_q = np.einsum("pik,pk->pi", c.calA, gq)
    A, dA = c.calA, c.dcalA
    # d_k D_ij, with D_ij = A_il G_jl + A_jl G_il and H[p, j, l, k] = d_k d_l w_j
    dD = np.einsum("pilk,pjl->pijk", dA, G) + np.einsum("pil,pjlk->pijk", A, H)
    dD = dD + np.transpose(dD, (0, 2, 1, 3))
    divD = np.einsum("pjk,pijk->pi", A, dD)
    mom = dtv + grad_q - p.mu * divD
    if F.F1 is not None:
        mom = mom - F.F1
    wJ = sp_.bulk.weights * c.J
    out = {}
    out["momentum"] = float(np.sqrt(wJ @ np.sum(mom**2, -1)))
    div = np.einsum("pjk,pjk->p", A, G)
    out["divergence"] = float(np.sqrt(wJ @ div**2))

    sd = sp_.surf
    N = forms.geo.N_top
    vt, Dt = _top_fields(state, problem, forms)
    qt = sp_.Lp_t @ pressure.q
    Kf, _, fc1, icc = capillary_operator(state, problem)
    S_N = qt[:, None] * N - p.mu * np.einsum("pij,pj->pi", Dt, N)
    scal = Kf.copy()
    if F.dF3 is not None:
        scal -= F.dF3
    st = S_N - scal[:, None] * N
    if F.F4 is not None:
        st -= F.F4
    out["stress"] = float(np.sqrt(sd.weights @ np.sum(st**2, -1)))

    cw = forms.geo.wall
    fw = pushed_fields(sp_, cw, u[:, None], "wall")
    vw, Dw = fw["W"][..., 0], sym_grad(cw, fw["G"])[..., 0]
    nu, tau = sp_.wall_nu, sp_.wall_tau
    slip = -p.mu * np.einsum("pi,pij,pj->p", tau, Dw, nu) - p.beta * np.einsum("pi,pi->p", vw, tau)
    if F.F5 is not None:
        slip = slip - F.F5
    out["slip"] = float(np.sqrt((sp_.wall.weights * cw.J) @ slip**2))

    theta_t = problem.basis.a @ state.d
    kin = theta_t - np.einsum("pi,pi->p", vt, N)
    out["kinematic"] = float(np.sqrt(sd.weights @ kin**2))

    speed = problem.basis.corner @ state.d
    F3c = np.zeros(2) if F.F3c is None else np.asarray(F.F3c)
    F7 = np.zeros(2) if F.F7 is None else np.asarray(F.F7)
    for i, (name, sgn) in enumerate((("contact_left", -1.0), ("contact_right", 1.0))):
        r = -sgn * (p.sigma * fc1[i] * icc[i] + F3c[i]) - p.kappa * speed[i] - F7[i]
        out[name] = float(abs(r))
    return out


# energy bookkeeping


def surface_norm2(problem, vals, d1):
    p, sd = problem.params, problem.space.surf
    return float(sd.weights @ (p.g * vals**2 + p.sigma * sd.curv_w * d1**2))


def energy_terms(state, problem, forms):
    """(E, D, work) of the basic energy identity at one time."""
    b = problem.basis
    d = state.d
    xi = problem._xi
    theta = xi[0] + b.a @ state.Y
    theta1 = xi[1] + b.a1 @ state.Y
    E = 0.5 * d @ forms.mass @ d + 0.5 * surface_norm2(problem, theta, theta1)
    D = d @ forms.stiff @ d + problem.epsilon * d @ forms.surf @ d + d @ forms.corner @ d
    work = d @ state.load + 0.5 * d @ forms.dtJ_mass @ d
    return float(E), float(D), float(work)


@dataclass
class Trajectory:
    problem: LinearProblem
    dt: float
    states: list = field(default_factory=list)
    records: list = field(default_factory=list)
    forms: list = field(default_factory=list)

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    def column(self, name):
        return np.array([r[name] for r in self.records])

    def max_identity_residual(self):
        return float(np.abs(self.column("identity_residual")).max())


class EnergyAudit:
    """Running residual of E(t) - E(0) + int_0^t (D - work), trapezoidal in time."""

    def __init__(self, dt):
        self.dt = dt
        self.E0 = None
        self.integral = 0.0
        self.prev = None

    def update(self, E, D, work):
        if self.E0 is None:
            self.E0 = E
        else:
            pD, pW = self.prev
            self.integral += 0.5 * self.dt * ((D - work) + (pD - pW))
        self.prev = (D, work)
        return E - self.E0 + self.integral


def basic_record(state, problem, forms, audit):
    E, D, work = energy_terms(state, problem, forms)
    speed = problem.basis.corner @ state.d
    return {
        "t": state.t, "E_basic": E, "D_basic": D, "work": work,
        "identity_residual": audit.update(E, D, work),
        "corner_speed_left": float(speed[0]), "corner_speed_right": float(speed[1]),
        "theta_mean": state.theta.mean,
    }


RESIDUAL_NAMES = ("momentum", "divergence", "stress", "slip", "kinematic", "contact_left", "contact_right")


def run_linear(problem, dt, n_steps, pressure=True, residuals=False, keep_forms=False):
    forms = problem.forms_at(0, 0.0)
    state = initial_state(problem, forms)
    traj = Trajectory(problem, dt)
    audit = EnergyAudit(dt)

    def record(state, forms):
        rec = basic_record(state, problem, forms, audit)
        forcing = problem.forcing_at(state.k, state.t, forms.geo)
        if pressure or residuals:
            pr = recover_pressure(state, problem, forms, forcing)
            state = replace(state, q=pr.q, q0=pr.q0, qbar=pr.qbar)
            rec.update(qbar=pr.qbar, q0_mean=pr.q0_mean)
            if residuals:
                rec.update(strong_residuals(state, problem, forms, pr, forcing))
        traj.states.append(state)
        traj.records.append(rec)
        if keep_forms:
            traj.forms.append(forms)

    record(state, forms)
    for k in range(1, n_steps + 1):
        t = k * dt
        forms = problem.forms_at(k, t)
        state = step(traj.states[-1], problem, forms, dt)
        record(state, forms)
    return traj


def write_timeseries(traj, fh=None):
    cols = list(traj.records[0].keys())
    buf = io.StringIO() if fh is None else fh
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in traj.records:
        w.writerow([f"{r[c]!r}" if isinstance(r[c], float) else r[c] for c in cols])
    return buf.getvalue() if fh is None else None
