"""Fixed-point construction for the nonlinear epsilon-regularized problem.

Iterate n supplies the geometry (eta^n, d_t eta^n) and the forcings

    F1 = d_t etabar W K d_2 u - u . grad_A u,   F3 = sigma R(zeta0', eta'),
    F7 = kappa hatW(d_t eta(+-ell)),            F4 = F5 = 0,

and the linear solver returns iterate n + 1 with eta^{n+1} = theta.
Distances between iterates use a discrete surrogate of the metric on
S(T, delta); the tolerance refers to that surrogate.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import FieldHistory, h1, sample_fields, surf_norm, w1q, w2q
from .discretization import build_initial_basis, discrete_dimension, pushed_fields
from .errors import (
    CompatibilityFailure,
    MaxIterExceeded,
    NotContracting,
    SmallnessViolation,
)
from .geometry import remainders
from .linear_solver import Forcing, LinearProblem, initial_state, recover_pressure, run_linear
from .surface import SurfaceFunction, fractional_norm

COMPAT_TOL = 1e-8


@dataclass(frozen=True)
class IterationConfig:
    delta: float = 1.0
    T: float = 0.05
    tol: float = 1e-8
    max_iter: int = 12
    eps_list: tuple = (0.1, 0.05, 0.025)
    n_steps: int = 10
    stall: int = 3

    def __post_init__(self):
        if not (self.delta > 0 and self.tol > 0 and self.T > 0):
            raise ValueError("delta, tol and T must be positive")
        if self.n_steps < 2:
            raise ValueError("need at least two time steps")


def horizon(eps, T_user, scale=1.0):
    """Default horizon T = min(eps^2, T_user), times an optional scale."""
    return min(eps**2, T_user) * scale


# initial data


@dataclass
class InitialData:
    space: object
    params: object
    indices: object
    law: object
    epsilon: float
    eta0: SurfaceFunction
    deta0: SurfaceFunction
    basis: object
    geo0: object
    d0: np.ndarray
    ddot0: np.ndarray
    q0: np.ndarray
    residuals: dict


def initial_forcing(space, params, law, eta, deta, geo):
    """Nonlinear forcing for a velocity that vanishes identically."""
    x1 = space.surf.x1
    ell = space.mesh.ell
    rem = remainders(space.zeta0, eta, x1, np.array([deta(-ell), deta(ell)]), params.sigma, law)
    remc = remainders(space.zeta0, eta, np.array([-ell, ell]), np.zeros(2), params.sigma, law)
    return Forcing(F1=np.zeros((len(space.bulk.weights), 2)), F3=rem.F3, dF3=rem.dF3, F3c=remc.F3, F7=rem.F7)


def prepare_initial_data(eta0, space, params, indices, law, epsilon, m=None, delta0=math.inf, method="auto", seed=0):
    """Compatible data with u0 = 0 and d_t eta(0) = 0.

    Two solves follow: the Galerkin system at t = 0 gives d_t u(0) and the
    pressure saddle problem gives p0.  Compatibility residuals are checked.
    """
    scale = max(1.0, float(np.abs(eta0.coeffs).max()))
    if abs(eta0.mean) > 1e-12 * scale:
        raise CompatibilityFailure("zero-average", abs(eta0.mean))
    size = fractional_norm(eta0, 3.0 - 1.0 / indices.q_plus, indices.q_plus)
    if size > delta0:
        raise SmallnessViolation(f"initial surface norm {size:.3e} exceeds delta0 = {delta0:.3e}")
    deta0 = SurfaceFunction.zeros(eta0.ell, eta0.n)
    geo0 = space.geometry(eta0, deta0)
    m = discrete_dimension(space) if m is None else m
    basis = build_initial_basis(space, geo0, params, epsilon, m, method=method, seed=seed)
    forcing = lambda k, t, geo: initial_forcing(space, params, law, eta0, deta0, geo)
    prob = LinearProblem(space, basis, params, epsilon, xi0=eta0, geometry=lambda k, t: geo0, forcing=forcing)
    forms = prob.forms_at(0, 0.0)
    st = initial_state(prob, forms)
    pr = recover_pressure(st, prob, forms, prob.forcing_at(0, 0.0, geo0))

    u = basis.scaled @ st.d
    c = geo0.bulk
    f = pushed_fields(space, c, u[:, None])
    div = np.einsum("pjk,pjk->p", c.calA, f["G"][..., 0])
    vw = pushed_fields(space, geo0.wall, u[:, None], "wall")["W"][..., 0]
    vt = pushed_fields(space, geo0.top, u[:, None], "top")["W"][..., 0]
    load = st.load - prob.g0
    gal = forms.mass @ st.ddot + prob.damping(forms) @ st.d - load
    res = {
        "div_A u0": float(np.sqrt(space.bulk.weights @ div**2)),
        "u0.nu on walls": float(np.sqrt(space.wall.weights @ np.einsum("pi,pi->p", vw, space.wall_nu) ** 2)),
        "u0.N - d_t eta(0)": float(
            np.sqrt(space.surf.weights @ (np.einsum("pi,pi->p", vt, geo0.N_top) - deta0(space.surf.x1)) ** 2)
        ),
        "galerkin system at t=0": float(np.linalg.norm(gal) / max(1.0, np.linalg.norm(load))),
    }
    for name, r in res.items():
        if not r <= COMPAT_TOL:
            raise CompatibilityFailure(name, r)
    return InitialData(
        space, params, indices, law, epsilon, eta0, deta0, basis, geo0, st.d, st.ddot, pr.q, res
    )


# iterates


@dataclass
class Iterate:
    """One element of S(T, delta), sampled on the time grid."""

    fields: FieldHistory
    etas: list  # SurfaceFunction per time
    detas: list
    traj: object = None  # the linear run that produced it
    geometries: list = None  # geometry the velocity was solved on


def zero_iterate(init, times):
    sp_ = init.space
    K = len(times)
    P, Pw, n = len(sp_.bulk.weights), len(sp_.wall.weights), sp_.n_surface
    fh = FieldHistory(
        t=np.asarray(times, float),
        v=np.zeros((K, P, 2)), G=np.zeros((K, P, 2, 2)), H=np.zeros((K, P, 2, 2, 2)),
        vw=np.zeros((K, Pw, 2)), q=np.zeros((K, P)), gq=np.zeros((K, P, 2)),
        eta=np.tile(init.eta0.coeffs, (K, 1)), deta=np.zeros((K, n)), corner=np.zeros((K, 2)),
        w=sp_.bulk.weights, ww=sp_.wall.weights, ell=sp_.mesh.ell,
    )
    return Iterate(fh, [init.eta0] * K, [init.deta0] * K)


def nonlinear_forcing(init, it, geos):
    """Forcing sampler built from iterate `it` on its own geometries."""
    sp_, p, law = init.space, init.params, init.law
    x1 = sp_.surf.x1
    ell = sp_.mesh.ell
    xc = np.array([-ell, ell])
    fh = it.fields

    def sample(k, t, geo):
        c = geos[k].bulk
        v, G = fh.v[k], fh.G[k]
        conv = np.einsum("pj,pjk,pik->pi", v, c.calA, G)
        F1 = (c.dt_etabar * c.W * c.K)[:, None] * G[:, :, 1] - conv
        eta = it.etas[k]
        rem = remainders(sp_.zeta0, eta, x1, fh.corner[k], p.sigma, law)
        remc = remainders(sp_.zeta0, eta, xc, fh.corner[k], p.sigma, law)
        return Forcing(F1=F1, F3=rem.F3, dF3=rem.dF3, F3c=remc.F3, F7=rem.F7)

    return sample


def apply_map(init, it, dt, n_steps):
    """The operator A: solve the linear problem frozen on iterate `it`."""
    sp_ = init.space
    geos = [sp_.geometry(it.etas[k], it.detas[k]) for k in range(n_steps + 1)]
    prob = LinearProblem(
        sp_, init.basis, init.params, init.epsilon, xi0=init.eta0, d0=init.d0,
        geometry=lambda k, t: geos[k], forcing=nonlinear_forcing(init, it, geos),
    )
    traj = run_linear(prob, dt, n_steps, pressure=True)
    fh = sample_fields(traj, geometries=geos)
    etas = [s.theta for s in traj.states]
    detas = [s.dtheta for s in traj.states]
    return Iterate(fh, etas, detas, traj, geos)


# metric


@dataclass
class MetricReport:
    components: dict
    total: float

    def __float__(self):
        return self.total


def _time_l2(t, x):
    x = np.asarray(x, float)
    return float(np.sqrt(np.sum(0.5 * np.diff(t) * (x[1:] ** 2 + x[:-1] ** 2))))


def metric(a, b, indices, eps):
    """Surrogate distance between two sampled elements on the same time grid."""
    fa, fb = a.fields if isinstance(a, Iterate) else a, b.fields if isinstance(b, Iterate) else b
    if fa.t.shape != fb.t.shape or np.abs(fa.t - fb.t).max() > 1e-12:
        raise ValueError("iterates live on different time grids")
    t, w = fa.t, fa.w
    qp, al = indices.q_plus, indices.alpha
    K = len(t)
    diff = lambda name, order=0: (fa.dt(name, order) if order else getattr(fa, name)) - (
        fb.dt(name, order) if order else getattr(fb, name)
    )
    dv, dG, dH = diff("v"), diff("G"), diff("H")
    dq, dgq = diff("q"), diff("gq")
    dvt, dGt = diff("v", 1), diff("G", 1)
    de, dde, dd2e = diff("eta"), diff("deta"), diff("deta", 1)
    dc, dc1 = diff("corner"), diff("corner", 1)
    s_top = 3.0 - 1.0 / qp

    u_h1 = [h1(w, dv[k], dG[k]) for k in range(K)]
    u_w2 = [w2q(w, dv[k], dG[k], dH[k], qp) for k in range(K)]
    p_w1 = [w1q(w, dq[k], dgq[k], qp) for k in range(K)]
    ut_h1 = [h1(w, dvt[k], dGt[k]) for k in range(K)]
    e_h1 = [surf_norm(fa, de[k], 1.0) for k in range(K)]
    e_low = [surf_norm(fa, de[k], 1.5 - al) for k in range(K)]
    e_top = [surf_norm(fa, de[k], s_top, qp) for k in range(K)]
    et_h1 = [surf_norm(fa, dde[k], 1.0) for k in range(K)]
    et_low = [surf_norm(fa, dde[k], 1.5 - al) for k in range(K)]
    ett_h1 = [surf_norm(fa, dd2e[k], 1.0) for k in range(K)]
    corner = np.sqrt(np.sum(dc**2, -1))
    corner1 = np.sqrt(np.sum(dc1**2, -1))
    comp = {
        "u Linf H1": max(u_h1),
        "u L2 H1": _time_l2(t, u_h1),
        "u L2 W2q": _time_l2(t, u_w2),
        "p L2 W1q": _time_l2(t, p_w1),
        "eta Linf H1": max(e_h1),
        "eta L2 H(3/2-alpha)": _time_l2(t, e_low),
        "eta L2 W(3-1/q,q)": _time_l2(t, e_top),
        "dt u Linf H1": max(ut_h1),
        "dt u L2 H1": _time_l2(t, ut_h1),
        "dt eta Linf H1": max(et_h1),
        "dt eta L2 H(3/2-alpha)": _time_l2(t, et_low),
        "eps dt2 eta L2 H1": eps * _time_l2(t, ett_h1),
        "sqrt(eps) dt eta L2 H1": math.sqrt(eps) * _time_l2(t, et_h1),
        "corner dt eta L2": _time_l2(t, corner),
        "corner dt2 eta L2": _time_l2(t, corner1),
    }
    return MetricReport(comp, float(sum(comp.values())))


def size(it, indices, eps):
    """Distance from the rest state, used to check membership of S(T, delta)."""
    fh = it.fields
    zero = replace(
        fh, v=0 * fh.v, G=0 * fh.G, H=0 * fh.H, vw=0 * fh.vw, q=0 * fh.q, gq=0 * fh.gq,
        eta=0 * fh.eta, deta=0 * fh.deta, corner=0 * fh.corner,
    )
    return metric(fh, zero, indices, eps).total


# fixed point


@dataclass
class FixedPointResult:
    iterate: Iterate
    iterations: int
    distances: list
    ratios: list
    reports: list = field(default_factory=list)
    in_ball: list = field(default_factory=list)
    T: float = None
    epsilon: float = None

    @property
    def trajectory(self):
        return self.iterate.traj


def fixed_point_solve(init, config, log=None):
    """Iterate the frozen-geometry linear solve until successive iterates agree."""
    T, n = config.T, config.n_steps
    dt = T / n
    times = dt * np.arange(n + 1)
    cur = zero_iterate(init, times)
    dists, ratios, reports, ball = [], [], [], []
    streak = 0
    for it_no in range(1, config.max_iter + 1):
        nxt = apply_map(init, cur, dt, n)
        rep = metric(nxt, cur, init.indices, init.epsilon)
        reports.append(rep)
        dists.append(rep.total)
        ball.append(size(nxt, init.indices, init.epsilon) <= config.delta)
        if len(dists) > 1:
            r = dists[-1] / dists[-2] if dists[-2] > 0 else math.inf
            ratios.append(r)
            streak = streak + 1 if r >= 1.0 else 0
        if log is not None:
            log(f"iteration {it_no}: d = {rep.total:.3e}" + (f", ratio {ratios[-1]:.3e}" if ratios else ""))
        cur = nxt
        if rep.total < config.tol:
            return FixedPointResult(cur, it_no, dists, ratios, reports, ball, T, init.epsilon)
        if streak >= config.stall:
            raise NotContracting(ratios[-config.stall:])
    raise MaxIterExceeded(config.max_iter, dists[-1])


# epsilon continuation


@dataclass
class ContinuationResult:
    epsilons: list
    results: list
    distances: list
    T: float


def epsilon_continuation(eta0, space, params, indices, law, config, m=None, delta0=math.inf, threads=1, log=None):
    """Solve for each eps on the common horizon min(min eps^2, T) and compare neighbours."""
    eps_list = list(config.eps_list)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("epsilon list must be strictly decreasing")
    T = min(min(e**2 for e in eps_list), config.T)
    cfg = replace(config, T=T)

    def solve(eps):
        init = prepare_initial_data(eta0, space, params, indices, law, eps, m=m, delta0=delta0)
        return fixed_point_solve(init, cfg, log=log)

    # the cached saddle factorization is shared; build it once before fanning out
    if threads > 1 and len(eps_list) > 1:
        results = [solve(eps_list[0])]
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results += list(ex.map(solve, eps_list[1:]))
    else:
        results = [solve(e) for e in eps_list]
    dists = [
        metric(a.iterate, b.iterate, indices, eb).total
        for a, b, eb in zip(results, results[1:], eps_list[1:])
    ]
    return ContinuationResult(eps_list, results, dists, T)
