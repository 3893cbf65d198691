"""Manufactured solutions for the linear problem at eta = 0.

A stream function Psi vanishing on the walls and the bottom gives a
solenoidal, impermeable velocity; theta is the time integral of its normal
trace, so the kinematic relation holds exactly.  Forcings are obtained
symbolically from the strong form and sampled on the quadrature sets.
"""

from dataclasses import dataclass

import numpy as np
import sympy as sy

from .linear_solver import Forcing

X1, X2, Z = sy.symbols("x1 x2 zeta")
_ZD = sy.symbols("z0:4")


def _default_psi(ell, depth):
    return (ell**2 - X1**2) * (X2 + depth) * (1 + sy.Rational(3, 10) * X1 + sy.Rational(1, 5) * X2)


def _default_q():
    return X1 * X2 + sy.Rational(1, 2) * X2 + sy.Rational(1, 4)


@dataclass
class Manufactured:
    """v = T(t) V(x), q = T(t) Q(x), theta = Tint(t) S(x1) with T = sin(omega t)."""

    params: object
    epsilon: float
    zeta0: object
    omega: float = 2.0

    def __post_init__(self):
        p = self.params
        psi = _default_psi(sy.nsimplify(p.ell), sy.nsimplify(p.bottom_depth))
        V = sy.Matrix([sy.diff(psi, X2), -sy.diff(psi, X1)])
        Q = _default_q()
        grad = lambda f: sy.Matrix([sy.diff(f, X1), sy.diff(f, X2)])
        lap = sy.Matrix([sy.diff(c, X1, 2) + sy.diff(c, X2, 2) for c in V])
        GV = V.jacobian([X1, X2])
        Dv = GV + GV.T
        args = (X1, X2)
        self._V = sy.lambdify(args, list(V), "numpy")
        self._Q = sy.lambdify(args, Q, "numpy")
        self._lapV = sy.lambdify(args, list(lap), "numpy")
        self._gradQ = sy.lambdify(args, list(grad(Q)), "numpy")
        self._D = sy.lambdify(args, [Dv[0, 0], Dv[0, 1], Dv[1, 1]], "numpy")
        # S(x1) = -d/dx1 Psi(x1, zeta0(x1)) and its derivatives, zeta0 derivatives as symbols
        zf = sy.Function("zf")(X1)
        along = psi.subs(X2, zf)
        S = [-sy.diff(along, X1)]
        for _ in range(3):
            S.append(sy.diff(S[-1], X1))
        for k in (4, 3, 2, 1):
            S = [s.subs(sy.Derivative(zf, (X1, k)), _ZD[k] if k < 4 else 0) for s in S]
        S = [s.subs(zf, _ZD[0]) for s in S]
        self._S = [sy.lambdify((X1,) + _ZD, s, "numpy") for s in S]

    # time factors
    def T(self, t):
        return np.sin(self.omega * t)

    def dT(self, t):
        return self.omega * np.cos(self.omega * t)

    def Tint(self, t):
        return (1.0 - np.cos(self.omega * t)) / self.omega

    def _zd(self, x1):
        return [self.zeta0(x1, k) for k in range(4)]

    def S(self, x1, k=0):
        x1 = np.asarray(x1, float)
        return np.broadcast_to(self._S[k](x1, *self._zd(x1)), x1.shape)

    def velocity(self, x, t):
        return self.T(t) * np.stack(np.broadcast_arrays(*self._V(x[:, 0], x[:, 1])), -1)

    def pressure(self, x, t):
        return self.T(t) * np.broadcast_to(self._Q(x[:, 0], x[:, 1]), x[:, 0].shape)

    def theta(self, x1, t, k=0):
        return self.Tint(t) * self.S(x1, k)

    def _stress(self, x, t):
        d = [np.broadcast_to(c, x[:, 0].shape) for c in self._D(x[:, 0], x[:, 1])]
        D = np.stack([np.stack([d[0], d[1]], -1), np.stack([d[1], d[2]], -1)], -2)
        q = self.pressure(x, t)
        return q[:, None, None] * np.eye(2) - self.params.mu * self.T(t) * D

    def forcing(self, space, t):
        p, eps = self.params, self.epsilon
        xb = space.bulk.x
        V = np.stack(np.broadcast_arrays(*self._V(xb[:, 0], xb[:, 1])), -1)
        lap = np.stack(np.broadcast_arrays(*self._lapV(xb[:, 0], xb[:, 1])), -1)
        gq = np.stack(np.broadcast_arrays(*self._gradQ(xb[:, 0], xb[:, 1])), -1)
        F1 = self.dT(t) * V - p.mu * self.T(t) * lap + self.T(t) * gq

        x1 = space.surf.x1
        xt = np.stack([x1, self.zeta0(x1)], -1)
        N0 = np.stack([-self.zeta0(x1, 1), np.ones_like(x1)], -1)
        c = 1.0 + self.zeta0(x1, 1) ** 2
        a = self.Tint(t) + eps * self.T(t)
        f1, f2 = a * self.S(x1, 1), a * self.S(x1, 2)
        dic = -3.0 * self.zeta0(x1, 1) * self.zeta0(x1, 2) * c**-2.5
        Kf = p.g * a * self.S(x1) - p.sigma * (f2 * c**-1.5 + f1 * dic)
        F4 = np.einsum("pij,pj->pi", self._stress(xt, t), N0) - Kf[:, None] * N0

        xw = space.wall.x
        Sw = self._stress(xw, t)
        vw = self.velocity(xw, t)
        nu, tau = space.wall_nu, space.wall_tau
        F5 = np.einsum("pi,pij,pj->p", tau, Sw, nu) - p.beta * np.einsum("pi,pi->p", vw, tau)

        ell = space.mesh.ell
        xc = np.array([-ell, ell])
        cc = (1.0 + self.zeta0(xc, 1) ** 2) ** -1.5
        fc1 = a * self.S(xc, 1)
        speed = self.T(t) * self.S(xc)
        F7 = np.array([fc1[0] * cc[0], -fc1[1] * cc[1]]) * p.sigma - p.kappa * speed
        return Forcing(F1=F1, F4=F4, F5=F5, F7=F7)

    def sampler(self, space):
        return lambda k, t, geo: self.forcing(space, t)


def solution_errors(traj, mms):
    """L2 errors of velocity, pressure and theta at the final time."""
    prob = traj.problem
    sp_ = prob.space
    st = traj.states[-1]
    from .discretization import pushed_fields

    geo = prob.geometry_at(st.k, st.t)
    u = prob.basis.scaled @ st.d
    v = pushed_fields(sp_, geo.bulk, u[:, None])["W"][..., 0]
    w = sp_.bulk.weights
    ve = np.sqrt(w @ np.sum((v - mms.velocity(sp_.bulk.x, st.t)) ** 2, -1))
    out = {"velocity": float(ve)}
    if st.q is not None:
        q = sp_.Lp @ st.q
        out["pressure"] = float(np.sqrt(w @ (q - mms.pressure(sp_.bulk.x, st.t)) ** 2))
    x1 = sp_.surf.x1
    th = prob._xi[0] + prob.basis.a @ st.Y
    out["theta"] = float(np.sqrt(sp_.surf.weights @ (th - mms.theta(x1, st.t)) ** 2))
    return out
