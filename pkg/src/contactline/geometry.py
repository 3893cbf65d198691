"""Flattening-map coefficients and nonlinear boundary remainders.

The map Phi(x) = (x1, x2 + phi(x2)/zeta0(x1) * etabar(x)) has

    A = W d1(etabar) - (phi/zeta0^2) zeta0' etabar,
    J = 1 + (phi'/zeta0) etabar + W d2(etabar),   K = 1/J,   W = phi/zeta0,

with calA = [[1, -AK], [0, K]] and M = K grad(Phi) = [[K, 0], [KA, 1]].
All fields are carried as second-order jets in (x1, x2) so that grad M and
its Hessian are exact.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMap
from .surface import poisson_extend


class Jet:
    """Value and derivatives (d1, d2, d11, d12, d22) of a field of two variables."""

    __slots__ = ("v", "d1", "d2", "d11", "d12", "d22")

    def __init__(self, v, d1, d2, d11, d12, d22):
        self.v, self.d1, self.d2, self.d11, self.d12, self.d22 = v, d1, d2, d11, d12, d22

    @classmethod
    def of_x1(cls, f, f1, f2):
        z = np.zeros_like(f)
        return cls(f, f1, z, f2, z, z)

    @classmethod
    def of_x2(cls, f, f1, f2):
        z = np.zeros_like(f)
        return cls(f, z, f1, z, z, f2)

    @classmethod
    def const(cls, c, like):
        z = np.zeros_like(like)
        return cls(z + c, z, z, z, z, z)

    def __add__(self, o):
        if not isinstance(o, Jet):
            return Jet(self.v + o, self.d1, self.d2, self.d11, self.d12, self.d22)
        return Jet(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2, self.d11 + o.d11, self.d12 + o.d12, self.d22 + o.d22)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.v, -self.d1, -self.d2, -self.d11, -self.d12, -self.d22)

    def __sub__(self, o):
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if not isinstance(o, Jet):
            return Jet(self.v * o, self.d1 * o, self.d2 * o, self.d11 * o, self.d12 * o, self.d22 * o)
        f, g = self, o
        return Jet(
            f.v * g.v,
            f.d1 * g.v + f.v * g.d1,
            f.d2 * g.v + f.v * g.d2,
            f.d11 * g.v + 2 * f.d1 * g.d1 + f.v * g.d11,
            f.d12 * g.v + f.d1 * g.d2 + f.d2 * g.d1 + f.v * g.d12,
            f.d22 * g.v + 2 * f.d2 * g.d2 + f.v * g.d22,
        )

    __rmul__ = __mul__

    def recip(self):
        f = self
        r = 1.0 / f.v
        r2 = r * r
        r3 = r2 * r
        return Jet(
            r,
            -f.d1 * r2,
            -f.d2 * r2,
            -f.d11 * r2 + 2 * f.d1 * f.d1 * r3,
            -f.d12 * r2 + 2 * f.d1 * f.d2 * r3,
            -f.d22 * r2 + 2 * f.d2 * f.d2 * r3,
        )

    def __truediv__(self, o):
        if not isinstance(o, Jet):
            return self * (1.0 / o)
        return self * o.recip()

    def grad(self):
        return np.stack([self.d1, self.d2], axis=-1)

    def hess(self):
        return np.stack([np.stack([self.d11, self.d12], -1), np.stack([self.d12, self.d22], -1)], -2)


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    s0 = t**3 * (10 - 15 * t + 6 * t * t)
    s1 = 30 * t * t * (1 - t) ** 2
    s2 = 60 * t * (1 - t) * (1 - 2 * t)
    s3 = 60 * (1 - 6 * t + 6 * t * t)
    return s0, s1, s2, s3


def cutoff_derivs(z, min_zeta0):
    """phi and its first three derivatives: 0 below min/4, z above min/2."""
    z = np.asarray(z, float)
    a, b = 0.25 * min_zeta0, 0.5 * min_zeta0
    L = b - a
    t = (z - a) / L
    s0, s1, s2, s3 = _smoothstep(t)
    band = (t > 0) & (t < 1)
    s1 = np.where(band, s1, 0.0)
    s2 = np.where(band, s2, 0.0)
    s3 = np.where(band, s3, 0.0)
    f0 = z * s0
    f1 = s0 + z * s1 / L
    f2 = 2 * s1 / L + z * s2 / L**2
    f3 = 3 * s2 / L**2 + z * s3 / L**3
    return f0, f1, f2, f3


def cutoff_phi(z, min_zeta0):
    f0, f1, _, _ = cutoff_derivs(z, min_zeta0)
    return f0, f1


def curvature_remainder(y, z):
    """R(y, z) with (y+z)/sqrt(1+(y+z)^2) = y/sqrt(1+y^2) + z/(1+y^2)^{3/2} + R(y, z)."""
    y = np.asarray(y, float)
    z = np.asarray(z, float)
    s = y + z
    return s / np.sqrt(1 + s * s) - y / np.sqrt(1 + y * y) - z / (1 + y * y) ** 1.5


def curvature_remainder_dz(y, z):
    s = np.asarray(y, float) + np.asarray(z, float)
    return (1 + s * s) ** -1.5 - (1 + np.asarray(y, float) ** 2) ** -1.5


def curvature_remainder_dy(y, z):
    y = np.asarray(y, float)
    s = y + np.asarray(z, float)
    return (1 + s * s) ** -1.5 - (1 + y * y) ** -1.5 + 3.0 * y * np.asarray(z, float) * (1 + y * y) ** -2.5


@dataclass
class GeometryCache:
    x1: np.ndarray
    x2: np.ndarray
    A: np.ndarray
    J: np.ndarray
    K: np.ndarray
    W: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    calA: np.ndarray
    dcalA: np.ndarray
    M: np.ndarray
    dM: np.ndarray
    d2M: np.ndarray
    dtJ: np.ndarray
    dtA: np.ndarray
    dtM: np.ndarray
    R: np.ndarray
    etabar: np.ndarray
    dt_etabar: np.ndarray
    min_J: float

    @property
    def identity(self):
        return bool(np.all(self.A == 0) and np.all(self.J == 1) and np.all(self.R == 0))


def _mat(a, b, c, d):
    return np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)


def _jet_matrix(e00, e01, e10, e11):
    """Values (...,2,2), gradients (...,2,2,k) and Hessians (...,2,2,k,l)."""
    ents = [[e00, e01], [e10, e11]]
    val = _mat(*(e.v for row in ents for e in row))
    grad = np.stack([np.stack([e.grad() for e in row], -2) for row in ents], -3)
    hess = np.stack([np.stack([e.hess() for e in row], -3) for row in ents], -4)
    return val, grad, hess


def build_geometry(zeta0, eta, deta, x1, x2, check=True):
    x1 = np.asarray(x1, float).ravel()
    x2 = np.asarray(x2, float).ravel()
    m = zeta0.min_height
    z = [zeta0(x1, k) for k in range(4)]
    f = cutoff_derivs(x2, m)
    Z0 = Jet.of_x1(z[0], z[1], z[2])
    Z1 = Jet.of_x1(z[1], z[2], z[3])
    P0 = Jet.of_x2(f[0], f[1], f[2])
    P1 = Jet.of_x2(f[1], f[2], f[3])

    lift = poisson_extend(eta, x1, x2, zeta0, order=3).jet
    E = Jet(lift[(0, 0)], lift[(1, 0)], lift[(0, 1)], lift[(2, 0)], lift[(1, 1)], lift[(0, 2)])
    E1 = Jet(lift[(1, 0)], lift[(2, 0)], lift[(1, 1)], lift[(3, 0)], lift[(2, 1)], lift[(1, 2)])
    E2 = Jet(lift[(0, 1)], lift[(1, 1)], lift[(0, 2)], lift[(2, 1)], lift[(1, 2)], lift[(0, 3)])

    Zr = Z0.recip()
    W = P0 * Zr
    A = W * (E1 - Z1 * E * Zr)
    Jj = 1.0 + P1 * E * Zr + W * E2
    min_J = float(Jj.v.min()) if Jj.v.size else 1.0
    if check and min_J <= 0:
        raise DegenerateMap(min_J)
    K = Jj.recip()
    KA = K * A
    one = Jet.const(1.0, x1)
    zero = Jet.const(0.0, x1)
    M, dM, d2M = _jet_matrix(K, zero, KA, one)
    calA, dcalA, _ = _jet_matrix(one, -KA, zero, K)

    dl = poisson_extend(deta, x1, x2, zeta0, order=1).jet
    w, zr = W.v, Zr.v
    dtA = w * (dl[(1, 0)] - z[1] * dl[(0, 0)] * zr)
    dtJ = f[1] * dl[(0, 0)] * zr + w * dl[(0, 1)]
    dtK = -K.v**2 * dtJ
    dtKA = dtK * A.v + K.v * dtA
    zz = np.zeros_like(x1)
    dtM = _mat(dtK, zz, dtKA, zz)
    R = _mat(dtK * Jj.v, zz, dtKA * Jj.v, zz)
    return GeometryCache(
        x1=x1, x2=x2, A=A.v, J=Jj.v, K=K.v, W=w, phi=f[0], dphi=f[1],
        calA=calA, dcalA=dcalA, M=M, dM=dM, d2M=d2M,
        dtJ=dtJ, dtA=dtA, dtM=dtM, R=R,
        etabar=E.v, dt_etabar=dl[(0, 0)], min_J=min_J,
    )


def surface_normals(zeta0, eta, x1):
    """N = (-d1(zeta0 + eta), 1) and N0 = (-zeta0', 1)."""
    x1 = np.asarray(x1, float)
    z1 = zeta0(x1, 1)
    one = np.ones_like(x1)
    N0 = np.stack([-z1, one], -1)
    N = np.stack([-z1 - eta(x1, 1), one], -1)
    return N, N0


def push(cache, vals, grads=None):
    """Values (and physical gradients) of M u for reference fields u.

    vals: (..., npts, 2); grads: (..., npts, 2, 2) with grads[..., i, k] = d_k u_i.
    """
    Mu = np.einsum("pij,...pj->...pi", cache.M, vals)
    if grads is None:
        return Mu
    G = np.einsum("pijk,...pj->...pik", cache.dM, vals) + np.einsum("pij,...pjk->...pik", cache.M, grads)
    return Mu, G


def div_A(cache, grads):
    """div_calA v = calA_jk d_k v_j."""
    return np.einsum("pjk,...pjk->...p", cache.calA, grads)


def pull_back_divergence(vals, grads, cache):
    """(div_calA(M u), K div u) at the cache points."""
    _, G = push(cache, vals, grads)
    lhs = div_A(cache, G)
    rhs = cache.K * np.trace(grads, axis1=-2, axis2=-1)
    return lhs, rhs


@dataclass
class RemainderEval:
    R: np.ndarray
    dR: np.ndarray
    F3: np.ndarray
    dF3: np.ndarray
    F7: np.ndarray


def remainders(zeta0, eta, x1, corner_speed, sigma, law):
    """F3 = sigma R(zeta0', eta') and its x1-derivative at surface points;
    F7 = kappa hatW(d_t eta(+-ell))."""
    y = zeta0(x1, 1)
    z = eta(x1, 1)
    Rv = curvature_remainder(y, z)
    Rz = curvature_remainder_dz(y, z)
    dR1 = curvature_remainder_dy(y, z) * zeta0(x1, 2) + Rz * eta(x1, 2)
    return RemainderEval(
        R=Rv,
        dR=Rz,
        F3=sigma * Rv,
        dF3=sigma * dR1,
        F7=law.kappa * law.hatW(np.asarray(corner_speed, float)),
    )
