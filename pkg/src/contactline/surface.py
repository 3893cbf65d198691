"""Scalar fields on (-ell, ell) as cosine series, fractional norms, Poisson lift.

A SurfaceFunction stores coefficients a_k of

    f(x) = sum_k a_k cos(w_k (x + ell)),   w_k = k pi / (2 ell),

i.e. the even-periodic extension of f across both walls.  Nodal values
live on the midpoint grid x_j = -ell + 2 ell (j + 1/2)/N, where the
transform is a DCT-II/III pair.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct
from numpy.polynomial import legendre

from .errors import IndexOutOfRange


class SurfaceFunction:
    def __init__(self, coeffs, ell):
        self.coeffs = np.asarray(coeffs, float).copy()
        self.ell = float(ell)

    @property
    def n(self):
        return len(self.coeffs)

    @property
    def wavenumbers(self):
        return np.arange(self.n) * np.pi / (2.0 * self.ell)

    @staticmethod
    def grid(n, ell):
        return -ell + 2.0 * ell * (np.arange(n) + 0.5) / n

    @property
    def nodes(self):
        return self.grid(self.n, self.ell)

    @property
    def nodal(self):
        a = self.coeffs.copy()
        a[1:] *= 0.5
        return dct(a, type=3)

    @property
    def mean(self):
        return float(self.coeffs[0])

    @classmethod
    def from_nodal(cls, values, ell):
        values = np.asarray(values, float)
        a = dct(values, type=2) / len(values)
        a[0] *= 0.5
        return cls(a, ell)

    @classmethod
    def from_callable(cls, f, ell, n):
        return cls.from_nodal(f(cls.grid(n, ell)), ell)

    @classmethod
    def mode(cls, k, ell, n, amplitude=1.0):
        a = np.zeros(n)
        a[k] = amplitude
        return cls(a, ell)

    @classmethod
    def zeros(cls, ell, n):
        return cls(np.zeros(n), ell)

    def __call__(self, x, deriv=0):
        x = np.asarray(x, float)
        w = self.wavenumbers
        arg = np.multiply.outer(x + self.ell, w)
        # d^m cos = w^m cos(. + m pi/2)
        basis = np.cos(arg + deriv * np.pi / 2) * w**deriv
        return basis @ self.coeffs

    def _check(self, other):
        if not isinstance(other, SurfaceFunction) or other.n != self.n or other.ell != self.ell:
            raise ValueError("incompatible surface functions")

    def __add__(self, other):
        self._check(other)
        return SurfaceFunction(self.coeffs + other.coeffs, self.ell)

    def __sub__(self, other):
        self._check(other)
        return SurfaceFunction(self.coeffs - other.coeffs, self.ell)

    def __mul__(self, c):
        return SurfaceFunction(self.coeffs * float(c), self.ell)

    __rmul__ = __mul__

    def __neg__(self):
        return SurfaceFunction(-self.coeffs, self.ell)

    def copy(self):
        return SurfaceFunction(self.coeffs, self.ell)


def _weights(f):
    w = np.full(f.n, f.ell)
    w[0] = 2.0 * f.ell
    return w


def spectral_norm(f, s):
    """H^s norm; for integer s it coincides with the quadrature norm."""
    w = f.wavenumbers
    return float(np.sqrt(np.sum(_weights(f) * (1.0 + w**2) ** s * f.coeffs**2)))


def _gagliardo_constant(sig):
    # int_R (2 - 2 cos t)/|t|^{1+2 sig} dt, so that the q = 2 seminorm matches |xi|^sig
    return 2.0 * math.pi / (math.sin(math.pi * sig) * math.gamma(1.0 + 2.0 * sig))


def gagliardo_surrogate(f, s, q, n_grid=96, n_quad=256):
    """W^{s,q} surrogate: W^{floor(s),q} by quadrature plus a Gagliardo
    seminorm of the top fractional part by midpoint double quadrature."""
    m = int(math.floor(s))
    frac = s - m
    xg, wg = legendre.leggauss(n_quad)
    x = f.ell * xg
    w = f.ell * wg
    total = 0.0
    for i in range(m + 1):
        total += w @ np.abs(f(x, i)) ** q
    if frac > 1e-14:
        h = 2.0 * f.ell / n_grid
        xm = -f.ell + h * (np.arange(n_grid) + 0.5)
        g = f(xm, m)
        diff = np.abs(g[:, None] - g[None, :]) ** q
        dist = np.abs(xm[:, None] - xm[None, :])
        np.fill_diagonal(dist, 1.0)
        kern = diff / dist ** (1.0 + frac * q)
        np.fill_diagonal(kern, 0.0)
        semi = h * h * kern.sum()
        # diagonal cells: |g'|^q |x-y|^{q(1-frac)-1} integrated over a square cell
        p = q * (1.0 - frac)
        gp = np.abs(f(xm, m + 1)) ** q
        semi += gp.sum() * 2.0 * h ** (p + 1.0) / (p * (p + 1.0))
        total += semi / _gagliardo_constant(frac)
    return float(total ** (1.0 / q))


def fractional_norm(f, s, q):
    if not 0.0 <= s <= 3.0:
        raise IndexOutOfRange(f"smoothness index s={s} outside [0, 3]")
    if not 1.0 < q <= 2.0:
        raise IndexOutOfRange(f"integrability index q={q} outside (1, 2]")
    if f.n < 8:
        raise IndexOutOfRange(f"need at least 8 modes, got {f.n}")
    if q == 2.0:
        return spectral_norm(f, s)
    return gagliardo_surrogate(f, s, q)


@dataclass
class BulkLift:
    """Derivatives d1^a d2^b of the lifted field, keyed by (a, b)."""

    jet: dict

    @property
    def values(self):
        return self.jet[(0, 0)]

    @property
    def gradient(self):
        return np.stack([self.jet[(1, 0)], self.jet[(0, 1)]], axis=-1)


def _shift_derivs(zeta0, x1, order):
    if zeta0 is None:
        return [np.zeros_like(x1) for _ in range(order + 1)]
    return [zeta0(x1, k) for k in range(order + 1)]


def poisson_extend(eta, x1, x2, zeta0=None, order=1):
    """Lower Poisson extension of E eta, evaluated at (x1, x2 - zeta0(x1)).

    Each mode a_k cos(w_k (x1 + ell)) lifts to a_k cos(w_k (x1 + ell)) e^{w_k y}
    with y = x2 - zeta0(x1) <= 0.  Returns all derivatives up to total
    ``order`` (at most 3) in the physical variables (x1, x2).
    """
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    shape = x1.shape
    x1 = x1.ravel()
    x2 = x2.ravel()
    w = eta.wavenumbers
    a = eta.coeffs
    z = _shift_derivs(zeta0, x1, 3)
    y = x2 - z[0]
    ph = np.multiply.outer(x1 + eta.ell, w)
    E = np.exp(np.multiply.outer(y, w))
    c = [np.cos(ph), -w * np.sin(ph), -(w**2) * np.cos(ph), w**3 * np.sin(ph)]
    z1, z2, z3 = (zk[:, None] for zk in z[1:4])
    # derivatives of exp(-w zeta0(x1)) divided by itself
    p = [
        np.ones_like(ph),
        -w * z1,
        w**2 * z1**2 - w * z2,
        -(w**3) * z1**3 + 3 * w**2 * z1 * z2 - w * z3,
    ]
    binom = [[1], [1, 1], [1, 2, 1], [1, 3, 3, 1]]
    jet = {}
    for da in range(order + 1):
        F = sum(binom[da][i] * c[da - i] * p[i] for i in range(da + 1))
        FE = F * E
        for db in range(order + 1 - da):
            jet[(da, db)] = ((FE * w**db) @ a).reshape(shape)
    return BulkLift(jet)
