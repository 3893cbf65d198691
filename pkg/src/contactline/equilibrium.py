"""Static capillary equilibrium on (-ell, ell).

Solves  g*zeta - sigma*H(zeta) = P0,  H(zeta) = (zeta'/sqrt(1+zeta'^2))',
with  sigma*zeta'/sqrt(1+zeta'^2) = +-gamma_jump  at x = +-ell and the
volume constraint  int zeta = volume  closing the unknown P0.  Chebyshev
collocation on Gauss-Lobatto points, Newton iteration with continuation
in gamma_jump when a direct solve stalls.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial import legendre
from scipy.fft import dct

from .errors import NoConvergence, PinchOff, ValidationError


def cheb_lobatto(n):
    """Nodes x_j = -cos(j pi/n) (ascending) and differentiation matrix."""
    j = np.arange(n + 1)
    x = -np.cos(np.pi * j / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** j
    X = np.tile(x, (n + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D


def clenshaw_curtis(n):
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n**2 - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
        v -= np.cos(n * theta[1:-1]) / (n**2 - 1)
    else:
        w[0] = w[n] = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
    w[1:-1] = 2.0 * v / n
    return w


def lobatto_to_cheb(values):
    n = len(values) - 1
    # nodes ascend as -cos, so reverse to the cos(j pi/n) ordering of DCT-I
    y = dct(values[::-1], type=1) / n
    y[0] /= 2.0
    y[-1] /= 2.0
    return y


@dataclass
class EquilibriumSurface:
    coef: np.ndarray
    ell: float
    P0: float
    omega_eq: float
    min_height: float
    n: int

    def __post_init__(self):
        self._series = [C.Chebyshev(self.coef, domain=[-self.ell, self.ell])]
        for _ in range(4):
            self._series.append(self._series[-1].deriv())

    def __call__(self, x, k=0):
        return self._series[k](np.asarray(x, float))

    def slope(self, x):
        return self(x, 1)

    @property
    def nodes(self):
        x, _ = cheb_lobatto(self.n)
        return self.ell * x

    def volume(self):
        integ = self._series[0].integ()
        return float(integ(self.ell) - integ(-self.ell))

    @classmethod
    def from_function(cls, f, ell, P0, n):
        x, _ = cheb_lobatto(n)
        coef = lobatto_to_cheb(np.asarray(f(ell * x), float))
        return cls.build(coef, ell, P0, n)

    @classmethod
    def build(cls, coef, ell, P0, n):
        tmp = cls(coef, ell, P0, 0.0, 0.0, n)
        xs = np.linspace(-ell, ell, 4001)
        return cls(coef, ell, P0, contact_angle(tmp), float(tmp(xs).min()), n)


def contact_angle(surface, side=+1):
    """Angle between free surface and wall, inside the fluid."""
    s = float(surface.slope(side * surface.ell))
    return math.pi / 2 - math.atan(side * s)


def endpoint_slope(gamma_jump, sigma):
    return gamma_jump / math.sqrt(sigma**2 - gamma_jump**2)


def _newton(params, n, gamma, zeta, P0, tol, max_iter):
    x, D = cheb_lobatto(n)
    ell = params.ell
    D1 = D / ell
    D2 = D1 @ D1
    w = clenshaw_curtis(n) * ell
    sig, g = params.sigma, params.g
    res_norm = np.inf
    for it in range(max_iter):
        z1 = D1 @ zeta
        z2 = D2 @ zeta
        q = 1.0 + z1**2
        F = np.empty(n + 2)
        F[: n + 1] = g * zeta - sig * z2 * q**-1.5 - P0
        F[0] = sig * z1[0] / np.sqrt(q[0]) + gamma
        F[n] = sig * z1[n] / np.sqrt(q[n]) - gamma
        F[n + 1] = w @ zeta - params.volume
        res_norm = np.abs(F).max()
        if res_norm <= tol:
            return zeta, P0, it, res_norm
        Jm = np.zeros((n + 2, n + 2))
        Jm[: n + 1, : n + 1] = (
            g * np.eye(n + 1)
            - sig * (q**-1.5)[:, None] * D2
            + sig * (3.0 * z2 * z1 * q**-2.5)[:, None] * D1
        )
        Jm[: n + 1, n + 1] = -1.0
        for row in (0, n):
            Jm[row, :] = 0.0
            Jm[row, : n + 1] = sig * q[row] ** -1.5 * D1[row]
        Jm[n + 1, : n + 1] = w
        step = np.linalg.solve(Jm, -F)
        lam = 1.0
        while True:
            trial = zeta + lam * step[: n + 1]
            if trial.min() > 0 or lam < 1e-3:
                break
            lam *= 0.5
        zeta = zeta + lam * step[: n + 1]
        P0 = P0 + lam * step[n + 1]
        if lam == 1.0 and np.abs(step).max() <= tol:
            return zeta, P0, it + 1, res_norm
        if zeta.min() <= 0:
            raise PinchOff(f"min zeta = {zeta.min():.3e} during Newton iteration")
        if not np.all(np.isfinite(zeta)):
            break
    raise NoConvergence(max_iter, res_norm)


def solve_equilibrium(params, tol=1e-12, n=None, max_iter=40):
    """Equilibrium surface; with n=None the grid is refined until the
    fine-grid ODE residual drops below 1e-9 (or the best of the ladder)."""
    if n is not None:
        return _solve_fixed(params, tol, n, max_iter)
    best = None
    for nn in (32, 48, 64, 96):
        surf = _solve_fixed(params, tol, nn, max_iter)
        res = equilibrium_residual(surf, params)[0]
        if best is None or res < best[0]:
            best = (res, surf)
        if res <= 1e-9 * max(1.0, params.sigma):
            break
    return best[1]


def _solve_fixed(params, tol, n, max_iter):
    if not abs(params.gamma_jump) < params.sigma:
        raise ValidationError("Young relation |gamma_jump| < sigma violated")
    if params.volume <= 0:
        raise ValidationError("volume must be positive")
    h = params.volume / (2 * params.ell)
    zeta = np.full(n + 1, h)
    P0 = params.g * h
    if params.gamma_jump == 0.0:
        coef = np.zeros(n + 1)
        coef[0] = h
        return EquilibriumSurface.build(coef, params.ell, params.g * h, n)
    scale = max(1.0, params.sigma, params.g * h, params.volume)
    gammas = [params.gamma_jump]
    for attempt in range(6):
        try:
            z, P = zeta.copy(), P0
            for gam in gammas:
                z, P, _, _ = _newton(params, n, gam, z, P, tol * scale, max_iter)
            break
        except NoConvergence:
            if attempt == 5:
                raise
            k = 2 ** (attempt + 2)
            gammas = list(params.gamma_jump * np.arange(1, k + 1) / k)
    coef = lobatto_to_cheb(z)
    surf = EquilibriumSurface.build(coef, params.ell, float(P), n)
    if surf.min_height <= 0:
        raise PinchOff(f"min zeta0 = {surf.min_height:.3e}")
    return surf


def curvature(surface, x):
    z1 = surface(x, 1)
    z2 = surface(x, 2)
    return z2 * (1.0 + z1**2) ** -1.5


def equilibrium_residual(surface, params, n_fine=None):
    """(ODE residual max, (slope residual at -ell, at +ell), volume error) on a finer grid."""
    n_fine = n_fine or 2 * surface.n + 2
    xg, wg = legendre.leggauss(n_fine)
    x = params.ell * xg
    ode = params.g * surface(x) - params.sigma * curvature(surface, x) - surface.P0
    s = surface.slope(np.array([-params.ell, params.ell]))
    flux = params.sigma * s / np.sqrt(1.0 + s**2)
    slope_res = (float(flux[0] + params.gamma_jump), float(flux[1] - params.gamma_jump))
    vol = params.ell * wg @ surface(x)
    return float(np.abs(ode).max()), slope_res, float(vol - params.volume)


def write_table(path_or_fh, surface, n=201):
    x = np.linspace(-surface.ell, surface.ell, n)
    lines = [f"# P0 = {surface.P0:.17e} omega_eq = {surface.omega_eq:.17e}", "# x zeta0"]
    lines += [f"{a:.17e} {b:.17e}" for a, b in zip(x, surface(x))]
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_fh, "write"):
        path_or_fh.write(text)
    else:
        with open(path_or_fh, "w") as fh:
            fh.write(text)
    return text


def read_table(path):
    with open(path) as fh:
        head = fh.readline().split()
    P0, omega = float(head[3]), float(head[6])
    data = np.loadtxt(path, comments="#")
    return P0, omega, data[:, 0], data[:, 1]
