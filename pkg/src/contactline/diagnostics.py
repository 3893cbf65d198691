"""Energy/dissipation ledgers, identity audit and decay fits.

The basic ledger is exact in the Galerkin matrices.  The full ledgers use
sampled fields and the surrogate fractional norms of the surface module;
they are informational only.
"""

from dataclasses import dataclass, fields

import numpy as np

from .discretization import pushed_fields
from .errors import DegenerateSeries
from .surface import SurfaceFunction, fractional_norm, spectral_norm


@dataclass
class FieldHistory:
    """Velocity, pressure and surface samples at every stored time."""

    t: np.ndarray
    v: np.ndarray  # (K, P, 2) on bulk points
    G: np.ndarray  # (K, P, 2, 2)
    H: np.ndarray  # (K, P, 2, 2, 2)
    vw: np.ndarray  # (K, Pw, 2) on walls and bottom
    q: np.ndarray  # (K, P)
    gq: np.ndarray  # (K, P, 2)
    eta: np.ndarray  # (K, n) cosine coefficients
    deta: np.ndarray  # (K, n)
    corner: np.ndarray  # (K, 2) d_t eta at -ell, +ell
    w: np.ndarray
    ww: np.ndarray
    ell: float

    def __len__(self):
        return len(self.t)

    def surface(self, coeffs):
        return SurfaceFunction(coeffs, self.ell)

    def dt(self, name, order=1):
        """Time derivative of a stored series by second-order differences."""
        a = getattr(self, name)
        for _ in range(order):
            a = np.gradient(a, self.t, axis=0, edge_order=2) if len(self.t) > 2 else np.zeros_like(a)
        return a


def sample_fields(traj, states=None, geometries=None):
    """FieldHistory of a linear trajectory, using the geometry each state was solved with."""
    prob = traj.problem
    sp_ = prob.space
    Xs = prob.basis.scaled
    states = traj.states if states is None else states
    K = len(states)
    P, Pw = len(sp_.bulk.weights), len(sp_.wall.weights)
    out = dict(
        v=np.zeros((K, P, 2)), G=np.zeros((K, P, 2, 2)), H=np.zeros((K, P, 2, 2, 2)),
        vw=np.zeros((K, Pw, 2)), q=np.zeros((K, P)), gq=np.zeros((K, P, 2)),
        eta=np.zeros((K, sp_.n_surface)), deta=np.zeros((K, sp_.n_surface)), corner=np.zeros((K, 2)),
    )
    for i, st in enumerate(states):
        geo = geometries[i] if geometries is not None else prob.geometry_at(st.k, st.t)
        u = (Xs @ st.d)[:, None]
        f = pushed_fields(sp_, geo.bulk, u)
        out["v"][i], out["G"][i], out["H"][i] = f["W"][..., 0], f["G"][..., 0], f["H"][..., 0]
        out["vw"][i] = pushed_fields(sp_, geo.wall, u, "wall")["W"][..., 0]
        if st.q is not None:
            out["q"][i] = sp_.Lp @ st.q
            out["gq"][i] = (sp_.Gp @ st.q).reshape(-1, 2)
        out["eta"][i] = st.theta.coeffs
        out["deta"][i] = st.dtheta.coeffs
        out["corner"][i] = prob.basis.corner @ st.d
    t = np.array([s.t for s in states])
    return FieldHistory(t=t, w=sp_.bulk.weights, ww=sp_.wall.weights, ell=sp_.mesh.ell, **out)


# discrete norms on the reference domain


def _flat(a):
    return np.sqrt(np.sum(a.reshape(a.shape[0], -1) ** 2, -1))


def l2(w, v):
    return float(np.sqrt(w @ _flat(v) ** 2))


def h1(w, v, G):
    return float(np.sqrt(w @ (_flat(v) ** 2 + _flat(G) ** 2)))


def h2(w, v, G, H):
    return float(np.sqrt(w @ (_flat(v) ** 2 + _flat(G) ** 2 + _flat(H) ** 2)))


def w2q(w, v, G, H, q):
    return float((w @ (_flat(v) ** q + _flat(G) ** q + _flat(H) ** q)) ** (1.0 / q))


def w1q(w, p, gp, q):
    return float((w @ (np.abs(p) ** q + _flat(gp) ** q)) ** (1.0 / q))


def surf_norm(fh, coeffs, s, q=2.0):
    f = fh.surface(coeffs)
    return spectral_norm(f, s) if q == 2.0 else fractional_norm(f, s, q)


@dataclass
class LedgerSample:
    t: float
    E_basic: float
    D_basic: float
    E_full: float
    D_full: float
    E_eps: float
    D_eps: float
    identity_residual: float


LEDGER_COLUMNS = tuple(f.name for f in fields(LedgerSample))


def _full_terms(fh, k, indices, eps, d):
    """Surrogate E, D, E^eps, D^eps at sample k; d holds precomputed time derivatives."""
    w, ww = fh.w, fh.ww
    qp, qm, a, em = indices.q_plus, indices.q_minus, indices.alpha, indices.eps_minus
    s_top_p, s_top_m = 3.0 - 1.0 / qp, 3.0 - 1.0 / qm
    u = (fh.v[k], fh.G[k], fh.H[k])
    ut = (d["v1"][k], d["G1"][k], d["H1"][k])
    u_w2 = w2q(w, *u, qp) ** 2
    # H^{1+s} by interpolation between H^1 and H^2
    s = em / 2.0
    ut_h1, ut_h2 = h1(w, *ut[:2]), h2(w, *ut)
    ut_frac = ut_h1 ** (2 * (1 - s)) * ut_h2 ** (2 * s)
    u_l2 = sum(l2(w, x) ** 2 for x in (fh.v[k], d["v1"][k], d["v2"][k]))
    p_w1 = w1q(w, fh.q[k], fh.gq[k], qp) ** 2
    pt_l2 = l2(w, d["q1"][k]) ** 2
    eta, deta, d2, d3 = fh.eta[k], fh.deta[k], d["eta2"][k], d["eta3"][k]
    eta_top = surf_norm(fh, eta, s_top_p, qp) ** 2
    deta_top = surf_norm(fh, deta, s_top_p, qp) ** 2
    h1_sum = sum(surf_norm(fh, c, 1.0) ** 2 for c in (eta, deta, d2))
    E = u_w2 + ut_frac + u_l2 + p_w1 + pt_l2 + eta_top + surf_norm(fh, deta, 1.5 + (em - a) / 2) ** 2 + h1_sum

    diss_u = sum(
        h1(w, x, g) ** 2 + l2(ww, xw) ** 2
        for x, g, xw in ((fh.v[k], fh.G[k], fh.vw[k]), (d["v1"][k], d["G1"][k], d["vw1"][k]), (d["v2"][k], d["G2"][k], d["vw2"][k]))
    )
    corners = sum(float(np.sum(c**2)) for c in (fh.corner[k], d["c1"][k], d["c2"][k]))
    low_eta = sum(surf_norm(fh, c, 1.5 - a) ** 2 for c in (eta, deta, d2))
    D = (
        u_w2 + w2q(w, *ut, qm) ** 2 + diss_u + p_w1 + w1q(w, d["q1"][k], d["gq1"][k], qp) ** 2
        + eta_top + deta_top + low_eta + corners + surf_norm(fh, d3, 0.5 - a) ** 2
    )
    E_eps = E + eps**2 * deta_top + eps * low_eta
    D_eps = D + eps**2 * deta_top + eps**2 * surf_norm(fh, d2, s_top_m, qm) ** 2 + eps * h1_sum
    return E, D, E_eps, D_eps


def _derivatives(fh):
    return {
        "v1": fh.dt("v"), "v2": fh.dt("v", 2), "G1": fh.dt("G"), "G2": fh.dt("G", 2), "H1": fh.dt("H"),
        "vw1": fh.dt("vw"), "vw2": fh.dt("vw", 2), "q1": fh.dt("q"), "gq1": fh.dt("gq"),
        "eta2": fh.dt("deta"), "eta3": fh.dt("deta", 2), "c1": fh.dt("corner"), "c2": fh.dt("corner", 2),
    }


def ledger(traj, indices, fh=None):
    """LedgerSample series of a stored trajectory (at least three samples)."""
    if len(traj.records) < 3:
        raise ValueError("ledger needs at least three stored times")
    fh = fh or sample_fields(traj)
    eps = traj.problem.epsilon
    d = _derivatives(fh)
    out = []
    for k, rec in enumerate(traj.records):
        E, D, Ee, De = _full_terms(fh, k, indices, eps, d)
        out.append(LedgerSample(rec["t"], rec["E_basic"], rec["D_basic"], E, D, Ee, De, rec["identity_residual"]))
    return out


def identity_residual(traj):
    """Per-step residual of the basic energy identity and its maximum magnitude."""
    r = traj.column("identity_residual")
    return r, float(np.abs(r).max())


def cumulative_identity(t, E, D, work):
    """E(t) - E(0) + int_0^t (D - work) by the trapezoidal rule."""
    t, E, D, work = (np.asarray(a, float) for a in (t, E, D, work))
    g = D - work
    integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (g[1:] + g[:-1]))])
    return E - E[0] + integral


def write_ledger(samples, fh):
    fh.write(",".join(LEDGER_COLUMNS) + "\n")
    for s in samples:
        fh.write(",".join(repr(float(getattr(s, c))) for c in LEDGER_COLUMNS) + "\n")


def fit_decay(t, E, window=None, floor=1e-300):
    """Least-squares rate of log E(t); C_hat = sup exp(lambda t) E(t) / E(0)."""
    t = np.asarray(t, float)
    E = np.asarray(E, float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, E = t[sel], E[sel]
    if len(t) < 2:
        raise DegenerateSeries("need at least two samples")
    if not np.all(np.isfinite(E)) or np.any(E <= floor):
        raise DegenerateSeries("energy series reaches zero or the numerical floor")
    slope, _ = np.polyfit(t - t[0], np.log(E), 1)
    lam = -float(slope)
    C = float(np.max(np.exp(lam * (t - t[0])) * E / E[0]))
    return lam, C
