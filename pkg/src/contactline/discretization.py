"""Taylor-Hood space on the equilibrium domain, t = 0 eigenbasis, Galerkin forms.

Reference velocity fields phi are continuous P2 vectors; the physical
Galerkin fields are w = M(t) phi / sqrt(lambda).  Every quantity is
evaluated through sparse point-evaluation operators (values, gradients,
Hessians of P2 functions at fixed quadrature points), so a coefficient
vector becomes a field by one matvec and a pointwise linear map becomes a
sparse block diagonal.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .errors import CheckpointMismatch, EigensolveFailure, SubspaceTooSmall
from .geometry import build_geometry, surface_normals
from .mesh import bulk_points, build_mesh, edge_points, point_set, top_points_at
from .surface import SurfaceFunction

CHECKPOINT_VERSION = 1


def _vector_op(ps, nodes, comp, ncols):
    """Rows (p, i, r) -> cols 2*node + i with data comp[p, a, r]."""
    P, nloc = nodes.shape
    comp = comp.reshape(P, nloc, -1)
    R = comp.shape[2]
    p = np.arange(P)[:, None, None, None]
    i = np.arange(2)[None, None, :, None]
    r = np.arange(R)[None, None, None, :]
    rows = p * 2 * R + i * R + r
    cols = 2 * nodes[:, :, None, None] + i
    data = np.broadcast_to(comp[:, :, None, :], rows.shape[:1] + (nloc, 2, R))
    shape = (P * 2 * R, ncols)
    rows, cols = np.broadcast_arrays(rows, cols)
    return sp.csr_matrix((data.ravel(), (rows.ravel(), cols.ravel())), shape=shape)


def _trace_op(nodes, shape_vals, weights, ncols):
    """Rows p -> sum_a,c shape_vals[p,a] weights[p,c] u_c(node a)."""
    P, nloc = nodes.shape
    rows = np.broadcast_to(np.arange(P)[:, None, None], (P, nloc, 2))
    cols = 2 * nodes[:, :, None] + np.arange(2)
    data = shape_vals[:, :, None] * weights[:, None, :]
    return sp.csr_matrix((data.ravel(), (rows.ravel(), cols.ravel())), shape=(P, ncols))


def _scalar_op(nodes, vals, ncols):
    P, nloc = nodes.shape
    vals = vals.reshape(P, nloc, -1)
    R = vals.shape[2]
    rows = np.arange(P)[:, None, None] * R + np.arange(R)[None, None, :]
    cols = np.broadcast_to(nodes[:, :, None], (P, nloc, R))
    rows = np.broadcast_to(rows, (P, nloc, R))
    return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(P * R, ncols))


def blockdiag(arr):
    """Sparse block diagonal from a stack of small dense blocks (P, r, c)."""
    P, r, c = arr.shape
    p = np.arange(P)[:, None, None]
    rows = np.broadcast_to(p * r + np.arange(r)[None, :, None], arr.shape)
    cols = np.broadcast_to(p * c + np.arange(c)[None, None, :], arr.shape)
    return sp.csr_matrix((arr.ravel(), (rows.ravel(), cols.ravel())), shape=(P * r, P * c))


def _concat(sets):
    out = {}
    for name in sets[0].__dataclass_fields__:
        out[name] = np.concatenate([getattr(s, name) for s in sets])
    return type(sets[0])(**out)


@dataclass
class SurfaceData:
    """Trace operators on the top boundary: Tr u = u . N0 and its x1-derivatives."""

    x1: np.ndarray
    weights: np.ndarray
    Tr: sp.csr_matrix
    Tr1: sp.csr_matrix
    Tr2: sp.csr_matrix
    slope: np.ndarray  # zeta0'
    curv_w: np.ndarray  # 1/(1+zeta0'^2)^{3/2}


class DiscreteSpace:
    """Mesh, quadrature sets and geometry-independent operators."""

    def __init__(self, zeta0, params, nx=8, ny=6, grading=0.0, n_surface=64, order=4, edge_order=5):
        self.zeta0 = zeta0
        self.params = params
        self.depth = params.bottom_depth
        self.mesh = mesh = build_mesh(zeta0, self.depth, nx, ny, grading)
        self.n_surface = n_surface
        nn = mesh.n_nodes
        self.ndof = nd = 2 * nn

        self.bulk = b = bulk_points(mesh, zeta0, order)
        cb = mesh.cells[b.elem]
        self.Ev = _vector_op(b, cb, b.N, nd)
        self.Gr = _vector_op(b, cb, b.dN, nd)
        self.Hs = _vector_op(b, cb, b.d2N, nd)
        self.Lp = _scalar_op(mesh.p1_cells[b.elem], b.L, mesh.n_p1)
        self.Gp = _scalar_op(mesh.p1_cells[b.elem], b.dL, mesh.n_p1)

        parts = [edge_points(mesh, zeta0, w, edge_order) for w in ("wall_left", "wall_right", "bottom")]
        self.wall = w = _concat([p[0] for p in parts])
        self.wall_nu = np.concatenate([p[1] for p in parts])
        self.wall_tau = np.concatenate([p[2] for p in parts])
        cw = mesh.cells[w.elem]
        self.Ev_w = _vector_op(w, cw, w.N, nd)
        self.Gr_w = _vector_op(w, cw, w.dN, nd)
        self.Lp_w = _scalar_op(mesh.p1_cells[w.elem], w.L, mesh.n_p1)

        top, _, _ = edge_points(mesh, zeta0, "top", edge_order)
        self.top = top
        ct = mesh.cells[top.elem]
        self.Ev_t = _vector_op(top, ct, top.N, nd)
        self.Gr_t = _vector_op(top, ct, top.dN, nd)
        self.Hs_t = _vector_op(top, ct, top.d2N, nd)
        self.Lp_t = _scalar_op(mesh.p1_cells[top.elem], top.L, mesh.n_p1)
        self.surf = self._surface_data(top)

        self.corner = point_set(mesh, zeta0, *mesh.locate(np.array([-mesh.ell, mesh.ell]), np.ones(2)))
        cd = self._surface_data(self.corner)
        self.Tc, self.Tc1 = cd.Tr, cd.Tr1
        self.dct_x = SurfaceFunction.grid(n_surface, mesh.ell)
        self.dct = top_points_at(mesh, zeta0, self.dct_x)
        self.Td = self._surface_data(self.dct).Tr

        fixed = np.concatenate(
            [
                2 * mesh.tags["wall_left"],
                2 * mesh.tags["wall_right"],
                2 * mesh.tags["bottom"] + 1,
            ]
        )
        self.fixed = np.unique(fixed)
        self.free = np.setdiff1d(np.arange(nd), self.fixed)

        wb = b.weights
        div = self.Gr[0::4] + self.Gr[3::4]
        self.B = (self.Lp.T @ sp.diags(wb) @ div).tocsr()
        self.Tmean = np.asarray(self.surf.Tr.T @ self.surf.weights).ravel()
        self.gram_h1 = (self.Ev.T @ sp.diags(np.repeat(wb, 2)) @ self.Ev + self.Gr.T @ sp.diags(np.repeat(wb, 4)) @ self.Gr).tocsr()
        self.p1_mass = (self.Lp.T @ sp.diags(wb) @ self.Lp).tocsr()

    def _surface_data(self, ps):
        nodes = self.mesh.cells[ps.elem]
        x1 = ps.x[:, 0]
        z = [self.zeta0(x1, k) for k in range(4)]
        zero = np.zeros_like(x1)
        N0 = np.stack([-z[1], 1.0 + zero], -1)
        dN0 = np.stack([-z[2], zero], -1)
        d2N0 = np.stack([-z[3], zero], -1)
        N, N1, N11 = ps.N, ps.dNr[..., 0], ps.d2Nr[..., 0, 0]
        nd = self.ndof
        Tr = _trace_op(nodes, N, N0, nd)
        Tr1 = _trace_op(nodes, N1, N0, nd) + _trace_op(nodes, N, dN0, nd)
        Tr2 = _trace_op(nodes, N11, N0, nd) + 2 * _trace_op(nodes, N1, dN0, nd) + _trace_op(nodes, N, d2N0, nd)
        return SurfaceData(x1, ps.weights, Tr, Tr1, Tr2, z[1], (1.0 + z[1] ** 2) ** -1.5)

    @property
    def n_free(self):
        return len(self.free)

    def constraints(self, gauge=0):
        """Discrete divergence rows (one P1 node dropped) plus the mean-trace row."""
        keep = np.setdiff1d(np.arange(self.B.shape[0]), [gauge])
        C = sp.vstack([self.B[keep], sp.csr_matrix(self.Tmean[None, :])]).tocsr()
        return C[:, self.free]

    def geometry(self, eta, deta, check=True):
        return GeometrySet.build(self, eta, deta, check)

    def checksum(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.mesh.nodes).tobytes())
        h.update(np.ascontiguousarray(self.mesh.cells).tobytes())
        return h.hexdigest()[:16]


@dataclass
class GeometrySet:
    eta: SurfaceFunction
    deta: SurfaceFunction
    bulk: object
    wall: object
    top: object
    N_top: np.ndarray
    min_J: float

    @classmethod
    def build(cls, space, eta, deta, check=True):
        z = space.zeta0
        gb = build_geometry(z, eta, deta, *space.bulk.x.T, check=check)
        gw = build_geometry(z, eta, deta, *space.wall.x.T, check=check)
        gt = build_geometry(z, eta, deta, *space.top.x.T, check=check)
        N, _ = surface_normals(z, eta, space.top.x[:, 0])
        return cls(eta, deta, gb, gw, gt, N, min(gb.min_J, gw.min_J, gt.min_J))


def identity_geometry(space):
    zero = SurfaceFunction.zeros(space.mesh.ell, space.n_surface)
    return space.geometry(zero, zero)


# pointwise linear maps acting on (values, gradients) of reference fields


def grad_maps(cache):
    """dMmap (P,4,2) and Mk (P,4,4) with G = dMmap u + Mk grad u, rows (i,k)."""
    P = len(cache.J)
    dMmap = np.transpose(cache.dM, (0, 1, 3, 2)).reshape(P, 4, 2)
    Mk = np.einsum("pil,kn->pikln", cache.M, np.eye(2)).reshape(P, 4, 4)
    return dMmap, Mk


def sym_map(cache):
    """Dmap (P,4,4): D_ij = calA_ik G_jk + calA_jk G_ik."""
    A = cache.calA
    eye = np.eye(2)
    D = np.einsum("pik,jl->pijlk", A, eye) + np.einsum("pjk,il->pijlk", A, eye)
    return D.reshape(len(A), 4, 4)


@dataclass
class FEForms:
    """Sparse geometry-dependent forms on all dofs for pushed fields M(t) phi."""

    mass: sp.csr_matrix
    stiff: sp.csr_matrix
    rcoup: sp.csr_matrix  # rows test, columns trial: int J (M phi_a) . (d_t M phi_b)
    dtJ_mass: sp.csr_matrix
    Wop: sp.csr_matrix  # values of M phi at bulk points


def fe_forms(space, geo, params):
    b, gb = space.bulk, geo.bulk
    wJ = np.repeat(b.weights * gb.J, 2)
    Wop = blockdiag(gb.M) @ space.Ev
    dMmap, Mk = grad_maps(gb)
    Gop = blockdiag(dMmap) @ space.Ev + blockdiag(Mk) @ space.Gr
    Dop = blockdiag(sym_map(gb)) @ Gop
    dtWop = blockdiag(gb.dtM) @ space.Ev
    mass = Wop.T @ sp.diags(wJ) @ Wop
    stiff = 0.5 * params.mu * (Dop.T @ sp.diags(np.repeat(b.weights * gb.J, 4)) @ Dop)
    gw = geo.wall
    tM = np.einsum("pi,pij->pj", space.wall_tau, gw.M)[:, None, :]
    Sop = blockdiag(tM) @ space.Ev_w
    stiff = stiff + params.beta * (Sop.T @ sp.diags(space.wall.weights * gw.J) @ Sop)
    rcoup = Wop.T @ sp.diags(wJ) @ dtWop
    dtJ_mass = Wop.T @ sp.diags(np.repeat(b.weights * gb.dtJ, 2)) @ Wop
    sym = lambda A: (0.5 * (A + A.T)).tocsr()
    return FEForms(sym(mass), sym(stiff), rcoup.tocsr(), sym(dtJ_mass), Wop.tocsr())


def surface_fe(space, params):
    """Constant surface forms on all dofs: (.,.)_{1,Sigma}, corner pairing, plain H1(Sigma)."""
    key = (params.g, params.sigma, params.kappa)
    cache = space.__dict__.setdefault("_surface_fe", {})
    if key not in cache:
        sd = space.surf
        w = sd.weights
        surf = sd.Tr.T @ sp.diags(params.g * w) @ sd.Tr + sd.Tr1.T @ sp.diags(params.sigma * w * sd.curv_w) @ sd.Tr1
        h1 = sd.Tr.T @ sp.diags(w) @ sd.Tr + sd.Tr1.T @ sp.diags(w) @ sd.Tr1
        corner = params.kappa * (space.Tc.T @ space.Tc)
        cache[key] = (surf.tocsr(), corner.tocsr(), h1.tocsr())
    return cache[key]


def fe_matrices(space, geo, params, eps):
    """Sparse (K_W, M_H) on all dofs: the W-inner product and the H0 mass."""
    f = fe_forms(space, geo, params)
    _, corner, h1 = surface_fe(space, params)
    K = f.stiff + eps * h1 + corner
    return (0.5 * (K + K.T)).tocsr(), f.mass


def _fix_signs(X):
    idx = np.argmax(np.abs(X), axis=0)
    s = np.sign(X[idx, np.arange(X.shape[1])])
    s[s == 0] = 1.0
    return X * s


@dataclass
class Basis:
    """t = 0 eigenbasis; X[:, j] are reference coefficient vectors of phi^j."""

    lam: np.ndarray
    X: np.ndarray
    eps: float
    method: str
    # traces w^j . N = phi^j . N0 / sqrt(lambda_j)
    a: np.ndarray = field(repr=False, default=None)  # at surface quadrature points
    a1: np.ndarray = field(repr=False, default=None)  # x1-derivative
    a2: np.ndarray = field(repr=False, default=None)
    corner: np.ndarray = field(repr=False, default=None)  # (2, m): at -ell, +ell
    corner1: np.ndarray = field(repr=False, default=None)
    dct: np.ndarray = field(repr=False, default=None)  # (n_surface, m), zero mean

    @property
    def m(self):
        return len(self.lam)

    @property
    def scaled(self):
        return self.X / np.sqrt(self.lam)

    def attach(self, space):
        Xs = self.scaled
        sd = space.surf
        self.a = np.asarray(sd.Tr @ Xs)
        self.a1 = np.asarray(sd.Tr1 @ Xs)
        self.a2 = np.asarray(sd.Tr2 @ Xs)
        self.corner = np.asarray(space.Tc @ Xs)
        self.corner1 = np.asarray(space.Tc1 @ Xs)
        dct = np.asarray(space.Td @ Xs)
        # the exact traces have zero mean; keep that for the cosine representation
        self.dct = dct - dct.mean(axis=0)
        return self

    def trace_functions(self, ell):
        """Traces phi^j . N0 / sqrt(lambda_j) as cosine series."""
        return [SurfaceFunction.from_nodal(self.dct[:, j], ell) for j in range(self.m)]


def _dense_eig(K, M, C, m):
    Z = sla.null_space(C.toarray())
    if Z.shape[1] < m:
        raise SubspaceTooSmall(f"constrained space has dimension {Z.shape[1]} < m = {m}")
    Kz = Z.T @ (K @ Z)
    Mz = Z.T @ (M @ Z)
    Kz = 0.5 * (Kz + Kz.T)
    Mz = 0.5 * (Mz + Mz.T)
    try:
        lam, V = sla.eigh(Kz, Mz, subset_by_index=[0, m - 1])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolveFailure(str(exc)) from exc
    return lam, Z @ V


def _sparse_eig(K, M, C, m, seed):
    n, nc = K.shape[0], C.shape[0]
    if n - nc < m:
        raise SubspaceTooSmall(f"constrained space has dimension <= {n - nc} < m = {m}")
    A = sp.bmat([[K, C.T], [C, None]]).tocsc()
    B = sp.bmat([[M, None], [None, sp.csr_matrix((nc, nc))]]).tocsc()
    v0 = np.random.default_rng(seed).standard_normal(n + nc)
    try:
        lam, V = eigsh(A, k=m, M=B, sigma=0.0, which="LM", v0=v0, tol=1e-13)
    except Exception as exc:  # ArpackNoConvergence and factorization errors
        raise EigensolveFailure(str(exc)) from exc
    return lam, V[:n]


def build_initial_basis(space, geo0, params, eps, m, method="auto", seed=0):
    """Generalized eigenproblem (psi, w)_W = lambda (psi, w)_H0 on the discrete
    solenoidal, impermeable, zero-mean-trace space at t = 0."""
    K, M = fe_matrices(space, geo0, params, eps)
    f = space.free
    Kf, Mf = K[f][:, f], M[f][:, f]
    C = space.constraints()
    if method == "auto":
        method = "dense" if space.n_free <= 2500 else "sparse"
    if method == "dense":
        lam, Xf = _dense_eig(Kf, Mf, C, m)
    else:
        lam, Xf = _sparse_eig(Kf, Mf, C, m, seed)
    # Rayleigh-Ritz clean-up: exact M-orthonormality and sorted pairs
    Kr = Xf.T @ (Kf @ Xf)
    Mr = Xf.T @ (Mf @ Xf)
    lam, V = sla.eigh(0.5 * (Kr + Kr.T), 0.5 * (Mr + Mr.T))
    Xf = _fix_signs(Xf @ V)
    if not np.all(np.isfinite(lam)) or lam[0] <= 0:
        raise EigensolveFailure(f"non-positive eigenvalue {lam[0]:.3e}")
    X = np.zeros((space.ndof, m))
    X[f] = Xf
    return Basis(lam, X, float(eps), method).attach(space)


def discrete_dimension(space):
    """Dimension of the discrete solenoidal, impermeable, zero-mean-trace space."""
    return space.n_free - space.constraints().shape[0]


def orthonormality_defects(space, geo0, params, basis):
    K, M = fe_matrices(space, geo0, params, basis.eps)
    X = basis.X
    Xs = basis.scaled
    dm = np.abs(X.T @ (M @ X) - np.eye(basis.m)).max()
    dk = np.abs(Xs.T @ (K @ Xs) - np.eye(basis.m)).max()
    return float(dm), float(dk)


@dataclass
class PushedBasis:
    """w^j(t) = M(t) phi^j / sqrt(lambda_j) at bulk points."""

    W: np.ndarray  # (P, 2, m)
    G: np.ndarray  # (P, 2, 2, m) physical gradient, G[p, i, k] = d_k w_i
    D: np.ndarray  # (P, 2, 2, m) symmetric calA-gradient
    div: np.ndarray  # (P, m) div_calA w
    dtW: np.ndarray  # (P, 2, m) (d_t M) phi / sqrt(lambda)


def pushed_fields(space, cache, coeffs, which="bulk"):
    """Values, gradients and Hessians of M u for reference coefficient columns."""
    Ev, Gr, Hs = {
        "bulk": (space.Ev, space.Gr, space.Hs),
        "top": (space.Ev_t, space.Gr_t, space.Hs_t),
        "wall": (space.Ev_w, space.Gr_w, None),
    }[which]
    coeffs = np.asarray(coeffs)
    cols = coeffs.reshape(coeffs.shape[0], -1)
    n = cols.shape[1]
    P = len(cache.J)
    U = (Ev @ cols).reshape(P, 2, n)
    G0 = (Gr @ cols).reshape(P, 2, 2, n)
    W = np.einsum("pij,pjn->pin", cache.M, U)
    G = np.einsum("pijk,pjn->pikn", cache.dM, U) + np.einsum("pij,pjkn->pikn", cache.M, G0)
    out = {"U": U, "G0": G0, "W": W, "G": G}
    if Hs is not None:
        H0 = (Hs @ cols).reshape(P, 2, 2, 2, n)
        H = (
            np.einsum("pijkl,pjn->pikln", cache.d2M, U)
            + np.einsum("pijl,pjkn->pikln", cache.dM, G0)
            + np.einsum("pijk,pjln->pikln", cache.dM, G0)
            + np.einsum("pij,pjkln->pikln", cache.M, H0)
        )
        out["H0"], out["H"] = H0, H
    return out


def sym_grad(cache, G):
    """D_calA w = calA grad-transpose symmetrized: D_ij = calA_ik G_jk + calA_jk G_ik."""
    D = np.einsum("pik,pjkn->pijn", cache.calA, G)
    return D + np.transpose(D, (0, 2, 1, 3))


def push_forward(space, basis, geo):
    c = geo.bulk
    f = pushed_fields(space, c, basis.scaled)
    div = np.einsum("pjk,pjkm->pm", c.calA, f["G"])
    dtW = np.einsum("pij,pjm->pim", c.dtM, f["U"])
    return PushedBasis(f["W"], f["G"], sym_grad(c, f["G"]), div, dtW)


@dataclass
class FormMatrices:
    mass: np.ndarray
    stiff: np.ndarray
    surf: np.ndarray
    corner: np.ndarray
    rcoup: np.ndarray  # rows test i, columns trial j: (d_t w^j, w^i)_H0 from d_t M
    dtJ_mass: np.ndarray  # int d_t J w^i . w^j
    asymmetry: float
    t: float = None
    fe: FEForms = field(repr=False, default=None)
    geo: GeometrySet = field(repr=False, default=None)


def surface_gram(space, basis, params):
    sd = space.surf
    a, a1 = basis.a, basis.a1
    wg = sd.weights * params.g
    ws = sd.weights * params.sigma * sd.curv_w
    return a.T @ (wg[:, None] * a) + a1.T @ (ws[:, None] * a1)


def corner_gram(basis, params):
    c = basis.corner
    return params.kappa * (c.T @ c)


def assemble(space, basis, geo, params, t=None):
    fe = fe_forms(space, geo, params)
    Xs = basis.scaled
    proj = lambda A: Xs.T @ (A @ Xs)
    mass, stiff = proj(fe.mass), proj(fe.stiff)
    asym = max(np.abs(mass - mass.T).max(), np.abs(stiff - stiff.T).max())
    return FormMatrices(
        mass=0.5 * (mass + mass.T),
        stiff=0.5 * (stiff + stiff.T),
        surf=surface_gram(space, basis, params),
        corner=corner_gram(basis, params),
        rcoup=proj(fe.rcoup),
        dtJ_mass=proj(fe.dtJ_mass),
        asymmetry=float(asym),
        t=t,
        fe=fe,
        geo=geo,
    )


def save_basis(path, basis, space, meta=None):
    header = {
        "format": "contactline-basis",
        "version": CHECKPOINT_VERSION,
        "m": basis.m,
        "ndof": space.ndof,
        "eps": basis.eps,
        "method": basis.method,
        "mesh": space.checksum(),
    }
    header.update(meta or {})
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(b"CLBASIS\0")
        fh.write(np.uint32(len(hb)).tobytes())
        fh.write(hb)
        fh.write(np.ascontiguousarray(basis.lam, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(basis.X, dtype="<f8").tobytes())
    return header


def load_basis(path, space):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != b"CLBASIS\0":
            raise CheckpointMismatch("not a basis checkpoint")
        n = int(np.frombuffer(fh.read(4), dtype=np.uint32)[0])
        header = json.loads(fh.read(n))
        if header.get("version") != CHECKPOINT_VERSION:
            raise CheckpointMismatch(f"checkpoint version {header.get('version')} != {CHECKPOINT_VERSION}")
        if header["ndof"] != space.ndof or header["mesh"] != space.checksum():
            raise CheckpointMismatch("checkpoint was built on a different mesh")
        m = header["m"]
        lam = np.frombuffer(fh.read(8 * m), dtype="<f8").copy()
        X = np.frombuffer(fh.read(8 * m * space.ndof), dtype="<f8").reshape(space.ndof, m).copy()
    return Basis(lam, X, header["eps"], header["method"]).attach(space), header
