"""Structured P2/P1 triangulation of the equilibrium domain.

Elements are affine in the reference coordinates (x1, s) on the rectangle
(-ell, ell) x (0, 1); the physical domain is its image under

    x2 = -D + s (zeta0(x1) + D),

so the top boundary s = 1 is exactly x2 = zeta0(x1) and the vessel bottom
is the line x2 = -D.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi

# local P2 node order: three vertices, then midpoints of edges 01, 12, 20
_EDGES = ((0, 1), (1, 2), (2, 0))


def triangle_rule(n=4):
    """Collapsed Gauss rule on the unit triangle, exact to degree 2n - 1."""
    t, wt = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (1.0 + t)
    wu = 0.25 * wt
    v, wv = np.polynomial.legendre.leggauss(n)
    v = 0.5 * (1.0 + v)
    wv = 0.5 * wv
    U, V = np.meshgrid(u, v, indexing="ij")
    xi = np.stack([U.ravel(), (V * (1.0 - U)).ravel()], -1)
    w = np.outer(wu, wv).ravel()
    return xi, w


def line_rule(n=5):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (1.0 + x), 0.5 * w


def p2_shape(xi):
    """Values, (xi, eta)-gradients and Hessians of the six P2 functions."""
    x, y = xi[..., 0], xi[..., 1]
    l = [1.0 - x - y, x, y]
    dl = [np.array([-1.0, -1.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    vals, grads, hess = [], [], []
    for i in range(3):
        vals.append(l[i] * (2 * l[i] - 1))
        grads.append(np.multiply.outer(4 * l[i] - 1, dl[i]))
        hess.append(np.broadcast_to(4 * np.outer(dl[i], dl[i]), x.shape + (2, 2)))
    for i, j in _EDGES:
        vals.append(4 * l[i] * l[j])
        grads.append(4 * (np.multiply.outer(l[j], dl[i]) + np.multiply.outer(l[i], dl[j])))
        hess.append(np.broadcast_to(4 * (np.outer(dl[i], dl[j]) + np.outer(dl[j], dl[i])), x.shape + (2, 2)))
    return np.stack(vals, -1), np.stack(grads, -2), np.stack(hess, -3)


def p1_shape(xi):
    x, y = xi[..., 0], xi[..., 1]
    vals = np.stack([1.0 - x - y, x, y], -1)
    grads = np.broadcast_to(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]), x.shape + (3, 2))
    return vals, grads


def _graded(n, grading):
    u = np.linspace(-1.0, 1.0, n + 1)
    return (1.0 - grading) * u + grading * np.sin(0.5 * np.pi * u)


@dataclass
class Mesh:
    ell: float
    depth: float
    nx: int
    ny: int
    xv: np.ndarray  # vertex x1 coordinates (nx+1)
    sv: np.ndarray  # vertex s coordinates (ny+1)
    ref: np.ndarray  # P2 node reference coords (x1, s)
    nodes: np.ndarray  # P2 node physical coords
    cells: np.ndarray  # (ne, 6) P2 connectivity
    p1_of_node: np.ndarray  # P1 index of each P2 node or -1
    p1_cells: np.ndarray  # (ne, 3)
    tags: dict

    @property
    def n_nodes(self):
        return len(self.ref)

    @property
    def n_p1(self):
        return int(self.p1_of_node.max()) + 1

    @property
    def n_cells(self):
        return len(self.cells)

    def vertices_ref(self):
        return self.ref[self.cells[:, :3]]

    def locate(self, x1, s):
        """Element index and local (xi, eta) of reference points (x1, s)."""
        x1 = np.asarray(x1, float)
        s = np.asarray(s, float)
        I = np.clip(np.searchsorted(self.xv, x1, side="right") - 1, 0, self.nx - 1)
        J = np.clip(np.searchsorted(self.sv, s, side="right") - 1, 0, self.ny - 1)
        u = (x1 - self.xv[I]) / (self.xv[I + 1] - self.xv[I])
        v = (s - self.sv[J]) / (self.sv[J + 1] - self.sv[J])
        upper = v > u
        elem = 2 * (J * self.nx + I) + upper.astype(int)
        P = self.vertices_ref()[elem]
        Ja = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], -1)
        rhs = np.stack([x1, s], -1) - P[:, 0]
        xi = np.linalg.solve(Ja, rhs[..., None])[..., 0]
        return elem, xi


def build_mesh(zeta0, depth, nx, ny, grading=0.0):
    ell = zeta0.ell
    xv = ell * _graded(nx, grading)
    sv = 0.5 * (1.0 + _graded(ny, grading))
    xs = np.empty(2 * nx + 1)
    xs[0::2] = xv
    xs[1::2] = 0.5 * (xv[:-1] + xv[1:])
    ss = np.empty(2 * ny + 1)
    ss[0::2] = sv
    ss[1::2] = 0.5 * (sv[:-1] + sv[1:])
    X, S = np.meshgrid(xs, ss)  # node (i, j) -> index j*(2nx+1)+i
    ref = np.stack([X.ravel(), S.ravel()], -1)
    nodes = map_to_physical(zeta0, depth, ref)
    nxp = 2 * nx + 1
    idx = lambda i, j: j * nxp + i
    cells = []
    for J in range(ny):
        for I in range(nx):
            a, b = idx(2 * I, 2 * J), idx(2 * I + 2, 2 * J)
            c, d = idx(2 * I + 2, 2 * J + 2), idx(2 * I, 2 * J + 2)
            ab, bc = idx(2 * I + 1, 2 * J), idx(2 * I + 2, 2 * J + 1)
            ac, cd, da = idx(2 * I + 1, 2 * J + 1), idx(2 * I + 1, 2 * J + 2), idx(2 * I, 2 * J + 1)
            cells.append([a, b, c, ab, bc, ac])
            cells.append([a, c, d, ac, cd, da])
    cells = np.array(cells, dtype=np.int64)
    ii, jj = np.meshgrid(np.arange(nxp), np.arange(2 * ny + 1))
    ii, jj = ii.ravel(), jj.ravel()
    is_vertex = (ii % 2 == 0) & (jj % 2 == 0)
    p1_of_node = np.full(len(ref), -1, dtype=np.int64)
    p1_of_node[is_vertex] = np.arange(is_vertex.sum())
    tags = {
        "top": np.flatnonzero(jj == 2 * ny),
        "bottom": np.flatnonzero(jj == 0),
        "wall_left": np.flatnonzero(ii == 0),
        "wall_right": np.flatnonzero(ii == 2 * nx),
        "corners": np.array([idx(0, 2 * ny), idx(2 * nx, 2 * ny)]),
    }
    return Mesh(ell, depth, nx, ny, xv, sv, ref, nodes, cells, p1_of_node, p1_of_node[cells[:, :3]], tags)


def map_to_physical(zeta0, depth, ref):
    h = zeta0(ref[..., 0]) + depth
    return np.stack([ref[..., 0], -depth + ref[..., 1] * h], -1)


@dataclass
class PointSet:
    """Points inside known elements with shape data in physical coordinates."""

    elem: np.ndarray
    xi: np.ndarray
    weights: np.ndarray
    x: np.ndarray  # physical coordinates
    s: np.ndarray
    N: np.ndarray  # (n, 6)
    dN: np.ndarray  # (n, 6, 2) physical gradient
    d2N: np.ndarray  # (n, 6, 2, 2) physical Hessian
    dNr: np.ndarray  # (n, 6, 2) reference (x1, s) gradient
    d2Nr: np.ndarray  # (n, 6, 2, 2) reference Hessian
    L: np.ndarray  # (n, 3) P1 values
    dL: np.ndarray  # (n, 3, 2) P1 physical gradient
    area: np.ndarray  # |det| of (xi, eta) -> physical map

    def __len__(self):
        return len(self.elem)


def point_set(mesh, zeta0, elem, xi, weights=None):
    elem = np.asarray(elem, dtype=np.int64)
    xi = np.asarray(xi, float)
    P = mesh.vertices_ref()[elem]
    Ja = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], -1)  # columns
    Jinv = np.linalg.inv(Ja)
    ref = P[:, 0] + np.einsum("nij,nj->ni", Ja, xi)
    x1, s = ref[:, 0], ref[:, 1]
    N, dNxi, d2Nxi = p2_shape(xi)
    dNr = np.einsum("nak,nkj->naj", dNxi, Jinv)
    d2Nr = np.einsum("nki,nakl,nlj->naij", Jinv, d2Nxi, Jinv)
    L, dLxi = p1_shape(xi)
    dLr = np.einsum("nak,nkj->naj", dLxi, Jinv)

    h = zeta0(x1) + mesh.depth
    h1 = zeta0(x1, 1)
    h2 = zeta0(x1, 2)
    s1 = -s * h1 / h
    s2 = 1.0 / h
    s11 = -s * (h2 / h - 2 * h1**2 / h**2)
    s12 = -h1 / h**2

    def phys_grad(g):
        return np.stack([g[..., 0] + g[..., 1] * s1[:, None], g[..., 1] * s2[:, None]], -1)

    fs = dNr[..., 1]
    f11, f1s, fss = d2Nr[..., 0, 0], d2Nr[..., 0, 1], d2Nr[..., 1, 1]
    S1, S2, S11, S12 = s1[:, None], s2[:, None], s11[:, None], s12[:, None]
    hxx = f11 + 2 * f1s * S1 + fss * S1**2 + fs * S11
    hxy = f1s * S2 + fss * S1 * S2 + fs * S12
    hyy = fss * S2**2
    d2N = np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)
    area = np.abs(np.linalg.det(Ja)) * h
    x = np.stack([x1, -mesh.depth + s * h], -1)
    w = np.zeros(len(elem)) if weights is None else np.asarray(weights, float)
    return PointSet(elem, xi, w, x, s, N, phys_grad(dNr), d2N, dNr, d2Nr, L, phys_grad(dLr), area)


def bulk_points(mesh, zeta0, order=4):
    xi, w = triangle_rule(order)
    ne, nq = mesh.n_cells, len(w)
    elem = np.repeat(np.arange(ne), nq)
    XI = np.tile(xi, (ne, 1))
    ps = point_set(mesh, zeta0, elem, XI)
    ps.weights = np.tile(w, ne) * ps.area
    return ps


def edge_points(mesh, zeta0, which, order=5):
    """Gauss points on a boundary part with weights for the arclength (walls,
    bottom) or for dx1 (top), plus unit normal and tangent."""
    t, wt = line_rule(order)
    if which == "top":
        a, b = mesh.xv[:-1], mesh.xv[1:]
        x1 = (a[:, None] + (b - a)[:, None] * t).ravel()
        w = ((b - a)[:, None] * wt).ravel()
        elem, xi = mesh.locate(x1, np.ones_like(x1))
        ps = point_set(mesh, zeta0, elem, xi, w)
        return ps, None, None
    if which == "bottom":
        a, b = mesh.xv[:-1], mesh.xv[1:]
        x1 = (a[:, None] + (b - a)[:, None] * t).ravel()
        w = ((b - a)[:, None] * wt).ravel()
        elem, xi = mesh.locate(x1, np.zeros_like(x1))
        ps = point_set(mesh, zeta0, elem, xi, w)
        nu = np.tile([0.0, -1.0], (len(x1), 1))
        tau = np.tile([1.0, 0.0], (len(x1), 1))
        return ps, nu, tau
    side = -1.0 if which == "wall_left" else 1.0
    a, b = mesh.sv[:-1], mesh.sv[1:]
    s = (a[:, None] + (b - a)[:, None] * t).ravel()
    x1 = np.full_like(s, side * mesh.ell)
    h = zeta0(x1) + mesh.depth
    w = ((b - a)[:, None] * wt).ravel() * h
    elem, xi = mesh.locate(x1, s)
    ps = point_set(mesh, zeta0, elem, xi, w)
    nu = np.tile([side, 0.0], (len(s), 1))
    tau = np.tile([0.0, 1.0], (len(s), 1))
    return ps, nu, tau


def top_points_at(mesh, zeta0, x1):
    x1 = np.asarray(x1, float)
    elem, xi = mesh.locate(x1, np.ones_like(x1))
    return point_set(mesh, zeta0, elem, xi)


def save_mesh(path, mesh):
    lines = [
        f"# contactline mesh v1 ell={mesh.ell!r} depth={mesh.depth!r} nx={mesh.nx} ny={mesh.ny}",
        f"# nodes {mesh.n_nodes}: x1 x2 s",
    ]
    lines += [f"{r[0]:.17e} {p[1]:.17e} {r[1]:.17e}" for r, p in zip(mesh.ref, mesh.nodes)]
    lines.append(f"# cells {mesh.n_cells}: six P2 node indices")
    lines += [" ".join(str(int(i)) for i in c) for c in mesh.cells]
    text = "\n".join(lines) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
    return text


def load_mesh(path, zeta0):
    """Rebuild a mesh from its text form (structure is regenerated and checked)."""
    with open(path) as fh:
        head = fh.readline()
        fields = dict(tok.split("=") for tok in head.split()[4:])
        rest = fh.read().splitlines()
    mesh = build_mesh(zeta0, float(fields["depth"]), int(fields["nx"]), int(fields["ny"]))
    nn = mesh.n_nodes
    node_lines = rest[1 : 1 + nn]
    ref = np.array([[float(v) for v in ln.split()] for ln in node_lines])
    cells = np.array([[int(v) for v in ln.split()] for ln in rest[2 + nn :] if ln.strip()])
    if not (np.allclose(ref[:, 0], mesh.ref[:, 0]) and np.array_equal(cells, mesh.cells)):
        # graded meshes: take the stored vertex coordinates
        mesh.ref = np.stack([ref[:, 0], ref[:, 2]], -1)
        mesh.cells = cells
        mesh.nodes = map_to_physical(zeta0, mesh.depth, mesh.ref)
    return mesh
