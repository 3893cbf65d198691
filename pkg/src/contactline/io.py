"""Run artifacts: atomic writes, checksums, manifests and trajectory files."""

import contextlib
import hashlib
import json
import os
import tempfile

import numpy as np

from .errors import CheckpointMismatch
from .linear_solver import SimState
from .surface import SurfaceFunction

TRAJ_MAGIC = b"CLTRAJ\0\0"
TRAJ_VERSION = 1


@contextlib.contextmanager
def atomic_path(path):
    """Yield a temporary path next to `path`; rename over it on success."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def atomic_write(path, data):
    mode = "wb" if isinstance(data, bytes) else "w"
    with atomic_path(path) as tmp:
        with open(tmp, mode) as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(cfg_dict):
    return hashlib.sha256(json.dumps(cfg_dict, sort_keys=True).encode()).hexdigest()[:16]


def write_manifest(outdir, manifest):
    atomic_write(os.path.join(outdir, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(outdir):
    with open(os.path.join(outdir, "manifest.json")) as fh:
        return json.load(fh)


def output_checksums(outdir, names):
    return {n: sha256_file(os.path.join(outdir, n)) for n in sorted(names) if os.path.exists(os.path.join(outdir, n))}


# trajectories


def save_trajectory(path, traj, geometries, meta=None):
    """States, loads, pressures and the geometry surfaces each step was solved on."""
    prob = traj.problem
    st = traj.states
    header = {
        "format": "contactline-trajectory",
        "version": TRAJ_VERSION,
        "K": len(st),
        "m": prob.basis.m,
        "n_surface": prob.space.n_surface,
        "n_p1": prob.space.mesh.n_p1,
        "epsilon": prob.epsilon,
        "dt": traj.dt,
        "mesh": prob.space.checksum(),
    }
    header.update(meta or {})
    arrays = [
        np.array([s.t for s in st]),
        np.array([s.k for s in st], float),
        np.stack([s.d for s in st]),
        np.stack([s.ddot for s in st]),
        np.stack([s.Y for s in st]),
        np.stack([s.load for s in st]),
        np.stack([s.q if s.q is not None else np.zeros(prob.space.mesh.n_p1) for s in st]),
        np.stack([s.theta.coeffs for s in st]),
        np.stack([s.dtheta.coeffs for s in st]),
        np.stack([g.eta.coeffs for g in geometries]),
        np.stack([g.deta.coeffs for g in geometries]),
        prob.xi0.coeffs,
    ]
    hb = json.dumps(header, sort_keys=True).encode()
    with atomic_path(path) as tmp:
        with open(tmp, "wb") as fh:
            fh.write(TRAJ_MAGIC)
            fh.write(np.uint32(len(hb)).tobytes())
            fh.write(hb)
            for a in arrays:
                fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return header


def load_trajectory(path, space):
    """(header, states, geometry surfaces, xi0) from a trajectory file."""
    with open(path, "rb") as fh:
        if fh.read(8) != TRAJ_MAGIC:
            raise CheckpointMismatch("not a trajectory file")
        n = int(np.frombuffer(fh.read(4), dtype=np.uint32)[0])
        h = json.loads(fh.read(n))
        if h.get("version") != TRAJ_VERSION:
            raise CheckpointMismatch(f"trajectory version {h.get('version')} != {TRAJ_VERSION}")
        if h["mesh"] != space.checksum():
            raise CheckpointMismatch("trajectory was computed on a different mesh")
        K, m, ns, npp = h["K"], h["m"], h["n_surface"], h["n_p1"]
        read = lambda *shape: np.frombuffer(fh.read(8 * int(np.prod(shape))), dtype="<f8").reshape(shape).copy()
        t, k = read(K), read(K)
        d, ddot, Y, load = read(K, m), read(K, m), read(K, m), read(K, m)
        q = read(K, npp)
        th, dth, ge, gde = read(K, ns), read(K, ns), read(K, ns), read(K, ns)
        xi0 = read(ns)
    ell = space.mesh.ell
    states = [
        SimState(
            float(t[i]), int(k[i]), d[i], ddot[i], Y[i], load[i],
            SurfaceFunction(th[i], ell), SurfaceFunction(dth[i], ell), q=q[i],
        )
        for i in range(K)
    ]
    geos = [(SurfaceFunction(ge[i], ell), SurfaceFunction(gde[i], ell)) for i in range(K)]
    return h, states, geos, SurfaceFunction(xi0, ell)
