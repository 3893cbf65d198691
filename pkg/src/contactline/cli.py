"""Command line driver.

    contactline <command> --config PATH [--out DIR] [--threads N] [--seed U64]

Commands: validate, equilibrium, basis, linear, nonlinear, continuation,
ledger.  Exit codes: 0 success, 1 validation failure, 2 numerical failure,
64 usage error.
"""

import argparse
import io as _io
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .config import SobolevIndices, eps_max_of, lebesgue_exponent, load_config, validate
from .diagnostics import fit_decay, ledger, sample_fields, write_ledger
from .discretization import DiscreteSpace, assemble, build_initial_basis, identity_geometry, load_basis, save_basis
from .equilibrium import solve_equilibrium, write_table
from .errors import ContactLineError, DegenerateSeries, ValidationError
from .io import (
    atomic_path,
    atomic_write,
    config_hash,
    load_trajectory,
    output_checksums,
    read_manifest,
    save_trajectory,
    sha256_file,
    write_manifest,
)
from .linear_solver import EnergyAudit, LinearProblem, Trajectory, basic_record, run_linear, write_timeseries
from .nonlinear import IterationConfig, epsilon_continuation, fixed_point_solve, horizon, prepare_initial_data
from .surface import SurfaceFunction

COMMANDS = ("validate", "equilibrium", "basis", "linear", "nonlinear", "continuation", "ledger")
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser():
    p = _Parser(prog="contactline", description="Moving-contact-line free-boundary simulator.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="INI configuration file")
        s.add_argument("--out", default=None, help="output directory (default: out/<command>)")
        s.add_argument("--threads", type=_positive, default=1, help="parallel epsilon runs")
        s.add_argument("--seed", type=_u64, default=None, help="seed for iterative eigensolvers")
        if name == "ledger":
            s.add_argument("--run", default=None, help="stored run directory (default: --out)")
    return p


# shared setup


class Context:
    def __init__(self, cfg, args):
        self.cfg = cfg
        self.args = args
        self.seed = cfg.run.seed if args.seed is None else args.seed
        self.extra = {}
        self.outputs = []
        self.mesh = None
        self.basis_sum = None
        self._space = None

    @property
    def out(self):
        return self.args.out

    def path(self, name):
        return os.path.join(self.out, name)

    def write(self, name, text):
        atomic_write(self.path(name), text)
        self.outputs.append(name)

    def indices(self):
        ind = self.cfg.sobolev_indices()
        rep = validate(self.cfg.physical, ind)
        if not rep.ok:
            raise ValidationError("; ".join(rep.violations))
        return ind

    def equilibrium(self):
        n = self.cfg.discretization.cheb_n or None
        return solve_equilibrium(self.cfg.physical, n=n)

    def space(self):
        if self._space is None:
            d = self.cfg.discretization
            self._space = DiscreteSpace(self.equilibrium(), self.cfg.physical, d.nx, d.ny, d.grading, d.n_surface)
            self.mesh = self._space.checksum()
        return self._space

    def eta0(self):
        r, d = self.cfg.run, self.cfg.discretization
        return SurfaceFunction.mode(r.mode, self.cfg.physical.ell, d.n_surface, r.amplitude)

    def save_basis(self, basis, space, name="basis.bin"):
        with atomic_path(self.path(name)) as tmp:
            save_basis(tmp, basis, space, {"seed": self.seed})
        self.outputs.append(name)
        self.basis_sum = sha256_file(self.path(name))


def _lenient_indices(cfg):
    i = cfg.indices
    return SobolevIndices(
        omega_eq=i.omega_eq,
        eps_max=eps_max_of(i.omega_eq) if 0 < i.omega_eq < math.pi else float("nan"),
        eps_minus=i.eps_minus,
        eps_plus=i.eps_plus,
        alpha=i.alpha,
        q_minus=lebesgue_exponent(i.eps_minus),
        q_plus=lebesgue_exponent(i.eps_plus),
    )


def cmd_validate(ctx):
    cfg = ctx.cfg
    rep = validate(cfg.physical, _lenient_indices(cfg))
    if not cfg.contact_law().is_monotone():
        rep.violations.append("contact law strictly increasing")
    if rep.ok:
        try:
            z = ctx.equilibrium()
            rep = validate(cfg.physical, _lenient_indices(cfg), omega_computed=z.omega_eq)
        except ContactLineError as exc:
            rep.warnings.append(f"equilibrium not computed: {exc}")
    text = str(rep) + "\n"
    ctx.write("report.txt", text)
    print(text, end="")
    if not rep.ok:
        raise ValidationError(f"{len(rep.violations)} violations")


def cmd_equilibrium(ctx):
    z = ctx.equilibrium()
    buf = _io.StringIO()
    write_table(buf, z)
    ctx.write("equilibrium.txt", buf.getvalue())
    ctx.extra.update(omega_eq=z.omega_eq, P0=z.P0, min_height=z.min_height)
    print(f"omega_eq = {z.omega_eq:.12f}  P0 = {z.P0:.12f}  min zeta0 = {z.min_height:.6f}")
    if abs(z.omega_eq - ctx.cfg.indices.omega_eq) > 1e-6:
        msg = f"omega_eq input {ctx.cfg.indices.omega_eq:.9f} differs from equilibrium {z.omega_eq:.9f}"
        ctx.extra["warning"] = msg
        print("warning: " + msg)


def _eigen_csv(basis):
    lines = ["k,lambda"] + [f"{k + 1},{v!r}" for k, v in enumerate(basis.lam.tolist())]
    return "\n".join(lines) + "\n"


def cmd_basis(ctx):
    ctx.indices()
    sp_ = ctx.space()
    eta0 = ctx.eta0()
    geo0 = sp_.geometry(eta0, SurfaceFunction.zeros(eta0.ell, eta0.n))
    b = build_initial_basis(sp_, geo0, ctx.cfg.physical, ctx.cfg.run.epsilon, ctx.cfg.discretization.n_modes, seed=ctx.seed)
    ctx.save_basis(b, sp_)
    ctx.write("eigenvalues.csv", _eigen_csv(b))
    print(f"{b.m} modes, lambda_1 = {b.lam[0]:.10g}, lambda_m = {b.lam[-1]:.10g}")


def _write_run(ctx, traj, geos, fh_fields, ind, prefix=""):
    buf = _io.StringIO()
    write_timeseries(traj, buf)
    ctx.write(prefix + "timeseries.csv", buf.getvalue())
    samples = ledger(traj, ind, fh_fields)
    buf = _io.StringIO()
    write_ledger(samples, buf)
    ctx.write(prefix + "ledger.csv", buf.getvalue())
    save_trajectory(ctx.path(prefix + "trajectory.bin"), traj, geos)
    ctx.outputs.append(prefix + "trajectory.bin")
    try:
        lam, C = fit_decay(traj.times, traj.column("E_basic"))
    except DegenerateSeries:
        lam, C = float("nan"), float("nan")
    return lam, C


def cmd_linear(ctx):
    ind = ctx.indices()
    cfg = ctx.cfg
    sp_ = ctx.space()
    geo = identity_geometry(sp_)
    b = build_initial_basis(sp_, geo, cfg.physical, cfg.run.epsilon, cfg.discretization.n_modes, seed=ctx.seed)
    ctx.save_basis(b, sp_)
    prob = LinearProblem(sp_, b, cfg.physical, cfg.run.epsilon, xi0=ctx.eta0())
    T = cfg.run.horizon * cfg.run.scale
    traj = run_linear(prob, T / cfg.run.n_steps, cfg.run.n_steps)
    geos = [geo] * len(traj.states)
    lam, C = _write_run(ctx, traj, geos, sample_fields(traj, geometries=geos), ind)
    ctx.extra.update(T=T, max_identity_residual=traj.max_identity_residual(), lambda_hat=lam, C_hat=C)
    print(f"linear run to T = {T:g}: max identity residual {traj.max_identity_residual():.3e}")


def _iteration_config(cfg, T):
    r = cfg.run
    return IterationConfig(delta=r.delta, T=T, tol=r.tol, max_iter=r.max_iter, eps_list=tuple(r.eps_list), n_steps=r.n_steps)


def cmd_nonlinear(ctx):
    ind = ctx.indices()
    cfg, r = ctx.cfg, ctx.cfg.run
    sp_ = ctx.space()
    ctx.extra.update(T_eps2=min(r.epsilon**2, r.horizon) * r.scale, T_eps=min(r.epsilon, r.horizon) * r.scale)
    T = horizon(r.epsilon, r.horizon, r.scale)
    ctx.extra["T"] = T
    init = prepare_initial_data(
        ctx.eta0(), sp_, cfg.physical, ind, cfg.contact_law(), r.epsilon,
        m=cfg.discretization.n_modes, delta0=r.delta0, seed=ctx.seed,
    )
    ctx.save_basis(init.basis, sp_)
    res = fixed_point_solve(init, _iteration_config(cfg, T), log=print)
    lines = ["iteration,distance,ratio"]
    for i, d in enumerate(res.distances):
        ratio = res.ratios[i - 1] if i > 0 else float("nan")
        lines.append(f"{i + 1},{d!r},{ratio!r}")
    ctx.write("iterations.csv", "\n".join(lines) + "\n")
    it = res.iterate
    lam, C = _write_run(ctx, it.traj, it.geometries, it.fields, ind)
    final_ratio = res.ratios[-1] if res.ratios else float("nan")
    ctx.write("summary.csv", f"epsilon,iterations,final_ratio,lambda_hat,C_hat\n{r.epsilon!r},{res.iterations},{final_ratio!r},{lam!r},{C!r}\n")
    ctx.extra.update(iterations=res.iterations, ratios=res.ratios, lambda_hat=lam, C_hat=C)
    print(f"fixed point after {res.iterations} iterations; lambda_hat = {lam:.6g}, C_hat = {C:.6g}")


def cmd_continuation(ctx):
    ind = ctx.indices()
    cfg, r = ctx.cfg, ctx.cfg.run
    sp_ = ctx.space()
    conf = _iteration_config(cfg, r.horizon * r.scale)
    res = epsilon_continuation(
        ctx.eta0(), sp_, cfg.physical, ind, cfg.contact_law(), conf,
        m=cfg.discretization.n_modes, delta0=r.delta0, threads=ctx.args.threads,
    )
    rows = ["epsilon,iterations,final_ratio,lambda_hat,C_hat"]
    for i, (eps, fp) in enumerate(zip(res.epsilons, res.results)):
        it = fp.iterate
        ctx.save_basis(it.traj.problem.basis, sp_, name=f"eps{i}_basis.bin")
        lam, C = _write_run(ctx, it.traj, it.geometries, it.fields, ind, prefix=f"eps{i}_")
        fr = fp.ratios[-1] if fp.ratios else float("nan")
        rows.append(f"{eps!r},{fp.iterations},{fr!r},{lam!r},{C!r}")
    ctx.write("summary.csv", "\n".join(rows) + "\n")
    dl = ["epsilon_a,epsilon_b,distance"] + [
        f"{a!r},{b!r},{d!r}" for a, b, d in zip(res.epsilons, res.epsilons[1:], res.distances)
    ]
    ctx.write("distances.csv", "\n".join(dl) + "\n")
    ctx.extra.update(T=res.T, distances=res.distances)
    print("distances: " + ", ".join(f"{d:.4e}" for d in res.distances))


def replay_ledger(run_dir, space, cfg, ind, prefix=""):
    """Recompute the ledger of a stored run from its trajectory and basis files."""
    basis, _ = load_basis(os.path.join(run_dir, prefix + "basis.bin"), space)
    h, states, surfaces, xi0 = load_trajectory(os.path.join(run_dir, prefix + "trajectory.bin"), space)
    geos = [space.geometry(e, de) for e, de in surfaces]
    prob = LinearProblem(space, basis, cfg.physical, h["epsilon"], xi0=xi0, geometry=lambda k, t: geos[k])
    traj = Trajectory(prob, h["dt"])
    audit = EnergyAudit(h["dt"])
    for st, geo in zip(states, geos):
        forms = assemble(space, basis, geo, cfg.physical, t=st.t)
        traj.records.append(basic_record(st, prob, forms, audit))
        traj.states.append(st)
    return ledger(traj, ind, sample_fields(traj, geometries=geos))


def cmd_ledger(ctx):
    ind = ctx.indices()
    run_dir = ctx.args.run or ctx.out
    sp_ = ctx.space()
    prefixes = sorted(
        n[: -len("trajectory.bin")] for n in os.listdir(run_dir) if n.endswith("trajectory.bin")
    )
    if not prefixes:
        raise ValidationError(f"no stored trajectory in {run_dir}")
    same = True
    for pre in prefixes:
        samples = replay_ledger(run_dir, sp_, ctx.cfg, ind, pre)
        buf = _io.StringIO()
        write_ledger(samples, buf)
        name = pre + "ledger_replay.csv"
        ctx.write(name, buf.getvalue())
        inline = os.path.join(run_dir, pre + "ledger.csv")
        if os.path.exists(inline):
            with open(inline) as fh:
                same = same and fh.read() == buf.getvalue()
    ctx.extra["matches_inline"] = same
    print("replayed ledger " + ("matches" if same else "differs from") + " the inline ledger")


HANDLERS = {
    "validate": cmd_validate,
    "equilibrium": cmd_equilibrium,
    "basis": cmd_basis,
    "linear": cmd_linear,
    "nonlinear": cmd_nonlinear,
    "continuation": cmd_continuation,
    "ledger": cmd_ledger,
}


def _up_to_date(out, command, chash):
    try:
        m = read_manifest(out)
    except (OSError, ValueError):
        return False
    if m.get("command") != command or m.get("config_hash") != chash or m.get("exit_status") != 0:
        return False
    if command == "ledger" or not m.get("outputs"):
        return False
    return output_checksums(out, m["outputs"]) == m["outputs"]


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if args.out is None:
        args.out = os.path.join("out", args.command)
    t0 = time.perf_counter()
    code, err = 0, None
    cfg = None
    try:
        cfg = load_config(args.config)
        ctx = Context(cfg, args)
        chash = config_hash({"config": cfg.as_dict(), "seed": ctx.seed})
        if _up_to_date(args.out, args.command, chash):
            print(f"{args.out} is up to date")
            return 0
        os.makedirs(args.out, exist_ok=True)
        HANDLERS[args.command](ctx)
    except ContactLineError as exc:
        code, err = exc.exit_code, exc
    except ValueError as exc:
        code, err = 1, exc
    if err is not None:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
    if cfg is not None:
        os.makedirs(args.out, exist_ok=True)
        manifest = {
            "command": args.command,
            "config": cfg.as_dict(),
            "config_hash": chash,
            "code_version": __version__,
            "seed": ctx.seed,
            "threads": args.threads,
            "mesh_checksum": ctx.mesh,
            "basis_checksum": ctx.basis_sum,
            "wall_clock": time.perf_counter() - t0,
            "exit_status": code,
            "error": None if err is None else {"type": type(err).__name__, "message": str(err)},
            "outputs": output_checksums(args.out, ctx.outputs),
            "results": _jsonable(ctx.extra),
        }
        write_manifest(args.out, manifest)
    return code


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def main(argv=None):
    sys.exit(run(argv))
