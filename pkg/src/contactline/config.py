"""Physical parameters, Sobolev index chain, contact law and run configuration.

Configuration files are INI-style with the flat sections ``physical``,
``indices``, ``law``, ``discretization`` and ``run``.  Any field can be
overridden from the environment as ``CONTACTLINE_<SECTION>_<FIELD>``.
"""

import configparser
import dataclasses
import math
import os
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ChainViolation, ConfigError

ENV_PREFIX = "CONTACTLINE_"


@dataclass(frozen=True)
class PhysicalParams:
    mu: float = 1.0
    sigma: float = 1.0
    g: float = 1.0
    beta: float = 1.0
    kappa: float = 1.0
    gamma_jump: float = 0.3
    ell: float = 1.0
    volume: float = 2.0
    bottom_depth: float = 0.5


@dataclass(frozen=True)
class SobolevIndices:
    omega_eq: float
    eps_max: float
    eps_minus: float
    eps_plus: float
    alpha: float
    q_minus: float
    q_plus: float


def eps_max_of(omega_eq):
    return min(1.0, -1.0 + math.pi / omega_eq)


def lebesgue_exponent(eps):
    return 2.0 / (2.0 - eps)


def chain_violations(alpha, eps_minus, eps_plus, eps_max):
    """All failed inequalities of the index chain, in a fixed order."""
    checks = [
        ("0 < alpha", 0.0 < alpha),
        ("alpha < eps_minus", alpha < eps_minus),
        ("eps_minus < eps_plus", eps_minus < eps_plus),
        ("eps_plus < eps_max", eps_plus < eps_max),
        ("alpha < eps_minus/2", alpha < eps_minus / 2.0),
        ("alpha < (eps_plus - eps_minus)/2", alpha < (eps_plus - eps_minus) / 2.0),
        ("eps_plus <= (eps_minus + 1)/2", eps_plus <= (eps_minus + 1.0) / 2.0),
    ]
    return [name for name, ok in checks if not ok]


def derive_indices(omega_eq, alpha, eps_minus, eps_plus):
    if not 0.0 < omega_eq < math.pi:
        raise ChainViolation("0 < omega_eq < pi")
    eps_max = eps_max_of(omega_eq)
    bad = chain_violations(alpha, eps_minus, eps_plus, eps_max)
    if bad:
        raise ChainViolation(bad[0])
    return SobolevIndices(
        omega_eq=omega_eq,
        eps_max=eps_max,
        eps_minus=eps_minus,
        eps_plus=eps_plus,
        alpha=alpha,
        q_minus=lebesgue_exponent(eps_minus),
        q_plus=lebesgue_exponent(eps_plus),
    )


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def __str__(self):
        lines = [f"{len(self.violations)} violations"]
        lines += [f"  violation: {v}" for v in self.violations]
        lines += [f"  warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def validate(params, indices, omega_computed=None):
    """Check every constraint; never raises."""
    rep = ValidationReport()
    if not abs(params.gamma_jump) < params.sigma:
        rep.violations.append("Young relation |gamma_jump| < sigma")
    for name in ("mu", "sigma", "beta", "kappa", "ell", "volume", "bottom_depth"):
        if not getattr(params, name) > 0:
            rep.violations.append(f"{name} > 0")
    if not params.g >= 0:
        rep.violations.append("g >= 0")
    if indices is None:
        return rep
    if not 0.0 < indices.omega_eq < math.pi:
        rep.violations.append("0 < omega_eq < pi")
        return rep
    eps_max = eps_max_of(indices.omega_eq)
    if indices.eps_max != eps_max:
        rep.violations.append("eps_max = min(1, -1 + pi/omega_eq)")
    rep.violations += chain_violations(indices.alpha, indices.eps_minus, indices.eps_plus, eps_max)
    if indices.q_minus != lebesgue_exponent(indices.eps_minus):
        rep.violations.append("q_minus = 2/(2 - eps_minus)")
    if indices.q_plus != lebesgue_exponent(indices.eps_plus):
        rep.violations.append("q_plus = 2/(2 - eps_plus)")
    if omega_computed is not None and abs(omega_computed - indices.omega_eq) > 1e-6:
        rep.warnings.append(
            f"omega_eq input {indices.omega_eq:.9f} differs from equilibrium {omega_computed:.9f}"
        )
    return rep


class ContactLaw:
    """Contact point response W with W(0) = 0, W'(0) = kappa.

    Default W(z) = kappa*z + kappa*cubic*z**3.  A table (z, W) is
    interpolated by a natural C2 cubic spline.
    """

    def __init__(self, kappa, cubic=0.0, table=None):
        self.kappa = float(kappa)
        self.cubic = float(cubic)
        self.table = None
        if table is not None:
            z, w = (np.asarray(a, float) for a in table)
            self.table = (z, w)
            self._spline = CubicSpline(z, w, bc_type="natural")
            if abs(self._spline(0.0)) > 1e-12:
                raise ConfigError("tabulated contact law must satisfy W(0) = 0")

    def W(self, z):
        z = np.asarray(z, float)
        if self.table is not None:
            return self._spline(z)
        return self.kappa * z + self.kappa * self.cubic * z**3

    def dW(self, z):
        z = np.asarray(z, float)
        if self.table is not None:
            return self._spline(z, 1)
        return self.kappa + 3.0 * self.kappa * self.cubic * z**2

    def hatW(self, z):
        z = np.asarray(z, float)
        if self.table is None:
            return self.cubic * z**3
        return self.W(z) / self.kappa - z

    def is_monotone(self, zmax=1.0, n=401):
        z = np.linspace(-zmax, zmax, n)
        return bool(np.all(np.diff(self.W(z)) > 0))


@dataclass(frozen=True)
class IndicesInput:
    omega_eq: float = math.pi / 2
    alpha: float = 0.05
    eps_minus: float = 0.3
    eps_plus: float = 0.5


@dataclass(frozen=True)
class LawInput:
    cubic: float = 1.0


@dataclass(frozen=True)
class DiscretizationInput:
    nx: int = 8
    ny: int = 6
    n_modes: int = 24
    n_surface: int = 64
    cheb_n: int = 48
    grading: float = 0.0


@dataclass(frozen=True)
class RunInput:
    epsilon: float = 0.1
    horizon: float = 0.05
    n_steps: int = 10
    amplitude: float = 1e-3
    mode: int = 1
    delta: float = 1.0
    delta0: float = 10.0
    tol: float = 1e-8
    max_iter: int = 12
    eps_list: tuple = (0.1, 0.05, 0.025, 0.0125)
    scale: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class Config:
    physical: PhysicalParams = PhysicalParams()
    indices: IndicesInput = IndicesInput()
    law: LawInput = LawInput()
    discretization: DiscretizationInput = DiscretizationInput()
    run: RunInput = RunInput()

    def contact_law(self):
        return ContactLaw(self.physical.kappa, self.law.cubic)

    def sobolev_indices(self):
        return derive_indices(**dataclasses.asdict(self.indices))

    def as_dict(self):
        out = {}
        for f in fields(self):
            sec = dataclasses.asdict(getattr(self, f.name))
            out[f.name] = {k: list(v) if isinstance(v, tuple) else v for k, v in sec.items()}
        return out


def _coerce(raw, default, key):
    try:
        if isinstance(default, tuple):
            return tuple(float(s) for s in raw.replace(",", " ").split())
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def _section(cls, items, sec_name, env):
    kwargs = {}
    known = {f.name: f for f in fields(cls)}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"unknown field {sec_name}.{key}")
        kwargs[key] = _coerce(raw, getattr(cls(), key), f"{sec_name}.{key}")
    for name in known:
        env_key = f"{ENV_PREFIX}{sec_name.upper()}_{name.upper()}"
        if env_key in env:
            kwargs[name] = _coerce(env[env_key], getattr(cls(), name), env_key)
    return cls(**kwargs)


_SECTIONS = {
    "physical": PhysicalParams,
    "indices": IndicesInput,
    "law": LawInput,
    "discretization": DiscretizationInput,
    "run": RunInput,
}


def parse_config(text, env=None):
    env = os.environ if env is None else env
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
    parts = {}
    for name, cls in _SECTIONS.items():
        items = dict(cp.items(name)) if cp.has_section(name) else {}
        parts[name] = _section(cls, items, name, env)
    return Config(**parts)


def load_config(path, env=None):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, env)


def dump_config(cfg):
    lines = []
    for name, sec in cfg.as_dict().items():
        lines.append(f"[{name}]")
        for k, v in sec.items():
            if isinstance(v, list):
                v = ", ".join(repr(float(x)) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)
