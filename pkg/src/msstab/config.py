"""JSON experiment configuration.

A configuration is one JSON object with the sections ``equation``, ``noise``,
``space``, ``time``, ``scheme``, ``mc`` and ``output``.  Documented defaults:
``noise.kappa = space.N_h``, ``noise.carrier = "H"``, ``mc.M = 10000``,
``mc.seed = 0``, ``mc.stride = 1``, ``mc.workers = 1``, ``analysis.band =
1e-10``, ``equation.F = null`` and ``initial = "default"`` (the function
``sqrt(30) x (1 - x)``).  Every other field is required.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractViolation, MSStabError

BASES = ("spectral", "fem")
OPERATORS = ("G1", "G2", "zero")
RATIONALS = ("BE", "CN", "FE")
INTEGRATORS = ("EM", "Milstein")
CARRIERS = ("H", "H1")


@dataclass
class EquationSection:
    nu: float
    operator: str
    F: float | str | None = None


@dataclass
class NoiseSection:
    C_mu: float
    alpha: float
    kappa: int
    carrier: str = "H"


@dataclass
class SpaceSection:
    basis: str
    N_h: int


@dataclass
class TimeSection:
    dt: float
    T: float


@dataclass
class SchemeSection:
    rational: str
    integrator: str


@dataclass
class MCSection:
    M: int = 10_000
    seed: int = 0
    stride: int = 1
    workers: int = 1


@dataclass
class OutputSection:
    dir: str = "."


@dataclass
class AnalysisSection:
    band: float = 1e-10


@dataclass
class ExperimentConfig:
    equation: EquationSection
    noise: NoiseSection
    space: SpaceSection
    time: TimeSection
    scheme: SchemeSection
    mc: MCSection = field(default_factory=MCSection)
    output: OutputSection = field(default_factory=OutputSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    initial: str | list = "default"
    base_dir: str | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @property
    def warnings(self) -> list:
        out = []
        if self.scheme.integrator == "Milstein" and self.scheme.rational != "BE":
            out.append(f"Milstein with {self.scheme.rational}: closed-form sufficient "
                       "conditions cover backward Euler only; rho(S) is still exact")
        if self.noise.kappa > self.space.N_h and self.equation.operator == "G1":
            out.append("G1 modes beyond N_h do not act on the discrete space and are dropped")
        return out

    # builders for the numerical objects

    def build_space(self):
        from .discretization import make_space
        return make_space(self.space.basis, self.equation.nu, self.space.N_h)

    def build_noise(self):
        from .noise import NoiseModel
        return NoiseModel(self.noise.C_mu, self.noise.alpha, self.noise.kappa,
                          carrier=self.noise.carrier, nu=self.equation.nu)

    def build_diffusion(self):
        from .schemes import DiffusionOperator
        return DiffusionOperator(self.equation.operator)

    def F_matrix(self):
        F = self.equation.F
        n = self.space.N_h
        if F is None:
            return None
        if isinstance(F, (int, float)):
            return None if F == 0 else float(F) * np.eye(n)
        path = Path(F)
        if not path.is_absolute() and self.base_dir:
            path = Path(self.base_dir) / path
        try:
            mat = np.load(path) if path.suffix == ".npy" else np.loadtxt(path, ndmin=2)
        except (OSError, ValueError) as exc:
            raise ConfigError("equation.F", f"cannot read matrix file {str(path)!r}: {exc}")
        if mat.shape != (n, n):
            raise ConfigError("equation.F", f"matrix has shape {mat.shape}, expected ({n}, {n})")
        return np.asarray(mat, dtype=float)

    def build_scheme(self):
        from .schemes import SchemeConfig
        return SchemeConfig(self.scheme.rational, self.scheme.integrator, self.time.dt,
                            F=self.F_matrix())

    def build_ensemble(self):
        from .montecarlo import EnsembleConfig
        return EnsembleConfig(M=self.mc.M, master_seed=self.mc.seed, T=self.time.T,
                              record_stride=self.mc.stride)

    def initial_condition(self):
        from .discretization import default_initial_condition
        if isinstance(self.initial, str):
            return default_initial_condition
        return np.asarray(self.initial, dtype=float)


def _section(raw, name, required=True):
    if name not in raw:
        if required:
            raise ConfigError(name, "missing section")
        return {}
    sec = raw[name]
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be an object")
    return sec


def _unknown(sec, name, allowed):
    extra = set(sec) - set(allowed)
    if extra:
        raise ConfigError(f"{name}.{sorted(extra)[0]}", "unknown field")


def _num(sec, name, key, default=None, *, positive=False, required=True):
    path = f"{name}.{key}"
    if key not in sec or sec[key] is None:
        if default is not None or not required:
            return default
        raise ConfigError(path, "missing field")
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(path, f"must be a finite number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(path, f"must be positive, got {v!r}")
    return float(v)


def _int(sec, name, key, default=None, minimum=1):
    path = f"{name}.{key}"
    if key not in sec or sec[key] is None:
        if default is not None:
            return default
        raise ConfigError(path, "missing field")
    v = sec[key]
    if (isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v)
            or int(v) != v):
        raise ConfigError(path, f"must be an integer, got {v!r}")
    if v < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {v!r}")
    return int(v)


def _choice(sec, name, key, choices, default=None):
    path = f"{name}.{key}"
    v = sec.get(key, default)
    if v is None:
        raise ConfigError(path, "missing field")
    for c in choices:
        if str(v).lower() == c.lower():
            return c
    raise ConfigError(path, f"must be one of {list(choices)}, got {v!r}")


def parse_config(raw: dict, base_dir=None) -> ExperimentConfig:
    """Validate a decoded JSON object; errors name the offending field path."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    _unknown(raw, "<root>", ("equation", "noise", "space", "time", "scheme", "mc",
                              "output", "analysis", "initial"))

    s = _section(raw, "equation")
    _unknown(s, "equation", ("nu", "F", "operator"))
    F = s.get("F")
    if F is not None and not isinstance(F, str):
        F = _num(s, "equation", "F")
    equation = EquationSection(nu=_num(s, "equation", "nu", positive=True),
                               operator=_choice(s, "equation", "operator", OPERATORS), F=F)

    s = _section(raw, "space")
    _unknown(s, "space", ("basis", "N_h"))
    space = SpaceSection(basis=_choice(s, "space", "basis", BASES),
                         N_h=_int(s, "space", "N_h"))

    s = _section(raw, "noise")
    _unknown(s, "noise", ("C_mu", "alpha", "kappa", "carrier"))
    noise = NoiseSection(C_mu=_num(s, "noise", "C_mu", positive=True),
                         alpha=_num(s, "noise", "alpha"),
                         kappa=_int(s, "noise", "kappa", default=space.N_h),
                         carrier=_choice(s, "noise", "carrier", CARRIERS, default="H"))
    if not noise.alpha > 1:
        raise ConfigError("noise.alpha", f"must exceed 1 (trace class), got {noise.alpha!r}")

    s = _section(raw, "time")
    _unknown(s, "time", ("dt", "T"))
    time = TimeSection(dt=_num(s, "time", "dt", positive=True),
                       T=_num(s, "time", "T", positive=True))
    if time.dt > time.T:
        raise ConfigError("time.dt", "must not exceed time.T")

    s = _section(raw, "scheme")
    _unknown(s, "scheme", ("rational", "integrator"))
    scheme = SchemeSection(rational=_choice(s, "scheme", "rational", RATIONALS),
                           integrator=_choice(s, "scheme", "integrator", INTEGRATORS))

    s = _section(raw, "mc", required=False)
    _unknown(s, "mc", ("M", "seed", "stride", "workers"))
    seed = _int(s, "mc", "seed", default=0, minimum=0)
    if seed >= 2 ** 64:
        raise ConfigError("mc.seed", "must fit in 64 bits")
    mc = MCSection(M=_int(s, "mc", "M", default=10_000), seed=seed,
                   stride=_int(s, "mc", "stride", default=1),
                   workers=_int(s, "mc", "workers", default=1))

    s = _section(raw, "output", required=False)
    _unknown(s, "output", ("dir",))
    out_dir = s.get("dir", ".")
    if not isinstance(out_dir, str):
        raise ConfigError("output.dir", "must be a string")

    s = _section(raw, "analysis", required=False)
    _unknown(s, "analysis", ("band",))
    band = _num(s, "analysis", "band", default=1e-10)
    if not band >= 0:
        raise ConfigError("analysis.band", "must be non-negative")

    initial = raw.get("initial", "default")
    if isinstance(initial, str):
        if initial != "default":
            raise ConfigError("initial", "must be \"default\" or a list of coefficients")
    elif isinstance(initial, list):
        if len(initial) != space.N_h or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in initial):
            raise ConfigError("initial", f"must list {space.N_h} numeric coefficients")
        initial = [float(v) for v in initial]
    else:
        raise ConfigError("initial", "must be \"default\" or a list of coefficients")

    if equation.operator == "G1" and space.basis != "spectral":
        raise ConfigError("equation.operator", "G1 is supported with the spectral basis only")
    if equation.operator == "G2" and space.basis != "fem":
        raise ConfigError("equation.operator", "G2 requires the fem basis")

    cfg = ExperimentConfig(equation=equation, noise=noise, space=space, time=time,
                           scheme=scheme, mc=mc, output=OutputSection(out_dir),
                           analysis=AnalysisSection(band), initial=initial,
                           base_dir=None if base_dir is None else str(base_dir))
    try:
        cfg.build_noise()
        cfg.build_scheme()
    except ContractViolation as exc:
        raise ConfigError("<root>", str(exc))
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {str(path)!r}: {exc.strerror}")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}")
    return parse_config(raw, base_dir=path.parent)


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(cfg.to_json() + "\n")


__all__ = ["ExperimentConfig", "parse_config", "load_config", "dump_config",
           "ConfigError", "MSStabError"]
