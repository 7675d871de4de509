"""Run configuration: a YAML file with ``geometry``, ``discretization``,
``problem``, ``experiment`` and ``output`` blocks. Unknown keys are errors."""
from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .geometry import SHAPES, GeometryConfig, GeometryError, make_cusp_characteristic


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key path."""


@dataclass
class CuspSpec:
    kind: str = "cone"
    k: Optional[float] = None
    samples: Optional[list] = None


@dataclass
class GeometryBlock:
    shape: str = "wedge_cylinder"
    length: float = 1.0
    circumference: float = 2.0 * math.pi
    singular_radius: float = 0.5
    beta: float = 1.0
    blend_width: float = 0.25
    cusp: CuspSpec = field(default_factory=CuspSpec)


@dataclass
class DiscretizationBlock:
    n_t: int = 32
    n_theta: int = 32
    cg_tol: float = 1e-11
    residual_tol: float = 1e-10
    newton_max_iter: int = 60
    delta_schedule: list = field(default_factory=lambda: [1e-2, 1e-6, 0.0])
    seed: int = 0
    cell_budget: int = 300_000


@dataclass
class InitialSpec:
    kind: str = "gaussian"
    value: Optional[float] = None
    center: Optional[list] = None
    width: Optional[float] = None
    height: Optional[float] = None
    path: Optional[str] = None


@dataclass
class ProblemBlock:
    n: float = 2.0
    formulation: str = "pme1"
    T: float = 0.5
    steps: Optional[int] = 50
    breakpoints: Optional[list] = None
    lam: float = 0.1
    C_M: float = 1.0
    initial: InitialSpec = field(default_factory=InitialSpec)


@dataclass
class ExperimentBlock:
    levels: list = field(default_factory=lambda: [32, 64, 128, 256])
    lambda_grid: list = field(default_factory=lambda: [0.01, 0.1, 1.0, 10.0, 1000.0])
    corpus_size: int = 100
    sample_pairs: int = 50
    rate_tol: float = 0.1
    ball_fraction: float = 0.3
    violation_tol: float = 1e-10
    refinement_rel_tol: float = 0.02


@dataclass
class OutputBlock:
    directory: str = "results"
    dump_fields: bool = False
    jobs: int = 1


@dataclass
class RunConfig:
    geometry: GeometryBlock = field(default_factory=GeometryBlock)
    discretization: DiscretizationBlock = field(default_factory=DiscretizationBlock)
    problem: ProblemBlock = field(default_factory=ProblemBlock)
    experiment: ExperimentBlock = field(default_factory=ExperimentBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def geometry_config(self, check_cusp: bool = True) -> GeometryConfig:
        g = self.geometry
        params = {}
        if g.cusp.k is not None:
            params["k"] = g.cusp.k
        if g.cusp.samples is not None:
            params["samples"] = g.cusp.samples
        cusp = make_cusp_characteristic(g.cusp.kind, params, check=check_cusp)
        return GeometryConfig(g.shape, g.length, g.circumference, cusp, g.singular_radius,
                              g.beta, g.blend_width)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_INT_FIELDS = {"n_t", "n_theta", "newton_max_iter", "seed", "cell_budget", "steps", "corpus_size",
               "sample_pairs", "jobs"}
_BOOL_FIELDS = {"dump_fields"}
_STR_FIELDS = {"shape", "kind", "formulation", "directory", "path"}


def _coerce(path: str, name: str, value: Any, default: Any):
    if dataclasses.is_dataclass(default):
        return _build(type(default), value, path)
    if value is None:
        return None
    if name in _BOOL_FIELDS:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if name in _INT_FIELDS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if name in _STR_FIELDS:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(default, list) or name in ("samples", "center", "breakpoints"):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _build(cls, data, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown key {where}{unknown[0]}")
    defaults = cls()
    kwargs = {}
    for name, f in known.items():
        sub = f"{path}.{name}" if path else name
        default = getattr(defaults, name)
        if name in data:
            kwargs[name] = _coerce(sub, name, data[name], default)
        else:
            kwargs[name] = default
    return cls(**kwargs)


def _validate(cfg: RunConfig, base: Path) -> None:
    g = cfg.geometry
    if g.shape not in SHAPES:
        raise ConfigError(f"geometry.shape: unknown shape {g.shape!r}")
    if g.cusp.kind not in ("cone", "power", "tabulated"):
        raise ConfigError(f"geometry.cusp.kind: unknown kind {g.cusp.kind!r}")
    if g.cusp.kind == "power":
        if g.cusp.k is None:
            raise ConfigError("geometry.cusp.k: required for power cusps")
        if not g.cusp.k >= 1:
            raise ConfigError(f"geometry.cusp.k: condition k >= 1 violated (k = {g.cusp.k})")
    try:
        cfg.geometry_config()
    except GeometryError as exc:
        raise ConfigError(f"geometry: {exc}") from exc

    d = cfg.discretization
    for name in ("cg_tol", "residual_tol"):
        if not getattr(d, name) > 0:
            raise ConfigError(f"discretization.{name}: must be > 0")
    if d.n_t < 4 or d.n_theta < 4:
        raise ConfigError("discretization.n_t/n_theta: must be >= 4")
    if d.newton_max_iter < 1:
        raise ConfigError("discretization.newton_max_iter: must be >= 1")
    sched = d.delta_schedule
    if not sched or any(not isinstance(x, (int, float)) or x < 0 for x in sched) or sched[-1] > 1e-10:
        raise ConfigError("discretization.delta_schedule: nonnegative values ending at <= 1e-10")

    p = cfg.problem
    if not p.n >= 1:
        raise ConfigError(f"problem.n: the time stepper needs n >= 1 (n = {p.n})")
    if p.formulation not in ("pme1", "pme_div"):
        raise ConfigError(f"problem.formulation: unknown formulation {p.formulation!r}")
    if not p.T > 0:
        raise ConfigError("problem.T: must be > 0")
    if not p.lam > 0:
        raise ConfigError("problem.lam: must be > 0")
    if p.breakpoints is None and (p.steps is None or p.steps < 1):
        raise ConfigError("problem.steps: need steps >= 1 or explicit breakpoints")
    init = p.initial
    if init.kind not in ("zero", "constant", "gaussian", "from_csv"):
        raise ConfigError(f"problem.initial.kind: unknown kind {init.kind!r}")
    if init.kind == "constant" and init.value is None:
        raise ConfigError("problem.initial.value: required for constant data")
    if init.kind == "from_csv":
        if not init.path:
            raise ConfigError("problem.initial.path: required for from_csv data")
        pth = Path(init.path)
        if not pth.is_absolute():
            pth = base / pth
        if not pth.exists():
            raise ConfigError(f"problem.initial.path: file not found: {pth}")
        init.path = str(pth)

    e = cfg.experiment
    if any(not x > 0 for x in e.lambda_grid):
        raise ConfigError("experiment.lambda_grid: values must be > 0")
    for name in ("rate_tol", "ball_fraction", "violation_tol", "refinement_rel_tol"):
        if not getattr(e, name) > 0:
            raise ConfigError(f"experiment.{name}: must be > 0")
    if cfg.output.jobs < 1:
        raise ConfigError("output.jobs: must be >= 1")


def config_from_dict(data: dict, base: Optional[Path] = None) -> RunConfig:
    cfg = _build(RunConfig, data, "")
    _validate(cfg, base or Path.cwd())
    return cfg


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    return config_from_dict(data, path.parent)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def write_config(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.write_text(dump_config(cfg))
    return path


OUTPUT_ROOT_ENV = "WEDGEPME_OUTPUT_ROOT"


def output_root(cfg: RunConfig, override: Optional[str] = None) -> Path:
    if override:
        return Path(override)
    env = os.environ.get(OUTPUT_ROOT_ENV)
    return Path(env) if env else Path(cfg.output.directory)
