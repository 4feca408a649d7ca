"""Run configuration: flat ``section.key = value`` text with typed, validated entries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .errors import SchemaError, ValidationError
from .params import CouplingFunctions, PhysicalParams
from .spectral_solver import Scheme, SolverConfig, TorusGrid

SECTIONS = ("params", "grid", "solver", "experiment", "output")
KINDS = ("noneq", "degen", "poisson", "modpressure")


def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    return int(text)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _str(text: str) -> str:
    return text.strip()


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


@dataclass(frozen=True)
class Field:
    parse: Callable[[str], Any]
    default: Any
    check: Callable[[Any], bool] | None = None
    rule: str = ""


def _choice(*options):
    return lambda v: v in options


SCHEMA: dict[str, Field] = {
    "params.eps": Field(_float, 0.1, _positive, "must be > 0"),
    "params.ell": Field(_float, 0.3, _positive, "must be > 0"),
    "params.ell_s": Field(_float, 1.0, _nonneg, "must be >= 0"),
    "params.mu": Field(_float, 0.5, _positive, "must be > 0"),
    "params.lam": Field(_float, 0.0),
    "params.dim": Field(_int, 2, _choice(1, 2, 3), "must be 1, 2 or 3"),
    "params.k1": Field(_float, 1.0),
    "params.k2": Field(_float, 1.0),
    "params.k3": Field(_float, 1.0),
    "params.k4": Field(_float, 1.0),
    "grid.n_points": Field(_int, 32, lambda v: v >= 8 and v & (v - 1) == 0, "must be a power of two >= 8"),
    "solver.dt": Field(_float, 0.01, _positive, "must be > 0"),
    "solver.t_end": Field(_float, 1.0, _nonneg, "must be >= 0"),
    "solver.scheme": Field(_str, "IMEX2", _choice("IMEX1", "IMEX2"), "must be IMEX1 or IMEX2"),
    "solver.record_every": Field(_int, 10, lambda v: v >= 1, "must be >= 1"),
    "solver.nonlinear_on": Field(_bool, True),
    "solver.smallness": Field(_float, 0.1, _positive, "must be > 0"),
    "experiment.kind": Field(_str, "noneq", _choice(*KINDS), "must be one of " + ", ".join(KINDS)),
    "experiment.kappa": Field(_float, 2.0, lambda v: v > 1, "must be > 1"),
    "experiment.m": Field(_float, 1.0, _positive, "must be > 0"),
    "experiment.ell": Field(_float, 0.0, _nonneg, "must be >= 0"),
    "experiment.power": Field(_float, 0.5, _positive, "must be > 0"),
    "experiment.eps_ladder": Field(_float_list, (0.1, 0.05, 0.025),
                                   lambda v: len(v) >= 1 and all(x > 0 for x in v)
                                   and all(b < a for a, b in zip(v, v[1:])),
                                   "must be positive and strictly decreasing"),
    "experiment.seed": Field(_int, 0, _nonneg, "must be >= 0"),
    "experiment.amplitude": Field(_float, 0.01, _positive, "must be > 0"),
    "experiment.k_cut": Field(_float, 4.0, _positive, "must be > 0"),
    "experiment.rho_min": Field(_float, 0.01, _positive, "must be > 0"),
    "experiment.rho_max": Field(_float, 100.0, _positive, "must be > 0"),
    "experiment.rho_count": Field(_int, 50, lambda v: v >= 2, "must be >= 2"),
    "experiment.toy_draws": Field(_int, 20, lambda v: v >= 1, "must be >= 1"),
    "experiment.workers": Field(_int, 1, lambda v: v >= 1, "must be >= 1"),
    "output.dir": Field(_str, "radflow-out"),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict = field(default_factory=lambda: {k: f.default for k, f in SCHEMA.items()})
    source: str | None = field(default=None, compare=False)

    def __getitem__(self, key: str):
        return self.values[key]

    def with_overrides(self, **dotted) -> "RunConfig":
        vals = dict(self.values)
        for key, v in dotted.items():
            key = key.replace("__", ".")
            if v is None:
                continue
            _check(key, v, None)
            vals[key] = v
        return RunConfig(vals, self.source)

    def physical_params(self) -> PhysicalParams:
        v = self.values
        return PhysicalParams(v["params.eps"], v["params.ell"], v["params.ell_s"], v["params.mu"],
                              v["params.lam"], v["params.dim"])

    def coupling(self) -> CouplingFunctions:
        v = self.values
        return CouplingFunctions.linear(v["params.k1"], v["params.k2"], v["params.k3"], v["params.k4"])

    def grid(self) -> TorusGrid:
        return TorusGrid(self.values["params.dim"], self.values["grid.n_points"])

    def solver(self) -> SolverConfig:
        v = self.values
        return SolverConfig(dt=v["solver.dt"], t_end=v["solver.t_end"], scheme=Scheme(v["solver.scheme"]),
                            record_every=v["solver.record_every"], nonlinear_on=v["solver.nonlinear_on"],
                            smallness=v["solver.smallness"])

    @property
    def out_dir(self) -> Path:
        return Path(self.values["output.dir"])


def _check(key: str, value, line: int | None):
    spec = SCHEMA.get(key)
    if spec is None:
        raise SchemaError(key, "unknown key", line)
    if isinstance(value, float) and not math.isfinite(value):
        raise SchemaError(key, "must be finite", line)
    if spec.check is not None and not spec.check(value):
        raise SchemaError(key, f"{spec.rule} (got {value!r})", line)


def parse_text(text: str, source: str | None = None) -> RunConfig:
    vals = {k: f.default for k, f in SCHEMA.items()}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(line, "expected 'section.key = value'", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise SchemaError(key, "unknown key", lineno)
        if key in seen:
            raise SchemaError(key, f"duplicate key (first on line {seen[key]})", lineno)
        seen[key] = lineno
        try:
            parsed = SCHEMA[key].parse(value)
        except ValueError as exc:
            raise SchemaError(key, f"cannot parse {value!r}: {exc}", lineno) from None
        _check(key, parsed, lineno)
        vals[key] = parsed
    cfg = RunConfig(vals, source)
    try:
        p = cfg.physical_params()
    except ValidationError as exc:
        raise SchemaError("params.lam", str(exc), seen.get("params.lam")) from None
    if cfg["experiment.rho_min"] >= cfg["experiment.rho_max"]:
        raise SchemaError("experiment.rho_max", "must exceed experiment.rho_min", seen.get("experiment.rho_max"))
    del p
    return cfg


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except UnicodeDecodeError as exc:
        raise ValidationError(f"config file is not UTF-8: {path} ({exc})") from None
    return parse_text(text, str(path))


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(float(x)) for x in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize(cfg: RunConfig) -> str:
    """Text form with every key; ``parse_text(serialize(c)) == c``."""
    lines = []
    for section in SECTIONS:
        keys = [k for k in SCHEMA if k.startswith(section + ".")]
        lines.append(f"# {section}")
        lines.extend(f"{k} = {_render(cfg.values[k])}" for k in keys)
    return "\n".join(lines) + "\n"
