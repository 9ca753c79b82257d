"""Run configuration: TOML blocks mapped onto frozen dataclasses.

Every block is optional and falls back to the defaults below. Unknown
sections or keys are rejected, and ranges are validated before anything runs.

    [model]    sigma, r, T, averaging, sigma_floor
    [payoff]   kind, strike
    [domain]   kind, s_min, s_max, a_min, a_max, n, epsilon
    [grid]     n_s, n_a, n_t
    [scheme]   method, theta, omega, tol, max_iter, rho, transport, field_slices
    [mc]       M, N, seed, degree, antithetic
    [probes]   points = [[t, s, a], ...]
    [output]   directory, formats
    [density]  x1, x2, horizon, n_paths, bandwidth, n_grid, seed, scaling_paths
    [compare]  levels
    [reduction] enabled, y_max, n_y, n_t
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import tomli

from .domains import DomainKind, DomainSpec
from .errors import ConfigError, HypothesisError
from .model import Averaging, ModelParams, PayoffKind, PayoffSpec
from .solver import Method, SchemeOptions, Transport


@dataclass(frozen=True)
class ModelConfig:
    sigma: float = 0.4
    r: float = 0.05
    T: float = 1.0
    averaging: str = "arithmetic"
    sigma_floor: float = 1e-6


@dataclass(frozen=True)
class PayoffConfig:
    kind: str = "fixed"
    strike: float = 1.0


@dataclass(frozen=True)
class DomainConfig:
    kind: str = "rectangle"
    s_min: float = 0.25
    s_max: float = 4.0
    a_min: float = 0.01
    a_max: float = 3.01
    n: int = 8
    epsilon: Optional[float] = None


@dataclass(frozen=True)
class GridConfig:
    n_s: int = 128
    n_a: int = 96
    n_t: int = 128


@dataclass(frozen=True)
class SchemeConfig:
    method: str = "psor"
    theta: float = 1.0
    omega: float = 1.5
    tol: float = 1e-8
    max_iter: int = 10_000
    rho: float = 1e6
    transport: str = "upwind"
    field_slices: str = "earliest"   # time slices written to the field CSV: earliest | all | none


@dataclass(frozen=True)
class MCConfig:
    M: int = 256
    N: int = 200_000
    seed: int = 2024
    degree: int = 2
    antithetic: bool = False


@dataclass(frozen=True)
class ProbeConfig:
    points: tuple = ((0.5, 0.9, 0.5), (0.5, 1.0, 0.5), (0.5, 1.2, 0.5))


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "asianop-out"
    formats: tuple = ("json", "csv")


@dataclass(frozen=True)
class DensityConfig:
    x1: float = 1.5
    x2: float = 0.5
    horizon: float = 0.5
    n_paths: int = 100_000
    bandwidth: float = 1.0
    n_grid: int = 96
    seed: int = 0
    scaling_paths: int = 1_000_000   # paths per side in the validate scaling check


@dataclass(frozen=True)
class CompareConfig:
    levels: int = 3


@dataclass(frozen=True)
class ReductionConfig:
    enabled: bool = False
    y_max: float = 8.0
    n_y: int = 800
    n_t: int = 512


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    payoff: PayoffConfig = field(default_factory=PayoffConfig)
    domain: DomainConfig = field(default_factory=DomainConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    mc: MCConfig = field(default_factory=MCConfig)
    probes: ProbeConfig = field(default_factory=ProbeConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    density: DensityConfig = field(default_factory=DensityConfig)
    compare: CompareConfig = field(default_factory=CompareConfig)
    reduction: ReductionConfig = field(default_factory=ReductionConfig)

    # -- typed views -------------------------------------------------------

    def model_params(self) -> ModelParams:
        m = self.model
        return ModelParams(m.sigma, m.r, m.T, m.averaging, m.sigma_floor)

    def payoff_spec(self) -> PayoffSpec:
        return PayoffSpec(self.payoff.kind, self.payoff.strike)

    def domain_spec(self) -> DomainSpec:
        d = self.domain
        if d.kind == DomainKind.LENTIL.value:
            return DomainSpec.lentil(d.n, self.model.T, d.epsilon)
        return DomainSpec.rectangle(d.s_min, d.s_max, d.a_min, d.a_max, self.model.T, d.epsilon)

    def scheme_options(self) -> SchemeOptions:
        s = self.scheme
        return SchemeOptions(s.method, s.theta, s.omega, s.tol, s.max_iter, s.rho,
                             transport=s.transport)

    def with_probes(self, points) -> "RunConfig":
        pts = tuple(tuple(float(v) for v in p) for p in points)
        cfg = dataclasses.replace(self, probes=ProbeConfig(pts))
        validate(cfg)
        return cfg

    # -- canonical form ----------------------------------------------------

    def canonical(self) -> dict:
        """Plain-data form with sorted keys; ``output`` is excluded since it never changes numbers."""
        data = dataclasses.asdict(self)
        data.pop("output")
        return json.loads(json.dumps(data, sort_keys=True))

    def hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_BLOCK_TYPES = {
    "model": ModelConfig, "payoff": PayoffConfig, "domain": DomainConfig, "grid": GridConfig,
    "scheme": SchemeConfig, "mc": MCConfig, "probes": ProbeConfig, "output": OutputConfig,
    "density": DensityConfig, "compare": CompareConfig, "reduction": ReductionConfig,
}


def _coerce(block: str, cls, raw: dict):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{block}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{block}]: {', '.join(unknown)}")
    kwargs = {}
    for key, value in raw.items():
        default = known[key].default
        try:
            if isinstance(default, bool):
                if not isinstance(value, bool):
                    raise TypeError
            elif isinstance(default, int):
                if isinstance(value, bool) or not isinstance(value, int):
                    raise TypeError
            elif isinstance(default, float) or (default is None and key == "epsilon"):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise TypeError
                value = float(value)
            elif isinstance(default, str):
                if not isinstance(value, str):
                    raise TypeError
            elif isinstance(default, tuple):
                if not isinstance(value, list):
                    raise TypeError
                value = tuple(tuple(float(v) for v in item) if isinstance(item, list) else item
                              for item in value)
        except (TypeError, ValueError):
            raise ConfigError(f"[{block}] {key} = {value!r} has the wrong type") from None
        kwargs[key] = value
    return cls(**kwargs)


def _enum(block, key, value, enum_cls):
    try:
        enum_cls(value)
    except ValueError:
        choices = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"[{block}] {key} = {value!r}; expected one of {choices}") from None


def validate(cfg: RunConfig) -> RunConfig:
    m, p, d, g, s, mc = cfg.model, cfg.payoff, cfg.domain, cfg.grid, cfg.scheme, cfg.mc
    _enum("model", "averaging", m.averaging, Averaging)
    _enum("payoff", "kind", p.kind, PayoffKind)
    _enum("domain", "kind", d.kind, DomainKind)
    _enum("scheme", "method", s.method, Method)
    _enum("scheme", "transport", s.transport, Transport)
    if s.field_slices not in ("earliest", "all", "none"):
        raise ConfigError("[scheme] field_slices must be earliest, all or none")
    bad = sorted(set(cfg.output.formats) - {"json", "csv"})
    if bad:
        raise ConfigError(f"[output] unknown format(s): {', '.join(map(str, bad))}")
    if not m.sigma_floor > 0:
        raise ConfigError("[model] sigma_floor must be positive")
    if not (m.sigma >= m.sigma_floor):
        raise HypothesisError(f"(H1) violated: sigma = {m.sigma} is below sigma_floor = "
                              f"{m.sigma_floor}; the volatility must be bounded below by a "
                              "positive constant")
    if not m.T > 0:
        raise ConfigError("[model] T must be positive")
    if m.r < 0:
        raise ConfigError("[model] r must be nonnegative")
    if p.kind == "fixed" and not p.strike > 0:
        raise ConfigError("[payoff] strike must be positive for a fixed strike")
    if d.epsilon is not None and not 0 < d.epsilon < m.T:
        raise ConfigError("[domain] epsilon must lie in (0, T)")
    if d.kind == "rectangle":
        if not (0 < d.s_min < d.s_max and 0 < d.a_min < d.a_max):
            raise ConfigError("[domain] rectangle bounds must be positive and ordered")
    elif d.n < 2:
        raise ConfigError("[domain] lentil index n must be at least 2 (the boundary blend needs n - 1)")
    if g.n_s < 8 or g.n_a < 8 or g.n_t < 4:
        raise ConfigError("[grid] needs n_s >= 8, n_a >= 8 and n_t >= 4")
    if not 0.5 <= s.theta <= 1.0:
        raise ConfigError("[scheme] theta must lie in [0.5, 1]")
    if not 1.0 <= s.omega < 2.0:
        raise ConfigError("[scheme] omega must lie in [1, 2)")
    if not (s.tol > 0 and s.rho > 0 and s.max_iter > 0):
        raise ConfigError("[scheme] tol, rho and max_iter must be positive")
    if mc.M < 1 or mc.N < 1000 or mc.degree < 2:
        raise ConfigError("[mc] needs M >= 1, N >= 1000 and degree >= 2")
    eps = d.epsilon if d.epsilon is not None else 1e-4 * m.T
    for pt in cfg.probes.points:
        if len(pt) != 3:
            raise ConfigError(f"probe {pt} must be (t, s, a)")
        t, s_, a_ = pt
        if not (eps <= t < m.T and s_ > 0 and a_ > 0):
            raise ConfigError(f"probe (t={t}, s={s_}, a={a_}) needs eps <= t < T and s, a > 0")
    if cfg.compare.levels < 2:
        raise ConfigError("[compare] levels must be at least 2")
    if g.n_t % 2 ** (cfg.compare.levels - 1) or g.n_s % 2 ** (cfg.compare.levels - 1) \
            or g.n_a % 2 ** (cfg.compare.levels - 1):
        raise ConfigError("[grid] counts must be divisible by 2^(levels-1) for the refinement study")
    r = cfg.reduction
    if r.enabled:
        if p.kind != "floating":
            raise ConfigError("reduction only for floating strike")
        if m.averaging != "arithmetic":
            raise ConfigError("reduction needs arithmetic averaging")
        if not (r.y_max > 0 and r.n_y >= 8 and r.n_t >= 1):
            raise ConfigError("[reduction] needs y_max > 0, n_y >= 8 and n_t >= 1")
    dn = cfg.density
    if not (dn.x1 > 0 and dn.horizon > 0 and dn.n_paths >= 10_000 and dn.bandwidth > 0
            and dn.n_grid >= 8 and dn.scaling_paths >= 10_000):
        raise ConfigError("[density] needs x1 > 0, horizon > 0, n_paths >= 1e4, bandwidth > 0, "
                          "n_grid >= 8 and scaling_paths >= 1e4")
    return cfg


def parse_config(source: str | Path | None = None, text: Optional[str] = None) -> RunConfig:
    """Read a TOML file (or inline ``text``), fill defaults and validate."""
    if text is None:
        if source is None:
            text = ""
        else:
            try:
                text = Path(source).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {source}: {exc}") from None
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    unknown = sorted(set(raw) - set(_BLOCK_TYPES))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    blocks = {name: _coerce(name, cls, raw[name]) for name, cls in _BLOCK_TYPES.items()
              if name in raw}
    return validate(RunConfig(**blocks))
