"""Simulation configuration: nested dataclasses with strict JSON loading."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .strategies import ConfigError


@dataclass(frozen=True)
class Aggression:
    nt: float = 1.0
    vi: float = 1.0
    tf: float = 0.25


@dataclass(frozen=True)
class Population:
    n_nt: int = 10
    n_vi: int = 10
    n_tf: int = 10
    initial_shares: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    discount_rate_range: tuple[float, float] = (0.038, 0.042)
    horizon_range: tuple[int, int] = (252, 1260)
    # total initial wealth as a multiple of the market value of the supply
    initial_wealth_ratio: float = 2.5


@dataclass(frozen=True)
class Dividend:
    delta0: float = 0.003465
    growth_annual: float = 0.03
    sigma_daily: float = 0.005
    rho: float = 0.1


@dataclass(frozen=True)
class Ou:
    theta: float = 0.01
    sigma: float = 0.03
    mu: float = 1.0


@dataclass(frozen=True)
class Processes:
    dividend: Dividend = field(default_factory=Dividend)
    ou: Ou = field(default_factory=Ou)


@dataclass(frozen=True)
class Market:
    supply_q: float = 10_000.0
    interest_annual: float = 0.01
    leverage: float = 1.0
    aggression: Aggression = field(default_factory=Aggression)
    clearing_tol: float = 1e-14
    max_iter: int = 200


@dataclass(frozen=True)
class Flows:
    enabled: bool = False
    intercept_annual: float = -0.02461
    coef_10y: float = 5.3e-5
    period_days: int = 21


@dataclass(frozen=True)
class Solvency:
    liquidation_rate: float = 0.05
    split_factor: int = 2


@dataclass(frozen=True)
class Run:
    t_max_days: int = 50_000
    master_seed: int = 0


@dataclass(frozen=True)
class SimConfig:
    population: Population = field(default_factory=Population)
    processes: Processes = field(default_factory=Processes)
    market: Market = field(default_factory=Market)
    flows: Flows = field(default_factory=Flows)
    solvency: Solvency = field(default_factory=Solvency)
    run: Run = field(default_factory=Run)

    @property
    def daily_growth(self) -> float:
        return math.log1p(self.processes.dividend.growth_annual) / 252

    def with_updates(self, **sections) -> "SimConfig":
        """Replace fields inside sections, e.g. ``with_updates(run={"master_seed": 3})``."""
        return from_dict(_merge(self.to_dict(), _plain(sections)))

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key '{path + '.' if path else ''}{key}'")
    kwargs = {}
    defaults = cls()
    for name, f in known.items():
        here = f"{path}.{name}" if path else name
        if name not in data:
            continue
        default = getattr(defaults, name)
        value = data[name]
        if is_dataclass(default):
            if cls is Market and name == "aggression" and isinstance(value, (int, float)) and not isinstance(value, bool):
                value = {"nt": value, "vi": value, "tf": value}
            kwargs[name] = _build(type(default), value, here)
        elif isinstance(default, tuple):
            if not isinstance(value, list) or len(value) != len(default):
                raise ConfigError(f"{here}: expected a list of {len(default)} numbers")
            kwargs[name] = tuple(_coerce(type(d), v, here) for d, v in zip(default, value))
        else:
            kwargs[name] = _coerce(type(default), value, here)
    return cls(**kwargs)


def _coerce(kind, value, path):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number")
    if kind is int:
        if isinstance(value, int):
            return value
        if not float(value).is_integer():
            raise ConfigError(f"{path}: expected an integer")
        return int(value)
    return float(value)


def validate(cfg: SimConfig) -> None:
    p = cfg.population
    if min(p.n_nt, p.n_vi, p.n_tf) < 0 or p.n_nt + p.n_vi + p.n_tf < 1:
        raise ConfigError("population: fund counts must be non-negative with at least one fund")
    w = p.initial_shares
    if min(w) < 0 or abs(sum(w) - 1.0) > 1e-12:
        raise ConfigError("population.initial_shares: must be non-negative and sum to 1")
    lo, hi = p.discount_rate_range
    if not lo <= hi:
        raise ConfigError("population.discount_rate_range: low exceeds high")
    if lo <= cfg.processes.dividend.growth_annual:
        raise ConfigError("population.discount_rate_range: rates must exceed dividend growth")
    hlo, hhi = p.horizon_range
    if not 2 <= hlo <= hhi:
        raise ConfigError("population.horizon_range: need 2 <= low <= high")
    if not p.initial_wealth_ratio > 1.0:
        raise ConfigError("population.initial_wealth_ratio: must exceed 1")
    d = cfg.processes.dividend
    if not d.delta0 > 0 or d.sigma_daily < 0 or not 0 <= d.rho < 1:
        raise ConfigError("processes.dividend: need delta0 > 0, sigma_daily >= 0, 0 <= rho < 1")
    o = cfg.processes.ou
    if not o.theta > 0 or o.sigma < 0 or not o.mu > 0:
        raise ConfigError("processes.ou: need theta > 0, sigma >= 0, mu > 0")
    m = cfg.market
    if not m.supply_q > 0 or not m.leverage >= 1 or not m.clearing_tol > 0 or m.max_iter < 1:
        raise ConfigError("market: need supply_q > 0, leverage >= 1, clearing_tol > 0, max_iter >= 1")
    a = m.aggression
    if min(a.nt, a.vi, a.tf) <= 0:
        raise ConfigError("market.aggression: must be positive")
    if cfg.flows.period_days < 1:
        raise ConfigError("flows.period_days: must be at least 1")
    s = cfg.solvency
    if not 0 < s.liquidation_rate <= 1 or s.split_factor < 2:
        raise ConfigError("solvency: need 0 < liquidation_rate <= 1 and split_factor >= 2")
    if cfg.run.t_max_days < 0:
        raise ConfigError("run.t_max_days: must be non-negative")


def from_dict(data: dict) -> SimConfig:
    cfg = _build(SimConfig, data, "")
    validate(cfg)
    return cfg


def load_config(path: str | Path | None) -> SimConfig:
    if path is None:
        return SimConfig()
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return from_dict(data)
