"""YAML run configuration.

Every section is optional; missing fields take the defaults below. Unknown
fields and ill-typed values raise :class:`ConfigError` naming the field.

.. code-block:: yaml

    seed: 7
    data: {prices: prices.csv, benchmark: sp500.csv, factors: [], risk_free: null,
           start: 2018-01-01, end: 2018-12-31}
    simulate: {experiment: 1, replicates: 200, P_values: [100], n_values: [20, 50]}
    test: {p: 0.05, statistic: s_tilde}
    hb: {iterations: 3000, burn_in: 1000}
    backtest: {p_tilde: 25, selectors: [oracle, hb, ftest, market], var_confidence: 0.99}
"""
from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass, field
from typing import Any

import yaml

from .errors import ConfigError
from .market_sim import SPARSITY_GRID


@dataclass
class DataSection:
    prices: str | None = None
    benchmark: str | None = None
    factors: list = field(default_factory=list)
    risk_free: str | None = None
    start: str | None = None
    end: str | None = None


@dataclass
class SimulateSection:
    experiment: int = 1
    replicates: int = 200
    p_grid: list = field(default_factory=lambda: [float(p) for p in SPARSITY_GRID])
    P_values: list = field(default_factory=lambda: [100])
    n_values: list = field(default_factory=lambda: [20, 50])
    sigma_values: list = field(default_factory=lambda: [0.1, 0.05])
    P: int = 500
    n: int = 20
    sigma: float = 0.1
    q: int = 25
    p_tildes: list = field(default_factory=lambda: [100, 50])
    sigmas: list = field(default_factory=lambda: [0.03, 0.01])
    n_test: int = 20
    configs: list = field(default_factory=lambda: [[100, 20, 25], [500, 20, 25], [100, 40, 25]])
    curve_sigmas: list = field(default_factory=lambda: [0.05, 0.1, 0.2, 0.4, 0.8])
    curve_q: int = 5
    alpha_sd: float = 0.1
    beta_sd: float = 0.1
    market_sd: float = 0.01
    extra_factor_sd: float = 1.0
    significance: float = 0.05

    def validate(self):
        if self.experiment not in (1, 2, 3, 4):
            raise ConfigError(f"simulate.experiment: must be 1, 2, 3 or 4, got {self.experiment!r}")
        if self.replicates < 1:
            raise ConfigError("simulate.replicates: must be >= 1")
        if any(not 0 <= p <= 1 for p in self.p_grid):
            raise ConfigError("simulate.p_grid: values must lie in [0, 1]")


@dataclass
class OracleSection:
    p: float = 0.05
    lambda0: list | None = None
    statistic: str = "s"
    delta0: float = 1.0
    deltaA: float = 1.0
    k: int | None = None

    def validate(self):
        if not 0 < self.p < 1:
            raise ConfigError("test.p: must lie in (0, 1)")
        if self.statistic not in ("s", "s_tilde"):
            raise ConfigError("test.statistic: must be 's' or 's_tilde'")


@dataclass
class HBSection:
    iterations: int = 3000
    burn_in: int = 1000
    stride: int = 1
    proposal_scale: float = 0.5
    target_accept: float = 0.4
    nu0: float = 1.0
    rho: float | None = None
    p_tilde: int = 25
    write_trace: bool = False

    def validate(self):
        if self.iterations <= self.burn_in:
            raise ConfigError("hb.iterations: must exceed hb.burn_in")
        if self.stride < 1:
            raise ConfigError("hb.stride: must be >= 1")


@dataclass
class BacktestSection:
    p_tilde: int = 25
    selectors: list = field(default_factory=lambda: ["oracle", "hb", "ftest", "market"])
    prior_p: float = 0.05
    lambda0: list | None = None
    hb_iterations: int = 1500
    hb_burn_in: int = 500
    var_confidence: float = 0.99
    positive_alpha: bool = True
    use_factors: bool = True

    def validate(self):
        bad = [s for s in self.selectors if s not in ("oracle", "hb", "ftest", "market")]
        if bad:
            raise ConfigError(f"backtest.selectors: unknown {bad}")
        if self.p_tilde < 1:
            raise ConfigError("backtest.p_tilde: must be >= 1")
        if not 0.5 < self.var_confidence < 1:
            raise ConfigError("backtest.var_confidence: must lie in (0.5, 1)")
        if not 0 < self.prior_p < 1:
            raise ConfigError("backtest.prior_p: must lie in (0, 1)")


@dataclass
class RunConfig:
    seed: int = 0
    data: DataSection = field(default_factory=DataSection)
    simulate: SimulateSection = field(default_factory=SimulateSection)
    test: OracleSection = field(default_factory=OracleSection)
    hb: HBSection = field(default_factory=HBSection)
    backtest: BacktestSection = field(default_factory=BacktestSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {"data": DataSection, "simulate": SimulateSection, "test": OracleSection,
             "hb": HBSection, "backtest": BacktestSection}

_SCALARS = {"int": int, "float": float, "bool": bool, "str": str}


def _coerce(value: Any, annotation: str, where: str):
    # Annotations are strings under postponed evaluation.
    if value is None:
        if "None" in annotation:
            return None
        raise ConfigError(f"{where}: may not be null")
    base = annotation.split("|")[0].strip()
    if base == "list":
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {type(value).__name__}")
        return value
    if base == "str" and isinstance(value, (dt.date, dt.datetime)):
        return value.isoformat()
    typ = _SCALARS.get(base)
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if typ is str and not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def _build(cls, raw, name: str):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}: unknown field")
    kw = {k: _coerce(v, str(fields[k].type), f"{name}.{k}") for k, v in raw.items()}
    obj = cls(**kw)
    if hasattr(obj, "validate"):
        obj.validate()
    return obj


def parse_config(raw: dict | None) -> RunConfig:
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping")
    unknown = sorted(set(raw) - set(_SECTIONS) - {"seed"})
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown section")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed: expected a nonnegative integer, got {seed!r}")
    return RunConfig(seed=seed, **{k: _build(cls, raw.get(k), k) for k, cls in _SECTIONS.items()})


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return parse_config({})
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    return parse_config(raw)
