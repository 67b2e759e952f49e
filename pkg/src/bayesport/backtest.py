"""Rolling monthly backtest and yearly performance tables.

Each month the selector is fitted on that month's daily excess returns and
the chosen ``p_tilde`` assets are held with equal weights through the next
month. The panel handed to the selector is physically truncated at the end
of the fit month, so no selection can depend on later prices.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import DataError, InsufficientAssets, InsufficientData
from .factor_model import build_design, idiosyncratic_bound, ols_estimate_panel
from .garch import garch_or_sample
from .hb_sampler import HBPrior, hb_rank, run_chain
from .seeding import child_seed
from .oracle_test import SpikeSlabPrior, default_lambda0, f_test_statistic, oracle_statistics, posterior_inclusion

log = logging.getLogger(__name__)

SELECTORS = ("oracle", "hb", "ftest", "market")
TRADING_DAYS = 252


@dataclass(frozen=True)
class PricePanel:
    """Daily prices. ``adjusted_close`` is NaN where an asset is not trading."""

    dates: pd.DatetimeIndex
    tickers: list
    adjusted_close: np.ndarray
    benchmark: np.ndarray
    factor_series: np.ndarray | None = None
    risk_free: np.ndarray | None = None  # daily rate, decimal

    def __post_init__(self):
        dates = pd.DatetimeIndex(self.dates)
        object.__setattr__(self, "dates", dates)
        px = np.asarray(self.adjusted_close, float)
        if px.ndim != 2 or px.shape != (len(dates), len(self.tickers)):
            raise DataError("adjusted_close must be (n_dates, n_tickers)")
        if len(dates) > 1 and not np.all(np.diff(dates.asi8) > 0):
            raise DataError("dates must be strictly increasing")
        if np.any(px[np.isfinite(px)] <= 0):
            raise DataError("prices must be positive")
        bench = np.asarray(self.benchmark, float).ravel()
        if bench.size != len(dates) or not np.all(np.isfinite(bench)) or np.any(bench <= 0):
            raise DataError("benchmark needs one positive level per date")
        object.__setattr__(self, "adjusted_close", px)
        object.__setattr__(self, "benchmark", bench)
        if self.factor_series is not None:
            fs = np.asarray(self.factor_series, float).reshape(len(dates), -1)
            if not np.all(np.isfinite(fs)) or np.any(fs <= 0):
                raise DataError("factor levels must be positive and complete")
            object.__setattr__(self, "factor_series", fs)
        if self.risk_free is not None:
            rf = np.asarray(self.risk_free, float).ravel()
            if rf.size != len(dates) or not np.all(np.isfinite(rf)):
                raise DataError("risk-free series needs one value per date")
            object.__setattr__(self, "risk_free", rf)

    def truncate(self, end) -> "PricePanel":
        """Copy holding only dates on or before ``end``."""
        keep = self.dates <= pd.Timestamp(end)
        return PricePanel(
            dates=self.dates[keep], tickers=list(self.tickers),
            adjusted_close=self.adjusted_close[keep].copy(), benchmark=self.benchmark[keep].copy(),
            factor_series=None if self.factor_series is None else self.factor_series[keep].copy(),
            risk_free=None if self.risk_free is None else self.risk_free[keep].copy(),
        )

    @property
    def n_factors(self) -> int:
        return 1 + (0 if self.factor_series is None else self.factor_series.shape[1])

    def simple_returns(self):
        """Returns dated by the later of the two prices: assets, market, extras, risk-free."""
        px = self.adjusted_close
        with np.errstate(invalid="ignore", divide="ignore"):
            r = px[1:] / px[:-1] - 1.0
        mkt = self.benchmark[1:] / self.benchmark[:-1] - 1.0
        extra = None if self.factor_series is None else self.factor_series[1:] / self.factor_series[:-1] - 1.0
        rf = np.zeros(len(self.dates) - 1) if self.risk_free is None else self.risk_free[1:]
        return self.dates[1:], r, mkt, extra, rf


@dataclass(frozen=True)
class BacktestConfig:
    p_tilde: int = 25
    selectors: tuple = SELECTORS
    use_factors: bool = True
    prior_p: float = 0.05
    lambda0: np.ndarray | None = None
    hb_iterations: int = 1500
    hb_burn_in: int = 500
    var_confidence: float = 0.99
    positive_alpha: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.p_tilde < 1:
            raise ValueError("p_tilde must be >= 1")
        bad = [s for s in self.selectors if s not in SELECTORS]
        if bad:
            raise ValueError(f"unknown selector(s) {bad}; choose from {SELECTORS}")
        if not 0.5 < self.var_confidence < 1.0:
            raise ValueError("var_confidence must lie in (0.5, 1)")


@dataclass
class MonthRecord:
    fit_month: pd.Period
    hold_month: pd.Period
    selected: list
    n_fit: int
    n_eligible: int
    idio_var: float = float("nan")
    idio_bound: float = float("nan")


@dataclass
class BacktestRun:
    selector: str
    daily: pd.Series
    months: list = field(default_factory=list)

    @property
    def selections(self) -> dict:
        return {m.hold_month: m.selected for m in self.months}


@dataclass
class PerfReport:
    daily: pd.DataFrame
    returns: pd.DataFrame
    vol: pd.DataFrame
    var: pd.DataFrame
    riskadj: pd.DataFrame
    runs: dict = field(default_factory=dict)

    def tables(self) -> dict:
        return {"returns": self.returns, "vol": self.vol, "var": self.var, "riskadj": self.riskadj}


def rebalance_schedule(dates, min_fit_days: int = 3) -> list[tuple[pd.Period, pd.Period]]:
    """Consecutive ``(fit month, hold month)`` pairs over the calendar of ``dates``.

    Return dates start at the second price date. Fit months with fewer than
    ``min_fit_days`` return days are skipped with a warning.
    """
    dates = pd.DatetimeIndex(dates)
    if len(dates) < 2:
        return []
    ret_months = dates[1:].to_period("M")
    months = ret_months.unique().sort_values()
    counts = pd.Series(1, index=ret_months).groupby(level=0).size()
    out = []
    for fit, hold in zip(months[:-1], months[1:]):
        if counts[fit] < min_fit_days:
            log.warning("skipping fit month %s: %d trading days < %d", fit, counts[fit], min_fit_days)
            continue
        out.append((fit, hold))
    return out


def _fit_window(panel: PricePanel, fit_month: pd.Period, use_factors: bool):
    dates, r, mkt, extra, rf = panel.simple_returns()
    rows = dates.to_period("M") == fit_month
    if not rows.any():
        raise InsufficientData(f"no return days in fit month {fit_month}")
    R = r[rows] - rf[rows][:, None]
    ok = np.all(np.isfinite(R), axis=0)
    extras = [] if (extra is None or not use_factors) else list(extra[rows].T)
    design = build_design(mkt[rows] - rf[rows], extras)
    return R[:, ok], np.flatnonzero(ok), design


def _ordered_pick(order: np.ndarray, alpha: np.ndarray, p_tilde: int, positive: bool) -> np.ndarray:
    """Positive-alpha assets in rank order, then the rest in rank order."""
    if positive:
        pos = order[alpha[order] > 0]
        rest = order[alpha[order] <= 0]
        order = np.concatenate([pos, rest])
    return order[:p_tilde]


def select_month(panel: PricePanel, fit_month: pd.Period, selector: str, cfg: BacktestConfig,
                 month_index: int = 0) -> MonthRecord:
    """Rank and choose ``p_tilde`` assets from the fit month of ``panel``.

    Only dates inside ``panel`` are used; callers pass a truncated copy.
    """
    R, cols, design = _fit_window(panel, fit_month, cfg.use_factors)
    n_fit, n_ok = R.shape
    if n_ok < cfg.p_tilde:
        raise InsufficientAssets(
            f"{fit_month}: {n_ok} assets with complete data, need p_tilde={cfg.p_tilde}")
    if selector == "oracle":
        lam0 = default_lambda0(design.k) if cfg.lambda0 is None else np.asarray(cfg.lambda0, float)
        prior = SpikeSlabPrior(p=cfg.prior_p, lambda0=lam0)
        st = oracle_statistics(design, R, prior)
        score = posterior_inclusion(st["s"], prior.p, st["lambdas"])
        alpha = st["theta_hat"][:, 0]
        order = np.lexsort((np.arange(n_ok), -st["s"], -score))
        s2 = st["sigma2"]
    elif selector == "ftest":
        theta, rss, s2 = ols_estimate_panel(design, R)
        with np.errstate(divide="ignore", invalid="ignore"):
            F = f_test_statistic(design, theta, rss)
        F = np.where(np.isfinite(F), F, np.inf)
        alpha = theta[:, 0]
        order = np.lexsort((np.arange(n_ok), -F))
    elif selector == "hb":
        draws = run_chain(R, design, HBPrior.default(design.k), iterations=cfg.hb_iterations,
                          burn_in=cfg.hb_burn_in, seed=child_seed(cfg.seed, "hb-backtest", month_index))
        order = hb_rank(draws)
        alpha = draws.thetas[:, :, 0].mean(axis=0)
        s2 = draws.sigma2s.mean(axis=0)
    else:
        raise ValueError(f"selector {selector!r} does not select assets")
    pick = _ordered_pick(order, alpha, cfg.p_tilde, cfg.positive_alpha)
    w = np.full(pick.size, 1.0 / pick.size)
    exact, bound = idiosyncratic_bound(w, s2[pick])
    return MonthRecord(fit_month=fit_month, hold_month=fit_month + 1,
                       selected=[panel.tickers[cols[i]] for i in pick], n_fit=n_fit, n_eligible=n_ok,
                       idio_var=exact, idio_bound=bound)


def hold_returns(panel: PricePanel, hold_month: pd.Period, tickers: Sequence) -> pd.Series:
    """Equal-weight daily returns of ``tickers`` over ``hold_month``.

    A constituent with no price on a hold day contributes a zero return.
    """
    dates, r, _, _, _ = panel.simple_returns()
    rows = dates.to_period("M") == hold_month
    idx = [panel.tickers.index(t) for t in tickers]
    block = np.nan_to_num(r[rows][:, idx], nan=0.0)
    return pd.Series(block.mean(axis=1), index=dates[rows])


def benchmark_returns(panel: PricePanel, hold_month: pd.Period) -> pd.Series:
    dates, _, mkt, _, _ = panel.simple_returns()
    rows = dates.to_period("M") == hold_month
    return pd.Series(mkt[rows], index=dates[rows])


def monthly_rebalance(panel: PricePanel, selector: str, cfg: BacktestConfig,
                      schedule: list | None = None) -> BacktestRun:
    """Daily out-of-sample returns of one strategy over the whole schedule."""
    schedule = rebalance_schedule(panel.dates, panel.n_factors + 2) if schedule is None else schedule
    pieces, months = [], []
    for i, (fit, hold) in enumerate(schedule):
        if selector == "market":
            pieces.append(benchmark_returns(panel, hold))
            continue
        end = fit.to_timestamp(how="end")
        rec = select_month(panel.truncate(end), fit, selector, cfg, month_index=i)
        rec.hold_month = hold
        months.append(rec)
        pieces.append(hold_returns(panel, hold, rec.selected))
    daily = pd.concat(pieces) if pieces else pd.Series(dtype=float)
    daily.name = selector
    return BacktestRun(selector=selector, daily=daily, months=months)


def annual_return(daily: pd.Series) -> pd.Series:
    """Compounded percent return per calendar year."""
    daily = daily.dropna()
    return daily.groupby(daily.index.year).apply(lambda r: 100.0 * (np.prod(1.0 + r.to_numpy()) - 1.0))


def annualized_vol(cond_var, periods: int = TRADING_DAYS) -> float:
    """``100 * sqrt(periods) * mean(sqrt(h_t))`` in percent."""
    h = np.asarray(cond_var, float)
    return float(100.0 * np.sqrt(periods) * np.mean(np.sqrt(np.maximum(h, 0.0)))) if h.size else float("nan")


def var_historical(returns, confidence: float = 0.99) -> float:
    """One-day historical VaR in percent, reported as a nonnegative loss."""
    r = np.asarray(returns, float)
    r = r[np.isfinite(r)]
    if r.size == 0:
        return float("nan")
    if r.size < 20:
        log.warning("VaR from only %d observations", r.size)
    q = np.quantile(r, 1.0 - confidence, method="linear")
    return float(max(0.0, -100.0 * q))


def risk_adjusted(annual_ret, ann_vol):
    """Annual return over annualized volatility; NaN where the volatility is not positive."""
    annual_ret = np.asarray(annual_ret, float)
    ann_vol = np.asarray(ann_vol, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(ann_vol > 0, annual_ret / ann_vol, np.nan)
    return float(out) if out.ndim == 0 else out


def perf_report(daily: pd.DataFrame, var_confidence: float = 0.99, runs: dict | None = None) -> PerfReport:
    """Yearly return, GARCH volatility, VaR and risk-adjusted tables.

    One GARCH(1,1) model is fitted per strategy over its whole out-of-sample
    series; the yearly volatility averages its conditional SD over that year.
    """
    years = sorted(set(daily.index.year))
    ret, vol, var = {}, {}, {}
    for col in daily.columns:
        s = daily[col].dropna()
        fit = garch_or_sample(s.to_numpy())
        h = pd.Series(fit.cond_var, index=s.index)
        ret[col] = annual_return(s)
        vol[col] = h.groupby(h.index.year).apply(annualized_vol)
        var[col] = s.groupby(s.index.year).apply(lambda x: var_historical(x.to_numpy(), var_confidence))
    returns = pd.DataFrame(ret).reindex(years)
    vols = pd.DataFrame(vol).reindex(years)
    vars_ = pd.DataFrame(var).reindex(years)
    empty = returns.isna().all(axis=1)
    for y in returns.index[empty]:
        log.warning("no returns in %s; row omitted", y)
    returns, vols, vars_ = returns[~empty], vols[~empty], vars_[~empty]
    riskadj = pd.DataFrame(risk_adjusted(returns.to_numpy(), vols.to_numpy()), index=returns.index,
                           columns=returns.columns)
    for df in (returns, vols, vars_, riskadj):
        df.index.name = "year"
    return PerfReport(daily=daily, returns=returns, vol=vols, var=vars_, riskadj=riskadj, runs=runs or {})


def run_backtest(panel: PricePanel, cfg: BacktestConfig) -> PerfReport:
    runs = {s: monthly_rebalance(panel, s, cfg) for s in cfg.selectors}
    daily = pd.DataFrame({s: r.daily for s, r in runs.items()})
    daily.index.name = "date"
    return perf_report(daily, cfg.var_confidence, runs)


# Higher is better for returns, lower for risk.
_BEST = {"returns": "max", "vol": "min", "var": "min", "riskadj": "max"}


def with_best_flag(table: pd.DataFrame, kind: str) -> pd.DataFrame:
    out = table.copy()
    vals = table.to_numpy(dtype=float)
    best = []
    for row in vals:
        if np.all(np.isnan(row)):
            best.append("")
        else:
            j = np.nanargmax(row) if _BEST[kind] == "max" else np.nanargmin(row)
            best.append(table.columns[j])
    out["best"] = best
    return out


def write_report(report: PerfReport, out_dir: str, float_format: str | None = None) -> dict:
    """Write the four yearly tables and the daily series; return the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for kind, table in report.tables().items():
        path = os.path.join(out_dir, f"{kind}.csv")
        with_best_flag(table, kind).to_csv(path, float_format=float_format)
        paths[kind] = path
    path = os.path.join(out_dir, "daily_returns.csv")
    daily = report.daily.copy()
    daily.index = pd.DatetimeIndex(daily.index).strftime("%Y-%m-%d")
    daily.index.name = "date"
    daily.to_csv(path, float_format=float_format)
    paths["daily_returns"] = path
    return paths


def riskadj_from_tables(returns: pd.DataFrame, vols: pd.DataFrame) -> pd.DataFrame:
    """Risk-adjusted table from precomputed yearly return and volatility tables."""
    returns, vols = returns.align(vols, join="inner")
    return pd.DataFrame(risk_adjusted(returns.to_numpy(float), vols.to_numpy(float)),
                        index=returns.index, columns=returns.columns)
