"""Synthetic factor markets and the four simulation experiments.

The first ``floor(p * P)`` assets are mispriced: their alpha is drawn from
``N(0, alpha_sd^2)``, their beta from ``N(1, beta_sd^2)`` and any extra factor
loadings from ``N(0, alpha_sd^2)``. Every other asset sits exactly on the null
point ``(0, 1, 0, ..., 0)``.

Each experiment returns a tidy :class:`pandas.DataFrame` with one row per
grid point, method and metric.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from scipy.special import comb

from .factor_model import FactorDesign, ReturnsPanel, build_design, null_point
from .seeding import stream
from .oracle_test import (
    SpikeSlabPrior,
    default_lambda0,
    f_test_decisions,
    oracle_statistics,
)

log = logging.getLogger(__name__)

SPARSITY_GRID = tuple(np.round(np.arange(0.01, 0.91, 0.05), 2))


@dataclass(frozen=True)
class SimConfig:
    P: int = 100
    n: int = 20
    k: int = 1
    p: float = 0.05
    sigma: float = 0.1
    alpha_sd: float = 0.1
    beta_sd: float = 0.1
    market_sd: float = 0.01
    market_mean: float = 0.0
    extra_factor_sd: float = 1.0
    lambda0: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if self.P < 1:
            raise ValueError("P must be >= 1")
        if self.n <= self.k + 1:
            raise ValueError("n must exceed k+1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        lam0 = default_lambda0(self.k) if self.lambda0 is None else np.asarray(self.lambda0, float)
        object.__setattr__(self, "lambda0", lam0)

    @property
    def q(self) -> int:
        return int(np.floor(self.p * self.P + 1e-9))


@dataclass
class SyntheticMarket:
    panel: ReturnsPanel
    design: FactorDesign
    truth: np.ndarray
    oracle_set: np.ndarray
    factors: np.ndarray = field(repr=False, default=None)


def draw_truth(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    m = cfg.k + 1
    truth = np.tile(null_point(cfg.k), (cfg.P, 1))
    q = cfg.q
    if q:
        truth[:q, 0] = rng.normal(0.0, cfg.alpha_sd, q)
        truth[:q, 1] = rng.normal(1.0, cfg.beta_sd, q)
        if m > 2:
            truth[:q, 2:] = rng.normal(0.0, cfg.alpha_sd, (q, m - 2))
    return truth


def draw_factors(cfg: SimConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    """``(n, k)`` factor returns: market first, then independent extras."""
    market = rng.normal(cfg.market_mean, cfg.market_sd, n)
    extras = rng.normal(0.0, cfg.extra_factor_sd, (n, cfg.k - 1))
    return np.column_stack([market, extras])


def simulate_market(cfg: SimConfig, rng: np.random.Generator | None = None, n_total: int | None = None
                    ) -> SyntheticMarket:
    """One synthetic market; deterministic in ``cfg.seed`` unless ``rng`` is given.

    ``n_total`` simulates extra days with the same coefficients (the design
    is built on the first ``cfg.n`` days, the rest serve as a test window).
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    n_total = cfg.n if n_total is None else n_total
    truth = draw_truth(cfg, rng)
    F = draw_factors(cfg, n_total, rng)
    X_all = np.column_stack([np.ones(n_total), F])
    R = X_all @ truth.T + rng.normal(0.0, cfg.sigma, (n_total, cfg.P))
    design = build_design(F[: cfg.n, 0], list(F[: cfg.n, 1:].T))
    panel = ReturnsPanel(dates=np.arange(n_total), assets=list(range(cfg.P)), excess=R)
    return SyntheticMarket(panel=panel, design=design, truth=truth,
                           oracle_set=np.arange(cfg.q), factors=F)


def confusion_metrics(reject: np.ndarray, is_alt: np.ndarray) -> dict:
    """Empirical type-I, type-II, BFDR and misclassification rate of one panel.

    Rates whose denominator is empty are NaN, except BFDR which is 0 when
    nothing is rejected.
    """
    reject = np.asarray(reject, bool)
    is_alt = np.asarray(is_alt, bool)
    fp = int(np.sum(reject & ~is_alt))
    fn = int(np.sum(~reject & is_alt))
    n_null = int(np.sum(~is_alt))
    n_alt = int(np.sum(is_alt))
    n_rej = int(np.sum(reject))
    return dict(
        t1=fp / n_null if n_null else np.nan,
        t2=fn / n_alt if n_alt else np.nan,
        bfdr=fp / n_rej if n_rej else 0.0,
        pmc=(fp + fn) / reject.size,
        fp=fp, fn=fn, n_null=n_null, n_alt=n_alt,
    )


def _oracle_decisions(market: SyntheticMarket, cfg: SimConfig, p_test: float | None = None):
    """S / S_tilde decisions with the true sigma and the configured prior."""
    p_test = cfg.p if p_test is None else p_test
    prior = SpikeSlabPrior(p=p_test, lambda0=cfg.lambda0)
    R = market.panel.excess[: cfg.n]
    st = oracle_statistics(market.design, R, prior, sigma2=cfg.sigma**2)
    c2 = -np.sum(np.log1p(-st["lambdas"]), axis=1) + 2.0 * np.log(prior.f)
    return st, c2


def _clip_p(p: float) -> float:
    # The oracle needs 0 < p < 1; the generator accepts the closed interval.
    return float(min(max(p, 1e-6), 1 - 1e-6))


def _mean_metrics(rows: list[dict]) -> dict:
    keys = ("t1", "t2", "bfdr", "pmc")
    with np.errstate(all="ignore"):
        return {k: float(np.nanmean([r[k] for r in rows])) if any(np.isfinite(r[k]) for r in rows)
                else float("nan") for k in keys}


def _tidy(records: list[dict], id_cols: Sequence[str]) -> pd.DataFrame:
    df = pd.DataFrame.from_records(records)
    return df.melt(id_vars=list(id_cols), value_vars=["t1", "t2", "bfdr", "pmc"],
                   var_name="metric", value_name="value")


def run_experiment1(p_grid: Iterable[float] = SPARSITY_GRID, n_values=(20, 50), P_values=(100, 500),
                    sigma_values=(0.1, 0.05), replicates: int = 200, seed: int = 0,
                    base: SimConfig | None = None) -> pd.DataFrame:
    """Operating characteristics of ``S`` and ``S_tilde`` across sparsity.

    For every grid point the per-replicate rates are averaged over
    ``replicates`` synthetic CAPM markets.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    base = base or SimConfig()
    records = []
    for P in P_values:
        for n in n_values:
            for sigma in sigma_values:
                for p in p_grid:
                    cfg = replace(base, P=P, n=n, sigma=sigma, p=float(p))
                    per = {"S": [], "S_tilde": []}
                    for rep in range(replicates):
                        rng = stream(seed, "experiment1", P, n, int(round(sigma * 1e6)), int(round(p * 1e6)), rep)
                        mkt = simulate_market(cfg, rng)
                        st, c2 = _oracle_decisions(mkt, cfg, _clip_p(p))
                        is_alt = np.arange(P) < cfg.q
                        per["S"].append(confusion_metrics(st["s"] >= c2, is_alt))
                        per["S_tilde"].append(confusion_metrics(st["s_tilde"] >= c2, is_alt))
                    for stat, rows in per.items():
                        records.append(dict(P=P, n=n, sigma=sigma, p=float(p), statistic=stat,
                                            **_mean_metrics(rows)))
    return _tidy(records, ["P", "n", "sigma", "p", "statistic"])


def run_experiment2(p_grid: Iterable[float] = SPARSITY_GRID, replicates: int = 200, seed: int = 0,
                    base: SimConfig | None = None, significance: float = 0.05) -> pd.DataFrame:
    """``S_tilde`` oracle test against the diffuse-prior F test."""
    base = base or SimConfig(P=500, n=20, sigma=0.1)
    records = []
    for p in p_grid:
        cfg = replace(base, p=float(p))
        per = {"ABOS": [], "F_test": []}
        for rep in range(replicates):
            rng = stream(seed, "experiment2", int(round(p * 1e6)), rep)
            mkt = simulate_market(cfg, rng)
            st, c2 = _oracle_decisions(mkt, cfg, _clip_p(p))
            is_alt = np.arange(cfg.P) < cfg.q
            per["ABOS"].append(confusion_metrics(st["s_tilde"] >= c2, is_alt))
            dec = f_test_decisions(mkt.design, st["theta_hat"], st["rss"], significance)
            per["F_test"].append(confusion_metrics(dec, is_alt))
        for method, rows in per.items():
            records.append(dict(P=cfg.P, n=cfg.n, sigma=cfg.sigma, p=float(p), method=method,
                                **_mean_metrics(rows)))
    return _tidy(records, ["P", "n", "sigma", "p", "method"])


def rank_by_s_tilde(st: dict) -> np.ndarray:
    """Asset order by decreasing ``S_tilde``; ties broken by asset index."""
    s = st["s_tilde"]
    return np.lexsort((np.arange(s.size), -s))


def equal_weight_cumulative(R_test: np.ndarray, members: np.ndarray) -> float:
    port = R_test[:, members].mean(axis=1)
    return float(np.prod(1.0 + port) - 1.0)


def run_experiment3(P: int = 500, q: int = 25, p_tildes=(100, 50), sigmas=(0.03, 0.01), n_train: int = 20,
                    n_test: int = 20, replicates: int = 200, seed: int = 0,
                    base: SimConfig | None = None) -> pd.DataFrame:
    """Median out-of-sample return of the oracle portfolio and the ``S_tilde`` portfolio.

    The oracle portfolio holds the ``q`` mispriced assets plus a random fill;
    the test portfolio holds the top ``p_tilde`` assets by ``S_tilde`` (the
    same order as the posterior inclusion probability when sigma is common).
    """
    base = base or SimConfig()
    rows = []
    for p_tilde in p_tildes:
        if not q <= p_tilde <= P:
            raise ValueError("need q <= p_tilde <= P")
        for sigma in sigmas:
            cfg = replace(base, P=P, n=n_train, sigma=sigma, p=q / P)
            oracle_ret, abos_ret, overlap = [], [], []
            for rep in range(replicates):
                rng = stream(seed, "experiment3", p_tilde, int(round(sigma * 1e6)), rep)
                mkt = simulate_market(cfg, rng, n_total=n_train + n_test)
                R_test = mkt.panel.excess[n_train:]
                fill = rng.choice(np.arange(q, P), size=p_tilde - q, replace=False)
                oracle = np.concatenate([mkt.oracle_set, fill])
                st, _ = _oracle_decisions(mkt, cfg)
                abos = rank_by_s_tilde(st)[:p_tilde]
                oracle_ret.append(equal_weight_cumulative(R_test, oracle))
                abos_ret.append(equal_weight_cumulative(R_test, abos))
                overlap.append(np.isin(mkt.oracle_set, abos).mean() if q else 1.0)
            rows.append(dict(P=P, q=q, p_tilde=p_tilde, sigma=sigma,
                             oracle_median=float(np.median(oracle_ret)),
                             abos_median=float(np.median(abos_ret)),
                             oracle_set_recall=float(np.mean(overlap)), replicates=replicates))
    return pd.DataFrame(rows)


def hypergeometric_inclusion(P: int, q: int, p_tilde: int) -> float:
    """Chance that a uniformly random ``p_tilde``-subset contains a fixed ``q``-set."""
    if p_tilde < q:
        return 0.0
    return float(comb(P - q, p_tilde - q, exact=True) / comb(P, p_tilde, exact=True))


def inclusion_probability(cfg: SimConfig, p_tilde: int, replicates: int, seed: int, tag: str = "") -> float:
    hits = 0
    for rep in range(replicates):
        rng = stream(seed, "experiment4" + tag, cfg.k, cfg.P, cfg.n, p_tilde, int(round(cfg.sigma * 1e6)), rep)
        mkt = simulate_market(cfg, rng)
        st, _ = _oracle_decisions(mkt, cfg)
        chosen = rank_by_s_tilde(st)[:p_tilde]
        hits += bool(np.all(np.isin(mkt.oracle_set, chosen)))
    return hits / replicates


def run_experiment4(models=(("CAPM", 1), ("4-factor", 4)),
                    configs=((100, 20, 25), (500, 20, 25), (100, 40, 25)),
                    sigmas=(0.05, 0.1, 0.2, 0.4, 0.8), q: int = 5, replicates: int = 200, seed: int = 0,
                    base: SimConfig | None = None) -> pd.DataFrame:
    """``P(A_q subset of B_p_tilde)`` as a function of idiosyncratic volatility.

    ``configs`` lists ``(P, n, p_tilde)``. Both models use the same market
    sizes; the multi-factor markets are generated from, and tested with, the
    multi-factor design.
    """
    base = base or SimConfig()
    rows = []
    for label, k in models:
        for P, n, p_tilde in configs:
            for sigma in sigmas:
                cfg = replace(base, P=P, n=n, k=k, sigma=sigma, p=q / P, lambda0=default_lambda0(k))
                prob = inclusion_probability(cfg, p_tilde, replicates, seed)
                rows.append(dict(model=label, k=k, P=P, n=n, p_tilde=p_tilde, q=q, sigma=sigma,
                                 inclusion=prob, chance=hypergeometric_inclusion(P, q, p_tilde),
                                 replicates=replicates))
    return pd.DataFrame(rows)


def synthetic_price_panel(start: str = "2020-01-01", months: int = 24, P: int = 60, planted: int = 5,
                          alpha: float = 0.004, sigma: float = 0.01, market_mu: float = 3e-4,
                          market_sd: float = 0.01, seed: int = 0):
    """Daily price panel (business days) with ``planted`` positive-alpha assets.

    Used by the backtest tests and demos; the first ``planted`` tickers carry
    the daily ``alpha``, all others sit on the null point.
    """
    from .backtest import PricePanel

    rng = stream(seed, "price-panel")
    end = pd.Period(start, "M") + (months - 1)
    dates = pd.bdate_range(start, end.to_timestamp(how="end"))
    n = len(dates)
    mkt = rng.normal(market_mu, market_sd, n)
    a = np.zeros(P)
    a[:planted] = alpha
    r = a + mkt[:, None] + rng.normal(0.0, sigma, (n, P))
    r[0] = 0.0
    mkt[0] = 0.0
    px = 100.0 * np.cumprod(1.0 + r, axis=0)
    bench = 1000.0 * np.cumprod(1.0 + mkt)
    return PricePanel(dates=dates, tickers=[f"T{i:03d}" for i in range(P)], adjusted_close=px, benchmark=bench)
