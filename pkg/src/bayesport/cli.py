"""Command-line entry point: ``bayesport <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np
import pandas as pd

from . import market_sim
from .backtest import BacktestConfig, perf_report, run_backtest, write_report
from .config import RunConfig, load_config
from .errors import BayesportError, ConfigError, DataError, InsufficientData, NumericalError
from .factor_model import build_design
from .hb_sampler import HBPrior, hb_rank, prob_positive_alpha, run_chain
from .io import load_panel
from .manifest import RunManifest
from .oracle_test import LossSpec, SpikeSlabPrior, default_lambda0, run_oracle_test
from .seeding import child_seed

log = logging.getLogger("bayesport")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
_FLOAT = None  # shortest round-trip repr


def _write_csv(df: pd.DataFrame, path: str, index: bool = False) -> str:
    df.to_csv(path, index=index, float_format=_FLOAT)
    return path


def _window(cfg: RunConfig, args):
    d = cfg.data
    prices = args.prices or d.prices
    benchmark = args.benchmark or d.benchmark
    if not prices or not benchmark:
        raise ConfigError("data.prices and data.benchmark are required (or pass --prices/--benchmark)")
    return load_panel(prices, benchmark, d.factors, d.risk_free, d.start, d.end)


def _excess_window(panel, k_extra: int | None):
    """Complete-data excess returns and design for a whole window."""
    dates, r, mkt, extra, rf = panel.simple_returns()
    R = r - rf[:, None]
    ok = np.all(np.isfinite(R), axis=0)
    if not ok.any():
        raise InsufficientData("no asset has complete data in the window")
    if (~ok).any():
        log.warning("%d assets with missing prices in the window are excluded", int((~ok).sum()))
    extras = [] if extra is None else list(extra.T)
    if k_extra is not None:
        extras = extras[:k_extra]
    n = R.shape[0]
    if n <= len(extras) + 2:
        raise InsufficientData(f"window has n={n} return days; need more than k+1={len(extras) + 2}")
    design = build_design(mkt - rf, extras)
    return R[:, ok], [t for t, o in zip(panel.tickers, ok) if o], design


def cmd_simulate(cfg: RunConfig, args) -> list[str]:
    s = cfg.simulate
    exp = args.experiment if args.experiment is not None else s.experiment
    if exp not in (1, 2, 3, 4):
        raise ConfigError(f"simulate.experiment: must be 1, 2, 3 or 4, got {exp!r}")
    base = market_sim.SimConfig(alpha_sd=s.alpha_sd, beta_sd=s.beta_sd, market_sd=s.market_sd,
                                extra_factor_sd=s.extra_factor_sd)
    seed = cfg.seed
    if exp == 1:
        df = market_sim.run_experiment1(s.p_grid, s.n_values, s.P_values, s.sigma_values, s.replicates, seed, base)
    elif exp == 2:
        df = market_sim.run_experiment2(s.p_grid, s.replicates, seed, replace(base, P=s.P, n=s.n, sigma=s.sigma),
                                        s.significance)
    elif exp == 3:
        df = market_sim.run_experiment3(s.P, s.q, tuple(s.p_tildes), tuple(s.sigmas), s.n, s.n_test,
                                        s.replicates, seed, base)
    else:
        df = market_sim.run_experiment4(configs=tuple(tuple(c) for c in s.configs), sigmas=tuple(s.curve_sigmas),
                                        q=s.curve_q, replicates=s.replicates, seed=seed, base=base)
    return [_write_csv(df, os.path.join(args.out, f"experiment{exp}.csv"))]


def cmd_test(cfg: RunConfig, args) -> list[str]:
    t = cfg.test
    panel = _window(cfg, args)
    k_extra = None if t.k is None else t.k - 1
    R, tickers, design = _excess_window(panel, k_extra)
    lam0 = default_lambda0(design.k) if t.lambda0 is None else np.asarray(t.lambda0, float)
    try:
        prior = SpikeSlabPrior(p=t.p, lambda0=lam0)
        loss = LossSpec(t.delta0, t.deltaA)
    except ValueError as exc:
        raise ConfigError(f"test: {exc}") from None
    res = run_oracle_test(design, R, prior, loss, statistic=t.statistic, assets=tickers)
    return [_write_csv(res.to_frame(), os.path.join(args.out, "oracle_test.csv"))]


def cmd_hb_fit(cfg: RunConfig, args) -> list[str]:
    h = cfg.hb
    panel = _window(cfg, args)
    R, tickers, design = _excess_window(panel, None)
    kw = {"nu0": h.nu0}
    if h.rho is not None:
        kw["rho"] = h.rho
    try:
        prior = HBPrior.default(design.k, **kw)
    except ValueError as exc:
        raise ConfigError(f"hb: {exc}") from None
    draws = run_chain(R, design, prior, iterations=h.iterations, burn_in=h.burn_in, stride=h.stride,
                      seed=child_seed(cfg.seed, "hb-fit"), proposal_scale=h.proposal_scale,
                      target_accept=h.target_accept, assets=tickers)
    order = hb_rank(draws)
    rank = np.empty_like(order)
    rank[order] = np.arange(1, order.size + 1)
    summary = pd.DataFrame({
        "asset": tickers,
        "prob_alpha_positive": prob_positive_alpha(draws),
        "alpha_mean": draws.thetas[:, :, 0].mean(axis=0),
        "beta_mean": draws.thetas[:, :, 1].mean(axis=0),
        "sigma2_mean": draws.sigma2s.mean(axis=0),
        "rank": rank,
        "selected": (rank <= min(h.p_tilde, len(tickers))).astype(int),
    })
    out = [_write_csv(summary, os.path.join(args.out, "hb_summary.csv"))]
    if h.write_trace:
        out.append(_write_csv(draws.to_trace_frame(), os.path.join(args.out, "hb_trace.csv")))
    log.info("tau acceptance rate %.3f", draws.accept_rate)
    return out


def _backtest_config(cfg: RunConfig, selectors) -> BacktestConfig:
    b = cfg.backtest
    return BacktestConfig(
        p_tilde=b.p_tilde, selectors=tuple(selectors), use_factors=b.use_factors, prior_p=b.prior_p,
        lambda0=None if b.lambda0 is None else np.asarray(b.lambda0, float),
        hb_iterations=b.hb_iterations, hb_burn_in=b.hb_burn_in, var_confidence=b.var_confidence,
        positive_alpha=b.positive_alpha, seed=cfg.seed,
    )


def cmd_backtest(cfg: RunConfig, args) -> list[str]:
    selectors = [args.selector] if args.selector else cfg.backtest.selectors
    bcfg = _backtest_config(cfg, selectors)
    panel = _window(cfg, args)
    if len(panel.dates.to_period("M").unique()) < 2:
        raise InsufficientData("backtest needs at least two calendar months")
    report = run_backtest(panel, bcfg)
    paths = list(write_report(report, args.out).values())
    rows = []
    for name, run in report.runs.items():
        for m in run.months:
            rows.append({"selector": name, "fit_month": str(m.fit_month), "hold_month": str(m.hold_month),
                         "n_fit": m.n_fit, "n_eligible": m.n_eligible, "idio_var": m.idio_var,
                         "idio_bound": m.idio_bound, "selected": " ".join(map(str, m.selected))})
    if rows:
        paths.append(_write_csv(pd.DataFrame(rows), os.path.join(args.out, "selections.csv")))
    return paths


def cmd_report(cfg: RunConfig, args) -> list[str]:
    path = args.daily or os.path.join(args.out, "daily_returns.csv")
    try:
        daily = pd.read_csv(path, index_col="date", parse_dates=["date"], float_precision="round_trip")
    except (FileNotFoundError, ValueError) as exc:
        raise DataError(f"{path}: cannot read daily returns ({exc})") from None
    if args.selector:
        if args.selector not in daily.columns:
            raise DataError(f"{path}: no column {args.selector!r}")
        daily = daily[[args.selector]]
    report = perf_report(daily, cfg.backtest.var_confidence)
    paths = write_report(report, args.out)
    return [paths[k] for k in ("returns", "vol", "var", "riskadj")]


COMMANDS = {"simulate": cmd_simulate, "test": cmd_test, "hb-fit": cmd_hb_fit,
            "backtest": cmd_backtest, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bayesport", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--experiment", type=int, help="simulation experiment 1..4")
        p.add_argument("--selector", choices=["oracle", "hb", "ftest", "market"])
        p.add_argument("--prices", help="price CSV (date,ticker,adj_close)")
        p.add_argument("--benchmark", help="benchmark CSV (date,level)")
        p.add_argument("--daily", help="daily_returns.csv for the report command")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError("--seed: must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        os.makedirs(args.out, exist_ok=True)
        manifest = RunManifest(command=args.command, config=cfg.to_dict(), seed=cfg.seed,
                               inputs={"config": args.config, "prices": args.prices, "benchmark": args.benchmark})
        outputs = COMMANDS[args.command](cfg, args)
        manifest.finish(outputs).write(args.out)
        for p in outputs:
            print(p)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BayesportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
