"""Acceptance criteria AC1 to AC13, each printing one PASS/FAIL line."""
import os
import time

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from bayesport.backtest import BacktestConfig, PricePanel, monthly_rebalance, riskadj_from_tables
from bayesport.factor_model import build_design, idiosyncratic_bound, null_point
from bayesport.garch import garch_fit, simulate_garch
from bayesport.hb_sampler import (
    HBPrior,
    HBState,
    gibbs_lambda,
    gibbs_sigma2s,
    gibbs_theta0,
    gibbs_thetas,
    hb_select,
    lambda_conditional,
    mh_tau,
    run_chain,
    theta0_conditional,
    theta_conditional,
)
from bayesport.market_sim import (
    SPARSITY_GRID,
    run_experiment1,
    run_experiment2,
    run_experiment3,
    run_experiment4,
    synthetic_price_panel,
)
from bayesport.oracle_test import (
    SpikeSlabPrior,
    abos_diagnostic,
    assumption_a_sequence,
    bfdr_equation,
    bfdr_threshold,
    default_lambda0,
    oracle_statistics,
)
from bayesport.quadform import qf_cdf, qf_cdf_mc
from bayesport.seeding import stream

pytestmark = pytest.mark.acceptance

DATA = os.path.join(os.path.dirname(__file__), "data")


def test_ac1_null_law(criterion):
    t0 = time.perf_counter()
    pvals = {}
    for k in (1, 3):
        rng = stream(0, "ac1", k)
        d = build_design(rng.normal(0, 0.01, 20), list(rng.normal(0, 1.0, (k - 1, 20))))
        R = (d.X @ null_point(k))[:, None] + rng.normal(0, 0.1, (20, 10_000))
        st = oracle_statistics(d, R, SpikeSlabPrior(0.1, default_lambda0(k)), sigma2=0.01)
        pvals[k] = stats.kstest(st["s_tilde"], stats.chi2(k + 1).cdf).pvalue
    dt = time.perf_counter() - t0
    ok = min(pvals.values()) > 0.01 and dt < 60
    criterion("AC1", ok, f"KS p-values k=1: {pvals[1]:.3f}, k=3: {pvals[3]:.3f}; {dt:.1f}s")


def test_ac2_quadform_oracle(criterion):
    t0 = time.perf_counter()
    rng = stream(0, "ac2")
    worst = -np.inf
    n = 1_000_000
    for v in range(20):
        lam = rng.uniform(0.05, 3.0, rng.integers(1, 6))
        qs = np.quantile(stream(0, "ac2-q", v).standard_normal((20_000, lam.size)) ** 2 @ lam,
                         np.linspace(0.05, 0.95, 10))
        for j, c in enumerate(qs):
            mc = qf_cdf_mc(lam, c, draws=n, seed=1000 * v + j)
            se = np.sqrt(mc * (1 - mc) / n)
            worst = max(worst, abs(qf_cdf(lam, c) - mc) - (3 * se + 1e-6))
    dt = time.perf_counter() - t0
    criterion("AC2", worst < 0 and dt < 120, f"max excess over 3 SE: {worst:.2e}; {dt:.1f}s")


def test_ac3_experiment1(criterion):
    t0 = time.perf_counter()
    df = run_experiment1(p_grid=SPARSITY_GRID, n_values=(20, 50), P_values=(100,), sigma_values=(0.1, 0.05),
                         replicates=200, seed=0)
    dt = time.perf_counter() - t0
    wide = df.pivot_table(index=["n", "sigma", "p", "statistic"], columns="metric", values="value").reset_index()
    a = wide[wide.p <= 0.5].t1.max()
    rhos = [stats.spearmanr(g.p, g.t1).statistic for _, g in wide.groupby(["n", "sigma", "statistic"])]
    c = wide[wide.p == 0.01].t2.max()
    pair = df.pivot_table(index=["n", "sigma", "p", "metric"], columns="statistic", values="value")
    d = np.nanmax(np.abs(pair["S"] - pair["S_tilde"]))
    ok = a < 0.05 and min(rhos) > 0.9 and c < 1 and d < 0.05 and dt < 900
    criterion("AC3", ok, f"(a) max t1 p<=.5 {a:.4f} (b) min rho {min(rhos):.3f} (c) max t2 p=.01 {c:.3f} "
                         f"(d) max |S-S~| {d:.4f}; {dt:.0f}s")


def test_ac4_experiment2(criterion):
    t0 = time.perf_counter()
    df = run_experiment2(p_grid=SPARSITY_GRID, replicates=200, seed=0)
    dt = time.perf_counter() - t0
    wide = df.pivot_table(index=["p", "metric"], columns="method", values="value")
    f_t1 = wide.xs("t1", level="metric")["F_test"]
    size_ok = bool(np.all(np.abs(f_t1 - 0.05) <= 0.02))
    low = wide[wide.index.get_level_values("p") <= 0.1]
    gaps = {m: float((low.xs(m, level="metric")["ABOS"] - low.xs(m, level="metric")["F_test"]).max())
            for m in ("t2", "bfdr", "pmc")}
    ok = size_ok and all(g <= 0.02 for g in gaps.values()) and dt < 600
    criterion("AC4", ok, f"F size range [{f_t1.min():.4f}, {f_t1.max():.4f}]; ABOS - F at p<=0.1: "
                         + ", ".join(f"{m} {g:+.3f}" for m, g in gaps.items()) + f"; {dt:.0f}s")


def test_ac5_experiment3(criterion):
    t0 = time.perf_counter()
    df = run_experiment3(P=500, q=25, p_tildes=(100, 50), sigmas=(0.03, 0.01), replicates=200, seed=0)
    dt = time.perf_counter() - t0
    diff = (df.oracle_median - df.abos_median).abs()
    cells = ", ".join(f"p~={r.p_tilde} s={r.sigma}: {r.oracle_median:.4f}/{r.abos_median:.4f}"
                      for r in df.itertuples())
    criterion("AC5", bool((diff < 0.005).all()) and dt < 900, f"{cells}; max diff {diff.max():.4f}; {dt:.0f}s")


def test_ac6_experiment4(criterion):
    t0 = time.perf_counter()
    df = run_experiment4(replicates=200, seed=0)
    dt = time.perf_counter() - t0
    w = df.pivot_table(index=["P", "n", "p_tilde", "sigma"], columns="model", values="inclusion")
    gap = float((w["CAPM"] - w["4-factor"]).max())
    criterion("AC6", gap <= 0.05 and dt < 900, f"max CAPM minus 4-factor {gap:+.3f}; {dt:.0f}s")


def test_ac7_bfdr_plugback(criterion):
    t0 = time.perf_counter()
    rng = stream(0, "ac7")
    worst = 0.0
    lam0 = default_lambda0(1)
    for _ in range(100):
        p = rng.uniform(0.001, 0.5)
        lam = rng.uniform(0.01, 0.99, 2)
        f = (1 - p) / p
        alpha = rng.uniform(0.001, 0.999) * f / (1 + f)
        c2 = bfdr_threshold(SpikeSlabPrior(p, lam0), lam, alpha)
        worst = max(worst, abs(bfdr_equation(c2, p, lam) - alpha))
    dt = time.perf_counter() - t0
    criterion("AC7", worst < 1e-10 and dt < 1, f"max error {worst:.1e}; {dt:.3f}s")


def test_ac8_abos_limit(criterion):
    t0 = time.perf_counter()
    d = build_design(stream(0, "ac8").normal(0, 0.01, 20))
    rows = abos_diagnostic(assumption_a_sequence(d, 20, C=2.0), d)
    t1 = [r.t1 for r in rows]
    last = rows[-1]
    dt = time.perf_counter() - t0
    ok = all(a >= b for a, b in zip(t1, t1[1:])) and last.t1 < 1e-3 and abs(last.t2 - (1 - np.exp(-1))) < 0.05
    criterion("AC8", ok and dt < 60, f"final t1 {last.t1:.2e}, t2 {last.t2:.4f} vs {1 - np.exp(-1):.4f}; {dt:.1f}s")


def _mc_ok(draws, mean):
    se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
    z = np.abs(draws.mean(axis=0) - mean) / se
    return float(np.max(z))


def test_ac9_hb_conjugacy(criterion):
    t0 = time.perf_counter()
    N = 100_000
    rng = stream(0, "ac9")
    d = build_design(rng.normal(0, 1.0, 30))
    prior = HBPrior.default(1, nu0=3.0)
    lam = np.array([[2.0, 0.3], [0.3, 1.0]])
    r = d.X @ [0.3, 1.2] + rng.normal(0, 0.7, 30)
    z = {}
    # Conditionally independent assets: N copies of one asset give N draws of its conditional.
    st = HBState(np.tile([0.2, 1.0], (N, 1)), np.full(N, 0.5), lam, np.array([0.1, 0.9]), 0.5)
    R = np.tile(r[:, None], (1, N))
    prec, rhs = theta_conditional(st, d, R)
    z["theta"] = _mc_ok(gibbs_thetas(st, prior, d, R, stream(1, "ac9")), np.linalg.solve(prec[0], rhs[0]))
    resid = r - d.X @ [0.2, 1.0]
    a, b = 0.5 * (prior.nu0 + 30), 0.5 * (prior.nu0 + resid @ resid)
    z["sigma2"] = _mc_ok(gibbs_sigma2s(st, prior, d, R, stream(2, "ac9"))[:, None], [b / (a - 1)])
    small = HBState(rng.normal(size=(5, 2)), np.ones(5), lam, np.zeros(2), 2.0)
    scale, df = lambda_conditional(small, prior)
    g = stream(3, "ac9")
    W = np.array([gibbs_lambda(small, prior, g) for _ in range(N)]).reshape(N, -1)
    z["Lambda"] = _mc_ok(W, (df * scale).ravel())
    mean0, _ = theta0_conditional(small, prior)
    g = stream(4, "ac9")
    z["theta0"] = _mc_ok(np.array([gibbs_theta0(small, prior, g) for _ in range(N)]), mean0)
    empty = HBState(np.zeros((0, 2)), np.zeros(0), np.eye(2), np.zeros(2), 1.0)
    g = stream(5, "ac9")
    taus = np.empty(400_000)
    for i in range(taus.size):
        empty.tau2, _ = mh_tau(empty, prior, 1.5, g)
        taus[i] = np.sqrt(empty.tau2)
    med = float(np.median(taus))
    dt = time.perf_counter() - t0
    ok = max(z.values()) < 3 and abs(med - 1) < 0.05 and dt < 300
    criterion("AC9", ok, ", ".join(f"{k} |z| {v:.2f}" for k, v in z.items()) + f"; tau median {med:.3f}; {dt:.0f}s")


def test_ac10_hb_recovery(criterion):
    t0 = time.perf_counter()
    P, n, chains = 100, 200, 100
    hits = 0
    for c in range(chains):
        rng = stream(0, "ac10", c)
        d = build_design(rng.normal(0, 0.01, n))
        alpha = np.zeros(P)
        alpha[:5] = 0.02
        R = d.X @ np.vstack([alpha, np.ones(P)]) + rng.normal(0, 0.05, (n, P))
        draws = run_chain(R, d, iterations=1500, burn_in=500, seed=c)
        hits += set(range(5)) <= set(hb_select(draws, 25))
    dt = time.perf_counter() - t0
    criterion("AC10", hits / chains >= 0.9 and dt < 1800, f"{hits}/{chains} chains recover all 5; {dt:.0f}s")


def test_ac11_backtest_identities(criterion):
    t0 = time.perf_counter()
    ret = pd.read_csv(os.path.join(DATA, "reference_returns.csv"), index_col="year")
    vol = pd.read_csv(os.path.join(DATA, "reference_vol.csv"), index_col="year")
    ref = pd.read_csv(os.path.join(DATA, "reference_riskadj.csv"), index_col="year")
    got = riskadj_from_tables(ret, vol)
    table_err = float(np.max(np.abs(got.to_numpy() - ref.to_numpy())))
    spot = (round(float(got.loc[2006, "market"]), 2), round(float(got.loc[2008, "market"]), 2))

    pp = synthetic_price_panel(months=6, P=40, seed=4)
    cut = pd.Timestamp("2020-03-31")
    px = pp.adjusted_close.copy()
    later = pp.dates > cut
    px[later] *= np.exp(stream(0, "ac11").normal(0, 0.05, px[later].shape))
    pp2 = PricePanel(pp.dates, pp.tickers, px, pp.benchmark)
    cfg = BacktestConfig(p_tilde=5, hb_iterations=400, hb_burn_in=100)
    audit = True
    for sel in ("oracle", "hb", "ftest"):
        a, b = monthly_rebalance(pp, sel, cfg), monthly_rebalance(pp2, sel, cfg)
        past = [(m.hold_month, m.selected) for m in a.months if m.fit_month <= cut.to_period("M")]
        past2 = [(m.hold_month, m.selected) for m in b.months if m.fit_month <= cut.to_period("M")]
        audit &= bool(past) and past == past2
    dt = time.perf_counter() - t0
    ok = table_err < 0.01 and spot == (1.18, -0.92) and audit and dt < 60
    criterion("AC11", ok, f"max ratio error {table_err:.4f}; spot rows {spot}; look-ahead audit "
                          f"{'clean' if audit else 'violated'}; {dt:.1f}s")


def test_ac12_garch_recovery(criterion):
    t0 = time.perf_counter()
    true = np.array([1e-6, 0.08, 0.9])
    zmax = 0.0
    for rep in range(20):
        r = simulate_garch(10_000, *true, rng=stream(0, "ac12", rep))
        fit = garch_fit(r)
        zmax = max(zmax, float(np.max(np.abs((np.array([fit.omega, fit.a, fit.b]) - true) / fit.se[1:]))))
    dt = time.perf_counter() - t0
    criterion("AC12", zmax < 3 and dt < 120, f"max |estimate - truth| / SE {zmax:.2f}; {dt:.1f}s")


def test_ac13_idiosyncratic_bound(criterion):
    t0 = time.perf_counter()
    s2 = 0.04
    exact = [idiosyncratic_bound(np.full(m, 1.0 / m), np.full(m, s2))[0] for m in (10, 100, 1000)]
    decreasing = exact[0] > exact[1] > exact[2] and np.allclose(exact, [s2 / 10, s2 / 100, s2 / 1000])
    rng = stream(0, "ac13")
    bound_ok = True
    for _ in range(1000):
        m = rng.integers(1, 200)
        w = rng.dirichlet(np.ones(m))
        e, b = idiosyncratic_bound(w, rng.uniform(0, 1, m))
        bound_ok &= e <= b
    dt = time.perf_counter() - t0
    criterion("AC13", decreasing and bound_ok and dt < 1, f"exact {exact}; bound holds on 1000 portfolios; {dt:.2f}s")
