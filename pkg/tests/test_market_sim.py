import numpy as np
import pytest
from scipy import stats

from bayesport.factor_model import null_point
from bayesport.market_sim import (
    SPARSITY_GRID,
    SimConfig,
    confusion_metrics,
    draw_truth,
    equal_weight_cumulative,
    hypergeometric_inclusion,
    rank_by_s_tilde,
    run_experiment1,
    run_experiment2,
    run_experiment3,
    run_experiment4,
    simulate_market,
    synthetic_price_panel,
)
from bayesport.seeding import child_seed, seed_sequence, stream


def test_p_grid():
    assert len(SPARSITY_GRID) == 18
    assert SPARSITY_GRID[0] == 0.01 and SPARSITY_GRID[-1] == 0.86


def test_config_validation():
    assert SimConfig(P=100, p=0.05).q == 5
    assert SimConfig(P=500, p=0.05).q == 25
    assert SimConfig(P=100, p=0.0).q == 0
    for bad in (dict(P=0), dict(n=2), dict(sigma=0.0), dict(p=1.5)):
        with pytest.raises(ValueError):
            SimConfig(**bad)
    assert SimConfig(k=4).lambda0.shape == (5, 5)


def test_truth_layout(rng):
    cfg = SimConfig(P=200, p=0.1)
    truth = draw_truth(cfg, rng)
    assert truth.shape == (200, 2)
    np.testing.assert_array_equal(truth[cfg.q:], np.tile(null_point(1), (200 - cfg.q, 1)))
    assert np.all(truth[: cfg.q, 0] != 0)


def test_p_zero_and_one():
    m0 = simulate_market(SimConfig(P=50, p=0.0))
    assert m0.oracle_set.size == 0
    np.testing.assert_array_equal(m0.truth, np.tile([0, 1], (50, 1)))
    m1 = simulate_market(SimConfig(P=50, p=1.0))
    assert m1.oracle_set.size == 50


def test_market_moments():
    # The generated returns have the stated idiosyncratic variance.
    cfg = SimConfig(P=2000, n=50, p=0.0, sigma=0.1)
    m = simulate_market(cfg)
    resid = m.panel.excess - m.factors[:, :1]
    assert resid.var() == pytest.approx(0.01, rel=0.02)
    assert abs(resid.mean()) < 0.001


def test_seed_determinism():
    a = simulate_market(SimConfig(seed=5)).panel.excess
    b = simulate_market(SimConfig(seed=5)).panel.excess
    c = simulate_market(SimConfig(seed=6)).panel.excess
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_streams_are_independent():
    x = stream(0, "a", 1).normal(size=5000)
    y = stream(0, "a", 2).normal(size=5000)
    z = stream(0, "b", 1).normal(size=5000)
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.05 and abs(np.corrcoef(x, z)[0, 1]) < 0.05
    np.testing.assert_array_equal(stream(0, "a", 1).normal(size=5), x[:5])
    assert seed_sequence(3, "a").entropy == 3
    assert 0 <= child_seed(3, "hb", 7) < 2**63


def test_n_total_extends_with_same_truth():
    cfg = SimConfig(P=20, n=20)
    m = simulate_market(cfg, n_total=40)
    assert m.panel.excess.shape == (40, 20)
    assert m.design.n == 20


def test_confusion_metrics_by_hand():
    reject = np.array([1, 1, 0, 0, 1, 0], bool)
    is_alt = np.array([1, 0, 1, 0, 0, 0], bool)
    m = confusion_metrics(reject, is_alt)
    assert m["t1"] == pytest.approx(2 / 4)
    assert m["t2"] == pytest.approx(1 / 2)
    assert m["bfdr"] == pytest.approx(2 / 3)
    assert m["pmc"] == pytest.approx(3 / 6)


def test_confusion_metrics_empty_denominators():
    m = confusion_metrics(np.zeros(4, bool), np.zeros(4, bool))
    assert m["t1"] == 0.0 and np.isnan(m["t2"]) and m["bfdr"] == 0.0
    m = confusion_metrics(np.ones(3, bool), np.ones(3, bool))
    assert np.isnan(m["t1"]) and m["t2"] == 0.0


def test_ranking_and_portfolio():
    order = rank_by_s_tilde({"s_tilde": np.array([1.0, 3.0, 3.0, 0.5])})
    np.testing.assert_array_equal(order, [1, 2, 0, 3])
    R = np.array([[0.1, -0.1], [0.1, 0.1]])
    assert equal_weight_cumulative(R, np.array([0, 1])) == pytest.approx(0.1)
    assert equal_weight_cumulative(R, np.array([0])) == pytest.approx(1.1**2 - 1)


def test_hypergeometric_inclusion():
    assert hypergeometric_inclusion(100, 5, 25) == pytest.approx(stats.hypergeom(100, 5, 25).pmf(5))
    assert hypergeometric_inclusion(10, 5, 4) == 0.0
    assert hypergeometric_inclusion(10, 5, 10) == 1.0


def test_experiment1_structure_and_null_size():
    df = run_experiment1(p_grid=(0.01, 0.5), n_values=(20,), P_values=(100,), sigma_values=(0.1,),
                         replicates=20, seed=1)
    assert set(df.columns) == {"P", "n", "sigma", "p", "statistic", "metric", "value"}
    assert len(df) == 2 * 2 * 4
    t1 = df[(df.metric == "t1")].set_index(["p", "statistic"]).value
    assert t1[(0.01, "S")] < t1[(0.5, "S")]


def test_experiment1_deterministic():
    kw = dict(p_grid=(0.1,), n_values=(20,), P_values=(100,), sigma_values=(0.1,), replicates=5, seed=3)
    a, b = run_experiment1(**kw), run_experiment1(**kw)
    np.testing.assert_array_equal(a.value.to_numpy(), b.value.to_numpy())


def test_experiment2_f_test_size():
    df = run_experiment2(p_grid=(0.05,), replicates=20, seed=0)
    f_t1 = df[(df.method == "F_test") & (df.metric == "t1")].value.item()
    assert f_t1 == pytest.approx(0.05, abs=0.015)


def test_experiment3_columns():
    df = run_experiment3(P=100, q=5, p_tildes=(20,), sigmas=(0.01,), replicates=10)
    assert list(df.columns[:4]) == ["P", "q", "p_tilde", "sigma"]
    assert 0 <= df.oracle_set_recall.item() <= 1
    with pytest.raises(ValueError):
        run_experiment3(P=100, q=30, p_tildes=(20,), replicates=1)


def test_experiment4_low_noise_recovers_set():
    df = run_experiment4(models=(("CAPM", 1),), configs=((100, 20, 25),), sigmas=(0.01, 0.8), replicates=20)
    inc = df.set_index("sigma").inclusion
    assert inc[0.01] >= 0.9
    assert inc[0.8] < inc[0.01]
    assert (df.chance < 1e-3).all()


def test_synthetic_price_panel():
    pp = synthetic_price_panel(months=3, P=10, planted=2)
    assert pp.adjusted_close.shape == (len(pp.dates), 10)
    assert pp.tickers[0] == "T000"
    assert np.all(pp.adjusted_close > 0)
    assert len(pp.dates.to_period("M").unique()) == 3


def test_noise_free_market_is_separated():
    df = run_experiment1(p_grid=(0.1, 0.5), n_values=(20,), P_values=(100,), sigma_values=(1e-8,), replicates=3)
    assert df[df.metric == "pmc"].value.max() == 0.0


def test_abos_size_below_f_test_when_sparse():
    df = run_experiment2(p_grid=(0.01,), replicates=20, seed=0)
    t1 = df[df.metric == "t1"].set_index("method").value
    assert t1["ABOS"] < t1["F_test"]


def test_experiment3_degenerate_cases():
    tiny = run_experiment3(P=100, q=5, p_tildes=(20,), sigmas=(1e-9,), replicates=5)
    assert tiny.oracle_set_recall.item() == 1.0
    assert tiny.oracle_median.item() == pytest.approx(tiny.abos_median.item(), abs=1e-6)
    full = run_experiment3(P=60, q=5, p_tildes=(60,), sigmas=(0.03,), replicates=5)
    assert full.oracle_median.item() == pytest.approx(full.abos_median.item(), rel=1e-12)


def test_experiment4_large_noise_is_chance():
    df = run_experiment4(models=(("CAPM", 1),), configs=((20, 20, 15),), sigmas=(1e3,), q=2, replicates=200)
    assert df.inclusion.item() == pytest.approx(df.chance.item(), abs=0.1)


def test_metrics_exchangeable_and_pmc_identity(rng):
    reject = rng.random(200) < 0.3
    is_alt = rng.random(200) < 0.2
    perm = rng.permutation(200)
    a, b = confusion_metrics(reject, is_alt), confusion_metrics(reject[perm], is_alt[perm])
    assert a == b
    p_hat = is_alt.mean()
    assert a["pmc"] == pytest.approx((1 - p_hat) * a["t1"] + p_hat * a["t2"], abs=1e-12)
