"""CSV ingestion for prices, index levels and the risk-free rate.

Formats (ISO-8601 dates, decimal point, no thousands separators)::

    prices.csv     date,ticker,adj_close
    benchmark.csv  date,level
    riskfree.csv   date,rate        daily rate as a decimal fraction
"""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
import pandas as pd

from .backtest import PricePanel
from .errors import DataError

log = logging.getLogger(__name__)


def _read(path: str, columns: Sequence[str]) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot parse CSV ({exc})") from None
    got = [c.strip() for c in df.columns]
    if got != list(columns):
        raise DataError(f"{path}: header must be {','.join(columns)}, got {','.join(got)}")
    df.columns = list(columns)
    return df


def _parse_dates(df: pd.DataFrame, path: str) -> pd.Series:
    d = pd.to_datetime(df["date"].str.strip(), format="%Y-%m-%d", errors="coerce")
    bad = d.isna()
    if bad.any():
        i = int(np.flatnonzero(bad.to_numpy())[0])
        # +2: one header line, 1-based numbering.
        raise DataError(f"{path}, line {i + 2}: bad date {df['date'].iloc[i]!r}")
    return d


def _to_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return np.nan


def _parse_numbers(df: pd.DataFrame, col: str, path: str) -> np.ndarray:
    # Python's float() rounds correctly, so written values read back exactly.
    x = np.array([_to_float(v) for v in df[col]], dtype=float)
    bad = ~np.isfinite(x)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DataError(f"{path}, line {i + 2}: bad {col} {df[col].iloc[i]!r}")
    return x


def read_prices(path: str) -> pd.DataFrame:
    """Wide ``date x ticker`` price table; NaN where a ticker has no row."""
    df = _read(path, ["date", "ticker", "adj_close"])
    if df.empty:
        raise DataError(f"{path}: no rows")
    dates = _parse_dates(df, path)
    px = _parse_numbers(df, "adj_close", path)
    if np.any(px <= 0):
        i = int(np.flatnonzero(px <= 0)[0])
        raise DataError(f"{path}, line {i + 2}: price must be positive")
    long = pd.DataFrame({"date": dates, "ticker": df["ticker"].str.strip(), "adj_close": px})
    dup = long.duplicated(["date", "ticker"])
    if dup.any():
        i = int(np.flatnonzero(dup.to_numpy())[0])
        raise DataError(f"{path}, line {i + 2}: duplicate (date, ticker)")
    wide = long.pivot(index="date", columns="ticker", values="adj_close").sort_index()
    return wide.reindex(sorted(wide.columns), axis=1)


def read_series(path: str, value: str = "level") -> pd.Series:
    df = _read(path, ["date", value])
    dates = _parse_dates(df, path)
    x = _parse_numbers(df, value, path)
    s = pd.Series(x, index=pd.DatetimeIndex(dates), name=value)
    if s.index.duplicated().any():
        raise DataError(f"{path}: duplicate dates")
    return s.sort_index()


def load_panel(prices: str, benchmark: str, factors: Sequence[str] = (), risk_free: str | None = None,
               start=None, end=None) -> PricePanel:
    """Align every input on the dates shared by prices, benchmark and factors."""
    wide = read_prices(prices)
    bench = read_series(benchmark)
    facs = [read_series(f) for f in factors]
    idx = wide.index.intersection(bench.index)
    for f in facs:
        idx = idx.intersection(f.index)
    if start is not None:
        idx = idx[idx >= pd.Timestamp(start)]
    if end is not None:
        idx = idx[idx <= pd.Timestamp(end)]
    if len(idx) < 2:
        raise DataError("fewer than two dates shared by prices, benchmark and factors")
    dropped = len(wide.index.difference(idx))
    if dropped and start is None and end is None:
        log.warning("%d price dates have no benchmark or factor level and are dropped", dropped)
    rf = None
    if risk_free:
        r = read_series(risk_free, "rate")
        aligned = r.reindex(r.index.union(idx)).ffill().reindex(idx)
        if aligned.isna().any():
            log.warning("risk-free rate missing before %s; treated as 0", r.index[0].date())
        rf = aligned.fillna(0.0).to_numpy()
    return PricePanel(
        dates=idx, tickers=list(wide.columns), adjusted_close=wide.reindex(idx).to_numpy(),
        benchmark=bench.reindex(idx).to_numpy(),
        factor_series=np.column_stack([f.reindex(idx).to_numpy() for f in facs]) if facs else None,
        risk_free=rf,
    )


def write_prices(path: str, panel: PricePanel, benchmark_path: str | None = None) -> None:
    """Write a panel back to the long price format (and the benchmark levels)."""
    df = pd.DataFrame(panel.adjusted_close, index=panel.dates, columns=panel.tickers)
    df.index.name = "date"
    long = df.stack(future_stack=True).dropna().rename("adj_close").reset_index()
    long.columns = ["date", "ticker", "adj_close"]
    long["date"] = long["date"].dt.strftime("%Y-%m-%d")
    long.to_csv(path, index=False)
    if benchmark_path:
        b = pd.DataFrame({"date": panel.dates.strftime("%Y-%m-%d"), "level": panel.benchmark})
        b.to_csv(benchmark_path, index=False)
