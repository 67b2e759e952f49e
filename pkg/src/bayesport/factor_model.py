"""k-factor regression data model and per-asset OLS sufficient statistics.

The design matrix always has the layout ``[1 | market | extra_1 | ... ]``
so that coefficient 0 is the intercept (alpha) and coefficient 1 is the
market loading (beta).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import RankDeficient, WeightSum

# Relative eigenvalue floor below which X^T X is treated as singular.
_RCOND = 1e-12


@dataclass(frozen=True)
class ReturnsPanel:
    """Daily excess returns, one column per asset."""

    dates: np.ndarray
    assets: list
    excess: np.ndarray

    def __post_init__(self):
        excess = np.asarray(self.excess, dtype=float)
        if excess.ndim != 2:
            raise ValueError("excess returns must be a 2-d (n, P) array")
        n, P = excess.shape
        if n < 1 or P < 1:
            raise ValueError("panel needs at least one day and one asset")
        if len(self.assets) != P:
            raise ValueError(f"{len(self.assets)} asset labels for {P} columns")
        if len(self.dates) != n:
            raise ValueError(f"{len(self.dates)} dates for {n} rows")
        if not np.all(np.isfinite(excess)):
            raise ValueError("panel contains missing or non-finite cells")
        object.__setattr__(self, "excess", excess)

    @property
    def n(self) -> int:
        return self.excess.shape[0]

    @property
    def P(self) -> int:
        return self.excess.shape[1]


@dataclass(frozen=True)
class FactorDesign:
    """Design matrix ``X`` (n, k+1) with cached ``sigma_x = X^T X``."""

    X: np.ndarray
    sigma_x: np.ndarray = field(repr=False)
    k: int

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.k + 1

    @property
    def df_resid(self) -> int:
        return self.n - self.k - 1


@dataclass(frozen=True)
class AssetEstimate:
    theta_hat: np.ndarray
    rss: float
    sigma2_hat: float
    n: int


def null_point(k: int) -> np.ndarray:
    """Parameter vector of an asset that mimics the market: (0, 1, 0, ..., 0)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    mu0 = np.zeros(k + 1)
    mu0[1] = 1.0
    return mu0


def build_design(market, extra_factors: Sequence = ()) -> FactorDesign:
    """Assemble ``[1 | market | extras]`` and check ``X^T X`` is positive definite.

    Raises
    ------
    RankDeficient
        If the columns are collinear or there are not more rows than columns.
    """
    market = np.asarray(market, dtype=float).ravel()
    n = market.size
    cols = [np.ones(n), market]
    for j, f in enumerate(extra_factors):
        f = np.asarray(f, dtype=float).ravel()
        if f.size != n:
            raise ValueError(f"extra factor {j} has length {f.size}, expected {n}")
        cols.append(f)
    X = np.column_stack(cols)
    k = X.shape[1] - 1
    if n <= k + 1:
        raise RankDeficient(f"n={n} observations cannot support {k + 1} coefficients with residual df")
    sigma_x = X.T @ X
    sigma_x = 0.5 * (sigma_x + sigma_x.T)
    _check_pd(sigma_x, "X^T X")
    return FactorDesign(X=X, sigma_x=sigma_x, k=k)


def _check_pd(M: np.ndarray, what: str) -> None:
    # Scale-free test: singular values of the column-normalized matrix.
    d = np.sqrt(np.abs(np.diag(M)))
    if np.any(d == 0):
        raise RankDeficient(f"{what} has a zero column")
    eig = np.linalg.eigvalsh(M / np.outer(d, d))
    if eig[0] <= _RCOND * eig[-1]:
        raise RankDeficient(f"{what} is singular to working precision (min eig {eig[0]:.3g})")


def ols_estimate(design: FactorDesign, r_i) -> AssetEstimate:
    """Least-squares fit of one asset's excess returns on the design."""
    r_i = np.asarray(r_i, dtype=float).ravel()
    if r_i.size != design.n:
        raise ValueError(f"return vector has length {r_i.size}, design has {design.n} rows")
    theta = np.linalg.solve(design.sigma_x, design.X.T @ r_i)
    resid = r_i - design.X @ theta
    rss = float(resid @ resid)
    return AssetEstimate(theta_hat=theta, rss=rss, sigma2_hat=rss / design.df_resid, n=design.n)


def ols_estimate_panel(design: FactorDesign, R) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized OLS over the columns of ``R`` (n, P).

    Returns ``(theta_hat (P, k+1), rss (P,), sigma2_hat (P,))``.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim == 1:
        R = R[:, None]
    theta = np.linalg.solve(design.sigma_x, design.X.T @ R).T
    resid = R - design.X @ theta.T
    rss = np.einsum("ij,ij->j", resid, resid)
    return theta, rss, rss / design.df_resid


def idiosyncratic_bound(weights, sigma2s, tol: float = 1e-9) -> tuple[float, float]:
    """Idiosyncratic portfolio variance and its max-weight upper bound.

    Returns ``(sum w_i^2 s_i^2, max(s^2) * max(w))``; the first never exceeds
    the second for long-only weights summing to one.
    """
    w = np.asarray(weights, dtype=float).ravel()
    s2 = np.asarray(sigma2s, dtype=float).ravel()
    if w.shape != s2.shape:
        raise ValueError("weights and variances must have the same length")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if np.any(s2 < 0):
        raise ValueError("variances must be nonnegative")
    if abs(w.sum() - 1.0) > tol:
        raise WeightSum(f"weights sum to {w.sum():.12g}, not 1")
    exact = float(np.sum(w**2 * s2))
    bound = float(s2.max() * w.max())
    return exact, bound
