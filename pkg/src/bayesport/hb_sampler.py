"""Hierarchical k-factor model with a half-Cauchy global scale.

Model::

    r_i | theta_i, s2_i  ~ N(X theta_i, s2_i I)
    theta_i | theta0, Lambda, tau ~ N(theta0, tau^2 Lambda^{-1})
    s2_i   ~ InvGamma(nu0/2, nu0/2)
    Lambda ~ Wishart((rho R)^{-1}, rho)
    theta0 ~ N(mu0, C)
    tau    ~ C+(0, 1)

All blocks except ``tau`` have conjugate conditionals; ``tau`` gets a random
walk Metropolis step on ``log tau``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import InsufficientDraws, RankDeficient
from .factor_model import FactorDesign, null_point, ols_estimate_panel


@dataclass(frozen=True)
class HBPrior:
    nu0: float = 1.0
    rho: float | None = None
    R: np.ndarray | None = None
    mu0: np.ndarray | None = None
    C: np.ndarray | None = None

    @classmethod
    def default(cls, k: int, **kw) -> "HBPrior":
        m = k + 1
        base = dict(nu0=1.0, rho=k + 3.0, R=np.eye(m), mu0=null_point(k), C=100.0 * np.eye(m))
        base.update(kw)
        return cls(**base)

    def __post_init__(self):
        if self.R is None or self.C is None or self.mu0 is None or self.rho is None:
            raise ValueError("use HBPrior.default(k) or give every field")
        m = len(self.mu0)
        if self.nu0 <= 0:
            raise ValueError("nu0 must be positive")
        if self.rho < m:
            raise ValueError("Wishart degrees of freedom rho must be >= k+1")
        for name in ("R", "C"):
            M = np.asarray(getattr(self, name), float)
            if M.shape != (m, m):
                raise ValueError(f"{name} must be {m}x{m}")
            try:
                np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                raise ValueError(f"{name} must be positive definite") from None
            object.__setattr__(self, name, M)
        object.__setattr__(self, "mu0", np.asarray(self.mu0, float))

    @property
    def dim(self) -> int:
        return len(self.mu0)


@dataclass
class HBState:
    thetas: np.ndarray
    sigma2s: np.ndarray
    lam: np.ndarray
    theta0: np.ndarray
    tau2: float

    def copy(self) -> "HBState":
        return HBState(self.thetas.copy(), self.sigma2s.copy(), self.lam.copy(),
                       self.theta0.copy(), float(self.tau2))

    def check(self) -> None:
        if np.any(self.sigma2s <= 0) or not self.tau2 > 0:
            raise ValueError("variances must be positive")
        np.linalg.cholesky(self.lam)


@dataclass
class PosteriorDraws:
    thetas: np.ndarray
    sigma2s: np.ndarray
    lams: np.ndarray
    theta0s: np.ndarray
    tau2s: np.ndarray
    stride: int
    seed: int
    burn_in: int
    accept_rate: float
    proposal_scale: float
    assets: list = field(default_factory=list)
    scale: float = 1.0

    def __len__(self) -> int:
        return self.tau2s.shape[0]

    def state(self, j: int) -> HBState:
        return HBState(self.thetas[j], self.sigma2s[j], self.lams[j], self.theta0s[j], float(self.tau2s[j]))

    def to_trace_frame(self):
        """Long ``(iteration, parameter, value)`` table of every retained draw."""
        import pandas as pd

        N, P, m = self.thetas.shape
        its = self.burn_in + self.stride * (np.arange(N) + 1)
        blocks = []
        names = [f"theta[{i},{j}]" for i in range(P) for j in range(m)]
        blocks.append((names, self.thetas.reshape(N, P * m)))
        blocks.append(([f"sigma2[{i}]" for i in range(P)], self.sigma2s))
        blocks.append(([f"Lambda[{a},{b}]" for a in range(m) for b in range(m)], self.lams.reshape(N, m * m)))
        blocks.append(([f"theta0[{j}]" for j in range(m)], self.theta0s))
        blocks.append((["tau2"], self.tau2s[:, None]))
        frames = []
        for names, vals in blocks:
            frames.append(pd.DataFrame({
                "iteration": np.repeat(its, len(names)),
                "parameter": np.tile(names, N),
                "value": vals.reshape(-1),
            }))
        return pd.concat(frames, ignore_index=True).sort_values(["iteration"], kind="stable")


def _chol_sample(prec, rhs, z):
    """Draw ``N(prec^{-1} rhs, prec^{-1})`` for a stack of precisions."""
    try:
        L = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("conditional precision is not positive definite") from exc
    # mean = L^{-T} L^{-1} rhs ; noise = L^{-T} z
    w = np.linalg.solve(L, rhs[..., None])[..., 0]
    LT = np.swapaxes(L, -1, -2)
    return np.linalg.solve(LT, (w + z)[..., None])[..., 0]


def theta_conditional(state: HBState, design: FactorDesign, R):
    """Precision and linear term of every ``theta_i`` conditional."""
    R = np.asarray(R, float).reshape(design.n, -1)
    prior_prec = state.lam / state.tau2
    prec = design.sigma_x[None] / state.sigma2s[:, None, None] + prior_prec[None]
    rhs = (design.X.T @ R).T / state.sigma2s[:, None] + (prior_prec @ state.theta0)[None]
    return prec, rhs


def gibbs_thetas(state: HBState, prior: HBPrior, design: FactorDesign, R, rng) -> np.ndarray:
    """Joint draw of all ``theta_i`` (they are conditionally independent)."""
    prec, rhs = theta_conditional(state, design, R)
    z = rng.standard_normal(rhs.shape)
    return _chol_sample(prec, rhs, z)


def gibbs_theta_i(state: HBState, prior: HBPrior, design: FactorDesign, r_i, rng, i: int = 0) -> np.ndarray:
    sub = HBState(state.thetas[i:i + 1], state.sigma2s[i:i + 1], state.lam, state.theta0, state.tau2)
    return gibbs_thetas(sub, prior, design, np.asarray(r_i, float)[:, None], rng)[0]


def gibbs_sigma2s(state: HBState, prior: HBPrior, design: FactorDesign, R, rng) -> np.ndarray:
    """``InvGamma((nu0 + n)/2, (nu0 + rss_i)/2)`` for every asset."""
    R = np.asarray(R, float).reshape(design.n, -1)
    resid = R - design.X @ state.thetas.T
    rss = np.einsum("ij,ij->j", resid, resid)
    shape = 0.5 * (prior.nu0 + design.n)
    scale = 0.5 * (prior.nu0 + rss)
    return scale / rng.gamma(shape, size=rss.shape)


def gibbs_sigma2_i(state: HBState, prior: HBPrior, design: FactorDesign, r_i, rng, i: int = 0) -> float:
    sub = HBState(state.thetas[i:i + 1], state.sigma2s[i:i + 1], state.lam, state.theta0, state.tau2)
    return float(gibbs_sigma2s(sub, prior, design, np.asarray(r_i, float)[:, None], rng)[0])


def lambda_conditional(state: HBState, prior: HBPrior):
    """Scale matrix and degrees of freedom of the Wishart conditional of ``Lambda``."""
    d = state.thetas - state.theta0
    S = d.T @ d / state.tau2 + prior.rho * prior.R
    try:
        scale = np.linalg.inv(S)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("Wishart scale is singular") from exc
    return 0.5 * (scale + scale.T), state.thetas.shape[0] + prior.rho


def gibbs_lambda(state: HBState, prior: HBPrior, rng) -> np.ndarray:
    scale, df = lambda_conditional(state, prior)
    W = stats.wishart(df=df, scale=scale).rvs(random_state=rng)
    return np.atleast_2d(W)


def theta0_conditional(state: HBState, prior: HBPrior):
    """Mean and covariance ``V`` of the ``theta0`` conditional."""
    P = state.thetas.shape[0]
    Cinv = np.linalg.inv(prior.C)
    prec = P * state.lam / state.tau2 + Cinv
    rhs = Cinv @ prior.mu0
    if P:
        rhs = rhs + state.lam @ state.thetas.sum(axis=0) / state.tau2
    V = np.linalg.inv(prec)
    return V @ rhs, 0.5 * (V + V.T)


def gibbs_theta0(state: HBState, prior: HBPrior, rng) -> np.ndarray:
    P = state.thetas.shape[0]
    prec = P * state.lam / state.tau2 + np.linalg.inv(prior.C)
    rhs = np.linalg.solve(prior.C, prior.mu0)
    if P:
        rhs = rhs + state.lam @ state.thetas.sum(axis=0) / state.tau2
    return _chol_sample(prec, rhs, rng.standard_normal(prior.dim))


def log_tau_target(log_tau: float, quad: float, n_coef: int) -> float:
    """Log density of ``eta = log tau`` given the theta spread (up to a constant).

    Half-Cauchy prior, ``theta_i`` likelihood and the ``d tau / d eta`` Jacobian.
    """
    tau2 = np.exp(2.0 * log_tau)
    return -np.log1p(tau2) + log_tau - n_coef * log_tau - 0.5 * quad / tau2


def mh_tau(state: HBState, prior: HBPrior, proposal_scale: float, rng, proposal: float | None = None):
    """One random-walk Metropolis step on ``log tau``.

    Returns ``(tau2, accepted)``. ``proposal`` overrides the random proposal
    with an explicit value of ``log tau``.
    """
    if proposal_scale <= 0:
        raise ValueError("proposal_scale must be positive")
    d = state.thetas - state.theta0
    quad = float(np.einsum("ij,jk,ik->", d, state.lam, d))
    n_coef = d.size
    cur = 0.5 * np.log(state.tau2)
    new = cur + proposal_scale * rng.standard_normal() if proposal is None else float(proposal)
    log_ratio = log_tau_target(new, quad, n_coef) - log_tau_target(cur, quad, n_coef)
    u = rng.uniform()
    if np.log(u) < log_ratio or new == cur:
        return float(np.exp(2.0 * new)), True
    return float(state.tau2), False


def data_scale(design: FactorDesign, R) -> float:
    """Median OLS residual SD across assets, or 1 when that is degenerate."""
    if R.shape[1] == 0:
        return 1.0
    _, _, s2 = ols_estimate_panel(design, R)
    c = float(np.sqrt(np.median(s2)))
    return c if np.isfinite(c) and c > 0 else 1.0


def rescale_design(design: FactorDesign, c: float) -> FactorDesign:
    """Divide every factor column (not the intercept) by ``c``."""
    X = design.X.copy()
    X[:, 1:] /= c
    sx = X.T @ X
    return FactorDesign(X=X, sigma_x=0.5 * (sx + sx.T), k=design.k)


def initial_state(design: FactorDesign, R, prior: HBPrior) -> HBState:
    R = np.asarray(R, float).reshape(design.n, -1)
    theta, rss, s2 = ols_estimate_panel(design, R)
    floor = 1e-8 * max(float(np.var(R)), 1e-300)
    return HBState(
        thetas=theta,
        sigma2s=np.maximum(s2, floor),
        lam=np.linalg.inv(prior.R),
        theta0=theta.mean(axis=0) if theta.shape[0] else prior.mu0.copy(),
        tau2=1.0,
    )


def run_chain(R, design: FactorDesign, prior: HBPrior | None = None, iterations: int = 3000,
              burn_in: int = 1000, stride: int = 1, seed: int = 0, proposal_scale: float = 0.5,
              target_accept: float = 0.4, assets=None, init: HBState | None = None,
              standardize: bool = True) -> PosteriorDraws:
    """Systematic-scan Metropolis-within-Gibbs.

    One sweep updates every ``theta_i``, every ``s2_i``, ``Lambda``, ``theta0``
    and then ``tau``. The ``tau`` proposal scale adapts during burn-in toward
    ``target_accept`` and is frozen afterwards.

    With ``standardize`` the chain runs on returns and factors divided by a
    common scale ``c`` (the median OLS residual SD), where the unit-scale
    priors on ``s2_i`` and ``Lambda`` are weakly informative. The null point
    is unchanged by this map; draws are returned in the original units.
    ``init`` is then read in the scaled units.
    """
    if iterations <= burn_in:
        raise ValueError("iterations must exceed burn_in")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    R = np.asarray(R, float).reshape(design.n, -1)
    prior = prior or HBPrior.default(design.k)
    c = data_scale(design, R) if standardize else 1.0
    if c != 1.0:
        R = R / c
        design = rescale_design(design, c)
    rng = np.random.default_rng(seed)
    state = init.copy() if init is not None else initial_state(design, R, prior)
    P, m = state.thetas.shape

    n_keep = (iterations - burn_in) // stride
    out_theta = np.empty((n_keep, P, m))
    out_s2 = np.empty((n_keep, P))
    out_lam = np.empty((n_keep, m, m))
    out_t0 = np.empty((n_keep, m))
    out_tau2 = np.empty(n_keep)

    log_scale = np.log(proposal_scale)
    window_acc = 0
    kept_acc = 0
    j = 0
    for it in range(iterations):
        try:
            state.thetas = gibbs_thetas(state, prior, design, R, rng)
            state.sigma2s = gibbs_sigma2s(state, prior, design, R, rng)
            state.lam = gibbs_lambda(state, prior, rng)
            state.theta0 = gibbs_theta0(state, prior, rng)
            state.tau2, acc = mh_tau(state, prior, float(np.exp(log_scale)), rng)
        except (RankDeficient, np.linalg.LinAlgError) as exc:
            raise RankDeficient(f"sampler failed at iteration {it}: {exc}") from exc
        if it < burn_in:
            window_acc += acc
            if (it + 1) % 50 == 0:
                log_scale += (window_acc / 50.0 - target_accept)
                window_acc = 0
            continue
        kept_acc += acc
        if (it - burn_in + 1) % stride == 0 and j < n_keep:
            out_theta[j] = state.thetas
            out_s2[j] = state.sigma2s
            out_lam[j] = state.lam
            out_t0[j] = state.theta0
            out_tau2[j] = state.tau2
            j += 1
    if c != 1.0:
        # theta = D theta_scaled with D = diag(c, 1, ..., 1)
        out_theta[..., 0] *= c
        out_t0[:, 0] *= c
        out_s2 *= c * c
        d_inv = np.ones(m)
        d_inv[0] = 1.0 / c
        out_lam *= np.outer(d_inv, d_inv)[None]
    return PosteriorDraws(
        thetas=out_theta, sigma2s=out_s2, lams=out_lam, theta0s=out_t0, tau2s=out_tau2, scale=c,
        stride=stride, seed=seed, burn_in=burn_in,
        accept_rate=kept_acc / (iterations - burn_in), proposal_scale=float(np.exp(log_scale)),
        assets=list(assets) if assets is not None else list(range(P)),
    )


def prob_positive_alpha(draws: PosteriorDraws) -> np.ndarray:
    return np.mean(draws.thetas[:, :, 0] > 0.0, axis=0)


def hb_rank(draws: PosteriorDraws, min_draws: int = 100) -> np.ndarray:
    """Asset indices ordered by posterior ``P(alpha > 0)``, then mean alpha, then index."""
    if len(draws) < min_draws:
        raise InsufficientDraws(f"{len(draws)} retained draws, need at least {min_draws}")
    prob = prob_positive_alpha(draws)
    mean_alpha = draws.thetas[:, :, 0].mean(axis=0)
    idx = np.arange(prob.size)
    return np.lexsort((idx, -mean_alpha, -prob))


def hb_select(draws: PosteriorDraws, p_tilde: int, min_draws: int = 100) -> list:
    """Top ``p_tilde`` assets by posterior probability of a positive alpha."""
    order = hb_rank(draws, min_draws)
    if not 0 < p_tilde <= order.size:
        raise ValueError(f"p_tilde={p_tilde} outside 1..{order.size}")
    return [draws.assets[i] for i in order[:p_tilde]]
