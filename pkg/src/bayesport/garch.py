"""GARCH(1,1) by Gaussian quasi-maximum likelihood.

Model: ``r_t = mu + e_t``, ``h_t = omega + a e_{t-1}^2 + b h_{t-1}`` with
``h_1`` fixed at the sample variance. The optimizer works on returns scaled
to unit variance and on an unconstrained reparametrization

    omega = exp(w),  a + b = expit(u),  a / (a + b) = expit(v)

so that ``omega > 0`` and ``0 <= a, b``, ``a + b < 1`` hold at every trial point.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize, signal
from scipy.special import expit, logit

from .errors import NonConvergence

log = logging.getLogger(__name__)

_LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GarchFit:
    omega: float
    a: float
    b: float
    mu: float
    cond_var: np.ndarray
    loglik: float
    se: np.ndarray | None = None  # (mu, omega, a, b)
    converged: bool = True

    def __post_init__(self):
        if self.converged and not (self.omega > 0 and self.a >= 0 and self.b >= 0 and self.a + self.b < 1):
            raise ValueError("GARCH parameters violate positivity or stationarity")

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.a - self.b)


def conditional_variance(eps: np.ndarray, omega: float, a: float, b: float, h1: float) -> np.ndarray:
    """Run the variance recursion; ``h_1 = h1``."""
    x = np.empty_like(eps)
    x[0] = h1
    x[1:] = omega + a * eps[:-1] ** 2
    # h_t - b h_{t-1} = x_t is a first-order IIR filter.
    return signal.lfilter([1.0], [1.0, -b], x)


def _nll(params, y, h1):
    mu, omega, a, b = params
    eps = y - mu
    h = conditional_variance(eps, omega, a, b, h1)
    if np.any(h <= 0) or not np.all(np.isfinite(h)):
        return np.inf
    return 0.5 * np.sum(_LOG2PI + np.log(h) + eps**2 / h)


def _unpack(z):
    mu, w, u, v = z
    pers = expit(u)
    share = expit(v)
    return np.array([mu, np.exp(w), pers * share, pers * (1.0 - share)])


def _hessian(f, x, rel=1e-4):
    x = np.asarray(x, float)
    k = x.size
    h = rel * np.maximum(np.abs(x), 1e-3)
    H = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            ei = np.zeros(k)
            ej = np.zeros(k)
            ei[i] = h[i]
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4.0 * h[i] * h[j])
    return H


def garch_fit(returns, starts=None, min_obs: int = 50, tol: float = 1e-8) -> GarchFit:
    """Fit GARCH(1,1) by multi-start quasi-maximum likelihood.

    Parameters
    ----------
    returns : array_like
        Daily returns.
    starts : sequence of (a, b) pairs, optional
        Starting points for the ARCH and GARCH coefficients; omega starts at
        the value that matches the sample variance.

    Raises
    ------
    NonConvergence
        Too few observations, a degenerate series, or no start converged to
        a stationary optimum.
    """
    r = np.asarray(returns, float).ravel()
    r = r[np.isfinite(r)]
    if r.size < min_obs:
        raise NonConvergence(f"need at least {min_obs} observations, got {r.size}")
    scale = r.std()
    # Rounding noise on a constant series is not variance.
    if not scale > 1e-12 * max(abs(r.mean()), 1e-300):
        raise NonConvergence("returns have zero variance")
    y = (r - r.mean()) / scale
    h1 = 1.0  # sample variance of y
    starts = starts or [(0.05, 0.90), (0.10, 0.80), (0.02, 0.97), (0.20, 0.50)]

    best = None
    for a0, b0 in starts:
        z0 = np.array([0.0, np.log(1.0 - a0 - b0), logit(a0 + b0), logit(a0 / (a0 + b0))])
        res = optimize.minimize(lambda z: _nll(_unpack(z), y, h1), z0, method="BFGS",
                                options=dict(gtol=1e-6, maxiter=2000))
        if not np.isfinite(res.fun):
            continue
        # Polish in the natural parametrization; stays interior for stationary fits.
        res2 = optimize.minimize(lambda p: _nll(p, y, h1), _unpack(res.x), method="Nelder-Mead",
                                 options=dict(xatol=tol, fatol=tol, maxiter=4000))
        p = res2.x if res2.fun <= res.fun and _stationary(res2.x) else _unpack(res.x)
        f = min(res2.fun, res.fun) if _stationary(res2.x) else res.fun
        if _stationary(p) and (best is None or f < best[1]):
            best = (p, f)
    if best is None:
        raise NonConvergence("no start reached a stationary optimum")

    p, f = best
    se = None
    try:
        H = _hessian(lambda q: _nll(q, y, h1), p)
        cov = np.linalg.inv(H)
        if np.all(np.diag(cov) > 0):
            se = np.sqrt(np.diag(cov)) * np.array([scale, scale**2, 1.0, 1.0])
    except np.linalg.LinAlgError:
        log.warning("GARCH Hessian is singular; standard errors unavailable")
    mu = r.mean() + scale * p[0]
    omega = p[1] * scale**2
    h = conditional_variance(r - mu, omega, p[2], p[3], scale**2)
    loglik = -f - r.size * np.log(scale)
    return GarchFit(omega=float(omega), a=float(p[2]), b=float(p[3]), mu=float(mu), cond_var=h,
                    loglik=float(loglik), se=se)


def _stationary(p) -> bool:
    _, omega, a, b = p
    return bool(omega > 0 and a >= 0 and b >= 0 and a + b < 1)


def garch_or_sample(returns, **kw) -> GarchFit:
    """:func:`garch_fit`, falling back to a constant sample variance on failure."""
    r = np.asarray(returns, float).ravel()
    try:
        return garch_fit(r, **kw)
    except NonConvergence as exc:
        log.warning("GARCH fit failed (%s); using the sample variance", exc)
        var = float(r.var()) if r.size else 0.0
        if var <= 1e-24 * (float(r.mean()) ** 2 if r.size else 0.0):
            var = 0.0
        return GarchFit(omega=var, a=0.0, b=0.0, mu=float(r.mean()) if r.size else 0.0,
                        cond_var=np.full(r.size, var), loglik=float("nan"), converged=False)


def simulate_garch(n: int, omega: float, a: float, b: float, mu: float = 0.0, rng=None, burn: int = 500
                   ) -> np.ndarray:
    """Gaussian GARCH(1,1) sample path, started from the unconditional variance."""
    rng = np.random.default_rng(rng)
    z = rng.standard_normal(n + burn)
    h = omega / (1.0 - a - b)
    out = np.empty(n + burn)
    e_prev = 0.0
    for t in range(n + burn):
        h = omega + a * e_prev**2 + b * h if t else h
        e_prev = np.sqrt(h) * z[t]
        out[t] = e_prev
    return mu + out[burn:]
