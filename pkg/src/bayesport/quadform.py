"""Distribution of positively weighted sums of independent chi-square(1) variables.

``qf_cdf`` inverts the characteristic function with Imhof's formula

    P(Q <= x) = 1/2 - (1/pi) * int_0^inf sin(theta(u)) / (u rho(u)) du
    theta(u)  = 1/2 sum_j arctan(l_j u) - x u / 2
    rho(u)    = prod_j (1 + l_j^2 u^2)^(1/4)

The integral is split at a cut point ``U``. The body ``[0, U]`` is handled by
adaptive quadrature; on the tail the phase is written as a slowly varying
part plus the pure oscillation ``x u / 2`` so QUADPACK's Fourier-integral
routine can take it to infinity.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .errors import IntegrationFailure, NumericalRange

_DROP = 1e-12


@dataclass(frozen=True)
class WeightedChiSquare:
    weights: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if w.ndim != 1 or w.size < 1:
            raise ValueError("need at least one weight")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be finite and > 0")
        object.__setattr__(self, "weights", w)

    @property
    def mean(self) -> float:
        return float(self.weights.sum())


def _as_weights(dist) -> np.ndarray:
    if isinstance(dist, WeightedChiSquare):
        return dist.weights
    return WeightedChiSquare(dist).weights


def qf_cdf(dist, c2: float, tol: float = 1e-6) -> float:
    """``P(sum_j l_j chi2_j <= c2)`` to absolute accuracy ``tol``.

    Raises
    ------
    IntegrationFailure
        If QUADPACK's error estimate exceeds ``tol``.
    """
    lam = _as_weights(dist)
    c2 = float(c2)
    if c2 <= 0.0:
        return 0.0
    if not np.isfinite(c2):
        return 1.0
    lam = lam[lam > _DROP * lam.max()]
    # P(sum l chi2 <= x) is invariant under (l, x) -> (l/s, x/s).
    s = lam.max()
    lam = lam / s
    x = c2 / s
    m = lam.size
    omega = 0.5 * x

    def phase(u):
        return 0.5 * np.sum(np.arctan(lam * u))

    def amp(u):
        return u * np.prod((1.0 + (lam * u) ** 2) ** 0.25)

    def body(u):
        if u == 0.0:
            return 0.5 * (lam.sum() - x)
        return np.sin(phase(u) - omega * u) / amp(u)

    # Past U the phase is split into a smooth part and the pure oscillation
    # w*u, which QUADPACK's Fourier routine carries to infinity. Before U
    # there are at most four oscillations, but the integrand can decay over
    # many decades, so [1, U] is integrated on a log scale.
    U = 8.0 * np.pi / omega
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if U <= 1.0:
            head, err_head = integrate.quad(body, 0.0, U, limit=200, epsabs=tol * 1e-2, epsrel=0.0)
        else:
            h1, e1 = integrate.quad(body, 0.0, 1.0, limit=200, epsabs=tol * 1e-2, epsrel=0.0)
            h2, e2 = integrate.quad(
                lambda t: body(np.exp(t)) * np.exp(t), 0.0, np.log(U),
                limit=500, epsabs=tol * 1e-2, epsrel=0.0,
            )
            head, err_head = h1 + h2, e1 + e2
        # sin(a - w u) = sin(a) cos(w u) - cos(a) sin(w u)
        t_cos, err_cos = integrate.quad(
            lambda u: np.sin(phase(u)) / amp(u), U, np.inf, weight="cos", wvar=omega, limlst=200
        )
        t_sin, err_sin = integrate.quad(
            lambda u: np.cos(phase(u)) / amp(u), U, np.inf, weight="sin", wvar=omega, limlst=200
        )
    integral = head + t_cos - t_sin
    err = (err_head + err_cos + err_sin) / np.pi
    if not np.isfinite(integral) or err > tol:
        raise IntegrationFailure(
            f"Imhof integral did not reach tolerance {tol:g} (error estimate {err:.3g}, m={m})"
        )
    p = 0.5 - integral / np.pi
    return float(min(1.0, max(0.0, p)))


def qf_sf(dist, c2: float, tol: float = 1e-6) -> float:
    return 1.0 - qf_cdf(dist, c2, tol=tol)


def qf_cdf_mc(dist, c2: float, draws: int = 1_000_000, seed: int = 0, chunk: int = 1_000_000) -> float:
    """Monte Carlo estimate of the same probability; deterministic given ``seed``."""
    lam = _as_weights(dist)
    if draws < 1:
        raise ValueError("draws must be >= 1")
    if c2 <= 0:
        return 0.0
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < draws:
        size = min(chunk, draws - done)
        z = rng.standard_normal((size, lam.size))
        hits += int(np.count_nonzero((z * z) @ lam <= c2))
        done += size
    return hits / draws


def eigen_weights(lambda_n, sigma_x, sigma2: float, tol: float = 1e-10) -> np.ndarray:
    """Nonzero eigenvalues of ``Q = (X/s) Lambda_n^{-1} (X/s)^T``, ascending.

    They coincide with the eigenvalues of the small matrix
    ``Lambda_n^{-1} Sigma_X / s^2``, obtained here as a symmetric-definite
    generalized eigenproblem.
    """
    lambda_n = np.asarray(lambda_n, dtype=float)
    sigma_x = np.asarray(sigma_x, dtype=float)
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    lam = linalg.eigh(sigma_x / sigma2, lambda_n, eigvals_only=True)
    if np.any(lam <= -tol) or np.any(lam >= 1.0 + tol):
        raise NumericalRange(f"eigenweights {lam} outside (0, 1); inputs are inconsistent")
    return np.clip(lam, np.finfo(float).tiny, np.nextafter(1.0, 0.0))


def eigen_weights_batch(lambda0, sigma_x, sigma2s) -> np.ndarray:
    """Eigenweights for many residual variances sharing one design.

    Uses ``Lambda_n = Lambda0 + Sigma_X / s^2`` for each ``s^2`` in ``sigma2s``
    and returns an array of shape ``(len(sigma2s), k+1)``.
    """
    sigma2s = np.atleast_1d(np.asarray(sigma2s, dtype=float))
    B = sigma_x[None, :, :] / sigma2s[:, None, None]
    L = np.linalg.cholesky(lambda0[None, :, :] + B)
    # eig(L^{-1} B L^{-T}) == eig(Lambda_n^{-1} B)
    Y = np.linalg.solve(L, B)
    M = np.linalg.solve(L, np.swapaxes(Y, 1, 2))
    M = 0.5 * (M + np.swapaxes(M, 1, 2))
    lam = np.linalg.eigvalsh(M)
    return np.clip(lam, np.finfo(float).tiny, np.nextafter(1.0, 0.0))
