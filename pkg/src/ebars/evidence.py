"""Per-model least squares and the two knot log-posteriors.

Under the unit-information prior beta | sigma ~ N(0, m sigma^2 (Z'Z)^-1)
and pi(sigma) = 1/sigma, the knot posterior is

    log p(k, xi | y) = -(nu/2) log(m+1) - (m/2) log a - gamma log tau(M_k) + const,
    a = y'(I - m/(m+1) H) y = RSS + |Hy|^2 / (m+1).

The EBIC surrogate replaces (m+1)^(-nu/2) a^(-m/2) by
m^(-(nu+1)/2) (sigma_hat^2)^(-m/2) with sigma_hat^2 = RSS/m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import integrate

from .model_space import log_tau

RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ModelFit:
    """Least-squares summary of one design matrix."""

    m: int
    nu: int
    beta_hat: np.ndarray
    rss: float
    fitted_sq: float
    log_a: float
    log_sigma2: float
    rank_deficient: bool
    # Z[:, perm] = Q R; kept for coefficient draws
    R: np.ndarray | None = None
    perm: np.ndarray | None = None

    @property
    def a(self) -> float:
        return self.rss + self.fitted_sq / (self.m + 1)


def fit(Z: np.ndarray, y: np.ndarray) -> ModelFit:
    """Least squares via column-pivoted QR; flags numerically rank-deficient designs."""
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    m, nu = Z.shape
    if m <= nu:
        return ModelFit(m, nu, np.full(nu, np.nan), math.nan, math.nan, math.nan, math.nan, True)
    Q, R, perm = scipy.linalg.qr(Z, mode="economic", pivoting=True, check_finite=False)
    diag = np.abs(np.diag(R))
    if diag[0] == 0.0 or np.any(diag < RANK_TOL * diag[0]):
        return ModelFit(m, nu, np.full(nu, np.nan), math.nan, math.nan, math.nan, math.nan, True)
    qty = Q.T @ y
    bp = scipy.linalg.solve_triangular(R, qty, check_finite=False)
    beta = np.empty(nu)
    beta[perm] = bp
    resid = y - Q @ qty
    rss = float(resid @ resid)
    fitted_sq = float(qty @ qty)
    a = rss + fitted_sq / (m + 1)
    log_a = math.log(a) if a > 0 else -math.inf
    log_s2 = math.log(rss / m) if rss > 0 else -math.inf
    return ModelFit(m, nu, beta, rss, fitted_sq, log_a, log_s2, False, R, perm)


def log_posterior_exact(fitres: ModelFit, k, n, gamma: float, m: int | None = None) -> float:
    """Unnormalised exact log p(k, xi | y); -inf if rank-deficient, +inf on a perfect fit."""
    if fitres.rank_deficient:
        return -math.inf
    m = fitres.m if m is None else m
    if fitres.log_a == -math.inf:
        return math.inf
    return -0.5 * fitres.nu * math.log(m + 1) - 0.5 * m * fitres.log_a - gamma * log_tau(k, n)


def log_posterior_ebic(fitres: ModelFit, k, n, gamma: float, m: int | None = None) -> float:
    """-BIC_gamma / 2 up to a state-independent constant."""
    if fitres.rank_deficient:
        return -math.inf
    m = fitres.m if m is None else m
    if fitres.log_sigma2 == -math.inf:
        return math.inf
    return -0.5 * (fitres.nu + 1) * math.log(m) - 0.5 * m * fitres.log_sigma2 - gamma * log_tau(k, n)


def ebic(fitres: ModelFit, k, n, gamma: float) -> float:
    """BIC_gamma = -2 log L(beta_hat, sigma_hat) + (nu+1) log m + 2 gamma log tau."""
    m = fitres.m
    s2 = fitres.rss / m
    loglik = -0.5 * m * math.log(2 * math.pi * s2) - 0.5 * fitres.rss / s2
    return -2 * loglik + (fitres.nu + 1) * math.log(m) + 2 * gamma * log_tau(k, n)


def log_evidence_quadrature_oracle(Z: np.ndarray, y: np.ndarray) -> float:
    """log p(y | Z) by direct integration (test oracle, small problems only).

    The beta integral is done in closed form as the Gaussian marginal
    y | sigma ~ N(0, sigma^2 (I + m Z (Z'Z)^-1 Z')); the sigma integral
    against d sigma / sigma = d log sigma is done by adaptive quadrature.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    m, nu = Z.shape
    H = Z @ np.linalg.solve(Z.T @ Z, Z.T)
    S = np.eye(m) + m * H
    _, logdet_S = np.linalg.slogdet(S)
    q = float(y @ np.linalg.solve(S, y))

    def log_integrand(s):
        # log N(y; 0, e^{2s} S)
        return -0.5 * m * math.log(2 * math.pi) - m * s - 0.5 * logdet_S - 0.5 * q * math.exp(-2 * s)

    s_peak = 0.5 * math.log(q / m)
    c = log_integrand(s_peak)
    width = 40.0 / math.sqrt(m)
    val, _ = integrate.quad(
        lambda s: math.exp(log_integrand(s) - c),
        s_peak - width,
        s_peak + width,
        points=[s_peak],
        epsabs=0.0,
        epsrel=1e-12,
        limit=200,
    )
    return math.log(val) + c


@dataclass(frozen=True)
class CoefficientDraw:
    beta: np.ndarray
    sigma: float


def draw_beta_sigma(fitres: ModelFit, rng: np.random.Generator) -> CoefficientDraw:
    """One draw from p(beta, sigma | k, xi, y).

    sigma^2 ~ InvGamma(m/2, a/2); beta | sigma ~ N(m/(m+1) beta_hat, m/(m+1) sigma^2 (Z'Z)^-1).
    """
    if fitres.rank_deficient or fitres.R is None:
        raise ValueError("cannot draw coefficients for a rank-deficient model")
    m = fitres.m
    shrink = m / (m + 1)
    sigma2 = (fitres.a / 2.0) / rng.gamma(m / 2.0)
    z = rng.standard_normal(fitres.nu)
    wp = scipy.linalg.solve_triangular(fitres.R, z, check_finite=False)
    w = np.empty(fitres.nu)
    w[fitres.perm] = wp
    beta = shrink * fitres.beta_hat + math.sqrt(shrink * sigma2) * w
    return CoefficientDraw(beta, math.sqrt(sigma2))
