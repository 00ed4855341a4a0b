"""Probability kernels used by the test statistics and power formulas.

Central CDFs are delegated to scipy's regularized incomplete gamma/beta
functions. Noncentral chi-square and F CDFs are computed as Poisson-weighted
mixtures of central distributions, truncated once the residual Poisson tail
mass drops below ``1e-12``, so accuracy is controlled uniformly in the
noncentrality. Quantiles invert the CDFs by bracketed root-finding rather
than through closed-form approximations.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special
from scipy.optimize import brentq

from .exceptions import ConfigError

# Poisson mixture terms are kept until the two-sided tail mass is below this.
_MIXTURE_TAIL = 1e-13


@dataclass(frozen=True)
class DistParams:
    """Degrees of freedom and noncentrality of an F reference distribution.

    Parameters
    ----------
    df1 : int
        Numerator degrees of freedom, at least 1.
    df2 : int
        Denominator degrees of freedom, at least 1.
    noncentrality : float
        Noncentrality of the numerator chi-square, non-negative.
    """

    df1: int
    df2: int
    noncentrality: float = 0.0

    def __post_init__(self) -> None:
        if self.df1 < 1 or self.df2 < 1:
            raise ConfigError(
                f"degrees of freedom must be >= 1, got df1={self.df1}, df2={self.df2}"
            )
        if not np.isfinite(self.noncentrality) or self.noncentrality < 0:
            raise ConfigError(
                f"noncentrality must be finite and >= 0, got {self.noncentrality}"
            )


def normal_quantile(p: float) -> float:
    """Quantile of the standard normal distribution.

    Parameters
    ----------
    p : float
        Probability in the open interval (0, 1).

    Returns
    -------
    float
        The value z with ``Phi(z) = p``.
    """
    if not 0.0 < p < 1.0:
        raise ConfigError(f"probability must lie in (0, 1), got {p}")
    return float(special.ndtri(p))


def normal_cdf(x: float) -> float:
    """Standard normal CDF."""
    return float(special.ndtr(x))


def _poisson_log_weights(half_lambda: float) -> tuple[np.ndarray, np.ndarray]:
    """Poisson(half_lambda) indices and weights covering all but ~1e-13 tail mass."""
    if half_lambda < 40.0:
        # Small rates: start at zero, extend well past the mean.
        hi = int(np.ceil(half_lambda + 45.0 + 12.0 * np.sqrt(half_lambda + 1.0)))
        ks = np.arange(0, hi + 1)
    else:
        # Large rates: a two-sided window around the mode avoids summing
        # thousands of negligible terms.
        width = 12.0 * np.sqrt(half_lambda) + 30.0
        lo = max(0, int(np.floor(half_lambda - width)))
        hi = int(np.ceil(half_lambda + width))
        ks = np.arange(lo, hi + 1)
    logw = ks * np.log(half_lambda) - half_lambda - special.gammaln(ks + 1.0)
    return ks, np.exp(logw)


def chi_square_cdf(x: float, df: int, noncentrality: float = 0.0) -> float:
    """CDF of the (noncentral) chi-square distribution.

    The noncentral case is the Poisson(``noncentrality/2``)-weighted mixture
    of central chi-square CDFs with ``df + 2k`` degrees of freedom.

    Parameters
    ----------
    x : float
        Evaluation point, non-negative.
    df : int
        Degrees of freedom, at least 1.
    noncentrality : float
        Noncentrality parameter, non-negative. Zero gives the central CDF.
    """
    if df < 1:
        raise ConfigError(f"df must be >= 1, got {df}")
    if not np.isfinite(x) or x < 0:
        raise ConfigError(f"chi-square CDF requires x >= 0, got {x}")
    if not np.isfinite(noncentrality) or noncentrality < 0:
        raise ConfigError(f"noncentrality must be >= 0, got {noncentrality}")
    if x == 0.0:
        return 0.0
    if noncentrality == 0.0:
        return float(special.gammainc(df / 2.0, x / 2.0))
    ks, w = _poisson_log_weights(noncentrality / 2.0)
    terms = special.gammainc(df / 2.0 + ks, x / 2.0)
    return float(min(1.0, w @ terms))


def f_cdf(x: float, df1: int, df2: int) -> float:
    """Central F CDF via the regularized incomplete beta function."""
    if df1 < 1 or df2 < 1:
        raise ConfigError(f"degrees of freedom must be >= 1, got ({df1}, {df2})")
    if not np.isfinite(x):
        raise ConfigError(f"F CDF requires finite x, got {x}")
    if x <= 0.0:
        return 0.0
    u = df1 * x / (df1 * x + df2)
    return float(special.betainc(df1 / 2.0, df2 / 2.0, u))


def noncentral_f_cdf(x: float, params: DistParams) -> float:
    """CDF of the noncentral F distribution.

    Computed as a Poisson mixture of regularized incomplete beta terms;
    the gamma factors are evaluated in log space so large degrees of freedom
    and large noncentralities do not overflow. With zero noncentrality this
    reduces exactly to :func:`f_cdf`.

    Parameters
    ----------
    x : float
        Evaluation point, non-negative.
    params : DistParams
        Degrees of freedom and noncentrality.
    """
    if not np.isfinite(x) or x < 0:
        raise ConfigError(f"F CDF requires x >= 0, got {x}")
    if x == 0.0:
        return 0.0
    df1, df2, lam = params.df1, params.df2, params.noncentrality
    if lam == 0.0:
        return f_cdf(x, df1, df2)
    u = df1 * x / (df1 * x + df2)
    ks, w = _poisson_log_weights(lam / 2.0)
    terms = special.betainc(df1 / 2.0 + ks, df2 / 2.0, u)
    return float(min(1.0, w @ terms))


def _invert_monotone_cdf(cdf, p: float, hi0: float = 1.0) -> float:
    """Solve ``cdf(x) = p`` by doubling the bracket and running Brent's method."""
    hi = hi0
    for _ in range(2000):
        if cdf(hi) >= p:
            break
        hi *= 2.0
    else:  # pragma: no cover - CDFs reach 1 long before this
        raise ArithmeticError("failed to bracket quantile")
    return float(brentq(lambda t: cdf(t) - p, 0.0, hi, xtol=1e-14, rtol=8.9e-16))


@lru_cache(maxsize=4096)
def f_quantile(p: float, df1: int, df2: int) -> float:
    """Quantile of the central F distribution.

    Parameters
    ----------
    p : float
        Probability in (0, 1).
    df1, df2 : int
        Degrees of freedom.

    Returns
    -------
    float
        x such that ``f_cdf(x, df1, df2) = p`` to relative error <= 1e-8.
    """
    if not 0.0 < p < 1.0:
        raise ConfigError(f"probability must lie in (0, 1), got {p}")
    if df1 < 1 or df2 < 1:
        raise ConfigError(f"degrees of freedom must be >= 1, got ({df1}, {df2})")
    return _invert_monotone_cdf(lambda t: f_cdf(t, df1, df2), p)


@lru_cache(maxsize=4096)
def chi_square_quantile(p: float, df: int) -> float:
    """Quantile of the central chi-square distribution, by the same bracketed inversion."""
    if not 0.0 < p < 1.0:
        raise ConfigError(f"probability must lie in (0, 1), got {p}")
    if df < 1:
        raise ConfigError(f"df must be >= 1, got {df}")
    return _invert_monotone_cdf(lambda t: chi_square_cdf(t, df), p, hi0=float(df))
