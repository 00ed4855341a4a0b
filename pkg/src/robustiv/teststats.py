"""Test statistics for the effect of the exposure, given a candidate invalid set.

Every statistic treats the instruments in B as exogenous controls and the
complement as valid instruments:

- Anderson-Rubin: partial F test of the valid instruments against
  ``y - d*beta0``, exact under normal errors.
- TSLS Wald: squared t-ratio of the two-stage least squares estimate,
  chi-square(1) reference.
- Sargan: overidentification test of the complement's validity,
  chi-square with ``c(B^c) - 1`` degrees of freedom.
- Conditional likelihood ratio: Moreira's statistic with critical values
  simulated from the conditional null distribution given the concentration
  statistic.

All functions are pure given their inputs (the CLR draws from a generator
seeded per call), so concurrent evaluation across subsets is safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import chi_square_cdf, chi_square_quantile, f_cdf, f_quantile
from .exceptions import ConfigError, EstimationError
from .model import IVDataset, ProjectionCache, ProjectionFactory, SubsetSpec

_DEGENERATE_RTOL = 1e-14


@dataclass(frozen=True)
class TestResult:
    """Outcome of one hypothesis test.

    Attributes
    ----------
    statistic : float
        Value of the test statistic (non-negative for all four tests).
    p_value : float
        Probability in [0, 1].
    critical_value : float
        Rejection threshold at the level the test was run at.
    df : tuple of int
        Reference-distribution degrees of freedom.
    conditioning : float or None
        Concentration statistic the CLR critical value conditions on.
    """

    statistic: float
    p_value: float
    critical_value: float
    df: tuple[int, ...]
    conditioning: float | None = None


@dataclass(frozen=True)
class TSLSFit:
    """Two-stage least squares fit for one candidate invalid set.

    Attributes
    ----------
    beta_hat : float
        Point estimate of the causal effect.
    std_err : float
        Homoskedastic standard error.
    residual_variance : float
        Error-variance estimate with denominator ``n - c(B) - 1``.
    first_stage_f : float
        Partial F statistic of the valid instruments in the first stage,
        the usual instrument-strength diagnostic.
    """

    beta_hat: float
    std_err: float
    residual_variance: float
    first_stage_f: float


def ar_statistic(
    beta0: float, cache: ProjectionCache, alpha: float = 0.05
) -> TestResult:
    """Anderson-Rubin test of ``H0: beta = beta0`` given invalid set B.

    The statistic is the ratio of the mean-square explained by the valid
    instruments (after partialling out ``Z_B``) to the residual mean square,
    referred to the central F distribution with ``(L - c(B), n - L)``
    degrees of freedom.

    Raises
    ------
    EstimationError
        If the residual quadratic form vanishes (exactly collinear data).
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    num = cache.q_form(beta0)
    den = cache.r_form(beta0)
    scale = max(abs(cache.r_yy), abs(cache.r_dd), 1.0)
    if den <= scale * _DEGENERATE_RTOL:
        raise EstimationError(
            "residual quadratic form is zero; y - d*beta0 lies in the "
            "instrument column space"
        )
    stat = (num / cache.df_num) / (den / cache.df_den)
    stat = max(stat, 0.0)
    return TestResult(
        statistic=stat,
        p_value=1.0 - f_cdf(stat, cache.df_num, cache.df_den),
        critical_value=f_quantile(1.0 - alpha, cache.df_num, cache.df_den),
        df=(cache.df_num, cache.df_den),
    )


def tsls_fit_from_cache(cache: ProjectionCache) -> TSLSFit:
    """Two-stage least squares from precomputed quadratic forms.

    Identical to regressing the ``Z_B``-residualized outcome on the
    residualized exposure with the residualized complement instruments,
    because the middle projector of the cache spans exactly those
    instruments.
    """
    if cache.q_dd <= 0.0:
        raise EstimationError(
            "first stage is degenerate: fitted exposure has no variation "
            "beyond the candidate invalid instruments"
        )
    beta_hat = cache.q_yd / cache.q_dd
    # e'e with e = R_{Z_B}(y - d*beta_hat): the (q + r) quadratic form.
    ee = (
        (cache.q_yy + cache.r_yy)
        - 2.0 * beta_hat * (cache.q_yd + cache.r_yd)
        + beta_hat**2 * (cache.q_dd + cache.r_dd)
    )
    dof = cache.n - cache.subset.size - 1
    if dof <= 0:
        raise EstimationError(f"no residual degrees of freedom (n={cache.n})")
    sigma2 = max(ee, 0.0) / dof
    if cache.r_dd > 0.0:
        first_stage_f = (cache.q_dd / cache.df_num) / (cache.r_dd / cache.df_den)
    else:
        first_stage_f = np.inf  # exposure lies exactly in the instrument span
    return TSLSFit(
        beta_hat=float(beta_hat),
        std_err=float(np.sqrt(sigma2 / cache.q_dd)),
        residual_variance=float(sigma2),
        first_stage_f=float(max(first_stage_f, 0.0)),
    )


def tsls_fit(data: IVDataset, subset: SubsetSpec) -> TSLSFit:
    """Two-stage least squares with instruments ``Z_{B^c}`` and controls ``Z_B``."""
    if subset.complement_size < 1:
        raise ConfigError("at least one instrument must remain in the complement")
    return tsls_fit_from_cache(ProjectionFactory(data).cache(subset))


def wald_statistic(beta0: float, fit: TSLSFit, alpha: float = 0.05) -> TestResult:
    """Squared t-ratio of the TSLS estimate against ``beta0``, chi-square(1) reference."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    stat = ((fit.beta_hat - beta0) / fit.std_err) ** 2
    return TestResult(
        statistic=float(stat),
        p_value=1.0 - chi_square_cdf(stat, 1),
        critical_value=chi_square_quantile(1.0 - alpha, 1),
        df=(1,),
    )


def sargan_statistic(
    data_or_cache: IVDataset | ProjectionCache,
    subset: SubsetSpec | None = None,
    fit: TSLSFit | None = None,
    alpha: float = 0.05,
) -> TestResult:
    """Sargan overidentification test of ``H0: the complement is all valid``.

    The statistic is ``n`` times the share of the TSLS residual variation
    (after partialling out ``Z_B``) explained by the residualized complement
    instruments, with a chi-square ``c(B^c) - 1`` reference.

    Accepts either a dataset plus subset or a prebuilt cache; the TSLS fit
    is recomputed when not supplied.

    Raises
    ------
    EstimationError
        When ``c(B^c) < 2`` (just identified: no overidentifying
        restrictions to test).
    """
    if isinstance(data_or_cache, ProjectionCache):
        cache = data_or_cache
    else:
        if subset is None:
            raise ConfigError("subset is required when passing a dataset")
        cache = ProjectionFactory(data_or_cache).cache(subset)
    if cache.subset.complement_size < 2:
        raise EstimationError(
            "Sargan test requires at least 2 instruments in the complement "
            f"(got {cache.subset.complement_size}); the model is just identified"
        )
    if fit is None:
        fit = tsls_fit_from_cache(cache)
    bh = fit.beta_hat
    explained = max(cache.q_form(bh), 0.0)
    total = cache.q_form(bh) + cache.r_form(bh)  # e'e for Z_B-residualized e
    if total <= 0.0:
        raise EstimationError("TSLS residuals are identically zero")
    stat = cache.n * explained / total
    df = cache.subset.complement_size - 1
    return TestResult(
        statistic=float(stat),
        p_value=1.0 - chi_square_cdf(stat, df),
        critical_value=chi_square_quantile(1.0 - alpha, df),
        df=(df,),
    )


def _clr_components(cache: ProjectionCache, beta0: float) -> tuple[float, float]:
    """Moreira's LR statistic and its conditioning statistic qt.

    Built from the 2x2 cross-product matrices of (y, d) under the middle
    projector and the residual projector; the error covariance is estimated
    from the residual forms with ``n - L`` degrees of freedom.
    """
    qbar = np.array([[cache.q_yy, cache.q_yd], [cache.q_yd, cache.q_dd]])
    omega = (
        np.array([[cache.r_yy, cache.r_yd], [cache.r_yd, cache.r_dd]])
        / cache.df_den
    )
    b0 = np.array([1.0, -beta0])
    a0 = np.array([beta0, 1.0])
    try:
        omega_inv_a = np.linalg.solve(omega, a0)
    except np.linalg.LinAlgError as exc:
        raise EstimationError("singular residual covariance") from exc
    denom_s = b0 @ omega @ b0
    denom_t = a0 @ omega_inv_a
    if denom_s <= 0.0 or denom_t <= 0.0:
        raise EstimationError("degenerate residual covariance")
    ss = (b0 @ qbar @ b0) / denom_s
    tt = (omega_inv_a @ qbar @ omega_inv_a) / denom_t
    st = (b0 @ qbar @ omega_inv_a) / np.sqrt(denom_s * denom_t)
    disc = (ss + tt) ** 2 - 4.0 * (ss * tt - st**2)
    lr = 0.5 * (ss - tt + np.sqrt(max(disc, 0.0)))
    return float(max(lr, 0.0)), float(max(tt, 0.0))


def clr_conditional_draws(
    df_num: int, mc_draws: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Chi-square draws for the conditional null distribution of the CLR.

    Returns ``mc_draws`` independent pairs (chi2(1), chi2(df_num - 1));
    the same pairs can be reused across hypothesized values, which keeps
    test inversion deterministic and smooth.
    """
    if mc_draws < 1000:
        raise ConfigError(
            f"mc_draws must be >= 1000 for usable critical values, got {mc_draws}"
        )
    rng = np.random.default_rng(seed)
    q1 = rng.chisquare(1, mc_draws)
    qk = (
        rng.chisquare(df_num - 1, mc_draws)
        if df_num > 1
        else np.zeros(mc_draws)
    )
    return q1, qk


def clr_survival(
    lr: float | np.ndarray, qt: float | np.ndarray, draws: tuple[np.ndarray, np.ndarray]
) -> np.ndarray:
    """P(LR* >= lr | qt) under the conditional null, by Monte Carlo."""
    q1, qk = draws
    lr = np.atleast_1d(np.asarray(lr, dtype=float))
    qt = np.atleast_1d(np.asarray(qt, dtype=float))
    out = np.empty(lr.shape)
    for i in range(lr.size):
        t = qt.flat[i]
        lr_star = 0.5 * (
            q1 + qk - t + np.sqrt((q1 + qk + t) ** 2 - 4.0 * qk * t)
        )
        out.flat[i] = np.mean(lr_star >= lr.flat[i])
    return out


def clr_statistic(
    beta0: float,
    data_or_cache: IVDataset | ProjectionCache,
    subset: SubsetSpec | None = None,
    mc_draws: int = 10_000,
    seed: int = 0,
    alpha: float = 0.05,
) -> TestResult:
    """Conditional likelihood ratio test of ``H0: beta = beta0`` given B.

    The critical value and p-value come from ``mc_draws`` seeded draws of
    the conditional null distribution given the concentration statistic,
    so results are reproducible bit for bit from (inputs, seed). With a
    single valid instrument the statistic collapses to the Anderson-Rubin
    statistic.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if isinstance(data_or_cache, ProjectionCache):
        cache = data_or_cache
    else:
        if subset is None:
            raise ConfigError("subset is required when passing a dataset")
        cache = ProjectionFactory(data_or_cache).cache(subset)
    if cache.subset.complement_size < 1:
        raise ConfigError("at least one instrument must remain in the complement")
    lr, qt = _clr_components(cache, beta0)
    draws = clr_conditional_draws(cache.df_num, mc_draws, seed)
    p_value = float(clr_survival(lr, qt, draws)[0])
    q1, qk = draws
    lr_star = 0.5 * (
        q1 + qk - qt + np.sqrt((q1 + qk + qt) ** 2 - 4.0 * qk * qt)
    )
    crit = float(np.quantile(lr_star, 1.0 - alpha))
    return TestResult(
        statistic=lr,
        p_value=p_value,
        critical_value=crit,
        df=(cache.df_num,),
        conditioning=qt,
    )
