"""Test inversion: the set of hypothesized effects a test does not reject.

The Anderson-Rubin acceptance region is solved in closed form (the statistic
is a ratio of quadratics in the hypothesized value, so the region is a
quadratic inequality with Fieller geometry: an interval, a complement of an
interval, the whole line, or empty). The Wald region is the familiar
symmetric interval. The conditional likelihood ratio region is found on a
grid with bisection-refined endpoints. A generic grid inverter doubles as
the testing oracle for the closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .distributions import f_quantile, normal_quantile
from .exceptions import ConfigError
from .intervals import RealIntervalSet
from .model import IVDataset, ProjectionCache, ProjectionFactory, SubsetSpec
from .teststats import (
    TSLSFit,
    _clr_components,
    clr_conditional_draws,
    clr_survival,
    tsls_fit_from_cache,
)

# A leading quadratic coefficient below this fraction of the coefficient
# scale is treated as zero, turning the inequality into a linear one.
_QUAD_DEGENERACY_RTOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Uniform evaluation grid with finite bounds.

    Parameters
    ----------
    lo, hi : float
        Finite grid bounds with ``lo < hi``.
    step : float
        Positive spacing; the grid has ``round((hi - lo)/step) + 1`` points
        and always includes both bounds.
    """

    lo: float
    hi: float
    step: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ConfigError("grid bounds must be finite")
        if self.hi <= self.lo:
            raise ConfigError(f"grid upper bound {self.hi} must exceed {self.lo}")
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ConfigError(f"grid step must be positive, got {self.step}")

    @property
    def n_points(self) -> int:
        return int(round((self.hi - self.lo) / self.step)) + 1

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_points)


def _solve_quadratic_leq(a: float, b_half: float, c: float) -> RealIntervalSet:
    """Solution set of ``a*t^2 - 2*b_half*t + c <= 0`` over the reals."""
    scale = max(abs(a), abs(b_half), abs(c))
    if scale == 0.0:
        return RealIntervalSet.whole_line()
    if abs(a) <= _QUAD_DEGENERACY_RTOL * scale:
        # Linear: -2*b_half*t + c <= 0.
        if abs(b_half) <= _QUAD_DEGENERACY_RTOL * scale:
            return (
                RealIntervalSet.whole_line()
                if c <= 0.0
                else RealIntervalSet.empty()
            )
        bound = c / (2.0 * b_half)
        if b_half > 0:
            return RealIntervalSet.from_intervals([(bound, math.inf)])
        return RealIntervalSet.from_intervals([(-math.inf, bound)])
    disc = b_half * b_half - a * c
    if a > 0:
        if disc < 0:
            return RealIntervalSet.empty()
        root = math.sqrt(disc)
        return RealIntervalSet.from_intervals(
            [((b_half - root) / a, (b_half + root) / a)]
        )
    if disc < 0:
        return RealIntervalSet.whole_line()
    root = math.sqrt(disc)
    r1, r2 = sorted(((b_half - root) / a, (b_half + root) / a))
    return RealIntervalSet.from_intervals(
        [(-math.inf, r1), (r2, math.inf)]
    )


def invert_ar(cache: ProjectionCache, alpha: float) -> RealIntervalSet:
    """Closed-form Anderson-Rubin confidence set at level ``1 - alpha``.

    Solves ``AR(beta0) <= q`` exactly, so unbounded and empty regions are
    detected without any grid.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    q = f_quantile(1.0 - alpha, cache.df_num, cache.df_den)
    qs = q * cache.df_num / cache.df_den
    return _solve_quadratic_leq(
        cache.q_dd - qs * cache.r_dd,
        cache.q_yd - qs * cache.r_yd,
        cache.q_yy - qs * cache.r_yy,
    )


def invert_wald(fit: TSLSFit, alpha: float) -> RealIntervalSet:
    """Symmetric Wald interval around the TSLS estimate."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    z = normal_quantile(1.0 - alpha / 2.0)
    return RealIntervalSet.from_intervals(
        [(fit.beta_hat - z * fit.std_err, fit.beta_hat + z * fit.std_err)]
    )


def default_clr_grid(fit: TSLSFit, half_width_se: float = 20.0, n_points: int = 4001) -> GridSpec:
    """Default CLR search grid: centered on the subset's TSLS estimate.

    Half-width ``half_width_se`` standard errors wide, which comfortably
    brackets the acceptance region whenever the instruments carry signal.
    """
    half = half_width_se * fit.std_err
    step = 2.0 * half / (n_points - 1)
    return GridSpec(lo=fit.beta_hat - half, hi=fit.beta_hat + half, step=step)


def invert_clr(
    data_or_cache: IVDataset | ProjectionCache,
    subset: SubsetSpec | None = None,
    alpha: float = 0.05,
    grid: GridSpec | None = None,
    mc_draws: int = 10_000,
    seed: int = 0,
    refine_tol: float = 1e-6,
) -> RealIntervalSet:
    """Conditional likelihood ratio confidence set by grid search.

    The acceptance region is evaluated on ``grid`` (default:
    :func:`default_clr_grid`), accepted runs are merged, and each endpoint
    is refined by bisection between the adjacent accept/reject grid points.
    If an outermost grid point accepts, that side is reported unbounded
    (the region may extend past the grid, so the endpoint is conservatively
    set to the corresponding infinity).

    One set of conditional-null draws is shared across the whole grid,
    which makes the returned set deterministic in (inputs, seed).
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if isinstance(data_or_cache, ProjectionCache):
        cache = data_or_cache
    else:
        if subset is None:
            raise ConfigError("subset is required when passing a dataset")
        cache = ProjectionFactory(data_or_cache).cache(subset)
    if grid is None:
        grid = default_clr_grid(tsls_fit_from_cache(cache))
    draws = clr_conditional_draws(cache.df_num, mc_draws, seed)

    def accepts(beta0: float) -> bool:
        lr, qt = _clr_components(cache, beta0)
        return bool(clr_survival(lr, qt, draws)[0] >= alpha)

    values = grid.values()
    acc = np.fromiter((accepts(b) for b in values), dtype=bool, count=values.size)
    if not acc.any():
        return RealIntervalSet.empty()

    def refine(lo: float, hi: float, lo_accepts: bool) -> float:
        # Invariant: exactly one of (lo, hi) accepts.
        while hi - lo > refine_tol:
            mid = 0.5 * (lo + hi)
            if accepts(mid) == lo_accepts:
                lo = mid
            else:
                hi = mid
        return hi if lo_accepts else lo

    intervals = []
    i = 0
    m = values.size
    while i < m:
        if not acc[i]:
            i += 1
            continue
        j = i
        while j + 1 < m and acc[j + 1]:
            j += 1
        if i == 0:
            left = -math.inf
        else:
            left = refine(values[i - 1], values[i], lo_accepts=False)
        if j == m - 1:
            right = math.inf
        else:
            right = refine(values[j], values[j + 1], lo_accepts=True)
        intervals.append((left, right))
        i = j + 1
    return RealIntervalSet.from_intervals(intervals)


def grid_invert(
    test: Callable[[float], float], alpha: float, grid: GridSpec
) -> RealIntervalSet:
    """Accept set of an arbitrary test on a grid: points with p-value >= alpha.

    ``test`` maps a hypothesized value to a p-value. Consecutive accepted
    points are merged into closed intervals spanning from the first to the
    last accepted point; an accepted boundary point marks that side as
    unbounded. This is the generic oracle the closed-form inverters are
    checked against.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    values = grid.values()
    acc = np.fromiter((test(b) >= alpha for b in values), dtype=bool, count=values.size)
    intervals = []
    i = 0
    m = values.size
    while i < m:
        if not acc[i]:
            i += 1
            continue
        j = i
        while j + 1 < m and acc[j + 1]:
            j += 1
        left = -math.inf if i == 0 else float(values[i])
        right = math.inf if j == m - 1 else float(values[j])
        intervals.append((left, right))
        i = j + 1
    return RealIntervalSet.from_intervals(intervals)
