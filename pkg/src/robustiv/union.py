"""Robust confidence sets: unions of per-subset confidence sets.

Under the assumption that fewer than U of the L candidate instruments are
invalid, uniting the level-(1-alpha) inverted sets over every candidate
invalid set of size U-1 yields a set with at least 1-alpha coverage, no
matter which instruments are actually invalid. A Sargan pretest variant
screens out subsets whose complement already shows evidence of invalidity,
spending alpha1 of the error budget on the screen and alpha2 = alpha -
alpha1 on each surviving inversion. Sweeping U from 1 upward turns the
procedure into a sensitivity analysis: the smallest U at which the set
reaches the null value measures how robust a finding is to invalid
instruments.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

from .exceptions import ConfigError
from .intervals import RealIntervalSet
from .inversion import GridSpec, default_clr_grid, invert_ar, invert_clr, invert_wald
from .model import (
    IVDataset,
    ProjectionFactory,
    SubsetSpec,
    enumerate_subsets,
)
from .teststats import TestResult, sargan_statistic, tsls_fit_from_cache

TESTS = ("ar", "tsls", "clr")


@dataclass(frozen=True)
class AnalysisConfig:
    """Settings for one robust confidence set.

    Parameters
    ----------
    u : int
        Invalidity bound: strictly fewer than ``u`` instruments are assumed
        invalid. ``u = 1`` is the classical all-valid analysis.
    alpha : float
        Total miscoverage budget.
    test : {"ar", "tsls", "clr"}
        Test statistic to invert per subset.
    pretest : bool
        Screen subsets with a Sargan test before inverting.
    alpha1, alpha2 : float, optional
        Pretest level and inversion level; must sum to ``alpha``. Defaults
        to the (0.2, 0.8) split of ``alpha``, i.e. 0.01/0.04 at
        ``alpha = 0.05``. Ignored unless ``pretest`` is set.
    grid : GridSpec, optional
        CLR inversion grid; default is per-subset, centered at the TSLS
        estimate with half-width 20 standard errors and 4001 points.
    mc_draws : int
        Draws for CLR conditional critical values.
    seed : int
        Seed for CLR draws (keyed per subset, so results do not depend on
        evaluation order).
    """

    u: int = 1
    alpha: float = 0.05
    test: str = "ar"
    pretest: bool = False
    alpha1: float | None = None
    alpha2: float | None = None
    grid: GridSpec | None = None
    mc_draws: int = 10_000
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.test not in TESTS:
            raise ConfigError(f"test must be one of {TESTS}, got {self.test!r}")
        if self.u < 1:
            raise ConfigError(f"u must be >= 1, got {self.u}")
        if self.pretest:
            a1, a2 = self.split_levels()
            if a1 <= 0 or a2 <= 0:
                raise ConfigError(
                    f"pretest split must be positive, got alpha1={a1}, alpha2={a2}"
                )
            if abs(a1 + a2 - self.alpha) > 1e-12:
                raise ConfigError(
                    f"alpha1 + alpha2 must equal alpha: {a1} + {a2} != {self.alpha}"
                )

    def split_levels(self) -> tuple[float, float]:
        """Resolved (alpha1, alpha2) with the defaults filled in."""
        if self.alpha1 is None and self.alpha2 is None:
            a1 = 0.2 * self.alpha
            return a1, self.alpha - a1
        if self.alpha1 is not None and self.alpha2 is not None:
            return self.alpha1, self.alpha2
        if self.alpha1 is not None:
            return self.alpha1, self.alpha - self.alpha1
        assert self.alpha2 is not None
        return self.alpha - self.alpha2, self.alpha2


@dataclass(frozen=True)
class SubsetRecord:
    """Per-subset diagnostics retained for audit and verbose reporting."""

    subset: SubsetSpec
    interval: RealIntervalSet
    included: bool
    pretest: TestResult | None = None


@dataclass(frozen=True)
class RobustCIReport:
    """A robust confidence set plus everything needed to audit it.

    The ``interval_set`` always equals the union of the intervals of the
    included per-subset records.
    """

    interval_set: RealIntervalSet
    records: tuple[SubsetRecord, ...]
    u: int
    alpha: float
    test: str
    pretest: str | None = None
    alpha1: float | None = None
    alpha2: float = 0.05

    def recompute_union(self) -> RealIntervalSet:
        """Re-derive the union from the included records (audit helper)."""
        out = RealIntervalSet.empty()
        for rec in self.records:
            if rec.included:
                out = out | rec.interval
        return out


def _invert_subset(
    factory: ProjectionFactory,
    cache,
    config: AnalysisConfig,
    level: float,
    subset_rank: int,
) -> RealIntervalSet:
    if config.test == "ar":
        return invert_ar(cache, level)
    if config.test == "tsls":
        return invert_wald(tsls_fit_from_cache(cache), level)
    grid = config.grid or default_clr_grid(tsls_fit_from_cache(cache))
    # Seed keyed by the subset's enumeration rank: deterministic and
    # independent of evaluation order.
    return invert_clr(
        cache,
        alpha=level,
        grid=grid,
        mc_draws=config.mc_draws,
        seed=(config.seed, subset_rank),
    )


def robust_ci(data: IVDataset, config: AnalysisConfig) -> RobustCIReport:
    """Union of per-subset confidence sets over all B with ``c(B) = u - 1``.

    With ``u = 1`` this is the single classical set treating every
    instrument as valid. The result has at least ``1 - alpha`` coverage
    whenever fewer than ``u`` instruments are invalid, for any per-subset
    test whose size is controlled when B contains all invalid instruments.

    Parameters
    ----------
    data : IVDataset
        Validated dataset; covariates are residualized out internally.
    config : AnalysisConfig
        ``config.pretest`` is ignored here; see :func:`robust_ci_pretest`.
    """
    factory = ProjectionFactory(data)
    L = factory.n_instruments
    if not 1 <= config.u <= L:
        raise ConfigError(f"u must lie in [1, L] = [1, {L}], got {config.u}")
    subsets = list(enumerate_subsets(L, config.u - 1))
    caches = factory.caches(subsets)
    records = []
    union = RealIntervalSet.empty()
    for rank, cache in enumerate(caches):
        interval = _invert_subset(factory, cache, config, config.alpha, rank)
        records.append(
            SubsetRecord(subset=cache.subset, interval=interval, included=True)
        )
        union = union | interval
    return RobustCIReport(
        interval_set=union,
        records=tuple(records),
        u=config.u,
        alpha=config.alpha,
        test=config.test,
        pretest=None,
        alpha1=None,
        alpha2=config.alpha,
    )


def robust_ci_pretest(data: IVDataset, config: AnalysisConfig) -> RobustCIReport:
    """Sargan-screened union: invert at level alpha2 only where the pretest passes.

    Each subset's complement is Sargan-tested at level alpha1; subsets whose
    complement shows invalidity are dropped from the union. Coverage is at
    least ``1 - alpha1 - alpha2`` whenever fewer than ``u`` instruments are
    invalid. Requires ``c(B^c) = L - u + 1 >= 2`` so the pretest has
    overidentifying restrictions to work with.

    An all-rejected pretest yields an empty set with a warning: legitimate
    (probability at most alpha under a correct invalidity bound) but worth
    treating as evidence against the assumed bound.
    """
    factory = ProjectionFactory(data)
    L = factory.n_instruments
    if not 1 <= config.u <= L:
        raise ConfigError(f"u must lie in [1, L] = [1, {L}], got {config.u}")
    if L - config.u + 1 < 2:
        raise ConfigError(
            f"pretest infeasible: c(B^c) = L - u + 1 = {L - config.u + 1} < 2; "
            "use robust_ci without a pretest"
        )
    alpha1, alpha2 = config.split_levels()
    subsets = list(enumerate_subsets(L, config.u - 1))
    caches = factory.caches(subsets)
    records = []
    union = RealIntervalSet.empty()
    any_included = False
    for rank, cache in enumerate(caches):
        pre = sargan_statistic(cache, alpha=alpha1)
        included = pre.statistic <= pre.critical_value
        if included:
            interval = _invert_subset(factory, cache, config, alpha2, rank)
            union = union | interval
            any_included = True
        else:
            interval = RealIntervalSet.empty()
        records.append(
            SubsetRecord(
                subset=cache.subset,
                interval=interval,
                included=included,
                pretest=pre,
            )
        )
    if not any_included:
        warnings.warn(
            "all pretests rejected: the confidence set is empty, which "
            "suggests more instruments are invalid than the bound u allows",
            stacklevel=2,
        )
    return RobustCIReport(
        interval_set=union,
        records=tuple(records),
        u=config.u,
        alpha=config.alpha,
        test=config.test,
        pretest="sargan",
        alpha1=alpha1,
        alpha2=alpha2,
    )


@dataclass(frozen=True)
class SensitivityResult:
    """U-sweep of robust confidence sets.

    ``threshold_u`` is the smallest swept bound whose set contains
    ``null_value``, or None when the conclusion survives the entire sweep.
    """

    reports: tuple[RobustCIReport, ...]
    u_values: tuple[int, ...]
    contains_null: tuple[bool, ...]
    null_value: float
    threshold_u: int | None = field(default=None)

    def summary_rows(self) -> list[dict]:
        rows = []
        for u, rep, has0 in zip(self.u_values, self.reports, self.contains_null):
            rows.append(
                {
                    "u": u,
                    "interval_set": rep.interval_set,
                    "length": rep.interval_set.total_length,
                    "contains_null": has0,
                }
            )
        return rows


def sensitivity_sweep(
    data: IVDataset,
    config: AnalysisConfig,
    u_values: Sequence[int],
    null_value: float = 0.0,
) -> SensitivityResult:
    """Run the robust procedure at each invalidity bound in ``u_values``.

    Flags, per bound, whether the set contains ``null_value``; the smallest
    such bound summarizes how many invalid instruments it takes to overturn
    the finding.
    """
    if not u_values:
        raise ConfigError("u_values must be non-empty")
    reports = []
    for u in u_values:
        cfg = AnalysisConfig(
            u=int(u),
            alpha=config.alpha,
            test=config.test,
            pretest=config.pretest,
            alpha1=config.alpha1,
            alpha2=config.alpha2,
            grid=config.grid,
            mc_draws=config.mc_draws,
            seed=config.seed,
        )
        if config.pretest:
            reports.append(robust_ci_pretest(data, cfg))
        else:
            reports.append(robust_ci(data, cfg))
    contains = tuple(r.interval_set.contains(null_value) for r in reports)
    threshold = None
    for u, has0 in zip(u_values, contains):
        if has0:
            threshold = int(u)
            break
    return SensitivityResult(
        reports=tuple(reports),
        u_values=tuple(int(u) for u in u_values),
        contains_null=contains,
        null_value=null_value,
        threshold_u=threshold,
    )
