"""Data-generating process and Monte Carlo experiment drivers.

The design draws rows of the instrument matrix from an equicorrelated
multivariate normal, gives every instrument the same first-stage strength
(calibrated so the expected first-stage F of the valid set hits a target
concentration), makes the first ``s`` instruments invalid with direct
effects drawn uniformly per replicate, and draws correlated bivariate
normal errors.

Experiments compare four cases on the same replicates:

- ``naive``: all instruments assumed valid (invalidity bound 1),
- ``union``: the robust union over candidate invalid sets,
- ``pretest``: the Sargan-screened union,
- ``oracle``: the infeasible analysis that knows the true invalid set.

Everything is reproducible bit for bit from (config, seed): replicate
generators are keyed by replicate index, so results do not depend on run
size or evaluation order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .distributions import chi_square_quantile, f_quantile, normal_quantile
from .exceptions import ConfigError
from .intervals import RealIntervalSet
from .inversion import default_clr_grid, invert_ar, invert_clr, invert_wald
from .model import (
    IVDataset,
    ProjectionCache,
    ProjectionFactory,
    SubsetSpec,
    enumerate_subsets,
)
from .power import PowerSpec
from .teststats import (
    _clr_components,
    clr_conditional_draws,
    clr_survival,
    tsls_fit_from_cache,
)

CASES = ("naive", "union", "pretest", "oracle")


@dataclass(frozen=True)
class SimConfig:
    """Full parameterization of the simulated design.

    Parameters
    ----------
    n : int
        Sample size per replicate.
    n_instruments : int
        Number of candidate instruments L.
    inst_corr : float
        Common pairwise correlation of the instruments.
    n_invalid : int
        Number of invalid instruments s (the first s indices).
    pi_range : tuple of float
        Uniform draw range for the nonzero direct effects.
    beta_star : float
        True causal effect.
    sigma1, sigma2 : float
        Error standard deviations (exposure, outcome).
    rho : float
        Error correlation in (-1, 1).
    concentration : float
        Target expected first-stage F of the valid instruments.
    u : int
        Invalidity bound used by the union procedures.
    reps : int
        Monte Carlo replicates.
    seed : int
        Master seed; replicate streams are keyed off it by index.
    alpha, alpha1, alpha2 : float
        Levels for the procedures (``alpha1 + alpha2 = alpha`` when
        pretesting).
    clr_draws : int
        Draws for CLR conditional critical values inside experiments.
    """

    n: int = 5000
    n_instruments: int = 10
    inst_corr: float = 0.6
    n_invalid: int = 0
    pi_range: tuple[float, float] = (0.4, 1.0)
    beta_star: float = 2.0
    sigma1: float = 1.0
    sigma2: float = 1.0
    rho: float = 0.8
    concentration: float = 100.0
    u: int = 5
    reps: int = 1000
    seed: int = 0
    alpha: float = 0.05
    alpha1: float = 0.01
    alpha2: float = 0.04
    clr_draws: int = 4000

    def __post_init__(self) -> None:
        L = self.n_instruments
        if self.n <= L + 1:
            raise ConfigError(f"n={self.n} too small for L={L}")
        if not 0 <= self.n_invalid <= L:
            raise ConfigError(
                f"n_invalid must lie in [0, L] = [0, {L}], got {self.n_invalid}"
            )
        if not -1.0 < self.rho < 1.0:
            raise ConfigError(f"rho must lie in (-1, 1), got {self.rho}")
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ConfigError("sigma1 and sigma2 must be positive")
        if not -1.0 / max(L - 1, 1) < self.inst_corr <= 1.0:
            raise ConfigError(
                f"inst_corr={self.inst_corr} does not give a positive "
                f"definite equicorrelated design with L={L}"
            )
        if self.pi_range[0] > self.pi_range[1]:
            raise ConfigError(f"invalid pi_range {self.pi_range}")
        if not 1 <= self.u <= L:
            raise ConfigError(f"u must lie in [1, L], got {self.u}")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if self.concentration < 1.0:
            raise ConfigError(
                f"concentration target must be >= 1 (it is an expected F "
                f"statistic), got {self.concentration}"
            )
        if abs(self.alpha1 + self.alpha2 - self.alpha) > 1e-12:
            raise ConfigError(
                f"alpha1 + alpha2 must equal alpha "
                f"({self.alpha1} + {self.alpha2} != {self.alpha})"
            )


@dataclass(frozen=True)
class TruthRecord:
    """Ground truth of one simulated dataset."""

    beta_star: float
    pi: np.ndarray
    gamma: np.ndarray
    invalid_set: SubsetSpec


def expected_valid_signal(config: SimConfig, k: int | None = None) -> float:
    """E[1' Zt' Zt 1] for the equicorrelated design.

    ``Zt`` is the valid block residualized on the invalid block. Available
    in closed form: the row sums of the valid block regress on the invalid
    block with residual variance
    ``k + k(k-1) rho_z - s (k rho_z)^2 / (1 + (s-1) rho_z)``, and the
    residual projection leaves ``n - s`` effective degrees of freedom.
    """
    s = config.n_invalid
    if k is None:
        k = config.n_instruments - s
    rho_z = config.inst_corr
    var_e = k + k * (k - 1) * rho_z
    if s:
        var_e -= s * (k * rho_z) ** 2 / (1.0 + (s - 1) * rho_z)
    return (config.n - s) * var_e


def calibrate_gamma(config: SimConfig, k: int | None = None) -> np.ndarray:
    """First-stage coefficients hitting the target concentration.

    All L entries share one scalar c (invalid instruments stay relevant),
    chosen so the expected first-stage F of the valid set equals the
    target: the implied concentration is ``k (E[F] - 1)`` where
    ``k = L - s`` valid instruments contribute.
    """
    if config.concentration < 1.0:
        raise ConfigError(
            f"concentration target must be >= 1, got {config.concentration}"
        )
    if k is None:
        k = config.n_instruments - config.n_invalid
    if k < 1:
        raise ConfigError("at least one valid instrument is required")
    mu2 = k * (config.concentration - 1.0)
    denom = expected_valid_signal(config, k)
    c = config.sigma1 * np.sqrt(mu2 / denom)
    return np.full(config.n_instruments, c)


def _instrument_chol(config: SimConfig) -> np.ndarray:
    L = config.n_instruments
    sigma = (1.0 - config.inst_corr) * np.eye(L) + config.inst_corr * np.ones((L, L))
    return np.linalg.cholesky(sigma)


def _replicate_rng(config: SimConfig, *key: int) -> np.random.Generator:
    return np.random.default_rng((config.seed, *key))


def generate_dataset(
    config: SimConfig,
    gamma: np.ndarray | None = None,
    seed: int | tuple[int, ...] | None = None,
) -> tuple[IVDataset, TruthRecord]:
    """Draw one dataset from the simulated design.

    Returns the dataset (no intercept: the design is mean zero by
    construction) together with the ground truth used to generate it.

    Parameters
    ----------
    config : SimConfig
        Design parameters.
    gamma : ndarray, optional
        First-stage coefficients; calibrated from the config when omitted.
    seed : int or tuple, optional
        Seed for this draw; defaults to ``config.seed``.
    """
    if gamma is None:
        gamma = calibrate_gamma(config)
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if gamma.shape[0] != config.n_instruments:
        raise ConfigError(
            f"gamma must have length {config.n_instruments}, got {gamma.shape[0]}"
        )
    rng = np.random.default_rng(config.seed if seed is None else seed)
    n, L, s = config.n, config.n_instruments, config.n_invalid
    z = rng.standard_normal((n, L)) @ _instrument_chol(config).T
    pi = np.zeros(L)
    if s:
        pi[:s] = rng.uniform(config.pi_range[0], config.pi_range[1], size=s)
    xi = config.sigma1 * rng.standard_normal(n)
    eps = config.rho * (config.sigma2 / config.sigma1) * xi + np.sqrt(
        1.0 - config.rho**2
    ) * config.sigma2 * rng.standard_normal(n)
    d = z @ gamma + xi
    y = z @ pi + d * config.beta_star + eps
    data = IVDataset.from_arrays(y=y, d=d, z=z)
    truth = TruthRecord(
        beta_star=config.beta_star,
        pi=pi,
        gamma=gamma,
        invalid_set=SubsetSpec(indices=tuple(range(s)), n_candidates=L),
    )
    return data, truth


# ---------------------------------------------------------------------------
# Method evaluation on one replicate
# ---------------------------------------------------------------------------


def parse_method(method: str) -> tuple[str, str]:
    """Split a method label like ``"union-ar"`` into (case, test)."""
    parts = method.lower().split("-", 1)
    if len(parts) != 2 or parts[0] not in CASES or parts[1] not in (
        "ar",
        "tsls",
        "clr",
    ):
        raise ConfigError(
            f"method must look like 'case-test' with case in {CASES} and "
            f"test in ('ar', 'tsls', 'clr'), got {method!r}"
        )
    return parts[0], parts[1]


class _ReplicateEvaluator:
    """Evaluates all requested methods on one simulated dataset.

    Point acceptance checks (used for coverage and power) avoid inversion
    entirely; interval construction (used for lengths) runs the same
    inversion routines the public procedures use. CLR conditional draws are
    drawn once per replicate and shared across subsets and grid points.
    """

    def __init__(
        self,
        data: IVDataset,
        truth: TruthRecord,
        config: SimConfig,
        methods: Sequence[tuple[str, str]],
        rng_key: tuple[int, ...],
    ):
        self.config = config
        self.truth = truth
        self.factory = ProjectionFactory(data)
        L = config.n_instruments
        self.union_caches: list[ProjectionCache] = []
        if any(case in ("union", "pretest") for case, _ in methods):
            subsets = list(enumerate_subsets(L, config.u - 1))
            self.union_caches = self.factory.caches(subsets)
        self.naive_cache = None
        if any(case == "naive" for case, _ in methods):
            self.naive_cache = self.factory.cache(
                SubsetSpec(indices=(), n_candidates=L)
            )
        self.oracle_cache = None
        if any(case == "oracle" for case, _ in methods):
            self.oracle_cache = self.factory.cache(truth.invalid_set)
        self._clr_draw_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._rng_key = rng_key

    def _clr_draws(self, df_num: int) -> tuple[np.ndarray, np.ndarray]:
        if df_num not in self._clr_draw_cache:
            self._clr_draw_cache[df_num] = clr_conditional_draws(
                df_num, self.config.clr_draws, seed=(*self._rng_key, df_num)
            )
        return self._clr_draw_cache[df_num]

    def _accepts(self, cache: ProjectionCache, test: str, beta0: float, alpha: float) -> bool:
        if test == "ar":
            q = f_quantile(1.0 - alpha, cache.df_num, cache.df_den)
            return cache.q_form(beta0) * cache.df_den <= (
                q * cache.df_num * cache.r_form(beta0)
            )
        if test == "tsls":
            fit = tsls_fit_from_cache(cache)
            z = normal_quantile(1.0 - alpha / 2.0)
            return abs(fit.beta_hat - beta0) <= z * fit.std_err
        lr, qt = _clr_components(cache, beta0)
        draws = self._clr_draws(cache.df_num)
        return bool(clr_survival(lr, qt, draws)[0] >= alpha)

    def _pretest_passes(self, cache: ProjectionCache, alpha1: float) -> bool:
        pre = sargan_from_cache(cache)
        crit = chi_square_quantile(1.0 - alpha1, cache.subset.complement_size - 1)
        return pre <= crit

    def accepts(self, case: str, test: str, beta0: float) -> bool:
        """Does the method's confidence set contain ``beta0``?"""
        cfg = self.config
        if case == "naive":
            assert self.naive_cache is not None
            return self._accepts(self.naive_cache, test, beta0, cfg.alpha)
        if case == "oracle":
            assert self.oracle_cache is not None
            return self._accepts(self.oracle_cache, test, beta0, cfg.alpha)
        if case == "union":
            return any(
                self._accepts(c, test, beta0, cfg.alpha) for c in self.union_caches
            )
        return any(
            self._pretest_passes(c, cfg.alpha1)
            and self._accepts(c, test, beta0, cfg.alpha2)
            for c in self.union_caches
        )

    def _invert(self, cache: ProjectionCache, test: str, alpha: float) -> RealIntervalSet:
        if test == "ar":
            return invert_ar(cache, alpha)
        if test == "tsls":
            return invert_wald(tsls_fit_from_cache(cache), alpha)
        fit = tsls_fit_from_cache(cache)
        return invert_clr(
            cache,
            alpha=alpha,
            grid=default_clr_grid(fit),
            mc_draws=self.config.clr_draws,
            seed=(*self._rng_key, cache.df_num),
        )

    def interval(self, case: str, test: str) -> RealIntervalSet:
        """The method's confidence set on this replicate."""
        cfg = self.config
        if case == "naive":
            assert self.naive_cache is not None
            return self._invert(self.naive_cache, test, cfg.alpha)
        if case == "oracle":
            assert self.oracle_cache is not None
            return self._invert(self.oracle_cache, test, cfg.alpha)
        out = RealIntervalSet.empty()
        if case == "union":
            for cache in self.union_caches:
                out = out | self._invert(cache, test, cfg.alpha)
            return out
        for cache in self.union_caches:
            if self._pretest_passes(cache, cfg.alpha1):
                out = out | self._invert(cache, test, cfg.alpha2)
        return out


def sargan_from_cache(cache: ProjectionCache) -> float:
    """Sargan statistic from quadratic forms (fast path for the screens)."""
    if cache.q_dd <= 0.0:
        return np.inf
    bh = cache.q_yd / cache.q_dd
    explained = max(cache.q_form(bh), 0.0)
    total = explained + max(cache.r_form(bh), 0.0)
    if total <= 0.0:
        return 0.0
    return cache.n * explained / total


def _map_indexed(fn: Callable[[int], object], n: int, threads: int | None) -> list:
    """Apply ``fn`` to 0..n-1, in index order, optionally on a thread pool."""
    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(n)))
    return [fn(i) for i in range(n)]


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoverageCell:
    method: str
    n_invalid: int
    coverage: float
    mc_se: float
    reps: int


@dataclass(frozen=True)
class LengthCell:
    method: str
    n_invalid: int
    median_length: float
    finite_fraction: float
    reps: int


@dataclass(frozen=True)
class PowerCell:
    method: str
    beta0: float
    rejection_rate: float
    mc_se: float
    reps: int


def _method_reps(config: SimConfig, test: str, clr_reps: int | None) -> int:
    if test != "clr":
        return config.reps
    if clr_reps is not None:
        return min(config.reps, clr_reps)
    return min(config.reps, 300)


def coverage_experiment(
    config: SimConfig,
    methods: Sequence[str],
    s_values: Sequence[int] | None = None,
    threads: int | None = None,
    clr_reps: int | None = None,
) -> list[CoverageCell]:
    """Fraction of replicates whose confidence set covers the true effect.

    One cell per (method, number of invalid instruments). Datasets are
    shared across methods within a replicate. CLR methods run on a reduced
    replicate count (conditional critical values dominate their cost);
    ``clr_reps`` overrides the default of 300.
    """
    if config.reps < 200:
        raise ConfigError(f"coverage experiments need reps >= 200, got {config.reps}")
    parsed = [parse_method(m) for m in methods]
    if s_values is None:
        s_values = [config.n_invalid]
    cells = []
    for s in s_values:
        cfg = replace(config, n_invalid=int(s))
        gamma = calibrate_gamma(cfg)
        max_reps = max(_method_reps(cfg, t, clr_reps) for _, t in parsed)

        def one(rep: int, cfg=cfg, gamma=gamma):
            data, truth = generate_dataset(cfg, gamma, seed=(cfg.seed, s, rep))
            ev = _ReplicateEvaluator(
                data, truth, cfg, parsed, rng_key=(cfg.seed, 1, s, rep)
            )
            return [
                ev.accepts(case, test, cfg.beta_star) for case, test in parsed
            ]

        hits = _map_indexed(one, max_reps, threads)
        for j, (case, test) in enumerate(parsed):
            reps = _method_reps(cfg, test, clr_reps)
            cov = float(np.mean([hits[r][j] for r in range(reps)]))
            cells.append(
                CoverageCell(
                    method=f"{case}-{test}",
                    n_invalid=int(s),
                    coverage=cov,
                    mc_se=float(np.sqrt(max(cov * (1 - cov), 1e-12) / reps)),
                    reps=reps,
                )
            )
    return cells


def length_experiment(
    config: SimConfig,
    methods: Sequence[str],
    s_values: Sequence[int] | None = None,
    threads: int | None = None,
    clr_reps: int | None = None,
) -> list[LengthCell]:
    """Median total length of the confidence sets, per method and s.

    Unbounded sets contribute infinite length; the fraction of replicates
    with a bounded set is reported alongside (a median of ``inf`` just
    means more than half the sets were unbounded).
    """
    if config.reps < 200:
        raise ConfigError(f"length experiments need reps >= 200, got {config.reps}")
    parsed = [parse_method(m) for m in methods]
    if s_values is None:
        s_values = [config.n_invalid]
    cells = []
    for s in s_values:
        cfg = replace(config, n_invalid=int(s))
        gamma = calibrate_gamma(cfg)
        max_reps = max(_method_reps(cfg, t, clr_reps) for _, t in parsed)

        def one(rep: int, cfg=cfg, gamma=gamma):
            data, truth = generate_dataset(cfg, gamma, seed=(cfg.seed, s, rep))
            ev = _ReplicateEvaluator(
                data, truth, cfg, parsed, rng_key=(cfg.seed, 1, s, rep)
            )
            return [ev.interval(case, test).total_length for case, test in parsed]

        lengths = _map_indexed(one, max_reps, threads)
        for j, (case, test) in enumerate(parsed):
            reps = _method_reps(cfg, test, clr_reps)
            vals = np.array([lengths[r][j] for r in range(reps)])
            cells.append(
                LengthCell(
                    method=f"{case}-{test}",
                    n_invalid=int(s),
                    median_length=float(np.median(vals)),
                    finite_fraction=float(np.mean(np.isfinite(vals))),
                    reps=reps,
                )
            )
    return cells


def power_experiment(
    config: SimConfig,
    beta0_grid: Sequence[float],
    methods: Sequence[str],
    threads: int | None = None,
    clr_reps: int | None = None,
) -> list[PowerCell]:
    """Empirical rejection rate of each hypothesized effect, per method.

    A method rejects ``beta0`` when its confidence set excludes it, so the
    rate at ``beta0 = beta_star`` is one minus the coverage.
    """
    if config.reps < 200:
        raise ConfigError(f"power experiments need reps >= 200, got {config.reps}")
    grid = [float(b) for b in beta0_grid]
    if not grid:
        raise ConfigError("beta0_grid must be non-empty")
    parsed = [parse_method(m) for m in methods]
    s = config.n_invalid
    gamma = calibrate_gamma(config)
    max_reps = max(_method_reps(config, t, clr_reps) for _, t in parsed)

    def one(rep: int):
        data, truth = generate_dataset(config, gamma, seed=(config.seed, s, rep))
        ev = _ReplicateEvaluator(
            data, truth, config, parsed, rng_key=(config.seed, 1, s, rep)
        )
        return [
            [not ev.accepts(case, test, b0) for b0 in grid]
            for case, test in parsed
        ]

    results = _map_indexed(one, max_reps, threads)
    cells = []
    for j, (case, test) in enumerate(parsed):
        reps = _method_reps(config, test, clr_reps)
        mat = np.array([results[r][j] for r in range(reps)], dtype=float)
        for g, b0 in enumerate(grid):
            rate = float(mat[:, g].mean())
            cells.append(
                PowerCell(
                    method=f"{case}-{test}",
                    beta0=b0,
                    rejection_rate=rate,
                    mc_se=float(np.sqrt(max(rate * (1 - rate), 1e-12) / reps)),
                    reps=reps,
                )
            )
    return cells


# ---------------------------------------------------------------------------
# Fixed-design Monte Carlo for the exact power formula
# ---------------------------------------------------------------------------


def monte_carlo_ar_power(
    spec: PowerSpec, reps: int = 5000, seed: int = 0, chunk: int = 500
) -> float:
    """Rejection rate of the Anderson-Rubin test on the spec's fixed design.

    Redraws only the errors, holding the instrument matrix fixed, which is
    the regime the exact formula describes. Statistics are evaluated with
    the same quadratic-form algebra the scalar test uses, batched across
    replicates.
    """
    if reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps}")
    z = spec.design
    n, L = z.shape
    cols = list(spec.subset.indices)
    df1 = L - len(cols)
    df2 = n - L
    q_basis, r_coord = np.linalg.qr(z)
    sub_basis = (
        np.linalg.qr(r_coord[:, cols])[0] if cols else np.zeros((L, 0))
    )
    crit = f_quantile(1.0 - spec.alpha, df1, df2)
    delta = spec.beta_star - spec.beta0
    mean_vec = z @ (spec.pi + spec.gamma * delta)
    rng = np.random.default_rng(seed)
    rejections = 0
    done = 0
    while done < reps:
        b = min(chunk, reps - done)
        xi = spec.sigma1 * rng.standard_normal((n, b))
        eps = spec.rho * (spec.sigma2 / spec.sigma1) * xi + np.sqrt(
            1.0 - spec.rho**2
        ) * spec.sigma2 * rng.standard_normal((n, b))
        resid = mean_vec[:, None] + eps + delta * xi  # y - d*beta0
        w = q_basis.T @ resid
        t = sub_basis.T @ w
        num = (w**2).sum(axis=0) - (t**2).sum(axis=0)
        den = (resid**2).sum(axis=0) - (w**2).sum(axis=0)
        stats = (num / df1) / (den / df2)
        rejections += int((stats >= crit).sum())
        done += b
    return rejections / reps
