import math

import numpy as np
import pytest

from robustiv import (
    ConfigError,
    GridSpec,
    IVDataset,
    ProjectionFactory,
    RealIntervalSet,
    SimConfig,
    SubsetSpec,
    ar_statistic,
    build_projection_cache,
    generate_dataset,
    grid_invert,
    invert_ar,
    invert_clr,
    invert_wald,
    tsls_fit,
)
from robustiv.distributions import f_quantile
from robustiv.model import ProjectionCache


class TestRealIntervalSet:
    def test_canonicalization_merges_overlaps_and_touching(self):
        s = RealIntervalSet.from_intervals([(3, 4), (0, 1), (1, 2), (3.5, 6)])
        assert s.intervals == ((0.0, 2.0), (3.0, 6.0))
        assert s.is_canonical()

    def test_union_commutative_associative(self, rng):
        def random_set():
            pairs = []
            for _ in range(rng.integers(0, 4)):
                lo = rng.uniform(-10, 10)
                pairs.append((lo, lo + rng.uniform(0, 5)))
            return RealIntervalSet.from_intervals(pairs)

        for _ in range(50):
            a, b, c = random_set(), random_set(), random_set()
            assert a | b == b | a
            assert (a | b) | c == a | (b | c)

    def test_membership_and_length(self):
        s = RealIntervalSet.from_intervals([(-math.inf, 0), (2, 5)])
        assert s.contains(-100) and s.contains(0) and s.contains(3.5)
        assert not s.contains(1.0) and not s.contains(6)
        assert s.total_length == math.inf
        assert not s.is_bounded
        assert RealIntervalSet.from_intervals([(2, 5)]).total_length == 3.0

    def test_empty_and_whole_line(self):
        assert RealIntervalSet.empty().is_empty
        assert RealIntervalSet.whole_line().contains(1e300)
        assert RealIntervalSet.empty().total_length == 0.0

    def test_json_round_trip_exact(self):
        s = RealIntervalSet.from_intervals(
            [(-math.inf, -1.2345678901234567), (0.1, math.inf)]
        )
        assert RealIntervalSet.from_json_obj(s.to_json_obj()) == s
        obj = s.to_json_obj()
        assert obj[0][0] == "-inf" and obj[1][1] == "inf"

    def test_invalid_intervals_rejected(self):
        with pytest.raises(ConfigError):
            RealIntervalSet.from_intervals([(2, 1)])
        with pytest.raises(ConfigError):
            RealIntervalSet.from_intervals([(math.nan, 1)])


def synthetic_cache(q_yy, q_yd, q_dd, r_yy, r_yd, r_dd, df_num=2, df_den=40):
    return ProjectionCache(
        subset=SubsetSpec(indices=(0,), n_candidates=3),
        q_yy=q_yy, q_yd=q_yd, q_dd=q_dd,
        r_yy=r_yy, r_yd=r_yd, r_dd=r_dd,
        df_num=df_num, df_den=df_den, n=df_den + 3,
    )


def ar_accept_oracle(cache, alpha, lo=-50.0, hi=50.0, step=1e-4):
    """Vectorized grid evaluation of the AR acceptance region.

    Same accept rule as a p-value comparison: stat <= critical value.
    Returns (grid, boolean accept array).
    """
    q = f_quantile(1 - alpha, cache.df_num, cache.df_den)
    grid = np.arange(lo, hi + step / 2, step)
    num = cache.q_yy - 2 * grid * cache.q_yd + grid**2 * cache.q_dd
    den = cache.r_yy - 2 * grid * cache.r_yd + grid**2 * cache.r_dd
    accept = num * cache.df_den <= q * cache.df_num * den
    return grid, accept


def compare_with_grid(result, cache, alpha, step=1e-4):
    grid, accept = ar_accept_oracle(cache, alpha, step=step)
    # Interval endpoints must agree with accept-run boundaries within a step.
    runs = []
    i = 0
    while i < grid.size:
        if not accept[i]:
            i += 1
            continue
        j = i
        while j + 1 < grid.size and accept[j + 1]:
            j += 1
        runs.append((i, j))
        i = j + 1
    assert len(runs) == len(result.intervals)
    for (i, j), (lo, hi) in zip(runs, result.intervals):
        if i == 0:
            assert lo == -math.inf or lo <= grid[0] + step
        else:
            assert abs(lo - grid[i]) <= step
        if j == grid.size - 1:
            assert hi == math.inf or hi >= grid[-1] - step
        else:
            assert abs(hi - grid[j]) <= step


class TestInvertAR:
    def test_positive_definite_quadratic_empty(self):
        # Leading coefficient > a, discriminant < 0: nothing is accepted.
        cache = synthetic_cache(
            q_yy=500.0, q_yd=0.0, q_dd=400.0, r_yy=1.0, r_yd=0.0, r_dd=1.0
        )
        assert invert_ar(cache, 0.05).is_empty

    def test_negative_definite_quadratic_whole_line(self):
        cache = synthetic_cache(
            q_yy=0.01, q_yd=0.0, q_dd=0.01, r_yy=100.0, r_yd=0.0, r_dd=100.0
        )
        assert invert_ar(cache, 0.05) == RealIntervalSet.whole_line()

    def test_two_rays_case(self):
        # Weak-instrument geometry: negative leading coefficient with real roots.
        cache = synthetic_cache(
            q_yy=400.0, q_yd=0.0, q_dd=0.1, r_yy=40.0, r_yd=0.0, r_dd=40.0
        )
        res = invert_ar(cache, 0.05)
        assert len(res.intervals) == 2
        assert res.intervals[0][0] == -math.inf
        assert res.intervals[1][1] == math.inf
        compare_with_grid(res, cache, 0.05)

    def test_random_fixtures_match_grid_oracle(self):
        rng = np.random.default_rng(77)
        seen_empty = seen_whole = 0
        for trial in range(20):
            kind = trial % 4
            if kind == 0:  # strong valid: single interval
                q_yy, q_yd, q_dd = 40 + rng.uniform(0, 5), 35.0, 40.0
                r_yy = r_dd = 30 + rng.uniform(0, 5)
                r_yd = rng.uniform(-5, 5)
            elif kind == 1:  # very invalid: empty
                q_yy, q_yd, q_dd = 4000.0, rng.uniform(-5, 5), 3000.0
                r_yy = r_dd = 1.0 + rng.uniform(0, 1)
                r_yd = 0.0
                seen_empty += 1
            elif kind == 2:  # weak: whole line
                q_yy, q_yd, q_dd = rng.uniform(0, 0.05), 0.0, rng.uniform(0, 0.05)
                r_yy = r_dd = 50.0
                r_yd = rng.uniform(-10, 10)
                seen_whole += 1
            else:  # weak-ish: rays or wide interval
                q_yy, q_yd, q_dd = 300.0, rng.uniform(-3, 3), rng.uniform(0.0, 0.3)
                r_yy = r_dd = 35.0
                r_yd = rng.uniform(-5, 5)
            cache = synthetic_cache(q_yy, q_yd, q_dd, r_yy, r_yd, r_dd)
            res = invert_ar(cache, 0.05)
            compare_with_grid(res, cache, 0.05)
        assert seen_empty >= 1 and seen_whole >= 1

    def test_nesting_in_confidence_level(self, strong_small):
        _, data, _ = strong_small
        cache = build_projection_cache(
            data, SubsetSpec(indices=(0,), n_candidates=data.n_instruments)
        )
        wide = invert_ar(cache, 0.01)
        narrow = invert_ar(cache, 0.10)
        for lo, hi in narrow.intervals:
            # every narrow interval sits inside the wide set
            for x in np.linspace(max(lo, -1e6), min(hi, 1e6), 7):
                assert wide.contains(x)

    def test_coverage_of_true_effect(self):
        config = SimConfig(
            n=150, n_instruments=4, inst_corr=0.3, n_invalid=1, beta_star=2.0,
            rho=0.6, concentration=40.0, u=2, reps=2000, seed=21,
        )
        hits = 0
        for rep in range(2000):
            data, truth = generate_dataset(config, seed=(21, rep))
            cache = build_projection_cache(data, truth.invalid_set)
            hits += invert_ar(cache, 0.05).contains(config.beta_star)
        assert hits / 2000 >= 0.94

    def test_outputs_are_canonical(self, strong_small):
        _, data, _ = strong_small
        factory = ProjectionFactory(data)
        from robustiv import enumerate_subsets

        for spec in enumerate_subsets(data.n_instruments, 1):
            assert invert_ar(factory.cache(spec), 0.05).is_canonical()


class TestInvertWald:
    def test_closed_form_interval(self):
        from robustiv import TSLSFit

        fit = TSLSFit(beta_hat=2.0, std_err=0.1, residual_variance=1.0, first_stage_f=90.0)
        res = invert_wald(fit, 0.05)
        assert res.intervals[0][0] == pytest.approx(1.804, abs=1e-3)
        assert res.intervals[0][1] == pytest.approx(2.196, abs=1e-3)
        assert res.contains(fit.beta_hat)

    def test_matches_grid_inversion_of_wald(self, strong_small):
        from robustiv import wald_statistic

        _, data, _ = strong_small
        fit = tsls_fit(data, SubsetSpec(indices=(), n_candidates=data.n_instruments))
        res = invert_wald(fit, 0.05)
        grid = GridSpec(
            lo=fit.beta_hat - 10 * fit.std_err,
            hi=fit.beta_hat + 10 * fit.std_err,
            step=fit.std_err / 200,
        )
        oracle = grid_invert(lambda b: wald_statistic(b, fit).p_value, 0.05, grid)
        assert len(oracle.intervals) == 1
        assert oracle.intervals[0][0] == pytest.approx(res.intervals[0][0], abs=grid.step)
        assert oracle.intervals[0][1] == pytest.approx(res.intervals[0][1], abs=grid.step)


class TestInvertCLR:
    def test_just_identified_matches_ar(self, rng):
        z = rng.normal(size=(300, 2))
        d = z @ np.array([0.6, 0.5]) + rng.normal(size=300)
        y = 2.0 * d + rng.normal(size=300)
        data = IVDataset.from_arrays(y=y, d=d, z=z)
        spec = SubsetSpec(indices=(0,), n_candidates=2)
        cache = build_projection_cache(data, spec)
        ar_set = invert_ar(cache, 0.05)
        fit = tsls_fit(data, spec)
        grid = GridSpec(
            lo=fit.beta_hat - 15 * fit.std_err,
            hi=fit.beta_hat + 15 * fit.std_err,
            step=fit.std_err / 50,
        )
        clr_set = invert_clr(cache, alpha=0.05, grid=grid, mc_draws=60_000, seed=3)
        assert len(clr_set.intervals) == len(ar_set.intervals) == 1
        for a, b in zip(clr_set.intervals[0], ar_set.intervals[0]):
            assert a == pytest.approx(b, abs=3 * grid.step)

    def test_all_grid_accepted_reports_whole_line(self, rng):
        # No instrument signal at all: every hypothesis is accepted.
        z = rng.normal(size=(120, 3))
        d = rng.normal(size=120)
        y = rng.normal(size=120)
        data = IVDataset.from_arrays(y=y, d=d, z=z)
        spec = SubsetSpec(indices=(0,), n_candidates=3)
        grid = GridSpec(lo=-0.5, hi=0.5, step=0.05)
        res = invert_clr(data, spec, alpha=0.05, grid=grid, mc_draws=2000, seed=5)
        assert res == RealIntervalSet.whole_line()

    def test_contains_tsls_estimate_on_strong_fixture(self, strong_small):
        _, data, _ = strong_small
        spec = SubsetSpec(indices=(0,), n_candidates=data.n_instruments)
        fit = tsls_fit(data, spec)
        res = invert_clr(data, spec, alpha=0.05, mc_draws=2000, seed=9)
        assert res.contains(fit.beta_hat)

    def test_bad_grid_rejected(self, strong_small):
        _, data, _ = strong_small
        spec = SubsetSpec(indices=(0,), n_candidates=data.n_instruments)
        with pytest.raises(ConfigError):
            invert_clr(data, spec, grid=GridSpec(lo=0, hi=1, step=-1))
        with pytest.raises(ConfigError):
            GridSpec(lo=-math.inf, hi=1, step=0.1)


class TestGridInvert:
    def test_constant_accept_spans_grid(self):
        grid = GridSpec(lo=-1, hi=1, step=0.1)
        res = grid_invert(lambda b: 1.0, 0.05, grid)
        assert res == RealIntervalSet.whole_line()

    def test_constant_reject_empty(self):
        grid = GridSpec(lo=-1, hi=1, step=0.1)
        assert grid_invert(lambda b: 0.0, 0.05, grid).is_empty

    def test_matches_closed_form_ar(self, strong_small):
        _, data, _ = strong_small
        cache = build_projection_cache(
            data, SubsetSpec(indices=(0,), n_candidates=data.n_instruments)
        )
        closed = invert_ar(cache, 0.05)
        grid = GridSpec(lo=-5, hi=8, step=1e-3)
        oracle = grid_invert(lambda b: ar_statistic(b, cache).p_value, 0.05, grid)
        assert len(oracle.intervals) == len(closed.intervals)
        for (glo, ghi), (clo, chi) in zip(oracle.intervals, closed.intervals):
            assert glo == pytest.approx(clo, abs=1e-3)
            assert ghi == pytest.approx(chi, abs=1e-3)
