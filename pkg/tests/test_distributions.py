import numpy as np
import pytest
from scipy import integrate, optimize, special, stats

from robustiv import (
    ConfigError,
    DistParams,
    chi_square_cdf,
    chi_square_quantile,
    f_cdf,
    f_quantile,
    noncentral_f_cdf,
    normal_quantile,
)


class TestNormalQuantile:
    def test_median_is_zero(self):
        assert normal_quantile(0.5) == 0.0

    def test_against_erf_inversion_oracle(self):
        # Oracle: bracketed root of the erf-based CDF, computed independently.
        def erf_cdf(x):
            return 0.5 * (1 + special.erf(x / np.sqrt(2)))

        oracle = optimize.brentq(lambda t: erf_cdf(t) - 0.975, -10, 10, xtol=1e-14)
        assert oracle == pytest.approx(1.959963984540055, abs=1e-12)
        assert normal_quantile(0.975) == pytest.approx(oracle, abs=1e-10)

    def test_antisymmetry(self):
        assert normal_quantile(0.025) == pytest.approx(-normal_quantile(0.975), abs=1e-12)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.3])
    def test_domain_errors(self, p):
        with pytest.raises(ConfigError):
            normal_quantile(p)


class TestChiSquareCdf:
    @pytest.mark.parametrize("df,lam", [(1, 0.0), (4, 0.0), (2, 3.0), (7, 12.0)])
    def test_zero_at_lower_boundary(self, df, lam):
        assert chi_square_cdf(0.0, df, lam) == 0.0

    def test_central_chi2_1_against_quadrature_oracle(self):
        # quad handles the integrable singularity at 0 adaptively.
        def density(t):
            return t ** (-0.5) * np.exp(-t / 2) / (np.sqrt(2) * special.gamma(0.5))

        oracle, err = integrate.quad(density, 0, 3.8415)
        assert err < 1e-7
        assert oracle == pytest.approx(0.9500012279287745, abs=1e-10)
        assert chi_square_cdf(3.8415, 1) == pytest.approx(oracle, abs=1e-8)
        assert chi_square_cdf(3.8415, 1) == pytest.approx(0.95, abs=1e-4)

    def test_noncentral_against_direct_series_oracle(self):
        # Poisson-mixture sum accumulated until the tail mass is below 1e-14.
        def series(x, df, lam):
            total, cum_w, k = 0.0, 0.0, 0
            while cum_w < 1 - 1e-14:
                logw = k * np.log(lam / 2) - lam / 2 - special.gammaln(k + 1)
                w = np.exp(logw)
                total += w * special.gammainc(df / 2 + k, x / 2)
                cum_w += w
                k += 1
            return total

        oracle = series(5.0, 2, 3.0)
        assert oracle == pytest.approx(0.5940608030781965, abs=1e-12)
        assert chi_square_cdf(5.0, 2, 3.0) == pytest.approx(oracle, abs=1e-10)

    @pytest.mark.parametrize(
        "x,df,lam",
        [(5.0, 2, 3.0), (30.0, 4, 20.0), (1200.0, 10, 990.0), (2.0, 1, 1e-8)],
    )
    def test_cross_check_scipy(self, x, df, lam):
        assert chi_square_cdf(x, df, lam) == pytest.approx(
            stats.ncx2.cdf(x, df, lam), abs=1e-9
        )

    def test_lambda_zero_reduces_to_central(self):
        for x in np.linspace(0.1, 25, 12):
            assert chi_square_cdf(x, 3, 0.0) == pytest.approx(
                stats.chi2.cdf(x, 3), abs=1e-12
            )

    def test_monotone_in_x(self):
        xs = np.linspace(0, 40, 60)
        vals = [chi_square_cdf(x, 5, 7.0) for x in xs]
        assert np.all(np.diff(vals) >= 0)

    def test_negative_x_raises(self):
        with pytest.raises(ConfigError):
            chi_square_cdf(-1.0, 2)


class TestNoncentralFCdf:
    def test_lambda_zero_equals_central(self):
        for x in [0.3, 1.0, 1.83, 4.2]:
            for df1, df2 in [(1, 30), (10, 4990), (6, 100)]:
                assert noncentral_f_cdf(x, DistParams(df1, df2, 0.0)) == pytest.approx(
                    f_cdf(x, df1, df2), abs=1e-10
                )

    def test_quantile_cdf_round_trip_value(self):
        # Independent series/quadrature oracle for the 0.95 point of F(10, 4990).
        val = noncentral_f_cdf(1.83, DistParams(10, 4990, 0.0))
        assert val == pytest.approx(0.9495979421772183, abs=1e-9)
        assert val == pytest.approx(0.95, abs=5e-4)

    def test_stochastic_dominance_in_noncentrality(self):
        x = 1.5
        assert noncentral_f_cdf(x, DistParams(5, 200, 10.0)) < noncentral_f_cdf(
            x, DistParams(5, 200, 0.0)
        )

    @pytest.mark.parametrize(
        "x,df1,df2,lam",
        [(2.5, 10, 4990, 15.0), (1.0, 6, 100, 3.0), (1.4, 10, 4990, 40.0)],
    )
    def test_cross_check_scipy(self, x, df1, df2, lam):
        assert noncentral_f_cdf(x, DistParams(df1, df2, lam)) == pytest.approx(
            stats.ncf.cdf(x, df1, df2, lam), abs=1e-9
        )

    def test_huge_df_and_noncentrality_no_overflow(self):
        val = noncentral_f_cdf(1.2, DistParams(10, 1_000_000, 990.0))
        assert 0.0 <= val <= 1.0
        val2 = noncentral_f_cdf(150.0, DistParams(10, 1_000_000, 990.0))
        assert val2 == pytest.approx(stats.ncf.cdf(150.0, 10, 1_000_000, 990.0), abs=1e-7)

    def test_invalid_params(self):
        with pytest.raises(ConfigError):
            DistParams(0, 10)
        with pytest.raises(ConfigError):
            DistParams(3, 10, -1.0)
        with pytest.raises(ConfigError):
            noncentral_f_cdf(-0.5, DistParams(3, 10))


class TestFQuantile:
    @pytest.mark.parametrize("p", [0.01, 0.5, 0.95, 0.99])
    @pytest.mark.parametrize("df1,df2", [(1, 10), (3, 40), (6, 4990), (10, 200), (2, 25)])
    def test_round_trip(self, p, df1, df2):
        q = f_quantile(p, df1, df2)
        assert f_cdf(q, df1, df2) == pytest.approx(p, abs=1e-8)

    def test_strong_design_value(self):
        # Oracle: bisection on the independent scipy CDF.
        oracle = optimize.brentq(
            lambda t: stats.f.cdf(t, 6, 4990) - 0.95, 0.1, 10, xtol=1e-12
        )
        q = f_quantile(0.95, 6, 4990)
        assert q == pytest.approx(oracle, rel=1e-8)
        assert q == pytest.approx(2.10, abs=5e-3)

    def test_limit_matches_squared_normal_quantile(self):
        assert f_quantile(0.95, 1, 10_000) == pytest.approx(
            normal_quantile(0.975) ** 2, abs=1e-3
        )

    @pytest.mark.parametrize("p", [0.0, 1.0, 2.0])
    def test_domain_errors(self, p):
        with pytest.raises(ConfigError):
            f_quantile(p, 3, 10)


class TestChiSquareQuantile:
    @pytest.mark.parametrize("p", [0.01, 0.5, 0.95, 0.99])
    @pytest.mark.parametrize("df", [1, 3, 9])
    def test_round_trip(self, p, df):
        q = chi_square_quantile(p, df)
        assert chi_square_cdf(q, df) == pytest.approx(p, abs=1e-9)
