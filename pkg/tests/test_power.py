import numpy as np
import pytest

from robustiv import (
    ConfigError,
    PowerSpec,
    SimConfig,
    SubsetSpec,
    ar_power_exact,
    calibrate_gamma,
    generate_dataset,
    monte_carlo_ar_power,
    noncentrality,
    power_curve,
)


def make_design(rng, n=200, L=5, corr=0.4):
    sigma = (1 - corr) * np.eye(L) + corr * np.ones((L, L))
    return rng.standard_normal((n, L)) @ np.linalg.cholesky(sigma).T


def base_spec(rng, **overrides):
    L = 5
    defaults = dict(
        beta_star=2.0,
        beta0=2.0,
        pi=np.zeros(L),
        gamma=np.full(L, 0.4),
        subset=SubsetSpec(indices=(0, 1), n_candidates=L),
        design=make_design(rng, L=L),
        alpha=0.05,
        sigma1=1.0,
        sigma2=1.0,
        rho=0.5,
    )
    defaults.update(overrides)
    return PowerSpec(**defaults)


class TestNoncentrality:
    def test_zero_under_null_with_valid_complement(self, rng):
        spec = base_spec(rng)
        assert noncentrality(spec) == 0.0

    def test_cancellation_direction_has_no_signal(self, rng):
        # Direct effects exactly offsetting the first-stage-carried shift.
        L = 5
        delta = 0.3
        gamma = np.full(L, 0.4)
        pi = -gamma * delta
        spec = base_spec(rng, beta0=2.0 - delta, pi=pi, gamma=gamma)
        assert noncentrality(spec) == 0.0

    def test_matches_dense_oracle(self, rng):
        L = 5
        design = make_design(rng, n=40, L=L)
        subset = SubsetSpec(indices=(1, 3), n_candidates=L)
        pi = np.array([0.0, 0.5, 0.7, 0.0, -0.2])
        gamma = np.full(L, 0.3)
        spec = base_spec(
            rng, beta0=1.6, pi=pi, gamma=gamma, subset=subset, design=design
        )
        # Dense oracle: explicit residual projector.
        cols = list(subset.indices)
        comp = list(subset.complement())
        zb = design[:, cols]
        r_b = np.eye(40) - zb @ np.linalg.solve(zb.T @ zb, zb.T)
        v = pi[comp] + gamma[comp] * (2.0 - 1.6)
        w = r_b @ design[:, comp] @ v
        st2 = 1.0 + 0.4**2 + 2 * 0.4 * 0.5
        oracle = (w @ w) / st2
        assert noncentrality(spec) == pytest.approx(oracle, rel=1e-10)

    def test_invalid_rho_rejected(self, rng):
        with pytest.raises(ConfigError):
            base_spec(rng, rho=1.0)


class TestExactPower:
    @pytest.mark.parametrize("alpha", [0.01, 0.05, 0.10])
    def test_size_alpha_at_zero_noncentrality(self, rng, alpha):
        spec = base_spec(rng, alpha=alpha)
        assert ar_power_exact(spec) == pytest.approx(alpha, abs=1e-8)

    def test_strictly_increasing_in_noncentrality(self, rng):
        design = make_design(rng)
        etas, powers = [], []
        for scale in np.linspace(0.0, 1.2, 20):
            pi = np.zeros(5)
            pi[2:] = 0.2 * scale
            spec = base_spec(rng, pi=pi, design=design)
            etas.append(noncentrality(spec))
            powers.append(ar_power_exact(spec))
        order = np.argsort(etas)
        assert np.all(np.diff(np.array(etas)[order]) >= 0)
        assert np.all(np.diff(np.array(powers)[order]) > -1e-12)
        assert powers[-1] > powers[0]

    def test_wrong_subset_has_power_at_true_effect(self, rng):
        # Invalid instrument left in the complement: rejects even at beta0 = beta*.
        pi = np.array([0.8, 0.0, 0.0, 0.0, 0.0])
        spec = base_spec(rng, pi=pi, subset=SubsetSpec(indices=(1,), n_candidates=5))
        assert ar_power_exact(spec) > 0.5


class TestPowerCurve:
    def test_size_at_true_effect_in_grid(self, rng):
        spec = base_spec(rng)
        curve = power_curve(spec, [1.8, 2.0, 2.2])
        by_beta0 = dict(curve)
        assert by_beta0[2.0] == pytest.approx(0.05, abs=1e-8)
        assert by_beta0[1.8] > 0.05 and by_beta0[2.2] > 0.05

    def test_continuity_on_dgp_scale(self):
        # Smoothness audit against a 10x finer grid: the coarse curve must
        # interpolate the fine one without jumps. On this design the steepest
        # slope is ~11 per unit, so 0.001 steps move power by ~0.011 at most.
        config = SimConfig(
            n=5000, n_instruments=10, inst_corr=0.6, n_invalid=2,
            beta_star=2.0, rho=0.8, concentration=100.0, u=5, reps=200, seed=51,
        )
        gamma = calibrate_gamma(config)
        data, truth = generate_dataset(config, gamma)
        spec = PowerSpec(
            beta_star=2.0,
            beta0=2.0,
            pi=truth.pi,
            gamma=gamma,
            subset=truth.invalid_set,
            design=data.z,
            alpha=0.05,
            sigma1=1.0,
            sigma2=1.0,
            rho=0.8,
        )
        fine = np.round(np.arange(1.9, 2.1001, 0.001), 4)
        fine_powers = np.array([p for _, p in power_curve(spec, fine)])
        assert np.max(np.abs(np.diff(fine_powers))) < 0.02
        coarse = np.round(np.arange(1.9, 2.1001, 0.01), 3)
        coarse_powers = np.array([p for _, p in power_curve(spec, coarse)])
        # Coarse curve agrees with the fine curve at shared points.
        shared = np.isin(fine, coarse)
        np.testing.assert_allclose(fine_powers[shared], coarse_powers, atol=1e-12)

    def test_empty_grid_rejected(self, rng):
        with pytest.raises(ConfigError):
            power_curve(base_spec(rng), [])


class TestMonteCarloAgreement:
    def test_formula_matches_simulated_rejections(self, rng):
        design = make_design(rng, n=400, L=5)
        pi = np.array([0.25, 0.15, 0.0, 0.0, 0.0])
        for beta0, subset in [
            (2.0, SubsetSpec(indices=(0, 1), n_candidates=5)),
            (1.9, SubsetSpec(indices=(0, 1), n_candidates=5)),
            (2.0, SubsetSpec(indices=(0,), n_candidates=5)),
        ]:
            spec = base_spec(rng, beta0=beta0, pi=pi, subset=subset, design=design)
            exact = ar_power_exact(spec)
            mc = monte_carlo_ar_power(spec, reps=3000, seed=17)
            se = np.sqrt(max(exact * (1 - exact), 1e-6) / 3000)
            assert abs(mc - exact) <= 3 * se
