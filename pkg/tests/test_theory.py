"""Safeguarded step theory: the uniform step floor, the four guaranteed
inequalities, neighborhood membership and the acceptance-driven loop."""

import numpy as np
import pytest

from genprob import as_instance, random_lp, random_qp
from lemma_sampling import sample_lemma1_tuple
from ipstop.errors import ConfigError, ModeError
from ipstop.theory import (TheoryConfig, alpha_tilde, in_neighborhood,
                           ipm_solve_theory, lemma1_check,
                           lemma1_inequalities, neighborhood_check,
                           omega_factor, theoretical_accept)


class TestAlphaTilde:
    def test_hand_value(self):
        # gamma term binds: 0.1*0.1*0.9 / (100 * 1.01)
        val = alpha_tilde(0.1, 0.9, 0.1, 0.05, 10.0)
        assert val == pytest.approx(8.910891089108911e-05, rel=1e-9)

    def test_caps_at_one_for_tame_directions(self):
        assert alpha_tilde(0.5, 0.6, 0.5, 0.1, 0.01) == 1.0

    def test_is_min_of_the_four_terms(self, rng):
        for _ in range(50):
            t = sample_lemma1_tuple(rng)
            m2 = t["m_bound"] ** 2
            g = t["gamma"]
            terms = (t["sigma_min"] * g * (1 - g) / (m2 * (1 + g * g)),
                     t["sigma_min"] * (1 - g) / (2 * m2),
                     (0.99 - t["sigma_max"]) / m2,
                     t["delta"] / m2,
                     1.0)
            val = alpha_tilde(t["sigma_min"], t["sigma_max"], g, t["delta"],
                              t["m_bound"])
            assert val == pytest.approx(min(terms), rel=1e-14)

    @pytest.mark.parametrize("kwargs", [
        dict(gamma=0.0), dict(gamma=1.0), dict(sigma_min=0.0),
        dict(sigma_min=0.8, sigma_max=0.5), dict(sigma_max=0.99),
        dict(delta=0.0), dict(delta=0.5), dict(m_bound=0.0),
    ])
    def test_domain_errors(self, kwargs):
        base = dict(sigma_min=0.1, sigma_max=0.9, gamma=0.1, delta=0.05,
                    m_bound=10.0)
        base.update(kwargs)
        with pytest.raises(ConfigError):
            alpha_tilde(base["sigma_min"], base["sigma_max"], base["gamma"],
                        base["delta"], base["m_bound"])


def test_omega_factor():
    assert omega_factor(0.5, 0.1) == pytest.approx(0.6)
    assert omega_factor(1.0, 0.0) == 0.0


class TestLemmaOne:
    def test_zero_step_on_centered_point(self):
        x = s = np.ones(5)
        dx = np.zeros(5)
        r = lemma1_check(x, s, dx, dx, 0.0, 0.1, 0.5, 0.05)
        assert r.all_hold and r.mu_new == r.mu_old == 1.0

    def test_inequalities_tuple_matches_check(self, rng):
        t = sample_lemma1_tuple(rng)
        r = lemma1_check(t["x"], t["s"], t["dx"], t["ds"], t["alpha"],
                         t["gamma"], t["sigma"], t["delta"])
        flags = lemma1_inequalities(t["x"], t["s"], t["dx"], t["ds"],
                                    t["alpha"], t["sigma"], t["gamma"],
                                    t["delta"])
        assert flags == (r.lower_products, r.upper_products, r.armijo,
                         r.total_decrease)

    def test_all_hold_below_the_floor(self, rng):
        for _ in range(300):
            t = sample_lemma1_tuple(rng)
            flags = lemma1_inequalities(t["x"], t["s"], t["dx"], t["ds"],
                                        t["alpha"], t["sigma"], t["gamma"],
                                        t["delta"])
            assert all(flags), t

    def test_overstated_floor_breaks_total_decrease(self):
        # true ratio bound is 3.5; pretend it were 1 and take that floor
        x = s = np.ones(2)
        dx = np.array([3.0, -3.0])
        ds = (0.5 - 1.0) - dx          # solves s*dx + x*ds = sigma*mu - x*s
        alpha = alpha_tilde(0.5, 0.5, 0.5, 0.5, 1.0)
        assert alpha == pytest.approx(0.1)
        flags = lemma1_inequalities(x, s, dx, ds, alpha, 0.5, 0.5, 0.5)
        assert not flags[3]


class TestNeighborhood:
    def test_centered_point_is_inside(self):
        x = s = np.ones(4)
        assert in_neighborhood(x, s, (0.0, 0.0), (1.0, 1.0), 1.0, 0.5, 10.0)

    def test_small_product_is_outside(self):
        x = np.array([1.0, 1.0, 1.0, 0.1])
        s = np.ones(4)
        assert not in_neighborhood(x, s, (0.0, 0.0), (1.0, 1.0), 1.0, 0.5, 10.0)

    def test_residual_growth_is_outside(self):
        x = s = np.ones(4)
        assert not in_neighborhood(x, s, (10.0, 0.0), (1.0, 1.0), 1.0, 0.5, 5.0)

    def test_alias_is_same_function(self):
        assert neighborhood_check is in_neighborhood

    def test_matches_direct_reimplementation(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 12))
            x = rng.uniform(0.01, 5.0, n)
            s = rng.uniform(0.01, 5.0, n)
            gamma = float(rng.uniform(0.05, 0.9))
            beta = float(rng.uniform(0.5, 20.0))
            mu0 = float(rng.uniform(0.1, 5.0))
            rn = tuple(rng.uniform(0.0, 3.0, 2))
            rn0 = tuple(rng.uniform(0.1, 3.0, 2))
            prod = x * s
            mu = prod.mean()
            expect = (prod.min() >= gamma * mu and prod.max() <= mu / gamma
                      and rn[0] <= rn0[0] * beta * mu / mu0 + 1e-14
                      and rn[1] <= rn0[1] * beta * mu / mu0 + 1e-14)
            assert in_neighborhood(x, s, rn, rn0, mu0, gamma, beta) == expect


class TestTheoreticalAccept:
    def test_exact_newton_direction(self):
        assert theoretical_accept(2.0, 2.0, 0.0, 0.0, 1.0, 1.0,
                                  omega=0.55, alpha_hat=0.5, m_bound=10.0)

    def test_oversized_ratio_rejected(self):
        assert not theoretical_accept(20.0, 2.0, 0.0, 0.0, 1.0, 1.0,
                                      omega=0.55, alpha_hat=0.5, m_bound=10.0)

    def test_uncontracted_residual_rejected(self):
        # zero direction leaves the residuals where they were
        assert not theoretical_accept(0.0, 0.0, 1.0, 1.0, 1.0, 1.0,
                                      omega=0.55, alpha_hat=0.5, m_bound=10.0)

    def test_zero_residuals_accept_zero_direction(self):
        assert theoretical_accept(0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                                  omega=0.55, alpha_hat=0.5, m_bound=10.0)


class TestSafeguardedLoop:
    def test_solves_a_small_lp(self, rng):
        prob = as_instance(random_lp(rng, 4, 12))
        result = ipm_solve_theory(prob)
        assert result.converged
        assert result.mu <= 1e-6
        mus = [s.mu for s in result.stats]
        assert all(b < a for a, b in zip(mus, mus[1:]))

    def test_rejects_qp(self, rng):
        prob = as_instance(random_qp(rng, n=6, m=2))
        with pytest.raises(ModeError):
            ipm_solve_theory(prob)

    def test_rejects_sigma_outside_band(self, rng):
        prob = as_instance(random_lp(rng, 3, 8))
        with pytest.raises(ConfigError):
            ipm_solve_theory(prob, TheoryConfig(sigma=0.95, sigma_max=0.9))
