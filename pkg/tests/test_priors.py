"""Prior evaluation, MM weights, majorization, Wishart terms, objective."""

import numpy as np
import pytest

from juice_admm import model, priors
from conftest import random_complex, random_hpd


def make_layout(n=8, c=2):
    return model.build_cluster_layout(n, c)


class TestSeparablePrior:
    def test_zero_matrix_with_unit_eps(self):
        assert priors.eval_separable_prior(np.zeros((3, 2)), 1.0) == 0.0

    def test_single_column_of_norm_e_minus_eps(self):
        x = np.zeros((3, 2), dtype=complex)
        x[0, 0] = np.e - 1.0
        assert priors.eval_separable_prior(x, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_matches_direct_summation(self, rng):
        x = random_complex(rng, 4, 9)
        direct = sum(np.log(np.linalg.norm(x[:, i]) + 0.2) for i in range(9))
        assert priors.eval_separable_prior(x, 0.2) == pytest.approx(direct, abs=1e-12)

    def test_rejects_bad_eps(self):
        with pytest.raises(ValueError):
            priors.eval_separable_prior(np.zeros((2, 2)), 0.0)


class TestClusterPrior:
    def test_zero_matrix(self):
        layout = model.build_cluster_layout(9, 3)
        assert priors.eval_cluster_prior(np.zeros((2, 9)), layout, 1.0) == 0.0

    def test_concentrated_activity_scores_below_separable(self, rng):
        # several active members in one cluster: the cluster prior is cheaper
        # (holds for eps0 >= 1, where empty users contribute no penalty)
        layout = make_layout()
        for _ in range(20):
            x = np.zeros((3, 8), dtype=complex)
            x[:, :4] = random_complex(rng, 3, 4)
            assert (priors.eval_cluster_prior(x, layout, 1.0)
                    < priors.eval_separable_prior(x, 1.0))

    def test_single_column_formula(self):
        layout = model.build_cluster_layout(12, 3)
        x = np.zeros((2, 12), dtype=complex)
        x[:, 5] = [3.0, 4.0]
        eps = 0.25
        expected = np.log(5.0 + eps) + 2 * np.log(eps)
        assert priors.eval_cluster_prior(x, layout, eps) == pytest.approx(expected, abs=1e-12)


class TestMMWeights:
    def test_zero_point_gives_reciprocal_eps(self):
        layout = make_layout()
        for kind in ("outer", "inner"):
            w = priors.mm_weights(np.zeros((3, 8)), 0.05, kind, layout)
            assert np.allclose(w.weights, 20.0)

    def test_outer_weights_cluster_mass(self):
        layout = make_layout()
        x = np.zeros((2, 8), dtype=complex)
        x[0, 0], x[0, 1] = 4.0, 5.0  # cluster 0 mass 9
        w = priors.mm_weights(x, 1.0, "outer", layout)
        assert np.allclose(w.weights[:4], 0.1)
        assert np.allclose(w.weights[4:], 1.0)

    def test_outer_weights_constant_within_cluster(self, rng):
        layout = model.build_cluster_layout(20, 4)
        w = priors.mm_weights(random_complex(rng, 3, 20), 0.3, "outer", layout)
        per_cluster = w.weights.reshape(4, 5)
        assert np.all(per_cluster == per_cluster[:, :1])

    def test_weights_bounded_by_reciprocal_eps(self, rng):
        layout = make_layout()
        for kind in ("outer", "inner"):
            w = priors.mm_weights(random_complex(rng, 3, 8), 0.2, kind, layout)
            assert np.all(w.weights > 0)
            assert np.all(w.weights <= 1 / 0.2 + 1e-15)

    def test_surrogate_tangency(self, rng):
        layout = make_layout()
        x0 = random_complex(rng, 3, 8)
        for kind, exact in (
            ("outer", lambda x: priors.eval_cluster_prior(x, layout, 0.4)),
            ("inner", lambda x: priors.eval_separable_prior(x, 0.4)),
        ):
            w = priors.mm_weights(x0, 0.4, kind, layout)
            assert priors.surrogate_value(x0, w, x0, layout) == pytest.approx(
                exact(x0), abs=1e-12
            )

    def test_majorization_property(self, rng):
        layout = make_layout()
        for _ in range(200):
            x0 = random_complex(rng, 3, 8) * rng.uniform(0.1, 3.0)
            x1 = random_complex(rng, 3, 8) * rng.uniform(0.1, 3.0)
            for kind, exact in (
                ("outer", lambda x: priors.eval_cluster_prior(x, layout, 0.15)),
                ("inner", lambda x: priors.eval_separable_prior(x, 0.15)),
            ):
                w = priors.mm_weights(x0, 0.15, kind, layout)
                assert priors.surrogate_value(x1, w, x0, layout) >= exact(x1) - 1e-10


class TestWishart:
    def test_identity_pair_gives_dimension(self):
        m = 5
        eye = np.eye(m, dtype=complex)
        assert priors.eval_wishart_neglog(eye, eye, 2.7) == pytest.approx(m)

    def test_scaled_identity_formula(self):
        c = 1.7
        sigma = c * np.eye(2, dtype=complex)
        val = priors.eval_wishart_neglog(sigma, np.eye(2, dtype=complex), 1.0)
        assert val == pytest.approx(-2 * np.log(c) + 2 * c, abs=1e-12)

    def test_matches_eigenvalue_oracle(self, rng):
        sigma, b = random_hpd(rng, 4), random_hpd(rng, 4)
        d = 1.3
        evals = np.linalg.eigvalsh(sigma)
        oracle = -d * np.sum(np.log(evals)) + np.trace(np.linalg.inv(b) @ sigma).real
        assert priors.eval_wishart_neglog(sigma, b, d) == pytest.approx(oracle, abs=1e-10)

    def test_rejects_non_hpd(self, rng):
        sigma = random_hpd(rng, 3)
        bad = sigma.copy()
        bad[0, 1] += 1.0  # breaks Hermitian symmetry
        with pytest.raises(ValueError):
            priors.eval_wishart_neglog(bad, sigma, 1.0)
        indefinite = sigma - 2 * np.linalg.eigvalsh(sigma).max() * np.eye(3)
        with pytest.raises(ValueError):
            priors.eval_wishart_neglog(indefinite, sigma, 1.0)
        with pytest.raises(ValueError):
            priors.eval_wishart_neglog(sigma, sigma, 0.0)


class TestMapObjective:
    def test_pure_data_term_when_betas_vanish(self, rng):
        layout = make_layout()
        x = random_complex(rng, 3, 8)
        phi = model.gen_pilots(5, 8, seed=1)
        y = random_complex(rng, 5, 3)
        sigmas = np.stack([random_hpd(rng, 3) for _ in range(2)])
        w = priors.mm_weights(x, 0.5, "outer", layout)
        val = priors.eval_map_objective(
            x, sigmas, y, phi, sigmas, w, (0.0, 0.0, 0.0),
            np.ones(8), layout,
        )
        assert val == pytest.approx(0.5 * np.linalg.norm(y - phi @ x.T) ** 2, rel=1e-12)

    def test_zero_signal_leaves_wishart_terms(self, rng):
        layout = make_layout()
        m, d = 3, 1.0
        x = np.zeros((m, 8), dtype=complex)
        y = np.zeros((5, m), dtype=complex)
        phi = model.gen_pilots(5, 8, seed=2)
        sigmas = np.stack([random_hpd(rng, m) for _ in range(2)])
        guess = np.stack([random_hpd(rng, m) for _ in range(2)])
        beta3 = 0.7
        w = priors.mm_weights(x, 0.5, "outer", layout)
        val = priors.eval_map_objective(
            x, sigmas, y, phi, guess, w, (0.3, 0.2, beta3), np.ones(8), layout,
            wishart_d=d,
        )
        big_l = layout.users_per_cluster
        expected = beta3 * big_l * sum(
            priors.eval_wishart_neglog(sigmas[l], guess[l], d) for l in range(2)
        )
        assert val == pytest.approx(expected, rel=1e-10)

    def test_matches_term_by_term_oracle(self, rng):
        layout = make_layout()
        m = 3
        x = random_complex(rng, m, 8)
        phi = model.gen_pilots(5, 8, seed=3)
        y = random_complex(rng, 5, m)
        sigmas = np.stack([random_hpd(rng, m) for _ in range(2)])
        guess = np.stack([random_hpd(rng, m) for _ in range(2)])
        powers = rng.uniform(0.5, 1.5, 8)
        betas = (0.4, 0.2, 0.6)
        d = 1.2
        w = priors.mm_weights(x, 0.3, "outer", layout)

        # independent summation oracle, user by user and cluster by cluster
        expected = 0.5 * np.linalg.norm(y - phi @ x.T) ** 2
        for i in range(8):
            expected += betas[0] * w.weights[i] * np.linalg.norm(x[:, i])
        big_l = layout.users_per_cluster
        for l in range(2):
            mu_l = betas[2] * big_l * d
            for i in layout.members[l]:
                xi = x[:, i]
                expected += betas[1] * (xi.conj() @ sigmas[l] @ xi).real
                mu_l += (betas[1] * powers[i] ** m * w.weights[i]
                         * np.linalg.norm(xi))
            sign, logdet = np.linalg.slogdet(sigmas[l])
            expected -= mu_l * logdet
            expected += betas[2] * big_l * np.trace(
                np.linalg.inv(guess[l]) @ sigmas[l]
            ).real
        val = priors.eval_map_objective(
            x, sigmas, y, phi, guess, w, betas, powers, layout, wishart_d=d,
        )
        assert val == pytest.approx(expected, rel=1e-10)
