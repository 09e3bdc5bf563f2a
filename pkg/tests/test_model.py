"""System-model generation: layouts, covariances, pilots, activity, channels."""

import numpy as np
import pytest
from scipy.integrate import quad

from juice_admm import model


class TestClusterLayout:
    def test_paper_scale_partition(self):
        layout = model.build_cluster_layout(500, 20)
        assert layout.users_per_cluster == 25
        assert np.array_equal(layout.members[0], np.arange(25))

    def test_tiny_partition(self):
        layout = model.build_cluster_layout(4, 2)
        assert np.array_equal(layout.members[0], [0, 1])
        assert np.array_equal(layout.members[1], [2, 3])

    def test_indivisible_counts_rejected(self):
        with pytest.raises(model.ConfigurationError):
            model.build_cluster_layout(5, 2)

    def test_blocks_partition_all_users(self):
        layout = model.build_cluster_layout(60, 6)
        flat = layout.members.ravel()
        assert np.array_equal(np.sort(flat), np.arange(60))
        assert layout.cluster_of(59) == 5
        assert np.array_equal(
            layout.cluster_index(), np.repeat(np.arange(6), 10)
        )


class TestCovariance:
    def test_wide_spread_is_identity_dominated(self):
        cov = model.gen_covariance(6, np.deg2rad(20.0), np.deg2rad(3000.0))
        off = cov - np.diag(np.diagonal(cov))
        assert np.abs(off).max() < 1e-6
        assert np.allclose(np.diagonal(cov).real, 1.0)

    def test_zero_spread_limit_is_rank_one(self):
        theta = np.deg2rad(25.0)
        cov = model.gen_covariance(5, theta, 1e-9)
        evals = np.linalg.eigvalsh(cov)
        assert evals[-1] == pytest.approx(5.0, rel=1e-6)
        assert np.abs(evals[:-1]).max() < 1e-6

    def test_closed_form_matches_quadrature(self):
        # oracle: direct numerical integration of the Gaussian angular density
        m, theta, asd, delta = 4, np.deg2rad(30.0), np.deg2rad(10.0), 0.5
        cov = model.gen_covariance(m, theta, asd, delta)

        def quad_entry(lag):
            density = lambda p: np.exp(-0.5 * ((p - theta) / asd) ** 2)
            norm = asd * np.sqrt(2 * np.pi)
            re = quad(lambda p: np.cos(2 * np.pi * delta * lag * np.sin(p)) * density(p),
                      theta - 8 * asd, theta + 8 * asd)[0]
            im = quad(lambda p: np.sin(2 * np.pi * delta * lag * np.sin(p)) * density(p),
                      theta - 8 * asd, theta + 8 * asd)[0]
            return (re + 1j * im) / norm

        assert abs(cov[0, 1]) == pytest.approx(abs(quad_entry(-1)), rel=0.05)

    def test_stationary_diagonal_and_hermitian(self):
        cov = model.gen_covariance(8, np.deg2rad(-40.0), np.deg2rad(10.0))
        assert np.allclose(np.diagonal(cov), np.diagonal(cov)[0])
        assert np.allclose(cov, cov.conj().T)
        assert np.trace(cov).real == pytest.approx(8.0)


class TestPrecisionSet:
    def test_identity_covariance_gives_unit_power(self):
        # wide spread ~ identity covariance, loading 0
        layout = model.build_cluster_layout(6, 2)
        chan = model.ChannelParams(angular_std_deg=3000.0, loading=0.0)
        pset = model.gen_precision_set(layout, 4, chan, seed=0)
        assert np.allclose(pset.powers, 1.0, atol=1e-6)
        assert np.allclose(pset.precisions[0], np.eye(4), atol=1e-6)

    def test_power_formula_halves_for_doubled_trace(self):
        # trace(Sigma^{-1}) = 2M  ->  p = 0.5; emulate via doubled covariance
        layout = model.build_cluster_layout(2, 1)
        pset = model.gen_precision_set(layout, 3, seed=1)
        cov = np.linalg.inv(pset.precisions[0])
        p_expected = 3 / np.trace(cov).real
        assert pset.powers[0] == pytest.approx(p_expected, rel=1e-12)
        assert pset.powers[0] == pytest.approx(1.0 / (1.0 + 1e-4), rel=1e-10)

    def test_full_size_set_is_positive_definite(self):
        layout = model.build_cluster_layout(500, 20)
        pset = model.gen_precision_set(layout, 20, seed=2)
        assert np.linalg.eigvalsh(pset.precisions).min() > 0
        herm_gap = pset.precisions - np.conj(np.transpose(pset.precisions, (0, 2, 1)))
        assert np.abs(herm_gap).max() < 1e-10


class TestPilots:
    def test_unit_norm_columns(self):
        phi = model.gen_pilots(13, 40, seed=3)
        assert np.allclose(np.linalg.norm(phi, axis=0), 1.0, atol=1e-12)

    def test_single_symbol_magnitudes(self):
        phi = model.gen_pilots(1, 10, seed=4)
        assert np.allclose(np.abs(phi.real), 1.0 / np.sqrt(2.0))
        assert np.allclose(np.abs(phi.imag), 1.0 / np.sqrt(2.0))
        assert np.allclose(np.abs(phi), 1.0)

    def test_seed_determinism(self):
        assert np.array_equal(model.gen_pilots(7, 20, seed=5), model.gen_pilots(7, 20, seed=5))

    def test_orthonormal_variant(self):
        phi = model.gen_orthonormal_pilots(12, 12, seed=6)
        assert np.allclose(phi.conj().T @ phi, np.eye(12), atol=1e-12)
        with pytest.raises(model.ConfigurationError):
            model.gen_orthonormal_pilots(5, 12)


class TestActivity:
    def test_clustered_pattern_structure(self):
        layout = model.build_cluster_layout(500, 20)
        pattern = model.sample_activity(layout, "clustered", 16, 2, seed=7)
        assert pattern.k_active == 16
        clusters = {layout.cluster_of(i) for i in pattern.active_set}
        assert len(clusters) == 2
        for c in clusters:
            members = set(layout.members[c]) & set(pattern.active_set.tolist())
            assert len(members) == 8

    def test_empty_pattern(self):
        layout = model.build_cluster_layout(20, 4)
        pattern = model.sample_activity(layout, "random", 0, seed=8)
        assert pattern.k_active == 0
        assert not pattern.gamma.any()

    def test_infeasible_requests_rejected(self):
        layout = model.build_cluster_layout(20, 4)  # L = 5
        with pytest.raises(model.ConfigurationError):
            model.sample_activity(layout, "clustered", 12, 2, seed=9)  # 6 > L
        with pytest.raises(model.ConfigurationError):
            model.sample_activity(layout, "clustered", 7, 2, seed=9)  # not divisible
        with pytest.raises(model.ConfigurationError):
            model.sample_activity(layout, "random", 21, seed=9)

    def test_random_activation_frequency(self):
        # Monte-Carlo frequency oracle: per-user frequency ~ K/N
        layout = model.build_cluster_layout(50, 5)
        k, draws = 8, 10_000
        rng = np.random.default_rng(10)
        counts = np.zeros(50)
        for _ in range(draws):
            counts[model.sample_activity(layout, "random", k, seed=rng).active_set] += 1
        freq = counts / draws
        target = k / 50
        se = np.sqrt(target * (1 - target) / draws)
        assert np.all(np.abs(freq - target) < 3 * se + 1e-12)


class TestChannels:
    def test_all_inactive_gives_zero(self):
        layout = model.build_cluster_layout(12, 3)
        pset = model.gen_precision_set(layout, 4, seed=11)
        pattern = model.sample_activity(layout, "random", 0, seed=11)
        x = model.sample_channels(pattern, layout, pset, seed=11)
        assert not x.any()

    def test_support_matches_activity(self):
        layout = model.build_cluster_layout(12, 3)
        pset = model.gen_precision_set(layout, 4, seed=12)
        pattern = model.sample_activity(layout, "clustered", 4, 2, seed=12)
        x = model.sample_channels(pattern, layout, pset, seed=12)
        assert np.array_equal(np.flatnonzero(np.linalg.norm(x, axis=0) > 0),
                              pattern.active_set)

    def test_sample_covariance_matches_prior(self):
        # 1e5 draws of one active user; sample covariance vs p * Sigma^{-1}
        layout = model.build_cluster_layout(2, 1)
        pset = model.gen_precision_set(layout, 4, seed=13)
        pattern = model.sample_activity(layout, "random", 1, seed=13)
        i = pattern.active_set[0]
        rng = np.random.default_rng(14)
        draws = 100_000
        cols = np.empty((draws, 4), dtype=complex)
        for t in range(draws):
            cols[t] = model.sample_channels(pattern, layout, pset, seed=rng)[:, i]
        sample_cov = cols.T @ cols.conj() / draws
        target = pset.powers[i] * np.linalg.inv(pset.precisions[layout.cluster_of(i)])
        rel = np.linalg.norm(sample_cov - target) / np.linalg.norm(target)
        assert rel < 0.02
        mean_err = np.abs(cols.mean(axis=0))
        assert np.all(mean_err < 3.0 * np.sqrt(np.diagonal(target).real / draws))


class TestSynthesize:
    def test_noiseless_is_exact_product(self):
        layout = model.build_cluster_layout(8, 2)
        pset = model.gen_precision_set(layout, 3, seed=15)
        pattern = model.sample_activity(layout, "random", 3, seed=15)
        x = model.sample_channels(pattern, layout, pset, seed=15)
        phi = model.gen_pilots(6, 8, seed=15)
        y = model.synthesize(phi, x, 0.0, seed=15)
        assert np.array_equal(y, phi @ x.T)

    def test_noise_variance_matches(self):
        phi = model.gen_pilots(4, 6, seed=16)
        x = np.zeros((3, 6), dtype=complex)
        rng = np.random.default_rng(17)
        noise_var = 0.37
        draws = 4000
        acc = 0.0
        for _ in range(draws):
            y = model.synthesize(phi, x, noise_var, seed=rng)
            acc += np.mean(np.abs(y) ** 2)
        est = acc / draws
        assert est == pytest.approx(noise_var, rel=0.02)

    def test_matched_filter_recovers_single_user(self):
        n = 5
        phi = model.gen_orthonormal_pilots(n, n, seed=18)
        x = np.zeros((3, n), dtype=complex)
        x[:, 2] = [1 + 2j, -1j, 0.5]
        y = model.synthesize(phi, x, 0.0)
        assert np.allclose((phi.conj().T @ y)[2], x[:, 2])


class TestPriorGuess:
    def test_zeta_zero_returns_truth(self):
        sigma = np.diag([1.0, 2.0, 3.0]).astype(complex)
        assert np.allclose(model.build_prior_guess(sigma, 0.0, seed=19), sigma)

    def test_zeta_one_is_pure_random_psd(self):
        sigma = np.eye(3, dtype=complex)
        b = model.build_prior_guess(sigma, 1.0, seed=20)
        assert not np.allclose(b, sigma)
        assert np.trace(b).real == pytest.approx(3.0)
        assert np.linalg.eigvalsh(b).min() > 0

    def test_mismatch_level_scales_with_zeta(self):
        layout = model.build_cluster_layout(4, 1)
        pset = model.gen_precision_set(layout, 5, seed=21)
        sigma = pset.precisions[0]
        zeta = 0.1
        b = model.build_prior_guess(sigma, zeta, seed=22)
        psi = (b - (1 - zeta) * sigma) / zeta
        expected = zeta * np.linalg.norm(psi - sigma) / np.linalg.norm(sigma)
        actual = np.linalg.norm(b - sigma) / np.linalg.norm(sigma)
        assert actual == pytest.approx(expected, rel=1e-10)


class TestInstanceSerialization:
    def test_round_trip(self, tmp_path):
        layout = model.build_cluster_layout(12, 3)
        pset = model.gen_precision_set(layout, 4, seed=23)
        pattern = model.sample_activity(layout, "clustered", 4, 2, seed=23)
        x = model.sample_channels(pattern, layout, pset, seed=23)
        phi = model.gen_pilots(6, 12, seed=23)
        y = model.synthesize(phi, x, 0.1, seed=23)
        inst = model.ProblemInstance(phi, x, y, 0.1, pattern)
        guess = np.stack([model.build_prior_guess(pset.precisions[l], 0.1, seed=24)
                          for l in range(3)])
        path = tmp_path / "instance.npz"
        model.save_instance(path, inst, layout, pset, guess, seed=99)
        inst2, layout2, pset2, guess2, seed2 = model.load_instance(path)
        assert seed2 == 99
        assert layout2 == layout
        assert np.array_equal(inst2.pilots, inst.pilots)
        assert np.array_equal(inst2.channel, inst.channel)
        assert np.array_equal(inst2.received, inst.received)
        assert np.array_equal(inst2.activity.gamma, pattern.gamma)
        assert inst2.activity.pattern_kind == "clustered"
        assert np.array_equal(pset2.precisions, pset.precisions)
        assert np.array_equal(pset2.powers, pset.powers)
        assert np.array_equal(guess2, guess)
