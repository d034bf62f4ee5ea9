import numpy as np
import pytest

from isacsim.experiments import run_cell
from isacsim.metrics import q_function
from isacsim.model import (
    Observation,
    SystemConfig,
    composite_sensing_channel,
    generate_observation,
    qpsk,
    sample_scene,
)
from isacsim.sic import (
    WhiteningContext,
    build_whitening_context,
    interference_covariance,
    linear_mmse_alpha,
    ml_detect,
    mrc_combine,
    run_sic_chain,
    sic_subtract,
    whitening_matrix,
)


def make_obs(y, g, h_c, x=1.0, beta=1.0, gamma=1.0, sigma2=1e-3):
    return Observation(
        y=np.asarray(y, dtype=np.complex128),
        g=np.asarray(g, dtype=np.complex128),
        h_c=np.asarray(h_c, dtype=np.complex128),
        x=x, beta=beta, gamma=gamma, sigma2=sigma2,
        constellation=qpsk(),
    )


def random_obs(rng, n_rx=2, beta=1.0, gamma=1.0, sigma2=1e-3, theta=0.4):
    cfg = SystemConfig(n_rx=n_rx, beta=beta, gamma=gamma, sigma2=sigma2,
                       theta=theta)
    return generate_observation(cfg, sample_scene(cfg, rng))


class TestInterferenceCovariance:
    def test_no_echo_is_scaled_identity(self):
        obs = make_obs([0, 0], g=[1, 1], h_c=[1, 1], gamma=0.0, sigma2=0.5)
        np.testing.assert_allclose(interference_covariance(obs), 0.5 * np.eye(2))

    def test_scalar_case(self):
        obs = make_obs([0], g=[1.0], h_c=[1.0], gamma=1.0, sigma2=1e-3)
        np.testing.assert_allclose(interference_covariance(obs), [[1.001]])

    def test_aligned_echo(self):
        obs = make_obs([0, 0], g=[1.0, 0.0], h_c=[1, 1], gamma=4.0, sigma2=1.0)
        np.testing.assert_allclose(interference_covariance(obs),
                                   np.diag([5.0, 1.0]))

    def test_hermitian_positive_definite(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            obs = random_obs(rng, n_rx=4, gamma=10 ** rng.uniform(-2, 2))
            r_c = interference_covariance(obs)
            np.testing.assert_allclose(r_c, r_c.conj().T, atol=1e-12)
            # noise floor, up to eigensolver error (absolute in ||R||)
            floor = obs.sigma2 - 1e-12 * np.linalg.norm(r_c)
            assert np.linalg.eigvalsh(r_c)[0] >= floor


class TestWhiteningMatrix:
    def test_scaled_identity(self):
        np.testing.assert_allclose(whitening_matrix(4.0 * np.eye(3)),
                                   0.5 * np.eye(3), atol=1e-14)

    def test_diagonal(self):
        np.testing.assert_allclose(whitening_matrix(np.diag([1.0, 0.25])),
                                   np.diag([1.0, 2.0]), atol=1e-14)

    def test_whitens_random_pd_matrix(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            b = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            r = b @ b.conj().T + 0.1 * np.eye(4)
            q = whitening_matrix(r)
            np.testing.assert_allclose(q @ r @ q.conj().T, np.eye(4),
                                       atol=1e-10)
            # the root is Hermitian PD, hence unique
            np.testing.assert_allclose(q, q.conj().T, atol=1e-12)

    def test_rejects_non_pd(self):
        with pytest.raises(np.linalg.LinAlgError):
            whitening_matrix(np.diag([1.0, -0.5]))

    def test_whitening_identity_over_operating_points(self):
        # same distribution as the acceptance check, smaller sample
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(200):
            cfg = SystemConfig(
                n_rx=int(rng.choice([1, 2, 4, 8])),
                gamma=10.0 ** rng.uniform(-3, 1),
                sigma2=10.0 ** rng.uniform(-1, 1),
                theta=rng.uniform(-1.45, 1.45),
            )
            obs = generate_observation(cfg, sample_scene(cfg, rng))
            r_c = interference_covariance(obs)
            q = whitening_matrix(r_c)
            resid = q @ r_c @ q.conj().T - np.eye(cfg.n_rx)
            worst = max(worst, np.linalg.norm(resid))
        assert worst < 1e-10


class TestMrcCombine:
    def test_direct_inner_product(self):
        obs = make_obs([1 + 1j, 1 - 1j], g=[1, 1], h_c=[1.0, 1.0])
        ctx = WhiteningContext(r_c=np.eye(2), q=np.eye(2),
                               w=np.array([1.0 + 0j, 1.0]))
        assert mrc_combine(obs, ctx) == pytest.approx(2.0)

    def test_zero_input(self):
        obs = make_obs([0, 0], g=[1, 1], h_c=[1.0, 1.0])
        ctx = build_whitening_context(obs)
        assert mrc_combine(obs, ctx) == 0.0

    def test_noiseless_channel_inversion(self):
        cfg = SystemConfig(n_rx=2, beta=1.0, gamma=0.0, sigma2=1e-9)
        rng = np.random.default_rng(4)
        scene = sample_scene(cfg, rng)
        scene.noise[:] = 0.0
        obs = generate_observation(cfg, scene)
        ctx = build_whitening_context(obs)
        s_hat = mrc_combine(obs, ctx) / ctx.combined_gain
        s = cfg.constellation.points[scene.symbol_index]
        assert abs(s_hat - s) < 1e-9


class TestMlDetect:
    def test_recovers_every_symbol_noiselessly(self):
        cfg = SystemConfig(n_rx=2, beta=1.0, gamma=0.0, sigma2=1e-9)
        rng = np.random.default_rng(5)
        for idx in range(4):
            scene = sample_scene(cfg, rng)
            scene.symbol_index = idx
            scene.noise[:] = 0.0
            obs = generate_observation(cfg, scene)
            ctx = build_whitening_context(obs)
            combined = mrc_combine(obs, ctx)
            assert ml_detect(combined, ctx, obs.beta, obs.constellation) == idx

    def test_tie_breaks_to_lowest_index(self):
        ctx = WhiteningContext(r_c=np.eye(1), q=np.eye(1),
                               w=np.array([1.0 + 0j]))
        assert ml_detect(0.0, ctx, 1.0, qpsk()) == 0

    def test_scale_consistency(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            obs = random_obs(rng)
            ctx = build_whitening_context(obs)
            combined = mrc_combine(obs, ctx)
            base = ml_detect(combined, ctx, obs.beta, obs.constellation)
            # scaling the statistic and the effective gain together must not
            # change the decision: beta -> c^2 beta scales the gain by c
            c = 10.0 ** rng.uniform(-2, 2)
            scaled = ml_detect(c * combined, ctx, c * c * obs.beta,
                               obs.constellation)
            assert scaled == base


class TestSicSubtract:
    def test_perfect_cancellation(self):
        cfg = SystemConfig(n_rx=2, beta=2.0, gamma=3.0, theta=0.2)
        rng = np.random.default_rng(7)
        scene = sample_scene(cfg, rng)
        scene.noise[:] = 0.0
        obs = generate_observation(cfg, scene)
        residual = sic_subtract(obs, scene.symbol_index)
        g = composite_sensing_channel(cfg)
        expected = np.sqrt(3.0) * scene.alpha * g * scene.x
        assert np.max(np.abs(residual - expected)) == 0.0

    def test_wrong_symbol_leaves_residual(self):
        cfg = SystemConfig(n_rx=2, beta=4.0, gamma=0.0, sigma2=1e-12)
        rng = np.random.default_rng(8)
        scene = sample_scene(cfg, rng)
        scene.symbol_index = 0
        obs = generate_observation(cfg, scene)
        points = cfg.constellation.points
        residual = sic_subtract(obs, 1)
        expected = 2.0 * scene.h_c * (points[0] - points[1]) + scene.noise
        np.testing.assert_allclose(residual, expected, atol=1e-12)

    def test_zero_beta_is_identity(self):
        rng = np.random.default_rng(9)
        obs = random_obs(rng, beta=0.0)
        for idx in range(4):
            np.testing.assert_array_equal(sic_subtract(obs, idx), obs.y)

    def test_rejects_bad_index(self):
        rng = np.random.default_rng(10)
        obs = random_obs(rng)
        with pytest.raises(ValueError):
            sic_subtract(obs, 4)


class TestLinearMmseAlpha:
    def test_scalar_shrinkage(self):
        obs = make_obs([2.0], g=[1.0], h_c=[1.0], gamma=1.0, sigma2=1.0)
        assert linear_mmse_alpha(np.array([2.0 + 0j]), obs) == pytest.approx(1.0)

    def test_zero_residual(self):
        rng = np.random.default_rng(11)
        obs = random_obs(rng)
        assert linear_mmse_alpha(np.zeros(2, dtype=complex), obs) == 0.0

    def test_no_sensing_power_returns_prior_mean(self):
        rng = np.random.default_rng(12)
        obs = random_obs(rng, gamma=0.0)
        assert linear_mmse_alpha(obs.y, obs) == 0.0

    def test_matches_matrix_form(self):
        # rank-one shortcut against the dense Bayesian linear-model
        # estimator; powers keep the dense solve well conditioned so the
        # comparison is meaningful at 1e-12
        rng = np.random.default_rng(13)
        for _ in range(50):
            n = int(rng.choice([1, 2, 4]))
            obs = random_obs(rng, n_rx=n, gamma=10 ** rng.uniform(-2, 0.5),
                             sigma2=10 ** rng.uniform(-0.5, 0.5))
            residual = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            k = np.sqrt(obs.gamma) * obs.x * obs.g
            dense = k.conj() @ np.linalg.solve(
                np.outer(k, k.conj()) + obs.sigma2 * np.eye(n), residual
            )
            fast = linear_mmse_alpha(residual, obs)
            assert abs(fast - dense) < 1e-12 * max(1.0, abs(dense))

    def test_magnitude_bound(self):
        rng = np.random.default_rng(14)
        for _ in range(50):
            obs = random_obs(rng, n_rx=2)
            residual = 3 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
            k = np.sqrt(obs.gamma) * obs.x * obs.g
            k_norm = np.linalg.norm(k)
            bound = k_norm * np.linalg.norm(residual) / (k_norm ** 2 + obs.sigma2)
            assert abs(linear_mmse_alpha(residual, obs)) <= bound * (1 + 1e-12)


class TestRunSicChain:
    def test_degenerate_sensing(self):
        cfg = SystemConfig(n_rx=2, beta=1.0, gamma=0.0, sigma2=1e-6, seed=1)
        rng = np.random.default_rng(15)
        scene = sample_scene(cfg, rng)
        obs = generate_observation(cfg, scene)
        out = run_sic_chain(obs)
        assert out.detected_index == scene.symbol_index
        assert out.alpha_hat == 0.0

    def test_no_communication_term(self):
        rng = np.random.default_rng(16)
        obs = random_obs(rng, beta=0.0)
        out = run_sic_chain(obs)
        assert out.alpha_hat == linear_mmse_alpha(obs.y, obs)

    def test_symbol_error_rate_matches_theory(self):
        # Gray QPSK: per-channel SER = 1 - (1 - Q(sqrt(beta w^H w)))^2,
        # averaged over channels with common random numbers.
        cfg = SystemConfig(n_rx=2, beta=1e-2, gamma=1.0, sigma2=1e-3, seed=33)
        trials = 100_000
        _, trace = run_cell(cfg, trials, collect=True)
        ser_sim = np.mean(trace.true_symbol != trace.detected_symbol)
        ser_theory = np.mean(1.0 - (1.0 - trace.ber_theory_per_trial) ** 2)
        stderr = np.hypot(
            np.sqrt(ser_sim * (1 - ser_sim) / trials),
            np.std(1.0 - (1.0 - trace.ber_theory_per_trial) ** 2) / np.sqrt(trials),
        )
        assert abs(ser_sim - ser_theory) < 3 * stderr

    def test_detector_matches_awgn_formula_without_echo(self):
        cfg = SystemConfig(n_rx=2, beta=1.0, gamma=0.0, sigma2=1.0, seed=34)
        trials = 50_000
        agg, _ = run_cell(cfg, trials)
        assert abs(agg.ber_empirical - agg.ber_theoretical) < 3 * agg.ber_stderr

    def test_mmse_chain_beats_sic_when_detection_is_weak(self):
        cfg = SystemConfig(n_rx=1, beta=1.0, gamma=1.0 / 16, sigma2=1e-3,
                           seed=35)
        agg, _ = run_cell(cfg, 20_000)
        assert agg.mse_diff_mean > 2 * agg.mse_diff_stderr
