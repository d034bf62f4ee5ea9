import numpy as np
import pytest

from isacsim.model import (
    Constellation,
    Scene,
    SystemConfig,
    composite_sensing_channel,
    generate_observation,
    qpsk,
    sample_scene,
    single_symbol,
    steering_vector,
    trial_rng,
)


class TestSteeringVector:
    def test_broadside_is_all_ones(self):
        np.testing.assert_allclose(steering_vector(4, 0.0), np.ones(4))

    def test_endfire_limit_alternates_sign(self):
        v = steering_vector(2, np.pi / 2 - 1e-9)
        np.testing.assert_allclose(v, [1.0, -1.0], atol=1e-6)

    def test_thirty_degrees_quarter_turns(self):
        # sin(pi/6) = 1/2, so element k advances by pi/2: 1, j, -1, -j
        v = steering_vector(4, np.pi / 6)
        np.testing.assert_allclose(v, [1.0, 1.0j, -1.0, -1.0j], atol=1e-12)
        assert abs(np.vdot(v, v).real - 4.0) < 1e-12

    def test_unit_modulus_and_norm(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(1, 65))
            theta = rng.uniform(-np.pi / 2 + 1e-6, np.pi / 2 - 1e-6)
            v = steering_vector(n, theta)
            assert np.max(np.abs(np.abs(v) - 1.0)) < 1e-12
            assert abs(np.vdot(v, v).real - n) < 1e-12


class TestCompositeSensingChannel:
    def test_broadside_values(self):
        cfg = SystemConfig(n_tx=4, n_rx=2, theta=0.0)
        np.testing.assert_allclose(composite_sensing_channel(cfg), [4.0, 4.0])

    def test_scalar_array(self):
        cfg = SystemConfig(n_tx=1, n_rx=1, theta=0.7)
        np.testing.assert_allclose(composite_sensing_channel(cfg), [1.0])

    def test_norm_at_thirty_degrees(self):
        cfg = SystemConfig(n_tx=4, n_rx=4, theta=np.pi / 6)
        g = composite_sensing_channel(cfg)
        assert abs(np.vdot(g, g).real - 64.0) < 1e-9

    @pytest.mark.parametrize("n_tx", [1, 2, 4, 8])
    @pytest.mark.parametrize("n_rx", [1, 2, 4, 8])
    def test_norm_identity(self, n_tx, n_rx):
        cfg = SystemConfig(n_tx=n_tx, n_rx=n_rx, theta=0.37)
        g = composite_sensing_channel(cfg)
        assert abs(np.vdot(g, g).real - n_tx ** 2 * n_rx) < 1e-9


class TestConstellation:
    def test_qpsk_gray_coding(self):
        const = qpsk()
        assert const.size == 4
        assert const.bits_per_symbol == 2
        assert abs(np.mean(np.abs(const.points) ** 2) - 1.0) < 1e-12
        # neighbors differ in one bit, antipodes in two
        for k in range(4):
            adjacent = (const.bit_map[k] != const.bit_map[(k + 1) % 4]).sum()
            antipodal = (const.bit_map[k] != const.bit_map[(k + 2) % 4]).sum()
            assert adjacent == 1
            assert antipodal == 2

    def test_single_symbol_alphabet(self):
        const = single_symbol()
        assert const.size == 1
        assert const.bits_per_symbol == 0

    def test_rejects_bad_power(self):
        with pytest.raises(ValueError, match="power"):
            Constellation(points=np.array([2.0, -2.0]),
                          bit_map=np.array([[0], [1]], dtype=np.uint8))

    def test_rejects_non_power_of_two(self):
        points = np.exp(2j * np.pi * np.arange(3) / 3)
        with pytest.raises(ValueError, match="power of two"):
            Constellation(points=points, bit_map=np.zeros((3, 2), np.uint8))

    def test_rejects_duplicate_labels(self):
        with pytest.raises(ValueError, match="distinct"):
            Constellation(points=np.array([1.0, -1.0]),
                          bit_map=np.array([[0], [0]], dtype=np.uint8))


class TestSystemConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            SystemConfig(n_rx=0)
        with pytest.raises(ValueError):
            SystemConfig(sigma2=0.0)
        with pytest.raises(ValueError):
            SystemConfig(beta=-1.0)
        with pytest.raises(ValueError):
            SystemConfig(theta=np.pi / 2)


class TestSampleScene:
    def test_deterministic_given_stream(self):
        cfg = SystemConfig(n_rx=3, seed=11)
        a = sample_scene(cfg, trial_rng(cfg.seed, 5))
        b = sample_scene(cfg, trial_rng(cfg.seed, 5))
        assert a.symbol_index == b.symbol_index
        assert a.alpha == b.alpha
        assert a.x == b.x
        np.testing.assert_array_equal(a.h_c, b.h_c)
        np.testing.assert_array_equal(a.noise, b.noise)

    def test_distinct_trials_differ(self):
        cfg = SystemConfig(n_rx=2, seed=11)
        a = sample_scene(cfg, trial_rng(cfg.seed, 0))
        b = sample_scene(cfg, trial_rng(cfg.seed, 1))
        assert a.alpha != b.alpha

    def test_sampling_statistics(self):
        # One pass over 1e6 scenes checks the alpha moments and the symbol
        # and probing-symbol histograms.
        cfg = SystemConfig(n_rx=1, sigma2=0.5, seed=202)
        rng = trial_rng(cfg.seed, 0)
        n = 1_000_000
        alphas = np.empty(n, dtype=np.complex128)
        noise = np.empty(n, dtype=np.complex128)
        sym_counts = np.zeros(4)
        x_counts = np.zeros(4)
        for i in range(n):
            scene = sample_scene(cfg, rng)
            alphas[i] = scene.alpha
            noise[i] = scene.noise[0]
            sym_counts[scene.symbol_index] += 1
            x_counts[np.argmin(np.abs(cfg.constellation.points - scene.x))] += 1
        assert abs(alphas.mean()) < 0.005
        assert 0.99 < np.mean(np.abs(alphas) ** 2) < 1.01
        np.testing.assert_allclose(sym_counts / n, 0.25, atol=0.0025)
        np.testing.assert_allclose(x_counts / n, 0.25, atol=0.0025)
        assert 0.98 * cfg.sigma2 < np.mean(np.abs(noise) ** 2) < 1.02 * cfg.sigma2


def _manual_scene(cfg, alpha, h_c, symbol_index, x, noise):
    return Scene(alpha=alpha, h_c=np.asarray(h_c, dtype=np.complex128),
                 symbol_index=symbol_index, x=x,
                 noise=np.asarray(noise, dtype=np.complex128))


class TestGenerateObservation:
    def test_pure_communication(self):
        cfg = SystemConfig(n_tx=1, n_rx=1, beta=1.0, gamma=0.0, sigma2=1e-3)
        s = cfg.constellation.points[0]
        scene = _manual_scene(cfg, alpha=0.3 + 0.1j, h_c=[1.0],
                              symbol_index=0, x=1.0, noise=[0.0])
        obs = generate_observation(cfg, scene)
        np.testing.assert_allclose(obs.y, [s])

    def test_pure_sensing(self):
        # n_tx=2, theta=0 gives g = [2, 2]
        cfg = SystemConfig(n_tx=2, n_rx=2, beta=0.0, gamma=1.0,
                           sigma2=1e-3, theta=0.0)
        scene = _manual_scene(cfg, alpha=1.0, h_c=[0.7, 0.2],
                              symbol_index=2, x=1.0, noise=[0.0, 0.0])
        obs = generate_observation(cfg, scene)
        np.testing.assert_allclose(obs.y, [2.0, 2.0])

    def test_linear_in_alpha_and_noise(self):
        cfg = SystemConfig(n_tx=2, n_rx=2, beta=1.7, gamma=0.4, theta=0.3)
        rng = np.random.default_rng(3)
        h = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        z1 = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        z2 = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        base = dict(h_c=h, symbol_index=1, x=1j)
        y_a1 = generate_observation(cfg, _manual_scene(cfg, 0.5, noise=z1, **base)).y
        y_a2 = generate_observation(cfg, _manual_scene(cfg, -1.2j, noise=z2, **base)).y
        y_sum = generate_observation(
            cfg, _manual_scene(cfg, 0.5 - 1.2j, noise=z1 + z2, **base)
        ).y
        extra_comm = generate_observation(
            cfg, _manual_scene(cfg, 0.0, noise=np.zeros(2), **base)
        ).y
        np.testing.assert_allclose(y_a1 + y_a2, y_sum + extra_comm, atol=1e-12)

    def test_unit_powers_reproduce_plain_sum(self):
        cfg = SystemConfig(n_tx=2, n_rx=2, beta=1.0, gamma=1.0, theta=0.4)
        rng = np.random.default_rng(4)
        scene = sample_scene(cfg, rng)
        obs = generate_observation(cfg, scene)
        g = composite_sensing_channel(cfg)
        s = cfg.constellation.points[scene.symbol_index]
        expected = scene.h_c * s + scene.alpha * g * scene.x + scene.noise
        np.testing.assert_array_equal(obs.y, expected)

    def test_dimension_mismatch_raises(self):
        cfg = SystemConfig(n_rx=2)
        scene = _manual_scene(cfg, 0.1, [1.0, 2.0, 3.0], 0, 1.0, [0.0, 0.0, 0.0])
        with pytest.raises(ValueError, match="n_rx"):
            generate_observation(cfg, scene)

    def test_communication_term_average_power(self):
        # E||sqrt(beta) h s||^2 = beta * n_rx for unit-power symbols
        cfg = SystemConfig(n_tx=1, n_rx=2, beta=4.0, gamma=0.0, sigma2=1e-12)
        rng = np.random.default_rng(5)
        total = 0.0
        trials = 40_000
        for _ in range(trials):
            scene = sample_scene(cfg, rng)
            obs = generate_observation(cfg, scene)
            total += np.vdot(obs.y, obs.y).real
        assert abs(total / trials - 8.0) < 0.16
