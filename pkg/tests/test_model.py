import json
import math

import numpy as np
import pytest

from mmac.model import (
    BPSK_TAG,
    ON_OFF,
    ConfigError,
    RelativeChannel,
    SystemConfig,
    TagConstellation,
    TxModulation,
    draw_tag_bit,
    draw_theta,
    draw_tx_symbols,
    load_config,
    parse_config,
    qpsk_alphabet,
    qpsk_indices,
    rng_stream,
    synthesize_frame,
)


def make_config(snr_db=10.0, rho=0.5, g_mag2=0.1, theta=0.0, n=1, tag=ON_OFF,
                modulation=TxModulation.QPSK):
    return SystemConfig.from_db(
        snr_db,
        rho=rho,
        channel=RelativeChannel(math.sqrt(g_mag2), theta),
        n=n,
        tag=tag,
        tx_modulation=modulation,
    )


class TestTypes:
    def test_tag_amplitude_guard(self):
        with pytest.raises(ConfigError):
            TagConstellation(1.5, 0.0)

    def test_phase_normalised(self):
        ch = RelativeChannel(0.3, 2 * math.pi + 1.0)
        assert ch.phase == pytest.approx(1.0)

    def test_uniform_marker(self):
        ch = RelativeChannel(0.3, "uniform")
        assert ch.is_random_phase
        with pytest.raises(ConfigError):
            ch.fixed_phase

    def test_config_guards(self):
        with pytest.raises(ConfigError):
            make_config(rho=1.5)
        with pytest.raises(ConfigError):
            make_config(n=0)
        with pytest.raises(ConfigError):
            SystemConfig(snr=0.0, rho=0.5, channel=RelativeChannel(0.1, 0.0), n=1)

    def test_derived_quantities(self):
        cfg = make_config(snr_db=20.0, rho=0.5, g_mag2=0.2)
        assert cfg.snr == pytest.approx(100.0)
        assert cfg.g2_rho == pytest.approx(0.1)
        assert cfg.backscatter_amp == pytest.approx(math.sqrt(0.1))


class TestAlphabetAndDraws:
    def test_alphabet_mean_power_is_one(self):
        pts = qpsk_alphabet()
        assert np.mean(np.abs(pts) ** 2) == pytest.approx(1.0, abs=1e-15)

    def test_index_roundtrip(self):
        pts = qpsk_alphabet()
        assert np.array_equal(qpsk_indices(pts), np.arange(4))
        assert np.array_equal(qpsk_indices(7.3 * pts), np.arange(4))

    def test_tag_bit_mean(self):
        rng = rng_stream(123)
        draws = rng.integers(0, 2, 1_000_000)
        assert abs(draws.mean() - 0.5) < 0.002

    def test_theta_uniform_range(self):
        rng = rng_stream(7)
        ths = np.array([draw_theta(rng) for _ in range(2000)])
        assert np.all((0 <= ths) & (ths < 2 * math.pi))
        assert abs(ths.mean() - math.pi) < 0.15

    def test_identical_seeds_identical_streams(self):
        a = draw_tx_symbols(rng_stream(42, 3), 256)
        b = draw_tx_symbols(rng_stream(42, 3), 256)
        assert np.array_equal(a, b)
        c = draw_tx_symbols(rng_stream(42, 4), 256)
        assert not np.array_equal(a, c)

    def test_gaussian_mode_unit_power(self):
        rng = rng_stream(5)
        x = draw_tx_symbols(rng, 200_000, TxModulation.GAUSSIAN)
        assert np.mean(np.abs(x) ** 2) == pytest.approx(1.0, abs=0.01)

    def test_tag_bit_values(self):
        rng = rng_stream(1)
        assert draw_tag_bit(rng) in (0, 1)


class TestSynthesize:
    def test_no_backscatter_path(self):
        cfg = make_config(g_mag2=0.0, n=4)
        rng = rng_stream(0)
        tx = draw_tx_symbols(rng, 4)
        noise = (rng.standard_normal(4) + 1j * rng.standard_normal(4)) * math.sqrt(0.5)
        fr = synthesize_frame(cfg, tx, 1, 0, 0.0, noise, 1.2)
        assert np.allclose(fr.samples, math.sqrt(cfg.snr) * tx + noise)

    def test_synchronous_ignores_previous_bit(self):
        cfg = make_config(n=3)
        rng = rng_stream(9)
        tx = draw_tx_symbols(rng, 3)
        noise = (rng.standard_normal(3) + 1j * rng.standard_normal(3)) * math.sqrt(0.5)
        a = synthesize_frame(cfg, tx, 1, 0, 0.0, noise, 0.7)
        b = synthesize_frame(cfg, tx, 1, 1, 0.0, noise, 0.7)
        assert np.array_equal(a.samples, b.samples)

    def test_hand_evaluated_sample(self):
        # SNR=10dB, rho=0.5, |g|^2=0.1, theta=0, n=1, on/off bit=1, zero noise
        cfg = make_config()
        sym = np.array([(1 + 1j) / math.sqrt(2)])
        fr = synthesize_frame(cfg, sym, 1, 1, 0.0, np.zeros(1, dtype=complex), 0.0)
        expected = math.sqrt(10.0) * sym[0] * (1.0 + math.sqrt(0.05))
        assert fr.samples[0] == pytest.approx(expected, rel=1e-12)

    def test_async_prev_equal_current_matches_sync(self):
        cfg = make_config(n=4)
        rng = rng_stream(11)
        tx = draw_tx_symbols(rng, 4)
        noise = (rng.standard_normal(4) + 1j * rng.standard_normal(4)) * math.sqrt(0.5)
        sync = synthesize_frame(cfg, tx, 1, 1, 0.0, noise, 0.3)
        asyn = synthesize_frame(cfg, tx, 1, 1, 0.35, noise, 0.3)
        assert np.allclose(sync.samples, asyn.samples)

    def test_theta_period(self):
        cfg = make_config(n=2)
        rng = rng_stream(3)
        tx = draw_tx_symbols(rng, 2)
        noise = np.zeros(2, dtype=complex)
        a = synthesize_frame(cfg, tx, 1, 0, 0.2, noise, 0.9)
        b = synthesize_frame(cfg, tx, 1, 0, 0.2, noise, 0.9 + 2 * math.pi)
        assert np.allclose(a.samples, b.samples, rtol=1e-12, atol=1e-12)

    def test_power_normalisation(self):
        # with |g| = 0 the mean sample power is SNR + 1
        cfg = make_config(g_mag2=0.0, n=1)
        rng = rng_stream(21)
        n = 200_000
        tx = draw_tx_symbols(rng, n)
        noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * math.sqrt(0.5)
        power = np.mean(np.abs(math.sqrt(cfg.snr) * tx + noise) ** 2)
        assert power == pytest.approx(cfg.snr + 1.0, rel=0.01)

    def test_shape_error(self):
        cfg = make_config(n=3)
        with pytest.raises(ValueError):
            synthesize_frame(cfg, np.ones(2), 1, 0, 0.0, np.zeros(3), 0.0)

    def test_bpsk_tag_values(self):
        assert BPSK_TAG.value(1) == 1.0
        assert BPSK_TAG.value(0) == -1.0
        assert BPSK_TAG.separation == 2.0


class TestConfigIO:
    def test_roundtrip(self, tmp_path):
        doc = {
            "snr_db": 10.0,
            "rho": 0.5,
            "g_mag2": 0.1,
            "theta": 0.7853981633974483,
            "n": 2,
            "alpha": 0.25,
            "tag": {"c1": [1.0, 0.0], "c0": [0.0, 0.0]},
            "tx_modulation": "QPSK",
        }
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(doc))
        cfg, alpha = load_config(p)
        assert cfg.snr == pytest.approx(10.0)
        assert cfg.n == 2
        assert alpha == 0.25
        assert cfg.channel.phase == pytest.approx(math.pi / 4)

    def test_uniform_theta(self):
        cfg, _ = parse_config({"theta": "uniform"})
        assert cfg.channel.is_random_phase

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError):
            parse_config({"snr": 10})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.json")

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_alpha_range(self):
        with pytest.raises(ConfigError):
            parse_config({"alpha": 0.7})
