import math
import os

import numpy as np
import pytest

from mmac.analytics import (
    ber_x2_bounds_async,
    ber_x2_bounds_sync,
    qpsk_baseline_ser,
    ser_x1_async,
    ser_x1_sync,
)
from mmac.model import (
    BPSK_TAG,
    ON_OFF,
    ConfigError,
    RelativeChannel,
    SystemConfig,
    TxModulation,
)
from mmac.rate_region import rate_tag_given_tx, sum_rate_exact
from mmac.simulate import (
    ErrorEstimate,
    TagStrategy,
    run_ber_x2,
    run_mi_estimates,
    run_paired_ml,
    run_ser_x1,
    worker_count,
)


def qpsk_config(snr_db=10.0, g2_rho=0.1, n=1):
    return SystemConfig.from_db(
        snr_db,
        rho=1.0,
        channel=RelativeChannel(math.sqrt(g2_rho), "uniform"),
        n=n,
        tag=ON_OFF,
    )


def gauss_config(snr_db=10.0, rho=0.5, g_mag2=0.1, theta=math.pi / 4, n=1):
    return SystemConfig.from_db(
        snr_db,
        rho=rho,
        channel=RelativeChannel(math.sqrt(g_mag2), theta),
        n=n,
        tag=BPSK_TAG,
        tx_modulation=TxModulation.GAUSSIAN,
    )


class TestErrorEstimate:
    def test_invariants(self):
        est = ErrorEstimate.from_counts(25, 1000, seed=7)
        assert est.rate == 0.025
        assert est.ci_halfwidth_95 == pytest.approx(
            1.96 * math.sqrt(0.025 * 0.975 / 1000)
        )
        with pytest.raises(ValueError):
            ErrorEstimate.from_counts(5, 4, seed=0)
        with pytest.raises(ValueError):
            run_ser_x1(qpsk_config(), 0.0, 0, 1)


class TestSerX1:
    def test_matches_qpsk_baseline_without_tag(self):
        cfg = qpsk_config(10.0, 0.0)
        est = run_ser_x1(cfg, 0.0, 1_000_000, seed=11)
        truth = qpsk_baseline_ser(cfg.snr)
        sigma = math.sqrt(truth * (1 - truth) / est.trials)
        assert est.rate == pytest.approx(truth, abs=3 * sigma)

    def test_matches_analytic_sync(self):
        cfg = qpsk_config(10.0, 0.1)
        est = run_ser_x1(cfg, 0.0, 1_000_000, seed=12)
        truth = ser_x1_sync(cfg)
        sigma = math.sqrt(truth * (1 - truth) / est.trials)
        assert est.rate == pytest.approx(truth, abs=3 * sigma)

    def test_matches_analytic_async(self):
        cfg = qpsk_config(10.0, 0.1, 2)
        est = run_ser_x1(cfg, 0.4, 1_000_000, seed=13)
        truth = ser_x1_async(cfg, 0.4)
        sigma = math.sqrt(truth * (1 - truth) / est.trials)
        assert est.rate == pytest.approx(truth, abs=3 * sigma)

    def test_same_seed_identical(self):
        cfg = qpsk_config(5.0, 0.1, 2)
        a = run_ser_x1(cfg, 0.1, 123_457, seed=99)
        b = run_ser_x1(cfg, 0.1, 123_457, seed=99)
        assert a == b

    def test_thread_count_invariance(self, monkeypatch):
        cfg = qpsk_config(5.0, 0.1, 2)
        monkeypatch.setenv("MMAC_THREADS", "1")
        a = run_ser_x1(cfg, 0.0, 200_000, seed=5)
        monkeypatch.setenv("MMAC_THREADS", "3")
        b = run_ser_x1(cfg, 0.0, 200_000, seed=5)
        assert a == b

    def test_worker_count_env(self, monkeypatch):
        monkeypatch.setenv("MMAC_THREADS", "2")
        assert worker_count() == 2
        monkeypatch.setenv("MMAC_THREADS", "bogus")
        with pytest.raises(ConfigError):
            worker_count()


class TestBerX2:
    def test_inside_sync_bounds(self):
        cfg = qpsk_config(20.0, 0.1, 4)
        est = run_ber_x2(cfg, 0.0, TagStrategy.FULL, 1_000_000, seed=21)
        bounds = ber_x2_bounds_sync(cfg)
        assert bounds.lower - 3 * est.ci_halfwidth_95 <= est.rate
        assert est.rate <= bounds.upper + 3 * est.ci_halfwidth_95

    def test_inside_async_bounds(self):
        cfg = qpsk_config(20.0, 0.1, 3)
        est = run_ber_x2(cfg, 0.3, TagStrategy.FULL, 1_000_000, seed=22)
        bounds = ber_x2_bounds_async(cfg, 0.3)
        assert bounds.lower - 3 * est.ci_halfwidth_95 <= est.rate
        assert est.rate <= bounds.upper + 3 * est.ci_halfwidth_95

    def test_async_ber_monotone_in_offset(self):
        # larger offsets mean more inter-symbol interference
        cfg = qpsk_config(20.0, 0.1, 3)
        rates = [
            run_ber_x2(cfg, a, TagStrategy.FULL, 200_000, seed=25).rate
            for a in (0.0, 0.25, 0.5)
        ]
        assert rates[0] < rates[1] < rates[2]

    def test_full_vs_truncated_crossover(self):
        # keeping the straddled sample helps at mild offsets, hurts at
        # severe ones
        cfg = qpsk_config(20.0, 0.1, 3)
        trials = 400_000
        full_mild = run_ber_x2(cfg, 0.2, TagStrategy.FULL, trials, seed=23)
        trunc_mild = run_ber_x2(cfg, 0.2, TagStrategy.TRUNCATED, trials, seed=23)
        assert full_mild.rate < trunc_mild.rate
        full_severe = run_ber_x2(cfg, 0.45, TagStrategy.FULL, trials, seed=24)
        trunc_severe = run_ber_x2(cfg, 0.45, TagStrategy.TRUNCATED, trials, seed=24)
        assert full_severe.rate > trunc_severe.rate

    def test_truncated_needs_two_samples(self):
        with pytest.raises(ValueError):
            run_ber_x2(qpsk_config(n=1), 0.0, TagStrategy.TRUNCATED, 100, seed=1)

    def test_trials_guard(self):
        with pytest.raises(ValueError):
            run_ber_x2(qpsk_config(), 0.0, TagStrategy.FULL, 0, seed=1)

    def test_determinism(self):
        cfg = qpsk_config(15.0, 0.1, 2)
        a = run_ber_x2(cfg, 0.25, TagStrategy.FULL, 100_000, seed=77)
        b = run_ber_x2(cfg, 0.25, TagStrategy.FULL, 100_000, seed=77)
        assert a == b


class TestMiEstimates:
    def test_no_backscatter_sum_rate(self):
        cfg = gauss_config(g_mag2=0.0)
        sum_mc, tag_mc = run_mi_estimates(cfg, 200_000, seed=31)
        assert sum_mc == pytest.approx(math.log2(11.0), abs=0.02)
        assert tag_mc == 0.0

    def test_jensen_equality_case(self):
        cfg = gauss_config(theta=math.pi / 2)
        sum_mc, _ = run_mi_estimates(cfg, 200_000, seed=32)
        assert sum_mc == pytest.approx(sum_rate_exact(cfg), abs=0.02)

    def test_matches_quadrature_defaults(self):
        cfg = gauss_config()
        sum_mc, tag_mc = run_mi_estimates(cfg, 1_000_000, seed=33)
        assert sum_mc == pytest.approx(sum_rate_exact(cfg), abs=0.02)
        assert tag_mc == pytest.approx(rate_tag_given_tx(cfg), abs=0.02)

    def test_requires_gaussian(self):
        with pytest.raises(ConfigError):
            run_mi_estimates(qpsk_config(), 100_000, seed=1)

    def test_sample_floor(self):
        with pytest.raises(ValueError):
            run_mi_estimates(gauss_config(), 100, seed=1)


class TestCiHonesty:
    def test_coverage_over_seeds(self):
        # 95% binomial intervals should cover a known rate in >= 90 of 100
        # independent runs
        cfg = qpsk_config(10.0, 0.0)
        truth = qpsk_baseline_ser(cfg.snr)
        covered = 0
        for seed in range(100):
            est = run_ser_x1(cfg, 0.0, 30_000, seed=seed)
            if abs(est.rate - truth) <= est.ci_halfwidth_95:
                covered += 1
        assert covered >= 90


class TestPairedMl:
    def test_two_step_close_to_ml(self):
        cfg = qpsk_config(15.0, 0.01, 2)
        two_ser, ml_ser, two_ber, ml_ber = run_paired_ml(cfg, 30_000, seed=41)
        # at this operating point the tag-side comparison is the
        # statistically meaningful one
        assert ml_ber.rate > 0.0
        assert abs(two_ber.rate - ml_ber.rate) <= 0.1 * ml_ber.rate
        assert two_ser.rate <= max(ml_ser.rate, 1e-4) * 1.1 + 1e-9
