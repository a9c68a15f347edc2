"""Seeded Monte Carlo harness for error rates and mutual-information checks.

Trials are partitioned into fixed-size batches, each driven by its own
counter-based (Philox) stream keyed by (seed, batch index).  Batch results
are integers (error counts) or per-batch partial sums merged in batch
order, so the outcome is a pure function of (config, alpha, strategy,
trials, seed) no matter how many worker threads run the batches.  The
worker count is capped by the MMAC_THREADS environment variable.

Detection thresholds mirror the analytics they are validated against:
synchronous runs use the bisection crossing, asynchronous runs the
high-SNR lambda/4 rule (the receiver does not know alpha), and truncated
runs the crossing at the shrunken equivalent SNR.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .analytics import detection_threshold, lambda_sync, lambda_truncated
from .model import ConfigError, SystemConfig, TxModulation, qpsk_alphabet, rng_stream
from .rate_region import mi_binary_awgn_fast, mixture_log2_density

__all__ = [
    "BATCH_SIZE",
    "ErrorEstimate",
    "TagStrategy",
    "worker_count",
    "run_ser_x1",
    "run_ber_x2",
    "run_mi_estimates",
    "run_paired_ml",
]

BATCH_SIZE = 1 << 14


class TagStrategy(str, Enum):
    FULL = "FULL"
    TRUNCATED = "TRUNCATED"


@dataclass(frozen=True)
class ErrorEstimate:
    """Monte Carlo error rate with its 95% binomial confidence half-width."""

    rate: float
    trials: int
    errors: int
    ci_halfwidth_95: float
    seed: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not (0 <= self.errors <= self.trials):
            raise ValueError("errors must lie in [0, trials]")

    @classmethod
    def from_counts(cls, errors: int, trials: int, seed: int) -> "ErrorEstimate":
        rate = errors / trials
        half = 1.96 * math.sqrt(rate * (1.0 - rate) / trials)
        return cls(rate=rate, trials=trials, errors=errors,
                   ci_halfwidth_95=half, seed=seed)


def worker_count() -> int:
    env = os.environ.get("MMAC_THREADS", "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"MMAC_THREADS must be an integer, got {env!r}") from exc
    return min(4, os.cpu_count() or 1)


def _map_batches(fn, n_batches: int):
    """Run fn(batch_index) for all batches; results returned in index order."""
    workers = worker_count()
    if workers == 1 or n_batches == 1:
        return [fn(i) for i in range(n_batches)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_batches)))


def _require_qpsk(config: SystemConfig) -> None:
    if config.tx_modulation is not TxModulation.QPSK:
        raise ConfigError("error-rate simulation requires tx_modulation=QPSK")


def _synth_batch(config: SystemConfig, alpha: float, rng: np.random.Generator,
                 n_frames: int):
    """Vectorised frame synthesis; draw order fixed for reproducibility.

    Order per batch: thetas, current bits, previous bits, symbol indices,
    noise.  The first sample of each frame carries the alpha-weighted mix
    of the previous and current tag values.
    """
    n = config.n
    if config.channel.is_random_phase:
        theta = rng.uniform(0.0, 2.0 * math.pi, n_frames)
    else:
        theta = np.full(n_frames, config.channel.fixed_phase)
    bits = rng.integers(0, 2, n_frames)
    prev_bits = rng.integers(0, 2, n_frames)
    sym_idx = rng.integers(0, 4, (n_frames, n))
    noise = (rng.standard_normal((n_frames, n))
             + 1j * rng.standard_normal((n_frames, n))) * math.sqrt(0.5)
    tx = qpsk_alphabet()[sym_idx]
    cur = np.where(bits == 1, config.tag.c1, config.tag.c0)
    prev = np.where(prev_bits == 1, config.tag.c1, config.tag.c0)
    m = np.repeat(cur[:, None], n, axis=1)
    m[:, 0] = alpha * prev + (1.0 - alpha) * cur
    g = config.backscatter_amp * np.exp(1j * theta)
    y = math.sqrt(config.snr) * tx * (1.0 + g[:, None] * m) + noise
    return y, sym_idx, bits


def _quadrant_idx(samples: np.ndarray) -> np.ndarray:
    re = np.real(samples) >= 0.0
    im = np.imag(samples) >= 0.0
    return np.where(im, np.where(re, 0, 1), np.where(re, 3, 2))


def run_ser_x1(config: SystemConfig, alpha: float, trials: int,
               seed: int) -> ErrorEstimate:
    """Symbol-error frequency of the quadrant detector.

    ``trials`` counts Tx symbol decisions; frames are synthesised in
    batches of BATCH_SIZE with the phase redrawn per frame (tag symbol).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not (0.0 <= alpha <= 0.5):
        raise ValueError(f"alpha must be in [0, 0.5], got {alpha}")
    _require_qpsk(config)
    n = config.n
    symbols_per_batch = BATCH_SIZE * n
    n_batches = (trials + symbols_per_batch - 1) // symbols_per_batch

    def one_batch(b: int) -> int:
        rng = rng_stream(seed, b)
        y, sym_idx, _ = _synth_batch(config, alpha, rng, BATCH_SIZE)
        wrong = (_quadrant_idx(y) != sym_idx).ravel()
        remaining = trials - b * symbols_per_batch
        if remaining < wrong.size:
            wrong = wrong[:remaining]
        return int(np.sum(wrong))

    errors = sum(_map_batches(one_batch, n_batches))
    return ErrorEstimate.from_counts(errors, trials, seed)


def _tag_threshold(config: SystemConfig, alpha: float,
                   strategy: TagStrategy) -> float:
    if strategy is TagStrategy.TRUNCATED:
        return detection_threshold(lambda_truncated(config)).threshold
    if alpha > 0.0:
        return lambda_sync(config) / 4.0
    return detection_threshold(lambda_sync(config)).threshold


def run_ber_x2(config: SystemConfig, alpha: float, strategy: TagStrategy | str,
               trials: int, seed: int,
               threshold: float | None = None) -> ErrorEstimate:
    """Tag bit-error frequency through the full two-step pipeline.

    ``trials`` counts tag bits (frames); the previous tag bit is redrawn
    independently each frame.  Cancellation uses the estimated symbols.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not (0.0 <= alpha <= 0.5):
        raise ValueError(f"alpha must be in [0, 0.5], got {alpha}")
    strategy = TagStrategy(strategy)
    _require_qpsk(config)
    if strategy is TagStrategy.TRUNCATED and config.n < 2:
        raise ValueError("TRUNCATED strategy requires n >= 2")
    thr = _tag_threshold(config, alpha, strategy) if threshold is None else threshold
    amp = math.sqrt(config.snr)
    lo_col = 1 if strategy is TagStrategy.TRUNCATED else 0
    n_batches = (trials + BATCH_SIZE - 1) // BATCH_SIZE

    def one_batch(b: int) -> int:
        rng = rng_stream(seed, b)
        y, _, bits = _synth_batch(config, alpha, rng, BATCH_SIZE)
        s = math.sqrt(0.5)
        est = np.where(np.real(y) >= 0, s, -s) + 1j * np.where(np.imag(y) >= 0, s, -s)
        est = est[:, lo_col:]
        resid = y[:, lo_col:] - amp * est
        y_tilde = (est.conj() * resid).sum(axis=1) / np.linalg.norm(est, axis=1)
        decisions = (2.0 * np.abs(y_tilde) ** 2 >= thr).astype(np.int64)
        wrong = decisions != bits
        remaining = trials - b * BATCH_SIZE
        if remaining < wrong.size:
            wrong = wrong[:remaining]
        return int(np.sum(wrong))

    errors = sum(_map_batches(one_batch, n_batches))
    return ErrorEstimate.from_counts(errors, trials, seed)


def run_mi_estimates(config: SystemConfig, samples: int,
                     seed: int) -> tuple[float, float]:
    """Plug-in Monte Carlo estimates of the sum rate and the tag rate.

    Sum rate: average of -log2 f(Y) over mixture draws minus the noise
    entropy.  Tag rate: binary-channel MI averaged over the drawn Tx
    envelope |X1|^2.  Returns (sum_rate_mc, tag_mi_mc) in bits.
    """
    if samples < 10_000:
        raise ValueError("need at least 1e4 samples for a stable estimate")
    if config.tx_modulation is not TxModulation.GAUSSIAN:
        raise ConfigError("MI estimation requires tx_modulation=GAUSSIAN")
    g = config.channel.coefficient() * math.sqrt(config.rho)
    v1 = abs(1.0 + g * config.tag.c1) ** 2 * config.snr + 1.0
    v0 = abs(1.0 + g * config.tag.c0) ** 2 * config.snr + 1.0
    c = config.g2_rho * config.snr
    sep = config.tag.separation
    n = config.n
    n_batches = (samples + BATCH_SIZE - 1) // BATCH_SIZE

    def one_batch(b: int) -> tuple[float, float, int]:
        rng = rng_stream(seed, b)
        count = min(BATCH_SIZE, samples - b * BATCH_SIZE)
        which = rng.integers(0, 2, count)
        v = np.where(which == 1, v1, v0)
        s = rng.gamma(float(n), v)
        sum_part = float(np.sum(-mixture_log2_density(s, config)))
        t = rng.gamma(float(n), 1.0, count)
        if c > 0.0:
            tag_part = float(np.sum(mi_binary_awgn_fast(1.0 / (c * t), sep)))
        else:
            tag_part = 0.0
        return sum_part, tag_part, count

    parts = _map_batches(one_batch, n_batches)
    sum_total = 0.0
    tag_total = 0.0
    for sum_part, tag_part, _ in parts:  # fixed order: deterministic merge
        sum_total += sum_part
        tag_total += tag_part
    sum_rate_mc = sum_total / samples - n * math.log2(math.pi * math.e)
    return sum_rate_mc, tag_total / samples


def run_paired_ml(config: SystemConfig, trials: int, seed: int
                  ) -> tuple[ErrorEstimate, ErrorEstimate, ErrorEstimate, ErrorEstimate]:
    """Two-step pipeline vs the exhaustive ML oracle on identical frames.

    Returns (two-step SER, ML SER, two-step BER, ML BER); ``trials``
    counts frames.  Synchronous only; N is capped by the ML oracle guard.
    """
    from .detector import ml_joint_batch

    if trials < 1:
        raise ValueError("trials must be >= 1")
    _require_qpsk(config)
    thr = detection_threshold(lambda_sync(config)).threshold
    amp = math.sqrt(config.snr)
    n = config.n
    n_batches = (trials + BATCH_SIZE - 1) // BATCH_SIZE

    def one_batch(b: int):
        rng = rng_stream(seed, b)
        count = min(BATCH_SIZE, trials - b * BATCH_SIZE)
        y, sym_idx, bits = _synth_batch(config, 0.0, rng, count)
        two_idx = _quadrant_idx(y)
        s = math.sqrt(0.5)
        est = np.where(np.real(y) >= 0, s, -s) + 1j * np.where(np.imag(y) >= 0, s, -s)
        resid = y - amp * est
        y_tilde = (est.conj() * resid).sum(axis=1) / np.linalg.norm(est, axis=1)
        two_bits = (2.0 * np.abs(y_tilde) ** 2 >= thr).astype(np.int64)
        ml_idx, ml_bits = ml_joint_batch(y, config)
        return (
            int(np.sum(two_idx != sym_idx)),
            int(np.sum(ml_idx != sym_idx)),
            int(np.sum(two_bits != bits)),
            int(np.sum(ml_bits != bits)),
        )

    totals = [0, 0, 0, 0]
    for part in _map_batches(one_batch, n_batches):
        for i, v in enumerate(part):
            totals[i] += v
    sym_trials = trials * n
    return (
        ErrorEstimate.from_counts(totals[0], sym_trials, seed),
        ErrorEstimate.from_counts(totals[1], sym_trials, seed),
        ErrorEstimate.from_counts(totals[2], trials, seed),
        ErrorEstimate.from_counts(totals[3], trials, seed),
    )
