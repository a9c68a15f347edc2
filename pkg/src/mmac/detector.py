"""Two-step joint detection: coherent QPSK decisions, then interference
cancellation, MRC and noncoherent energy detection of the tag bit.

The Tx decision is the conventional quadrant rule against the
sqrt(SNR)-scaled QPSK constellation (the receiver does not know the
instantaneous backscatter phase, so the unrotated regions are kept).
Cancellation always uses the *estimated* Tx symbols, so residual
interference under Tx errors propagates into the tag statistic exactly as
it would in hardware.  A small-N exhaustive maximum-likelihood search, with
the unknown phase marginalised by periodic quadrature, serves as the
optimality oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .analytics import detection_threshold, lambda_sync, lambda_truncated
from .model import ReceivedFrame, SystemConfig, qpsk_alphabet, qpsk_indices

__all__ = [
    "DegenerateInputError",
    "DetectionResult",
    "detect_tx",
    "cancel_and_mrc",
    "detect_tag",
    "detect_tag_truncated",
    "detect_frame",
    "ml_joint_oracle",
    "ml_joint_batch",
]

ML_MAX_N = 4
_ML_THETA_NODES = 256


class DegenerateInputError(ValueError):
    """The cancellation step received a zero-norm symbol estimate."""


@dataclass(frozen=True)
class DetectionResult:
    tx_estimates: np.ndarray
    tag_estimate: int
    test_statistic: float
    threshold_used: float

    def __post_init__(self):
        if self.test_statistic < 0.0:
            raise ValueError("test statistic must be >= 0")
        if not self.threshold_used > 0.0:
            raise ValueError("threshold must be positive")


def detect_tx(frame: ReceivedFrame, config: SystemConfig) -> np.ndarray:
    """Symbol-by-symbol quadrant decisions, returned as QPSK points."""
    return _quadrant_decide(frame.samples)


def _quadrant_decide(samples: np.ndarray) -> np.ndarray:
    s = math.sqrt(0.5)
    re = np.where(np.real(samples) >= 0.0, s, -s)
    im = np.where(np.imag(samples) >= 0.0, s, -s)
    return re + 1j * im


def cancel_and_mrc(frame: ReceivedFrame, tx_estimates: np.ndarray,
                   config: SystemConfig) -> complex:
    """Residual after cancelling sqrt(SNR) x^, combined by conjugate weights.

    With a correct estimate the result is
    e^{j theta} sqrt(SNR) |g| sqrt(rho) |x| X2 + CN(0, 1).
    """
    est = np.asarray(tx_estimates, dtype=complex)
    if est.shape != frame.samples.shape:
        raise ValueError("tx_estimates must match the frame length")
    norm = float(np.linalg.norm(est))
    if norm == 0.0:
        raise DegenerateInputError("zero-norm Tx estimate vector")
    residual = frame.samples - math.sqrt(config.snr) * est
    return complex(np.vdot(est, residual) / norm)


def detect_tag(y_tilde: complex, threshold: float) -> int:
    """Energy rule on 2|y~|^2; ties go to the reflecting hypothesis."""
    if not threshold > 0.0:
        raise ValueError("threshold must be positive")
    return int(2.0 * abs(y_tilde) ** 2 >= threshold)


def detect_frame(frame: ReceivedFrame, config: SystemConfig,
                 threshold: float | None = None) -> DetectionResult:
    """Full two-step pipeline on one frame."""
    if threshold is None:
        threshold = detection_threshold(lambda_sync(config)).threshold
    est = detect_tx(frame, config)
    y_tilde = cancel_and_mrc(frame, est, config)
    statistic = 2.0 * abs(y_tilde) ** 2
    return DetectionResult(
        tx_estimates=est,
        tag_estimate=int(statistic >= threshold),
        test_statistic=statistic,
        threshold_used=float(threshold),
    )


def detect_tag_truncated(frame: ReceivedFrame, tx_estimates: np.ndarray,
                         config: SystemConfig,
                         threshold: float | None = None) -> int:
    """Tag decision discarding the boundary (first) sample.

    Sidesteps inter-symbol interference at the cost of shrinking the
    equivalent detection SNR to 2 SNR |g|^2 rho (N-1); requires n >= 2.
    """
    if config.n < 2:
        raise ValueError("truncated detection requires n >= 2")
    if threshold is None:
        threshold = detection_threshold(lambda_truncated(config)).threshold
    est = np.asarray(tx_estimates, dtype=complex)[1:]
    norm = float(np.linalg.norm(est))
    if norm == 0.0:
        raise DegenerateInputError("zero-norm truncated Tx estimate vector")
    residual = frame.samples[1:] - math.sqrt(config.snr) * est
    y_tilde = complex(np.vdot(est, residual) / norm)
    return detect_tag(y_tilde, threshold)


# ---------------------------------------------------------------------------
# Exhaustive ML oracle (small N)
# ---------------------------------------------------------------------------

def _ml_hypotheses(config: SystemConfig):
    # fixed enumeration order: tag bit slow axis, symbol tuples lexicographic
    alphabet = qpsk_alphabet()
    for bit in (0, 1):
        for idx in product(range(4), repeat=config.n):
            yield bit, np.array([alphabet[i] for i in idx])


def ml_joint_oracle(frame: ReceivedFrame, config: SystemConfig
                    ) -> tuple[np.ndarray, int]:
    """Exhaustive joint search over 4^N x 2 hypotheses (N <= 4).

    The unknown backscatter phase is marginalised by 256-point periodic
    quadrature of the conditional likelihood.  Complexity is exponential
    in N, hence the guard; this exists as an optimality yardstick, not as
    a practical detector.
    """
    if config.n > ML_MAX_N:
        raise ValueError(f"ML oracle supports n <= {ML_MAX_N}, got {config.n}")
    best = None
    for bit, symbols in _ml_hypotheses(config):
        ll = _ml_loglik(frame.samples, symbols, config.tag.value(bit), config)
        if best is None or ll > best[0]:
            best = (ll, symbols, bit)
    _, symbols, bit = best
    return symbols, bit


def _ml_loglik(samples: np.ndarray, symbols: np.ndarray, tag_value: complex,
               config: SystemConfig) -> float:
    amp = math.sqrt(config.snr)
    r = samples - amp * symbols
    s = amp * config.backscatter_amp * tag_value * symbols
    base = -float(np.sum(np.abs(r) ** 2)) - float(np.sum(np.abs(s) ** 2))
    if np.all(s == 0.0):
        return base
    c = complex(np.sum(s * np.conj(r)))
    theta = 2.0 * math.pi * np.arange(_ML_THETA_NODES) / _ML_THETA_NODES
    exponents = 2.0 * np.real(np.exp(1j * theta) * c)
    peak = float(np.max(exponents))
    return base + peak + math.log(
        float(np.mean(np.exp(exponents - peak)))
    )


def ml_joint_batch(samples: np.ndarray, config: SystemConfig,
                   chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ML oracle over a (frames, N) sample matrix.

    Returns (tx symbol indices, tag bits).  Same hypothesis order and
    tie-breaking as :func:`ml_joint_oracle`.
    """
    samples = np.asarray(samples, dtype=complex)
    if samples.ndim != 2 or samples.shape[1] != config.n:
        raise ValueError("samples must have shape (frames, n)")
    if config.n > ML_MAX_N:
        raise ValueError(f"ML oracle supports n <= {ML_MAX_N}, got {config.n}")
    hypotheses = list(_ml_hypotheses(config))
    amp = math.sqrt(config.snr)
    theta = np.exp(2j * math.pi * np.arange(_ML_THETA_NODES) / _ML_THETA_NODES)
    n_frames = samples.shape[0]
    best_ll = np.full(n_frames, -np.inf)
    best_hyp = np.zeros(n_frames, dtype=np.int64)
    for h, (bit, symbols) in enumerate(hypotheses):
        s = amp * config.backscatter_amp * config.tag.value(bit) * symbols
        s_energy = float(np.sum(np.abs(s) ** 2))
        for lo in range(0, n_frames, chunk):
            sl = slice(lo, lo + chunk)
            r = samples[sl] - amp * symbols[None, :]
            base = -np.sum(np.abs(r) ** 2, axis=1) - s_energy
            if s_energy > 0.0:
                c = (r.conj() * s[None, :]).sum(axis=1)
                ex = 2.0 * np.real(c[:, None] * theta[None, :])
                peak = ex.max(axis=1)
                base = base + peak + np.log(np.mean(np.exp(ex - peak[:, None]), axis=1))
            better = base > best_ll[sl]
            best_ll[sl] = np.where(better, base, best_ll[sl])
            best_hyp[sl] = np.where(better, h, best_hyp[sl])
    bits = (best_hyp >= 4**config.n).astype(np.int64)
    sym_flat = best_hyp % 4**config.n
    idx = np.empty((n_frames, config.n), dtype=np.int64)
    for pos in range(config.n):
        shift = 4 ** (config.n - 1 - pos)
        idx[:, pos] = (sym_flat // shift) % 4
    return idx, bits
