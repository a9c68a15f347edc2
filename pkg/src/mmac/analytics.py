"""Closed-form error-rate expressions for the two-step detector.

Conventions, all in normalised units (noise variance 1, amplitude
sqrt(SNR), QPSK Tx, on/off tag unless stated otherwise):

* the tag-detection statistic is 2|y~|^2, central chi-squared(2) without
  the tag and noncentral chi-squared(2, lambda) with it, where
  lambda = 2 SNR |g|^2 rho N is the equivalent tag-detection SNR;
* the detection threshold Lambda(lambda) is the crossing point of those
  two densities (bisection), with the high-SNR shortcut lambda / 4;
* conditional Tx symbol-error terms are the circular integral
  M(SNR, x) = (1/pi) int Q(s(c+x cos t)) dt - (1/2pi) int Q(..cos)Q(..sin) dt
  with s = sqrt(2 SNR), c = 1/sqrt(2), evaluated by doubling trapezoid
  quadrature (spectrally accurate for periodic integrands).

The symbol-error bounds attach half of the conditional-term envelopes to
the interference-free baseline, so they collapse onto the exact rate as
the backscatter path vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import SystemConfig
from .numerics import (
    DEFAULT_TOL,
    Tolerance,
    BracketError,
    bessel_i0_log,
    bisect_root,
    marcum_q1,
    q_function,
)

__all__ = [
    "NumericalError",
    "BoundPair",
    "ThresholdMethod",
    "ThresholdResult",
    "lambda_sync",
    "lambda_async",
    "lambda_truncated",
    "detection_threshold",
    "m_integral",
    "m_upper",
    "m_lower",
    "qpsk_baseline_ser",
    "ser_x1_sync",
    "ser_x1_bounds_sync",
    "ser_x1_asymptotic_bounds",
    "frame_success_probs",
    "ber_x2_bounds_sync",
    "ber_x2_asymptotic",
    "ser_x1_async",
    "ser_x1_async_asymptotic_bounds",
    "ber_x2_bounds_async",
]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)


class NumericalError(RuntimeError):
    """A numerical routine inside the analytics failed."""


@dataclass(frozen=True)
class BoundPair:
    """A (lower, upper) probability pair with the ordering invariant."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (-1e-12 <= self.lower <= self.upper <= 1.0 + 1e-12):
            raise ValueError(
                f"invalid bound pair: lower={self.lower!r}, upper={self.upper!r}"
            )
        object.__setattr__(self, "lower", min(1.0, max(0.0, self.lower)))
        object.__setattr__(self, "upper", min(1.0, max(0.0, self.upper)))

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    @property
    def ratio(self) -> float:
        return self.upper / self.lower


class ThresholdMethod(str, Enum):
    BISECTION = "BISECTION"
    ASYMPTOTIC = "ASYMPTOTIC"
    AUTO = "AUTO"


@dataclass(frozen=True)
class ThresholdResult:
    lam: float
    threshold: float
    method: ThresholdMethod

    def __post_init__(self):
        if not self.threshold > 0.0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if self.method is ThresholdMethod.ASYMPTOTIC and self.threshold != self.lam / 4.0:
            raise ValueError("asymptotic threshold must equal lambda / 4")


# ---------------------------------------------------------------------------
# Equivalent detection SNRs and the threshold
# ---------------------------------------------------------------------------

def lambda_sync(config: SystemConfig) -> float:
    """Equivalent tag-detection SNR: 2 SNR |g|^2 rho N."""
    return 2.0 * config.snr * config.g2_rho * config.n


def lambda_async(config: SystemConfig, alpha: float) -> tuple[float, float]:
    """Boundary-interference noncentralities (lambda0, lambda1).

    lambda0 governs the false-alarm side (only the previous symbol leaks
    in, amplitude alpha on one of N samples); lambda1 the detection side
    (the current symbol loses an alpha sliver of its first sample).
    """
    if not (0.0 <= alpha <= 0.5):
        raise ValueError(f"alpha must be in [0, 0.5], got {alpha}")
    base = 2.0 * config.snr * config.g2_rho
    n = config.n
    lam0 = base * alpha * alpha / n
    lam1 = base * (n + alpha * alpha / n - 2.0 * alpha)
    return lam0, lam1


def lambda_truncated(config: SystemConfig) -> float:
    """Equivalent SNR when the straddled first sample is discarded."""
    if config.n < 2:
        raise ValueError("truncated detection requires n >= 2")
    return 2.0 * config.snr * config.g2_rho * (config.n - 1)


def detection_threshold(
    lam: float,
    tol: Tolerance | None = None,
    method: ThresholdMethod | str = ThresholdMethod.BISECTION,
) -> ThresholdResult:
    """Energy-detection threshold Lambda(lambda).

    BISECTION solves log I0(sqrt(lambda x)) = lambda / 2, the crossing of
    the central and noncentral chi-squared(2) densities (below it the
    central density dominates, above it the noncentral one does).
    ASYMPTOTIC returns lambda / 4, the high-SNR limit; AUTO switches to it
    for lambda >= 10.
    """
    if not (lam > 0.0 and math.isfinite(lam)):
        raise ValueError(f"lambda must be positive and finite, got {lam}")
    method = ThresholdMethod(method)
    if method is ThresholdMethod.AUTO:
        method = ThresholdMethod.ASYMPTOTIC if lam >= 10.0 else ThresholdMethod.BISECTION
    if method is ThresholdMethod.ASYMPTOTIC:
        return ThresholdResult(lam=lam, threshold=lam / 4.0, method=method)
    tol = tol or Tolerance(abs_tol=1e-10, rel_tol=1e-12)

    def gap(x):
        # log f_chi2(x) - log f_ncchi2(x); positive below the crossing
        return lam / 2.0 - bessel_i0_log(math.sqrt(lam * x))

    lo, hi = max(1e-6, lam / 8.0), lam + 50.0
    try:
        try:
            root = bisect_root(gap, lo, hi, tol)
        except BracketError:
            root = bisect_root(gap, 1e-6, 10.0 * lam + 100.0, tol)
    except BracketError as exc:
        raise NumericalError(f"no density crossing found for lambda={lam}") from exc
    return ThresholdResult(lam=lam, threshold=root, method=ThresholdMethod.BISECTION)


# ---------------------------------------------------------------------------
# Conditional symbol-error integral and its envelopes
# ---------------------------------------------------------------------------

def m_integral(snr: float, x: float, tol: float = 1e-10, max_nodes: int = 1 << 16) -> float:
    """Phase-averaged QPSK symbol-error probability with tag amplitude x.

    x = 0 reduces exactly to the interference-free QPSK symbol error rate
    2Q(sqrt(SNR)) - Q^2(sqrt(SNR)).  Trapezoid quadrature over the phase
    period, node count doubled until the estimate moves less than ``tol``.
    """
    if not (snr > 0.0 and math.isfinite(snr)):
        raise ValueError(f"snr must be positive and finite, got {snr}")
    if x < 0.0:
        raise ValueError("tag amplitude must be >= 0")
    root = math.sqrt(snr)
    if x == 0.0:
        q = q_function(root)
        return 2.0 * q - q * q
    s = math.sqrt(2.0 * snr)
    n = 512
    prev = None
    while n <= max_nodes:
        theta = 2.0 * math.pi * np.arange(n) / n
        qc = q_function(s * (_INV_SQRT2 + x * np.cos(theta)))
        qs = q_function(s * (_INV_SQRT2 + x * np.sin(theta)))
        val = 2.0 * float(np.mean(qc)) - float(np.mean(qc * qs))
        if prev is not None and abs(val - prev) < tol:
            return min(1.0, max(0.0, val))
        prev = val
        n *= 2
    raise NumericalError(f"phase integral did not settle below {tol}")


def m_upper(snr: float, x: float) -> float:
    """Envelope from the worst-case phase: 2Q(s(c-x)) - Q^2(s(c+x))."""
    s = math.sqrt(2.0 * snr)
    return 2.0 * q_function(s * (_INV_SQRT2 - x)) - q_function(s * (_INV_SQRT2 + x)) ** 2


def m_lower(snr: float, x: float) -> float:
    """Envelope with both decision margins maximal: 2Q(s(c+x)) - Q^2(s(c+x))."""
    q = q_function(math.sqrt(2.0 * snr) * (_INV_SQRT2 + x))
    return 2.0 * q - q * q


def qpsk_baseline_ser(snr: float) -> float:
    """Interference-free QPSK symbol error rate."""
    q = q_function(math.sqrt(snr))
    return 2.0 * q - q * q


# ---------------------------------------------------------------------------
# Synchronous Tx symbol error rate
# ---------------------------------------------------------------------------

def ser_x1_sync(config: SystemConfig) -> float:
    """Exact Tx SER: half baseline, half the phase-averaged integral."""
    snr = config.snr
    return 0.5 * (qpsk_baseline_ser(snr) + m_integral(snr, config.backscatter_amp))


def ser_x1_bounds_sync(config: SystemConfig) -> BoundPair:
    """Envelope bounds on the Tx SER.

    Half of each phase envelope rides on the exact interference-free half,
    so both bounds collapse onto the exact SER as |g| -> 0.
    """
    snr = config.snr
    x = config.backscatter_amp
    base = q_function(math.sqrt(snr)) - 0.5 * q_function(math.sqrt(snr)) ** 2
    return BoundPair(
        lower=base + 0.5 * m_lower(snr, x),
        upper=min(1.0, base + 0.5 * m_upper(snr, x)),
    )


def ser_x1_asymptotic_bounds(config: SystemConfig) -> BoundPair:
    """High-SNR envelope: Q(sqrt(SNR)) below, worst-phase Q above."""
    snr = config.snr
    x = config.backscatter_amp
    return BoundPair(
        lower=q_function(math.sqrt(snr)),
        upper=min(1.0, q_function(math.sqrt(2.0 * snr) * (_INV_SQRT2 - x))),
    )


def frame_success_probs(config: SystemConfig) -> tuple[float, BoundPair]:
    """Whole-frame Tx success probability, conditioned on the tag bit.

    Exact for the silent bit; bounded through the phase envelopes for the
    reflecting bit.
    """
    snr = config.snr
    x = config.backscatter_amp
    n = config.n
    p_bit0 = (1.0 - qpsk_baseline_ser(snr)) ** n
    lo = max(0.0, 1.0 - m_upper(snr, x)) ** n
    hi = (1.0 - m_lower(snr, x)) ** n
    return p_bit0, BoundPair(lower=lo, upper=hi)


# ---------------------------------------------------------------------------
# Synchronous tag bit error rate
# ---------------------------------------------------------------------------

def ber_x2_bounds_sync(
    config: SystemConfig,
    method: ThresholdMethod | str = ThresholdMethod.BISECTION,
) -> BoundPair:
    """Bounds on the tag BER through the full two-step pipeline.

    The lower bound keeps only the correct-cancellation event; the upper
    bound adds half of the Tx frame-error probability (a wrong residual
    decides the tag no better than a fair coin).
    """
    lam = lambda_sync(config)
    thr = detection_threshold(lam, method=method).threshold
    false_alarm = math.exp(-thr / 2.0)
    miss = 1.0 - marcum_q1(math.sqrt(lam), math.sqrt(thr))
    p_ok0, p_ok1 = frame_success_probs(config)
    lower = 0.5 * (false_alarm * p_ok0 + miss * p_ok1.lower)
    upper = 0.5 * (false_alarm + miss) * p_ok1.upper \
        + 0.5 * (1.0 - 0.5 * (p_ok0 + p_ok1.lower))
    return BoundPair(lower=lower, upper=min(1.0, upper))


def ber_x2_asymptotic(config: SystemConfig) -> float:
    """High-SNR tag BER with the threshold at lambda / 4."""
    lam = lambda_sync(config)
    root = math.sqrt(lam)
    return 0.5 * (math.exp(-lam / 8.0) + 1.0 - marcum_q1(root, root / 2.0))


# ---------------------------------------------------------------------------
# Asynchronous variants
# ---------------------------------------------------------------------------

def ser_x1_async(config: SystemConfig, alpha: float) -> float:
    """Tx SER when the tag boundary lags by ``alpha`` of a Tx symbol.

    One of every N samples straddles two tag symbols; its four equally
    likely bit pairs see tag amplitudes {0, alpha, 1-alpha, 1} times
    |g| sqrt(rho).  Collapses to the synchronous rate at alpha = 0.
    """
    if not (0.0 <= alpha <= 0.5):
        raise ValueError(f"alpha must be in [0, 0.5], got {alpha}")
    snr = config.snr
    x = config.backscatter_amp
    n = config.n
    w_bulk = 1.0 / (4.0 * n) + (n - 1.0) / (2.0 * n)
    bulk = m_integral(snr, 0.0) + m_integral(snr, x)
    edge = m_integral(snr, alpha * x) + m_integral(snr, (1.0 - alpha) * x)
    return w_bulk * bulk + edge / (4.0 * n)


def ser_x1_async_asymptotic_bounds(config: SystemConfig) -> BoundPair:
    """High-SNR envelope of the asynchronous Tx SER."""
    n = config.n
    scale = (2.0 * n - 1.0) / (2.0 * n)
    sync = ser_x1_asymptotic_bounds(config)
    return BoundPair(lower=scale * sync.lower, upper=scale * sync.upper)


def ber_x2_bounds_async(config: SystemConfig, alpha: float) -> BoundPair:
    """High-SNR bounds on the asynchronous tag BER (threshold lambda/4).

    The core term averages the four boundary bit pairs exactly; the upper
    bound adds half of the worst-case Tx frame-error probability.  Only
    meaningful in the high-SNR regime (the spec of the underlying
    asymptotics), SNR >= 10 dB in practice.
    """
    lam = lambda_sync(config)
    lam0, lam1 = lambda_async(config, alpha)
    thr = lam / 4.0
    root_thr = math.sqrt(thr)
    core = 0.25 * (
        2.0
        + math.exp(-thr / 2.0)
        + marcum_q1(math.sqrt(lam0), root_thr)
        - marcum_q1(math.sqrt(lam), root_thr)
        - marcum_q1(math.sqrt(lam1), root_thr)
    )
    _, p_ok1 = frame_success_probs(config)
    return BoundPair(
        lower=max(0.0, core),
        upper=min(1.0, core + 0.5 * (1.0 - p_ok1.lower)),
    )
