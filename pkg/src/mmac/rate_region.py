"""Achievable-rate computations for the multiplicative multiple-access link.

Rates are in bits per tag-symbol interval (N Tx symbol durations).  The Tx
is modelled as Gaussian CN(0, I_N), the tag as an equiprobable binary
constellation {c1, c0}.  Conventions:

* per-user conditional rates h_i = N log2(1 + |1 + g sqrt(rho) c_i|^2 SNR)
* the tag-conditional link reduces to a binary-input AWGN channel whose
  1-D output density has two Gaussian lobes at +-|c1 - c0|/2
* the sum rate is the entropy of a two-component isotropic complex
  Gaussian mixture minus the noise entropy; isotropy collapses the
  2N-dimensional entropy integral to one radial dimension.

All operations need a fixed channel phase; configs with the "uniform"
phase marker are rejected.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .model import ConfigError, SystemConfig, TxModulation
from .numerics import DEFAULT_TOL, Tolerance, binary_entropy, integrate, m_of_n

__all__ = [
    "RatePoint",
    "RegionVertices",
    "SlopePair",
    "TdmaRates",
    "ApproxRegime",
    "h_i",
    "h_pair",
    "rate_tx_given_tag",
    "mi_binary_awgn",
    "mi_binary_awgn_fast",
    "rate_tag_given_tx",
    "rate_tag_lower_bound",
    "rate_tag_upper_bound",
    "sum_rate_exact",
    "sum_rate_lower_bound",
    "mixture_log2_density",
    "tdma_rates",
    "region_vertices",
    "region_area",
    "convexity_slopes",
    "approx_slopes",
]

logger = logging.getLogger(__name__)

_LOG2E = 1.0 / math.log(2.0)


class RatePoint(NamedTuple):
    """A (tag rate, Tx rate) pair in bits per tag-symbol interval."""

    r2: float
    r1: float


@dataclass(frozen=True)
class RegionVertices:
    """Corner points of the achievable polygon and its bracketing axis points.

    o-B1-C-D is the reported achievable polygon; A1/A2/B2 are the auxiliary
    axis points used by the convexity argument.  ``degenerate`` flags
    parameter sets where C would fall below the tag-rate axis (the inner
    bound is vacuous there); C is then reported with its raw coordinates.
    """

    o: RatePoint
    A1: RatePoint
    B1: RatePoint
    A2: RatePoint
    B2: RatePoint
    C: RatePoint
    D: RatePoint
    degenerate: bool = False

    def polygon(self) -> list[RatePoint]:
        return [self.o, self.B1, self.C, self.D]


class SlopePair(NamedTuple):
    """Absolute slopes of the two boundary chords used by the convexity test."""

    r1_slope: float
    r2_slope: float

    @property
    def strictly_convex(self) -> bool:
        return self.r1_slope > self.r2_slope


class TdmaRates(NamedTuple):
    r1_max: float
    r2_max: float
    r2_upper: float


class ApproxRegime(str, Enum):
    WEAK_CHANNEL = "WEAK_CHANNEL"
    LOW_SNR_BPSK = "LOW_SNR_BPSK"


def _tag_coeffs(config: SystemConfig) -> tuple[complex, complex]:
    g = config.channel.coefficient() * math.sqrt(config.rho)
    return 1.0 + g * config.tag.c1, 1.0 + g * config.tag.c0


def h_i(config: SystemConfig, which: str = "c1") -> float:
    """Conditional Tx rate with the tag frozen at c1 or c0 (bits per frame)."""
    if which not in ("c1", "c0"):
        raise ValueError(f"which must be 'c1' or 'c0', got {which!r}")
    a1, a0 = _tag_coeffs(config)
    a = a1 if which == "c1" else a0
    return config.n * math.log2(1.0 + abs(a) ** 2 * config.snr)


def h_pair(config: SystemConfig) -> tuple[float, float]:
    return h_i(config, "c1"), h_i(config, "c0")


def rate_tx_given_tag(config: SystemConfig) -> float:
    """Maximum Tx rate given the tag symbol is known: (h1 + h0) / 2."""
    h1, h0 = h_pair(config)
    return 0.5 * (h1 + h0)


# ---------------------------------------------------------------------------
# Binary-input AWGN channel
# ---------------------------------------------------------------------------

def mi_binary_awgn(noise_var: float, separation: float,
                   tol: Tolerance = DEFAULT_TOL) -> float:
    """Mutual information of the binary-input AWGN channel, in bits.

    ``noise_var`` is the complex noise variance after MRC normalisation;
    the two signal points sit at +-separation/2 on the real axis, so the
    decision-relevant real component carries variance noise_var/2.
    Computed as the output-density entropy integral minus the noise
    entropy.
    """
    if not (noise_var > 0.0 and math.isfinite(noise_var)):
        raise ValueError(f"noise_var must be positive and finite, got {noise_var}")
    if separation < 0.0:
        raise ValueError("separation must be >= 0")
    if separation == 0.0:
        return 0.0
    m = 0.5 * separation
    v = noise_var
    s = math.sqrt(0.5 * v)
    norm = 2.0 * math.sqrt(math.pi * v)

    # integrate in units of the lobe width so the tail map is well scaled
    def neg_psi_log2_psi(u):
        y = s * u
        e1 = -((y - m) ** 2) / v
        e2 = -((y + m) ** 2) / v
        big = max(e1, e2)
        psi = math.exp(big) * (math.exp(e1 - big) + math.exp(e2 - big)) / norm
        if psi <= 0.0:
            return 0.0
        return -psi * math.log2(psi) * s

    # symmetric density: twice the [0, inf) integral, split around the lobe
    mu = m / s
    seg = Tolerance(tol.abs_tol / 4, tol.rel_tol, tol.max_iters)
    cuts = sorted({0.0, max(0.0, mu - 10.0), mu + 10.0})
    ent = 0.0
    for a, b in zip(cuts, cuts[1:]):
        ent += integrate(neg_psi_log2_psi, a, b, seg)
    ent += integrate(neg_psi_log2_psi, cuts[-1], math.inf, seg)
    ent *= 2.0
    mi = ent - 0.5 * math.log2(math.pi * math.e * v)
    return min(1.0, max(0.0, mi))


_HERMITE_NODES, _HERMITE_WEIGHTS = np.polynomial.hermite_e.hermegauss(256)
_HERMITE_WEIGHTS = _HERMITE_WEIGHTS / math.sqrt(2.0 * math.pi)


def mi_binary_awgn_fast(noise_var, separation: float):
    """Vectorised Gauss-Hermite evaluation of :func:`mi_binary_awgn`.

    Used where the binary MI is needed for many noise variances at once
    (Monte Carlo averaging over the Tx envelope).  Agreement with the
    adaptive-quadrature route is checked in the tests.
    """
    v = np.asarray(noise_var, dtype=float)
    if np.any(v <= 0.0):
        raise ValueError("noise_var must be positive")
    u = (0.5 * separation) / np.sqrt(0.5 * v)  # per-branch amplitude/sigma
    u = np.atleast_1d(np.asarray(u, dtype=float)).ravel()
    out = np.ones_like(u)
    active = np.flatnonzero(u < 8.0)  # beyond, 1 - MI < 1e-13
    z = _HERMITE_NODES[None, :]
    chunk = 16384  # bounds the (rows x nodes) temporaries
    for lo in range(0, active.size, chunk):
        idx = active[lo:lo + chunk]
        ua = u[idx][:, None]
        t = -2.0 * ua * ua - 2.0 * ua * z
        # log2(1 + e^t), stable on both sides
        soft = np.where(t > 0.0, t, 0.0) + np.log1p(np.exp(-np.abs(t)))
        out[idx] = 1.0 - (soft / math.log(2.0)) @ _HERMITE_WEIGHTS
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if np.isscalar(noise_var) else out.reshape(np.shape(noise_var))


_LAGUERRE_NODES, _LAGUERRE_WEIGHTS = np.polynomial.laguerre.laggauss(64)
_GAUSSIAN_FALLBACK_DRAWS = 1 << 18
_GAUSSIAN_FALLBACK_SEED = 0x4D4D4143  # fixed: keeps the op pure


def rate_tag_given_tx(config: SystemConfig, tol: Tolerance = DEFAULT_TOL) -> float:
    """Maximum tag rate given the Tx sequence is known (bits per frame).

    Expectation of the binary-AWGN MI over the Tx envelope |X1|^2, which is
    Gamma(N, 1) for the Gaussian input.  64-node Laguerre quadrature; for
    N > 64 the Gamma bulk outruns the node range and a seeded Monte Carlo
    average is used instead.
    """
    _require_gaussian(config)
    c = config.g2_rho * config.snr
    if c == 0.0:
        return 0.0
    d = config.tag.separation
    n = config.n
    if n <= 64:
        log_gamma_n = math.lgamma(n)
        total = 0.0
        for x, w in zip(_LAGUERRE_NODES, _LAGUERRE_WEIGHTS):
            weight = math.exp(math.log(w) + (n - 1) * math.log(x) - log_gamma_n)
            total += weight * mi_binary_awgn(1.0 / (c * x), d, tol)
        return min(1.0, max(0.0, total))
    rng = np.random.Generator(np.random.Philox(key=_GAUSSIAN_FALLBACK_SEED))
    t = rng.gamma(n, 1.0, _GAUSSIAN_FALLBACK_DRAWS)
    return float(np.mean(mi_binary_awgn_fast(1.0 / (c * t), d)))


def rate_tag_lower_bound(config: SystemConfig) -> float:
    """Closed-form lower bound on the tag rate via the hard-decision channel.

    1 - H_b(p_err) with the N-branch diversity error probability
    p_err = ((1-mu)/2)^N sum_i C(N-1+i, i) ((1+mu)/2)^i and
    mu = sqrt(a / (1+a)), a = |g|^2 rho SNR |c1-c0|^2 / 4.
    """
    a = config.g2_rho * config.snr * config.tag.separation**2 / 4.0
    mu = math.sqrt(a / (1.0 + a))
    n = config.n
    lo = (1.0 - mu) / 2.0
    hi = (1.0 + mu) / 2.0
    p = (lo**n) * sum(math.comb(n - 1 + i, i) * hi**i for i in range(n))
    if p > 0.5:
        # cannot occur for a true error probability; clamp and flag
        logger.warning("hard-decision error argument %.6g clamped to 0.5", p)
        p = 0.5
    p = max(0.0, p)
    return min(1.0, max(0.0, 1.0 - binary_entropy(p)))


def rate_tag_upper_bound(config: SystemConfig) -> float:
    """Closed-form cap on the tag rate: min(log2(1 + N |g|^2 rho SNR), 1)."""
    return min(math.log2(1.0 + config.n * config.g2_rho * config.snr), 1.0)


# ---------------------------------------------------------------------------
# Sum rate
# ---------------------------------------------------------------------------

def _mixture_variances(config: SystemConfig) -> tuple[float, float]:
    a1, a0 = _tag_coeffs(config)
    return abs(a1) ** 2 * config.snr + 1.0, abs(a0) ** 2 * config.snr + 1.0


def mixture_log2_density(s, config: SystemConfig):
    """log2 of the received mixture density at squared radius ``s``.

    Both mixture components are isotropic in C^N, so the density depends on
    the received vector only through s = |y|^2.
    """
    v1, v0 = _mixture_variances(config)
    n = config.n
    s = np.asarray(s, dtype=float)
    a1 = -n * math.log(math.pi * v1) - s / v1
    a0 = -n * math.log(math.pi * v0) - s / v0
    return (math.log(0.5) + np.logaddexp(a1, a0)) * _LOG2E


def sum_rate_lower_bound(config: SystemConfig) -> float:
    """Jensen lower bound on the sum rate: (h1 + h0) / 2."""
    return rate_tx_given_tag(config)


def sum_rate_exact(config: SystemConfig, tol: Tolerance = DEFAULT_TOL) -> float:
    """Exact sum rate h(Y) - h(Z) via the 1-D radial entropy integral."""
    _require_gaussian(config)
    v1, v0 = _mixture_variances(config)
    n = config.n
    if abs(v1 - v0) <= 1e-12 * max(v1, v0):
        # identical components: Jensen equality, no quadrature needed
        return sum_rate_lower_bound(config)
    scale = n * max(v1, v0)  # integrate in units of the widest component
    log_gamma_n = math.lgamma(n)

    def integrand(u):
        s = scale * u
        if s <= 0.0:
            return 0.0
        ls = math.log(s)
        lp1 = (n - 1) * ls - s / v1 - log_gamma_n - n * math.log(v1)
        lp0 = (n - 1) * ls - s / v0 - log_gamma_n - n * math.log(v0)
        big = max(lp1, lp0)
        p = 0.5 * math.exp(big) * (math.exp(lp1 - big) + math.exp(lp0 - big))
        a1 = -n * math.log(math.pi * v1) - s / v1
        a0 = -n * math.log(math.pi * v0) - s / v0
        bigf = max(a1, a0)
        log2f = (math.log(0.5) + bigf + math.log(math.exp(a1 - bigf) + math.exp(a0 - bigf))) * _LOG2E
        return -p * log2f * scale

    ent = integrate(integrand, 0.0, math.inf, tol)
    rate = ent - n * math.log2(math.pi * math.e)
    return max(rate, sum_rate_lower_bound(config))


def _require_gaussian(config: SystemConfig) -> None:
    if config.tx_modulation is not TxModulation.GAUSSIAN:
        raise ConfigError("rate computation requires tx_modulation=GAUSSIAN")


# ---------------------------------------------------------------------------
# TDMA comparison, vertices, convexity
# ---------------------------------------------------------------------------

def tdma_rates(config: SystemConfig) -> TdmaRates:
    """Per-user maxima under time sharing.

    Phase 1 freezes the tag on its better symbol: r1_max = max(h1, h0).
    Phase 2 sends an unmodulated carrier so the tag sees a binary AWGN
    channel with noise variance 1 / (N |g|^2 rho SNR); r2_upper caps it by
    the Gaussian-input capacity and the 1-bit alphabet limit.
    """
    h1, h0 = h_pair(config)
    r1_max = max(h1, h0)
    c = config.n * config.g2_rho * config.snr
    r2_max = 0.0 if c == 0.0 else mi_binary_awgn(1.0 / c, config.tag.separation)
    return TdmaRates(r1_max=r1_max, r2_max=r2_max, r2_upper=rate_tag_upper_bound(config))


def region_vertices(config: SystemConfig) -> RegionVertices:
    """Corner points of the achievable region and its bracketing axis points."""
    h1, h0 = h_pair(config)
    h_hi = max(h1, h0)
    h_lo = 0.5 * (h1 + h0)
    big_h_lo = rate_tag_lower_bound(config)
    big_h_hi = rate_tag_upper_bound(config)
    tdma = tdma_rates(config)
    c_r1 = h_lo - big_h_lo
    degenerate = c_r1 < 0.0
    if degenerate:
        logger.warning(
            "degenerate region: sum-rate bound %.6g below tag bound %.6g",
            h_lo, big_h_lo,
        )
    return RegionVertices(
        o=RatePoint(0.0, 0.0),
        A1=RatePoint(0.0, h_lo),
        B1=RatePoint(0.0, h_hi),
        A2=RatePoint(big_h_lo, 0.0),
        B2=RatePoint(big_h_hi, 0.0),
        C=RatePoint(big_h_lo, c_r1),
        D=RatePoint(tdma.r2_max, 0.0),
        degenerate=degenerate,
    )


def region_area(vertices: RegionVertices) -> float:
    """Shoelace area of the achievable polygon o-B1-C-D."""
    poly = vertices.polygon()
    area = 0.0
    for (x1, y1), (x2, y2) in zip(poly, poly[1:] + poly[:1]):
        area += x1 * y2 - x2 * y1
    return 0.5 * abs(area)


def convexity_slopes(config: SystemConfig) -> SlopePair:
    """Chord slopes whose comparison certifies strict convexity.

    r1 = max(h1,h0)/H_upper, r2 = 1 + (max(h1,h0) - (h1+h0)/2)/H_lower;
    the region strictly contains the TDMA triangle iff r1 > r2.
    """
    if config.channel.magnitude == 0.0:
        raise ConfigError("convexity slopes need a nonzero backscatter channel")
    h1, h0 = h_pair(config)
    h_hi = max(h1, h0)
    h_lo = 0.5 * (h1 + h0)
    big_h_lo = rate_tag_lower_bound(config)
    big_h_hi = rate_tag_upper_bound(config)
    if big_h_lo <= 0.0:
        raise ConfigError("tag lower bound vanished; slopes undefined")
    return SlopePair(r1_slope=h_hi / big_h_hi, r2_slope=1.0 + (h_hi - h_lo) / big_h_lo)


def approx_slopes(config: SystemConfig, regime: ApproxRegime) -> SlopePair:
    """Closed-form slope approximations in the named asymptotic regime.

    WEAK_CHANNEL (|g|^2 << 1):
        r1 ~ ln2 log2(1+SNR) / (|g|^2 rho SNR)
        r2 ~ L'(1+SNR) |g^2 rho (|c1|^2-|c0|^2) + g-term| over the
             diversity-weighted tag bound, with M(N) from the binomial sum.
    LOW_SNR_BPSK (SNR -> 0, tag = {1,-1}): the slope difference expands to
        max(|1+gs|^2, |1-gs|^2) - (N ln2/(2M(N))^2)||1+gs|^2-|1-gs|^2| - |gs|^2
    with gs = g sqrt(rho); returned as a pair whose difference equals that
    expansion.
    """
    regime = ApproxRegime(regime)
    snr = config.snr
    g2rho = config.g2_rho
    if g2rho == 0.0:
        raise ConfigError("approximations need a nonzero backscatter channel")
    n = config.n
    mn = m_of_n(n)
    gs = config.channel.coefficient() * math.sqrt(config.rho)
    if regime is ApproxRegime.WEAK_CHANNEL:
        r1 = math.log(2.0) * math.log2(1.0 + snr) / (g2rho * snr)
        c1, c0 = config.tag.c1, config.tag.c0
        lprime = 1.0 / ((1.0 + snr) * math.log(2.0))
        num = lprime * abs(
            g2rho * (abs(c1) ** 2 - abs(c0) ** 2)
            + config.backscatter_amp * ((c1 - c0) * cmath.exp(1j * config.channel.fixed_phase)).real
        )
        den = (1.0 / n) * (g2rho / (2.0 * math.log(2.0))) * (mn * abs(c1 - c0)) ** 2
        return SlopePair(r1_slope=r1, r2_slope=num / den)
    # LOW_SNR_BPSK
    p_amp = abs(1.0 + gs) ** 2
    m_amp = abs(1.0 - gs) ** 2
    r1 = max(p_amp, m_amp)
    r2 = (n * math.log(2.0) / (2.0 * mn) ** 2) * abs(p_amp - m_amp) + g2rho
    return SlopePair(r1_slope=r1, r2_slope=r2)
