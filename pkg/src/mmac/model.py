"""System parameterisation and received-sample synthesis.

Works entirely in the normalised link model: unit noise variance per
complex sample, transmit amplitude sqrt(SNR), and the backscatter path
collapsed into the relative channel |g| e^{j theta} scaled by sqrt(rho).
A frame is one tag-symbol interval of N receiver samples; in the
asynchronous case the first sample straddles the previous and current tag
symbols with weights alpha and 1 - alpha.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

__all__ = [
    "ConfigError",
    "TxModulation",
    "TagConstellation",
    "ON_OFF",
    "BPSK_TAG",
    "RelativeChannel",
    "UNIFORM_PHASE",
    "SystemConfig",
    "ReceivedFrame",
    "qpsk_alphabet",
    "qpsk_indices",
    "rng_stream",
    "draw_tx_symbols",
    "draw_tag_bit",
    "draw_theta",
    "synthesize_frame",
    "parse_config",
    "load_config",
]

_TWO_PI = 2.0 * math.pi

UNIFORM_PHASE = "uniform"


class ConfigError(ValueError):
    """Invalid system configuration or config file."""


class TxModulation(str, Enum):
    QPSK = "QPSK"
    GAUSSIAN = "GAUSSIAN"


@dataclass(frozen=True)
class TagConstellation:
    """Binary tag constellation {c1, c0}; passive reflection caps |c| at 1."""

    c1: complex = 1.0 + 0.0j
    c0: complex = 0.0 + 0.0j

    def __post_init__(self):
        if abs(self.c1) > 1.0 + 1e-12 or abs(self.c0) > 1.0 + 1e-12:
            raise ConfigError(
                f"tag amplitudes must satisfy |c| <= 1, got {self.c1}, {self.c0}"
            )

    @property
    def separation(self) -> float:
        return abs(self.c1 - self.c0)

    def value(self, bit: int) -> complex:
        return self.c1 if bit else self.c0


ON_OFF = TagConstellation(1.0 + 0.0j, 0.0 + 0.0j)
BPSK_TAG = TagConstellation(1.0 + 0.0j, -1.0 + 0.0j)


@dataclass(frozen=True)
class RelativeChannel:
    """Relative backscatter channel: magnitude |g| and phase theta.

    phase may be the marker "uniform", meaning the phase is redrawn
    uniformly on [0, 2pi) for every tag symbol (noncoherent operation).
    Numeric phases are normalised into [0, 2pi).
    """

    magnitude: float
    phase: float | str = 0.0

    def __post_init__(self):
        if not (self.magnitude >= 0.0 and math.isfinite(self.magnitude)):
            raise ConfigError(f"|g| must be finite and >= 0, got {self.magnitude}")
        if isinstance(self.phase, str):
            if self.phase != UNIFORM_PHASE:
                raise ConfigError(f"phase marker must be {UNIFORM_PHASE!r}")
        else:
            if not math.isfinite(self.phase):
                raise ConfigError("phase must be finite")
            object.__setattr__(self, "phase", self.phase % _TWO_PI)

    @property
    def is_random_phase(self) -> bool:
        return isinstance(self.phase, str)

    @property
    def fixed_phase(self) -> float:
        if self.is_random_phase:
            raise ConfigError("operation requires a fixed channel phase")
        return float(self.phase)

    def coefficient(self, theta: float | None = None) -> complex:
        th = self.fixed_phase if theta is None else theta
        return self.magnitude * cmath.exp(1j * th)


@dataclass(frozen=True)
class SystemConfig:
    """Parameter bundle consumed by every rate / detection operation."""

    snr: float
    rho: float
    channel: RelativeChannel
    n: int
    tag: TagConstellation = field(default_factory=lambda: ON_OFF)
    tx_modulation: TxModulation = TxModulation.QPSK

    def __post_init__(self):
        if not (self.snr > 0.0 and math.isfinite(self.snr)):
            raise ConfigError(f"snr must be positive and finite, got {self.snr}")
        if not (0.0 <= self.rho <= 1.0):
            raise ConfigError(f"rho must be in [0,1], got {self.rho}")
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            raise ConfigError(f"n must be an integer >= 1, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "tx_modulation", TxModulation(self.tx_modulation))

    @classmethod
    def from_db(cls, snr_db: float, **kwargs) -> "SystemConfig":
        return cls(snr=10.0 ** (snr_db / 10.0), **kwargs)

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.snr)

    @property
    def g_mag2(self) -> float:
        return self.channel.magnitude**2

    @property
    def g2_rho(self) -> float:
        """Backscatter power gain |g|^2 rho."""
        return self.g_mag2 * self.rho

    @property
    def backscatter_amp(self) -> float:
        """Backscatter amplitude |g| sqrt(rho)."""
        return self.channel.magnitude * math.sqrt(self.rho)


@dataclass(frozen=True)
class ReceivedFrame:
    """One tag-symbol interval: N received samples plus ground truth."""

    samples: np.ndarray
    tx_truth: np.ndarray
    tag_truth_current: int
    tag_truth_previous: int
    alpha: float
    theta_realization: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        tx = np.asarray(self.tx_truth, dtype=complex)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "tx_truth", tx)
        if samples.shape != tx.shape or samples.ndim != 1:
            raise ValueError("samples and tx_truth must be 1-D of the same length")
        if not (0.0 <= self.alpha <= 0.5):
            raise ValueError(f"alpha must be in [0, 0.5], got {self.alpha}")
        if self.tag_truth_current not in (0, 1) or self.tag_truth_previous not in (0, 1):
            raise ValueError("tag bits must be 0 or 1")

    @property
    def n(self) -> int:
        return self.samples.shape[0]


def qpsk_alphabet() -> np.ndarray:
    """Unit-power QPSK points, Gray-ordered (++, -+, --, +-)."""
    s = math.sqrt(0.5)
    return np.array([s + 1j * s, -s + 1j * s, -s - 1j * s, s - 1j * s])


def qpsk_indices(symbols: np.ndarray) -> np.ndarray:
    """Map constellation points (or scaled copies) back to alphabet indices."""
    re = np.real(symbols) >= 0.0
    im = np.imag(symbols) >= 0.0
    # ++ -> 0, -+ -> 1, -- -> 2, +- -> 3
    return np.where(im, np.where(re, 0, 1), np.where(re, 3, 2))


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by (seed, stream index).

    Streams with distinct indices are statistically independent, which is
    what makes batched Monte Carlo runs deterministic under any scheduling.
    """
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(stream)])
    return np.random.Generator(np.random.Philox(key=key))


def draw_tx_symbols(rng: np.random.Generator, n: int, modulation=TxModulation.QPSK):
    """n i.i.d. Tx symbols: uniform QPSK points or CN(0,1) draws."""
    if TxModulation(modulation) is TxModulation.QPSK:
        return qpsk_alphabet()[rng.integers(0, 4, n)]
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * math.sqrt(0.5)


def draw_tag_bit(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2))


def draw_theta(rng: np.random.Generator) -> float:
    return float(rng.uniform(0.0, _TWO_PI))


def synthesize_frame(
    config: SystemConfig,
    tx_symbols: np.ndarray,
    tag_bit: int,
    prev_tag_bit: int,
    alpha: float,
    noise: np.ndarray,
    theta: float,
) -> ReceivedFrame:
    """Build the received samples for one tag-symbol interval.

    sample_i = sqrt(SNR) x_i (1 + |g| e^{j theta} sqrt(rho) m_i) + z_i,
    where m_i is the tag value covering sample i.  The first sample of an
    asynchronous frame straddles the previous and current tag symbols:
    m_1 = alpha * prev + (1 - alpha) * current.  ``noise`` must hold unit
    variance complex draws (CN(0,1) per sample).
    """
    tx_symbols = np.asarray(tx_symbols, dtype=complex)
    noise = np.asarray(noise, dtype=complex)
    if tx_symbols.shape != (config.n,) or noise.shape != (config.n,):
        raise ValueError(
            f"expected {config.n} tx symbols and noise draws, got "
            f"{tx_symbols.shape} and {noise.shape}"
        )
    cur = config.tag.value(tag_bit)
    prev = config.tag.value(prev_tag_bit)
    m = np.full(config.n, cur, dtype=complex)
    m[0] = alpha * prev + (1.0 - alpha) * cur
    g = config.channel.magnitude * cmath.exp(1j * theta) * math.sqrt(config.rho)
    samples = math.sqrt(config.snr) * tx_symbols * (1.0 + g * m) + noise
    return ReceivedFrame(
        samples=samples,
        tx_truth=tx_symbols,
        tag_truth_current=int(tag_bit),
        tag_truth_previous=int(prev_tag_bit),
        alpha=float(alpha),
        theta_realization=float(theta),
    )


# ---------------------------------------------------------------------------
# Config file handling
# ---------------------------------------------------------------------------

_CONFIG_FIELDS = {"snr_db", "rho", "g_mag2", "theta", "n", "alpha", "tag", "tx_modulation"}


def parse_config(doc: dict) -> tuple[SystemConfig, float]:
    """Build (SystemConfig, alpha) from the JSON config object.

    Schema: {snr_db, rho, g_mag2, theta: number|"uniform", n, alpha,
    tag: {c1: [re, im], c0: [re, im]}, tx_modulation}.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - _CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    try:
        snr_db = float(doc.get("snr_db", 10.0))
        rho = float(doc.get("rho", 0.5))
        g_mag2 = float(doc.get("g_mag2", 0.1))
        theta = doc.get("theta", math.pi / 4)
        n = doc.get("n", 1)
        alpha = float(doc.get("alpha", 0.0))
        tag_doc = doc.get("tag", {"c1": [1.0, 0.0], "c0": [0.0, 0.0]})
        c1 = complex(*map(float, tag_doc["c1"]))
        c0 = complex(*map(float, tag_doc["c0"]))
        modulation = TxModulation(doc.get("tx_modulation", "QPSK"))
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if g_mag2 < 0.0:
        raise ConfigError(f"g_mag2 must be >= 0, got {g_mag2}")
    if not (0.0 <= alpha <= 0.5):
        raise ConfigError(f"alpha must be in [0, 0.5], got {alpha}")
    phase = theta if theta == UNIFORM_PHASE else float(theta)
    config = SystemConfig.from_db(
        snr_db,
        rho=rho,
        channel=RelativeChannel(math.sqrt(g_mag2), phase),
        n=n,
        tag=TagConstellation(c1, c0),
        tx_modulation=modulation,
    )
    return config, alpha


def load_config(path: str | Path) -> tuple[SystemConfig, float]:
    """Read and parse a JSON config file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    return parse_config(doc)
