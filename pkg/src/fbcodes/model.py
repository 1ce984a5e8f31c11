"""Shared domain types: channel, PAM constellation, messages, RNG streams.

Normalization used throughout the package: the per-round transmit power
budget is P = 1, so the forward noise variance is sigma_ff^2 = 10^(-SNR/10)
and the linear SNR is S = 1/sigma_ff^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ConfigurationError(ValueError):
    """Invalid or unsupported configuration parameters."""


class UnsupportedConfigurationError(ConfigurationError):
    """Configuration is valid in general but not supported by this scheme."""


class NumericError(ArithmeticError):
    """Non-finite value where a finite one is required."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(linear: float) -> float:
    if linear <= 0:
        raise ConfigurationError(f"linear SNR must be positive, got {linear}")
    return 10.0 * math.log10(linear)


@dataclass(frozen=True)
class ChannelSpec:
    """Forward/feedback AWGN channel, parameterized by SNRs in dB.

    ``snr_fb_db=None`` means noiseless feedback (sigma_fb_sq = 0).
    """

    snr_ff_db: float
    snr_fb_db: float | None = None

    @property
    def sigma_ff_sq(self) -> float:
        return db_to_linear(-self.snr_ff_db)

    @property
    def sigma_fb_sq(self) -> float:
        if self.snr_fb_db is None:
            return 0.0
        return db_to_linear(-self.snr_fb_db)

    @property
    def snr_ff_linear(self) -> float:
        return db_to_linear(self.snr_ff_db)

    @property
    def noiseless_feedback(self) -> bool:
        return self.snr_fb_db is None


@dataclass(frozen=True)
class RateSpec:
    """A rate K/D code: K message bits sent over D channel uses."""

    k: int
    d: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigurationError(f"K must be >= 1, got {self.k}")
        if self.d < 1:
            raise ConfigurationError(f"D must be >= 1, got {self.d}")

    @property
    def rate(self) -> float:
        return self.k / self.d

    @property
    def n_messages(self) -> int:
        return 1 << self.k


@dataclass(frozen=True)
class PamConstellation:
    """Unit-power 2^K-ary PAM: amplitudes {+-eta, +-3 eta, ..., +-(2^K - 1) eta}."""

    k: int
    eta: float
    amplitudes: tuple[float, ...]

    @property
    def size(self) -> int:
        return 1 << self.k

    def amplitude_array(self) -> np.ndarray:
        return np.asarray(self.amplitudes, dtype=np.float64)


def make_constellation(k: int) -> PamConstellation:
    """Build the sorted, unit-mean-power 2^K-ary PAM constellation."""
    if not 1 <= k <= 16:
        raise ConfigurationError(f"K must be in [1, 16], got {k}")
    m = 1 << k
    eta = math.sqrt(3.0 / (m * m - 1))
    levels = np.arange(m, dtype=np.float64) * 2 - (m - 1)
    amps = tuple((levels * eta).tolist())
    return PamConstellation(k=k, eta=eta, amplitudes=amps)


def bits_to_index(bits) -> int:
    """Natural binary value of a bit vector, MSB first."""
    index = 0
    for b in bits:
        if b not in (0, 1):
            raise ConfigurationError(f"bits must be 0/1, got {b!r}")
        index = (index << 1) | int(b)
    return index


def index_to_bits(index: int, k: int) -> tuple[int, ...]:
    if not 0 <= index < (1 << k):
        raise ConfigurationError(f"index {index} out of range for K={k}")
    return tuple((index >> (k - 1 - j)) & 1 for j in range(k))


@dataclass(frozen=True)
class MessageBlock:
    """K message bits together with their natural-binary index."""

    bits: tuple[int, ...]
    index: int

    def __post_init__(self) -> None:
        if bits_to_index(self.bits) != self.index:
            raise ConfigurationError(
                f"index {self.index} does not match bits {self.bits}"
            )

    @classmethod
    def from_bits(cls, bits) -> "MessageBlock":
        bits = tuple(int(b) for b in bits)
        return cls(bits=bits, index=bits_to_index(bits))

    @classmethod
    def from_index(cls, index: int, k: int) -> "MessageBlock":
        return cls(bits=index_to_bits(index, k), index=index)

    @property
    def k(self) -> int:
        return len(self.bits)


def bits_to_symbol(m: MessageBlock, c: PamConstellation) -> float:
    """Map a message to its PAM amplitude (index = position in the sorted list)."""
    if m.index >= c.size:
        raise ConfigurationError(
            f"message index {m.index} out of range for K={c.k}"
        )
    return c.amplitudes[m.index]


def indices_to_symbols(indices: np.ndarray, c: PamConstellation) -> np.ndarray:
    return c.amplitude_array()[indices]


def nearest_symbol(estimate: float, c: PamConstellation) -> int:
    """Index of the constellation point closest to ``estimate``.

    Ties break toward the lower index (a probability-zero event under
    continuous noise, pinned down for deterministic tests).
    """
    if not math.isfinite(estimate):
        raise NumericError(f"estimate must be finite, got {estimate}")
    return int(np.abs(c.amplitude_array() - estimate).argmin())


def nearest_symbols(estimates: np.ndarray, c: PamConstellation) -> np.ndarray:
    """Vectorized ``nearest_symbol``; same lower-index tie-break via argmin."""
    estimates = np.asarray(estimates, dtype=np.float64)
    if not np.isfinite(estimates).all():
        raise NumericError("estimates contain non-finite values")
    dist = np.abs(estimates[:, None] - c.amplitude_array()[None, :])
    return dist.argmin(axis=1)


_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class RngStream:
    """Counter-based randomness key.

    Each (seed, stream_id) pair names a statistically independent Philox
    stream; identical keys reproduce identical sequences regardless of
    scheduling, which is what makes worker-count-independent Monte Carlo
    possible.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array(
            [self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64
        )
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, index: int) -> "RngStream":
        """Derive a sub-stream; distinct indices give independent streams."""
        mixed = _splitmix64(self.stream_id ^ _splitmix64(index & _MASK64))
        return RngStream(seed=self.seed, stream_id=mixed)


def awgn(x, sigma_sq: float, rng) -> np.ndarray | float:
    """Add N(0, sigma_sq) noise to ``x``; sigma_sq = 0 returns x unchanged."""
    if sigma_sq < 0:
        raise ConfigurationError(f"noise variance must be >= 0, got {sigma_sq}")
    if sigma_sq == 0:
        return x
    if isinstance(rng, RngStream):
        rng = rng.generator()
    scale = math.sqrt(sigma_sq)
    if np.isscalar(x):
        return float(x) + scale * rng.standard_normal()
    x = np.asarray(x, dtype=np.float64)
    return x + scale * rng.standard_normal(x.shape)
