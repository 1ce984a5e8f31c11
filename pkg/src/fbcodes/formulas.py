"""Closed-form error probabilities for the SK, GN, and PowerBlast schemes.

All expressions take the forward SNR ``s`` on a linear scale (S = P/sigma^2
with P = 1). Two effective-SNR conventions are supported:

* ``Variant.MVUE``: the analysis convention where round 1 uses the scaled
  observation y1/sqrt(P); after r channel uses the effective SNR is
  S (1+S)^(r-1).
* ``Variant.LMMSE``: the convention matching the simulated algorithms,
  where round 1 already applies the Bayesian linear estimate; after r
  channel uses the effective SNR is (1+S)^r - 1.

LMMSE is the default everywhere because it is what the round-by-round
codecs actually implement.
"""

from __future__ import annotations

import math
from enum import Enum

import numpy as np
from scipy.special import erfc

from .model import ConfigurationError, NumericError

_SQRT2 = math.sqrt(2.0)


class Variant(str, Enum):
    """Effective-SNR convention for the multi-round refinement phase."""

    MVUE = "mvue"
    LMMSE = "lmmse"


class InfeasibleSplitError(ConfigurationError):
    """The GN power split has no positive solution at this SNR."""


#: Final-round amplitude conventions for the discrete {-1, 0, +1} round.
#: "consistent" uses A = 1/sqrt(p1), which is what batch power
#: normalization of the sparse symbol actually produces (E[U^2] = p1).
#: "printed" uses A = 1/p1.
AMPLITUDE_CONSISTENT = "consistent"
AMPLITUDE_PRINTED = "printed"
_AMPLITUDES = (AMPLITUDE_CONSISTENT, AMPLITUDE_PRINTED)


def q_function(x):
    """Standard-normal tail probability P(N(0,1) > x), via erfc."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise NumericError("q_function requires finite input")
    out = 0.5 * erfc(arr / _SQRT2)
    return float(out) if np.isscalar(x) else out


def effective_snr(s: float, rounds: int, variant: Variant = Variant.LMMSE) -> float:
    """Effective SNR of the single equivalent observation after ``rounds``
    channel uses of the iterative refinement phase (first use included)."""
    if s <= 0:
        raise ConfigurationError(f"linear SNR must be positive, got {s}")
    if rounds < 1:
        raise ConfigurationError(f"rounds must be >= 1, got {rounds}")
    variant = Variant(variant)
    if variant is Variant.MVUE:
        return s * (1.0 + s) ** (rounds - 1)
    return (1.0 + s) ** rounds - 1.0


def p_pam_at_snr(k: int, s_eff: float) -> float:
    """Block error probability of unit-power 2^K PAM with optimal detection
    at effective SNR ``s_eff``: 2 (1 - 2^-K) Q(sqrt(3 s_eff / (2^2K - 1)))."""
    if s_eff <= 0:
        raise ConfigurationError(f"effective SNR must be positive, got {s_eff}")
    m_sq_minus_1 = (1 << (2 * k)) - 1
    return 2.0 * (1.0 - 2.0 ** (-k)) * q_function(math.sqrt(3.0 * s_eff / m_sq_minus_1))


def p_sk(k: int, d: int, s: float, variant: Variant = Variant.LMMSE) -> float:
    """Error probability of the rate K/D SK scheme (all D uses refine the
    PAM symbol)."""
    if d < 2:
        raise ConfigurationError(f"SK needs D >= 2, got {d}")
    return p_pam_at_snr(k, effective_snr(s, d, variant))


def p_gn_phase1(k: int, d: int, s: float) -> float:
    """Error probability of GN after its first phase (uncoded PAM plus D-2
    noise-refinement rounds under the optimal P1/P2 power split)."""
    if d < 3:
        raise ConfigurationError(f"GN needs D >= 3, got {d}")
    base = 1.0 + s - 1.0 / (d - 1)
    m_sq_minus_1 = (1 << (2 * k)) - 1
    arg = math.sqrt(3.0 * base ** (d - 1) / m_sq_minus_1)
    return 2.0 * (1.0 - 2.0 ** (-k)) * q_function(arg)


def map_gamma(p1: float, s: float) -> float:
    """MAP detection threshold for the final-round constellation {-1, 0, +1}
    with priors {p1/2, 1 - p1, p1/2}:

        gamma = 1/(2 sqrt(p1)) + (sqrt(p1)/S) ln(2 (1 - p1) / p1)
    """
    if not 0.0 < p1 < 1.0:
        raise ConfigurationError(f"p1 must be in (0, 1), got {p1}")
    if s <= 0:
        raise ConfigurationError(f"linear SNR must be positive, got {s}")
    sqrt_p1 = math.sqrt(p1)
    return 1.0 / (2.0 * sqrt_p1) + (sqrt_p1 / s) * math.log(2.0 * (1.0 - p1) / p1)


def p_final_round(p1: float, s: float, amplitude: str = AMPLITUDE_CONSISTENT) -> float:
    """Error probability of the discrete final round given phase-1 error
    probability ``p1``:

        2 (1 - p1) Q(gamma sqrt(S)) + p1 Q((A - gamma) sqrt(S))

    where A is the nonzero-symbol amplitude in sqrt(P) units: 1/sqrt(p1)
    for the power-consistent normalization, 1/p1 as printed in the source
    expression.
    """
    if amplitude not in _AMPLITUDES:
        raise ConfigurationError(f"amplitude must be one of {_AMPLITUDES}")
    gamma = map_gamma(p1, s)
    a = 1.0 / math.sqrt(p1) if amplitude == AMPLITUDE_CONSISTENT else 1.0 / p1
    sqrt_s = math.sqrt(s)
    return 2.0 * (1.0 - p1) * q_function(gamma * sqrt_s) + p1 * q_function(
        (a - gamma) * sqrt_s
    )


def p_pb(
    k: int,
    d: int,
    s: float,
    variant: Variant = Variant.LMMSE,
    amplitude: str = AMPLITUDE_CONSISTENT,
) -> float:
    """Error probability of the rate K/D PowerBlast scheme: D-1 SK rounds
    followed by one discrete index-difference round."""
    if d < 3:
        raise ConfigurationError(f"PowerBlast needs D >= 3, got {d}")
    p1 = p_pam_at_snr(k, effective_snr(s, d - 1, variant))
    return p_final_round(p1, s, amplitude)


def p_gn(
    k: int, d: int, s: float, amplitude: str = AMPLITUDE_CONSISTENT
) -> float:
    """Error probability of the rate K/D GN scheme (phase-1 expression as
    printed, followed by the discrete final round)."""
    p1 = p_gn_phase1(k, d, s)
    return p_final_round(p1, s, amplitude)


def compose_block_bler(p_k: float, l: int) -> float:
    """BLER of l independently coded sub-blocks: 1 - (1 - p_K)^l."""
    if not 0.0 <= p_k <= 1.0:
        raise ConfigurationError(f"p_k must be in [0, 1], got {p_k}")
    if l < 1:
        raise ConfigurationError(f"l must be >= 1, got {l}")
    # expm1 keeps precision when p_k is tiny (1 - (1-p)^l = -expm1(l log1p(-p)))
    if p_k == 1.0:
        return 1.0
    return -math.expm1(l * math.log1p(-p_k))


def gn_power_split(d: int, s: float) -> tuple[float, float]:
    """GN's optimal (P1, P2) split in SNR units (sigma_ff^2 = 1):
    P1 + (D-1) P2 = D S with P1 = P2 + 1."""
    if d < 2:
        raise ConfigurationError(f"power split needs D >= 2, got {d}")
    if s <= 0:
        raise ConfigurationError(f"linear SNR must be positive, got {s}")
    p2 = s - 1.0 / d
    if p2 <= 0:
        raise InfeasibleSplitError(
            f"S = {s} <= 1/D = {1.0 / d}: refinement rounds would get no power"
        )
    p1 = s + (d - 1) / d
    return p1, p2
