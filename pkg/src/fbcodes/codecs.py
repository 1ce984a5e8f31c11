"""Round-by-round simulation of the SK, GN, and PowerBlast codecs.

All three schemes share the same normalization as the rest of the package:
per-round transmit power budget P = 1 and sigma_ff^2 = 10^(-SNR/10). GN's
uneven power split is expressed in SNR units (P1, P2) and converted to
transmit powers by multiplying with sigma_ff^2, so the sum power budget
D * P is preserved exactly.

The batch functions are the workhorses used by the Monte Carlo harness;
the per-codeword functions wrap them (or, for SK, a step-wise session) so
a single codeword can be walked round by round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .formulas import (
    Variant,
    effective_snr,
    gn_power_split,
    map_gamma,
    p_gn_phase1,
    p_pam_at_snr,
)
from .model import (
    ChannelSpec,
    ConfigurationError,
    MessageBlock,
    PamConstellation,
    RateSpec,
    RngStream,
    UnsupportedConfigurationError,
    make_constellation,
    nearest_symbols,
)

# Floor for the phase-1 error probability used to build the final-round
# detector; keeps the detector well-defined when the closed form underflows
# at very high SNR (where the final round has nothing left to fix anyway).
_P1_FLOOR = 1e-30


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


def residual_variance_step(sigma_sq_prev: float, s_round: float) -> float:
    """One LMMSE refinement round shrinks the residual variance by 1/(1+S)."""
    if sigma_sq_prev <= 0 or s_round <= 0:
        raise ConfigurationError("variance and SNR must be positive")
    return sigma_sq_prev / (1.0 + s_round)


def sk_sigma_schedule(d_uses: int, channel: ChannelSpec) -> np.ndarray:
    """Analytic residual variances sigma_i^2 after rounds 1..d_uses of the
    SK refinement (round 1 is uncoded PAM with an LMMSE estimate)."""
    sff = channel.sigma_ff_sq
    s = channel.snr_ff_linear
    out = np.empty(d_uses)
    out[0] = sff / (1.0 + sff)
    for i in range(1, d_uses):
        out[i] = out[i - 1] / (1.0 + s)
    return out


@dataclass(frozen=True)
class FinalRoundDetector:
    """MAP detector for the discrete final round over {-1, 0, +1}.

    The nonzero symbols carry amplitude ``amplitude_a`` in sqrt(round power)
    units (1/sqrt(p1) under batch power normalization of the sparse index
    difference, whose standard deviation is sqrt(p1)). ``tau`` is the
    decision boundary in received-signal units: decide 0 iff |y| <= tau,
    otherwise sign(y).
    """

    p1: float
    gamma: float
    tau: float
    amplitude_a: float
    round_power: float

    @classmethod
    def from_p1(
        cls, p1: float, round_snr: float, round_power: float
    ) -> "FinalRoundDetector":
        gamma = map_gamma(p1, round_snr)
        sqrt_pow = math.sqrt(round_power)
        return cls(
            p1=p1,
            gamma=gamma,
            tau=gamma * sqrt_pow,
            amplitude_a=1.0 / math.sqrt(p1),
            round_power=round_power,
        )

    @property
    def priors(self) -> tuple[float, float, float]:
        return (self.p1 / 2.0, 1.0 - self.p1, self.p1 / 2.0)

    @property
    def unit_index_amplitude(self) -> float:
        """Transmit amplitude per unit of index difference."""
        return math.sqrt(self.round_power) * self.amplitude_a


def map_detect_ternary(y, det: FinalRoundDetector):
    """Detect {-1, 0, +1} from the final-round observation(s)."""
    arr = np.asarray(y, dtype=np.float64)
    out = np.where(np.abs(arr) <= det.tau, 0, np.sign(arr)).astype(np.int64)
    return int(out) if np.isscalar(y) else out


def lmmse_shrinkage(s: float, n_uses: int) -> float:
    """Deterministic shrinkage of the running LMMSE estimate toward zero
    after ``n_uses`` rounds: E[theta_hat | theta] = (1 - (1+S)^-n) theta.

    The slicer divides the estimate by this factor; the known bias then
    cancels and the residual seen by the slicer is a symmetric Gaussian
    whose SNR is exactly (1+S)^n - 1, matching the LMMSE closed forms.
    """
    return 1.0 - (1.0 + s) ** (-n_uses)


def _refine_phase(
    theta: np.ndarray,
    n_uses: int,
    channel: ChannelSpec,
    noise: np.ndarray,
    trace: list | None = None,
    energy: np.ndarray | None = None,
    empirical_sigma: bool = False,
) -> np.ndarray:
    """SK refinement over ``n_uses`` channel uses at uniform power P = 1.

    Round 1 transmits the uncoded PAM symbol; each later round transmits the
    scaled error of the receiver's running LMMSE estimate. Returns the final
    estimates. ``trace`` collects the estimate after every round;
    ``energy`` accumulates per-codeword transmitted energy in place.
    """
    p = 1.0
    sff = channel.sigma_ff_sq
    s = channel.snr_ff_linear
    sqrt_p = 1.0

    x = sqrt_p * theta
    if energy is not None:
        energy += x * x
    y = x + noise[:, 0]
    est = sqrt_p * y / (p + sff)
    sigma_sq = sff / (p + sff)
    if trace is not None:
        trace.append(est.copy())

    for i in range(1, n_uses):
        eps = est - theta
        sigma = math.sqrt(sigma_sq)
        if empirical_sigma:
            sigma = float(np.std(eps))
        x = (sqrt_p / sigma) * eps
        if energy is not None:
            energy += x * x
        y = x + noise[:, i]
        eps_hat = (sqrt_p * sigma / (p + sff)) * y
        est = est - eps_hat
        sigma_sq = residual_variance_step(sigma_sq, s)
        if trace is not None:
            trace.append(est.copy())
    return est


def _final_round_indices(
    m_hat: np.ndarray,
    indices: np.ndarray,
    det: FinalRoundDetector,
    noise_d: np.ndarray,
    n_messages: int,
    energy: np.ndarray | None = None,
) -> np.ndarray:
    """Transmit the index difference U = M_hat - M and correct M_hat with
    the MAP-detected U_hat; out-of-range results clamp to the index range."""
    u = (m_hat - indices).astype(np.float64)
    x = det.unit_index_amplitude * u
    if energy is not None:
        energy += x * x
    y = x + noise_d
    u_hat = map_detect_ternary(y, det)
    return np.clip(m_hat - u_hat, 0, n_messages - 1)


def _validate_analytic(
    scheme: str, rate: RateSpec, channel: ChannelSpec, min_d: int
) -> None:
    if rate.d < min_d:
        raise ConfigurationError(f"{scheme} needs D >= {min_d}, got {rate.d}")
    if not channel.noiseless_feedback:
        raise UnsupportedConfigurationError(
            f"{scheme} is defined for noiseless feedback only"
        )


def sk_simulate_batch(
    indices: np.ndarray,
    rate: RateSpec,
    channel: ChannelSpec,
    rng,
    trace: list | None = None,
    return_energy: bool = False,
    empirical_sigma: bool = False,
):
    """Simulate one SK codeword per entry of ``indices``; returns decoded
    indices (and per-codeword transmitted energy when requested)."""
    _validate_analytic("SK", rate, channel, 2)
    rng = _as_generator(rng)
    c = make_constellation(rate.k)
    theta = c.amplitude_array()[indices]
    n = len(indices)
    energy = np.zeros(n) if return_energy else None

    if channel.sigma_ff_sq == 0.0:
        decoded = np.asarray(indices).copy()
        if return_energy:
            return decoded, theta * theta
        return decoded

    noise = rng.normal(0.0, math.sqrt(channel.sigma_ff_sq), size=(n, rate.d))
    est = _refine_phase(
        theta, rate.d, channel, noise, trace=trace, energy=energy,
        empirical_sigma=empirical_sigma,
    )
    decoded = nearest_symbols(
        est / lmmse_shrinkage(channel.snr_ff_linear, rate.d), c
    )
    if return_energy:
        return decoded, energy
    return decoded


def pb_simulate_batch(
    indices: np.ndarray,
    rate: RateSpec,
    channel: ChannelSpec,
    rng,
    p1_hint: float | None = None,
    return_energy: bool = False,
    return_u: bool = False,
):
    """Simulate PowerBlast codewords: D-1 SK rounds, then the discrete
    index-difference round at uniform power."""
    _validate_analytic("PowerBlast", rate, channel, 3)
    rng = _as_generator(rng)
    c = make_constellation(rate.k)
    theta = c.amplitude_array()[indices]
    n = len(indices)
    energy = np.zeros(n) if return_energy else None

    if channel.sigma_ff_sq == 0.0:
        decoded = np.asarray(indices).copy()
        out = [decoded]
        if return_energy:
            out.append(theta * theta)
        if return_u:
            out.append(np.zeros(n, dtype=np.int64))
        return out[0] if len(out) == 1 else tuple(out)

    s = channel.snr_ff_linear
    if p1_hint is None:
        p1_hint = p_pam_at_snr(rate.k, effective_snr(s, rate.d - 1, Variant.LMMSE))
    p1_hint = max(p1_hint, _P1_FLOOR)

    noise = rng.normal(0.0, math.sqrt(channel.sigma_ff_sq), size=(n, rate.d))
    est = _refine_phase(theta, rate.d - 1, channel, noise[:, : rate.d - 1],
                        energy=energy)
    m_hat = nearest_symbols(est / lmmse_shrinkage(s, rate.d - 1), c)
    det = FinalRoundDetector.from_p1(p1_hint, round_snr=s, round_power=1.0)
    decoded = _final_round_indices(
        m_hat, indices, det, noise[:, rate.d - 1], c.size, energy=energy
    )
    out = [decoded]
    if return_energy:
        out.append(energy)
    if return_u:
        out.append(m_hat - np.asarray(indices))
    return out[0] if len(out) == 1 else tuple(out)


def gn_simulate_batch(
    indices: np.ndarray,
    rate: RateSpec,
    channel: ChannelSpec,
    rng,
    p1_hint: float | None = None,
    phase1_only: bool = False,
    return_energy: bool = False,
):
    """Simulate GN codewords.

    Round 1 is uncoded PAM at power P1; rounds 2..D-1 refine the receiver's
    estimate of the round-1 noise (Elias-style) at power P2; round D sends
    the PAM index difference. The receiver's estimate of the round-1
    transmission is y1 minus the accumulated LMMSE estimates of the
    successively transmitted residuals, which telescopes to an estimate of
    n1 (the residuals are defined truth-minus-estimate so the sum has
    uniform signs and is computable from the received symbols alone).
    """
    _validate_analytic("GN", rate, channel, 3)
    rng = _as_generator(rng)
    c = make_constellation(rate.k)
    theta = c.amplitude_array()[indices]
    n = len(indices)
    energy = np.zeros(n) if return_energy else None

    if channel.sigma_ff_sq == 0.0:
        decoded = np.asarray(indices).copy()
        if return_energy:
            return decoded, theta * theta
        return decoded

    s = channel.snr_ff_linear
    sff = channel.sigma_ff_sq
    p1_snr, p2_snr = gn_power_split(rate.d, s)
    p1_pow = p1_snr * sff
    p2_pow = p2_snr * sff

    noise = rng.normal(0.0, math.sqrt(sff), size=(n, rate.d))
    x1 = math.sqrt(p1_pow) * theta
    if energy is not None:
        energy += x1 * x1
    y1 = x1 + noise[:, 0]

    residual = noise[:, 0].copy()      # what still needs to be conveyed: n1
    n1_hat = np.zeros(n)
    sigma_sq = sff
    for i in range(1, rate.d - 1):     # rounds 2..D-1
        sigma = math.sqrt(sigma_sq)
        x = (math.sqrt(p2_pow) / sigma) * residual
        if energy is not None:
            energy += x * x
        y = x + noise[:, i]
        e_hat = (math.sqrt(p2_pow) * sigma / (p2_pow + sff)) * y
        n1_hat += e_hat
        residual = residual - e_hat
        sigma_sq = residual_variance_step(sigma_sq, p2_snr)

    theta_hat = (y1 - n1_hat) / math.sqrt(p1_pow)
    m_hat = nearest_symbols(theta_hat, c)
    if phase1_only:
        if return_energy:
            return m_hat, energy
        return m_hat

    if p1_hint is None:
        p1_hint = p_gn_phase1(rate.k, rate.d, s)
    p1_hint = max(p1_hint, _P1_FLOOR)
    det = FinalRoundDetector.from_p1(p1_hint, round_snr=p2_snr, round_power=p2_pow)
    decoded = _final_round_indices(
        m_hat, indices, det, noise[:, rate.d - 1], c.size, energy=energy
    )
    if return_energy:
        return decoded, energy
    return decoded


class CodecSession:
    """State of one SK codeword, advanced one round at a time.

    Exposes the receiver's running estimate and the analytic residual
    variance so the refinement recursion can be inspected directly.
    """

    def __init__(self, rate: RateSpec, channel: ChannelSpec, message: MessageBlock):
        _validate_analytic("SK", rate, channel, 2)
        if channel.sigma_ff_sq == 0.0:
            raise ConfigurationError(
                "session stepping needs sigma_ff^2 > 0; the noiseless case "
                "decodes exactly after round 1"
            )
        self.scheme = "sk"
        self.rate = rate
        self.channel = channel
        self.constellation = make_constellation(rate.k)
        self.message = message
        self.theta = self.constellation.amplitudes[message.index]
        self.estimate: float | None = None
        self.residual_sigma_sq: float | None = None
        self.round = 0
        self.per_round_power = (1.0,) * rate.d
        self.energy = 0.0

    @property
    def terminal(self) -> bool:
        return self.round >= self.rate.d

    def step(self, rng) -> float:
        """Run one round with noise from ``rng``; returns the new estimate."""
        if self.terminal:
            raise ConfigurationError("session is terminal after round D")
        rng = _as_generator(rng)
        p = 1.0
        sff = self.channel.sigma_ff_sq
        noise = math.sqrt(sff) * rng.standard_normal()
        if self.round == 0:
            x = self.theta
            y = x + noise
            self.estimate = y / (p + sff)
            self.residual_sigma_sq = sff / (p + sff)
        else:
            eps = self.estimate - self.theta
            sigma = math.sqrt(self.residual_sigma_sq)
            x = eps / sigma
            y = x + noise
            self.estimate = self.estimate - (sigma / (p + sff)) * y
            self.residual_sigma_sq = residual_variance_step(
                self.residual_sigma_sq, self.channel.snr_ff_linear
            )
        self.energy += x * x
        self.round += 1
        return self.estimate

    def decode(self) -> int:
        if not self.terminal:
            raise ConfigurationError("decode is only valid after round D")
        scaled = self.estimate / lmmse_shrinkage(
            self.channel.snr_ff_linear, self.rate.d
        )
        return int(nearest_symbols(np.array([scaled]), self.constellation)[0])


def sk_simulate_codeword(
    m: MessageBlock, rate: RateSpec, channel: ChannelSpec, rng
) -> int:
    """Run one SK codeword to completion; returns the decoded index."""
    if channel.sigma_ff_sq == 0.0:
        _validate_analytic("SK", rate, channel, 2)
        return m.index
    session = CodecSession(rate, channel, m)
    rng = _as_generator(rng)
    while not session.terminal:
        session.step(rng)
    return session.decode()


def gn_simulate_codeword(
    m: MessageBlock,
    rate: RateSpec,
    channel: ChannelSpec,
    rng,
    p1_hint: float | None = None,
) -> int:
    decoded = gn_simulate_batch(
        np.array([m.index]), rate, channel, rng, p1_hint=p1_hint
    )
    return int(decoded[0])


def pb_simulate_codeword(
    m: MessageBlock,
    rate: RateSpec,
    channel: ChannelSpec,
    rng,
    p1_hint: float | None = None,
) -> int:
    decoded = pb_simulate_batch(
        np.array([m.index]), rate, channel, rng, p1_hint=p1_hint
    )
    return int(decoded[0])


class SkCodec:
    """Codec handle for the Monte Carlo harness."""

    name = "sk"

    def __init__(self, empirical_sigma: bool = False):
        self.empirical_sigma = empirical_sigma

    def validate(self, rate: RateSpec, channel: ChannelSpec) -> None:
        _validate_analytic("SK", rate, channel, 2)

    def simulate_batch(self, indices, rate, channel, rng):
        return sk_simulate_batch(
            indices, rate, channel, rng, empirical_sigma=self.empirical_sigma
        )


class GnCodec:
    name = "gn"

    def __init__(self, p1_hint: float | None = None):
        self.p1_hint = p1_hint

    def validate(self, rate: RateSpec, channel: ChannelSpec) -> None:
        _validate_analytic("GN", rate, channel, 3)
        if channel.sigma_ff_sq > 0:
            gn_power_split(rate.d, channel.snr_ff_linear)

    def simulate_batch(self, indices, rate, channel, rng):
        return gn_simulate_batch(indices, rate, channel, rng, p1_hint=self.p1_hint)


class PbCodec:
    name = "pb"

    def __init__(self, p1_hint: float | None = None):
        self.p1_hint = p1_hint

    def validate(self, rate: RateSpec, channel: ChannelSpec) -> None:
        _validate_analytic("PowerBlast", rate, channel, 3)

    def simulate_batch(self, indices, rate, channel, rng):
        return pb_simulate_batch(indices, rate, channel, rng, p1_hint=self.p1_hint)


class UncodedPamCodec:
    """One-round uncoded PAM at ``power_multiplier`` times the per-round
    budget; baseline for feedback schemes with the same total energy."""

    name = "uncoded"

    def __init__(self, power_multiplier: float = 1.0):
        if power_multiplier <= 0:
            raise ConfigurationError("power multiplier must be positive")
        self.power_multiplier = power_multiplier

    def validate(self, rate: RateSpec, channel: ChannelSpec) -> None:
        pass

    def simulate_batch(self, indices, rate, channel, rng):
        rng = _as_generator(rng)
        c = make_constellation(rate.k)
        theta = c.amplitude_array()[indices]
        scale = math.sqrt(self.power_multiplier)
        y = scale * theta + rng.normal(
            0.0, math.sqrt(channel.sigma_ff_sq), size=len(indices)
        ) if channel.sigma_ff_sq > 0 else scale * theta
        return nearest_symbols(np.asarray(y) / scale, c)


def get_codec(name: str, **kwargs):
    table = {
        "sk": SkCodec,
        "gn": GnCodec,
        "pb": PbCodec,
        "uncoded": UncodedPamCodec,
    }
    if name not in table:
        raise ConfigurationError(f"unknown scheme {name!r}")
    return table[name](**kwargs)


def pam_constellation_for(rate: RateSpec) -> PamConstellation:
    return make_constellation(rate.k)
