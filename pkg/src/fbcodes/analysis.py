"""Interpretation and benchmarking probes for trained models and codecs."""

from __future__ import annotations

import math
import platform
import time
from dataclasses import dataclass, field

import numpy as np

from .formulas import compose_block_bler
from .lightcode import LightCodeModel, unroll_capture
from .model import ChannelSpec, ConfigurationError, RateSpec, RngStream

LOW_SAMPLE_THRESHOLD = 10_000


@dataclass
class SymbolFit:
    symbol_index: int
    coef_x: np.ndarray
    coef_n: np.ndarray
    intercept: float
    r_squared: float
    n_samples: int
    rank_deficient: bool = False


@dataclass
class LinearProbeResult:
    round_index: int          # probes x_{round_index+1}
    fits: list[SymbolFit]
    low_sample_warning: bool

    @property
    def mean_r_squared(self) -> float:
        return float(np.mean([f.r_squared for f in self.fits]))


def ols_fit(design: np.ndarray, target: np.ndarray, ridge: float = 1e-10):
    """Least squares through the normal equations with a small ridge term on
    the diagonal (the regressors x_j and n_j are correlated through the
    feedback loop and can be near-collinear).

    Returns (coefficients, r_squared, rank_deficient).
    """
    a = np.column_stack([design, np.ones(len(design))]).astype(np.float64)
    y = np.asarray(target, dtype=np.float64)
    gram = a.T @ a
    rank_deficient = bool(
        np.linalg.matrix_rank(gram) < gram.shape[0]
    )
    beta = np.linalg.solve(gram + ridge * np.eye(gram.shape[0]), a.T @ y)
    pred = a @ beta
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return beta, r_squared, rank_deficient


def linear_probe_fit(
    xs: np.ndarray, ns: np.ndarray, target: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float, float, bool]:
    """Fit target ~ sum_j a_j x_j + b_j n_j + c; returns (a, b, c, R^2,
    rank_deficient)."""
    i = xs.shape[1]
    beta, r2, deficient = ols_fit(np.column_stack([xs, ns]), target)
    return beta[:i], beta[i: 2 * i], float(beta[-1]), r2, deficient


def linear_probe(
    model: LightCodeModel,
    round_i: int,
    n_samples: int,
    channel: ChannelSpec,
    seed: int,
    pooled: bool = False,
) -> LinearProbeResult:
    """Regress the round-(i+1) encoder output on the transmitted symbols and
    forward noises of rounds 1..i, one regression per constellation symbol
    (or pooled over all messages)."""
    if not 1 <= round_i <= model.arch.d - 1:
        raise ConfigurationError(
            f"round_i must be in [1, {model.arch.d - 1}], got {round_i}"
        )
    if not channel.noiseless_feedback or model.arch.feedback_mode != "noiseless":
        raise ConfigurationError("linear probe assumes noiseless feedback")
    out = _probe_samples(model, n_samples, channel, seed)
    xs = out["x"][:, :round_i]
    ns = out["noise_f"][:, :round_i]
    target = out["x"][:, round_i]
    fits = []
    if pooled:
        groups = [(-1, np.ones(len(target), dtype=bool))]
    else:
        groups = [
            (s, out["indices"] == s) for s in range(model.arch.n_classes)
        ]
    for sym, mask in groups:
        a, b, c, r2, deficient = linear_probe_fit(xs[mask], ns[mask], target[mask])
        fits.append(
            SymbolFit(
                symbol_index=sym, coef_x=a, coef_n=b, intercept=c,
                r_squared=r2, n_samples=int(mask.sum()),
                rank_deficient=deficient,
            )
        )
    return LinearProbeResult(
        round_index=round_i,
        fits=fits,
        low_sample_warning=n_samples < LOW_SAMPLE_THRESHOLD,
    )


@dataclass
class PowerDistributionReport:
    round_index: int
    rows: list[tuple[int, int, float]]   # (sample, |index error|, |x_i|)
    mean_abs_x_erroneous: float
    mean_abs_x_correct: float
    n_samples: int
    n_erroneous: int


def power_distribution_report(
    model: LightCodeModel,
    round_i: int,
    n_samples: int,
    channel: ChannelSpec,
    seed: int,
    emit_rows: int = 50,
) -> PowerDistributionReport:
    """Compare the round-i transmit magnitude against the receiver-side PAM
    index error after round i-1.

    The intermediate index estimate is the decoder's argmax over the first
    i-1 received symbols with the remaining inputs zero-padded (the same
    padding convention the encoder uses for not-yet-seen feedback).
    """
    if not 2 <= round_i <= model.arch.d:
        raise ConfigurationError(
            f"round_i must be in [2, {model.arch.d}], got {round_i}"
        )
    out = _probe_samples(model, n_samples, channel, seed)
    y_partial = out["y"].copy()
    y_partial[:, round_i - 1:] = 0.0
    partial_idx = model.decode(y_partial).argmax(axis=1)
    index_err = np.abs(partial_idx - out["indices"])
    abs_x = np.abs(out["x"][:, round_i - 1])

    err_mask = index_err > 0
    mean_err = float(abs_x[err_mask].mean()) if err_mask.any() else 0.0
    mean_ok = float(abs_x[~err_mask].mean()) if (~err_mask).any() else 0.0
    rows = [
        (i, int(index_err[i]), float(abs_x[i]))
        for i in range(min(emit_rows, n_samples))
    ]
    return PowerDistributionReport(
        round_index=round_i,
        rows=rows,
        mean_abs_x_erroneous=mean_err,
        mean_abs_x_correct=mean_ok,
        n_samples=n_samples,
        n_erroneous=int(err_mask.sum()),
    )


def _probe_samples(model, n_samples, channel, seed, chunk_size=65_536) -> dict:
    base = RngStream(seed).child(11)
    parts: list[dict] = []
    seen = 0
    c = 0
    while seen < n_samples:
        n = min(chunk_size, n_samples - seen)
        rng = base.child(c).generator()
        idx = rng.integers(0, model.arch.n_classes, size=n)
        parts.append(unroll_capture(model, idx, channel, rng))
        seen += n
        c += 1
    return {
        key: np.concatenate([p[key] for p in parts], axis=0)
        for key in ("indices", "x", "y", "noise_f")
    }


@dataclass
class BlocklengthRow:
    big_l: int
    sub_blocks: int
    p_l: float


def blocklength_table(p_k: float, l_list: list[int], k: int) -> list[BlocklengthRow]:
    """BLER of longer blocks built from independent K-bit sub-blocks."""
    rows = []
    for big_l in l_list:
        if big_l <= 0 or big_l % k != 0:
            raise ConfigurationError(
                f"block length {big_l} is not a positive multiple of K={k}"
            )
        sub = big_l // k
        rows.append(BlocklengthRow(big_l, sub, compose_block_bler(p_k, sub)))
    return rows


@dataclass
class ThroughputReport:
    t_e: float                # blocks encoded per second
    t_d: float                # blocks decoded per second
    t_ek: float               # bits per second, (K/D) * t_e
    t_dk: float
    batch: int
    repeats: int
    hardware: str = field(default="")

    @classmethod
    def from_rates(cls, t_e, t_d, rate: RateSpec, batch, repeats):
        r = rate.rate
        return cls(
            t_e=t_e, t_d=t_d, t_ek=r * t_e, t_dk=r * t_d,
            batch=batch, repeats=repeats,
            hardware=f"{platform.machine()} / {platform.processor() or 'unknown cpu'}",
        )


def throughput_bench(
    target,
    rate: RateSpec,
    channel: ChannelSpec,
    batch: int,
    duration_s: float = 1.0,
    repeats: int = 3,
    seed: int = 0,
) -> ThroughputReport:
    """Median encode/decode throughput over >= ``repeats`` timed runs.

    For a neural model the encoder timing covers the D-round unroll and the
    decoder timing one decode pass. Analytic codecs interleave encoding and
    decoding, so both throughputs measure the full simulate loop; numbers
    are only meaningful relative to each other.
    """
    if batch < 1:
        raise ConfigurationError("batch must be >= 1")
    if duration_s <= 0:
        raise ConfigurationError("duration_s must be positive")
    if repeats < 3:
        raise ConfigurationError("need at least 3 repetitions")
    rng = RngStream(seed).child(13).generator()
    indices = rng.integers(0, rate.n_messages, size=batch)

    if isinstance(target, LightCodeModel):
        def encode_once():
            unroll_capture(target, indices, channel, RngStream(seed).generator())

        received = unroll_capture(
            target, indices, channel, RngStream(seed).generator()
        )["y"]

        def decode_once():
            target.decode(received)
    else:
        def encode_once():
            target.simulate_batch(indices, rate, channel,
                                  RngStream(seed).generator())

        decode_once = encode_once

    t_e = _timed_rate(encode_once, batch, duration_s, repeats)
    t_d = _timed_rate(decode_once, batch, duration_s, repeats)
    return ThroughputReport.from_rates(t_e, t_d, rate, batch, repeats)


def _timed_rate(fn, batch: int, duration_s: float, repeats: int) -> float:
    times = []
    first = _time_once(fn)
    if first > duration_s:
        raise ConfigurationError(
            f"duration_s={duration_s} too short: one batch took {first:.3f}s"
        )
    times.append(first)
    deadline = time.perf_counter() + duration_s
    while len(times) < repeats or time.perf_counter() < deadline:
        times.append(_time_once(fn))
    return batch / float(np.median(times))


def _time_once(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0
