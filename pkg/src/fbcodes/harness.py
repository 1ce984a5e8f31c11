"""Parallel Monte Carlo BLER estimation with deterministic results.

Trials are processed in fixed-size chunks; chunk c of a run draws all of
its randomness from the sub-stream ``stream.child(c)``. Chunk results are
accumulated strictly in chunk-index order and the stop rule is evaluated at
chunk boundaries, so the estimate is a pure function of (seed, config) no
matter how many workers execute the chunks.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import ChannelSpec, ConfigurationError, RateSpec, RngStream

#: Trials per chunk. Part of the reproducibility contract: changing it
#: changes which trials share a stream, hence the sampled noise.
CHUNK_TRIALS = 8192

#: Estimates with fewer observed errors are flagged unresolved.
MIN_ERRORS_RESOLVED = 10

_Z95 = 1.959963984540054


@dataclass(frozen=True)
class StopRule:
    """Stop after ``max_trials`` trials or once ``target_errors`` block
    errors have been seen, whichever comes first; runs keep going past a
    target below 10 errors so no resolved estimate is based on fewer."""

    max_trials: int
    target_errors: int = 10

    def __post_init__(self) -> None:
        if self.max_trials < 1:
            raise ConfigurationError("max_trials must be >= 1")
        if self.target_errors < 1:
            raise ConfigurationError("target_errors must be >= 1")

    @property
    def effective_target(self) -> int:
        return max(self.target_errors, MIN_ERRORS_RESOLVED)


def wilson_interval(errors: int, trials: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion; well-behaved at
    zero and small error counts, unlike the normal approximation."""
    if trials == 0:
        return (0.0, 1.0)
    p_hat = errors / trials
    z2n = z * z / trials
    denom = 1.0 + z2n
    center = (p_hat + z2n / 2.0) / denom
    spread = (z / denom) * math.sqrt(p_hat * (1.0 - p_hat) / trials + z2n / (4.0 * trials))
    return (max(0.0, center - spread), min(1.0, center + spread))


@dataclass(frozen=True)
class BlerEstimate:
    trials: int
    errors: int
    bler: float
    ci_low: float
    ci_high: float
    seed: int
    wall_time_s: float

    @property
    def resolved(self) -> bool:
        return self.errors >= MIN_ERRORS_RESOLVED

    @property
    def std_error(self) -> float:
        """Standard-error scale implied by the Wilson interval half-width."""
        return (self.ci_high - self.ci_low) / (2.0 * _Z95)

    def within_se(self, p: float, n_se: float) -> bool:
        return abs(self.bler - p) <= n_se * self.std_error


def _run_chunk(codec, rate, channel, stream: RngStream, size: int) -> tuple[int, int]:
    rng = stream.generator()
    indices = rng.integers(0, rate.n_messages, size=size, dtype=np.int64)
    decoded = codec.simulate_batch(indices, rate, channel, rng)
    return size, int(np.count_nonzero(np.asarray(decoded) != indices))


def estimate_bler(
    codec,
    channel: ChannelSpec,
    rate: RateSpec,
    stop: StopRule,
    seed: int,
    workers: int = 1,
    stream: RngStream | None = None,
) -> BlerEstimate:
    """Estimate the block error rate of ``codec`` at one channel point.

    Deterministic for fixed (seed, config): the result does not depend on
    ``workers``.
    """
    codec.validate(rate, channel)
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")
    base = stream if stream is not None else RngStream(seed=seed)
    t0 = time.perf_counter()

    n_chunks = (stop.max_trials + CHUNK_TRIALS - 1) // CHUNK_TRIALS

    def chunk_size(c: int) -> int:
        return min(CHUNK_TRIALS, stop.max_trials - c * CHUNK_TRIALS)

    trials = 0
    errors = 0

    def run(c: int) -> tuple[int, int]:
        return _run_chunk(codec, rate, channel, base.child(c), chunk_size(c))

    if workers == 1:
        for c in range(n_chunks):
            t, e = run(c)
            trials += t
            errors += e
            if errors >= stop.effective_target:
                break
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            c = 0
            stopped = False
            while c < n_chunks and not stopped:
                wave = list(range(c, min(c + workers, n_chunks)))
                for t, e in pool.map(run, wave):
                    # accumulate in chunk order; results computed past the
                    # stop boundary are discarded, same as a 1-worker run
                    if stopped:
                        continue
                    trials += t
                    errors += e
                    if errors >= stop.effective_target:
                        stopped = True
                c = wave[-1] + 1

    ci_low, ci_high = wilson_interval(errors, trials)
    return BlerEstimate(
        trials=trials,
        errors=errors,
        bler=errors / trials,
        ci_low=ci_low,
        ci_high=ci_high,
        seed=seed,
        wall_time_s=time.perf_counter() - t0,
    )


def sweep_bler(
    codec,
    rate: RateSpec,
    snr_list_db: list[float],
    stop: StopRule,
    seed: int,
    workers: int = 1,
    snr_fb_db: float | None = None,
) -> list[tuple[float, BlerEstimate]]:
    """One estimate per SNR point; each point uses a disjoint sub-stream."""
    if any(b <= a for a, b in zip(snr_list_db, snr_list_db[1:])):
        raise ConfigurationError("snr_list_db must be strictly increasing")
    root = RngStream(seed=seed)
    results = []
    for i, snr_db in enumerate(snr_list_db):
        channel = ChannelSpec(snr_ff_db=snr_db, snr_fb_db=snr_fb_db)
        est = estimate_bler(
            codec, channel, rate, stop, seed,
            workers=workers, stream=root.child(i),
        )
        results.append((snr_db, est))
    return results


CSV_FIELDS = (
    "scheme,K,D,snr_ff_db,snr_fb_db,trials,errors,bler,ci_low,ci_high,seed"
)


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def result_row(
    scheme: str, rate: RateSpec, channel: ChannelSpec, est: BlerEstimate
) -> dict:
    return {
        "scheme": scheme,
        "K": rate.k,
        "D": rate.d,
        "snr_ff_db": channel.snr_ff_db,
        "snr_fb_db": "noiseless" if channel.noiseless_feedback else channel.snr_fb_db,
        "trials": est.trials,
        "errors": est.errors,
        "bler": est.bler,
        "ci_low": est.ci_low,
        "ci_high": est.ci_high,
        "seed": est.seed,
    }


def write_csv(fh, rows: list[dict], config: dict, tool_version: str) -> None:
    fh.write(f"# fbcodes {tool_version}\n")
    fh.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
    fh.write(CSV_FIELDS + "\n")
    for row in rows:
        fh.write(",".join(_fmt(row[f]) for f in CSV_FIELDS.split(",")) + "\n")


def write_jsonl(fh, rows: list[dict], config: dict, tool_version: str) -> None:
    fh.write(json.dumps({"tool": f"fbcodes {tool_version}",
                         "config": config}, sort_keys=True) + "\n")
    for row in rows:
        fh.write(json.dumps(row, sort_keys=True) + "\n")
