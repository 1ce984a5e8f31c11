"""Neural symbol-by-symbol feedback code (encoder/decoder pair).

Architecture
------------
Both encoder and decoder share a feature-extractor backbone: three linear
layers of width ``hidden_dim`` with ReLUs after the first two, plus a skip
path that carries the sign-reversed output of the first layer; main and
skip are concatenated and a final linear layer projects to ``feature_dim``
features. The encoder head is a single linear layer to one output; the
decoder head is a two-layer MLP to 2^K logits.

Per round i the encoder consumes the message bits (mapped to +-1) and the
feedback received so far, zero-padded to a fixed width. Its raw output is
standardized (batch statistics during training, stored calibration
statistics at inference) and scaled by a learned per-round weight alpha_i;
the alphas are projected onto sum(alpha^2) = D after every optimizer step
so the expected codeword energy meets the sum power constraint.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .autodiff import AdamW, Graph, Tensor, clip_grad_value, lr_lambda_schedule
from .model import (
    ChannelSpec,
    ConfigurationError,
    NumericError,
    RateSpec,
    RngStream,
)

FEEDBACK_MODES = ("noiseless", "noisy")

# fixed sub-stream indices under the run seed
_INIT_STREAM = 101
_TRAIN_STREAM = 102
_CALIB_STREAM = 103


class StateError(RuntimeError):
    """Operation requires model state that is not present yet."""


class CheckpointError(IOError):
    """Malformed or unreadable checkpoint file."""


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointChecksumError(CheckpointError):
    pass


@dataclass(frozen=True)
class ArchitectureConfig:
    k: int
    d: int
    hidden_dim: int = 32
    feature_dim: int = 16
    dec_hidden: int = 32
    enc_mlp_layers: int = 1
    dec_mlp_layers: int = 2
    feedback_mode: str = "noiseless"

    def __post_init__(self) -> None:
        if self.feedback_mode not in FEEDBACK_MODES:
            raise ConfigurationError(
                f"feedback_mode must be one of {FEEDBACK_MODES}"
            )
        if self.k < 1 or self.d < 2:
            raise ConfigurationError("need K >= 1 and D >= 2")
        if min(self.hidden_dim, self.feature_dim, self.dec_hidden) < 1:
            raise ConfigurationError("layer widths must be positive")
        if self.enc_mlp_layers != 1 or self.dec_mlp_layers != 2:
            raise ConfigurationError(
                "supported head depths are 1 (encoder) and 2 (decoder)"
            )

    @property
    def enc_input_dim(self) -> int:
        slots = self.d - 1
        if self.feedback_mode == "noisy":
            slots *= 2
        return self.k + slots

    @property
    def dec_input_dim(self) -> int:
        return self.d

    @property
    def n_classes(self) -> int:
        return 1 << self.k


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int
    epochs: int
    batches_per_epoch: int
    lr0: float = 1e-3
    grad_clip: float = 0.5
    weight_decay: float = 0.01
    train_snr_ff_db: float = -1.0
    train_snr_fb_db: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.batch_size, self.epochs, self.batches_per_epoch) < 1:
            raise ConfigurationError("batch/epoch counts must be positive")
        if self.lr0 < 0:
            raise ConfigurationError("lr0 must be >= 0 (0 = dry run)")
        if self.grad_clip <= 0:
            raise ConfigurationError("grad_clip must be positive")

    @classmethod
    def desk_preset(cls, **overrides) -> "TrainConfig":
        """Desk-scale run: 2e3 batches of 1e4 samples (~2e7 samples)."""
        base = dict(batch_size=10_000, epochs=20, batches_per_epoch=100)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def paper_preset(cls, **overrides) -> "TrainConfig":
        """Full-scale run: 1.2e5 batches of 1e5 samples. Not feasible on a
        desk machine; present for completeness."""
        base = dict(batch_size=100_000, epochs=120, batches_per_epoch=1000)
        base.update(overrides)
        return cls(**base)

    @property
    def total_batches(self) -> int:
        return self.epochs * self.batches_per_epoch


def _linear_init(rng, fan_in: int, fan_out: int, scale: float = 1.0):
    bound = scale / math.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    b = rng.uniform(-bound, bound, size=(1, fan_out))
    return w, b


def init_params(arch: ArchitectureConfig, seed: int, dtype=np.float32) -> dict[str, Tensor]:
    """Uniform(+-1/sqrt(fan_in)) weights; the decoder output layer is scaled
    down so initial logits are near-uniform (initial CE ~= K ln 2)."""
    rng = RngStream(seed).child(_INIT_STREAM).generator()
    h, f = arch.hidden_dim, arch.feature_dim
    spec = [
        ("enc.fe.l1", arch.enc_input_dim, h, 1.0),
        ("enc.fe.l2", h, h, 1.0),
        ("enc.fe.l3", h, h, 1.0),
        ("enc.fe.l4", 2 * h, f, 1.0),
        ("enc.head.l1", f, 1, 1.0),
        ("dec.fe.l1", arch.dec_input_dim, h, 1.0),
        ("dec.fe.l2", h, h, 1.0),
        ("dec.fe.l3", h, h, 1.0),
        ("dec.fe.l4", 2 * h, f, 1.0),
        ("dec.head.l1", f, arch.dec_hidden, 1.0),
        ("dec.head.l2", arch.dec_hidden, arch.n_classes, 0.01),
    ]
    params: dict[str, Tensor] = {}
    for name, fan_in, fan_out, scale in spec:
        w, b = _linear_init(rng, fan_in, fan_out, scale)
        params[f"{name}.w"] = Tensor(w, requires_grad=True, dtype=dtype)
        params[f"{name}.b"] = Tensor(b, requires_grad=True, dtype=dtype)
    params["alpha"] = Tensor(np.ones((1, arch.d)), requires_grad=True, dtype=dtype)
    return params


def _linear(g: Graph, params, name: str, x: Tensor) -> Tensor:
    return g.add_bias(g.matmul(x, params[f"{name}.w"]), params[f"{name}.b"])


def _feature_extractor(g: Graph, params, prefix: str, x: Tensor) -> Tensor:
    h1 = _linear(g, params, f"{prefix}.l1", x)
    a1 = g.relu(h1)
    a2 = g.relu(_linear(g, params, f"{prefix}.l2", a1))
    main = _linear(g, params, f"{prefix}.l3", a2)
    skip = g.negate(h1)
    return _linear(g, params, f"{prefix}.l4", g.concat_cols(main, skip))


def encoder_raw(g: Graph, params, x: Tensor) -> Tensor:
    return _linear(g, params, "enc.head.l1", _feature_extractor(g, params, "enc.fe", x))


def decoder_logits(g: Graph, params, y: Tensor) -> Tensor:
    feat = _feature_extractor(g, params, "dec.fe", y)
    hidden = g.relu(_linear(g, params, "dec.head.l1", feat))
    return _linear(g, params, "dec.head.l2", hidden)


def assemble_features(arch: ArchitectureConfig, u_bits, history) -> np.ndarray:
    """Build one encoder input row for round ``len(history) + 1``.

    ``history`` holds one entry per completed round: the feedback value in
    noiseless mode, or an ``(x_j, cumulative_noise_j)`` pair in noisy mode.
    Unused feedback slots stay zero.
    """
    u_bits = np.asarray(u_bits)
    if u_bits.shape != (arch.k,):
        raise ConfigurationError(f"expected {arch.k} bits, got {u_bits.shape}")
    if len(history) > arch.d - 1:
        raise ConfigurationError(
            f"history has {len(history)} entries; at most D-1 = {arch.d - 1}"
        )
    row = np.zeros(arch.enc_input_dim)
    row[: arch.k] = 2.0 * u_bits - 1.0
    if arch.feedback_mode == "noiseless":
        for j, y in enumerate(history):
            row[arch.k + j] = y
    else:
        for j, (x_j, cum_noise_j) in enumerate(history):
            row[arch.k + j] = x_j
            row[arch.k + (arch.d - 1) + j] = cum_noise_j
    return row


def _round_features(
    g: Graph,
    arch: ArchitectureConfig,
    u_pm: Tensor,
    i: int,
    y_fb: list[Tensor],
    x_sent: list[Tensor],
    cum_noise: list[Tensor],
) -> Tensor:
    """Graph-level batch version of :func:`assemble_features` for round i
    (1-based)."""
    n = u_pm.shape[0]
    pad = arch.d - i

    def zeros(width):
        return g.constant(np.zeros((n, width)))

    if arch.feedback_mode == "noiseless":
        pieces = [u_pm] + y_fb[: i - 1]
        if pad:
            pieces.append(zeros(pad))
    else:
        pieces = [u_pm] + x_sent[: i - 1]
        if pad:
            pieces.append(zeros(pad))
        pieces += cum_noise[: i - 1]
        if pad:
            pieces.append(zeros(pad))
    return g.concat_cols(*pieces) if len(pieces) > 1 else pieces[0]


class LightCodeModel:
    """Trained (or training) encoder/decoder pair with power calibration."""

    def __init__(
        self,
        arch: ArchitectureConfig,
        params: dict[str, Tensor],
        version: str | None = None,
        calib_mean: np.ndarray | None = None,
        calib_std: np.ndarray | None = None,
    ):
        self.arch = arch
        self.params = params
        self.version = version or __version__
        self.calib_mean = calib_mean
        self.calib_std = calib_std
        self.calib_low_sample = False
        self.loss_curve: list[float] = []

    @classmethod
    def initialize(cls, arch: ArchitectureConfig, seed: int, dtype=np.float32):
        return cls(arch, init_params(arch, seed, dtype=dtype))

    @property
    def dtype(self):
        return self.params["alpha"].dtype

    @property
    def alpha(self) -> np.ndarray:
        return self.params["alpha"].data[0]

    @property
    def calibrated(self) -> bool:
        return self.calib_mean is not None and self.calib_std is not None

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def project_alpha(self) -> None:
        a = self.params["alpha"].data
        norm_sq = float(np.sum(a.astype(np.float64) ** 2))
        a *= np.sqrt(self.arch.d / norm_sq).astype(a.dtype)

    # -- spec surface ---------------------------------------------------------

    def encode_round(self, i: int, features: np.ndarray, training: bool = False) -> np.ndarray:
        """Encode one round from pre-assembled features (batch x input_dim)."""
        if not 1 <= i <= self.arch.d:
            raise ConfigurationError(f"round {i} outside [1, {self.arch.d}]")
        g = Graph(dtype=self.dtype, recording=False)
        raw = encoder_raw(g, self.params, g.constant(features))
        if training:
            x = g.mul_scalar(
                g.batch_standardize(raw),
                g.constant([[self.alpha[i - 1]]]),
            )
        else:
            if not self.calibrated:
                raise StateError("inference before calibration; run calibrate()")
            mu = float(self.calib_mean[i - 1])
            sd = float(self.calib_std[i - 1])
            x = g.scale(
                g.add_bias(raw, g.constant([[-mu]])),
                float(self.alpha[i - 1]) / sd,
            )
        return x.data.copy()

    def decode(self, received: np.ndarray) -> np.ndarray:
        """Logits (batch x 2^K) from the D received symbols per row."""
        received = np.asarray(received)
        if received.ndim != 2 or received.shape[1] != self.arch.d:
            raise ConfigurationError(
                f"decoder expects (n, {self.arch.d}), got {received.shape}"
            )
        g = Graph(dtype=self.dtype, recording=False)
        return decoder_logits(g, self.params, g.constant(received)).data.copy()


def _draw_batch(rng, arch: ArchitectureConfig, channel: ChannelSpec, n: int):
    bits = rng.integers(0, 2, size=(n, arch.k), dtype=np.int64)
    weights = 1 << np.arange(arch.k - 1, -1, -1, dtype=np.int64)
    classes = bits @ weights
    sf = math.sqrt(channel.sigma_ff_sq)
    noise_f = rng.normal(0.0, sf, size=(n, arch.d)) if sf > 0 else np.zeros((n, arch.d))
    if arch.feedback_mode == "noisy" and channel.sigma_fb_sq > 0:
        noise_b = rng.normal(0.0, math.sqrt(channel.sigma_fb_sq), size=(n, arch.d))
    else:
        noise_b = np.zeros((n, arch.d))
    return bits, classes, noise_f, noise_b


def _unroll_rounds(
    g: Graph,
    model_or_params,
    arch: ArchitectureConfig,
    bits: np.ndarray,
    noise_f: np.ndarray,
    noise_b: np.ndarray,
    stats: str,
    capture: dict | None = None,
) -> list[Tensor]:
    """Run the D encode rounds through the forward/feedback channels.

    ``stats="batch"`` standardizes each round by current-batch statistics
    (training and calibration); ``stats="calibrated"`` uses the stored
    per-round mean/std (inference). Returns the received-symbol tensors.
    """
    if isinstance(model_or_params, LightCodeModel):
        params = model_or_params.params
        model = model_or_params
    else:
        params = model_or_params
        model = None
    u_pm = g.constant(2.0 * bits - 1.0)
    alpha = params["alpha"]

    y_list: list[Tensor] = []
    x_list: list[Tensor] = []
    cum_list: list[Tensor] = []
    for i in range(1, arch.d + 1):
        feats = _round_features(g, arch, u_pm, i, y_list, x_list, cum_list)
        raw = encoder_raw(g, params, feats)
        if capture is not None:
            capture.setdefault("raw", []).append(raw.data.copy())
        if stats == "batch":
            x = g.mul_scalar(g.batch_standardize(raw), g.slice_cols(alpha, i - 1, i))
        else:
            if model is None or not model.calibrated:
                raise StateError("inference before calibration; run calibrate()")
            mu = float(model.calib_mean[i - 1])
            sd = float(model.calib_std[i - 1])
            x = g.scale(
                g.add_bias(raw, g.constant([[-mu]])),
                float(model.alpha[i - 1]) / sd,
            )
        y = g.add(x, g.constant(noise_f[:, i - 1: i]))
        if capture is not None:
            capture.setdefault("x", []).append(x.data.copy())
        x_list.append(x)
        y_list.append(y)
        if arch.feedback_mode == "noisy":
            # the transmitter recovers n_j + fb-noise_j from the feedback
            cum_list.append(
                g.constant(noise_f[:, i - 1: i] + noise_b[:, i - 1: i])
            )
    return y_list


def training_loss(
    g: Graph,
    params: dict[str, Tensor],
    arch: ArchitectureConfig,
    bits: np.ndarray,
    classes: np.ndarray,
    noise_f: np.ndarray,
    noise_b: np.ndarray,
) -> Tensor:
    """Forward pass of one training batch; returns the scalar CE loss."""
    y_list = _unroll_rounds(g, params, arch, bits, noise_f, noise_b, stats="batch")
    logits = decoder_logits(g, params, g.concat_cols(*y_list))
    return g.softmax_cross_entropy(logits, classes)


def train(
    arch: ArchitectureConfig,
    cfg: TrainConfig,
    channel: ChannelSpec | None = None,
    dtype=np.float32,
) -> LightCodeModel:
    """Joint encoder/decoder training; returns the model with its recorded
    per-batch loss curve (calibration is a separate step)."""
    if channel is None:
        channel = ChannelSpec(cfg.train_snr_ff_db, cfg.train_snr_fb_db)
    if arch.feedback_mode == "noiseless" and not channel.noiseless_feedback:
        raise ConfigurationError(
            "noiseless-mode architecture cannot train on a noisy feedback channel"
        )
    params = init_params(arch, cfg.seed, dtype=dtype)
    model = LightCodeModel(arch, params)
    dry_run = cfg.lr0 == 0.0
    opt = None if dry_run else AdamW(
        params, lr=cfg.lr0, weight_decay=cfg.weight_decay
    )
    data_rng = RngStream(cfg.seed).child(_TRAIN_STREAM).generator()

    batch_index = 0
    # single-threaded BLAS wins here: the arrays are small enough that
    # thread fan-out costs more than it saves
    with threadpool_limits(limits=1):
        for epoch in range(cfg.epochs):
            if not dry_run:
                opt.set_lr(lr_lambda_schedule(epoch, cfg.epochs, cfg.lr0))
            for _ in range(cfg.batches_per_epoch):
                bits, classes, noise_f, noise_b = _draw_batch(
                    data_rng, arch, channel, cfg.batch_size
                )
                g = Graph(dtype=dtype)
                try:
                    loss = training_loss(
                        g, params, arch, bits, classes, noise_f, noise_b
                    )
                except NumericError as exc:
                    raise NumericError(
                        f"non-finite loss at epoch {epoch} batch {batch_index} "
                        f"(lr={0.0 if dry_run else opt.lr:g}): {exc}"
                    ) from exc
                model.loss_curve.append(loss.item())
                if not dry_run:
                    g.backward(loss)
                    clip_grad_value(params, cfg.grad_clip)
                    opt.step()
                    opt.zero_grad()
                    model.project_alpha()
                batch_index += 1
    return model


def calibrate(
    model: LightCodeModel,
    channel: ChannelSpec,
    n_samples: int = 1_000_000,
    seed: int = 0,
    chunk_size: int = 65_536,
) -> LightCodeModel:
    """Store per-round mean/std of the raw encoder outputs, estimated over
    ``n_samples`` training-style unrolls; required before inference."""
    if n_samples < 1:
        raise ConfigurationError("n_samples must be positive")
    model.calib_low_sample = n_samples < 10_000
    arch = model.arch
    base = RngStream(seed).child(_CALIB_STREAM)
    total = np.zeros(arch.d)
    total_sq = np.zeros(arch.d)
    seen = 0
    c = 0
    while seen < n_samples:
        n = min(chunk_size, n_samples - seen)
        rng = base.child(c).generator()
        bits, _, noise_f, noise_b = _draw_batch(rng, arch, channel, n)
        capture: dict = {}
        g = Graph(dtype=model.dtype, recording=False)
        _unroll_rounds(
            g, model.params, arch, bits, noise_f, noise_b,
            stats="batch", capture=capture,
        )
        for i, raw in enumerate(capture["raw"]):
            total[i] += raw.sum(dtype=np.float64)
            total_sq[i] += np.sum(raw.astype(np.float64) ** 2)
        seen += n
        c += 1
    mean = total / seen
    var = total_sq / seen - mean**2
    model.calib_mean = mean
    model.calib_std = np.sqrt(np.maximum(var, 1e-24))
    return model


def unroll_capture(
    model: LightCodeModel,
    indices: np.ndarray,
    channel: ChannelSpec,
    rng,
) -> dict:
    """Inference unroll that exposes internals for analysis probes.

    Returns per-round transmitted symbols ``x`` (n x D), received symbols
    ``y``, forward noise, raw encoder outputs, decoder logits and decoded
    indices.
    """
    if isinstance(rng, RngStream):
        rng = rng.generator()
    arch = model.arch
    n = len(indices)
    bits = _indices_to_bits(np.asarray(indices), arch.k)
    sf = math.sqrt(channel.sigma_ff_sq)
    noise_f = rng.normal(0.0, sf, size=(n, arch.d)) if sf > 0 else np.zeros((n, arch.d))
    if arch.feedback_mode == "noisy" and channel.sigma_fb_sq > 0:
        noise_b = rng.normal(0.0, math.sqrt(channel.sigma_fb_sq), size=(n, arch.d))
    else:
        noise_b = np.zeros((n, arch.d))
    capture: dict = {}
    g = Graph(dtype=model.dtype, recording=False)
    y_list = _unroll_rounds(
        g, model, arch, bits, noise_f, noise_b, stats="calibrated", capture=capture
    )
    y = np.concatenate([t.data for t in y_list], axis=1)
    logits = decoder_logits(g, model.params, g.constant(y)).data
    return {
        "bits": bits,
        "indices": np.asarray(indices),
        "x": np.concatenate(capture["x"], axis=1).astype(np.float64),
        "raw": np.concatenate(capture["raw"], axis=1).astype(np.float64),
        "y": y.astype(np.float64),
        "noise_f": noise_f,
        "logits": logits,
        "decoded": logits.argmax(axis=1),
    }


def codeword_energy(
    model: LightCodeModel, channel: ChannelSpec, n_samples: int, seed: int
) -> float:
    """Mean per-codeword transmitted energy sum_i x_i^2 at inference."""
    base = RngStream(seed).child(7)
    total = 0.0
    seen = 0
    c = 0
    while seen < n_samples:
        n = min(65_536, n_samples - seen)
        rng = base.child(c).generator()
        idx = rng.integers(0, model.arch.n_classes, size=n)
        out = unroll_capture(model, idx, channel, rng)
        total += float(np.sum(out["x"] ** 2))
        seen += n
        c += 1
    return total / seen


def _indices_to_bits(indices: np.ndarray, k: int) -> np.ndarray:
    shifts = np.arange(k - 1, -1, -1)
    return ((indices[:, None] >> shifts[None, :]) & 1).astype(np.int64)


class LightCodeCodec:
    """Harness codec handle backed by a calibrated model."""

    name = "lightcode"

    def __init__(self, model: LightCodeModel):
        self.model = model

    def validate(self, rate: RateSpec, channel: ChannelSpec) -> None:
        arch = self.model.arch
        if (rate.k, rate.d) != (arch.k, arch.d):
            raise ConfigurationError(
                f"model is rate {arch.k}/{arch.d}, asked for {rate.k}/{rate.d}"
            )
        if arch.feedback_mode == "noiseless" and not channel.noiseless_feedback:
            raise ConfigurationError(
                "noiseless-mode model cannot run on a noisy feedback channel"
            )
        if not self.model.calibrated:
            raise StateError("model is not calibrated")

    def simulate_batch(self, indices, rate, channel, rng):
        out = unroll_capture(self.model, indices, channel, rng)
        return out["decoded"]


# -- checkpoint format ---------------------------------------------------------

CHECKPOINT_MAGIC = b"LCFK"
CHECKPOINT_MAJOR = 1
CHECKPOINT_MINOR = 0


def save_model(model: LightCodeModel, path: str) -> None:
    """Write the versioned binary checkpoint (little-endian float32 arrays
    with a trailing 64-bit payload checksum)."""
    header = {
        "arch": asdict(model.arch),
        "version_tag": model.version,
        "layout": "bits as +-1, then feedback slots in round order",
        "calibrated": model.calibrated,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    arrays: list[tuple[str, np.ndarray]] = [
        (name, model.params[name].data) for name in sorted(model.params)
    ]
    if model.calibrated:
        arrays.append(("calib.mean", model.calib_mean.reshape(1, -1)))
        arrays.append(("calib.std", model.calib_std.reshape(1, -1)))

    payload = bytearray()
    payload += struct.pack("<HH", CHECKPOINT_MAJOR, CHECKPOINT_MINOR)
    payload += struct.pack("<I", len(header_bytes))
    payload += header_bytes
    payload += struct.pack("<I", len(arrays))
    for name, data in arrays:
        name_b = name.encode("utf-8")
        arr = np.ascontiguousarray(data, dtype="<f4")
        payload += struct.pack("<H", len(name_b))
        payload += name_b
        payload += struct.pack("<B", arr.ndim)
        payload += struct.pack(f"<{arr.ndim}I", *arr.shape)
        payload += arr.tobytes()
    checksum = hashlib.blake2b(bytes(payload), digest_size=8).digest()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(payload)
        fh.write(checksum)


def load_model(path: str) -> LightCodeModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a LCFK checkpoint")
    if len(blob) < 12 + 8:
        raise CheckpointError(f"{path}: truncated checkpoint")
    payload, checksum = blob[4:-8], blob[-8:]
    expected = hashlib.blake2b(payload, digest_size=8).digest()
    if checksum != expected:
        raise CheckpointChecksumError(f"{path}: checksum mismatch")

    view = memoryview(payload)
    offset = 0

    def take(n: int) -> memoryview:
        nonlocal offset
        if offset + n > len(view):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = view[offset:offset + n]
        offset += n
        return out

    major, minor = struct.unpack("<HH", take(4))
    if major != CHECKPOINT_MAJOR:
        raise CheckpointVersionError(
            f"{path}: format major version {major} != supported {CHECKPOINT_MAJOR}"
        )
    (header_len,) = struct.unpack("<I", take(4))
    header = json.loads(bytes(take(header_len)).decode("utf-8"))
    arch = ArchitectureConfig(**header["arch"])
    (n_arrays,) = struct.unpack("<I", take(4))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape)
        arrays[name] = np.array(data)  # own the memory
    if offset != len(view):
        raise CheckpointError(f"{path}: trailing bytes in checkpoint")

    params = {
        name: Tensor(arr, requires_grad=True, dtype=np.float32)
        for name, arr in arrays.items()
        if not name.startswith("calib.")
    }
    calib_mean = calib_std = None
    if header.get("calibrated"):
        calib_mean = arrays["calib.mean"].reshape(-1).astype(np.float64)
        calib_std = arrays["calib.std"].reshape(-1).astype(np.float64)
    return LightCodeModel(
        arch,
        params,
        version=header.get("version_tag"),
        calib_mean=calib_mean,
        calib_std=calib_std,
    )
