"""The update compressor: shared encoder, aggregate-reconstructing decoder.

An encoder f maps one client's flat update vector (length N) to a code of
length M < N; every client runs the same f.  The decoder g consumes the
slot-ordered concatenation of a cohort's K codes and emits a single
length-N estimate of the cohort *average* update; individual updates are
never reconstructed anywhere in the pipeline.

Both halves are trained offline against synthetic normal(0, 0.1) vectors,
then frozen.  All dense layers here are bias-free, which makes the whole
map positively homogeneous: decode(encode(a*x)) ~= a*decode(encode(x)) for
a >= 0, so a compressor trained at synthetic scale transfers to real
updates whose magnitude is much smaller, and the code of a zero update
decodes to exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DivergenceError, ShapeError
from .losses import mean_squared_error
from .model import Model
from .optim import Adam
from .rng import seeded_rng

SCHEMES = ("end-to-end", "freeze-decoder", "freeze-encoder")

# the configuration used by the approximation-error study and its tests
STUDY_SCALE = dict(update_dim=1024, code_dim=256, cohort_size=4, blocks=3,
                   encoder_hidden=512, decoder_width=1024, batch_size=64,
                   train_tuples=200_000, seed=17)


@dataclass
class EnnConfig:
    update_dim: int          # N, length of one client's flat update
    code_dim: int            # M, length of the transmitted code
    cohort_size: int         # K, codes consumed per decode
    blocks: int = 3          # residual blocks in the decoder
    encoder_hidden: int = 512
    decoder_width: int = 1024
    batch_size: int = 64
    train_tuples: int = 200_000   # total K-tuples consumed by training
    holdout_tuples: int = 1024
    learn_rate: float = 2e-4
    seed: int = 17
    encoder_activation: str = "tanh"   # "tanh" | "linear"

    def __post_init__(self):
        if self.code_dim > self.update_dim:
            raise ConfigError(f"code_dim {self.code_dim} exceeds update_dim {self.update_dim}; "
                              "codes must not be longer than updates")
        if self.cohort_size < 1:
            raise ConfigError(f"cohort_size must be >= 1, got {self.cohort_size}")
        if self.blocks < 0:
            raise ConfigError(f"blocks must be >= 0, got {self.blocks}")
        if self.encoder_activation not in ("tanh", "linear"):
            raise ConfigError(f"unknown encoder_activation {self.encoder_activation!r}")

    @property
    def compression_ratio(self) -> float:
        return self.update_dim / self.code_dim

    @property
    def steps(self) -> int:
        return max(1, self.train_tuples // self.batch_size)


def encoder_specs(cfg: EnnConfig) -> list[dict]:
    specs = [{"kind": "dense", "n_in": cfg.update_dim, "n_out": cfg.encoder_hidden,
              "bias": False, "init": "glorot"}]
    if cfg.encoder_activation == "tanh":
        specs.append({"kind": "tanh"})
    specs.append({"kind": "dense", "n_in": cfg.encoder_hidden, "n_out": cfg.code_dim,
                  "bias": False, "init": "glorot"})
    return specs


def decoder_specs(cfg: EnnConfig) -> list[dict]:
    joint = cfg.code_dim * cfg.cohort_size
    specs = [{"kind": "dense", "n_in": joint, "n_out": cfg.decoder_width,
              "bias": False, "init": "he"},
             {"kind": "relu"}]
    for _ in range(cfg.blocks):
        specs.append({"kind": "residual-block", "width": cfg.decoder_width,
                      "bias": False, "init": "he"})
    specs.append({"kind": "dense", "n_in": cfg.decoder_width, "n_out": cfg.update_dim,
                  "bias": False, "init": "glorot"})
    return specs


class EnnModel:
    """Paired encoder/decoder with their dimension metadata.

    There is exactly one encoder parameter set; every simulated client
    shares it.  The decoder's input width is code_dim * cohort_size, so a
    raw length-N update is a dimension error on the server path by
    construction.
    """

    def __init__(self, encoder: Model, decoder: Model, config: EnnConfig):
        m, k, n = config.code_dim, config.cohort_size, config.update_dim
        if encoder.input_shape != (n,) or encoder.output_shape != (m,):
            raise ShapeError(f"encoder must map ({n},)->({m},), got "
                             f"{encoder.input_shape}->{encoder.output_shape}")
        if decoder.input_shape != (m * k,) or decoder.output_shape != (n,):
            raise ShapeError(f"decoder must map ({m * k},)->({n},), got "
                             f"{decoder.input_shape}->{decoder.output_shape}")
        self.encoder = encoder
        self.decoder = decoder
        self.config = config

    @classmethod
    def build(cls, config: EnnConfig, *, dtype=np.float32) -> "EnnModel":
        enc = Model.build(encoder_specs(config), (config.update_dim,),
                          seed=config.seed, dtype=dtype)
        # decoder layers draw from streams disjoint from the encoder's
        dec_specs = decoder_specs(config)
        dec_layers = Model.build(dec_specs, (config.code_dim * config.cohort_size,),
                                 rng=seeded_rng(config.seed, "decoder-init"), dtype=dtype)
        return cls(enc, dec_layers, config)

    def copy(self) -> "EnnModel":
        return EnnModel(self.encoder.copy(), self.decoder.copy(), self.config)

    # ---- the two public maps ---------------------------------------------

    def encode(self, x: np.ndarray) -> np.ndarray:
        """Compress update vector(s): (N,) -> (M,) or (B, N) -> (B, M)."""
        single = x.ndim == 1
        xb = x[None, :] if single else x
        if xb.shape[1] != self.config.update_dim:
            raise ShapeError(f"encode expects vectors of length {self.config.update_dim}, "
                             f"got {xb.shape[1]}")
        y = self.encoder.forward(xb.astype(self.encoder.dtype, copy=False))
        return y[0] if single else y

    def decode_aggregate(self, codes) -> np.ndarray:
        """Estimate the cohort-average update from K slot-ordered codes."""
        arr = np.asarray(codes, dtype=self.decoder.dtype)
        k, m = self.config.cohort_size, self.config.code_dim
        if arr.shape != (k, m):
            raise ShapeError(f"decode_aggregate expects {k} codes of length {m}, "
                             f"got shape {arr.shape}")
        z = self.decoder.forward(arr.reshape(1, k * m))
        return z[0]

    def decode_aggregate_batch(self, codes: np.ndarray) -> np.ndarray:
        """(B, K, M) -> (B, N); one decoder pass for a batch of cohorts."""
        b, k, m = codes.shape
        if (k, m) != (self.config.cohort_size, self.config.code_dim):
            raise ShapeError(f"expected (B, {self.config.cohort_size}, {self.config.code_dim}), "
                             f"got {codes.shape}")
        return self.decoder.forward(codes.reshape(b, k * m))


def gaussian_batch(rng: np.random.Generator, count: int, cohort_size: int,
                   update_dim: int, dtype=np.float32) -> np.ndarray:
    """Draw `count` cohort tuples of synthetic updates: normal(0, 0.1)."""
    return rng.normal(0.0, 0.1, size=(count, cohort_size, update_dim)).astype(dtype)


def enn_loss(model: EnnModel, batch: np.ndarray) -> float:
    """Per-element MSE between the decoded estimate and the true average
    over a batch of cohort tuples (B, K, N)."""
    b, k, n = batch.shape
    codes = model.encode(batch.reshape(b * k, n)).reshape(b, k, -1)
    z = model.decode_aggregate_batch(codes)
    loss, _ = mean_squared_error(z, batch.mean(axis=1))
    return loss


def eval_mse(model: EnnModel, batch: np.ndarray, chunk: int = 256) -> float:
    """Held-out per-element MSE, evaluated in fixed-size chunks (fixed
    reduction order, so the value is independent of chunking)."""
    b = batch.shape[0]
    total = 0.0
    for lo in range(0, b, chunk):
        part = batch[lo : lo + chunk]
        total += enn_loss(model, part) * part.shape[0]
    return total / b


@dataclass
class TrainResult:
    model: EnnModel
    history: list[tuple[int, float, float]]  # (step, train_loss, holdout_mse)
    final_mse: float


def train_enn(config: EnnConfig, scheme: str = "end-to-end", *, eval_every: int = 250,
              dtype=np.float32) -> TrainResult:
    """Train a compressor against synthetic normal(0, 0.1) cohorts.

    `scheme` picks which half receives Adam updates; the frozen half keeps
    its initial random weights bit-for-bit.  Training streams fresh tuples
    from the (seed, "train") stream; the holdout uses (seed, "holdout").
    """
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown training scheme {scheme!r}; expected one of {SCHEMES}")
    model = EnnModel.build(config, dtype=dtype)
    enc, dec = model.encoder, model.decoder

    train_enc = scheme in ("end-to-end", "freeze-decoder")
    train_dec = scheme in ("end-to-end", "freeze-encoder")
    params, names = [], []
    if train_enc:
        params += enc.params
        names += [f"encoder.{n}" for n in enc.param_layer_names()]
    if train_dec:
        params += dec.params
        names += [f"decoder.{n}" for n in dec.param_layer_names()]
    opt = Adam(params, lr=config.learn_rate, param_names=names)

    data_rng = seeded_rng(config.seed, "train")
    holdout = gaussian_batch(seeded_rng(config.seed, "holdout"), config.holdout_tuples,
                             config.cohort_size, config.update_dim, dtype=dtype)

    b, k, n = config.batch_size, config.cohort_size, config.update_dim
    history: list[tuple[int, float, float]] = []
    for step in range(1, config.steps + 1):
        x = gaussian_batch(data_rng, b, k, n, dtype=dtype)
        flat = x.reshape(b * k, n)
        codes, enc_caches = enc.forward_train(flat)
        z, dec_caches = dec.forward_train(codes.reshape(b, k * codes.shape[1]))
        target = x.mean(axis=1)
        loss, dz = mean_squared_error(z, target)
        if not math.isfinite(loss):
            raise DivergenceError(f"non-finite training loss at step {step}")
        dconcat, dec_grads = dec.backward(dz.astype(dtype, copy=False), dec_caches)
        grads = []
        if train_enc:
            _, enc_grads = enc.backward(dconcat.reshape(b * k, -1), enc_caches)
            grads += enc_grads
        if train_dec:
            grads += dec_grads
        opt.step(grads)
        if step % eval_every == 0 or step == config.steps:
            history.append((step, loss, eval_mse(model, holdout)))
    return TrainResult(model=model, history=history, final_mse=history[-1][2])


class UpdateCodec:
    """Chunk-wise application of a trained compressor to real update vectors.

    Task models have far more parameters than a CPU-trainable compressor
    input, so the flat update is zero-padded to a whole number of
    compressor-sized chunks and each chunk is coded independently with the
    same shared encoder.  The uplink payload per client is
    chunks * code_dim floats; the end-to-end ratio stays padded_dim /
    payload_dim == update_dim / code_dim.
    """

    def __init__(self, model: EnnModel, total_dim: int):
        self.model = model
        self.total_dim = int(total_dim)
        n = model.config.update_dim
        self.chunks = math.ceil(self.total_dim / n)
        self.padded_dim = self.chunks * n
        self.payload_dim = self.chunks * model.config.code_dim

    @property
    def padding(self) -> int:
        return self.padded_dim - self.total_dim

    def encode_update(self, vec: np.ndarray) -> np.ndarray:
        if vec.shape != (self.total_dim,):
            raise ShapeError(f"expected update of length {self.total_dim}, got {vec.shape}")
        padded = np.zeros(self.padded_dim, dtype=self.model.encoder.dtype)
        padded[: self.total_dim] = vec
        codes = self.model.encode(padded.reshape(self.chunks, -1))
        return codes.reshape(self.payload_dim)

    def decode_mean(self, payloads: np.ndarray) -> np.ndarray:
        """(K, payload_dim) slot-ordered codes -> estimated mean update."""
        k = self.model.config.cohort_size
        if payloads.shape != (k, self.payload_dim):
            raise ShapeError(f"expected ({k}, {self.payload_dim}) codes, got {payloads.shape}")
        m = self.model.config.code_dim
        per_chunk = payloads.reshape(k, self.chunks, m).transpose(1, 0, 2)  # (C, K, M)
        z = self.model.decode_aggregate_batch(np.ascontiguousarray(per_chunk))
        return z.reshape(self.padded_dim)[: self.total_dim]


def study_config(**overrides) -> EnnConfig:
    """The documented experiment scale for the approximation-error study."""
    base = dict(STUDY_SCALE)
    base.update(overrides)
    return EnnConfig(**base)
