"""Encoder-decoder transcription model with an early-sparsification hook.

Architecture (a desk-scale cousin of the usual speech transformer):

    stem:    conv1d(k=3, s=1) + GELU, conv1d(k=3, s=2) + GELU,
             + fixed sinusoidal positions
    encoder: L pre-norm layers (self-attention + FFN), final layernorm
    decoder: pre-norm layers (causal self-attention + cross-attention +
             FFN), final layernorm, logits tied to the token embedding

When an `EasConfig` is supplied, the layer at `stage` runs with its
post-softmax attention materialized, the importance vector is computed
from it, and the hidden state's time dimension is gathered down to
k = round-half-up((1 - s) * T) rows. Every subsequent layer (and the
decoder's cross-attention) operates on the shortened sequence. Positional
information is injected once at the stem and travels with the surviving
rows; it is not re-encoded after the gather, which is what makes the
decoder blind to the permutation/selection of encoder rows.

Only the stage layer ever materializes the full [H, T, T] score tensor;
every other layer keeps attention internal to the layer, which is the
hook that would let those layers run on a fused kernel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import kernels as K
from .errors import ConfigError, DataError
from .sparsify import EasConfig, aggregate_cross_layer, importance_mean, sparsify


@dataclass(frozen=True)
class ModelConfig:
    d_model: int
    n_heads: int
    n_encoder_layers: int
    n_decoder_layers: int
    vocab_size: int
    n_mel: int
    max_source_len: int
    max_target_len: int
    max_new_tokens: int
    stem_kernel: int = 3
    stem_strides: tuple[int, int] = (1, 2)
    bos_id: int = 0
    eot_id: int = 1

    def validate(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}"
            )
        if self.max_new_tokens < 1:
            raise ConfigError("max_new_tokens must be >= 1")
        if self.max_new_tokens > self.max_target_len:
            raise ConfigError(
                f"max_new_tokens={self.max_new_tokens} exceeds "
                f"max_target_len={self.max_target_len}"
            )
        if min(self.n_encoder_layers, self.n_decoder_layers) < 1:
            raise ConfigError("need at least one encoder and one decoder layer")
        if not (0 <= self.bos_id < self.vocab_size and 0 <= self.eot_id < self.vocab_size):
            raise ConfigError("special token ids must lie inside the vocabulary")
        if self.bos_id == self.eot_id:
            raise ConfigError("bos and eot ids must differ")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["stem_strides"] = list(self.stem_strides)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["stem_strides"] = tuple(d["stem_strides"])
        cfg = cls(**d)
        cfg.validate()
        return cfg


def weight_spec(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Expected archive entry names and shapes for a model of this shape."""
    d, v = cfg.d_model, cfg.vocab_size
    ff = 4 * d
    spec: dict[str, tuple[int, ...]] = {
        "stem.conv1.w": (d, cfg.n_mel, cfg.stem_kernel),
        "stem.conv1.b": (d,),
        "stem.conv2.w": (d, d, cfg.stem_kernel),
        "stem.conv2.b": (d,),
        "enc.pos": (cfg.max_source_len, d),
        "dec.pos": (cfg.max_target_len, d),
        "dec.emb": (v, d),
        "enc.ln_post.g": (d,),
        "enc.ln_post.b": (d,),
        "dec.ln_post.g": (d,),
        "dec.ln_post.b": (d,),
    }

    def attn(prefix: str) -> None:
        spec[prefix + "q_w"] = (d, d)
        spec[prefix + "q_b"] = (d,)
        spec[prefix + "k_w"] = (d, d)
        spec[prefix + "v_w"] = (d, d)
        spec[prefix + "v_b"] = (d,)
        spec[prefix + "o_w"] = (d, d)
        spec[prefix + "o_b"] = (d,)

    def norm(prefix: str) -> None:
        spec[prefix + "g"] = (d,)
        spec[prefix + "b"] = (d,)

    def ffn(prefix: str) -> None:
        spec[prefix + "w1"] = (d, ff)
        spec[prefix + "b1"] = (ff,)
        spec[prefix + "w2"] = (ff, d)
        spec[prefix + "b2"] = (d,)

    for l in range(cfg.n_encoder_layers):
        norm(f"enc.{l}.ln1.")
        attn(f"enc.{l}.attn.")
        norm(f"enc.{l}.ln2.")
        ffn(f"enc.{l}.ffn.")
    for l in range(cfg.n_decoder_layers):
        norm(f"dec.{l}.ln1.")
        attn(f"dec.{l}.self.")
        norm(f"dec.{l}.ln2.")
        attn(f"dec.{l}.cross.")
        norm(f"dec.{l}.ln3.")
        ffn(f"dec.{l}.ffn.")
    return spec


class ModelWeights:
    """Immutable named-tensor bag backing one model instance."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        self.tensors = {k: np.asarray(v, dtype=np.float32) for k, v in tensors.items()}

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise DataError(f"missing weight tensor {name!r}") from None

    def validate(self, cfg: ModelConfig) -> None:
        spec = weight_spec(cfg)
        missing = sorted(set(spec) - set(self.tensors))
        extra = sorted(set(self.tensors) - set(spec))
        if missing:
            raise DataError(f"weights missing entries: {missing[:5]}{'...' if len(missing) > 5 else ''}")
        if extra:
            raise DataError(f"weights contain unexpected entries: {extra[:5]}")
        for name, shape in spec.items():
            got = self.tensors[name].shape
            if got != shape:
                raise DataError(f"weight {name!r} has shape {got}, expected {shape}")
            if not np.all(np.isfinite(self.tensors[name])):
                raise DataError(f"weight {name!r} contains non-finite values")


@dataclass
class EncoderTrace:
    """Encoder output plus what the sparsifier saw.

    kept_indices index into the original post-stem sequence [0, T);
    hidden has exactly len(kept_indices) rows. tap_attention holds the
    post-softmax scores of the stage layer (shape [H, T, T], pre-gather)
    when sparsification was requested. per_layer_importance is populated
    in cross-layer mode only.
    """

    hidden: np.ndarray
    kept_indices: np.ndarray
    source_len: int
    tap_attention: Optional[np.ndarray] = None
    importance: Optional[np.ndarray] = None
    per_layer_importance: Optional[list[np.ndarray]] = None


@dataclass
class DecodeResult:
    token_ids: list[int]
    cap_hit: bool
    logits: Optional[np.ndarray] = None  # [steps, vocab] when requested


def sinusoid_table(n_positions: int, d_model: int) -> np.ndarray:
    """Classic interleaved sin/cos positional table, float32."""
    pos = np.arange(n_positions, dtype=np.float64)[:, None]
    idx = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, idx / d_model)
    table = np.zeros((n_positions, d_model), dtype=np.float64)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return table.astype(np.float32)


def _multi_head_attention(
    x_q: np.ndarray,
    x_kv: np.ndarray,
    w: ModelWeights,
    prefix: str,
    n_heads: int,
    materialize_scores: bool = False,
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Standard scaled dot-product attention over pre-normed inputs.

    Returns (output [Tq, d], scores [H, Tq, Tk] or None). The score tensor
    is assembled only on request; otherwise each head's probabilities stay
    local to this call.
    """
    q = K.matmul(x_q, w[prefix + "q_w"]) + w[prefix + "q_b"]
    k = K.matmul(x_kv, w[prefix + "k_w"])
    v = K.matmul(x_kv, w[prefix + "v_w"]) + w[prefix + "v_b"]
    t_q, d = q.shape
    t_k = k.shape[0]
    dh = d // n_heads
    scale = np.float32(1.0 / np.sqrt(dh))
    out = np.empty((t_q, d), dtype=np.float32)
    scores = np.empty((n_heads, t_q, t_k), dtype=np.float32) if materialize_scores else None
    for h in range(n_heads):
        sl = slice(h * dh, (h + 1) * dh)
        probs = K.softmax_rows(K.matmul(q[:, sl], k[:, sl].T) * scale)
        out[:, sl] = K.matmul(probs, v[:, sl])
        if scores is not None:
            scores[h] = probs
    return K.matmul(out, w[prefix + "o_w"]) + w[prefix + "o_b"], scores


def _ffn(x: np.ndarray, w: ModelWeights, prefix: str) -> np.ndarray:
    h = K.gelu(K.matmul(x, w[prefix + "w1"]) + w[prefix + "b1"])
    return K.matmul(h, w[prefix + "w2"]) + w[prefix + "b2"]


def encoder_layer_forward(
    z: np.ndarray,
    w: ModelWeights,
    layer: int,
    n_heads: int,
    materialize_scores: bool = False,
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """One pre-norm encoder layer; scores returned only when asked for.

    The flag changes what is returned, never what is computed into z_out.
    """
    p = f"enc.{layer}."
    attn_in = K.layernorm(z, w[p + "ln1.g"], w[p + "ln1.b"])
    attn_out, scores = _multi_head_attention(
        attn_in, attn_in, w, p + "attn.", n_heads, materialize_scores
    )
    z = z + attn_out
    z = z + _ffn(K.layernorm(z, w[p + "ln2.g"], w[p + "ln2.b"]), w, p + "ffn.")
    return z, scores


def stem_forward(features: np.ndarray, cfg: ModelConfig, w: ModelWeights) -> np.ndarray:
    """Conv stem + GELU + sinusoidal positions: [T_mel, n_mel] -> [T, d]."""
    features = K.as_f32(features)
    if features.ndim != 2 or features.shape[1] != cfg.n_mel:
        raise DataError(
            f"features must be [T_mel, {cfg.n_mel}], got {features.shape}"
        )
    s1, s2 = cfg.stem_strides
    pad = cfg.stem_kernel // 2
    z = K.gelu(K.conv1d(features, w["stem.conv1.w"], w["stem.conv1.b"], s1, pad))
    z = K.gelu(K.conv1d(z, w["stem.conv2.w"], w["stem.conv2.b"], s2, pad))
    t = z.shape[0]
    if t > cfg.max_source_len:
        raise DataError(
            f"stem produced {t} frames, above model capacity {cfg.max_source_len}"
        )
    return z + w["enc.pos"][:t]


def encoder_forward(
    z: np.ndarray,
    cfg: ModelConfig,
    w: ModelWeights,
    eas: Optional[EasConfig] = None,
) -> EncoderTrace:
    """Run the encoder stack, sparsifying after the stage layer if asked.

    With cross-layer aggregation on, every layer's attention is reduced to
    an importance vector and the gather happens after the final layer.
    """
    if eas is not None:
        eas.validate(cfg.n_encoder_layers)
    t_full = z.shape[0]
    kept = np.arange(t_full, dtype=np.int64)
    tap_attention = None
    importance = None
    per_layer: Optional[list[np.ndarray]] = [] if (eas and eas.cross_layer) else None

    for layer in range(cfg.n_encoder_layers):
        stage = layer + 1
        materialize = eas is not None and (eas.cross_layer or stage == eas.stage)
        z, scores = encoder_layer_forward(z, w, layer, cfg.n_heads, materialize)
        if eas is None:
            continue
        if eas.cross_layer:
            assert per_layer is not None
            per_layer.append(importance_mean(scores))
            if stage == eas.stage:
                tap_attention = scores
            if stage == cfg.n_encoder_layers:
                importance = aggregate_cross_layer(
                    per_layer, eas.aggregation, eas.rng_seed
                )
                z, kept = sparsify(z, importance, eas.sparsity)
        elif stage == eas.stage:
            tap_attention = scores
            importance = aggregate_cross_layer(
                [importance_mean(scores)], eas.aggregation, eas.rng_seed
            )
            z, kept = sparsify(z, importance, eas.sparsity)

    z = K.layernorm(z, w["enc.ln_post.g"], w["enc.ln_post.b"])
    return EncoderTrace(
        hidden=z,
        kept_indices=kept,
        source_len=t_full,
        tap_attention=tap_attention,
        importance=importance,
        per_layer_importance=per_layer,
    )


def encode(
    features: np.ndarray,
    cfg: ModelConfig,
    w: ModelWeights,
    eas: Optional[EasConfig] = None,
) -> EncoderTrace:
    """Stem + encoder stack; see `stem_forward` and `encoder_forward`."""
    return encoder_forward(stem_forward(features, cfg, w), cfg, w, eas)


def greedy_decode(
    trace: EncoderTrace,
    cfg: ModelConfig,
    w: ModelWeights,
    max_new_tokens: Optional[int] = None,
    return_logits: bool = False,
) -> DecodeResult:
    """Greedy autoregressive decoding against the encoder output.

    Starts from the BOS token, emits argmax tokens until EOT or the hard
    cap, and returns the generated ids (BOS and EOT excluded). cap_hit is
    True when the loop ran out of budget instead of stopping naturally.
    """
    cap = cfg.max_new_tokens if max_new_tokens is None else max_new_tokens
    if cap < 1:
        raise ConfigError("max_new_tokens must be >= 1")
    if cap > cfg.max_target_len:
        raise ConfigError(
            f"max_new_tokens={cap} exceeds decoder position table "
            f"({cfg.max_target_len} rows)"
        )
    d = cfg.d_model
    n_layers = cfg.n_decoder_layers
    emb = w["dec.emb"]
    enc_hidden = trace.hidden

    # Cross-attention keys/values depend only on the encoder output.
    cross_k = [K.matmul(enc_hidden, w[f"dec.{l}.cross.k_w"]) for l in range(n_layers)]
    cross_v = [
        K.matmul(enc_hidden, w[f"dec.{l}.cross.v_w"]) + w[f"dec.{l}.cross.v_b"]
        for l in range(n_layers)
    ]
    # Growing self-attention caches, one [cap, d] buffer per layer.
    self_k = [np.empty((cap, d), dtype=np.float32) for _ in range(n_layers)]
    self_v = [np.empty((cap, d), dtype=np.float32) for _ in range(n_layers)]

    n_heads = cfg.n_heads
    dh = cfg.head_dim
    scale = np.float32(1.0 / np.sqrt(dh))

    ids: list[int] = []
    all_logits = [] if return_logits else None
    prev = cfg.bos_id
    cap_hit = True
    for step in range(cap):
        x = (emb[prev] + w["dec.pos"][step])[None, :]
        for l in range(n_layers):
            p = f"dec.{l}."
            h = K.layernorm(x, w[p + "ln1.g"], w[p + "ln1.b"])
            q = K.matmul(h, w[p + "self.q_w"]) + w[p + "self.q_b"]
            self_k[l][step] = (K.matmul(h, w[p + "self.k_w"]))[0]
            self_v[l][step] = (K.matmul(h, w[p + "self.v_w"]) + w[p + "self.v_b"])[0]
            k_cache = self_k[l][: step + 1]
            v_cache = self_v[l][: step + 1]
            attn = np.empty((1, d), dtype=np.float32)
            for hd in range(n_heads):
                sl = slice(hd * dh, (hd + 1) * dh)
                probs = K.softmax_rows(K.matmul(q[:, sl], k_cache[:, sl].T) * scale)
                attn[:, sl] = K.matmul(probs, v_cache[:, sl])
            x = x + K.matmul(attn, w[p + "self.o_w"]) + w[p + "self.o_b"]

            h = K.layernorm(x, w[p + "ln2.g"], w[p + "ln2.b"])
            q = K.matmul(h, w[p + "cross.q_w"]) + w[p + "cross.q_b"]
            attn = np.empty((1, d), dtype=np.float32)
            for hd in range(n_heads):
                sl = slice(hd * dh, (hd + 1) * dh)
                probs = K.softmax_rows(K.matmul(q[:, sl], cross_k[l][:, sl].T) * scale)
                attn[:, sl] = K.matmul(probs, cross_v[l][:, sl])
            x = x + K.matmul(attn, w[p + "cross.o_w"]) + w[p + "cross.o_b"]

            x = x + _ffn(K.layernorm(x, w[p + "ln3.g"], w[p + "ln3.b"]), w, p + "ffn.")

        x = K.layernorm(x, w["dec.ln_post.g"], w["dec.ln_post.b"])
        logits = K.matmul(x, emb.T)[0]
        if all_logits is not None:
            all_logits.append(logits.copy())
        token = int(np.argmax(logits))
        if token == cfg.eot_id:
            cap_hit = False
            break
        ids.append(token)
        prev = token

    return DecodeResult(
        token_ids=ids,
        cap_hit=cap_hit,
        logits=np.stack(all_logits) if all_logits else None,
    )


def save_model(dir_path, cfg: ModelConfig, weights: ModelWeights, vocab: list[str],
               scheme: str, seed: int) -> Path:
    """Write model.json + weights.eas into dir_path; returns model.json path."""
    from .archive import save_archive

    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    save_archive(out / "weights.eas", weights.tensors)
    doc = {
        "config": cfg.to_json_dict(),
        "weights": "weights.eas",
        "vocab": vocab,
        "scheme": scheme,
        "seed": seed,
    }
    path = out / "model.json"
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def load_model(model_json_path) -> tuple[ModelConfig, ModelWeights, list[str]]:
    """Load (config, weights, vocab) from a model.json written by save_model."""
    from .archive import load_archive

    path = Path(model_json_path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    for key in ("config", "weights", "vocab"):
        if key not in doc:
            raise DataError(f"model file {path} missing field {key!r}")
    try:
        cfg = ModelConfig.from_json_dict(doc["config"])
    except TypeError as exc:
        raise DataError(f"model file {path} has malformed config: {exc}") from exc
    weights = ModelWeights(load_archive(path.parent / doc["weights"]))
    weights.validate(cfg)
    return cfg, weights, list(doc["vocab"])
