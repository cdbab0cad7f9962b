"""Deterministic toy models and synthetic datasets.

Two weight schemes share one dataset format:

* ``random`` — seeded Gaussian weights. Activations are well-behaved but
  the transcriptions are noise; useful for timing and shape work.

* ``echo`` — hand-constructed weights that solve the synthetic task
  exactly. Each example's features carry one "marked" frame per reference
  word (plus a terminator frame): a slot code saying *which* output
  position the frame belongs to, a content code saying *which* word, and a
  presence amplitude that controls how much attention the frame attracts.
  The encoder layers are residual pass-throughs whose attention
  concentrates on high-presence frames, so importance-ranked dropping
  removes filler frames first, then weakly-marked words, and eventually
  the terminator — at which point decoding degenerates into repeating the
  last word until the cap, the same failure mode long transcriptions show
  at extreme sparsity. The decoder's cross-attention matches its output
  slot against the surviving frames' slot codes and copies out the content
  code, so transcription accuracy degrades exactly with the set of
  surviving frames.

Everything here is a pure function of (config, seed); regenerating with
the same arguments is byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .archive import save_archive
from .errors import ConfigError
from .model import ModelConfig, ModelWeights, sinusoid_table, weight_spec

WORDS = [
    "alfa", "bravo", "charlie", "delta", "echo", "foxtrot",
    "golf", "hotel", "india", "juliett", "kilo", "lima",
]

# Feature / hidden channel map (first 32 channels of d_model).
N_MEL = 32
SLOT_CHANNELS = 16          # channels [0, 16): output-position one-hots
CONTENT_BASE = 16           # channel 16: terminator; 17..28: word one-hots
FILLER_CHANNEL = 30         # mass-matching channel for unmarked frames
PRESENCE_CHANNEL = 31       # attention-attracting amplitude
BOS_CHANNEL = 32            # embedding channel for the start token

MIN_WORDS, MAX_WORDS = 3, 8

# Code amplitudes. Presence of marked frames spans [PRESENCE_LO, PRESENCE_HI];
# unmarked frames carry heavy-tailed presence noise so the importance ranking
# is contested only at high sparsity.
A_SLOT = 6.0
A_CONTENT = 6.0
PRESENCE_LO = 7.0
PRESENCE_HI = 12.0
NOISE_AMP = 12.0
NOISE_POW = 4.0
FILLER_AMP = float(np.sqrt(A_SLOT**2 + A_CONTENT**2))

ENC_Q_BIAS = 3.2
ENC_K_GAIN = 3.2
DEC_Q_GAIN = 1.0
DEC_K_GAIN = 2.6
DEC_V_GAIN = 1.0
DEC_O_GAIN = 1.2
DEC_SLOT_AMP = 4.0
STOP_PUSH = 8.0

PRESETS = {
    "tiny": dict(d_model=64, n_heads=4, n_encoder_layers=4, n_decoder_layers=2,
                 max_source_len=128),
    "small": dict(d_model=128, n_heads=8, n_encoder_layers=8, n_decoder_layers=4,
                  max_source_len=512),
}


def echo_vocab() -> list[str]:
    return ["<bos>", "<eot>"] + WORDS + ["<pad14>", "<pad15>"]


def ids_to_words(ids: list[int], vocab: list[str]) -> list[str]:
    return [vocab[i] if 0 <= i < len(vocab) else f"<{i}>" for i in ids]


def words_to_ids(words: list[str]) -> list[int]:
    return [2 + WORDS.index(w) for w in words]


def make_config(preset: str) -> ModelConfig:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    p = PRESETS[preset]
    cfg = ModelConfig(
        d_model=p["d_model"],
        n_heads=p["n_heads"],
        n_encoder_layers=p["n_encoder_layers"],
        n_decoder_layers=p["n_decoder_layers"],
        vocab_size=len(echo_vocab()),
        n_mel=N_MEL,
        max_source_len=p["max_source_len"],
        max_target_len=256,
        max_new_tokens=64,
    )
    cfg.validate()
    return cfg


def _zeros_like_spec(cfg: ModelConfig) -> dict[str, np.ndarray]:
    return {name: np.zeros(shape, dtype=np.float32)
            for name, shape in weight_spec(cfg).items()}


def _identity_stem(t: dict[str, np.ndarray], cfg: ModelConfig) -> None:
    """Centre-tap convolutions that copy mel channels into hidden channels."""
    mid = cfg.stem_kernel // 2
    for c in range(cfg.n_mel):
        t["stem.conv1.w"][c, c, mid] = 1.0
    for c in range(cfg.d_model):
        t["stem.conv2.w"][c, c, mid] = 1.0


def _unit_norms(t: dict[str, np.ndarray]) -> None:
    for name in t:
        if name.endswith(("ln1.g", "ln2.g", "ln3.g", "ln_post.g")):
            t[name][:] = 1.0


def echo_weights(cfg: ModelConfig) -> ModelWeights:
    """Weights that transcribe the echo task exactly at zero sparsity."""
    if cfg.head_dim < SLOT_CHANNELS:
        raise ConfigError("echo weights need head_dim >= 16")
    if cfg.n_mel != N_MEL or cfg.d_model < BOS_CHANNEL + 1:
        raise ConfigError("echo weights need n_mel == 32 and d_model >= 33")
    t = _zeros_like_spec(cfg)
    _identity_stem(t, cfg)
    _unit_norms(t)
    t["enc.pos"] = sinusoid_table(cfg.max_source_len, cfg.d_model)

    # Encoder: every query asks "how present are you?"; values stay zero so
    # each layer is a residual no-op and only the scores matter.
    for l in range(cfg.n_encoder_layers):
        gain = 1.0 + 0.03 * l
        t[f"enc.{l}.attn.q_b"][0] = ENC_Q_BIAS * gain
        t[f"enc.{l}.attn.k_w"][PRESENCE_CHANNEL, 0] = ENC_K_GAIN

    # Decoder positions carry the slot code of the step being produced.
    for step in range(min(SLOT_CHANNELS, cfg.max_target_len)):
        t["dec.pos"][step, step] = DEC_SLOT_AMP

    # Token embeddings: one content channel each (start token lives outside
    # the content block so logits never favour it).
    t["dec.emb"][cfg.bos_id, BOS_CHANNEL] = 1.0
    t["dec.emb"][cfg.eot_id, CONTENT_BASE] = 1.0
    for i in range(len(WORDS)):
        t["dec.emb"][2 + i, CONTENT_BASE + 1 + i] = 1.0

    # First decoder layer: cross-attention matches slot codes and copies the
    # winning frame's content code into the content block.
    for ch in range(SLOT_CHANNELS):
        t["dec.0.cross.q_w"][ch, ch] = DEC_Q_GAIN
        t["dec.0.cross.k_w"][ch, ch] = DEC_K_GAIN
    for j in range(SLOT_CHANNELS):
        src = CONTENT_BASE + j
        if src < cfg.d_model:
            t["dec.0.cross.v_w"][src, j] = DEC_V_GAIN
            t["dec.0.cross.o_w"][j, src] = DEC_O_GAIN
    return ModelWeights(t)


def never_stop_weights(cfg: ModelConfig) -> ModelWeights:
    """Echo weights biased so the terminator token can never win."""
    w = echo_weights(cfg)
    last = cfg.n_decoder_layers - 1
    t = dict(w.tensors)
    b2 = t[f"dec.{last}.ffn.b2"].copy()
    b2[CONTENT_BASE + 1] = STOP_PUSH  # permanently favour the first word
    t[f"dec.{last}.ffn.b2"] = b2
    return ModelWeights(t)


def immediate_stop_weights(cfg: ModelConfig) -> ModelWeights:
    """Echo weights biased so the very first step emits the terminator."""
    w = echo_weights(cfg)
    last = cfg.n_decoder_layers - 1
    t = dict(w.tensors)
    b2 = t[f"dec.{last}.ffn.b2"].copy()
    b2[CONTENT_BASE] = STOP_PUSH
    t[f"dec.{last}.ffn.b2"] = b2
    return ModelWeights(t)


def random_weights(cfg: ModelConfig, seed: int) -> ModelWeights:
    """Seeded Gaussian weights with conventional scales."""
    rng = np.random.default_rng([seed, 101])
    t = {}
    for name, shape in weight_spec(cfg).items():
        if name.endswith((".g",)):
            t[name] = np.ones(shape, dtype=np.float32)
        elif name.endswith((".b", "_b", "b1", "b2")):
            t[name] = np.zeros(shape, dtype=np.float32)
        elif name == "enc.pos":
            t[name] = sinusoid_table(cfg.max_source_len, cfg.d_model)
        elif name == "dec.pos":
            t[name] = rng.normal(0.0, 0.1, shape).astype(np.float32)
        elif name == "dec.emb":
            t[name] = rng.normal(0.0, 0.5, shape).astype(np.float32)
        else:
            t[name] = rng.normal(0.0, 0.05, shape).astype(np.float32)
    return ModelWeights(t)


def build_weights(cfg: ModelConfig, scheme: str, seed: int) -> ModelWeights:
    if scheme == "echo":
        return echo_weights(cfg)
    if scheme == "random":
        return random_weights(cfg, seed)
    raise ConfigError(f"unknown weight scheme {scheme!r}")


def make_echo_example(
    cfg: ModelConfig, seed: int, index: int
) -> tuple[np.ndarray, float, str]:
    """Synthesize (features [T_mel, n_mel], duration_seconds, reference_text)."""
    rng = np.random.default_rng([seed, 7, index])
    t_frames = cfg.max_source_len          # post-stem length
    t_mel = 2 * t_frames                   # stride-2 stem halves it
    m = int(rng.integers(MIN_WORDS, MAX_WORDS + 1))
    word_idx = rng.integers(0, len(WORDS), size=m)
    text = " ".join(WORDS[i] for i in word_idx)

    feats = np.zeros((t_mel, cfg.n_mel), dtype=np.float32)
    # Heavy-tailed presence noise on unmarked frames; the filler channel
    # keeps their row magnitude comparable to marked frames so layernorm
    # does not rescale the contest.
    noise = NOISE_AMP * rng.random(t_mel) ** NOISE_POW
    feats[:, PRESENCE_CHANNEL] = noise
    feats[:, FILLER_CHANNEL] = FILLER_AMP

    # Presence ranks are a per-example permutation: which word is weakest
    # (and whether the terminator outranks it) varies across examples.
    ranks = rng.permutation(m + 1)
    for slot in range(m + 1):
        enc_pos = (slot + 1) * t_frames // (m + 2)
        mel_pos = 2 * enc_pos              # centre tap of the stride-2 conv
        content = CONTENT_BASE if slot == m else CONTENT_BASE + 1 + int(word_idx[slot])
        presence = PRESENCE_LO + (PRESENCE_HI - PRESENCE_LO) * ranks[slot] / m
        feats[mel_pos, :] = 0.0
        feats[mel_pos, slot] = A_SLOT
        feats[mel_pos, content] = A_CONTENT
        feats[mel_pos, PRESENCE_CHANNEL] = presence

    duration = 0.9 + 0.45 * m + 0.2 * float(rng.random())
    return feats, duration, text


def write_fixtures(
    out_dir, preset: str, n_examples: int, seed: int, scheme: str = "echo"
) -> dict[str, Path]:
    """Generate model + dataset files; byte-identical for identical inputs."""
    if n_examples < 1:
        raise ConfigError("n_examples must be >= 1")
    cfg = make_config(preset)
    weights = build_weights(cfg, scheme, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    save_archive(out / "weights.eas", weights.tensors)
    model_doc = {
        "config": cfg.to_json_dict(),
        "weights": "weights.eas",
        "vocab": echo_vocab(),
        "scheme": scheme,
        "seed": seed,
    }
    (out / "model.json").write_text(json.dumps(model_doc, indent=2) + "\n")

    features = {}
    lines = []
    for i in range(n_examples):
        feats, duration, text = make_echo_example(cfg, seed, i)
        name = f"ex{i:06d}"
        features[name] = feats
        lines.append(json.dumps({
            "features": f"features.eas#{name}",
            "duration_seconds": round(duration, 6),
            "reference_text": text,
        }))
    save_archive(out / "features.eas", features)
    (out / "manifest.jsonl").write_text("\n".join(lines) + "\n")

    return {
        "model": out / "model.json",
        "weights": out / "weights.eas",
        "features": out / "features.eas",
        "manifest": out / "manifest.jsonl",
    }
