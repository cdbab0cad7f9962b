"""Export encoder internals from a Whisper-architecture model.

For each clip the exporter runs the encoder once with eager attention
(score tensors are only available on that path), captures the post-softmax
self-attention [H, T, T] and the per-layer hidden states [T, N] for the
requested layers, and writes them into one tensor archive per clip. A
sidecar values file stores the exporter's own per-layer importance vector
(mean attention mass per token) and the top-k index sets it derives from
it at sparsities 0.1 .. 0.9 — computed here with torch and integer
arithmetic, independent of the engine being validated.

Checkpoints: any `from_pretrained`-loadable id or local directory works
when available; `random:<spec>` (e.g. "random:layers=4,heads=4,d=64,
mels=32,positions=64,seed=0") builds the same architecture with seeded
random weights for fully offline use. Layer indices are 1-based;
"attn.layer{l}" is layer l's own attention and "hidden.layer{l}" is layer
l's output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .writer import write_archive

EXPORT_SPARSITIES = tuple(round(0.1 * i, 1) for i in range(1, 10))
ROW_SUM_TOL = 1e-4
FRAME_SECONDS = 0.01  # nominal feature hop

_RANDOM_DEFAULTS = dict(layers=4, heads=4, d=64, mels=32, positions=64, seed=0)


def parse_random_spec(spec: str) -> dict:
    params = dict(_RANDOM_DEFAULTS)
    if spec:
        for item in spec.split(","):
            key, _, value = item.partition("=")
            key = key.strip()
            if key not in params:
                raise ValueError(f"unknown random-checkpoint field {key!r}")
            params[key] = int(value)
    return params


def load_checkpoint(checkpoint: str):
    """Return an eval-mode WhisperModel with eager attention."""
    from transformers import WhisperConfig, WhisperModel

    if checkpoint.startswith("random:") or checkpoint == "random":
        params = parse_random_spec(checkpoint.partition(":")[2])
        config = WhisperConfig(
            vocab_size=51865,
            num_mel_bins=params["mels"],
            encoder_layers=params["layers"],
            encoder_attention_heads=params["heads"],
            decoder_layers=2,
            decoder_attention_heads=params["heads"],
            d_model=params["d"],
            encoder_ffn_dim=4 * params["d"],
            decoder_ffn_dim=4 * params["d"],
            max_source_positions=params["positions"],
            max_target_positions=64,
            attn_implementation="eager",
        )
        torch.manual_seed(params["seed"])
        model = WhisperModel(config)
    else:
        model = WhisperModel.from_pretrained(checkpoint, attn_implementation="eager")
    model.eval()
    return model


def load_clip(path) -> np.ndarray:
    """Load mel features stored as .npy, shape [num_mel_bins, T_mel]."""
    arr = np.load(path)
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected a 2-D mel array, got shape {arr.shape}")
    return arr.astype(np.float32)


def keep_count_tenths(t: int, sparsity_tenths: int) -> int:
    """round-half-up((1 - s) * T) for s = sparsity_tenths / 10, exactly."""
    return max(1, ((10 - sparsity_tenths) * t * 2 + 10) // 20)


def topk_ascending(importance: torch.Tensor, k: int) -> list[int]:
    """Indices of the k largest scores, ties to the lower index, ascending."""
    order = torch.argsort(-importance, stable=True)[:k]
    return sorted(int(i) for i in order)


def importance_from_attention(attn: torch.Tensor) -> torch.Tensor:
    """Mean post-softmax attention mass received per token: [H,T,T] -> [T]."""
    return attn.double().mean(dim=(0, 1))


@dataclass
class ClipExport:
    clip: str
    archive: Path
    values: Path
    layers: list[int]
    seq_len: int


@dataclass
class ExportResult:
    clips: list[ClipExport] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    manifest: Path | None = None


def export_bundle(
    checkpoint: str,
    clip_paths: list,
    layers: list[int],
    out_dir,
    references: list[str] | None = None,
) -> ExportResult:
    """Export attention/hidden fixtures for each clip; per-clip failures
    are recorded and do not abort the rest of the batch."""
    model = load_checkpoint(checkpoint)
    n_layers = model.config.encoder_layers
    for l in layers:
        if not 1 <= l <= n_layers:
            raise ValueError(f"layer {l} outside [1, {n_layers}]")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = ExportResult()
    manifest_lines = []

    for idx, clip_path in enumerate(clip_paths):
        clip_name = f"clip{idx:03d}"
        try:
            mel = load_clip(clip_path)
            entries, values, seq_len = _export_one(model, mel, layers)
        except Exception as exc:  # noqa: BLE001 - per-clip containment
            result.errors.append({"clip": str(clip_path), "error": str(exc)})
            continue
        archive_path = out / f"{clip_name}.eas"
        values_path = out / f"{clip_name}.values.json"
        write_archive(archive_path, entries)
        values_doc = {
            "checkpoint": checkpoint,
            "clip": str(clip_path),
            "seq_len": seq_len,
            "sparsities": list(EXPORT_SPARSITIES),
            "layers": values,
        }
        values_path.write_text(json.dumps(values_doc) + "\n")
        reference = (references[idx] if references and idx < len(references)
                     else f"clip {idx} placeholder transcript")
        manifest_lines.append(json.dumps({
            "features": f"{clip_name}.eas#features",
            "duration_seconds": round(mel.shape[1] * FRAME_SECONDS, 6),
            "reference_text": reference,
        }))
        result.clips.append(ClipExport(
            clip=str(clip_path), archive=archive_path, values=values_path,
            layers=list(layers), seq_len=seq_len,
        ))

    if manifest_lines:
        manifest = out / "manifest.jsonl"
        manifest.write_text("\n".join(manifest_lines) + "\n")
        result.manifest = manifest
    return result


def _export_one(model, mel: np.ndarray, layers: list[int]):
    feats = torch.from_numpy(mel).unsqueeze(0)
    with torch.no_grad():
        enc = model.encoder(feats, output_attentions=True, output_hidden_states=True)
    entries: dict[str, np.ndarray] = {"features": mel.T}  # [T_mel, n_mel]
    values: dict[str, dict] = {}
    seq_len = enc.last_hidden_state.shape[1]
    for l in layers:
        attn = enc.attentions[l - 1][0]          # [H, T, T]
        hidden = enc.hidden_states[l][0]         # layer l output, [T, N]
        row_err = float((attn.double().sum(-1) - 1.0).abs().max())
        if row_err > ROW_SUM_TOL:
            raise ValueError(
                f"layer {l} attention rows deviate from softmax by {row_err:.3g}"
            )
        entries[f"attn.layer{l}"] = attn.numpy()
        entries[f"hidden.layer{l}"] = hidden.numpy()
        importance = importance_from_attention(attn)
        t = importance.shape[0]
        values[str(l)] = {
            "importance": [float(x) for x in importance],
            "kept": {
                f"{tenths / 10:.1f}": topk_ascending(
                    importance, keep_count_tenths(t, tenths))
                for tenths in range(1, 10)
            },
        }
    return entries, values, int(seq_len)
