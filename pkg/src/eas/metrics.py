"""Transcription quality and speed metrics.

WER is word-level Levenshtein distance over reference length. Corpus WER
pools edit distance and reference length over all examples (the standard
ASR convention) rather than averaging per-example rates; the two differ
whenever reference lengths differ.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .sparsify import EasConfig

_PUNCT = re.compile(r"[^\w\s]", flags=re.UNICODE)

# Admissibility threshold: accuracy may degrade at most 1% relative to the
# baseline, i.e. (1 - wer) >= 0.99 * (1 - wer0).
ACCURACY_FLOOR = 0.99


def normalize_text(text: str) -> list[str]:
    """Lowercase, strip punctuation, collapse whitespace; return word list."""
    return _PUNCT.sub(" ", text.lower()).split()


def edit_distance(ref: list[str], hyp: list[str]) -> int:
    """Word-level Levenshtein distance, unit costs for sub/ins/del."""
    if not ref:
        return len(hyp)
    if not hyp:
        return len(ref)
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        cur = [i]
        for j, h in enumerate(hyp, start=1):
            if r == h:
                cur.append(prev[j - 1])
            else:
                cur.append(1 + min(prev[j - 1], prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def wer(ref: list[str], hyp: list[str]) -> float:
    """Per-example word error rate; undefined (raises) for empty reference."""
    if not ref:
        raise ValueError("wer is undefined for an empty reference")
    return edit_distance(ref, hyp) / len(ref)


def corpus_wer(pairs: list[tuple[list[str], list[str]]]) -> float:
    """Pooled WER: total edit distance / total reference words."""
    total_edits = 0
    total_ref = 0
    for ref, hyp in pairs:
        total_edits += edit_distance(ref, hyp)
        total_ref += len(ref)
    if total_ref == 0:
        raise ValueError("corpus_wer needs at least one non-empty reference")
    return total_edits / total_ref


def accuracy_ratio(wer_value: float, wer_baseline: float) -> float:
    """(1 - wer) / (1 - wer0); the config is admissible when >= 0.99."""
    if wer_baseline >= 1.0:
        raise ValueError(f"degenerate baseline: wer0={wer_baseline} >= 1")
    return (1.0 - wer_value) / (1.0 - wer_baseline)


def rtf(total_inference_seconds: float, total_audio_seconds: float) -> float:
    """Real-time factor: inference time over audio duration (lower = faster)."""
    if total_audio_seconds <= 0:
        raise ValueError("rtf requires positive total audio duration")
    return total_inference_seconds / total_audio_seconds


def relative_speedup(rtf_baseline: float, rtf_value: float) -> float:
    """Baseline RTF over configuration RTF."""
    if rtf_value <= 0:
        raise ValueError("relative_speedup requires rtf > 0")
    return rtf_baseline / rtf_value


@dataclass
class EvalRecord:
    """Result of evaluating one configuration (or the baseline) on a dataset.

    ``config`` is None for the baseline record. ``wer`` may exceed 1 when
    insertions outnumber reference words (runaway generation).
    """

    config: Optional[EasConfig]
    wer: float
    rtf: float
    accuracy_ratio: float
    speedup: float
    component_seconds: dict[str, float] = field(default_factory=dict)
    avg_generated_tokens: float = 0.0
    cap_hit_fraction: float = 0.0
    n_examples: int = 0
    total_audio_seconds: float = 0.0
    total_inference_seconds: float = 0.0
    failures: list[dict] = field(default_factory=list)

    @property
    def is_baseline(self) -> bool:
        return self.config is None

    def sort_key(self) -> tuple:
        """Deterministic tie-break order: rtf, then wer, then config id."""
        if self.config is None:
            cfg_key = (-1, -1.0)
        else:
            cfg_key = (self.config.stage, self.config.sparsity)
        return (self.rtf, self.wer, cfg_key)

    def to_json_dict(self) -> dict:
        """JSON form with wall-clock-derived fields under a 'timing' subtree."""
        cfg = None
        if self.config is not None:
            cfg = {
                "stage": self.config.stage,
                "sparsity": self.config.sparsity,
                "aggregation": self.config.aggregation,
                "cross_layer": self.config.cross_layer,
                "rng_seed": self.config.rng_seed,
            }
        return {
            "config": cfg,
            "wer": self.wer,
            "accuracy_ratio": self.accuracy_ratio,
            "avg_generated_tokens": self.avg_generated_tokens,
            "cap_hit_fraction": self.cap_hit_fraction,
            "n_examples": self.n_examples,
            "failures": self.failures,
            "timing": {
                "rtf": self.rtf,
                "speedup": self.speedup,
                "component_seconds": dict(self.component_seconds),
                "total_inference_seconds": self.total_inference_seconds,
                "total_audio_seconds": self.total_audio_seconds,
            },
        }
