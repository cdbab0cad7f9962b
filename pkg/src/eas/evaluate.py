"""Per-configuration evaluation: transcribe a dataset, pool metrics.

Timed evaluation is strictly sequential: wall-clock sections must not
overlap with other compute in the process. Untimed helpers (used by the
stability and token-growth analyses) may fan out across a thread pool
capped by the EAS_THREADS environment variable; weights are shared
read-only and every call owns its activation buffers, so this is safe.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

from .dataset import TaskExample
from .errors import DataError
from .fixtures import ids_to_words
from .metrics import (
    EvalRecord,
    accuracy_ratio,
    edit_distance,
    relative_speedup,
    rtf,
)
from .model import ModelConfig, ModelWeights, encoder_forward, greedy_decode, stem_forward
from .sparsify import EasConfig

# Floor for the per-example decode budget when no override is given; the
# default budget is 4x the reference length, which turns would-be infinite
# generation loops into a measurable cap-hit.
MIN_DECODE_BUDGET = 32


def eval_threads() -> int:
    try:
        n = int(os.environ.get("EAS_THREADS", "1"))
    except ValueError:
        return 1
    return max(1, n)


def decode_budget(cfg: ModelConfig, example: TaskExample,
                  override: Optional[int] = None) -> int:
    if override is not None:
        return override
    budget = max(MIN_DECODE_BUDGET, 4 * len(example.reference_words))
    return min(budget, cfg.max_target_len)


@dataclass
class ExampleResult:
    example_id: str
    token_ids: list[int]
    hypothesis_words: list[str]
    edit_dist: int
    ref_len: int
    cap_hit: bool
    stem_seconds: float
    encoder_seconds: float
    decoder_seconds: float

    @property
    def inference_seconds(self) -> float:
        return self.stem_seconds + self.encoder_seconds + self.decoder_seconds


def transcribe_example(
    example: TaskExample,
    cfg: ModelConfig,
    weights: ModelWeights,
    vocab: list[str],
    eas: Optional[EasConfig] = None,
    max_new_tokens: Optional[int] = None,
) -> ExampleResult:
    """Run one example through stem/encoder/decoder with section timers."""
    t0 = time.perf_counter()
    z = stem_forward(example.features, cfg, weights)
    t1 = time.perf_counter()
    trace = encoder_forward(z, cfg, weights, eas)
    t2 = time.perf_counter()
    result = greedy_decode(trace, cfg, weights,
                           decode_budget(cfg, example, max_new_tokens))
    t3 = time.perf_counter()
    hyp = ids_to_words(result.token_ids, vocab)
    return ExampleResult(
        example_id=example.example_id,
        token_ids=result.token_ids,
        hypothesis_words=hyp,
        edit_dist=edit_distance(example.reference_words, hyp),
        ref_len=len(example.reference_words),
        cap_hit=result.cap_hit,
        stem_seconds=t1 - t0,
        encoder_seconds=t2 - t1,
        decoder_seconds=t3 - t2,
    )


def evaluate_config(
    cfg: ModelConfig,
    weights: ModelWeights,
    dataset: list[TaskExample],
    vocab: list[str],
    eas: Optional[EasConfig] = None,
    baseline: Optional[EvalRecord] = None,
    max_new_tokens: Optional[int] = None,
) -> EvalRecord:
    """Timed sequential pass over the dataset -> pooled EvalRecord.

    Failing examples are recorded on the result, never silently dropped;
    their audio does not count toward the RTF denominator.
    """
    total_edits = 0
    total_ref = 0
    total_tokens = 0
    caps = 0
    times = {"stem": 0.0, "encoder": 0.0, "decoder": 0.0}
    total_audio = 0.0
    failures: list[dict] = []
    n_ok = 0
    for example in dataset:
        try:
            res = transcribe_example(example, cfg, weights, vocab, eas, max_new_tokens)
        except Exception as exc:  # noqa: BLE001 - flagged, not dropped
            failures.append({"example_id": example.example_id, "error": str(exc)})
            continue
        n_ok += 1
        total_edits += res.edit_dist
        total_ref += res.ref_len
        total_tokens += len(res.token_ids)
        caps += int(res.cap_hit)
        times["stem"] += res.stem_seconds
        times["encoder"] += res.encoder_seconds
        times["decoder"] += res.decoder_seconds
        total_audio += example.duration_seconds
    if total_ref == 0:
        raise ValueError("evaluation produced no reference words (all examples failed?)")
    total_inference = sum(times.values())
    wer_value = total_edits / total_ref
    rtf_value = rtf(total_inference, total_audio)
    if baseline is None:
        ratio, speedup = 1.0, 1.0
        if eas is not None:
            raise ValueError("non-baseline evaluation requires a baseline record")
    else:
        if baseline.wer >= 1.0:
            raise DataError(
                f"baseline WER {baseline.wer:.3f} >= 1: accuracy ratios are "
                "undefined against a degenerate baseline"
            )
        ratio = accuracy_ratio(wer_value, baseline.wer)
        speedup = relative_speedup(baseline.rtf, rtf_value)
    return EvalRecord(
        config=eas,
        wer=wer_value,
        rtf=rtf_value,
        accuracy_ratio=ratio,
        speedup=speedup,
        component_seconds=times,
        avg_generated_tokens=total_tokens / n_ok if n_ok else 0.0,
        cap_hit_fraction=caps / n_ok if n_ok else 0.0,
        n_examples=n_ok,
        total_audio_seconds=total_audio,
        total_inference_seconds=total_inference,
        failures=failures,
    )


def collect_correctness(
    cfg: ModelConfig,
    weights: ModelWeights,
    dataset: list[TaskExample],
    vocab: list[str],
    eas: Optional[EasConfig] = None,
    max_new_tokens: Optional[int] = None,
) -> list[tuple[int, int]]:
    """Untimed per-example (edit_distance, reference_length) pairs.

    Order matches the dataset; may run on EAS_THREADS worker threads.
    """
    def one(example: TaskExample) -> tuple[int, int]:
        res = transcribe_example(example, cfg, weights, vocab, eas, max_new_tokens)
        return res.edit_dist, res.ref_len

    threads = eval_threads()
    if threads == 1:
        return [one(e) for e in dataset]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, dataset))
