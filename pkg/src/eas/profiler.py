"""Wall-clock decomposition of the inference path.

Measurements use the monotonic performance counter around the stem, the
encoder stack, and the decode loop separately. Repeats are kept raw (no
silent averaging); comparisons should use medians, which are robust to the
scheduler noise that dominates at millisecond scale. Callers must keep the
process otherwise idle during timed repeats.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from typing import Optional

from .dataset import TaskExample
from .errors import MeasurementError
from .evaluate import decode_budget, transcribe_example
from .model import ModelConfig, ModelWeights
from .sparsify import EasConfig


@dataclass
class ComponentTiming:
    """Per-repeat (stem, encoder, decoder) seconds plus median summaries."""

    samples: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def n_repeats(self) -> int:
        return len(self.samples)

    @property
    def stem_seconds(self) -> float:
        return statistics.median(s[0] for s in self.samples)

    @property
    def encoder_seconds(self) -> float:
        return statistics.median(s[1] for s in self.samples)

    @property
    def decoder_seconds(self) -> float:
        return statistics.median(s[2] for s in self.samples)


def harness_overhead_seconds(n_probes: int = 64) -> float:
    """Measured cost of an empty timed section, for additivity bounds."""
    worst = 0.0
    for _ in range(n_probes):
        t0 = time.perf_counter()
        t1 = time.perf_counter()
        worst = max(worst, t1 - t0)
    return worst


def timed_transcribe(
    example: TaskExample,
    cfg: ModelConfig,
    weights: ModelWeights,
    vocab: list[str],
    eas: Optional[EasConfig] = None,
    n_repeats: int = 3,
    max_new_tokens: Optional[int] = None,
) -> tuple[list[int], ComponentTiming, bool]:
    """Repeated timed runs of one example.

    Returns (token ids, timing, cap_hit). One untimed warm-up run precedes
    measurement so one-time allocation effects stay out of the samples.
    Token output must be identical across repeats; a mismatch means the
    measurement is invalid and raises.
    """
    if n_repeats < 1:
        raise MeasurementError("n_repeats must be >= 1")
    warm = transcribe_example(example, cfg, weights, vocab, eas, max_new_tokens)
    timing = ComponentTiming()
    for _ in range(n_repeats):
        res = transcribe_example(example, cfg, weights, vocab, eas, max_new_tokens)
        if res.token_ids != warm.token_ids:
            raise MeasurementError(
                f"non-deterministic decode during timing of {example.example_id}"
            )
        timing.samples.append(
            (res.stem_seconds, res.encoder_seconds, res.decoder_seconds)
        )
    return warm.token_ids, timing, warm.cap_hit


def timed_dataset_pass(
    dataset: list[TaskExample],
    cfg: ModelConfig,
    weights: ModelWeights,
    vocab: list[str],
    eas: Optional[EasConfig] = None,
    n_repeats: int = 3,
    max_new_tokens: Optional[int] = None,
) -> tuple[ComponentTiming, int, int]:
    """Repeated timed passes over a whole dataset.

    Each ComponentTiming sample holds per-repeat *totals* over the dataset.
    Returns (timing, total generated tokens, number of cap hits); token
    output is verified identical across repeats.
    """
    if n_repeats < 1:
        raise MeasurementError("n_repeats must be >= 1")
    transcribe_example(dataset[0], cfg, weights, vocab, eas, max_new_tokens)  # warm-up
    reference_ids: list[list[int]] = []
    total_tokens = 0
    cap_hits = 0
    timing = ComponentTiming()
    for repeat in range(n_repeats):
        stem = enc = dec = 0.0
        for i, example in enumerate(dataset):
            res = transcribe_example(example, cfg, weights, vocab, eas, max_new_tokens)
            if repeat == 0:
                reference_ids.append(res.token_ids)
                total_tokens += len(res.token_ids)
                cap_hits += int(res.cap_hit)
            elif res.token_ids != reference_ids[i]:
                raise MeasurementError(
                    f"non-deterministic decode during timing of {example.example_id}"
                )
            stem += res.stem_seconds
            enc += res.encoder_seconds
            dec += res.decoder_seconds
        timing.samples.append((stem, enc, dec))
    return timing, total_tokens, cap_hits


@dataclass
class TokenGrowthPoint:
    sparsity: float
    avg_tokens: float
    cap_hit_fraction: float


def token_growth_curve(
    dataset: list[TaskExample],
    cfg: ModelConfig,
    weights: ModelWeights,
    vocab: list[str],
    stage: int,
    sparsities: list[float],
    aggregation: str = "mean",
    rng_seed: int = 0,
    max_new_tokens: Optional[int] = None,
) -> tuple[float, list[TokenGrowthPoint]]:
    """Average generated-token count and cap-hit rate per sparsity.

    Returns (baseline average, per-sparsity points). Untimed.
    """
    def sweep(eas: Optional[EasConfig]) -> tuple[float, float]:
        tokens = 0
        caps = 0
        for example in dataset:
            res = transcribe_example(example, cfg, weights, vocab, eas, max_new_tokens)
            tokens += len(res.token_ids)
            caps += int(res.cap_hit)
        return tokens / len(dataset), caps / len(dataset)

    baseline_avg, baseline_frac = sweep(None)
    points = []
    for s in sorted(sparsities):
        if s == 0.0:
            # identical to the baseline by the s=0 identity; reuse it
            avg, frac = baseline_avg, baseline_frac
        else:
            avg, frac = sweep(EasConfig(stage=stage, sparsity=s,
                                        aggregation=aggregation, rng_seed=rng_seed))
        points.append(TokenGrowthPoint(sparsity=s, avg_tokens=avg, cap_hit_fraction=frac))
    return baseline_avg, points


def decode_cap_for(cfg: ModelConfig, example: TaskExample,
                   override: Optional[int] = None) -> int:
    """Expose the decode budget used by the timing paths."""
    return decode_budget(cfg, example, override)
