"""Grid search over (stage, sparsity) and Pareto-front selection.

Domination is strict in *both* coordinates: a record is off the front only
if some other record has strictly lower WER and strictly lower RTF. A
consequence worth knowing: records that tie one coordinate co-exist on the
front, including exact duplicates of front points.

The constrained pick keeps front members whose accuracy ratio
(1 - wer) / (1 - wer0) is at least 0.99, orders them by ascending RTF
(ties: lower WER, then (stage, sparsity)), and reports up to three.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import TaskExample
from .errors import ConfigError
from .evaluate import evaluate_config
from .metrics import ACCURACY_FLOOR, EvalRecord, accuracy_ratio
from .model import ModelConfig, ModelWeights
from .sparsify import EasConfig

DEFAULT_SPARSITIES = tuple(round(0.1 * i, 1) for i in range(10))


@dataclass(frozen=True)
class SearchGrid:
    stages: tuple[int, ...]
    sparsities: tuple[float, ...] = DEFAULT_SPARSITIES

    def validate(self, n_encoder_layers: int) -> None:
        if not self.stages:
            raise ConfigError("grid needs at least one stage")
        for s in self.stages:
            if not 1 <= s <= n_encoder_layers:
                raise ConfigError(f"grid stage {s} outside [1, {n_encoder_layers}]")
        for sp in self.sparsities:
            if not 0.0 <= sp < 1.0:
                raise ConfigError(f"grid sparsity {sp} outside [0, 1)")

    def points(self) -> list[tuple[int, float]]:
        return [(i, s) for i in sorted(self.stages) for s in sorted(self.sparsities)]


@dataclass
class ParetoReport:
    baseline: EvalRecord
    all_records: list[EvalRecord]
    front: list[EvalRecord]
    admissible: list[EvalRecord]
    top3: list[EvalRecord]

    @property
    def no_admissible(self) -> bool:
        """True when candidates existed but none met the accuracy bound."""
        return not self.admissible and not self.top3


def run_grid(
    cfg: ModelConfig,
    weights: ModelWeights,
    dataset: list[TaskExample],
    vocab: list[str],
    grid: SearchGrid,
    aggregation: str = "mean",
    cross_layer: bool = False,
    rng_seed: int = 0,
    max_new_tokens: Optional[int] = None,
    progress=None,
) -> tuple[EvalRecord, list[EvalRecord]]:
    """Evaluate the baseline plus every grid point with s > 0.

    Grid points at s = 0 are identical to the baseline by construction
    (the s=0 gather is the identity), so they are deduplicated into the
    single returned baseline record rather than re-evaluated per stage.
    """
    grid.validate(cfg.n_encoder_layers)
    if not dataset:
        raise ConfigError("dataset is empty")
    baseline = evaluate_config(cfg, weights, dataset, vocab, None,
                               max_new_tokens=max_new_tokens)
    if progress:
        progress("baseline", baseline)
    records: list[EvalRecord] = []
    for stage, sparsity in grid.points():
        if sparsity == 0.0:
            continue
        eas = EasConfig(stage=stage, sparsity=sparsity, aggregation=aggregation,
                        cross_layer=cross_layer, rng_seed=rng_seed)
        rec = evaluate_config(cfg, weights, dataset, vocab, eas, baseline,
                              max_new_tokens=max_new_tokens)
        records.append(rec)
        if progress:
            progress(eas.label(), rec)
    return baseline, records


def pareto_front(records: list[EvalRecord]) -> list[EvalRecord]:
    """Records not strictly dominated in both (wer, rtf); ascending rtf.

    Sweep over rtf groups: a record is dominated iff some record with
    strictly smaller rtf also has strictly smaller wer.
    """
    if not records:
        raise ValueError("pareto_front needs at least one record")
    ordered = sorted(records, key=lambda r: r.sort_key())
    front: list[EvalRecord] = []
    best_wer_before = float("inf")
    i = 0
    while i < len(ordered):
        j = i
        while j < len(ordered) and ordered[j].rtf == ordered[i].rtf:
            j += 1
        group = ordered[i:j]
        front.extend(r for r in group if r.wer <= best_wer_before)
        best_wer_before = min(best_wer_before, min(r.wer for r in group))
        i = j
    return front


def select_constrained(
    baseline: EvalRecord, records: list[EvalRecord]
) -> ParetoReport:
    """Front + accuracy filter + top-3 by ascending RTF.

    The baseline competes on the front (it is the s = 0 grid point), but
    the admissible list and the top-3 rank the sparsification candidates:
    the baseline's accuracy ratio is 1 by definition, so counting it would
    make "no admissible configuration" unreachable. With no candidates at
    all (degenerate grid) the baseline is the trivial optimum and becomes
    the whole top3. An empty admissible set is a valid outcome, reported
    via `no_admissible` rather than raised.
    """
    all_records = [baseline] + list(records)
    front = pareto_front(all_records)
    admissible = [r for r in front
                  if r.config is not None and r.accuracy_ratio >= ACCURACY_FLOOR]
    if records:
        top3 = sorted(admissible, key=lambda r: r.sort_key())[:3]
    else:
        top3 = [baseline]
    return ParetoReport(
        baseline=baseline,
        all_records=all_records,
        front=front,
        admissible=admissible,
        top3=top3,
    )


@dataclass
class StabilityPoint:
    group_size: int
    n_groups: int
    mean: float
    std: float


@dataclass
class StabilityAnalysis:
    points: list[StabilityPoint] = field(default_factory=list)

    def smallest_stable_size(self, tolerance: float = 0.01) -> Optional[int]:
        """Smallest group size whose std is within tolerance, if any."""
        for p in sorted(self.points, key=lambda p: p.group_size):
            if p.std <= tolerance:
                return p.group_size
        return None


def stability_analysis(
    per_example_pairs: list[tuple[tuple[int, int], tuple[int, int]]],
    group_sizes: list[int],
    shuffle_seed: Optional[int] = None,
) -> StabilityAnalysis:
    """Accuracy-ratio spread across disjoint groups of each requested size.

    per_example_pairs holds ((edits, ref_len) baseline, (edits, ref_len)
    sparsified) per example, in dataset order. For each size n the first
    floor(total/n) * n examples are split into contiguous disjoint groups
    (optionally after one seeded shuffle), the pooled accuracy ratio is
    computed per group, and the mean and population std over groups are
    returned.
    """
    total = len(per_example_pairs)
    if total == 0:
        raise ValueError("stability_analysis needs at least one example")
    pairs = list(per_example_pairs)
    if shuffle_seed is not None:
        rng = np.random.default_rng(shuffle_seed)
        pairs = [pairs[i] for i in rng.permutation(total)]
    analysis = StabilityAnalysis()
    for size in group_sizes:
        if size < 1:
            raise ValueError(f"group size must be >= 1, got {size}")
        n_groups = total // size
        if n_groups == 0:
            warnings.warn(
                f"group size {size} exceeds dataset size {total}; skipped",
                stacklevel=2,
            )
            continue
        ratios = []
        for g in range(n_groups):
            chunk = pairs[g * size : (g + 1) * size]
            base_edits = sum(b[0] for b, _ in chunk)
            base_ref = sum(b[1] for b, _ in chunk)
            eas_edits = sum(e[0] for _, e in chunk)
            eas_ref = sum(e[1] for _, e in chunk)
            if base_ref == 0 or eas_ref == 0:
                raise ValueError(f"group {g} of size {size} has no reference words")
            ratios.append(accuracy_ratio(eas_edits / eas_ref, base_edits / base_ref))
        arr = np.asarray(ratios, dtype=np.float64)
        analysis.points.append(StabilityPoint(
            group_size=size,
            n_groups=n_groups,
            mean=float(arr.mean()),
            std=float(arr.std()),  # population std
        ))
    return analysis
