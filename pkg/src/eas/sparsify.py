"""Early attentive sparsification: importance scoring and token selection.

A token's importance is the mean post-softmax attention mass it receives,
taken over every head and every source position of one encoder layer:

    importance[t] = (1 / (H * T)) * sum_{h, t'} attn[h, t', t]

Top-k selection on that vector picks which time-domain tokens survive;
k = round-half-up((1 - s) * T) for sparsity s. Cross-layer mode aggregates
the per-layer importance vectors of all encoder layers element-wise
(mean / max / min / geometric_mean), or replaces them with a seeded random
vector ("random" drops tokens uniformly, ignoring attention entirely).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError
from .kernels import gather_time, topk_indices

AGGREGATIONS = ("mean", "max", "min", "geometric_mean", "random")

# Attention entries can be exactly 0 in float32; the floor keeps the
# geometric mean finite.
_GEOMEAN_FLOOR = 1e-12

# Row-sum slack accepted by importance_mean. Softmax rows of long real
# sequences (T ~ 1500) accumulate up to ~1e-4 of float32 rounding, so the
# gate is looser than the desk-scale postcondition checked in tests.
_ROW_SUM_TOL = 1e-4


@dataclass(frozen=True)
class EasConfig:
    """One point of the (stage, sparsity) search space.

    stage: encoder layer index in [1, L] after which tokens are dropped.
    sparsity: fraction s in [0, 1) of time-domain tokens to drop.
    aggregation: statistic combining per-layer importance vectors; with
        cross_layer off it acts on the single tapped layer (identity for
        everything except "random").
    cross_layer: aggregate importance across all L layers and drop after
        the last one (requires stage == L).
    rng_seed: stream seed for the "random" aggregation.
    """

    stage: int
    sparsity: float
    aggregation: str = "mean"
    cross_layer: bool = False
    rng_seed: int = 0

    def validate(self, n_encoder_layers: int) -> None:
        if not 1 <= self.stage <= n_encoder_layers:
            raise ConfigError(
                f"stage={self.stage} outside [1, {n_encoder_layers}]"
            )
        if not 0.0 <= self.sparsity < 1.0:
            raise ConfigError(f"sparsity={self.sparsity} outside [0, 1)")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(
                f"aggregation={self.aggregation!r} not one of {AGGREGATIONS}"
            )
        if self.cross_layer and self.stage != n_encoder_layers:
            raise ConfigError(
                f"cross_layer aggregation drops at the last layer; "
                f"stage must be {n_encoder_layers}, got {self.stage}"
            )

    def label(self) -> str:
        base = f"({self.stage}, {self.sparsity:g})"
        if self.cross_layer or self.aggregation != "mean":
            base += f" {self.aggregation}" + ("/xlayer" if self.cross_layer else "")
        return base


def importance_mean(attn: np.ndarray) -> np.ndarray:
    """Per-token importance from one layer's post-softmax attention [H,T,T].

    Returns a float64 vector of length T summing to 1 (the H*T rows each
    carry unit mass and the normalizer is 1/(H*T)). Rejects input whose
    rows do not look post-softmax.
    """
    attn = np.asarray(attn)
    if attn.ndim != 3 or attn.shape[1] != attn.shape[2]:
        raise ValueError(f"expected attention of shape [H,T,T], got {attn.shape}")
    h, t, _ = attn.shape
    row_sums = attn.sum(axis=-1, dtype=np.float64)
    if not np.all(np.abs(row_sums - 1.0) <= _ROW_SUM_TOL):
        worst = float(np.max(np.abs(row_sums - 1.0)))
        raise ValueError(
            f"attention rows are not post-softmax (worst row-sum deviation {worst:.3g})"
        )
    return attn.sum(axis=(0, 1), dtype=np.float64) / (h * t)


def aggregate_cross_layer(
    per_layer: list[np.ndarray], fn: str, seed: int = 0
) -> np.ndarray:
    """Combine per-layer importance vectors into one, element-wise.

    "random" ignores the scores entirely (aside from their length) and
    returns a seeded uniform vector, which turns top-k into a uniform
    random drop.
    """
    if not per_layer:
        raise ValueError("aggregate_cross_layer needs at least one layer vector")
    if fn not in AGGREGATIONS:
        raise ValueError(f"unknown aggregation {fn!r}")
    stacked = np.stack([np.asarray(v, dtype=np.float64) for v in per_layer])
    if stacked.ndim != 2:
        raise ValueError("importance vectors must be 1-D and equal length")
    if fn == "mean":
        return stacked.mean(axis=0)
    if fn == "max":
        return stacked.max(axis=0)
    if fn == "min":
        return stacked.min(axis=0)
    if fn == "geometric_mean":
        return np.exp(np.log(np.maximum(stacked, _GEOMEAN_FLOOR)).mean(axis=0))
    rng = np.random.default_rng(seed)
    return rng.uniform(size=stacked.shape[1])


def keep_count(t: int, sparsity: float) -> int:
    """Number of surviving tokens: round-half-up((1 - s) * T), clamped to [1, T].

    The product is evaluated in exact rational arithmetic on the decimal
    value of s, so e.g. T=5, s=0.3 gives 3.5 -> 4 rather than drifting to 3
    through float error.
    """
    if t < 1:
        raise ValueError(f"sequence length must be >= 1, got {t}")
    if not 0.0 <= sparsity < 1.0:
        raise ValueError(f"sparsity={sparsity} outside [0, 1)")
    exact = (1 - Fraction(str(sparsity))) * t
    k = int(exact + Fraction(1, 2))  # floor(x + 1/2) = round half up
    return min(max(k, 1), t)


def sparsify(
    z: np.ndarray, importance: np.ndarray, sparsity: float
) -> tuple[np.ndarray, np.ndarray]:
    """Keep the top-k most important time rows of z[T, N].

    Returns (z_kept[k, N], kept_indices ascending). Scaling the importance
    vector by any positive constant leaves the selection unchanged.
    """
    z = np.asarray(z)
    importance = np.asarray(importance)
    if importance.shape[0] != z.shape[0]:
        raise ValueError(
            f"importance length {importance.shape[0]} != time length {z.shape[0]}"
        )
    kept = topk_indices(importance, keep_count(z.shape[0], sparsity))
    return gather_time(z, kept), kept
