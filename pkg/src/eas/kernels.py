"""Dense float32 kernels used by the model.

Tensors are plain ``numpy.ndarray`` objects with dtype float32 and row-major
layout; shape carries the rank. All kernels are pure functions: inputs are
never mutated, results are new arrays. Reductions run through numpy/BLAS,
which is deterministic for fixed inputs on one platform, so repeated runs
are bit-identical on the same machine.
"""

from __future__ import annotations

import numpy as np

_F32 = np.float32

# tanh-approximation constant sqrt(2/pi); the same formula is used by the
# oracle tests, so keep it exact here.
_GELU_C = 0.7978845608028654


def as_f32(x) -> np.ndarray:
    """View/convert input as a float32 ndarray (no copy when already f32)."""
    return np.asarray(x, dtype=_F32)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """2-D matrix product a[M,K] @ b[K,P] -> [M,P]."""
    a = as_f32(a)
    b = as_f32(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    return np.matmul(a, b)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Softmax over the trailing axis with max-subtraction for stability.

    Each trailing-axis row of the result is nonnegative and sums to 1
    within float32 rounding, for any finite input.
    """
    x = as_f32(x)
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def layernorm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Layer normalization over the trailing axis, then affine scale/shift."""
    x = as_f32(x)
    mean = np.mean(x, axis=-1, keepdims=True)
    var = np.mean(np.square(x - mean), axis=-1, keepdims=True)
    normed = (x - mean) / np.sqrt(var + _F32(eps))
    return normed * as_f32(gamma) + as_f32(beta)


def gelu(x: np.ndarray) -> np.ndarray:
    """GELU activation, tanh approximation."""
    x = as_f32(x)
    inner = _F32(_GELU_C) * (x + _F32(0.044715) * x * x * x)
    return _F32(0.5) * x * (_F32(1.0) + np.tanh(inner))


def conv1d(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray | None,
    stride: int = 1,
    padding: int = 0,
) -> np.ndarray:
    """1-D convolution over time.

    x: [T, C_in], w: [C_out, C_in, K], b: [C_out] or None.
    Returns [T_out, C_out] with T_out = (T + 2*padding - K) // stride + 1.
    """
    x = as_f32(x)
    w = as_f32(w)
    if x.ndim != 2 or w.ndim != 3:
        raise ValueError(f"conv1d expects x[T,C_in], w[C_out,C_in,K]; got {x.shape}, {w.shape}")
    t_in, c_in = x.shape
    c_out, c_in_w, k = w.shape
    if c_in != c_in_w:
        raise ValueError(f"conv1d channel mismatch: x has {c_in}, w expects {c_in_w}")
    if stride < 1:
        raise ValueError("conv1d stride must be >= 1")
    if t_in + 2 * padding < k:
        raise ValueError("conv1d input shorter than kernel after padding")
    if padding:
        x = np.pad(x, ((padding, padding), (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(x, k, axis=0)[::stride]
    out = np.einsum("tck,ock->to", windows, w, dtype=_F32, casting="same_kind")
    if b is not None:
        out = out + as_f32(b)
    return np.ascontiguousarray(out, dtype=_F32)


def topk_indices(v: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries of a vector, sorted ascending.

    Ties break toward the lower index (stable under equal values), so the
    selection is deterministic across platforms.
    """
    v = np.asarray(v)
    if v.ndim != 1:
        raise ValueError(f"topk_indices expects a vector, got shape {v.shape}")
    t = v.shape[0]
    if not 1 <= k <= t:
        raise ValueError(f"topk_indices k={k} out of range [1, {t}]")
    order = np.argsort(-v, kind="stable")
    return np.sort(order[:k]).astype(np.int64)


def gather_time(z: np.ndarray, idx) -> np.ndarray:
    """Select rows of z[T, N] at the given strictly ascending indices."""
    z = np.asarray(z)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("gather_time expects a non-empty index vector")
    if idx[0] < 0 or idx[-1] >= z.shape[0]:
        raise ValueError(f"gather_time index out of range [0, {z.shape[0]})")
    if idx.size > 1 and not np.all(np.diff(idx) > 0):
        raise ValueError("gather_time indices must be strictly ascending")
    return z[idx].copy()
