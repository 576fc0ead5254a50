"""Dense tensor primitives with forward and vector-Jacobian-product forms.

Tensors are plain C-contiguous numpy arrays (float64 by default, float32 for
benchmarks). Channel is always the innermost axis.

Every reduction here walks its summation axis in a fixed sequential order
while vectorizing over the independent output elements. This makes results
bitwise reproducible and bitwise comparable with scalar loop references,
which is why BLAS-backed ``np.matmul``/``np.dot`` are avoided on forward paths.
"""

from __future__ import annotations

import numpy as np

MAX_RANK = 4
DEFAULT_EPS = 1e-12
_DTYPES = (np.dtype(np.float64), np.dtype(np.float32))


def as_tensor(x, dtype=None, name: str = "tensor") -> np.ndarray:
    """Validate and return ``x`` as a contiguous float tensor.

    Raises ValueError for rank > 4, empty extents, unsupported dtypes or
    non-finite entries.
    """
    arr = np.asarray(x)
    if dtype is None:
        dtype = arr.dtype if arr.dtype in _DTYPES else np.float64
    dtype = np.dtype(dtype)
    if dtype not in _DTYPES:
        raise ValueError(f"{name}: unsupported dtype {dtype}")
    arr = np.ascontiguousarray(arr, dtype=dtype)
    if arr.ndim > MAX_RANK:
        raise ValueError(f"{name}: rank {arr.ndim} exceeds {MAX_RANK}")
    if any(d < 1 for d in arr.shape):
        raise ValueError(f"{name}: every extent must be >= 1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite entries")
    return arr


def seq_sum(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Sum along ``axis`` strictly left to right, starting from 0.0."""
    x = np.moveaxis(np.asarray(x), axis, 0)
    acc = np.zeros(x.shape[1:], dtype=x.dtype)
    for i in range(x.shape[0]):
        acc = acc + x[i]
    return acc


def seq_dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Inner product over the last axis (broadcast elsewhere), sequential order."""
    shape = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    acc = np.zeros(shape, dtype=np.result_type(a, b))
    for k in range(a.shape[-1]):
        acc = acc + a[..., k] * b[..., k]
    return acc


def channel_norm(v: np.ndarray) -> np.ndarray:
    """Euclidean norm over the channel (last) axis."""
    return np.sqrt(seq_dot(v, v))


# ---------------------------------------------------------------------------
# l2_normalize


def l2_normalize(v, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Normalize channel vectors (last axis) to unit length.

    Computes ``v / max(||v||, eps)``, so a zero vector maps to itself.
    Leading axes are treated as a batch of independent vectors.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    v = np.asarray(v)
    if not np.all(np.isfinite(v)):
        raise ValueError("l2_normalize: non-finite input")
    norm = np.maximum(channel_norm(v), eps)
    return v / norm[..., None]


def l2_normalize_vjp(g, v, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Pull a cotangent ``g`` on the normalized output back to ``v``.

    Vectors whose norm falls under ``eps`` get a zero gradient.
    """
    g = np.asarray(g)
    v = np.asarray(v)
    norm = channel_norm(v)
    safe = np.maximum(norm, eps)
    y = v / safe[..., None]
    dv = (g - y * np.sum(y * g, axis=-1, keepdims=True)) / safe[..., None]
    return np.where((norm >= eps)[..., None], dv, 0.0).astype(v.dtype, copy=False)


# ---------------------------------------------------------------------------
# softmax


def softmax(scores, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax with a sequential denominator sum."""
    s = np.asarray(scores)
    if s.size == 0 or s.shape[axis] == 0:
        raise ValueError("softmax: empty input")
    if not np.all(np.isfinite(s)):
        raise ValueError("softmax: non-finite scores")
    s = np.moveaxis(s, axis, -1)
    e = np.exp(s - np.max(s, axis=-1, keepdims=True))
    out = e / seq_sum(e, axis=-1)[..., None]
    return np.moveaxis(out, -1, axis)


def softmax_vjp(g, weights, axis: int = -1) -> np.ndarray:
    """VJP of softmax given its output ``weights``."""
    g = np.asarray(g)
    w = np.asarray(weights)
    return w * (g - np.sum(w * g, axis=axis, keepdims=True))


# ---------------------------------------------------------------------------
# matmul


def matmul(a, b) -> np.ndarray:
    """Matrix product ``a @ b`` with a fixed summation order over the inner axis."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects two matrices")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dims differ ({a.shape} x {b.shape})")
    dtype = np.result_type(a, b)
    cols = np.ascontiguousarray(a.T, dtype=dtype)  # cols[k] = a[:, k]
    rows = np.ascontiguousarray(b, dtype=dtype)
    out = np.zeros((a.shape[0], b.shape[1]), dtype=dtype)
    tmp = np.empty_like(out)
    for k in range(a.shape[1]):
        np.multiply(cols[k][:, None], rows[k][None, :], out=tmp)
        out += tmp
    return out


def matmul_vjp(g, a, b) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(dA, dB)`` for ``C = A @ B`` given ``dC``."""
    g = np.asarray(g)
    return matmul(g, np.asarray(b).T), matmul(np.asarray(a).T, g)
