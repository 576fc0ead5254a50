"""Most-similar ROI Align: cross-frame feature extraction by cosine top-K.

For every spatial position of the target ROI features the support feature
map is scanned for its K most cosine-similar positions. The raw support
features at those positions are combined with softmax weights taken over the
K similarity scores.

Two forward paths are provided. ``most_similar_roi_align_loop`` composes the
per-position operations (``similarity_map``, ``top_k``, ``weight_and_gather``)
and serves as the readable reference. ``most_similar_roi_align`` computes all
similarities with a single matmul of the normalized query block against the
flattened support map. Both use identical reduction orders and agree bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import DEFAULT_EPS, l2_normalize, l2_normalize_vjp, matmul, seq_dot, seq_sum, softmax, softmax_vjp

DEFAULT_TOP_K = 4


@dataclass
class SimilarityResult:
    """Top-K scores (non-increasing) and their (row, col) positions on the support map."""

    scores: np.ndarray  # (K,)
    positions: np.ndarray  # (K, 2) int

    @property
    def k(self) -> int:
        return len(self.scores)


def _check_channels(query: np.ndarray, fmap: np.ndarray):
    if fmap.ndim != 3:
        raise ValueError(f"support map must be (H, W, C), got {fmap.shape}")
    if query.shape[-1] != fmap.shape[-1]:
        raise ValueError(f"channel mismatch: {query.shape[-1]} vs {fmap.shape[-1]}")


def _check_k(k: int, n: int):
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    if k > n:
        raise ValueError(f"K={k} exceeds the {n} candidate positions")


def similarity_map(query, fmap, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Cosine similarity of one channel vector against every position of ``fmap``."""
    query = np.asarray(query)
    fmap = np.asarray(fmap)
    _check_channels(query, fmap)
    return seq_dot(l2_normalize(fmap, eps), l2_normalize(query, eps))


def top_k(scores, k: int) -> SimilarityResult:
    """K largest entries of an (H, W) map; ties go to the smaller row-major index."""
    scores = np.asarray(scores)
    flat = scores.ravel()
    _check_k(k, flat.size)
    order = np.argsort(-flat, kind="stable")[:k]
    rows, cols = np.unravel_index(order, scores.shape)
    return SimilarityResult(flat[order].copy(), np.stack([rows, cols], axis=1))


def weight_and_gather(result: SimilarityResult, fmap) -> np.ndarray:
    """Softmax-weighted sum of the raw support features at the selected positions."""
    fmap = np.asarray(fmap)
    rows, cols = result.positions[:, 0], result.positions[:, 1]
    if (rows < 0).any() or (cols < 0).any() or (rows >= fmap.shape[0]).any() or (cols >= fmap.shape[1]).any():
        raise IndexError("selected position outside the support map")
    weights = softmax(result.scores)
    feats = fmap[rows, cols]  # (K, C)
    return seq_sum(weights[:, None] * feats, axis=0)


def weight_and_gather_vjp(g, result: SimilarityResult, fmap) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(d_scores, d_fmap)`` for ``weight_and_gather`` with fixed positions."""
    fmap = np.asarray(fmap)
    g = np.asarray(g)
    rows, cols = result.positions[:, 0], result.positions[:, 1]
    weights = softmax(result.scores)
    feats = fmap[rows, cols]
    d_scores = softmax_vjp(feats @ g, weights)
    d_fmap = np.zeros_like(fmap)
    np.add.at(d_fmap, (rows, cols), weights[:, None] * g[None, :])
    return d_scores, d_fmap


def most_similar_roi_align_loop(roi_feats, fmap, k: int = DEFAULT_TOP_K,
                                eps: float = DEFAULT_EPS) -> np.ndarray:
    """Position-by-position composition of the three operations above."""
    roi_feats = np.asarray(roi_feats)
    fmap = np.asarray(fmap)
    _check_channels(roi_feats, fmap)
    _check_k(k, fmap.shape[0] * fmap.shape[1])
    h, w, _ = roi_feats.shape
    out = np.empty_like(roi_feats)
    for i in range(h):
        for j in range(w):
            sel = top_k(similarity_map(roi_feats[i, j], fmap, eps), k)
            out[i, j] = weight_and_gather(sel, fmap)
    return out


@dataclass
class MsSelection:
    """Intermediate state of the batched forward pass, reused by the VJP."""

    query_hat: np.ndarray  # (P, C) normalized target positions
    support_hat: np.ndarray  # (HW, C) normalized support positions
    indices: np.ndarray  # (P, K) flat support indices, ranked
    scores: np.ndarray  # (P, K)
    weights: np.ndarray  # (P, K)


def select(roi_feats, fmap, k: int = DEFAULT_TOP_K, eps: float = DEFAULT_EPS) -> MsSelection:
    """Similarities, ranked top-K and softmax weights for every target position."""
    roi_feats = np.asarray(roi_feats)
    fmap = np.asarray(fmap)
    _check_channels(roi_feats, fmap)
    channels = fmap.shape[-1]
    _check_k(k, fmap.shape[0] * fmap.shape[1])
    q_hat = l2_normalize(roi_feats.reshape(-1, channels), eps)
    f_hat = l2_normalize(fmap.reshape(-1, channels), eps)
    sim = matmul(q_hat, f_hat.T)  # (P, HW)
    idx = np.argsort(-sim, axis=1, kind="stable")[:, :k]
    scores = np.take_along_axis(sim, idx, axis=1)
    return MsSelection(q_hat, f_hat, idx, scores, softmax(scores, axis=1))


def most_similar_roi_align(roi_feats, fmap, k: int = DEFAULT_TOP_K, eps: float = DEFAULT_EPS,
                           return_selection: bool = False):
    """Extract (h, w, C) most-similar ROI features of ``roi_feats`` from ``fmap``."""
    roi_feats = np.asarray(roi_feats)
    fmap = np.asarray(fmap)
    sel = select(roi_feats, fmap, k, eps)
    flat = fmap.reshape(-1, fmap.shape[-1])
    gathered = flat[sel.indices]  # (P, K, C)
    out = seq_sum(sel.weights[:, :, None] * gathered, axis=1).reshape(roi_feats.shape)
    if return_selection:
        return out, sel
    return out


def most_similar_roi_align_vjp(g, roi_feats, fmap, k: int = DEFAULT_TOP_K,
                               eps: float = DEFAULT_EPS) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(d_roi_feats, d_fmap)``; the selected indices are held constant."""
    roi_feats = np.asarray(roi_feats)
    fmap = np.asarray(fmap)
    sel = select(roi_feats, fmap, k, eps)
    channels = fmap.shape[-1]
    g = np.asarray(g).reshape(-1, channels)
    flat = fmap.reshape(-1, channels)
    gathered = flat[sel.indices]

    d_flat = np.zeros_like(flat)
    np.add.at(d_flat, sel.indices, sel.weights[:, :, None] * g[:, None, :])

    d_weights = np.einsum("pkc,pc->pk", gathered, g)
    d_scores = softmax_vjp(d_weights, sel.weights, axis=1)

    # sim[p, j] = <q_hat[p], f_hat[j]> only matters at the selected j
    d_q_hat = np.einsum("pk,pkc->pc", d_scores, sel.support_hat[sel.indices])
    d_f_hat = np.zeros_like(flat)
    np.add.at(d_f_hat, sel.indices, d_scores[:, :, None] * sel.query_hat[:, None, :])

    d_roi = l2_normalize_vjp(d_q_hat, roi_feats.reshape(-1, channels), eps)
    d_flat += l2_normalize_vjp(d_f_hat, flat, eps)
    return d_roi.reshape(roi_feats.shape), d_flat.reshape(fmap.shape)
