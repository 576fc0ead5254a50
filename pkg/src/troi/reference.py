"""Scalar loop-and-sort reference implementations.

Deliberately naive: explicit Python loops over every index, full sorts for
top-K, no array arithmetic. Reduction orders follow the same left-to-right
convention as the fast paths, so agreement is usually bitwise, and always
within 1e-12 at float64.

``exp`` is numpy's scalar ufunc (it can differ from ``math.exp`` by an ulp);
everything else is plain float arithmetic.
"""

from __future__ import annotations

import math

import numpy as np


def _exp(v: float) -> float:
    return float(np.exp(v))


def softmax(scores) -> list[float]:
    m = max(scores)
    e = [_exp(s - m) for s in scores]
    total = 0.0
    for v in e:
        total += v
    return [v / total for v in e]


def normalize(v, eps: float = 1e-12) -> list[float]:
    sq = 0.0
    for c in v:
        sq += c * c
    n = max(math.sqrt(sq), eps)
    return [c / n for c in v]


def dot(a, b) -> float:
    acc = 0.0
    for x, y in zip(a, b):
        acc += x * y
    return acc


def matmul(a, b):
    p, q, r = len(a), len(b), len(b[0])
    out = [[0.0] * r for _ in range(p)]
    for i in range(p):
        for j in range(r):
            acc = 0.0
            for k in range(q):
                acc += a[i][k] * b[k][j]
            out[i][j] = acc
    return out


def bilinear(fmap, x: float, y: float):
    height, width, channels = len(fmap), len(fmap[0]), len(fmap[0][0])
    x = min(max(x, 0.0), width - 1.0)
    y = min(max(y, 0.0), height - 1.0)
    x0, y0 = int(math.floor(x)), int(math.floor(y))
    x1, y1 = min(x0 + 1, width - 1), min(y0 + 1, height - 1)
    lx, ly = x - x0, y - y0
    hx, hy = 1.0 - lx, 1.0 - ly
    w00, w01, w10, w11 = hy * hx, hy * lx, ly * hx, ly * lx
    out = []
    for c in range(channels):
        v = w00 * fmap[y0][x0][c]
        v = v + w01 * fmap[y0][x1][c]
        v = v + w10 * fmap[y1][x0][c]
        v = v + w11 * fmap[y1][x1][c]
        out.append(v)
    return out


def roi_align(fmap, box, h: int, w: int, sampling_ratio: int):
    x1, y1, x2, y2 = box
    channels = len(fmap[0][0])
    bin_h = (y2 - y1) / h
    bin_w = (x2 - x1) / w
    r = sampling_ratio
    out = [[[0.0] * channels for _ in range(w)] for _ in range(h)]
    for ph in range(h):
        for pw in range(w):
            acc = [0.0] * channels
            for iy in range(r):
                y = y1 + ph * bin_h + (iy + 0.5) * bin_h / r
                for ix in range(r):
                    x = x1 + pw * bin_w + (ix + 0.5) * bin_w / r
                    s = bilinear(fmap, x, y)
                    for c in range(channels):
                        acc[c] = acc[c] + s[c]
            out[ph][pw] = [a / float(r * r) for a in acc]
    return out


def most_similar_roi_align(roi, fmap, k: int):
    h, w = len(roi), len(roi[0])
    height, width = len(fmap), len(fmap[0])
    channels = len(fmap[0][0])
    cells = [(y, x) for y in range(height) for x in range(width)]
    unit = [normalize(fmap[y][x]) for y, x in cells]
    out = []
    for i in range(h):
        row = []
        for j in range(w):
            q = normalize(roi[i][j])
            sims = [dot(u, q) for u in unit]
            ranked = sorted(range(len(cells)), key=lambda n: (-sims[n], n))[:k]
            weights = softmax([sims[n] for n in ranked])
            acc = [0.0] * channels
            for wt, n in zip(weights, ranked):
                y, x = cells[n]
                for c in range(channels):
                    acc[c] = acc[c] + wt * fmap[y][x][c]
            row.append(acc)
        out.append(row)
    return out


def conv3x3(x, weight, bias):
    h, w, cin = len(x), len(x[0]), len(x[0][0])
    cout = len(bias)
    out = [[[0.0] * cout for _ in range(w)] for _ in range(h)]
    for y in range(h):
        for xx in range(w):
            for co in range(cout):
                acc = 0.0
                for dy in range(3):
                    for dx in range(3):
                        sy, sx = y + dy - 1, xx + dx - 1
                        inside = 0 <= sy < h and 0 <= sx < w
                        for ci in range(cin):
                            v = x[sy][sx][ci] if inside else 0.0
                            acc += v * weight[dy][dx][ci][co]
                out[y][xx][co] = acc + bias[co]
    return out


def tafa(frames, target_index: int, params):
    """``params`` is a list of ``(weight, bias)`` nested lists, one per block."""
    h, w, channels = len(frames[0]), len(frames[0][0]), len(frames[0][0][0])
    blocks = len(params)
    cg = channels // blocks
    out = [[[0.0] * channels for _ in range(w)] for _ in range(h)]
    for n, (weight, bias) in enumerate(params):
        lo = n * cg
        groups = [[[px[lo:lo + cg] for px in row] for row in f] for f in frames]
        emb = [conv3x3(gr, weight, bias) for gr in groups]
        for y in range(h):
            for x in range(w):
                scores = [dot(e[y][x], emb[target_index][y][x]) for e in emb]
                weights = softmax(scores)
                for c in range(cg):
                    acc = 0.0
                    for wt, gr in zip(weights, groups):
                        acc = acc + wt * gr[y][x][c]
                    out[y][x][lo + c] = acc
    return out


def temporal_roi_align(frames, target: int, box, plan, params, k: int, h: int, w: int,
                       sampling_ratio: int):
    """Whole operator for one proposal; ``plan`` lists support frame indices."""
    roi = roi_align(frames[target], box, h, w, sampling_ratio)
    before = [i for i in plan if i < target]
    after = [i for i in plan if i >= target]
    stack = ([most_similar_roi_align(roi, frames[i], k) for i in before] + [roi]
             + [most_similar_roi_align(roi, frames[i], k) for i in after])
    return tafa(stack, len(before), params)
