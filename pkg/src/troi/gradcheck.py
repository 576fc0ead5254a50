"""Central-finite-difference checks for every analytic VJP in the package."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import ms_roi_align as msra
from . import roi as ra
from . import tafa
from . import tensor

DEFAULT_FD_EPS = 1e-5
DEFAULT_TOL = 1e-5
DEFAULT_PROBES = 16
TENSOR_TOL = 1e-6
MAX_RESAMPLES = 100


def numeric_gradient(f: Callable[[np.ndarray], float], x, eps: float = DEFAULT_FD_EPS) -> np.ndarray:
    """Central differences ``(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)`` for every element."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f(x))
        flat[i] = orig - eps
        lo = float(f(x))
        flat[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise ValueError(f"non-finite function value at element {i}")
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


@dataclass
class DiffOp:
    """A differentiable operation over a tuple of array inputs.

    ``vjp(cotangent, *inputs)`` returns one gradient per input. ``valid``
    rejects inputs where the op is not locally smooth (used for resampling);
    ``tangent`` projects a raw perturbation direction onto the admissible set.
    """

    name: str
    forward: Callable[..., np.ndarray]
    vjp: Callable[..., Sequence[np.ndarray]]
    sampler: Callable[[np.random.Generator], tuple]
    valid: Optional[Callable[[tuple, float], bool]] = None
    tangent: Optional[Callable[[list, tuple], list]] = None


@dataclass
class GradReport:
    op: str
    max_abs_err: float
    max_rel_err: float
    num_elements: int
    passed: bool
    tol: float
    probes: int
    resamples: int = 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.op:<28} rel={self.max_rel_err:.2e} abs={self.max_abs_err:.2e} "
                f"n={self.num_elements} probes={self.probes} tol={self.tol:g}")


def rel_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def check_op(op: DiffOp, probes: int = DEFAULT_PROBES, tol: float = DEFAULT_TOL,
             eps: float = DEFAULT_FD_EPS, seed: int = 0) -> GradReport:
    """Compare ``op.vjp`` against finite differences on ``probes`` random probes.

    Each probe draws fresh inputs, a cotangent ``u`` and a unit direction
    ``v``; the analytic ``<vjp(u), v>`` is compared to the numeric derivative
    of ``s -> <u, f(x + s v)>`` at 0. Failures are reported, never raised.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = np.random.default_rng(seed)
    max_abs = max_rel = 0.0
    resamples = 0
    n_elem = 0
    for _ in range(probes):
        inputs = op.sampler(rng)
        tries = 0
        while op.valid is not None and not op.valid(inputs, eps):
            tries += 1
            if tries > MAX_RESAMPLES:
                raise RuntimeError(f"{op.name}: could not sample a smooth input")
            inputs = op.sampler(rng)
        resamples += tries
        inputs = tuple(np.asarray(x, dtype=np.float64) for x in inputs)
        n_elem = sum(x.size for x in inputs)

        out = np.asarray(op.forward(*inputs))
        u = rng.uniform(-1.0, 1.0, size=out.shape)
        direction = [rng.uniform(-1.0, 1.0, size=x.shape) for x in inputs]
        if op.tangent is not None:
            direction = op.tangent(direction, inputs)
        norm = np.sqrt(sum(float(np.sum(d * d)) for d in direction))
        direction = [d / norm for d in direction]

        grads = op.vjp(u, *inputs)
        analytic = sum(float(np.sum(np.asarray(g) * d)) for g, d in zip(grads, direction))

        def projected(s):
            moved = [x + s[0] * d for x, d in zip(inputs, direction)]
            return float(np.sum(u * np.asarray(op.forward(*moved))))

        numeric = float(numeric_gradient(projected, np.zeros(1), eps)[0])
        max_abs = max(max_abs, abs(analytic - numeric))
        max_rel = max(max_rel, rel_error(analytic, numeric))
    return GradReport(op.name, max_abs, max_rel, n_elem, bool(max_rel < tol), tol, probes, resamples)


def corrupted(op: DiffOp) -> DiffOp:
    """Negative control: same op with the sign of one VJP entry flipped."""

    def bad_vjp(g, *inputs):
        grads = [np.array(x, dtype=np.float64) for x in op.vjp(g, *inputs)]
        first = grads[0].reshape(-1)
        i = int(np.argmax(np.abs(first)))
        first[i] = -first[i]
        return grads

    return DiffOp(op.name + "[corrupted]", op.forward, bad_vjp, op.sampler, op.valid, op.tangent)

# ---------------------------------------------------------------------------
# the VJP suite


def _unif(rng, *shape):
    return rng.uniform(-1.0, 1.0, size=shape)


def _topk_gap_ok(roi, fmap, k, eps) -> bool:
    """True when every position's K-th and (K+1)-th similarity differ by > 10 eps."""
    channels = fmap.shape[-1]
    if k >= fmap.shape[0] * fmap.shape[1]:
        return True
    q = tensor.l2_normalize(roi.reshape(-1, channels))
    f = tensor.l2_normalize(fmap.reshape(-1, channels))
    sims = -np.sort(-(q @ f.T), axis=1)
    return bool(np.all(sims[:, k - 1] - sims[:, k] > 10 * eps))


def tensor_ops() -> list[DiffOp]:
    return [
        DiffOp("l2_normalize",
               lambda v: tensor.l2_normalize(v),
               lambda g, v: (tensor.l2_normalize_vjp(g, v),),
               lambda rng: (_unif(rng, 6, 8),)),
        DiffOp("softmax",
               lambda s: tensor.softmax(s),
               lambda g, s: (tensor.softmax_vjp(g, tensor.softmax(s)),),
               lambda rng: (_unif(rng, 8),)),
        DiffOp("matmul",
               tensor.matmul,
               lambda g, a, b: tensor.matmul_vjp(g, a, b),
               lambda rng: (_unif(rng, 5, 6), _unif(rng, 6, 7))),
    ]


def roi_ops() -> list[DiffOp]:
    def sample_point(rng):
        return (_unif(rng, 6, 7, 3),)

    # fixed non-integer sampling point so the map is the only input
    px, py = 2.3, 3.6
    box = ra.RoiBox(1.2, 0.7, 8.9, 7.4)
    shape = (10, 11, 3)
    return [
        DiffOp("bilinear_sample",
               lambda f: ra.bilinear_sample(f, px, py),
               lambda g, f: (ra.bilinear_sample_vjp(g, f.shape, px, py),),
               sample_point),
        DiffOp("roi_align",
               lambda f: ra.roi_align(f, box, 4, 5, 2),
               lambda g, f: (ra.roi_align_vjp(g, f.shape, box, 4, 5, 2),),
               lambda rng: (_unif(rng, *shape),)),
    ]


def ms_ops(k: int = 4) -> list[DiffOp]:
    positions = np.array([[0, 1], [2, 2], [3, 0], [1, 3]])

    def wg_forward(scores, fmap):
        return msra.weight_and_gather(msra.SimilarityResult(scores, positions), fmap)

    def wg_vjp(g, scores, fmap):
        return msra.weight_and_gather_vjp(g, msra.SimilarityResult(scores, positions), fmap)

    return [
        DiffOp("weight_and_gather", wg_forward, wg_vjp,
               lambda rng: (np.sort(_unif(rng, 4))[::-1].copy(), _unif(rng, 4, 4, 5))),
        DiffOp("most_similar_roi_align",
               lambda x, f: msra.most_similar_roi_align(x, f, k),
               lambda g, x, f: msra.most_similar_roi_align_vjp(g, x, f, k),
               lambda rng: (_unif(rng, 3, 3, 8), _unif(rng, 6, 7, 8)),
               valid=lambda inp, eps: _topk_gap_ok(inp[0], inp[1], k, eps)),
    ]


def tafa_ops(frames: int = 3, size: int = 5, channels: int = 8, blocks: int = 4) -> list[DiffOp]:
    cg = channels // blocks
    target = frames // 2

    def emb_sampler(rng):
        return _unif(rng, size, size, cg), _unif(rng, 3, 3, cg, cg), _unif(rng, cg)

    def tafa_sampler(rng):
        out = [_unif(rng, frames, size, size, channels)]
        for _ in range(blocks):
            out += [_unif(rng, 3, 3, cg, cg), _unif(rng, cg)]
        return tuple(out)

    def unpack(flat):
        stack = tafa.TemporalRoiStack(list(flat[0]), target)
        params = [tafa.ConvParams(flat[1 + 2 * n], flat[2 + 2 * n]) for n in range(blocks)]
        return stack, params

    def tafa_fwd(*flat):
        stack, params = unpack(flat)
        return tafa.tafa_forward(stack, params)

    def tafa_vjp(g, *flat):
        stack, params = unpack(flat)
        d_frames, d_params = tafa.tafa_forward_vjp(g, stack, params)
        out = [d_frames]
        for p in d_params:
            out += [p.weight, p.bias]
        return out

    def agg_sampler(rng):
        groups = _unif(rng, frames, size, size, cg)
        weights = tensor.softmax(_unif(rng, frames, size, size) * 2, axis=0)
        return groups, weights

    def simplex_tangent(direction, inputs):
        dg, dw = direction
        return [dg, dw - dw.mean(axis=0, keepdims=True)]

    return [
        DiffOp("embed",
               lambda x, w, b: tafa.embed(x, tafa.ConvParams(w, b)),
               lambda g, x, w, b: tafa.embed_vjp(g, x, tafa.ConvParams(w, b)),
               emb_sampler),
        DiffOp("temporal_attention_weights",
               lambda e: tafa.temporal_attention_weights(e, target),
               lambda g, e: (tafa.temporal_attention_weights_vjp(g, e, target),),
               lambda rng: (_unif(rng, frames, size, size, cg),)),
        DiffOp("aggregate",
               tafa.aggregate,
               lambda g, gr, w: tafa.aggregate_vjp(g, gr, w),
               agg_sampler, tangent=simplex_tangent),
        DiffOp("tafa_forward", tafa_fwd, tafa_vjp, tafa_sampler),
    ]


@dataclass
class SuiteEntry:
    op: DiffOp
    tol: float


@dataclass
class SuiteResult:
    reports: list[GradReport] = field(default_factory=list)
    control: Optional[GradReport] = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports) and self.control is not None and not self.control.passed


def vjp_suite() -> list[SuiteEntry]:
    entries = [SuiteEntry(op, TENSOR_TOL) for op in tensor_ops()]
    entries += [SuiteEntry(op, DEFAULT_TOL) for op in roi_ops() + ms_ops() + tafa_ops()]
    return entries


def run_suite(probes: int = DEFAULT_PROBES, seed: int = 0) -> SuiteResult:
    """Check every VJP plus the corrupted-VJP negative control."""
    result = SuiteResult()
    for i, entry in enumerate(vjp_suite()):
        result.reports.append(check_op(entry.op, probes, entry.tol, seed=seed + i))
    softmax_op = tensor_ops()[1]
    result.control = check_op(corrupted(softmax_op), probes, TENSOR_TOL, seed=seed)
    return result
