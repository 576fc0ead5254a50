"""Command-line harness: gen | run | bench | gradcheck | sample-plan."""

from __future__ import annotations

import argparse
import statistics
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensorfile
from .gradcheck import DEFAULT_PROBES, run_suite
from .ms_roi_align import most_similar_roi_align, most_similar_roi_align_loop
from .pipeline import RunConfig, make_params, run_proposals, target_position
from .prng import SplitMix64
from .roi import RoiBox, roi_align
from .sampling import Strategy, sample_support_frames
from .tafa import TemporalRoiStack, tafa_forward, tafa_forward_loop

MAX_ELEMENTS = 1 << 48
BOXES_FILE = "boxes.txt"
FRAME_GLOB = "frame_*.troi"


class BenchmarkMismatch(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# gen


def synthetic_boxes(rng: SplitMix64, count: int, height: int, width: int) -> list[RoiBox]:
    boxes = []
    for _ in range(count):
        x1 = rng.random() * (width - 1) * 0.75
        y1 = rng.random() * (height - 1) * 0.75
        x2 = x1 + rng.random() * (width - 1 - x1)
        y2 = y1 + rng.random() * (height - 1 - y1)
        boxes.append(RoiBox(x1, y1, x2, y2))
    return boxes


def write_boxes(path: Path, boxes) -> None:
    path.write_text("".join(f"{b.x1!r} {b.y1!r} {b.x2!r} {b.y2!r}\n" for b in boxes))


def read_boxes(path: Path) -> list[RoiBox]:
    boxes = []
    for n, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{path}:{n}: expected 'x1 y1 x2 y2'")
        boxes.append(RoiBox(*(float(p) for p in parts)))
    return boxes


def cmd_gen(config: RunConfig, out_dir, frames: int, height: int, width: int, channels: int,
            proposals: int = 1) -> list[Path]:
    """Write ``frames`` synthetic (H, W, C) feature maps and a boxes file."""
    if frames < 1:
        raise ValueError("empty video")
    if min(height, width, channels) < 1 or proposals < 0:
        raise ValueError("dimensions must be positive")
    if frames * height * width * channels > MAX_ELEMENTS:
        raise ValueError(f"video of {frames}x{height}x{width}x{channels} exceeds 2^48 elements")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"{out_dir}: {exc.strerror or exc}") from exc
    rng = SplitMix64(config.seed)
    written = []
    for i in range(frames):
        path = out_dir / f"frame_{i:04d}.troi"
        tensorfile.save(path, rng.features((height, width, channels), config.np_dtype))
        written.append(path)
    boxes_path = out_dir / BOXES_FILE
    try:
        write_boxes(boxes_path, synthetic_boxes(rng, proposals, height, width))
    except OSError as exc:
        raise OSError(f"{boxes_path}: {exc.strerror or exc}") from exc
    written.append(boxes_path)
    return written


# ---------------------------------------------------------------------------
# run


def load_video(video_dir, dtype=np.float64):
    video_dir = Path(video_dir)
    if not video_dir.is_dir():
        raise FileNotFoundError(f"{video_dir}: not a directory")
    paths = sorted(video_dir.glob(FRAME_GLOB))
    if not paths:
        raise ValueError(f"{video_dir}: no {FRAME_GLOB} files")
    frames = [tensorfile.load(p).astype(dtype) for p in paths]
    shape = frames[0].shape
    if len(shape) != 3:
        raise ValueError(f"{paths[0]}: expected an (H, W, C) tensor, got {shape}")
    for p, f in zip(paths, frames):
        if f.shape != shape:
            raise ValueError(f"{p}: dims {f.shape} differ from {shape}")
    boxes_path = video_dir / BOXES_FILE
    if not boxes_path.exists():
        raise FileNotFoundError(f"{boxes_path}: missing")
    return frames, read_boxes(boxes_path)


@dataclass
class RunSummary:
    output: np.ndarray  # (P, h, w, C)
    lines: list[str]


def cmd_run(config: RunConfig, video_dir, target: int, out_path=None) -> RunSummary:
    frames, boxes = load_video(video_dir, config.np_dtype)
    if not 0 <= target < len(frames):
        raise ValueError(f"target {target} outside video of {len(frames)} frames")
    if not boxes:
        raise ValueError("no proposals in boxes file")
    params = make_params(frames[0].shape[-1], config)
    results = run_proposals(frames, target, boxes, params, config)
    output = np.stack([r.features for r in results])
    if out_path is not None:
        tensorfile.save(out_path, output)
    plan = config.plan(len(frames), target)
    lines = [f"plan {plan.strategy.value} T={plan.num_support}: {' '.join(map(str, plan.indices))}"]
    for p, r in enumerate(results):
        f = r.features
        lines.append(f"proposal {p}: min={f.min():.6g} max={f.max():.6g} mean={f.mean():.6g} "
                     f"attn_entropy={r.attention_entropy():.6g}")
    return RunSummary(output, lines)


# ---------------------------------------------------------------------------
# bench


@dataclass
class BenchRow:
    name: str
    naive_s: float
    fast_s: float
    proposals: int
    max_diff: float

    @property
    def speedup(self) -> float:
        return self.naive_s / self.fast_s if self.fast_s > 0 else float("inf")

    def ns_per_proposal(self, which: str) -> float:
        return (self.naive_s if which == "naive" else self.fast_s) * 1e9 / self.proposals


def _median_time(fn, reps: int):
    times, out = [], None
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def cmd_bench(config: RunConfig, height: int = 14, width: int = 14, channels: int = 256,
              reps: int = 5, proposals: int = 1) -> list[BenchRow]:
    """Time per-position/per-frame loops against the batched paths.

    Outputs must agree (1e-12 at f64) before any timing is reported.
    """
    if reps < 1:
        raise ValueError("repetitions must be >= 1")
    if proposals < 1:
        raise ValueError("proposals must be >= 1")
    rng = SplitMix64(config.seed)
    length = config.num_support + 1
    target = length // 2
    dtype = config.np_dtype
    frames = [rng.features((height, width, channels), dtype) for _ in range(length)]
    boxes = synthetic_boxes(rng, proposals, height, width)
    params = make_params(channels, config)
    plan = config.plan(length, target)
    slot = target_position(plan)
    rois = [roi_align(frames[target], b, config.pool, config.pool, config.sampling_ratio) for b in boxes]
    tol = 1e-12 if dtype == np.float64 else 1e-5

    def ms(fn):
        return lambda: [[fn(r, frames[i], config.k) for i in plan.indices] for r in rois]

    ms_naive_t, ms_naive = _median_time(ms(most_similar_roi_align_loop), reps)
    ms_fast_t, ms_fast = _median_time(ms(most_similar_roi_align), reps)
    ms_diff = max((float(np.max(np.abs(a - b))) for ra_, rb in zip(ms_naive, ms_fast)
                   for a, b in zip(ra_, rb)), default=0.0)
    if ms_diff > tol:
        raise BenchmarkMismatch(f"most_similar_roi_align paths differ: max |diff| = {ms_diff:.3e}")

    stacks = [TemporalRoiStack(sup[:slot] + [r] + sup[slot:], slot) for r, sup in zip(rois, ms_fast)]
    tafa_naive_t, tafa_naive = _median_time(lambda: [tafa_forward_loop(s, params) for s in stacks], reps)
    tafa_fast_t, tafa_fast = _median_time(lambda: [tafa_forward(s, params) for s in stacks], reps)
    tafa_diff = max(float(np.max(np.abs(a - b))) for a, b in zip(tafa_naive, tafa_fast))
    if tafa_diff > tol:
        raise BenchmarkMismatch(f"tafa_forward paths differ: max |diff| = {tafa_diff:.3e}")

    return [
        BenchRow("most_similar_roi_align", ms_naive_t, ms_fast_t, proposals, ms_diff),
        BenchRow("tafa_forward", tafa_naive_t, tafa_fast_t, proposals, tafa_diff),
        BenchRow("total", ms_naive_t + tafa_naive_t, ms_fast_t + tafa_fast_t, proposals,
                 max(ms_diff, tafa_diff)),
    ]


def format_bench(rows: list[BenchRow]) -> str:
    head = f"{'op':<24}{'naive ns/prop':>16}{'fast ns/prop':>16}{'speedup':>10}{'max|diff|':>12}"
    body = [f"{r.name:<24}{r.ns_per_proposal('naive'):>16.0f}{r.ns_per_proposal('fast'):>16.0f}"
            f"{r.speedup:>10.2f}{r.max_diff:>12.1e}" for r in rows]
    return "\n".join([head] + body)


# ---------------------------------------------------------------------------
# sample-plan


def cmd_sample_plan(length: int, target: int, num_support: int, strategy, stride: int = 1) -> list[int]:
    return list(sample_support_frames(length, target, num_support, strategy, stride).indices)


# ---------------------------------------------------------------------------
# argument parsing


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError(f"{text} is not a u64")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=_u64, default=0)
    common.add_argument("--k", type=int, default=RunConfig.k, help="top-K similar positions")
    common.add_argument("--n-blocks", type=int, default=RunConfig.blocks, help="temporal attention blocks")
    common.add_argument("--pool-size", type=int, default=RunConfig.pool, help="ROI grid h = w")
    common.add_argument("--t-support", type=int, default=RunConfig.num_support, help="support frames T")
    common.add_argument("--strategy", choices=[s.value for s in Strategy], default=RunConfig.strategy.value)
    common.add_argument("--stride", type=int, default=1)
    common.add_argument("--sampling-ratio", type=int, default=RunConfig.sampling_ratio)
    common.add_argument("--dtype", choices=["f32", "f64"], default="f64")
    common.add_argument("--out", type=Path, default=None)

    parser = _Parser(prog="troi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="write seeded synthetic feature maps")
    gen.add_argument("--frames", type=int, default=5)
    gen.add_argument("--height", type=int, default=14)
    gen.add_argument("--width", type=int, default=14)
    gen.add_argument("--channels", type=int, default=16)
    gen.add_argument("--proposals", type=int, default=4)

    run = sub.add_parser("run", parents=[common], help="run the operator on a generated video")
    run.add_argument("video_dir", type=Path)
    run.add_argument("--target", type=int, default=0)

    bench = sub.add_parser("bench", parents=[common], help="time loop vs batched paths")
    bench.add_argument("--height", type=int, default=14)
    bench.add_argument("--width", type=int, default=14)
    bench.add_argument("--channels", type=int, default=256)
    bench.add_argument("--reps", type=int, default=5)
    bench.add_argument("--proposals", type=int, default=1)

    gc = sub.add_parser("gradcheck", parents=[common], help="verify every VJP by finite differences")
    gc.add_argument("--probes", type=int, default=DEFAULT_PROBES)

    sp = sub.add_parser("sample-plan", parents=[common], help="print support frame indices")
    sp.add_argument("--length", type=int, required=True)
    sp.add_argument("--target", type=int, required=True)
    return parser


def config_from_args(args) -> RunConfig:
    return RunConfig(k=args.k, blocks=args.n_blocks, pool=args.pool_size, num_support=args.t_support,
                     strategy=args.strategy, stride=args.stride, sampling_ratio=args.sampling_ratio,
                     seed=args.seed, dtype=args.dtype)


def _dispatch(args) -> int:
    config = config_from_args(args)
    if args.command == "gen":
        out = args.out if args.out is not None else Path("video")
        paths = cmd_gen(config, out, args.frames, args.height, args.width, args.channels, args.proposals)
        print(f"wrote {len(paths) - 1} frames and {BOXES_FILE} to {out}")
    elif args.command == "run":
        summary = cmd_run(config, args.video_dir, args.target, args.out)
        print("\n".join(summary.lines))
        if args.out is not None:
            print(f"wrote {args.out} {tuple(summary.output.shape)}")
    elif args.command == "bench":
        rows = cmd_bench(config, args.height, args.width, args.channels, args.reps, args.proposals)
        print(format_bench(rows))
    elif args.command == "gradcheck":
        result = run_suite(args.probes, seed=args.seed)
        for r in result.reports:
            print(r.line())
        print(f"control {result.control.line()} (expected FAIL)")
        if not result.passed:
            print("error: gradient check failed", file=sys.stderr)
            return 1
    elif args.command == "sample-plan":
        print(" ".join(map(str, cmd_sample_plan(args.length, args.target, args.t_support,
                                                args.strategy, args.stride))))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (ValueError, OSError, RuntimeError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
