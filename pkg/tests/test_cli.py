import numpy as np
import pytest

from troi import tensorfile
from troi.cli import (
    BenchmarkMismatch,
    cmd_bench,
    cmd_gen,
    cmd_run,
    cmd_sample_plan,
    format_bench,
    load_video,
    main,
    read_boxes,
)
from troi.pipeline import RunConfig, make_params, reference_temporal_roi_align
from troi.ms_roi_align import most_similar_roi_align
from troi.roi import roi_align
from troi.tafa import TemporalRoiStack, tafa_forward


@pytest.fixture
def video(tmp_path):
    cmd_gen(RunConfig(seed=7), tmp_path / "v", frames=5, height=14, width=14, channels=16, proposals=3)
    return tmp_path / "v"


class TestGen:
    def test_files_and_determinism(self, tmp_path, video):
        frames = sorted(video.glob("frame_*.troi"))
        assert len(frames) == 5
        cmd_gen(RunConfig(seed=7), tmp_path / "again", frames=5, height=14, width=14, channels=16, proposals=3)
        for f in frames:
            assert f.read_bytes() == (tmp_path / "again" / f.name).read_bytes()
        assert (video / "boxes.txt").read_text() == (tmp_path / "again" / "boxes.txt").read_text()
        assert tensorfile.load(frames[0]).shape == (14, 14, 16)

    def test_seed_changes_output(self, tmp_path, video):
        cmd_gen(RunConfig(seed=8), tmp_path / "w", frames=1, height=14, width=14, channels=16)
        assert (tmp_path / "w" / "frame_0000.troi").read_bytes() != (video / "frame_0000.troi").read_bytes()

    def test_boxes_parse_back(self, video):
        boxes = read_boxes(video / "boxes.txt")
        assert len(boxes) == 3
        assert all(0 <= b.x1 <= b.x2 <= 13 and 0 <= b.y1 <= b.y2 <= 13 for b in boxes)

    def test_empty_video(self, tmp_path):
        with pytest.raises(ValueError, match="empty video"):
            cmd_gen(RunConfig(), tmp_path, frames=0, height=4, width=4, channels=4)

    def test_overflow(self, tmp_path):
        with pytest.raises(ValueError, match="2\\^48"):
            cmd_gen(RunConfig(), tmp_path, frames=1 << 20, height=1 << 10, width=1 << 10, channels=1 << 10)

    def test_f32(self, tmp_path):
        cmd_gen(RunConfig(dtype="f32"), tmp_path, frames=1, height=3, width=3, channels=2)
        assert tensorfile.load(tmp_path / "frame_0000.troi").dtype == np.float32


class TestRun:
    def test_zero_support_is_roi_align(self, video):
        summary = cmd_run(RunConfig(num_support=0, k=4), video, 2)
        frames, boxes = load_video(video)
        for p, b in enumerate(boxes):
            np.testing.assert_array_equal(summary.output[p], roi_align(frames[2], b))

    def test_single_frame_video(self, tmp_path):
        cmd_gen(RunConfig(seed=1), tmp_path, frames=1, height=9, width=9, channels=8, proposals=2)
        config = RunConfig(num_support=4, strategy="uniform", blocks=4)
        assert config.plan(1, 0).indices == (0, 0, 0, 0)
        summary = cmd_run(config, tmp_path, 0)
        frames, boxes = load_video(tmp_path)
        params = make_params(8, config)
        for p, b in enumerate(boxes):
            roi = roi_align(frames[0], b)
            copy = most_similar_roi_align(roi, frames[0], config.k)
            # ties go left of the supports, so the target sits in slot 0
            expected = tafa_forward(TemporalRoiStack([roi] + [copy] * 4, 0), params)
            np.testing.assert_array_equal(summary.output[p], expected)
            lo, hi = np.minimum(copy, roi), np.maximum(copy, roi)
            assert np.all(summary.output[p] >= lo - 1e-12) and np.all(summary.output[p] <= hi + 1e-12)

    def test_matches_oracle_pipeline_bitwise(self, video):
        config = RunConfig(seed=7, num_support=4, strategy="consecutive", k=3, blocks=4)
        summary = cmd_run(config, video, 1)
        frames, boxes = load_video(video)
        params = make_params(16, config)
        for p, b in enumerate(boxes):
            expected = reference_temporal_roi_align(frames, 1, b, params, config)
            np.testing.assert_array_equal(summary.output[p], expected)

    def test_writes_output_and_summary(self, video, tmp_path):
        out = tmp_path / "out.troi"
        summary = cmd_run(RunConfig(num_support=4), video, 3, out)
        back = tensorfile.load(out)
        assert back.shape == (3, 7, 7, 16) and back.tobytes() == summary.output.tobytes()
        assert summary.lines[0].startswith("plan uniform T=4")
        assert len(summary.lines) == 4 and "attn_entropy=" in summary.lines[1]

    def test_reproducible(self, video):
        a = cmd_run(RunConfig(num_support=6), video, 2).output
        b = cmd_run(RunConfig(num_support=6), video, 2).output
        assert a.tobytes() == b.tobytes()

    def test_bad_target(self, video):
        with pytest.raises(ValueError):
            cmd_run(RunConfig(), video, 5)

    def test_missing_dir(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            cmd_run(RunConfig(), tmp_path / "none", 0)

    def test_dim_mismatch(self, video):
        tensorfile.save(video / "frame_0009.troi", np.zeros((3, 3, 16)))
        with pytest.raises(ValueError, match="differ"):
            cmd_run(RunConfig(), video, 0)


class TestBench:
    def test_small(self):
        rows = cmd_bench(RunConfig(num_support=2), height=6, width=6, channels=8, reps=1)
        assert [r.name for r in rows] == ["most_similar_roi_align", "tafa_forward", "total"]
        assert all(r.speedup > 0 and r.max_diff <= 1e-12 for r in rows)
        assert "speedup" in format_bench(rows)

    def test_zero_reps(self):
        with pytest.raises(ValueError):
            cmd_bench(RunConfig(), reps=0)

    def test_mismatch_aborts(self, monkeypatch):
        import troi.cli as cli

        monkeypatch.setattr(cli, "most_similar_roi_align", lambda r, f, k: r * 0 + 1.0)
        with pytest.raises(BenchmarkMismatch, match="differ"):
            cmd_bench(RunConfig(num_support=2), height=5, width=5, channels=4, reps=1)


def test_sample_plan_examples():
    assert cmd_sample_plan(10, 5, 4, "consecutive") == [3, 4, 6, 7]
    assert cmd_sample_plan(10, 0, 4, "consecutive") == [0, 0, 1, 2]
    assert cmd_sample_plan(15, 7, 3, "uniform") == [0, 7, 14]


class TestMain:
    def test_sample_plan(self, capsys):
        assert main(["sample-plan", "--length", "10", "--target", "5", "--t-support", "4",
                     "--strategy", "consecutive"]) == 0
        assert capsys.readouterr().out.strip() == "3 4 6 7"

    def test_gen_and_run(self, tmp_path, capsys):
        assert main(["gen", "--seed", "3", "--frames", "3", "--height", "8", "--width", "8", "--channels", "8",
                     "--out", str(tmp_path / "v")]) == 0
        out = tmp_path / "o.troi"
        assert main(["run", str(tmp_path / "v"), "--target", "1", "--t-support", "2", "--k", "2",
                     "--n-blocks", "2", "--pool-size", "3", "--out", str(out)]) == 0
        assert tensorfile.load(out).shape == (4, 3, 3, 8)
        assert "proposal 3" in capsys.readouterr().out

    @pytest.mark.parametrize("argv", [
        ["gen", "--frames", "0"],
        ["sample-plan", "--length", "5", "--target", "9"],
        ["sample-plan", "--length", "5", "--target", "1", "--t-support", "3", "--strategy", "strided"],
        ["run", "/definitely/not/here"],
        ["bench", "--reps", "0"],
    ])
    def test_errors_are_one_line(self, argv, capsys):
        assert main(argv) != 0
        err = capsys.readouterr().err
        assert err.startswith("error:") and err.count("\n") == 1

    @pytest.mark.parametrize("argv", [["bogus"], ["gen", "--seed", "-1"], ["run"]])
    def test_usage_errors(self, argv, capsys):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code != 0
        err = capsys.readouterr().err
        assert err.startswith("error:") and err.count("\n") == 1

    def test_gradcheck_command(self, capsys):
        assert main(["gradcheck", "--probes", "2"]) == 0
        out = capsys.readouterr().out
        assert "PASS tafa_forward" in out and "expected FAIL" in out
