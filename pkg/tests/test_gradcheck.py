import numpy as np
import pytest

from troi.gradcheck import (
    DiffOp,
    check_op,
    corrupted,
    ms_ops,
    numeric_gradient,
    rel_error,
    tafa_ops,
    tensor_ops,
    vjp_suite,
)


class TestNumericGradient:
    def test_sum(self, rng):
        x = rng.uniform(-1, 1, (3, 4))
        np.testing.assert_allclose(numeric_gradient(np.sum, x), np.ones((3, 4)), atol=1e-9)

    def test_square(self):
        g = numeric_gradient(lambda x: float(x[0] ** 2), np.array([3.0]))
        assert abs(g[0] - 6.0) < 1e-9

    def test_constant(self, rng):
        assert np.all(numeric_gradient(lambda x: 2.5, rng.uniform(size=5)) == 0.0)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            numeric_gradient(lambda x: float("nan"), np.zeros(2))

    def test_input_untouched(self, rng):
        x = rng.uniform(size=4)
        before = x.copy()
        numeric_gradient(lambda v: float(np.sum(v ** 3)), x)
        np.testing.assert_array_equal(x, before)


def test_rel_error_floor():
    assert rel_error(0.0, 0.0) == 0.0
    assert rel_error(1e-10, 0.0) == pytest.approx(1e-2)
    assert rel_error(2.0, 1.0) == 0.5


def test_softmax_passes_at_tensor_tol():
    softmax_op = tensor_ops()[1]
    report = check_op(softmax_op, probes=32, tol=1e-6)
    assert report.passed, report.line()


def test_tafa_forward_passes():
    op = next(o for o in tafa_ops(frames=3, size=5, channels=8, blocks=4) if o.name == "tafa_forward")
    report = check_op(op, probes=16, tol=1e-5)
    assert report.passed, report.line()
    assert report.num_elements == 3 * 5 * 5 * 8 + 4 * (9 * 2 * 2 + 2)


@pytest.mark.parametrize("entry", vjp_suite(), ids=lambda e: e.op.name)
def test_suite_entry(entry):
    report = check_op(entry.op, probes=16, tol=entry.tol, seed=11)
    assert report.passed, report.line()


@pytest.mark.parametrize("entry", vjp_suite(), ids=lambda e: e.op.name)
def test_corrupted_fails(entry):
    report = check_op(corrupted(entry.op), probes=16, tol=entry.tol, seed=3)
    assert not report.passed, report.line()


def test_failures_are_reported_not_raised():
    op = DiffOp("wrong", lambda x: x ** 2, lambda g, x: (g * x,), lambda rng: (rng.uniform(1, 2, 3),))
    report = check_op(op, probes=4)
    assert not report.passed and report.max_rel_err > 0.1


def test_selection_boundary_resampling():
    op = next(o for o in ms_ops() if o.name == "most_similar_roi_align")
    calls = []

    def picky(inputs, eps):
        calls.append(1)
        return len(calls) % 3 == 0 and op.valid(inputs, eps)

    report = check_op(DiffOp(op.name, op.forward, op.vjp, op.sampler, picky), probes=2)
    assert report.resamples >= 4 and report.passed


def test_tied_scores_rejected():
    op = next(o for o in ms_ops(k=1) if o.name == "most_similar_roi_align")
    x = np.ones((1, 1, 8))
    f = np.ones((6, 7, 8))
    assert not op.valid((x, f), 1e-5)


def test_bad_args():
    op = tensor_ops()[0]
    with pytest.raises(ValueError):
        check_op(op, probes=0)
    with pytest.raises(ValueError):
        check_op(op, tol=0)
