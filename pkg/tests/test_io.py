import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from troi import tensorfile
from troi.prng import SplitMix64, prng_next


def _splitmix_numpy(seed, n):
    """Independent uint64 re-derivation using numpy's wrapping arithmetic."""
    out = []
    state = np.uint64(seed)
    with np.errstate(over="ignore"):
        for _ in range(n):
            state = state + np.uint64(0x9E3779B97F4A7C15)
            z = state
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            out.append(int(z ^ (z >> np.uint64(31))))
    return out


class TestPrng:
    def test_seed_zero_reference(self):
        assert prng_next(0)[1] == 0xE220A8397B1DCDAF
        assert _splitmix_numpy(0, 1) == [0xE220A8397B1DCDAF]

    @pytest.mark.parametrize("seed", [0, 1, 7, 2**63 + 5, 2**64 - 1])
    def test_matches_numpy_derivation(self, seed):
        rng = SplitMix64(seed)
        assert [rng.next_u64() for _ in range(6)] == _splitmix_numpy(seed, 6)

    def test_deterministic(self):
        a, b = SplitMix64(99), SplitMix64(99)
        assert [a.next_u64() for _ in range(10)] == [b.next_u64() for _ in range(10)]

    def test_seeds_differ(self):
        streams = [tuple(_splitmix_numpy(s, 4)) for s in range(8)]
        for i in range(8):
            for j in range(i + 1, 8):
                assert all(x != y for x, y in zip(streams[i], streams[j]))

    def test_floats(self):
        rng = SplitMix64(3)
        u = [rng.random() for _ in range(2000)]
        assert 0.0 <= min(u) and max(u) < 1.0
        assert SplitMix64(3).random() == (_splitmix_numpy(3, 1)[0] >> 11) / 2.0**53
        f = SplitMix64(5).features((4, 4, 3))
        assert f.shape == (4, 4, 3) and f.min() >= -1.0 and f.max() < 1.0

    def test_bad_seed(self):
        with pytest.raises(ValueError):
            SplitMix64(-1)


class TestTensorFile:
    def test_layout(self):
        arr = np.arange(6, dtype=np.float64).reshape(2, 3)
        buf = tensorfile.encode(arr)
        assert buf[:4] == b"TROI"
        assert struct.unpack_from("<IBB", buf, 4) == (1, 2, 2)
        assert struct.unpack_from("<2Q", buf, 10) == (2, 3)
        assert buf[26:] == arr.astype("<f8").tobytes()

    def test_f32_code(self):
        assert tensorfile.encode(np.zeros(3, np.float32))[8] == 1

    @given(arrays(st.sampled_from([np.float32, np.float64]), array_shapes(min_dims=1, max_dims=4, max_side=5)))
    def test_round_trip(self, arr):
        back = tensorfile.decode(tensorfile.encode(arr))
        assert back.dtype == arr.dtype and back.shape == arr.shape
        assert back.tobytes() == arr.tobytes()

    def test_file_round_trip(self, tmp_path, rng):
        arr = rng.uniform(-1, 1, (3, 4, 5))
        tensorfile.save(tmp_path / "a.troi", arr)
        assert (tmp_path / "a.troi").read_bytes() == tensorfile.encode(arr)
        assert tensorfile.load(tmp_path / "a.troi").tobytes() == arr.tobytes()

    @pytest.mark.parametrize("mutate", [
        lambda b: b"XROI" + b[4:],
        lambda b: b[:4] + struct.pack("<I", 2) + b[8:],
        lambda b: b[:8] + b"\x07" + b[9:],
        lambda b: b[:-1],
        lambda b: b[:12],
    ])
    def test_corrupt(self, mutate):
        with pytest.raises(tensorfile.TensorFileError):
            tensorfile.decode(mutate(tensorfile.encode(np.ones((2, 2)))))

    def test_bad_dtype(self):
        with pytest.raises(tensorfile.TensorFileError):
            tensorfile.encode(np.ones(2, dtype=np.int32))

    def test_missing_file_has_path(self, tmp_path):
        with pytest.raises(OSError, match="nope.troi"):
            tensorfile.load(tmp_path / "nope.troi")
