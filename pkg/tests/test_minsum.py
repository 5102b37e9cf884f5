import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from ctg_tomography.minsum import get_kernel, minsum_batched, minsum_fast, minsum_naive


def test_naive_examples():
    assert minsum_naive(np.array([0.0]), np.array([0.0])).tolist() == [0.0]
    assert minsum_naive(np.array([0.0, 1.0]), np.array([0.0, 2.0])).tolist() == [0.0, 1.0, 3.0]

    a = np.array([3.0, 1.0, 4.0])
    padded = minsum_naive(a, np.array([0.0, np.inf, np.inf]))
    assert padded.tolist() == [3.0, 1.0, 4.0, np.inf, np.inf]


def test_naive_rejects_negative_infinity():
    with pytest.raises(ValueError):
        minsum_naive(np.array([0.0, -np.inf]), np.array([0.0]))


def random_costs(rng: np.random.Generator, size: int, infinite: float = 0.2) -> np.ndarray:
    values = rng.integers(-5, 6, size=size).astype(float)
    values[rng.random(size) < infinite] = np.inf
    return values


def test_fast_matches_naive_on_random_pairs():
    rng = np.random.default_rng(0)
    for trial in range(1000):
        a = rng.integers(-5, 6, size=int(rng.integers(1, 65))).astype(float)
        b = rng.normal(size=int(rng.integers(1, 65)))
        if trial % 10 == 0:
            a[:] = a[0]
            b[:] = b[0]
        b[rng.random(b.size) < 0.2] = np.inf
        assert np.array_equal(minsum_fast(a, b), minsum_naive(a, b))


def test_fast_handles_all_equal_inputs_and_small_budgets():
    a = np.zeros(40)
    b = np.zeros(30)

    assert np.array_equal(minsum_fast(a, b), minsum_naive(a, b))
    assert np.array_equal(minsum_fast(a, b, frontier_budget=5), minsum_naive(a, b))


def test_fast_single_entry_shifts_other_vector():
    b = np.array([2.0, -1.0, 5.0])

    assert minsum_fast(np.array([1.5]), b).tolist() == [3.5, 0.5, 6.5]


def test_batched_matches_naive_per_slice():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 1, 5))
    b = rng.normal(size=(1, 4, 7))
    a[0, 0, 2] = np.inf

    out = minsum_batched(a, b)

    assert out.shape == (3, 4, 11)
    for i in range(3):
        for j in range(4):
            assert np.allclose(out[i, j], minsum_naive(a[i, 0], b[0, j]))


def test_get_kernel_names():
    a, b = np.array([1.0, 0.0]), np.array([0.0, 4.0, 1.0])
    expected = minsum_naive(a, b)

    for name in ("naive", "fast", "batched"):
        assert np.array_equal(get_kernel(name)(a, b), expected)
    with pytest.raises(ValueError):
        get_kernel("fft")


def test_convolution_is_commutative_and_associative():
    rng = np.random.default_rng(7)
    for _ in range(200):
        a, b, c = (random_costs(rng, int(rng.integers(1, 20))) for _ in range(3))

        assert np.array_equal(minsum_fast(a, b), minsum_fast(b, a))
        assert np.array_equal(minsum_naive(minsum_naive(a, b), c), minsum_naive(a, minsum_naive(b, c)))
        assert np.array_equal(minsum_fast(minsum_fast(a, b), c), minsum_fast(a, minsum_fast(b, c)))


def test_constant_shift_passes_through():
    rng = np.random.default_rng(9)
    for _ in range(200):
        a = random_costs(rng, int(rng.integers(1, 30)))
        b = random_costs(rng, int(rng.integers(1, 30)))
        shift = float(rng.integers(-4, 5))

        assert np.array_equal(minsum_fast(a + shift, b), minsum_fast(a, b) + shift)
        assert np.array_equal(minsum_naive(a, b + shift), minsum_naive(a, b) + shift)
