import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gpwarp.geometry import Grid, Volume
from gpwarp.metrics import mean_abs_diff, mhd, mismatch_fraction, rmse


def vol(values):
    return Volume(Grid([len(values), 1, 1]), values)


def brute_mhd(a, b):
    def directed(p, q):
        mins = []
        for x in p:
            best = math.inf
            for y in q:
                d = math.sqrt((x[0] - y[0]) * (x[0] - y[0]) + (x[1] - y[1]) * (x[1] - y[1])
                              + (x[2] - y[2]) * (x[2] - y[2]))
                best = min(best, d)
            mins.append(best)
        return math.fsum(mins) / len(mins)

    return max(directed(a, b), directed(b, a))


def test_rmse_examples():
    assert rmse(vol([1.0, 2.0]), vol([1.0, 2.0])) == 0.0
    assert rmse(vol([1.0, 5.0, -2.0]), vol([-1.5, 2.5, -4.5])) == pytest.approx(2.5)
    assert rmse(vol([0.0, 0.0]), vol([3.0, 4.0])) == pytest.approx(math.sqrt(12.5), abs=1e-15)


def test_mismatch_examples():
    a = vol(np.zeros(8))
    assert mismatch_fraction(a, a) == 0.0
    assert mismatch_fraction(a, vol(np.full(8, 255.0))) == 1.0
    b = np.zeros(8)
    b[[1, 6]] = 255.0
    assert mismatch_fraction(a, vol(b)) == 0.25
    assert mismatch_fraction(a, vol(np.full(8, 0.5))) == 0.0


def test_mad_examples():
    assert mean_abs_diff(vol([1.0, 2.0]), vol([1.0, 2.0])) == 0.0
    assert mean_abs_diff(vol([1.0, 2.0]), vol([4.0, 5.0])) == 3.0
    assert mean_abs_diff(vol([0.0, 10.0]), vol([4.0, 0.0])) == 7.0


def test_grid_mismatch():
    with pytest.raises(ValueError, match="grid mismatch"):
        rmse(vol([1.0, 2.0]), vol([1.0, 2.0, 3.0]))


@given(st.integers(0, 2**32 - 1), st.floats(0, 3))
def test_image_metric_symmetry_and_jensen(seed, tol):
    r = np.random.default_rng(seed)
    a, b = vol(r.normal(size=20)), vol(r.normal(size=20))
    assert rmse(a, b) == rmse(b, a)
    assert mean_abs_diff(a, b) == mean_abs_diff(b, a)
    assert mismatch_fraction(a, b, tol) == mismatch_fraction(b, a, tol)
    assert rmse(a, b) >= mean_abs_diff(a, b) >= 0


def test_mhd_examples():
    assert mhd([[0, 0, 0]], [[3, 4, 0]]) == 5.0
    a = np.array([[0, 0, 0], [1, 2, 3.0]])
    assert mhd(a, a[::-1]) == 0.0


def test_mhd_brute_force(rng):
    a = rng.normal(size=(20, 3))
    b = rng.normal(size=(20, 3)) + 0.5
    assert mhd(a, b) == brute_mhd(a, b)


@given(st.integers(0, 2**32 - 1), st.integers(1, 15), st.integers(1, 15))
def test_mhd_properties(seed, n, m):
    r = np.random.default_rng(seed)
    a, b = r.normal(size=(n, 3)) * 5, r.normal(size=(m, 3)) * 5
    assert mhd(a, b) == mhd(b, a)
    assert mhd(a, a) == 0.0
    assert mhd(a, b) >= 0


def test_mhd_empty():
    with pytest.raises(ValueError, match="empty point set"):
        mhd([], [[0, 0, 0]])
