import numpy as np
import pytest
from hypothesis import given, strategies as st

from gpwarp.bspline import (
    BsplineField, basis_matrix, control_grid_for, cubic_weights, default_control_spacing,
    eval_bspline, eval_points, fit_bspline,
)
from gpwarp.geometry import Grid, SparseCorrespondence


def corr_at(points, disp):
    points = np.asarray(points, float)
    disp = np.asarray(disp, float)
    return SparseCorrespondence(points - disp, points, disp)


def lattice_points(cgrid, n, rng):
    """Random points inside the lattice region with full 4^d support."""
    lo = np.asarray(cgrid.origin) + np.asarray(cgrid.spacing) * 1.0
    hi = np.asarray(cgrid.origin) + np.asarray(cgrid.spacing) * (np.asarray(cgrid.dims) - 2)
    return rng.uniform(lo, hi - 1e-9, (n, cgrid.ndim))


@given(st.floats(0, 1, exclude_max=True))
def test_cubic_weights_sum_to_one(t):
    w = cubic_weights(t)
    assert abs(w.sum() - 1.0) <= 1e-12
    assert np.all(w >= 0)


def test_cubic_weights_at_knot():
    np.testing.assert_allclose(cubic_weights(0.0), [1 / 6, 4 / 6, 1 / 6, 0.0], atol=1e-15)


def test_partition_of_unity_random_points(rng):
    g = Grid([9, 7, 5], [1.0, 2.0, 0.5])
    cg = control_grid_for(g, default_control_spacing(g))
    pts = lattice_points(cg, 1000, rng)
    b = basis_matrix(cg, pts)
    assert np.max(np.abs(b.sum(axis=1) - 1.0)) <= 1e-12


def test_control_grid_margin():
    g = Grid([17, 9, 5], [1.0, 1.0, 1.0], [2, 3, 4])
    cg = control_grid_for(g, 2.0)
    np.testing.assert_allclose(cg.origin, [2 - 6, 3 - 6, 4 - 6])
    assert cg.dims == (8 + 7, 4 + 7, 2 + 7)
    # default spacing: extent / 8
    np.testing.assert_allclose(default_control_spacing(g), [2.0, 1.0, 0.5])


def test_zero_displacements_give_zero_coefficients(rng):
    g = Grid([10, 10, 10])
    pts = rng.uniform(0, 9, (15, 3))
    f = fit_bspline(corr_at(pts, np.zeros((15, 3))), g)
    assert np.all(f.coefficients == 0.0)


def test_constant_displacement_reproduced_without_regularization(rng):
    g = Grid([6, 6], [1.0, 1.0])
    cg = control_grid_for(g, 2.5)
    pts = lattice_points(cg, 6 * cg.size, rng)
    c0 = np.array([1.5, -0.25])
    f = fit_bspline(corr_at(pts, np.tile(c0, (len(pts), 1))), g, 2.5, lam=0.0)
    res = eval_bspline(f, g)
    assert np.max(np.abs(res.field - c0)) <= 1e-6
    assert res.uncertainty is None


@pytest.mark.parametrize("lam", [1e-6, 1e-2, 0.0])
def test_coefficients_match_dense_least_squares(lam, rng):
    g = Grid([5, 5], [1.0, 1.0])
    cg = control_grid_for(g, 4.0)
    n = 10 if lam > 0 else 3 * cg.size
    pts = lattice_points(cg, n, rng)
    disp = rng.normal(size=(n, 2))
    f = fit_bspline(corr_at(pts, disp), g, 4.0, lam=lam)
    # oracle: augmented least squares [B; sqrt(lam) I] c = [d; 0]
    b = np.zeros((n, cg.size))
    for i, p in enumerate(pts):
        u = (p - np.asarray(cg.origin)) / np.asarray(cg.spacing)
        base = np.floor(u).astype(int) - 1
        wx, wy = cubic_weights(u[0] - np.floor(u[0])), cubic_weights(u[1] - np.floor(u[1]))
        for ox in range(4):
            for oy in range(4):
                b[i, (base[0] + ox) + cg.dims[0] * (base[1] + oy)] += wx[ox] * wy[oy]
    aug = np.vstack([b, np.sqrt(lam) * np.eye(cg.size)])
    rhs = np.vstack([disp, np.zeros((cg.size, 2))])
    want = np.linalg.lstsq(aug, rhs, rcond=None)[0]
    np.testing.assert_allclose(f.coefficients, want, atol=1e-8)
    if lam == 0:
        resid = eval_points(f, pts) - disp
        np.testing.assert_allclose(resid, b @ want - disp, atol=1e-8)


def test_lambda_zero_underdetermined_errors(rng):
    g = Grid([10, 10, 10])
    with pytest.raises(np.linalg.LinAlgError, match="positive lambda"):
        fit_bspline(corr_at(rng.uniform(0, 9, (5, 3)), rng.normal(size=(5, 3))), g, lam=0.0)


def test_eval_zero_constant_and_unit():
    g = Grid([7, 7, 7])
    cg = control_grid_for(g, 2.0)
    zero = BsplineField(cg, np.zeros((cg.size, 3)))
    assert np.all(eval_bspline(zero, g).field == 0)
    c0 = np.array([0.3, -2.0, 7.0])
    const = BsplineField(cg, np.tile(c0, (cg.size, 1)))
    assert np.max(np.abs(eval_bspline(const, g).field - c0)) <= 1e-9
    coef = np.zeros((cg.size, 3))
    j = (5, 4, 6)
    coef[cg.linear_index(j)] = [1.0, 0, 0]
    pos = np.asarray(cg.origin) + np.asarray(j) * np.asarray(cg.spacing)
    val = eval_points(BsplineField(cg, coef), [pos])[0]
    np.testing.assert_allclose(val, [(2 / 3) ** 3, 0, 0], atol=1e-15)


def test_eval_linear_in_coefficients(rng):
    g = Grid([6, 5, 4])
    cg = control_grid_for(g, 1.5)
    c1, c2 = rng.normal(size=(2, cg.size, 3))
    a, b = 0.7, -2.5
    lhs = eval_bspline(BsplineField(cg, a * c1 + b * c2), g).field
    rhs = a * eval_bspline(BsplineField(cg, c1), g).field + b * eval_bspline(BsplineField(cg, c2), g).field
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


def test_eval_outside_support():
    g = Grid([5, 5, 5])
    cg = control_grid_for(g, 1.0)
    f = BsplineField(cg, np.zeros((cg.size, 3)))
    with pytest.raises(ValueError, match="exceeds lattice support"):
        eval_bspline(f, Grid([5, 5, 5], origin=[-10, 0, 0]))
