import numpy as np
import pytest

from conftest import random_path, smooth_path
from roughint.errors import DimensionMismatch, NonFinite
from roughint.fbm import FbmSpec, sample_fbm_path
from roughint.fields import VectorField, make_field
from roughint.increments import Grid, Path1
from roughint.lift import lift_linear
from roughint.sde import (
    continuity_probe,
    lift_distance,
    path_distance,
    picard_solve,
    solve_sde,
    step3,
)


def _fbm_lift(n, H=0.4, d=2, seed=0, T=1.0):
    return lift_linear(sample_fbm_path(FbmSpec(H, d, Grid(0.0, T / n, n), seed)))


def test_step3_example():
    f = make_field("linear", 1, 1)
    dx = 0.1
    inc = step3(np.array([1.0]), f, np.array([dx]), np.array([[dx**2 / 2]]), np.array([[[dx**3 / 6]]]))
    assert inc[0] == pytest.approx(0.105166667, abs=1e-9)
    with pytest.raises(DimensionMismatch):
        step3(np.zeros(2), f, np.array([dx]), np.zeros((1, 1)), np.zeros((1, 1, 1)))


def test_exponential_equation_order_three():
    f = make_field("linear", 1, 1)
    errs = []
    for n in (16, 32, 64):
        L = lift_linear(smooth_path(lambda t: t, n))
        y = solve_sde([1.0], f, L).y.values[-1, 0]
        errs.append(abs(y - np.e))
    assert errs[-1] <= 1e-6
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 2.7), orders


def test_constant_field_is_exact():
    L = lift_linear(random_path(50, 2, seed=3))
    f = make_field("constant", 3, 2)
    a = np.array([1.0, 0.0, -1.0])
    y = solve_sde(a, f, L).y.values
    M = f.eval(a)
    assert np.allclose(y, a + (L.x.values - L.x.values[0]) @ M.T, atol=1e-13)


def test_report_fields():
    L = _fbm_lift(32)
    rep = solve_sde([0.3, -0.2], make_field("sine", 2, 2), L)
    assert rep.steps == 32 and rep.method == "step3"
    assert np.isfinite(rep.germ_residual) and rep.germ_residual >= 0
    txt = rep.as_text()
    assert "method = step3" in txt and "y_final = " in txt
    assert np.isnan(solve_sde([0.3, -0.2], make_field("sine", 2, 2), L, diagnostics=False).germ_residual)


def test_dimension_checks():
    L = _fbm_lift(8, d=2)
    with pytest.raises(DimensionMismatch):
        solve_sde([0.0], make_field("sine", 2, 2), L)
    with pytest.raises(DimensionMismatch):
        solve_sde([0.0, 0.0], make_field("sine", 2, 3), L)


def test_picard_iteration_counts():
    L = _fbm_lift(32)
    assert picard_solve([1.0, 2.0], make_field("zero", 2, 2), L).picard_iters == 1
    rep = picard_solve([1.0, 2.0], make_field("constant", 2, 2), L)
    assert rep.picard_iters == 2
    with pytest.raises(ValueError):
        picard_solve([1.0, 2.0], make_field("zero", 2, 2), L, tol=0.0)


@pytest.mark.parametrize("name", ["sine", "polynomial", "linear"])
def test_picard_agrees_with_march(name):
    L = _fbm_lift(128, seed=2)
    f = make_field(name, 2, 2)
    a = np.array([0.2, -0.1])
    ym = solve_sde(a, f, L, diagnostics=False).y.values
    yp = picard_solve(a, f, L, tol=1e-13, diagnostics=False).y.values
    assert np.abs(ym - yp).max() <= 1e-10


def test_flow_property():
    L = _fbm_lift(64, seed=6)
    f = make_field("sine", 2, 2)
    a = np.array([0.5, 0.1])
    full = solve_sde(a, f, L, diagnostics=False).y.values
    first = solve_sde(a, f, L.restrict(0, 24), diagnostics=False).y.values
    second = solve_sde(first[-1], f, L.restrict(24, 64), diagnostics=False).y.values
    assert np.allclose(np.vstack([first, second[1:]]), full, atol=1e-14)


def test_permutation_equivariance():
    x = sample_fbm_path(FbmSpec(0.4, 2, Grid(0.0, 1 / 64, 64), 7))
    f = make_field("sine", 2, 2)
    perm = [1, 0]
    g = VectorField(2, 2, lambda y: f.eval(y)[:, perm], lambda y: f.jac(y)[:, perm],
                    lambda y: f.hess(y)[:, perm])
    xp = Path1(x.grid, x.values[:, perm])
    a = np.array([0.3, 0.7])
    y1 = solve_sde(a, f, lift_linear(x), diagnostics=False).y.values
    y2 = solve_sde(a, g, lift_linear(xp), diagnostics=False).y.values
    assert np.allclose(y1, y2, atol=1e-13)


def test_blow_up_raises():
    f = make_field("polynomial", 1, 1, c0=0.0, c1=0.0, c2=1.0)
    L = lift_linear(smooth_path(lambda t: 50 * t, 16))
    with pytest.raises(NonFinite):
        solve_sde([1.0], f, L)


def test_distances():
    L = _fbm_lift(32, seed=1)
    assert lift_distance(L, L, 0.4)["total"] == 0.0
    t = np.linspace(0, 1, 33)
    assert path_distance(t, 0 * t, 1 / 32, 1.0) == pytest.approx(2.0)


def test_continuity_probe_identical_and_linear():
    n, gamma = 64, 0.4
    x = sample_fbm_path(FbmSpec(0.45, 2, Grid(0.0, 1 / n, n), 3))
    bump = np.stack([np.sin(np.pi * x.times), np.cos(x.times) - 1], 1)
    f = make_field("sine", 2, 2)
    a = np.array([0.1, 0.4])
    L = lift_linear(x, gamma)
    same = continuity_probe(a, f, L, L, gamma)
    assert same["solution_distance"] == 0.0 and same["input_distance"] == 0.0
    ratios, dists = [], []
    for eps in (1e-2, 1e-3, 1e-4):
        L2 = lift_linear(Path1(x.grid, x.values + eps * bump), gamma)
        p = continuity_probe(a, f, L, L2, gamma)
        ratios.append(p["ratio"])
        dists.append(p["solution_distance"])
    assert np.all(np.isfinite(ratios)) and max(ratios) < 10 * min(ratios)
    # the solution distance is asymptotically linear in the perturbation
    assert dists[1] / dists[2] == pytest.approx(10, rel=0.05)
