import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from roughint.errors import DimensionMismatch, NotClosed
from roughint.increments import (
    Grid,
    Inc2,
    Inc3,
    Path1,
    delta1,
    delta2,
    holder_norm2,
    holder_norm3,
    lambda_grid,
    read_path_csv,
    sew,
    write_path_csv,
)


def test_grid_basics():
    g = Grid.uniform(0.0, 1.0, 4)
    assert g.h == 0.25
    assert np.allclose(g.times, [0, 0.25, 0.5, 0.75, 1.0])
    assert g.steps(0.5) == 2
    assert g.index_of(0.75) == 3
    with pytest.raises(ValueError):
        g.steps(0.3)
    with pytest.raises(ValueError):
        Grid(0.0, -1.0, 3)


def test_path_rejects_bad_shapes():
    g = Grid(0.0, 0.5, 2)
    with pytest.raises(DimensionMismatch):
        Path1(g, np.zeros(4))
    with pytest.raises(ValueError):
        Path1(g, [0.0, np.nan, 1.0])


def test_delta1_examples():
    g = Grid(0.0, 0.5, 2)
    d = delta1(Path1(g, [1.0, 4.0, 9.0]))
    assert d[0, 2, 0] == 8.0
    assert d[0, 1, 0] == 3.0
    const = delta1(Path1(g, [2.0, 2.0, 2.0]))
    assert np.all(const.values == 0)


def test_delta2_examples():
    g = Grid(0.0, 1.0, 2)
    t = g.times
    h = Inc2(g, (t[None, :] - t[:, None]) ** 2)
    assert delta2(h)[0, 1, 2] == pytest.approx(2.0)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (9, 2), elements=st.floats(-1e3, 1e3)))
def test_delta_delta_vanishes(vals):
    g = Grid(0.0, 0.125, 8)
    dd = delta2(delta1(Path1(g, vals))).values
    scale = max(1.0, np.abs(vals).max())
    assert np.abs(dd).max() <= 1e-13 * scale


def test_product_increment_by_quadrature():
    # delta of the iterated integral int (int dg) df equals (dg)_{su} (df)_{ut}
    n, m = 8, 64
    fine = Grid(0.0, 1.0 / (n * m), n * m)
    f = np.sin(3 * fine.times)
    gg = np.exp(fine.times)
    # I_{st} = int_s^t (g_w - g_s) df_w by midpoint sums on the fine grid
    coarse = np.arange(0, n * m + 1, m)
    mid_g = 0.5 * (gg[1:] + gg[:-1])
    df = np.diff(f)
    cum_gdf = np.concatenate([[0], np.cumsum(mid_g * df)])
    I = (cum_gdf[coarse][None, :] - cum_gdf[coarse][:, None]) - gg[coarse][:, None] * (
        f[coarse][None, :] - f[coarse][:, None]
    )
    cg = Grid(0.0, 1.0 / n, n)
    dI = delta2(Inc2(cg, I)).values
    gc, fc = gg[coarse], f[coarse]
    expect = (gc[None, :, None] - gc[:, None, None]) * (fc[None, None, :] - fc[None, :, None])
    mask = np.zeros_like(dI, dtype=bool)
    for s in range(n + 1):
        for u in range(s + 1, n + 1):
            mask[s, u, u + 1 :] = True
    assert np.abs(dI - expect)[mask].max() < 1e-12


def test_holder_norm2_examples():
    g = Grid(0.0, 0.1, 10)
    t = g.times
    lin = Inc2(g, t[None, :] - t[:, None])
    assert holder_norm2(lin, 1.0) == pytest.approx(1.0)
    assert holder_norm2(Inc2(g, np.zeros((11, 11))), 0.7) == 0.0
    sq = Inc2(g, np.sqrt(np.abs(t[None, :] - t[:, None])))
    assert holder_norm2(sq, 0.5) == pytest.approx(1.0)
    # a Path1 is measured through its increments
    assert holder_norm2(Path1(g, t), 1.0) == pytest.approx(1.0)


def test_holder_norm2_seminorm_axioms(rng):
    g = Grid(0.0, 1 / 16, 16)
    for _ in range(20):
        a = Inc2(g, rng.normal(size=(17, 17, 2)))
        b = Inc2(g, rng.normal(size=(17, 17, 2)))
        lam = rng.normal()
        assert holder_norm2(a * lam, 0.4) == pytest.approx(abs(lam) * holder_norm2(a, 0.4))
        assert holder_norm2(a + b, 0.4) <= holder_norm2(a, 0.4) + holder_norm2(b, 0.4) + 1e-12


def test_holder_norm3_examples():
    g = Grid(0.0, 0.125, 8)
    t = g.times
    prod = (t[None, :, None] - t[:, None, None]) * (t[None, None, :] - t[None, :, None])
    assert holder_norm3(Inc3(g, prod), 1.0, 1.0) == pytest.approx(1.0)
    assert holder_norm3(Inc3(g, np.zeros((9, 9, 9))), 0.6) == 0.0


def test_holder_norm3_stable_under_refinement():
    # h = delta of the first-order germ g_s (x_t - x_s) on a smooth path
    def norm(n):
        g = Grid(0.0, 1.0 / n, n)
        x = np.sin(2 * g.times)
        m = np.cos(g.times)
        germ = Inc2(g, m[:, None] * (x[None, :] - x[:, None]))
        return holder_norm3(delta2(germ), 1.5)

    # delta of the germ is of order 2 > mu, so the supremum is attained on long
    # spans and settles as the grid is refined
    a, b, c = norm(8), norm(16), norm(32)
    assert np.isfinite(a)
    assert abs(c - b) <= abs(b - a) + 1e-12
    assert abs(c - b) <= 1e-3 * b


def test_sew_examples(rng):
    g = Grid(0.0, 1 / 8, 8)
    ones = Inc2(g, np.ones((9, 9)))
    assert sew(ones)[0, 8] == 8.0
    x = Path1(g, rng.normal(size=(9, 2)))
    add = delta1(x)
    assert np.allclose(sew(add).values, add.values, atol=1e-14)
    r = Inc2(g, rng.normal(size=(9, 9)))
    s = sew(r)
    assert np.abs(delta2(s).values).max() < 1e-13
    assert np.allclose(sew(s).values, s.values, atol=1e-13)


def test_lambda_grid_zero_and_inverse(rng):
    g = Grid(0.0, 1 / 12, 12)
    assert np.all(lambda_grid(Inc3(g, np.zeros((13, 13, 13)))).values == 0)
    gg = Inc2(g, rng.normal(size=(13, 13, 3)))
    h = delta2(gg)
    out = lambda_grid(h)
    mask = np.triu(np.ones((13, 13), dtype=bool), 1)
    diff = (out - (gg - sew(gg))).values[mask]
    assert np.abs(diff).max() < 1e-12
    # and delta(Lambda h) = h
    tri = np.zeros((13,) * 3, dtype=bool)
    for s in range(13):
        for u in range(s + 1, 13):
            tri[s, u, u + 1 :] = True
    assert np.abs(delta2(out).values - h.values)[tri].max() < 1e-12


def test_lambda_grid_rejects_non_closed(rng):
    g = Grid(0.0, 0.1, 10)
    with pytest.raises(NotClosed):
        lambda_grid(Inc3(g, rng.normal(size=(11, 11, 11))))


def test_dense_limits():
    g = Grid(0.0, 1.0, 600)
    with pytest.raises(ValueError):
        delta1(Path1(g, np.zeros(601)))


def test_path_csv_roundtrip(tmp_path, rng):
    g = Grid(-0.5, 0.125, 12)
    x = Path1(g, rng.normal(size=(13, 2)))
    p = tmp_path / "x.csv"
    write_path_csv(p, x)
    assert p.read_text().splitlines()[0] == "t,x1,x2"
    y = read_path_csv(p)
    assert y.grid.n == 12
    assert np.array_equal(y.values, x.values)
    assert np.allclose(y.times, x.times)
