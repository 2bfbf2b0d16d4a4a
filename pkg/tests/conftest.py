"""Shared fixtures and brute-force oracles for the test suite."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from roughint.increments import Grid, Path1


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_path(n, d, seed=0, t0=0.0, T=1.0, scale=None):
    """Rough-looking random walk on ``n`` cells of ``[t0, t0 + T]``."""
    g = Grid(t0, T / n, n)
    r = np.random.default_rng(seed)
    s = (T / n) ** 0.4 if scale is None else scale
    vals = np.vstack([np.zeros(d), np.cumsum(r.normal(scale=s, size=(n, d)), axis=0)])
    return Path1(g, vals)


def smooth_path(fn, n, d=1, t0=0.0, T=1.0):
    g = Grid(t0, T / n, n)
    return Path1(g, np.repeat(fn(g.times)[:, None], d, axis=1))


def refine_linear(x: Path1, m: int) -> np.ndarray:
    """Values of the piecewise-linear interpolant of ``x`` on the ``m``-times finer grid."""
    g = x.grid
    fine = Grid(g.t0, g.h / m, g.n * m)
    return np.stack(
        [np.interp(fine.times, g.times, x.values[:, k]) for k in range(x.values.shape[1])],
        axis=1,
    )


def brute_area(xf, k1, i, j):
    """Riemann-Stieltjes sum of ``int_s^t (x_{w-v} - x_{s-v}) (x) dx_w`` on a fine grid.

    ``xf`` are fine-grid values, ``k1`` the fine shift of ``v``, ``i, j`` fine
    indices.  Uses the midpoint value of the integrand on every fine cell, which
    is exact for piecewise-linear paths aligned with the fine grid.
    """
    a = xf[i - k1 : j - k1 + 1] - xf[i - k1]
    mid = 0.5 * (a[1:] + a[:-1])
    dx = np.diff(xf[i : j + 1], axis=0)
    return np.einsum("ck,cj->kj", mid, dx)


def brute_volume(xf, k1, k2, i, j):
    """Nested sum of ``int_s^t x2(v1, v2)_{s,w} (x) dx_w`` on a fine grid.

    The inner area uses exact per-cell values of aligned linear segments; the
    outer integral uses the cell-average of the inner area (Simpson on each
    cell, exact for the quadratic inner area on a cell).
    """
    d = xf.shape[1]
    a_path = xf[i - k1 - k2 : j - k1 - k2 + 1] - xf[i - k1 - k2]
    b_inc = np.diff(xf[i - k2 : j - k2 + 1], axis=0)
    c_inc = np.diff(xf[i : j + 1], axis=0)
    out = np.zeros((d, d, d))
    area = np.zeros((d, d))
    for c in range(j - i):
        # inner area over [s, w] for w running through the cell, as a quadratic in w
        a0 = a_path[c]
        da = a_path[c + 1] - a_path[c]
        db = b_inc[c]
        a_mid = area + np.outer(a0 + 0.25 * da, db) * 0.5
        a_end = area + np.outer(a0 + 0.5 * da, db)
        avg = (area + 4 * a_mid + a_end) / 6.0
        out += avg[:, :, None] * c_inc[c][None, None, :]
        area = a_end
    return out


def dde_reference(f, xdot, xi, r, T, rtol=1e-12, max_step=np.inf):
    """Method-of-steps solution of ``y'(t) = f(y(t), y(t - r)) xdot(t)`` (scalar).

    ``xi`` is a callable initial segment on ``[-r, 0]``.  Returns a callable.
    """
    pieces = []

    def past(t):
        if t <= 0:
            return xi(t)
        for lo, hi, sol in pieces:
            if t <= hi + 1e-15:
                return sol(t)[0]
        raise ValueError(t)

    t0, y0 = 0.0, float(xi(0.0))
    while t0 < T - 1e-14:
        t1 = min(t0 + r, T)
        sol = solve_ivp(
            lambda t, y: [f(y[0], past(t - r)) * xdot(t)],
            (t0, t1), [y0], method="DOP853", rtol=rtol, atol=1e-14, dense_output=True, max_step=max_step,
        )
        pieces.append((t0, t1, sol.sol))
        t0, y0 = t1, sol.y[0, -1]

    def y(t):
        return past(t)

    return y


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
