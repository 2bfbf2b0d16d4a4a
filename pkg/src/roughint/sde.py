"""Rough differential equations ``dy = sigma(y) dx`` driven by a level-3 lift.

The main solver marches the third-order germ over the finest cells,

    dy^i = sigma^{ij} dx^j
         + (d_m sigma^{ij} sigma^{mk}) x2^{kj}
         + (d_m sigma^{ij} d_p sigma^{mk1} sigma^{pk2}
            + d_mp sigma^{ij} sigma^{mk1} sigma^{pk2}) x3^{k2k1j},

all coefficients evaluated at the left end of the cell.  The second- and
third-order coefficients are the controlled structure of ``sigma(y)`` when
``y`` is controlled with ``zeta1 = sigma(y)`` and ``zeta2 = d sigma . sigma``.

A Picard iteration ``z <- int compose(sigma, z) dx`` on adaptive windows is
provided as an independent construction of the same solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .controlled import (
    DEFAULT_KAPPA_RATIO,
    ControlledPath,
    compose,
    germ_defect,
    integrate,
)
from .errors import DimensionMismatch, NoConvergence, NonFinite
from .increments import Path1, _entry_norm
from .lift import RoughLift3

PICARD_FLOOR_CELLS = 4
PICARD_GROWTH_STREAK = 3


@dataclass
class SolveReport:
    """Result of a solve.

    Attributes
    ----------
    y : Path1
        Solution on every grid point.
    germ_residual : float or None
        Surrogate norm of ``delta Xi`` for the solution's germ (NaN if skipped).
    steps : int
        Number of cells marched.
    method : str
        ``"step3"`` or ``"picard"``.
    picard_iters : int or None
        Total Picard iterations over all windows.
    uses_fd : bool
        True when the vector field relied on finite-difference derivatives.
    """

    y: Path1
    germ_residual: float
    steps: int
    method: str
    picard_iters: Optional[int] = None
    uses_fd: bool = False
    extra: dict = field(default_factory=dict)

    def as_text(self) -> str:
        """Flat ``key = value`` block."""
        lines = [
            f"method = {self.method}",
            f"steps = {self.steps}",
            f"germ_residual = {self.germ_residual:.17g}",
            f"picard_iters = {'' if self.picard_iters is None else self.picard_iters}",
            f"uses_fd = {str(self.uses_fd).lower()}",
            f"y_final = {' '.join(f'{v:.17g}' for v in self.y.values[-1])}",
        ]
        lines += [f"{k} = {v}" for k, v in self.extra.items()]
        return "\n".join(lines) + "\n"


def sde_coefficients(y, sigma):
    """``(m, mu1, mu2)`` of the germ at state ``y`` (shapes (l,d), (l,d,d), (l,d,d,d))."""
    s = sigma.eval(y)
    J = sigma.jac(y)
    Hs = sigma.hess(y)
    mu1 = np.einsum("ijm,mk->ijk", J, s)
    mu2 = np.einsum("ijm,map,pb->ijab", J, J, s) + np.einsum(
        "ijmp,ma,pb->ijab", Hs, s, s
    )
    return s, mu1, mu2


def step3(y, sigma, dx, x2, x3) -> np.ndarray:
    """State increment over one span with driver increment/area/volume ``dx, x2, x3``."""
    y = np.asarray(y, dtype=float)
    dx = np.asarray(dx, dtype=float)
    if y.shape != (sigma.l,) or dx.shape != (sigma.d,):
        raise DimensionMismatch(
            f"state {y.shape} / increment {dx.shape} do not match field ({sigma.l}, {sigma.d})"
        )
    s, mu1, mu2 = sde_coefficients(y, sigma)
    return s @ dx + np.einsum("ijk,kj->i", mu1, x2) + np.einsum("ijab,baj->i", mu2, x3)


def _diag_exponents(lift: RoughLift3, kappa=None):
    gamma = lift.gamma if lift.gamma is not None else 0.5
    kappa = DEFAULT_KAPPA_RATIO * gamma if kappa is None else kappa
    return gamma, kappa


def germ_residual(y: np.ndarray, sigma, lift: RoughLift3, kappa=None, seed: int = 0) -> float:
    """Surrogate norm of ``delta Xi`` (exponent ``3 kappa + gamma``) along a solution."""
    gamma, kappa = _diag_exponents(lift, kappa)
    coefs = [sde_coefficients(v, sigma) for v in y]
    m = np.array([c[0] for c in coefs])
    mu1 = np.array([c[1] for c in coefs])
    mu2 = np.array([c[2] for c in coefs])
    return germ_defect(m, mu1, mu2, lift, 3 * kappa + gamma, seed=seed)


def solve_sde(a, sigma, lift: RoughLift3, diagnostics: bool = True) -> SolveReport:
    """March ``step3`` over every finest cell starting from ``y_0 = a``.

    Raises
    ------
    NonFinite
        If the state overflows.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.shape != (sigma.l,) or lift.d != sigma.d:
        raise DimensionMismatch(
            f"initial value {a.shape} / driver dimension {lift.d} do not match field "
            f"({sigma.l}, {sigma.d})"
        )
    n = lift.n
    dx = lift.dx_cells
    A, V = lift.area_cells, lift.volume_cells
    y = np.empty((n + 1, sigma.l))
    y[0] = a
    with np.errstate(over="ignore", invalid="ignore"):
        for c in range(n):
            y[c + 1] = y[c] + step3(y[c], sigma, dx[c], A[c], V[c])
            if not np.all(np.isfinite(y[c + 1])):
                raise NonFinite(f"state left the floating range at cell {c} (t={lift.grid.times[c + 1]:.6g})")
    res = germ_residual(y, sigma, lift) if diagnostics else float("nan")
    return SolveReport(
        Path1(lift.grid, y), res, n, "step3", None, getattr(sigma, "uses_fd", False)
    )


def picard_solve(a, sigma, lift: RoughLift3, tol: float = 1e-12, max_iter: int = 200,
                 diagnostics: bool = True) -> SolveReport:
    """Fixed point of ``z -> a + int sigma(z) dx`` on successive windows.

    The first window spans the whole grid.  If the sup-distance between
    successive iterates grows ``PICARD_GROWTH_STREAK`` times in a row the
    window is halved (down to ``PICARD_FLOOR_CELLS`` cells).  Windows are
    patched one after the other, each starting from the previous endpoint.

    Raises
    ------
    NoConvergence
        If ``max_iter`` iterations pass on a window without reaching ``tol``,
        or divergence persists at the smallest window.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.shape != (sigma.l,) or lift.d != sigma.d:
        raise DimensionMismatch("initial value / driver do not match the vector field")
    n = lift.n
    y = np.empty((n + 1, sigma.l))
    y[0] = a
    start, width = 0, n
    total = 0
    while start < n:
        width = min(width, n - start)
        sub = lift.restrict(start, start + width)
        z = ControlledPath.constant(y[start], sub)
        streak, last, it = 0, np.inf, 0
        diverged = False
        while True:
            it += 1
            total += 1
            with np.errstate(over="ignore", invalid="ignore"):
                z_new = integrate(compose(sigma, z), sub, a=y[start])
            dist = float(np.max(_entry_norm(z_new.z.values - z.z.values, 1)))
            if not np.isfinite(dist):
                diverged = True
                break
            z = z_new
            if dist < tol:
                break
            streak = streak + 1 if dist > last else 0
            last = dist
            if streak >= PICARD_GROWTH_STREAK:
                diverged = True
                break
            if it >= max_iter:
                raise NoConvergence(max_iter, dist)
        if diverged:
            if width // 2 < PICARD_FLOOR_CELLS:
                raise NoConvergence(
                    it, last, f"Picard iteration diverges even on {width}-cell windows"
                )
            width //= 2
            continue
        y[start : start + width + 1] = z.z.values
        start += width
    res = germ_residual(y, sigma, lift) if diagnostics else float("nan")
    return SolveReport(
        Path1(lift.grid, y), res, n, "picard", total, getattr(sigma, "uses_fd", False),
        {"final_window_cells": width},
    )


def lift_distance(l1: RoughLift3, l2: RoughLift3, gamma: float) -> dict:
    """Hölder distances between two lifts on the same grid.

    Returns the ``gamma``-norm of the path difference, the ``2 gamma``-norm of
    the area difference and the ``3 gamma``-norm of the volume difference,
    plus their sum under ``"total"``.
    """
    if l1.grid != l2.grid:
        raise DimensionMismatch("lifts live on different grids")
    n, h = l1.n, l1.grid.h
    best = np.zeros(3)
    for s in range(n):
        a1, v1, p1 = l1._fold_from(s, n)
        a2, v2, p2 = l2._fold_from(s, n)
        dt = np.arange(1, n - s + 1) * h
        for k, (u, w) in enumerate(((p1, p2), (a1, a2), (v1, v2))):
            ratio = _entry_norm(u[1:] - w[1:], 1) / dt ** ((k + 1) * gamma)
            best[k] = max(best[k], float(ratio.max()))
    return {"x": best[0], "x2": best[1], "x3": best[2], "total": float(best.sum())}


def path_distance(y1: np.ndarray, y2: np.ndarray, h: float, kappa: float) -> float:
    """``sup |y1 - y2| + ||y1 - y2||_kappa`` on a uniform grid."""
    e = np.asarray(y1) - np.asarray(y2)
    if e.ndim == 1:
        e = e[:, None]
    n = e.shape[0] - 1
    sup = float(np.max(_entry_norm(e, 1)))
    hol = 0.0
    for lag in range(1, n + 1):
        hol = max(hol, float(np.max(_entry_norm(e[lag:] - e[:-lag], 1))) / (lag * h) ** kappa)
    return sup + hol


def continuity_probe(a, sigma, lift1: RoughLift3, lift2: RoughLift3,
                     gamma: Optional[float] = None, kappa: Optional[float] = None) -> dict:
    """Solve on two lifts and compare output and input distances.

    ``solution_distance`` is ``sup + kappa``-Hölder norm of ``y1 - y2``;
    ``input_distance`` is the sum of the path, area and volume distances in
    the ``gamma``, ``2 gamma`` and ``3 gamma`` norms.
    """
    if gamma is None:
        gamma = lift1.gamma if lift1.gamma is not None else 0.5
    kappa = DEFAULT_KAPPA_RATIO * gamma if kappa is None else kappa
    y1 = solve_sde(a, sigma, lift1, diagnostics=False).y.values
    y2 = solve_sde(a, sigma, lift2, diagnostics=False).y.values
    ld = lift_distance(lift1, lift2, gamma)
    sd = path_distance(y1, y2, lift1.grid.h, kappa)
    return {
        "solution_distance": sd,
        "input_distance": ld["total"],
        "ratio": sd / ld["total"] if ld["total"] > 0 else float("nan"),
        "x": ld["x"],
        "x2": ld["x2"],
        "x3": ld["x3"],
    }
