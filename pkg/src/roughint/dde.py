"""Delay equations ``dy_t = sigma(y_t, y_{t-r_1}, ..., y_{t-r_q}) dx_t``.

The solver marches a four-family germ over the finest cells of ``[0, T]``.
With ``W_s = (y_s, y_{s-r_1}, ..., y_{s-r_q})`` and the solution history

    Z1(s)      = sigma(W_s)                                  (n, d)
    Z2(s)[j']  = d^{j'} sigma(W_s) . Z1(s - r_j')            (n, d, d)

(both zero for ``s < 0``, where ``y`` is the deterministic initial segment),
the increment over the cell ``[s, t]`` is

    m dx + sum_{i'}         F1[i']      . x2(r_i')^T
         + sum_{i',j' >= 1} F2[i', j']  . x3(r_j', r_i')^T
         + sum_{i'',j''}    F3[i'', j''] . x3(r_j'' - r_i'', r_i'')^T

with ``m = Z1(s)`` and, for the state index ``a`` and driver indices ``j, k, l``,

    F1[i'][a,j,k]     = d^{i'}_b sigma^{aj} Z1(s - r_i')[b,k]
    F2[i',j'][a,j,k,l] = d^{i'}_b sigma^{aj} Z2(s - r_i')[j'][b,k,l]
    F3[i'',j''][a,j,k,l] = d^{i''j''}_{bc} sigma^{aj} Z1(s - r_i'')[b,k] Z1(s - r_j'')[c,l]
                        + [i'' = j''] d^{i''}_b sigma^{aj} Z2(s - r_i'')[0][b,k,l]
                        + [i'' = 0, j'' != 0] d^0_b sigma^{aj} Z2(s)[j''][b,k,l]

Contractions are transposed as in the plain case: ``F1[a,j,k] x2[k,j]`` and
``F[a,j,k,l] x3[l,k,j]``.  Delayed areas and volumes come from a
:class:`~roughint.lift.DelayedLift` on the extended grid ``[-r_q, T]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .controlled import DEFAULT_KAPPA_RATIO
from .errors import DelayNotOnGrid, DimensionMismatch, HistoryGap, NonFinite, OutOfRange
from .increments import Grid, Path1, holder_norm2
from .lift import DelayedLift, required_families
from .sde import SolveReport, path_distance


@dataclass(frozen=True)
class DelaySpec:
    """Delays ``0 < r_1 < ... < r_q``; ``r_0 = 0`` is implicit."""

    delays: tuple

    def __post_init__(self):
        r = tuple(float(v) for v in self.delays)
        if not r:
            raise ValueError("at least one delay is required")
        if r[0] <= 0 or any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError(f"delays must be positive and strictly increasing: {r}")
        object.__setattr__(self, "delays", r)

    @property
    def q(self) -> int:
        return len(self.delays)

    def shifts(self, grid: Grid):
        """Integer shifts ``k_0 = 0, k_1, ..., k_q`` on ``grid``."""
        out = [0]
        for r in self.delays:
            try:
                out.append(grid.steps(r))
            except ValueError:
                raise DelayNotOnGrid(f"delay {r} is not a multiple of the step {grid.h}") from None
        return out


@dataclass(frozen=True)
class InitialSegment:
    """Deterministic initial path ``xi`` on ``[-r_q, 0]``."""

    xi: Path1

    def holder_norm(self, gamma: float) -> float:
        """Discrete ``3 gamma``-Hölder seminorm of ``xi`` (exponent capped at 1)."""
        return holder_norm2(self.xi, min(3 * gamma, 1.0))

    @classmethod
    def constant(cls, value, grid: Grid):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(Path1(grid, np.broadcast_to(value, (grid.n + 1,) + value.shape)))


@dataclass
class DoublyDelayedCoefficients:
    """Germ coefficients at one time.

    Attributes
    ----------
    m : (n, d)
    zeta1 : (q+1, n, d, d)          families ``zeta^{(1,i'')}``
    zeta2 : (q, q, n, d, d, d)      families ``zeta^{(2,i',j')}``, ``1 <= i', j' <= q``
    zeta3 : (q+1, q+1, n, d, d, d)  families ``zeta^{(3,i'',j'')}``
    """

    m: np.ndarray
    zeta1: np.ndarray
    zeta2: np.ndarray
    zeta3: np.ndarray


class History:
    """Solution values and first/second level coefficients on the extended grid.

    ``y[i]``, ``z1[i]`` and ``z2[i]`` are defined for ``i < filled``.
    Coefficients vanish before the origin (the initial segment).
    """

    def __init__(self, grid: Grid, origin: int, shifts: Sequence[int], n: int, d: int):
        N = grid.n
        q = len(shifts) - 1
        self.grid = grid
        self.origin = origin
        self.shifts = list(shifts)
        self.y = np.zeros((N + 1, n))
        self.z1 = np.zeros((N + 1, n, d))
        self.z2 = np.zeros((N + 1, q + 1, n, d, d))
        self.filled = 0

    def args(self, i: int) -> np.ndarray:
        """Stacked arguments ``(y_i, y_{i-k_1}, ..., y_{i-k_q})``."""
        idx = [i - k for k in self.shifts]
        if min(idx) < 0:
            raise HistoryGap(
                f"time {self.grid.times[i]:.6g} needs values before the initial segment"
            )
        if max(idx) >= self.filled and i >= self.filled:
            raise HistoryGap(f"history not yet computed at index {i}")
        return self.y[idx]

    def delayed(self, arr, i, k):
        j = i - k
        if j < 0:
            raise HistoryGap(f"index {i} shifted by {k} precedes the initial segment")
        return arr[j]


def t_sigma_coeffs(sigma, hist: History, i: int) -> DoublyDelayedCoefficients:
    """Coefficient families of ``sigma(y, delayed y)`` at grid index ``i``.

    Uses ``hist.y`` up to and including ``i``; ``hist.z1``/``hist.z2`` at the
    strictly delayed indices, and ``Z1(i) = sigma(W_i)`` computed here.
    """
    ks = hist.shifts
    q = len(ks) - 1
    W = hist.args(i)
    s = sigma.eval(W)
    P = sigma.partial(W)  # (n, d, q+1, n)
    Hs = sigma.hess(W)  # (n, d, q+1, n, q+1, n)
    nn, d = s.shape
    z1_now = s if i >= hist.origin else np.zeros_like(s)

    def Z1(k):
        return z1_now if k == 0 else hist.delayed(hist.z1, i, k)

    def Z2(k):
        if k == 0:
            return _z2_at(P, hist, i, z1_now)
        return hist.delayed(hist.z2, i, k)

    Z1s = [Z1(k) for k in ks]
    Z2s = [Z2(k) for k in ks]
    zeta1 = np.stack([np.einsum("ajb,bk->ajk", P[:, :, a], Z1s[a]) for a in range(q + 1)])
    zeta2 = np.zeros((q, q, nn, d, d, d))
    for ip in range(1, q + 1):
        for jp in range(1, q + 1):
            zeta2[ip - 1, jp - 1] = np.einsum("ajb,bkl->ajkl", P[:, :, ip], Z2s[ip][jp])
    zeta3 = np.zeros((q + 1, q + 1, nn, d, d, d))
    for ip in range(q + 1):
        for jp in range(q + 1):
            t = np.einsum("ajbc,bk,cl->ajkl", Hs[:, :, ip, :, jp, :], Z1s[ip], Z1s[jp])
            if ip == jp:
                t = t + np.einsum("ajb,bkl->ajkl", P[:, :, ip], Z2s[ip][0])
            if ip == 0 and jp != 0:
                t = t + np.einsum("ajb,bkl->ajkl", P[:, :, 0], Z2s[0][jp])
            zeta3[ip, jp] = t
    return DoublyDelayedCoefficients(z1_now, zeta1, zeta2, zeta3)


def _z2_at(P, hist: History, i: int, z1_now):
    """``Z2(i)[j'] = d^{j'} sigma(W_i) . Z1(i - k_j')`` (zero before the origin)."""
    q = len(hist.shifts) - 1
    nn, d = z1_now.shape
    out = np.zeros((q + 1, nn, d, d))
    if i < hist.origin:
        return out
    for jp, k in enumerate(hist.shifts):
        z = z1_now if k == 0 else hist.delayed(hist.z1, i, k)
        out[jp] = np.einsum("ajb,bk->ajk", P[:, :, jp], z)
    return out


def _contract(coef, cell, what):
    """``coef[a,j,k(,l)] . cell^T``; skips all-zero coefficients, rejects NaN cells."""
    if not np.any(coef):
        return 0.0
    if np.isnan(cell).any():
        raise OutOfRange(f"{what} cell needed by a nonzero coefficient is off the grid")
    if coef.ndim == 3:
        return np.einsum("ajk,kj->a", coef, cell)
    return np.einsum("ajkl,lkj->a", coef, cell)


def germ_increment(co: DoublyDelayedCoefficients, dlift: DelayedLift, c: int, ks) -> np.ndarray:
    """Four-family germ over cell ``c`` of the extended grid."""
    q = len(ks) - 1
    dx = dlift.x.values[c + 1] - dlift.x.values[c]
    out = co.m @ dx
    for ip, k in enumerate(ks):
        out = out + _contract(co.zeta1[ip], dlift._area_cells(k)[c], f"area v={k}")
    for ip in range(1, q + 1):
        for jp in range(1, q + 1):
            cells = dlift._volume_cells(ks[jp], ks[ip])
            out = out + _contract(co.zeta2[ip - 1, jp - 1], cells[c], "volume")
    for ip in range(q + 1):
        for jp in range(q + 1):
            cells = dlift._volume_cells(ks[jp] - ks[ip], ks[ip])
            out = out + _contract(co.zeta3[ip, jp], cells[c], "volume")
    return out


def delayed_integrate(coeffs: Sequence[DoublyDelayedCoefficients], dlift: DelayedLift,
                      i0: int) -> np.ndarray:
    """Sum of the four-family germ over consecutive cells starting at ``i0``.

    ``coeffs[c]`` are the coefficients at grid index ``i0 + c``.  Returns
    the running integral at grid points ``i0 .. i0 + len(coeffs)`` (starting
    at 0).

    Raises
    ------
    MissingLiftFamily
        If ``dlift`` lacks a family the germ needs.
    """
    ks = dlift.shifts
    q = len(ks) - 1
    if coeffs and coeffs[0].zeta1.shape[0] != q + 1:
        raise DimensionMismatch("coefficient families do not match the lift's delays")
    out = np.zeros((len(coeffs) + 1, coeffs[0].m.shape[0] if coeffs else 0))
    for c, co in enumerate(coeffs):
        out[c + 1] = out[c] + germ_increment(co, dlift, i0 + c, ks)
    return out


def _check_families(dlift: DelayedLift, ks):
    area_keys, vol_keys = required_families(ks)
    for k in area_keys:
        dlift._area_cells(k)
    for k1, k2 in vol_keys:
        dlift._volume_cells(k1, k2)


def solve_dde(xi: InitialSegment, sigma, dlift: DelayedLift) -> SolveReport:
    """March the delay equation over ``[0, T]`` from the initial segment ``xi``.

    The returned path covers the whole extended grid; on ``[-r_q, 0]`` it is
    ``xi``.

    Raises
    ------
    NonFinite, HistoryGap, MissingLiftFamily
    """
    grid = dlift.grid
    ks = dlift.shifts
    q = len(ks) - 1
    if sigma.q != q or sigma.d != dlift.d:
        raise DimensionMismatch(
            f"field has q={sigma.q}, d={sigma.d}; lift has q={q}, d={dlift.d}"
        )
    o = dlift.origin
    xg = xi.xi.grid
    if xg.n != o or abs(xg.h - grid.h) > 1e-12 * grid.h or abs(xg.t0 - grid.t0) > 1e-9 * grid.h:
        raise DimensionMismatch("initial segment must live on the grid part before t = 0")
    if xi.xi.shape != (sigma.n,):
        raise DimensionMismatch(f"initial segment has shape {xi.xi.shape}, state is {sigma.n}")
    _check_families(dlift, ks)
    hist = History(grid, o, ks, sigma.n, sigma.d)
    hist.y[: o + 1] = xi.xi.values
    hist.filled = o + 1
    with np.errstate(over="ignore", invalid="ignore"):
        for c in range(o, grid.n):
            co = t_sigma_coeffs(sigma, hist, c)
            hist.z1[c] = co.m
            hist.z2[c] = _z2_at(sigma.partial(hist.args(c)), hist, c, co.m)
            y_next = hist.y[c] + germ_increment(co, dlift, c, ks)
            if not np.all(np.isfinite(y_next)):
                raise NonFinite(
                    f"state left the floating range at t={grid.times[c + 1]:.6g}"
                )
            hist.y[c + 1] = y_next
            hist.filled = c + 2
    return SolveReport(
        Path1(grid, hist.y), float("nan"), grid.n - o, "step3",
        None, getattr(sigma, "uses_fd", False), {"delays": list(dlift.delays)},
    )


def family_distances(d1: DelayedLift, d2: DelayedLift, gamma: float) -> dict:
    """Hölder distances per family: ``x`` in ``gamma``, areas in ``2 gamma``, volumes in ``3 gamma``.

    Only spans lying inside the grid for both lifts (no off-grid cells) count.
    """
    if d1.grid != d2.grid or d1.delays != d2.delays:
        raise DimensionMismatch("delayed lifts differ in grid or delays")
    n, h = d1.n, d1.grid.h
    e = d1.x.values - d2.x.values
    out = {"x": 0.0}
    for lag in range(1, n + 1):
        diff = np.linalg.norm(e[lag:] - e[:-lag], axis=-1).max()
        out["x"] = max(out["x"], float(diff) / (lag * h) ** gamma)
    for k in d1.areas:
        best = 0.0
        for s in range(n):
            a1 = d1._area_fold(k, s, n)[0][1:]
            a2 = d2._area_fold(k, s, n)[0][1:]
            r = np.sqrt(((a1 - a2) ** 2).sum(axis=(-1, -2)))
            dt = np.arange(1, n - s + 1) * h
            v = r / dt ** (2 * gamma)
            if np.any(~np.isnan(v)):
                best = max(best, float(np.nanmax(v)))
        out[f"area v={k * h:.12g}"] = best
    for k1, k2 in d1.volumes:
        best = 0.0
        for s in range(n):
            v1 = d1._volume_fold(k1, k2, s, n)[1][1:]
            v2 = d2._volume_fold(k1, k2, s, n)[1][1:]
            r = np.sqrt(((v1 - v2) ** 2).sum(axis=(-1, -2, -3)))
            dt = np.arange(1, n - s + 1) * h
            v = r / dt ** (3 * gamma)
            if np.any(~np.isnan(v)):
                best = max(best, float(np.nanmax(v)))
        out[f"volume v1={k1 * h:.12g},v2={k2 * h:.12g}"] = best
    return out


def dde_continuity_probe(xi1: InitialSegment, xi2: InitialSegment, sigma,
                         dlift1: DelayedLift, dlift2: DelayedLift,
                         gamma: Optional[float] = None, kappa: Optional[float] = None) -> dict:
    """Solve two delay problems and compare output and input distances.

    ``solution_distance`` is ``sup + kappa``-norm of the difference on
    ``[0, T]``.  ``input_distance`` adds ``sup + 3 gamma``-norm of
    ``xi1 - xi2``, the ``gamma``-norm of the driver difference and the
    ``2 gamma`` / ``3 gamma`` norms of every area / volume family difference.
    """
    if gamma is None:
        gamma = dlift1.gamma if dlift1.gamma is not None else 0.5
    kappa = DEFAULT_KAPPA_RATIO * gamma if kappa is None else kappa
    y1 = solve_dde(xi1, sigma, dlift1).y.values
    y2 = solve_dde(xi2, sigma, dlift2).y.values
    o = dlift1.origin
    sd = path_distance(y1[o:], y2[o:], dlift1.grid.h, kappa)
    exi = xi1.xi.values - xi2.xi.values
    xi_d = float(np.abs(exi).max()) + (
        holder_norm2(Path1(xi1.xi.grid, exi), min(3 * gamma, 1.0))
    )
    fam = family_distances(dlift1, dlift2, gamma)
    total = xi_d + sum(fam.values())
    return {
        "solution_distance": sd,
        "input_distance": total,
        "ratio": sd / total if total > 0 else float("nan"),
        "xi": xi_d,
        **fam,
    }
