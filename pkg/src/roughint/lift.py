"""Level-3 geometric lifts of piecewise-linear paths, plain and delayed.

Every lift here is stored cell by cell.  Values over longer spans are produced
by folding the cells with the Chen relations

    X2_st = X2_su + X2_ut + dx_su (x) dx_ut
    X3_st = X3_su + X3_ut + X2_su (x) dx_ut + dx_su (x) X2_ut

and their delayed analogues.  All of them are instances of one *stream fold*:
given three streams of cell increments ``a, b, c`` with cell areas ``C2ab``,
``C2bc`` and cell volumes ``C3``,

    A(i, j) = sum_c C2ab_c + sum_c (sum_{i<=c'<c} a_c') (x) b_c
    V(i, j) = sum_c C3_c + sum_c A(i, c) (x) c_c + sum_c (sum_{i<=c'<c} a_c') (x) C2bc_c

where ``c`` runs over the cells ``i..j-1``.  The plain lift uses ``a = b = c =
dx``.  A doubly delayed volume ``V(v1, v2)`` uses ``a = dx`` shifted by
``k1 + k2`` cells, ``b = dx`` shifted by ``k2`` and ``c = dx``.

Delays must be integer multiples of the grid step.  A cell whose shifted
partner falls outside the sampled grid holds NaN; queries touching such a cell
raise :class:`~roughint.errors.OutOfRange`.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DelayNotOnGrid,
    DimensionMismatch,
    InadmissiblePair,
    MissingLiftFamily,
    OutOfRange,
)
from .increments import DENSE_MAX_CELLS, Grid, Path1

# verify_hypotheses switches to random sampling above this many checks
EXHAUSTIVE_MAX_CHECKS = 10**6
SAMPLED_CHECKS = 10**4
VERIFY_RTOL = 1e-12


# --------------------------------------------------------------------------
# elementary Chen combinations
# --------------------------------------------------------------------------


def chen2(a_su, a_ut, dx_su, dx_ut):
    """Combine two adjacent areas: ``a_su + a_ut + dx_su (x) dx_ut``."""
    dx_su = np.asarray(dx_su, dtype=float)
    dx_ut = np.asarray(dx_ut, dtype=float)
    return np.asarray(a_su) + np.asarray(a_ut) + dx_su[..., :, None] * dx_ut[..., None, :]


def chen3(v_su, v_ut, a_su, a_ut, dx_su, dx_ut):
    """Combine two adjacent volumes.

    ``v_su + v_ut + a_su (x) dx_ut + dx_su (x) a_ut``
    """
    a_su = np.asarray(a_su, dtype=float)
    a_ut = np.asarray(a_ut, dtype=float)
    dx_su = np.asarray(dx_su, dtype=float)
    dx_ut = np.asarray(dx_ut, dtype=float)
    return (
        np.asarray(v_su)
        + np.asarray(v_ut)
        + a_su[..., :, :, None] * dx_ut[..., None, None, :]
        + dx_su[..., :, None, None] * a_ut[..., None, :, :]
    )


# --------------------------------------------------------------------------
# stream folds (vectorized over any leading batch axes; cells on axis -2/-3/-4)
# --------------------------------------------------------------------------


def _exclusive_cumsum(a):
    """``out[..., c, :] = sum_{c' < c} a[..., c', :]`` with a trailing total."""
    out = np.zeros(a.shape[:-2] + (a.shape[-2] + 1,) + a.shape[-1:])
    np.cumsum(a, axis=-2, out=out[..., 1:, :])
    return out


def fold_area(a, b, c2ab):
    """Fold cell streams into areas over spans starting at the first cell.

    Parameters
    ----------
    a, b : ndarray, shape (..., m, d)
        Cell increments of the two streams.
    c2ab : ndarray, shape (..., m, d, d)
        Cell areas of the pair.

    Returns
    -------
    area : ndarray, shape (..., m + 1, d, d)
        ``area[..., j]`` is the area over the first ``j`` cells.
    pa : ndarray, shape (..., m + 1, d)
        Increments of stream ``a`` over the first ``j`` cells.
    """
    pa = _exclusive_cumsum(a)
    inc = c2ab + pa[..., :-1, :, None] * b[..., None, :]
    area = np.zeros(inc.shape[:-3] + (inc.shape[-3] + 1,) + inc.shape[-2:])
    np.cumsum(inc, axis=-3, out=area[..., 1:, :, :])
    return area, pa


def fold_volume(a, b, c, c2ab, c2bc, c3):
    """Fold cell streams into (area_ab, volume, dx_a) over growing spans.

    Shapes follow :func:`fold_area`; ``c3`` is (..., m, d, d, d) and the
    returned volume is (..., m + 1, d, d, d).
    """
    area, pa = fold_area(a, b, c2ab)
    inc = (
        c3
        + area[..., :-1, :, :, None] * c[..., None, None, :]
        + pa[..., :-1, :, None, None] * c2bc[..., None, :, :]
    )
    vol = np.zeros(inc.shape[:-4] + (inc.shape[-4] + 1,) + inc.shape[-3:])
    np.cumsum(inc, axis=-4, out=vol[..., 1:, :, :, :])
    return area, vol, pa


def shifted(cells: np.ndarray, k: int, lo: int, hi: int) -> np.ndarray:
    """``out[c - lo] = cells[c - k]`` for cells ``c`` in ``[lo, hi)``; NaN outside."""
    m = cells.shape[0]
    out = np.full((hi - lo,) + cells.shape[1:], np.nan)
    src_lo = max(lo - k, 0)
    src_hi = min(hi - k, m)
    if src_hi > src_lo:
        out[src_lo + k - lo : src_hi + k - lo] = cells[src_lo:src_hi]
    return out


def _grid_steps(grid: Grid, v: float) -> int:
    try:
        return grid.steps(v)
    except ValueError:
        raise DelayNotOnGrid(f"delay {v} is not a multiple of the grid step {grid.h}") from None


def _check_span(i, j, n):
    i = np.asarray(i)
    j = np.asarray(j)
    if np.any(i < 0) or np.any(j > n) or np.any(i > j):
        raise OutOfRange(f"span indices must satisfy 0 <= i <= j <= {n}")


# --------------------------------------------------------------------------
# plain lift
# --------------------------------------------------------------------------


@dataclass
class SpanTables:
    """Dense span values of a lift (mutable, used for audits and fault injection).

    ``dx[i, j]``, ``area[i, j]`` and ``volume[i, j]`` hold the path increment,
    area and volume over grid points ``i <= j``.  Entries with ``i > j`` are
    unused.
    """

    dx: np.ndarray
    area: np.ndarray
    volume: np.ndarray

    def copy(self) -> "SpanTables":
        return SpanTables(self.dx.copy(), self.area.copy(), self.volume.copy())


@dataclass(frozen=True)
class RoughLift3:
    """A path together with per-cell areas and volumes.

    Attributes
    ----------
    x : Path1
        The underlying path, dimension ``d``.
    area_cells : ndarray, shape (n, d, d)
    volume_cells : ndarray, shape (n, d, d, d)
    gamma : float, optional
        Hölder exponent attributed to the driver; only used by diagnostics.
    """

    x: Path1
    area_cells: np.ndarray = field(repr=False)
    volume_cells: np.ndarray = field(repr=False)
    gamma: Optional[float] = None

    def __post_init__(self):
        n, d = self.x.grid.n, self.x.dim
        if self.x.values.ndim != 2:
            raise DimensionMismatch("a lift needs a vector-valued path")
        a = np.array(self.area_cells, dtype=float)
        v = np.array(self.volume_cells, dtype=float)
        if a.shape != (n, d, d) or v.shape != (n, d, d, d):
            raise DimensionMismatch(
                f"cell tensors must have shapes {(n, d, d)} and {(n, d, d, d)}, "
                f"got {a.shape} and {v.shape}"
            )
        a.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "area_cells", a)
        object.__setattr__(self, "volume_cells", v)

    @property
    def grid(self) -> Grid:
        return self.x.grid

    @property
    def d(self) -> int:
        return self.x.dim

    @property
    def n(self) -> int:
        return self.x.grid.n

    @property
    def dx_cells(self) -> np.ndarray:
        return self.x.increments()

    def _fold_from(self, i: int, j: int):
        dx = self.dx_cells[i:j]
        return fold_volume(
            dx, dx, dx, self.area_cells[i:j], self.area_cells[i:j], self.volume_cells[i:j]
        )

    def _query(self, i, j, level):
        i = np.asarray(i, dtype=int)
        j = np.asarray(j, dtype=int)
        _check_span(i, j, self.n)
        bi, bj = np.broadcast_arrays(i, j)
        d = self.d
        out = np.zeros(bi.shape + (d,) * level)
        flat_i, flat_j = bi.ravel(), bj.ravel()
        res = out.reshape((-1,) + (d,) * level)
        for s in np.unique(flat_i):
            sel = flat_i == s
            jmax = int(flat_j[sel].max())
            area, vol, _ = self._fold_from(int(s), jmax)
            table = area if level == 2 else vol
            res[sel] = table[flat_j[sel] - s]
        return out

    def dx(self, i, j) -> np.ndarray:
        """Path increment ``x_j - x_i``."""
        _check_span(i, j, self.n)
        v = self.x.values
        return v[np.asarray(j)] - v[np.asarray(i)]

    def area(self, i, j) -> np.ndarray:
        """Area over grid points ``i <= j`` (scalars or broadcastable arrays)."""
        return self._query(i, j, 2)

    def volume(self, i, j) -> np.ndarray:
        """Volume over grid points ``i <= j``."""
        return self._query(i, j, 3)

    def spans(self) -> SpanTables:
        """Dense tables of all span values (``n <= DENSE_MAX_CELLS``)."""
        n, d = self.n, self.d
        if n > DENSE_MAX_CELLS:
            raise ValueError(f"dense span tables limited to {DENSE_MAX_CELLS} cells")
        dxt = np.zeros((n + 1, n + 1, d))
        at = np.zeros((n + 1, n + 1, d, d))
        vt = np.zeros((n + 1, n + 1, d, d, d))
        for i in range(n):
            area, vol, pa = self._fold_from(i, n)
            dxt[i, i:] = pa
            at[i, i:] = area
            vt[i, i:] = vol
        return SpanTables(dxt, at, vt)

    def restrict(self, i0: int, i1: int) -> "RoughLift3":
        """Lift restricted to grid points ``i0..i1``."""
        return RoughLift3(
            self.x.sub(i0, i1), self.area_cells[i0:i1], self.volume_cells[i0:i1], self.gamma
        )

    def coarsen(self, factor: int) -> "RoughLift3":
        """Lift on the sub-grid with every ``factor``-th point (exact Chen spans)."""
        if factor < 1 or self.n % factor:
            raise ValueError(f"cannot coarsen {self.n} cells by {factor}")
        if factor == 1:
            return self
        m = self.n // factor
        d = self.d
        dx = self.dx_cells.reshape(m, factor, d)
        a = self.area_cells.reshape(m, factor, d, d)
        v = self.volume_cells.reshape(m, factor, d, d, d)
        area, vol, _ = fold_volume(dx, dx, dx, a, a, v)
        g = self.grid
        x = Path1(Grid(g.t0, g.h * factor, m), self.x.values[::factor])
        return RoughLift3(x, area[:, -1], vol[:, -1], self.gamma)


def lift_linear(x: Path1, gamma: Optional[float] = None) -> RoughLift3:
    """Canonical lift of the piecewise-linear interpolant of ``x``.

    Cell values are ``dx (x) dx / 2`` and ``dx (x) dx (x) dx / 6``.
    """
    if x.values.ndim != 2:
        raise DimensionMismatch("lift_linear needs a vector-valued path")
    dx = x.increments()
    a = 0.5 * dx[:, :, None] * dx[:, None, :]
    v = a[:, :, :, None] * dx[:, None, None, :] / 3.0
    return RoughLift3(x, a, v, gamma)


# --------------------------------------------------------------------------
# delayed families
# --------------------------------------------------------------------------


def delayed_area(x: Path1, v: float) -> np.ndarray:
    """Cell family ``A(v)``: ``A(v)_c = dx_{c-k} (x) dx_c / 2`` with ``v = k h``.

    Returns an array of shape (n, d, d); cells whose shifted partner is off the
    grid are NaN.

    Raises
    ------
    DelayNotOnGrid
        If ``v`` is not a multiple of the step.
    OutOfRange
        If no cell of the family lies on the grid.
    """
    k = _grid_steps(x.grid, v)
    n = x.grid.n
    if abs(k) >= n:
        raise OutOfRange(f"delay {v} shifts every cell off the grid")
    dx = x.increments()
    return 0.5 * shifted(dx, k, 0, n)[:, :, None] * dx[:, None, :]


def delayed_volume(x: Path1, v1: float, v2: float, areas=None) -> np.ndarray:
    """Cell family ``V(v1, v2)_c = dx_{c-k1-k2} (x) dx_{c-k2} (x) dx_c / 6``.

    ``areas`` is accepted for interface symmetry with the span combination and
    is not needed for the closed-form cells.

    Raises
    ------
    InadmissiblePair
        If ``v1 + v2 < 0``.
    """
    k1 = _grid_steps(x.grid, v1)
    k2 = _grid_steps(x.grid, v2)
    if k1 + k2 < 0:
        raise InadmissiblePair(f"delay pair ({v1}, {v2}) has v1 + v2 < 0")
    n = x.grid.n
    if k1 + k2 >= n or abs(k2) >= n:
        raise OutOfRange(f"delay pair ({v1}, {v2}) shifts every cell off the grid")
    dx = x.increments()
    a = shifted(dx, k1 + k2, 0, n)
    b = shifted(dx, k2, 0, n)
    return a[:, :, None, None] * b[:, None, :, None] * dx[:, None, None, :] / 6.0


def required_families(ks: Sequence[int]):
    """Area shifts and volume shift pairs needed for delays ``ks`` (``ks[0] == 0``).

    Returns
    -------
    area_keys : sorted list of the difference set ``{k_j - k_i}``
    volume_keys : list of ``(k1, k2)`` covering ``(k_j', k_i')`` for
        ``1 <= i', j' <= q`` and ``(k_j'' - k_i'', k_i'')`` for
        ``0 <= i'', j'' <= q``, without duplicates.
    """
    ks = list(ks)
    area_keys = sorted({b - a for a in ks for b in ks})
    vols = []
    for i in ks[1:]:
        for j in ks[1:]:
            vols.append((j, i))
    for i in ks:
        for j in ks:
            vols.append((j - i, i))
    seen = []
    for key in vols:
        if key not in seen:
            seen.append(key)
    return area_keys, seen


@dataclass(frozen=True)
class DelayedLift:
    """Delayed area and volume families over an extended grid.

    Attributes
    ----------
    x : Path1
        Driver on the extended grid ``[-r_q, T]``.
    delays : tuple of float
        ``r_1 < ... < r_q`` (``r_0 = 0`` is implicit).
    areas : dict
        Integer shift ``k`` -> cell family ``A(k h)`` of shape (N, d, d).
    volumes : dict
        ``(k1, k2)`` -> cell family ``V(k1 h, k2 h)`` of shape (N, d, d, d).
    from_interpolant : bool
        True when the families are the closed-form cells of the linear
        interpolant (enables the independent shift-identity audit).
    """

    x: Path1
    delays: Tuple[float, ...]
    areas: Dict[int, np.ndarray] = field(repr=False)
    volumes: Dict[Tuple[int, int], np.ndarray] = field(repr=False)
    from_interpolant: bool = False
    gamma: Optional[float] = None

    @classmethod
    def build(cls, x: Path1, delays: Sequence[float], gamma: Optional[float] = None):
        """Build every family needed to integrate against delays ``r_1..r_q``."""
        delays = tuple(float(r) for r in delays)
        ks = [0] + [_grid_steps(x.grid, r) for r in delays]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError(f"delays must be positive and strictly increasing: {delays}")
        area_keys, vol_keys = required_families(ks)
        h = x.grid.h
        areas = {k: delayed_area(x, k * h) for k in area_keys}
        vols = {key: delayed_volume(x, key[0] * h, key[1] * h) for key in vol_keys}
        return cls(x, delays, areas, vols, True, gamma)

    @property
    def grid(self) -> Grid:
        return self.x.grid

    @property
    def d(self) -> int:
        return self.x.dim

    @property
    def n(self) -> int:
        return self.x.grid.n

    @property
    def shifts(self) -> List[int]:
        """Integer shifts ``k_0 = 0, k_1, ..., k_q`` of the delays."""
        return [0] + [self.grid.steps(r) for r in self.delays]

    @property
    def origin(self) -> int:
        """Index of time 0 on the extended grid."""
        return self.grid.index_of(0.0)

    def steps(self, v: float) -> int:
        return _grid_steps(self.grid, v)

    def _area_cells(self, k):
        try:
            return self.areas[k]
        except KeyError:
            raise MissingLiftFamily(k * self.grid.h) from None

    def _volume_cells(self, k1, k2):
        try:
            return self.volumes[(k1, k2)]
        except KeyError:
            raise MissingLiftFamily(k1 * self.grid.h, k2 * self.grid.h) from None

    # ---- stream folds for one starting index --------------------------------

    def _area_fold(self, k, i, j):
        dx = self.x.increments()
        a = shifted(dx, k, i, j)
        return fold_area(a, dx[i:j], self._area_cells(k)[i:j])

    def _volume_fold(self, k1, k2, i, j):
        dx = self.x.increments()
        a = shifted(dx, k1 + k2, i, j)
        b = shifted(dx, k2, i, j)
        c2ab = shifted(self._area_cells(k1), k2, i, j)
        c2bc = self._area_cells(k2)[i:j]
        return fold_volume(a, b, dx[i:j], c2ab, c2bc, self._volume_cells(k1, k2)[i:j])

    def _query(self, fold, i, j, tail):
        i = np.asarray(i, dtype=int)
        j = np.asarray(j, dtype=int)
        _check_span(i, j, self.n)
        bi, bj = np.broadcast_arrays(i, j)
        out = np.zeros(bi.shape + tail)
        res = out.reshape((-1,) + tail)
        fi, fj = bi.ravel(), bj.ravel()
        for s in np.unique(fi):
            sel = fi == s
            res[sel] = fold(int(s), int(fj[sel].max()))[fj[sel] - s]
        if np.isnan(out).any():
            raise OutOfRange("query uses cells whose delayed partner is off the grid")
        return out

    # ---- public queries (grid indices on the extended grid) ----------------

    def dx(self, v: float, i, j) -> np.ndarray:
        """Delayed increment ``x_{t_j - v} - x_{t_i - v}``."""
        k = self.steps(v)
        i = np.asarray(i) - k
        j = np.asarray(j) - k
        if np.any(i < 0) or np.any(j > self.n) or np.any(i > self.n) or np.any(j < 0):
            raise OutOfRange(f"delayed increment with v={v} leaves the grid")
        return self.x.values[j] - self.x.values[i]

    def area(self, v: float, i, j) -> np.ndarray:
        """``x2(v, 0)`` over grid points ``i <= j``."""
        k = self.steps(v)
        d = self.d
        return self._query(lambda s, e: self._area_fold(k, s, e)[0], i, j, (d, d))

    def area2(self, v1: float, v2: float, i, j) -> np.ndarray:
        """``x2(v1, v2)_{st} = x2(v1, 0)_{s - v2, t - v2}``."""
        k2 = self.steps(v2)
        return self.area(v1, np.asarray(i) - k2, np.asarray(j) - k2)

    def volume(self, v1: float, v2: float, i, j) -> np.ndarray:
        """``x3(v1, v2)`` over grid points ``i <= j``."""
        k1, k2 = self.steps(v1), self.steps(v2)
        self._volume_cells(k1, k2)
        d = self.d
        return self._query(
            lambda s, e: self._volume_fold(k1, k2, s, e)[1], i, j, (d, d, d)
        )

    def coarsen(self, factor: int) -> "DelayedLift":
        """Families on the grid with every ``factor``-th point (exact spans).

        The origin and every delay must stay on the coarse grid.
        """
        if factor == 1:
            return self
        n = self.n
        if n % factor or self.origin % factor:
            raise ValueError(f"cannot coarsen {n} cells by {factor}")
        for k in self.shifts:
            if k % factor:
                raise DelayNotOnGrid(f"shift {k} is not a multiple of {factor}")
        m = n // factor
        d = self.d
        dx = self.x.increments()

        def blocks(arr):
            return arr.reshape((m, factor) + arr.shape[1:])

        areas = {}
        for k, cells in self.areas.items():
            a = blocks(shifted(dx, k, 0, n))
            area, _ = fold_area(a, blocks(dx), blocks(cells))
            areas[k // factor] = area[:, -1]
        vols = {}
        for (k1, k2), cells in self.volumes.items():
            a = blocks(shifted(dx, k1 + k2, 0, n))
            b = blocks(shifted(dx, k2, 0, n))
            c2ab = blocks(shifted(self.areas[k1], k2, 0, n))
            _, vol, _ = fold_volume(a, b, blocks(dx), c2ab, blocks(self.areas[k2]), blocks(cells))
            vols[(k1 // factor, k2 // factor)] = vol[:, -1]
        g = self.grid
        x = Path1(Grid(g.t0, g.h * factor, m), self.x.values[::factor])
        return DelayedLift(x, self.delays, areas, vols, False, self.gamma)

    def base(self) -> RoughLift3:
        """The undelayed lift restricted to ``[0, T]``."""
        o = self.origin
        return RoughLift3(
            self.x.sub(o, self.n),
            self.areas[0][o:],
            self.volumes[(0, 0)][o:],
            self.gamma,
        )


# --------------------------------------------------------------------------
# hypothesis audit
# --------------------------------------------------------------------------


def _ordered_triples(m: int, rng: np.random.Generator, exhaustive: bool):
    """Index triples ``s < u < t`` on ``m + 1`` points."""
    if exhaustive:
        idx = np.array(list(itertools.combinations(range(m + 1), 3)), dtype=int)
        if idx.size == 0:
            return np.zeros((0, 3), dtype=int)
        return idx
    raw = np.sort(rng.integers(0, m + 1, size=(4 * SAMPLED_CHECKS, 3)), axis=1)
    raw = raw[(raw[:, 0] < raw[:, 1]) & (raw[:, 1] < raw[:, 2])]
    return raw[:SAMPLED_CHECKS]


def _n_triples(m: int) -> int:
    p = m + 1
    return p * (p - 1) * (p - 2) // 6


class _Spans:
    """On-demand span rows ``table[s, t]`` built by folds from each start ``s``."""

    def __init__(self, fold, m, tail):
        self._fold = fold
        self._m = m
        self._tail = tail
        self._rows = {}

    def row(self, s):
        if s not in self._rows:
            if s >= self._m:
                self._rows[s] = np.zeros((1,) + self._tail)
            else:
                self._rows[s] = self._fold(s, self._m)
        return self._rows[s]

    def take(self, s, t):
        """Values at index arrays ``(s, t)`` with ``s <= t``; NaN where shifted off-grid."""
        out = np.empty((len(s),) + self._tail)
        for a in np.unique(s):
            sel = s == a
            out[sel] = self.row(int(a))[t[sel] - a]
        return out


class _DenseSpans(_Spans):
    def __init__(self, table):
        self._table = table
        self._tail = table.shape[2:]

    def take(self, s, t):
        return self._table[s, t]


def _shifted_take(spans: _Spans, m: int, k: int, s, t):
    """``table[s - k, t - k]`` with NaN where the shifted span leaves the grid."""
    s2, t2 = s - k, t - k
    ok = (s2 >= 0) & (t2 <= m)
    out = np.full((len(s),) + spans._tail, np.nan)
    if ok.any():
        out[ok] = spans.take(s2[ok], t2[ok])
    return out


CHUNK = 50_000


class _Acc:
    """Running maximum of residual norms over chunks of checks."""

    def __init__(self):
        self.err = 0.0
        self.checks = 0

    def add(self, resid):
        r = np.abs(resid.reshape(len(resid), -1))
        valid = ~np.isnan(r).any(axis=1)
        n = int(valid.sum())
        if n:
            self.err = max(self.err, float(r[valid].max()))
            self.checks += n
        return self


def _chunks(*arrays):
    m = len(arrays[0])
    for a in range(0, m, CHUNK):
        yield tuple(x[a : a + CHUNK] for x in arrays)


def _row(identity, family, acc, scale, rtol=VERIFY_RTOL):
    return {
        "identity": identity,
        "family": family,
        "residual": acc.err,
        "scale": float(scale),
        "checks": acc.checks,
        "passed": bool(acc.err <= rtol * scale),
    }


def _path_scale(x: Path1) -> float:
    v = x.values
    s = float(np.max(v.max(axis=0) - v.min(axis=0))) if len(v) else 0.0
    return s if s > 0 else 1.0


def _triples_for(m, rng, n_triple_ids, n_pair_ids):
    """Triples to audit; exhaustive unless the whole report exceeds the check budget."""
    total = _n_triples(m) * n_triple_ids + (m + 1) * m // 2 * n_pair_ids
    ex = total <= EXHAUSTIVE_MAX_CHECKS
    return _ordered_triples(m, rng, ex), ex


def _geom_resid(a, dxp):
    return 0.5 * (a + np.swapaxes(a, -1, -2)) - 0.5 * dxp[:, :, None] * dxp[:, None, :]


def _dense_shift(tab, k):
    """``out[i, j] = tab[i - k, j - k]`` with NaN where the shifted span leaves the grid."""
    out = np.full(tab.shape, np.nan)
    m = tab.shape[0]
    if k >= 0:
        out[k:, k:] = tab[: m - k, : m - k]
    else:
        out[: m + k, : m + k] = tab[-k:, -k:]
    return out


def _dx_table(vals, k):
    """Dense table of shifted increments ``x_{j-k} - x_{i-k}`` (NaN off-grid)."""
    m = vals.shape[0]
    src = np.full(vals.shape, np.nan)
    if k >= 0:
        src[k:] = vals[: m - k]
    else:
        src[: m + k] = vals[-k:]
    return src[None, :, :] - src[:, None, :]


def _chen_dense(acc, big, left, right, outer_terms):
    """Accumulate ``big[s,t] - left[s,u] - right[u,t] - sum(outer)`` over ``s < u < t``.

    ``outer_terms`` is a list of ``(P, Q)`` dense tables; each contributes
    ``P[s, u] (x) Q[u, t]``.
    """
    m = big.shape[0]
    for s in range(m - 2):
        sl = slice(s + 1, None)
        r = big[s, None, sl] - left[s, sl, None] - right[sl, sl]
        for P, Q in outer_terms:
            p = P[s, sl]
            q = Q[sl, sl]
            r = r - p.reshape(p.shape[:1] + (1,) + p.shape[1:] + (1,) * (q.ndim - 2)) * q.reshape(
                q.shape[:2] + (1,) * (p.ndim - 1) + q.shape[2:]
            )
        iu = np.triu_indices(m - s - 1, 1)
        acc.add(r[iu])
    return acc


def _verify_plain(lift: RoughLift3, tables: Optional[SpanTables], seed: int):
    rng = np.random.default_rng(seed)
    n, d = lift.n, lift.d
    trip, exhaustive = _triples_for(n, rng, 2, 1)
    if tables is None and exhaustive:
        tables = lift.spans()
    if tables is not None:
        dxs = _DenseSpans(tables.dx)
        ars = _DenseSpans(tables.area)
        vos = _DenseSpans(tables.volume)
    else:
        dxs = _Spans(lambda s, e: lift._fold_from(s, e)[2], n, (d,))
        ars = _Spans(lambda s, e: lift._fold_from(s, e)[0], n, (d, d))
        vos = _Spans(lambda s, e: lift._fold_from(s, e)[1], n, (d, d, d))
    S = _path_scale(lift.x)
    acc2, acc3, accg = _Acc(), _Acc(), _Acc()
    if exhaustive:
        A, V, DX = tables.area, tables.volume, tables.dx
        _chen_dense(acc2, A, A, A, [(DX, DX)])
        _chen_dense(acc3, V, V, V, [(A, DX), (DX, A)])
        trip = np.zeros((0, 3), dtype=int)
    for s, u, t in _chunks(*trip.T):
        dsu, dut = dxs.take(s, u), dxs.take(u, t)
        asu, aut = ars.take(s, u), ars.take(u, t)
        acc2.add(ars.take(s, t) - chen2(asu, aut, dsu, dut))
        acc3.add(vos.take(s, t) - chen3(vos.take(s, u), vos.take(u, t), asu, aut, dsu, dut))
    if exhaustive or tables is not None:
        pi, pj = np.triu_indices(n + 1, 1)
    else:
        pi, pj = trip[:, 0], trip[:, 2]
    for i, j in _chunks(pi, pj):
        accg.add(_geom_resid(ars.take(i, j), dxs.take(i, j)))
    return [
        _row("chen2", "v=0", acc2, S**2),
        _row("chen3", "v1=0,v2=0", acc3, S**3),
        _row("geometric", "v=0", accg, S**2),
    ]


def _verify_delayed(lift: DelayedLift, tables: Optional[dict], seed: int):
    rng = np.random.default_rng(seed)
    n, d = lift.n, lift.d
    h = lift.grid.h
    n_area, n_vol = len(lift.areas), len(lift.volumes)
    trip, exhaustive = _triples_for(n, rng, n_area + n_vol, 1 + 2 * n_area)
    S = _path_scale(lift.x)
    vals = lift.x.values
    dxc = lift.x.increments()

    def dx_shift(k, s, t):
        out = np.full((len(s), d), np.nan)
        ok = (s - k >= 0) & (t - k <= n)
        out[ok] = vals[t[ok] - k] - vals[s[ok] - k]
        return out

    def area_spans(k):
        if tables is not None and ("area", k) in tables:
            return _DenseSpans(tables[("area", k)])
        if exhaustive:
            return _DenseSpans(_area_table(lift, k))
        return _Spans(lambda s, e: lift._area_fold(k, s, e)[0], n, (d, d))

    def vol_spans(key):
        if tables is not None and ("volume", key) in tables:
            return _DenseSpans(tables[("volume", key)])
        if exhaustive:
            return _DenseSpans(_volume_table(lift, key))
        return _Spans(lambda s, e: lift._volume_fold(key[0], key[1], s, e)[1], n, (d, d, d))

    if exhaustive:
        pi, pj = np.triu_indices(n + 1, 1)
    else:
        pi, pj = trip[:, 0], trip[:, 2]

    keys = sorted(lift.areas)
    asp = {k: area_spans(k) for k in keys}
    rows = []
    if exhaustive:
        dxt = {}

        def DX(k):
            if k not in dxt:
                dxt[k] = _dx_table(vals, k)
            return dxt[k]

        trip = np.zeros((0, 3), dtype=int)
    for k, sp in asp.items():
        acc = _Acc()
        if exhaustive:
            _chen_dense(acc, sp._table, sp._table, sp._table, [(DX(k), DX(0))])
        for s, u, t in _chunks(*trip.T):
            dut = dx_shift(0, u, t)
            acc.add(
                sp.take(s, t) - sp.take(s, u) - sp.take(u, t)
                - dx_shift(k, s, u)[:, :, None] * dut[:, None, :]
            )
        rows.append(_row("delayed-chen2", f"v={k * h:.12g}", acc, S**2))
    if 0 in asp:
        acc = _Acc()
        for i, j in _chunks(pi, pj):
            acc.add(_geom_resid(asp[0].take(i, j), dx_shift(0, i, j)))
        rows.append(_row("geometric", "v=0", acc, S**2))
    for (k1, k2) in lift.volumes:
        vs = vol_spans((k1, k2))
        a1 = asp[k1] if k1 in asp else area_spans(k1)
        a2 = asp[k2] if k2 in asp else area_spans(k2)
        acc = _Acc()
        if exhaustive:
            V = vs._table
            _chen_dense(
                acc, V, V, V,
                [(_dense_shift(a1._table, k2), DX(0)), (DX(k1 + k2), a2._table)],
            )
        for s, u, t in _chunks(*trip.T):
            dut = dx_shift(0, u, t)
            acc.add(
                vs.take(s, t)
                - vs.take(s, u)
                - vs.take(u, t)
                - _shifted_take(a1, n, k2, s, u)[:, :, :, None] * dut[:, None, None, :]
                - dx_shift(k1 + k2, s, u)[:, :, None, None] * a2.take(u, t)[:, None, :, :]
            )
        rows.append(_row("delayed-chen3", f"v1={k1 * h:.12g},v2={k2 * h:.12g}", acc, S**3))
    if lift.from_interpolant:
        for kp in keys:
            # shift identity, with x2(v', v) folded directly from shifted streams
            acc = _Acc()
            for k in keys:

                def direct(s0, e, kp=kp, k=k):
                    a = shifted(dxc, kp + k, s0, e)
                    b = shifted(dxc, k, s0, e)
                    return fold_area(a, b, 0.5 * a[:, :, None] * b[:, None, :])[0]

                lhs_spans = _Spans(direct, n, (d, d))
                for i, j in _chunks(pi, pj):
                    acc.add(lhs_spans.take(i, j) - _shifted_take(asp[kp], n, k, i, j))
            rows.append(_row("shift", f"v'={kp * h:.12g}", acc, S**2))
    for w in keys:
        # product identity over pairs (v, v') of the difference set with v - v' = w
        acc = _Acc()
        for kp in keys:
            kv = kp + w
            if kv not in asp or -w not in asp:
                continue
            for i, j in _chunks(pi, pj):
                lhs = dx_shift(kv, i, j)[:, :, None] * dx_shift(kp, i, j)[:, None, :]
                rhs = _shifted_take(asp[w], n, kp, i, j) + np.swapaxes(
                    _shifted_take(asp[-w], n, kv, i, j), -1, -2
                )
                acc.add(lhs - rhs)
        rows.append(_row("product", f"v-v'={w * h:.12g}", acc, S**2))
    return rows


def _area_table(lift: DelayedLift, k):
    n, d = lift.n, lift.d
    tab = np.zeros((n + 1, n + 1, d, d))
    for i in range(n):
        tab[i, i:] = lift._area_fold(k, i, n)[0]
    return tab


def _volume_table(lift: DelayedLift, key):
    n, d = lift.n, lift.d
    tab = np.zeros((n + 1, n + 1, d, d, d))
    for i in range(n):
        tab[i, i:] = lift._volume_fold(key[0], key[1], i, n)[1]
    return tab


def delayed_spans(lift: DelayedLift) -> dict:
    """Dense span tables of every family, keyed ``("area", k)`` / ``("volume", (k1, k2))``.

    NaN marks spans touching off-grid cells.  Used for audits and fault injection.
    """
    if lift.n > DENSE_MAX_CELLS:
        raise ValueError(f"dense span tables limited to {DENSE_MAX_CELLS} cells")
    out = {("area", k): _area_table(lift, k) for k in lift.areas}
    out.update({("volume", key): _volume_table(lift, key) for key in lift.volumes})
    return out


def verify_hypotheses(lift, tables=None, seed: int = 0) -> List[dict]:
    """Audit the algebraic identities of a lift.

    Every identity is evaluated from span values obtained independently per
    starting point, over all ordered grid triples (all pairs for the
    geometric, shift and product identities).  When that exceeds
    ``EXHAUSTIVE_MAX_CHECKS`` a seeded random sample of ``SAMPLED_CHECKS``
    triples is used instead.

    Parameters
    ----------
    lift : RoughLift3 or DelayedLift
    tables : SpanTables or dict, optional
        Pre-computed (possibly deliberately perturbed) span tables; see
        :meth:`RoughLift3.spans` and :func:`delayed_spans`.
    seed : int
        Seed of the sampling generator.

    Returns
    -------
    list of dict
        One row per identity and family with keys ``identity, family,
        residual, scale, checks, passed``; ``passed`` means
        ``residual <= 1e-12 * scale``.
    """
    if isinstance(lift, DelayedLift):
        return _verify_delayed(lift, tables, seed)
    return _verify_plain(lift, tables, seed)


def inject_fault(tables, cell: int, eps: float = 1e-3):
    """Perturb the stored area of one cell in span tables (in place).

    The off-diagonal entry ``[0, 1]`` (or ``[0, 0]`` when ``d == 1``) of the
    area over ``cell..cell+1`` is shifted by ``eps``; every Chen check built on
    that cell then shows a residual of ``eps``.
    """
    if isinstance(tables, SpanTables):
        tab = tables.area
    else:
        tab = tables[("area", 0)]
    d = tab.shape[-1]
    idx = (0, 1) if d > 1 else (0, 0)
    tab[(cell, cell + 1) + idx] += eps
    return tables


# --------------------------------------------------------------------------
# CSV export
# --------------------------------------------------------------------------


def _write_cells(path, cells, offset=0):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        rank = cells.ndim - 1
        w.writerow(["cell"] + ["i", "j", "k"][:rank] + ["value"])
        for c in range(cells.shape[0]):
            for idx in np.ndindex(*cells.shape[1:]):
                val = cells[(c,) + idx]
                w.writerow([c + offset] + list(idx) + [f"{val:.17g}"])


def export_lift(lift, outdir) -> List[Path]:
    """Write ``area_v<k>.csv`` and ``volume_v1<k1>_v2<k2>.csv`` files.

    ``k`` are integer grid shifts; a plain lift writes ``area_v0.csv`` and
    ``volume_v10_v20.csv``.  Off-grid cells of delayed families are written
    as ``nan``.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = []
    if isinstance(lift, RoughLift3):
        areas = {0: lift.area_cells}
        vols = {(0, 0): lift.volume_cells}
    else:
        areas, vols = lift.areas, lift.volumes
    for k, cells in sorted(areas.items()):
        p = outdir / f"area_v{k}.csv"
        _write_cells(p, cells)
        files.append(p)
    for (k1, k2), cells in sorted(vols.items()):
        p = outdir / f"volume_v1{k1}_v2{k2}.csv"
        _write_cells(p, cells)
        files.append(p)
    return files
