"""Increments on a uniform grid: the delta operator, Hölder norms and sewing.

A *k-increment* is a function of ``k + 1`` time arguments that vanishes
whenever two adjacent arguments coincide.  On a uniform grid with points
``t_0 < ... < t_n`` we store

* 0-increments (paths) as :class:`Path1`, an array indexed ``(i, *shape)``;
* 1-increments as :class:`Inc2`, a dense array indexed ``(i, j, *shape)``;
* 2-increments as :class:`Inc3`, a dense array indexed ``(i, u, j, *shape)``.

Only ordered entries (``i < j`` resp. ``i < u < j``) carry meaning for
:class:`Inc2` and :class:`Inc3`; the remaining entries are whatever the
producing formula yields and are ignored by every norm and check here.

Dense storage is quadratic (cubic) in the number of cells, so it is limited to
``n <= DENSE_MAX_CELLS`` for :class:`Inc2` and ``n <= DENSE3_MAX_CELLS`` for
:class:`Inc3`.  Large grids go through the cell-level lift tables instead.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from .errors import DimensionMismatch, NotClosed

DENSE_MAX_CELLS = 512
DENSE3_MAX_CELLS = 256

# relative tolerance used to decide whether a 3-increment is closed
CLOSED_RTOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform time grid ``t_i = t0 + i * h`` for ``i = 0..n``."""

    t0: float
    h: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValueError(f"grid step must be positive, got {self.h}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"grid needs at least one cell, got n={self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def uniform(cls, a: float, b: float, n: int) -> "Grid":
        """Grid with ``n`` cells covering ``[a, b]``."""
        if not b > a:
            raise ValueError(f"empty interval [{a}, {b}]")
        return cls(a, (b - a) / n, n)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.n + 1)

    @property
    def t_end(self) -> float:
        return self.t0 + self.h * self.n

    def __len__(self):
        return self.n + 1

    def steps(self, v: float, rtol: float = 1e-9) -> int:
        """Return the integer ``k`` with ``v = k * h``, or raise ``ValueError``."""
        k = int(round(v / self.h))
        if abs(k * self.h - v) > rtol * max(self.h, abs(v)):
            raise ValueError(f"{v} is not an integer multiple of the step {self.h}")
        return k

    def index_of(self, t: float) -> int:
        """Index of the grid point at time ``t`` (must lie on the grid)."""
        i = self.steps(t - self.t0)
        if not 0 <= i <= self.n:
            raise ValueError(f"time {t} outside [{self.t0}, {self.t_end}]")
        return i

    def refine(self, factor: int) -> "Grid":
        """Grid over the same interval with ``factor`` times as many cells."""
        return Grid(self.t0, self.h / factor, self.n * factor)

    def sub(self, i0: int, i1: int) -> "Grid":
        """Sub-grid spanning points ``i0..i1``."""
        return Grid(self.t0 + i0 * self.h, self.h, i1 - i0)


@dataclass(frozen=True)
class Path1:
    """A path sampled on every point of ``grid``.

    Attributes
    ----------
    grid : Grid
    values : ndarray, shape (n + 1, *shape)
        Values at the grid points.  Vector paths have ``shape == (dim,)``,
        matrix-valued coefficient paths have ``shape == (l, d)`` etc.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.n + 1:
            raise DimensionMismatch(
                f"path has {v.shape[0]} samples, grid has {self.grid.n + 1} points"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape[1:]

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def increments(self) -> np.ndarray:
        """Cell increments ``x_{i+1} - x_i``, shape (n, *shape)."""
        return np.diff(self.values, axis=0)

    def sub(self, i0: int, i1: int) -> "Path1":
        return Path1(self.grid.sub(i0, i1), self.values[i0 : i1 + 1])

    def to_csv(self, path: Union[str, Path]) -> None:
        write_path_csv(path, self)

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "Path1":
        return read_path_csv(path)


@dataclass(frozen=True)
class Inc2:
    """Dense 1-increment ``g_{t_i t_j}``; ``values`` has shape (n+1, n+1, *shape)."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        m = self.grid.n + 1
        if v.shape[:2] != (m, m):
            raise DimensionMismatch(f"Inc2 needs leading shape {(m, m)}, got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape[2:]

    def __getitem__(self, ij):
        return self.values[ij]

    def __add__(self, other: "Inc2") -> "Inc2":
        return Inc2(self.grid, self.values + other.values)

    def __sub__(self, other: "Inc2") -> "Inc2":
        return Inc2(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "Inc2":
        return Inc2(self.grid, c * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True)
class Inc3:
    """Dense 2-increment ``h_{t_i t_u t_j}``; shape (n+1, n+1, n+1, *shape)."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        m = self.grid.n + 1
        if v.shape[:3] != (m, m, m):
            raise DimensionMismatch(f"Inc3 needs leading shape {(m, m, m)}, got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape[3:]

    def __getitem__(self, idx):
        return self.values[idx]


def _check_dense(n: int, limit: int, what: str) -> None:
    if n > limit:
        raise ValueError(
            f"dense {what} storage is limited to {limit} cells (got {n}); "
            "use the cell-level lift tables instead"
        )


def ordered_pairs(n: int) -> np.ndarray:
    """Boolean mask (n+1, n+1) of ordered pairs ``i < j``."""
    i = np.arange(n + 1)
    return i[:, None] < i[None, :]


def ordered_triples(n: int) -> np.ndarray:
    """Boolean mask (n+1,)*3 of ordered triples ``i < u < j``."""
    i = np.arange(n + 1)
    return (i[:, None, None] < i[None, :, None]) & (i[None, :, None] < i[None, None, :])


def _entry_norm(a: np.ndarray, lead: int) -> np.ndarray:
    """Euclidean (Frobenius) norm over the trailing coordinate axes."""
    if a.ndim == lead:
        return np.abs(a)
    return np.sqrt(np.sum(a * a, axis=tuple(range(lead, a.ndim))))


def delta1(g: Path1) -> Inc2:
    """``(delta g)_{st} = g_t - g_s`` on every grid pair."""
    _check_dense(g.grid.n, DENSE_MAX_CELLS, "Inc2")
    v = g.values
    return Inc2(g.grid, v[None, :] - v[:, None])


def delta2(h: Inc2) -> Inc3:
    """``(delta h)_{sut} = h_{st} - h_{su} - h_{ut}`` on every grid triple."""
    _check_dense(h.grid.n, DENSE3_MAX_CELLS, "Inc3")
    v = h.values
    # axes: s -> 0, u -> 1, t -> 2
    out = v[:, None, :] - v[:, :, None] - v[None, :, :]
    return Inc3(h.grid, out)


def holder_norm2(f: Union[Inc2, Path1], mu: float) -> float:
    """Discrete ``sup |f_{st}| / |t - s|^mu`` over ordered grid pairs.

    A :class:`Path1` is measured through its increment ``delta1``.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if isinstance(f, Path1):
        v = f.values
        n = f.grid.n
        h = f.grid.h
        best = 0.0
        # loop over lags to avoid the dense n^2 table for long paths
        for lag in range(1, n + 1):
            d = _entry_norm(v[lag:] - v[:-lag], 1)
            best = max(best, float(d.max()) / (lag * h) ** mu)
        return best
    n = f.grid.n
    mask = ordered_pairs(n)
    idx = np.arange(n + 1)
    dt = np.abs(idx[None, :] - idx[:, None]) * f.grid.h
    num = _entry_norm(f.values, 2)[mask]
    if num.size == 0:
        return 0.0
    return float(np.max(num / dt[mask] ** mu))


def holder_norm3(h: Inc3, gamma: float, rho: float = None) -> float:
    """Discrete ``sup |h_{sut}| / (|u - s|^gamma |t - u|^rho)`` over ordered triples.

    With ``rho`` omitted, ``gamma`` is read as a total exponent ``mu`` and the
    split ``(mu/2, mu/2)`` is used.  This single-split quantity bounds the
    infimum-over-decompositions norm from above.
    """
    if rho is None:
        gamma, rho = gamma / 2.0, gamma / 2.0
    if gamma <= 0 or rho <= 0:
        raise ValueError("exponents must be positive")
    n = h.grid.n
    mask = ordered_triples(n)
    idx = np.arange(n + 1) * h.grid.h
    dsu = np.abs(idx[None, :, None] - idx[:, None, None])
    dut = np.abs(idx[None, None, :] - idx[None, :, None])
    den = (dsu ** gamma) * (dut ** rho)
    num = _entry_norm(h.values, 3)
    if not mask.any():
        return 0.0
    return float(np.max(num[mask] / den[mask]))


def sew_cells(cells: np.ndarray) -> np.ndarray:
    """Cumulative sums of cell values: entry ``j`` is ``sum_{k<j} cells[k]``."""
    cells = np.asarray(cells, dtype=float)
    out = np.zeros((cells.shape[0] + 1,) + cells.shape[1:])
    np.cumsum(cells, axis=0, out=out[1:])
    return out


def sew(germ: Inc2) -> Inc2:
    """Finest-partition sum ``S(g)_{t_i t_j} = sum_{k=i}^{j-1} g_{t_k t_{k+1}}``.

    The result is additive (``delta2(sew(g)) == 0``) by construction.
    """
    n = germ.grid.n
    k = np.arange(n)
    cum = sew_cells(germ.values[k, k + 1])
    return Inc2(germ.grid, cum[None, :] - cum[:, None])


def lambda_grid(h: Inc3, rtol: float = CLOSED_RTOL) -> Inc2:
    """Discrete sewing inverse: the unique ``g`` with ``delta2(g) = h`` and zero cells.

    ``g_{t_i t_j} = sum_{c=i+1}^{j-1} h_{t_i t_c t_{c+1}}``, which is the
    recursion ``g_{i,j+1} = g_{i,j} + g_{j,j+1} + h_{i,j,j+1}`` with
    ``g_{j,j+1} = 0``.

    Raises
    ------
    NotClosed
        If ``delta2(g)`` differs from ``h`` on some ordered triple by more than
        ``rtol * max|h|``, i.e. ``h`` is not the coboundary of any 1-increment.
    """
    n = h.grid.n
    v = h.values
    c = np.arange(n)
    cells = v[:, c, c + 1]  # (n+1, n, *shape): h_{i, c, c+1}
    keep = c[None, :] > np.arange(n + 1)[:, None]
    cells = np.where(keep.reshape(keep.shape + (1,) * (cells.ndim - 2)), cells, 0.0)
    g = np.zeros((n + 1, n + 1) + h.shape)
    np.cumsum(cells, axis=1, out=g[:, 1:])
    g = np.where(ordered_pairs(n).reshape((n + 1, n + 1) + (1,) * len(h.shape)), g, 0.0)
    out = Inc2(h.grid, g)

    mask = ordered_triples(n)
    if mask.any():
        resid = _entry_norm(delta2(out).values - v, 3)[mask]
        scale = float(np.max(_entry_norm(v, 3)[mask]))
        err = float(resid.max())
        if err > rtol * max(scale, np.finfo(float).tiny):
            raise NotClosed(
                f"3-increment is not closed: residual {err:.3e} vs scale {scale:.3e}"
            )
    return out


def write_path_csv(path: Union[str, Path], x: Path1) -> None:
    """Write ``x`` as CSV with header ``t,x1,...,xd`` and 17 significant digits."""
    vals = x.values.reshape(x.grid.n + 1, -1)
    t = x.times
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{k + 1}" for k in range(vals.shape[1])])
        for ti, row in zip(t, vals):
            w.writerow([f"{ti:.17g}"] + [f"{v:.17g}" for v in row])


def read_path_csv(path: Union[str, Path]) -> Path1:
    """Read a path written by :func:`write_path_csv` (the grid must be uniform)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    n = len(t) - 1
    if n < 1:
        raise ValueError(f"{path}: a path needs at least two rows")
    h = (t[-1] - t[0]) / n
    if not np.allclose(np.diff(t), h, rtol=1e-9, atol=1e-12 * max(1.0, abs(h))):
        raise ValueError(f"{path}: time column is not a uniform grid")
    return Path1(Grid(t[0], h, n), data[:, 1:])
