"""Weakly controlled paths: remainders, semi-norm, composition and integration.

A path ``z`` is controlled by a lift ``(x, x2, x3)`` when

    (delta z)^i_{st}    = zeta1_s^{ij} (delta x^j)_{st} + zeta2_s^{ijk} (x2_{st})^{kj} + r^i_{st}
    (delta zeta1)^{ij}_{st} = zeta2_s^{ijk} (delta x^k)_{st} + rho^{ij}_{st}

with remainders of Hölder order ``3 kappa`` and ``2 kappa``.  Note the
transposed contraction against the area.  ``z`` may carry any value shape
``S``; then ``zeta1`` has shape ``S + (d,)`` and ``zeta2`` ``S + (d, d)``.

Remainders are always obtained as residuals of these decompositions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch
from .increments import DENSE_MAX_CELLS, Inc2, Path1, _entry_norm, holder_norm2
from .lift import RoughLift3

DEFAULT_KAPPA_RATIO = 0.95
GERM_SAMPLES = 2000


@dataclass(frozen=True)
class SmoothMap:
    """A map with first and second derivatives.

    ``eval(y)`` returns shape ``O``; ``jac(y)`` shape ``O + (l,)``;
    ``hess(y)`` shape ``O + (l, l)``.  :class:`~roughint.fields.VectorField`
    follows the same protocol.
    """

    f: Callable = field(repr=False)
    df: Callable = field(repr=False)
    d2f: Callable = field(repr=False)
    name: str = "map"

    def eval(self, y):
        return np.asarray(self.f(np.asarray(y, dtype=float)), dtype=float)

    def jac(self, y):
        return np.asarray(self.df(np.asarray(y, dtype=float)), dtype=float)

    def hess(self, y):
        return np.asarray(self.d2f(np.asarray(y, dtype=float)), dtype=float)


@dataclass(frozen=True)
class ControlledPath:
    """A path with its controlling coefficients relative to ``lift``.

    Attributes
    ----------
    z : Path1
        Values, shape ``(n + 1,) + S``.
    zeta1 : Path1
        Shape ``(n + 1,) + S + (d,)``.
    zeta2 : Path1
        Shape ``(n + 1,) + S + (d, d)``.
    lift : RoughLift3
    kappa : float
        Hölder exponent used by the semi-norm.
    """

    z: Path1
    zeta1: Path1
    zeta2: Path1
    lift: RoughLift3 = field(repr=False)
    kappa: float = 0.3

    def __post_init__(self):
        d = self.lift.d
        S = self.z.shape
        if self.zeta1.shape != S + (d,) or self.zeta2.shape != S + (d, d):
            raise DimensionMismatch(
                f"coefficients of a path with shape {S} need shapes {S + (d,)} and "
                f"{S + (d, d)}, got {self.zeta1.shape} and {self.zeta2.shape}"
            )
        if self.z.grid != self.lift.grid:
            raise DimensionMismatch("controlled path and lift live on different grids")

    @property
    def shape(self):
        return self.z.shape

    @property
    def grid(self):
        return self.z.grid

    @classmethod
    def constant(cls, value, lift: RoughLift3, kappa: Optional[float] = None):
        """Constant path with zero coefficients."""
        value = np.asarray(value, dtype=float)
        n, d = lift.n, lift.d
        z = np.broadcast_to(value, (n + 1,) + value.shape)
        return cls(
            Path1(lift.grid, z),
            Path1(lift.grid, np.zeros((n + 1,) + value.shape + (d,))),
            Path1(lift.grid, np.zeros((n + 1,) + value.shape + (d, d))),
            lift,
            _kappa(lift, kappa),
        )

    @classmethod
    def of_driver(cls, lift: RoughLift3, kappa: Optional[float] = None):
        """The driver ``x`` itself: ``zeta1 = identity``, ``zeta2 = 0``."""
        n, d = lift.n, lift.d
        eye = np.broadcast_to(np.eye(d), (n + 1, d, d))
        return cls(
            lift.x,
            Path1(lift.grid, eye),
            Path1(lift.grid, np.zeros((n + 1, d, d, d))),
            lift,
            _kappa(lift, kappa),
        )

    def scaled(self, c: float) -> "ControlledPath":
        return ControlledPath(
            Path1(self.grid, c * self.z.values),
            Path1(self.grid, c * self.zeta1.values),
            Path1(self.grid, c * self.zeta2.values),
            self.lift,
            self.kappa,
        )


def _kappa(lift, kappa):
    if kappa is not None:
        return float(kappa)
    if lift.gamma is not None:
        return DEFAULT_KAPPA_RATIO * lift.gamma
    return 0.3


def _remainder_row(z: ControlledPath, s: int):
    """Remainders ``r[s, t]`` and ``rho[s, t]`` for ``t = s..n``."""
    area, _, dx = z.lift._fold_from(s, z.lift.n)
    zv, z1, z2 = z.z.values, z.zeta1.values, z.zeta2.values
    dz = zv[s:] - zv[s]
    r = dz - np.einsum("...j,tj->t...", z1[s], dx) - np.einsum("...jk,tkj->t...", z2[s], area)
    rho = (z1[s:] - z1[s]) - np.einsum("...k,tk->t...", z2[s], dx)
    return r, rho


def remainders(z: ControlledPath):
    """Dense remainders ``(r, rho)`` as :class:`Inc2` (entries with ``s <= t``)."""
    n = z.lift.n
    if n > DENSE_MAX_CELLS:
        raise ValueError(f"dense remainders are limited to {DENSE_MAX_CELLS} cells")
    d = z.lift.d
    S = z.shape
    r = np.zeros((n + 1, n + 1) + S)
    rho = np.zeros((n + 1, n + 1) + S + (d,))
    for s in range(n):
        r[s, s:], rho[s, s:] = _remainder_row(z, s)
    return Inc2(z.grid, r), Inc2(z.grid, rho)


def remainder_norms(z: ControlledPath, kappa: Optional[float] = None):
    """Discrete ``(2 kappa)``-norm of ``rho`` and ``(3 kappa)``-norm of ``r``."""
    kappa = z.kappa if kappa is None else kappa
    n, h = z.lift.n, z.grid.h
    nr = nrho = 0.0
    for s in range(n):
        r, rho = _remainder_row(z, s)
        dt = np.arange(1, n - s + 1) * h
        nr = max(nr, float(np.max(_entry_norm(r[1:], 1) / dt ** (3 * kappa))))
        nrho = max(nrho, float(np.max(_entry_norm(rho[1:], 1) / dt ** (2 * kappa))))
    return nrho, nr


def controlled_norm(z: ControlledPath, kappa: Optional[float] = None, parts: bool = False):
    """Sum of the seven semi-norm parts of a controlled path.

    ``kappa``-norm of ``z``; sup and ``kappa``-norms of ``zeta1`` and
    ``zeta2``; ``2 kappa``-norm of ``rho``; ``3 kappa``-norm of ``r``.  With
    ``parts=True`` the individual terms are returned as a dict.
    """
    kappa = z.kappa if kappa is None else kappa
    nrho, nr = remainder_norms(z, kappa)
    terms = {
        "z": holder_norm2(z.z, kappa),
        "zeta1_sup": float(np.max(_entry_norm(z.zeta1.values, 1))),
        "zeta1": holder_norm2(z.zeta1, kappa),
        "zeta2_sup": float(np.max(_entry_norm(z.zeta2.values, 1))),
        "zeta2": holder_norm2(z.zeta2, kappa),
        "rho": nrho,
        "r": nr,
    }
    total = float(sum(terms.values()))
    return (total, terms) if parts else total


def compose(phi, z: ControlledPath) -> ControlledPath:
    """Controlled structure of ``phi(z)``.

    ``zeta1_hat = D phi(z) zeta1`` and
    ``zeta2_hat^{jk} = D phi(z) zeta2^{jk} + D^2 phi(z)[zeta1^j, zeta1^k]``.
    """
    S = z.shape
    ls = len(S)
    zv = z.z.values
    n1 = zv.shape[0]
    f0 = phi.eval(zv[0])
    O = f0.shape
    out = np.empty((n1,) + O)
    z1 = np.empty((n1,) + O + (z.lift.d,))
    z2 = np.empty((n1,) + O + (z.lift.d, z.lift.d))
    sub = "abcdefgh"[:ls]
    sub2 = "mnopqrst"[:ls]
    for t in range(n1):
        y = zv[t]
        jac = phi.jac(y)
        hess = phi.hess(y)
        if jac.shape != O + S or hess.shape != O + S + S:
            raise DimensionMismatch(
                f"map derivatives have shapes {jac.shape}, {hess.shape}; expected "
                f"{O + S} and {O + S + S}"
            )
        out[t] = f0 if t == 0 else phi.eval(y)
        a1 = z.zeta1.values[t]
        a2 = z.zeta2.values[t]
        z1[t] = np.tensordot(jac, a1, axes=ls)
        z2[t] = np.tensordot(jac, a2, axes=ls) + np.einsum(
            f"...{sub}{sub2},{sub}j,{sub2}k->...jk", hess, a1, a1
        )
    g = z.grid
    return ControlledPath(Path1(g, out), Path1(g, z1), Path1(g, z2), z.lift, z.kappa)


def germ_cells(m, mu1, mu2, dx, x2, x3):
    """Third-order germ ``m dx + mu1 . x2^T + mu2 . x3^T`` per cell.

    ``m`` (c, l, d), ``mu1`` (c, l, d, d), ``mu2`` (c, l, d, d, d) are
    coefficient values at the left end of each cell/span; ``dx``, ``x2``,
    ``x3`` the matching driver increments, areas and volumes.
    """
    out = np.einsum("cij,cj->ci", m, dx)
    out += np.einsum("cijk,ckj->ci", mu1, x2)
    out += np.einsum("cijab,cbaj->ci", mu2, x3)
    return out


def integrate(m: ControlledPath, lift: Optional[RoughLift3] = None, a=None, kappa=None):
    """Rough integral ``int m dx`` by sewing the third-order germ on the finest grid.

    ``m`` has value shape ``(l, d)`` with coefficients ``mu1 = zeta1`` and
    ``mu2 = zeta2``.  The germ

        Xi^i_{st} = m_s^{ij} dx^j + mu1_s^{ijk} (x2_st)^{kj} + mu2_s^{ijk1k2} (x3_st)^{k2k1j}

    is summed over the finest cells.  The result is controlled with
    ``zeta1 = m`` and ``zeta2 = mu1``.

    Parameters
    ----------
    a : array_like, optional
        Value of the integral at the first grid point (default 0).
    """
    lift = m.lift if lift is None else lift
    if len(m.shape) != 2 or m.shape[1] != lift.d:
        raise DimensionMismatch(f"integrand must have shape (l, {lift.d}), got {m.shape}")
    l = m.shape[0]
    n = lift.n
    cells = germ_cells(
        m.z.values[:-1],
        m.zeta1.values[:-1],
        m.zeta2.values[:-1],
        lift.dx_cells,
        lift.area_cells,
        lift.volume_cells,
    )
    vals = np.zeros((n + 1, l))
    np.cumsum(cells, axis=0, out=vals[1:])
    if a is not None:
        vals += np.asarray(a, dtype=float)
    g = lift.grid
    return ControlledPath(
        Path1(g, vals), m.z, m.zeta1, lift, m.kappa if kappa is None else kappa
    )


def riemann_integral(m: ControlledPath, stride: int) -> np.ndarray:
    """Germ sum over the sub-grid with every ``stride``-th point.

    Returns the integral values at the coarse points (starting from 0).
    Coefficients are taken at the left end of each coarse span and the span
    values come from the Chen combination of the finest cells.
    """
    coarse = m.lift.coarsen(stride)
    idx = slice(None, None, stride)
    cells = germ_cells(
        m.z.values[idx][:-1],
        m.zeta1.values[idx][:-1],
        m.zeta2.values[idx][:-1],
        coarse.dx_cells,
        coarse.area_cells,
        coarse.volume_cells,
    )
    out = np.zeros((coarse.n + 1, m.shape[0]))
    np.cumsum(cells, axis=0, out=out[1:])
    return out


def germ_defect(m_vals, mu1_vals, mu2_vals, lift: RoughLift3, mu: float,
                samples: int = GERM_SAMPLES, seed: int = 0) -> float:
    """Surrogate ``(mu/2, mu/2)`` norm of ``delta Xi`` on sampled grid triples.

    This measures how far the germ is from being additive, i.e. the size of
    the sewing correction that the finest-grid sum discards.
    """
    n = lift.n
    if n < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    p = n + 1
    total = p * (p - 1) * (p - 2) // 6
    if total <= samples:
        trip = np.array(list(itertools.combinations(range(p), 3)))
    else:
        raw = np.sort(rng.integers(0, p, size=(4 * samples, 3)), axis=1)
        trip = raw[(raw[:, 0] < raw[:, 1]) & (raw[:, 1] < raw[:, 2])][:samples]
    s, u, t = trip.T

    def xi(i, j):
        return germ_cells(
            m_vals[i], mu1_vals[i], mu2_vals[i], lift.dx(i, j), lift.area(i, j), lift.volume(i, j)
        )

    dxi = xi(s, t) - xi(s, u) - xi(u, t)
    h = lift.grid.h
    den = ((u - s) * h) ** (mu / 2) * ((t - u) * h) ** (mu / 2)
    return float(np.max(_entry_norm(dxi, 1) / den))
