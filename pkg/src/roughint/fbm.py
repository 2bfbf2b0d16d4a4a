"""Fractional Brownian motion: exact sampling and delayed-area statistics.

Sampling draws fractional Gaussian noise (the stationary increments) by
circulant embedding of its autocovariance

    gamma(k) = h^{2H} / 2 * (|k + 1|^{2H} - 2 |k|^{2H} + |k - 1|^{2H}),

falling back to a Cholesky factor of the Toeplitz covariance if the embedding
has negative eigenvalues.  The increments are accumulated over the whole
(possibly two-sided) grid and the path is pinned so that ``B_0 = 0``.

The Monte-Carlo helpers build delayed areas and volumes of the sampled paths
through :mod:`roughint.lift` and compare them with closed-form expectations
and with the expected moment scaling in the span length.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import EmbeddingFailed
from .increments import Grid, Path1
from .lift import fold_area, fold_volume, shifted

H_MIN, H_MAX = 0.25, 1.0


def check_hurst(H: float) -> float:
    H = float(H)
    if not H_MIN < H < H_MAX:
        raise ValueError(f"Hurst parameter must lie in (1/4, 1), got {H}")
    return H


@dataclass(frozen=True)
class FbmSpec:
    """Sampling request: ``d`` independent fBm components on ``grid``.

    The grid must contain the time origin as a grid point; values at negative
    times belong to the two-sided process.
    """

    H: float
    d: int
    grid: Grid
    seed: int = 0

    def __post_init__(self):
        check_hurst(self.H)
        if self.d < 1:
            raise ValueError("dimension must be at least 1")
        if self.grid.n < 2:
            raise ValueError("sampling needs at least two cells")
        if not self.grid.t0 <= 0.0 <= self.grid.t_end:
            raise ValueError("the grid must contain t = 0")
        self.grid.index_of(0.0)


def cov(s, t, H: float):
    """Covariance ``R_H(t, s) = (|t|^{2H} + |s|^{2H} - |t - s|^{2H}) / 2``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    e = 2.0 * H
    return 0.5 * (np.abs(t) ** e + np.abs(s) ** e - np.abs(t - s) ** e)


def fgn_autocov(n: int, H: float, h: float = 1.0) -> np.ndarray:
    """Autocovariance ``gamma(0..n-1)`` of fractional Gaussian noise with step ``h``."""
    k = np.arange(n, dtype=float)
    e = 2.0 * H
    return 0.5 * h**e * (np.abs(k + 1) ** e - 2 * np.abs(k) ** e + np.abs(k - 1) ** e)


@lru_cache(maxsize=64)
def _circulant_eigs(n: int, H: float, h: float):
    """Square roots of the circulant eigenvalues, or None if not PSD."""
    g = fgn_autocov(n + 1, H, h)
    row = np.concatenate([g, g[-2:0:-1]])  # length 2n
    lam = np.fft.fft(row).real
    tol = 1e-10 * max(1.0, float(np.abs(lam).max()))
    if lam.min() < -tol:
        return None
    out = np.sqrt(np.clip(lam, 0.0, None) / (2 * n))
    out.setflags(write=False)
    return out


@lru_cache(maxsize=16)
def _toeplitz_chol(n: int, H: float, h: float):
    c = scipy.linalg.toeplitz(fgn_autocov(n, H, h))
    try:
        L = np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        return None
    L.setflags(write=False)
    return L


def sample_fgn(n: int, H: float, h: float, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """``size`` independent fGn sequences of length ``n``; shape (size, n)."""
    sq = _circulant_eigs(n, H, h)
    if sq is not None:
        z = rng.standard_normal((size, 2, 2 * n))
        w = np.fft.fft(sq * (z[:, 0] + 1j * z[:, 1]), axis=-1)
        return w.real[:, :n]
    L = _toeplitz_chol(n, H, h)
    if L is None:
        raise EmbeddingFailed(
            f"circulant embedding and Cholesky both failed (n={n}, H={H})"
        )
    return rng.standard_normal((size, n)) @ L.T


def _sample_values(spec: FbmSpec, rng: np.random.Generator) -> np.ndarray:
    g = spec.grid
    noise = sample_fgn(g.n, spec.H, g.h, rng, spec.d)  # (d, n)
    b = np.zeros((g.n + 1, spec.d))
    np.cumsum(noise.T, axis=0, out=b[1:])
    return b - b[g.index_of(0.0)]


def sample_fbm(spec: FbmSpec) -> List[Path1]:
    """Sample ``d`` independent fBm components, one :class:`Path1` each.

    Deterministic given ``spec.seed``.
    """
    vals = _sample_values(spec, np.random.default_rng(spec.seed))
    return [Path1(spec.grid, vals[:, k]) for k in range(spec.d)]


def sample_fbm_path(spec: FbmSpec) -> Path1:
    """Same draw as :func:`sample_fbm`, stacked into one ``d``-dimensional path."""
    return Path1(spec.grid, _sample_values(spec, np.random.default_rng(spec.seed)))


# --------------------------------------------------------------------------
# closed-form trace of the delayed diagonal area
# --------------------------------------------------------------------------


def expected_diag_area(v1: float, tau: float, H: float) -> float:
    """Expected diagonal entry of the delayed area ``B2(v1)`` over ``[0, tau]``.

    * ``v1 = 0``: ``tau^{2H} / 2``
    * ``v1 > 0``: ``-H v1^{2H-1} tau + ((tau + v1)^{2H} - v1^{2H}) / 2``
    * ``v1 < 0``: ``H (-v1)^{2H-1} tau + (|tau + v1|^{2H} - (-v1)^{2H}) / 2``
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    e = 2.0 * H
    if v1 == 0:
        return 0.5 * tau**e
    if v1 > 0:
        return -H * v1 ** (e - 1) * tau + 0.5 * ((tau + v1) ** e - v1**e)
    w = -v1
    return H * w ** (e - 1) * tau + 0.5 * (abs(tau + v1) ** e - w**e)


# --------------------------------------------------------------------------
# Monte-Carlo drivers
# --------------------------------------------------------------------------


@dataclass
class McReport:
    H: float
    v1: float
    v2: float
    tau: float
    N: int
    mean: float
    stderr: float
    closed_form: Optional[float]
    z: Optional[float]
    level: Optional[int] = None
    slope: Optional[float] = None

    def row(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _area_sample(args):
    """Diagonal delayed areas over [0, tau] for samples ``i0..i1`` (worker body)."""
    H, k, grid, origin, m, d, seed, i0, i1 = args
    out = np.empty(i1 - i0)
    for i in range(i0, i1):
        rng = np.random.default_rng(seed + i)
        vals = _sample_values(FbmSpec(H, d, grid, seed + i), rng)
        dx = np.diff(vals, axis=0)
        a = shifted(dx, k, origin, origin + m)
        b = dx[origin : origin + m]
        # diagonal entries only: fold each coordinate as a 1-d stream
        area = 0.5 * a * b + np.cumsum(a, axis=0) * b - a * b
        out[i - i0] = float(np.mean(area.sum(axis=0)))
    return out


def _run(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


def _split(N: int, workers: int):
    parts = max(1, min(N, 4 * max(workers, 1)))
    edges = np.linspace(0, N, parts + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def mc_validate_area(
    H: float,
    v1: float,
    N: int,
    n: int,
    tau: float = 1.0,
    seed: int = 0,
    d: int = 1,
    workers: int = 1,
) -> McReport:
    """Monte-Carlo mean of the delayed diagonal area versus its closed form.

    The driver is sampled on a grid of step ``tau / n`` covering ``[-v1, tau]``
    (``v1 > 0``) or ``[0, tau - v1]`` (``v1 < 0``).  Per sample the diagonal
    entries of ``x2(v1, 0)`` over ``[0, tau]`` are averaged over the ``d``
    coordinates; ``z = |mean - closed_form| / stderr``.
    """
    check_hurst(H)
    if N < 2:
        raise ValueError("need at least two samples")
    h = tau / n
    grid0 = Grid(0.0, h, n)
    k = grid0.steps(v1)
    lo = max(k, 0)
    hi = max(-k, 0)
    grid = Grid(-lo * h, h, n + lo + hi)
    tasks = [(H, k, grid, lo, n, d, seed, a, b) for a, b in _split(N, workers)]
    vals = np.concatenate(_run(_area_sample, tasks, workers))
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(N))
    cf = expected_diag_area(v1, tau, H)
    z = abs(mean - cf) / se if se > 0 else float("inf")
    return McReport(H, v1, 0.0, tau, N, mean, se, cf, z)


def _moment_sample(args):
    """Squared norms of one delayed area/volume over [0, tau] (worker body)."""
    level, H, d, k1, k2, cells, tau, seed, i0, i1 = args
    h = tau / cells
    lo = max(k1 + k2, k2, 0)
    hi = max(-min(k1 + k2, k2, 0), 0)
    grid = Grid(-lo * h, h, cells + lo + hi)
    out = np.empty(i1 - i0)
    for i in range(i0, i1):
        rng = np.random.default_rng(seed + i)
        vals = _sample_values(FbmSpec(H, d, grid, seed + i), rng)
        dx = np.diff(vals, axis=0)
        a = shifted(dx, k1 + k2, lo, lo + cells)
        b = shifted(dx, k2, lo, lo + cells)
        c2ab = 0.5 * a[:, :, None] * b[:, None, :]
        if level == 2:
            t, _ = fold_area(a, b, c2ab)
        else:
            c = dx[lo : lo + cells]
            c2bc = 0.5 * b[:, :, None] * c[:, None, :]
            c3 = c2ab[:, :, :, None] * c[:, None, None, :] / 3.0
            _, t, _ = fold_volume(a, b, c, c2ab, c2bc, c3)
        out[i - i0] = float(np.sum(t[-1] ** 2))
    return out


def mc_scaling_exponent(
    level: int,
    H: float,
    v1: float = 0.0,
    v2: float = 0.0,
    taus: Sequence[float] = tuple(2.0 ** -k for k in range(2, 8)),
    N: int = 500,
    seed: int = 0,
    d: int = 2,
    cells: int = 16,
    workers: int = 1,
):
    """Slope of ``log E|B^level_{0,tau}(v1, v2)|^2`` against ``log tau``.

    For every span ``tau`` a fresh grid with ``cells`` cells of step
    ``tau / cells`` is sampled (so the delays must be multiples of each step).
    Level 2 measures the area ``x2(v1, v2)`` (the ``v1`` stream shifted by
    ``v1 + v2`` against the ``v2`` stream); level 3 the volume
    ``x3(v1, v2)``.  Span ``j`` uses the sample seeds ``seed + j * N + i`` so
    that the spans are statistically independent.

    Returns
    -------
    slope : float
    reports : list of McReport
        One per span, ``mean`` and ``stderr`` of ``|B|^2``.
    """
    check_hurst(H)
    if level not in (2, 3):
        raise ValueError("level must be 2 or 3")
    if level == 3 and v1 + v2 < 0:
        raise ValueError("volume delays need v1 + v2 >= 0")
    taus = [float(t) for t in taus]
    moments = np.empty((N, len(taus)))
    for j, tau in enumerate(taus):
        g = Grid(0.0, tau / cells, cells)
        k1, k2 = g.steps(v1), g.steps(v2)
        tasks = [
            (level, H, d, k1, k2, cells, tau, seed + j * N, a, b)
            for a, b in _split(N, workers)
        ]
        moments[:, j] = np.concatenate(_run(_moment_sample, tasks, workers))
    means = moments.mean(axis=0)
    ses = moments.std(axis=0, ddof=1) / np.sqrt(N)
    slope = float(np.polyfit(np.log(taus), np.log(means), 1)[0])
    reports = []
    for tau, m, s in zip(taus, means, ses):
        reports.append(
            McReport(H, v1, v2, tau, N, float(m), float(s), None, None, level, slope)
        )
    return slope, reports
