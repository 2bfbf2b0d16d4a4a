"""Coefficient fields with first and second derivatives, and a named catalog.

A :class:`VectorField` ``sigma: R^l -> R^{l x d}`` provides

* ``eval(y)``  -> (l, d)
* ``jac(y)``   -> (l, d, l),    ``jac[i, j, m] = d sigma^{ij} / d y^m``
* ``hess(y)``  -> (l, d, l, l), ``hess[i, j, m, p] = d^2 sigma^{ij} / d y^m d y^p``

A :class:`DelayVectorField` ``sigma: (R^n)^{q+1} -> R^{n x d}`` takes the
stacked arguments ``w = (y_t, y_{t-r_1}, ..., y_{t-r_q})`` with shape
``(q + 1, n)`` and provides per-slot partials

* ``partial(w)`` -> (n, d, q+1, n),            ``[a, j, i', b] = d sigma^{aj} / d w_{i'}^b``
* ``hess(w)``    -> (n, d, q+1, n, q+1, n)

Derivatives that are not supplied are replaced by central finite differences
with step ``FD_STEP``; such fields carry ``uses_fd = True`` so reports can
flag them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DimensionMismatch

FD_STEP = 1e-5


def _fd_jac(f, y, step=FD_STEP):
    """Central differences of ``f`` with respect to every entry of ``y``."""
    y = np.asarray(y, dtype=float)
    f0 = np.asarray(f(y))
    out = np.empty(f0.shape + y.shape)
    for idx in np.ndindex(*y.shape):
        e = np.zeros_like(y)
        e[idx] = step
        out[(Ellipsis,) + idx] = (np.asarray(f(y + e)) - np.asarray(f(y - e))) / (2 * step)
    return out


@dataclass(frozen=True)
class VectorField:
    """Smooth coefficient ``sigma: R^l -> R^{l x d}`` with derivatives."""

    l: int
    d: int
    f: Callable = field(repr=False)
    df: Optional[Callable] = field(default=None, repr=False)
    d2f: Optional[Callable] = field(default=None, repr=False)
    name: str = "custom"

    @property
    def uses_fd(self) -> bool:
        return self.df is None or self.d2f is None

    def eval(self, y) -> np.ndarray:
        out = np.asarray(self.f(np.asarray(y, dtype=float)), dtype=float)
        if out.shape != (self.l, self.d):
            raise DimensionMismatch(f"field {self.name} returned shape {out.shape}")
        return out

    def jac(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.df is not None:
            return np.asarray(self.df(y), dtype=float)
        return _fd_jac(self.eval, y)

    def hess(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.d2f is not None:
            return np.asarray(self.d2f(y), dtype=float)
        return _fd_jac(self.jac, y)

    def __call__(self, y):
        return self.eval(y)


@dataclass(frozen=True)
class DelayVectorField:
    """Coefficient ``sigma(y_t, y_{t-r_1}, ..., y_{t-r_q})`` with slot partials."""

    n: int
    d: int
    q: int
    f: Callable = field(repr=False)
    df: Optional[Callable] = field(default=None, repr=False)
    d2f: Optional[Callable] = field(default=None, repr=False)
    name: str = "custom"

    @property
    def uses_fd(self) -> bool:
        return self.df is None or self.d2f is None

    def _args(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.q + 1, self.n):
            raise DimensionMismatch(
                f"delay field expects arguments of shape {(self.q + 1, self.n)}, got {w.shape}"
            )
        return w

    def eval(self, w) -> np.ndarray:
        out = np.asarray(self.f(self._args(w)), dtype=float)
        if out.shape != (self.n, self.d):
            raise DimensionMismatch(f"field {self.name} returned shape {out.shape}")
        return out

    def partial(self, w) -> np.ndarray:
        w = self._args(w)
        if self.df is not None:
            return np.asarray(self.df(w), dtype=float)
        return _fd_jac(self.eval, w)

    def hess(self, w) -> np.ndarray:
        w = self._args(w)
        if self.d2f is not None:
            return np.asarray(self.d2f(w), dtype=float)
        return _fd_jac(self.partial, w)

    def __call__(self, w):
        return self.eval(w)


def as_delay_field(vf: VectorField, q: int) -> DelayVectorField:
    """View a plain field as a delay field that ignores the delayed slots."""
    n, d = vf.l, vf.d

    def f(w):
        return vf.eval(w[0])

    def df(w):
        out = np.zeros((n, d, q + 1, n))
        out[:, :, 0, :] = vf.jac(w[0])
        return out

    def d2f(w):
        out = np.zeros((n, d, q + 1, n, q + 1, n))
        out[:, :, 0, :, 0, :] = vf.hess(w[0])
        return out

    return DelayVectorField(n, d, q, f, df, d2f, name=f"{vf.name}[delay-free]")


def derivative_errors(fld, points) -> tuple:
    """Max relative discrepancy of analytic derivatives vs central differences.

    Returns ``(first, second)`` over the probe ``points``.
    """
    first = second = 0.0
    if isinstance(fld, VectorField):
        f, df, d2f = fld.eval, fld.jac, fld.hess
    else:
        f, df, d2f = fld.eval, fld.partial, fld.hess
    for p in points:
        j_fd = _fd_jac(f, p)
        h_fd = _fd_jac(df, p)
        j, h = df(p), d2f(p)
        first = max(first, float(np.max(np.abs(j - j_fd)) / max(1.0, np.max(np.abs(j)))))
        second = max(second, float(np.max(np.abs(h - h_fd)) / max(1.0, np.max(np.abs(h)))))
    return first, second


# --------------------------------------------------------------------------
# catalog
# --------------------------------------------------------------------------


def zero_field(l: int, d: int) -> VectorField:
    return VectorField(
        l, d,
        lambda y: np.zeros((l, d)),
        lambda y: np.zeros((l, d, l)),
        lambda y: np.zeros((l, d, l, l)),
        name="zero",
    )


def constant_field(l: int, d: int, c: float = 1.0, matrix=None) -> VectorField:
    """``sigma = c * M`` with ``M[i, j] = 1 + (i + 2 j) / (l + 2 d)`` unless given."""
    if matrix is None:
        i, j = np.meshgrid(np.arange(l), np.arange(d), indexing="ij")
        matrix = 1.0 + (i + 2 * j) / (l + 2 * d)
    m = c * np.asarray(matrix, dtype=float).reshape(l, d)
    return VectorField(
        l, d,
        lambda y: m.copy(),
        lambda y: np.zeros((l, d, l)),
        lambda y: np.zeros((l, d, l, l)),
        name="constant",
    )


def linear_field(l: int, d: int, a: float = 1.0) -> VectorField:
    """``sigma^{ij}(y) = a y^i``; with ``l = d = 1`` the exponential equation."""

    def df(y):
        out = np.zeros((l, d, l))
        for i in range(l):
            out[i, :, i] = a
        return out

    return VectorField(
        l, d,
        lambda y: a * np.repeat(y[:, None], d, axis=1),
        df,
        lambda y: np.zeros((l, d, l, l)),
        name="linear",
    )


def rotation_field(d: int = 1, theta=None) -> VectorField:
    """``sigma(y)[:, j] = theta_j J y`` on ``R^2`` with ``J`` the quarter turn."""
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    th = np.ones(d) if theta is None else np.broadcast_to(np.asarray(theta, float), (d,))

    def f(y):
        return (J @ y)[:, None] * th[None, :]

    def df(y):
        return J[:, None, :] * th[None, :, None]

    return VectorField(2, d, f, df, lambda y: np.zeros((2, d, 2, 2)), name="rotation")


def polynomial_field(l: int, d: int, c0: float = 0.5, c1: float = 1.0, c2: float = -0.3):
    """``sigma^{ij}(y) = c0 + c1 y^i + c2 (y^i)^2`` (for every column ``j``)."""

    def f(y):
        return np.repeat((c0 + c1 * y + c2 * y * y)[:, None], d, axis=1)

    def df(y):
        out = np.zeros((l, d, l))
        for i in range(l):
            out[i, :, i] = c1 + 2 * c2 * y[i]
        return out

    def d2f(y):
        out = np.zeros((l, d, l, l))
        for i in range(l):
            out[i, :, i, i] = 2 * c2
        return out

    return VectorField(l, d, f, df, d2f, name="polynomial")


def sine_field(l: int, d: int, a: float = 1.0) -> VectorField:
    """``sigma^{ij}(y) = a sin(y^{m(i,j)})`` with ``m(i, j) = (i + j) mod l``."""
    m = (np.arange(l)[:, None] + np.arange(d)[None, :]) % l

    def f(y):
        return a * np.sin(y[m])

    def df(y):
        out = np.zeros((l, d, l))
        for i in range(l):
            for j in range(d):
                out[i, j, m[i, j]] = a * np.cos(y[m[i, j]])
        return out

    def d2f(y):
        out = np.zeros((l, d, l, l))
        for i in range(l):
            for j in range(d):
                out[i, j, m[i, j], m[i, j]] = -a * np.sin(y[m[i, j]])
        return out

    return VectorField(l, d, f, df, d2f, name="sine")


def delay_linear_field(n: int, d: int, q: int, alpha: float = 0.0, beta: float = 1.0):
    """``sigma^{aj}(w) = alpha w_0^a + beta / q * sum_{i'>=1} w_{i'}^a``."""
    coef = np.array([alpha] + [beta / q] * q)

    def f(w):
        return np.repeat((coef @ w)[:, None], d, axis=1)

    def df(w):
        out = np.zeros((n, d, q + 1, n))
        for a in range(n):
            out[a, :, :, a] = coef[None, :]
        return out

    return DelayVectorField(
        n, d, q, f, df, lambda w: np.zeros((n, d, q + 1, n, q + 1, n)), name="delay-linear"
    )


def delay_feedback_field(n: int, d: int, q: int, alpha: float = 1.0, beta: float = 0.5):
    """``sigma^{aj}(w) = alpha w_0^a (1 + beta tanh(s^a))`` with ``s^a = sum_{i'>=1} w_{i'}^a``."""

    def f(w):
        s = w[1:].sum(axis=0)
        return np.repeat((alpha * w[0] * (1 + beta * np.tanh(s)))[:, None], d, axis=1)

    def df(w):
        s = w[1:].sum(axis=0)
        th = np.tanh(s)
        sech2 = 1 - th * th
        out = np.zeros((n, d, q + 1, n))
        for a in range(n):
            out[a, :, 0, a] = alpha * (1 + beta * th[a])
            out[a, :, 1:, a] = alpha * w[0, a] * beta * sech2[a]
        return out

    def d2f(w):
        s = w[1:].sum(axis=0)
        th = np.tanh(s)
        sech2 = 1 - th * th
        out = np.zeros((n, d, q + 1, n, q + 1, n))
        for a in range(n):
            mixed = alpha * beta * sech2[a]
            second = alpha * w[0, a] * beta * (-2 * th[a] * sech2[a])
            for i in range(1, q + 1):
                out[a, :, 0, a, i, a] = mixed
                out[a, :, i, a, 0, a] = mixed
                for k in range(1, q + 1):
                    out[a, :, i, a, k, a] = second
        return out

    return DelayVectorField(n, d, q, f, df, d2f, name="delay-feedback")


PLAIN_FIELDS = ("zero", "constant", "linear", "rotation", "polynomial", "sine")
DELAY_FIELDS = ("delay-linear", "delay-feedback")
CATALOG = PLAIN_FIELDS + DELAY_FIELDS


def make_field(name: str, l: int, d: int, q: Optional[int] = None, **params):
    """Build a catalog field by name.

    Plain fields return a :class:`VectorField`; with ``q`` given they are
    wrapped by :func:`as_delay_field`.  Delay fields need ``q``.
    """
    try:
        if name == "zero":
            vf = zero_field(l, d, **params)
        elif name == "constant":
            vf = constant_field(l, d, **params)
        elif name == "linear":
            vf = linear_field(l, d, **params)
        elif name == "rotation":
            if l != 2:
                raise ConfigError("the rotation field needs state dimension 2")
            vf = rotation_field(d, **params)
        elif name == "polynomial":
            vf = polynomial_field(l, d, **params)
        elif name == "sine":
            vf = sine_field(l, d, **params)
        elif name in DELAY_FIELDS:
            if not q:
                raise ConfigError(f"field {name} needs at least one delay")
            fn = delay_linear_field if name == "delay-linear" else delay_feedback_field
            return fn(l, d, q, **params)
        else:
            raise ConfigError(f"unknown vector field {name!r}; choose from {', '.join(CATALOG)}")
    except TypeError as exc:
        raise ConfigError(f"bad parameters for field {name!r}: {exc}") from None
    return vf if q is None else as_delay_field(vf, q)
