"""Truncated real trigonometric series on [0, 2pi) and their collocation grids.

A series of order N is stored as ``mean + sum a_n cos(nt) + sum b_n sin(nt)``.
Pointwise nonlinearities are evaluated on the uniform grid t_j = 2 pi j / M
and projected back; M defaults to 4N so quadratic products are alias-free.

The low-level helpers (``to_spectrum``, ``from_spectrum``, the multipliers)
accept arrays with arbitrary leading batch dimensions and are shared by the
batched residual kernel in :mod:`capwave.wave_operators`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainFault, InvalidDepth, NonZeroMean

DEFAULT_N = 64
GRID_FACTOR = 4


# --------------------------------------------------------------------------
# Spectral helpers (batch friendly)
# --------------------------------------------------------------------------

def grid_points(M: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(M) / M


def coth(x):
    """coth via expm1, accurate for small and large arguments (x > 0)."""
    x = np.asarray(x, dtype=float)
    e = np.expm1(-2.0 * x)
    return -(2.0 + e) / e


def ckh_multiplier(n, kh: float) -> np.ndarray:
    """Real symbol coth(n kh) of the strip Hilbert transform, 0 at n = 0."""
    n = np.asarray(n, dtype=float)
    out = np.zeros_like(n)
    pos = n > 0
    out[pos] = coth(n[pos] * kh)
    return out


def _spectral_ckh(M: int, kh: float) -> np.ndarray:
    # cos nt -> coth sin nt, sin nt -> -coth cos nt  <=>  e^{int} -> -i coth e^{int}
    n = np.arange(M // 2 + 1)
    return -1j * ckh_multiplier(n, kh)


def _spectral_deriv(M: int) -> np.ndarray:
    return 1j * np.arange(M // 2 + 1)


def to_spectrum(mean, cos, sin, M: int) -> np.ndarray:
    """rfft-layout spectrum of a series sampled on M points."""
    cos = np.asarray(cos, dtype=float)
    sin = np.asarray(sin, dtype=float)
    N = cos.shape[-1]
    if 2 * N >= M:
        raise ValueError(f"grid size M={M} too small for order N={N}")
    X = np.zeros(cos.shape[:-1] + (M // 2 + 1,), dtype=complex)
    X[..., 0] = M * np.asarray(mean, dtype=float)
    X[..., 1:N + 1] = 0.5 * M * (cos - 1j * sin)
    return X


def from_spectrum(X: np.ndarray, N: int, M: int):
    """Inverse of :func:`to_spectrum` truncated at order N.

    Returns ``(mean, cos, sin, tail)`` where ``tail`` is the largest mode
    amplitude among orders N+1..M/2 (the aliasing/truncation diagnostic).
    """
    mean = X[..., 0].real / M
    c = X[..., 1:N + 1]
    cos = 2.0 * c.real / M
    sin = -2.0 * c.imag / M
    hi = np.abs(X[..., N + 1:]) * (2.0 / M)
    if hi.shape[-1] and M % 2 == 0 and N + 1 <= M // 2:
        hi[..., -1] *= 0.5  # Nyquist mode carries a single cosine
    tail = hi.max(axis=-1) if hi.shape[-1] else np.zeros(X.shape[:-1])
    return mean, cos, sin, tail


def spectrum_of_grid(values: np.ndarray) -> np.ndarray:
    return np.fft.rfft(values, axis=-1)


def grid_of_spectrum(X: np.ndarray, M: int) -> np.ndarray:
    return np.fft.irfft(X, n=M, axis=-1)


def truncate_spectrum(X: np.ndarray, N: int, keep_mean: bool = True) -> np.ndarray:
    Y = X.copy()
    Y[..., N + 1:] = 0.0
    if not keep_mean:
        Y[..., 0] = 0.0
    return Y


# --------------------------------------------------------------------------
# Value types
# --------------------------------------------------------------------------

def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TrigSeries:
    """mean + sum_{n=1}^N cos[n-1] cos(nt) + sin[n-1] sin(nt)."""

    mean: float
    cos: np.ndarray
    sin: np.ndarray = field(default=None)

    def __post_init__(self):
        c = _frozen(self.cos).reshape(-1)
        s = np.zeros_like(c) if self.sin is None else _frozen(self.sin).reshape(-1)
        if s.shape != c.shape:
            raise ValueError("cosine and sine coefficient arrays differ in length")
        if c.size < 1:
            raise ValueError("truncation order must be positive")
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "cos", _frozen(c))
        object.__setattr__(self, "sin", _frozen(s))

    # construction ---------------------------------------------------------
    @classmethod
    def zeros(cls, N: int) -> "TrigSeries":
        return cls(0.0, np.zeros(N), np.zeros(N))

    @classmethod
    def from_cos(cls, a, mean: float = 0.0) -> "TrigSeries":
        a = np.asarray(a, dtype=float)
        return cls(mean, a, np.zeros_like(a))

    @classmethod
    def from_modes(cls, N: int, cos: dict | None = None, sin: dict | None = None,
                   mean: float = 0.0) -> "TrigSeries":
        """Build from sparse ``{n: coefficient}`` maps, e.g. ``{3: 1.0}``."""
        a = np.zeros(N)
        b = np.zeros(N)
        for n, v in (cos or {}).items():
            a[n - 1] = v
        for n, v in (sin or {}).items():
            b[n - 1] = v
        return cls(mean, a, b)

    # basic structure ------------------------------------------------------
    @property
    def N(self) -> int:
        return self.cos.size

    @property
    def is_even(self) -> bool:
        return not np.any(self.sin)

    @property
    def is_odd(self) -> bool:
        return self.mean == 0.0 and not np.any(self.cos)

    def even_part(self) -> "TrigSeries":
        return TrigSeries(self.mean, self.cos, np.zeros(self.N))

    def resized(self, N: int) -> "TrigSeries":
        """Zero-pad or truncate to order N."""
        a = np.zeros(N)
        b = np.zeros(N)
        k = min(N, self.N)
        a[:k] = self.cos[:k]
        b[:k] = self.sin[:k]
        return TrigSeries(self.mean, a, b)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        n = np.arange(1, self.N + 1)
        nt = np.multiply.outer(t, n)
        return self.mean + np.cos(nt) @ self.cos + np.sin(nt) @ self.sin

    def spectrum(self, M: int) -> np.ndarray:
        return to_spectrum(self.mean, self.cos, self.sin, M)

    def grid(self, M: int | None = None) -> "GridFunction":
        M = M or GRID_FACTOR * self.N
        return GridFunction(grid_of_spectrum(self.spectrum(M), M))

    def sup_norm(self, M: int | None = None) -> float:
        return float(np.max(np.abs(self.grid(M).values)))

    # vector space ---------------------------------------------------------
    def _binary(self, other, op):
        if not isinstance(other, TrigSeries):
            return NotImplemented
        N = max(self.N, other.N)
        a, b = self.resized(N), other.resized(N)
        return TrigSeries(op(a.mean, b.mean), op(a.cos, b.cos), op(a.sin, b.sin))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __neg__(self):
        return TrigSeries(-self.mean, -self.cos, -self.sin)

    def __mul__(self, c):
        if isinstance(c, TrigSeries):
            return NotImplemented
        c = float(c)
        return TrigSeries(c * self.mean, c * self.cos, c * self.sin)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, TrigSeries):
            return NotImplemented
        return (self.N == other.N and self.mean == other.mean
                and np.array_equal(self.cos, other.cos)
                and np.array_equal(self.sin, other.sin))

    __hash__ = None


@dataclass(frozen=True)
class GridFunction:
    """Samples at t_j = 2 pi j / M, j = 0..M-1."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values).reshape(-1))

    @property
    def M(self) -> int:
        return self.values.size

    @property
    def t(self) -> np.ndarray:
        return grid_points(self.M)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def sup(self) -> float:
        return float(np.abs(self.values).max())

    def mean(self) -> float:
        """Trapezoidal quadrature of the period mean (spectrally exact)."""
        return float(self.values.mean())


# --------------------------------------------------------------------------
# Operations
# --------------------------------------------------------------------------

def _require_zero_mean(w: TrigSeries):
    if w.mean != 0.0:
        raise NonZeroMean(f"series has mean {w.mean!r}; zero mean required")


def differentiate(w: TrigSeries) -> TrigSeries:
    n = np.arange(1, w.N + 1)
    return TrigSeries(0.0, n * w.sin, -n * w.cos)


def antidifferentiate(w: TrigSeries, order: int = 1) -> TrigSeries:
    """Zero-mean inverse of :func:`differentiate` (``order`` 1 or 2)."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    _require_zero_mean(w)
    n = np.arange(1, w.N + 1, dtype=float)
    a, b = w.cos, w.sin
    if order == 1:
        # cos nt -> sin nt / n,  sin nt -> -cos nt / n
        return TrigSeries(0.0, -b / n, a / n)
    return TrigSeries(0.0, -a / n**2, -b / n**2)


def ckh_apply(w: TrigSeries, kh: float) -> TrigSeries:
    """Periodic Hilbert transform for the strip of depth kh."""
    if not kh > 0:
        raise InvalidDepth(f"kh must be positive, got {kh!r}")
    _require_zero_mean(w)
    c = ckh_multiplier(np.arange(1, w.N + 1), kh)
    return TrigSeries(0.0, -c * w.sin, c * w.cos)


def pointwise_eval(ws: Sequence[TrigSeries], fn: Callable, M: int | None = None) -> GridFunction:
    """Apply ``fn`` to the grid samples of ``ws`` (one positional array each)."""
    if not ws:
        raise ValueError("need at least one series")
    N = max(w.N for w in ws)
    M = M or GRID_FACTOR * N
    grids = [w.grid(M).values for w in ws]
    with np.errstate(all="ignore"):
        out = np.asarray(fn(*grids), dtype=float)
    out = np.broadcast_to(out, (M,))
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        j = int(bad[0])
        raise DomainFault(f"map is singular at grid index {j} (t={2 * np.pi * j / M:.6g})", index=j)
    return GridFunction(out)


def project(g: GridFunction, N: int) -> tuple[TrigSeries, float]:
    """Discrete trigonometric interpolant truncated to order N, plus its tail."""
    X = spectrum_of_grid(g.values)
    mean_, a, b, tail = from_spectrum(X, N, g.M)
    return TrigSeries(mean_, a, b), float(tail)


def mean(w: TrigSeries) -> float:
    return w.mean


def mean_of_square(w: TrigSeries) -> float:
    return w.mean**2 + 0.5 * float(np.sum(w.cos**2) + np.sum(w.sin**2))
