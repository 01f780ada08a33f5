"""Nonlinear operators of the conformal constant-vorticity wave problem.

Everything is evaluated for even, zero-mean profiles w(t) = sum a_n cos(nt).
The unknown pair is (lam, w) with lam = m/h - h*gamma/2; the Bernoulli
constant Q is always recomputed from (m, w), never carried as an unknown.

The work is done by :func:`residual_batch`, which accepts a stack of
coefficient vectors so finite-difference Jacobians need a single call.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import trig_core
from .errors import (
    AliasOverflow, InvalidParameters, MeanDefect, NonZeroMean, StagnantConfiguration,
)
from .trig_core import GridFunction, TrigSeries


@dataclass(frozen=True)
class FlowParameters:
    h: float
    k: float
    g: float
    gamma: float
    sigma: float
    N: int = trig_core.DEFAULT_N
    M: int | None = None
    stagnation_floor: float = 1e-4
    alias_tol: float = 1e-6
    mean_tol: float = 1e-10

    def __post_init__(self):
        for name in ("h", "k", "g", "gamma", "sigma"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise InvalidParameters(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, float(v))
        if not self.h > 0:
            raise InvalidParameters(f"h must be positive, got {self.h}")
        if not self.k > 0:
            raise InvalidParameters(f"k must be positive, got {self.k}")
        if self.sigma == 0:
            raise InvalidParameters("sigma must be nonzero")
        if int(self.N) < 1:
            raise InvalidParameters("N must be a positive integer")
        object.__setattr__(self, "N", int(self.N))
        M = trig_core.GRID_FACTOR * self.N if self.M is None else int(self.M)
        if M < trig_core.GRID_FACTOR * self.N:
            raise InvalidParameters(f"M={M} violates M >= 4N (N={self.N})")
        object.__setattr__(self, "M", M)

    @property
    def kh(self) -> float:
        return self.k * self.h

    @property
    def period(self) -> float:
        return 2.0 * np.pi / self.k

    def replace(self, **changes) -> "FlowParameters":
        if "N" in changes and "M" not in changes:
            changes["M"] = None
        return dataclasses.replace(self, **changes)

    def doubled_grid(self) -> "FlowParameters":
        return dataclasses.replace(self, M=2 * self.M)

    def m_from_lambda(self, lam):
        return self.h * lam + self.h**2 * self.gamma / 2

    def lambda_from_m(self, m):
        return m / self.h - self.h * self.gamma / 2


def bracket_constant(m, params: FlowParameters):
    """Constant part of the brace in the formula for Q, as a function of m.

    This is m/h - gamma*h/2, i.e. lam itself.  A gamma*h/k variant looks
    plausible but only lets laminar flows solve the problem when k = 2.
    """
    return m / params.h - params.gamma * params.h / 2


@dataclass(frozen=True)
class OperatorOutput:
    series: TrigSeries
    grid_trace: GridFunction | None
    alias_tail: float
    K: TrigSeries | None = None
    Q: float = float("nan")
    min_wkh: float = float("nan")


@dataclass
class BatchResult:
    """Arrays from :func:`residual_batch`; leading axis is the batch."""

    F: np.ndarray
    K: np.ndarray
    Q: np.ndarray
    min_wkh: np.ndarray
    alias_tail: np.ndarray
    E_mean: np.ndarray
    K_grid: np.ndarray


# --------------------------------------------------------------------------
# Grid fields shared by all operators
# --------------------------------------------------------------------------

class _Fields:
    """w, w', w'', Ckh w', Ckh w'' and Wkh on the grid for a stack of profiles."""

    def __init__(self, A: np.ndarray, params: FlowParameters, M: int | None = None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        self.N = A.shape[-1]
        self.M = M = M or params.M
        self.params = params
        n = np.arange(M // 2 + 1)
        self.n = n
        self.C = trig_core._spectral_ckh(M, params.kh)
        D = trig_core._spectral_deriv(M)
        X = np.zeros(A.shape[:-1] + (M // 2 + 1,), dtype=complex)
        X[..., 1:self.N + 1] = 0.5 * M * A
        X1 = D * X
        X2 = D * X1
        irfft = trig_core.grid_of_spectrum
        self.w = irfft(X, M)
        self.w1 = irfft(X1, M)
        self.w2 = irfft(X2, M)
        self.cw1 = irfft(self.C * X1, M)
        self.cw2 = irfft(self.C * X2, M)
        self.W = self.w1**2 + (1.0 + self.cw1) ** 2
        # 1 - Wkh without cancellation near w = 0
        self.one_minus_W = -(self.w1**2 + self.cw1 * (2.0 + self.cw1))
        self.min_wkh = self.W.min(axis=-1)

    def require_admissible(self):
        floor = self.params.stagnation_floor
        bad = np.flatnonzero(~(self.min_wkh >= floor))
        if bad.size:
            i = int(bad[0])
            raise StagnantConfiguration(
                f"min Wkh = {self.min_wkh[i]:.3e} below stagnation floor {floor:g}"
                + (f" (batch index {i})" if self.min_wkh.size > 1 else ""),
                min_wkh=float(self.min_wkh[i]))
        return self

    def project_N(self, values, keep_mean=False):
        X = trig_core.spectrum_of_grid(values)
        return trig_core.truncate_spectrum(X, self.N, keep_mean=keep_mean)

    def ckh_grid(self, values):
        """Ckh of the order-N projection of a zero-mean grid field."""
        return trig_core.grid_of_spectrum(self.C * self.project_N(values), self.M)

    def beta(self):
        """The vorticity part of the brace: bracket minus lam."""
        p = self.params
        c_ww1 = self.ckh_grid(self.w * self.w1)
        mean_w2 = np.mean(self.w**2, axis=-1, keepdims=True)
        return (p.gamma / p.k) * (mean_w2 / (2 * p.kh) + c_ww1 - self.w - self.w * self.cw1)

    def hat_w_grid(self):
        return ((1.0 + self.cw1) * self.w2 - self.w1 * self.cw2) / self.W


def _col(x):
    return np.asarray(x, dtype=float).reshape(-1, 1)


def _excess(lam, beta, f: _Fields, sW):
    """bracket^2 Wkh^-1/2 + (2g/k) w Wkh^1/2 - lam^2 Wkh^1/2 on the grid."""
    p = f.params
    return (beta * (2 * lam + beta) / sW + lam**2 * f.one_minus_W / sW
            + (2 * p.g / p.k) * f.w * sW)


def _q_parts(lam, f: _Fields, beta, sW):
    """Q for the given lam (via m and the bracket constant), and Q - lam^2."""
    p = f.params
    lam = _col(lam)
    lam_q = _col(bracket_constant(p.m_from_lambda(lam), p))
    G_q = _excess(lam_q, beta, f, sW)
    q_minus_lam2 = (lam_q**2 - lam**2) + G_q.mean(axis=-1, keepdims=True) / sW.mean(axis=-1, keepdims=True)
    return lam**2 + q_minus_lam2, q_minus_lam2


def residual_batch(lams, A, params: FlowParameters, M: int | None = None,
                   check_alias: bool = True) -> BatchResult:
    """F(lam, w) = w - D^-2 K(lam, w) for a stack of cosine coefficient rows."""
    f = _Fields(A, params, M).require_admissible()
    p = params
    lam = _col(lams)
    if lam.shape[0] != f.w.shape[0]:
        lam = np.broadcast_to(lam, (f.w.shape[0], 1))
    beta = f.beta()
    sW = np.sqrt(f.W)
    Q, q_minus_lam2 = _q_parts(lam, f, beta, sW)
    # E = bracket^2 W^-1/2 - (Q - 2gw/k) W^1/2, arranged so E = O(w) near w = 0
    E = _excess(lam, beta, f, sW) - q_minus_lam2 * sW
    E_mean = E.mean(axis=-1)
    scale = 1.0 + np.abs(Q[:, 0])
    bad = np.flatnonzero(~(np.abs(E_mean) <= p.mean_tol * scale))
    if bad.size:
        i = int(bad[0])
        raise MeanDefect(f"[E] = {E_mean[i]:.3e}; the Q formula does not annihilate the mean")
    E0 = E - E_mean[:, None]
    cE = f.ckh_grid(E0)
    K = (f.w1 * cE + (1.0 + f.cw1) * E0) / (2 * p.sigma * p.k)
    XK = trig_core.spectrum_of_grid(K)
    _, Kc, _, tail = trig_core.from_spectrum(XK, f.N, f.M)
    if check_alias:
        lim = p.alias_tol * np.maximum(1.0, np.abs(Kc).max(axis=-1))
        bad = np.flatnonzero(tail > lim)
        if bad.size:
            i = int(bad[0])
            raise AliasOverflow(f"K tail {tail[i]:.3e} exceeds {lim[i]:.3e}; increase N")
    nn = np.arange(1, f.N + 1, dtype=float)
    F = np.asarray(A, dtype=float).reshape(Kc.shape) + Kc / nn**2
    return BatchResult(F=F, K=Kc, Q=Q[:, 0], min_wkh=f.min_wkh, alias_tail=tail,
                       E_mean=E_mean, K_grid=K)


# --------------------------------------------------------------------------
# Series-level operators
# --------------------------------------------------------------------------

def even_coeffs(w: TrigSeries, params: FlowParameters) -> np.ndarray:
    """Cosine coefficients of an even zero-mean w, padded to params.N."""
    if w.mean != 0.0:
        raise NonZeroMean(f"profile has mean {w.mean!r}")
    if w.N > params.N:
        raise ValueError(f"profile order {w.N} exceeds truncation N={params.N}")
    scale = max(1.0, float(np.abs(w.cos).max()))
    if np.abs(w.sin).max() > 1e-12 * scale:
        raise ValueError("profile must be even (no sine coefficients)")
    a = np.zeros(params.N)
    a[:w.N] = w.cos
    return a


def _fields(w, params, M=None):
    return _Fields(even_coeffs(w, params)[None, :], params, M)


def wkh(w: TrigSeries, params: FlowParameters) -> GridFunction:
    """w'^2 + (1 + Ckh w')^2 on the grid; ``.min()`` gives the margin."""
    return GridFunction(_fields(w, params).W[0])


def bracket(lam: float, w: TrigSeries, params: FlowParameters) -> GridFunction:
    f = _fields(w, params)
    return GridFunction(lam + f.beta()[0])


def q_from_m(m: float, w: TrigSeries, params: FlowParameters) -> float:
    f = _fields(w, params).require_admissible()
    sW = np.sqrt(f.W)
    lam_q = bracket_constant(m, params)
    Bq = lam_q + f.beta()
    num = Bq**2 / sW + (2 * params.g / params.k) * f.w * sW
    return float(num.mean() / sW.mean())


def q_value(lam: float, w: TrigSeries, params: FlowParameters) -> float:
    """Bernoulli constant Q for the pair (lam, w)."""
    f = _fields(w, params).require_admissible()
    sW = np.sqrt(f.W)
    Q, _ = _q_parts(lam, f, f.beta(), sW)
    return float(Q[0, 0])


def hat_w(w: TrigSeries, params: FlowParameters) -> TrigSeries:
    f = _fields(w, params).require_admissible()
    g = f.hat_w_grid()[0]
    m = g.mean()
    if abs(m) > params.mean_tol * max(1.0, np.abs(g).max()):
        raise MeanDefect(f"[w_hat] = {m:.3e} is not zero")
    s, _ = trig_core.project(GridFunction(g), params.N)
    return TrigSeries(0.0, s.cos, s.sin)


def evaluate(lam: float, w: TrigSeries, params: FlowParameters, M: int | None = None) -> OperatorOutput:
    """Residual F with K, Q and diagnostics attached."""
    r = residual_batch([lam], even_coeffs(w, params)[None, :], params, M)
    return OperatorOutput(series=TrigSeries.from_cos(r.F[0]), grid_trace=GridFunction(r.K_grid[0]),
                          alias_tail=float(r.alias_tail[0]), K=TrigSeries.from_cos(r.K[0]),
                          Q=float(r.Q[0]), min_wkh=float(r.min_wkh[0]))


def k_eval(lam: float, w: TrigSeries, params: FlowParameters) -> TrigSeries:
    return evaluate(lam, w, params).K


def residual_F(lam: float, w: TrigSeries, params: FlowParameters) -> TrigSeries:
    return evaluate(lam, w, params).series


def residual_eqn2a(m: float, Q: float, w: TrigSeries, params: FlowParameters,
                   M: int | None = None) -> GridFunction:
    """Pointwise LHS - RHS of the divided Bernoulli form (independent of K)."""
    f = _fields(w, params, M).require_admissible()
    p = params
    B = p.lambda_from_m(m) + f.beta()[0]
    sW = np.sqrt(f.W[0])
    lhs = B**2 / sW
    rhs = (Q - 2 * p.g * f.w[0] / p.k) * sW + 2 * p.sigma * p.k * f.hat_w_grid()[0]
    return GridFunction(lhs - rhs)
