"""Linearisation about the laminar flows w = 0.

On the cosine basis the Frechet derivative of F at (lam, 0) is diagonal with
entries ``multiplier(n, lam)``; its zeros in lam are the bifurcation values.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateQuadratic, KernelOverflow, NoSignChange
from .trig_core import coth
from .wave_operators import FlowParameters, residual_batch

log = logging.getLogger(__name__)

ROOT_TOL = 1e-10


@dataclass(frozen=True)
class BifurcationPoint:
    n: int
    sign: int  # +1 for lambda_+, -1 for lambda_-
    lambda_star: float
    m_star: float
    kernel_dim: int = 1
    partner_mode: int | None = None
    transversal: bool = True
    x_star_stride: int = 1
    alt_strides: tuple = field(default=())
    under_resolved: bool = False

    @property
    def label(self) -> str:
        return f"{self.n}{'+' if self.sign > 0 else '-'}"


def multiplier(n, lam, params: FlowParameters):
    """Eigenvalue 1 + (g - gamma lam)/(k^2 n^2 sigma) - lam^2 coth(nkh)/(k n sigma)."""
    p = params
    n = np.asarray(n, dtype=float)
    lam = np.asarray(lam, dtype=float)
    out = (1.0 + (p.g - p.gamma * lam) / (p.k**2 * n**2 * p.sigma)
           - lam**2 * coth(n * p.kh) / (p.k * n * p.sigma))
    return out if out.ndim else float(out)


def _quadratic(n: int, params: FlowParameters):
    # a lam^2 + b lam - c = 0 with a = kn coth(nkh), b = gamma, c = k^2 n^2 sigma + g
    p = params
    a = p.k * n * float(coth(n * p.kh))
    return a, p.gamma, p.k**2 * n**2 * p.sigma + p.g


def bifurcation_lambdas(n: int, params: FlowParameters) -> tuple[float, float]:
    """(lambda_-, lambda_+): the real roots of the n-th multiplier."""
    p = params
    a, b, c = _quadratic(n, p)
    if not (np.isfinite(a) and a > 0):
        if b == 0:
            raise DegenerateQuadratic(f"mode {n}: quadratic and linear coefficients both vanish")
        log.warning("mode %d: degenerate quadratic coefficient, using the linear root", n)
        r = c / b
        return r, r
    t = math.tanh(n * p.kh)
    half_b = p.gamma * t / (2 * p.k * n)            # gamma tanh / 2kn
    rad = half_b**2 + c * t / (p.k * n)
    if rad < 0:
        if rad < -1e-14 * (half_b**2 + abs(c * t / (p.k * n))):
            raise DegenerateQuadratic(f"mode {n}: no real roots (discriminant {rad:.3e})")
        rad = 0.0
    s = math.sqrt(rad)
    # roots -half_b +- s; take the non-cancelling one and recover the other from the product
    big = -half_b - s if half_b > 0 else -half_b + s
    prod = -c * t / (p.k * n)
    if big == 0.0:
        return 0.0, 0.0
    other = prod / big
    return (min(big, other), max(big, other))


def bifurcation_lambdas_direct(n: int, params: FlowParameters) -> tuple[float, float]:
    """The bifurcation values written out directly, without rearrangement."""
    p = params
    t = math.tanh(n * p.kh)
    base = -p.gamma * t / (2 * p.k * n)
    s = math.sqrt(p.gamma**2 * t**2 / (4 * p.k**2 * n**2) + (p.k**2 * n**2 * p.sigma + p.g) / (p.k * n) * t)
    return base - s, base + s


def bifurcation_m(n: int, params: FlowParameters) -> tuple[float, float]:
    """Critical mass fluxes (m_-, m_+) in closed form."""
    p = params
    t = math.tanh(n * p.kh)
    base = p.h**2 * p.gamma / 2 - p.h * p.gamma * t / (2 * p.k * n)
    s = p.h * math.sqrt(p.gamma**2 * t**2 / (4 * p.k**2 * n**2) + (p.k**2 * n**2 * p.sigma + p.g) / (p.k * n) * t)
    return base - s, base + s


def double_root_value(n: int, params: FlowParameters) -> float:
    """The lam at which lambda_+(n) and lambda_-(n) would coincide."""
    return -params.gamma * math.tanh(n * params.kh) / (2 * params.k * n)


def is_transversal(n: int, lam: float, params: FlowParameters) -> bool:
    ref = double_root_value(n, params)
    return abs(lam - ref) > 1e-12 * max(abs(lam), abs(ref), 1e-300)


def sufficient_simple_kernel(params: FlowParameters) -> bool:
    """Known sufficient inequality for a one-dimensional kernel at every bifurcation value."""
    p = params
    ga = abs(p.gamma)
    rhs = p.gamma**2 * p.h / (6 * p.g) + 1.0 / 3.0 + ga / (6 * p.g) * math.sqrt(p.gamma**2 * p.h**2 + 4 * p.g * p.h)
    return p.sigma / (p.g * p.h**2) > rhs


def kernel_analysis(lam_star: float, params: FlowParameters, n_max: int | None = None) -> BifurcationPoint:
    """Classify the kernel of dF(lam*, 0) over modes 1..n_max."""
    n_max = n_max or params.N
    n = np.arange(1, n_max + 1)
    vals = multiplier(n, lam_star, params)
    hits = [int(i) for i in n[np.abs(vals) <= ROOT_TOL * (1 + abs(lam_star))]]
    if not hits:
        raise ValueError(f"lambda={lam_star!r} is not a bifurcation value for n <= {n_max}")
    if len(hits) > 2:
        raise KernelOverflow(f"modes {hits} share lambda={lam_star!r}")
    n_main = max(hits)
    partner = min(hits) if len(hits) == 2 else None
    lo, hi = bifurcation_lambdas(n_main, params)
    sign = 1 if abs(lam_star - hi) <= abs(lam_star - lo) else -1
    stride, alt = 1, ()
    if partner is not None:
        stride = n_main
        if n_main % partner:
            alt = (partner, n_main)
    return BifurcationPoint(
        n=n_main, sign=sign, lambda_star=float(lam_star),
        m_star=float(params.m_from_lambda(lam_star)), kernel_dim=len(hits),
        partner_mode=partner, transversal=is_transversal(n_main, lam_star, params),
        x_star_stride=stride, alt_strides=alt, under_resolved=n_main > params.N / 4,
    )


def bifurcation_point(n: int, sign: int, params: FlowParameters, n_max: int | None = None) -> BifurcationPoint:
    lo, hi = bifurcation_lambdas(n, params)
    lam = hi if sign > 0 else lo
    bp = kernel_analysis(lam, params, n_max)
    if bp.n != n:
        # the requested mode is the smaller of a resonant pair
        bp = BifurcationPoint(**{**bp.__dict__, "n": n, "partner_mode": bp.n, "sign": sign})
    return bp


def crossing_sign(n: int, lam_star: float, params: FlowParameters) -> tuple[int, int]:
    """Signs of the n-th eigenvalue just below and just above lam*."""
    d = 1e-6 * (1 + abs(lam_star))
    lo = int(np.sign(multiplier(n, lam_star - d, params)))
    hi = int(np.sign(multiplier(n, lam_star + d, params)))
    if lo == hi:
        raise NoSignChange(f"eigenvalue of mode {n} does not change sign at lambda={lam_star!r} "
                           "(double root: transversality fails)")
    return lo, hi


@dataclass
class JacobianDiagnostic:
    jacobian: np.ndarray
    diagonal_error: float
    offdiag_max: float

    @property
    def ok(self) -> bool:
        return self.diagonal_error <= 1e-6


def jacobian_check(lam: float, params: FlowParameters, step: float = 1e-6) -> JacobianDiagnostic:
    """Central-difference Jacobian of F at (lam, 0) compared with the multipliers."""
    N = params.N
    eye = np.eye(N)
    r = residual_batch(np.full(2 * N, lam), np.vstack([step * eye, -step * eye]), params)
    J = (r.F[:N] - r.F[N:]).T / (2 * step)
    d = multiplier(np.arange(1, N + 1), lam, params)
    off = J - np.diag(np.diag(J))
    return JacobianDiagnostic(J, float(np.abs(np.diag(J) - d).max()), float(np.abs(off).max()))


def bifurcation_table(params: FlowParameters, n_max: int | None = None) -> list[dict]:
    """Rows n, lambda_-, lambda_+, m_-, m_+, kernel dims and transversality flags."""
    n_max = n_max or params.N
    rows = []
    for n in range(1, n_max + 1):
        lo, hi = bifurcation_lambdas(n, params)
        mlo, mhi = params.m_from_lambda(lo), params.m_from_lambda(hi)
        klo = kernel_analysis(lo, params, n_max).kernel_dim
        khi = kernel_analysis(hi, params, n_max).kernel_dim
        rows.append(dict(n=n, lambda_minus=lo, lambda_plus=hi, m_minus=mlo, m_plus=mhi,
                         kernel_minus=klo, kernel_plus=khi,
                         transversal_minus=is_transversal(n, lo, params),
                         transversal_plus=is_transversal(n, hi, params)))
    return rows
