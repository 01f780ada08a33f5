"""Back from (m, w) to the physical fluid domain.

The strip R = {(x, y): -kh < y < 0} is mapped conformally onto the fluid
domain by U + iV, where V is the harmonic extension of w/k with bed value -h
and U its harmonic conjugate.  The free surface is the image of y = 0, i.e.
((t + C w(t))/k, w(t)/k); the bed is Y = -h.  The stream function pulled back
to the strip is  zeta - m - gamma V^2 / 2  with zeta harmonic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import StagnantConfiguration
from .trig_core import (
    GridFunction, TrigSeries, ckh_apply, differentiate, grid_points, pointwise_eval, project,
)
from .wave_operators import FlowParameters, q_value


# --------------------------------------------------------------------------
# Harmonic functions on the strip
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StripHarmonic:
    """Harmonic W on -kh <= y <= 0 with W(x, 0) = top(x) and W(x, -kh) = bottom.

    W = mean + slope*y + sum sinh(n(y+kh))/sinh(n kh) (a_n cos nx + b_n sin nx)
    """

    top: TrigSeries
    kh: float
    bottom: float = 0.0

    @property
    def slope(self) -> float:
        return (self.top.mean - self.bottom) / self.kh

    def _ratios(self, y):
        # sinh(n(y+d))/sinh(nd) and cosh(n(y+d))/sinh(nd) without overflow
        n = np.arange(1, self.top.N + 1)
        y = np.asarray(y, dtype=float)[..., None]
        e_top = np.exp(n * y)
        den = np.expm1(-2.0 * n * self.kh)
        num = np.expm1(-2.0 * n * (y + self.kh))
        return e_top * num / den, -e_top * (2.0 + num) / den, n

    def _trig(self, x, n):
        nx = np.asarray(x, dtype=float)[..., None] * n
        return np.cos(nx), np.sin(nx)

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        S, _, n = self._ratios(y)
        c, s = self._trig(x, n)
        osc = np.sum(S * (c * self.top.cos + s * self.top.sin), axis=-1)
        return self.top.mean + self.slope * y + osc

    def conjugate(self, x, y):
        """Harmonic conjugate (U_x = W_y, U_y = -W_x) with zero-mean oscillatory part."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        _, C, n = self._ratios(y)
        c, s = self._trig(x, n)
        osc = np.sum(C * (s * self.top.cos - c * self.top.sin), axis=-1)
        return self.slope * x + osc

    def gradient(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        S, C, n = self._ratios(y)
        c, s = self._trig(x, n)
        a, b = self.top.cos, self.top.sin
        wx = np.sum(S * n * (-s * a + c * b), axis=-1)
        wy = self.slope + np.sum(C * n * (c * a + s * b), axis=-1)
        return wx, wy


def harmonic_extension(boundary: TrigSeries, kh: float, bottom_value: float = 0.0) -> StripHarmonic:
    if not kh > 0:
        raise ValueError(f"kh must be positive, got {kh!r}")
    return StripHarmonic(boundary, float(kh), float(bottom_value))


# --------------------------------------------------------------------------
# Conformal map and stream function
# --------------------------------------------------------------------------

def _surface_wkh(w: TrigSeries, kh: float, M: int) -> np.ndarray:
    w1 = differentiate(w)
    g = pointwise_eval([w1, ckh_apply(w1, kh)], lambda d, cd: d**2 + (1.0 + cd) ** 2, M)
    return g.values


@dataclass(frozen=True)
class ConformalMap:
    V: StripHarmonic
    k: float
    h: float

    def __call__(self, x, y):
        """Strip point (x, y) -> physical point (X, Y)."""
        return self.V.conjugate(x, y), self.V(x, y)

    def derivative(self, x, y):
        """f'(z) = U_x + i V_x = V_y + i V_x."""
        vx, vy = self.V.gradient(x, y)
        return vy + 1j * vx

    def surface(self, M: int):
        t = grid_points(M)
        X, Y = self(t, np.zeros_like(t))
        return t, X, Y


def conformal_map(w: TrigSeries, params: FlowParameters) -> ConformalMap:
    if w.mean != 0.0:
        raise ValueError("profile must have zero mean")
    top = w
    W = _surface_wkh(top, params.kh, params.M)
    if W.min() < params.stagnation_floor:
        raise StagnantConfiguration(f"min Wkh = {W.min():.3e} below the floor", min_wkh=float(W.min()))
    V = harmonic_extension(top * (1.0 / params.k), params.kh, -params.h)
    return ConformalMap(V, params.k, params.h)


def _square_exact(w: TrigSeries) -> TrigSeries:
    """w^2 as a series of order 2N (no truncation)."""
    padded = w.resized(2 * w.N)
    sq, _ = project(pointwise_eval([padded], np.square, 8 * w.N), 2 * w.N)
    return sq


@dataclass(frozen=True)
class StreamFunction:
    zeta: StripHarmonic
    cmap: ConformalMap
    m: float
    gamma: float

    def __call__(self, x, y):
        """psi(U(x,y), V(x,y)) evaluated at strip coordinates."""
        return self.zeta(x, y) - self.m - 0.5 * self.gamma * self.cmap.V(x, y) ** 2

    def laplacian_residual(self, x, y, step: float = 1e-3):
        """5-point Laplacian of psi o f in strip coordinates plus gamma |f'|^2."""
        c = self(x, y)
        lap = (self(x + step, y) + self(x - step, y) + self(x, y + step) + self(x, y - step) - 4 * c) / step**2
        return lap + self.gamma * np.abs(self.cmap.derivative(x, y)) ** 2


def stream_function(m: float, w: TrigSeries, params: FlowParameters) -> StreamFunction:
    cmap = conformal_map(w, params)
    top = cmap.V.top  # w / k
    sq = _square_exact(top)
    zeta_top = TrigSeries(m + 0.5 * params.gamma * sq.mean, 0.5 * params.gamma * sq.cos,
                          0.5 * params.gamma * sq.sin)
    # psi = -m on the bed needs zeta = gamma h^2 / 2 there, since V = -h
    zeta = harmonic_extension(zeta_top, params.kh, 0.5 * params.gamma * params.h**2)
    return StreamFunction(zeta, cmap, float(m), params.gamma)


# --------------------------------------------------------------------------
# Physical solution and Bernoulli residual
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PhysicalSolution:
    t: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    h: float
    L: float
    m: float
    lam: float
    Q: float
    w: TrigSeries
    cmap: ConformalMap
    psi: StreamFunction
    params: FlowParameters

    def map(self, x, y):
        return self.cmap(x, y)

    def boundary_errors(self):
        """(sup |psi + m| on the bed, sup |psi| on the surface) at the grid points."""
        t = self.t
        bed = self.psi(t, np.full_like(t, -self.params.kh)) + self.m
        top = self.psi(t, np.zeros_like(t))
        return float(np.abs(bed).max()), float(np.abs(top).max())


def reconstruct(m: float, w: TrigSeries, params: FlowParameters) -> PhysicalSolution:
    lam = float(params.lambda_from_m(m))
    psi = stream_function(m, w, params)
    cmap = psi.cmap
    t, X, Y = cmap.surface(params.M)
    Q = q_value(lam, cmap.V.top * params.k, params)
    return PhysicalSolution(t=t, X=X, Y=Y, h=params.h, L=params.period, m=float(m), lam=lam, Q=float(Q),
                            w=cmap.V.top * params.k, cmap=cmap, psi=psi, params=params)


def bernoulli_residual(solution: PhysicalSolution, Q: float | None = None) -> GridFunction:
    """|grad psi|^2 + 2 g v - 2 sigma kappa-term - Q along the surface."""
    p = solution.params
    Q = solution.Q if Q is None else Q
    t = solution.t
    y0 = np.zeros_like(t)
    # |grad psi|^2 via the chain rule: psi o f has zero tangential derivative at y = 0
    zx, zy = solution.psi.zeta.gradient(t, y0)
    vx, vy = solution.cmap.V.gradient(t, y0)
    V = solution.cmap.V(t, y0)
    grad2 = (zy - p.gamma * V * vy) ** 2 / (vx**2 + vy**2)
    # curvature from spectral derivatives of the surface parameterisation
    w = solution.w
    cw = ckh_apply(w, p.kh)
    w1, w2 = differentiate(w), differentiate(differentiate(w))
    c1, c2 = differentiate(cw), differentiate(differentiate(cw))
    M = t.size
    ut = (1.0 + c1.grid(M).values) / p.k
    utt = c2.grid(M).values / p.k
    vt = w1.grid(M).values / p.k
    vtt = w2.grid(M).values / p.k
    speed2 = ut**2 + vt**2
    if speed2.min() <= 0:
        raise StagnantConfiguration("surface parameterisation has a stationary point", min_wkh=0.0)
    curv = (ut * vtt - utt * vt) / speed2**1.5
    v = w.grid(M).values / p.k
    return GridFunction(grad2 + 2 * p.g * v - 2 * p.sigma * curv - Q)


# --------------------------------------------------------------------------
# Admissibility
# --------------------------------------------------------------------------

@dataclass
class AdmissibilityReport:
    above_bed: bool
    above_bed_margin: float
    nonstagnant: bool
    min_wkh: float
    injective: bool
    injectivity_margin: float
    intersecting_pairs: int = 0

    @property
    def ok(self) -> bool:
        return self.above_bed and self.nonstagnant and self.injective


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _exact_intersect(p1, p2, q1, q2) -> bool:
    """Closed-segment intersection in exact rational arithmetic."""
    P1, P2, Q1, Q2 = ([Fraction(float(c)) for c in pt] for pt in (p1, p2, q1, q2))

    def o(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 0) - (v < 0)

    def on(a, b, c):  # c collinear with ab: inside the bounding box?
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    d1, d2, d3, d4 = o(Q1, Q2, P1), o(Q1, Q2, P2), o(P1, P2, Q1), o(P1, P2, Q2)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True
    return ((d1 == 0 and on(Q1, Q2, P1)) or (d2 == 0 and on(Q1, Q2, P2))
            or (d3 == 0 and on(P1, P2, Q1)) or (d4 == 0 and on(P1, P2, Q2)))


def _point_segment_distance(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(L2 > 0, ((px - ax) * dx + (py - ay) * dy) / L2, 0.0)
    s = np.clip(s, 0.0, 1.0)
    return np.hypot(px - ax - s * dx, py - ay - s * dy)


def polygon_self_intersections(x: np.ndarray, y: np.ndarray, period: float):
    """Test one period of a periodic polyline against itself and its +-period translates.

    Returns (number of intersecting non-adjacent segment pairs, minimum distance
    between non-adjacent segments).
    """
    M = x.size
    X = np.concatenate([x - period, x, x + period, [x[0] + 2 * period]])
    Y = np.concatenate([y, y, y, [y[0]]])
    ax, ay, bx, by = X[:-1], Y[:-1], X[1:], Y[1:]        # 3M segments, global index -M .. 2M-1
    i = np.arange(M, 2 * M)[:, None]                      # base period
    j = np.arange(3 * M)[None, :]
    far = np.abs(i - j) >= 2
    P1x, P1y, P2x, P2y = ax[i], ay[i], bx[i], by[i]
    Q1x, Q1y, Q2x, Q2y = ax[j], ay[j], bx[j], by[j]
    d1 = _orient(Q1x, Q1y, Q2x, Q2y, P1x, P1y)
    d2 = _orient(Q1x, Q1y, Q2x, Q2y, P2x, P2y)
    d3 = _orient(P1x, P1y, P2x, P2y, Q1x, Q1y)
    d4 = _orient(P1x, P1y, P2x, P2y, Q2x, Q2y)
    scale = np.maximum(np.maximum(np.abs(P2x - P1x), np.abs(P2y - P1y)),
                       np.maximum(np.abs(Q2x - Q1x), np.abs(Q2y - Q1y)))
    span = np.maximum(np.abs(X).max(), np.abs(Y).max()) + 1.0
    eps = 64 * np.finfo(float).eps * span * (scale + span)
    # segments whose bounding boxes are apart cannot meet, whatever the orientations say
    boxes = ((np.minimum(P1x, P2x) <= np.maximum(Q1x, Q2x)) & (np.minimum(Q1x, Q2x) <= np.maximum(P1x, P2x))
             & (np.minimum(P1y, P2y) <= np.maximum(Q1y, Q2y)) & (np.minimum(Q1y, Q2y) <= np.maximum(P1y, P2y)))
    cand = far & boxes
    near = cand & ((np.abs(d1) <= eps) | (np.abs(d2) <= eps) | (np.abs(d3) <= eps) | (np.abs(d4) <= eps))
    hit = cand & ~near & (d1 * d2 < 0) & (d3 * d4 < 0)
    count = int(hit.sum())
    for a, b in zip(*np.nonzero(near)):
        jj = b
        ii = a + M
        if _exact_intersect((ax[ii], ay[ii]), (bx[ii], by[ii]), (ax[jj], ay[jj]), (bx[jj], by[jj])):
            count += 1
    dist = np.minimum(
        np.minimum(_point_segment_distance(P1x, P1y, Q1x, Q1y, Q2x, Q2y),
                   _point_segment_distance(P2x, P2y, Q1x, Q1y, Q2x, Q2y)),
        np.minimum(_point_segment_distance(Q1x, Q1y, P1x, P1y, P2x, P2y),
                   _point_segment_distance(Q2x, Q2y, P1x, P1y, P2x, P2y)))
    margin = 0.0 if count else float(dist[far].min())
    return count, margin


def admissibility(w: TrigSeries, params: FlowParameters, M: int | None = None) -> AdmissibilityReport:
    """Report-only check of w > -kh, Wkh > 0 and injectivity of t -> (t + C w, w)."""
    M = M or params.M
    osc = TrigSeries(0.0, w.cos, w.sin)
    wg = w.grid(M).values
    above = float((wg + params.kh).min())
    W = _surface_wkh(osc, params.kh, M)
    t = grid_points(M)
    cw = ckh_apply(osc, params.kh).grid(M).values
    count, margin = polygon_self_intersections(t + cw, wg, 2 * np.pi)
    return AdmissibilityReport(above_bed=above > 0, above_bed_margin=above,
                               nonstagnant=float(W.min()) > 0, min_wkh=float(W.min()),
                               injective=count == 0, injectivity_margin=margin, intersecting_pairs=count)
