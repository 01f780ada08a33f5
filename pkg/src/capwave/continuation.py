"""Newton corrector, branch switching and pseudo-arclength continuation.

The unknown vector is x = (lam, a_s, a_2s, ...) where s is the X* stride;
coefficients off the stride are held at zero.  One scalar linear constraint
closes the system (a fixed coefficient when switching branches, a hyperplane
orthogonal to the secant when stepping along a branch).
"""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import linear_analysis as la
from .errors import (
    AliasOverflow, CapwaveError, DomainFault, InvalidParameters, LeftDomain, MeanDefect,
    NoConvergence, StagnantConfiguration,
)
from .trig_core import TrigSeries, grid_of_spectrum
from .wave_operators import FlowParameters, residual_batch, residual_eqn2a

log = logging.getLogger(__name__)

_EVAL_ERRORS = (StagnantConfiguration, AliasOverflow, MeanDefect, DomainFault, FloatingPointError)


class Verdict(str, enum.Enum):
    NORM_BLOWUP = "NormBlowup"
    STAGNATION_APPROACH = "StagnationApproach"
    LOOP_CLOSURE = "LoopClosure"
    TRIVIAL_RECONNECTION = "TrivialReconnection"
    STEP_LIMIT = "StepLimit"
    STEP_COLLAPSE = "StepCollapse"
    RESOLUTION_LIMIT = "ResolutionLimit"

    def __str__(self):
        return self.value


@dataclass
class ContinuationConfig:
    newton_tol: float = 1e-12
    max_newton: int = 25
    fd_step: float = 1e-6
    s0: float = 1e-3
    ds0: float = 1e-2
    ds_min: float = 1e-5
    ds_max: float = 0.1
    grow: float = 1.3
    max_points: int = 200
    stagnation_verdict: float = 5e-2
    norm_blowup: float = 1e-3
    loop_tol: float = 1e-8
    trivial_tol: float = 1e-8
    trivial_lambda_tol: float = 1e-6
    revalidate: bool = True
    revalidate_factor: float = 10.0
    eqn2a_tol: float = 1e-8

    def __post_init__(self):
        if not self.ds_min <= self.ds_max:
            raise InvalidParameters("ds_min must not exceed ds_max")
        if not 0 < self.ds_min:
            raise InvalidParameters("ds_min must be positive")


@dataclass
class SolutionPoint:
    lam: float
    w: TrigSeries
    m: float
    Q: float
    min_wkh: float
    sup_norm: float
    residual_norm: float
    newton_iters: int = 0
    arclength: float = 0.0
    revalidation_residual: float = float("nan")
    eqn2a_residual: float = float("nan")

    def coeffs(self) -> np.ndarray:
        return np.asarray(self.w.cos)


@dataclass
class Branch:
    origin: la.BifurcationPoint
    points: list
    verdict: Verdict
    x_star_stride: int
    params: FlowParameters
    terminal: SolutionPoint | None = None
    message: str = ""

    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    def arclengths(self) -> np.ndarray:
        return np.array([p.arclength for p in self.points])


@dataclass(frozen=True)
class LinearConstraint:
    """c . (lam, a_1, ..., a_N) = value."""

    coeffs: np.ndarray
    value: float

    @classmethod
    def fix_coefficient(cls, n: int, value: float, N: int) -> "LinearConstraint":
        c = np.zeros(N + 1)
        c[n] = 1.0
        return cls(c, float(value))

    @classmethod
    def hyperplane(cls, normal: np.ndarray, through: np.ndarray) -> "LinearConstraint":
        return cls(np.asarray(normal, float), float(np.dot(normal, through)))


class Unresolved(NoConvergence):
    """A corrected point that the truncation cannot represent (doubled-grid check failed)."""


def _resolution_failure(exc: BaseException) -> bool:
    while exc is not None:
        if isinstance(exc, (AliasOverflow, Unresolved)):
            return True
        exc = exc.__cause__
    return False


# --------------------------------------------------------------------------
# Newton corrector
# --------------------------------------------------------------------------

def _stride_index(N: int, stride: int) -> np.ndarray:
    return np.arange(stride, N + 1, stride) - 1


def _sup(coeffs: np.ndarray, M: int) -> np.ndarray:
    """Grid sup-norm of cosine series, row-wise."""
    A = np.atleast_2d(coeffs)
    X = np.zeros((A.shape[0], M // 2 + 1), dtype=complex)
    X[:, 1:A.shape[1] + 1] = 0.5 * M * A
    return np.abs(grid_of_spectrum(X, M)).max(axis=-1)


class _System:
    def __init__(self, params: FlowParameters, stride: int):
        self.params = params
        self.stride = stride
        self.idx = _stride_index(params.N, stride)
        self.full = np.concatenate([[0], self.idx + 1])  # positions in (lam, a_1..a_N)

    def expand(self, x: np.ndarray):
        """Unknown vector(s) -> (lams, full coefficient rows)."""
        x = np.atleast_2d(x)
        A = np.zeros((x.shape[0], self.params.N))
        A[:, self.idx] = x[:, 1:]
        return x[:, 0], A

    def pack(self, lam: float, a: np.ndarray) -> np.ndarray:
        return np.concatenate([[lam], np.asarray(a)[self.idx]])

    def evaluate(self, x, M=None, check_alias=True):
        lams, A = self.expand(x)
        return residual_batch(lams, A, self.params, M, check_alias=check_alias)

    def jacobian(self, x: np.ndarray, step: float) -> np.ndarray:
        p = x.size
        E = np.eye(p) * step
        # stencils that bump the top modes spill past N by construction; the
        # alias check applies to iterates, not to difference quotients
        r = self.evaluate(np.vstack([x + E, x - E]), check_alias=False)
        dF = (r.F[:p, self.idx] - r.F[p:, self.idx]) / (2 * step)
        return dF.T  # rows: equations, columns: unknowns


def _point(system: _System, x: np.ndarray, r, res_norm: float, iters: int) -> SolutionPoint:
    p = system.params
    lam, A = system.expand(x)
    w = TrigSeries.from_cos(A[0])
    return SolutionPoint(lam=float(lam[0]), w=w, m=float(p.m_from_lambda(lam[0])), Q=float(r.Q[0]),
                         min_wkh=float(r.min_wkh[0]), sup_norm=float(_sup(A[0], p.M)[0]),
                         residual_norm=res_norm, newton_iters=iters)


def _newton(system: _System, x0: np.ndarray, constraint: LinearConstraint, config: ContinuationConfig):
    p = system.params
    c = constraint.coeffs[system.full]
    x = np.array(x0, dtype=float)
    best, history = None, []
    stall = 0
    for it in range(config.max_newton + 1):
        try:
            r = system.evaluate(x)
        except _EVAL_ERRORS as exc:
            raise LeftDomain(f"iterate {it} left the admissible set: {exc}", best=best, history=history) from exc
        F = r.F[0]
        res = float(_sup(F, p.M)[0])
        g = float(c @ x - constraint.value)
        w_sup = float(_sup(system.expand(x)[1][0], p.M)[0])
        tol = config.newton_tol * (1.0 + w_sup)
        err = max(res, abs(g))
        history.append(err)
        if best is None or err < best[1]:
            best = (x.copy(), err)
        if res <= tol and abs(g) <= tol:
            return _point(system, x, r, res, it), x
        if it == config.max_newton:
            break
        if len(history) > 1 and err >= 0.5 * history[-2]:
            stall += 1
            if stall >= 3 and err < 1e-8:
                break  # roundoff floor reached above the tolerance
        else:
            stall = 0
        try:
            J = system.jacobian(x, config.fd_step)
        except _EVAL_ERRORS as exc:
            raise LeftDomain(f"Jacobian stencil left the admissible set: {exc}", best=best,
                             history=history) from exc
        J = np.vstack([J, c])
        rhs = -np.concatenate([F[system.idx], [g]])
        try:
            dx = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence("singular Jacobian", best=best, history=history) from exc
        x = x + dx
        if not np.all(np.isfinite(x)):
            raise NoConvergence("non-finite iterate", best=best, history=history)
    raise NoConvergence(f"no convergence after {len(history) - 1} iterations "
                        f"(best residual {best[1]:.3e})", best=best, history=history)


def newton_correct(guess, constraint: LinearConstraint, params: FlowParameters,
                   config: ContinuationConfig | None = None, stride: int = 1) -> SolutionPoint:
    """Solve F(lam, w) = 0 together with one linear constraint.

    ``guess`` is a pair (lam, w) with w an even zero-mean TrigSeries.
    """
    config = config or ContinuationConfig()
    lam, w = guess
    system = _System(params, stride)
    a = np.zeros(params.N)
    a[:w.N] = w.cos
    point, _ = _newton(system, system.pack(lam, a), constraint, config)
    return point


# --------------------------------------------------------------------------
# Branch switching and continuation
# --------------------------------------------------------------------------

def switch_branch(bp: la.BifurcationPoint, params: FlowParameters, s0: float | None = None,
                  direction: int = 1, config: ContinuationConfig | None = None,
                  stride: int | None = None) -> SolutionPoint:
    """First nontrivial point with a_n = direction * s0 on the branch from ``bp``."""
    config = config or ContinuationConfig()
    la.crossing_sign(bp.n, bp.lambda_star, params)
    s = direction * (config.s0 if s0 is None else s0)
    stride = bp.x_star_stride if stride is None else stride
    if bp.n % stride:
        raise ValueError(f"mode {bp.n} is not in X* with stride {stride}")
    guess = (bp.lambda_star, TrigSeries.from_modes(params.N, cos={bp.n: s}))
    pt = newton_correct(guess, LinearConstraint.fix_coefficient(bp.n, s, params.N), params, config, stride)
    pt.arclength = float(np.hypot(pt.lam - bp.lambda_star, np.linalg.norm(pt.coeffs())))
    pt.eqn2a_residual = residual_eqn2a(pt.m, pt.Q, pt.w, params).sup()
    return pt


def c2_norm(point: SolutionPoint, params: FlowParameters) -> float:
    """|m| + sup|w| + sup|w'| + sup|w''|: discrete stand-in for the C^{2,alpha} norm."""
    a = point.coeffs()
    n = np.arange(1, a.size + 1)
    M = params.M
    X = np.zeros(M // 2 + 1, dtype=complex)
    X[1:a.size + 1] = 0.5 * M * a
    w1 = grid_of_spectrum(1j * np.arange(M // 2 + 1) * X, M)
    X2 = np.zeros_like(X)
    X2[1:a.size + 1] = -0.5 * M * a * n**2
    w2 = grid_of_spectrum(X2, M)
    return abs(point.m) + point.sup_norm + float(np.abs(w1).max()) + float(np.abs(w2).max())


def _reconnection(system, pt, x, bp, config, ds):
    """Follow the branch down to the trivial plane if it is heading there."""
    p = system.params
    a = pt.coeffs()
    j = int(np.argmax(np.abs(a))) + 1
    amp = abs(a[j - 1])
    if amp == 0.0 or amp > 10 * ds:
        return None
    try:
        lo, hi = la.bifurcation_lambdas(j, p)
    except CapwaveError:
        return None
    target = lo if abs(pt.lam - lo) < abs(pt.lam - hi) else hi
    if abs(target - bp.lambda_star) <= config.trivial_lambda_tol:
        return None
    if abs(pt.lam - target) > 10 * ds:
        return None
    # natural continuation in a_j towards zero, keeping the sign it has now
    sgn = np.sign(a[j - 1])
    end = 0.1 * config.trivial_tol
    cur = x
    for s in np.geomspace(amp, end, 25)[1:]:
        con = LinearConstraint.fix_coefficient(j, sgn * s, p.N)
        try:
            q, cur = _newton(system, cur, con, config)
        except NoConvergence:
            return None
    if abs(q.lam - target) <= config.trivial_lambda_tol and q.sup_norm < config.trivial_tol:
        return q, j, target
    return None


def _loop_closure(system, x, x_start, tau0, tau, config):
    try:
        q, xq = _newton(system, x, LinearConstraint.hyperplane(_embed(system, tau0), _embed(system, x_start)),
                        config)
    except NoConvergence:
        return None
    if np.linalg.norm(xq - x_start) <= config.loop_tol and float(tau @ tau0) > 0:
        return q
    return None


def _jacobian_tangent(system: _System, x: np.ndarray, tau: np.ndarray, step: float) -> np.ndarray:
    """Unit null vector of dF at x from the bordered system [dF; tau] t = e, oriented along tau."""
    J = np.vstack([system.jacobian(x, step), tau])
    rhs = np.zeros(J.shape[0])
    rhs[-1] = 1.0
    t = np.linalg.solve(J, rhs)
    return t / np.linalg.norm(t)


def _embed(system: _System, v: np.ndarray) -> np.ndarray:
    """Unknown-space vector -> full (lam, a_1..a_N) vector."""
    out = np.zeros(system.params.N + 1)
    out[system.full] = v
    return out


def continue_branch(start: SolutionPoint, bp: la.BifurcationPoint, params: FlowParameters,
                    config: ContinuationConfig | None = None, stride: int | None = None,
                    tangent: np.ndarray | None = None) -> Branch:
    """Pseudo-arclength continuation from a switched point until a verdict is reached.

    The first step follows ``tangent`` (a vector over lam, a_1..a_N) when given,
    otherwise the direction of growing |a_n| for the origin's mode n.
    """
    config = config or ContinuationConfig()
    stride = bp.x_star_stride if stride is None else stride
    system = _System(params, stride)
    x_prev = system.pack(start.lam, start.coeffs())
    x_start = x_prev.copy()
    if tangent is None:
        tau = np.zeros_like(x_prev)
        k = int(np.flatnonzero(system.idx == bp.n - 1)[0]) + 1
        tau[k] = np.sign(start.coeffs()[bp.n - 1]) or 1.0
    else:
        tau = np.asarray(tangent, dtype=float)[system.full]
        tau = tau / np.linalg.norm(tau)
    tau0 = None
    points = [start]
    ds = config.ds0
    far = 0.0  # largest distance from the first point seen so far
    exact_tangent = False  # set once the secant has failed at the current point
    doubled = params.doubled_grid()

    def done(verdict, message="", terminal=None):
        return Branch(origin=bp, points=points, verdict=verdict, x_star_stride=stride, params=params,
                      terminal=terminal, message=message)

    while True:
        if len(points) >= config.max_points:
            return done(Verdict.STEP_LIMIT, f"reached {config.max_points} points")
        x_pred = x_prev + ds * tau
        con = LinearConstraint.hyperplane(_embed(system, tau), _embed(system, x_pred))
        try:
            pt, x_new = _newton(system, x_pred, con, config)
            step = x_new - x_prev
            chord = float(np.linalg.norm(step))
            if float(step @ tau) <= 0 or chord > 3 * ds:
                raise NoConvergence("corrector left the local branch")
            if config.revalidate:
                lam, A = system.expand(x_new)
                r2 = residual_batch(lam, A, doubled)
                res2 = float(_sup(r2.F[0], doubled.M)[0])
                if res2 > config.revalidate_factor * config.newton_tol * (1 + pt.sup_norm):
                    raise Unresolved(f"doubled-grid residual {res2:.2e} too large")
                pt.revalidation_residual = res2
            # the divided form sees the modes beyond N that the residual F cannot
            pt.eqn2a_residual = residual_eqn2a(pt.m, pt.Q, pt.w, params).sup()
            if pt.eqn2a_residual > config.eqn2a_tol:
                raise Unresolved(f"divided-form residual {pt.eqn2a_residual:.2e} too large")
        except (NoConvergence, *_EVAL_ERRORS) as exc:
            ds *= 0.5
            log.debug("step rejected (%s); ds -> %.3g", exc, ds)
            if not exact_tangent and len(points) > 1:
                # a sharply turning branch defeats the secant; retry along the true tangent
                try:
                    tau = _jacobian_tangent(system, x_prev, tau, config.fd_step)
                    exact_tangent = True
                except (np.linalg.LinAlgError, *_EVAL_ERRORS):
                    pass
            if ds < config.ds_min:
                if _resolution_failure(exc):
                    return done(Verdict.RESOLUTION_LIMIT, f"truncation N={params.N} cannot follow the "
                                f"branch at the configured tolerance: {exc}")
                return done(Verdict.STEP_COLLAPSE, f"step size fell below {config.ds_min:g}: {exc}")
            continue
        pt.arclength = points[-1].arclength + chord
        tau = step / chord
        exact_tangent = False
        if tau0 is None:
            tau0 = tau.copy()
        points.append(pt)
        x_prev = x_new
        if pt.newton_iters <= 3:
            ds = min(ds * config.grow, config.ds_max)

        if pt.min_wkh < config.stagnation_verdict:
            return done(Verdict.STAGNATION_APPROACH, f"min Wkh = {pt.min_wkh:.3e}")
        if 1.0 / (1.0 + c2_norm(pt, params)) < config.norm_blowup:
            return done(Verdict.NORM_BLOWUP, "norm of (m, w) exceeded the blow-up threshold")
        dist = float(np.linalg.norm(x_new - x_start))
        far = max(far, dist)
        # a return counts only once the branch has first moved well away
        if dist < 2 * ds and far > 4 * dist + 4 * ds:
            q = _loop_closure(system, x_new, x_start, tau0, tau, config)
            if q is not None:
                return done(Verdict.LOOP_CLOSURE, "branch returned to its first point", q)
        if len(points) > 2:
            found = _reconnection(system, pt, x_new, bp, config, ds)
            if found is not None:
                q, j, target = found
                return done(Verdict.TRIVIAL_RECONNECTION,
                            f"reached the laminar flow at lambda={target!r} (mode {j})", q)


def trace_branch(params: FlowParameters, n: int, sign: int, direction: int = 1,
                 config: ContinuationConfig | None = None, n_max: int | None = None) -> Branch:
    """switch_branch followed by continue_branch for the bifurcation value lambda_sign(n)."""
    config = config or ContinuationConfig()
    bp = la.bifurcation_point(n, sign, params, n_max)
    start = switch_branch(bp, params, config.s0, direction, config)
    return continue_branch(start, bp, params, config)


# --------------------------------------------------------------------------
# Parameter sweeps
# --------------------------------------------------------------------------

@dataclass
class CellResult:
    index: int
    params: dict
    status: str
    branches: list = field(default_factory=list)  # list of (mode label, Branch)
    table: list = field(default_factory=list)
    error: str = ""


def run_cell(index: int, cell: dict, modes, config: ContinuationConfig, direction: int = 1) -> CellResult:
    try:
        params = FlowParameters(**cell)
    except InvalidParameters as exc:
        return CellResult(index, cell, "InvalidParameters", error=str(exc))
    try:
        table = la.bifurcation_table(params)
        branches = []
        for n, sign in modes:
            label = f"{n}{'+' if sign > 0 else '-'}"
            try:
                branches.append((label, trace_branch(params, n, sign, direction, config)))
            except CapwaveError as exc:
                branches.append((label, f"{type(exc).__name__}: {exc}"))
        return CellResult(index, cell, "ok", branches, table)
    except CapwaveError as exc:
        return CellResult(index, cell, type(exc).__name__, error=str(exc))


def sweep(cells: list, modes, config: ContinuationConfig | None = None, workers: int = 1,
          direction: int = 1) -> list:
    """Bifurcation enumeration plus continuation for each parameter cell.

    Cells are independent; results are returned in cell order regardless of
    the number of workers.
    """
    config = config or ContinuationConfig()
    jobs = [(i, dict(c), list(modes), config, direction) for i, c in enumerate(cells)]
    if workers <= 1:
        return [run_cell(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_cell, *j) for j in jobs]
        return [f.result() for f in futures]
