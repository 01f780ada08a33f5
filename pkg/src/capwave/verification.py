"""Self-check suite behind ``capwave verify``.

Each check returns a :class:`CheckResult`; exceptions raised by the operators
count as failures, so a broken formula cannot pass by crashing early.
Operators are reached through their modules (``wave_operators.residual_batch``
and so on) so that patched implementations are what gets checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import continuation, linear_analysis, reconstruction, trig_core, wave_operators
from .errors import CapwaveError
from .trig_core import TrigSeries


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def random_decaying_profile(rng: np.random.Generator, N: int, amplitude: float = 0.1,
                            rho: float = 0.6) -> TrigSeries:
    """Even zero-mean series with geometrically decaying random coefficients, sup-norm ~ amplitude."""
    a = rng.standard_normal(N) * rho ** np.arange(1, N + 1)
    w = TrigSeries.from_cos(a)
    return w * (amplitude / w.sup_norm())


def random_admissible_profile(rng: np.random.Generator, params, low: float = 0.02, high: float = 0.3,
                              min_wkh: float = 0.1) -> TrigSeries:
    """Random decaying profile with amplitude in [low, high]*kh, redrawn until min Wkh >= min_wkh."""
    while True:
        w = random_decaying_profile(rng, params.N, amplitude=rng.uniform(low, high) * params.kh)
        if wave_operators._fields(w, params).W.min() >= min_wkh:
            return w


def _sup(values) -> float:
    return float(np.max(np.abs(values)))


def _hat_w_resolved(w: TrigSeries, params, start: int, limit: int, tail_tol: float = 1e-15):
    """w_hat projected at the smallest order L = start*2^j whose upper half is below tail_tol.

    w_hat is a quotient and decays more slowly than w, so it must be resolved
    well beyond N; near stagnation the needed order grows quickly.
    """
    L = start
    while True:
        p = params.replace(N=L)
        f = wave_operators._fields(w.resized(L), p).require_admissible()
        g = f.hat_w_grid()[0]
        hw, _ = trig_core.project(trig_core.GridFunction(g - g.mean()), L)
        scale = max(1.0, float(np.abs(hw.cos).max()))
        if np.abs(hw.cos[L // 2:]).max() <= tail_tol * scale or 2 * L > limit:
            return TrigSeries(0.0, hw.cos, hw.sin), float(g.mean()), p
        L *= 2


def identity_errors(w: TrigSeries, params, max_order: int = 16384) -> dict:
    """Sup-norm errors of the two quotient identities and the mean of w_hat."""
    hw, hat_mean, params = _hat_w_resolved(w, params, 8 * w.N, max_order)
    w = w.resized(params.N)
    M = params.M
    kh = params.kh
    ck = trig_core.ckh_apply
    d = trig_core.differentiate
    w1, w2 = d(w), d(d(w))
    cw1, cw2 = ck(w1, kh).grid(M).values, ck(w2, kh).grid(M).values
    W = w1.grid(M).values ** 2 + (1 + cw1) ** 2
    lhs = w2.grid(M).values
    rhs = w1.grid(M).values * ck(hw, kh).grid(M).values + (1 + cw1) * hw.grid(M).values
    c_direct = ck(hw, kh).grid(M).values
    c_formula = (cw2 * (1 + cw1) + w1.grid(M).values * w2.grid(M).values) / W
    return {"w2_identity": _sup(lhs - rhs), "c_identity": _sup(c_direct - c_formula),
            "hat_mean": abs(hat_mean), "positivity": float(np.mean((1 + cw1) / W)), "order": params.N}


def check_trivial(params, rng) -> CheckResult:
    lams = rng.uniform(-10, 10, 20)
    r = wave_operators.residual_batch(lams, np.zeros((lams.size, params.N)), params)
    err = float(np.abs(r.F).max())
    return CheckResult("trivial branch", err <= 1e-14, f"max |F(lam, 0)| = {err:.2e}")


def check_jacobian(params, rng) -> CheckResult:
    p = params.replace(N=min(params.N, 32))
    worst_d = worst_o = 0.0
    for lam in rng.uniform(-5, 5, 2):
        diag = linear_analysis.jacobian_check(float(lam), p)
        worst_d = max(worst_d, diag.diagonal_error)
        worst_o = max(worst_o, diag.offdiag_max)
    ok = worst_d <= 1e-6 and worst_o <= 1e-8
    return CheckResult("linearisation", ok, f"diagonal error {worst_d:.2e}, off-diagonal {worst_o:.2e}")


def check_identities(params, rng, samples: int = 10) -> CheckResult:
    worst = {"w2_identity": 0.0, "c_identity": 0.0, "hat_mean": 0.0}
    min_pos = np.inf
    for _ in range(samples):
        w = random_admissible_profile(rng, params)
        e = identity_errors(w, params)
        for key in worst:
            worst[key] = max(worst[key], e[key])
        min_pos = min(min_pos, e["positivity"])
    ok = (worst["w2_identity"] <= 1e-9 and worst["c_identity"] <= 1e-9 and worst["hat_mean"] <= 1e-10
          and min_pos > 0)
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + f", min positivity mean {min_pos:.3g}"
    return CheckResult("quotient identities", ok, detail)


def check_mean_condition(params, rng, samples: int = 10) -> CheckResult:
    """[E] = 0 with Q from its own formula, on random profiles and random lam."""
    worst = 0.0
    for _ in range(samples):
        w = random_admissible_profile(rng, params)
        lam = float(rng.uniform(-5, 5))
        r = wave_operators.residual_batch([lam], w.cos[None, :], params, check_alias=False)
        worst = max(worst, float(abs(r.E_mean[0]) / (1 + abs(r.Q[0]))))
    return CheckResult("mean condition", worst <= 1e-10, f"max |[E]|/(1+|Q|) = {worst:.2e}")


def point_checks(lam: float, w: TrigSeries, params, tol: float = 1e-12) -> dict:
    """Both residual forms plus the physical reconstruction at a candidate solution."""
    m = float(params.m_from_lambda(lam))
    F = wave_operators.residual_F(lam, w, params)
    res_F = F.sup_norm(params.M)
    Q = wave_operators.q_value(lam, w, params)
    res_2a = wave_operators.residual_eqn2a(m, Q, w, params).sup()
    res_2a_off = wave_operators.residual_eqn2a(m, Q + 1e-3, w, params).sup()
    sol = reconstruction.reconstruct(m, w, params)
    bed, top = sol.boundary_errors()
    bern = reconstruction.bernoulli_residual(sol).sup()
    adm = reconstruction.admissibility(w, params)
    return {"residual_F": res_F, "residual_2a": res_2a, "residual_2a_perturbed": res_2a_off,
            "bed": bed, "surface": top, "bernoulli": bern, "admissible": adm.ok,
            "converged": res_F <= tol * (1 + w.sup_norm(params.M))}


def check_branch_point(params, rng) -> CheckResult:
    """Switch onto the first branch and run every check on the resulting point."""
    bp = linear_analysis.bifurcation_point(1, 1, params)
    pt = continuation.switch_branch(bp, params, s0=1e-3)
    c = point_checks(pt.lam, pt.w, params)
    ok = (c["converged"] and c["residual_2a"] <= 1e-8 and c["residual_2a_perturbed"] >= 1e-4
          and max(c["bed"], c["surface"]) <= 1e-9 and c["bernoulli"] <= 1e-6 and c["admissible"])
    detail = ", ".join(f"{k} {v:.2e}" for k, v in c.items() if isinstance(v, float))
    return CheckResult("equivalence on a computed point", ok, detail)


def check_records(params, records, tol: float) -> CheckResult:
    worst_F = worst_2a = 0.0
    for rec in records:
        w = TrigSeries.from_cos(rec["coeffs"])
        F = wave_operators.residual_F(rec["lambda"], w, params).sup_norm(params.M)
        worst_F = max(worst_F, F / (1 + w.sup_norm(params.M)))
        Q = wave_operators.q_value(rec["lambda"], w, params)
        worst_2a = max(worst_2a, wave_operators.residual_eqn2a(rec["m"], Q, w, params).sup())
    ok = worst_F <= tol and worst_2a <= 1e-8
    return CheckResult(f"stored points ({len(records)})", ok,
                       f"max scaled residual {worst_F:.2e}, max divided-form residual {worst_2a:.2e}")


DEFAULT_CHECKS = {
    "trivial branch": check_trivial,
    "linearisation": check_jacobian,
    "quotient identities": check_identities,
    "mean condition": check_mean_condition,
    "equivalence on a computed point": check_branch_point,
}


def run_suite(params, seed: int = 0, branches=()) -> list[CheckResult]:
    """Run the built-in checks and re-validate stored branches (pairs of params, records)."""
    rng = np.random.default_rng(seed)
    results = []
    for name, check in DEFAULT_CHECKS.items():
        try:
            results.append(check(params, rng))
        except (CapwaveError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            results.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))
    for bparams, records, tol in branches:
        try:
            results.append(check_records(bparams, records, tol))
        except (CapwaveError, ValueError) as exc:
            results.append(CheckResult("stored points", False, f"{type(exc).__name__}: {exc}"))
    return results
