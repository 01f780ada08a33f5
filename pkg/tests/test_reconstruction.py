import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from capwave import linear_analysis as la
from capwave import reconstruction as rec
from capwave.continuation import ContinuationConfig, switch_branch, trace_branch
from capwave.errors import StagnantConfiguration
from capwave.trig_core import TrigSeries
from capwave.verification import random_decaying_profile
from capwave.wave_operators import FlowParameters, residual_eqn2a


def mp_extension(top: TrigSeries, kh, bottom, x, y):
    """Direct mpmath sum of the strip harmonic with the given traces."""
    total = mpmath.mpf(top.mean) + (top.mean - bottom) / kh * y
    for n in range(1, top.N + 1):
        r = mpmath.sinh(n * (y + kh)) / mpmath.sinh(n * kh)
        total += r * (top.cos[n - 1] * mpmath.cos(n * x) + top.sin[n - 1] * mpmath.sin(n * x))
    return float(total)


class TestStripHarmonic:
    def test_against_mpmath(self, rng):
        top = TrigSeries(0.3, rng.standard_normal(6) * 0.5 ** np.arange(6), rng.standard_normal(6) * 0.1)
        H = rec.harmonic_extension(top, 1.3, bottom_value=-0.7)
        for x, y in rng.uniform([0, -1.3], [2 * np.pi, 0], size=(10, 2)):
            assert H(x, y) == pytest.approx(mp_extension(top, 1.3, -0.7, x, y), abs=1e-14)

    def test_traces(self, rng):
        top = random_decaying_profile(rng, 16, 0.3)
        H = rec.harmonic_extension(top, 0.8, bottom_value=2.0)
        x = np.linspace(0, 2 * np.pi, 50)
        np.testing.assert_allclose(H(x, 0 * x), top(x), atol=1e-14)
        np.testing.assert_allclose(H(x, 0 * x - 0.8), 2.0, atol=1e-14)

    def test_laplacian_and_conjugate(self, rng):
        top = random_decaying_profile(rng, 12, 0.4)
        H = rec.harmonic_extension(top, 1.0, bottom_value=-1.0)
        x, y = rng.uniform(0, 2 * np.pi, 50), rng.uniform(-0.9, -0.1, 50)

        def five_point(e):
            return (H(x + e, y) + H(x - e, y) + H(x, y + e) + H(x, y - e) - 4 * H(x, y)) / e**2

        lap = (4 * five_point(1e-3) - five_point(2e-3)) / 3  # Richardson, fourth order
        assert np.abs(lap).max() <= 1e-6
        # Cauchy-Riemann: U_x = W_y, U_y = -W_x
        e = 1e-6
        Ux = (H.conjugate(x + e, y) - H.conjugate(x - e, y)) / (2 * e)
        Uy = (H.conjugate(x, y + e) - H.conjugate(x, y - e)) / (2 * e)
        wx, wy = H.gradient(x, y)
        assert np.abs(Ux - wy).max() <= 1e-8
        assert np.abs(Uy + wx).max() <= 1e-8

    def test_deep_strip_is_stable(self):
        H = rec.harmonic_extension(TrigSeries.from_modes(200, cos={200: 1.0}), 50.0)
        vals = H(np.array([0.0, 0.0]), np.array([0.0, -1.0]))
        assert vals[0] == pytest.approx(1.0) and vals[1] == pytest.approx(math.exp(-200), rel=1e-10)

    def test_bad_depth(self):
        with pytest.raises(ValueError):
            rec.harmonic_extension(TrigSeries.zeros(2), 0.0)


class TestConformalMap:
    def test_flat(self, params):
        f = rec.conformal_map(TrigSeries.zeros(params.N), params)
        x, y = np.array([0.3, 2.0]), np.array([-0.5, -0.1])
        X, Y = f(x, y)
        np.testing.assert_allclose(X, x / params.k, atol=1e-15)
        np.testing.assert_allclose(Y, y / params.k, atol=1e-15)

    def test_jacobian_matches_wkh(self, rng):
        p = FlowParameters(h=1.2, k=0.8, g=9.81, gamma=1.0, sigma=0.1, N=16)
        w = random_decaying_profile(rng, 16, 0.2)
        f = rec.conformal_map(w, p)
        t = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        d = f.derivative(t, 0 * t)
        Wkh = rec._surface_wkh(w, p.kh, 64)
        np.testing.assert_allclose(np.abs(d) ** 2, Wkh / p.k**2, atol=1e-10)

    def test_boundaries(self, rng, params):
        w = random_decaying_profile(rng, params.N, 0.2)
        f = rec.conformal_map(w, params)
        t = np.linspace(0, 2 * np.pi, 40)
        _, Yb = f(t, 0 * t - params.kh)
        np.testing.assert_allclose(Yb, -params.h, atol=1e-14)
        Xs, Ys = f(t, 0 * t)
        np.testing.assert_allclose(Ys, w(t) / params.k, atol=1e-14)
        from capwave.trig_core import ckh_apply
        np.testing.assert_allclose(Xs, (t + ckh_apply(w, params.kh)(t)) / params.k, atol=1e-13)

    def test_stagnant_refused(self, params):
        w = TrigSeries.from_modes(params.N, cos={1: math.tanh(params.kh)})
        with pytest.raises(StagnantConfiguration):
            rec.conformal_map(w, params)


class TestStreamFunction:
    def test_laminar(self):
        p = FlowParameters(h=1.5, k=1.0, g=9.81, gamma=2.0, sigma=0.1, N=8)
        m = 0.7
        psi = rec.stream_function(m, TrigSeries.zeros(8), p)
        y = np.linspace(-p.kh, 0, 7)
        Y = y / p.k
        # laminar flow: psi = -gamma Y^2/2 + (m/h - gamma h/2) Y... fixed by psi(0) = 0, psi(-h) = -m
        expected = -0.5 * p.gamma * Y**2 + (m / p.h - 0.5 * p.gamma * p.h) * Y
        np.testing.assert_allclose(psi(0 * y + 1.0, y), expected, atol=1e-14)

    def test_boundary_values_and_equation(self, rng, params):
        w = random_decaying_profile(rng, params.N, 0.25)
        sol = rec.reconstruct(0.9, w, params)
        bed, top = sol.boundary_errors()
        assert bed <= 1e-9 and top <= 1e-9
        x, y = rng.uniform(0, 2 * np.pi, 100), rng.uniform(-0.9, -0.1, 100)
        assert np.abs(sol.psi.laplacian_residual(x, y)).max() <= 1e-5


class TestBernoulli:
    def test_flat(self, params):
        lam = 1.3
        sol = rec.reconstruct(params.m_from_lambda(lam), TrigSeries.zeros(params.N), params)
        assert sol.Q == pytest.approx(lam**2, abs=1e-14)
        assert rec.bernoulli_residual(sol).sup() <= 1e-13

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_on_solutions(self, params, n):
        pt = switch_branch(la.bifurcation_point(n, 1, params), params, 1e-2)
        sol = rec.reconstruct(pt.m, pt.w, params)
        assert sol.Q == pytest.approx(pt.Q, rel=1e-13)
        assert rec.bernoulli_residual(sol).sup() <= 1e-9
        assert rec.bernoulli_residual(sol, pt.Q + 1e-3).sup() >= 0.9e-3

    def test_tracks_divided_form(self, params, rng):
        # off-solution, Bernoulli and the divided form fail together
        for _ in range(3):
            w = random_decaying_profile(rng, params.N, 0.05, rho=0.4)
            m = params.m_from_lambda(2.0)
            sol = rec.reconstruct(m, w, params)
            b = rec.bernoulli_residual(sol).sup()
            d = residual_eqn2a(m, sol.Q, w, params).sup()
            assert b > 1e-3 and d > 1e-3


class TestAdmissibility:
    def test_flat(self, params):
        r = rec.admissibility(TrigSeries.zeros(params.N), params)
        assert r.ok and r.intersecting_pairs == 0
        assert r.above_bed_margin == params.kh
        assert r.injectivity_margin == pytest.approx(2 * np.pi / params.M, rel=1e-12)

    def test_below_bed(self):
        p = FlowParameters(h=1.0, k=1.0, g=9.81, gamma=0.0, sigma=0.1, N=8)
        r = rec.admissibility(TrigSeries.from_modes(8, cos={1: 1.1}), p)
        assert not r.above_bed and not r.ok

    def test_injectivity_threshold(self):
        # t -> (t + A coth(kh) sin t, A cos t) first self-touches at A = tanh(kh)
        p = FlowParameters(h=0.7, k=1.0, g=9.81, gamma=0.0, sigma=0.1, N=8, M=512)

        def crosses(A):
            return rec.admissibility(TrigSeries.from_modes(8, cos={1: A}), p).intersecting_pairs - 0.5

        A = brentq(crosses, 0.3, 0.99, xtol=1e-5)
        assert A == pytest.approx(math.tanh(p.kh), rel=2e-3)

    def test_overturning_profile(self):
        p = FlowParameters(h=1.0, k=1.0, g=9.81, gamma=0.0, sigma=0.1, N=8, M=1024)
        r = rec.admissibility(TrigSeries.from_modes(8, cos={1: 0.9}), p)
        assert not r.injective and r.intersecting_pairs > 0

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.0, 0.5))
    def test_margins_shrink_with_amplitude(self, a):
        p = FlowParameters(h=1.0, k=1.0, g=9.81, gamma=0.0, sigma=0.1, N=4, M=256)
        r1 = rec.admissibility(TrigSeries.from_modes(4, cos={1: a}), p)
        r2 = rec.admissibility(TrigSeries.from_modes(4, cos={1: a + 0.1}), p)
        assert r2.above_bed_margin < r1.above_bed_margin
        assert r2.min_wkh < r1.min_wkh + 1e-15


def test_computed_branch_is_admissible(params):
    br = trace_branch(params, 1, 1, config=ContinuationConfig(max_points=8))
    for pt in br.points:
        sol = rec.reconstruct(pt.m, pt.w, params)
        assert max(sol.boundary_errors()) <= 1e-9
        assert rec.bernoulli_residual(sol).sup() <= 1e-6
        assert rec.admissibility(pt.w, params).ok
