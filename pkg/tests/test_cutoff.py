import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exterior_blowup.cutoff import (BOUNDARY_BAND, CutoffSpec, derivative_ratios, estimate_constants,
                                    in_region, layer_integral, log_compatible, psi_eval)
from exterior_blowup.errors import DomainError, InputError

# int_{1/2}^1 eta(s)^k / s ds at 30 digits (mpmath), k = 2p'
LAYER_P15_S0 = 0.228575983985213958
LAYER_P2_S0 = 0.260763151401886242
LAYER_P2_S075 = 0.00222464293292047370


@pytest.fixture(scope="module")
def spec():
    return CutoffSpec(p=1.5)


class TestProfile:
    def test_plateaus(self, spec):
        s = np.array([0.0, 0.25, 0.5, 1.0, 1.5])
        assert spec.eta(s) == pytest.approx([1, 1, 1, 0, 0])
        assert np.all(spec.eta_star(np.array([0.0, 0.49])) == 0)

    def test_decreasing_between(self, spec):
        s = np.linspace(0.5, 1.0, 501)
        assert np.all(np.diff(spec.eta(s)) <= 0)

    @pytest.mark.parametrize("junction", [0.5, 1.0])
    def test_c2_junction(self, spec, junction):
        # one-sided FD second derivatives from both sides converge to the same value (0)
        errs = []
        for h in (1e-2, 5e-3, 2.5e-3):
            left = (spec.eta(junction) - 2 * spec.eta(junction - h) + spec.eta(junction - 2 * h)) / h**2
            right = (spec.eta(junction + 2 * h) - 2 * spec.eta(junction + h) + spec.eta(junction)) / h**2
            errs.append(abs(left - right))
        assert errs[-1] < errs[0]
        assert errs[0] / errs[1] > 1.8 and errs[1] / errs[2] > 1.8
        assert spec.eta_d1(junction) == 0 and spec.eta_d2(junction) == 0


class TestPsiEval:
    def test_inner_region(self, spec):
        assert psi_eval(spec, 4.0, 1.5, 0.5, "Psi") == 1.0
        assert psi_eval(spec, 4.0, 1.5, 0.5, "Dt") == 0.0

    @pytest.mark.parametrize("what", ["Psi", "PsiStar", "Dt", "Dtt", "Dr", "Lap"])
    def test_outside(self, spec, what):
        assert psi_eval(spec, 4.0, 4.0, 10.0, what) == 0.0

    @pytest.mark.parametrize("what, dt, dr", [("Dt", 1, 0), ("Dr", 0, 1)])
    def test_first_derivatives_fd(self, spec, what, dt, dr):
        R, r, t, h = 4.0, 2.0, 1.2, 1e-5
        fd = (psi_eval(spec, R, r + dr * h, t + dt * h) - psi_eval(spec, R, r - dr * h, t - dt * h)) / (2 * h)
        assert psi_eval(spec, R, r, t, what) == pytest.approx(fd, rel=1e-6)

    def test_second_derivatives_fd(self, spec):
        R, r, t, h = 4.0, 2.0, 1.2, 1e-4
        f = lambda rr, tt: psi_eval(spec, R, rr, tt)
        dtt = (f(r, t + h) - 2 * f(r, t) + f(r, t - h)) / h**2
        drr = (f(r + h, t) - 2 * f(r, t) + f(r - h, t)) / h**2
        dr = (f(r + h, t) - f(r - h, t)) / (2 * h)
        assert psi_eval(spec, R, r, t, "Dtt") == pytest.approx(dtt, rel=1e-6)
        assert psi_eval(spec, R, r, t, "Lap") == pytest.approx(drr + dr / r, rel=1e-6)

    def test_domain_errors(self, spec):
        with pytest.raises(DomainError):
            psi_eval(spec, 4.0, 0.5, 0.0)
        with pytest.raises(DomainError):
            psi_eval(spec, 4.0, 2.0, -1.0)
        with pytest.raises(InputError):
            psi_eval(spec, 4.0, 2.0, 1.0, "Grad")

    @given(st.floats(1.0, 20.0), st.floats(0.0, 30.0), st.floats(0.5, 50.0), st.floats(1.0, 4.0))
    @settings(max_examples=200)
    def test_nesting_and_domination(self, r, t, R1, factor):
        spec = CutoffSpec(1.5)
        R2 = R1 * factor
        assert psi_eval(spec, R1, r, t) <= psi_eval(spec, R2, r, t) + 1e-15
        assert psi_eval(spec, R1, r, t, "PsiStar") <= psi_eval(spec, R1, r, t)
        if not in_region(R1, r, t):
            assert psi_eval(spec, R1, r, t) == 0.0


class TestConstants:
    @pytest.mark.parametrize("p", [1.5, 2.0])
    def test_zero_on_inner_region(self, p):
        spec = CutoffSpec(p)
        R = 10.0
        r = np.linspace(1.01, 1 + math.sqrt(R / 2) - 0.01, 50)
        ratios = derivative_ratios(spec, R, r, np.zeros_like(r))
        assert all(np.all(v == 0) for v in ratios.values())

    def test_finite_and_stable_across_R(self, spec):
        cons = estimate_constants(spec, (10.0, 100.0, 1000.0), 100_000, seed=0)
        for key in ("C1", "C2", "C3", "C4"):
            vals = [d[key] for _, d in cons.per_R]
            assert np.isfinite(vals).all() and min(vals) > 0
            assert (max(vals) - min(vals)) / max(vals) < 0.05

    def test_multi_R_close_to_dense_single_R(self, spec):
        multi = estimate_constants(spec, (10.0, 100.0, 1000.0), 100_000, seed=1)
        dense = estimate_constants(spec, (10.0,), 1_000_000, seed=2)
        for key in ("C1", "C2", "C3", "C4"):
            assert getattr(multi, key) == pytest.approx(getattr(dense, key), rel=0.05)

    def test_safety_factor(self, spec):
        a = estimate_constants(spec, (10.0,), 5000, seed=3, safety=1.0)
        b = estimate_constants(spec, (10.0,), 5000, seed=3, safety=1.1)
        assert b.C4 == pytest.approx(1.1 * a.C4)

    def test_log_weight_ratio_matches_raw_in_2d(self, spec):
        cons = estimate_constants(spec, (10.0,), 20_000)
        assert cons.C3 == pytest.approx(cons.C3_raw, rel=1e-9)

    @pytest.mark.parametrize("kw", [{"sample_density": 10}, {"R_list": ()}, {"R_list": (0.5,)}])
    def test_invalid(self, spec, kw):
        with pytest.raises(InputError):
            estimate_constants(spec, **{"R_list": (10.0,), "sample_density": 2000, **kw})

    def test_boundary_band(self):
        assert BOUNDARY_BAND == 1e-8


class TestLogCompatible:
    def test_dense_grid(self):
        r = np.concatenate([1 + np.geomspace(1e-12, 1e-2, 2000), np.linspace(1.01, 1e3, 200_000)])
        assert log_compatible(r).all()

    def test_boundary_ratio_limit(self):
        r = 1 + np.geomspace(1e-7, 1.0, 50)
        assert np.all((1 - 1 / r) / np.log(r) <= 1 + 1e-12)


class TestLayerIntegral:
    def test_oracles(self):
        assert layer_integral(CutoffSpec(1.5), 0.0) == pytest.approx(LAYER_P15_S0, rel=1e-10)
        assert layer_integral(CutoffSpec(2.0), 0.0) == pytest.approx(LAYER_P2_S0, rel=1e-10)
        assert layer_integral(CutoffSpec(2.0), 0.75) == pytest.approx(LAYER_P2_S075, rel=1e-9)

    def test_limits(self, spec):
        assert layer_integral(spec, 1.0) == 0.0
        assert 0 < layer_integral(spec, 0.0) < math.log(2)
        assert layer_integral(spec, 0.75) < math.log(4 / 3)

    def test_vectorized_matches_scalar(self, spec):
        s = np.linspace(0, 1.2, 37)
        vec = layer_integral(spec, s)
        assert vec == pytest.approx([layer_integral(spec, float(x)) for x in s], rel=1e-9, abs=1e-12)

    def test_negative(self, spec):
        with pytest.raises(DomainError):
            layer_integral(spec, -0.1)
