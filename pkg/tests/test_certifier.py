import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from exterior_blowup import odi
from exterior_blowup.certifier import (CHAIN_COLUMNS, CertifierOptions, WeightPhi, assemble_C5,
                                       certify, criterion_data, exponents, inequality_chain,
                                       truncated_moment, weak_residual, weighted_functionals,
                                       write_certificate_json, write_chain_csv)
from exterior_blowup.errors import (AdmissibilityError, ConfigError, DomainError, HorizonError,
                                    InputError)
from exterior_blowup.model import InitialData, ModelParams, initial_moment
from exterior_blowup.solver import RadialGrid, SolverOptions, Trajectory, evolve


def _zero_traj(params, t_end=50.0):
    r = np.linspace(1.0, 30.0, 581)
    t = np.linspace(0.0, t_end, 201)
    return Trajectory(params=params, r=r, snap_t=t, snap_u=np.zeros((t.size, r.size), complex),
                      t=t, dt=np.r_[0.0, np.diff(t)], maxnorm=np.zeros(t.size),
                      boundary_leak=0.0, stop_reason="t_end", dt_initial=t[1])


class TestWeight:
    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_harmonic(self, n):
        r = np.linspace(1.0, 6.0, 2001)
        phi = WeightPhi(n)
        assert phi(1.0) == pytest.approx(0.0, abs=1e-15)
        assert np.max(np.abs(phi.discrete_laplacian(r))) < 1e-4

    @given(st.floats(1.0, 1e6))
    def test_positive_increasing(self, r):
        phi = WeightPhi(2)
        assert phi(r) >= 0 and phi.dr(r) > 0


class TestExponents:
    @pytest.mark.parametrize("p, n, expected", [
        (2.0, 2, (0.0, 1.0)), (1.5, 2, (1.0, 1.0)), (1.25, 2, (3.0, 1.0)),
        (1.5, 3, (0.5, 0.0)), (1.5, 4, (0.0, 0.0)),
    ])
    def test_values(self, p, n, expected):
        assert exponents(ModelParams(p=p, dimension=n)) == pytest.approx(expected)

    @pytest.mark.parametrize("p, n", [(2.5, 2), (1.7, 3)])
    def test_out_of_range(self, p, n):
        with pytest.raises(DomainError):
            exponents(ModelParams(p=p, dimension=n))

    def test_assemble_C5(self):
        c = {"C1": 1.0, "C2": 2.0, "C3": 3.0, "C4": 4.0}
        assert assemble_C5(c, 0, math.e) == 11.0
        assert assemble_C5(c, 1, 2.0) == 12.0
        with pytest.raises(ConfigError):
            assemble_C5({"C1": 1.0}, 0, math.e)


class TestFunctionals:
    def test_zero_solution(self, heat_params):
        assert weighted_functionals(_zero_traj(heat_params), 1.5, 10.0) == (0.0, 0.0)

    def test_ordering_and_growth(self, heat_run):
        traj, est = heat_run
        vals = [weighted_functionals(traj, 1.5, R) for R in (3.0, 6.0, 12.0, 20.0)]
        for A, A_star in vals:
            assert 0 < A_star <= A
        As = [a for a, _ in vals]
        assert all(b > a for a, b in zip(As, As[1:]))

    def test_refinement(self, heat_params, bump, heat_run):
        fine = evolve(heat_params, bump, RadialGrid.from_spacing(30.0, 0.025), SolverOptions())
        for R in (5.0, 15.0):
            a = weighted_functionals(heat_run[0], 1.5, R)
            b = weighted_functionals(fine, 1.5, R)
            assert a == pytest.approx(b, rel=0.01)

    def test_horizon(self, heat_params):
        with pytest.raises(HorizonError):
            weighted_functionals(_zero_traj(heat_params, t_end=5.0), 1.5, 10.0)

    def test_truncated_moment_converges(self, heat_params, bump):
        full = initial_moment(bump, heat_params)
        assert truncated_moment(bump, heat_params, 1e3) == pytest.approx(full, rel=1e-9)
        assert abs(truncated_moment(bump, heat_params, 0.5)) < abs(full)

    def test_weak_residual_small(self, heat_run, heat_params, bump):
        for R in (5.0, 20.0):
            assert weak_residual(heat_run[0], heat_params, bump, R) < 1e-2


class TestCertify:
    def test_reference(self, heat_params, bump):
        rep = certify(heat_params, bump)
        assert rep.theta == 1.0 and rep.kappa == 1.0
        assert rep.c0 > 0 and rep.delta == pytest.approx(rep.c0 / math.cos(rep.angle.xi0))
        assert rep.C6 > rep.constants["C5"] > 0
        assert rep.odi_bound.case_tag == "Algebraic"
        assert rep.dominates(30.0)
        assert "theorem" in rep.theorem_bound_display

    def test_critical(self, bump):
        rep = certify(ModelParams(p=2.0, epsilon=0.5), InitialData.bump(1.2, 2.2, 10.0))
        assert rep.theta == 0.0 and rep.kappa == 1.0
        assert rep.odi_bound.case_tag == "DoubleExp"
        assert rep.theorem_bound_display["theorem"] == "exp(exp(C/eps))"

    def test_higher_dimension(self, bump):
        rep = certify(ModelParams(p=1.5, dimension=3), bump)
        assert (rep.theta, rep.kappa) == (0.5, 0.0)
        assert math.isfinite(rep.odi_bound.log_T)

    def test_delta_linear_in_eps(self, bump):
        a = certify(ModelParams(p=1.5, epsilon=0.2), bump)
        b = certify(ModelParams(p=1.5, epsilon=0.4), bump)
        assert b.delta == pytest.approx(2 * a.delta, rel=1e-12)
        assert b.odi_bound.log_T < a.odi_bound.log_T

    def test_rotated_lambda(self, bump):
        rep = certify(ModelParams(p=1.5, lam=complex(1, 1)), bump)
        assert rep.c0 > 0 and abs(rep.angle.xi0) < math.pi / 2

    def test_errors(self, bump):
        with pytest.raises(InputError):
            certify(ModelParams(lam=0.0), bump)
        with pytest.raises(DomainError):
            certify(ModelParams(p=2.5), bump)
        with pytest.raises(AdmissibilityError):
            certify(ModelParams(p=1.5, lam=-1.0), bump)
        with pytest.raises(ConfigError):
            certify(ModelParams(p=1.5), bump, CertifierOptions(R0=2.0))

    def test_json(self, heat_params, bump, tmp_path):
        path = tmp_path / "certificate.json"
        write_certificate_json(certify(heat_params, bump), path)
        data = json.loads(path.read_text())
        assert data["odi_bound"]["case_tag"] == "Algebraic"
        assert {"C1", "C2", "C3", "C4", "C5", "C6"} <= set(data["constants"])


class TestChain:
    R_LIST = (math.e, 5.0, 10.0, 20.0)

    def test_passes(self, heat_run, heat_params, bump):
        rows = inequality_chain(heat_run[0], heat_params, bump, self.R_LIST)
        assert [row["R"] for row in rows] == sorted(self.R_LIST)
        for row in rows:
            assert row["passed"] and row["lhs"] <= row["rhs"]
            assert row["A_star"] <= row["A"]

    def test_zero_solution_fails(self, heat_params, bump):
        rows = inequality_chain(_zero_traj(heat_params), heat_params, bump, (10.0,))
        assert rows[0]["rhs"] == 0.0 and not rows[0]["passed"]

    def test_lhs_scales_with_eps(self, heat_params, bump):
        zp = ModelParams(p=1.5, epsilon=0.5)
        a = inequality_chain(_zero_traj(zp), zp, bump, (10.0,))[0]["lhs"]
        b = inequality_chain(_zero_traj(heat_params), heat_params, bump, (10.0,))[0]["lhs"]
        assert b == pytest.approx(2 * a)

    def test_below_R0(self, heat_run, heat_params, bump):
        with pytest.raises(DomainError):
            inequality_chain(heat_run[0], heat_params, bump, (2.0,))

    def test_criterion_matches(self, heat_run, heat_params, bump):
        rep = certify(heat_params, bump)
        crit = odi.verify_criterion(criterion_data(heat_run[0], heat_params, self.R_LIST),
                                    rep.odi_params)
        assert crit.passed

    def test_csv(self, heat_run, heat_params, bump, tmp_path):
        rows = inequality_chain(heat_run[0], heat_params, bump, self.R_LIST)
        path = tmp_path / "chain.csv"
        write_chain_csv(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0].split(",") == list(CHAIN_COLUMNS)
        assert len(lines) == len(rows) + 1
