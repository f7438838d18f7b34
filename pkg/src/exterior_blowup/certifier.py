"""Test-function certification of a lifespan upper bound.

The weak form is paired with Phi * psi_R, where Phi is the harmonic weight that
vanishes on r = 1. Projecting onto the angle xi0 gives, for every admissible
solution and R >= R0,

    c0 eps + cos(xi0) A_R <= C5 / (|lam| R) * |Phi P(R)|^(1/p') * (A*_R)^(1/p),

with A_R = iint |u|^p Phi psi_R and A*_R the same with psi*_R. Dividing by
cos(xi0) puts this into the form handled by ``odi``; the resulting bound
depends on the parameters and the data only.
"""

from __future__ import annotations

import cmath
import csv
import functools
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import integrate

from . import odi
from .cutoff import CutoffConstants, CutoffSpec, estimate_constants
from .errors import (AdmissibilityError, ConfigError, DomainError, HorizonError,
                     InputError)
from .model import (AngleCertificate, InitialData, ModelParams, choose_angle,
                    harmonic_weight, harmonic_weight_dr, initial_moment, radial_measure)
from .quadrature import phi_mass, phi_mass_bound, trapezoid_space_time
from .solver import Trajectory


@dataclass(frozen=True)
class WeightPhi:
    """Harmonic weight log r (N = 2) or 1 - r^(2-N) (N >= 3)."""

    dimension: int = 2

    def __call__(self, r):
        return harmonic_weight(r, self.dimension)

    def dr(self, r):
        return harmonic_weight_dr(r, self.dimension)

    def discrete_laplacian(self, r):
        """Centered radial Laplacian of Phi on interior nodes of a uniform grid."""
        r = np.asarray(r, dtype=float)
        h = r[1] - r[0]
        w = self(r)
        rr = r[1:-1]
        return ((w[2:] - 2 * w[1:-1] + w[:-2]) / h**2
                + (self.dimension - 1) / rr * (w[2:] - w[:-2]) / (2 * h))


@dataclass(frozen=True)
class CertifierOptions:
    R0: float = math.e
    margin: float = 0.1
    R_list: tuple = (10.0, 100.0, 1000.0)
    sample_density: int = 100_000
    seed: int = 0
    safety: float = 1.1
    c6_R_max: float = 1e12
    c6_grid: int = 400
    delta0: float = 0.1
    closed_form: bool = True
    moment_grid: int = 64


@dataclass
class CertificateReport:
    params: ModelParams
    angle: AngleCertificate
    c0: float
    constants: dict
    theta: float
    kappa: float
    delta: float
    R0: float
    odi_params: odi.ODIParams
    odi_bound: odi.ODIBound
    closed_form: Optional[odi.ODIBound] = None
    theorem_bound_display: dict = field(default_factory=dict)
    chain_residuals: list = field(default_factory=list)

    @property
    def C6(self) -> float:
        return self.constants["C6"]

    def dominates(self, T: float) -> bool:
        return self.odi_bound.dominates(T)

    def as_dict(self) -> dict:
        par = self.params
        return {
            "params": {"tau": par.tau, "zeta": par.zeta, "lam": [par.lam.real, par.lam.imag],
                       "p": par.p, "epsilon": par.epsilon, "dimension": par.dimension},
            "angle": {"xi0": self.angle.xi0, "c0_full": self.angle.c0,
                      "moment": [self.angle.moment.real, self.angle.moment.imag]},
            "c0": self.c0,
            "constants": {k: odi._json_float(v) for k, v in self.constants.items()},
            "theta": self.theta,
            "kappa": self.kappa,
            "delta": self.delta,
            "R0": self.R0,
            "odi_bound": self.odi_bound.as_dict(),
            "closed_form": None if self.closed_form is None else self.closed_form.as_dict(),
            "theorem_bound_display": self.theorem_bound_display,
            "chain_residuals": self.chain_residuals,
        }


def write_certificate_json(report: CertificateReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)


CHAIN_COLUMNS = ("R", "A", "A_star", "lhs", "mid", "rhs", "slack", "rel_slack", "passed")


def write_chain_csv(rows: Sequence[Mapping], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CHAIN_COLUMNS)
        for row in rows:
            w.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in CHAIN_COLUMNS])


def exponents(params: ModelParams) -> tuple:
    """(theta, kappa) for the weight mode; raises outside the blow-up range."""
    p, n = params.p, params.dimension
    if n == 2:
        if p > 2:
            raise DomainError("p > 2 lies outside the blow-up range for the log weight")
        return (2.0 - p) / (p - 1.0), 1.0
    crit = 1.0 + 2.0 / n
    if p > crit:
        raise DomainError(f"p > 1 + 2/N = {crit:.6g} lies outside the blow-up range")
    return max(1.0 / (p - 1.0) - n / 2.0, 0.0), 0.0


@functools.lru_cache(maxsize=16)
def _constants(p, dimension, R_list, sample_density, seed, safety) -> CutoffConstants:
    return estimate_constants(CutoffSpec(p, dimension), R_list, sample_density, seed, safety)


def cutoff_constants(params: ModelParams, opts: CertifierOptions) -> CutoffConstants:
    return _constants(float(params.p), params.dimension, tuple(float(x) for x in opts.R_list),
                      int(opts.sample_density), int(opts.seed), float(opts.safety))


def assemble_C5(constants: Mapping, tau: int, R0: float) -> float:
    missing = [k for k in ("C1", "C2", "C3", "C4") if k not in constants]
    if missing:
        raise ConfigError(f"cutoff constants missing: {', '.join(missing)}")
    return (2.0 * constants["C3"] + constants["C4"] + tau * constants["C2"] / R0
            + constants["C1"])


def c6_factor(p: float, theta: float, kappa: float, dimension: int, R0: float,
              R_max: float = 1e12, n: int = 400) -> float:
    """sup over R >= R0 of bound(R)^(1/p') R^(-1) / (R^(-theta/p') (log R)^(kappa/p'))."""
    pc = p / (p - 1.0)
    grid = np.geomspace(R0, max(R_max, 10 * R0), n)
    vals = [phi_mass_bound(R, dimension) ** (1.0 / pc) / R
            / (R ** (-theta / pc) * math.log(R) ** (kappa / pc)) for R in grid]
    return float(max(vals))


def truncated_moment(data: InitialData, params: ModelParams, R: float, rtol: float = 1e-10) -> complex:
    """Moment of the data against Phi psi_R(., 0), including the -tau f d_t psi_R(., 0) term."""
    spec = CutoffSpec(params.p, params.dimension)
    n = params.dimension
    rot = cmath.exp(1j * params.zeta)
    lo, hi = data.support
    hi = min(hi, 1.0 + math.sqrt(R))
    if hi <= lo:
        return 0j

    def integrand(r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        v = spec.evaluate(R, r, np.zeros_like(r))
        f = np.asarray(data.f(r), dtype=complex)
        g = np.asarray(data.g(r), dtype=complex)
        val = (params.tau * g + rot * f) * v["Psi"] - params.tau * f * v["Dt"]
        return val * harmonic_weight(r, n) * radial_measure(r, n)

    pts = sorted({b for b in data.breakpoints if lo < b < hi}
                 | {x for x in (1.0 + math.sqrt(0.5 * R),) if lo < x < hi})
    parts = []
    for part in (np.real, np.imag):
        val, _ = integrate.quad(lambda r: float(part(integrand(r))[0]), lo, hi,
                                points=pts or None, epsabs=1e-14, epsrel=rtol, limit=500)
        parts.append(val)
    return complex(*parts)


def projected_c0(data: InitialData, params: ModelParams, angle: AngleCertificate,
                 R0: float, n: int = 64) -> float:
    """Smallest projection Re[lam^-1 exp(i xi0) I_R] over R >= R0 (per unit epsilon).

    I_R stops changing once psi_R(., 0) = 1 on the support, i.e. for R >= 2 (r_hi - 1)^2.
    """
    rot = cmath.exp(1j * angle.xi0) / params.lam
    R_full = 2.0 * (data.support[1] - 1.0) ** 2
    vals = [angle.projection(params.lam)]
    if R_full > R0:
        for R in np.geomspace(R0, R_full, n):
            vals.append((rot * truncated_moment(data, params, float(R))).real)
    return float(min(vals))


def theorem_display(p: float, theta: float, kappa: float, dimension: int) -> dict:
    if dimension == 2 and p == 2:
        return {"theorem": "exp(exp(C/eps))", "lemma": "exp(exp(C*delta^-1))",
                "log_exponent_theorem": None, "log_exponent_lemma": None}
    if theta > 0:
        out = {"lemma": f"C*delta^(-{1 / theta:.6g})*log(1/delta)^({kappa / theta:.6g})",
               "log_exponent_lemma": kappa / theta}
        if dimension == 2:
            out["theorem"] = f"C*eps^(-{(p - 1) / (2 - p):.6g})*log(1/eps)^({p - 1:.6g})"
            out["log_exponent_theorem"] = p - 1.0
        return out
    return {"lemma": f"exp(C*delta^(-{p - 1:.6g}))", "log_exponent_lemma": None}


def certify(params: ModelParams, data: InitialData,
            opts: Optional[CertifierOptions] = None) -> CertificateReport:
    """Certified lifespan upper bound from (params, data) alone."""
    opts = opts or CertifierOptions()
    if params.lam == 0:
        raise InputError("lam must be nonzero for certification")
    if not opts.R0 >= math.e:
        raise ConfigError("R0 must be at least e")
    theta, kappa = exponents(params)
    moment = initial_moment(data, params)
    angle = choose_angle(moment, params.lam, opts.margin)
    c0 = min(angle.c0, projected_c0(data, params, angle, opts.R0, opts.moment_grid))
    if not c0 > 0:
        raise AdmissibilityError(
            f"truncated moments lose positivity for R >= {opts.R0:.4g} (c0 = {c0:.3g}); raise R0")
    cons = cutoff_constants(params, opts)
    constants = cons.as_dict()
    C5 = assemble_C5(constants, params.tau, opts.R0)
    cos_xi = math.cos(angle.xi0)
    C6 = (C5 / (abs(params.lam) * cos_xi) * opts.safety
          * c6_factor(params.p, theta, kappa, params.dimension, opts.R0, opts.c6_R_max, opts.c6_grid))
    constants.update(C5=C5, C6=C6)
    delta = c0 * params.epsilon / cos_xi
    oparams = odi.ODIParams(delta=delta, C0=C6, R1=opts.R0, theta=theta, kappa=kappa, p=params.p)
    bound = odi.lifespan_bound_numeric(oparams)
    closed = None
    if opts.closed_form and delta < opts.delta0:
        closed = odi.lifespan_bound_closed_form(oparams, delta0=opts.delta0)
    return CertificateReport(
        params=params, angle=angle, c0=c0, constants=constants, theta=theta, kappa=kappa,
        delta=delta, R0=opts.R0, odi_params=oparams, odi_bound=bound, closed_form=closed,
        theorem_bound_display=theorem_display(params.p, theta, kappa, params.dimension))


def _window(traj: Trajectory, R: float):
    """Snapshots and radii inside P(R); raises when the run stopped short of t = R."""
    if traj.snap_t.size == 0:
        raise HorizonError("trajectory has no snapshots")
    blew_up = traj.stop_reason in ("threshold", "m_cap", "nonfinite")
    if traj.snap_t[-1] < R and not blew_up:
        raise HorizonError(
            f"insufficient horizon: trajectory ends at t={traj.snap_t[-1]:.4g} < R={R:.4g}")
    it = np.nonzero(traj.snap_t <= R)[0]
    ir = np.nonzero((traj.r - 1.0) ** 2 <= R)[0]
    # one node past the region keeps the trapezoid rule closed at the boundary
    ir = np.arange(ir[0], min(ir[-1] + 2, traj.r.size))
    it = np.arange(0, min(it[-1] + 2, traj.snap_t.size))
    return traj.snap_t[it], traj.r[ir], traj.snap_u[np.ix_(it, ir)]


def weighted_functionals(traj: Trajectory, p: float, R: float, dimension: Optional[int] = None):
    """(A_R, A*_R): iint |u|^p Phi psi_R and the psi*_R analogue, by trapezoid rules."""
    if not R > 0:
        raise DomainError("R must be positive")
    n = dimension or traj.params.dimension
    t, r, u = _window(traj, R)
    spec = CutoffSpec(p, n)
    tt, rr = np.meshgrid(t, r, indexing="ij")
    v = spec.evaluate(R, rr, tt)
    w = np.abs(u) ** p * harmonic_weight(r, n)[None, :]
    A = trapezoid_space_time(t, r, w * v["Psi"], n)
    A_star = trapezoid_space_time(t, r, w * v["PsiStar"], n)
    return float(A), float(A_star)


def _adjoint_terms(traj: Trajectory, params: ModelParams, R: float):
    """Space-time pieces of the weak form tested with Phi psi_R."""
    n = params.dimension
    t, r, u = _window(traj, R)
    spec = CutoffSpec(params.p, n)
    tt, rr = np.meshgrid(t, r, indexing="ij")
    v = spec.evaluate(R, rr, tt)
    phi, dphi = harmonic_weight(r, n)[None, :], harmonic_weight_dr(r, n)[None, :]
    rot = cmath.exp(1j * params.zeta)
    lap = phi * v["Lap"] + 2.0 * dphi * v["Dr"]
    adj = params.tau * phi * v["Dtt"] - rot * phi * v["Dt"] - lap
    bound = params.tau * phi * np.abs(v["Dtt"]) + phi * np.abs(v["Dt"]) + np.abs(lap)
    return t, r, u, v, phi, adj, bound


def weak_residual(traj: Trajectory, params: ModelParams, data: InitialData, R: float) -> float:
    """Relative defect of the weak identity tested with Phi psi_R.

    lam iint |u|^p Phi psi_R - iint u L*(Phi psi_R) + eps int [(tau g + e^{i zeta} f) Phi psi_R
    - tau f Phi d_t psi_R](t=0), divided by the sum of the magnitudes of the three terms.
    """
    n = params.dimension
    t, r, u, v, phi, adj, _ = _adjoint_terms(traj, params, R)
    src = params.lam * trapezoid_space_time(t, r, np.abs(u) ** params.p * phi * v["Psi"], n)
    lin = trapezoid_space_time(t, r, u * adj, n)
    init = params.epsilon * truncated_moment(data, params, R)
    total = abs(src) + abs(lin) + abs(init)
    return float(abs(src - lin + init) / total) if total > 0 else 0.0


def inequality_chain(traj: Trajectory, params: ModelParams, data: InitialData,
                     R_list: Sequence[float], opts: Optional[CertifierOptions] = None,
                     constants: Optional[Mapping] = None, tol: float = 0.05,
                     angle: Optional[AngleCertificate] = None, c0: Optional[float] = None) -> list:
    """Per-R rows of lhs <= mid <= rhs with slack = rhs - lhs.

    ``mid`` is |lam|^-1 iint |u| |L*(Phi psi_R)|, the quantity the constants bound.
    A row passes when slack >= -tol * rhs.
    """
    opts = opts or CertifierOptions()
    if params.lam == 0:
        raise InputError("lam must be nonzero")
    if angle is None or c0 is None:
        angle = choose_angle(initial_moment(data, params), params.lam, opts.margin)
        c0 = min(angle.c0, projected_c0(data, params, angle, opts.R0, opts.moment_grid))
    if constants is None:
        constants = cutoff_constants(params, opts).as_dict()
    C5 = assemble_C5(constants, params.tau, opts.R0)
    pc = params.p_conj
    cos_xi = math.cos(angle.xi0)
    rows = []
    for R in sorted(float(x) for x in R_list):
        if R < opts.R0:
            raise DomainError(f"R={R} below R0={opts.R0}")
        A, A_star = weighted_functionals(traj, params.p, R, params.dimension)
        t, r, u, _, _, _, bnd = _adjoint_terms(traj, params, R)
        mid = trapezoid_space_time(t, r, np.abs(u) * bnd, params.dimension) / abs(params.lam)
        lhs = c0 * params.epsilon + cos_xi * A
        rhs = C5 / (abs(params.lam) * R) * phi_mass(R, params.dimension) ** (1.0 / pc) * A_star ** (1.0 / params.p)
        slack = rhs - lhs
        rows.append({"R": R, "A": A, "A_star": A_star, "lhs": lhs, "mid": float(mid),
                     "rhs": rhs, "slack": slack,
                     "rel_slack": slack / rhs if rhs > 0 else -math.inf,
                     "passed": bool(slack >= -tol * rhs)})
    return rows


def criterion_data(traj: Trajectory, params: ModelParams, R_list: Sequence[float]) -> dict:
    """R -> (A_R, A*_R) for ``odi.verify_criterion``."""
    return {float(R): weighted_functionals(traj, params.p, float(R), params.dimension)
            for R in R_list}
