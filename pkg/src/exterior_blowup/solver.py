"""Radial finite-difference solver for the exterior initial-boundary value problem.

tau = 0: u_t = exp(-i zeta) (Lap u + lam |u|^p), advanced with the ARS(2,2,2)
IMEX Runge-Kutta scheme (L-stable implicit diffusion, explicit reaction).
tau = 1: the damped wave system in (u, v = u_t), kick-drift-kick leapfrog with
trapezoidal damping. Time steps shrink with the reaction time scale
max|u|^(1-p) / (|lam| (p-1)) so that blow-up is followed down to tiny dt.
"""

from __future__ import annotations

import cmath
import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import DomainError, DomainTooSmallError, InputError
from .model import InitialData, ModelParams

log = logging.getLogger(__name__)

_GAMMA = 1.0 - 1.0 / math.sqrt(2.0)
_DELTA = 1.0 - 1.0 / (2.0 * _GAMMA)


@dataclass(frozen=True)
class RadialGrid:
    r_max: float
    n: int

    def __post_init__(self):
        if self.n < 64:
            raise InputError("grid needs at least 64 nodes")
        if not self.r_max > 1:
            raise InputError("r_max must exceed 1")

    @classmethod
    def from_spacing(cls, r_max: float, h: float) -> "RadialGrid":
        n = int(round((r_max - 1.0) / h)) + 1
        return cls(r_max=1.0 + (n - 1) * h, n=max(n, 64))

    @property
    def h(self) -> float:
        return (self.r_max - 1.0) / (self.n - 1)

    @property
    def r(self) -> np.ndarray:
        return np.linspace(1.0, self.r_max, self.n)

    def enlarged(self, factor: float) -> "RadialGrid":
        return RadialGrid.from_spacing(1.0 + factor * (self.r_max - 1.0), self.h)


@dataclass(frozen=True)
class SolverOptions:
    dt_safety: float = 0.02        # fraction of the reaction time scale
    dt_growth: float = 0.01        # dt <= dt_growth * t once past the start
    dt_start: float = 1e-3         # dt cap near t = 0
    dt_max: float = math.inf
    cfl: float = 0.9               # damped wave: dt <= cfl * h
    t_end: float = math.inf
    max_steps: int = 200_000
    M_threshold: float = 1e8
    dt_contraction: float = 1e6
    m_cap: float = 1e200
    diffusion: bool = True         # test hook: False reduces to pointwise ODEs
    dispersive: bool = False       # admit |zeta| = pi/2 with a norm-conserving step
    leak_tol: float = 1e-6         # relative to min(max|u(0)|, max|u(t)|)
    leak_fraction: float = 0.05
    auto_enlarge: bool = True
    enlarge_factor: float = 1.5
    max_enlarge: int = 12
    store_snapshots: bool = True
    max_snapshots: int = 2000
    snapshot_dlogt: float = 0.02
    snapshot_dlogm: float = 0.1


@dataclass
class Trajectory:
    params: ModelParams
    r: np.ndarray
    snap_t: np.ndarray
    snap_u: np.ndarray
    t: np.ndarray
    dt: np.ndarray
    maxnorm: np.ndarray
    boundary_leak: float
    stop_reason: str
    dt_initial: float
    enlargements: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def t_final(self) -> float:
        return float(self.t[-1])

    @property
    def h(self) -> float:
        return float(self.r[1] - self.r[0])


@dataclass(frozen=True)
class LifespanEstimate:
    status: str                    # "BlowUp", "SurvivedTo" or "Inconclusive"
    T_est: Optional[float] = None
    T_lo: Optional[float] = None
    T_hi: Optional[float] = None
    t_end: Optional[float] = None
    reason: str = ""
    threshold_hit: Optional[float] = None

    @property
    def blew_up(self) -> bool:
        return self.status == "BlowUp"

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("status", "T_est", "T_lo", "T_hi", "t_end", "reason", "threshold_hit")}

    @classmethod
    def from_dict(cls, d) -> "LifespanEstimate":
        return cls(**d)


def laplacian_bands(grid: RadialGrid, dimension: int = 2):
    """Lower, main and upper diagonals of the centered radial Laplacian on interior nodes."""
    r = grid.r[1:-1]
    h = grid.h
    drift = (dimension - 1.0) / (2.0 * h * r)
    lower = 1.0 / h**2 - drift
    upper = 1.0 / h**2 + drift
    main = np.full(r.size, -2.0 / h**2)
    return lower, main, upper


def apply_tridiag(lower, main, upper, x):
    y = main * x
    y[1:] += lower[1:] * x[:-1]
    y[:-1] += upper[:-1] * x[1:]
    return y


class _Stepper:
    """One time step of the chosen scheme on interior nodes (Dirichlet zeros outside)."""

    def __init__(self, params: ModelParams, grid: RadialGrid, opts: SolverOptions):
        self.params = params
        self.opts = opts
        self.rot = cmath.exp(-1j * params.zeta)
        lo, mi, up = laplacian_bands(grid, params.dimension)
        if not opts.diffusion:
            lo, mi, up = (np.zeros_like(lo), np.zeros_like(mi), np.zeros_like(up))
        self.bands = (lo, mi, up)
        self.lam, self.p = params.lam, params.p

    def reaction(self, u):
        return self.lam * np.abs(u) ** self.p

    def _solve(self, coef, rhs):
        """Solve (I - coef * A) x = rhs with A = bands (complex coef)."""
        lo, mi, up = self.bands
        if not self.opts.diffusion:
            return rhs
        ab = np.empty((3, rhs.size), dtype=complex)
        ab[0, 1:] = -coef * up[:-1]
        ab[0, 0] = 0.0
        ab[1] = 1.0 - coef * mi
        ab[2, :-1] = -coef * lo[1:]
        ab[2, -1] = 0.0
        return linalg.solve_banded((1, 1), ab, rhs, check_finite=False)

    def heat(self, u, dt):
        rot = self.rot
        n0 = rot * self.reaction(u)
        coef = _GAMMA * dt * rot
        u1 = self._solve(coef, u + _GAMMA * dt * n0)
        n1 = rot * self.reaction(u1)
        rhs = u + dt * (_DELTA * n0 + (1.0 - _DELTA) * n1)
        if self.opts.diffusion:
            rhs = rhs + dt * (1.0 - _GAMMA) * rot * apply_tridiag(*self.bands, u1)
        return self._solve(coef, rhs)

    def dispersive(self, u, dt):
        rot = self.rot
        rhs = u + dt * rot * self.reaction(u)
        if self.opts.diffusion:
            rhs = rhs + 0.5 * dt * rot * apply_tridiag(*self.bands, u)
        return self._solve(0.5 * dt * rot, rhs)

    def wave(self, u, v, dt):
        b = cmath.exp(1j * self.params.zeta)

        def force(w):
            out = self.reaction(w).astype(complex)
            if self.opts.diffusion:
                out += apply_tridiag(*self.bands, w)
            return out

        damp = 0.25 * dt * b
        v_half = (v * (1.0 - damp) + 0.5 * dt * force(u)) / (1.0 + damp)
        u_new = u + dt * v_half
        v_new = (v_half * (1.0 - damp) + 0.5 * dt * force(u_new)) / (1.0 + damp)
        return u_new, v_new


def _decimate(indices, cap):
    """Keep at most ``cap`` snapshot indices: all late ones, a uniform thinning of early ones."""
    if len(indices) <= cap:
        return indices
    keep_late = cap // 2
    early, late = indices[:-keep_late], indices[-keep_late:]
    pick = np.unique(np.linspace(0, len(early) - 1, cap - keep_late).round().astype(int))
    return [early[i] for i in pick] + late


def _evolve_once(params: ModelParams, data: InitialData, grid: RadialGrid, opts: SolverOptions):
    r = grid.r
    eps = params.epsilon
    u = (eps * np.asarray(data.f(r), dtype=complex))[1:-1].copy()
    v = (eps * np.asarray(data.g(r), dtype=complex))[1:-1].copy() if params.tau == 1 else None
    stepper = _Stepper(params, grid, opts)
    n_int = u.size
    outer = max(1, int(round(opts.leak_fraction * grid.n)))
    m0 = float(np.max(np.abs(u))) if u.size else 0.0
    leak_limit = opts.leak_tol * m0
    lam_abs = abs(params.lam)

    t, step = 0.0, 0
    ts, dts, ms = [0.0], [0.0], [m0]
    snaps_t, snaps_u = [0.0], [u.copy()] if opts.store_snapshots else []
    snap_flags = [True]
    last_snap_t, last_snap_m = 0.0, m0
    leak = 0.0
    dt_initial = None
    stop = "max_steps"
    m = m0
    while step < opts.max_steps:
        if t >= opts.t_end:
            stop = "t_end"
            break
        dt = min(max(opts.dt_start, opts.dt_growth * t), opts.dt_max, opts.t_end - t)
        if lam_abs > 0 and m > 0:
            dt = min(dt, opts.dt_safety * reaction_time(m, params))
        if params.tau == 1:
            dt = min(dt, opts.cfl * grid.h)
        if dt_initial is None:
            dt_initial = dt
        if params.tau == 1:
            u_new, v_new = stepper.wave(u, v, dt)
        elif opts.dispersive:
            u_new, v_new = stepper.dispersive(u, dt), None
        else:
            u_new, v_new = stepper.heat(u, dt), None
        m_new = float(np.max(np.abs(u_new)))
        if not math.isfinite(m_new):
            stop = "nonfinite"
            break
        u, v, m = u_new, v_new, m_new
        t += dt
        step += 1
        ts.append(t)
        dts.append(dt)
        ms.append(m)
        leak = max(leak, float(np.max(np.abs(u[n_int - outer:]))))
        # a decaying solution must not hide the truncation, so compare with min(m0, m)
        leak_limit = min(leak_limit, opts.leak_tol * m)
        if leak > leak_limit:
            raise DomainTooSmallError(
                f"boundary leak {leak:.3g} exceeds {leak_limit:.3g} at t={t:.4g}; enlarge r_max",
                r_max=grid.r_max, leak=leak)
        if opts.store_snapshots and (
                t >= last_snap_t * (1.0 + opts.snapshot_dlogt)
                or abs(math.log(max(m, 1e-300) / max(last_snap_m, 1e-300))) >= opts.snapshot_dlogm):
            snaps_t.append(t)
            snaps_u.append(u.copy())
            last_snap_t, last_snap_m = t, m
        if m >= opts.m_cap:
            stop = "m_cap"
            break
        if m >= opts.M_threshold and dt <= dt_initial / opts.dt_contraction:
            stop = "threshold"
            break
    if opts.store_snapshots and snaps_t[-1] != t:
        snaps_t.append(t)
        snaps_u.append(u.copy())

    if opts.store_snapshots:
        keep = _decimate(list(range(len(snaps_t))), opts.max_snapshots)
        snap_t = np.array([snaps_t[i] for i in keep])
        snap_u = np.zeros((len(keep), grid.n), dtype=complex)
        for row, i in enumerate(keep):
            snap_u[row, 1:-1] = snaps_u[i]
    else:
        snap_t = np.zeros(0)
        snap_u = np.zeros((0, grid.n), dtype=complex)

    return Trajectory(
        params=params, r=r, snap_t=snap_t, snap_u=snap_u,
        t=np.array(ts), dt=np.array(dts), maxnorm=np.array(ms),
        boundary_leak=leak, stop_reason=stop,
        dt_initial=dt_initial if dt_initial is not None else math.nan,
        meta={"r_max": grid.r_max, "n": grid.n, "h": grid.h, "steps": step},
    )


def evolve(params: ModelParams, data: InitialData, grid: RadialGrid,
           opts: Optional[SolverOptions] = None) -> Trajectory:
    """Time-evolve the problem from (eps f, eps g) until blow-up, t_end or the step limit.

    On a boundary leak the domain is enlarged by ``enlarge_factor`` (spacing kept)
    and the run restarts, up to ``max_enlarge`` times.
    """
    opts = opts or SolverOptions()
    if params.tau == 0 and abs(params.zeta) >= math.pi / 2 - 1e-15 and not opts.dispersive:
        raise InputError("|zeta| = pi/2 with tau = 0 needs the experimental dispersive scheme")
    if opts.dispersive and params.tau == 1:
        raise InputError("the dispersive scheme is for tau = 0 only")
    if data.support[1] >= grid.r_max:
        raise InputError("r_max must exceed the data support")
    enlargements = 0
    while True:
        try:
            traj = _evolve_once(params, data, grid, opts)
            traj.enlargements = enlargements
            return traj
        except DomainTooSmallError as exc:
            if not opts.auto_enlarge or enlargements >= opts.max_enlarge:
                raise
            enlargements += 1
            grid = grid.enlarged(opts.enlarge_factor)
            log.info("boundary leak (%s); retrying with r_max=%.4g", exc, grid.r_max)


def reaction_time(m: float, params: ModelParams) -> float:
    """Local reaction time scale at amplitude m.

    Heat: m^(1-p) / (|lam| (p-1)), the remaining time of u' = |lam| u^p.
    Damped wave: (|lam| m^(p-1))^(-1/2), the time scale of u'' = |lam| u^p.
    """
    lam_abs, p = abs(params.lam), params.p
    if lam_abs == 0 or m <= 0:
        return math.inf
    if params.tau == 0:
        log_scale = (1.0 - p) * math.log(m) - math.log(lam_abs * (p - 1.0))
    else:
        log_scale = -0.5 * ((p - 1.0) * math.log(m) + math.log(lam_abs))
    return math.exp(log_scale) if log_scale < 700.0 else math.inf


def blowup_exponent(params: ModelParams) -> float:
    """Power of max|u| that is asymptotically linear in T - t."""
    return (1.0 - params.p) if params.tau == 0 else 0.5 * (1.0 - params.p)


def detect_blowup(traj: Trajectory, params: Optional[ModelParams] = None,
                  M_threshold: float = 1e8, dt_contraction: float = 1e6,
                  k: int = 8) -> LifespanEstimate:
    """Classify a trajectory and, for blow-up, extrapolate m^q to zero.

    q = 1 - p for the heat case and (1 - p)/2 for the damped wave, the powers
    that vanish linearly at the blow-up time of the reaction ODE.
    """
    params = params or traj.params
    t, m, dt = traj.t, traj.maxnorm, traj.dt
    if t.size == 0:
        raise InputError("empty trajectory")
    hit = np.nonzero(m >= M_threshold)[0]
    if hit.size == 0:
        if traj.stop_reason == "t_end":
            return LifespanEstimate("SurvivedTo", t_end=float(t[-1]))
        return LifespanEstimate("Inconclusive", t_end=float(t[-1]),
                                reason=f"stopped by {traj.stop_reason} before the threshold")
    threshold_time = float(t[hit[0]])
    if not dt[-1] <= traj.dt_initial / dt_contraction:
        return LifespanEstimate("Inconclusive", t_end=float(t[-1]), reason="possible instability",
                                threshold_hit=threshold_time)
    k = min(k, t.size - 1)
    # offsets from accumulated steps: near blow-up dt can fall below the spacing of floats at t
    x = -np.concatenate([np.cumsum(dt[-k + 1:][::-1])[::-1], [0.0]])
    yy = m[-k:] ** blowup_exponent(params)
    slope, icpt = np.polyfit(x, yy, 1)
    T_lo = float(t[-1])
    T_raw = float(T_lo - icpt / slope) if slope < 0 else T_lo
    scale = reaction_time(float(m[-1]), params)
    T_est = max(T_raw, T_lo)
    T_hi = max(T_est, T_raw + scale, T_lo + scale)
    return LifespanEstimate("BlowUp", T_est=T_est, T_lo=T_lo, T_hi=T_hi, t_end=T_lo,
                            threshold_hit=threshold_time)


def ode_oracle(params: ModelParams) -> float:
    """Blow-up time eps^(1-p) / (lam (p-1)) of u' = lam u^p, u(0) = eps."""
    lam = params.lam
    if params.p <= 1:
        raise DomainError("p must exceed 1")
    if lam.imag != 0 or lam.real <= 0 or params.zeta != 0:
        raise DomainError("the ODE oracle needs real lam > 0 and zeta = 0")
    return params.epsilon ** (1.0 - params.p) / (lam.real * (params.p - 1.0))


def write_series_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "dt", "maxnorm"])
        for row in zip(traj.t, traj.dt, traj.maxnorm):
            w.writerow([repr(float(x)) for x in row])


def write_snapshots(traj: Trajectory, path, fmt: str = "csv") -> None:
    """Snapshots as a CSV matrix (t, then Re/Im pairs per node) or as JSON arrays."""
    if fmt == "json":
        payload = {"r": traj.r.tolist(), "t": traj.snap_t.tolist(),
                   "re": traj.snap_u.real.tolist(), "im": traj.snap_u.imag.tolist()}
        with open(path, "w") as fh:
            json.dump(payload, fh)
        return
    if fmt != "csv":
        raise InputError("snapshot format must be 'csv' or 'json'")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"{kind}(r={x!r})" for x in traj.r for kind in ("re", "im")])
        for tk, row in zip(traj.snap_t, traj.snap_u):
            vals = np.column_stack([row.real, row.imag]).ravel()
            w.writerow([repr(float(tk))] + [repr(float(x)) for x in vals])


def refine(grid: RadialGrid) -> RadialGrid:
    """Same domain, spacing halved."""
    return RadialGrid(r_max=grid.r_max, n=2 * grid.n - 1)


def with_options(opts: SolverOptions, **changes) -> SolverOptions:
    return replace(opts, **changes)
