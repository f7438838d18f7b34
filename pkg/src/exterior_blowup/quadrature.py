"""Integration over the parabolic region P(R) in radial coordinates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .cutoff import CutoffSpec, layer_integral
from .errors import DomainError, QuadratureError
from .model import harmonic_weight, radial_measure, sphere_area


# Gauss-Kronrod 7/15 abscissae and weights on [-1, 1]
_XK = np.array([0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                0.207784955007898467600689403773245, 0.0])
_WK = np.array([0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG = np.array([0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                0.381830050505118944950369775488975, 0.417959183673469387755102040816327])
NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
W_KRONROD = np.concatenate([_WK[:-1], _WK[::-1]])
W_GAUSS = np.zeros(15)
W_GAUSS[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


def adaptive_gk(fun, a, b, points=(), rtol=1e-8, atol=0.0, max_intervals=4000):
    """Globally adaptive Gauss-Kronrod (7/15) quadrature of a vectorized ``fun``.

    Every refinement pass evaluates all new subintervals in one call. Returns
    ``(value, error_estimate)``; raises QuadratureError when ``max_intervals`` is
    reached first.
    """
    if b <= a:
        return 0.0, 0.0
    edges = np.array(sorted({a, b} | {p for p in points if a < p < b}), dtype=float)
    lo, hi = edges[:-1], edges[1:]
    done_val, done_err = [], []
    while True:
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        x = mid[:, None] + half[:, None] * NODES[None, :]
        fx = np.asarray(fun(x.ravel())).reshape(x.shape)
        k = half * (fx @ W_KRONROD)
        err = np.abs(k - half * (fx @ W_GAUSS))
        total = sum(done_val) + k.sum()
        errtot = sum(done_err) + err.sum()
        if not np.isfinite(total):
            raise QuadratureError("non-finite integrand value", estimate=total)
        target = max(atol, rtol * abs(total))
        n_int = len(done_val) + lo.size
        if errtot <= target:
            return total, errtot
        if n_int >= max_intervals:
            raise QuadratureError(
                f"adaptive quadrature hit {max_intervals} intervals (error {errtot:.3g})",
                estimate=total)
        split = err > target / n_int
        if not np.any(split):
            split = err >= err.max()
        done_val.extend(k[~split].tolist())
        done_err.extend(err[~split].tolist())
        lo, hi, mid = lo[split], hi[split], mid[split]
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])


@dataclass(frozen=True)
class PRIntegrand:
    """A function of (r, t) plus the places where it is not smooth.

    ``func(r, t)`` receives a scalar r and an array of t. ``s_breaks`` are levels c
    of s_R = ((r-1)^2 + t)/R across which the integrand may jump (0.5 for anything
    built from psi*_R); ``r_points`` and ``t_points`` are absolute break locations.
    """

    func: Callable
    s_breaks: tuple = (0.5,)
    r_points: tuple = ()
    t_points: tuple = ()


def _as_vectorized(func):
    try:
        probe = np.asarray(func(1.5, np.array([0.1, 0.2])))
        if probe.shape == (2,):
            return func
    except (TypeError, ValueError):
        pass
    vec = np.vectorize(func, otypes=[complex])
    return lambda r, t: vec(r, t)


def integrate_PR(f, R: float, tol: float = 1e-8, dimension: int = 2):
    """Nested adaptive quadrature of f over P(R) against dx dt (inner t, outer r)."""
    if not R > 0:
        raise DomainError("R must be positive")
    if not isinstance(f, PRIntegrand):
        f = PRIntegrand(func=f)
    func = _as_vectorized(f.func)
    sq = math.sqrt(R)
    r_pts = list(f.r_points) + [1.0 + math.sqrt(c * R) for c in f.s_breaks if 0 < c < 1]

    def inner(r):
        top = R - (r - 1.0) ** 2
        if top <= 0:
            return 0.0
        t_pts = list(f.t_points) + [c * R - (r - 1.0) ** 2 for c in f.s_breaks]
        val, _ = adaptive_gk(lambda t: func(r, t), 0.0, top, t_pts, rtol=0.1 * tol)
        return val * float(radial_measure(r, dimension))

    def outer(rs):
        return np.array([inner(r) for r in rs])

    val, _ = adaptive_gk(outer, 1.0, 1.0 + sq, r_pts, rtol=tol)
    if np.iscomplexobj(val) and val.imag == 0:
        return float(val.real)
    return complex(val) if np.iscomplexobj(val) else float(val)


def phi_mass(R: float, dimension: int = 2, tol: float = 1e-10) -> float:
    """Integral of the harmonic weight over P(R); the t-integral is done exactly."""
    if not R > 0:
        raise DomainError("R must be positive")
    sq = math.sqrt(R)

    def integrand(r):
        return (R - (r - 1.0) ** 2) * float(harmonic_weight(r, dimension) * radial_measure(r, dimension))

    val, err = integrate.quad(integrand, 1.0, 1.0 + sq, epsabs=0.0, epsrel=tol, limit=200)
    return val


def phi_mass_bound(R: float, dimension: int = 2) -> float:
    """Closed-form upper bound for ``phi_mass``.

    Log weight: pi R (sqrt R + 1)^2 log(sqrt R + 1). Power weight (bounded by 1):
    |S^(N-1)| R (1 + sqrt R)^N / N.
    """
    if not R > 0:
        raise DomainError("R must be positive")
    sq = math.sqrt(R)
    if dimension == 2:
        return math.pi * R * (sq + 1.0) ** 2 * math.log(sq + 1.0)
    return sphere_area(dimension) * R * (1.0 + sq) ** dimension / dimension


def trapezoid_space_time(t, r, values, dimension: int = 2):
    """Trapezoid rule in r (on the grid) then in t (over the snapshots).

    ``values`` has shape (len(t), len(r)); returns the integral against dx dt.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values)
    if t.size == 0:
        return 0.0
    spatial = np.trapezoid(values * radial_measure(r, dimension), r, axis=1)
    if t.size == 1:
        return 0.0
    return np.trapezoid(spatial, t)


def layer_cake_check(spec: CutoffSpec, w: PRIntegrand, R: float, tol: float = 1e-6):
    """Both sides of the layer-cake step for a nonnegative space-time weight w.

    Returns ``(lhs, identity, bound)`` where lhs = int_0^R y(rho)/rho d rho with
    y(rho) = iint w psi*_rho, identity = iint w * layer_integral(s_R), and
    bound = log 2 * iint w psi_R. Expected: lhs == identity <= bound.
    """
    n = spec.dimension

    wf = _as_vectorized(w.func)

    def with_cutoff(rho, what):
        return PRIntegrand(
            func=lambda r, t: wf(r, t) * spec.evaluate(rho, r, t)[what],
            s_breaks=(0.5, 1.0) if what == "PsiStar" else (),
            r_points=w.r_points, t_points=w.t_points)

    def y_over_rho(rho):
        if rho <= 0:
            return 0.0
        return integrate_PR(with_cutoff(rho, "PsiStar"), rho, tol, n) / rho

    # y(rho)/rho changes form where P(rho) first meets the support of w
    rho_pts = sorted({(rr - 1.0) ** 2 + tt for rr in w.r_points or (1.0,)
                      for tt in w.t_points or (0.0,)} | {2 * ((rr - 1.0) ** 2 + tt)
                                                         for rr in w.r_points or (1.0,)
                                                         for tt in w.t_points or (0.0,)})
    lhs, _ = adaptive_gk(lambda rhos: np.array([y_over_rho(x) for x in rhos]), 0.0, R,
                         rho_pts, rtol=10 * tol)
    identity = integrate_PR(
        PRIntegrand(func=lambda r, t: wf(r, t) * layer_integral(spec, ((r - 1.0) ** 2 + t) / R),
                    s_breaks=(0.5, 1.0), r_points=w.r_points, t_points=w.t_points),
        R, tol, n)
    bound = math.log(2.0) * integrate_PR(with_cutoff(R, "Psi"), R, tol, n)
    return lhs, identity, bound
