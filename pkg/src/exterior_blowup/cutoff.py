"""Space-time cutoffs psi_R = eta(s_R)^(2p') and psi*_R = eta*(s_R)^(2p').

Here s_R(r, t) = ((r - 1)^2 + t) / R, so psi_R is supported in the parabolic
region P(R) = {(r, t): (r - 1)^2 + t <= R} and equals 1 on P(R/2).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, interpolate

from .errors import DomainError, InputError, InvariantError
from .model import harmonic_weight, harmonic_weight_dr

WHAT = ("Psi", "PsiStar", "Dt", "Dtt", "Dr", "Lap")

# radii this close to the boundary are left out of constant sampling
BOUNDARY_BAND = 1e-8


def _q(sig):
    return sig**3 * (10.0 - 15.0 * sig + 6.0 * sig**2)


def _dq(sig):
    return 30.0 * sig**2 * (1.0 - sig) ** 2


def _d2q(sig):
    return 60.0 * sig * (1.0 - sig) * (1.0 - 2.0 * sig)


@dataclass(frozen=True)
class CutoffSpec:
    """Profile eta and exponent 2p' for a given nonlinearity power p.

    eta = 1 on [0, 1/2], 1 - q(2s - 1) on (1/2, 1) with the quintic smoothstep
    q, and 0 on [1, inf). ``dimension`` fixes the radial Laplacian drift.
    """

    p: float
    dimension: int = 2

    def __post_init__(self):
        if not self.p > 1:
            raise InputError("p must exceed 1")

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def exponent(self) -> float:
        return 2.0 * self.p_conj

    def eta(self, s):
        s = np.asarray(s, dtype=float)
        # 1 - q(x) == q(1 - x); this form keeps full relative accuracy near s = 1
        return _q(np.clip(2.0 - 2.0 * s, 0.0, 1.0))

    def eta_d1(self, s):
        s = np.asarray(s, dtype=float)
        inside = (s > 0.5) & (s < 1.0)
        return np.where(inside, -2.0 * _dq(np.clip(2.0 * s - 1.0, 0.0, 1.0)), 0.0)

    def eta_d2(self, s):
        s = np.asarray(s, dtype=float)
        inside = (s > 0.5) & (s < 1.0)
        return np.where(inside, -4.0 * _d2q(np.clip(2.0 * s - 1.0, 0.0, 1.0)), 0.0)

    def eta_star(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s >= 0.5, self.eta(s), 0.0)

    def profile(self, s):
        """Psi(s) = eta^k and its first two s-derivatives, k = 2p'."""
        k = self.exponent
        e, e1, e2 = self.eta(s), self.eta_d1(s), self.eta_d2(s)
        # k > 2, so every power below is continuous at eta = 0
        ek1 = e ** (k - 1.0)
        return e**k, k * ek1 * e1, k * (k - 1.0) * e ** (k - 2.0) * e1**2 + k * ek1 * e2

    def evaluate(self, R, r, t):
        """All cutoff quantities at (r, t) as a dict keyed by ``WHAT``."""
        if not R > 0:
            raise DomainError("R must be positive")
        r = np.asarray(r, dtype=float)
        t = np.asarray(t, dtype=float)
        if np.any(r < 1.0) or np.any(t < 0.0):
            raise DomainError("cutoff requires r >= 1 and t >= 0")
        rho = r - 1.0
        s = (rho**2 + t) / R
        psi, d1, d2 = self.profile(s)
        dr = d1 * 2.0 * rho / R
        drr = d2 * 4.0 * rho**2 / R**2 + d1 * 2.0 / R
        return {
            "s": s,
            "Psi": psi,
            "PsiStar": np.where(s >= 0.5, psi, 0.0),
            "Dt": d1 / R,
            "Dtt": d2 / R**2,
            "Dr": dr,
            "Lap": drr + (self.dimension - 1.0) / r * dr,
        }


def psi_eval(spec: CutoffSpec, R: float, r, t, what: str = "Psi"):
    """Evaluate one cutoff quantity (see ``WHAT``) at (r, t)."""
    if what not in WHAT:
        raise InputError(f"what must be one of {WHAT}")
    out = spec.evaluate(R, r, t)[what]
    return float(out) if np.ndim(out) == 0 else out


def in_region(R, r, t):
    """Membership of (r, t) in the parabolic region P(R)."""
    r = np.asarray(r, dtype=float)
    return (r - 1.0) ** 2 + np.asarray(t, dtype=float) <= R


def _safe_ratio(num, den):
    num = np.abs(num)
    bad = (den <= 0) & (num > 0)
    if np.any(bad):
        raise InvariantError("derivative nonzero where psi* vanishes")
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def derivative_ratios(spec: CutoffSpec, R, r, t):
    """Pointwise ratios whose suprema are the constants C1..C4.

    Keys: ``C1`` |d_t psi| R, ``C2`` |d_tt psi| R^2, ``C3`` |grad Phi . grad psi| R / Phi,
    ``C3_raw`` |grad psi| R / (r log r) (log weight only), ``C4`` |Lap psi| R;
    all divided by psi*^(1/p). Off the band 1/2 <= s_R < 1 every ratio is 0.
    """
    v = spec.evaluate(R, r, t)
    r = np.asarray(r, dtype=float)
    den = v["PsiStar"] ** (1.0 / spec.p)
    n = spec.dimension
    phi = harmonic_weight(r, n)
    dphi = harmonic_weight_dr(r, n)
    out = {
        "C1": _safe_ratio(v["Dt"] * R, den),
        "C2": _safe_ratio(v["Dtt"] * R**2, den),
        "C3": _safe_ratio(dphi * v["Dr"] * R, den * phi),
        "C4": _safe_ratio(v["Lap"] * R, den),
    }
    if n == 2:
        out["C3_raw"] = _safe_ratio(v["Dr"] * R, den * r * np.log(r))
    return out


def sample_region(R, n, rng):
    """Samples of P(R): half area-uniform, half concentrated on the band 1/2 <= s < 1.

    The band half draws r - 1 log-uniformly down to the excluded boundary layer so
    that suprema attained as r -> 1 are approached uniformly in R.
    """
    n_uni = n // 2
    sq = math.sqrt(R)
    rho = sq * rng.random(4 * n_uni)
    t = R * rng.random(4 * n_uni)
    keep = (rho**2 + t <= R) & (rho > BOUNDARY_BAND)
    rho_u, t_u = rho[keep][:n_uni], t[keep][:n_uni]

    n_band = n - rho_u.size
    s = 0.5 + 0.5 * rng.random(n_band)
    top = np.sqrt(s * R)
    lo = math.log(BOUNDARY_BAND)
    rho_b = np.exp(lo + (np.log(top) - lo) * rng.random(n_band))
    rho_b = np.maximum(rho_b, BOUNDARY_BAND)
    t_b = np.maximum(s * R - rho_b**2, 0.0)
    return 1.0 + np.concatenate([rho_u, rho_b]), np.concatenate([t_u, t_b])


@dataclass(frozen=True)
class CutoffConstants:
    C1: float
    C2: float
    C3: float
    C4: float
    C3_raw: float = float("nan")
    per_R: tuple = ()
    safety: float = 1.1

    def as_dict(self):
        return {"C1": self.C1, "C2": self.C2, "C3": self.C3, "C4": self.C4,
                "C3_raw": self.C3_raw}


def estimate_constants(spec: CutoffSpec, R_list=(10.0, 100.0, 1000.0),
                       sample_density: int = 100_000, seed: int = 0,
                       safety: float = 1.1) -> CutoffConstants:
    """Empirical suprema of the derivative ratios over P(R), R in ``R_list``, times ``safety``."""
    if sample_density < 1000:
        raise InputError("sample_density must be at least 1000")
    if not len(R_list) or min(R_list) < 1:
        raise InputError("R_list must be nonempty with every R >= 1")
    rng = np.random.default_rng(seed)
    per_R = []
    for R in R_list:
        r, t = sample_region(float(R), int(sample_density), rng)
        ratios = derivative_ratios(spec, float(R), r, t)
        per_R.append((float(R), {k: float(np.max(v)) for k, v in ratios.items()}))
    sup = {k: max(d[k] for _, d in per_R) for k in per_R[0][1]}
    return CutoffConstants(
        C1=safety * sup["C1"], C2=safety * sup["C2"], C3=safety * sup["C3"],
        C4=safety * sup["C4"], C3_raw=safety * sup.get("C3_raw", float("nan")),
        per_R=tuple(per_R), safety=safety)


@functools.lru_cache(maxsize=32)
def _layer_table(exponent: float, cells: int = 4096):
    """Spline of sigma -> int_sigma^1 eta^k / x dx on [1/2, 1], built cell by cell."""
    spec = CutoffSpec(p=exponent / (exponent - 2.0))
    edges = np.linspace(0.5, 1.0, cells + 1)
    pieces = np.array([integrate.fixed_quad(lambda x: spec.eta(x) ** exponent / x, a, b, n=12)[0]
                       for a, b in zip(edges[:-1], edges[1:])])
    tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    return interpolate.CubicSpline(edges, tail)


def layer_integral(spec: CutoffSpec, s):
    """int_s^inf eta*(sigma)^(2p') dsigma / sigma; never exceeds log 2.

    Scalars use adaptive quadrature; arrays use a cached spline of the same
    integral (accurate to ~1e-12).
    """
    if np.ndim(s) == 0:
        if s < 0:
            raise DomainError("s must be nonnegative")
        a = max(float(s), 0.5)
        if a >= 1.0:
            return 0.0
        k = spec.exponent
        val, _ = integrate.quad(lambda x: float(spec.eta(x)) ** k / x, a, 1.0,
                                epsabs=0.0, epsrel=1e-12, limit=200)
        return val
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise DomainError("s must be nonnegative")
    spline = _layer_table(spec.exponent)
    a = np.clip(s, 0.5, 1.0)
    return np.where(s >= 1.0, 0.0, spline(a))


def log_compatible(r) -> np.ndarray:
    """Pointwise check of 1 - 1/r <= log r for r >= 1."""
    r = np.asarray(r, dtype=float)
    rho = r - 1.0
    # (r-1)/r and log1p(r-1) keep full relative accuracy as r -> 1
    return rho / r <= np.log1p(rho) * (1.0 + 4e-16)
