"""Problem parameters, radial initial data and the admissibility test.

The evolution problem is

    tau * u_tt - Lap u + exp(i*zeta) * u_t = lam * |u|^p   on |x| > 1,

with homogeneous Dirichlet data on |x| = 1 and u(0) = eps*f, u_t(0) = eps*g.
Everything is radial; profiles are functions of r = |x| >= 1.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from .errors import AdmissibilityError, InputError, QuadratureError

Profile = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ModelParams:
    """The tuple (tau, zeta, lam, p, epsilon) plus the harmonic-weight mode.

    ``dimension == 2`` selects the logarithmic weight log r; ``dimension >= 3``
    selects 1 - r^(2-N) and an N-dimensional radial Laplacian.
    """

    tau: int = 0
    zeta: float = 0.0
    lam: complex = 1.0
    p: float = 1.5
    epsilon: float = 1.0
    dimension: int = 2

    def __post_init__(self):
        if self.tau not in (0, 1):
            raise InputError(f"tau must be 0 or 1, got {self.tau!r}")
        if not math.isfinite(self.zeta) or abs(self.zeta) > math.pi / 2 + 1e-15:
            raise InputError(f"|zeta| must not exceed pi/2, got {self.zeta!r}")
        lam = complex(self.lam)
        # lam = 0 is accepted here (linear runs); certification rejects it
        if not cmath.isfinite(lam):
            raise InputError("lam must be a finite complex number")
        object.__setattr__(self, "lam", lam)
        if not (self.p > 1 and math.isfinite(self.p)):
            raise InputError(f"p must be > 1, got {self.p!r}")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InputError(f"epsilon must be > 0, got {self.epsilon!r}")
        if int(self.dimension) != self.dimension or self.dimension < 2:
            raise InputError("dimension must be 2 (log weight) or an integer >= 3")
        object.__setattr__(self, "dimension", int(self.dimension))

    @property
    def weight_mode(self) -> str:
        return "Log2D" if self.dimension == 2 else f"PowerND({self.dimension})"

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def critical_p(self) -> float:
        """Fujita exponent 1 + 2/N."""
        return 1.0 + 2.0 / self.dimension

    def replace(self, **changes) -> "ModelParams":
        values = {k: getattr(self, k) for k in
                  ("tau", "zeta", "lam", "p", "epsilon", "dimension")}
        values.update(changes)
        return ModelParams(**values)


def sphere_area(dimension: int) -> float:
    """Surface measure of the unit sphere S^(N-1); 2*pi for N = 2."""
    n = dimension
    return 2.0 * math.pi ** (n / 2.0) / special.gamma(n / 2.0)


def radial_measure(r, dimension: int = 2):
    """Density of dx in radial coordinates: |S^(N-1)| r^(N-1)."""
    return sphere_area(dimension) * np.asarray(r, dtype=float) ** (dimension - 1)


def harmonic_weight(r, dimension: int = 2):
    """Positive harmonic function vanishing on |x| = 1."""
    r = np.asarray(r, dtype=float)
    if dimension == 2:
        return np.log(r)
    return 1.0 - r ** (2.0 - dimension)


def harmonic_weight_dr(r, dimension: int = 2):
    r = np.asarray(r, dtype=float)
    if dimension == 2:
        return 1.0 / r
    return (dimension - 2.0) * r ** (1.0 - dimension)


def smoothstep(sigma):
    """Quintic smoothstep on [0, 1], clamped outside; C^2 at both ends."""
    s = np.clip(np.asarray(sigma, dtype=float), 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def _zero(r):
    return np.zeros_like(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class InitialData:
    """Radial profiles f (and g, used only when tau = 1) with compact support.

    Both profiles vanish outside ``support = (r_lo, r_hi)``. ``breakpoints``
    lists radii where a profile is not smooth, for the quadrature routines.
    """

    f: Profile
    g: Profile = _zero
    support: tuple = (1.0, 2.0)
    breakpoints: tuple = ()
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = (float(v) for v in self.support)
        if not (1.0 <= lo < hi and math.isfinite(hi)):
            raise InputError(f"support must satisfy 1 <= r_lo < r_hi < inf, got {self.support}")
        object.__setattr__(self, "support", (lo, hi))
        for prof, label in ((self.f, "f"), (self.g, "g")):
            v0 = complex(np.asarray(prof(np.array([1.0])))[0])
            if abs(v0) > 1e-12:
                raise InputError(f"{label}(1) = {v0} violates the Dirichlet condition")

    def scaled(self, factor: float) -> "InitialData":
        f, g = self.f, self.g
        return InitialData(
            f=lambda r: factor * np.asarray(f(r)),
            g=lambda r: factor * np.asarray(g(r)),
            support=self.support,
            breakpoints=self.breakpoints,
            name=f"{factor}*{self.name}",
            params=dict(self.params),
        )

    # -- named analytic profiles -------------------------------------------

    @classmethod
    def bump(cls, r_lo=1.2, r_hi=2.2, amplitude=1.0, g_amplitude=0.0):
        """C^2 bump a*(1 - xi^2)^3 on the annulus (r_lo, r_hi)."""
        mid, half = 0.5 * (r_lo + r_hi), 0.5 * (r_hi - r_lo)

        def shape(r):
            xi = (np.asarray(r, dtype=float) - mid) / half
            return np.where(np.abs(xi) < 1.0, (1.0 - xi**2) ** 3, 0.0)

        return cls(
            f=lambda r: amplitude * shape(r),
            g=lambda r: g_amplitude * shape(r),
            support=(r_lo, r_hi),
            name="bump",
            params=dict(r_lo=r_lo, r_hi=r_hi, amplitude=amplitude, g_amplitude=g_amplitude),
        )

    @classmethod
    def annulus(cls, r_lo=1.2, r_hi=2.2, amplitude=1.0, ramp=0.25, g_amplitude=0.0):
        """Indicator of (r_lo, r_hi) mollified to C^2 with smoothstep ramps."""
        if not 0 < 2 * ramp <= r_hi - r_lo:
            raise InputError("ramp must be positive and at most half the annulus width")

        def shape(r):
            r = np.asarray(r, dtype=float)
            return smoothstep((r - r_lo) / ramp) * smoothstep((r_hi - r) / ramp)

        return cls(
            f=lambda r: amplitude * shape(r),
            g=lambda r: g_amplitude * shape(r),
            support=(r_lo, r_hi),
            breakpoints=(r_lo + ramp, r_hi - ramp),
            name="annulus",
            params=dict(r_lo=r_lo, r_hi=r_hi, amplitude=amplitude, ramp=ramp,
                        g_amplitude=g_amplitude),
        )

    @classmethod
    def gaussian_ring(cls, center=2.0, width=0.3, amplitude=1.0, g_amplitude=0.0):
        """Gaussian ring tapered to compact support [max(1, c-4w), c+4w]."""
        lo, hi = max(1.0, center - 4.0 * width), center + 4.0 * width
        if not lo < center:
            raise InputError("gaussian ring center must exceed 1")

        def shape(r):
            r = np.asarray(r, dtype=float)
            taper = smoothstep((r - lo) / (center - lo)) * smoothstep((hi - r) / (hi - center))
            return np.exp(-0.5 * ((r - center) / width) ** 2) * taper

        return cls(
            f=lambda r: amplitude * shape(r),
            g=lambda r: g_amplitude * shape(r),
            support=(lo, hi),
            breakpoints=(center,),
            name="gaussian_ring",
            params=dict(center=center, width=width, amplitude=amplitude,
                        g_amplitude=g_amplitude),
        )

    @classmethod
    def indicator(cls, r_lo=2.0, r_hi=3.0, amplitude=1.0):
        """Sharp annulus indicator; only meant for moment checks, not for the solver."""

        def f(r):
            r = np.asarray(r, dtype=float)
            return np.where((r >= r_lo) & (r <= r_hi), amplitude, 0.0)

        return cls(f=f, support=(r_lo, r_hi), name="indicator",
                   params=dict(r_lo=r_lo, r_hi=r_hi, amplitude=amplitude))

    @classmethod
    def uniform(cls, r_hi, amplitude=1.0):
        """Constant amplitude on (1, r_hi]; used with diffusion switched off."""

        def f(r):
            r = np.asarray(r, dtype=float)
            return np.where((r > 1.0) & (r <= r_hi), amplitude, 0.0)

        return cls(f=f, support=(1.0, r_hi), name="uniform",
                   params=dict(r_hi=r_hi, amplitude=amplitude))

    @classmethod
    def tabulated(cls, r: Sequence[float], f_values: Sequence[complex],
                  g_values: Optional[Sequence[complex]] = None):
        """Samples with linear interpolation, zero outside the sample range."""
        r = np.asarray(r, dtype=float)
        fv = np.asarray(f_values, dtype=complex)
        gv = np.zeros_like(fv) if g_values is None else np.asarray(g_values, dtype=complex)
        if r.ndim != 1 or r.size < 2 or np.any(np.diff(r) <= 0):
            raise InputError("tabulated radii must be strictly increasing")
        if fv.shape != r.shape or gv.shape != r.shape:
            raise InputError("tabulated values must match the radii")
        if not (np.all(np.isfinite(fv)) and np.all(np.isfinite(gv))):
            raise InputError("tabulated values must be finite")

        def interp(values):
            def prof(x):
                x = np.asarray(x, dtype=float)
                out = np.interp(x, r, values.real, left=0.0, right=0.0) + 1j * np.interp(
                    x, r, values.imag, left=0.0, right=0.0)
                return out if np.any(values.imag) else out.real
            return prof

        return cls(f=interp(fv), g=interp(gv), support=(float(r[0]), float(r[-1])),
                   breakpoints=tuple(float(v) for v in r[1:-1]) if r.size <= 64 else (),
                   name="tabulated")

    @classmethod
    def from_spec(cls, spec: dict) -> "InitialData":
        """Build a named profile from a config mapping ``{"profile": name, ...}``."""
        spec = dict(spec)
        name = spec.pop("profile", None)
        factories = {
            "bump": cls.bump,
            "annulus": cls.annulus,
            "gaussian_ring": cls.gaussian_ring,
            "indicator": cls.indicator,
            "uniform": cls.uniform,
        }
        if name == "tabulated":
            return cls.tabulated(spec["r"], spec["f"], spec.get("g"))
        if name not in factories:
            raise InputError(f"unknown profile {name!r}; expected one of {sorted(factories)}")
        try:
            return factories[name](**spec)
        except TypeError as exc:
            raise InputError(f"bad parameters for profile {name!r}: {exc}") from exc


def _check_finite(data: InitialData):
    lo, hi = data.support
    r = np.linspace(lo, hi, 513)
    for prof, label in ((data.f, "f"), (data.g, "g")):
        if not np.all(np.isfinite(np.asarray(prof(r), dtype=complex))):
            raise InputError(f"profile {label} has non-finite values on its support")


def _quad_complex(func, a, b, points, rtol):
    vals = []
    for part in (lambda r: func(r).real, lambda r: func(r).imag):
        val, err, info = integrate.quad(
            lambda r: float(part(np.array([r]))[0]), a, b,
            points=points or None, epsabs=0.0, epsrel=rtol, limit=500, full_output=1)[:3]
        if not math.isfinite(val):
            raise QuadratureError("non-finite moment quadrature", estimate=val)
        if err > max(rtol * abs(val), 1e-14) * 10:
            raise QuadratureError(f"moment quadrature error {err:.3g} above tolerance", val)
        vals.append(val)
    return complex(vals[0], vals[1])


def initial_moment(data: InitialData, params: ModelParams, rtol: float = 1e-10) -> complex:
    """Weighted moment int (tau*g + exp(i zeta) f) * Phi dx over the exterior domain."""
    _check_finite(data)
    n = params.dimension
    rot = cmath.exp(1j * params.zeta)

    def integrand(r):
        val = params.tau * np.asarray(data.g(r), dtype=complex) + rot * np.asarray(data.f(r), dtype=complex)
        return val * harmonic_weight(r, n) * radial_measure(r, n)

    lo, hi = data.support
    pts = [b for b in data.breakpoints if lo < b < hi]
    return _quad_complex(integrand, lo, hi, pts, rtol)


def check_admissible(moment: complex, lam: complex, angle_tol: float = 1e-9,
                     zero_tol: float = 0.0) -> bool:
    """True iff the moment avoids the closed ray {-rho*lam : rho >= 0}."""
    lam = complex(lam)
    if lam == 0:
        raise InputError("lam must be nonzero")
    moment = complex(moment)
    if abs(moment) <= zero_tol:
        return False
    return abs(cmath.phase(moment / (-lam))) >= angle_tol


@dataclass(frozen=True)
class AngleCertificate:
    xi0: float
    c0: float
    moment: complex

    def projection(self, lam: complex) -> float:
        return (cmath.exp(1j * self.xi0) * self.moment / lam).real


def choose_angle(moment: complex, lam: complex, margin: float = 0.1,
                 angle_tol: float = 1e-9) -> AngleCertificate:
    """Pick xi0 in (-pi/2, pi/2) maximising Re[exp(i xi) moment / lam], clamped by margin."""
    if not 0 < margin < math.pi / 4:
        raise InputError("margin must lie in (0, pi/4)")
    if not check_admissible(moment, lam, angle_tol):
        raise AdmissibilityError(
            "initial moment lies on the ray {-rho*lam}; the blow-up hypothesis is violated")
    z = complex(moment) / complex(lam)
    phi = cmath.phase(z)
    xi0 = min(max(-phi, -math.pi / 2 + margin), math.pi / 2 - margin)
    c0 = abs(z) * math.cos(xi0 + phi)
    if not c0 > 0:
        raise AdmissibilityError(
            f"moment within margin {margin} of the forbidden ray: projection c0 = {c0:.3g} <= 0")
    return AngleCertificate(xi0=xi0, c0=c0, moment=complex(moment))

