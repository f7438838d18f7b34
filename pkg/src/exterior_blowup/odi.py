"""Lifespan bounds from the R-indexed integral inequality

    delta + iint w psi_R <= C0 R^(-theta/p') (log R)^(kappa/p') (iint w psi*_R)^(1/p)

for R in [R1, T). The inequality forces

    rho(T) = int_{log R1}^{log T} exp(theta (p-1) s) s^(-kappa (p-1)) ds
           <= (p-1)^(-1) log(2) C0^p delta^(-(p-1)),

and inverting the increasing function rho gives the bound on T. All work is
done in log space: log T and log log T may far exceed the float range of T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy import optimize

from .errors import DomainError, InputError, NoFiniteBoundError
from .quadrature import adaptive_gk

ALGEBRAIC, SINGLE_EXP, DOUBLE_EXP = "Algebraic", "SingleExp", "DoubleExp"
LOG2 = math.log(2.0)
# below this value of s = log T the s-variable is used, above it v = log s
_SPLIT = math.e


@dataclass(frozen=True)
class ODIParams:
    delta: float
    C0: float
    R1: float = math.e
    theta: float = 0.0
    kappa: float = 1.0
    p: float = 2.0

    def __post_init__(self):
        if not (self.delta >= 0 and math.isfinite(self.delta)):
            raise InputError("delta must be finite and >= 0")
        if not (self.C0 > 0 and math.isfinite(self.C0)):
            raise InputError("C0 must be positive")
        if not self.p > 1:
            raise InputError("p must exceed 1")
        if not self.theta >= 0:
            raise InputError("theta must be >= 0")
        if self.R1 < 1 or (self.R1 == 1 and self.kappa * (self.p - 1) > 0):
            raise DomainError("R1 must exceed 1 (R1 = 1 only when kappa <= 0)")

    @property
    def a(self) -> float:
        """kappa * (p - 1), the power of log R in the integrand."""
        return self.kappa * (self.p - 1.0)

    @property
    def case_tag(self) -> str:
        if self.theta > 0:
            return ALGEBRAIC
        if math.isclose(self.a, 1.0, rel_tol=1e-12):
            return DOUBLE_EXP
        if self.a < 1.0:
            return SINGLE_EXP
        raise NoFiniteBoundError(
            "theta = 0 and kappa > 1/(p-1): the integrand is integrable at infinity, no bound follows")

    @property
    def log_budget(self) -> float:
        if self.delta == 0:
            return math.inf
        p = self.p
        return (-math.log(p - 1.0) + math.log(LOG2) + p * math.log(self.C0)
                - (p - 1.0) * math.log(self.delta))

    @property
    def budget(self) -> float:
        lb = self.log_budget
        return math.exp(lb) if lb < 709 else math.inf

    def with_delta(self, delta: float) -> "ODIParams":
        return ODIParams(delta, self.C0, self.R1, self.theta, self.kappa, self.p)


@dataclass(frozen=True)
class ODIBound:
    """Upper bound for T stored as log T (and log log T)."""

    log_T: float
    loglog_T: float
    budget: float
    log_budget: float
    case_tag: str
    constant: Optional[float] = None
    shape: str = ""

    @property
    def T_upper(self) -> float:
        return math.exp(self.log_T) if self.log_T < 709.7 else math.inf

    @property
    def symbolic(self) -> str:
        if self.log_T < 709.7:
            return repr(self.T_upper)
        if math.isfinite(self.log_T):
            return f"exp({self.log_T!r})"
        return f"exp(exp({self.loglog_T!r}))"

    def dominates(self, T: float) -> bool:
        """True when T does not exceed the bound."""
        if T <= 0:
            return True
        if math.isfinite(self.log_T):
            return math.log(T) <= self.log_T
        return True

    def as_dict(self) -> dict:
        return {
            "case_tag": self.case_tag,
            "log_T": _json_float(self.log_T),
            "loglog_T": _json_float(self.loglog_T),
            "T_upper": _json_float(self.T_upper),
            "symbolic": self.symbolic,
            "budget": _json_float(self.budget),
            "log_budget": _json_float(self.log_budget),
            "constant": self.constant,
            "shape": self.shape,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ODIBound":
        return cls(log_T=float(d["log_T"]), loglog_T=float(d["loglog_T"]),
                   budget=float(d["budget"]), log_budget=float(d["log_budget"]),
                   case_tag=d["case_tag"], constant=d.get("constant"), shape=d.get("shape", ""))


def _json_float(x):
    x = float(x)
    return x if math.isfinite(x) else ("inf" if x > 0 else ("-inf" if x < 0 else "nan"))


def _log_int_exp(h, a, b, rtol=1e-12):
    """log of int_a^b exp(h(v)) dv for h convex or increasing (maximum at an endpoint)."""
    if b <= a:
        return -math.inf
    ha, hb = float(h(np.array([a]))[0]), float(h(np.array([b]))[0])
    hmax = max(ha, hb)
    if not math.isfinite(hmax):
        return math.inf
    width = b - a
    # geometric breakpoints resolve a peak of any width at either endpoint
    j = 2.0 ** -np.arange(1, 60)
    pts = np.concatenate([a + width * j, b - width * j])
    val, _ = adaptive_gk(lambda v: np.exp(np.minimum(h(v) - hmax, 0.0)), a, b, pts, rtol=rtol)
    if val <= 0:
        return -math.inf
    return hmax + math.log(val)


def log_rho(params: ODIParams, log_T: float) -> float:
    """log rho(T) as a function of log T (-inf when T <= R1)."""
    if log_T <= 0:
        return -math.inf if log_T <= math.log(params.R1) else _log_rho_small(params, log_T)
    return log_rho_loglog(params, math.log(log_T))


def _log_rho_small(params, log_T):
    # only reached when R1 = 1 and 0 < log T <= 1
    c = params.theta * (params.p - 1.0)
    return _log_int_exp(lambda s: c * np.asarray(s, dtype=float), 0.0, log_T)


def log_rho_loglog(params: ODIParams, y: float) -> float:
    """log rho as a function of y = log log T; valid far beyond the float range of T."""
    L1 = math.log(params.R1)
    log_T = math.exp(y) if y < 709.7 else math.inf
    if log_T <= L1:
        return -math.inf
    c, a = params.theta * (params.p - 1.0), params.a
    parts = []
    if L1 < _SPLIT:
        def g(s):
            s = np.asarray(s, dtype=float)
            return c * s - (a * np.log(s) if a != 0 else 0.0)
        parts.append(_log_int_exp(g, L1, min(log_T, _SPLIT)))
    if y > 1.0:
        if c > 0 and y > math.log(1e300 / c):
            return math.inf

        def h(v):
            v = np.asarray(v, dtype=float)
            return (c * np.exp(v) if c > 0 else 0.0) + (1.0 - a) * v
        parts.append(_log_int_exp(h, math.log(max(L1, _SPLIT)), y))
    return float(np.logaddexp.reduce(parts))


def rho_of_T(params: ODIParams, T: float) -> float:
    """rho(T) = int_{log R1}^{log T} exp(theta (p-1) s) s^(-kappa (p-1)) ds."""
    if params.R1 < 1:
        raise DomainError("R1 must be >= 1")
    if T < params.R1:
        raise DomainError("T must be >= R1")
    lr = log_rho(params, math.log(T))
    return math.exp(lr) if lr < 709.7 else math.inf


def invert_log_rho(params: ODIParams, log_budget: float) -> float:
    """The y = log log T with log rho = log_budget (bisection to a bracket, then Brent)."""
    params.case_tag  # raises when no finite bound exists
    L1 = math.log(params.R1)

    def F(y):
        return log_rho_loglog(params, y) - log_budget

    y_lo = math.log(L1) if L1 > 0 else -700.0
    step = 1.0
    y_hi = max(y_lo, 0.0) + step
    while F(y_hi) < 0:
        y_lo, step = y_hi, 2.0 * step
        y_hi = y_hi + step
        if y_hi > 1e300:
            return math.inf
    # shrink until the lower end has a finite residual for the secant steps
    f_lo = F(y_lo)
    while not math.isfinite(f_lo):
        mid = 0.5 * (y_lo + y_hi)
        f_mid = F(mid)
        if f_mid >= 0:
            y_hi = mid
        else:
            y_lo, f_lo = mid, f_mid
        if y_hi - y_lo < 1e-15 * max(1.0, abs(y_hi)):
            return y_hi
    if f_lo >= 0:
        return y_lo
    return optimize.brentq(F, y_lo, y_hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


def _bound_from_y(params: ODIParams, y: float, **extra) -> ODIBound:
    log_T = math.exp(y) if y < 709.7 else math.inf
    return ODIBound(log_T=log_T, loglog_T=y, budget=params.budget,
                    log_budget=params.log_budget, case_tag=params.case_tag, **extra)


def lifespan_bound_numeric(params: ODIParams) -> ODIBound:
    """Bound on T from exact numeric inversion of rho(T) = budget."""
    if params.delta <= 0:
        raise DomainError("delta must be positive for a finite bound")
    y = invert_log_rho(params, params.log_budget)
    return _bound_from_y(params, y, shape="numeric")


def _closed_form_layer(params: ODIParams, delta):
    """Closed-form bound without its constant, in the layer where C enters linearly.

    Returns (layer_value_of_numeric, shape_term) pairs so that C = max(ratio).
    """
    p, th, k = params.p, params.theta, params.kappa
    tag = params.case_tag
    inv = math.log(1.0 / delta)
    if tag == ALGEBRAIC:
        # log T = log C + (1/theta) log(1/delta) + (kappa/theta) log log(1/delta)
        return inv / th + (k / th) * math.log(inv)
    if tag == SINGLE_EXP:
        # log T = C delta^(-(p-1)/(1-a))
        return delta ** (-(p - 1.0) / (1.0 - params.a))
    # log log T = C delta^(-(p-1))
    return delta ** (-(p - 1.0))


def calibrate_closed_form(params: ODIParams, delta_min=1e-6, delta_max=0.1,
                          n_grid: int = 201, margin: float = 0.01) -> float:
    """Smallest constant (times 1 + margin) for which the closed form dominates the numeric bound."""
    tag = params.case_tag
    grid = np.geomspace(delta_min, delta_max, n_grid)
    ratios = []
    for d in grid:
        y = lifespan_bound_numeric(params.with_delta(float(d))).loglog_T
        term = _closed_form_layer(params, float(d))
        if tag == ALGEBRAIC:
            ratios.append(math.exp(y) - term)  # log C candidates
        elif tag == SINGLE_EXP:
            ratios.append(math.exp(y) / term)
        else:
            ratios.append(y / term)
    best = max(ratios)
    if tag == ALGEBRAIC:
        return math.exp(best) * (1.0 + margin)
    return best * (1.0 + margin) if best > 0 else best * (1.0 - margin)


def lifespan_bound_closed_form(params: ODIParams, delta0: float = 0.1,
                               constant: Optional[float] = None) -> ODIBound:
    """Closed-form bound of the matching case with a calibrated constant.

    Algebraic: C delta^(-1/theta) (log 1/delta)^(kappa/theta); SingleExp:
    exp(C delta^(-(p-1)/(1-kappa(p-1)))); DoubleExp: exp(exp(C delta^(-(p-1)))).
    """
    if not 0 < params.delta < delta0:
        raise DomainError(f"closed forms apply for 0 < delta < {delta0}")
    tag = params.case_tag
    if constant is None:
        constant = calibrate_closed_form(params, delta_max=delta0)
    term = _closed_form_layer(params, params.delta)
    p, th, k = params.p, params.theta, params.kappa
    if tag == ALGEBRAIC:
        log_T = math.log(constant) + term
        y = math.log(log_T) if log_T > 0 else -math.inf
        shape = f"C*delta^(-{1 / th:.6g})*log(1/delta)^({k / th:.6g})"
    elif tag == SINGLE_EXP:
        log_T = constant * term
        y = math.log(log_T) if log_T > 0 else -math.inf
        shape = f"exp(C*delta^(-{(p - 1) / (1 - params.a):.6g}))"
    else:
        y = constant * term
        log_T = math.exp(y) if y < 709.7 else math.inf
        shape = f"exp(exp(C*delta^(-{p - 1:.6g})))"
    return ODIBound(log_T=log_T, loglog_T=y, budget=params.budget, log_budget=params.log_budget,
                    case_tag=tag, constant=constant, shape=shape)


@dataclass
class CriterionReport:
    rows: list = field(default_factory=list)
    min_C0: float = 0.0
    passed: bool = True

    def as_dict(self):
        return {"rows": self.rows, "min_C0": _json_float(self.min_C0), "passed": self.passed}


def verify_criterion(w_data: Mapping[float, tuple], params: ODIParams,
                     rtol: float = 1e-12) -> CriterionReport:
    """Check delta + A_R <= C0 R^(-theta/p') (log R)^(kappa/p') (A*_R)^(1/p) for each R.

    ``w_data`` maps R to (A_R, A*_R) = (iint w psi_R, iint w psi*_R).
    """
    p = params.p
    pc = p / (p - 1.0)
    report = CriterionReport()
    worst = 0.0
    for R in sorted(w_data):
        A, A_star = (float(v) for v in w_data[R])
        if A < 0 or A_star < 0 or not (math.isfinite(A) and math.isfinite(A_star)):
            raise InputError(f"functionals at R={R} must be finite and nonnegative")
        if R <= 1:
            raise InputError("criterion needs R > 1")
        factor = R ** (-params.theta / pc) * math.log(R) ** (params.kappa / pc) * A_star ** (1.0 / p)
        lhs = params.delta + A
        rhs = params.C0 * factor
        residual = rhs - lhs
        ok = residual >= -rtol * max(abs(lhs), abs(rhs))
        need = lhs / factor if factor > 0 else (math.inf if lhs > 0 else 0.0)
        worst = max(worst, need)
        report.rows.append({"R": float(R), "lhs": lhs, "rhs": rhs, "residual": residual,
                            "passed": bool(ok)})
        report.passed = report.passed and bool(ok)
    report.min_C0 = worst
    return report
