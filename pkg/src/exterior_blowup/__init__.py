"""Lifespan of small-data solutions to tau u_tt - Lap u + e^{i zeta} u_t = lam |u|^p
outside the unit disk: a radial solver, a test-function lifespan certifier and
an experiment harness.
"""

from .certifier import CertificateReport, CertifierOptions, certify, inequality_chain, weighted_functionals
from .cutoff import CutoffSpec, estimate_constants, psi_eval
from .errors import (AdmissibilityError, BlowupLabError, ConfigError, DomainError,
                     DomainTooSmallError, FitError, HorizonError, InputError, InvariantError,
                     NoFiniteBoundError, QuadratureError)
from .harness import RunConfig, SweepRecord, emit_report, fit_scaling, run_single, sweep
from .model import AngleCertificate, InitialData, ModelParams, check_admissible, choose_angle, initial_moment
from .odi import ODIBound, ODIParams, lifespan_bound_closed_form, lifespan_bound_numeric, rho_of_T
from .quadrature import integrate_PR, phi_mass, phi_mass_bound
from .solver import LifespanEstimate, RadialGrid, SolverOptions, Trajectory, detect_blowup, evolve, ode_oracle

__version__ = "0.1.0"
