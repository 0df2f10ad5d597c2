"""Adaptive identification with forgetting losses, excitation certificates and ISS bounds."""
__version__ = "0.1.0"

from .errors import (AdapidError, ConfigurationError, ContractViolation, IngestionError,
                     NumericalError, PECertificationError, SchemaError)
from .identifier import (IdentifierConfig, IdentifierState, SolverSettings, cost_eval,
                         initial_state, rls_step, run, step)
from .iss import (BoundTrajectory, asymptotic_bound, bound_rhs, build_g2, build_xi_example,
                  build_xi_general, check_iss, gt_value)
from .kinf import MaxOf, MinOf, PowerTerm, SumOf, Tabulated, XiFunction, invert_xi
from .losses import (LossSpec, PropertyReport, eval_loss, gh_value, gti_constant,
                     sandwich_bounds, verify_properties)
from .pe import KInfinityPair, PECertificate, certify_pe, gamma_from_kinf, kinf_from_gamma, window_gamma
from .signals import SystemConfig, Trajectory, generate_trajectory, ingest_trajectory
