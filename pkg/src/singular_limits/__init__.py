"""Backward-semigroup and semi-discrete upwind approximations of hyperbolic systems."""

__version__ = "0.1.0"

from .backward import (BackwardRunState, GridFunction, backward_residual, backward_step,
                       conservation_defect, riemann_profile, run_backward, spike_profile)
from .errors import (ConfigError, DomainError, HyperbolicityError, ParameterError,
                     SingularLimitsError, TruncationError, UnsupportedError, WindowError)
from .functionals import (FunctionalReport, WaveComponents, component_residual,
                          decompose_backward, decompose_semidiscrete, linearized_backward_step,
                          linearized_semidiscrete_rhs, lyapunov_scan, lyapunov_track,
                          potential_backward, potential_semidiscrete)
from .harness import (ConvergenceRecord, RiemannProblem, cross_scheme_agreement, epsilon_study,
                      exact_scalar_riemann, lipschitz_study)
from .kernels import (KernelParams, fundamental_backward, fundamental_semidiscrete,
                      interaction_backward, interaction_semidiscrete, weight_backward,
                      weight_semidiscrete)
from .semidiscrete import LatticeState, integrate, lattice_delta, lattice_riemann, run_semidiscrete
from .systems import (SpectralData, SystemSpec, averaged_jacobian, chromatography, eigen_decompose,
                      get_system, linear_system, make_system, shifted_burgers)
