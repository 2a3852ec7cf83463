"""Symplectic partitioned Runge-Kutta integrators and the networks built from them."""

from .estimators import SPRKNetClassifier, TrajectoryForceLearner
from .hamiltonian import (KeplerSingularityError, NetworkFieldParams, SeparableHamiltonian,
                          harmonic_oscillator, kepler_field, network_field)
from .integrator import (IntegrationError, OrderSaturationError, PhaseState, Trajectory,
                         estimate_order, integrate, spectral_norm, sprk_step, step_jacobian,
                         symplectic_matrix, symplectic_residual)
from .network import (NetParams, StaleTapeError, augment, backward, forward, gradient_norm_audit,
                      init_params, layer_jacobians, load_model, save_model, uap_closed_form)
from .tableau import (BUILTIN_NAMES, PrkTableau, builtin_tableau, check_order_conditions,
                      check_symplectic, explicit_tableau, load_tableau)
from .training import (LossSpec, Metrics, OptimizerState, TrainingDivergedError,
                       loss_classification, loss_trajectory, optimizer_step, regularizer, train)

__version__ = "0.1.0"
