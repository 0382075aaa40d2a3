"""entroflow: entropy-regularized training dynamics and diagnostics.

The package studies gradient descent on an energy that combines a prediction
loss with a differentiable entropy surrogate of the representation, plus the
continuum, sampling, scaling, and associative-memory companions of that
picture.  Heavy inner loops live in an optional Cython extension with a pure
NumPy fallback (see :func:`backend_name`).
"""

from .autodiff import Tape, Tensor, backward, covariance, finite_diff_grad, log_det_psd
from .config import ExperimentConfig, dump_config, load_config
from .dynamics import (
    EnergyConfig,
    GenBoundConfig,
    critical_beta,
    descent_check,
    effectiveness,
    entropy_flow_check,
    entropy_scaling_diag,
    force_stabilization_probe,
    gd_step,
    gen_bound,
    make_model_objective,
    run_flow,
    step_eval,
    toy_objective,
)
from .kernels import backend_name
from .langevin import (
    Potential,
    double_well_potential,
    entropy_production_terms,
    fp_run,
    fp_stability_limit,
    gaussian_density,
    init_ensemble,
    langevin_run,
    quadratic_potential,
    stationary_density,
)
from .memory import capacity_sweep, hebbian_store, run_dynamics, run_memory_cell
from .models import Batch, EncoderSpec, TaskSpec, forward, init_params, make_dataset
from .rng import derive_seed, make_rng
from .scaling import ScalingModel, fit_power_law, sample_excess
from .surrogates import SurrogateConfig, surrogate_entropy
from .thermostat import RunConfig, ThermostatConfig, run_training, sweep, update_beta

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "EncoderSpec",
    "EnergyConfig",
    "ExperimentConfig",
    "GenBoundConfig",
    "Potential",
    "RunConfig",
    "ScalingModel",
    "SurrogateConfig",
    "Tape",
    "TaskSpec",
    "Tensor",
    "ThermostatConfig",
    "backend_name",
    "backward",
    "capacity_sweep",
    "covariance",
    "critical_beta",
    "derive_seed",
    "descent_check",
    "double_well_potential",
    "dump_config",
    "effectiveness",
    "entropy_flow_check",
    "entropy_production_terms",
    "entropy_scaling_diag",
    "finite_diff_grad",
    "fit_power_law",
    "force_stabilization_probe",
    "forward",
    "fp_run",
    "fp_stability_limit",
    "gaussian_density",
    "gd_step",
    "gen_bound",
    "hebbian_store",
    "init_ensemble",
    "init_params",
    "langevin_run",
    "load_config",
    "log_det_psd",
    "make_dataset",
    "make_model_objective",
    "make_rng",
    "quadratic_potential",
    "run_dynamics",
    "run_flow",
    "run_memory_cell",
    "run_training",
    "sample_excess",
    "stationary_density",
    "step_eval",
    "surrogate_entropy",
    "sweep",
    "toy_objective",
    "update_beta",
    "__version__",
]
