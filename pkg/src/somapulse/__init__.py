"""Learning continuous families of quantum-control pulses.

Modules: ``linalg`` (small dense kernels), ``models`` (Hamiltonians and
target gates), ``controls`` (waveforms), ``engine`` (propagation,
fidelity, gradients), ``nn`` (perceptron), ``optim`` (L-BFGS, Adam,
restarts), ``evalspace`` (parameter boxes and sweeps), ``soma``
(GRAPE, robust GRAPE, SOMA SL/BP), ``baselines`` (analytic pulse
families), ``decompose`` (discrete circuit search), ``config`` and
``cli`` (experiment runner).
"""
__version__ = "0.1.0"

from .engine import Ensemble, fidelity, grape_gradient, nn_gradient, propagate  # noqa: E402
from .evalspace import ParameterSpace, axis_sweep, radial_sweep, sample_uniform  # noqa: E402
from .models import make_model, target_gate  # noqa: E402
from .soma import QocClass, evaluate_model, robust_grape, run_grape, soma_bp, soma_sl  # noqa: E402

__all__ = [
    "Ensemble", "ParameterSpace", "QocClass", "axis_sweep", "evaluate_model", "fidelity",
    "grape_gradient", "make_model", "nn_gradient", "propagate", "radial_sweep", "robust_grape",
    "run_grape", "sample_uniform", "soma_bp", "soma_sl", "target_gate",
]
