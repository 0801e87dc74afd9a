"""Large-N expansions of one-cut beta ensembles via loop equations."""
from .asymptotics import clt, free_energy_coeffs, lnZ_prediction
from .equilibrium import equilibrium, select_working_interval, validate_hypotheses
from .montecarlo import MCConfig, sample_chain
from .operators import apply_K, apply_K_inverse, apply_N, hard_edge_data
from .potential import EdgeConfig, Nature, PotentialSpec
from .recursion import expand_all, loop_residual

__version__ = "0.1.0"

__all__ = [
    "EdgeConfig",
    "MCConfig",
    "Nature",
    "PotentialSpec",
    "apply_K",
    "apply_K_inverse",
    "apply_N",
    "clt",
    "equilibrium",
    "expand_all",
    "free_energy_coeffs",
    "hard_edge_data",
    "lnZ_prediction",
    "loop_residual",
    "sample_chain",
    "select_working_interval",
    "validate_hypotheses",
    "__version__",
]
