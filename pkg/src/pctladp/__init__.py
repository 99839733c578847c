"""Planning in finite MDPs under PCTL constraints via chance-constrained approximate value iteration."""

from .errors import (
    ConstraintViolation,
    ConvergenceError,
    DivergenceError,
    InputError,
    PctlAdpError,
)
from .mdp import CostFunction, Mdp, TabularPolicy, load_mdp, save_mdp

__version__ = "0.1.0"

__all__ = [
    "ConstraintViolation",
    "ConvergenceError",
    "CostFunction",
    "DivergenceError",
    "InputError",
    "Mdp",
    "PctlAdpError",
    "TabularPolicy",
    "load_mdp",
    "save_mdp",
    "__version__",
]
