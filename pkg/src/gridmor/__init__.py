"""Structure-preserving model reduction of swing-equation power networks."""

__version__ = "0.1.0"

from .network import (  # noqa: E402
    PowerNetwork,
    SecondOrderModel,
    assemble_second_order,
    eval_f,
    jacobian_f,
    parse_network,
    solve_equilibrium,
    synth_network,
)
from .tensor import SparseTensor3, mode1_apply, mode2_apply_pairs, symmetrize  # noqa: E402
from .lifting import QuadraticModel, assemble_quadratic, lift_model, shift_and_stabilize  # noqa: E402
from .qirka import QirkaResult, qirka, truncated_h2_norm  # noqa: E402
from .strh2 import ReducedSecondOrderModel, strh2_pipeline  # noqa: E402
from .baselines import pod_basis, str_qbt_basis  # noqa: E402
from .simulate import Trajectory, integrate_quadratic, integrate_second_order, linf_rel_error  # noqa: E402
from .sweep import sweep_orders  # noqa: E402

__all__ = [
    "PowerNetwork",
    "SecondOrderModel",
    "assemble_second_order",
    "eval_f",
    "jacobian_f",
    "parse_network",
    "solve_equilibrium",
    "synth_network",
    "SparseTensor3",
    "mode1_apply",
    "mode2_apply_pairs",
    "symmetrize",
    "QuadraticModel",
    "assemble_quadratic",
    "lift_model",
    "shift_and_stabilize",
    "QirkaResult",
    "qirka",
    "truncated_h2_norm",
    "ReducedSecondOrderModel",
    "strh2_pipeline",
    "pod_basis",
    "str_qbt_basis",
    "Trajectory",
    "integrate_quadratic",
    "integrate_second_order",
    "linf_rel_error",
    "sweep_orders",
]
