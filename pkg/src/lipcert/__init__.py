"""Certified l-inf local Lipschitz bounds for feedforward ReLU networks."""

from .bab import BabConfig, BabDomain, BabResult, NeuronRef, branch_score, run_bab, split_domain
from .forward_bounds import (
    BoxDomain,
    InfeasibleDomainError,
    LayerIntervals,
    LinearForm,
    ReluRelaxation,
    backward_substitute,
    concretize,
    preactivation_bounds,
    relu_relaxation,
)
from .jacobian_bounds import (
    BoundReport,
    ClarkeRelaxation,
    DeltaState,
    JacRowIntervals,
    abs_norm_relaxation,
    clarke_relaxation,
    interval_clarke_relaxation,
    jacobian_backward_step,
    jacobian_entry_bounds,
    jacobian_interval_bounds,
    lipschitz_upper_bound,
)
from .model import (
    AffineLayer,
    ConvSpec,
    ModelFormatError,
    Network,
    forward,
    jacobian_at,
    load_network,
    lower_conv,
    network_from_dict,
)
from .oracle import (
    KinkProximityError,
    PatternEnumReport,
    SampleReport,
    UnstableCountError,
    enumerate_pattern_upper_bound,
    finite_difference_check,
    recurjac_reference,
    sample_lower_bound,
)

__version__ = "0.1.0"

__all__ = [
    "AffineLayer",
    "BabConfig",
    "BabDomain",
    "BabResult",
    "BoundReport",
    "BoxDomain",
    "ClarkeRelaxation",
    "ConvSpec",
    "DeltaState",
    "InfeasibleDomainError",
    "JacRowIntervals",
    "KinkProximityError",
    "LayerIntervals",
    "LinearForm",
    "ModelFormatError",
    "Network",
    "NeuronRef",
    "PatternEnumReport",
    "ReluRelaxation",
    "SampleReport",
    "UnstableCountError",
    "abs_norm_relaxation",
    "backward_substitute",
    "branch_score",
    "clarke_relaxation",
    "concretize",
    "enumerate_pattern_upper_bound",
    "finite_difference_check",
    "forward",
    "interval_clarke_relaxation",
    "jacobian_at",
    "jacobian_backward_step",
    "jacobian_entry_bounds",
    "jacobian_interval_bounds",
    "lipschitz_upper_bound",
    "load_network",
    "lower_conv",
    "network_from_dict",
    "preactivation_bounds",
    "recurjac_reference",
    "relu_relaxation",
    "run_bab",
    "sample_lower_bound",
    "split_domain",
]
