"""Simulation, graph analytics and estimation for multitype Hawkes processes."""
from .errors import *  # noqa: F401,F403
from .estimate import (
    BinCounts,
    CLSFit,
    GraphEstimate,
    SkeletonEstimate,
    bin_counts,
    cls_fit,
    covariance_naive,
    estimate_graph,
    estimate_skeleton,
    normal_quantile,
    skeleton_sigmas,
)
from .graph import (
    Skeleton,
    WeightedGraph,
    analyze,
    ancestors,
    cascade_feedback,
    children,
    classify_connectivity,
    descendants,
    enumerate_walks,
    is_subcritical,
    offspring_matrix,
    parents,
    sources_sinks_redundant,
    spectral_radius,
)
from .kernelfit import KernelFit, ParametricModel, assemble_parametric, fit_kernel, suggest_family
from .model import (
    Excitation,
    ExponentialDecay,
    GammaDensity,
    GridKernel,
    HawkesModel,
    UniformWindow,
    branching_matrix,
    example_model,
    kernel_eval,
    stationary_intensity,
)
from .simulate import EventStream, SimConfig, simulate

__version__ = "0.1.0"
