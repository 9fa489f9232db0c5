from .bench import deform_dense, run_benchmark
from .deform import deform_cloud, polar_decompose
from .mpm import (
    ControlNodeSet,
    ForceEvent,
    MaterialParams,
    MpmGrid,
    SimulationFault,
    dense_baseline_substep,
    dense_particles_from_cloud,
    mpm_substep,
    nodes_from_cloud,
)
from .sampling import BindingTable, bind_gaussians, farthest_point_sample

__all__ = [
    "BindingTable",
    "ControlNodeSet",
    "ForceEvent",
    "MaterialParams",
    "MpmGrid",
    "SimulationFault",
    "bind_gaussians",
    "deform_cloud",
    "deform_dense",
    "dense_baseline_substep",
    "dense_particles_from_cloud",
    "farthest_point_sample",
    "mpm_substep",
    "nodes_from_cloud",
    "polar_decompose",
    "run_benchmark",
]
