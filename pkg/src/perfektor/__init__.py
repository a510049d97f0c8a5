"""Exact stationary sampling for multicolor lattice systems.

The engine draws exact samples from the invariant measure (and stationary
trajectories) of interacting particle systems on Z^d whose per-site update
rates are represented as a mixture of finite-range kernels, and realizes the
same samples as deterministic functions of finite windows of seeded fair bits.
"""

__version__ = "0.1.0"

from .lattice import Site, ball_volume, l1_ball, pi_map
from .rates import (
    MrfSpecification,
    check_condition,
    check_hs_condition,
    example_model,
    heat_bath_model,
    ising_heat_bath_spec,
    load_model_spec,
    spontaneous_model,
)
from .sketch import backward_sketch, backward_sketch_coupling, backward_sketch_no_deaths
from .coloring import coupling_experiment, perfect_sample, stationary_trajectory
from .finitary import BitField, Partition, finitary_sample, knuth_yao_sample

__all__ = [
    "Site",
    "ball_volume",
    "l1_ball",
    "pi_map",
    "MrfSpecification",
    "check_condition",
    "check_hs_condition",
    "example_model",
    "heat_bath_model",
    "ising_heat_bath_spec",
    "load_model_spec",
    "spontaneous_model",
    "backward_sketch",
    "backward_sketch_coupling",
    "backward_sketch_no_deaths",
    "coupling_experiment",
    "perfect_sample",
    "stationary_trajectory",
    "BitField",
    "Partition",
    "finitary_sample",
    "knuth_yao_sample",
]
