"""Average-Hamiltonian design and exact simulation of selective dipolar recoupling."""

__version__ = "0.1.0"

from .aht import (OffsetVectors, average0, magnus1, offset_vectors, resonant_carrier,
                  secular_selective, secular_vector, toggling_frames)
from .algebra import OperatorSum, SiteRotation, commutator, op_norm, to_dense
from .model import Geometry, SelectiveDrive, SpinSystem, build_dipolar, build_zeeman
from .propagator import Trajectory, aht_evolve, exact_evolve, fidelity, random_state
from .sequence import (PulseSequence, build_mrev16, build_super_whh, build_w_cycle,
                       build_w_subcycle, build_whh4, expand_cycle, parse_mansfield)

__all__ = [
    "OffsetVectors", "OperatorSum", "SiteRotation", "Geometry", "SelectiveDrive", "SpinSystem",
    "PulseSequence", "Trajectory", "average0", "magnus1", "offset_vectors", "resonant_carrier",
    "secular_selective", "secular_vector", "toggling_frames", "commutator", "op_norm", "to_dense",
    "build_dipolar", "build_zeeman", "aht_evolve", "exact_evolve", "fidelity", "random_state",
    "build_mrev16", "build_super_whh", "build_w_cycle", "build_w_subcycle", "build_whh4",
    "expand_cycle", "parse_mansfield",
]
