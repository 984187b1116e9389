"""Composite-pulse sequences for robust chiral resolution in closed-loop three-state systems."""

from .su2_core import Pulse, TwoStatePropagator, compose, propagate_pulse, propagate_train
from .delta_system import Handedness, Transition, embed, populations, sequence_propagator
from .sequences import (
    PhaseBranch, SequenceSpec, check_phase_condition, enumerate_resolving_sequences,
    final_state_formula,
)
from .composite_library import (
    ASSEMBLY_NAMES, ChiralAssembly, CompositeSequence, assemble, builtin, catalog, reverse,
)
from .scans import ScanGrid, ScanResult, high_fidelity_width, scan

__version__ = "0.1.0"
