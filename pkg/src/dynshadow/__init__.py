"""Randomized-Pauli classical shadows from a single dynamic circuit."""

from .circuit import (
    BasisProbabilities,
    Conditional,
    DynamicCircuit,
    Gate,
    Measure,
    ReadoutErrorModel,
    Reset,
    SlotSpec,
    build_random_pauli_circuit,
    build_slot_circuit,
    build_static_shadow_circuit,
    validate_circuit,
)
from .estimator import (
    EstimatorConfig,
    ShadowAccumulator,
    convergence_trace,
    estimate_energy,
    estimate_pauli,
    snapshots_from_records,
)
from .pauli import Hamiltonian, PauliAxis, PauliString, parse_hamiltonian, parse_pauli
from .serialize import deserialize_circuit, serialize_circuit
from .snapshot import Snapshot, SnapshotBatch
from .stabilizer import HybridShadowConfig, Tableau, hybrid_shadow_batches, run_hybrid_shadow
from .statevector import RunConfig, enumerate_exact, expectation_exact, run, run_array

__version__ = "0.1.0"

__all__ = [
    "BasisProbabilities",
    "Conditional",
    "DynamicCircuit",
    "EstimatorConfig",
    "Gate",
    "Hamiltonian",
    "HybridShadowConfig",
    "Measure",
    "PauliAxis",
    "PauliString",
    "ReadoutErrorModel",
    "Reset",
    "RunConfig",
    "ShadowAccumulator",
    "SlotSpec",
    "Snapshot",
    "SnapshotBatch",
    "Tableau",
    "build_random_pauli_circuit",
    "build_slot_circuit",
    "build_static_shadow_circuit",
    "convergence_trace",
    "deserialize_circuit",
    "enumerate_exact",
    "estimate_energy",
    "estimate_pauli",
    "expectation_exact",
    "hybrid_shadow_batches",
    "parse_hamiltonian",
    "parse_pauli",
    "run",
    "run_array",
    "run_hybrid_shadow",
    "serialize_circuit",
    "snapshots_from_records",
    "validate_circuit",
]
