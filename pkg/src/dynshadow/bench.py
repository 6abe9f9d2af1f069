"""Compile-once (dynamic) versus compile-per-circuit (static) benchmarking.

Both modes execute on the local statevector backend. Compilation is not
measured against any vendor toolchain; it enters through
:class:`CompileCostModel` as a fixed cost per distinct circuit submitted.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng as _rng
from .circuit import (
    BasisProbabilities,
    Gate,
    build_random_pauli_circuit,
    build_static_shadow_circuit,
    per_qubit_probs,
    validate_circuit,
)
from .estimator import snapshots_from_records
from .pauli import PauliAxis
from .snapshot import SnapshotBatch
from .stabilizer import draw_bases
from .statevector import RunConfig, run_array


class BenchError(RuntimeError):
    pass


@dataclass(frozen=True)
class CompileCostModel:
    compile_cost: float
    per_shot_cost: float

    def __post_init__(self):
        if self.compile_cost < 0 or self.per_shot_cost < 0:
            raise ValueError("costs must be non-negative")

    def modeled_time(self, circuits: int, shots: int) -> float:
        return circuits * self.compile_cost + shots * self.per_shot_cost

    @classmethod
    def calibrate(
        cls, dyn_shots: int, dyn_time: float, static_circuits: int, static_time: float
    ) -> "CompileCostModel":
        """Solve for (compile, per-shot) cost from one dynamic and one static timing.

        Dynamic: ``c + dyn_shots * s = dyn_time``; static with one shot per
        circuit: ``static_circuits * (c + s) = static_time``.
        """
        per_circuit = static_time / static_circuits
        s = (dyn_time - per_circuit) / (dyn_shots - 1)
        c = per_circuit - s
        return cls(c, s)


# 100,000 shots of one dynamic circuit in 40 s; 100 one-shot static circuits in 540 s.
CALIBRATION_TIMINGS = (100_000, 40.0, 100, 540.0)
CALIBRATED_COST_MODEL = CompileCostModel.calibrate(*CALIBRATION_TIMINGS)


@dataclass
class BenchReport:
    mode: str
    circuits_compiled: int
    total_shots: int
    measured_wall_time: float
    modeled_time: float
    speedup_vs_static: float = 1.0
    snapshots: SnapshotBatch | None = None

    def summary(self) -> dict[str, object]:
        return {
            "mode": self.mode,
            "circuits_compiled": self.circuits_compiled,
            "total_shots": self.total_shots,
            "measured_wall_time": round(self.measured_wall_time, 6),
            "modeled_time": round(self.modeled_time, 9),
            "speedup_vs_static": round(self.speedup_vs_static, 6),
        }


def per_shot_time(r: BenchReport) -> float:
    return r.modeled_time / r.total_shots


def throughput_ratio(dynamic: BenchReport, static: BenchReport) -> float:
    """(shots / time) dynamic over (shots / time) static, on modeled times."""
    return per_shot_time(static) / per_shot_time(dynamic)


def bench_dynamic(
    n_qubits: int,
    shots: int,
    seed: int,
    model: CompileCostModel,
    prep: Sequence[Gate] = (),
    probs: BasisProbabilities | Sequence[BasisProbabilities] | None = None,
) -> BenchReport:
    if shots < 1:
        raise BenchError("shots must be >= 1")
    t0 = time.perf_counter()
    circuit = build_random_pauli_circuit(n_qubits, prep, probs)
    diags = validate_circuit(circuit)
    if diags:
        raise BenchError("; ".join(diags))
    bits = run_array(circuit, RunConfig(shots, seed))
    snaps = snapshots_from_records(bits, circuit.labels)
    wall = time.perf_counter() - t0
    return BenchReport("dynamic", 1, shots, wall, model.modeled_time(1, shots), snapshots=snaps)


def bench_static(
    n_qubits: int,
    shots: int,
    seed: int,
    model: CompileCostModel,
    prep: Sequence[Gate] = (),
    probs: BasisProbabilities | Sequence[BasisProbabilities] | None = None,
) -> BenchReport:
    """One freshly built and validated circuit per shot, each run once.

    Shot ``k`` draws its basis from draws ``0..n-1`` of sub-stream
    ``(seed, k)`` and seeds its one-shot run with raw draw ``n``.
    """
    if shots < 1:
        raise BenchError("shots must be >= 1")
    probs = per_qubit_probs(probs, n_qubits)
    prep = tuple(prep)
    t0 = time.perf_counter()
    keys = _rng.shot_keys(seed, np.arange(shots, dtype=np.uint64))
    bases = draw_bases(_rng.uniforms(keys, 0, n_qubits), probs)
    run_seeds = _rng.raw_draws(keys, n_qubits, 1)[:, 0]
    outcomes = np.empty_like(bases)
    compiled = 0
    for k in range(shots):
        circuit = build_static_shadow_circuit(tuple(PauliAxis(int(a)) for a in bases[k]), prep)
        diags = validate_circuit(circuit)
        if diags:
            raise BenchError("; ".join(diags))
        compiled += 1
        outcomes[k] = run_array(circuit, RunConfig(1, int(run_seeds[k])))[0]
    wall = time.perf_counter() - t0
    return BenchReport(
        "static", compiled, shots, wall, model.modeled_time(compiled, shots),
        snapshots=SnapshotBatch(bases, outcomes),
    )


def run_bench(
    n_qubits: int,
    shots: int,
    seed: int,
    model: CompileCostModel = CALIBRATED_COST_MODEL,
    static_shots: int | None = None,
    prep: Sequence[Gate] = (),
    probs=None,
) -> tuple[BenchReport, BenchReport]:
    dyn = bench_dynamic(n_qubits, shots, seed, model, prep, probs)
    static = bench_static(n_qubits, static_shots or shots, seed, model, prep, probs)
    dyn.speedup_vs_static = throughput_ratio(dyn, static)
    return dyn, static
