"""Dense statevector execution of dynamic circuits.

Shots are simulated in batches: a batch holds one statevector per shot,
shape ``(B, 2**n)``, and every instruction acts on the whole batch at once.
Mid-circuit measurement draws from shot ``k``'s own random sub-stream, so the
output does not depend on how shots are batched.

Basis-state index convention: qubit 0 is the most significant bit, matching
the leftmost-character-is-qubit-0 rule of Pauli words and bitstrings.

Random-draw layout per shot: the ``k``-th Measure/Reset instruction uses draw
``2k`` for the Born outcome and draw ``2k + 1`` for the readout flip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, TextIO

import numpy as np

from . import rng as _rng
from .circuit import (
    Conditional,
    DynamicCircuit,
    Gate,
    Measure,
    ReadoutErrorModel,
    Reset,
    validate_circuit,
)
from .pauli import PauliAxis, PauliString

MAX_QUBITS = 20
MAX_LEAVES = 1 << 20
_BATCH_AMPLITUDES = 1 << 20
_MAX_BATCH = 1 << 16
_BRANCH_EPS = 1e-14

_SQ = 1.0 / math.sqrt(2.0)
GATE_MATRICES = {
    "H": np.array([[_SQ, _SQ], [_SQ, -_SQ]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "Sdg": np.array([[1, 0], [0, -1j]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def ry_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def gate_matrix(g: Gate) -> np.ndarray:
    if g.kind == "RY":
        return ry_matrix(g.theta)
    return GATE_MATRICES[g.kind]


class SimulationError(RuntimeError):
    pass


class BranchOverflowError(SimulationError):
    pass


@dataclass(frozen=True)
class RunConfig:
    shots: int
    seed: int
    readout_error: ReadoutErrorModel | None = None

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("shots must be >= 1")


@dataclass(frozen=True)
class ShotRecord:
    shot: int
    values: tuple[int, ...]


def _halves(psi: np.ndarray, q: int, n: int) -> np.ndarray:
    return psi.reshape(psi.shape[0], 1 << q, 2, 1 << (n - q - 1))


def apply_gate(psi: np.ndarray, g: Gate, n: int) -> None:
    """Apply ``g`` in place to every row of ``psi`` (shape ``(B, 2**n)``)."""
    if g.kind == "CX":
        c, t = g.qubits
        v = psi.reshape((psi.shape[0],) + (2,) * n)
        i1 = [slice(None)] * (n + 1)
        i0 = [slice(None)] * (n + 1)
        i1[c + 1] = i0[c + 1] = 1
        i1[t + 1], i0[t + 1] = 1, 0
        i1, i0 = tuple(i1), tuple(i0)
        tmp = v[i1].copy()
        v[i1] = v[i0]
        v[i0] = tmp
        return
    q = g.qubits[0]
    v = _halves(psi, q, n)
    a0, a1 = v[:, :, 0, :], v[:, :, 1, :]
    kind = g.kind
    if kind == "X":
        tmp = a0.copy()
        a0[...] = a1
        a1[...] = tmp
    elif kind == "Z":
        a1 *= -1
    elif kind == "S":
        a1 *= 1j
    elif kind == "Sdg":
        a1 *= -1j
    else:
        u = gate_matrix(g)
        new0 = u[0, 0] * a0 + u[0, 1] * a1
        a1[...] = u[1, 0] * a0 + u[1, 1] * a1
        a0[...] = new0


def _prob_one(psi: np.ndarray, q: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    v = _halves(psi, q, n)
    w = np.abs(v) ** 2
    return w[:, :, 0, :].sum(axis=(1, 2)), w[:, :, 1, :].sum(axis=(1, 2))


def _collapse(psi: np.ndarray, q: int, n: int, outcome: np.ndarray, p0, p1, reset: bool) -> None:
    v = _halves(psi, q, n)
    norm = np.sqrt(np.where(outcome == 1, p1, p0))[:, None, None]
    keep0 = (outcome == 0)[:, None, None]
    a0, a1 = v[:, :, 0, :], v[:, :, 1, :]
    if reset:
        a0[...] = np.where(keep0, a0, a1) / norm
        a1[...] = 0
    else:
        a0[...] = np.where(keep0, a0 / norm, 0)
        a1[...] = np.where(keep0, 0, a1 / norm)


def _norm_error(psi: np.ndarray) -> float:
    return float(np.max(np.abs(np.sqrt(np.sum(np.abs(psi) ** 2, axis=1)) - 1.0)))


def _check_runnable(c: DynamicCircuit, max_qubits: int) -> None:
    diags = validate_circuit(c)
    if diags:
        raise SimulationError("invalid circuit: " + "; ".join(diags))
    if c.n_qubits > max_qubits:
        raise SimulationError(f"{c.n_qubits} qubits exceeds the statevector limit of {max_qubits}")


def _flip_rates(c: DynamicCircuit, readout: ReadoutErrorModel | None) -> dict[int, float]:
    """Readout flip probability per measure clbit (result bits only)."""
    if readout is None:
        return {}
    result = set(c.result_clbits())
    out = {}
    for ins in c.instructions:
        if isinstance(ins, Measure) and ins.clbit in result:
            if ins.qubit >= len(readout.rates):
                raise SimulationError(f"no readout error rate for qubit {ins.qubit}")
            e = readout.rate(ins.qubit)
            if e > 0:
                out[ins.clbit] = e
    return out


def _n_random_ops(c: DynamicCircuit) -> int:
    return sum(isinstance(i, (Measure, Reset)) for i in c.instructions)


def _execute_batch(
    c: DynamicCircuit,
    draws: np.ndarray,
    flips: dict[int, float],
    check_norm: bool = False,
) -> np.ndarray:
    n = c.n_qubits
    batch = draws.shape[0]
    psi = np.zeros((batch, 1 << n), dtype=complex)
    psi[:, 0] = 1.0
    bits = np.zeros((batch, c.n_clbits), dtype=np.uint8)
    k = 0
    for ins in c.instructions:
        if isinstance(ins, Gate):
            apply_gate(psi, ins, n)
            if check_norm and _norm_error(psi) >= 1e-10:
                raise AssertionError(f"norm drift after {ins}")
        elif isinstance(ins, (Measure, Reset)):
            p0, p1 = _prob_one(psi, ins.qubit, n)
            outcome = (draws[:, 2 * k] < p1).astype(np.uint8)
            _collapse(psi, ins.qubit, n, outcome, p0, p1, reset=isinstance(ins, Reset))
            if isinstance(ins, Measure):
                e = flips.get(ins.clbit)
                if e is not None:
                    outcome ^= (draws[:, 2 * k + 1] < e).astype(np.uint8)
                bits[:, ins.clbit] = outcome
            k += 1
        else:
            mask = np.all(bits[:, list(ins.clbits)] == np.array(ins.values, dtype=np.uint8), axis=1)
            if not mask.any():
                continue
            if mask.all():
                for g in ins.body:
                    apply_gate(psi, g, n)
            else:
                sub = psi[mask]
                for g in ins.body:
                    apply_gate(sub, g, n)
                psi[mask] = sub
            if check_norm and _norm_error(psi) >= 1e-10:
                raise AssertionError(f"norm drift after {ins}")
    return bits


def iter_record_batches(
    c: DynamicCircuit,
    cfg: RunConfig,
    max_qubits: int = MAX_QUBITS,
    check_norm: bool = False,
    batch_size: int | None = None,
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(first_shot, bits)`` blocks with ``bits`` of shape ``(B, n_clbits)``."""
    _check_runnable(c, max_qubits)
    flips = _flip_rates(c, cfg.readout_error)
    n_draws = 2 * _n_random_ops(c)
    if batch_size is None:
        batch_size = max(1, min(_MAX_BATCH, _BATCH_AMPLITUDES >> c.n_qubits))
    for start in range(0, cfg.shots, batch_size):
        stop = min(cfg.shots, start + batch_size)
        keys = _rng.shot_keys(cfg.seed, np.arange(start, stop, dtype=np.uint64))
        draws = _rng.uniforms(keys, 0, n_draws) if n_draws else np.zeros((stop - start, 0))
        yield start, _execute_batch(c, draws, flips, check_norm)


def run_array(c: DynamicCircuit, cfg: RunConfig, **kw) -> np.ndarray:
    """All shot records as one ``(shots, n_clbits)`` uint8 array."""
    return np.concatenate([b for _, b in iter_record_batches(c, cfg, **kw)], axis=0)


def run(c: DynamicCircuit, cfg: RunConfig, **kw) -> Iterator[ShotRecord]:
    for start, block in iter_record_batches(c, cfg, **kw):
        for i, row in enumerate(block.tolist()):
            yield ShotRecord(start + i, tuple(row))


def write_records_csv(c: DynamicCircuit, batches, out: TextIO) -> int:
    """Write ``shot,<label>,...`` rows from ``(first_shot, bits)`` blocks; returns row count."""
    out.write(",".join(["shot"] + [c.label(i) for i in range(c.n_clbits)]) + "\n")
    rows = 0
    for start, block in batches:
        for i, row in enumerate(block.tolist()):
            out.write(f"{start + i}," + ",".join(map(str, row)) + "\n")
        rows += block.shape[0]
    return rows


def read_records_csv(stream: TextIO) -> tuple[tuple[str, ...], np.ndarray]:
    header = stream.readline().strip().split(",")
    if not header or header[0] != "shot":
        raise ValueError("record CSV must start with a 'shot' column")
    data = np.loadtxt(stream, delimiter=",", dtype=np.int64, ndmin=2)
    if data.size == 0:
        return tuple(header[1:]), np.zeros((0, len(header) - 1), dtype=np.uint8)
    return tuple(header[1:]), data[:, 1:].astype(np.uint8)


def _branches(c: DynamicCircuit, readout: ReadoutErrorModel | None = None, max_leaves: int = MAX_LEAVES):
    """Depth-first enumeration of all measurement branches.

    Yields ``(clbits, probability, state)`` per leaf; ``state`` has shape ``(2**n,)``.
    """
    _check_runnable(c, MAX_QUBITS)
    n = c.n_qubits
    flips = _flip_rates(c, readout)
    psi0 = np.zeros((1, 1 << n), dtype=complex)
    psi0[0, 0] = 1.0
    stack = [(0, psi0, np.zeros(c.n_clbits, dtype=np.uint8), 1.0)]
    leaves = 0
    ins_list = c.instructions
    while stack:
        pc, psi, bits, prob = stack.pop()
        while pc < len(ins_list):
            ins = ins_list[pc]
            pc += 1
            if isinstance(ins, Gate):
                apply_gate(psi, ins, n)
            elif isinstance(ins, Conditional):
                if all(bits[b] == v for b, v in zip(ins.clbits, ins.values)):
                    for g in ins.body:
                        apply_gate(psi, g, n)
            else:
                p0, p1 = (float(p[0]) for p in _prob_one(psi, ins.qubit, n))
                children = []
                for outcome, p in ((0, p0), (1, p1)):
                    if p <= _BRANCH_EPS:
                        continue
                    child = psi.copy()
                    _collapse(child, ins.qubit, n, np.array([outcome]), p0, p1, isinstance(ins, Reset))
                    if isinstance(ins, Reset):
                        children.append((child, bits, p))
                        continue
                    e = flips.get(ins.clbit, 0.0)
                    for flipped, pr in ((0, 1.0 - e), (1, e)):
                        if pr <= 0.0:
                            continue
                        b = bits.copy()
                        b[ins.clbit] = outcome ^ flipped
                        children.append((child.copy() if flipped else child, b, p * pr))
                if len(children) == 1:
                    psi, bits, pp = children[0]
                    prob *= pp
                    continue
                for child, b, pp in children[1:]:
                    stack.append((pc, child, b, prob * pp))
                psi, bits, pp = children[0]
                prob *= pp
        leaves += 1
        if leaves > max_leaves:
            raise BranchOverflowError(f"branch tree exceeds {max_leaves} leaves")
        yield tuple(int(v) for v in bits), prob, psi[0]


def enumerate_exact(
    c: DynamicCircuit, readout_error: ReadoutErrorModel | None = None, max_leaves: int = MAX_LEAVES
) -> dict[tuple[int, ...], float]:
    """Exact distribution of the classical register, no sampling."""
    out: dict[tuple[int, ...], float] = {}
    for bits, p, _ in _branches(c, readout_error, max_leaves):
        out[bits] = out.get(bits, 0.0) + p
    return out


def apply_pauli(psi: np.ndarray, p: PauliString) -> np.ndarray:
    """Return ``p|psi>`` for a single state vector."""
    n = p.n_qubits
    out = psi.reshape(1, -1).copy()
    for q, a in p.letters:
        v = _halves(out, q, n)
        a0, a1 = v[:, :, 0, :].copy(), v[:, :, 1, :].copy()
        if a == PauliAxis.X:
            v[:, :, 0, :], v[:, :, 1, :] = a1, a0
        elif a == PauliAxis.Y:
            v[:, :, 0, :], v[:, :, 1, :] = -1j * a1, 1j * a0
        elif a == PauliAxis.Z:
            v[:, :, 1, :] = -a1
    return out[0]


def pauli_expectation(psi: np.ndarray, p: PauliString) -> float:
    return float(np.vdot(psi, apply_pauli(psi, p)).real)


def expectation_exact(c: DynamicCircuit, obs: PauliString, max_leaves: int = MAX_LEAVES) -> float:
    """Branch-weighted ``<psi|obs|psi>`` over every measurement branch of ``c``."""
    if obs.n_qubits > c.n_qubits:
        raise SimulationError("observable acts outside the circuit register")
    if obs.n_qubits < c.n_qubits:
        obs = PauliString(c.n_qubits, obs.letters)
    return math.fsum(p * pauli_expectation(psi, obs) for _, p, psi in _branches(c, None, max_leaves))


def final_state(gates, n_qubits: int) -> np.ndarray:
    """State after a measurement-free gate list acting on ``|0...0>``."""
    psi = np.zeros((1, 1 << n_qubits), dtype=complex)
    psi[0, 0] = 1.0
    for g in gates:
        apply_gate(psi, g, n_qubits)
    return psi[0]
