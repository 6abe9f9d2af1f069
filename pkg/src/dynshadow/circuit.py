"""Dynamic-circuit IR and the builders for randomized measurement circuits.

A :class:`DynamicCircuit` is a flat list of gates, measurements, resets and
classically-conditioned gate blocks. Conditional bodies hold gates in
application order (first applied first).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

from .pauli import BasisVector, PauliAxis

GATE_ARITY = {"H": 1, "S": 1, "Sdg": 1, "X": 1, "Z": 1, "RY": 1, "CX": 2}
CLIFFORD_GATES = frozenset({"H", "S", "Sdg", "X", "Z", "CX"})

PROB_TOL = 1e-12


class CircuitError(ValueError):
    """Invalid builder input."""


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    theta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if self.theta is not None:
            object.__setattr__(self, "theta", float(self.theta))

    @property
    def is_clifford(self) -> bool:
        return self.kind in CLIFFORD_GATES


@dataclass(frozen=True)
class Measure:
    qubit: int
    clbit: int


@dataclass(frozen=True)
class Reset:
    qubit: int


@dataclass(frozen=True)
class Conditional:
    """Apply ``body`` iff every bit in ``clbits`` equals the matching ``values`` entry."""

    clbits: tuple[int, ...]
    values: tuple[int, ...]
    body: tuple[Gate, ...]

    def __post_init__(self):
        object.__setattr__(self, "clbits", tuple(int(b) for b in self.clbits))
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        object.__setattr__(self, "body", tuple(self.body))


Instruction = Union[Gate, Measure, Reset, Conditional]


@dataclass(frozen=True)
class DynamicCircuit:
    n_qubits: int
    n_clbits: int
    instructions: tuple[Instruction, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))
        object.__setattr__(self, "labels", tuple(self.labels))

    def label(self, clbit: int) -> str:
        if clbit < len(self.labels) and self.labels[clbit]:
            return self.labels[clbit]
        return f"c{clbit}"

    def clbit(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(label) from None

    @property
    def is_clifford(self) -> bool:
        for ins in self.instructions:
            if isinstance(ins, Gate) and not ins.is_clifford:
                return False
            if isinstance(ins, Conditional) and not all(g.is_clifford for g in ins.body):
                return False
        return True

    def result_clbits(self) -> tuple[int, ...]:
        """Classical bits carrying final readout (labels ``Result[...]``).

        Unlabelled circuits treat every measured bit as a result bit.
        """
        marked = tuple(i for i, lab in enumerate(self.labels) if lab.startswith("Result"))
        if marked:
            return marked
        return tuple(sorted({ins.clbit for ins in self.instructions if isinstance(ins, Measure)}))


def h(q: int) -> Gate:
    return Gate("H", (q,))


def s(q: int) -> Gate:
    return Gate("S", (q,))


def sdg(q: int) -> Gate:
    return Gate("Sdg", (q,))


def x(q: int) -> Gate:
    return Gate("X", (q,))


def z(q: int) -> Gate:
    return Gate("Z", (q,))


def ry(q: int, theta: float) -> Gate:
    return Gate("RY", (q,), theta)


def cx(control: int, target: int) -> Gate:
    return Gate("CX", (control, target))


@dataclass(frozen=True)
class BasisProbabilities:
    """Probabilities of measuring one qubit along X, Y and Z."""

    px: float
    py: float
    pz: float

    def __post_init__(self):
        vals = (self.px, self.py, self.pz)
        if not all(math.isfinite(v) and v > 0 for v in vals):
            raise CircuitError(f"basis probabilities must all be > 0, got {vals}")
        if abs(math.fsum(vals) - 1.0) > PROB_TOL:
            raise CircuitError(f"basis probabilities must sum to 1, got {math.fsum(vals)!r}")

    @classmethod
    def uniform(cls) -> "BasisProbabilities":
        return cls(1 / 3, 1 / 3, 1 / 3)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.px, self.py, self.pz)

    def prob(self, axis: PauliAxis) -> float:
        if axis == PauliAxis.I:
            raise CircuitError("identity is not a measurement basis")
        return self.as_tuple()[int(axis) - 1]


UNIFORM = BasisProbabilities.uniform()


@dataclass(frozen=True)
class ReadoutErrorModel:
    """Per-qubit symmetric bit-flip probabilities applied to recorded outcomes."""

    rates: tuple[float, ...]

    def __post_init__(self):
        rates = tuple(float(e) for e in self.rates)
        for i, e in enumerate(rates):
            if not (math.isfinite(e) and 0.0 <= e < 0.5):
                raise CircuitError(f"readout error for qubit {i} must lie in [0, 0.5), got {e}")
        object.__setattr__(self, "rates", rates)

    @classmethod
    def uniform(cls, n_qubits: int, e: float) -> "ReadoutErrorModel":
        return cls((e,) * n_qubits)

    def rate(self, qubit: int) -> float:
        return self.rates[qubit]


def per_qubit_probs(probs, n: int) -> tuple[BasisProbabilities, ...]:
    if probs is None:
        return (UNIFORM,) * n
    if isinstance(probs, BasisProbabilities):
        return (probs,) * n
    probs = tuple(probs)
    if len(probs) != n:
        raise CircuitError(f"expected {n} basis distributions, got {len(probs)}")
    return probs


def angles_for_distribution(p: BasisProbabilities) -> tuple[float, float]:
    """RY angles for the two-measurement basis sampler.

    The first measurement reads 0 with probability ``px + py``; given 0, the
    second reads 0 with probability ``px / (px + py)``. Outcome pairs map to
    axes as (0,0) -> X, (0,1) -> Y, (1,*) -> Z.
    """
    if not isinstance(p, BasisProbabilities):
        p = BasisProbabilities(*p)
    pxy = p.px + p.py
    theta1 = 2.0 * math.acos(math.sqrt(pxy))
    theta2 = 2.0 * math.acos(math.sqrt(p.px / pxy))
    return theta1, theta2


def _check_gates(gates: Iterable[Gate], n_qubits: int, what: str) -> tuple[Gate, ...]:
    gates = tuple(gates)
    for g in gates:
        if not isinstance(g, Gate):
            raise CircuitError(f"{what} must contain gates only, got {g!r}")
        if any(q < 0 or q >= n_qubits for q in g.qubits):
            raise CircuitError(f"{what} gate {g.kind}{list(g.qubits)} outside {n_qubits} qubits")
    return gates


def _max_qubit(gates: Iterable[Gate]) -> int:
    return max((q for g in gates for q in g.qubits), default=-1)


def build_random_pauli_circuit(
    n_s: int,
    prep: Sequence[Gate] = (),
    probs: BasisProbabilities | Sequence[BasisProbabilities] | None = None,
) -> DynamicCircuit:
    """Single dynamic circuit performing a random Pauli measurement per qubit.

    Classical layout: ``Store_Z[i] = i``, ``Store_XY[i] = n_s + i``,
    ``Result[i] = 2 n_s + i``.
    """
    if n_s < 1:
        raise CircuitError("need at least one system qubit")
    prep = _check_gates(prep, n_s, "prep")
    probs = per_qubit_probs(probs, n_s)
    sz = list(range(n_s))
    sxy = [n_s + i for i in range(n_s)]
    res = [2 * n_s + i for i in range(n_s)]
    labels = (
        [f"Store_Z[{i}]" for i in range(n_s)]
        + [f"Store_XY[{i}]" for i in range(n_s)]
        + [f"Result[{i}]" for i in range(n_s)]
    )

    ins: list[Instruction] = []
    for q in range(n_s):
        t1, t2 = angles_for_distribution(probs[q])
        ins += [ry(q, t1), Measure(q, sz[q]), ry(q, t2), Measure(q, sxy[q]), Reset(q)]
    ins += prep
    for q in range(n_s):
        cond = (sz[q], sxy[q])
        ins.append(Conditional(cond, (0, 0), (h(q),)))
        ins.append(Conditional(cond, (0, 1), (sdg(q), h(q))))
        ins.append(Conditional(cond, (1, 0), (sdg(q),)))
    for q in range(n_s):
        ins.append(Measure(q, res[q]))
    return DynamicCircuit(n_s, 3 * n_s, tuple(ins), tuple(labels))


@dataclass(frozen=True)
class SlotSpec:
    """One feedback slot: pick branch ``b`` with probability ``probabilities[b]``."""

    branch_gates: tuple[tuple[Gate, ...], ...]
    probabilities: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "branch_gates", tuple(tuple(b) for b in self.branch_gates))
        object.__setattr__(self, "probabilities", tuple(float(p) for p in self.probabilities))
        if not self.branch_gates:
            raise CircuitError("a slot needs at least one branch")
        if len(self.probabilities) != len(self.branch_gates):
            raise CircuitError("one probability per branch required")
        if any(not math.isfinite(p) or p < 0 for p in self.probabilities):
            raise CircuitError("branch probabilities must be non-negative")
        if abs(math.fsum(self.probabilities) - 1.0) > PROB_TOL:
            raise CircuitError("branch probabilities must sum to 1")

    @property
    def branch_count(self) -> int:
        return len(self.branch_gates)

    @property
    def selector_bits(self) -> int:
        return (self.branch_count - 1).bit_length()


def _tree_angles(probs: Sequence[float], levels: int) -> list[dict[int, float]]:
    """Per level, RY angle for each reachable prefix (MSB-first branch bits)."""
    padded = list(probs) + [0.0] * ((1 << levels) - len(probs))
    out = []
    for k in range(levels):
        width = 1 << (levels - k)
        angles = {}
        for prefix in range(1 << k):
            block = padded[prefix * width:(prefix + 1) * width]
            mass = math.fsum(block)
            if mass <= 0.0:
                continue
            p1 = min(1.0, math.fsum(block[width // 2:]) / mass)
            if p1 > 0.0:
                angles[prefix] = 2.0 * math.asin(math.sqrt(p1))
        out.append(angles)
    return out


def _bits_msb(value: int, width: int) -> tuple[int, ...]:
    return tuple((value >> (width - 1 - i)) & 1 for i in range(width))


def build_slot_circuit(
    slots: Sequence[SlotSpec],
    prep: Sequence[Gate] = (),
    n_qubits: int | None = None,
    sampler_qubit: int = 0,
    measure_qubits: Sequence[int] | None = None,
) -> DynamicCircuit:
    """Generic sampler/feedback circuit with qubit sharing through reset.

    Each slot's categorical draw is a binary probability tree evaluated on
    ``sampler_qubit``: one RY/measure/reset round per selector bit, with the
    RY angle of later rounds chosen by conditionals on earlier bits. The
    branch index is read MSB first from ``Sel[j][0..]``.
    """
    slots = tuple(slots)
    prep = tuple(prep)
    needed = max(
        _max_qubit(prep),
        max((_max_qubit(g) for sl in slots for g in sl.branch_gates), default=-1),
        sampler_qubit,
        max(measure_qubits, default=-1) if measure_qubits is not None else -1,
    ) + 1
    if n_qubits is None:
        n_qubits = needed
    elif n_qubits < needed:
        raise CircuitError(f"circuit needs {needed} qubits, n_qubits={n_qubits}")
    _check_gates(prep, n_qubits, "prep")
    if measure_qubits is None:
        measure_qubits = range(n_qubits)
    measure_qubits = tuple(measure_qubits)

    labels: list[str] = []
    selector: list[list[int]] = []
    for j, sl in enumerate(slots):
        bits = []
        for k in range(sl.selector_bits):
            bits.append(len(labels))
            labels.append(f"Sel[{j}][{k}]")
        selector.append(bits)
    result_bits = []
    for q in measure_qubits:
        result_bits.append(len(labels))
        labels.append(f"Result[{q}]")

    ins: list[Instruction] = []
    a = sampler_qubit
    for sl, bits in zip(slots, selector):
        levels = len(bits)
        for k, angles in enumerate(_tree_angles(sl.probabilities, levels)):
            if k == 0:
                if 0 in angles:
                    ins.append(ry(a, angles[0]))
            else:
                for prefix, theta in angles.items():
                    ins.append(Conditional(tuple(bits[:k]), _bits_msb(prefix, k), (ry(a, theta),)))
            ins.append(Measure(a, bits[k]))
            ins.append(Reset(a))
    ins += prep
    for sl, bits in zip(slots, selector):
        for b, gates in enumerate(sl.branch_gates):
            if not gates or sl.probabilities[b] == 0.0:
                continue
            if not bits:
                ins += gates
            else:
                ins.append(Conditional(tuple(bits), _bits_msb(b, len(bits)), gates))
    for q, cb in zip(measure_qubits, result_bits):
        ins.append(Measure(q, cb))
    return DynamicCircuit(n_qubits, len(labels), tuple(ins), tuple(labels))


def basis_change(axis: PauliAxis, q: int) -> tuple[Gate, ...]:
    """Gates rotating ``axis`` onto Z before a computational-basis measurement."""
    axis = PauliAxis(axis)
    if axis == PauliAxis.X:
        return (h(q),)
    if axis == PauliAxis.Y:
        return (sdg(q), h(q))
    if axis == PauliAxis.Z:
        return ()
    raise CircuitError("identity is not a measurement basis")


def build_static_shadow_circuit(
    basis: BasisVector | str, prep: Sequence[Gate] = ()
) -> DynamicCircuit:
    if isinstance(basis, str):
        from .pauli import parse_basis

        basis = parse_basis(basis)
    n = len(basis)
    if n < 1:
        raise CircuitError("empty basis")
    prep = _check_gates(prep, n, "prep")
    ins: list[Instruction] = list(prep)
    for q, a in enumerate(basis):
        ins += basis_change(a, q)
    ins += [Measure(q, q) for q in range(n)]
    return DynamicCircuit(n, n, tuple(ins), tuple(f"Result[{q}]" for q in range(n)))


def validate_circuit(c: DynamicCircuit) -> list[str]:
    """Located invariant violations; empty when the circuit is well formed."""
    diags: list[str] = []
    if c.n_qubits < 1:
        diags.append(f"circuit: n_qubits must be >= 1, got {c.n_qubits}")
    if c.n_clbits < 0:
        diags.append(f"circuit: n_clbits must be >= 0, got {c.n_clbits}")
    if c.labels and len(c.labels) != c.n_clbits:
        diags.append(f"circuit: {len(c.labels)} labels for {c.n_clbits} classical bits")

    def check_gate(g, where):
        if not isinstance(g, Gate):
            diags.append(f"{where}: expected a gate, got {type(g).__name__}")
            return
        arity = GATE_ARITY.get(g.kind)
        if arity is None:
            diags.append(f"{where}: unknown gate kind {g.kind!r}")
            return
        if len(g.qubits) != arity:
            diags.append(f"{where}: {g.kind} takes {arity} qubit(s), got {len(g.qubits)}")
        for q in g.qubits:
            if not 0 <= q < c.n_qubits:
                diags.append(f"{where}: qubit {q} out of range (n_qubits={c.n_qubits})")
        if len(set(g.qubits)) != len(g.qubits):
            diags.append(f"{where}: repeated qubit in {g.kind}")
        if g.kind == "RY":
            if g.theta is None or not math.isfinite(g.theta):
                diags.append(f"{where}: RY needs a finite angle")
        elif g.theta is not None:
            diags.append(f"{where}: {g.kind} takes no angle")

    written: set[int] = set()
    for i, ins in enumerate(c.instructions):
        where = f"instruction {i}"
        if isinstance(ins, Gate):
            check_gate(ins, where)
        elif isinstance(ins, Measure):
            if not 0 <= ins.qubit < c.n_qubits:
                diags.append(f"{where}: measure qubit {ins.qubit} out of range (n_qubits={c.n_qubits})")
            if not 0 <= ins.clbit < c.n_clbits:
                diags.append(f"{where}: measure clbit {ins.clbit} out of range (n_clbits={c.n_clbits})")
            elif ins.clbit in written:
                diags.append(f"{where}: clbit {ins.clbit} written more than once")
            written.add(ins.clbit)
        elif isinstance(ins, Reset):
            if not 0 <= ins.qubit < c.n_qubits:
                diags.append(f"{where}: reset qubit {ins.qubit} out of range (n_qubits={c.n_qubits})")
        elif isinstance(ins, Conditional):
            if len(ins.clbits) != len(ins.values):
                diags.append(f"{where}: condition has {len(ins.clbits)} bits but {len(ins.values)} values")
            if not ins.clbits:
                diags.append(f"{where}: condition references no classical bits")
            for v in ins.values:
                if v not in (0, 1):
                    diags.append(f"{where}: condition value {v} is not a bit")
            for b in ins.clbits:
                if not 0 <= b < c.n_clbits:
                    diags.append(f"{where}: condition clbit {b} out of range (n_clbits={c.n_clbits})")
                elif b not in written:
                    diags.append(f"{where}: condition reads clbit {b} before it is written")
            for k, g in enumerate(ins.body):
                if isinstance(g, (Measure, Reset, Conditional)):
                    diags.append(f"{where}.body[{k}]: conditional bodies may hold gates only")
                else:
                    check_gate(g, f"{where}.body[{k}]")
        else:
            diags.append(f"{where}: unknown instruction {type(ins).__name__}")

    for b, lab in enumerate(c.labels):
        if lab.startswith("Result") and b not in written:
            diags.append(f"circuit: result bit {b} ({lab}) is never written")
    return diags


_GATESPEC_1Q = {"h": "H", "s": "S", "sdg": "Sdg", "x": "X", "z": "Z"}
_RE_1Q = re.compile(r"^(sdg|h|s|x|z)(\d+)(?:\.\.(?:sdg|h|s|x|z)?(\d+))?$")
_RE_RY = re.compile(r"^ry(\d+)(?:\.\.(?:ry)?(\d+))?:(.+)$")
_RE_CX = re.compile(r"^cx(\d+)-(\d+)$")


def parse_gatespec(text: str | None) -> tuple[Gate, ...]:
    """Parse a compact gate list such as ``"x0..x19,h3,cx0-1,ry2:0.5"``."""
    if text is None:
        return ()
    gates: list[Gate] = []
    for tok in text.replace(" ", "").lower().split(","):
        if tok in ("", "i", "id"):
            continue
        m = _RE_1Q.match(tok)
        if m:
            lo = int(m.group(2))
            hi = int(m.group(3)) if m.group(3) else lo
            if hi < lo:
                raise CircuitError(f"empty qubit range in {tok!r}")
            gates += [Gate(_GATESPEC_1Q[m.group(1)], (q,)) for q in range(lo, hi + 1)]
            continue
        m = _RE_RY.match(tok)
        if m:
            lo = int(m.group(1))
            hi = int(m.group(2)) if m.group(2) else lo
            try:
                theta = float(m.group(3))
            except ValueError:
                raise CircuitError(f"bad angle in {tok!r}") from None
            gates += [ry(q, theta) for q in range(lo, hi + 1)]
            continue
        m = _RE_CX.match(tok)
        if m:
            gates.append(cx(int(m.group(1)), int(m.group(2))))
            continue
        raise CircuitError(f"cannot parse gate {tok!r}")
    return tuple(gates)
