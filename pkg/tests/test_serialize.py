import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynshadow.circuit import (
    BasisProbabilities,
    Conditional,
    DynamicCircuit,
    Gate,
    Measure,
    build_random_pauli_circuit,
    h,
    ry,
    validate_circuit,
    x,
)
from dynshadow.serialize import CircuitFormatError, deserialize_circuit, serialize_circuit


def test_roundtrip_sampler_circuit():
    c = build_random_pauli_circuit(1)
    text = serialize_circuit(c)
    back = deserialize_circuit(text)
    assert back == c
    assert serialize_circuit(back) == text


def test_angle_precision():
    theta = math.pi / 7 + 1e-15
    c = DynamicCircuit(1, 1, (ry(0, theta), Measure(0, 0)))
    back = deserialize_circuit(serialize_circuit(c))
    assert back.instructions[0].theta == theta
    doc = json.loads(serialize_circuit(c))
    assert isinstance(doc["instructions"][0]["theta"], str)


def test_biased_probs_roundtrip():
    c = build_random_pauli_circuit(3, (x(0), h(2)), BasisProbabilities(0.1, 0.25, 0.65))
    assert deserialize_circuit(serialize_circuit(c)) == c


def test_invalid_circuit_keeps_diagnostics():
    c = DynamicCircuit(1, 1, (Conditional((0,), (1,), (x(0),)), Measure(0, 0)))
    back = deserialize_circuit(serialize_circuit(c))
    assert validate_circuit(back) == validate_circuit(c) != []


@pytest.mark.parametrize("text", [
    "not json",
    '{"version": 2, "n_qubits": 1, "n_clbits": 0, "labels": [], "instructions": []}',
    '{"version": 1, "n_qubits": 1, "n_clbits": 0, "labels": []}',
    '{"version": 1, "n_qubits": 1, "n_clbits": 0, "labels": [], "instructions": [{"op": "teleport"}]}',
    '{"version": 1, "n_qubits": 1, "n_clbits": 0, "labels": [], "instructions": '
    '[{"op": "gate", "kind": "RY", "qubits": [0], "theta": 0.5}]}',
])
def test_schema_errors(text):
    with pytest.raises(CircuitFormatError):
        deserialize_circuit(text)


kinds = st.sampled_from(["H", "S", "Sdg", "X", "Z", "RY", "CX"])


@st.composite
def circuits(draw):
    n = draw(st.integers(2, 4))
    n_clbits = draw(st.integers(1, 4))
    ins = []
    written = []
    for _ in range(draw(st.integers(0, 12))):
        choice = draw(st.integers(0, 3))
        if choice == 0:
            k = draw(kinds)
            if k == "CX":
                a, b = draw(st.lists(st.integers(0, n - 1), min_size=2, max_size=2, unique=True))
                ins.append(Gate("CX", (a, b)))
            elif k == "RY":
                ins.append(ry(draw(st.integers(0, n - 1)), draw(st.floats(-10, 10, allow_nan=False))))
            else:
                ins.append(Gate(k, (draw(st.integers(0, n - 1)),)))
        elif choice == 1 and len(written) < n_clbits:
            cb = len(written)
            ins.append(Measure(draw(st.integers(0, n - 1)), cb))
            written.append(cb)
        elif choice == 2 and written:
            cb = draw(st.sampled_from(written))
            ins.append(Conditional((cb,), (draw(st.integers(0, 1)),), (h(0), x(1))))
    labels = tuple(draw(st.lists(st.text("abcXYZ[]_0123", max_size=8), min_size=n_clbits, max_size=n_clbits)))
    return DynamicCircuit(n, n_clbits, tuple(ins), labels)


@settings(max_examples=100, deadline=None)
@given(circuits())
def test_roundtrip_property(c):
    text = serialize_circuit(c)
    back = deserialize_circuit(text)
    assert back == c
    assert serialize_circuit(back) == text
