"""Text (JSON) encoding of :class:`~dynshadow.circuit.DynamicCircuit`.

Output is canonical: keys sorted, fixed indentation, angles written as
decimal strings with 17 significant digits, so re-serializing a decoded
circuit reproduces the input byte for byte. See ``docs/circuit_format.md``.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema

from .circuit import Conditional, DynamicCircuit, Gate, Measure, Reset

FORMAT_VERSION = 1


class CircuitFormatError(ValueError):
    pass


@lru_cache(maxsize=1)
def _validator():
    schema = json.loads(resources.files(__package__).joinpath("circuit.schema.json").read_text())
    return jsonschema.Draft202012Validator(schema)


def _angle(theta: float) -> str:
    return format(theta, ".17g")


def _gate_obj(g: Gate) -> dict:
    obj = {"op": "gate", "kind": g.kind, "qubits": list(g.qubits)}
    if g.theta is not None:
        obj["theta"] = _angle(g.theta)
    return obj


def _ins_obj(ins) -> dict:
    if isinstance(ins, Gate):
        return _gate_obj(ins)
    if isinstance(ins, Measure):
        return {"op": "measure", "qubit": ins.qubit, "clbit": ins.clbit}
    if isinstance(ins, Reset):
        return {"op": "reset", "qubit": ins.qubit}
    if isinstance(ins, Conditional):
        return {
            "op": "if",
            "clbits": list(ins.clbits),
            "values": list(ins.values),
            "body": [_gate_obj(g) for g in ins.body],
        }
    raise TypeError(f"cannot serialize {ins!r}")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(", ", ": "))


def serialize_circuit(c: DynamicCircuit) -> str:
    # keys in sorted order, one instruction per line
    body = ",\n".join("  " + _dump(_ins_obj(i)) for i in c.instructions)
    instructions = f"[\n{body}\n ]" if body else "[]"
    return (
        "{\n"
        f' "instructions": {instructions},\n'
        f' "labels": {_dump(list(c.labels))},\n'
        f' "n_clbits": {c.n_clbits},\n'
        f' "n_qubits": {c.n_qubits},\n'
        f' "version": {FORMAT_VERSION}\n'
        "}\n"
    )


def _gate(obj) -> Gate:
    theta = obj.get("theta")
    return Gate(obj["kind"], tuple(obj["qubits"]), None if theta is None else float(theta))


def deserialize_circuit(text: str) -> DynamicCircuit:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CircuitFormatError(f"not valid JSON: {exc}") from None
    errors = sorted(_validator().iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        loc = "/".join(str(p) for p in e.path) or "<root>"
        raise CircuitFormatError(f"{loc}: {e.message}")
    ins = []
    for obj in doc["instructions"]:
        op = obj["op"]
        if op == "gate":
            ins.append(_gate(obj))
        elif op == "measure":
            ins.append(Measure(obj["qubit"], obj["clbit"]))
        elif op == "reset":
            ins.append(Reset(obj["qubit"]))
        else:
            ins.append(Conditional(tuple(obj["clbits"]), tuple(obj["values"]), tuple(_gate(g) for g in obj["body"])))
    return DynamicCircuit(doc["n_qubits"], doc["n_clbits"], tuple(ins), tuple(doc["labels"]))
