"""Command-line entry point: ``dynshadow <command> ...``.

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 acceptance
check failure. Summaries go to stdout as ``key=value`` lines.
"""

from __future__ import annotations

import argparse
import contextlib
import math
import os
import secrets
import sys
import tempfile
from pathlib import Path

import numpy as np

from .bench import CALIBRATED_COST_MODEL, CompileCostModel, run_bench
from .circuit import (
    BasisProbabilities,
    CircuitError,
    ReadoutErrorModel,
    build_random_pauli_circuit,
    parse_gatespec,
    validate_circuit,
    h,
    s,
)
from .estimator import (
    EstimatorConfig,
    EstimatorError,
    ShadowAccumulator,
    convergence_trace,
    parse_aggregator,
    snapshots_from_records,
)
from .pauli import Hamiltonian, PauliError, parse_hamiltonian, parse_pauli
from .serialize import CircuitFormatError, deserialize_circuit, serialize_circuit
from .snapshot import read_snapshots_csv, write_snapshots_csv
from .stabilizer import HybridShadowConfig, NonCliffordError, hybrid_shadow_batches, run_clifford_circuit
from .statevector import (
    RunConfig,
    SimulationError,
    iter_record_batches,
    read_records_csv,
    write_records_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class ValidationFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(**kv) -> None:
    for k, v in kv.items():
        print(f"{k}={v}")


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


@contextlib.contextmanager
def atomic_output(path: str | None):
    """Write to ``path`` via a temporary file and rename; ``None`` or ``-`` means stdout."""
    if path in (None, "-"):
        yield sys.stdout
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent or ".")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            yield fh
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, target)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _probs(text: str | None) -> BasisProbabilities | None:
    if text is None:
        return None
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--probs expects three numbers, got {text!r}") from None
    if len(vals) != 3:
        raise UsageError("--probs expects pX,pY,pZ")
    try:
        return BasisProbabilities(*vals)
    except CircuitError as exc:
        raise UsageError(str(exc)) from None


def _rates(text: str) -> list[float]:
    if os.path.exists(text):
        text = Path(text).read_text().replace("\n", ",")
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse readout error rates {text!r}") from None


def _readout(args, n: int) -> ReadoutErrorModel | None:
    single = getattr(args, "readout_error", None)
    many = getattr(args, "readout_errors", None)
    if single is not None and many is not None:
        raise UsageError("give either --readout-error or --readout-errors")
    if single is not None:
        rates = [single] * n
    elif many is not None:
        rates = _rates(many)
        if len(rates) == 1:
            rates = rates * n
    else:
        return None
    if len(rates) != n:
        raise UsageError(f"{len(rates)} readout error rates for {n} qubits")
    try:
        return ReadoutErrorModel(tuple(rates))
    except CircuitError as exc:
        raise UsageError(str(exc)) from None


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    if getattr(args, "ci", False):
        raise UsageError("--seed is mandatory with --ci")
    return secrets.randbits(63)


def _prep(text: str | None):
    try:
        return parse_gatespec(text)
    except CircuitError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------


def cmd_build(args) -> int:
    probs = _probs(args.probs)
    try:
        circuit = build_random_pauli_circuit(args.qubits, _prep(args.prep), probs)
    except CircuitError as exc:
        raise UsageError(str(exc)) from None
    diags = validate_circuit(circuit)
    for d in diags:
        print(d, file=sys.stderr)
    if diags:
        return EXIT_INVALID
    with atomic_output(args.out) as fh:
        fh.write(serialize_circuit(circuit))
    if args.out not in (None, "-"):
        _emit(circuit=args.out, n_qubits=circuit.n_qubits, n_clbits=circuit.n_clbits,
              instructions=len(circuit.instructions))
    return EXIT_OK


def _load_circuit(path: str):
    try:
        circuit = deserialize_circuit(Path(path).read_text())
    except (OSError, CircuitFormatError) as exc:
        raise ValidationFailure(f"cannot load circuit {path}: {exc}") from None
    diags = validate_circuit(circuit)
    if diags:
        raise ValidationFailure("; ".join(diags))
    return circuit


def cmd_run(args) -> int:
    seed = _seed(args)
    if args.hybrid == (args.circuit is not None):
        raise UsageError("give exactly one of --circuit or --hybrid")
    if args.hybrid:
        if args.qubits is None:
            raise UsageError("--hybrid needs --qubits")
        n = args.qubits
        prep = _prep(args.prep)
        probs = _probs(args.probs)
        readout = _readout(args, n)
        if args.backend == "stabilizer":
            try:
                cfg = HybridShadowConfig(n, prep, probs, args.shots, seed, readout)
            except NonCliffordError as exc:
                raise ValidationFailure(str(exc)) from None
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            batches = hybrid_shadow_batches(cfg)
        else:
            try:
                circuit = build_random_pauli_circuit(n, prep, probs)
                blocks = iter_record_batches(circuit, RunConfig(args.shots, seed, readout))
                batches = (snapshots_from_records(b, circuit.labels, start) for start, b in blocks)
                first = next(batches)
            except SimulationError as exc:
                raise ValidationFailure(str(exc)) from None
            batches = _chain(first, batches)
        with atomic_output(args.out) as fh:
            rows = write_snapshots_csv(batches, fh)
        _report_run(args, seed, rows, "snapshots")
        return EXIT_OK

    circuit = _load_circuit(args.circuit)
    readout = _readout(args, circuit.n_qubits)
    if args.backend == "stabilizer":
        try:
            bits = run_clifford_circuit(circuit, args.shots, seed, readout)
        except NonCliffordError as exc:
            raise ValidationFailure(str(exc)) from None
        blocks = [(0, bits)]
    else:
        try:
            blocks = iter_record_batches(circuit, RunConfig(args.shots, seed, readout))
            first = next(blocks)
        except SimulationError as exc:
            raise ValidationFailure(str(exc)) from None
        blocks = _chain(first, blocks)
    with atomic_output(args.out) as fh:
        if args.as_snapshots:
            try:
                snaps = (snapshots_from_records(b, circuit.labels, start) for start, b in blocks)
                first = next(snaps)
            except EstimatorError as exc:
                raise ValidationFailure(str(exc)) from None
            rows = write_snapshots_csv(_chain(first, snaps), fh)
        else:
            rows = write_records_csv(circuit, blocks, fh)
    _report_run(args, seed, rows, "snapshots" if args.as_snapshots else "records")
    return EXIT_OK


def _chain(first, rest):
    yield first
    yield from rest


def _report_run(args, seed, rows, kind):
    if args.out not in (None, "-"):
        _emit(output=args.out, kind=kind, rows=rows, seed=seed, backend=args.backend)


def _snapshot_source(path: str):
    """Snapshot batches from a snapshot CSV or a dynamic-circuit record CSV."""
    fh = open(path, newline="")
    header = fh.readline()
    fh.seek(0)
    if header.strip() == "shot,basis,outcomes":
        return fh, read_snapshots_csv(fh)
    labels, bits = read_records_csv(fh)
    return fh, iter([snapshots_from_records(bits, labels)])


def cmd_estimate(args) -> int:
    if (args.hamiltonian is None) == (args.observable is None):
        raise UsageError("give exactly one of --hamiltonian or --observable")
    try:
        aggregator, groups = parse_aggregator(args.aggregator)
    except EstimatorError as exc:
        raise UsageError(str(exc)) from None
    try:
        if args.hamiltonian is not None:
            ham = parse_hamiltonian(Path(args.hamiltonian).read_text())
        else:
            q = parse_pauli(args.observable)
            ham = Hamiltonian(q.n_qubits, ((1.0, q),))
    except OSError as exc:
        raise UsageError(str(exc)) from None
    except PauliError as exc:
        raise ValidationFailure(str(exc)) from None
    if args.mitigate and args.readout_errors is None:
        raise UsageError("--mitigate needs --readout-errors")
    mitigation = _readout(args, ham.n_qubits) if args.mitigate else None
    weights = _probs(args.weights)
    cfg = EstimatorConfig(weights, mitigation, aggregator, groups)

    try:
        fh, batches = _snapshot_source(args.snapshots)
    except OSError as exc:
        raise UsageError(str(exc)) from None
    checkpoints = []
    if args.trace:
        try:
            checkpoints = [int(float(c)) for c in args.trace.split(",") if c]
        except ValueError:
            raise UsageError(f"bad --trace list {args.trace!r}") from None
    try:
        with fh:
            acc = ShadowAccumulator.for_hamiltonian(ham, cfg)
            trace = None
            batches = iter(batches)
            if checkpoints:
                trace = convergence_trace(batches, ham, cfg, checkpoints, args.reference, accumulator=acc)
            for b in batches:
                acc.add(b)
            est = acc.result()
    except (EstimatorError, ValueError) as exc:
        raise ValidationFailure(str(exc)) from None

    report = dict(value=repr(est.value), stderr=repr(est.stderr), shots=acc.count,
                  terms=len(ham.terms), aggregator=args.aggregator,
                  mitigation="on" if mitigation else "off")
    if args.reference is not None:
        report["abs_error"] = repr(abs(est.value - args.reference))
    _emit(**report)
    if trace is not None:
        if trace.truncated:
            print("trace_truncated=true", file=sys.stderr)
        with atomic_output(args.trace_out) as out:
            trace.write_csv(out)
    return EXIT_OK


# ---------------------------------------------------------------------------

VERIFY_PREPS = (("|0>", ()), ("|+>", (h(0),)), ("|y+>", (h(0), s(0))))
VERIFY_OBS = ("Z", "X", "Y")


def verify_shot_floor(tolerance: float) -> int:
    """Smallest shot count at which a 3-sigma band of the worst-case
    per-snapshot variance (3) fits inside ``tolerance``."""
    return math.ceil(27.0 / tolerance ** 2)


def verify_grid(shots: int, seed: int, readout: ReadoutErrorModel | None = None,
                mitigate: bool = False) -> np.ndarray:
    """Rows: preps |0>, |+>, |y+>; columns: <Z>, <X>, <Y> from the dynamic circuit."""
    grid = np.zeros((3, 3))
    cfg = EstimatorConfig(mitigation=readout if mitigate else None)
    for i, (_, prep) in enumerate(VERIFY_PREPS):
        circuit = build_random_pauli_circuit(1, prep)
        accs = [ShadowAccumulator.for_pauli(parse_pauli(o), cfg) for o in VERIFY_OBS]
        for start, bits in iter_record_batches(circuit, RunConfig(shots, seed + i, readout)):
            batch = snapshots_from_records(bits, circuit.labels, start)
            for acc in accs:
                acc.add(batch)
        grid[i] = [acc.result().value for acc in accs]
    return grid


def cmd_verify_single_qubit(args) -> int:
    seed = _seed(args)
    if args.shots < 1:
        raise UsageError("--shots must be >= 1")
    readout = _readout(args, 1)
    if args.mitigate and readout is None:
        raise UsageError("--mitigate needs --readout-error")
    grid = verify_grid(args.shots, seed, readout, args.mitigate)
    tol = args.tolerance
    target = np.eye(3)
    worst = float(np.max(np.abs(grid - target)))
    if args.shots < verify_shot_floor(tol):
        status = "inconclusive"
    else:
        status = "pass" if worst <= tol else "fail"
    print("prep  " + "  ".join(f"<{o}>".rjust(9) for o in VERIFY_OBS))
    for (label, _), row in zip(VERIFY_PREPS, grid):
        print(f"{label:5s} " + "  ".join(f"{v:+9.5f}" for v in row))
    _emit(shots=args.shots, seed=seed, tolerance=tol, max_deviation=repr(worst),
          shot_floor=verify_shot_floor(tol), status=status)
    return EXIT_CHECK if status == "fail" else EXIT_OK


def cmd_bench(args) -> int:
    seed = _seed(args)
    if args.shots < 1 or (args.static_shots is not None and args.static_shots < 1):
        raise UsageError("shot counts must be >= 1")
    c = CALIBRATED_COST_MODEL.compile_cost if args.compile_cost is None else args.compile_cost
    sc = CALIBRATED_COST_MODEL.per_shot_cost if args.per_shot_cost is None else args.per_shot_cost
    try:
        model = CompileCostModel(c, sc)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    dyn, static = run_bench(args.qubits, args.shots, seed, model, args.static_shots,
                            _prep(args.prep), _probs(args.probs))
    for r in (dyn, static):
        _emit(**{f"{r.mode}.{k}": v for k, v in r.summary().items()})
    _emit(seed=seed, compile_cost=model.compile_cost, per_shot_cost=model.per_shot_cost)
    ok = dyn.circuits_compiled == 1 and static.circuits_compiled == static.total_shots
    return EXIT_OK if ok else EXIT_CHECK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dynshadow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("build", help="write the random-Pauli dynamic circuit")
    b.add_argument("--qubits", type=int, required=True)
    b.add_argument("--prep", help="gate list, e.g. x0,x1 or x0..x19")
    b.add_argument("--probs", help="pX,pY,pZ basis probabilities (default uniform)")
    b.add_argument("--out", help="output path (default stdout)")
    b.set_defaults(func=cmd_build)

    r = sub.add_parser("run", help="execute a circuit or the hybrid shadow sampler")
    r.add_argument("--circuit")
    r.add_argument("--hybrid", action="store_true")
    r.add_argument("--qubits", type=int)
    r.add_argument("--prep")
    r.add_argument("--probs")
    r.add_argument("--shots", type=int, required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--readout-error", type=float)
    r.add_argument("--readout-errors", help="comma list or file of per-qubit rates")
    r.add_argument("--backend", choices=("statevector", "stabilizer"), default="statevector")
    r.add_argument("--as-snapshots", action="store_true",
                   help="decode random-Pauli records into the snapshot CSV")
    r.add_argument("--out")
    r.add_argument("--ci", action="store_true")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("estimate", help="classical-shadow energy estimate")
    e.add_argument("--snapshots", required=True, help="snapshot CSV or random-Pauli record CSV")
    e.add_argument("--hamiltonian")
    e.add_argument("--observable", help="single Pauli word instead of a Hamiltonian file")
    e.add_argument("--mitigate", action="store_true")
    e.add_argument("--readout-errors")
    e.add_argument("--weights", help="pX,pY,pZ used when sampling (default uniform)")
    e.add_argument("--aggregator", default="mean", help="mean or mom:<k>")
    e.add_argument("--trace", help="comma-separated checkpoints")
    e.add_argument("--trace-out", help="trace CSV path (default stdout)")
    e.add_argument("--reference", type=float)
    e.set_defaults(func=cmd_estimate)

    v = sub.add_parser("verify-single-qubit", help="3x3 <Z>,<X>,<Y> grid on |0>,|+>,|y+>")
    v.add_argument("--shots", type=int, default=100_000)
    v.add_argument("--seed", type=int)
    v.add_argument("--backend", choices=("statevector",), default="statevector")
    v.add_argument("--readout-error", type=float)
    v.add_argument("--mitigate", action="store_true")
    v.add_argument("--tolerance", type=float, default=0.02)
    v.add_argument("--ci", action="store_true")
    v.set_defaults(func=cmd_verify_single_qubit)

    k = sub.add_parser("bench", help="dynamic vs static compile-cost benchmark")
    k.add_argument("--qubits", type=int, default=1)
    k.add_argument("--shots", type=int, required=True)
    k.add_argument("--static-shots", type=int)
    k.add_argument("--seed", type=int)
    k.add_argument("--prep")
    k.add_argument("--probs")
    k.add_argument("--compile-cost", type=float)
    k.add_argument("--per-shot-cost", type=float)
    k.add_argument("--backend", choices=("statevector",), default="statevector")
    k.add_argument("--ci", action="store_true")
    k.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dynshadow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationFailure as exc:
        print(f"dynshadow: invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
