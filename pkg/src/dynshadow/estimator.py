"""Streaming classical-shadow estimation with optional readout mitigation.

For a snapshot with bases ``P`` and signs ``mu`` and a Pauli term ``Q`` the
single-snapshot value is::

    prod_{i in supp(Q)} [P_i == Q_i] * w_i(Q_i) * mu_i * m_i

with inverse-probability weight ``w_i = 1 / p_i(axis)`` (3 for uniform
sampling) and mitigation factor ``m_i = 1 / (1 - 2 e_i)``. An energy sample
is the coefficient-weighted sum of these values over the Hamiltonian's
non-identity terms; identity terms enter as an exact constant offset.

Accumulation is exact: sums are kept as integers in units of 2**-1074, so
merging partial accumulators in any order reproduces sequential results bit
for bit.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence, TextIO

import numpy as np

from .circuit import BasisProbabilities, ReadoutErrorModel, per_qubit_probs
from .pauli import Hamiltonian, PauliAxis, PauliString
from .snapshot import Snapshot, SnapshotBatch

_SCALE_BITS = 1074
_LO_BITS = 26


class EstimatorError(ValueError):
    pass


# ---------------------------------------------------------------------------
# exact accumulation


def _exact_int_sum(values: np.ndarray) -> int:
    """Exact sum of finite doubles as an integer multiple of 2**-1074."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        return 0
    if not np.all(np.isfinite(v)):
        raise EstimatorError("non-finite value in estimator stream")
    v = v[v != 0.0]
    tiny = np.abs(v) < np.finfo(np.float64).tiny
    total = 0
    if tiny.any():
        for t in v[tiny].tolist():
            num, den = t.as_integer_ratio()
            total += num * ((1 << _SCALE_BITS) // den)
        v = v[~tiny]
    if v.size == 0:
        return total
    mant, expo = np.frexp(v)
    m = (mant * (1 << 53)).astype(np.int64)
    shift = expo.astype(np.int64) - 53 + _SCALE_BITS
    hi = m >> _LO_BITS
    lo = m - (hi << _LO_BITS)
    shifts, inverse = np.unique(shift, return_inverse=True)
    hi_sums = np.bincount(inverse, weights=hi.astype(np.float64))
    lo_sums = np.bincount(inverse, weights=lo.astype(np.float64))
    for s, hs, ls in zip(shifts.tolist(), hi_sums.tolist(), lo_sums.tolist()):
        total += ((int(hs) << _LO_BITS) + int(ls)) << s
    return total


@dataclass
class RunningMoments:
    """Exact count, sum and sum of squares of a stream of doubles."""

    count: int = 0
    _sum: int = 0
    _sumsq: int = 0

    def add(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        self.count += values.size
        self._sum += _exact_int_sum(values)
        self._sumsq += _exact_int_sum(values * values)

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        return RunningMoments(self.count + other.count, self._sum + other._sum, self._sumsq + other._sumsq)

    @property
    def total(self) -> float:
        return self._sum / (1 << _SCALE_BITS)

    @property
    def total_sq(self) -> float:
        return self._sumsq / (1 << _SCALE_BITS)

    def state(self) -> tuple[int, int, int]:
        return (self.count, self._sum, self._sumsq)

    @property
    def mean(self) -> float:
        if not self.count:
            raise EstimatorError("no samples")
        return self._sum / (self.count << _SCALE_BITS)

    @property
    def variance(self) -> float:
        """Unbiased sample variance, evaluated exactly before rounding."""
        n = self.count
        if n < 2:
            return float("nan")
        num = n * self._sumsq * (1 << _SCALE_BITS) - self._sum * self._sum
        return num / (n * (n - 1) << (2 * _SCALE_BITS))

    @property
    def stderr(self) -> float:
        var = self.variance
        return math.sqrt(max(var, 0.0) / self.count) if self.count > 1 else float("nan")


# ---------------------------------------------------------------------------
# configuration and per-snapshot values


@dataclass(frozen=True)
class EstimatorConfig:
    """``weights``: basis distribution used for inverse-probability weighting
    (one per qubit or shared). ``aggregator``: ``"mean"`` or ``"mom"``
    (median of ``groups`` round-robin group means)."""

    weights: BasisProbabilities | tuple[BasisProbabilities, ...] | None = None
    mitigation: ReadoutErrorModel | None = None
    aggregator: str = "mean"
    groups: int = 1

    def __post_init__(self):
        if self.aggregator not in ("mean", "mom"):
            raise EstimatorError(f"unknown aggregator {self.aggregator!r}")
        if self.groups < 1:
            raise EstimatorError("median-of-means needs at least one group")
        if isinstance(self.weights, (list, tuple)):
            object.__setattr__(self, "weights", tuple(self.weights))

    def weights_for(self, n: int) -> tuple[BasisProbabilities, ...]:
        return per_qubit_probs(self.weights, n)


def parse_aggregator(text: str) -> tuple[str, int]:
    """``"mean"`` or ``"mom:<k>"`` to ``(aggregator, groups)``."""
    if text == "mean":
        return "mean", 1
    if text.startswith("mom:"):
        try:
            k = int(text[4:])
        except ValueError:
            raise EstimatorError(f"bad group count in {text!r}") from None
        return "mom", k
    raise EstimatorError(f"unknown aggregator {text!r}")


def mitigation_factor(supp: Iterable[int], e: ReadoutErrorModel | Sequence[float]) -> float:
    rates = e.rates if isinstance(e, ReadoutErrorModel) else tuple(e)
    out = 1.0
    for i in supp:
        ei = rates[i]
        if not 0.0 <= ei < 0.5:
            raise EstimatorError(f"readout error {ei} for qubit {i} outside [0, 0.5)")
        out *= 1.0 / (1.0 - 2.0 * ei)
    return out


def single_snapshot_value(s: Snapshot, q: PauliString, cfg: EstimatorConfig | None = None) -> float:
    cfg = cfg or EstimatorConfig()
    if q.is_identity():
        raise EstimatorError("identity observable has the trivial estimate 1")
    if q.n_qubits != s.n_qubits:
        raise EstimatorError(f"observable on {q.n_qubits} qubits, snapshot on {s.n_qubits}")
    weights = cfg.weights_for(s.n_qubits)
    value = 1.0
    for i, letter in q.letters:
        if s.basis[i] != letter:
            return 0.0
        value *= s.mu[i] / weights[i].prob(letter)
    if cfg.mitigation is not None:
        value *= mitigation_factor(q.support(), cfg.mitigation)
    return value


def snapshot_from_shot_record(r, layout: Sequence[str]) -> Snapshot:
    """Decode (Store_Z, Store_XY, Result) bits of one shot record."""
    values = r.values if hasattr(r, "values") else tuple(r)
    index = {lab: i for i, lab in enumerate(layout)}
    n = sum(1 for lab in layout if lab.startswith("Result["))
    basis, mu = [], []
    for i in range(n):
        try:
            sz = values[index[f"Store_Z[{i}]"]]
            sxy = values[index[f"Store_XY[{i}]"]]
            res = values[index[f"Result[{i}]"]]
        except KeyError as exc:
            raise EstimatorError(f"record layout lacks label {exc.args[0]}") from None
        basis.append(PauliAxis.Z if sz else (PauliAxis.Y if sxy else PauliAxis.X))
        mu.append(1 - 2 * int(res))
    if n == 0:
        raise EstimatorError("record layout has no Result bits")
    return Snapshot(tuple(basis), tuple(mu))


def snapshots_from_records(bits: np.ndarray, layout: Sequence[str], first_shot: int = 0) -> SnapshotBatch:
    """Vectorised :func:`snapshot_from_shot_record` over a ``(shots, n_clbits)`` array."""
    index = {lab: i for i, lab in enumerate(layout)}
    n = sum(1 for lab in layout if lab.startswith("Result["))
    try:
        sz = bits[:, [index[f"Store_Z[{i}]"] for i in range(n)]]
        sxy = bits[:, [index[f"Store_XY[{i}]"] for i in range(n)]]
        res = bits[:, [index[f"Result[{i}]"] for i in range(n)]]
    except KeyError as exc:
        raise EstimatorError(f"record layout lacks label {exc.args[0]}") from None
    bases = np.where(sz == 1, 3, np.where(sxy == 1, 2, 1)).astype(np.uint8)
    return SnapshotBatch(bases, res.astype(np.uint8), first_shot)


@dataclass(frozen=True)
class _TermPlan:
    coeff: float
    support: np.ndarray
    letters: np.ndarray
    scale: float

    def values(self, batch: SnapshotBatch) -> np.ndarray:
        b = batch.bases[:, self.support]
        o = batch.outcomes[:, self.support]
        match = np.all(b == self.letters, axis=1)
        parity = np.bitwise_xor.reduce(o, axis=1) if o.shape[1] > 1 else o[:, 0]
        return np.where(match, self.scale * (1.0 - 2.0 * parity), 0.0)


def _plan(q: PauliString, coeff: float, cfg: EstimatorConfig) -> _TermPlan:
    weights = cfg.weights_for(q.n_qubits)
    scale = 1.0
    for i, letter in q.letters:
        scale /= weights[i].prob(letter)
    if cfg.mitigation is not None:
        scale *= mitigation_factor(q.support(), cfg.mitigation)
    return _TermPlan(
        coeff,
        np.array(q.support(), dtype=np.intp),
        np.array([int(a) for _, a in q.letters], dtype=np.uint8),
        scale,
    )


def as_batches(stream, batch_size: int = 1 << 16) -> Iterator[SnapshotBatch]:
    """Normalise a stream of :class:`Snapshot` and/or :class:`SnapshotBatch`."""
    if isinstance(stream, SnapshotBatch):
        stream = (stream,)
    pending: list[Snapshot] = []
    shot = 0
    for item in stream:
        if isinstance(item, SnapshotBatch):
            if pending:
                yield SnapshotBatch.from_snapshots(pending, shot)
                shot += len(pending)
                pending = []
            if len(item):
                yield item
                shot += len(item)
        else:
            pending.append(item)
            if len(pending) >= batch_size:
                yield SnapshotBatch.from_snapshots(pending, shot)
                shot += len(pending)
                pending = []
    if pending:
        yield SnapshotBatch.from_snapshots(pending, shot)


class Estimate(NamedTuple):
    value: float
    stderr: float


@dataclass
class ShadowAccumulator:
    """Streaming estimator state for one observable or one Hamiltonian.

    Memory is O(#terms), independent of the number of snapshots.
    """

    n_qubits: int
    plans: tuple[_TermPlan, ...]
    offset: float = 0.0
    aggregator: str = "mean"
    groups: int = 1
    moments: RunningMoments = field(default_factory=RunningMoments)
    group_moments: list[RunningMoments] = field(default_factory=list)

    def __post_init__(self):
        if self.aggregator == "mom" and not self.group_moments:
            self.group_moments = [RunningMoments() for _ in range(self.groups)]

    @classmethod
    def for_hamiltonian(cls, h: Hamiltonian, cfg: EstimatorConfig | None = None) -> "ShadowAccumulator":
        cfg = cfg or EstimatorConfig()
        if not h.terms:
            raise EstimatorError("Hamiltonian has no terms")
        plans = tuple(_plan(p, c, cfg) for c, p in h.terms if not p.is_identity())
        return cls(h.n_qubits, plans, h.identity_offset(), cfg.aggregator, cfg.groups)

    @classmethod
    def for_pauli(cls, q: PauliString, cfg: EstimatorConfig | None = None) -> "ShadowAccumulator":
        cfg = cfg or EstimatorConfig()
        if q.is_identity():
            raise EstimatorError("identity observable has the trivial estimate 1")
        return cls(q.n_qubits, (_plan(q, 1.0, cfg),), 0.0, cfg.aggregator, cfg.groups)

    @property
    def count(self) -> int:
        return self.moments.count

    def sample_values(self, batch: SnapshotBatch) -> np.ndarray:
        if batch.n_qubits != self.n_qubits:
            raise EstimatorError(f"snapshots on {batch.n_qubits} qubits, observable on {self.n_qubits}")
        nu = np.zeros(len(batch))
        for p in self.plans:
            nu += p.coeff * p.values(batch)
        return nu

    def add_values(self, nu: np.ndarray) -> None:
        if self.aggregator == "mom":
            idx = (self.count + np.arange(nu.size)) % self.groups
            for g in range(self.groups):
                self.group_moments[g].add(nu[idx == g])
        self.moments.add(nu)

    def add(self, batch: SnapshotBatch) -> None:
        self.add_values(self.sample_values(batch))

    def merge(self, other: "ShadowAccumulator") -> "ShadowAccumulator":
        if (self.n_qubits, self.aggregator, self.groups) != (other.n_qubits, other.aggregator, other.groups):
            raise EstimatorError("cannot merge accumulators with different configurations")
        return ShadowAccumulator(
            self.n_qubits, self.plans, self.offset, self.aggregator, self.groups,
            self.moments.merge(other.moments),
            [a.merge(b) for a, b in zip(self.group_moments, other.group_moments)],
        )

    def result(self) -> Estimate:
        """Mean: sample mean and sample-stddev / sqrt(N).

        Median of means: median of group means; stderr is
        ``sqrt(pi/2) * stdev(group means) / sqrt(k)``, the large-k standard
        error of a median of normal group means.
        """
        if self.count == 0:
            raise EstimatorError("empty snapshot stream")
        if self.aggregator == "mean" or self.groups == 1:
            return Estimate(self.moments.mean + self.offset, self.moments.stderr)
        if self.groups > self.count:
            raise EstimatorError(f"{self.groups} groups exceed {self.count} snapshots")
        means = [g.mean for g in self.group_moments]
        spread = statistics.stdev(means)
        return Estimate(statistics.median(means) + self.offset,
                        math.sqrt(math.pi / 2) * spread / math.sqrt(self.groups))


def _consume(acc: ShadowAccumulator, snapshots) -> ShadowAccumulator:
    for batch in as_batches(snapshots):
        acc.add(batch)
    if acc.count == 0:
        raise EstimatorError("empty snapshot stream")
    return acc


def estimate_pauli(snapshots, q: PauliString, cfg: EstimatorConfig | None = None) -> Estimate:
    return _consume(ShadowAccumulator.for_pauli(q, cfg), snapshots).result()


def accumulate_energy(snapshots, h: Hamiltonian, cfg: EstimatorConfig | None = None) -> ShadowAccumulator:
    return _consume(ShadowAccumulator.for_hamiltonian(h, cfg), snapshots)


def estimate_energy(snapshots, h: Hamiltonian, cfg: EstimatorConfig | None = None) -> Estimate:
    return accumulate_energy(snapshots, h, cfg).result()


# ---------------------------------------------------------------------------
# convergence traces


class TraceRow(NamedTuple):
    shots: int
    estimate: float
    stderr: float
    abs_error: float | None


@dataclass
class ConvergenceTrace:
    rows: list[TraceRow]
    truncated: bool = False
    reference: float | None = None

    def write_csv(self, out: TextIO) -> None:
        has_ref = self.reference is not None
        out.write("shots,estimate,stderr" + (",abs_error" if has_ref else "") + "\n")
        for r in self.rows:
            line = f"{r.shots},{r.estimate!r},{r.stderr!r}"
            if has_ref:
                line += f",{r.abs_error!r}"
            out.write(line + "\n")

    def loglog_slope(self, min_shots: int = 0) -> float:
        """Least-squares slope of log|error| against log N."""
        pts = [(r.shots, r.abs_error) for r in self.rows
               if r.abs_error is not None and r.abs_error > 0 and r.shots >= min_shots]
        if len(pts) < 2:
            raise EstimatorError("need at least two checkpoints with nonzero error")
        xs = np.log([p[0] for p in pts])
        ys = np.log([p[1] for p in pts])
        return float(np.polyfit(xs, ys, 1)[0])


def convergence_trace(
    snapshots,
    h: Hamiltonian | PauliString,
    cfg: EstimatorConfig | None = None,
    checkpoints: Sequence[int] = (),
    reference: float | None = None,
    accumulator: ShadowAccumulator | None = None,
) -> ConvergenceTrace:
    """Running estimate at each checkpoint, in a single pass over the stream.

    Consumption stops after the batch holding the last checkpoint. Pass an
    ``accumulator`` (fresh, built for ``h``) to keep adding the rest of an
    iterator to it afterwards.
    """
    checkpoints = [int(c) for c in checkpoints]
    if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise EstimatorError("checkpoints must be strictly increasing")
    if checkpoints and checkpoints[0] < 1:
        raise EstimatorError("checkpoints must be positive")
    trace = ConvergenceTrace([], reference=reference)
    if not checkpoints:
        return trace
    if accumulator is not None:
        acc = accumulator
    elif isinstance(h, PauliString):
        acc = ShadowAccumulator.for_pauli(h, cfg)
    else:
        acc = ShadowAccumulator.for_hamiltonian(h, cfg)
    pending = list(checkpoints)

    def emit():
        est = acc.result()
        err = abs(est.value - reference) if reference is not None else None
        trace.rows.append(TraceRow(acc.count, est.value, est.stderr, err))

    for batch in as_batches(snapshots):
        nu = acc.sample_values(batch)
        pos = 0
        while pending and acc.count + (nu.size - pos) >= pending[0]:
            cut = pos + pending.pop(0) - acc.count
            acc.add_values(nu[pos:cut])
            pos = cut
            emit()
        acc.add_values(nu[pos:])
        if not pending:
            break
    trace.truncated = bool(pending)
    return trace
