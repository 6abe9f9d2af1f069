"""Bit-packed stabilizer tableau and the hybrid classical-shadow sampler.

The tableau follows the destabilizer/stabilizer layout: rows ``0..n-1`` are
destabilizers, rows ``n..2n-1`` stabilizers. X and Z parts are packed 64
qubits per uint64 word; row products are word-wise XOR plus a popcount-based
phase update. A row with both bits set on a qubit denotes Y (not XZ).

The hybrid sampler replaces the RY sampler blocks of the dynamic circuit
(non-Clifford) with classical categorical draws of the same distribution,
then runs the Clifford remainder on the tableau.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from . import rng as _rng
from .circuit import (
    BasisProbabilities,
    DynamicCircuit,
    Gate,
    Measure,
    ReadoutErrorModel,
    Reset,
    basis_change,
    per_qubit_probs,
    validate_circuit,
)
from .pauli import PauliAxis, PauliString
from .snapshot import Snapshot, SnapshotBatch, iter_snapshots

_ONE = np.uint64(1)


class NonCliffordError(ValueError):
    pass


class Tableau:
    def __init__(self, n: int):
        if n < 1:
            raise ValueError("a tableau needs at least one qubit")
        self.n = n
        self.words = (n + 63) // 64
        self.x = np.zeros((2 * n, self.words), dtype=np.uint64)
        self.z = np.zeros((2 * n, self.words), dtype=np.uint64)
        self.r = np.zeros(2 * n, dtype=np.uint8)
        for q in range(n):
            w, m = self._loc(q)
            self.x[q, w] = m
            self.z[n + q, w] = m

    @staticmethod
    def _loc(q: int) -> tuple[int, np.uint64]:
        return q >> 6, _ONE << np.uint64(q & 63)

    def copy(self) -> "Tableau":
        t = Tableau.__new__(Tableau)
        t.n, t.words = self.n, self.words
        t.x, t.z, t.r = self.x.copy(), self.z.copy(), self.r.copy()
        return t

    def _col(self, part: np.ndarray, q: int) -> np.ndarray:
        w, b = q >> 6, np.uint64(q & 63)
        return ((part[:, w] >> b) & _ONE).astype(np.uint8)

    def _flip_col(self, part: np.ndarray, q: int, rows_mask: np.ndarray) -> None:
        w, m = self._loc(q)
        part[rows_mask.astype(bool), w] ^= m

    # Clifford gates: conjugate every generator.
    def h(self, q: int) -> None:
        xq, zq = self._col(self.x, q), self._col(self.z, q)
        self.r ^= xq & zq
        diff = (xq ^ zq).astype(bool)
        self._flip_col(self.x, q, diff)
        self._flip_col(self.z, q, diff)

    def s(self, q: int) -> None:
        xq, zq = self._col(self.x, q), self._col(self.z, q)
        self.r ^= xq & zq
        self._flip_col(self.z, q, xq)

    def sdg(self, q: int) -> None:
        xq, zq = self._col(self.x, q), self._col(self.z, q)
        self.r ^= xq & (zq ^ 1)
        self._flip_col(self.z, q, xq)

    def x_gate(self, q: int) -> None:
        self.r ^= self._col(self.z, q)

    def z_gate(self, q: int) -> None:
        self.r ^= self._col(self.x, q)

    def cx(self, c: int, t: int) -> None:
        xc, zc = self._col(self.x, c), self._col(self.z, c)
        xt, zt = self._col(self.x, t), self._col(self.z, t)
        self.r ^= xc & zt & (xt ^ zc ^ 1)
        self._flip_col(self.x, t, xc)
        self._flip_col(self.z, c, zt)

    def apply(self, g: Gate) -> None:
        op = _GATE_OPS.get(g.kind)
        if op is None:
            raise NonCliffordError(f"gate {g.kind} is not a Clifford gate of this backend")
        op(self, *g.qubits)

    @staticmethod
    def _phase_sum(x1, z1, x2, z2) -> np.ndarray:
        """Sum of per-qubit i-exponents when multiplying row(x1,z1) into rows (x2,z2)."""
        y1 = x1 & z1
        xo = x1 & ~z1
        zo = ~x1 & z1
        pos = (y1 & z2 & ~x2) | (xo & z2 & x2) | (zo & x2 & ~z2)
        neg = (y1 & x2 & ~z2) | (xo & z2 & ~x2) | (zo & x2 & z2)
        return (np.bitwise_count(pos).astype(np.int64).sum(axis=-1)
                - np.bitwise_count(neg).astype(np.int64).sum(axis=-1))

    def _rowsum_many(self, rows: np.ndarray, i: int) -> None:
        """Replace each generator ``h`` in ``rows`` by ``g_i * g_h``."""
        x1, z1 = self.x[i], self.z[i]
        x2, z2 = self.x[rows], self.z[rows]
        tot = 2 * self.r[rows].astype(np.int64) + 2 * int(self.r[i]) + self._phase_sum(x1, z1, x2, z2)
        self.r[rows] = ((tot % 4) >> 1).astype(np.uint8)
        self.x[rows] = x2 ^ x1
        self.z[rows] = z2 ^ z1

    def _accumulate(self, rows: Sequence[int]) -> tuple[np.ndarray, np.ndarray, int]:
        """Product of the given generators (in order) as (x, z, phase bit)."""
        sx = np.zeros(self.words, dtype=np.uint64)
        sz = np.zeros(self.words, dtype=np.uint64)
        sr = 0
        for i in rows:
            tot = 2 * sr + 2 * int(self.r[i]) + int(self._phase_sum(self.x[i], self.z[i], sx, sz))
            sr = (tot % 4) >> 1
            sx ^= self.x[i]
            sz ^= self.z[i]
        return sx, sz, sr

    def measure_z(self, q: int, coin: Callable[[], int] | int) -> tuple[int, bool]:
        """Measure qubit ``q``; returns ``(bit, was_random)``.

        ``coin`` supplies the outcome when it is random: an int forces it,
        a callable is invoked once.
        """
        n = self.n
        xcol = self._col(self.x, q)
        stab_hits = np.flatnonzero(xcol[n:])
        if stab_hits.size:
            p = n + int(stab_hits[0])
            others = np.flatnonzero(xcol)
            others = others[others != p]
            if others.size:
                self._rowsum_many(others, p)
            self.x[p - n], self.z[p - n], self.r[p - n] = self.x[p], self.z[p], self.r[p]
            bit = int(coin) if isinstance(coin, (int, np.integer)) else int(coin())
            self.x[p] = 0
            self.z[p] = 0
            w, m = self._loc(q)
            self.z[p, w] = m
            self.r[p] = bit
            return bit, True
        _, _, sr = self._accumulate([n + int(i) for i in np.flatnonzero(xcol[:n])])
        return int(sr), False

    def _pauli_bits(self, p: PauliString) -> tuple[np.ndarray, np.ndarray]:
        px = np.zeros(self.words, dtype=np.uint64)
        pz = np.zeros(self.words, dtype=np.uint64)
        for q, a in p.letters:
            w, m = self._loc(q)
            if a in (PauliAxis.X, PauliAxis.Y):
                px[w] |= m
            if a in (PauliAxis.Z, PauliAxis.Y):
                pz[w] |= m
        return px, pz

    def _anticommutes(self, rows: slice, px, pz) -> np.ndarray:
        sym = (self.x[rows] & pz) ^ (self.z[rows] & px)
        return (np.bitwise_count(sym).astype(np.int64).sum(axis=1) & 1).astype(bool)

    def expectation(self, p: PauliString) -> float:
        if p.n_qubits != self.n:
            raise ValueError("Pauli string size does not match the tableau")
        px, pz = self._pauli_bits(p)
        n = self.n
        if self._anticommutes(slice(n, 2 * n), px, pz).any():
            return 0.0
        rows = [n + int(i) for i in np.flatnonzero(self._anticommutes(slice(0, n), px, pz))]
        sx, sz, sr = self._accumulate(rows)
        if not (np.array_equal(sx, px) and np.array_equal(sz, pz)):
            raise AssertionError("tableau lost its symplectic structure")
        return -1.0 if sr else 1.0

    def stabilizers(self) -> list[str]:
        """Human-readable stabilizer generators, e.g. ``['+Z', '-X']``."""
        out = []
        for i in range(self.n, 2 * self.n):
            xs, zs = self._row_bits(i)
            word = "".join("IXZY"[a + 2 * b] for a, b in zip(xs, zs))
            out.append(("-" if self.r[i] else "+") + word)
        return out

    def _row_bits(self, i: int) -> tuple[list[int], list[int]]:
        xs = [int((self.x[i, q >> 6] >> np.uint64(q & 63)) & _ONE) for q in range(self.n)]
        zs = [int((self.z[i, q >> 6] >> np.uint64(q & 63)) & _ONE) for q in range(self.n)]
        return xs, zs

    def check_symplectic(self) -> bool:
        """Generators satisfy the destabilizer/stabilizer commutation pattern."""
        n = self.n
        xs = np.array([self._row_bits(i)[0] for i in range(2 * n)], dtype=np.int64)
        zs = np.array([self._row_bits(i)[1] for i in range(2 * n)], dtype=np.int64)
        sym = (xs @ zs.T + zs @ xs.T) % 2
        expect = np.zeros((2 * n, 2 * n), dtype=np.int64)
        expect[np.arange(n), np.arange(n) + n] = 1
        expect[np.arange(n) + n, np.arange(n)] = 1
        return bool(np.array_equal(sym, expect))


_GATE_OPS = {
    "H": Tableau.h,
    "S": Tableau.s,
    "Sdg": Tableau.sdg,
    "X": Tableau.x_gate,
    "Z": Tableau.z_gate,
    "CX": Tableau.cx,
}


def new_tableau(n: int) -> Tableau:
    return Tableau(n)


def apply_clifford(t: Tableau, gate: Gate) -> None:
    if not 0 <= min(gate.qubits, default=0) or max(gate.qubits, default=0) >= t.n:
        raise ValueError(f"gate {gate.kind}{list(gate.qubits)} outside {t.n} qubits")
    t.apply(gate)


def measure(t: Tableau, q: int, rng) -> int:
    """Z-measure qubit ``q``; ``rng`` is a numpy Generator, a 0-arg callable or a forced bit."""
    if not 0 <= q < t.n:
        raise ValueError(f"qubit {q} out of range")
    if isinstance(rng, np.random.Generator):
        gen = rng
        coin = lambda: int(gen.integers(2))  # noqa: E731
    else:
        coin = rng
    return t.measure_z(q, coin)[0]


def pauli_expectation(t: Tableau, p: PauliString) -> float:
    return t.expectation(p)


# ---------------------------------------------------------------------------
# Dynamic Clifford circuits on the tableau (same draw layout as the statevector
# backend: Measure/Reset number k uses draw 2k for the outcome, 2k+1 for the
# readout flip; a random outcome is 1 iff the draw is below 0.5).


def _require_clifford(c: DynamicCircuit) -> None:
    if not c.is_clifford:
        raise NonCliffordError("circuit contains non-Clifford gates; use the statevector backend")


def _run_decisions(base: Tableau, c: DynamicCircuit, coins: np.ndarray, flips: np.ndarray,
                   flip_bits: dict[int, float]) -> np.ndarray:
    t = base.copy()
    bits = np.zeros(c.n_clbits, dtype=np.uint8)
    k = 0
    for ins in c.instructions:
        if isinstance(ins, Gate):
            t.apply(ins)
        elif isinstance(ins, Measure):
            b, _ = t.measure_z(ins.qubit, int(coins[k]))
            if ins.clbit in flip_bits and flips[k]:
                b ^= 1
            bits[ins.clbit] = b
            k += 1
        elif isinstance(ins, Reset):
            b, _ = t.measure_z(ins.qubit, int(coins[k]))
            if b:
                t.x_gate(ins.qubit)
            k += 1
        elif all(bits[cb] == v for cb, v in zip(ins.clbits, ins.values)):
            for g in ins.body:
                t.apply(g)
    return bits


def run_clifford_circuit(c: DynamicCircuit, shots: int, seed: int,
                         readout_error: ReadoutErrorModel | None = None) -> np.ndarray:
    """Execute a Clifford dynamic circuit; returns ``(shots, n_clbits)`` uint8 records.

    Uses the statevector draw layout (draw ``2k`` decides the ``k``-th
    Measure/Reset, random outcome 1 iff it is below 0.5; draw ``2k + 1``
    decides the readout flip). A shot's record is a function of these
    decisions alone, so each distinct decision vector is simulated once.
    """
    diags = validate_circuit(c)
    if diags:
        raise ValueError("invalid circuit: " + "; ".join(diags))
    _require_clifford(c)
    if shots < 1:
        raise ValueError("shots must be >= 1")
    from .statevector import _flip_rates, _n_random_ops

    flip_bits = _flip_rates(c, readout_error)
    m = _n_random_ops(c)
    base = Tableau(c.n_qubits)
    if m == 0:
        return np.tile(_run_decisions(base, c, (), (), flip_bits), (shots, 1))
    keys = _rng.shot_keys(seed, np.arange(shots, dtype=np.uint64))
    u = _rng.uniforms(keys, 0, 2 * m)
    coins = (u[:, 0::2] < 0.5).astype(np.uint8)
    rates = np.zeros(m)
    k = 0
    for ins in c.instructions:
        if isinstance(ins, (Measure, Reset)):
            if isinstance(ins, Measure):
                rates[k] = flip_bits.get(ins.clbit, 0.0)
            k += 1
    flips = (u[:, 1::2] < rates[None, :]).astype(np.uint8)
    decisions = np.concatenate([coins, flips], axis=1)
    uniq, inverse = np.unique(decisions, axis=0, return_inverse=True)
    table = np.stack([_run_decisions(base, c, row[:m], row[m:], flip_bits) for row in uniq])
    return table[inverse.reshape(-1)]


# ---------------------------------------------------------------------------
# Hybrid shadow sampling.


@dataclass(frozen=True)
class HybridShadowConfig:
    """Per-shot layout of the random sub-stream: draws ``[0, n)`` pick bases,
    ``[n, 2n)`` decide random measurement outcomes (qubit order), ``[2n, 3n)``
    decide readout flips."""

    n_s: int
    prep: tuple[Gate, ...] = ()
    probs: BasisProbabilities | tuple[BasisProbabilities, ...] | None = None
    shots: int = 1
    seed: int = 0
    readout_error: ReadoutErrorModel | None = None

    def __post_init__(self):
        object.__setattr__(self, "prep", tuple(self.prep))
        if self.n_s < 1:
            raise ValueError("n_s must be >= 1")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        for g in self.prep:
            if not g.is_clifford:
                raise NonCliffordError(f"prep gate {g.kind} is not Clifford")
            if max(g.qubits) >= self.n_s:
                raise ValueError(f"prep gate {g.kind}{list(g.qubits)} outside {self.n_s} qubits")
        if self.readout_error is not None and len(self.readout_error.rates) < self.n_s:
            raise ValueError("readout error model has fewer rates than qubits")


def x_layer_bits(prep: Sequence[Gate], n: int) -> np.ndarray | None:
    """Computational basis state prepared by a pure X layer, else None."""
    bits = np.zeros(n, dtype=np.uint8)
    for g in prep:
        if g.kind != "X":
            return None
        bits[g.qubits[0]] ^= 1
    return bits


def draw_bases(u: np.ndarray, probs: Sequence[BasisProbabilities]) -> np.ndarray:
    """Axis codes (1=X, 2=Y, 3=Z) from uniforms of shape (B, n)."""
    px = np.array([p.px for p in probs])
    pxy = np.array([p.px + p.py for p in probs])
    return (1 + (u >= px) + (u >= pxy)).astype(np.uint8)


def _measure_basis(t0: Tableau, basis: Sequence[int], coins: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    t = t0.copy()
    for q, a in enumerate(basis):
        for g in basis_change(PauliAxis(int(a)), q):
            t.apply(g)
    n = t0.n
    out = np.zeros(n, dtype=np.uint8)
    random = np.zeros(n, dtype=bool)
    for q in range(n):
        out[q], random[q] = t.measure_z(q, int(coins[q]))
    return out, random


def affine_outcome_map(t0: Tableau, basis: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Outcomes for a fixed basis as ``c XOR (A @ r) mod 2``.

    ``r`` holds the random coin of every qubit (only random qubits' coins
    matter). Deterministic outcomes are affine in earlier random ones, so
    probing with unit coin vectors recovers ``A`` exactly.
    """
    n = t0.n
    zeros = np.zeros(n, dtype=np.uint8)
    c, random = _measure_basis(t0, basis, zeros)
    a = np.zeros((n, n), dtype=np.uint8)
    for j in np.flatnonzero(random):
        e = zeros.copy()
        e[j] = 1
        o, _ = _measure_basis(t0, basis, e)
        a[:, j] = o ^ c
    return c, a


def _batch_size(n: int) -> int:
    return max(256, min(1 << 16, (1 << 21) // (3 * n)))


def hybrid_shadow_batches(
    cfg: HybridShadowConfig, batch_size: int | None = None, mode: str = "auto"
) -> Iterator[SnapshotBatch]:
    """Snapshot batches from classical basis draws plus tableau measurement.

    ``mode``: ``"fast"`` (X-layer prep only), ``"grouped"`` (affine map per
    distinct basis), ``"pershot"`` (one tableau run per shot) or ``"auto"``.
    All modes consume the same draws and give identical snapshots.
    """
    n = cfg.n_s
    probs = per_qubit_probs(cfg.probs, n)
    hf_bits = x_layer_bits(cfg.prep, n)
    if mode == "auto":
        mode = "fast" if hf_bits is not None else ("grouped" if n <= 8 else "pershot")
    if mode == "fast" and hf_bits is None:
        raise ValueError("fast path needs a prep made of X gates only")
    if mode not in ("fast", "grouped", "pershot"):
        raise ValueError(f"unknown mode {mode!r}")
    rates = None
    if cfg.readout_error is not None:
        rates = np.array(cfg.readout_error.rates[:n])
    t0 = None
    if mode != "fast":
        t0 = Tableau(n)
        for g in cfg.prep:
            t0.apply(g)
    cache: dict[bytes, tuple[np.ndarray, np.ndarray]] = {}
    batch_size = batch_size or _batch_size(n)
    for start in range(0, cfg.shots, batch_size):
        stop = min(cfg.shots, start + batch_size)
        keys = _rng.shot_keys(cfg.seed, np.arange(start, stop, dtype=np.uint64))
        u = _rng.uniforms(keys, 0, 3 * n if rates is not None else 2 * n)
        bases = draw_bases(u[:, :n], probs)
        coins = (u[:, n:2 * n] < 0.5).astype(np.uint8)
        if mode == "fast":
            outcomes = np.where(bases == 3, hf_bits[None, :], coins).astype(np.uint8)
        elif mode == "grouped":
            outcomes = np.empty_like(coins)
            uniq, inverse = np.unique(bases, axis=0, return_inverse=True)
            inverse = inverse.reshape(-1)
            for gi, row in enumerate(uniq):
                key = row.tobytes()
                if key not in cache:
                    cache[key] = affine_outcome_map(t0, row)
                c, a = cache[key]
                sel = inverse == gi
                outcomes[sel] = (c[None, :] ^ ((coins[sel].astype(np.int64) @ a.T.astype(np.int64)) & 1)).astype(np.uint8)
        else:
            outcomes = np.empty_like(coins)
            for i in range(stop - start):
                outcomes[i], _ = _measure_basis(t0, bases[i], coins[i])
        if rates is not None:
            outcomes ^= (u[:, 2 * n:] < rates[None, :]).astype(np.uint8)
        yield SnapshotBatch(bases, outcomes, start)


def run_hybrid_shadow(cfg: HybridShadowConfig, **kw) -> Iterator[Snapshot]:
    return iter_snapshots(hybrid_shadow_batches(cfg, **kw))
