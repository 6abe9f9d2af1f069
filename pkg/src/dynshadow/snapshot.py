"""Snapshot containers and the snapshot CSV format.

A snapshot is the pair (measurement basis, measured bits) from one shot of a
randomized Pauli measurement. Batches keep the same data as two uint8 arrays:
``bases`` holds axis codes (X=1, Y=2, Z=3) and ``outcomes`` holds bits ``b``
with sign ``mu = (-1)**b``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, TextIO

import numpy as np

from .pauli import PauliAxis, format_basis

_CODE_OF = {"X": 1, "Y": 2, "Z": 3}


@dataclass(frozen=True)
class Snapshot:
    basis: tuple[PauliAxis, ...]
    mu: tuple[int, ...]

    def __post_init__(self):
        basis = tuple(PauliAxis(a) for a in self.basis)
        mu = tuple(int(m) for m in self.mu)
        if len(basis) != len(mu):
            raise ValueError("basis and outcome lengths differ")
        if any(a == PauliAxis.I for a in basis):
            raise ValueError("identity is not a measurement basis")
        if any(m not in (1, -1) for m in mu):
            raise ValueError("outcome signs must be +1 or -1")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "mu", mu)

    @property
    def n_qubits(self) -> int:
        return len(self.basis)

    @classmethod
    def from_bits(cls, basis, bits) -> "Snapshot":
        return cls(tuple(basis), tuple(1 - 2 * int(b) for b in bits))


@dataclass
class SnapshotBatch:
    bases: np.ndarray
    outcomes: np.ndarray
    first_shot: int = 0

    def __post_init__(self):
        self.bases = np.asarray(self.bases, dtype=np.uint8)
        self.outcomes = np.asarray(self.outcomes, dtype=np.uint8)
        if self.bases.ndim != 2 or self.bases.shape != self.outcomes.shape:
            raise ValueError("bases and outcomes must be matching 2-D arrays")

    def __len__(self) -> int:
        return self.bases.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.bases.shape[1]

    def __getitem__(self, sl: slice) -> "SnapshotBatch":
        start = sl.start or 0
        return SnapshotBatch(self.bases[sl], self.outcomes[sl], self.first_shot + start)

    def snapshots(self) -> Iterator[Snapshot]:
        for b, o in zip(self.bases.tolist(), self.outcomes.tolist()):
            yield Snapshot.from_bits(b, o)

    @classmethod
    def from_snapshots(cls, snaps: Iterable[Snapshot], first_shot: int = 0) -> "SnapshotBatch":
        snaps = list(snaps)
        if not snaps:
            raise ValueError("no snapshots")
        bases = np.array([[int(a) for a in s.basis] for s in snaps], dtype=np.uint8)
        outcomes = (1 - np.array([s.mu for s in snaps], dtype=np.int8)) // 2
        return cls(bases, outcomes.astype(np.uint8), first_shot)


def iter_snapshots(batches: Iterable[SnapshotBatch]) -> Iterator[Snapshot]:
    for b in batches:
        yield from b.snapshots()


def write_snapshots_csv(batches: Iterable[SnapshotBatch], out: TextIO) -> int:
    out.write("shot,basis,outcomes\n")
    letters = np.array(list("IXYZ"))
    rows = 0
    for b in batches:
        words = ["".join(r) for r in letters[b.bases].tolist()]
        bits = ["".join(r) for r in np.where(b.outcomes == 1, "1", "0").tolist()]
        for i, (w, o) in enumerate(zip(words, bits)):
            out.write(f"{b.first_shot + i},{w},{o}\n")
        rows += len(b)
    return rows


def read_snapshots_csv(stream: TextIO, batch_size: int = 1 << 16) -> Iterator[SnapshotBatch]:
    """Stream a snapshot CSV back as batches."""
    header = stream.readline().strip()
    if header != "shot,basis,outcomes":
        raise ValueError(f"unexpected snapshot CSV header {header!r}")
    bases: list[str] = []
    outs: list[str] = []
    first = None
    n = None

    def flush():
        b = np.frombuffer("".join(bases).encode("ascii"), dtype=np.uint8).reshape(len(bases), n)
        o = np.frombuffer("".join(outs).encode("ascii"), dtype=np.uint8).reshape(len(outs), n)
        codes = np.zeros_like(b)
        for ch, code in _CODE_OF.items():
            codes[b == ord(ch)] = code
        if np.any(codes == 0) or np.any((o != ord("0")) & (o != ord("1"))):
            raise ValueError("snapshot CSV has invalid basis letters or outcome bits")
        return SnapshotBatch(codes, o - ord("0"), first)

    for lineno, line in enumerate(stream, 2):
        line = line.strip()
        if not line:
            continue
        try:
            shot, word, bits = line.split(",")
        except ValueError:
            raise ValueError(f"line {lineno}: expected 3 fields") from None
        if n is None:
            n = len(word)
        if len(word) != n or len(bits) != n:
            raise ValueError(f"line {lineno}: width mismatch")
        if first is None:
            first = int(shot)
        bases.append(word)
        outs.append(bits)
        if len(bases) >= batch_size:
            yield flush()
            bases, outs, first = [], [], None
    if bases:
        yield flush()


def basis_word(batch: SnapshotBatch, i: int) -> str:
    return format_basis(batch.bases[i].tolist())
