"""Sparse Pauli strings, real-coefficient Hamiltonians and exact oracles.

Qubit ordering is fixed package-wide: the leftmost character of a Pauli word
(and of a bitstring) refers to qubit 0.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np


class PauliError(ValueError):
    """Malformed Pauli word, bitstring or Hamiltonian input."""


class PauliAxis(enum.IntEnum):
    I = 0
    X = 1
    Y = 2
    Z = 3

    @classmethod
    def parse(cls, ch: str) -> "PauliAxis":
        try:
            return cls[ch.upper()]
        except KeyError:
            raise PauliError(f"invalid Pauli letter {ch!r}") from None


def _coerce_axis(a) -> PauliAxis:
    if isinstance(a, str):
        return PauliAxis.parse(a)
    return PauliAxis(int(a))


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis, stored sparsely.

    ``letters`` holds ``(qubit, axis)`` pairs sorted by qubit; identity letters
    are never stored, so ``support()`` is just the stored index set.
    """

    n_qubits: int
    letters: tuple[tuple[int, PauliAxis], ...] = ()

    def __post_init__(self):
        if self.n_qubits < 0:
            raise PauliError("n_qubits must be non-negative")
        items = self.letters.items() if isinstance(self.letters, Mapping) else self.letters
        seen = {}
        for q, a in items:
            q = int(q)
            if not 0 <= q < self.n_qubits:
                raise PauliError(f"qubit index {q} out of range for {self.n_qubits} qubits")
            if q in seen:
                raise PauliError(f"qubit {q} given twice")
            seen[q] = _coerce_axis(a)
        norm = tuple(sorted((q, a) for q, a in seen.items() if a != PauliAxis.I))
        object.__setattr__(self, "letters", norm)

    @classmethod
    def identity(cls, n_qubits: int) -> "PauliString":
        return cls(n_qubits)

    def support(self) -> tuple[int, ...]:
        return tuple(q for q, _ in self.letters)

    def is_identity(self) -> bool:
        return not self.letters

    def __getitem__(self, q: int) -> PauliAxis:
        if not 0 <= q < self.n_qubits:
            raise IndexError(q)
        for k, a in self.letters:
            if k == q:
                return a
        return PauliAxis.I

    def axes(self) -> tuple[PauliAxis, ...]:
        dense = [PauliAxis.I] * self.n_qubits
        for q, a in self.letters:
            dense[q] = a
        return tuple(dense)

    def __str__(self) -> str:
        return format_pauli(self)


def parse_pauli(text: str, n_qubits: int | None = None) -> PauliString:
    text = text.strip()
    if n_qubits is not None and len(text) != n_qubits:
        raise PauliError(f"word {text!r} has length {len(text)}, expected {n_qubits}")
    return PauliString(len(text), tuple((i, PauliAxis.parse(ch)) for i, ch in enumerate(text)))


def format_pauli(p: PauliString) -> str:
    return "".join(a.name for a in p.axes())


BasisVector = tuple[PauliAxis, ...]


def parse_basis(text: str) -> BasisVector:
    """Measurement basis word over {X, Y, Z}, qubit 0 leftmost."""
    axes = tuple(PauliAxis.parse(ch) for ch in text.strip())
    if any(a == PauliAxis.I for a in axes):
        raise PauliError(f"basis word {text!r} contains an identity letter")
    return axes


def format_basis(basis: Sequence[PauliAxis]) -> str:
    return "".join(PauliAxis(a).name for a in basis)


def _bits_tuple(bits, n: int) -> tuple[int, ...]:
    if isinstance(bits, str):
        if any(ch not in "01" for ch in bits):
            raise PauliError(f"bitstring {bits!r} must contain only 0/1")
        out = tuple(int(ch) for ch in bits)
    else:
        out = tuple(int(b) for b in bits)
        if any(b not in (0, 1) for b in out):
            raise PauliError("bits must be 0 or 1")
    if len(out) != n:
        raise PauliError(f"bitstring length {len(out)} does not match {n} qubits")
    return out


def expect_on_basis_state(p: PauliString, bits) -> float:
    """<bits|p|bits> for a computational-basis product state."""
    b = _bits_tuple(bits, p.n_qubits)
    sign = 1
    for q, a in p.letters:
        if a != PauliAxis.Z:
            return 0.0
        if b[q]:
            sign = -sign
    return float(sign)


@dataclass(frozen=True)
class Hamiltonian:
    """Real linear combination of Pauli strings over a common register."""

    n_qubits: int
    terms: tuple[tuple[float, PauliString], ...]

    def __post_init__(self):
        merged: dict[tuple, list] = {}
        for coeff, p in self.terms:
            if isinstance(coeff, complex):
                raise PauliError(f"coefficient {coeff!r} must be real")
            c = float(coeff)
            if not math.isfinite(c):
                raise PauliError(f"coefficient {coeff!r} must be a finite real")
            if p.n_qubits != self.n_qubits:
                raise PauliError(
                    f"term {format_pauli(p)} acts on {p.n_qubits} qubits, expected {self.n_qubits}"
                )
            if p.letters in merged:
                merged[p.letters][0] += c
            else:
                merged[p.letters] = [c, p]
        object.__setattr__(self, "terms", tuple((c, p) for c, p in merged.values()))

    def __len__(self) -> int:
        return len(self.terms)

    def identity_offset(self) -> float:
        return sum(c for c, p in self.terms if p.is_identity())


def exact_energy_on_basis_state(h: Hamiltonian, bits) -> float:
    b = _bits_tuple(bits, h.n_qubits)
    return math.fsum(c * expect_on_basis_state(p, b) for c, p in h.terms)


def parse_hamiltonian(stream: str | TextIO | Iterable[str]) -> Hamiltonian:
    """Read ``<coefficient> <pauli word>`` lines; ``#`` starts a comment."""
    if isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = stream
    terms = []
    n = None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2:
            raise PauliError(f"line {lineno}: expected '<coefficient> <pauli word>'")
        try:
            coeff = float(fields[0])
        except ValueError:
            raise PauliError(f"line {lineno}: malformed coefficient {fields[0]!r}") from None
        if not math.isfinite(coeff):
            raise PauliError(f"line {lineno}: coefficient must be finite")
        word = fields[1]
        if n is None:
            n = len(word)
        elif len(word) != n:
            raise PauliError(f"line {lineno}: word length {len(word)} inconsistent with {n}")
        try:
            terms.append((coeff, parse_pauli(word, n)))
        except PauliError as exc:
            raise PauliError(f"line {lineno}: {exc}") from None
    if n is None:
        raise PauliError("empty Hamiltonian input")
    return Hamiltonian(n, tuple(terms))


def format_hamiltonian(h: Hamiltonian) -> str:
    return "".join(f"{c!r} {format_pauli(p)}\n" for c, p in h.terms)


def random_hamiltonian(
    n_qubits: int,
    n_terms: int,
    max_support: int,
    rng: np.random.Generator,
    coeff_range: tuple[float, float] = (-1.0, 1.0),
) -> Hamiltonian:
    """Random Hamiltonian with distinct non-identity terms of bounded support."""
    max_support = min(max_support, n_qubits)
    available = sum(math.comb(n_qubits, k) * 3 ** k for k in range(1, max_support + 1))
    if n_terms > available:
        raise PauliError(f"only {available} distinct terms with support <= {max_support}")
    seen = set()
    terms = []
    attempts = 0
    while len(terms) < n_terms:
        attempts += 1
        if attempts > 100 * n_terms:
            raise PauliError("could not draw enough distinct terms")
        k = int(rng.integers(1, max_support + 1))
        qubits = rng.choice(n_qubits, size=k, replace=False)
        axes = rng.integers(1, 4, size=k)
        p = PauliString(n_qubits, tuple(zip(qubits.tolist(), axes.tolist())))
        if p.letters in seen:
            continue
        seen.add(p.letters)
        terms.append((float(rng.uniform(*coeff_range)), p))
    return Hamiltonian(n_qubits, tuple(terms))
