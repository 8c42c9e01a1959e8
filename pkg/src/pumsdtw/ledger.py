"""Event counters shared by the crossbar simulator and the cost model."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, fields

GATED_KINDS = ("abs", "min3", "square")


@dataclass
class CostLedger:
    """Accumulated activity of one device (or one independent part of it).

    Phases are row-activation half-cycles on the critical path; every column
    shares them, so they set execution time. Bits count individual cells
    sensed or written and set energy. Writes that a per-column predicate may
    suppress are also tracked per kind: ``gated_capacity`` is how many cell
    writes could have happened, ``gated_writes`` how many did.
    """

    read_bits: int = 0
    write_bits: int = 0
    read_phases: int = 0
    write_phases: int = 0
    gated_capacity: Counter = field(default_factory=Counter)
    gated_writes: Counter = field(default_factory=Counter)
    cells: int = 0
    max_cell_writes: float = 0
    iterations: int = 0

    def read(self, bits: int, phases: int = 1) -> None:
        self.read_bits += bits
        self.read_phases += phases

    def write(self, bits: int, phases: int = 1) -> None:
        self.write_bits += bits
        self.write_phases += phases

    def gated(self, kind: str, capacity: int, written: int) -> None:
        self.gated_capacity[kind] += capacity
        self.gated_writes[kind] += written

    @property
    def mean_writes_per_cell(self) -> float:
        return self.write_bits / self.cells if self.cells else 0.0

    def gated_fractions(self) -> dict[str, float]:
        return {k: (self.gated_writes[k] / c if c else 0.0) for k, c in self.gated_capacity.items()}

    def counts(self) -> tuple[int, int, int, int]:
        return self.read_bits, self.write_bits, self.read_phases, self.write_phases

    def copy(self) -> "CostLedger":
        out = CostLedger(**{f.name: getattr(self, f.name) for f in fields(self)})
        out.gated_capacity = Counter(self.gated_capacity)
        out.gated_writes = Counter(self.gated_writes)
        return out

    def delta(self, before: "CostLedger") -> dict[str, int]:
        return {
            "read_bits": self.read_bits - before.read_bits,
            "write_bits": self.write_bits - before.write_bits,
            "read_phases": self.read_phases - before.read_phases,
            "write_phases": self.write_phases - before.write_phases,
        }

    def then(self, other: "CostLedger") -> "CostLedger":
        """Activity of ``self`` followed by ``other`` on the same cells."""
        out = self.copy()
        out.read_bits += other.read_bits
        out.write_bits += other.write_bits
        out.read_phases += other.read_phases
        out.write_phases += other.write_phases
        out.gated_capacity.update(other.gated_capacity)
        out.gated_writes.update(other.gated_writes)
        out.cells = max(self.cells, other.cells)
        out.max_cell_writes = self.max_cell_writes + other.max_cell_writes  # upper bound
        out.iterations += other.iterations
        return out

    __add__ = then

    def alongside(self, other: "CostLedger") -> "CostLedger":
        """Activity of ``self`` and ``other`` running concurrently on disjoint subarrays.

        Bit counts add up; phases overlap, so the critical path is the longer one.
        Associative and commutative.
        """
        out = self.copy()
        out.read_bits += other.read_bits
        out.write_bits += other.write_bits
        out.read_phases = max(self.read_phases, other.read_phases)
        out.write_phases = max(self.write_phases, other.write_phases)
        out.gated_capacity.update(other.gated_capacity)
        out.gated_writes.update(other.gated_writes)
        out.cells = self.cells + other.cells
        out.max_cell_writes = max(self.max_cell_writes, other.max_cell_writes)
        out.iterations = max(self.iterations, other.iterations)
        return out

    def summary(self) -> dict:
        return {
            "read_bits": self.read_bits,
            "write_bits": self.write_bits,
            "read_phases": self.read_phases,
            "write_phases": self.write_phases,
            "iterations": self.iterations,
            "cells": self.cells,
            "mean_writes_per_cell": self.mean_writes_per_cell,
            "max_writes_per_cell": self.max_cell_writes,
            "gated_fractions": self.gated_fractions(),
        }
