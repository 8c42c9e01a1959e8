"""Placement of reference, queries and score vectors onto compute columns."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .crossbar import ColumnLayout, CrossbarArray, column_mask


@dataclass(frozen=True)
class MappingPlan:
    """How a reference of length ``ref_len`` occupies ``total_columns`` columns.

    With at least as many columns as reference samples the reference is
    replicated ``replication`` times and queries are dealt round-robin to the
    replicas. Otherwise the reference is cut into ``batches`` column-sized chunks
    processed one after another.
    """

    total_columns: int
    ref_len: int
    replication: int
    batches: int
    assignment: tuple[tuple[int, ...], ...]

    @property
    def batched(self) -> bool:
        return self.batches > 1

    def replica_columns(self, r: int) -> range:
        if not 0 <= r < self.replication:
            raise IndexError(f"replica {r} out of range")
        return range(r * self.ref_len, (r + 1) * self.ref_len)

    def batch_span(self, b: int) -> range:
        """Reference indices held by batch ``b``."""
        if not 0 <= b < self.batches:
            raise IndexError(f"batch {b} out of range")
        width = self.batch_width
        return range(b * width, min(self.ref_len, (b + 1) * width))

    @property
    def batch_width(self) -> int:
        return self.ref_len if self.batches == 1 else self.total_columns

    @property
    def used_columns(self) -> int:
        return self.replication * self.ref_len if self.batches == 1 else self.total_columns

    def replica_of(self, query: int) -> int:
        return query % self.replication

    def summary(self) -> dict:
        return {
            "columns": self.total_columns,
            "ref_len": self.ref_len,
            "replication": self.replication,
            "batches": self.batches,
            "queries_per_replica": [len(a) for a in self.assignment],
        }


def plan(total_columns: int, ref_len: int, num_queries: int) -> MappingPlan:
    if total_columns < 1 or ref_len < 1:
        raise ValueError("column count and reference length must be positive")
    if num_queries < 0:
        raise ValueError("negative query count")
    if total_columns >= ref_len:
        rho, batches = total_columns // ref_len, 1
    else:
        rho, batches = 1, -(-ref_len // total_columns)
    assignment = tuple(tuple(range(r, num_queries, rho)) for r in range(rho))
    return MappingPlan(total_columns, ref_len, rho, batches, assignment)


def load_reference(mp: MappingPlan, ref, array: CrossbarArray, layout: ColumnLayout, batch: int = 0) -> None:
    """Write the reference words of ``batch`` into the R slice of every replica."""
    values = np.asarray(ref.samples if hasattr(ref, "samples") else ref, dtype=np.int64)
    if values.size != mp.ref_len:
        raise ValueError("reference length does not match the plan")
    lo, hi = -(1 << (layout.width - 1)), (1 << (layout.width - 1)) - 1
    if values.min() < lo or values.max() > hi:
        raise OverflowError(f"reference samples do not fit the {layout.width}-bit R slice")
    words = np.zeros(array.columns, dtype=np.int64)
    if mp.batches == 1:
        for r in range(mp.replication):
            words[r * mp.ref_len:(r + 1) * mp.ref_len] = values
        mask = column_mask(range(mp.used_columns))
    else:
        span = mp.batch_span(batch)
        words[:len(span)] = values[span.start:span.stop]
        mask = column_mask(range(len(span)))
    array.write_words(layout.R, words, mask)


@dataclass
class BatchBoundary:
    """Scores that left the last column of a batch, one per streamed query element.

    Entry ``g`` is S[i, last] for the g-th element (query q, row i) of the stream.
    The next batch needs it as the left neighbour of element g and, one element
    later, as the diagonal neighbour.
    """

    rows: list[int] = field(default_factory=list)    # query row index i of element g
    s_cur: list[int] = field(default_factory=list)

    def record(self, g: int, row: int, value: int) -> None:
        if g != len(self.s_cur):
            raise ValueError(f"boundary element {g} recorded out of order")
        self.rows.append(row)
        self.s_cur.append(int(value))

    def __len__(self) -> int:
        return len(self.s_cur)

    def left(self, g: int) -> int:
        return self.s_cur[g]

    def s_up(self, g: int) -> int:
        """S[i-1, last] for element g; zero at a query's first row (never consumed)."""
        return self.s_cur[g - 1] if self.rows[g] > 0 else 0


def carry_boundary(mp: MappingPlan, batch: int, state: BatchBoundary | None,
                   expected_elements: int) -> BatchBoundary | None:
    """Hand the boundary of ``batch`` to ``batch + 1``; a no-op when nothing is batched."""
    if mp.batches == 1 or expected_elements == 0:
        return None
    if not 0 <= batch < mp.batches - 1:
        raise ValueError(f"batch {batch} has no successor")
    if state is None or len(state) != expected_elements:
        raise ValueError("missing boundary state for the next batch")
    return state
