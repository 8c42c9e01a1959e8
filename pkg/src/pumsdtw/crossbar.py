"""Bit-exact model of compute-enabled MRAM subarrays.

Each row of the array is held as one Python integer whose bit ``c`` is the cell
in column ``c``. Row-wide logic (sense, copy, the bit-serial arithmetic steps)
therefore maps onto a handful of integer bit operations, which is exactly the
column-parallel behaviour of the hardware. Every cell sense and write is
reported to a :class:`~pumsdtw.ledger.CostLedger`.

Cost conventions (one memory cycle = a read half followed by a write half):

============================  ===========  ============  =====================
operation                     read phases  write phases  notes
============================  ===========  ============  =====================
sense                         1            0             arity x cols bits read
write_row                     0            1
row_copy / diagonal_row_copy  1            1             per bit-row
bitserial_add / sub           2w           2w            sum + carry per bit
sign -> predicate             1            1             register write, no cell
predicated_copy               w            w             writes gated
bitserial_abs                 2w + 1       2w + 1        (+ w copies if out != a)
bitserial_min3                6w + 2       6w + 2        (+ w copies if out != a)
bitserial_square              w(w+2) + 1   w(w+3) + 1
============================  ===========  ============  =====================
"""
from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from .ledger import CostLedger

ROWS = 256
SUBARRAY_COLS = 256


class SenseMode(Enum):
    READ = 1
    NOR2 = 2
    MAJ3 = 3
    XOR = 4  # two-row XOR, realised as a NOR-based sense sequence within one cycle

    @property
    def arity(self) -> int:
        return {SenseMode.READ: 1, SenseMode.NOR2: 2, SenseMode.MAJ3: 3, SenseMode.XOR: 2}[self]


class Slice(NamedTuple):
    offset: int
    width: int

    @property
    def rows(self) -> range:
        return range(self.offset, self.offset + self.width)

    @property
    def msb(self) -> int:
        return self.offset + self.width - 1

    def overlaps(self, other: "Slice") -> bool:
        return self.offset < other.offset + other.width and other.offset < self.offset + self.width


@dataclass(frozen=True)
class ColumnLayout:
    """Fixed carving of a 256-cell column into word slices plus auxiliary cells."""

    width: int

    def __post_init__(self):
        if self.width < 2 or 8 * self.width > ROWS:
            raise ValueError(f"a {self.width}-bit word does not fit the {ROWS}-cell column layout")

    def _word(self, k: int) -> Slice:
        return Slice(k * self.width, self.width)

    R = property(lambda self: self._word(0))
    Q = property(lambda self: self._word(1))
    S_CUR = property(lambda self: self._word(2))
    S_DIAG = property(lambda self: self._word(3))
    S_UP = property(lambda self: self._word(4))
    S_LEFT = property(lambda self: self._word(5))
    AUX = property(lambda self: Slice(6 * self.width, ROWS - 6 * self.width))
    # the first two words of AUX hold the partial results P1 (distance) and S1 (minimum)
    AUX0 = property(lambda self: self._word(6))
    AUX1 = property(lambda self: self._word(7))

    def slices(self) -> dict[str, Slice]:
        return {"R": self.R, "Q": self.Q, "S_cur": self.S_CUR, "S_diag": self.S_DIAG,
                "S_up": self.S_UP, "S_left": self.S_LEFT, "AUX": self.AUX}


@dataclass
class SenseAmpState:
    """Per-column sense-amplifier registers, each packed one bit per column."""

    latch: int = 0      # carry / temporary
    shift_in: int = 0   # value offered to the right-hand neighbour
    predicate: int = 0  # write enable for predicated operations
    overflow: int = 0   # sticky arithmetic overflow flag

    def column(self, c: int) -> dict[str, int]:
        return {k: (getattr(self, k) >> c) & 1 for k in ("latch", "shift_in", "predicate", "overflow")}


def pack_bits(bits: Sequence[int] | np.ndarray) -> int:
    """Pack a per-column 0/1 vector into a row integer (column 0 = bit 0)."""
    arr = np.asarray(bits, dtype=np.uint8)
    return int.from_bytes(np.packbits(arr, bitorder="little").tobytes(), "little")


def unpack_bits(row: int, columns: int) -> np.ndarray:
    nbytes = (columns + 7) // 8
    raw = np.frombuffer(row.to_bytes(nbytes, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:columns]


def column_mask(columns: Sequence[int] | range) -> int:
    if isinstance(columns, range) and columns.step == 1:
        if len(columns) == 0:
            return 0
        return ((1 << len(columns)) - 1) << columns.start
    m = 0
    for c in columns:
        m |= 1 << int(c)
    return m


class CrossbarArray:
    """A row of ``ceil(columns / 256)`` lock-stepped 256x256 subarrays.

    Adjacent subarrays are joined by pass gates, so a diagonal copy moves data
    across subarray borders like any other column pair. A trailing subarray may
    be partially used; only ``columns`` columns exist in the model.
    """

    def __init__(self, columns: int = SUBARRAY_COLS, ledger: CostLedger | None = None):
        if columns < 1:
            raise ValueError("need at least one column")
        self.columns = columns
        self.full = (1 << columns) - 1
        self.rows = [0] * ROWS
        self.sa = SenseAmpState()
        self.ledger = ledger if ledger is not None else CostLedger()
        self._writes: Counter = Counter()  # (first row, row count, mask) -> times written

    # ------------------------------------------------------------ plumbing
    @property
    def num_subarrays(self) -> int:
        return -(-self.columns // SUBARRAY_COLS)

    def _mask(self, mask: int | None) -> int:
        return self.full if mask is None else mask & self.full

    def _check_row(self, row: int) -> None:
        if not 0 <= row < ROWS:
            raise IndexError(f"row {row} outside 0..{ROWS - 1}")

    def _log_write(self, first: int, count: int, mask: int, times: int = 1) -> None:
        if mask and count:
            self._writes[(first, count, mask)] += times

    def write_counts(self) -> np.ndarray:
        """Per-cell write counters, shape (256, columns)."""
        counts = np.zeros((ROWS, self.columns), dtype=np.int64)
        if not self._writes:
            return counts
        keys = list(self._writes)
        nbytes = (self.columns + 7) // 8
        raw = b"".join(mask.to_bytes(nbytes, "little") for _, _, mask in keys)
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8).reshape(len(keys), nbytes), axis=1,
                             bitorder="little")[:, :self.columns]
        times = np.array([self._writes[k] for k in keys], dtype=np.int64)
        spans: dict[tuple[int, int], list[int]] = {}
        for i, (first, count, _) in enumerate(keys):
            spans.setdefault((first, count), []).append(i)
        for (first, count), idx in spans.items():
            counts[first:first + count] += times[idx] @ bits[idx].astype(np.int64)
        return counts

    def cells(self) -> np.ndarray:
        return np.stack([unpack_bits(r, self.columns) for r in self.rows])

    def cell_hash(self) -> str:
        h = hashlib.sha256()
        for r in self.rows:
            h.update(r.to_bytes((self.columns + 7) // 8, "little"))
        return h.hexdigest()

    def dump(self, subarray: int = 0) -> str:
        """Text grid of one subarray, one line per row, column 0 leftmost."""
        lo = subarray * SUBARRAY_COLS
        if not 0 <= lo < self.columns:
            raise IndexError(f"subarray {subarray} does not exist")
        hi = min(self.columns, lo + SUBARRAY_COLS)
        grid = self.cells()[:, lo:hi]
        return "\n".join("".join("1" if b else "0" for b in row) for row in grid) + "\n"

    def finalize_ledger(self) -> CostLedger:
        """Copy per-cell write statistics into the ledger and return it."""
        counts = self.write_counts()
        self.ledger.cells = ROWS * self.columns
        self.ledger.max_cell_writes = int(counts.max()) if counts.size else 0
        return self.ledger

    # ------------------------------------------------------------ primitive operations
    def write_row(self, row: int, bits: int, mask: int | None = None) -> None:
        self._check_row(row)
        m = self._mask(mask)
        if not m:
            return
        self.rows[row] = (self.rows[row] & ~m) | (bits & m)
        self._log_write(row, 1, m)
        self.ledger.write(m.bit_count())

    def sense(self, rows: Sequence[int], mode: SenseMode = SenseMode.READ, mask: int | None = None) -> int:
        """Multi-row activation; returns the SA output per column. Cells are untouched."""
        rows = list(rows)
        if len(rows) != mode.arity:
            raise ValueError(f"{mode.name} senses {mode.arity} row(s), got {len(rows)}")
        for r in rows:
            self._check_row(r)
        m = self._mask(mask)
        v = [self.rows[r] for r in rows]
        if mode is SenseMode.READ:
            out = v[0]
        elif mode is SenseMode.NOR2:
            out = ~(v[0] | v[1])
        elif mode is SenseMode.MAJ3:
            out = (v[0] & v[1]) | (v[0] & v[2]) | (v[1] & v[2])
        else:
            out = v[0] ^ v[1]
        if m:
            self.ledger.read(len(rows) * m.bit_count())
        return out & m

    def row_copy(self, src: int, dst: int, mask: int | None = None) -> None:
        if src == dst:
            raise ValueError("row copy needs distinct source and destination")
        self._check_row(src)
        self._check_row(dst)
        m = self._mask(mask)
        if not m:
            return
        self.rows[dst] = (self.rows[dst] & ~m) | (self.rows[src] & m)
        n = m.bit_count()
        self._log_write(dst, 1, m)
        self.ledger.read(n)
        self.ledger.write(n)

    def diagonal_row_copy(self, src: int, dst: int, mask: int | None = None, *,
                          inject: int = 0, inject_mask: int = 1) -> None:
        """Each column writes the value sensed by its left neighbour.

        Columns in ``inject_mask`` (column 0 by default) have no active left
        neighbour and take their bit from ``inject`` instead.
        """
        self._check_row(src)
        self._check_row(dst)
        m = self._mask(mask)
        if not m:
            return
        sensed = self.rows[src]
        self.sa.shift_in = sensed
        shifted = ((sensed << 1) & self.full & ~inject_mask) | (inject & inject_mask)
        self.rows[dst] = (self.rows[dst] & ~m) | (shifted & m)
        n = m.bit_count()
        self._log_write(dst, 1, m)
        self.ledger.read(n)
        self.ledger.write(n)

    # ------------------------------------------------------------ word helpers
    def copy_slice(self, src: Slice, dst: Slice, mask: int | None = None) -> None:
        """Word-wide row_copy: ``width`` read/write cycles."""
        if src.overlaps(dst):
            raise ValueError("row copy needs distinct source and destination")
        for k in (src.offset, src.msb, dst.offset, dst.msb):
            self._check_row(k)
        m = self._mask(mask)
        if not m:
            return
        R, inv = self.rows, ~m
        for k in range(src.width):
            R[dst.offset + k] = (R[dst.offset + k] & inv) | (R[src.offset + k] & m)
        self._charge_copy(dst, m)

    def diagonal_copy_slice(self, src: Slice, dst: Slice, mask: int | None = None, *,
                            inject_value: int | Sequence[int] = 0, inject_mask: int = 1) -> None:
        """Word-wide diagonal copy; ``inject_value`` feeds the injected columns.

        ``inject_value`` is either one integer for every injected column or a
        sequence aligned with the set bits of ``inject_mask`` (low to high).
        Equivalent to ``width`` calls of :meth:`diagonal_row_copy`.
        """
        for k in (src.offset, src.msb, dst.offset, dst.msb):
            self._check_row(k)
        m = self._mask(mask)
        if not m:
            return
        w = src.width
        if isinstance(inject_value, (int, np.integer)):
            word = int(inject_value) & ((1 << w) - 1)
            inj = [inject_mask if (word >> k) & 1 else 0 for k in range(w)]
        else:
            cols = []
            rest = inject_mask
            while rest:
                low = rest & -rest
                cols.append(low)
                rest ^= low
            vals = list(inject_value)
            if len(vals) != len(cols):
                raise ValueError("one injected value per injected column")
            inj = [0] * w
            for bit, v in zip(cols, vals):
                v = int(v) & ((1 << w) - 1)
                for k in range(w):
                    if (v >> k) & 1:
                        inj[k] |= bit
        R, inv, keep = self.rows, ~m, self.full & ~inject_mask
        for k in range(w):
            sensed = R[src.offset + k]
            shifted = ((sensed << 1) & keep) | inj[k]
            R[dst.offset + k] = (R[dst.offset + k] & inv) | (shifted & m)
        self.sa.shift_in = R[src.msb]
        self._charge_copy(dst, m)

    def _charge_copy(self, dst: Slice, m: int) -> None:
        n, w = m.bit_count(), dst.width
        self._log_write(dst.offset, w, m)
        self.ledger.read(w * n, phases=w)
        self.ledger.write(w * n, phases=w)

    def zero_slice(self, dst: Slice, mask: int | None = None) -> None:
        """``width`` row writes of zero."""
        self._check_row(dst.offset)
        self._check_row(dst.msb)
        m = self._mask(mask)
        if not m:
            return
        inv = ~m
        for k in dst.rows:
            self.rows[k] &= inv
        self._log_write(dst.offset, dst.width, m)
        self.ledger.write(dst.width * m.bit_count(), phases=dst.width)

    def write_words(self, dst: Slice, values: Sequence[int] | np.ndarray, mask: int | None = None) -> None:
        """Host write of one word per column (values indexed by column)."""
        vals = np.asarray(values, dtype=np.int64)
        if vals.shape != (self.columns,):
            raise ValueError(f"expected {self.columns} values, got {vals.shape}")
        lo, hi = -(1 << (dst.width - 1)), (1 << (dst.width - 1)) - 1
        m = self._mask(mask)
        sel = unpack_bits(m, self.columns).astype(bool)
        if np.any((vals[sel] < lo) | (vals[sel] > hi)):
            raise OverflowError(f"value does not fit a {dst.width}-bit slice")
        for k, row in enumerate(_bit_rows(vals, dst.width)):
            self.write_row(dst.offset + k, row, m)

    def peek_words(self, src: Slice, signed: bool = True) -> np.ndarray:
        """Decode one word per column without charging the ledger (debug/test access)."""
        w = src.width
        nbytes = (self.columns + 7) // 8
        raw = b"".join(self.rows[src.offset + k].to_bytes(nbytes, "little") for k in range(w))
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8).reshape(w, nbytes), axis=1,
                             bitorder="little")[:, :self.columns].astype(np.int64)
        acc = (bits << np.arange(w, dtype=np.int64)[:, None]).sum(axis=0)
        if signed:
            acc = np.where(acc >= (1 << (w - 1)), acc - (1 << w), acc)
        return acc

    def read_words(self, src: Slice, mask: int | None = None, signed: bool = True) -> np.ndarray:
        """Host read of one word per column; charged as ``width`` row reads."""
        m = self._mask(mask)
        if m:
            self.ledger.read(src.width * m.bit_count(), phases=src.width)
        return self.peek_words(src, signed)

    def overflow_columns(self) -> np.ndarray:
        return np.flatnonzero(unpack_bits(self.sa.overflow, self.columns))

    def clear_overflow(self) -> None:
        self.sa.overflow = 0

    # ------------------------------------------------------------ bit-serial arithmetic
    def _serial_add(self, a: Slice, b: Slice, out: Slice, m: int, *, carry_in: bool, invert_b: bool,
                    gate: int | None = None, track_overflow: bool = True) -> int:
        """Core ripple loop; returns the final carry row."""
        R = self.rows
        full = self.full
        w = a.width
        wm = m if gate is None else m & gate
        c = m if carry_in else 0
        c_in_msb = 0
        a0, b0, o0 = a.offset, b.offset, out.offset
        inv = ~wm
        for k in range(w):
            A = R[a0 + k]
            B = R[b0 + k]
            if invert_b:
                B = ~B & full
            x = A ^ B
            s = x ^ c
            c_in_msb = c
            c = (A & B) | (c & x)
            R[o0 + k] = (R[o0 + k] & inv) | (s & wm)
        self.sa.latch = c & m
        n = m.bit_count()
        self.ledger.read(4 * w * n, phases=2 * w)
        self.ledger.write(w * wm.bit_count(), phases=2 * w)
        self._log_write(o0, w, wm)
        if track_overflow:
            self.sa.overflow |= (c ^ c_in_msb) & wm
        return c

    def _check_slices(self, *slices: Slice) -> int:
        w = slices[0].width
        for s in slices:
            if s.width != w:
                raise ValueError("operand slices must share one width")
            if s.offset < 0 or s.offset + s.width > ROWS:
                raise IndexError(f"slice {s} outside the column")
        if w > 32:
            raise ValueError("bit-serial operands are at most 32 bits wide")
        return w

    def bitserial_add(self, a: Slice, b: Slice, out: Slice, mask: int | None = None, *,
                      track_overflow: bool = True) -> None:
        """out = (a + b) mod 2^w per column; signed overflow sets the sticky flag."""
        self._check_slices(a, b, out)
        m = self._mask(mask)
        if m:
            self._serial_add(a, b, out, m, carry_in=False, invert_b=False, track_overflow=track_overflow)

    def bitserial_sub(self, a: Slice, b: Slice, out: Slice, mask: int | None = None, *,
                      track_overflow: bool = True) -> None:
        """out = (a - b) mod 2^w, computed as a + ~b + 1."""
        self._check_slices(a, b, out)
        m = self._mask(mask)
        if m:
            self._serial_add(a, b, out, m, carry_in=True, invert_b=True, track_overflow=track_overflow)

    def set_predicate(self, row: int, mask: int | None = None, *, invert: bool = False) -> int:
        """Sense one row into the SA predicate register (one full cycle)."""
        self._check_row(row)
        m = self._mask(mask)
        v = self.rows[row]
        if invert:
            v = ~v
        self.sa.predicate = v & m
        if m:
            self.ledger.read(m.bit_count())
            self.ledger.write(0)
        return self.sa.predicate

    def predicated_copy(self, src: Slice, dst: Slice, mask: int | None = None, *, kind: str | None = None) -> None:
        """dst = src in columns whose predicate bit is set; other columns are untouched."""
        self._check_slices(src, dst)
        m = self._mask(mask)
        if not m:
            return
        g = m & self.sa.predicate
        R = self.rows
        inv = ~g
        for k in range(src.width):
            R[dst.offset + k] = (R[dst.offset + k] & inv) | (R[src.offset + k] & g)
        w = src.width
        self.ledger.read(w * m.bit_count(), phases=w)
        self.ledger.write(w * g.bit_count(), phases=w)
        self._log_write(dst.offset, w, g)
        if kind:
            self.ledger.gated(kind, w * m.bit_count(), w * g.bit_count())

    def bitserial_abs(self, a: Slice, out: Slice, mask: int | None = None, *, track_overflow: bool = True) -> None:
        """out = |a|: sign sense sets the predicate, then a predicated invert-and-increment.

        Non-negative columns are never written (when ``out`` is ``a``). The most
        negative value maps to itself and raises the overflow flag.
        """
        w = self._check_slices(a, out)
        m = self._mask(mask)
        if not m:
            return
        if out != a:
            if out.overlaps(a):
                raise ValueError("abs output must equal or avoid its input")
            self.copy_slice(a, out, m)
        pred = self.set_predicate(out.msb, m)
        R = self.rows
        full = self.full
        c = m
        inv = ~pred
        o0 = out.offset
        for k in range(w):
            nA = ~R[o0 + k] & full
            s = nA ^ c
            c = nA & c
            R[o0 + k] = (R[o0 + k] & inv) | (s & pred)
        self.sa.latch = c & m
        n = m.bit_count()
        self.ledger.read(2 * w * n, phases=2 * w)
        self.ledger.write(w * pred.bit_count(), phases=2 * w)
        self._log_write(o0, w, pred)
        self.ledger.gated("abs", w * n, w * pred.bit_count())
        if track_overflow:
            self.sa.overflow |= pred & R[out.msb]

    def bitserial_min3(self, a: Slice, b: Slice, c: Slice, out: Slice, scratch: Slice,
                       mask: int | None = None) -> None:
        """out = min(a, b, c) for non-negative operands.

        Two subtractions whose only use is their sign bit, each followed by a
        predicated copy of the smaller candidate into ``out``.
        """
        self._check_slices(a, b, c, out, scratch)
        m = self._mask(mask)
        if not m:
            return
        for s in (a, b, c, out):
            if scratch.overlaps(s):
                raise ValueError("scratch slice must not overlap an operand")
        if out != a:
            if out.overlaps(b) or out.overlaps(c):
                raise ValueError("min3 output may alias only its first operand")
            self.copy_slice(a, out, m)
        for cand in (b, c):
            self.bitserial_sub(cand, out, scratch, m, track_overflow=False)
            self.set_predicate(scratch.msb, m)
            self.predicated_copy(cand, out, m, kind="min3")

    def bitserial_square(self, a: Slice, out: Slice, mask: int | None = None, *, track_overflow: bool = True) -> None:
        """out = a * a by predicated shift-and-add; ``a`` must be non-negative.

        Iteration k senses bit k of ``a`` into the predicate and, where set, adds
        ``a`` into ``out`` starting k rows up. The shift costs nothing: it is
        only a change of row address.
        """
        w = self._check_slices(a, out)
        m = self._mask(mask)
        if not m:
            return
        if out.overlaps(a):
            raise ValueError("square needs disjoint input and output slices")
        self.zero_slice(out, m)
        n = m.bit_count()
        for k in range(w):
            pred = self.set_predicate(a.offset + k, m)
            self._shift_add(a, out, m, pred, k, track_overflow)
            self.ledger.gated("square", (w - k) * n, (w - k) * pred.bit_count())
        sign = self.set_predicate(out.msb, m)
        if track_overflow:
            self.sa.overflow |= sign

    def _shift_add(self, a: Slice, out: Slice, m: int, gate: int, k: int, track_overflow: bool) -> None:
        R = self.rows
        w = a.width - k
        c = 0
        inv = ~gate
        a0, o0 = a.offset, out.offset + k
        for bit in range(w):
            A = R[a0 + bit]
            B = R[o0 + bit]
            x = A ^ B
            s = x ^ c
            c = (A & B) | (c & x)
            R[o0 + bit] = (R[o0 + bit] & inv) | (s & gate)
        self.sa.latch = c & m
        self.ledger.read(4 * w * m.bit_count(), phases=2 * w)
        self.ledger.write(w * gate.bit_count(), phases=2 * w)
        self._log_write(o0, w, gate)
        if track_overflow:
            self.sa.overflow |= c & gate


def _bit_rows(values: np.ndarray, width: int) -> list[int]:
    """Two's complement bit-rows (LSB first) of per-column values."""
    u = values.astype(np.int64) & ((1 << width) - 1) if width < 64 else values.astype(np.int64)
    u = u.astype(np.uint64)
    shifts = np.arange(width, dtype=np.uint64)[:, None]
    bits = ((u[None, :] >> shifts) & np.uint64(1)).astype(np.uint8)
    packed = np.packbits(bits, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]
