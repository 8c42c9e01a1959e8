from pathlib import Path

import numpy as np
import pytest

from pumsdtw.crossbar import (ROWS, ColumnLayout, CrossbarArray, SenseMode, Slice, column_mask, pack_bits,
                              unpack_bits)
from pumsdtw.ledger import CostLedger

GOLDEN = Path(__file__).parent / "golden"


def words(w):
    return Slice(0, w), Slice(w, w), Slice(2 * w, w), Slice(3 * w, w)


def loaded(a, b, w):
    X = CrossbarArray(len(a))
    A, B, O, S = words(w)
    X.write_words(A, a)
    X.write_words(B, b)
    X.ledger = CostLedger()
    return X, A, B, O, S


def wrap(v, w):
    v &= (1 << w) - 1
    return v - (1 << w) if v >> (w - 1) else v


def test_pack_unpack_round_trip():
    bits = np.array([1, 0, 1, 1, 0, 0, 0, 1, 1], dtype=np.uint8)
    row = pack_bits(bits)
    assert row == 0b110001101
    np.testing.assert_array_equal(unpack_bits(row, 9), bits)
    assert column_mask(range(2, 5)) == 0b11100
    assert column_mask([0, 3]) == 0b1001


def test_sense_modes_and_cost():
    X = CrossbarArray(4)
    X.write_row(0, 0b0011)
    X.write_row(1, 0b0101)
    X.write_row(2, 0b1001)
    before = X.ledger.copy()
    assert X.sense([0]) == 0b0011
    assert X.sense([0, 1], SenseMode.NOR2) == 0b1000
    assert X.sense([0, 1, 2], SenseMode.MAJ3) == 0b0001
    assert X.sense([0, 1], SenseMode.XOR) == 0b0110
    d = X.ledger.delta(before)
    assert d["read_bits"] == 4 * (1 + 2 + 3 + 2) and d["write_bits"] == 0
    with pytest.raises(ValueError):
        X.sense([0], SenseMode.MAJ3)


def test_row_copy_cost_and_errors():
    X = CrossbarArray(256)
    X.write_row(3, (1 << 256) - 1)
    X.ledger = CostLedger()
    X.row_copy(3, 7)
    assert X.rows[7] == X.rows[3]
    assert X.ledger.counts() == (256, 256, 1, 1)
    with pytest.raises(ValueError):
        X.row_copy(3, 3)
    with pytest.raises(IndexError):
        X.row_copy(3, ROWS)


def test_diagonal_copy_shifts_right_and_injects():
    X = CrossbarArray(6)
    X.write_row(0, 0b010110)
    X.diagonal_row_copy(0, 1, inject=0b001001, inject_mask=0b001001)
    # column c takes column c-1; columns 0 and 3 take the injected bit
    assert X.rows[1] == 0b101101
    X2 = CrossbarArray(6)
    S = Slice(0, 8)
    X2.write_words(S, [1, 2, 3, 4, 5, 6])
    X2.diagonal_copy_slice(S, Slice(8, 8), inject_value=[-7, 9], inject_mask=0b001001)
    assert X2.peek_words(Slice(8, 8)).tolist() == [-7, 1, 2, 9, 4, 5]


def test_diagonal_copy_crosses_subarray_border():
    X = CrossbarArray(300)
    S = Slice(0, 16)
    vals = np.arange(300) - 150
    X.write_words(S, vals)
    X.diagonal_copy_slice(S, Slice(16, 16), inject_value=42)
    out = X.peek_words(Slice(16, 16))
    assert out[0] == 42 and out[256] == vals[255]
    assert X.num_subarrays == 2


@pytest.mark.parametrize("w", [8, 16])
def test_add_sub_random(w):
    rng = np.random.default_rng(w)
    lo, hi = -(1 << (w - 1)), (1 << (w - 1)) - 1
    a, b = rng.integers(lo, hi + 1, 2000), rng.integers(lo, hi + 1, 2000)
    X, A, B, O, _ = loaded(a, b, w)
    X.bitserial_add(A, B, O)
    assert X.peek_words(O).tolist() == [wrap(int(x) + int(y), w) for x, y in zip(a, b)]
    flags = unpack_bits(X.sa.overflow, len(a)).astype(bool)
    assert flags.tolist() == [not lo <= int(x) + int(y) <= hi for x, y in zip(a, b)]
    X.clear_overflow()
    X.bitserial_sub(A, B, O)
    assert X.peek_words(O).tolist() == [wrap(int(x) - int(y), w) for x, y in zip(a, b)]


def test_add_cost_matches_table():
    w = 16
    X, A, B, O, _ = loaded(np.arange(10), np.arange(10), w)
    X.bitserial_add(A, B, O)
    assert X.ledger.counts() == (4 * w * 10, w * 10, 2 * w, 2 * w)


def test_masked_columns_untouched():
    a = np.arange(8)
    X, A, B, O, _ = loaded(a, a, 8)
    X.write_words(O, [99] * 8)
    X.bitserial_add(A, B, O, mask=0b00001111)
    assert X.peek_words(O).tolist() == [0, 2, 4, 6, 99, 99, 99, 99]


def test_abs_gates_writes_and_flags_minimum():
    w = 8
    a = np.array([5, -5, 0, -128, 127, -1])
    X, A, _, _, _ = loaded(a, a, w)
    X.bitserial_abs(A, A)
    assert X.peek_words(A).tolist() == [5, 5, 0, -128, 127, 1]
    assert X.overflow_columns().tolist() == [3]
    # only the three negative columns wrote
    assert X.ledger.write_bits == 3 * w
    assert X.ledger.gated_capacity["abs"] == 6 * w and X.ledger.gated_writes["abs"] == 3 * w
    assert (X.ledger.read_phases, X.ledger.write_phases) == (2 * w + 1, 2 * w + 1)


def test_min3():
    w = 16
    rng = np.random.default_rng(0)
    vals = rng.integers(0, 30000, size=(3, 500))
    X = CrossbarArray(500)
    A, B, C, O, S = (Slice(k * w, w) for k in range(5))
    for sl, v in zip((A, B, C), vals):
        X.write_words(sl, v)
    X.ledger = CostLedger()
    X.bitserial_min3(A, B, C, O, S)
    assert X.peek_words(O).tolist() == vals.min(axis=0).tolist()
    assert (X.ledger.read_phases, X.ledger.write_phases) == (7 * w + 2, 7 * w + 2)
    assert not X.sa.overflow
    with pytest.raises(ValueError):
        X.bitserial_min3(A, B, C, O, O)


def test_square():
    w = 16
    a = np.arange(0, 182)  # 181^2 < 2^15
    X, A, _, O, _ = loaded(a, a, w)
    X.bitserial_square(A, O)
    assert X.peek_words(O).tolist() == (a * a).tolist()
    assert not X.sa.overflow
    assert (X.ledger.read_phases, X.ledger.write_phases) == (w * (w + 2) + 1, w * (w + 3) + 1)
    X2, A2, _, O2, _ = loaded(np.array([181, 182, 200]), np.zeros(3, int), w)
    X2.bitserial_square(A2, O2)
    assert X2.overflow_columns().tolist() == [1, 2]


def test_write_words_range_check():
    X = CrossbarArray(2)
    with pytest.raises(OverflowError):
        X.write_words(Slice(0, 8), [1, 200])
    with pytest.raises(ValueError):
        X.write_words(Slice(0, 8), [1, 2, 3])


def test_layout():
    L = ColumnLayout(32)
    assert [L.R.offset, L.Q.offset, L.S_CUR.offset, L.S_DIAG.offset, L.S_UP.offset, L.S_LEFT.offset] == \
        [0, 32, 64, 96, 128, 160]
    assert L.AUX == Slice(192, 64)
    assert ColumnLayout(8).AUX.width == 256 - 48
    with pytest.raises(ValueError):
        ColumnLayout(64)


def test_write_counts_and_finalize():
    X = CrossbarArray(4)
    X.write_row(5, 0b1111, mask=0b0011)
    X.write_row(5, 0, mask=0b0001)
    counts = X.write_counts()
    assert counts[5].tolist() == [2, 1, 0, 0]
    led = X.finalize_ledger()
    assert led.max_cell_writes == 2 and led.cells == 4 * ROWS


def test_read_words_is_charged_peek_is_not():
    X = CrossbarArray(3)
    S = Slice(0, 8)
    X.write_words(S, [1, -2, 3])
    before = X.ledger.copy()
    X.peek_words(S)
    assert X.ledger.delta(before)["read_bits"] == 0
    assert X.read_words(S, 0b101).tolist() == [1, -2, 3]
    assert X.ledger.delta(before) == {"read_bits": 16, "write_bits": 0, "read_phases": 8, "write_phases": 0}


def test_dump_golden():
    X = CrossbarArray(8)
    L = ColumnLayout(8)
    X.write_words(L.R, [0, 1, 2, 3, -1, -2, 127, -128])
    X.write_words(L.Q, [5] * 8)
    X.bitserial_sub(L.Q, L.R, L.AUX0)
    assert X.dump() == (GOLDEN / "dump_8col.txt").read_text()
    with pytest.raises(IndexError):
        X.dump(1)
