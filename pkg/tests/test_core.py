import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pumsdtw.core import (AccumulatorOverflowError, StreamWorkspace, accumulator_limit, dist, run_query_filtering,
                          run_self_join, sdtw_full, sdtw_matrix, sdtw_stream)
from pumsdtw.series import QuerySet, TimeSeries

small = st.lists(st.integers(-100, 100), min_size=1, max_size=12)


def test_exact_match_is_zero():
    assert sdtw_full([1, 2, 3], [5, 1, 2, 3, 9]) == 0


def test_matrix_first_row_and_column():
    S = sdtw_matrix([1, 4], [2, 0, 7])
    assert S[0] == [1, 0, 0]          # row 0 stays zero past the corner
    assert S[1][0] == 1 + 2           # column 0 accumulates
    S = sdtw_matrix([1, 4], [2, 0, 7], open_start=True)
    assert S[0] == [1, 1, 6]


def test_single_sample_query():
    # only S[0][0] is scored on row 0 by default
    assert sdtw_full([5], [1, 5, 9]) == 0
    assert sdtw_full([5], [1, 6, 9], open_start=True) == 1


def test_square_metric():
    assert dist(3, -1, "square_diff") == 16
    assert sdtw_full([0, 2], [0, 0], "square_diff") == 0 + 4


def test_unknown_metric():
    with pytest.raises(ValueError):
        sdtw_full([1], [1], "cosine")


def test_accumulator_overflow():
    big = (1 << 7) - 1
    with pytest.raises(AccumulatorOverflowError):
        sdtw_full([big] * 3, [-big - 1] * 2, "square_diff", width=8)
    assert accumulator_limit(8) == 32767


def test_float_inputs():
    assert sdtw_full([0.25, 1.0], [0.0, 2.0]) == pytest.approx(1.0)


@settings(max_examples=300, deadline=None)
@given(small, small, st.sampled_from(["abs_diff", "square_diff"]), st.booleans())
def test_stream_equals_full(q, r, metric, open_start):
    assert sdtw_stream(q, r, metric, open_start=open_start) == sdtw_full(q, r, metric, open_start=open_start)


@settings(max_examples=150, deadline=None)
@given(small, small)
def test_open_start_never_worse(q, r):
    # open start replaces forced zeros by real distances on row 0, so it can only raise scores
    assert sdtw_full(q, r, open_start=True) >= sdtw_full(q, r)


@settings(max_examples=150, deadline=None)
@given(small, small)
def test_extending_reference_never_hurts_closed_start(q, r):
    assert sdtw_full(q, r + [0]) <= sdtw_full(q, r)


def test_workspace_is_four_vectors():
    fields = [f.name for f in dataclasses.fields(StreamWorkspace)]
    assert fields == ["s_cur", "s_diag", "s_up", "s_left"]
    ws = StreamWorkspace.allocate(7)
    assert all(v.shape == (7,) for v in ws.vectors())
    assert sdtw_stream([1, 2], [0, 1, 2, 3, 4, 5, 6], workspace=ws) == sdtw_full([1, 2], [0, 1, 2, 3, 4, 5, 6])


def test_workspace_wrong_size():
    with pytest.raises(ValueError):
        sdtw_stream([1], [1, 2, 3], workspace=StreamWorkspace.allocate(2))


def test_stream_wide_values_use_exact_arithmetic():
    # query length x largest distance exceeds the 16-bit accumulator, actual scores do not
    q = [0] * 199 + [127]
    r = [0] * 50 + [-128]
    assert sdtw_stream(q, r, width=8) == sdtw_full(q, r, width=8)


def test_query_filtering_threshold():
    ref = TimeSeries(np.array([0, 1, 2, 3, 10, 11, 12]))
    qs = QuerySet([TimeSeries(np.array([1, 2])), TimeSeries(np.array([50, 60]))])
    res = run_query_filtering(ref, qs, threshold=5)
    assert [r.distance for r in res] == [0, sdtw_full([50, 60], ref.tolist())]
    assert [r.anomaly for r in res] == [False, True]


def test_self_join_exclusion_zone():
    series = TimeSeries(np.array([0, 1, 0, 1, 0, 5, 9]))
    res = run_self_join(series, 3)
    assert len(res) == 5
    w = [series.tolist()[k:k + 3] for k in range(5)]
    want0 = min(sdtw_stream(w[0], w[j]) for j in (3, 4))
    assert res[0].distance == want0
    # window 2 has no partner at distance >= 3
    assert res[2].distance is None and not res[2].anomaly
