import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factorcast import narma
from factorcast.data import (
    MinMaxStats,
    Series,
    SeriesSet,
    make_segments,
    read_series_csv,
    write_series_csv,
)
from factorcast.errors import ParameterError


def ramp_set(length=40, n=2):
    t = np.arange(length, dtype=float)
    x = np.stack([t + 100 * i for i in range(n)])
    u = np.stack([-t - 100 * i for i in range(n)])
    return SeriesSet([Series(x, u, 0, 0.5)], ("x1", "x2"), ("u1", "u2"), "alpha")


def test_segment_shapes():
    sset = narma.generate_series_set(narma.scenario(1), narma.ControlRegime.iid(), 4, 100, seed=0)
    seg = make_segments(sset, 11, 5, 64, seed=0)
    assert seg.x_past.shape == (64, 2, 11)
    assert seg.u_past.shape == (64, 2, 11)
    assert seg.u_future.shape == (64, 2, 5)
    assert seg.x_future.shape == (64, 2, 5)


def test_ramp_alignment():
    sset = ramp_set()
    seg = make_segments(sset, 4, 3, 1, seed=0)
    t = int(seg.anchor[0])
    assert seg.x_past[0, 0].tolist() == [t - 3, t - 2, t - 1, t]
    assert seg.x_future[0, 0].tolist() == [t + 1, t + 2, t + 3]
    assert seg.u_past[0, 0].tolist() == [-(t - 4), -(t - 3), -(t - 2), -(t - 1)]
    assert seg.u_future[0, 0].tolist() == [-t, -(t + 1), -(t + 2)]


def test_ramp_target_normalized():
    sset = ramp_set()
    stats = MinMaxStats.fit(sset)
    seg = make_segments(sset, 4, 3, 1, seed=0, stats=stats)
    t = int(seg.anchor[0])
    assert np.allclose(seg.x_future[0, 0], (np.arange(t + 1, t + 4)) / 39.0)


def test_too_short():
    with pytest.raises(ParameterError):
        make_segments(ramp_set(10), 5, 5, 1, seed=0)
    with pytest.raises(ParameterError):
        make_segments(ramp_set(20), 5, 5, 50, seed=0)


def test_strided_covers_extremes():
    seg = make_segments(ramp_set(30), 4, 3, 5, seed=None, strided=True)
    assert seg.anchor.min() == 4 and seg.anchor.max() == 30 - 1 - 3


@settings(max_examples=60, deadline=None)
@given(
    lengths=st.lists(st.integers(5, 60), min_size=1, max_size=5),
    T=st.integers(1, 12),
    M=st.integers(1, 8),
    seed=st.integers(0, 1000),
    strided=st.booleans(),
)
def test_windows_stay_in_bounds(lengths, T, M, seed, strided):
    series = []
    for sid, n in enumerate(lengths):
        t = np.arange(n, dtype=float)
        series.append(Series(np.stack([t, t]), np.stack([t, t]), sid, 0.0))
    sset = SeriesSet(series, ("x1", "x2"), ("u1", "u2"), "alpha")
    available = sum(max(n - T - M, 0) for n in lengths)
    if available == 0:
        with pytest.raises(ParameterError):
            make_segments(sset, T, M, 1, seed)
        return
    count = min(available, 7)
    seg = make_segments(sset, T, M, count, seed, strided=strided)
    for k in range(count):
        n = lengths[seg.series_index[k]]
        t = seg.anchor[k]
        assert t - T >= 0 and t + M <= n - 1
        # ramp values equal their time index, so windows are exactly located
        assert seg.x_future[k, 0, -1] == t + M and seg.u_past[k, 0, 0] == t - T
    assert len(set(zip(seg.series_index.tolist(), seg.anchor.tolist()))) == count


def test_segments_reproducible():
    sset = narma.generate_series_set(narma.scenario(2), narma.ControlRegime.iid(), 3, 80, seed=0)
    a = make_segments(sset, 11, 5, 30, seed=7)
    b = make_segments(sset, 11, 5, 30, seed=7)
    assert np.array_equal(a.x_past, b.x_past) and np.array_equal(a.u_future, b.u_future)


def test_normalization_uses_training_stats():
    train = narma.generate_series_set(narma.scenario(1), narma.ControlRegime.iid(), 5, 100, seed=1)
    test = narma.generate_series_set(narma.scenario(1), narma.ControlRegime.ood(), 5, 100, seed=2)
    stats = MinMaxStats.fit(train)
    tr = make_segments(train, 11, 5, 100, seed=0, stats=stats)
    assert tr.x_past.min() >= 0 and tr.x_past.max() <= 1
    te = make_segments(test, 11, 5, 100, seed=0, stats=stats)
    raw = make_segments(test, 11, 5, 100, seed=0)
    expect = (raw.x_past - stats.x_min[None, :, None]) / (stats.x_max - stats.x_min)[None, :, None]
    assert np.allclose(te.x_past, expect)
    assert MinMaxStats.from_dict(stats.to_dict()).x_max.tolist() == stats.x_max.tolist()


def test_narma_csv_round_trip(tmp_path):
    sset = narma.generate_series_set(narma.scenario(3), narma.ControlRegime.ood(), 3, 50, seed=3)
    path = tmp_path / "n.csv"
    write_series_csv(path, sset)
    header = path.read_text().splitlines()[0]
    assert header == "t,x1,x2,u1,u2,series_id,alpha"
    back = read_series_csv(path, ("x1", "x2"), ("u1", "u2"), "alpha")
    for s, t in zip(sset, back):
        assert np.array_equal(s.x, t.x) and np.array_equal(s.u, t.u) and s.param == t.param
