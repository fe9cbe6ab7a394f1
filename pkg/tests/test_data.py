"""CSV ingestion, windowing, splits, normalization and noise injection."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caem.data import (Normalizer, SignalFrame, SplitSpec, augment_windows, inject_noise, interpolate_gaps, load_csv,
                       make_windows, split_windows, stack_windows, unwindow, window_labels, window_subjects)
from caem.errors import (EmptyFile, FrameTooShort, IndivisibleWindow, MissingColumn, NonNumericCell,
                         RatioOutOfRange, SignalCountMismatch)


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_with_label_and_subject(tmp_path):
    path = write(tmp_path, "a,b,label,subject\n1,2,0,x\n3,4,1,x\n5,6,0,y\n")
    f = load_csv(path)
    assert f.names == ["a", "b"]
    np.testing.assert_array_equal(f.values, [[1, 2], [3, 4], [5, 6]])
    np.testing.assert_array_equal(f.labels, [0, 1, 0])
    assert list(f.subjects) == ["x", "x", "y"]


def test_load_csv_selects_signals_and_reports_missing(tmp_path):
    path = write(tmp_path, "a,b,c\n1,2,3\n4,5,6\n")
    assert load_csv(path, signals=["c", "a"]).values.tolist() == [[3, 1], [6, 4]]
    with pytest.raises(MissingColumn):
        load_csv(path, signals=["z"])


def test_load_csv_gaps_and_malformed_rows(tmp_path):
    path = write(tmp_path, "a,b\n1,10\n,nan\n3,30\n4\n5,50\nNaN,60\n")
    f = load_csv(path, max_gap=3)
    assert f.malformed_rows == 1
    assert f.dropped_rows == 1  # trailing gap cannot be interpolated
    np.testing.assert_allclose(f.values, [[1, 10], [2, 20], [3, 30], [5, 50]])


def test_non_numeric_cell_names_row_and_column(tmp_path):
    path = write(tmp_path, "a,b\n1,2\n3,oops\n")
    with pytest.raises(NonNumericCell) as err:
        load_csv(path)
    assert "oops" in str(err.value) and "b" in str(err.value)


def test_empty_files(tmp_path):
    with pytest.raises(EmptyFile):
        load_csv(write(tmp_path, ""))
    with pytest.raises(EmptyFile):
        load_csv(write(tmp_path, "a,b\n", "h.csv"))


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    f = SignalFrame(["p", "q"], rng.standard_normal((6, 2)), np.array([0, 0, 1, 0, 0, 1]), None, "x")
    f.write_csv(tmp_path / "f.csv")
    g = load_csv(tmp_path / "f.csv")
    np.testing.assert_array_equal(g.values, f.values)
    np.testing.assert_array_equal(g.labels, f.labels)


def test_interpolation_respects_max_gap():
    v = np.array([[0.0], [np.nan], [np.nan], [3.0], [np.nan], [np.nan], [np.nan], [np.nan], [8.0]])
    out = interpolate_gaps(v, max_gap=2)
    np.testing.assert_allclose(out[:4, 0], [0, 1, 2, 3])
    assert np.isnan(out[4:8]).all()


def test_window_layout_and_inverse():
    values = np.arange(40, dtype=float).reshape(20, 2)
    w = make_windows(values, 10, 5)
    assert len(w) == 2 and w[0].data.shape == (5, 2, 2)
    # step 1 holds rows 2..3; signal 1 of row 2 is values[2, 1]
    assert w[0].data[1, 1, 0] == values[2, 1]
    np.testing.assert_array_equal(unwindow(w[1]), values[10:20])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(1, 4), st.integers(0, 30), st.integers(1, 7))
def test_windows_cover_rows_in_order(n, h, t, extra, stride):
    rows = h * t + extra
    values = np.random.default_rng(0).standard_normal((rows, n))
    windows = make_windows(values, h * t, h, stride)
    assert len(windows) == (rows - h * t) // stride + 1
    for w in windows:
        np.testing.assert_array_equal(unwindow(w), values[w.start:w.start + h * t])


def test_window_errors():
    with pytest.raises(IndivisibleWindow):
        make_windows(np.zeros((20, 1)), 10, 3)
    with pytest.raises(FrameTooShort):
        make_windows(np.zeros((5, 1)), 10, 5)


def test_window_labels_and_subjects():
    f = SignalFrame(["a"], np.zeros((8, 1)), np.array([0, 0, 0, 1, 0, 0, 0, 0]),
                    np.array(["x"] * 6 + ["y"] * 2, dtype=object))
    w = make_windows(f, 4, 2)
    assert window_labels(f, w, 4).tolist() == [1, 0]
    assert window_subjects(f, w, 4) == ["x", None]


def test_augment_stays_inside_chosen_rows():
    values = np.arange(100, dtype=float)[:, None]
    windows = make_windows(values, 10, 2)
    chosen = [1, 2, 5]
    extra = augment_windows(values, windows, chosen, 10, 2, 3)
    allowed = set()
    for i in chosen:
        allowed.update(range(windows[i].start, windows[i].start + 10))
    assert extra
    for w in extra:
        assert set(range(w.start, w.start + 10)) <= allowed
        assert w.start % 3 == 0
    starts = {w.start for w in extra}
    assert starts == {12, 15, 18}  # rows 50..59 hold no multiple of 3 with room for a window


def test_normalizer_round_trip_and_statistics():
    rng = np.random.default_rng(1)
    raw = rng.standard_normal((10, 3, 2, 4)) * np.array([1.0, 5.0])[:, None] + 3.0
    norm = Normalizer.fit_windows(raw)
    z = norm.apply_windows(raw)
    per_signal = z.transpose(2, 0, 1, 3).reshape(2, -1)
    np.testing.assert_allclose(per_signal.mean(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(per_signal.std(axis=1), 1.0, atol=1e-12)
    assert Normalizer.from_dict(norm.to_dict()) == norm
    with pytest.raises(SignalCountMismatch):
        norm.apply_windows(np.zeros((1, 3, 3, 4)))


def test_constant_signal_gets_std_floor():
    norm = Normalizer.fit(np.ones((5, 1)))
    assert norm.std[0] == 1e-8
    assert np.isfinite(norm.apply(np.ones((2, 1)))).all()


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=5, max_size=120), st.integers(0, 1000))
def test_ratio_split_partitions_and_keeps_anomalies_in_test(labels, seed):
    labels = np.array(labels)
    sp = split_windows(labels, SplitSpec(seed=seed))
    joined = np.concatenate([sp.train, sp.val, sp.test])
    assert sorted(joined.tolist()) == list(range(len(labels)))
    assert (labels[sp.train] == 0).all() and (labels[sp.val] == 0).all()
    normal = int((labels == 0).sum())
    assert len(sp.train) == normal * 5 // 10 and len(sp.val) == normal // 10


def test_split_is_seeded():
    labels = np.zeros(50, dtype=int)
    a, b = split_windows(labels, SplitSpec(seed=3)), split_windows(labels, SplitSpec(seed=3))
    np.testing.assert_array_equal(a.train, b.train)
    assert not np.array_equal(a.train, split_windows(labels, SplitSpec(seed=4)).train)


def test_loso_split():
    labels = np.array([0, 0, 0, 1, 0, 0])
    subjects = ["a", "a", "b", "b", "c", None]
    sp = split_windows(labels, SplitSpec("loso", holdout_subject="b"), subjects)
    assert sp.test.tolist() == [2, 3]
    assert sorted(sp.train.tolist() + sp.val.tolist()) == [0, 1, 4]


def test_split_spec_errors():
    with pytest.raises(ValueError):
        SplitSpec(ratios=(5, 1, 3))
    with pytest.raises(ValueError):
        SplitSpec("loso")
    with pytest.raises(ValueError):
        split_windows([0, 0], SplitSpec("loso", holdout_subject="a"))


def test_inject_noise_touches_exactly_the_chosen_samples():
    x = np.zeros((20, 2, 2, 3))
    noisy, chosen = inject_noise(x, 0.1, sigma=0.3, seed=1)
    assert len(chosen) == 2
    changed = np.where(np.abs(noisy).reshape(20, -1).max(axis=1) > 0)[0]
    np.testing.assert_array_equal(changed, chosen)
    assert (x == 0).all()
    again, _ = inject_noise(x, 0.1, sigma=0.3, seed=1)
    np.testing.assert_array_equal(noisy, again)


def test_inject_noise_statistics():
    noisy, chosen = inject_noise(np.zeros((10, 50, 4, 50)), 0.3, mu=0.5, sigma=0.3, seed=0)
    vals = noisy[chosen]
    assert abs(vals.mean() - 0.5) < 0.01 and abs(vals.std() - 0.3) < 0.01


def test_inject_noise_ratio_bounds():
    with pytest.raises(RatioOutOfRange):
        inject_noise(np.zeros((3, 1, 1, 1)), 0.5)
    assert len(inject_noise(np.zeros((3, 1, 1, 1)), 0.0)[1]) == 0


def test_stack_windows_accepts_arrays_and_samples():
    w = make_windows(np.zeros((8, 1)), 4, 2)
    assert stack_windows(w).shape == stack_windows([x.data for x in w]).shape == (2, 2, 1, 2)
