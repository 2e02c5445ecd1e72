import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bubblecast.errors import ArgumentError, LabelingError, ValidationError
from bubblecast.labeling import (
    LABELS,
    LabelFrame,
    check_label_invariants,
    forward_means,
    make_labels,
    read_labels,
    resolve_threshold,
    rolling_mean_labels,
)
from bubblecast.timeseries import TimeSeries, biweekly_grid


def _fm_oracle(y, tau):
    return np.array([np.mean(y[k:k + tau]) for k in range(len(y))])


def _quantile_oracle(values, C):
    s = sorted(values)
    h = (len(s) - 1) * C
    lo = int(np.floor(h))
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (h - lo) * (s[hi] - s[lo])


instances = st.integers(0, 2**32 - 1).map(np.random.default_rng)


def _instance(r, n=None):
    n = n or int(r.integers(5, 80))
    y = 30 + np.cumsum(r.normal(size=n))
    f = (r.random(n) < 0.35).astype(int)
    if not f.any():
        f[int(r.integers(n))] = 1
    return y, f


class TestResolveThreshold:
    def test_median(self):
        assert resolve_threshold([1, 2, 3], [1, 1, 1], tau=1, C=0.5) == 2

    def test_no_flags(self):
        with pytest.raises(LabelingError):
            resolve_threshold([1, 2, 3], [0, 0, 0], 1, 0.5)

    def test_bad_C(self):
        with pytest.raises(ArgumentError):
            resolve_threshold([1, 2, 3], [1, 1, 1], 1, 1.0)

    @settings(max_examples=100, deadline=None)
    @given(instances, st.integers(1, 8), st.floats(0.01, 0.99))
    def test_property_sort_oracle(self, r, tau, C):
        y, f = _instance(r)
        expect = _quantile_oracle(_fm_oracle(y, tau)[f == 1], C)
        assert abs(resolve_threshold(y, f, tau, C) - expect) <= 1e-12 * max(1, abs(expect))

    @settings(max_examples=60, deadline=None)
    @given(instances, st.integers(1, 8))
    def test_forward_means_truncated(self, r, tau):
        y, _ = _instance(r)
        assert np.allclose(forward_means(y, tau), _fm_oracle(y, tau), rtol=1e-13)

    def test_direction_matches_sweep_table(self):
        # low C puts most bubbles on the high side, high C most on the low side
        y, f = _instance(np.random.default_rng(8), 300)
        lo = make_labels(y, f, 6, 0.2).counts()
        hi = make_labels(y, f, 6, 0.8).counts()
        assert lo["is_bubble_up"] > lo["is_bubble_down"]
        assert hi["is_bubble_up"] < hi["is_bubble_down"]


class TestMakeLabels:
    def test_all_zero_flags(self):
        lf = make_labels([1.0, 2, 3, 4], [0, 0, 0, 0], 2, 0.5)
        assert lf.is_bubble.tolist() == [0] * 4 and lf.not_bubble.tolist() == [1] * 4
        assert lf.is_bubble_up.sum() == lf.is_bubble_down.sum() == 0

    def test_tiny_hand_case(self):
        lf = make_labels([1.0, 10, 2, 2], [0, 1, 1, 0], tau=1, W=6.0)
        assert lf.is_bubble_up.tolist() == [0, 1, 0, 0]
        assert lf.is_bubble_down.tolist() == [0, 0, 1, 0]
        assert lf.W_resolved == 6.0

    def test_equal_to_W_is_down(self):
        lf = make_labels([5.0, 5.0], [1, 1], tau=1, W=5.0)
        assert lf.is_bubble_down.tolist() == [1, 1]

    def test_timeseries_dates_carried(self):
        g = biweekly_grid("2020-01-01", "2020-03-01")
        ts = TimeSeries(g.timestamps, [1, 2, 3, 4, 5])
        lf = make_labels(ts, [0, 1, 1, 1, 0], 2, 0.5)
        assert np.array_equal(lf.timestamps, g.timestamps)

    def test_misaligned(self):
        with pytest.raises(ArgumentError):
            make_labels([1.0, 2.0], [1], 1, 0.5)

    @settings(max_examples=150, deadline=None)
    @given(instances, st.integers(1, 10), st.floats(0.05, 0.95))
    def test_property_invariants_and_partition(self, r, tau, C):
        y, f = _instance(r)
        lf = make_labels(y, f, tau, C)
        check_label_invariants(lf.matrix())
        c = lf.counts()
        assert c["is_bubble_up"] + c["is_bubble_down"] == c["is_bubble"] == f.sum()

    @settings(max_examples=100, deadline=None)
    @given(instances, st.integers(1, 10))
    def test_property_monotone_in_C(self, r, tau):
        y, f = _instance(r)
        prev = None
        for C in np.arange(0.1, 0.95, 0.1):
            lf = make_labels(y, f, tau, float(C))
            if prev is not None:
                # a down label never turns into an up label as C rises
                assert not np.any(prev.is_bubble_down.astype(bool) & lf.is_bubble_up.astype(bool))
            prev = lf


class TestRollingMean:
    def test_rule(self):
        lf = rolling_mean_labels([1.0, 2, 3, 10], [0, 0, 0, 1], 3)
        assert lf.is_bubble_up.tolist() == [0, 0, 0, 1]

    def test_decreasing_all_down(self):
        y = np.arange(20, 0, -1.0)
        lf = rolling_mean_labels(y, np.ones(20, int), 3)
        assert lf.is_bubble_down.sum() == 20

    def test_ties_and_warmup_are_down(self):
        lf = rolling_mean_labels([5.0, 9.0, 5.0, 5.0], [1, 1, 0, 1], 2)
        # index 1 has no defined mean; index 3 mean (9+5)/2 = 7 > 5
        assert lf.is_bubble_down.tolist() == [1, 1, 0, 1]
        lf = rolling_mean_labels([2.0, 4.0, 3.0], [0, 0, 1], 2)
        assert lf.is_bubble_down.tolist() == [0, 0, 1]

    @settings(max_examples=100, deadline=None)
    @given(instances, st.integers(1, 6))
    def test_property_bruteforce(self, r, w):
        y, f = _instance(r, int(r.integers(w + 1, 60)))
        lf = rolling_mean_labels(y, f, w)
        for t in range(len(y)):
            up = bool(f[t]) and t >= w and y[t] > sum(y[t - w:t]) / w
            assert lf.is_bubble_up[t] == up
            assert lf.is_bubble_down[t] == (bool(f[t]) and not up)


class TestLabelFrame:
    def test_invariant_violations(self):
        ts = np.array(["2020-01-01"], "datetime64[D]")
        with pytest.raises(ValidationError):
            LabelFrame(ts, [1], [1], [1], [0])
        with pytest.raises(ValidationError):
            LabelFrame(ts, [0], [1], [1], [0])
        with pytest.raises(ValidationError):
            LabelFrame(ts, [1], [0], [1], [1])

    def test_csv_roundtrip(self, tmp_path):
        g = biweekly_grid("2020-01-01", "2020-04-01")
        lf = make_labels(TimeSeries(g.timestamps, np.arange(7.0)), [0, 1, 1, 0, 1, 1, 0], 2, 0.5)
        lf.to_csv(tmp_path / "labels.csv")
        head = (tmp_path / "labels.csv").read_text().splitlines()[0]
        assert head == "date," + ",".join(LABELS)
        back = read_labels(tmp_path / "labels.csv")
        assert np.array_equal(back.matrix(), lf.matrix())
        assert np.array_equal(back.timestamps, lf.timestamps)
