import numpy as np
import pytest

from lobflow import feed, features, lob, oracle
from lobflow.feed import EventKind, Side

from conftest import make_event


# ---------------------------------------------------------------------------
# warm-up
# ---------------------------------------------------------------------------


class TestWarmUp:
    def test_until_first_ts_consumes_nothing(self, planted_events):
        first = planted_events[0].timestamp_ms
        book, n, rest, last = features.warm_up(planted_events, until_ts=first)
        assert n == 0 and last is None
        assert next(iter(rest)) is planted_events[0]

    def test_until_infinity_consumes_all(self, planted_events):
        book, n, rest, last = features.warm_up(planted_events, until_ts=2**62)
        assert n == len(planted_events)
        assert list(rest) == []
        assert last == planted_events[-1].timestamp_ms

    def test_count_boundary(self, planted_events):
        book, n, rest, last = features.warm_up(planted_events, until_count=7)
        assert n == 7
        assert last == planted_events[6].timestamp_ms
        assert next(iter(rest)) is planted_events[7]

    def test_warm_book_matches_oracle(self, planted_events):
        book, n, _, _ = features.warm_up(planted_events, until_count=500)
        ref = oracle.ReferenceBook()
        for e in planted_events[:n]:
            ref.apply(e)
        assert oracle.compare_books(book, ref) is None

    def test_exactly_one_boundary_required(self, planted_events):
        with pytest.raises(ValueError):
            features.warm_up(planted_events)
        with pytest.raises(ValueError):
            features.warm_up(planted_events, until_ts=1, until_count=1)


# ---------------------------------------------------------------------------
# annotation and labelling
# ---------------------------------------------------------------------------


class TestAnnotate:
    def test_dt_and_hour(self, ev):
        book = lob.OrderBook()
        counters = {}
        # 14:37:00 UTC on 2017-11-06
        ts = 1_509_977_820_000
        assert ts % 86_400_000 // 3_600_000 == 14
        ann, _ = features.annotate_event(book, ev(ts=ts, price=100), prev_ts=ts - 3,
                                         depth=None, counters=counters)
        assert ann.dt_ms == 3
        assert ann.hour == 14

    def test_first_event_dt_zero(self, ev):
        book = lob.OrderBook()
        ann, _ = features.annotate_event(book, ev(price=100), prev_ts=None,
                                         depth=None, counters={})
        assert ann.dt_ms == 0

    def test_rel_price_fallback_counted(self, ev):
        book = lob.OrderBook()
        counters = {}
        ann, _ = features.annotate_event(book, ev(price=100), prev_ts=None,
                                         depth=None, counters=counters)
        assert ann.rel_price == 1
        assert counters["rel_price_fallbacks"] == 1


class TestLabelStream:
    def test_count_matches_oracle_mid_changes(self, planted_events):
        T = 10
        book, n, rest, last = features.warm_up(planted_events, until_count=40)
        counters = {}
        samples = list(features.label_stream(rest, book, T, prev_ts=last,
                                             counters=counters))
        # oracle: replay independently, count defined-mid changes
        ref = oracle.ReferenceBook()
        for e in planted_events[:40]:
            ref.apply(e)
        changes = 0
        prev_mid = ref.mid()
        for e in planted_events[40:]:
            ref.apply(e)
            mid = ref.mid()
            if prev_mid is not None and mid is not None and mid != prev_mid:
                changes += 1
            prev_mid = mid
        skipped = counters.get("skipped_insufficient_history", 0)
        assert len(samples) + skipped == changes
        assert len(samples) > 100

    def test_labels_match_mid_direction(self, planted_events):
        book, n, rest, last = features.warm_up(planted_events, until_count=40)
        # planted rule: label equals side of the last window event
        for label, ts, window in features.label_stream(rest, book, 10, prev_ts=last):
            want = 1 if window[-1].side_code == Side.BUY.value else 0
            assert label == want

    def test_window_is_strictly_before_mover(self, planted_events):
        book, n, rest, last = features.warm_up(planted_events, until_count=40)
        for label, ts, window in features.label_stream(rest, book, 10, prev_ts=last):
            assert all(a.ts <= window[-1].ts for a in window)
            assert window[-1].ts < ts
            assert len(window) == 10

    def test_deep_resting_limit_emits_nothing(self, ev):
        book = lob.OrderBook()
        book.apply_event(ev(seq=1, price=100))
        book.apply_event(ev(seq=2, side=Side.SELL, price=110))
        deep = [ev(seq=3, price=90, size=1.0)]
        out = list(features.label_stream(deep, book, T=0))
        assert out == []


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------


def run_window(events, depth=3):
    book = lob.OrderBook()
    counters = {}
    window = []
    prev = None
    for e in events:
        ann, _ = features.annotate_event(book, e, prev, depth, counters)
        window.append(ann)
        prev = e.timestamp_ms
    return window, book


class TestExtractOrderflow:
    def test_shape_and_columns(self, ev):
        t0 = 1_510_000_000_000
        events = [ev(ts=t0, seq=1, price=100, size=0.5),
                  ev(ts=t0 + 3, seq=2, side=Side.SELL, price=103, size=2.0)]
        window, _ = run_window(events)
        X = features.extract_orderflow(window)
        assert X.shape == (2, 6)
        assert X[1, 0] == 3                          # dt_ms
        assert X[0, 2] == 0.5 and X[1, 2] == 2.0     # size
        assert X[0, 3] == EventKind.LIMIT.value
        assert X[0, 4] == Side.BUY.value and X[1, 4] == Side.SELL.value

    def test_rel_price_matches_oracle_replay(self, planted_events):
        book, n, rest, last = features.warm_up(planted_events, until_count=40)
        samples = []
        for item in features.label_stream(rest, book, 10, prev_ts=last):
            samples.append(item)
            if len(samples) == 5:
                break
        # oracle: replay a reference book alongside and recompute rel prices
        ref = oracle.ReferenceBook()
        rel_by_ts = {}
        for e in planted_events:
            best = ref.best_bid() if e.side is Side.BUY else ref.best_ask()
            if best is None or e.price_ticks is None:
                rel = 1
            else:
                rel = 1 + abs(best - e.price_ticks)
            rel_by_ts.setdefault((e.timestamp_ms, e.seq), rel)
            ref.apply(e)
        seq_by_ts = {}
        for e in planted_events:
            seq_by_ts.setdefault(e.timestamp_ms, []).append(e.seq)
        for label, ts, window in samples:
            X = features.extract_orderflow(window)
            for t, a in enumerate(window):
                matches = [rel_by_ts[(a.ts, s)] for s in seq_by_ts[a.ts]]
                assert X[t, 5] in matches


class TestExtractSnapshot:
    def test_no_market_orders_zero_rates(self, ev):
        t0 = 1_510_000_000_000
        events = [ev(ts=t0, seq=1, price=100),
                  ev(ts=t0 + 1, seq=2, side=Side.SELL, price=102),
                  ev(ts=t0 + 2, seq=3, price=99)]
        window, _ = run_window(events, depth=2)
        # first event precedes a defined mid; window starts after it
        X = features.extract_snapshot(window[1:], 2, "bench1")
        assert X.shape == (2, 11)
        assert np.all(X[:, 9:] == 0.0)

    def test_stated_rate_formula(self, ev):
        # 5 buy market orders in the window, best-bid level holding 20 orders
        t0 = 1_510_000_000_000
        events = [ev(ts=t0, seq=1, price=100, size=1.0, oid="b0"),
                  # deep ask up front so every later event sees a defined mid
                  ev(ts=t0 + 1, seq=2, side=Side.SELL, price=105, size=50.0)]
        seq = 3
        for k in range(1, 20):
            events.append(ev(ts=t0 + seq, seq=seq, price=100, size=1.0, oid=f"b{k}"))
            seq += 1
        for _ in range(5):
            events.append(ev(ts=t0 + seq, seq=seq, kind=EventKind.MARKET,
                             side=Side.BUY, size=0.5))
            seq += 1
        window, book = run_window(events, depth=2)
        assert book.level_count(Side.BUY, 100) == 20
        # drop the stream-head event with no mid; all 5 MOs stay in the window
        X = features.extract_snapshot(window[1:], 2, "bench1")
        assert X[-1, 9] == 5 / 20            # buy MO rate at the last step
        assert X[-1, 10] == 0.0              # no sell MOs in the window

    def test_bench2_is_bench1_minus_rates(self, planted_datasets):
        b1 = planted_datasets["bench1"]
        b2 = planted_datasets["bench2"]
        assert b1.X.shape[2] == b2.X.shape[2] + 2
        np.testing.assert_array_equal(b1.X[..., :b2.X.shape[2]], b2.X)
        np.testing.assert_array_equal(b1.y, b2.y)
        np.testing.assert_array_equal(b1.event_time, b2.event_time)

    def test_degenerate_rate_flagged(self, ev):
        t0 = 1_510_000_000_000
        events = [ev(ts=t0, seq=1, price=100),
                  ev(ts=t0 + 1, seq=2, side=Side.SELL, price=102),
                  # market sell consumes the whole bid side -> bb_count 0
                  ev(ts=t0 + 2, seq=3, kind=EventKind.MARKET, side=Side.SELL, size=1.0)]
        window, book = run_window(events, depth=2)
        counters = {}
        X = features.extract_snapshot(window[2:], 2, "bench1", counters)
        assert X is None or counters.get("degenerate_rates", 0) >= 1

    def test_undefined_mid_returns_none(self, ev):
        window, _ = run_window([ev(price=100)], depth=2)
        counters = {}
        assert features.extract_snapshot(window, 2, "bench1", counters) is None
        assert counters["skipped_undefined_mid"] == 1

    def test_snapshots_match_oracle_top_levels(self, planted_events):
        depth = 3
        book, n, rest, last = features.warm_up(planted_events, until_count=40)
        ref = oracle.ReferenceBook()
        for e in planted_events[:40]:
            ref.apply(e)
        it = iter(planted_events[40:])
        got = None
        for label, ts, window in features.label_stream(it, book, 5, depth=depth,
                                                       prev_ts=last):
            got = window
            break
        assert got is not None
        # replay the reference to the last window event and compare its snapshot
        for e in planted_events[40:]:
            ref.apply(e)
            if e.timestamp_ms == got[-1].ts:
                break
        snap = got[-1].snap
        ref_bids = ref.top_levels(Side.BUY, depth)
        real = list(zip(snap.bid_prices, snap.bid_volumes))[:snap.n_real_bids]
        assert real == ref_bids


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------


class TestSplitByDate:
    def _fresh(self, planted_events):
        return features.build_datasets(planted_events, T=10, S=2, warm_count=40,
                                       variants=("orderflow",))["orderflow"]

    def test_all_in_train(self, planted_events):
        ds = self._fresh(planted_events)
        lo, hi = int(ds.event_time[0]), int(ds.event_time[-1]) + 1
        features.split_by_date(ds, (lo, hi), (hi, hi + 1), (hi + 1, hi + 2))
        counts = ds.split_counts()
        assert counts["train"] == ds.n
        assert counts["validation"] == counts["test"] == 0

    def test_half_open_boundary(self, planted_events):
        ds = self._fresh(planted_events)
        b = int(ds.event_time[ds.n // 2])
        lo, hi = int(ds.event_time[0]), int(ds.event_time[-1]) + 1
        features.split_by_date(ds, (lo, b), (b, b + 1), (b + 1, hi))
        at_boundary = ds.split[ds.event_time == b]
        assert np.all(at_boundary == features.SPLIT_VAL)

    def test_counts_equal_filter_pass(self, planted_events):
        ds = self._fresh(planted_events)
        times = ds.event_time
        a, b, c, d = (int(times[0]), int(times[ds.n // 3]),
                      int(times[2 * ds.n // 3]), int(times[-1]) + 1)
        features.split_by_date(ds, (a, b), (b, c), (c, d))
        counts = ds.split_counts()
        assert counts["train"] == int(np.sum((times >= a) & (times < b)))
        assert counts["validation"] == int(np.sum((times >= b) & (times < c)))
        assert counts["test"] == int(np.sum((times >= c) & (times < d)))
        assert ds.counters["dropped_outside_ranges"] == ds.n - sum(counts.values())

    def test_overlap_rejected(self, planted_events):
        ds = self._fresh(planted_events)
        with pytest.raises(features.OverlappingRanges):
            features.split_by_date(ds, (0, 10), (5, 20), (20, 30))

    def test_unordered_rejected(self, planted_events):
        ds = self._fresh(planted_events)
        with pytest.raises(features.UnorderedRanges):
            features.split_by_date(ds, (20, 30), (0, 10), (40, 50))
        with pytest.raises(features.UnorderedRanges):
            features.split_by_date(ds, (10, 5), (20, 30), (40, 50))


# ---------------------------------------------------------------------------
# normalization stats
# ---------------------------------------------------------------------------


class TestNormStats:
    def test_train_standardization(self, planted_datasets):
        for ds in planted_datasets.values():
            stats = ds.norm_stats
            z = features.transform_numeric(ds.X[ds.split == features.SPLIT_TRAIN],
                                           ds.variant, ds.S)
            z = (z - np.array(stats["mean"])) / np.array(stats["sd"])
            flat = z.reshape(-1, z.shape[-1])
            np.testing.assert_allclose(flat.mean(axis=0), 0.0, atol=1e-9)
            sd = flat.std(axis=0)
            assert np.all((np.abs(sd - 1.0) < 1e-6) | (sd < 1e-6))

    def test_missing_train_split_raises(self, planted_events):
        ds = features.build_datasets(planted_events, T=10, S=2, warm_count=40,
                                     variants=("orderflow",))["orderflow"]
        with pytest.raises(features.MissingStats):
            features.compute_norm_stats(ds)   # split never assigned

    def test_orderflow_transform_formula(self):
        X = np.array([[[3.0, 14, 0.5, 1, 1, 4]]])
        z = features.transform_numeric(X, "orderflow", S=0)
        np.testing.assert_allclose(z[0, 0], [np.log1p(3.0), np.log(0.5), np.log(4)])

    def test_snapshot_transform_offsets(self):
        S = 2
        # bid px 100,99 | bid vol 1,2 | ask px 102,103 | ask vol 3,4 | mid 101 | rates
        X = np.array([[[100, 99, 1, 2, 102, 103, 3, 4, 101.0, 0.25, 0.5]]])
        z = features.transform_numeric(X, "bench1", S)
        np.testing.assert_allclose(
            z[0, 0],
            [-1, -2, np.log1p(1), np.log1p(2), 1, 2, np.log1p(3), np.log1p(4), 0.25, 0.5])


# ---------------------------------------------------------------------------
# serialization, determinism, no look-ahead
# ---------------------------------------------------------------------------


class TestSerialization:
    def test_binary_round_trip(self, planted_datasets, tmp_path):
        for name, ds in planted_datasets.items():
            p = tmp_path / f"{name}.ds"
            features.save_dataset(ds, p)
            back = features.load_dataset(p)
            assert features.dataset_digest(back) == features.dataset_digest(ds)
            np.testing.assert_array_equal(back.X, ds.X)
            np.testing.assert_array_equal(back.y, ds.y)
            assert back.norm_stats == ds.norm_stats
            assert back.split_ranges == ds.split_ranges

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "bad.ds"
        p.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(features.FeatureError):
            features.load_dataset(p)

    def test_text_export_lossless(self, planted_datasets, tmp_path):
        ds = planted_datasets["orderflow"]
        p = tmp_path / "of.txt"
        features.export_text(ds, p)
        lines = p.read_text().splitlines()
        assert len(lines) == ds.n + 1
        first = lines[1].split()
        assert int(first[0]) == int(ds.y[0])
        assert int(first[1]) == int(ds.event_time[0])
        vals = np.array([float(v) for v in first[4:]])
        np.testing.assert_array_equal(vals, ds.X[0].ravel())

    def test_build_deterministic(self, planted_events):
        a = features.build_datasets(planted_events, T=10, S=2, warm_count=40)
        b = features.build_datasets(planted_events, T=10, S=2, warm_count=40)
        for v in features.VARIANTS:
            assert features.dataset_digest(a[v]) == features.dataset_digest(b[v])


class TestNoLookAhead:
    def test_window_precedes_label_event(self, planted_datasets):
        for ds in planted_datasets.values():
            assert np.all(ds.window_last_ts < ds.event_time)

    def test_split_time_ordering(self, planted_datasets):
        ds = planted_datasets["orderflow"]
        tr = ds.event_time[ds.split == features.SPLIT_TRAIN]
        va = ds.event_time[ds.split == features.SPLIT_VAL]
        te = ds.event_time[ds.split == features.SPLIT_TEST]
        assert tr.max() < va.min() <= va.max() < te.min()
