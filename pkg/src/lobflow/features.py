"""Dataset construction: labelling, covariate extraction, date splits.

The replayed stream is turned into length-T samples, one per mid-price
moving event, labelled 1 for an upward move and 0 for a downward move.
Three feature variants are built from the same labelled windows:

  orderflow  per event: [dt_ms, hour, size, kind, side, rel_price]
  bench1     per event: [bid px*S, bid vol*S, ask px*S, ask vol*S, mid,
                         mo_rate_buy, mo_rate_sell]
  bench2     bench1 without the two MO-rate columns

Feature values are stored raw; the normalization applied at the model
input (log1p on dt, log on size and rel_price, snapshot prices as tick
offsets from the stored mid column, volumes log1p) is computed here on
the train split only and recorded in the dataset header.  The `mid`
column in the snapshot variants exists solely to support that offset
transform and is dropped by the encoder.
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections import deque
from dataclasses import dataclass, field
from itertools import chain
from typing import Iterable, Iterator, Optional

import numpy as np

from . import lob
from .feed import EventKind, OrderEvent, Side

VARIANTS = ("orderflow", "bench1", "bench2")

SPLIT_NONE, SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST = -1, 0, 1, 2
SPLIT_NAMES = {"train": SPLIT_TRAIN, "validation": SPLIT_VAL, "test": SPLIT_TEST}


class FeatureError(Exception):
    pass


class InsufficientHistory(FeatureError):
    pass


class OverlappingRanges(FeatureError):
    pass


class UnorderedRanges(FeatureError):
    pass


class MissingStats(FeatureError):
    pass


# ---------------------------------------------------------------------------
# Per-event annotation
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class EventAnnotation:
    """Everything a feature extractor needs about one applied event."""

    ts: int
    dt_ms: int
    hour: int
    size: float
    kind_code: int
    side_code: int
    rel_price: int
    mid_after: Optional[float]
    snap: Optional[lob.LobSnapshot]
    bb_count: int
    ba_count: int


def hour_utc(timestamp_ms: int) -> int:
    return (timestamp_ms // 3_600_000) % 24


def warm_up(events: Iterable[OrderEvent], book: Optional[lob.OrderBook] = None,
            until_ts: Optional[int] = None, until_count: Optional[int] = None):
    """Apply the stream prefix to the book without emitting anything.

    The boundary is either a timestamp (events with ts < until_ts are
    consumed) or an event count.  Returns (book, consumed, remaining
    iterator, last_consumed_ts).
    """
    if (until_ts is None) == (until_count is None):
        raise ValueError("exactly one of until_ts / until_count required")
    book = book if book is not None else lob.OrderBook()
    it = iter(events)
    consumed = 0
    last_ts = None
    for ev in it:
        if until_ts is not None and ev.timestamp_ms >= until_ts:
            return book, consumed, chain([ev], it), last_ts
        if until_count is not None and consumed >= until_count:
            return book, consumed, chain([ev], it), last_ts
        book.apply_event(ev)
        consumed += 1
        last_ts = ev.timestamp_ms
    return book, consumed, iter(()), last_ts


def annotate_event(book: lob.OrderBook, ev: OrderEvent, prev_ts: Optional[int],
                   depth: Optional[int], counters: dict) -> tuple[EventAnnotation, lob.BookDelta]:
    """Apply one event and capture its covariates plus the post-event state."""
    try:
        rel = book.relative_price(ev.side, ev.price_ticks)
    except lob.EmptySide:
        # no same-side best yet (stream head); at-best by convention
        rel = 1
        counters["rel_price_fallbacks"] = counters.get("rel_price_fallbacks", 0) + 1
    delta = book.apply_event(ev)
    mid = delta.mid_after
    snap = book.snapshot(depth) if depth is not None else None
    ann = EventAnnotation(
        ts=ev.timestamp_ms,
        dt_ms=ev.timestamp_ms - prev_ts if prev_ts is not None else 0,
        hour=hour_utc(ev.timestamp_ms),
        size=ev.size,
        kind_code=ev.kind.value,
        side_code=ev.side.value,
        rel_price=rel,
        mid_after=float(mid) if mid is not None else None,
        snap=snap,
        bb_count=book.level_count(Side.BUY, book.best_bid()) if book.best_bid() is not None else 0,
        ba_count=book.level_count(Side.SELL, book.best_ask()) if book.best_ask() is not None else 0,
    )
    return ann, delta


def label_stream(events: Iterable[OrderEvent], book: lob.OrderBook, T: int,
                 depth: Optional[int] = None, prev_ts: Optional[int] = None,
                 counters: Optional[dict] = None) -> Iterator[tuple[int, int, list]]:
    """Yield (label, event_time, window) per mid-price-moving event.

    The window is the T most recent annotated events strictly preceding
    the moving event.  Movers with fewer than T prior events are skipped
    and counted.  The book must already be warmed so the mid is defined.
    """
    counters = counters if counters is not None else {}
    window: deque[EventAnnotation] = deque(maxlen=T)
    for ev in events:
        ann, delta = annotate_event(book, ev, prev_ts, depth, counters)
        prev_ts = ev.timestamp_ms
        if delta.mid_changed:
            if len(window) >= T:
                label = 1 if delta.mid_after > delta.mid_before else 0
                yield label, ev.timestamp_ms, list(window)
            else:
                counters["skipped_insufficient_history"] = \
                    counters.get("skipped_insufficient_history", 0) + 1
        elif delta.mid_before is None and delta.mid_after is not None:
            counters["mid_became_defined"] = counters.get("mid_became_defined", 0) + 1
        window.append(ann)


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------


def extract_orderflow(window: list) -> np.ndarray:
    """(T, 6) raw covariates: dt_ms, hour, size, kind, side, rel_price."""
    out = np.empty((len(window), 6))
    for t, a in enumerate(window):
        out[t] = (a.dt_ms, a.hour, a.size, a.kind_code, a.side_code, a.rel_price)
    return out


def extract_snapshot(window: list, depth: int, variant: str,
                     counters: Optional[dict] = None) -> Optional[np.ndarray]:
    """(T, 4*depth + 1 [+2]) snapshot rows taken after each window event.

    For bench1 the MO rate numerators count the market orders in the
    whole window; the denominator is the order count at that timestep's
    best level (0 count gives rate 0, flagged).  Returns None when any
    window event lacks a defined mid (degenerate stream head).
    """
    counters = counters if counters is not None else {}
    if any(a.mid_after is None or a.snap is None for a in window):
        counters["skipped_undefined_mid"] = counters.get("skipped_undefined_mid", 0) + 1
        return None
    width = 4 * depth + (3 if variant == "bench1" else 1)
    out = np.empty((len(window), width))
    if variant == "bench1":
        n_buy_mo = sum(1 for a in window if a.kind_code == EventKind.MARKET.value
                       and a.side_code == Side.BUY.value)
        n_sell_mo = sum(1 for a in window if a.kind_code == EventKind.MARKET.value
                        and a.side_code == Side.SELL.value)
    for t, a in enumerate(window):
        s = a.snap
        row = out[t]
        row[0:depth] = s.bid_prices
        row[depth:2 * depth] = s.bid_volumes
        row[2 * depth:3 * depth] = s.ask_prices
        row[3 * depth:4 * depth] = s.ask_volumes
        row[4 * depth] = a.mid_after
        if variant == "bench1":
            if a.bb_count == 0 or a.ba_count == 0:
                counters["degenerate_rates"] = counters.get("degenerate_rates", 0) + 1
            row[4 * depth + 1] = n_buy_mo / a.bb_count if a.bb_count else 0.0
            row[4 * depth + 2] = n_sell_mo / a.ba_count if a.ba_count else 0.0
    return out


# ---------------------------------------------------------------------------
# Dataset container
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    variant: str
    T: int
    S: int
    pair: str
    X: np.ndarray            # (N, T, F) float64, raw features
    y: np.ndarray            # (N,) uint8
    event_time: np.ndarray   # (N,) int64 ms, labelling-event timestamp
    split: np.ndarray        # (N,) int8, SPLIT_* codes
    window_last_ts: np.ndarray = None  # (N,) int64 ms, last window event (look-ahead audit)
    norm_stats: Optional[dict] = None   # {"mean": [...], "sd": [...]} per encoded channel
    split_ranges: Optional[dict] = None
    counters: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.y)

    def __post_init__(self):
        if self.window_last_ts is None:
            self.window_last_ts = np.zeros(len(self.y), dtype=np.int64)

    def subset(self, split_name: str) -> "Dataset":
        m = self.split == SPLIT_NAMES[split_name]
        return Dataset(self.variant, self.T, self.S, self.pair,
                       self.X[m], self.y[m], self.event_time[m], self.split[m],
                       self.window_last_ts[m], self.norm_stats, self.split_ranges,
                       dict(self.counters))

    def split_counts(self) -> dict:
        return {name: int(np.sum(self.split == code)) for name, code in SPLIT_NAMES.items()}


def build_datasets(events: Iterable[OrderEvent], T: int, S: int, pair: str = "SYN",
                   warm_until_ts: Optional[int] = None, warm_count: Optional[int] = None,
                   variants: tuple = VARIANTS) -> dict[str, Dataset]:
    """Single replay pass producing every requested variant on shared labels.

    Samples whose window lacks a defined mid are dropped from all
    variants so the variants stay index-aligned.
    """
    counters: dict = {}
    need_snap = any(v != "orderflow" for v in variants)
    if warm_until_ts is None and warm_count is None:
        warm_count = 0
    book, n_warm, rest, warm_last_ts = warm_up(iter(events), until_ts=warm_until_ts,
                                               until_count=warm_count)
    counters["warmup_events"] = n_warm

    rows = {v: [] for v in variants}
    labels, times, last_ts = [], [], []
    for label, ts, window in label_stream(rest, book, T,
                                          depth=S if need_snap else None,
                                          prev_ts=warm_last_ts, counters=counters):
        extracted = {}
        ok = True
        for v in variants:
            if v == "orderflow":
                extracted[v] = extract_orderflow(window)
            else:
                arr = extract_snapshot(window, S, v, counters)
                if arr is None:
                    ok = False
                    break
                extracted[v] = arr
        if not ok:
            continue
        for v in variants:
            rows[v].append(extracted[v])
        labels.append(label)
        times.append(ts)
        last_ts.append(window[-1].ts)

    counters["samples"] = len(labels)
    y = np.asarray(labels, dtype=np.uint8)
    t = np.asarray(times, dtype=np.int64)
    wlast = np.asarray(last_ts, dtype=np.int64)
    out = {}
    for v in variants:
        width = 6 if v == "orderflow" else 4 * S + (3 if v == "bench1" else 1)
        X = (np.stack(rows[v]) if rows[v] else np.empty((0, T, width)))
        out[v] = Dataset(v, T, S, pair, X, y.copy(), t.copy(),
                         np.full(len(y), SPLIT_NONE, dtype=np.int8),
                         wlast.copy(), counters=dict(counters))
    return out


def split_by_date(ds: Dataset, train_range, val_range, test_range) -> Dataset:
    """Tag samples by half-open [start_ms, end_ms) ranges; drop the rest.

    Ranges must be disjoint and ordered train < validation < test.
    """
    ranges = [("train", train_range), ("validation", val_range), ("test", test_range)]
    for name, (a, b) in ranges:
        if not a < b:
            raise UnorderedRanges(f"{name} range is empty or inverted")
    for (n1, r1), (n2, r2) in zip(ranges, ranges[1:]):
        if r1[0] < r2[1] and r2[0] < r1[1]:
            raise OverlappingRanges(f"{n1} and {n2} ranges overlap")
        if r1[1] > r2[0]:
            raise UnorderedRanges(f"{n1} range must precede {n2}")
    split = np.full(ds.n, SPLIT_NONE, dtype=np.int8)
    for name, (a, b) in ranges:
        split[(ds.event_time >= a) & (ds.event_time < b)] = SPLIT_NAMES[name]
    ds.split = split
    ds.split_ranges = {name: list(rng) for name, rng in ranges}
    ds.counters["dropped_outside_ranges"] = int(np.sum(split == SPLIT_NONE))
    return ds


# ---------------------------------------------------------------------------
# Encoder-side numeric transforms and train-split statistics
# ---------------------------------------------------------------------------


def transform_numeric(X: np.ndarray, variant: str, S: int) -> np.ndarray:
    """Map raw features to the numeric channels the model standardizes.

    orderflow: (..., 3) = [log1p dt, log size, log rel_price]
    bench*:    (..., 4S [+2]) = [px - mid, log1p vol, raw rates]
    """
    if variant == "orderflow":
        return np.stack([np.log1p(X[..., 0]), np.log(X[..., 2]), np.log(X[..., 5])], axis=-1)
    mid = X[..., 4 * S:4 * S + 1]
    bid_off = X[..., 0:S] - mid
    ask_off = X[..., 2 * S:3 * S] - mid
    parts = [bid_off, np.log1p(X[..., S:2 * S]), ask_off, np.log1p(X[..., 3 * S:4 * S])]
    if variant == "bench1":
        parts.append(X[..., 4 * S + 1:4 * S + 3])
    return np.concatenate(parts, axis=-1)


def compute_norm_stats(ds: Dataset) -> dict:
    """Per-channel mean/sd of the transformed numerics, train split only."""
    train = ds.X[ds.split == SPLIT_TRAIN]
    if len(train) == 0:
        raise MissingStats("no train samples to fit normalization on")
    z = transform_numeric(train, ds.variant, ds.S).reshape(-1, _numeric_width(ds.variant, ds.S))
    mean = z.mean(axis=0)
    sd = np.maximum(z.std(axis=0), 1e-8)
    ds.norm_stats = {"mean": mean.tolist(), "sd": sd.tolist()}
    return ds.norm_stats


def _numeric_width(variant: str, S: int) -> int:
    if variant == "orderflow":
        return 3
    return 4 * S + (2 if variant == "bench1" else 0)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_MAGIC = b"OFDS"
_VERSION = 1


def save_dataset(ds: Dataset, path) -> None:
    header = {
        "format": "lobflow-dataset", "version": _VERSION,
        "variant": ds.variant, "T": ds.T, "S": ds.S, "pair": ds.pair,
        "n": ds.n, "feature_width": int(ds.X.shape[2]) if ds.X.ndim == 3 else 0,
        "norm_stats": ds.norm_stats, "split_ranges": ds.split_ranges,
        "counters": ds.counters,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(ds.X, dtype=np.float64).tobytes())
        fh.write(np.ascontiguousarray(ds.y, dtype=np.uint8).tobytes())
        fh.write(np.ascontiguousarray(ds.event_time, dtype=np.int64).tobytes())
        fh.write(np.ascontiguousarray(ds.split, dtype=np.int8).tobytes())
        fh.write(np.ascontiguousarray(ds.window_last_ts, dtype=np.int64).tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise FeatureError(f"not a dataset file: bad magic {magic!r}")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise FeatureError(f"unsupported dataset version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        n, T, F = header["n"], header["T"], header["feature_width"]
        X = np.frombuffer(fh.read(n * T * F * 8), dtype=np.float64).reshape(n, T, F).copy()
        y = np.frombuffer(fh.read(n), dtype=np.uint8).copy()
        t = np.frombuffer(fh.read(n * 8), dtype=np.int64).copy()
        split = np.frombuffer(fh.read(n), dtype=np.int8).copy()
        wlast = np.frombuffer(fh.read(n * 8), dtype=np.int64).copy()
    return Dataset(header["variant"], T, header["S"], header["pair"], X, y, t, split,
                   wlast, header["norm_stats"], header["split_ranges"],
                   header["counters"] or {})


def export_text(ds: Dataset, path) -> None:
    """Lossless text form: header line, then one line per sample."""
    header = {"variant": ds.variant, "T": ds.T, "S": ds.S, "pair": ds.pair, "n": ds.n,
              "norm_stats": ds.norm_stats, "split_ranges": ds.split_ranges,
              "counters": ds.counters}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True))
        fh.write("\n")
        for i in range(ds.n):
            feats = " ".join(repr(float(v)) for v in ds.X[i].ravel())
            fh.write(f"{int(ds.y[i])} {int(ds.event_time[i])} {int(ds.window_last_ts[i])} "
                     f"{int(ds.split[i])} {feats}\n")


def dataset_digest(ds: Dataset) -> str:
    """Stable content hash used by determinism checks."""
    h = hashlib.sha256()
    h.update(json.dumps([ds.variant, ds.T, ds.S, ds.pair, ds.norm_stats, ds.split_ranges],
                        sort_keys=True).encode())
    for arr in (ds.X, ds.y, ds.event_time, ds.split, ds.window_last_ts):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()
