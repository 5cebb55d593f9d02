"""Order event feed: wire format, parsing, replay, synthetic generation.

The wire format is newline-delimited JSON, one object per line, UTF-8,
with keys in this exact order and compact separators:

    {"ts":...,"seq":...,"kind":"limit","side":"buy","price":...,"size":...,"id":"..."}

`ts` is integer milliseconds since epoch, `seq` a strictly increasing
stream sequence number, `price` integer ticks (forbidden for market
orders, required otherwise), `size` a positive JSON number or a decimal
string.  Unknown keys are rejected.  Files carry the `.ofr` extension.

Lines written by :func:`serialize_event` are canonical; for canonical
lines ``serialize_event(parse_event(line)) == line`` byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Iterator, Optional


class FeedError(Exception):
    """Base class for feed-layer failures."""


class MalformedRecord(FeedError):
    """Line is not a single well-formed JSON object."""


class SchemaViolation(FeedError):
    """Record does not conform to the wire schema."""


class InvariantViolation(SchemaViolation):
    """Record parses but violates a declared event invariant."""


class OutOfOrder(FeedError):
    """Sequence number regression or timestamp decrease within a stream."""


class InvalidConfig(FeedError):
    """Generator configuration is unusable."""


class EventKind(Enum):
    LIMIT = 1
    MARKET = 2
    CANCEL = 3

    @property
    def wire(self) -> str:
        return self.name.lower()


class Side(Enum):
    BUY = 1
    SELL = 2

    @property
    def wire(self) -> str:
        return self.name.lower()


_KIND_FROM_WIRE = {k.wire: k for k in EventKind}
_SIDE_FROM_WIRE = {s.wire: s for s in Side}

_REQUIRED_KEYS = {"ts", "seq", "kind", "side", "size", "id"}
_ALL_KEYS = _REQUIRED_KEYS | {"price"}


@dataclass(frozen=True)
class OrderEvent:
    """One parsed exchange message."""

    timestamp_ms: int
    seq: int
    kind: EventKind
    side: Side
    price_ticks: Optional[int]  # None for market orders
    size: float
    order_id: str
    # Preserved only when `size` arrived as a decimal string, so that
    # serialization round-trips byte-exactly.
    size_str: Optional[str] = field(default=None, compare=False)


def _check(cond: bool, exc: type, msg: str) -> None:
    if not cond:
        raise exc(msg)


def parse_event(line: str) -> OrderEvent:
    """Parse and validate one wire-format line into an OrderEvent."""
    try:
        obj = json.loads(line)
    except ValueError as e:
        raise MalformedRecord(f"bad JSON: {e}") from e
    _check(isinstance(obj, dict), MalformedRecord, "record is not a JSON object")

    extra = set(obj) - _ALL_KEYS
    _check(not extra, SchemaViolation, f"unknown fields: {sorted(extra)}")
    missing = _REQUIRED_KEYS - set(obj)
    _check(not missing, SchemaViolation, f"missing fields: {sorted(missing)}")

    ts, seq = obj["ts"], obj["seq"]
    _check(isinstance(ts, int) and not isinstance(ts, bool), SchemaViolation, "ts must be an integer")
    _check(isinstance(seq, int) and not isinstance(seq, bool), SchemaViolation, "seq must be an integer")

    kind = _KIND_FROM_WIRE.get(obj["kind"])
    _check(kind is not None, SchemaViolation, f"bad kind {obj['kind']!r}")
    side = _SIDE_FROM_WIRE.get(obj["side"])
    _check(side is not None, SchemaViolation, f"bad side {obj['side']!r}")

    if kind is EventKind.MARKET:
        _check("price" not in obj, InvariantViolation, "market order must not carry a price")
        price = None
    else:
        _check("price" in obj, SchemaViolation, f"{kind.wire} order requires a price")
        price = obj["price"]
        _check(isinstance(price, int) and not isinstance(price, bool), SchemaViolation,
               "price must be an integer tick count")
        _check(price > 0, InvariantViolation, f"non-positive price {price}")

    raw_size = obj["size"]
    size_str = None
    if isinstance(raw_size, str):
        try:
            size = float(raw_size)
        except ValueError as e:
            raise SchemaViolation(f"bad size string {raw_size!r}") from e
        size_str = raw_size
    elif isinstance(raw_size, (int, float)) and not isinstance(raw_size, bool):
        size = float(raw_size)
    else:
        raise SchemaViolation(f"size must be number or string, got {type(raw_size).__name__}")
    _check(math.isfinite(size) and size > 0, InvariantViolation, f"size must be > 0, got {raw_size!r}")

    oid = obj["id"]
    _check(isinstance(oid, str), SchemaViolation, "id must be a string")

    return OrderEvent(ts, seq, kind, side, price, size, oid, size_str)


def serialize_event(ev: OrderEvent) -> str:
    """Render an event as one canonical wire line (no trailing newline)."""
    obj: dict = {"ts": ev.timestamp_ms, "seq": ev.seq, "kind": ev.kind.wire, "side": ev.side.wire}
    if ev.kind is not EventKind.MARKET:
        obj["price"] = ev.price_ticks
    obj["size"] = ev.size_str if ev.size_str is not None else ev.size
    obj["id"] = ev.order_id
    return json.dumps(obj, separators=(",", ":"))


@dataclass
class ReplaySummary:
    count: int = 0
    first_ts: Optional[int] = None
    last_ts: Optional[int] = None


def replay(lines: Iterable[str], sink: Callable[[OrderEvent], None]) -> ReplaySummary:
    """Parse lines in order and deliver each event to `sink` exactly once.

    Enforces the stream invariants (strictly increasing seq, non-decreasing
    timestamp).  Parse errors propagate annotated with the 1-based line
    number.
    """
    summary = ReplaySummary()
    prev_seq = None
    prev_ts = None
    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        try:
            ev = parse_event(line)
        except FeedError as e:
            raise type(e)(f"line {line_no}: {e}") from e
        if prev_seq is not None and ev.seq <= prev_seq:
            raise OutOfOrder(f"line {line_no}: seq {ev.seq} after {prev_seq}")
        if prev_ts is not None and ev.timestamp_ms < prev_ts:
            raise OutOfOrder(f"line {line_no}: timestamp {ev.timestamp_ms} before {prev_ts}")
        prev_seq, prev_ts = ev.seq, ev.timestamp_ms
        sink(ev)
        summary.count += 1
        if summary.first_ts is None:
            summary.first_ts = ev.timestamp_ms
        summary.last_ts = ev.timestamp_ms
    return summary


def iter_events(lines: Iterable[str]) -> Iterator[OrderEvent]:
    """Generator form of :func:`replay` (same validation, yields events)."""
    out: list = []
    prev_seq = None
    prev_ts = None
    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        try:
            ev = parse_event(line)
        except FeedError as e:
            raise type(e)(f"line {line_no}: {e}") from e
        if prev_seq is not None and ev.seq <= prev_seq:
            raise OutOfOrder(f"line {line_no}: seq {ev.seq} after {prev_seq}")
        if prev_ts is not None and ev.timestamp_ms < prev_ts:
            raise OutOfOrder(f"line {line_no}: timestamp {ev.timestamp_ms} before {prev_ts}")
        prev_seq, prev_ts = ev.seq, ev.timestamp_ms
        yield ev


def read_events(path) -> Iterator[OrderEvent]:
    """Stream validated events from an `.ofr` file."""
    with open(path, "r", encoding="utf-8") as fh:
        yield from iter_events(fh)


# ---------------------------------------------------------------------------
# Synthetic stream generation
# ---------------------------------------------------------------------------

PLANTED_LAST_EVENT_SIDE = "last-event-side"


@dataclass
class GeneratorConfig:
    """Settings for the synthetic order-flow generator.

    Sizes are emitted as dyadic rationals (multiples of 2^-6) so that
    aggregate float arithmetic downstream is exact.
    """

    n_events: int = 1000
    start_price: int = 10_000          # ticks
    start_ts: int = 1_510_000_000_000  # ms since epoch
    mean_gap_ms: int = 40
    min_gap_ms: int = 0
    # mix chosen so the resting population is stationary, not growing
    prop_limit: float = 0.5
    prop_market: float = 0.2
    prop_cancel: float = 0.3
    planted: Optional[str] = None      # None or PLANTED_LAST_EVENT_SIDE
    seed_levels: int = 12              # ladder depth planted at stream start

    def validate(self) -> None:
        if self.n_events < 0:
            raise InvalidConfig("n_events must be >= 0")
        if self.start_price <= 0:
            raise InvalidConfig("start_price must be > 0")
        if self.mean_gap_ms < 0:
            raise InvalidConfig("mean_gap_ms must be >= 0")
        if not 0 <= self.min_gap_ms <= max(2 * self.mean_gap_ms, 1):
            raise InvalidConfig("min_gap_ms must be in [0, 2*mean_gap_ms]")
        props = (self.prop_limit, self.prop_market, self.prop_cancel)
        if any(p < 0 for p in props):
            raise InvalidConfig("order-mix proportions must be >= 0")
        if abs(sum(props) - 1.0) > 1e-9:
            raise InvalidConfig(f"order-mix proportions sum to {sum(props)}, not 1")
        if self.planted not in (None, PLANTED_LAST_EVENT_SIDE):
            raise InvalidConfig(f"unknown planted rule {self.planted!r}")
        if self.seed_levels < 2:
            raise InvalidConfig("seed_levels must be >= 2")


def _dyadic_size(rng) -> float:
    # multiples of 1/64 in (0, 1]
    return (1 + int(rng.integers(0, 64))) / 64.0


def generate_synthetic(config: GeneratorConfig, seed: int) -> Iterator[str]:
    """Yield a deterministic synthetic `.ofr` stream, one line per event.

    In planted mode every mid-price move is a market order whose side
    equals the side of the immediately preceding (deep, passive) limit
    order, so downstream labels are predictable from the last window
    event.
    """
    import numpy as np

    from . import lob

    config.validate()
    rng = np.random.default_rng(seed)
    book = lob.OrderBook()

    state = {"seq": 0, "ts": config.start_ts}

    def emit(kind: EventKind, side: Side, price: Optional[int], size: float,
             order_id: Optional[str] = None) -> tuple[str, OrderEvent]:
        state["seq"] += 1
        state["ts"] += int(rng.integers(config.min_gap_ms, 2 * config.mean_gap_ms + 1))
        ev = OrderEvent(state["ts"], state["seq"], kind, side, price, size,
                        order_id if order_id is not None else f"o{state['seq']}")
        book.apply_event(ev)
        return serialize_event(ev), ev

    def seed_ladder():
        p = config.start_price
        lines = []
        for off in range(1, config.seed_levels + 1):
            lines.append(emit(EventKind.LIMIT, Side.SELL, p + off, _dyadic_size(rng))[0])
            lines.append(emit(EventKind.LIMIT, Side.BUY, p - off, _dyadic_size(rng))[0])
        return lines

    if config.planted == PLANTED_LAST_EVENT_SIDE:
        yield from _planted_stream(config, rng, book, emit, seed_ladder)
    else:
        yield from _noise_stream(config, rng, book, emit, seed_ladder)


def _planted_stream(config, rng, book, emit, seed_ladder):
    from . import lob

    emitted = 0
    for line in seed_ladder():
        if emitted >= config.n_events:
            return
        yield line
        emitted += 1

    while emitted < config.n_events:
        up = bool(rng.integers(0, 2))
        side = Side.BUY if up else Side.SELL
        bb, ba = book.best_bid(), book.best_ask()
        round_events = []
        # replenish both sides deep so the mover always finds liquidity behind best
        round_events.append((EventKind.LIMIT, Side.SELL, ba + 3 + int(rng.integers(0, 6)), _dyadic_size(rng)))
        round_events.append((EventKind.LIMIT, Side.BUY, max(1, bb - 3 - int(rng.integers(0, 6))), _dyadic_size(rng)))
        # signal: deep passive order on the planted side; never moves the mid
        if up:
            round_events.append((EventKind.LIMIT, Side.BUY, max(1, book.best_bid() - 2 - int(rng.integers(0, 5))), _dyadic_size(rng)))
        else:
            round_events.append((EventKind.LIMIT, Side.SELL, book.best_ask() + 2 + int(rng.integers(0, 5)), _dyadic_size(rng)))
        for kind, s, price, size in round_events:
            yield emit(kind, s, price, size)[0]
            emitted += 1
            if emitted >= config.n_events:
                return
        # mover: the one event per round that moves the mid, in direction `up`.
        # Wide spreads are re-tightened with an inward quote on the planted
        # side (same label semantics, keeps bests anchored); otherwise a
        # market order consumes the whole opposing best level.
        bb, ba = book.best_bid(), book.best_ask()
        if ba - bb >= 4:
            if up:
                price = min(bb + 1 + int(rng.integers(0, 3)), ba - 1)
                yield emit(EventKind.LIMIT, Side.BUY, price, _dyadic_size(rng))[0]
            else:
                price = max(ba - 1 - int(rng.integers(0, 3)), bb + 1)
                yield emit(EventKind.LIMIT, Side.SELL, price, _dyadic_size(rng))[0]
        else:
            opp_best = ba if up else bb
            level_size = book.level_size(Side.SELL if up else Side.BUY, opp_best)
            yield emit(EventKind.MARKET, side, None, level_size)[0]
        emitted += 1


def _noise_stream(config, rng, book, emit, seed_ladder):
    emitted = 0
    for line in seed_ladder():
        if emitted >= config.n_events:
            return
        yield line
        emitted += 1

    live: list[str] = list(book.resting)
    while emitted < config.n_events:
        u = rng.random()
        side = Side.BUY if rng.integers(0, 2) == 0 else Side.SELL
        if u < config.prop_cancel and live:
            # cancel a random live order, fully or by half
            idx = int(rng.integers(0, len(live)))
            oid = live[idx]
            order = book.resting.get(oid)
            if order is None:
                live.pop(idx)
                continue
            full = rng.random() < 0.9 or order.remaining < 1e-9
            size = order.remaining if full else order.remaining / 2.0
            line, _ = emit(EventKind.CANCEL, order.side, order.price_ticks, size, order_id=oid)
            if full:
                live.pop(idx)
            yield line
            emitted += 1
        elif u < config.prop_cancel + config.prop_market:
            opp = book.best_ask() if side is Side.BUY else book.best_bid()
            if opp is None:
                continue
            line, _ = emit(EventKind.MARKET, side, None, _dyadic_size(rng))
            live = [oid for oid in live if oid in book.resting]
            yield line
            emitted += 1
        else:
            if side is Side.BUY:
                ref = book.best_bid() or (config.start_price - 2)
                price = max(1, ref - int(rng.integers(-2, 8)))
            else:
                ref = book.best_ask() or (config.start_price + 2)
                price = max(1, ref + int(rng.integers(-2, 8)))
            line, ev = emit(EventKind.LIMIT, side, price, _dyadic_size(rng))
            if ev.order_id in book.resting:
                live.append(ev.order_id)
            live = [oid for oid in live if oid in book.resting]
            yield line
            emitted += 1


def write_stream(path, config: GeneratorConfig, seed: int) -> int:
    """Generate a synthetic stream to `path`; returns the event count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for line in generate_synthetic(config, seed):
            fh.write(line)
            fh.write("\n")
            n += 1
    return n
