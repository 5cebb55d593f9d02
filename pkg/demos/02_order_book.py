"""Demo: limit order book reconstruction from a replayed stream.

Builds the book event by event, then inspects best bid/ask, the exact
rational mid-price, relative prices, fixed-depth snapshots, and the
cross-check against the naive reference implementation.
"""

from lobflow import feed, lob, oracle
from lobflow.feed import Side

cfg = feed.GeneratorConfig(n_events=5000)
book = lob.OrderBook()
ref = oracle.ReferenceBook()

executed = 0.0
for ev in feed.iter_events(feed.generate_synthetic(cfg, seed=7)):
    delta = book.apply_event(ev)
    ref.apply(ev)
    executed += delta.executed

print("best bid / best ask:", book.best_bid(), "/", book.best_ask())
print("mid-price (exact rational ticks):", book.mid_price())
print("total executed size:", round(executed, 6))
print("market orders dropped for lack of liquidity:", book.dropped_market_events)

# relative price: plus-one tick distance from the same-side best
bb = book.best_bid()
print(f"\nrelative price of a buy at best ({bb}):",
      book.relative_price(Side.BUY, bb))
print(f"relative price of a buy 3 ticks below:",
      book.relative_price(Side.BUY, bb - 3))

# fixed-depth snapshot, shallow sides padded with zero volume
snap = book.snapshot(5)
print("\ntop-5 snapshot:")
for p, v in zip(snap.bid_prices, snap.bid_volumes):
    print(f"  bid {p}  {v:.6g}")
for p, v in zip(snap.ask_prices, snap.ask_volumes):
    print(f"  ask {p}  {v:.6g}")

# the whole book state matches a naive full-scan reference exactly
print("\nfast book vs naive reference:",
      "identical" if oracle.compare_books(book, ref) is None else "MISMATCH")
