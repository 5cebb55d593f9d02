"""lobflow: limit order book reconstruction, order-flow features, and
recurrent mid-price direction models with evaluation statistics."""

from . import feed, features, lob, net, stats  # noqa: F401

__version__ = "0.1.0"
