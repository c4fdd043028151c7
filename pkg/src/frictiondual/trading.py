"""Self-financing strategies, liquidation values and attainable claims.

A strategy is a nonnegative (buy, sell) pair of share counts per node.
Holdings follow by the exact self-financing recursion: buys are paid at
the ask price, sales are credited at the bid price, and the riskless leg
absorbs the difference.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .tree import MarketSpec


class TradeError(ValueError):
    """Invalid trade plan (negative quantity or wrong shape)."""


@dataclass(frozen=True)
class Strategy:
    """Per-node trades and resulting holdings.

    ``buy``/``sell`` are indexed by node id (leaves may trade too, which
    is never optimal but remains representable).  ``phi0``/``phi1`` are
    the post-trade holdings at each node.
    """

    market: MarketSpec
    initial_cash: float
    buy: np.ndarray
    sell: np.ndarray
    phi0: np.ndarray
    phi1: np.ndarray

    def variation(self, node: int) -> float:
        """Total traded volume |buys| + |sells| along the path to ``node``."""
        path = self.market.tree.path_to_root(node)
        return float(self.buy[path].sum() + self.sell[path].sum())


def roll_forward(market: MarketSpec, x: float, buy, sell) -> Strategy:
    """Apply a trade plan from initial holdings (x, 0) down the tree.

    ``buy``/``sell`` are arrays indexed by node id; entries at leaves are
    allowed.  The self-financing recursion holds with equality.
    """
    tree = market.tree
    n = tree.n_nodes
    buy = np.asarray(buy, dtype=float)
    sell = np.asarray(sell, dtype=float)
    if buy.shape != (n,) or sell.shape != (n,):
        raise TradeError("trade plan must have one (buy, sell) pair per node")
    if np.any(buy < 0.0) or np.any(sell < 0.0):
        raise TradeError("trade quantities must be nonnegative")

    phi0 = np.empty(n)
    phi1 = np.empty(n)
    order = np.argsort(tree.time, kind="stable")
    ask = market.ask_price
    bid = market.bid_price
    for i in order:
        p = tree.parent[i]
        cash_prev = x if p < 0 else phi0[p]
        pos_prev = 0.0 if p < 0 else phi1[p]
        phi0[i] = cash_prev - ask[i] * buy[i] + bid[i] * sell[i]
        phi1[i] = pos_prev + buy[i] - sell[i]
    return Strategy(market=market, initial_cash=float(x), buy=buy, sell=sell,
                    phi0=phi0, phi1=phi1)


def liquidation_value(market: MarketSpec, strategy: Strategy, node: int) -> float:
    """Cash value of closing the stock position at the node's bid/ask."""
    pos = strategy.phi1[node]
    s = market.ask_price[node]
    long_leg = max(pos, 0.0) * (1.0 - market.lam) * s
    short_leg = max(-pos, 0.0) * s
    return float(strategy.phi0[node] + long_leg - short_leg)


def liquidation_values(market: MarketSpec, strategy: Strategy) -> np.ndarray:
    """Liquidation value at every node, indexed by node id."""
    pos = strategy.phi1
    s = market.ask_price
    return strategy.phi0 + np.maximum(pos, 0.0) * (1.0 - market.lam) * s \
        - np.maximum(-pos, 0.0) * s


def check_admissible(market: MarketSpec, strategy: Strategy, bound: float):
    """True iff the liquidation value stays above -bound at every node.

    Returns ``(ok, worst_node)`` where ``worst_node`` attains the minimal
    liquidation value.
    """
    if bound < 0.0:
        raise TradeError("admissibility bound must be nonnegative")
    vals = liquidation_values(market, strategy)
    worst = int(np.argmin(vals))
    return bool(vals[worst] >= -bound), worst


def terminal_claim(market: MarketSpec, strategy: Strategy) -> np.ndarray:
    """Per-leaf liquidation value at the horizon, aligned with ``tree.leaves``.

    This is the attainable claim generated by the strategy from its
    initial cash.
    """
    vals = liquidation_values(market, strategy)
    return vals[market.tree.leaves]


def net_trades(buy, sell):
    """Cancel simultaneous buy/sell volume at each node.

    Netting never decreases any cash holding: a matched buy/sell pair
    burns the spread both ways.
    """
    buy = np.asarray(buy, dtype=float)
    sell = np.asarray(sell, dtype=float)
    matched = np.minimum(buy, sell)
    return buy - matched, sell - matched


def has_simultaneous_trades(buy, sell, tol: float = 0.0) -> bool:
    return bool(np.any(np.minimum(buy, sell) > tol))


def default_admissibility_bound(market: MarketSpec, x: float) -> float:
    """Loose solve-level bound: every sensible strategy stays above it."""
    return 10.0 * (abs(x) + market.endowment_bound + float(market.ask_price.max()))


def export_strategy_csv(market: MarketSpec, strategy: Strategy, path) -> None:
    """Write per-node rows (node_id, buy, sell, phi0, phi1, vliq)."""
    vals = liquidation_values(market, strategy)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "buy", "sell", "phi0", "phi1", "vliq"])
        for i in range(market.tree.n_nodes):
            writer.writerow([
                i,
                repr(float(strategy.buy[i])),
                repr(float(strategy.sell[i])),
                repr(float(strategy.phi0[i])),
                repr(float(strategy.phi1[i])),
                repr(float(vals[i])),
            ])
