"""Shadow prices: frictionless markets hidden inside the bid-ask spread.

The ratio of the two dual-optimizer components defines a price process
lying in the spread.  Trading it without friction achieves exactly the
frictional value, and the frictionless dual density lifts back to a
frictional dual optimizer.  This module builds that price, solves the
frictionless problems on it, and verifies both directions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import utility as ut
from .duality import DualSolution, SolveReport, solve_dual, solve_primal
from .polytope import PriceSystem, build_polytope
from .tree import MarketSpec

Z0_SUPPORT_EPS = 1e-12
CLASS_RTOL = 1e-7
TRADE_EPS = 1e-7
DIRECTION_TOL = 1e-7


class ShadowConstructionError(RuntimeError):
    """Shadow price could not be built or used where required."""


@dataclass(frozen=True)
class ShadowPrice:
    """Per-node price in the spread with bid/ask attainment flags.

    Nodes where the dual density vanishes get the ask price by
    convention and are flagged ``undefined``; they are excluded from
    direction checks.
    """

    market: MarketSpec
    value: np.ndarray
    at_ask: np.ndarray
    at_bid: np.ndarray
    undefined: np.ndarray

    def classification(self) -> list:
        out = []
        for k in range(self.value.size):
            if self.undefined[k]:
                out.append("undefined")
            elif self.at_ask[k]:
                out.append("at_ask")
            elif self.at_bid[k]:
                out.append("at_bid")
            else:
                out.append("interior")
        return out

    def as_market(self, endowment=None) -> MarketSpec:
        """Zero-spread market trading at the shadow price."""
        endow = self.market.endowment if endowment is None else np.asarray(endowment, float)
        return MarketSpec(tree=self.market.tree, ask_price=self.value,
                          lam=0.0, endowment=endow)


@dataclass
class FrictionlessSolve:
    """Optimal position and both values of the zero-spread problem."""

    position: np.ndarray        # per node, holding carried out of the node
    value: float                # u(x; shadow)
    dual_value: float           # v(y; shadow)
    dual: DualSolution
    diagnostics: dict


def construct_shadow(market: MarketSpec, dual_opt: PriceSystem) -> ShadowPrice:
    """Ratio of the dual-optimizer components, clipped to the spread.

    Where the density exceeds ``1e-12`` the ratio is taken literally
    (and asserted to lie in the spread up to rounding); elsewhere the
    ask price stands in and the node is flagged.
    """
    ask = market.ask_price
    bid = market.bid_price
    n = ask.size
    value = np.empty(n)
    undefined = np.zeros(n, dtype=bool)
    for k in range(n):
        if dual_opt.z0[k] > Z0_SUPPORT_EPS:
            ratio = dual_opt.z1[k] / dual_opt.z0[k]
            if ratio < bid[k] - 1e-9 * ask[k] or ratio > ask[k] * (1.0 + 1e-9):
                raise ShadowConstructionError(
                    f"ratio {ratio} outside spread [{bid[k]}, {ask[k]}] at node {k}"
                )
            value[k] = min(max(ratio, bid[k]), ask[k])
        else:
            value[k] = ask[k]
            undefined[k] = True
    tol = CLASS_RTOL * ask
    return ShadowPrice(
        market=market, value=value,
        at_ask=(np.abs(value - ask) <= tol) & ~undefined,
        at_bid=(np.abs(value - bid) <= tol) & ~undefined,
        undefined=undefined,
    )


def solve_frictionless(shadow_market: MarketSpec, spec: ut.UtilitySpec, x: float,
                       y: Optional[float] = None,
                       include_endowment: bool = True) -> FrictionlessSolve:
    """Primal and dual zero-spread solves at a given price process.

    ``shadow_market`` must carry zero spread; diverging primal iterates
    are reported as an unbounded problem (frictionless arbitrage in the
    supplied price).
    """
    if shadow_market.lam != 0.0:
        raise ShadowConstructionError("frictionless solve needs a zero-spread market")
    try:
        primal = solve_primal(shadow_market, spec, x, include_endowment)
    except RuntimeError as exc:
        if "diverging" in str(exc) or "unbounded" in str(exc):
            raise ShadowConstructionError(
                "frictionless problem unbounded: the price admits arbitrage"
            ) from exc
        raise
    if y is None:
        y = ut.eval_u_prime(spec, 1.0)  # placeholder scale; dual still convex
    dual = solve_dual(shadow_market, spec, y, include_endowment)
    return FrictionlessSolve(
        position=primal.strategy.phi1.copy(),
        value=primal.value,
        dual_value=dual.value,
        dual=dual,
        diagnostics={"primal": primal.diagnostics, "dual": dual.diagnostics},
    )


def position_map_rank(shadow_market: MarketSpec):
    """Rank of the map from positions to terminal wealth increments.

    Full column rank means the frictionless optimizer is unique, which
    gates the strategy-coincidence check.
    """
    tree = shadow_market.tree
    internal = tree.internal_nodes()
    K, L = internal.size, tree.n_leaves
    pos = {int(n): k for k, n in enumerate(internal)}
    S = shadow_market.ask_price
    D = np.zeros((L, K))
    for li, leaf in enumerate(tree.leaves):
        path = tree.path_to_root(int(leaf))
        for child, node in zip(path[:-1], path[1:]):
            D[li, pos[node]] = S[child] - S[node]
    return int(np.linalg.matrix_rank(D, tol=1e-9 * max(1.0, float(np.abs(D).max())))), K


def verify_shadow(report: SolveReport, shadow: ShadowPrice,
                  frictionless: FrictionlessSolve) -> dict:
    """Verification record for the shadow-price properties.

    (a) value match u(x; shadow) vs u(x); (b) dual match at yhat;
    (c) trade directions land on the attained side of the spread,
    enforced through the complementary-slackness products
    buy * (ask - shadow) and sell * (shadow - bid) normalized by the ask
    -- the statement that stays well posed at nodes where the optimizer
    is flat and micro-trades below solver resolution are meaningless;
    (d) position coincidence where applicable.
    """
    market = report.market
    ask, bid = market.ask_price, market.bid_price
    buy, sell = report.strategy.buy, report.strategy.sell
    direction_violations = []
    for k in range(market.tree.n_nodes):
        if shadow.undefined[k]:
            continue
        comp_buy = buy[k] * (ask[k] - shadow.value[k]) / (1.0 + ask[k])
        comp_sell = sell[k] * (shadow.value[k] - bid[k]) / (1.0 + ask[k])
        if buy[k] > TRADE_EPS and not shadow.at_ask[k] and comp_buy > DIRECTION_TOL:
            direction_violations.append({"node": int(k), "side": "buy",
                                         "volume": float(buy[k]),
                                         "complementarity": float(comp_buy),
                                         "shadow": float(shadow.value[k])})
        if sell[k] > TRADE_EPS and not shadow.at_bid[k] and comp_sell > DIRECTION_TOL:
            direction_violations.append({"node": int(k), "side": "sell",
                                         "volume": float(sell[k]),
                                         "complementarity": float(comp_sell),
                                         "shadow": float(shadow.value[k])})

    rank, K = position_map_rank(shadow.as_market())
    unique = rank == K
    position_gap = None
    if unique and not direction_violations:
        diff = np.abs(frictionless.position - report.strategy.phi1)
        position_gap = float(diff.max()) if diff.size else 0.0

    return {
        "value_gap": abs(frictionless.value - report.value),
        "dual_gap": abs(frictionless.dual_value - report.dual_value),
        "direction_violations": direction_violations,
        "position_unique": unique,
        "position_gap": position_gap,
        "undefined_nodes": [int(k) for k in np.flatnonzero(shadow.undefined)],
    }


def shadow_from_dual_roundtrip(report: SolveReport, shadow: ShadowPrice) -> dict:
    """Lift the frictionless dual minimizer back into the frictional cone.

    Solving the zero-spread dual on the shadow price at yhat and pairing
    its density with density-times-price must land inside the original
    polytope and reproduce the frictional dual value.
    """
    market = report.market
    sm = shadow.as_market()
    dual = solve_dual(sm, report.utility, report.yhat,
                      include_endowment=report.include_endowment)
    tree = market.tree
    L = tree.n_leaves
    z0_leaf = dual.leaf_vars[:L]
    shat_leaf = shadow.value[tree.leaves]
    lifted = np.concatenate([z0_leaf, z0_leaf * shat_leaf])
    poly = build_polytope(market)
    violation = poly.max_violation(lifted)
    value_gap = abs(dual.value - report.dual_value)
    return {
        "polytope_violation": violation,
        "dual_value_gap": value_gap,
        "lifted_leaf_vars": lifted,
        "member": bool(violation <= 1e-8),
        "matches_dual_value": bool(value_gap <= 1e-6 * (1.0 + abs(report.dual_value))),
    }
