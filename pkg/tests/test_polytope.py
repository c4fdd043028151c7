import numpy as np
import pytest

from frictiondual.polytope import (
    PolytopeInfeasibleError,
    build_polytope,
    check_cps,
    conditional_expectation_matrix,
    enumerate_vertices,
    sample_polytope,
)
from frictiondual.tree import EventTree, MarketSpec, path_measure


def crossing_binomial(lam=0.01):
    """Both children strictly above the root ask: no price system can be
    a martingale-like selection inside the spread."""
    tree = EventTree(parent=[-1, 0, 0], time=[0, 1, 1], cond_prob=[1.0, 0.5, 0.5])
    return MarketSpec(tree=tree, ask_price=[100.0, 120.0, 110.0], lam=lam,
                      endowment=[0.0, 0.0])


def test_conditional_expectation_matrix(two_period_market):
    W = conditional_expectation_matrix(two_period_market)
    tree = two_period_market.tree
    # conditional expectation of the constant 1 is 1 at every node, and
    # only descendant leaves carry weight
    ones = np.ones(tree.n_leaves)
    assert np.allclose(W @ ones, np.ones(tree.n_nodes))
    for node in tree.internal_nodes():
        for k, leaf in enumerate(tree.leaves):
            if node not in tree.path_to_root(int(leaf)):
                assert W[node, k] == 0.0


def test_polytope_contains_martingale_density(martingale_binomial):
    poly = build_polytope(martingale_binomial)
    # z0 == 1 at both leaves, z1 = z0 * S_T is inside the cone because the
    # ask process is already a martingale
    z = np.array([1.0, 1.0, 120.0, 80.0])
    assert poly.max_violation(z) <= 1e-12
    ps = poly.price_system(z)
    assert np.allclose(ps.stilde()[[1, 2]], [120.0, 80.0])


def test_price_system_interior_values(two_period_market):
    poly = build_polytope(two_period_market)
    for ps in sample_polytope(poly, 5, seed=1):
        tree = two_period_market.tree
        pm = path_measure(tree)
        # interior node values are the conditional expectations of the
        # leaf values: the density is a martingale in both coordinates
        for node in tree.internal_nodes():
            kids = tree.children[node]
            z0_kids = sum(tree.cond_prob[k] * ps.z0[k] for k in kids)
            assert ps.z0[node] == pytest.approx(z0_kids, abs=1e-8)
        # and it stays inside the bid-ask cone
        mask = ps.z0 > 1e-10
        ratio = ps.z1[mask] / ps.z0[mask]
        s = two_period_market.ask_price[mask]
        assert np.all(ratio <= s * (1 + 1e-8))
        assert np.all(ratio >= s * (1 - two_period_market.lam) * (1 - 1e-8))


def test_root_normalization(two_period_market):
    poly = build_polytope(two_period_market)
    for ps in sample_polytope(poly, 3, seed=5):
        assert ps.z0[0] == pytest.approx(1.0, abs=1e-9)


def test_check_cps_positive(martingale_binomial, two_period_market):
    for market in (martingale_binomial, two_period_market):
        v = check_cps(market)
        assert v.exists
        assert v.delta > 1e-9
        assert v.witness is not None
        assert v.certificate is None
        # the witness is strictly positive on every node
        assert np.all(v.witness.z0 > 0)


def test_check_cps_negative_with_certificate():
    market = crossing_binomial(lam=0.01)
    v = check_cps(market)
    assert not v.exists
    assert v.witness is None
    assert v.certificate is not None
    signs = v.trade_signs()
    assert signs is not None
    # the certificate describes a buy-at-root arbitrage
    assert signs[0] == 1


def test_check_cps_widening_spread_restores_existence():
    market = crossing_binomial(lam=0.01)
    assert not check_cps(market).exists
    # at 15% spread the cone is wide enough again: 120*0.85 = 102 > 100
    assert check_cps(market, mu=0.15).exists


def test_check_cps_rejects_bad_spread(martingale_binomial):
    with pytest.raises(ValueError):
        check_cps(martingale_binomial, mu=0.0)
    with pytest.raises(ValueError):
        check_cps(martingale_binomial, mu=1.0)


def test_sample_polytope_deterministic(two_period_market):
    poly = build_polytope(two_period_market)
    a = sample_polytope(poly, 4, seed=9)
    b = sample_polytope(poly, 4, seed=9)
    for pa, pb in zip(a, b):
        assert pa.z0.tobytes() == pb.z0.tobytes()


def test_sample_empty_polytope_raises():
    market = crossing_binomial(lam=0.001)
    poly = build_polytope(market)
    with pytest.raises(PolytopeInfeasibleError):
        sample_polytope(poly, 3)


def test_enumerate_vertices_binomial(martingale_binomial):
    poly = build_polytope(martingale_binomial)
    V = enumerate_vertices(poly)
    assert V is not None
    # every vertex satisfies the constraints and the set contains the
    # extreme densities where one leaf carries almost all the mass
    for v in V:
        assert poly.max_violation(v) <= 1e-7
    z0_up = V[:, 0]
    L = martingale_binomial.tree.n_leaves
    assert L == 2
    assert z0_up.max() > 1.0
    assert z0_up.min() < 1.0


def test_enumerate_vertices_one_period_closed_form():
    # lam=0: z1 = z0 * S and E[z0 S_1] = S_0 pin the density uniquely up
    # to the binomial martingale weights q = (S0 - Sd) / (Su - Sd)
    tree = EventTree(parent=[-1, 0, 0], time=[0, 1, 1], cond_prob=[1.0, 0.5, 0.5])
    market = MarketSpec(tree=tree, ask_price=[100.0, 120.0, 80.0], lam=0.0,
                        endowment=[0.0, 0.0])
    poly = build_polytope(market)
    V = enumerate_vertices(poly)
    assert V is not None
    assert V.shape[0] == 1
    q = (100.0 - 80.0) / (120.0 - 80.0)
    assert V[0, 0] == pytest.approx(q / 0.5, abs=1e-8)
    assert V[0, 1] == pytest.approx((1 - q) / 0.5, abs=1e-8)


def test_enumerate_vertices_empty_returns_none():
    market = crossing_binomial(lam=0.001)
    poly = build_polytope(market)
    assert enumerate_vertices(poly) is None
