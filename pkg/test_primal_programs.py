from fractions import Fraction

import pytest

from config import Settings
from lp_solver import Relation, solve
from market_model import Claim, derive_delayed_view
from primal_programs import (
    HedgeError,
    HedgingStrategy,
    PriceQuote,
    audit_hedge,
    build_buyer_delayed_lp,
    build_seller_delayed_lp,
    build_seller_full_lp,
    delayed_rebalancing,
    quote_price,
)

EXACT = Settings(mode="exact")


def price(m, b, agent="seller", info="delayed"):
    return quote_price(m, None, b, agent, info, settings=EXACT).price


def test_binomial_delayed_program_shape(binomial, binomial_view, binomial_call):
    lp = build_seller_delayed_lp(binomial, binomial_view, binomial_call)
    # kappa plus two holdings at each of the eight G-vertices before T
    assert len(lp.variables) == 17
    assert len(lp.constraints) == 1 + 16 + len(delayed_rebalancing(binomial, binomial_view))
    assert len(delayed_rebalancing(binomial, binomial_view)) == 2 + 4 + 8
    assert lp.name == "seller delayed"
    assert build_buyer_delayed_lp(binomial, binomial_view, binomial_call).sense == "max"


# Seller rows of the binomial call program, written out by hand. The G-vertex
# "G<t>:<x>" trades at time t knowing only the F-vertex x at t-1.
SELLER_ROWS = {
    "budget": ({"kappa": 1, "H[G0:root][0]": -1, "H[G0:root][1]": -4}, Relation.GE, 0),
    "hedge[uuud]": ({"H[G3:uu][0]": 1, "H[G3:uu][1]": 16}, Relation.GE, 12),
    "hedge[uddd]": ({"H[G3:ud][0]": 1, "H[G3:ud][1]": 1}, Relation.GE, 0),
    # t = 1: the first rebalance happens before the root move is known
    "rebalance[G1:root][u]": (
        {"H[G0:root][0]": 1, "H[G0:root][1]": 8, "H[G1:root][0]": -1, "H[G1:root][1]": -8}, Relation.EQ, 0,
    ),
    "rebalance[G1:root][d]": (
        {"H[G0:root][0]": 1, "H[G0:root][1]": 2, "H[G1:root][0]": -1, "H[G1:root][1]": -2}, Relation.EQ, 0,
    ),
    # t = T-2
    "rebalance[G2:u][uu]": (
        {"H[G1:root][0]": 1, "H[G1:root][1]": 16, "H[G2:u][0]": -1, "H[G2:u][1]": -16}, Relation.EQ, 0,
    ),
    "rebalance[G2:d][dd]": (
        {"H[G1:root][0]": 1, "H[G1:root][1]": 1, "H[G2:d][0]": -1, "H[G2:d][1]": -1}, Relation.EQ, 0,
    ),
    # t = T-1
    "rebalance[G3:ud][udd]": (
        {"H[G2:u][0]": 1, "H[G2:u][1]": 2, "H[G3:ud][0]": -1, "H[G3:ud][1]": -2}, Relation.EQ, 0,
    ),
    "rebalance[G3:dd][ddd]": (
        {"H[G2:d][0]": 1, "H[G2:d][1]": Fraction(1, 2), "H[G3:dd][0]": -1, "H[G3:dd][1]": Fraction(-1, 2)},
        Relation.EQ, 0,
    ),
}


def test_delayed_program_coefficients_match_hand_built_rows(binomial, binomial_view, binomial_call):
    rows = {c.name: c for c in build_seller_delayed_lp(binomial, binomial_view, binomial_call).constraints}
    for name, (coeffs, relation, rhs) in SELLER_ROWS.items():
        assert rows[name].coeffs == coeffs, name
        assert rows[name].relation == relation, name
        assert rows[name].rhs == rhs, name
    families = [name.split("[")[0] for name in rows]
    assert (families.count("budget"), families.count("hedge"), families.count("rebalance")) == (1, 16, 14)


def test_buyer_rows_mirror_the_seller_rows(binomial, binomial_view, binomial_call):
    rows = {c.name: c for c in build_buyer_delayed_lp(binomial, binomial_view, binomial_call).constraints}
    budget = rows["budget"]
    assert budget.relation == Relation.LE
    assert budget.coeffs == {"kappa": 1, "H[G0:root][0]": 1, "H[G0:root][1]": 4}
    assert rows["hedge[uuud]"].rhs == -12
    assert rows["hedge[uuud]"].relation == Relation.GE
    seller_coeffs = SELLER_ROWS["rebalance[G2:u][uu]"][0]
    assert rows["rebalance[G2:u][uu]"].coeffs == {k: -a for k, a in seller_coeffs.items()}


def test_binomial_call_prices(binomial, binomial_call):
    assert price(binomial, binomial_call) == Fraction(60, 17)
    assert price(binomial, binomial_call, info="full") == Fraction(52, 27)
    assert price(binomial, binomial_call, agent="buyer", info="full") == Fraction(52, 27)
    assert price(binomial, binomial_call, agent="buyer") == 0


@pytest.mark.parametrize("market", ["binomial", "two_period", "chain"])
def test_constant_claim_costs_its_value(market, request):
    m = request.getfixturevalue(market)
    b = Claim.constant(m, 3)
    for agent in ("seller", "buyer"):
        for info in ("delayed", "full"):
            assert price(m, b, agent, info) == 3


def test_single_scenario_chain(chain, chain_claim):
    quote = quote_price(chain, None, chain_claim, settings=EXACT)
    assert quote.price == 5
    assert price(chain, chain_claim, agent="buyer") == 5


def test_delayed_information_costs_more(two_period, two_period_call, binomial, binomial_call):
    for m, b in ((two_period, two_period_call), (binomial, binomial_call)):
        assert price(m, b, info="full") <= price(m, b)
        assert price(m, b, agent="buyer") <= price(m, b, agent="buyer", info="full")


def test_seller_price_is_monotone_homogeneous_subadditive(two_period, two_period_call):
    b = two_period_call
    other = Claim.call(two_period, 9)
    base = price(two_period, b)
    assert price(two_period, b + Claim.constant(two_period, 1)) == base + 1
    assert price(two_period, b.scaled(2)) == 2 * base
    assert price(two_period, b + other) <= base + price(two_period, other)
    assert price(two_period, b) <= price(two_period, b + other)


def test_optimal_hedge_passes_audit(binomial, binomial_view, binomial_call):
    quote = quote_price(binomial, binomial_view, binomial_call, settings=EXACT)
    assert set(quote.strategy.portfolios) == set(
        v for t in range(binomial.horizon) for v in binomial_view.vertices_at(t)
    )
    report = audit_hedge(binomial, binomial_view, binomial_call, quote)
    assert report.passed
    assert report.max_violation == 0
    assert all(s >= 0 for s in report.surplus.values())


def test_constant_claim_hedge_has_no_surplus(binomial):
    b = Claim.constant(binomial, 3)
    quote = quote_price(binomial, None, b, settings=EXACT)
    report = audit_hedge(binomial, None, b, quote)
    assert set(report.surplus.values()) == {0}


def test_perturbed_hedge_is_caught(binomial, binomial_view, binomial_call):
    quote = quote_price(binomial, binomial_view, binomial_call, settings=EXACT)
    root = binomial_view.root
    portfolios = dict(quote.strategy.portfolios)
    bond, stock = portfolios[root]
    portfolios[root] = (bond, stock + 1)
    broken = quote.model_copy(update={"strategy": HedgingStrategy(info="delayed", portfolios=portfolios)})
    report = audit_hedge(binomial, binomial_view, binomial_call, broken)
    assert not report.passed
    assert report.violated


def test_audit_rejects_the_wrong_tree(binomial, binomial_call):
    full = quote_price(binomial, None, binomial_call, info="full", settings=EXACT)
    mislabeled = full.model_copy(update={"info": "delayed"})
    with pytest.raises(HedgeError, match="wrong tree"):
        audit_hedge(binomial, None, binomial_call, mislabeled)
    with pytest.raises(HedgeError):
        audit_hedge(binomial, None, binomial_call, PriceQuote(
            agent="seller", info="delayed", status="infeasible", strategy=HedgingStrategy()
        ))


def test_full_program_matches_textbook_replication(two_period, two_period_call):
    sol = solve(build_seller_full_lp(two_period, two_period_call), settings=EXACT)
    assert sol.status == "optimal"
    assert sol.objective == price(two_period, two_period_call, info="full")


def test_dominant_market_seller_program_is_unbounded(dominant):
    b = Claim.constant(dominant, 1)
    g = derive_delayed_view(dominant)
    assert solve(build_seller_delayed_lp(dominant, g, b), settings=EXACT).status == "unbounded"
