"""Super- and sub-hedging LPs under delayed and full information.

Seller programs minimize the initial capital kappa, buyer programs maximize
the price they can finance. Portfolios are free vectors in R^{N+1}; under
delayed information they are indexed by G-vertices, under full information
by F-vertices.

Self-financing rows are written so that the solver's multipliers come out
as pricing masses: the seller writes old value - new value = 0, the buyer
new value - old value = 0.
"""

import logging
from fractions import Fraction
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from config import Settings
from exact import Number
from lp_solver import Constraint, LinearProgram, Relation, Solution, Variable, constraint_violations, solve
from market_model import Claim, DelayedView, Market, derive_delayed_view, g_vertex_id

logger = logging.getLogger(__name__)

Agent = Literal["seller", "buyer"]
Info = Literal["delayed", "full"]

KAPPA = "kappa"
BUDGET = "budget"


class HedgeError(ValueError):
    pass


class HedgingStrategy(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    info: Info = "delayed"
    portfolios: Dict[str, Tuple[Number, ...]] = Field(
        default_factory=dict, description="Holdings per G-vertex (delayed) or F-vertex (full) before time T"
    )


class PriceQuote(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    agent: Agent
    info: Info
    status: str = "optimal"
    price: Optional[Number] = None
    strategy: HedgingStrategy


class AuditReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    max_violation: Number
    violated: List[str] = Field(default_factory=list)
    surplus: Dict[str, Number] = Field(default_factory=dict, description="Terminal wealth net of the claim")

    @property
    def passed(self) -> bool:
        return not self.violated and all(s >= 0 for s in self.surplus.values())


# --- Naming ---
def holding(vertex: str, k: int) -> str:
    return f"H[{vertex}][{k}]"


def hedge_row(gamma: str) -> str:
    return f"hedge[{gamma}]"


def rebalance_row(vertex: str, atom: str) -> str:
    return f"rebalance[{vertex}][{atom}]"


def _portfolio_terms(coeffs: Dict[str, Fraction], vertex: str, prices, sign: int) -> None:
    for k, s in enumerate(prices):
        if s != 0:
            name = holding(vertex, k)
            coeffs[name] = coeffs.get(name, Fraction(0)) + sign * s


def delayed_rebalancing(m: Market, g: DelayedView) -> List[Tuple[str, str, str]]:
    """(G-vertex, its G-parent, F-atom) for every rebalancing equation.

    A G-vertex at time t in 1..T-1 knows F_{t-1} but trades at the F_t prices of
    every atom inside its block, i.e. at the F-children of its reference vertex.
    """
    rows = []
    for t in range(1, m.horizon):
        for v in g.vertices_at(t):
            for atom in m.children(g.f_ref(v)):
                rows.append((v, g.parent(v), atom))
    return rows


def _trading_vertices(m: Market, g: Optional[DelayedView]) -> List[str]:
    if g is None:
        return [v for t in range(m.horizon) for v in m.vertices_at(t)]
    return [v for t in range(m.horizon) for v in g.vertices_at(t)]


def _variables(m: Market, g: Optional[DelayedView]) -> Tuple[Variable, ...]:
    variables = [Variable(name=KAPPA, nonneg=False)]
    for v in _trading_vertices(m, g):
        variables.extend(Variable(name=holding(v, k), nonneg=False) for k in range(m.asset_count))
    return tuple(variables)


def _hedging_program(m: Market, g: Optional[DelayedView], b: Claim, agent: Agent) -> LinearProgram:
    b.check_market(m)
    seller = agent == "seller"
    root = g.root if g is not None else m.root
    constraints = []

    budget: Dict[str, Fraction] = {KAPPA: Fraction(1)}
    _portfolio_terms(budget, root, m.prices(m.root), -1 if seller else 1)
    constraints.append(
        Constraint(name=BUDGET, coeffs=budget, relation=Relation.GE if seller else Relation.LE)
    )

    for gamma in m.terminals:
        holder = g.parent(_g_terminal(g, gamma)) if g is not None else m.parent(gamma)
        coeffs: Dict[str, Fraction] = {}
        _portfolio_terms(coeffs, holder, m.prices(gamma), 1)
        rhs = b.value(gamma) if seller else -b.value(gamma)
        constraints.append(Constraint(name=hedge_row(gamma), coeffs=coeffs, relation=Relation.GE, rhs=rhs))

    if g is not None:
        rebalancing = delayed_rebalancing(m, g)
    else:
        rebalancing = [(v, m.parent(v), v) for t in range(1, m.horizon) for v in m.vertices_at(t)]
    for vertex, parent, atom in rebalancing:
        coeffs = {}
        _portfolio_terms(coeffs, parent, m.prices(atom), 1 if seller else -1)
        _portfolio_terms(coeffs, vertex, m.prices(atom), -1 if seller else 1)
        coeffs = {k: v for k, v in coeffs.items() if v != 0}
        constraints.append(Constraint(name=rebalance_row(vertex, atom), coeffs=coeffs, relation=Relation.EQ))

    info = "delayed" if g is not None else "full"
    return LinearProgram(
        name=f"{agent} {info}",
        sense="min" if seller else "max",
        variables=_variables(m, g),
        constraints=tuple(constraints),
        objective={KAPPA: Fraction(1)},
    )


def _g_terminal(g: DelayedView, gamma: str) -> str:
    return g_vertex_id(g.horizon, gamma)


def build_seller_delayed_lp(m: Market, g: DelayedView, b: Claim) -> LinearProgram:
    return _hedging_program(m, g, b, "seller")


def build_buyer_delayed_lp(m: Market, g: DelayedView, b: Claim) -> LinearProgram:
    return _hedging_program(m, g, b, "buyer")


def build_seller_full_lp(m: Market, b: Claim) -> LinearProgram:
    return _hedging_program(m, None, b, "seller")


def build_buyer_full_lp(m: Market, b: Claim) -> LinearProgram:
    return _hedging_program(m, None, b, "buyer")


def hedging_lp(m: Market, g: Optional[DelayedView], b: Claim, agent: Agent, info: Info) -> LinearProgram:
    if info == "delayed":
        return _hedging_program(m, g or derive_delayed_view(m), b, agent)
    return _hedging_program(m, None, b, agent)


def strategy_from_solution(m: Market, g: Optional[DelayedView], sol: Solution, info: Info) -> HedgingStrategy:
    vertices = _trading_vertices(m, g if info == "delayed" else None)
    return HedgingStrategy(
        info=info,
        portfolios={v: tuple(sol.values[holding(v, k)] for k in range(m.asset_count)) for v in vertices},
    )


def quote_price(
    m: Market,
    g: Optional[DelayedView],
    b: Claim,
    agent: Agent = "seller",
    info: Info = "delayed",
    mode: Optional[str] = None,
    settings: Optional[Settings] = None,
) -> PriceQuote:
    if info == "delayed" and g is None:
        g = derive_delayed_view(m)
    lp = hedging_lp(m, g, b, agent, info)
    sol = solve(lp, mode=mode, settings=settings)
    if sol.status != "optimal":
        logger.warning(f"⚠️ {lp.name} hedging program is {sol.status}")
        return PriceQuote(agent=agent, info=info, status=sol.status, strategy=HedgingStrategy(info=info))
    logger.info(f"✅ {agent.capitalize()} {info} price: {sol.objective}")
    return PriceQuote(
        agent=agent, info=info, price=sol.objective, strategy=strategy_from_solution(m, g, sol, info)
    )


def audit_hedge(m: Market, g: Optional[DelayedView], b: Claim, quote: PriceQuote, tol: float = 0) -> AuditReport:
    """Re-evaluate the quote against every row of the program that produced it."""
    if quote.price is None:
        raise HedgeError(f"cannot audit a {quote.status} quote")
    if quote.info == "delayed" and g is None:
        g = derive_delayed_view(m)
    expected = set(_trading_vertices(m, g if quote.info == "delayed" else None))
    given = set(quote.strategy.portfolios)
    if given != expected:
        stray = sorted(given ^ expected)[0]
        raise HedgeError(f"strategy indexed by the wrong tree: vertex {stray!r}")
    for v, h in quote.strategy.portfolios.items():
        if len(h) != m.asset_count:
            raise HedgeError(f"portfolio at {v!r} holds {len(h)} assets, market has {m.asset_count}")

    lp = hedging_lp(m, g, b, quote.agent, quote.info)
    values = {KAPPA: quote.price}
    for v, h in quote.strategy.portfolios.items():
        values.update({holding(v, k): x for k, x in enumerate(h)})
    violations = constraint_violations(lp, values)
    worst = max(violations.values(), default=Fraction(0))

    surplus = {}
    for gamma in m.terminals:
        holder = g.parent(_g_terminal(g, gamma)) if quote.info == "delayed" else m.parent(gamma)
        wealth = sum((s * x for s, x in zip(m.prices(gamma), quote.strategy.portfolios[holder])), 0 * worst)
        surplus[gamma] = wealth - b.value(gamma) if quote.agent == "seller" else wealth + b.value(gamma)

    report = AuditReport(
        max_violation=worst,
        violated=[name for name, amount in violations.items() if amount > tol],
        surplus=surplus,
    )
    if report.violated:
        logger.warning(f"⚠️ Hedge audit: {len(report.violated)} constraints violated, worst {worst}")
    else:
        logger.info("✅ Hedge audit passed")
    return report
