"""Full-information and intermediate price bounds, arbitrage check, proof lifts.

alpha is the best expected payoff over martingale measures, beta the best over
the wider squeeze set where conditional expectations only match two steps
apart. Every martingale measure (and every squeeze-feasible measure) lifts to
a feasible point of the measure dual, which is why alpha <= beta <= d~.
"""

import logging
from fractions import Fraction
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from config import Settings, get_settings
from dual_programs import (
    DualPoint,
    InfeasibleDualPoint,
    build_measure_dual,
    q_var,
    verify_no_gap,
)
from exact import Number
from lp_solver import Constraint, LinearProgram, Relation, Variable, constraint_violations, solve
from market_model import Claim, DelayedView, HorizonError, Market, derive_delayed_view
from primal_programs import quote_price

logger = logging.getLogger(__name__)


class NotMartingaleError(ValueError):
    pass


class ProbabilityMeasure(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    q: Dict[str, Number]

    @model_validator(mode="after")
    def _check_probability(self) -> "ProbabilityMeasure":
        if any(mass < 0 for mass in self.q.values()):
            raise ValueError("probability masses must be non-negative")
        total = sum(self.q.values())
        slack = 1e-9 if isinstance(total, float) else 0
        if abs(total - 1) > slack:
            raise ValueError(f"probability masses sum to {total}, not 1")
        return self


class PriceReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    status: Literal["ok", "arbitrage", "failed"] = "ok"
    mode: Literal["exact", "float"] = "exact"
    p_tilde: Optional[Number] = None
    d_tilde: Optional[Number] = None
    alpha: Optional[Number] = None
    beta: Optional[Number] = None
    seller_full: Optional[Number] = None
    buyer_delayed: Optional[Number] = None
    buyer_full: Optional[Number] = None
    buyer_d_tilde: Optional[Number] = None
    gap: Optional[Number] = Field(None, description="p~ - d~")
    raw_gap: Optional[Number] = Field(None, description="p~ - raw dual optimum")
    d_minus_alpha: Optional[Number] = None
    beta_minus_alpha: Optional[Number] = None
    reduction_exact: bool = True
    statuses: Dict[str, str] = Field(default_factory=dict)
    witness: Optional[ProbabilityMeasure] = None
    violations: List[str] = Field(default_factory=list)


# --- Measure programs ---
def _terminal_masses(m: Market) -> Dict[str, List[str]]:
    return {v: m.terminal_descendants(v) for v in (rec.id for rec in m.vertices)}


def _measure_program(m: Market, b: Claim, name: str, sense: str, rows: List[Constraint]) -> LinearProgram:
    b.check_market(m)
    mass = Constraint(
        name="mass", coeffs={q_var(g): Fraction(1) for g in m.terminals}, relation=Relation.EQ, rhs=Fraction(1)
    )
    return LinearProgram(
        name=name,
        sense="max" if sense == "sup" else "min",
        variables=tuple(Variable(name=q_var(g)) for g in m.terminals),
        constraints=(mass, *rows),
        objective={q_var(g): b.value(g) for g in m.terminals if b.value(g) != 0},
    )


def _expectation_row(name: str, terms: Dict[str, Fraction], rhs=Fraction(0)) -> Optional[Constraint]:
    coeffs = {k: v for k, v in terms.items() if v != 0}
    if not coeffs and rhs == 0:
        return None
    return Constraint(name=name, coeffs=coeffs, relation=Relation.EQ, rhs=rhs)


def _accumulate(terms: Dict[str, Fraction], m: Market, below: Dict[str, List[str]], u: str, k: int, sign: int):
    # Q_u S_u[k] expanded over the terminal masses below u
    price = m.prices(u)[k]
    if price == 0:
        return
    for gamma in below[u]:
        name = q_var(gamma)
        terms[name] = terms.get(name, Fraction(0)) + sign * price


def build_martingale_lp(m: Market, b: Claim, sense: str = "sup") -> LinearProgram:
    """Optimize E_Q[B] over martingale measures; sup gives alpha, inf the full-information buyer price."""
    below = _terminal_masses(m)
    rows = []
    for t in range(m.horizon):
        for v in m.vertices_at(t):
            # the numeraire row is the tree additivity of Q and always holds
            for k in range(1, m.asset_count):
                terms: Dict[str, Fraction] = {}
                for u in m.children(v):
                    _accumulate(terms, m, below, u, k, 1)
                _accumulate(terms, m, below, v, k, -1)
                row = _expectation_row(f"martingale[{v}][{k}]", terms)
                if row is not None:
                    rows.append(row)
    return _measure_program(m, b, f"martingale ({sense})", sense, rows)


def build_squeeze_lp(m: Market, b: Claim) -> LinearProgram:
    """beta: E_Q[S_1] = S_0 and E_Q[S_{t+1} | F_t] = E_Q[S_{t+2} | F_t] for t = 0..T-4,
    closed by E_Q[S_{T-2} | F_{T-3}] = E_Q[S_T | F_{T-3}]."""
    T = m.horizon
    if T < 4:
        raise HorizonError(f"squeeze program needs T >= 4, market has T = {T}")
    below = _terminal_masses(m)
    rows = []
    for k in range(m.asset_count):
        terms: Dict[str, Fraction] = {}
        for u in m.children(m.root):
            _accumulate(terms, m, below, u, k, 1)
        row = _expectation_row(f"root[{k}]", terms, m.prices(m.root)[k])
        if row is not None:
            rows.append(row)
    for t in range(0, T - 2):
        closing = t == T - 3
        for v in m.vertices_at(t):
            for k in range(m.asset_count):
                terms = {}
                for u in m.children(v):
                    _accumulate(terms, m, below, u, k, 1)
                later = m.terminal_descendants(v) if closing else m.grandchildren(v)
                for mu in later:
                    _accumulate(terms, m, below, mu, k, -1)
                row = _expectation_row(f"{'close' if closing else 'step'}[{v}][{k}]", terms)
                if row is not None:
                    rows.append(row)
    return _measure_program(m, b, "squeeze", "sup", rows)


def check_emm_exists(
    m: Market, mode: Optional[str] = None, settings: Optional[Settings] = None
) -> Optional[ProbabilityMeasure]:
    """Strictly positive martingale measure, or None when the market admits arbitrage."""
    settings = settings or get_settings()
    tol = 0 if (mode or settings.mode) == "exact" else settings.tolerance
    maximizers = []
    for gamma in m.terminals:
        indicator = Claim(values={v: Fraction(int(v == gamma)) for v in m.terminals})
        sol = solve(build_martingale_lp(m, indicator, "sup"), mode=mode, settings=settings)
        if sol.status != "optimal":
            logger.warning("❌ No martingale measure: the martingale polytope is empty")
            return None
        if sol.objective <= tol:
            logger.warning(f"❌ No equivalent martingale measure: scenario {gamma!r} always gets zero mass")
            return None
        maximizers.append(sol.values)
    count = len(maximizers)
    witness = {
        gamma: sum((point[q_var(gamma)] for point in maximizers), 0 * maximizers[0][q_var(gamma)]) / count
        for gamma in m.terminals
    }
    logger.info(f"✅ Equivalent martingale measure found on {count} scenarios")
    return ProbabilityMeasure(q=witness)


def vertex_masses(m: Market, q: ProbabilityMeasure) -> Dict[str, object]:
    missing = set(m.terminals) - set(q.q)
    if missing:
        raise NotMartingaleError(f"measure has no mass for terminal {sorted(missing)[0]!r}")
    masses: Dict[str, object] = dict(q.q)
    for t in range(m.horizon - 1, -1, -1):
        for v in m.vertices_at(t):
            masses[v] = sum((masses[u] for u in m.children(v)), 0 * masses[m.terminals[0]])
    return masses


def martingale_violations(m: Market, q: ProbabilityMeasure) -> Dict[str, object]:
    lp = build_martingale_lp(m, Claim.constant(m, 0))
    values = {q_var(g): x for g, x in q.q.items()}
    return {name: v for name, v in constraint_violations(lp, values).items() if v != 0}


def lift_emm_to_dual_point(m: Market, q: ProbabilityMeasure) -> DualPoint:
    """y_v = Q_v on F-times 1..T-2, w = Q on T-1, y0 = 1 and the same q.

    Feasible for the measure dual and, through w, for the raw dual too.
    """
    broken = martingale_violations(m, q)
    if broken:
        raise NotMartingaleError(f"not a martingale measure: {sorted(broken)[0]} fails")
    masses = vertex_masses(m, q)
    T = m.horizon
    return DualPoint(
        form="measure",
        y0=Fraction(1),
        y={v: masses[v] for t in range(1, T - 1) for v in m.vertices_at(t)},
        w={v: masses[v] for v in m.vertices_at(T - 1)},
        q=dict(q.q),
    )


def lift_squeeze_to_dual_point(m: Market, q: ProbabilityMeasure) -> DualPoint:
    """y_v = Q_v on F-times 1..T-2; the squeeze rows are exactly the measure-dual rows at that point."""
    lp = build_squeeze_lp(m, Claim.constant(m, 0))
    values = {q_var(g): x for g, x in q.q.items()}
    broken = {name: v for name, v in constraint_violations(lp, values).items() if v != 0}
    if broken:
        raise InfeasibleDualPoint(f"measure is not squeeze-feasible: {sorted(broken)[0]} fails")
    masses = vertex_masses(m, q)
    return DualPoint(
        form="measure",
        y0=Fraction(1),
        y={v: masses[v] for t in range(1, m.horizon - 1) for v in m.vertices_at(t)},
        q=dict(q.q),
    )


# --- Report ---
def _leq(a, b, tol) -> bool:
    return a <= b + tol * max(1, abs(b))


def _eq(a, b, tol) -> bool:
    return _leq(a, b, tol) and _leq(b, a, tol)


def _orderings(report: PriceReport, tol) -> List[str]:
    failed = []
    checks = [
        ("alpha = seller_full", report.alpha, report.seller_full, _eq),
        ("alpha <= beta", report.alpha, report.beta, _leq),
        ("beta <= d_tilde", report.beta, report.d_tilde, _leq),
        ("alpha <= d_tilde", report.alpha, report.d_tilde, _leq),
        ("p_tilde <= d_tilde", report.p_tilde, report.d_tilde, _leq),
        ("buyer_delayed <= buyer_full", report.buyer_delayed, report.buyer_full, _leq),
        ("buyer_full <= alpha", report.buyer_full, report.alpha, _leq),
        ("alpha <= p_tilde", report.alpha, report.p_tilde, _leq),
        ("buyer_d_tilde <= buyer_delayed", report.buyer_d_tilde, report.buyer_delayed, _leq),
    ]
    if report.reduction_exact:
        checks.append(("d_tilde = p_tilde", report.d_tilde, report.p_tilde, _eq))
    for label, left, right, holds in checks:
        if left is not None and right is not None and not holds(left, right, tol):
            failed.append(label)
    if report.raw_gap is not None and not _eq(report.raw_gap, 0 * report.raw_gap, tol):
        failed.append("raw_gap = 0")
    return failed


def price_report(
    m: Market,
    g: Optional[DelayedView],
    b: Claim,
    mode: Optional[str] = None,
    settings: Optional[Settings] = None,
    witness: Optional[ProbabilityMeasure] = None,
) -> PriceReport:
    """All prices for one market and claim, plus the ordering checks between them.

    A known equivalent martingale measure may be passed as `witness` to skip the
    per-scenario existence programs.
    """
    settings = settings or get_settings()
    mode = mode or settings.mode
    tol = 0 if mode == "exact" else settings.tolerance
    g = g or derive_delayed_view(m)
    b.check_market(m)

    if witness is None:
        witness = check_emm_exists(m, mode=mode, settings=settings)
    if witness is None:
        return PriceReport(status="arbitrage", mode=mode, statuses={"emm": "absent"})

    statuses: Dict[str, str] = {"emm": "present"}
    prices: Dict[str, object] = {}

    gap = verify_no_gap(m, g, b, mode=mode, settings=settings)
    statuses.update(p_tilde=gap.primal_status, d_tilde=gap.dual_status)
    prices.update(p_tilde=gap.p_tilde, d_tilde=gap.d_tilde, gap=gap.gap, raw_gap=gap.raw_gap)

    def record(label: str, lp: LinearProgram) -> None:
        sol = solve(lp, mode=mode, settings=settings)
        statuses[label] = sol.status
        prices[label] = sol.objective

    record("alpha", build_martingale_lp(m, b, "sup"))
    record("buyer_full", build_martingale_lp(m, b, "inf"))
    record("buyer_d_tilde", build_measure_dual(m, b, "inf"))
    if m.horizon >= 4:
        record("beta", build_squeeze_lp(m, b))
    for label, agent, info in (("seller_full", "seller", "full"), ("buyer_delayed", "buyer", "delayed")):
        quote = quote_price(m, g, b, agent, info, mode=mode, settings=settings)
        statuses[label] = quote.status
        prices[label] = quote.price

    report = PriceReport(mode=mode, reduction_exact=gap.reduction_exact, statuses=statuses, witness=witness, **prices)
    updates = {}
    if report.d_tilde is not None and report.alpha is not None:
        updates["d_minus_alpha"] = report.d_tilde - report.alpha
    if report.beta is not None and report.alpha is not None:
        updates["beta_minus_alpha"] = report.beta - report.alpha
    if any(status != "optimal" for key, status in statuses.items() if key != "emm"):
        updates["status"] = "failed"
    report = report.model_copy(update=updates)
    report = report.model_copy(update={"violations": _orderings(report, tol)})
    if report.violations:
        logger.error(f"❌ Price ordering violated: {', '.join(report.violations)}")
    else:
        logger.info(f"📊 alpha = {report.alpha}, beta = {report.beta}, d~ = {report.d_tilde}, p~ = {report.p_tilde}")
    return report
