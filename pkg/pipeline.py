"""LangGraph pricing pipeline shared by the CLI and the HTTP service.

read_inputs -> check_arbitrage -> solve_prices -> audit_strategy, with an
early exit after any failing node and after check_arbitrage for
arbitrage-only runs. Failures are recorded in the state (error + exit code)
instead of being raised.
"""

import logging
from pathlib import Path
from typing import Optional

from langgraph.graph import END, START, StateGraph
from typing_extensions import TypedDict

from bounds import PriceReport, ProbabilityMeasure, check_emm_exists, price_report
from config import Settings, get_settings
from dual_programs import GapReport
from lp_solver import SolverError
from market_model import Claim, ClaimError, DelayedView, Market, MarketError, derive_delayed_view, load_claim, load_market
from primal_programs import AuditReport, HedgeError, PriceQuote, audit_hedge, quote_price

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_INPUT_INVALID = 2
EXIT_ARBITRAGE = 3


class PricingState(TypedDict, total=False):
    task: str  # "price" or "arbitrage"
    market_path: Optional[str]
    claim_path: Optional[str]
    market_text: Optional[str]
    claim_text: Optional[str]
    mode: Optional[str]
    settings: Settings
    market: Market
    claim: Claim
    view: DelayedView
    witness: Optional[ProbabilityMeasure]
    report: PriceReport
    gap: GapReport
    quote: PriceQuote
    audit: AuditReport
    error: Optional[str]
    exit_code: int


# --- Step 1: Load and validate documents ---
def read_inputs(state: PricingState) -> PricingState:
    try:
        market_text = state.get("market_text")
        if market_text is None:
            market_text = Path(state["market_path"]).read_text()
        market = load_market(market_text)
        update: PricingState = {"market": market, "view": derive_delayed_view(market)}
        if state.get("task", "price") == "price":
            claim_text = state.get("claim_text")
            if claim_text is None:
                if not state.get("claim_path"):
                    raise ClaimError("a claim file is required for pricing")
                claim_text = Path(state["claim_path"]).read_text()
            update["claim"] = load_claim(claim_text, market)
        return update
    except (MarketError, ClaimError, OSError) as e:
        logger.error(f"❌ Invalid input: {e}")
        return {"error": str(e), "exit_code": EXIT_INPUT_INVALID}


# --- Step 2: Equivalent martingale measure ---
def check_arbitrage(state: PricingState) -> PricingState:
    witness = check_emm_exists(state["market"], mode=state.get("mode"), settings=state.get("settings"))
    if witness is None:
        return {"witness": None, "error": "no martingale measure", "exit_code": EXIT_ARBITRAGE}
    return {"witness": witness, "exit_code": EXIT_OK}


def gap_from_report(report: PriceReport, tol: float = 0) -> GapReport:
    raw_dual = None
    if report.p_tilde is not None and report.raw_gap is not None:
        raw_dual = report.p_tilde - report.raw_gap
    return GapReport(
        p_tilde=report.p_tilde,
        d_tilde=report.d_tilde,
        gap=report.gap,
        raw_dual=raw_dual,
        raw_gap=report.raw_gap,
        primal_status=report.statuses.get("p_tilde", "not solved"),
        dual_status=report.statuses.get("d_tilde", "not solved"),
        reduction_exact=report.reduction_exact,
        tol=tol,
    )


# --- Step 3: Every price, the gap and the seller's hedge ---
def solve_prices(state: PricingState) -> PricingState:
    m, g, b = state["market"], state["view"], state["claim"]
    mode, settings = state.get("mode"), state.get("settings")
    try:
        report = price_report(m, g, b, mode=mode, settings=settings, witness=state.get("witness"))
        tol = 0 if report.mode == "exact" else (settings or get_settings()).tolerance
        gap = gap_from_report(report, tol)
        quote = quote_price(m, g, b, "seller", "delayed", mode=mode, settings=settings)
    except SolverError as e:
        logger.error(f"❌ Solver failure: {e}")
        return {"error": str(e), "exit_code": EXIT_VERIFICATION_FAILED}
    update: PricingState = {"report": report, "gap": gap, "quote": quote}
    if report.status != "ok":
        update.update(error=f"pricing status {report.status}", exit_code=EXIT_ARBITRAGE)
    elif report.violations:
        update.update(error="ordering violated: " + ", ".join(report.violations), exit_code=EXIT_VERIFICATION_FAILED)
    return update


# --- Step 4: Audit the hedge ---
def audit_strategy(state: PricingState) -> PricingState:
    settings = state.get("settings") or get_settings()
    tol = 0 if (state.get("mode") or settings.mode) == "exact" else settings.tolerance
    try:
        audit = audit_hedge(state["market"], state["view"], state["claim"], state["quote"], tol=tol)
    except HedgeError as e:
        return {"error": str(e), "exit_code": EXIT_VERIFICATION_FAILED}
    if not audit.passed:
        return {"audit": audit, "error": "hedge audit failed", "exit_code": EXIT_VERIFICATION_FAILED}
    return {"audit": audit, "exit_code": state.get("exit_code", EXIT_OK)}


def _after_read(state: PricingState) -> str:
    return END if state.get("error") else "check_arbitrage"


def _after_arbitrage(state: PricingState) -> str:
    if state.get("error") or state.get("task") == "arbitrage":
        return END
    return "solve_prices"


def _after_prices(state: PricingState) -> str:
    return END if state.get("error") else "audit_strategy"


# --- Build LangGraph ---
builder = StateGraph(PricingState)
builder.add_node("read_inputs", read_inputs)
builder.add_node("check_arbitrage", check_arbitrage)
builder.add_node("solve_prices", solve_prices)
builder.add_node("audit_strategy", audit_strategy)

builder.add_edge(START, "read_inputs")
builder.add_conditional_edges("read_inputs", _after_read, ["check_arbitrage", END])
builder.add_conditional_edges("check_arbitrage", _after_arbitrage, ["solve_prices", END])
builder.add_conditional_edges("solve_prices", _after_prices, ["audit_strategy", END])
builder.add_edge("audit_strategy", END)
# no checkpointer: states hold Fraction-valued models
graph = builder.compile()


def run_pricing(
    market_path: Optional[str] = None,
    claim_path: Optional[str] = None,
    mode: Optional[str] = None,
    settings: Optional[Settings] = None,
    market_text: Optional[str] = None,
    claim_text: Optional[str] = None,
) -> PricingState:
    state = graph.invoke(
        {
            "task": "price",
            "market_path": market_path,
            "claim_path": claim_path,
            "market_text": market_text,
            "claim_text": claim_text,
            "mode": mode,
            "settings": settings or get_settings(),
        }
    )
    state.setdefault("exit_code", EXIT_OK)
    return state


def run_arbitrage(
    market_path: Optional[str] = None,
    mode: Optional[str] = None,
    settings: Optional[Settings] = None,
    market_text: Optional[str] = None,
) -> PricingState:
    state = graph.invoke(
        {
            "task": "arbitrage",
            "market_path": market_path,
            "market_text": market_text,
            "mode": mode,
            "settings": settings or get_settings(),
        }
    )
    state.setdefault("exit_code", EXIT_OK)
    return state


def price_document(state: PricingState) -> dict:
    """JSON-ready pricing result: report, gap, hedge and audit."""
    document = {}
    if "report" in state:
        document["report"] = state["report"].model_dump(mode="json")
    if "gap" in state:
        document["gap"] = state["gap"].model_dump(mode="json")
    if "quote" in state:
        document["hedge"] = state["quote"].model_dump(mode="json")
    if "audit" in state:
        document["audit"] = state["audit"].model_dump(mode="json")
    if state.get("error"):
        document["error"] = state["error"]
    document["exit_code"] = state.get("exit_code", EXIT_OK)
    return document
