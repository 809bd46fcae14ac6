"""Command-line front end: price, verify, arbitrage, audit.

Exit codes: 0 success, 1 verification failure, 2 invalid input, 3 arbitrage
or an infeasible program. JSON goes to stdout (or --out), status lines to stderr.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, ValidationError, model_validator

from config import Settings, configure_logging, get_settings
from market_model import ClaimError, MarketError, derive_delayed_view, read_claim, read_market
from pipeline import EXIT_ARBITRAGE, EXIT_INPUT_INVALID, EXIT_OK, EXIT_VERIFICATION_FAILED
from pipeline import price_document, run_arbitrage, run_pricing
from primal_programs import audit_hedge, quote_price
from verification import run_trials

logger = logging.getLogger(__name__)


class RunConfig(BaseModel):
    command: Literal["price", "verify", "arbitrage", "audit"]
    market: Optional[str] = None
    claim: Optional[str] = None
    mode: Optional[Literal["exact", "float"]] = None
    tolerance: Optional[float] = Field(None, gt=0)
    seed: int = Field(0, ge=0)
    trials: int = Field(50, ge=1)
    workers: Optional[int] = Field(None, ge=1)
    out: Optional[str] = None
    dump_lp: Optional[str] = None
    dump_dir: str = "failures"
    log_level: Optional[str] = None

    @model_validator(mode="after")
    def _check_paths(self) -> "RunConfig":
        if self.command in ("price", "audit", "arbitrage") and not self.market:
            raise ValueError(f"{self.command} needs --market")
        if self.command in ("price", "audit") and not self.claim:
            raise ValueError(f"{self.command} needs --claim")
        return self

    def settings(self) -> Settings:
        base = get_settings()
        update = {}
        if self.mode:
            update["mode"] = self.mode
        if self.tolerance is not None:
            update["tolerance"] = self.tolerance
        if self.dump_lp:
            update["lp_dump_dir"] = self.dump_lp
        return base.model_copy(update=update)


def _emit(document, out: Optional[str]) -> None:
    text = json.dumps(document, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
        logger.info(f"✅ Report written to {out}")
    else:
        sys.stdout.write(text)


def cmd_price(config: RunConfig) -> int:
    settings = config.settings()
    state = run_pricing(config.market, config.claim, mode=settings.mode, settings=settings)
    if state.get("exit_code") == EXIT_INPUT_INVALID:
        print(f"❌ {state['error']}", file=sys.stderr)
        return EXIT_INPUT_INVALID
    _emit(price_document(state), config.out)
    return state["exit_code"]


def cmd_verify(config: RunConfig) -> int:
    settings = config.settings()
    workers = config.workers or settings.verify_workers
    frame = run_trials(
        config.seed, config.trials, mode=settings.mode, workers=workers, settings=settings,
        dump_dir=config.dump_dir,
    )
    if config.out:
        frame.to_csv(config.out, index=False)
    passed = int(frame["passed"].sum())
    summary = {
        "seed": config.seed,
        "trials": config.trials,
        "workers": workers,
        "passed": passed,
        "failed": config.trials - passed,
        "reduction_exact": int(frame["reduction_exact"].sum()),
        "beta_above_alpha": int(frame["beta_above_alpha"].sum()),
        "beta_below_d_tilde": int(frame["beta_below_d_tilde"].sum()),
    }
    sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    return EXIT_OK if passed == config.trials else EXIT_VERIFICATION_FAILED


def cmd_arbitrage(config: RunConfig) -> int:
    settings = config.settings()
    state = run_arbitrage(config.market, mode=settings.mode, settings=settings)
    code = state.get("exit_code", EXIT_OK)
    if code == EXIT_INPUT_INVALID:
        print(f"❌ {state['error']}", file=sys.stderr)
        return code
    witness = state.get("witness")
    if witness is None:
        _emit({"witness": None, "message": "no martingale measure"}, config.out)
        return EXIT_ARBITRAGE
    _emit({"witness": witness.model_dump(mode="json")["q"]}, config.out)
    return EXIT_OK


def cmd_audit(config: RunConfig) -> int:
    settings = config.settings()
    try:
        m = read_market(config.market)
        b = read_claim(config.claim, m)
    except (MarketError, ClaimError, OSError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_INPUT_INVALID
    g = derive_delayed_view(m)
    quote = quote_price(m, g, b, "seller", "delayed", mode=settings.mode, settings=settings)
    if quote.price is None:
        _emit({"status": quote.status}, config.out)
        return EXIT_ARBITRAGE
    tol = 0 if settings.mode == "exact" else settings.tolerance
    audit = audit_hedge(m, g, b, quote, tol=tol)
    _emit({"price": quote.model_dump(mode="json")["price"], "audit": audit.model_dump(mode="json"),
           "passed": audit.passed}, config.out)
    return EXIT_OK if audit.passed else EXIT_VERIFICATION_FAILED


COMMANDS = {"price": cmd_price, "verify": cmd_verify, "arbitrage": cmd_arbitrage, "audit": cmd_audit}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cli.py", description="Delayed-information claim pricing")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--market", help="market JSON file")
    parser.add_argument("--claim", help="claim JSON file")
    parser.add_argument("--mode", choices=["exact", "float"], help="simplex arithmetic (default PRICING_MODE)")
    parser.add_argument("--tol", dest="tolerance", type=float, help="float-mode tolerance")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--trials", type=int, default=50)
    parser.add_argument("--workers", type=int, help="processes for verify (default VERIFY_WORKERS)")
    parser.add_argument("--out", help="write the report here instead of stdout")
    parser.add_argument("--dump-lp", dest="dump_lp", help="write every solved LP to this directory")
    parser.add_argument("--dump-dir", dest="dump_dir", default="failures", help="failing verify instances")
    parser.add_argument("--log-level", dest="log_level")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig(**vars(args))
    except ValidationError as e:
        err = e.errors()[0]
        where = ".".join(str(p) for p in err["loc"])
        print(f"❌ usage: {where + ': ' if where else ''}{err['msg']}", file=sys.stderr)
        return EXIT_INPUT_INVALID
    configure_logging(config.log_level)
    return COMMANDS[config.command](config)


if __name__ == "__main__":
    sys.exit(main())
