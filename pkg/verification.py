"""Randomized checks of the no-gap and bound-ordering results.

Markets are binary trees built forward from a random product measure: at each
branching the up-probability and the down factors are drawn, and the up
factor is solved from the martingale equation. The generating measure is
therefore an equivalent martingale measure of every market produced.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from bounds import ProbabilityMeasure, price_report
from config import Settings, get_settings
from exact import format_scalar
from market_model import Claim, Market, VertexRecord, derive_delayed_view, dump_claim, dump_market

logger = logging.getLogger(__name__)

UP_PROBABILITIES = (Fraction(1, 4), Fraction(1, 3), Fraction(1, 2), Fraction(2, 3), Fraction(3, 4))
DOWN_FACTORS = (Fraction(1, 2), Fraction(2, 3), Fraction(3, 4), Fraction(4, 5))

COLUMNS = [
    "trial", "seed", "risky_assets", "p_tilde", "d_tilde", "alpha", "beta", "seller_full",
    "buyer_delayed", "buyer_full", "raw_gap", "reduction_exact", "beta_above_alpha",
    "beta_below_d_tilde", "passed", "violations",
]


def _pick(rng: np.random.Generator, options):
    return options[int(rng.integers(len(options)))]


def random_market(rng: np.random.Generator, horizon: int = 4, risky_assets: Optional[int] = None) -> Market:
    n = risky_assets if risky_assets is not None else int(rng.integers(1, 3))
    start = tuple([Fraction(1)] + [Fraction(int(rng.integers(1, 5))) for _ in range(n)])
    records = [VertexRecord(id="root", time=0, parent=None, prices=start)]
    level = [("root", "", start, Fraction(1))]
    for t in range(1, horizon + 1):
        next_level = []
        for vid, path, prices, mass in level:
            q = _pick(rng, UP_PROBABILITIES)
            downs = [_pick(rng, DOWN_FACTORS) for _ in range(n)]
            ups = [(1 - (1 - q) * d) / q for d in downs]
            for step, factors, p in (("u", ups, q), ("d", downs, 1 - q)):
                child = path + step
                child_prices = (Fraction(1),) + tuple(s * f for s, f in zip(prices[1:], factors))
                records.append(VertexRecord(id=child, time=t, parent=vid, prices=child_prices))
                next_level.append((child, child, child_prices, mass * p))
        level = next_level
    return Market(
        asset_names=("bond",) + tuple(f"stock{i}" for i in range(1, n + 1)),
        horizon=horizon,
        vertices=tuple(records),
        terminal_probs={vid: mass for vid, _, _, mass in level},
    )


def random_claim(rng: np.random.Generator, m: Market) -> Claim:
    return Claim(values={v: Fraction(int(rng.integers(0, 13)), int(rng.integers(1, 5))) for v in m.terminals})


def dump_instance(m: Market, b: Claim, directory, label: str) -> Path:
    target = Path(directory)
    target.mkdir(parents=True, exist_ok=True)
    (target / f"{label}-market.json").write_text(dump_market(m))
    (target / f"{label}-claim.json").write_text(dump_claim(b))
    return target


def _cell(value):
    return format_scalar(value) if value is not None else None


def run_trial(
    seed: int,
    index: int,
    mode: Optional[str] = None,
    settings: Optional[Settings] = None,
    dump_dir: Optional[str] = None,
) -> Dict[str, object]:
    rng = np.random.default_rng([seed, index])
    m = random_market(rng)
    b = random_claim(rng, m)
    report = price_report(
        m, derive_delayed_view(m), b, mode=mode, settings=settings, witness=ProbabilityMeasure(q=m.terminal_probs)
    )
    passed = report.status == "ok" and not report.violations
    if not passed:
        logger.error(f"❌ Trial {index} (seed {seed}) failed: {report.violations or report.status}")
        if dump_dir:
            dump_instance(m, b, dump_dir, f"trial-{seed}-{index}")
    strictly = lambda a, c: a is not None and c is not None and a < c  # noqa: E731
    return {
        "trial": index,
        "seed": seed,
        "risky_assets": m.asset_count - 1,
        "p_tilde": _cell(report.p_tilde),
        "d_tilde": _cell(report.d_tilde),
        "alpha": _cell(report.alpha),
        "beta": _cell(report.beta),
        "seller_full": _cell(report.seller_full),
        "buyer_delayed": _cell(report.buyer_delayed),
        "buyer_full": _cell(report.buyer_full),
        "raw_gap": _cell(report.raw_gap),
        "reduction_exact": report.reduction_exact,
        "beta_above_alpha": strictly(report.alpha, report.beta),
        "beta_below_d_tilde": strictly(report.beta, report.d_tilde),
        "passed": passed,
        "violations": ", ".join(report.violations),
    }


def run_trials(
    seed: int,
    trials: int,
    mode: Optional[str] = None,
    workers: Optional[int] = None,
    settings: Optional[Settings] = None,
    dump_dir: Optional[str] = None,
) -> pd.DataFrame:
    """One row per trial, ordered by trial index whatever the worker count.

    `workers` falls back to VERIFY_WORKERS.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    settings = settings or get_settings()
    workers = workers or settings.verify_workers
    task = partial(run_trial, seed, mode=mode, settings=settings, dump_dir=dump_dir)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows: List[Dict[str, object]] = list(pool.map(task, range(trials)))
    else:
        rows = [task(i) for i in range(trials)]
    frame = pd.DataFrame(rows, columns=COLUMNS).sort_values("trial").reset_index(drop=True)
    passed = int(frame["passed"].sum())
    logger.info(f"📊 {passed}/{trials} trials passed (seed {seed}, {mode or settings.mode} mode)")
    return frame
