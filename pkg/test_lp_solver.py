from fractions import Fraction

import numpy as np
import pytest

from config import Settings
from lp_solver import (
    Constraint,
    LinearProgram,
    OracleSizeError,
    Relation,
    Variable,
    check_certificates,
    dualize,
    enumerate_bases_oracle,
    format_lp,
    solve,
)
from primal_programs import build_seller_delayed_lp

EXACT = Settings(mode="exact")


def make_lp(sense, variables, rows, objective, name="lp"):
    return LinearProgram(
        name=name,
        sense=sense,
        variables=tuple(Variable(name=v, nonneg=nonneg) for v, nonneg in variables),
        constraints=tuple(
            Constraint(name=f"c{i}", coeffs=coeffs, relation=Relation(rel), rhs=rhs)
            for i, (coeffs, rel, rhs) in enumerate(rows)
        ),
        objective=objective,
    )


TINY = {
    "free_lower_bound": make_lp("min", [("x", False)], [({"x": 1}, ">=", 1)], {"x": 1}),
    "simplex_corner": make_lp("max", [("x", True), ("y", True)], [({"x": 1, "y": 1}, "<=", 1)], {"x": 1, "y": 1}),
    "contradiction": make_lp("min", [("x", True)], [({"x": 1}, "<=", 0), ({"x": 1}, ">=", 1)], {"x": 1}),
    "open_ray": make_lp("max", [("x", True), ("y", True)], [({"x": 1, "y": -1}, "<=", 1)], {"x": 1}),
    "diet": make_lp(
        "min", [("x", True), ("y", True)],
        [({"x": 1, "y": 1}, ">=", 4), ({"x": 1, "y": 3}, ">=", 6)], {"x": 2, "y": 3},
    ),
    "equalities": make_lp(
        "min", [("x", True), ("y", True), ("z", True)],
        [({"x": 1, "y": 1}, "=", 2), ({"y": 1, "z": 1}, "=", 3)], {"x": 1, "y": 1, "z": 1},
    ),
    "degenerate_box": make_lp(
        "max", [("x", True), ("y", True)],
        [({"x": 1}, "<=", 1), ({"y": 1}, "<=", 1), ({"x": 1, "y": 1}, "<=", 2)], {"x": 1, "y": 1},
    ),
    "negative_rhs": make_lp("min", [("x", False)], [({"x": 1}, ">=", -3)], {"x": 1}),
    "redundant_rows": make_lp(
        "min", [("x", True), ("y", True)],
        [({"x": 1, "y": 1}, "=", 1), ({"x": 2, "y": 2}, "=", 2)], {"x": 1},
    ),
    "production": make_lp(
        "max", [("x", True), ("y", True)],
        [({"x": 1, "y": 1}, "<=", 4), ({"x": 1, "y": 3}, "<=", 6), ({"x": 1}, "<=", 3)], {"x": 3, "y": 2},
    ),
    "empty_equality": make_lp("min", [("x", True), ("y", True)], [({"x": 1, "y": 1}, "=", -1)], {"x": 1}),
    "falling_objective": make_lp("min", [("x", True), ("y", True)], [({"x": 1, "y": -1}, "<=", 1)], {"x": -1}),
    "zero_rhs_ge": make_lp(
        "min", [("x", True), ("y", True)], [({"x": 1, "y": -1}, ">=", 0), ({"y": 1}, ">=", 2)], {"x": 1},
    ),
}

EXPECTED = {
    "free_lower_bound": ("optimal", 1),
    "simplex_corner": ("optimal", 1),
    "contradiction": ("infeasible", None),
    "open_ray": ("unbounded", None),
    "diet": ("optimal", 9),
    "equalities": ("optimal", 3),
    "degenerate_box": ("optimal", 2),
    "negative_rhs": ("optimal", -3),
    "redundant_rows": ("optimal", 0),
    "production": ("optimal", 11),
    "empty_equality": ("infeasible", None),
    "falling_objective": ("unbounded", None),
    "zero_rhs_ge": ("optimal", 2),
}


@pytest.mark.parametrize("name", sorted(TINY))
def test_simplex_matches_basis_enumeration(name):
    lp = TINY[name]
    status, objective = EXPECTED[name]
    sol = solve(lp, settings=EXACT)
    oracle = enumerate_bases_oracle(lp)
    assert sol.status == oracle.status == status
    assert sol.objective == oracle.objective == (None if objective is None else Fraction(objective))


@pytest.mark.parametrize("name", [n for n, (status, _) in EXPECTED.items() if status == "optimal"])
def test_exact_certificates_hold(name):
    lp = TINY[name]
    sol = solve(lp, settings=EXACT)
    report = check_certificates(lp, sol)
    assert report.passed
    assert report.objective_gap == 0
    assert sum(sol.duals[c.name] * c.rhs for c in lp.constraints) == sol.objective


def test_random_packing_programs_agree_with_oracle():
    rng = np.random.default_rng(7)
    for trial in range(10):
        A = rng.integers(0, 5, size=(4, 4))
        b = rng.integers(1, 9, size=4)
        c = rng.integers(1, 6, size=4)
        names = [f"x{j}" for j in range(4)]
        lp = make_lp(
            "max",
            [(n, True) for n in names],
            [({n: int(A[i, j]) for j, n in enumerate(names)}, "<=", int(b[i])) for i in range(4)]
            + [({n: 1 for n in names}, "<=", 20)],
            {n: int(c[j]) for j, n in enumerate(names)},
            name=f"packing {trial}",
        )
        sol = solve(lp, settings=EXACT)
        assert sol.status == "optimal"
        assert sol.objective == enumerate_bases_oracle(lp).objective
        assert check_certificates(lp, sol).passed


def test_float_mode_agrees_with_exact():
    lp = TINY["production"]
    sol = solve(lp, mode="float", settings=EXACT)
    assert sol.mode == "float"
    assert sol.objective == pytest.approx(11)


def test_corrupted_primal_is_flagged():
    lp = TINY["diet"]
    sol = solve(lp, settings=EXACT)
    broken = sol.model_copy(update={"values": {**sol.values, "x": sol.values["x"] - 1}})
    report = check_certificates(lp, broken)
    assert not report.passed
    assert report.primal_residual > 0


def test_flipped_dual_sign_is_flagged():
    lp = TINY["diet"]
    sol = solve(lp, settings=EXACT)
    binding = next(name for name, y in sol.duals.items() if y != 0)
    flipped = {**sol.duals, binding: -sol.duals[binding]}
    report = check_certificates(lp, sol.model_copy(update={"duals": flipped, "reduced_costs": {}}))
    assert binding in report.dual_sign_violations
    assert not report.passed


def test_certificates_need_an_optimum():
    with pytest.raises(ValueError):
        check_certificates(TINY["contradiction"], solve(TINY["contradiction"], settings=EXACT))


@pytest.mark.parametrize("name", ["diet", "equalities", "production", "negative_rhs", "zero_rhs_ge"])
def test_dual_program_has_equal_optimum(name):
    lp = TINY[name]
    dual = dualize(lp)
    assert dual.name == f"dual of {lp.name}"
    assert [c.name for c in dual.constraints] == lp.variable_names()
    assert solve(dual, settings=EXACT).objective == solve(lp, settings=EXACT).objective


def test_dualize_renames_multipliers():
    dual = dualize(TINY["diet"], {"c0": "y_first"})
    assert {v.name for v in dual.variables} == {"y_first", "c1"}
    assert dualize(TINY["diet"], str.upper).objective == {"C0": 4, "C1": 6}


def test_debug_trace_never_worsens():
    sol = solve(TINY["production"], debug=True, settings=EXACT)
    assert sol.trace
    assert sol.trace == sorted(sol.trace, reverse=True)


@pytest.mark.parametrize("name", [n for n, (status, _) in EXPECTED.items() if status == "optimal"])
def test_dual_bounds_never_exceed_primal_iterates(name):
    lp = TINY[name]
    sol = solve(lp, debug=True, settings=EXACT)
    assert len(sol.dual_trace) == len(sol.trace)
    bounds = [d for d in sol.dual_trace if d is not None]
    assert all(d <= p for d in bounds for p in sol.trace)
    # the final basis is sign-feasible and closes the gap
    assert sol.dual_trace[-1] == sol.trace[-1]
    assert sol.trace[-1] == (sol.objective if lp.sense == "min" else -sol.objective)


def test_dual_bounds_on_a_delayed_hedging_program(binomial, binomial_view, binomial_call):
    sol = solve(build_seller_delayed_lp(binomial, binomial_view, binomial_call), debug=True, settings=EXACT)
    bounds = [d for d in sol.dual_trace if d is not None]
    assert bounds[-1] == sol.objective == Fraction(60, 17)
    assert max(bounds) <= min(sol.trace)


def test_oracle_refuses_large_programs():
    names = [f"x{j}" for j in range(15)]
    lp = make_lp("min", [(n, True) for n in names], [({n: 1 for n in names}, ">=", 1)], {n: 1 for n in names})
    assert solve(lp, settings=EXACT).objective == 1
    with pytest.raises(OracleSizeError):
        enumerate_bases_oracle(lp)


def test_lp_text_form_and_dump(tmp_path):
    text = format_lp(TINY["free_lower_bound"])
    assert "Minimize" in text and "Subject To" in text
    assert "Free\n  x" in text
    solve(TINY["diet"], settings=Settings(mode="exact", lp_dump_dir=str(tmp_path)))
    assert (tmp_path / "lp.lp").read_text().startswith("\\ lp")
