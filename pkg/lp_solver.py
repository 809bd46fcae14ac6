"""Two-phase simplex over exact rationals (or float64), with dual recovery.

The tableau is a numpy array: object dtype holding `Fraction` in exact mode,
float64 in float mode. Entering and leaving variables follow Bland's rule so
the method terminates without a cycling guard; `debug=True` adds one anyway.
"""

import itertools
import logging
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, List, Literal, Mapping, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config import Settings, get_settings
from exact import Number, format_scalar

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class IterationLimitError(SolverError):
    pass


class CyclingError(SolverError):
    pass


class NumericalError(SolverError):
    """Float-mode optimum failed its optimality certificate."""


class OracleSizeError(SolverError):
    pass


class Relation(str, Enum):
    LE = "<="
    GE = ">="
    EQ = "="


class Variable(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    nonneg: bool = True


class Constraint(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    coeffs: Dict[str, Number]
    relation: Relation
    rhs: Number = Fraction(0)


class LinearProgram(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str = "lp"
    sense: Literal["min", "max"]
    variables: Tuple[Variable, ...]
    constraints: Tuple[Constraint, ...]
    objective: Dict[str, Number]

    def variable_names(self) -> List[str]:
        return [v.name for v in self.variables]


class Solution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    status: Literal["optimal", "infeasible", "unbounded"]
    mode: Literal["exact", "float"] = "exact"
    objective: Optional[Number] = None
    values: Dict[str, Number] = Field(default_factory=dict)
    duals: Dict[str, Number] = Field(default_factory=dict)
    reduced_costs: Dict[str, Number] = Field(default_factory=dict)
    pivots: int = 0
    trace: List[Number] = Field(default_factory=list, description="Phase-2 objective at each basis (debug)")
    dual_trace: List[Optional[Number]] = Field(
        default_factory=list, description="b.y at each phase-2 basis whose multipliers are sign-feasible (debug)"
    )


class CertificateReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    primal_residual: Number
    dual_sign_violations: List[str] = Field(default_factory=list)
    dual_infeasible: List[str] = Field(default_factory=list)
    complementary_violations: List[str] = Field(default_factory=list)
    objective_gap: Number
    passed: bool


# --- Standard form ---
class _StandardForm:
    """min c.x, A x = b, x >= 0, b >= 0; free variables split, rows flipped to b >= 0."""

    def __init__(self, lp: LinearProgram, convert: Callable, with_artificials: bool = True):
        self.lp = lp
        self.columns: List[Tuple[str, str, int]] = []  # (kind, owner, sign)
        self.var_columns: Dict[str, List[Tuple[int, int]]] = {}
        for var in lp.variables:
            cols = [(self._add("structural", var.name, 1), 1)]
            if not var.nonneg:
                cols.append((self._add("structural", var.name, -1), -1))
            self.var_columns[var.name] = cols
        known = set(self.var_columns)

        self.flips: List[int] = []
        self.relations: List[Relation] = []
        rows: List[Dict[int, object]] = []
        rhs: List[object] = []
        self.unit_col: List[Optional[int]] = []
        for con in lp.constraints:
            unknown = set(con.coeffs) - known
            if unknown:
                raise ValueError(f"constraint {con.name!r} uses unknown variable {sorted(unknown)[0]!r}")
            b = convert(con.rhs)
            relation = con.relation
            flip = 1
            if b < 0 or (b == 0 and relation == Relation.GE):
                flip = -1
                b = -b
                relation = {Relation.LE: Relation.GE, Relation.GE: Relation.LE, Relation.EQ: Relation.EQ}[relation]
            row: Dict[int, object] = {}
            for name, a in con.coeffs.items():
                for col, sign in self.var_columns[name]:
                    row[col] = row.get(col, 0) + convert(a) * sign * flip
            unit = None
            if relation == Relation.LE:
                unit = self._add("slack", con.name, 1)
                row[unit] = convert(1)
            elif relation == Relation.GE:
                row[self._add("surplus", con.name, -1)] = convert(-1)
            if unit is None and with_artificials:
                unit = self._add("artificial", con.name, 1)
                row[unit] = convert(1)
            self.flips.append(flip)
            self.relations.append(relation)
            rows.append(row)
            rhs.append(b)
            self.unit_col.append(unit)

        n = len(self.columns)
        sign = 1 if lp.sense == "min" else -1
        self.cost = [convert(0)] * n
        for name, c in lp.objective.items():
            if name not in self.var_columns:
                raise ValueError(f"objective uses unknown variable {name!r}")
            for col, col_sign in self.var_columns[name]:
                self.cost[col] = convert(c) * col_sign * sign
        self.rows = rows
        self.rhs = rhs

    def _add(self, kind: str, owner: str, sign: int) -> int:
        self.columns.append((kind, owner, sign))
        return len(self.columns) - 1

    @property
    def artificial(self) -> List[bool]:
        return [kind == "artificial" for kind, _, _ in self.columns]

    def dense(self, dtype, zero) -> np.ndarray:
        A = np.full((len(self.rows), len(self.columns)), zero, dtype=dtype)
        for i, row in enumerate(self.rows):
            for col, a in row.items():
                A[i, col] = a
        return A

    def original_values(self, x_std: List) -> Dict[str, object]:
        return {name: sum((x_std[c] * s for c, s in cols), x_std[cols[0][0]] * 0)
                for name, cols in self.var_columns.items()}


def _converter(mode: str) -> Callable:
    return Fraction if mode == "exact" else float


def _nonzero(values: np.ndarray, eps) -> np.ndarray:
    if eps:
        return np.flatnonzero(np.abs(values.astype(float)) > eps)
    return np.flatnonzero(np.asarray(values != 0, dtype=bool))


def _pivot(T: np.ndarray, r: int, c: int) -> None:
    T[r] = T[r] / T[r, c]
    cols = _nonzero(T[r], 0)
    for i in _nonzero(T[:, c], 0):
        if i == r:
            continue
        factor = T[i, c]
        T[i, cols] = T[i, cols] - factor * T[r, cols]
        T[i, c] = 0 * factor


class _Simplex:
    def __init__(self, std: _StandardForm, mode: str, eps, limit: int, debug: bool):
        self.std, self.mode, self.eps, self.limit, self.debug = std, mode, eps, limit, debug
        convert = _converter(mode)
        dtype = object if mode == "exact" else float
        self.zero = convert(0)
        m, n = len(std.rows), len(std.columns)
        self.m, self.n = m, n
        self.T = np.full((m + 1, n + 1), self.zero, dtype=dtype)
        self.T[:m, :n] = std.dense(dtype, self.zero)
        for i, b in enumerate(std.rhs):
            self.T[i, n] = b
        self.basis: List[int] = list(std.unit_col)
        self.blocked = std.artificial
        self.pivots = 0
        self.trace: List[object] = []
        self.dual_trace: List[Optional[object]] = []

    def _set_objective(self, cost: List) -> None:
        m, n = self.m, self.n
        self.T[m, :n] = np.array(cost, dtype=self.T.dtype)
        self.T[m, n] = self.zero
        for i, col in enumerate(self.basis):
            if cost[col] != 0:
                self.T[m] = self.T[m] - cost[col] * self.T[i]

    def _entering(self) -> Optional[int]:
        r = self.T[self.m, : self.n]
        for j in range(self.n):
            if not self.blocked[j] and r[j] < -self.eps:
                return j
        return None

    def _leaving(self, j: int) -> Optional[int]:
        best, best_ratio = None, None
        for i in range(self.m):
            a = self.T[i, j]
            if a > self.eps:
                ratio = self.T[i, self.n] / a
                if (
                    best is None
                    or ratio < best_ratio - self.eps
                    or (abs(ratio - best_ratio) <= self.eps and self.basis[i] < self.basis[best])
                ):
                    best, best_ratio = i, ratio
        return best

    def _step(self, r: int, c: int) -> None:
        self.pivots += 1
        if self.pivots > self.limit:
            raise IterationLimitError(f"simplex exceeded {self.limit} pivots on {self.std.lp.name!r}")
        _pivot(self.T, r, c)
        self.basis[r] = c

    def run(self, phase: str) -> str:
        seen = set()
        while True:
            if self.debug:
                key = tuple(self.basis)
                if key in seen:
                    raise CyclingError(f"basis repeated in {phase} on {self.std.lp.name!r}")
                seen.add(key)
            if self.debug and phase == "phase 2":
                self.trace.append(-self.T[self.m, self.n])
                self.dual_trace.append(self.dual_bound())
            j = self._entering()
            if j is None:
                return "optimal"
            i = self._leaving(j)
            if i is None:
                return "unbounded"
            self._step(i, j)

    def phase_one(self) -> bool:
        artificial = self.std.artificial
        if not any(artificial):
            return True
        self._set_objective([self.zero + 1 if a else self.zero for a in artificial])
        self.run("phase 1")
        if -self.T[self.m, self.n] > self.eps:
            return False
        for i in range(self.m):
            if not artificial[self.basis[i]]:
                continue
            for j in range(self.n):
                if not artificial[j] and abs(self.T[i, j]) > self.eps:
                    self._step(i, j)
                    break
            # otherwise the row is redundant; its artificial stays basic at zero
        return True

    def phase_two(self) -> str:
        self._set_objective([self.zero if a else c for a, c in zip(self.std.artificial, self.std.cost)])
        return self.run("phase 2")

    def primal(self) -> List:
        x = [self.zero] * self.n
        for i, col in enumerate(self.basis):
            x[col] = self.T[i, self.n]
        return x

    def row_duals(self) -> List:
        # unit columns carry zero cost, so their reduced cost is -y_i
        r = self.T[self.m]
        return [-r[col] for col in self.std.unit_col]

    def dual_bound(self) -> Optional[object]:
        """Standard-form dual objective, or None while some reduced cost is negative."""
        r = self.T[self.m, : self.n]
        if any(not self.blocked[j] and r[j] < -self.eps for j in range(self.n)):
            return None
        return sum((b * y for b, y in zip(self.std.rhs, self.row_duals())), self.zero)


def _finish(lp: LinearProgram, mode: str, values: Dict[str, object], duals: Dict[str, object],
            pivots: int = 0, trace: Optional[List] = None, dual_trace: Optional[List] = None) -> Solution:
    objective = sum((values[name] * c for name, c in _coerce(lp.objective, mode).items()), _converter(mode)(0))
    return Solution(
        status="optimal",
        mode=mode,
        objective=objective,
        values=values,
        duals=duals,
        reduced_costs=reduced_costs(lp, duals, mode),
        pivots=pivots,
        trace=trace or [],
        dual_trace=dual_trace or [],
    )


def _coerce(coeffs: Mapping[str, object], mode: str) -> Dict[str, object]:
    convert = _converter(mode)
    return {k: convert(v) for k, v in coeffs.items()}


def reduced_costs(lp: LinearProgram, duals: Mapping[str, object], mode: str = "exact") -> Dict[str, object]:
    convert = _converter(mode)
    costs = {v.name: convert(lp.objective.get(v.name, 0)) for v in lp.variables}
    for con in lp.constraints:
        y = duals.get(con.name, 0)
        if y == 0:
            continue
        for name, a in con.coeffs.items():
            costs[name] -= convert(y) * convert(a)
    return costs


def solve(
    lp: LinearProgram,
    mode: Optional[str] = None,
    tol: Optional[float] = None,
    debug: bool = False,
    settings: Optional[Settings] = None,
) -> Solution:
    settings = settings or get_settings()
    mode = mode or settings.mode
    tol = settings.tolerance if tol is None else tol
    if settings.lp_dump_dir:
        dump_lp(lp, settings.lp_dump_dir)

    convert = _converter(mode)
    eps = 0 if mode == "exact" else tol
    std = _StandardForm(lp, convert)
    limit = settings.pivot_factor * (len(std.rows) + len(std.columns))
    simplex = _Simplex(std, mode, eps, limit, debug)
    logger.debug(f"Solving {lp.name!r}: {len(std.rows)} rows, {len(std.columns)} columns, {mode} mode")

    if not simplex.phase_one():
        logger.debug(f"{lp.name!r} is infeasible")
        return Solution(status="infeasible", mode=mode, pivots=simplex.pivots)
    if simplex.phase_two() == "unbounded":
        logger.debug(f"{lp.name!r} is unbounded")
        return Solution(status="unbounded", mode=mode, pivots=simplex.pivots)

    values = std.original_values(simplex.primal())
    sign = 1 if lp.sense == "min" else -1
    duals = {
        con.name: y * flip * sign
        for con, y, flip in zip(lp.constraints, simplex.row_duals(), std.flips)
    }
    solution = _finish(lp, mode, values, duals, simplex.pivots, simplex.trace, simplex.dual_trace)
    if mode == "float":
        report = check_certificates(lp, solution, tol)
        if not report.passed:
            raise NumericalError(f"optimality certificate failed for {lp.name!r}: {report.model_dump()}")
    logger.debug(f"{lp.name!r} optimal after {simplex.pivots} pivots: {format_scalar(solution.objective)}")
    return solution


def constraint_residuals(lp: LinearProgram, values: Mapping[str, object]) -> Dict[str, object]:
    """lhs - rhs for every constraint."""
    residuals = {}
    for con in lp.constraints:
        lhs = sum((a * values.get(name, 0) for name, a in con.coeffs.items()), 0 * con.rhs)
        residuals[con.name] = lhs - con.rhs
    return residuals


def constraint_violations(lp: LinearProgram, values: Mapping[str, object]) -> Dict[str, object]:
    """Amount by which each constraint fails at `values` (zero when satisfied)."""
    violations = {}
    for con, slack in zip(lp.constraints, constraint_residuals(lp, values).values()):
        if con.relation == Relation.EQ:
            violations[con.name] = abs(slack)
        elif con.relation == Relation.LE:
            violations[con.name] = max(slack, 0 * slack)
        else:
            violations[con.name] = max(-slack, 0 * slack)
    return violations


def check_certificates(lp: LinearProgram, solution: Solution, tol: float = 0) -> CertificateReport:
    if solution.status != "optimal":
        raise ValueError(f"no certificate for a {solution.status} solution")
    x, y = solution.values, solution.duals
    residual = 0 * solution.objective
    sign_violations, complementary = [], []
    violations = constraint_violations(lp, x)
    for con, slack in zip(lp.constraints, constraint_residuals(lp, x).values()):
        residual = max(residual, violations[con.name])
        multiplier = y.get(con.name, 0)
        # min: >= rows carry y >= 0, <= rows y <= 0; max is mirrored
        expected = 0
        if con.relation != Relation.EQ:
            expected = 1 if (con.relation == Relation.GE) == (lp.sense == "min") else -1
        if expected and multiplier * expected < -tol:
            sign_violations.append(con.name)
        if con.relation != Relation.EQ and abs(multiplier * slack) > tol:
            complementary.append(con.name)

    infeasible = []
    costs = solution.reduced_costs or reduced_costs(lp, y, solution.mode)
    for var in lp.variables:
        r = costs[var.name]
        value = x.get(var.name, 0)
        if var.nonneg:
            residual = max(residual, -value)
            if (lp.sense == "min" and r < -tol) or (lp.sense == "max" and r > tol):
                infeasible.append(var.name)
            if abs(r * value) > tol:
                complementary.append(var.name)
        elif abs(r) > tol:
            infeasible.append(var.name)

    dual_objective = sum((y.get(con.name, 0) * con.rhs for con in lp.constraints), 0 * solution.objective)
    gap = solution.objective - dual_objective
    passed = residual <= tol and abs(gap) <= tol and not (sign_violations or infeasible or complementary)
    return CertificateReport(
        primal_residual=residual,
        dual_sign_violations=sign_violations,
        dual_infeasible=infeasible,
        complementary_violations=complementary,
        objective_gap=gap,
        passed=passed,
    )


# --- Exhaustive basis enumeration (test oracle) ---
ORACLE_MAX_COLUMNS = 14


def _solve_square(M: List[List[Fraction]], rhs: List[Fraction]) -> Optional[List[Fraction]]:
    n = len(M)
    aug = [list(row) + [b] for row, b in zip(M, rhs)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            return None
        aug[col], aug[pivot] = aug[pivot], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [aug[r][n] for r in range(n)]


def _independent_rows(A: List[List[Fraction]], b: List[Fraction]) -> Optional[List[int]]:
    """Indices of a maximal independent row set of [A|b]; None when A x = b is inconsistent."""
    echelon: List[Tuple[int, List[Fraction]]] = []
    kept = []
    for i, (row, rhs) in enumerate(zip(A, b)):
        vec = list(row) + [rhs]
        for col, basis_row in echelon:
            if vec[col] != 0:
                f = vec[col]
                vec = [a - f * c for a, c in zip(vec, basis_row)]
        lead = next((c for c in range(len(row)) if vec[c] != 0), None)
        if lead is None:
            if vec[-1] != 0:
                return None
            continue
        vec = [v / vec[lead] for v in vec]
        echelon.append((lead, vec))
        kept.append(i)
    return kept


def enumerate_bases_oracle(lp: LinearProgram) -> Solution:
    """Exact optimum by trying every basis; only for tiny LPs."""
    std = _StandardForm(lp, Fraction, with_artificials=False)
    n = len(std.columns)
    if n > ORACLE_MAX_COLUMNS:
        raise OracleSizeError(f"{lp.name!r} has {n} standard-form columns, oracle limit is {ORACLE_MAX_COLUMNS}")
    A = std.dense(object, Fraction(0)).tolist()
    rows = _independent_rows(A, std.rhs)
    if rows is None:
        return Solution(status="infeasible")
    A = [A[i] for i in rows]
    b = [std.rhs[i] for i in rows]
    c = std.cost
    feasible_found = False
    for cols in itertools.combinations(range(n), len(rows)):
        B = [[A[i][j] for j in cols] for i in range(len(rows))]
        x_B = _solve_square(B, b)
        if x_B is None or any(v < 0 for v in x_B):
            continue
        feasible_found = True
        BT = [[B[i][k] for i in range(len(rows))] for k in range(len(cols))]
        y = _solve_square(BT, [c[j] for j in cols])
        reduced = [c[j] - sum((y[i] * A[i][j] for i in range(len(rows))), Fraction(0)) for j in range(n)]
        if any(r < 0 for r in reduced):
            continue
        x = [Fraction(0)] * n
        for j, v in zip(cols, x_B):
            x[j] = v
        y_rows = dict(zip(rows, y))
        sign = 1 if lp.sense == "min" else -1
        duals = {con.name: y_rows.get(i, Fraction(0)) * std.flips[i] * sign for i, con in enumerate(lp.constraints)}
        return _finish(lp, "exact", std.original_values(x), duals)
    return Solution(status="unbounded" if feasible_found else "infeasible")


# --- Duality and text form ---
def dualize(lp: LinearProgram, rename: Union[Mapping[str, str], Callable[[str], str], None] = None) -> LinearProgram:
    """Textbook LP dual; one dual variable per constraint, one dual row per primal variable.

    A min problem's rows are first written as >= or =, a max problem's as <= or =,
    so every inequality multiplier is non-negative.
    """
    if rename is None:
        name_of = lambda n: n  # noqa: E731
    elif callable(rename):
        name_of = rename
    else:
        name_of = lambda n: rename.get(n, n)  # noqa: E731

    minimize = lp.sense == "min"
    wrong_way = Relation.LE if minimize else Relation.GE
    rows = []
    for con in lp.constraints:
        if con.relation == wrong_way:
            rows.append((con.name, {k: -v for k, v in con.coeffs.items()}, -con.rhs, True))
        else:
            rows.append((con.name, dict(con.coeffs), con.rhs, con.relation != Relation.EQ))
    variables = tuple(Variable(name=name_of(name), nonneg=inequality) for name, _, _, inequality in rows)
    constraints = []
    for var in lp.variables:
        coeffs = {
            name_of(name): row_coeffs[var.name]
            for name, row_coeffs, _, _ in rows
            if row_coeffs.get(var.name, 0) != 0
        }
        if not var.nonneg:
            relation = Relation.EQ
        else:
            relation = Relation.LE if minimize else Relation.GE
        constraints.append(Constraint(name=var.name, coeffs=coeffs, relation=relation,
                                      rhs=lp.objective.get(var.name, Fraction(0))))
    return LinearProgram(
        name=f"dual of {lp.name}",
        sense="max" if minimize else "min",
        variables=variables,
        constraints=tuple(constraints),
        objective={name_of(name): rhs for name, _, rhs, _ in rows if rhs != 0},
    )


def _format_terms(coeffs: Mapping[str, object]) -> str:
    terms = [f"{format_scalar(a)} {name}" for name, a in coeffs.items() if a != 0]
    return " + ".join(terms) if terms else "0"


def format_lp(lp: LinearProgram) -> str:
    lines = [f"\\ {lp.name}", "Minimize" if lp.sense == "min" else "Maximize", f"  obj: {_format_terms(lp.objective)}",
             "Subject To"]
    lines += [f"  {c.name}: {_format_terms(c.coeffs)} {c.relation.value} {format_scalar(c.rhs)}" for c in lp.constraints]
    free = [v.name for v in lp.variables if not v.nonneg]
    if free:
        lines += ["Free", "  " + " ".join(free)]
    lines.append("End")
    return "\n".join(lines) + "\n"


def dump_lp(lp: LinearProgram, directory) -> Path:
    target = Path(directory)
    target.mkdir(parents=True, exist_ok=True)
    safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in lp.name)
    path = target / f"{safe}.lp"
    path.write_text(format_lp(lp))
    logger.debug(f"Wrote {path}")
    return path
