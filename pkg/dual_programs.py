"""Dual programs of the delayed seller problem and the no-gap check.

Two dual forms are built straight from the market:

* the raw dual, one equation family per G-vertex, with multipliers y0, y
  (F-vertices at 1..T-2), w (F-vertices at T-1) and z >= 0 on terminals;
* the measure form, where w is eliminated and z becomes a probability q.

Eliminating w drops the requirement that, at each F-vertex x at T-2, the
grandchild sum of q-weighted prices lies in the span of the children's price
vectors. The measure form is therefore a relaxation of the raw dual, exact
whenever `reduction_exact` holds.
"""

import logging
from fractions import Fraction
from typing import Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from config import Settings, get_settings
from exact import Number, exact_rank, fsum
from lp_solver import Constraint, LinearProgram, Relation, Solution, Variable, constraint_violations, dualize, solve
from market_model import Claim, DelayedView, HorizonError, Market, derive_delayed_view
from primal_programs import (
    BUDGET,
    KAPPA,
    build_buyer_delayed_lp,
    build_seller_delayed_lp,
    delayed_rebalancing,
    hedge_row,
    rebalance_row,
)

logger = logging.getLogger(__name__)

Sense = Literal["sup", "inf"]
Form = Literal["raw", "measure"]


class InfeasibleDualPoint(ValueError):
    pass


class DualPoint(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    form: Form = "measure"
    y0: Number = Fraction(1)
    y: Dict[str, Number] = Field(default_factory=dict, description="F-vertices at times 1..T-2")
    w: Dict[str, Number] = Field(default_factory=dict, description="F-vertices at time T-1")
    q: Dict[str, Number] = Field(default_factory=dict, description="z (raw form) or q (measure form) per terminal")

    def values(self) -> Dict[str, object]:
        named = {"y0": self.y0}
        named.update({y_var(v): x for v, x in self.y.items()})
        named.update({w_var(v): x for v, x in self.w.items()})
        prefix = z_var if self.form == "raw" else q_var
        named.update({prefix(v): x for v, x in self.q.items()})
        return named

    def objective(self, b: Claim):
        return sum((x * b.value(v) for v, x in self.q.items()), Fraction(0))


class GapReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    p_tilde: Optional[Number] = None
    d_tilde: Optional[Number] = None
    gap: Optional[Number] = None
    raw_dual: Optional[Number] = None
    raw_gap: Optional[Number] = None
    primal_status: str
    dual_status: str
    reduction_exact: bool
    tol: float = Field(0, ge=0, description="Relative tolerance for the gap checks; 0 in exact mode")

    def _within(self, value, scale) -> bool:
        return value <= self.tol * max(1, abs(scale))

    @property
    def consistent(self) -> bool:
        if self.gap is None:
            return False
        scale = self.p_tilde if self.p_tilde is not None else 1
        if self.raw_gap is not None and not self._within(abs(self.raw_gap), scale):
            return False
        if self.reduction_exact:
            return self._within(abs(self.gap), scale)
        return self._within(self.gap, scale)


def y_var(v: str) -> str:
    return f"y[{v}]"


def w_var(v: str) -> str:
    return f"w[{v}]"


def z_var(v: str) -> str:
    return f"z[{v}]"


def q_var(v: str) -> str:
    return f"q[{v}]"


def _add(coeffs: Dict[str, Fraction], name: str, value) -> None:
    if value != 0:
        coeffs[name] = coeffs.get(name, Fraction(0)) + value


def _vector_rows(prefix: str, terms_per_component, rhs=None, n: int = 0):
    """One scalar equation per asset component; trivial 0 = 0 rows dropped."""
    rows = []
    for k in range(n):
        coeffs = {name: c for name, c in terms_per_component(k).items() if c != 0}
        target = rhs[k] if rhs is not None else Fraction(0)
        if coeffs or target != 0:
            rows.append(Constraint(name=f"{prefix}[{k}]", coeffs=coeffs, relation=Relation.EQ, rhs=target))
    return rows


def _level_var(m: Market, u: str) -> str:
    return w_var(u) if m.time(u) == m.horizon - 1 else y_var(u)


def build_dual_raw(m: Market, g: DelayedView, b: Claim) -> LinearProgram:
    """Raw Lagrange dual of the delayed seller program (T >= 4).

    One scalar equation per (primal column, asset component): kappa gives
    y0 = 1, H at the G-root gives y0 S_root = sum y_u S_u over F_1, H at a
    G-vertex with reference x gives sum over u in C(x) of
    (y_u S_u - sum over mu in C(u) of y_mu S_mu) = 0, where the G-vertex at
    T-1 closes with w_u S_u against z_gamma S_gamma on grandchildren.
    """
    T = m.horizon
    if T < 4:
        raise HorizonError(f"raw dual is stated for T >= 4, market has T = {T}")
    b.check_market(m)
    n = m.asset_count

    variables = [Variable(name="y0", nonneg=False)]
    for t in range(1, T - 1):
        variables += [Variable(name=y_var(u), nonneg=False) for u in m.vertices_at(t)]
    variables += [Variable(name=w_var(u), nonneg=False) for u in m.vertices_at(T - 1)]
    variables += [Variable(name=z_var(gamma)) for gamma in m.terminals]

    constraints = [Constraint(name=KAPPA, coeffs={"y0": Fraction(1)}, relation=Relation.EQ, rhs=Fraction(1))]
    root = m.root

    def root_terms(k):
        coeffs = {"y0": m.prices(root)[k]}
        for u in m.children(root):
            _add(coeffs, _level_var(m, u), -m.prices(u)[k])
        return coeffs

    constraints += _vector_rows(f"H[{g.root}]", root_terms, n=n)
    for t in range(1, T):
        for v in g.vertices_at(t):
            x = g.f_ref(v)

            def terms(k, x=x, closing=(t == T - 1)):
                coeffs: Dict[str, Fraction] = {}
                for u in m.children(x):
                    _add(coeffs, _level_var(m, u), m.prices(u)[k])
                    if closing:
                        for gamma in m.children(u):
                            _add(coeffs, z_var(gamma), -m.prices(gamma)[k])
                    else:
                        for mu in m.children(u):
                            _add(coeffs, _level_var(m, mu), -m.prices(mu)[k])
                return coeffs

            constraints += _vector_rows(f"H[{v}]", terms, n=n)

    return LinearProgram(
        name="raw dual",
        sense="max",
        variables=tuple(variables),
        constraints=tuple(constraints),
        objective={z_var(gamma): b.value(gamma) for gamma in m.terminals if b.value(gamma) != 0},
    )


def _dual_rename(m: Market, g: DelayedView) -> Dict[str, str]:
    names = {BUDGET: "y0"}
    names.update({hedge_row(gamma): q_var(gamma) for gamma in m.terminals})
    for vertex, _, atom in delayed_rebalancing(m, g):
        names[rebalance_row(vertex, atom)] = _level_var(m, atom)
    return names


def build_measure_dual(m: Market, b: Claim, sense: Sense = "sup") -> LinearProgram:
    """Measure form: optimize E_Q[B] over free y (F-times 1..T-2) and a probability q.

    (i)   S_root = sum over C(root) of y_u S_u
    (ii)  sum over u in C(v) of (y_u S_u - sum over mu in C(u) of y_mu S_mu) = 0, v at 0..T-4
    (iii) sum over u in C(v) of y_u S_u = sum of q_gamma S_gamma over terminals below v, v at T-3

    The three families need T >= 4. For T in {2, 3} the form is the
    textbook dual of the seller (sup) or buyer (inf) delayed program, with
    the budget multiplier as y0, rebalancing multipliers at T-1 as w and the
    hedging multipliers as q.
    """
    T = m.horizon
    b.check_market(m)
    if T < 4:
        g = derive_delayed_view(m)
        primal = build_seller_delayed_lp(m, g, b) if sense == "sup" else build_buyer_delayed_lp(m, g, b)
        lp = dualize(primal, _dual_rename(m, g))
        return lp.model_copy(update={"name": f"measure dual ({sense})"})

    n = m.asset_count
    variables = [Variable(name=y_var(u), nonneg=False) for t in range(1, T - 1) for u in m.vertices_at(t)]
    variables += [Variable(name=q_var(gamma)) for gamma in m.terminals]
    constraints = [
        Constraint(
            name="mass",
            coeffs={q_var(gamma): Fraction(1) for gamma in m.terminals},
            relation=Relation.EQ,
            rhs=Fraction(1),
        )
    ]

    root = m.root

    def root_terms(k):
        coeffs: Dict[str, Fraction] = {}
        for u in m.children(root):
            _add(coeffs, y_var(u), m.prices(u)[k])
        return coeffs

    constraints += _vector_rows("root", root_terms, rhs=m.prices(root), n=n)
    for t in range(0, T - 2):
        for v in m.vertices_at(t):

            def terms(k, v=v, closing=(t == T - 3)):
                coeffs: Dict[str, Fraction] = {}
                for u in m.children(v):
                    _add(coeffs, y_var(u), m.prices(u)[k])
                if closing:
                    for gamma in m.terminal_descendants(v):
                        _add(coeffs, q_var(gamma), -m.prices(gamma)[k])
                else:
                    for mu in m.grandchildren(v):
                        _add(coeffs, y_var(mu), -m.prices(mu)[k])
                return coeffs

            constraints += _vector_rows(f"{'close' if t == T - 3 else 'step'}[{v}]", terms, n=n)

    return LinearProgram(
        name=f"measure dual ({sense})",
        sense="max" if sense == "sup" else "min",
        variables=tuple(variables),
        constraints=tuple(constraints),
        objective={q_var(gamma): b.value(gamma) for gamma in m.terminals if b.value(gamma) != 0},
    )


def dual_point_from_solution(m: Market, lp: LinearProgram, sol: Solution) -> DualPoint:
    if sol.status != "optimal":
        raise ValueError(f"no dual point in a {sol.status} solution")
    raw = any(var.name.startswith("z[") for var in lp.variables)
    point = {"y0": sol.values.get("y0", Fraction(1)), "y": {}, "w": {}, "q": {}}
    for name, value in sol.values.items():
        if name == "y0":
            continue
        kind, vertex = name[0], name[2:-1]
        point[{"y": "y", "w": "w", "z": "q", "q": "q"}[kind]][vertex] = value
    return DualPoint(form="raw" if raw else "measure", **point)


def dual_point_residuals(m: Market, point: DualPoint, form: Optional[Form] = None) -> Dict[str, object]:
    """Violated rows of the chosen dual form at `point` (empty when feasible)."""
    form = form or point.form
    zero_claim = Claim.constant(m, 0)
    if form == "raw":
        lp = build_dual_raw(m, derive_delayed_view(m), zero_claim)
    else:
        lp = build_measure_dual(m, zero_claim)
    values = point.model_copy(update={"form": form}).values()
    residuals = {name: v for name, v in constraint_violations(lp, values).items() if v != 0}
    for var in lp.variables:
        if var.nonneg and values.get(var.name, 0) < 0:
            residuals[var.name] = -values[var.name]
    return residuals


def _level_values(m: Market, point: DualPoint) -> Dict[str, object]:
    merged: Dict[str, object] = dict(point.w)
    merged.update(point.y)
    return merged


def check_mass_identity(m: Market, point: DualPoint) -> bool:
    """Sum of q equals y0 = 1 and the q-weighted terminal prices reproduce y0 S_root.

    The y-only equations of the point are checked first; a failure there means
    the point is not dual feasible and is rejected rather than answered.
    """
    for gamma, mass in point.q.items():
        if mass < 0:
            raise InfeasibleDualPoint(f"negative mass at terminal {gamma!r}")
    levels = _level_values(m, point)
    n = m.asset_count

    def present(t: int) -> bool:
        vertices = m.vertices_at(t)
        return bool(vertices) and all(v in levels for v in vertices)

    if present(1):
        for k in range(n):
            lhs = sum((levels[u] * m.prices(u)[k] for u in m.children(m.root)), 0 * point.y0)
            if lhs != point.y0 * m.prices(m.root)[k]:
                raise InfeasibleDualPoint(f"root equation fails in component {k}")
    for t in range(0, m.horizon - 2):
        if not (present(t + 1) and present(t + 2)):
            continue
        for x in m.vertices_at(t):
            for k in range(n):
                balance = sum(
                    (levels[u] * m.prices(u)[k] - fsum(levels[mu] * m.prices(mu)[k] for mu in m.children(u))
                     for u in m.children(x)),
                    0 * point.y0,
                )
                if balance != 0:
                    raise InfeasibleDualPoint(f"level equation at {x!r} fails in component {k}")

    total = sum(point.q.values(), 0 * point.y0)
    if total != point.y0 or point.y0 != 1:
        return False
    for k in range(n):
        weighted = sum((mass * m.prices(gamma)[k] for gamma, mass in point.q.items()), 0 * point.y0)
        if weighted != point.y0 * m.prices(m.root)[k]:
            return False
    return True


def multipliers_as_raw_dual(m: Market, g: DelayedView, sol: Solution) -> DualPoint:
    """Read the seller program's multipliers in raw-dual coordinates."""
    if sol.status != "optimal":
        raise ValueError(f"no multipliers in a {sol.status} solution")
    y, w = {}, {}
    for vertex, _, atom in delayed_rebalancing(m, g):
        target = w if m.time(atom) == m.horizon - 1 else y
        target[atom] = sol.duals[rebalance_row(vertex, atom)]
    return DualPoint(
        form="raw",
        y0=sol.duals[BUDGET],
        y=y,
        w=w,
        q={gamma: sol.duals[hedge_row(gamma)] for gamma in m.terminals},
    )


def reduction_exact(m: Market) -> bool:
    """True when the measure form is equivalent to the raw dual.

    Needs, at each F-vertex x at T-2, every grandchild price vector to lie in
    the span of the children's price vectors.
    """
    if m.horizon < 4:
        return True
    for x in m.vertices_at(m.horizon - 2):
        children = [m.prices(u) for u in m.children(x)]
        if exact_rank(children) != exact_rank(children + [m.prices(mu) for mu in m.grandchildren(x)]):
            return False
    return True


def verify_no_gap(
    m: Market,
    g: Optional[DelayedView],
    b: Claim,
    mode: Optional[str] = None,
    settings: Optional[Settings] = None,
) -> GapReport:
    settings = settings or get_settings()
    tol = 0 if (mode or settings.mode) == "exact" else settings.tolerance
    g = g or derive_delayed_view(m)
    primal = solve(build_seller_delayed_lp(m, g, b), mode=mode, settings=settings)
    dual = solve(build_measure_dual(m, b, "sup"), mode=mode, settings=settings)
    exact = reduction_exact(m)
    report = {
        "primal_status": primal.status,
        "dual_status": dual.status,
        "reduction_exact": exact,
        "tol": tol,
        "p_tilde": primal.objective,
        "d_tilde": dual.objective,
    }
    if primal.status == "optimal" and dual.status == "optimal":
        report["gap"] = primal.objective - dual.objective
    if m.horizon >= 4:
        raw = solve(build_dual_raw(m, g, b), mode=mode, settings=settings)
        if raw.status == "optimal":
            report["raw_dual"] = raw.objective
            if primal.status == "optimal":
                report["raw_gap"] = primal.objective - raw.objective
    gap = GapReport(**report)
    if gap.gap is None:
        logger.warning(f"⚠️ No gap computed: primal {primal.status}, dual {dual.status}")
    elif gap.gap == 0:
        logger.info(f"✅ No duality gap: p̃ = d̃ = {gap.p_tilde}")
    else:
        logger.info(f"📊 p̃ = {gap.p_tilde}, d̃ = {gap.d_tilde} (measure form is a relaxation here)")
    return gap
