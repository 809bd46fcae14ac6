"""Scenario-tree market, claims and the one-step delayed information tree."""

import json
import logging
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from exact import Scalar, format_scalar, fsum

logger = logging.getLogger(__name__)


class MarketError(ValueError):
    """Market document could not be parsed or violates a tree invariant."""


class ClaimError(ValueError):
    pass


class HorizonError(ValueError):
    """A program builder does not support the market's horizon."""


def validation_message(exc: ValidationError) -> str:
    err = exc.errors()[0]
    ctx_error = (err.get("ctx") or {}).get("error")
    message = str(ctx_error) if ctx_error is not None else err["msg"]
    location = ".".join(str(part) for part in err.get("loc", ()))
    return f"{location}: {message}" if location else message


# --- File documents (unknown keys rejected) ---
class VertexDocument(BaseModel):
    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    id: str
    time: int
    parent: Optional[str]
    prices: List[Scalar]


class MarketDocument(BaseModel):
    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    assets: List[str] = Field(..., min_length=1, description="Asset names, first is the numeraire")
    T: int
    vertices: List[VertexDocument]
    probs: Optional[Dict[str, Scalar]] = None


class ClaimDocument(BaseModel):
    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    claim: Dict[str, Scalar]


# --- Domain types ---
class VertexRecord(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    id: str
    time: int
    parent: Optional[str] = None
    prices: Tuple[Scalar, ...]


class _Topology:
    """Parent/children/time lookups over a validated vertex list."""

    def __init__(self, vertices: Tuple[VertexRecord, ...]):
        self.records: Dict[str, VertexRecord] = {}
        self.children: Dict[str, List[str]] = {}
        self.by_time: Dict[int, List[str]] = {}
        for record in vertices:
            if record.id in self.records:
                raise MarketError(f"duplicate vertex id {record.id!r}")
            self.records[record.id] = record
            self.children[record.id] = []
            self.by_time.setdefault(record.time, []).append(record.id)
        for record in vertices:
            if record.parent is not None and record.parent in self.children:
                self.children[record.parent].append(record.id)


class Market(BaseModel):
    """Discounted market on a finite scenario tree (asset 0 is the numeraire)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    asset_names: Tuple[str, ...]
    horizon: int
    vertices: Tuple[VertexRecord, ...]
    terminal_probs: Optional[Dict[str, Scalar]] = None

    @model_validator(mode="after")
    def _check_tree(self) -> "Market":
        T = self.horizon
        if T < 2:
            raise MarketError(f"horizon T must be at least 2, got {T}")
        topo = _Topology(self.vertices)
        roots = topo.by_time.get(0, [])
        if len(roots) != 1:
            raise MarketError(f"exactly one vertex at time 0 required, found {len(roots)}")
        for record in self.vertices:
            if not 0 <= record.time <= T:
                raise MarketError(f"vertex {record.id!r}: time {record.time} outside 0..{T}")
            if len(record.prices) != len(self.asset_names):
                raise MarketError(
                    f"vertex {record.id!r}: {len(record.prices)} prices for {len(self.asset_names)} assets"
                )
            if record.prices[0] != 1:
                raise MarketError(f"numeraire price must be 1 at vertex {record.id!r}")
            if record.time == 0:
                if record.parent is not None:
                    raise MarketError(f"root vertex {record.id!r} must not have a parent")
                continue
            parent = topo.records.get(record.parent) if record.parent is not None else None
            if parent is None:
                raise MarketError(f"vertex {record.id!r}: unknown parent {record.parent!r}")
            if parent.time != record.time - 1:
                raise MarketError(f"vertex {record.id!r}: parent {parent.id!r} is not one step earlier")
        for record in self.vertices:
            if record.time < T and not topo.children[record.id]:
                raise MarketError(f"non-terminal vertex {record.id!r} has no children")
        if self.terminal_probs is not None:
            terminals = set(topo.by_time.get(T, []))
            if set(self.terminal_probs) != terminals:
                raise MarketError("terminal probabilities must cover exactly the terminal vertices")
            for vid, p in self.terminal_probs.items():
                if p <= 0:
                    raise MarketError(f"terminal probability at {vid!r} must be positive")
            if fsum(self.terminal_probs.values()) != 1:
                raise MarketError("terminal probabilities must sum to 1")
        return self

    @cached_property
    def topology(self) -> _Topology:
        return _Topology(self.vertices)

    @property
    def asset_count(self) -> int:
        return len(self.asset_names)

    @property
    def root(self) -> str:
        return self.topology.by_time[0][0]

    @property
    def terminals(self) -> List[str]:
        return self.vertices_at(self.horizon)

    def vertices_at(self, t: int) -> List[str]:
        return list(self.topology.by_time.get(t, []))

    def time(self, v: str) -> int:
        return self.topology.records[v].time

    def parent(self, v: str) -> Optional[str]:
        return self.topology.records[v].parent

    def children(self, v: str) -> List[str]:
        return list(self.topology.children[v])

    def grandchildren(self, v: str) -> List[str]:
        return [mu for u in self.children(v) for mu in self.children(u)]

    def prices(self, v: str) -> Tuple[Fraction, ...]:
        return self.topology.records[v].prices

    def terminal_descendants(self, v: str) -> List[str]:
        frontier = [v]
        while frontier and self.time(frontier[0]) < self.horizon:
            frontier = [u for w in frontier for u in self.children(w)]
        return frontier


class GVertex(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    time: int
    parent: Optional[str]
    children: Tuple[str, ...]
    f_ref: str


class DelayedView(BaseModel):
    """Scenario tree of the delayed filtration G_t = F_{t-1} (1 <= t <= T-1), G_T = F_T."""

    model_config = ConfigDict(frozen=True)

    horizon: int
    g_vertices: Tuple[GVertex, ...]

    @cached_property
    def _by_id(self) -> Dict[str, GVertex]:
        return {g.id: g for g in self.g_vertices}

    @property
    def root(self) -> str:
        return self.vertices_at(0)[0]

    def vertices_at(self, t: int) -> List[str]:
        return [g.id for g in self.g_vertices if g.time == t]

    def vertex(self, v: str) -> GVertex:
        return self._by_id[v]

    def parent(self, v: str) -> Optional[str]:
        return self._by_id[v].parent

    def children(self, v: str) -> List[str]:
        return list(self._by_id[v].children)

    def f_ref(self, v: str) -> str:
        return self._by_id[v].f_ref

    def price(self, m: Market, v: str) -> Tuple[Fraction, ...]:
        return m.prices(self.f_ref(v))

    def terminal_descendants(self, v: str) -> List[str]:
        """F-terminal ids below a G-vertex."""
        frontier = [v]
        while frontier and self._by_id[frontier[0]].time < self.horizon:
            frontier = [u for w in frontier for u in self.children(w)]
        return [self.f_ref(g) for g in frontier]


class Claim(BaseModel):
    """Non-negative payoff, one value per terminal vertex."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: Dict[str, Scalar]

    @model_validator(mode="after")
    def _check_nonnegative(self) -> "Claim":
        for vid, value in self.values.items():
            if value < 0:
                raise ClaimError(f"claim value at {vid!r} must be non-negative")
        return self

    def check_market(self, m: Market) -> "Claim":
        terminals = set(m.terminals)
        missing = terminals - set(self.values)
        if missing:
            raise ClaimError(f"claim undefined at terminal vertex {sorted(missing)[0]!r}")
        unknown = set(self.values) - terminals
        if unknown:
            raise ClaimError(f"claim given at non-terminal or unknown vertex {sorted(unknown)[0]!r}")
        return self

    def value(self, v: str) -> Fraction:
        return self.values[v]

    def scaled(self, factor) -> "Claim":
        return Claim(values={v: Fraction(factor) * x for v, x in self.values.items()})

    def shifted(self, amount) -> "Claim":
        return Claim(values={v: x + Fraction(amount) for v, x in self.values.items()})

    def __add__(self, other: "Claim") -> "Claim":
        return Claim(values={v: x + other.values[v] for v, x in self.values.items()})

    @classmethod
    def from_payoff(cls, m: Market, payoff: Callable[[Tuple[Fraction, ...]], Fraction]) -> "Claim":
        return cls(values={v: Fraction(payoff(m.prices(v))) for v in m.terminals})

    @classmethod
    def constant(cls, m: Market, c) -> "Claim":
        return cls.from_payoff(m, lambda _: Fraction(c))

    @classmethod
    def call(cls, m: Market, strike, asset: int = 1) -> "Claim":
        k = Fraction(strike)
        return cls.from_payoff(m, lambda s: max(s[asset] - k, Fraction(0)))

    @classmethod
    def put(cls, m: Market, strike, asset: int = 1) -> "Claim":
        k = Fraction(strike)
        return cls.from_payoff(m, lambda s: max(k - s[asset], Fraction(0)))


# --- Operations ---
def load_market(document: str) -> Market:
    try:
        doc = MarketDocument.model_validate_json(document)
    except ValidationError as exc:
        raise MarketError(f"invalid market document: {validation_message(exc)}") from exc
    try:
        market = Market(
            asset_names=tuple(doc.assets),
            horizon=doc.T,
            vertices=tuple(
                VertexRecord(id=v.id, time=v.time, parent=v.parent, prices=tuple(v.prices)) for v in doc.vertices
            ),
            terminal_probs=doc.probs,
        )
    except ValidationError as exc:
        raise MarketError(validation_message(exc)) from exc
    logger.info(f"✅ Loaded market: T={market.horizon}, {len(market.vertices)} vertices, "
                f"{len(market.terminals)} scenarios, {market.asset_count} assets")
    return market


def load_claim(document: str, m: Market) -> Claim:
    try:
        doc = ClaimDocument.model_validate_json(document)
        claim = Claim(values=doc.claim)
    except ValidationError as exc:
        raise ClaimError(f"invalid claim document: {validation_message(exc)}") from exc
    return claim.check_market(m)


def read_market(path) -> Market:
    return load_market(Path(path).read_text())


def read_claim(path, m: Market) -> Claim:
    return load_claim(Path(path).read_text(), m)


def dump_market(m: Market) -> str:
    document = {
        "assets": list(m.asset_names),
        "T": m.horizon,
        "vertices": [
            {"id": v.id, "time": v.time, "parent": v.parent, "prices": [format_scalar(p) for p in v.prices]}
            for v in m.vertices
        ],
    }
    if m.terminal_probs is not None:
        document["probs"] = {vid: format_scalar(p) for vid, p in m.terminal_probs.items()}
    return json.dumps(document, indent=2)


def dump_claim(b: Claim) -> str:
    return json.dumps({"claim": {vid: format_scalar(x) for vid, x in b.values.items()}}, indent=2)


def g_vertex_id(t: int, f_ref: str) -> str:
    return f"G{t}:{f_ref}"


def derive_delayed_view(m: Market) -> DelayedView:
    """Build the G-tree.

    G_0 and G_1 are both trivial (F_0 is), a G-vertex at time t in 1..T-1 refers
    to the F-vertex at t-1 with the same block, and the time-T vertices are the
    F-terminals, hung below the G-vertex of their F-grandparent.
    """
    T = m.horizon
    parents: Dict[str, Optional[str]] = {}
    refs: Dict[str, str] = {}
    times: Dict[str, int] = {}
    order: List[str] = []

    def add(gid: str, t: int, parent: Optional[str], f_ref: str) -> None:
        parents[gid], refs[gid], times[gid] = parent, f_ref, t
        order.append(gid)

    add(g_vertex_id(0, m.root), 0, None, m.root)
    for t in range(1, T):
        for x in m.vertices_at(t - 1):
            parent = g_vertex_id(0, m.root) if t == 1 else g_vertex_id(t - 1, m.parent(x))
            add(g_vertex_id(t, x), t, parent, x)
    for gamma in m.terminals:
        grandparent = m.parent(m.parent(gamma))
        add(g_vertex_id(T, gamma), T, g_vertex_id(T - 1, grandparent), gamma)

    children: Dict[str, List[str]] = {gid: [] for gid in order}
    for gid in order:
        if parents[gid] is not None:
            children[parents[gid]].append(gid)
    view = DelayedView(
        horizon=T,
        g_vertices=tuple(
            GVertex(id=gid, time=times[gid], parent=parents[gid], children=tuple(children[gid]), f_ref=refs[gid])
            for gid in order
        ),
    )
    logger.debug(f"Derived delayed view with {len(order)} G-vertices")
    return view


def vertex_probabilities(m: Market) -> Dict[str, Fraction]:
    if m.terminal_probs is None:
        raise MarketError("market has no terminal probabilities")
    probs: Dict[str, Fraction] = dict(m.terminal_probs)
    for t in range(m.horizon - 1, -1, -1):
        for v in m.vertices_at(t):
            probs[v] = fsum(probs[u] for u in m.children(v))
    return probs


def binomial_market(s0=4, up=2, down=Fraction(1, 2), horizon: int = 4) -> Market:
    """Non-recombining binary tree for one stock; vertex ids are up/down paths."""
    s0, up, down = Fraction(s0), Fraction(up), Fraction(down)
    records = [VertexRecord(id="root", time=0, parent=None, prices=(Fraction(1), s0))]
    level = [("root", "", s0)]
    for t in range(1, horizon + 1):
        next_level = []
        for vid, path, price in level:
            for step, factor in (("u", up), ("d", down)):
                child = (path + step, price * factor)
                records.append(VertexRecord(id=child[0], time=t, parent=vid, prices=(Fraction(1), child[1])))
                next_level.append((child[0], child[0], child[1]))
        level = next_level
    scenarios = len(level)
    return Market(
        asset_names=("bond", "stock"),
        horizon=horizon,
        vertices=tuple(records),
        terminal_probs={vid: Fraction(1, scenarios) for vid, _, _ in level},
    )
