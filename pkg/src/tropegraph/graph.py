"""Narrative graphs: trope nodes joined by directed, bidirectional and entail edges.

The text format (``.ng``) is line oriented::

    graph lttp
    # comments and blank lines are ignored
    node h1 HERO
    node c1 CONF
    edge h1 -> c1      # directed
    edge c1 <-> e1     # bidirectional
    edge e1 |> m1      # e1 entails m1
"""
from __future__ import annotations

import enum
import re
from collections import Counter, namedtuple
from dataclasses import dataclass
from typing import Iterable, NamedTuple


class cached_property:
    """Compute-once attribute stored in the instance dict.

    ``functools.cached_property`` takes a lock on every first access before
    Python 3.12, which shows up when millions of graphs are built.
    """

    def __init__(self, fn):
        self.fn = fn
        self.name = fn.__name__
        self.__doc__ = fn.__doc__

    def __get__(self, obj, owner=None):
        if obj is None:
            return self
        value = obj.__dict__[self.name] = self.fn(obj)
        return value


class BaseType(enum.Enum):
    # members are singletons; the default Enum hash is slow pure Python
    __hash__ = object.__hash__

    HERO = "Hero"
    STRUCTURE = "Structure"
    VILLAIN = "Villain"
    PLOT_DEVICE = "PlotDevice"


class Trope(enum.Enum):
    __hash__ = object.__hash__

    HERO = "HERO"
    FIVE_MAN_BAND = "5MA"
    NEO = "NEO"
    SH = "SH"
    CONF = "CONF"
    ENEMY = "ENEMY"
    EMP = "EMP"
    BAD = "BAD"
    DRAKE = "DRAKE"
    PLD = "PLD"
    CHK = "CHK"
    MCG = "MCG"
    MHQ = "MHQ"

    @property
    def symbol(self) -> str:
        return self.value

    @property
    def base(self) -> BaseType:
        return _BASE[self]

    @classmethod
    def parse(cls, symbol: str) -> "Trope":
        try:
            return cls(symbol.upper())
        except ValueError:
            raise ValueError(f"unknown trope symbol {symbol!r}") from None


_BASE = {
    Trope.HERO: BaseType.HERO,
    Trope.FIVE_MAN_BAND: BaseType.HERO,
    Trope.NEO: BaseType.HERO,
    Trope.SH: BaseType.HERO,
    Trope.CONF: BaseType.STRUCTURE,
    Trope.ENEMY: BaseType.VILLAIN,
    Trope.EMP: BaseType.VILLAIN,
    Trope.BAD: BaseType.VILLAIN,
    Trope.DRAKE: BaseType.VILLAIN,
    Trope.PLD: BaseType.PLOT_DEVICE,
    Trope.CHK: BaseType.PLOT_DEVICE,
    Trope.MCG: BaseType.PLOT_DEVICE,
    Trope.MHQ: BaseType.PLOT_DEVICE,
}

CHARACTER_TYPES = (BaseType.HERO, BaseType.VILLAIN)


class EdgeKind(enum.Enum):
    __hash__ = object.__hash__

    DIRECTED = "->"
    BIDIRECTIONAL = "<->"
    ENTAIL = "|>"


class Node(NamedTuple):
    id: str
    trope: Trope


class Edge(namedtuple("Edge", "source target kind")):
    """An edge; bidirectional edges are stored with the smaller id first."""

    __slots__ = ()

    def __new__(cls, source: str, target: str, kind: EdgeKind = EdgeKind.DIRECTED):
        if kind is EdgeKind.BIDIRECTIONAL and target < source:
            source, target = target, source
        return super().__new__(cls, source, target, kind)

    def touches(self, node_id: str) -> bool:
        return self.source == node_id or self.target == node_id

    def other(self, node_id: str) -> str:
        return self.target if self.source == node_id else self.source

    def __str__(self) -> str:
        return f"{self.source} {self.kind.value} {self.target}"


@dataclass(frozen=True)
class NarrativeGraph:
    """Immutable narrative graph.

    Construction does not check invariants; use :func:`validate` (the parser
    and the rewriting code only ever build valid graphs).
    """

    name: str = "g"
    nodes: tuple[Node, ...] = ()
    edges: tuple[Edge, ...] = ()

    @classmethod
    def build(
        cls,
        name: str,
        nodes: Iterable[tuple[str, Trope | str]],
        edges: Iterable[tuple[str, str, EdgeKind | str]] = (),
    ) -> "NarrativeGraph":
        ns = tuple(
            Node(i, t if isinstance(t, Trope) else Trope.parse(t)) for i, t in nodes
        )
        es = tuple(
            Edge(s, t, k if isinstance(k, EdgeKind) else EdgeKind(k)) for s, t, k in edges
        )
        return cls(name, ns, es)

    @cached_property
    def tropes(self) -> dict[str, Trope]:
        return {n.id: n.trope for n in self.nodes}

    @cached_property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes)

    @cached_property
    def edge_set(self) -> frozenset[Edge]:
        return frozenset(self.edges)

    @cached_property
    def trope_counts(self) -> Counter[Trope]:
        return Counter(n.trope for n in self.nodes)

    @cached_property
    def typed_edges(self) -> Counter[tuple[str, str, EdgeKind]]:
        """Edge multiset with node ids replaced by trope symbols."""
        out: Counter = Counter()
        for e in self.edges:
            a, b = self.tropes[e.source].symbol, self.tropes[e.target].symbol
            if e.kind is EdgeKind.BIDIRECTIONAL and b < a:
                a, b = b, a
            out[(a, b, e.kind)] += 1
        return out

    @cached_property
    def sorted_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.node_ids))

    @cached_property
    def ids_by_trope(self) -> dict[Trope, list[str]]:
        """Node ids per trope, each list sorted."""
        out: dict[Trope, list[str]] = {}
        for n in self.sorted_ids:
            out.setdefault(self.tropes[n], []).append(n)
        return out

    @cached_property
    def components(self) -> list[list[str]]:
        return weak_components(self)

    def trope(self, node_id: str) -> Trope:
        return self.tropes[node_id]

    def base(self, node_id: str) -> BaseType:
        return self.tropes[node_id].base

    def incident(self, node_id: str) -> list[Edge]:
        return [e for e in self.edges if e.touches(node_id)]

    def has_edge(self, source: str, target: str, kind: EdgeKind) -> bool:
        return Edge(source, target, kind) in self.edge_set

    def __len__(self) -> int:
        return len(self.nodes)

    def with_name(self, name: str) -> "NarrativeGraph":
        return NarrativeGraph(name, self.nodes, self.edges)


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


_IDENT = r"[A-Za-z0-9_][A-Za-z0-9_.\-]*"
_TOKEN = re.compile(r"\S+")
_IDENT_RE = re.compile(_IDENT + r"\Z")
_OPS = {k.value: k for k in EdgeKind}


def parse_ng(text: str) -> NarrativeGraph:
    name: str | None = None
    nodes: dict[str, Node] = {}
    edges: dict[Edge, None] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        tokens = [(m.group(), m.start() + 1) for m in _TOKEN.finditer(line)]
        if not tokens:
            continue
        words = [t for t, _ in tokens]
        col = tokens[0][1]
        keyword = words[0].lower()

        if name is None:
            if keyword != "graph" or len(words) != 2:
                raise ParseError("expected header 'graph <name>'", lineno, col)
            _check_ident(words[1], lineno, tokens[1][1])
            name = words[1]
            continue

        if keyword == "node":
            if len(words) != 3:
                raise ParseError("expected 'node <id> <TROPE>'", lineno, col)
            node_id, symbol = words[1], words[2]
            _check_ident(node_id, lineno, tokens[1][1])
            try:
                trope = Trope.parse(symbol)
            except ValueError as exc:
                raise ParseError(str(exc), lineno, tokens[2][1]) from None
            if node_id in nodes:
                raise ParseError(f"duplicate node id {node_id!r}", lineno, tokens[1][1])
            nodes[node_id] = Node(node_id, trope)
        elif keyword == "edge":
            if len(words) != 4 or words[2] not in _OPS:
                raise ParseError("expected 'edge <a> (->|<->||>) <b>'", lineno, col)
            a, b = words[1], words[3]
            for ident, (_, c) in ((a, tokens[1]), (b, tokens[3])):
                _check_ident(ident, lineno, c)
                if ident not in nodes:
                    raise ParseError(f"dangling edge endpoint {ident!r}", lineno, c)
            if a == b:
                raise ParseError(f"self-loop on {a!r}", lineno, tokens[1][1])
            edge = Edge(a, b, _OPS[words[2]])
            if edge in edges:
                raise ParseError(f"duplicate edge '{edge}'", lineno, col)
            edges[edge] = None
        elif keyword == "graph":
            raise ParseError("duplicate graph header", lineno, col)
        else:
            raise ParseError(f"unexpected {words[0]!r}", lineno, col)

    if name is None:
        raise ParseError("missing 'graph <name>' header", 1)
    return NarrativeGraph(name, tuple(nodes.values()), tuple(edges))


def _check_ident(ident: str, line: int, column: int) -> None:
    if not _IDENT_RE.match(ident):
        raise ParseError(f"invalid identifier {ident!r}", line, column)


def serialize_ng(g: NarrativeGraph) -> str:
    lines = [f"graph {g.name}"]
    lines += [f"node {n.id} {n.trope.symbol}" for n in g.nodes]
    lines += [f"edge {e}" for e in g.edges]
    return "\n".join(lines) + "\n"


_SHAPES = {
    BaseType.HERO: "box",
    BaseType.STRUCTURE: "diamond",
    BaseType.VILLAIN: "hexagon",
    BaseType.PLOT_DEVICE: "ellipse",
}
_DOT_ID = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def _dot_id(s: str) -> str:
    return s if _DOT_ID.match(s) else '"' + s.replace('"', '\\"') + '"'


def to_dot(g: NarrativeGraph) -> str:
    out = [f"digraph {_dot_id(g.name)} {{"]
    for n in g.nodes:
        out.append(
            f'  {_dot_id(n.id)} [label="{n.trope.symbol}" shape={_SHAPES[n.trope.base]}];'
        )
    for e in g.edges:
        attrs = {
            EdgeKind.DIRECTED: "",
            EdgeKind.BIDIRECTIONAL: " [dir=both]",
            EdgeKind.ENTAIL: " [arrowhead=diamond]",
        }[e.kind]
        out.append(f"  {_dot_id(e.source)} -> {_dot_id(e.target)}{attrs};")
    out.append("}")
    return "\n".join(out) + "\n"


def validate(g: NarrativeGraph) -> list[str]:
    """Return human-readable invariant violations; empty means valid."""
    problems: list[str] = []
    seen: set[str] = set()
    for n in g.nodes:
        if n.id in seen:
            problems.append(f"duplicate node id {n.id!r}")
        seen.add(n.id)
        if not isinstance(n.trope, Trope):
            problems.append(f"node {n.id!r} has no valid trope")
    edges: set[Edge] = set()
    for e in g.edges:
        for end in (e.source, e.target):
            if end not in seen:
                problems.append(f"edge '{e}' references missing node {end!r}")
        if e.source == e.target:
            problems.append(f"edge '{e}' is a self-loop")
        if e.kind is EdgeKind.BIDIRECTIONAL and e.target < e.source:
            problems.append(f"edge '{e}' is not in canonical order")
        if e in edges:
            problems.append(f"duplicate edge '{e}'")
        edges.add(e)
    return problems


def weak_components(g: NarrativeGraph) -> list[list[str]]:
    """Weakly connected components, each listed in node insertion order."""
    parent = {n: n for n in g.node_ids}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in g.edges:
        if e.source in parent and e.target in parent:
            ra, rb = find(e.source), find(e.target)
            if ra != rb:
                parent[rb] = ra

    groups: dict[str, list[str]] = {}
    for n in g.node_ids:
        groups.setdefault(find(n), []).append(n)
    return list(groups.values())
