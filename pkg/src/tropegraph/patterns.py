"""Micro, meso and auxiliary pattern detection over narrative graphs."""
from __future__ import annotations

import enum
from collections import Counter, deque
from dataclasses import dataclass, replace

from .graph import CHARACTER_TYPES, BaseType, Edge, EdgeKind, NarrativeGraph, cached_property


class MicroKind(enum.Enum):
    __hash__ = object.__hash__

    SP = "SP"
    CP = "CP"
    PDP = "PDP"


@dataclass(frozen=True)
class MicroPattern:
    kind: MicroKind
    node: str
    # Hero/Villain for character patterns, None otherwise
    subkind: BaseType | None = None


@dataclass(frozen=True)
class ConflictPattern:
    conflict: str
    source: str
    target: str
    explicit: bool = True
    fake: bool = False

    @property
    def self_conflict(self) -> bool:
        return self.source == self.target

    @property
    def pair(self) -> frozenset[str]:
        return frozenset((self.source, self.target))


@dataclass(frozen=True)
class DerivationPattern:
    root: str
    derivatives: tuple[str, ...]


@dataclass(frozen=True)
class RevealPattern:
    source: str
    target: str
    # indices into PatternCatalog.conflicts
    fake_conflicts: tuple[int, ...] = ()


@dataclass(frozen=True)
class ActivePlotDevice:
    node: str
    incoming: int
    outgoing: int


class Assoc(enum.Enum):
    DERP = "DerP"
    REVP = "RevP"
    APD = "APD"


@dataclass(frozen=True)
class TwistLink:
    """Why a node is a plot twist; ``index`` points into the owning pattern list."""

    assoc: Assoc
    index: int
    # 1-based position among the derivatives, DerP links only
    position: int = 0


@dataclass(frozen=True)
class PlotPoint:
    node: str
    assocs: tuple[Assoc, ...]


@dataclass(frozen=True)
class PlotTwist:
    node: str
    links: tuple[TwistLink, ...]


class AuxKind(enum.Enum):
    NOTHING = "Nothing"
    BROKEN_LINK = "BrokenLink"


@dataclass(frozen=True)
class AuxiliaryPattern:
    kind: AuxKind
    node: str | None = None
    edge: Edge | None = None


@dataclass(frozen=True)
class PatternCatalog:
    graph: NarrativeGraph
    micro: tuple[MicroPattern, ...] = ()
    conflicts: tuple[ConflictPattern, ...] = ()
    derivations: tuple[DerivationPattern, ...] = ()
    reveals: tuple[RevealPattern, ...] = ()
    apds: tuple[ActivePlotDevice, ...] = ()
    plot_points: tuple[PlotPoint, ...] = ()
    plot_twists: tuple[PlotTwist, ...] = ()
    auxiliary: tuple[AuxiliaryPattern, ...] = ()

    @cached_property
    def explicit_conflicts(self) -> tuple[ConflictPattern, ...]:
        return tuple(c for c in self.conflicts if c.explicit)

    @cached_property
    def micro_groups(self) -> Counter:
        """Micro-pattern counts keyed by kind, characters split into Hero/Villain."""
        return Counter(m.subkind if m.kind is MicroKind.CP else m.kind for m in self.micro)

    @cached_property
    def involvement(self) -> Counter:
        """Explicit conflicts each node takes part in (conflict nodes: routed through)."""
        out: Counter = Counter()
        for c in self.explicit_conflicts:
            out[c.conflict] += 1
            out[c.source] += 1
            if c.target != c.source:
                out[c.target] += 1
        return out

    @property
    def total(self) -> int:
        return (
            len(self.micro)
            + len(self.conflicts)
            + len(self.derivations)
            + len(self.reveals)
            + len(self.apds)
            + len(self.plot_points)
            + len(self.plot_twists)
            + len(self.auxiliary)
        )


_MICRO_KIND = {
    BaseType.STRUCTURE: MicroKind.SP,
    BaseType.HERO: MicroKind.CP,
    BaseType.VILLAIN: MicroKind.CP,
    BaseType.PLOT_DEVICE: MicroKind.PDP,
}


def detect_micro(g: NarrativeGraph) -> list[MicroPattern]:
    out = []
    for n in g.nodes:
        base = n.trope.base
        sub = base if base in CHARACTER_TYPES else None
        out.append(MicroPattern(_MICRO_KIND[base], n.id, sub))
    return out


def _is_character(g: NarrativeGraph, node_id: str) -> bool:
    return g.base(node_id) in CHARACTER_TYPES


def _conflict_legs(g: NarrativeGraph, conf: str) -> tuple[list[str], list[str]]:
    """Character sources flowing into ``conf`` and targets flowing out of it."""
    sources: list[str] = []
    targets: list[str] = []
    for e in g.edges:
        if not e.touches(conf) or e.kind is EdgeKind.ENTAIL:
            continue
        other = e.other(conf)
        if not _is_character(g, other):
            continue
        if e.kind is EdgeKind.BIDIRECTIONAL:
            sources.append(other)
            targets.append(other)
        elif e.target == conf:
            sources.append(other)
        else:
            targets.append(other)
    return list(dict.fromkeys(sources)), list(dict.fromkeys(targets))


def detect_conflicts(g: NarrativeGraph) -> list[ConflictPattern]:
    """Explicit conflicts with their implicit mirrors right after them.

    A self-conflict (source == target) is its own mirror and is stored once.
    """
    out: list[ConflictPattern] = []
    for n in g.nodes:
        if n.trope.base is not BaseType.STRUCTURE:
            continue
        sources, targets = _conflict_legs(g, n.id)
        for s in sources:
            for t in targets:
                out.append(ConflictPattern(n.id, s, t, explicit=True))
                if s != t:
                    out.append(ConflictPattern(n.id, t, s, explicit=False))
    return out


def self_conflict_counts(conflicts) -> dict[str, int]:
    counts: dict[str, int] = {}
    for c in conflicts:
        if c.explicit and c.self_conflict:
            counts[c.conflict] = counts.get(c.conflict, 0) + 1
    return counts


def _entail_adjacency(g: NarrativeGraph) -> dict[str, list[str]]:
    adj: dict[str, list[str]] = {n: [] for n in g.node_ids}
    for e in g.edges:
        if e.kind is EdgeKind.ENTAIL:
            adj[e.source].append(e.target)
    return adj


def _bfs(adj: dict[str, list[str]], start: str) -> list[str]:
    seen = {start}
    order: list[str] = []
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nxt in adj[cur]:
            if nxt not in seen:
                seen.add(nxt)
                order.append(nxt)
                queue.append(nxt)
    return order


def detect_derivations(g: NarrativeGraph) -> list[DerivationPattern]:
    """One derivation per source component of the entail graph.

    A plain root (no incoming entail) is its own source component. An entail
    cycle that nothing entails is rooted at its smallest node id.
    """
    adj = _entail_adjacency(g)
    active = [n for n in g.node_ids if adj[n]]
    if not active:
        return []
    empty: set[str] = set()
    reach = {n: set(_bfs(adj, n)) if adj[n] else empty for n in g.node_ids}

    roots: list[str] = []
    claimed: set[str] = set()
    for n in g.node_ids:
        if n in claimed or not adj[n]:
            continue
        ancestors = [u for u in g.node_ids if u != n and n in reach[u]]
        if any(u not in reach[n] for u in ancestors):
            continue  # something upstream entails n without being entailed back
        component = ancestors + [n]
        claimed.update(component)
        roots.append(min(component))

    return [DerivationPattern(r, tuple(_bfs(adj, r))) for r in roots]


def detect_reveals(
    g: NarrativeGraph, conflicts: list[ConflictPattern]
) -> list[RevealPattern]:
    out = []
    for e in g.edges:
        if e.kind is not EdgeKind.DIRECTED:
            continue
        if not (_is_character(g, e.source) and _is_character(g, e.target)):
            continue
        pair = frozenset((e.source, e.target))
        fakes = tuple(
            i for i, c in enumerate(conflicts) if c.explicit and c.pair == pair
        )
        out.append(RevealPattern(e.source, e.target, fakes))
    return out


def _degree(g: NarrativeGraph, node_id: str) -> tuple[int, int]:
    incoming = outgoing = 0
    for e in g.edges:
        if not e.touches(node_id):
            continue
        if e.kind is EdgeKind.BIDIRECTIONAL:
            incoming += 1
            outgoing += 1
        elif e.target == node_id:
            incoming += 1
        else:
            outgoing += 1
    return incoming, outgoing


def detect_apds(g: NarrativeGraph) -> list[ActivePlotDevice]:
    out = []
    for n in g.nodes:
        if n.trope.base is not BaseType.PLOT_DEVICE:
            continue
        inc, outg = _degree(g, n.id)
        if inc >= 1 and outg <= 1:
            out.append(ActivePlotDevice(n.id, inc, outg))
    return out


def detect_plot_points(
    derivations: list[DerivationPattern],
    reveals: list[RevealPattern],
    apds: list[ActivePlotDevice],
) -> list[PlotPoint]:
    assocs: dict[str, list[Assoc]] = {}

    def add(node: str, assoc: Assoc) -> None:
        lst = assocs.setdefault(node, [])
        if assoc not in lst:
            lst.append(assoc)

    for d in derivations:
        for node in d.derivatives:
            add(node, Assoc.DERP)
    for r in reveals:
        add(r.source, Assoc.REVP)
    for a in apds:
        add(a.node, Assoc.APD)
    return [PlotPoint(node, tuple(a)) for node, a in assocs.items()]


def detect_plot_twists(
    g: NarrativeGraph,
    derivations: list[DerivationPattern],
    reveals: list[RevealPattern],
    apds: list[ActivePlotDevice],
) -> list[PlotTwist]:
    links: dict[str, list[TwistLink]] = {}

    for i, d in enumerate(derivations):
        root_base = g.base(d.root)
        for pos, node in enumerate(d.derivatives, start=1):
            base = g.base(node)
            if base is not root_base and base is not BaseType.PLOT_DEVICE:
                links.setdefault(node, []).append(TwistLink(Assoc.DERP, i, pos))
    for i, r in enumerate(reveals):
        links.setdefault(r.source, []).append(TwistLink(Assoc.REVP, i))
    apd_nodes = {a.node for a in apds}
    for i, a in enumerate(apds):
        if any(e.other(a.node) in apd_nodes for e in g.incident(a.node)):
            links.setdefault(a.node, []).append(TwistLink(Assoc.APD, i))
    return [PlotTwist(node, tuple(ls)) for node, ls in links.items()]


def consumed_edges(
    g: NarrativeGraph,
    conflicts: list[ConflictPattern],
    reveals: list[RevealPattern],
    apds: list[ActivePlotDevice],
) -> set[Edge]:
    """Edges that back at least one meso-pattern instance."""
    used: set[Edge] = set()
    for c in conflicts:
        if not c.explicit:
            continue
        for a, b in ((c.source, c.conflict), (c.conflict, c.target)):
            for kind in (EdgeKind.DIRECTED, EdgeKind.BIDIRECTIONAL):
                e = Edge(a, b, kind)
                if e in g.edge_set:
                    used.add(e)
    # every entail edge hangs below some derivation root
    used.update(e for e in g.edges if e.kind is EdgeKind.ENTAIL)
    used.update(Edge(r.source, r.target, EdgeKind.DIRECTED) for r in reveals)
    apd_nodes = {a.node for a in apds}
    used.update(e for e in g.edges if e.source in apd_nodes or e.target in apd_nodes)
    return used


def meso_nodes(
    conflicts: list[ConflictPattern],
    derivations: list[DerivationPattern],
    reveals: list[RevealPattern],
    apds: list[ActivePlotDevice],
) -> set[str]:
    nodes: set[str] = set()
    for c in conflicts:
        nodes.update((c.conflict, c.source, c.target))
    for d in derivations:
        nodes.add(d.root)
        nodes.update(d.derivatives)
    for r in reveals:
        nodes.update((r.source, r.target))
    nodes.update(a.node for a in apds)
    return nodes


def detect_auxiliary(
    g: NarrativeGraph,
    conflicts: list[ConflictPattern],
    derivations: list[DerivationPattern],
    reveals: list[RevealPattern],
    apds: list[ActivePlotDevice],
) -> list[AuxiliaryPattern]:
    in_meso = meso_nodes(conflicts, derivations, reveals, apds)
    used = consumed_edges(g, conflicts, reveals, apds)
    aux = [
        AuxiliaryPattern(AuxKind.NOTHING, node=n)
        for n in g.node_ids
        if n not in in_meso
    ]
    aux += [AuxiliaryPattern(AuxKind.BROKEN_LINK, edge=e) for e in g.edges if e not in used]
    return aux


def detect_all(g: NarrativeGraph) -> PatternCatalog:
    micro = detect_micro(g)
    conflicts = detect_conflicts(g)
    derivations = detect_derivations(g)
    reveals = detect_reveals(g, conflicts)
    fake_pairs = {frozenset((r.source, r.target)) for r in reveals}
    # implicit mirrors share the fate of their explicit conflict
    conflicts = [replace(c, fake=True) if c.pair in fake_pairs else c for c in conflicts]
    apds = detect_apds(g)
    plot_points = detect_plot_points(derivations, reveals, apds)
    plot_twists = detect_plot_twists(g, derivations, reveals, apds)
    auxiliary = detect_auxiliary(g, conflicts, derivations, reveals, apds)
    return PatternCatalog(
        graph=g,
        micro=tuple(micro),
        conflicts=tuple(conflicts),
        derivations=tuple(derivations),
        reveals=tuple(reveals),
        apds=tuple(apds),
        plot_points=tuple(plot_points),
        plot_twists=tuple(plot_twists),
        auxiliary=tuple(auxiliary),
    )


def _flag(on: bool, name: str) -> str:
    return f" {name}" if on else ""


def catalog_lines(cat: PatternCatalog) -> list[str]:
    """One line per pattern instance, in detection order."""
    g = cat.graph
    lines = []
    for m in cat.micro:
        sub = f" {m.subkind.value}" if m.subkind else ""
        lines.append(f"{m.kind.value} {m.node} {g.trope(m.node).symbol}{sub}")
    for c in cat.conflicts:
        kind = "explicit" if c.explicit else "implicit"
        flags = _flag(c.self_conflict, "self") + _flag(c.fake, "fake")
        lines.append(f"ConfP {c.source} -[{c.conflict}]-> {c.target} {kind}{flags}")
    for d in cat.derivations:
        lines.append(f"DerP {d.root} |> {' '.join(d.derivatives)}")
    for r in cat.reveals:
        lines.append(f"RevP {r.source} -> {r.target} fakes={len(r.fake_conflicts)}")
    for a in cat.apds:
        lines.append(f"APD {a.node} in={a.incoming} out={a.outgoing}")
    for p in cat.plot_points:
        lines.append(f"PP {p.node} {','.join(x.value for x in p.assocs)}")
    for t in cat.plot_twists:
        lines.append(f"PT {t.node} {','.join(x.assoc.value for x in t.links)}")
    for x in cat.auxiliary:
        where = x.node if x.kind is AuxKind.NOTHING else str(x.edge)
        lines.append(f"{x.kind.value} {where}")
    return lines
