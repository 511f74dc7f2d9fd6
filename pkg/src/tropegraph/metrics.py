"""Pattern qualities and graph-level scores.

Every quality is scored for an evaluated graph (EG) relative to a root graph
(RG); both arrive as pattern catalogs. Each quality is the mean of its terms
and is clamped to [0, 1].
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .graph import BaseType, EdgeKind, NarrativeGraph
from .patterns import (
    ActivePlotDevice,
    Assoc,
    ConflictPattern,
    DerivationPattern,
    MicroKind,
    MicroPattern,
    PatternCatalog,
    PlotPoint,
    PlotTwist,
    RevealPattern,
    detect_all,
    self_conflict_counts,
)

STEP_THRESHOLD = 11
INTEREST_WEIGHTS = (0.4, 0.2, 0.4)  # APD, plot points, plot twists
PLOT_POINT_TARGET_RATIO = 0.5


def clamp(x: float) -> float:
    return min(1.0, max(0.0, x))


def _mean(xs) -> float:
    xs = list(xs)
    return sum(xs) / len(xs) if xs else 0.0


def generic_quality(rg_count: int, eg_count: int) -> float:
    if rg_count == eg_count:
        return 1.0
    return 1.0 - abs(rg_count - eg_count) / max(rg_count, eg_count)


def _micro_group(m: MicroPattern):
    return m.subkind if m.kind is MicroKind.CP else m.kind


def repetition_quality(node: str, cat: PatternCatalog) -> float:
    same = cat.graph.trope_counts[cat.graph.trope(node)]
    return 1.0 / same if same else 1.0


def involvement_quality(node: str, cat: PatternCatalog) -> float:
    explicit = cat.explicit_conflicts
    if not explicit:
        return 0.0
    return cat.involvement[node] / len(explicit)


def micro_quality(m: MicroPattern, eg: PatternCatalog, rg: PatternCatalog) -> float:
    group = _micro_group(m)
    g = generic_quality(rg.micro_groups[group], eg.micro_groups[group])
    if m.kind is MicroKind.SP:
        terms = (g, involvement_quality(m.node, eg))
    elif m.kind is MicroKind.CP:
        terms = (g, repetition_quality(m.node, eg), involvement_quality(m.node, eg))
    else:
        terms = (g, repetition_quality(m.node, eg))
    return clamp(_mean(terms))


def conflict_quality(c: ConflictPattern, eg: PatternCatalog, rg: PatternCatalog) -> float:
    g = generic_quality(len(rg.explicit_conflicts), len(eg.explicit_conflicts))
    sharing = sum(1 for x in eg.explicit_conflicts if x.pair == c.pair)
    r = 1.0 / sharing if sharing else 1.0
    return clamp((g + r) / 2)


def derivation_quality(
    d: DerivationPattern, eg: PatternCatalog, rg: PatternCatalog
) -> float:
    g = generic_quality(len(rg.derivations), len(eg.derivations))
    all_derivatives = sum(len(x.derivatives) for x in eg.derivations)
    ratio = len(d.derivatives) / all_derivatives if all_derivatives else 0.0
    root_base = eg.graph.base(d.root)
    differing = sum(1 for n in d.derivatives if eg.graph.base(n) is not root_base)
    diversity = differing / len(d.derivatives) if d.derivatives else 0.0
    return clamp((g + ratio + diversity) / 3)


def fake_ratio(r: RevealPattern, eg: PatternCatalog) -> float:
    """Share of the graph's explicit conflicts that this reveal fakes."""
    explicit = len(eg.explicit_conflicts)
    return len(r.fake_conflicts) / explicit if explicit else 0.0


def reveal_quality(r: RevealPattern, eg: PatternCatalog, rg: PatternCatalog) -> float:
    g = generic_quality(len(rg.reveals), len(eg.reveals))
    characters = sum(1 for m in eg.micro if m.kind is MicroKind.CP)
    per_character = len(eg.reveals) / characters if characters else 0.0
    return clamp((g + per_character + (1.0 - fake_ratio(r, eg))) / 3)


def usability(a: ActivePlotDevice, eg: PatternCatalog) -> float:
    half = len(eg.graph) / 2
    return min(1.0, (a.incoming + a.outgoing) / half) if half else 0.0


def apd_quality(a: ActivePlotDevice, eg: PatternCatalog, rg: PatternCatalog) -> float:
    g = generic_quality(len(rg.apds), len(eg.apds))
    return clamp((g + usability(a, eg)) / 2)


def plot_point_balance(eg: PatternCatalog) -> float:
    n = len(eg.graph)
    if not n:
        return 0.0
    return clamp(1.0 - abs(len(eg.plot_points) / n - PLOT_POINT_TARGET_RATIO) * 2)


def plot_point_quality(p: PlotPoint, eg: PatternCatalog, rg: PatternCatalog) -> float:
    g = generic_quality(len(rg.plot_points), len(eg.plot_points))
    return clamp((g + plot_point_balance(eg)) / 2)


def twist_involvement(t: PlotTwist, eg: PatternCatalog) -> float:
    """Mean involvement over the patterns that make ``t`` a twist."""
    values = []
    for link in t.links:
        if link.assoc is Assoc.REVP:
            values.append(fake_ratio(eg.reveals[link.index], eg))
        elif link.assoc is Assoc.DERP:
            d = eg.derivations[link.index]
            values.append(link.position / len(d.derivatives))
        else:
            values.append(usability(eg.apds[link.index], eg))
    return _mean(values)


def plot_twist_quality(t: PlotTwist, eg: PatternCatalog, rg: PatternCatalog) -> float:
    g = generic_quality(len(rg.plot_twists), len(eg.plot_twists))
    share = len(eg.plot_twists) / len(eg.plot_points) if eg.plot_points else 0.0
    return clamp((g + twist_involvement(t, eg) + share) / 3)


_MESO = {
    ConflictPattern: conflict_quality,
    DerivationPattern: derivation_quality,
    RevealPattern: reveal_quality,
    ActivePlotDevice: apd_quality,
    PlotPoint: plot_point_quality,
    PlotTwist: plot_twist_quality,
}


def meso_quality(instance, eg: PatternCatalog, rg: PatternCatalog) -> float:
    return _MESO[type(instance)](instance, eg, rg)


def cohesion(cat: PatternCatalog) -> float:
    if not cat.auxiliary:
        return 1.0
    return clamp(1.0 - len(cat.auxiliary) / cat.total)


def fake_conflict_ratio(cat: PatternCatalog) -> float:
    explicit = cat.explicit_conflicts
    if not explicit:
        return 0.0
    return sum(1 for c in explicit if c.fake) / len(explicit)


def _fast_micro_mean(eg: PatternCatalog, rg: PatternCatalog) -> float:
    """Mean micro quality with the per-group terms hoisted out of the loop.

    Same arithmetic as averaging :func:`micro_quality`; the search calls
    this once per evaluated graph.
    """
    if not eg.micro:
        return 0.0
    g_of = {k: generic_quality(rg.micro_groups[k], n) for k, n in eg.micro_groups.items()}
    counts = eg.graph.trope_counts
    tropes = eg.graph.tropes
    involvement = eg.involvement
    n_explicit = len(eg.explicit_conflicts)
    total = 0.0
    for m in eg.micro:
        inv = involvement[m.node] / n_explicit if n_explicit else 0.0
        if m.kind is MicroKind.SP:
            q = (g_of[MicroKind.SP] + inv) / 2
        elif m.kind is MicroKind.CP:
            q = (g_of[m.subkind] + 1.0 / counts[tropes[m.node]] + inv) / 3
        else:
            q = (g_of[MicroKind.PDP] + 1.0 / counts[tropes[m.node]]) / 2
        total += clamp(q)
    return total / len(eg.micro)


def consistency(eg: PatternCatalog, rg: PatternCatalog) -> float:
    return clamp(_fast_micro_mean(eg, rg) - fake_conflict_ratio(eg))


def coherence(eg: PatternCatalog, rg: PatternCatalog) -> float:
    return (consistency(eg, rg) + cohesion(eg)) / 2


def interestingness(eg: PatternCatalog, rg: PatternCatalog) -> float:
    w_apd, w_pp, w_pt = INTEREST_WEIGHTS
    return clamp(
        w_apd * _mean(apd_quality(a, eg, rg) for a in eg.apds)
        + w_pp * _mean(plot_point_quality(p, eg, rg) for p in eg.plot_points)
        + w_pt * _mean(plot_twist_quality(t, eg, rg) for t in eg.plot_twists)
    )


def _multiset_distance(x: Counter, y: Counter) -> int:
    total = 0
    for k, v in x.items():
        total += abs(v - y.get(k, 0))
    for k, v in y.items():
        if k not in x:
            total += v
    return total


def step_distance(a: NarrativeGraph, b: NarrativeGraph, threshold: int = STEP_THRESHOLD) -> int:
    """Typed multiset edit count between two graphs, capped at ``threshold``.

    Counts node labels and (source trope, target trope, kind) edge descriptors
    present in one graph but not the other.
    """
    nodes = _multiset_distance(a.trope_counts, b.trope_counts)
    edges = _multiset_distance(a.typed_edges, b.typed_edges)
    return min(nodes + edges, threshold)


def is_feasible(g: NarrativeGraph, cat: PatternCatalog) -> bool:
    if len(g.components) != 1:
        return False
    return all(n <= 1 for n in self_conflict_counts(cat.conflicts).values())


def infeasible_fitness(g: NarrativeGraph, cat: PatternCatalog) -> float:
    comps = g.components
    connected = max(len(c) for c in comps) / len(g) if comps else 0.0
    counts = self_conflict_counts(cat.conflicts)
    total = sum(counts.values())
    excess = sum(n - 1 for n in counts.values() if n > 1)
    self_term = 1.0 - excess / total if total else 1.0
    return clamp(0.5 * connected + 0.5 * self_term)


@dataclass(frozen=True)
class QualityReport:
    micro: tuple[float, ...]
    conflicts: tuple[float, ...]
    derivations: tuple[float, ...]
    reveals: tuple[float, ...]
    apds: tuple[float, ...]
    plot_points: tuple[float, ...]
    plot_twists: tuple[float, ...]
    cohesion: float
    consistency: float
    coherence: float
    interestingness: float

    def values(self):
        for name in ("micro", "conflicts", "derivations", "reveals", "apds",
                     "plot_points", "plot_twists"):
            yield from getattr(self, name)
        yield from (self.cohesion, self.consistency, self.coherence, self.interestingness)


def quality_report(eg: PatternCatalog, rg: PatternCatalog) -> QualityReport:
    coh = cohesion(eg)
    con = consistency(eg, rg)
    return QualityReport(
        micro=tuple(micro_quality(m, eg, rg) for m in eg.micro),
        conflicts=tuple(conflict_quality(c, eg, rg) for c in eg.conflicts),
        derivations=tuple(derivation_quality(d, eg, rg) for d in eg.derivations),
        reveals=tuple(reveal_quality(r, eg, rg) for r in eg.reveals),
        apds=tuple(apd_quality(a, eg, rg) for a in eg.apds),
        plot_points=tuple(plot_point_quality(p, eg, rg) for p in eg.plot_points),
        plot_twists=tuple(plot_twist_quality(t, eg, rg) for t in eg.plot_twists),
        cohesion=coh,
        consistency=con,
        coherence=(con + coh) / 2,
        interestingness=interestingness(eg, rg),
    )


@dataclass(frozen=True)
class Evaluation:
    """Everything the search needs to know about one phenotype."""

    feasible: bool
    fitness: float
    step: int
    interestingness: float
    coherence: float


def evaluate(
    g: NarrativeGraph, root: PatternCatalog, step_threshold: int = STEP_THRESHOLD
) -> Evaluation:
    cat = detect_all(g)
    feasible = is_feasible(g, cat)
    coh = coherence(cat, root)
    return Evaluation(
        feasible=feasible,
        fitness=coh if feasible else infeasible_fitness(g, cat),
        step=step_distance(g, root.graph, step_threshold),
        interestingness=interestingness(cat, root),
        coherence=coh,
    )
