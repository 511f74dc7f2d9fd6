"""Graph-grammar genotypes: production rules, matching, rewriting and variation."""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass, replace
from typing import Iterator, Union

from .graph import BaseType, Edge, EdgeKind, NarrativeGraph, Node, Trope, cached_property
from .metrics import STEP_THRESHOLD, Evaluation, evaluate
from .patterns import PatternCatalog, detect_all

RECIPES_PER_INDIVIDUAL = 10
EXTRA_RECIPE_DRAWS = 5
MAX_LHS_NODES = 3
MAX_RHS_NODES = 4


class Wildcard(enum.Enum):
    __hash__ = object.__hash__

    ANY_HERO = "ANY_HERO"
    ANY_VILLAIN = "ANY_VILLAIN"
    ANY_PLD = "ANY_PLD"
    ANY = "ANY"

    @property
    def symbol(self) -> str:
        return self.value

    @property
    def tropes(self) -> tuple[Trope, ...]:
        return _WILDCARD_TROPES[self]

    def admits(self, trope: Trope) -> bool:
        return trope in _WILDCARD_TROPES[self]


_WILDCARD_TROPES = {
    Wildcard.ANY_HERO: tuple(t for t in Trope if t.base is BaseType.HERO),
    Wildcard.ANY_VILLAIN: tuple(t for t in Trope if t.base is BaseType.VILLAIN),
    Wildcard.ANY_PLD: tuple(t for t in Trope if t.base is BaseType.PLOT_DEVICE),
    Wildcard.ANY: tuple(Trope),
}

Label = Union[Trope, Wildcard]
_ADMITTED: dict = {t: frozenset((t,)) for t in Trope}
_ADMITTED.update({w: frozenset(ts) for w, ts in _WILDCARD_TROPES.items()})
LABELS: tuple[Label, ...] = (*Trope, *Wildcard)
EDGE_KINDS = tuple(EdgeKind)


def parse_label(symbol: str) -> Label:
    try:
        return Wildcard(symbol.upper())
    except ValueError:
        return Trope.parse(symbol)


def _admitted(label: Label) -> frozenset[Trope]:
    return _ADMITTED[label]


def label_admits(label: Label, trope: Trope) -> bool:
    if isinstance(label, Wildcard):
        return label.admits(trope)
    return label is trope


@dataclass(frozen=True)
class RulePattern:
    nodes: tuple[tuple[int, Label], ...] = ()
    edges: tuple[tuple[int, int, EdgeKind], ...] = ()

    @cached_property
    def slots(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.nodes)

    @cached_property
    def search_order(self) -> tuple[int, ...]:
        return tuple(_ordered_slots(self))

    def label(self, slot: int) -> Label:
        for s, lab in self.nodes:
            if s == slot:
                return lab
        raise KeyError(slot)

    def problems(self) -> list[str]:
        out = []
        slots = self.slots
        if len(set(slots)) != len(slots):
            out.append("duplicate slot id")
        known = set(slots)
        for a, b, _ in self.edges:
            if a not in known or b not in known:
                out.append(f"edge ({a}, {b}) references an undeclared slot")
        return out

    def repaired(self) -> "RulePattern":
        """Drop edges that reference slots this side does not declare."""
        known = set(self.slots)
        edges = tuple(e for e in self.edges if e[0] in known and e[1] in known)
        return self if edges == self.edges else replace(self, edges=edges)


def _same_edge(x: tuple[int, int, EdgeKind], y: tuple[int, int, EdgeKind]) -> bool:
    if x[2] is not y[2]:
        return False
    if x[2] is EdgeKind.BIDIRECTIONAL:
        return {x[0], x[1]} == {y[0], y[1]}
    return x[:2] == y[:2]


@dataclass(frozen=True)
class ProductionRule:
    """Rewrite rule. Slots on both sides are preserved, lhs-only slots deleted,
    rhs-only slots created. Matched lhs edges between preserved slots that the
    rhs does not repeat are deleted."""

    lhs: RulePattern
    rhs: RulePattern = RulePattern()

    def problems(self) -> list[str]:
        out = [f"lhs: {p}" for p in self.lhs.problems()]
        out += [f"rhs: {p}" for p in self.rhs.problems()]
        if not self.lhs.nodes:
            out.append("lhs has no nodes")
        return out


@dataclass(frozen=True)
class Genotype:
    rules: tuple[ProductionRule, ...]

    def __len__(self) -> int:
        return len(self.rules)


@dataclass(frozen=True)
class Recipe:
    steps: tuple[tuple[int, int], ...]  # (rule index, application count)

    @property
    def size(self) -> int:
        return sum(c for _, c in self.steps)


Match = dict


def _ordered_slots(pattern: RulePattern) -> list[int]:
    """Slot order for backtracking: each next slot is edge-adjacent if possible."""
    slots = list(pattern.slots)
    adj: dict[int, set[int]] = {s: set() for s in slots}
    for a, b, _ in pattern.edges:
        if a in adj and b in adj:
            adj[a].add(b)
            adj[b].add(a)
    order: list[int] = []
    remaining = slots[:]
    while remaining:
        nxt = next((s for s in remaining if adj[s] & set(order)), remaining[0])
        order.append(nxt)
        remaining.remove(nxt)
    return order


def iter_matches(pattern: RulePattern, host: NarrativeGraph) -> Iterator[dict[int, str]]:
    labels = dict(pattern.nodes)
    slots = list(labels)
    order = pattern.search_order
    by_trope = host.ids_by_trope
    candidates = {}
    for s in slots:
        admitted = _admitted(labels[s])
        if len(admitted) == 1:
            cands = by_trope.get(next(iter(admitted)), [])
        else:
            cands = [n for n in host.sorted_ids if host.tropes[n] in admitted]
        if not cands:
            return
        candidates[s] = cands
    # edges checkable once both endpoints are bound, keyed by the later slot
    pos = {s: i for i, s in enumerate(order)}
    checks: dict[int, list[tuple[int, int, EdgeKind]]] = {s: [] for s in slots}
    for a, b, kind in pattern.edges:
        if a not in pos or b not in pos:
            return
        checks[order[max(pos[a], pos[b])]].append((a, b, kind))
    edge_set = host.edge_set
    binding: dict[int, str] = {}
    used: set[str] = set()

    def extend(i: int) -> Iterator[dict[int, str]]:
        if i == len(order):
            yield binding.copy()
            return
        slot = order[i]
        for node in candidates[slot]:
            if node in used:
                continue
            binding[slot] = node
            if all(Edge(binding[a], binding[b], k) in edge_set for a, b, k in checks[slot]):
                used.add(node)
                yield from extend(i + 1)
                used.discard(node)
            del binding[slot]

    yield from extend(0)


def _match_key(m: dict[int, str], slots: tuple[int, ...]) -> tuple[str, ...]:
    return tuple(m[s] for s in slots)


def find_matches(rule: ProductionRule, host: NarrativeGraph) -> list[dict[int, str]]:
    """All injective label- and edge-compatible embeddings of the rule's lhs,
    ordered lexicographically by the host ids bound to the lhs slots."""
    slots = rule.lhs.slots
    return sorted(iter_matches(rule.lhs, host), key=lambda m: _match_key(m, slots))


def _fresh_ids(host: NarrativeGraph, count: int) -> list[str]:
    """``n<k>`` ids above every ``n<digits>`` id already in the host."""
    if not count:
        return []
    top = 0
    for n in host.node_ids:
        if n[:1] == "n" and n[1:].isdecimal() and n.isascii():
            top = max(top, int(n[1:]))
    return [f"n{top + i}" for i in range(1, count + 1)]


def _resolve(label: Label, rng: random.Random) -> Trope:
    if isinstance(label, Trope):
        return label
    return rng.choice(label.tropes)


def rewrite(
    rule: ProductionRule, host: NarrativeGraph, match: dict[int, str], rng: random.Random
) -> NarrativeGraph:
    lhs_labels = dict(rule.lhs.nodes)
    rhs_labels = dict(rule.rhs.nodes)
    deleted = {match[s] for s in lhs_labels if s not in rhs_labels}
    created = [s for s in rhs_labels if s not in lhs_labels]

    binding = {s: match[s] for s in lhs_labels if s in rhs_labels}
    relabel = {
        binding[s]: rhs_labels[s]
        for s in binding
        if isinstance(rhs_labels[s], Trope) and rhs_labels[s] is not host.tropes[binding[s]]
    }
    if relabel:
        nodes = [
            Node(n.id, relabel.get(n.id, n.trope)) for n in host.nodes if n.id not in deleted
        ]
    elif deleted:
        nodes = [n for n in host.nodes if n.id not in deleted]
    else:
        nodes = list(host.nodes)
    for slot, node_id in zip(created, _fresh_ids(host, len(created))):
        binding[slot] = node_id
        nodes.append(Node(node_id, _resolve(rhs_labels[slot], rng)))

    dropped = {
        Edge(match[a], match[b], k)
        for a, b, k in rule.lhs.edges
        if a in rhs_labels and b in rhs_labels
        and not any(_same_edge((a, b, k), r) for r in rule.rhs.edges)
    }
    edges = {
        e: None
        for e in host.edges
        if e.source not in deleted and e.target not in deleted and e not in dropped
    }
    for a, b, kind in rule.rhs.edges:
        if a not in binding or b not in binding or binding[a] == binding[b]:
            continue
        edges.setdefault(Edge(binding[a], binding[b], kind), None)
    return NarrativeGraph(host.name, tuple(nodes), tuple(edges))


def apply_rule(rule: ProductionRule, host: NarrativeGraph, rng: random.Random) -> NarrativeGraph:
    """Rewrite one uniformly chosen match; without a match the host is returned as is."""
    counts = host.trope_counts
    if any(not any(counts[t] for t in _admitted(lab)) for _, lab in rule.lhs.nodes):
        return host
    matches = list(iter_matches(rule.lhs, host))
    if not matches:
        return host
    return rewrite(rule, host, rng.choice(matches), rng)


def sample_recipe(genotype: Genotype, rng: random.Random) -> Recipe:
    n = len(genotype.rules)
    draws = rng.randint(n, n + EXTRA_RECIPE_DRAWS)
    counts: dict[int, int] = {}
    for _ in range(draws):
        i = rng.randrange(n)
        counts[i] = counts.get(i, 0) + 1
    return Recipe(tuple(counts.items()))


def run_recipe(
    genotype: Genotype, recipe: Recipe, root: NarrativeGraph, rng: random.Random
) -> NarrativeGraph:
    g = root
    for index, count in recipe.steps:
        rule = genotype.rules[index]
        for _ in range(count):
            nxt = apply_rule(rule, g, rng)
            if nxt is g:
                # no match, and a repeat on the same graph cannot match either
                break
            g = nxt
    return g


@dataclass(frozen=True)
class Derivation:
    graph: NarrativeGraph
    recipe: Recipe
    evaluation: Evaluation


def derive(
    genotype: Genotype,
    root: NarrativeGraph,
    rng: random.Random,
    root_catalog: PatternCatalog | None = None,
    recipes: int = RECIPES_PER_INDIVIDUAL,
    cache: dict | None = None,
    step_threshold: int = STEP_THRESHOLD,
) -> Derivation:
    """Try ``recipes`` sampled recipes and keep the best outcome.

    Feasible beats infeasible, then higher fitness, then the earlier recipe.
    ``cache`` maps a graph's (nodes, edges) to its evaluation.
    """
    if root_catalog is None:
        root_catalog = detect_all(root)
    best: Derivation | None = None
    for _ in range(recipes):
        recipe = sample_recipe(genotype, rng)
        g = run_recipe(genotype, recipe, root, rng)
        key = (g.nodes, g.edges)
        ev = cache.get(key) if cache is not None else None
        if ev is None:
            ev = evaluate(g, root_catalog, step_threshold)
            if cache is not None:
                cache[key] = ev
        if best is None or (ev.feasible, ev.fitness) > (
            best.evaluation.feasible,
            best.evaluation.fitness,
        ):
            best = Derivation(g, recipe, ev)
    assert best is not None
    return best


def derive_phenotype(
    genotype: Genotype, root: NarrativeGraph, rng: random.Random
) -> tuple[NarrativeGraph, Recipe]:
    d = derive(genotype, root, rng)
    return d.graph, d.recipe


# -- random generation and variation -------------------------------------------


def _random_edges(
    slots: list[int], rng: random.Random
) -> tuple[tuple[int, int, EdgeKind], ...]:
    pairs = [(a, b) for i, a in enumerate(slots) for b in slots[i + 1:]]
    chosen = rng.sample(pairs, rng.randint(0, len(pairs)))
    edges = []
    for a, b in chosen:
        if rng.random() < 0.5:
            a, b = b, a
        edges.append((a, b, rng.choice(EDGE_KINDS)))
    return tuple(edges)


def random_rule(rng: random.Random) -> ProductionRule:
    n_lhs = rng.randint(1, MAX_LHS_NODES)
    lhs_slots = list(range(n_lhs))
    lhs = RulePattern(
        tuple((s, rng.choice(LABELS)) for s in lhs_slots), _random_edges(lhs_slots, rng)
    )
    kept = [s for s in lhs_slots if rng.random() < 0.5]
    n_new = rng.randint(0, max(0, MAX_RHS_NODES - len(kept)))
    rhs_nodes = [
        (s, lhs.label(s) if rng.random() < 0.5 else rng.choice(LABELS)) for s in kept
    ]
    rhs_nodes += [(n_lhs + i, rng.choice(LABELS)) for i in range(n_new)]
    rhs_slots = [s for s, _ in rhs_nodes]
    return ProductionRule(lhs, RulePattern(tuple(rhs_nodes), _random_edges(rhs_slots, rng)))


def random_genotype(rng: random.Random, min_rules: int = 2, max_rules: int = 5) -> Genotype:
    return Genotype(tuple(random_rule(rng) for _ in range(rng.randint(min_rules, max_rules))))


EDITS = ("relabel", "add_node", "remove_node", "add_edge", "remove_edge", "change_kind")


def _edit_rule(rule: ProductionRule, edit: str, rng: random.Random) -> ProductionRule:
    lhs, rhs = rule.lhs, rule.rhs
    if edit == "relabel":
        sides = [("lhs", i) for i in range(len(lhs.nodes))]
        sides += [("rhs", i) for i in range(len(rhs.nodes))]
        side, i = rng.choice(sides)
        pat = lhs if side == "lhs" else rhs
        nodes = list(pat.nodes)
        nodes[i] = (nodes[i][0], rng.choice(LABELS))
        pat = replace(pat, nodes=tuple(nodes))
        return replace(rule, **{side: pat})
    if edit == "add_node":
        slot = max((*lhs.slots, *rhs.slots), default=-1) + 1
        return replace(rule, rhs=replace(rhs, nodes=rhs.nodes + ((slot, rng.choice(LABELS)),)))
    if edit == "remove_node":
        referenced = {s for a, b, _ in rhs.edges for s in (a, b)}
        free = [s for s in rhs.slots if s not in referenced]
        if not free:
            return rule
        victim = rng.choice(free)
        return replace(rule, rhs=replace(rhs, nodes=tuple(n for n in rhs.nodes if n[0] != victim)))

    side = rng.choice(("lhs", "rhs"))
    pat = lhs if side == "lhs" else rhs
    edges = list(pat.edges)
    if edit == "add_edge":
        if len(pat.nodes) < 2:
            return rule
        a, b = rng.sample(pat.slots, 2)
        new = (a, b, rng.choice(EDGE_KINDS))
        if any(_same_edge(new, e) for e in edges):
            return rule
        edges.append(new)
    elif not edges:
        return rule
    elif edit == "remove_edge":
        edges.pop(rng.randrange(len(edges)))
    else:  # change_kind
        i = rng.randrange(len(edges))
        a, b, kind = edges[i]
        new = (a, b, rng.choice([k for k in EDGE_KINDS if k is not kind]))
        if any(_same_edge(new, e) for e in edges):
            return rule
        edges[i] = new
    return replace(rule, **{side: replace(pat, edges=tuple(edges))})


def mutate_with_edit(
    genotype: Genotype, rng: random.Random, add_remove_probability: float = 0.1
) -> tuple[Genotype, str]:
    """Mutate and also report which operator ran (for diagnostics and tests)."""
    rules = list(genotype.rules)
    if rng.random() < add_remove_probability:
        if len(rules) <= 1 or rng.random() < 0.5:
            rules.insert(rng.randint(0, len(rules)), random_rule(rng))
            return Genotype(tuple(rules)), "add_rule"
        rules.pop(rng.randrange(len(rules)))
        return Genotype(tuple(rules)), "remove_rule"
    i = rng.randrange(len(rules))
    edit = rng.choice(EDITS)
    rules[i] = _edit_rule(rules[i], edit, rng)
    return Genotype(tuple(rules)), edit


def mutate(
    genotype: Genotype, rng: random.Random, add_remove_probability: float = 0.1
) -> Genotype:
    return mutate_with_edit(genotype, rng, add_remove_probability)[0]


def crossover(
    a: Genotype, b: Genotype, rng: random.Random
) -> tuple[Genotype, Genotype]:
    """Swap the lhs or the rhs of one random rule from each parent."""
    i = rng.randrange(len(a.rules))
    j = rng.randrange(len(b.rules))
    side = rng.choice(("lhs", "rhs"))
    ra, rb = a.rules[i], b.rules[j]
    na = replace(ra, **{side: getattr(rb, side)})
    nb = replace(rb, **{side: getattr(ra, side)})
    na = ProductionRule(na.lhs.repaired(), na.rhs.repaired())
    nb = ProductionRule(nb.lhs.repaired(), nb.rhs.repaired())
    ra_rules = list(a.rules)
    rb_rules = list(b.rules)
    ra_rules[i] = na
    rb_rules[j] = nb
    return Genotype(tuple(ra_rules)), Genotype(tuple(rb_rules))


# -- serialization ---------------------------------------------------------------


def _pattern_to_dict(p: RulePattern) -> dict:
    return {
        "nodes": [[s, lab.symbol] for s, lab in p.nodes],
        "edges": [[a, b, k.value] for a, b, k in p.edges],
    }


def _pattern_from_dict(d: dict) -> RulePattern:
    return RulePattern(
        tuple((int(s), parse_label(lab)) for s, lab in d.get("nodes", [])),
        tuple((int(a), int(b), EdgeKind(k)) for a, b, k in d.get("edges", [])),
    )


def genotype_to_dict(g: Genotype) -> dict:
    return {
        "rules": [
            {"lhs": _pattern_to_dict(r.lhs), "rhs": _pattern_to_dict(r.rhs)} for r in g.rules
        ]
    }


def genotype_from_dict(d: dict) -> Genotype:
    return Genotype(
        tuple(
            ProductionRule(_pattern_from_dict(r["lhs"]), _pattern_from_dict(r["rhs"]))
            for r in d["rules"]
        )
    )
