"""Directed road networks, route enumeration and series-parallel structure."""

from __future__ import annotations

import itertools
import random
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .costs import EdgeCost, Zero

Path = tuple  # ordered tuple of edge ids

EXACT_EDGE_LIMIT = 16


class NetworkError(ValueError):
    """Validation failure; ``errors`` lists every violation found."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class Edge:
    id: str
    tail: str
    head: str
    cost: EdgeCost = field(default_factory=EdgeCost)
    has_light: bool = False
    # name of a network parameter driving ``cost.p``: "p" or "1-p"
    p_param: str | None = None

    @property
    def label(self) -> str:
        return f"{self.tail}->{self.head}"


@dataclass(frozen=True)
class Population:
    id: str
    origin: str
    destination: str
    demand: float = 1.0


@dataclass(frozen=True)
class Network:
    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    populations: tuple[Population, ...]
    parameters: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {e.id: e for e in self.edges})

    def edge(self, eid: str) -> Edge:
        return self._by_id[eid]

    @property
    def edge_ids(self) -> list[str]:
        return [e.id for e in self.edges]

    @property
    def population(self) -> Population:
        if len(self.populations) != 1:
            raise NetworkError([f"expected a two-terminal network, found {len(self.populations)} populations"])
        return self.populations[0]

    @property
    def total_demand(self) -> float:
        return sum(pop.demand for pop in self.populations)

    def in_degree(self, node: str) -> int:
        return sum(1 for e in self.edges if e.head == node)

    def out_degree(self, node: str) -> int:
        return sum(1 for e in self.edges if e.tail == node)

    def find_edge(self, tail: str, head: str) -> Edge:
        for e in self.edges:
            if e.tail == tail and e.head == head:
                return e
        raise KeyError(f"no edge {tail}->{head}")

    def replace_edges(self, updates: Mapping[str, Edge]) -> Network:
        return replace(self, edges=tuple(updates.get(e.id, e) for e in self.edges))

    def with_costs(self, costs: Mapping[str, EdgeCost]) -> Network:
        return self.replace_edges({eid: replace(self.edge(eid), cost=c) for eid, c in costs.items()})

    def without_edges(self, removed: Iterable[str]) -> Network:
        removed = set(removed)
        return replace(self, edges=tuple(e for e in self.edges if e.id not in removed))

    def with_parameters(self, **values: float) -> Network:
        """Rebind named red-proportion parameters, e.g. ``net.with_parameters(p=0.3)``."""
        params = dict(self.parameters)
        params.update(values)
        updates = {}
        for e in self.edges:
            if e.p_param is None:
                continue
            name, complement = parse_p_param(e.p_param)
            if name not in params:
                raise NetworkError([f"edge {e.id}: unbound parameter {name!r}"])
            p = 1.0 - params[name] if complement else params[name]
            updates[e.id] = replace(e, cost=e.cost.with_p(p))
        return replace(self, parameters=params).replace_edges(updates)


def parse_p_param(expr: str) -> tuple[str, bool]:
    text = expr.replace(" ", "")
    if text.startswith("1-"):
        return text[2:], True
    return text, False


# --------------------------------------------------------------------------
# validation and light placement
# --------------------------------------------------------------------------


def light_nodes(nodes: Iterable[str], edges: Sequence[Edge]) -> set[str]:
    """Junctions: in-degree >= 2 and at least one way out (sinks are not junctions)."""
    indeg: dict[str, int] = defaultdict(int)
    outdeg: dict[str, int] = defaultdict(int)
    for e in edges:
        indeg[e.head] += 1
        outdeg[e.tail] += 1
    return {v for v in nodes if indeg[v] >= 2 and outdeg[v] > 0}


def place_lights(net: Network) -> Network:
    lit = light_nodes(net.nodes, net.edges)
    return replace(net, edges=tuple(replace(e, has_light=e.head in lit) for e in net.edges))


def _reachable(start: str, adj: Mapping[str, list[str]], stop: str | None = None) -> set[str]:
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        if u == stop:
            continue
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def validate_network(net: Network | Mapping) -> Network:
    """Check every structural invariant, place lights, return the network.

    Accepts a ``Network`` or a raw description as parsed from a network
    file. Raises ``NetworkError`` carrying the complete list of violations.
    """
    if isinstance(net, Mapping):
        from .io import network_from_dict

        return network_from_dict(net)
    errors = []
    node_set = set(net.nodes)
    if len(node_set) != len(net.nodes):
        errors.append("duplicate node id")
    seen_ids, seen_pairs = set(), set()
    for e in net.edges:
        if e.id in seen_ids:
            errors.append(f"duplicate edge id {e.id!r}")
        seen_ids.add(e.id)
        if e.tail == e.head:
            errors.append(f"self-loop on {e.tail!r} (edge {e.id!r})")
        if (e.tail, e.head) in seen_pairs:
            errors.append(f"duplicate edge for ordered pair {e.tail}->{e.head}")
        seen_pairs.add((e.tail, e.head))
        for v in (e.tail, e.head):
            if v not in node_set:
                errors.append(f"edge {e.id!r} references unknown node {v!r}")
    net = place_lights(net)
    for e in net.edges:
        if not e.has_light and (not isinstance(e.cost.waiting, Zero) or e.cost.p != 0):
            errors.append(f"edge {e.id!r} carries a waiting family but {e.head!r} has no light")
    adj = defaultdict(list)
    for e in net.edges:
        adj[e.tail].append(e.head)
    pop_ids = set()
    for pop in net.populations:
        if pop.id in pop_ids:
            errors.append(f"duplicate population id {pop.id!r}")
        pop_ids.add(pop.id)
        if pop.demand < 0:
            errors.append(f"negative demand {pop.demand} for population {pop.id!r}")
        missing = [v for v in (pop.origin, pop.destination) if v not in node_set]
        if missing:
            errors.append(f"population {pop.id!r} references unknown node(s) {missing}")
        elif pop.origin == pop.destination:
            errors.append(f"population {pop.id!r} has identical origin and destination")
        elif pop.destination not in _reachable(pop.origin, adj):
            errors.append(f"destination {pop.destination!r} unreachable from {pop.origin!r}")
    if not net.populations:
        errors.append("no populations")
    if errors:
        raise NetworkError(errors)
    return net


# --------------------------------------------------------------------------
# routes
# --------------------------------------------------------------------------


class PathLimitError(RuntimeError):
    pass


def enumerate_paths(net: Network, pop: Population | None = None, cap: int = 1000) -> list[Path]:
    """All simple origin-destination paths, sorted by edge-id sequence."""
    pop = pop or net.population
    out_edges = defaultdict(list)
    for e in net.edges:
        out_edges[e.tail].append(e)
    paths: list[Path] = []

    def dfs(node, visited, acc):
        if node == pop.destination:
            paths.append(tuple(acc))
            if len(paths) > cap:
                raise PathLimitError(f"more than {cap} paths; use the iterative solver instead")
            return
        for e in out_edges[node]:
            if e.head not in visited:
                visited.add(e.head)
                acc.append(e.id)
                dfs(e.head, visited, acc)
                acc.pop()
                visited.discard(e.head)

    dfs(pop.origin, {pop.origin}, [])
    return sorted(paths)


def usable_edges(edges: Iterable[Edge], origin: str, destination: str) -> list[Edge]:
    """Edges lying on some origin-destination route.

    Uses reachability that never passes through the terminals, which is exact
    on acyclic networks (all series-parallel networks are acyclic).
    """
    edges = list(edges)
    fwd, bwd = defaultdict(list), defaultdict(list)
    for e in edges:
        fwd[e.tail].append(e.head)
        bwd[e.head].append(e.tail)
    from_o = _reachable(origin, fwd, stop=destination)
    to_d = _reachable(destination, bwd, stop=origin)
    return [
        e for e in edges
        if e.tail in from_o and e.tail != destination and e.head in to_d and e.head != origin
    ]


# --------------------------------------------------------------------------
# series-parallel recognition
# --------------------------------------------------------------------------


@dataclass
class SPResult:
    is_sp: bool
    trace: list[str]
    kernel: list[tuple[str, str, tuple[str, ...]]]

    def __bool__(self):
        return self.is_sp


def _reduce(arcs, origin, destination, rng: random.Random | None = None):
    """Exhaustive series/parallel reduction of a multigraph.

    ``arcs`` is a list of ``(tail, head, members)``; returns the irreducible
    kernel and the list of reductions applied.
    """
    arcs = list(arcs)
    trace = []
    while True:
        groups = defaultdict(list)
        ins, outs = defaultdict(list), defaultdict(list)
        for i, (u, v, _) in enumerate(arcs):
            groups[(u, v)].append(i)
            outs[u].append(i)
            ins[v].append(i)
        moves = [("parallel", key) for key, idx in groups.items() if len(idx) > 1]
        moves += [
            ("series", v) for v in ins
            if v not in (origin, destination) and len(ins[v]) == 1 and len(outs[v]) == 1
            and ins[v] != outs[v]
        ]
        if not moves:
            return arcs, trace
        kind, key = rng.choice(moves) if rng is not None else min(moves)
        if kind == "parallel":
            idx = groups[key]
            members = tuple(sorted(itertools.chain.from_iterable(arcs[i][2] for i in idx)))
            trace.append(f"parallel {key[0]}->{key[1]} x{len(idx)}")
            arcs = [a for i, a in enumerate(arcs) if i not in idx] + [(key[0], key[1], members)]
        else:
            (i,), (j,) = ins[key], outs[key]
            u, w = arcs[i][0], arcs[j][1]
            trace.append(f"series {u}->{key}->{w}")
            arcs = [a for k, a in enumerate(arcs) if k not in (i, j)] + [(u, w, arcs[i][2] + arcs[j][2])]


def _sp_check(edges: Sequence[Edge], origin: str, destination: str, rng=None) -> SPResult:
    arcs = [(e.tail, e.head, (e.id,)) for e in edges]
    if not arcs:
        return SPResult(False, [], [])
    kernel, trace = _reduce(arcs, origin, destination, rng)
    ok = len(kernel) == 1 and kernel[0][:2] == (origin, destination)
    return SPResult(ok, trace, kernel)


def is_series_parallel(net: Network, pop: Population | None = None, rng: random.Random | None = None) -> SPResult:
    """Series-parallel test on the edges usable by ``pop``.

    Repeatedly merges parallel arcs and contracts internal nodes with one
    arc in and one out; the network is series-parallel iff this ends at the
    single arc origin->destination. Pass ``rng`` to randomize the order.
    """
    pop = pop or net.population
    edges = usable_edges(net.edges, pop.origin, pop.destination)
    if not edges:
        raise NetworkError([f"no route from {pop.origin!r} to {pop.destination!r}"])
    return _sp_check(edges, pop.origin, pop.destination, rng)


@dataclass
class SPSubgraph:
    removed: tuple[str, ...]
    heuristic: bool = False


def _is_valid_kept(kept: Sequence[Edge], o: str, d: str) -> bool:
    # every kept edge must stay on some route, otherwise it is not part of the subgraph
    if len(usable_edges(kept, o, d)) != len(kept):
        return False
    return _sp_check(kept, o, d).is_sp


def _tie_key(removed: Sequence[Edge], o: str, d: str):
    # prefer cutting internal cross-links over edges touching a terminal
    touching = sum(1 for e in removed if o in (e.tail, e.head) or d in (e.tail, e.head))
    return touching, tuple(sorted(e.id for e in removed))


def max_sp_subgraph(net: Network, pop: Population | None = None, exact_limit: int = EXACT_EDGE_LIMIT) -> SPSubgraph:
    """Smallest edge set whose suppression leaves a series-parallel network.

    Only edges ending at a traffic light can be suppressed by a light
    cycle, so candidates are drawn from those first; the search widens to
    every edge only when no light-controlled set works. Exact subset search
    up to ``exact_limit`` usable edges, greedy above. Equal-size candidates
    are ordered by how many removed edges touch the origin or destination,
    then by edge ids.
    """
    pop = pop or net.population
    o, d = pop.origin, pop.destination
    usable = usable_edges(net.edges, o, d)
    if not usable:
        raise NetworkError([f"no route from {o!r} to {d!r}"])
    if _sp_check(usable, o, d).is_sp:
        return SPSubgraph(())
    lit = light_nodes(net.nodes, net.edges)
    controlled = [e for e in usable if e.head in lit]
    exact = len(usable) <= exact_limit
    for pool in (controlled, usable):
        found = _exact_sp(usable, pool, o, d) if exact else _greedy_sp(usable, pool, o, d)
        if found is not None:
            return SPSubgraph(found, heuristic=not exact)
    raise NetworkError(["no series-parallel subgraph found"])  # unreachable: one route is SP


def _exact_sp(usable, pool, o, d):
    for k in range(1, len(pool) + 1):
        best = None
        for removed in itertools.combinations(pool, k):
            rm = {e.id for e in removed}
            kept = [e for e in usable if e.id not in rm]
            if kept and _is_valid_kept(kept, o, d):
                key = _tie_key(removed, o, d)
                if best is None or key < best[0]:
                    best = (key, removed)
        if best is not None:
            return tuple(sorted(e.id for e in best[1]))
    return None


def _greedy_sp(usable, pool, o, d):
    kept = list(usable)
    pool_ids = {e.id for e in pool}
    while not _sp_check(kept, o, d).is_sp:
        best = None
        for e in kept:
            if e.id not in pool_ids:
                continue
            cand = usable_edges([f for f in kept if f.id != e.id], o, d)
            if not cand:
                continue
            kernel, _ = _reduce([(f.tail, f.head, (f.id,)) for f in cand], o, d)
            lost = [f for f in kept if f not in cand]
            key = (len(kernel), len(lost), _tie_key(lost, o, d))
            if best is None or key < best[0]:
                best = (key, cand)
        if best is None:
            return None
        kept = best[1]
    kept_ids = {e.id for e in kept}
    return tuple(sorted(e.id for e in usable if e.id not in kept_ids))
