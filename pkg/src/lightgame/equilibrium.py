"""User equilibria and social optima of traffic-light congestion games.

Equilibria minimize the Beckmann potential ``sum_e int_0^{f_e} c_e``; the
social optimum is the equilibrium of the game whose edge costs are replaced
by marginal costs ``d/dx [x c_e(x)]``. Both are solved with Frank-Wolfe
iterations driven by shortest-path best responses.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
import random
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .costs import eval_cost, integral_cost, marginal_cost
from .network import Network, NetworkError, Path, Population, PathLimitError, enumerate_paths

ENUMERATION_LIMIT = 64


class SolverError(RuntimeError):
    pass


class BlockedError(SolverError):
    """No finite-cost route between an origin and its destination."""


@dataclass
class SolverConfig:
    tol: float = 1e-6
    max_iter: int = 10_000
    # "pairwise" moves flow from the costliest used route to the best
    # response; "fw" is the classic all-or-nothing convex combination
    method: str = "pairwise"
    line_search_iters: int = 60
    # None starts from all-or-nothing at free-flow costs; an int draws a
    # random feasible starting flow
    seed: int | None = None

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.method not in ("pairwise", "fw"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class FlowDistribution:
    """Route flows per population id."""

    paths: dict[str, dict[Path, float]]

    def edge_loads(self, net: Network) -> dict[str, float]:
        loads = {eid: 0.0 for eid in net.edge_ids}
        for flows in self.paths.values():
            for path, x in flows.items():
                for eid in path:
                    loads[eid] += x
        return loads

    def check_feasible(self, net: Network, atol: float = 1e-9) -> None:
        for pop in net.populations:
            flows = self.paths.get(pop.id, {})
            if any(x < -atol for x in flows.values()):
                raise SolverError(f"negative route flow for population {pop.id!r}")
            total = sum(flows.values())
            if abs(total - pop.demand) > atol * max(1.0, pop.demand):
                raise SolverError(f"population {pop.id!r} routes {total}, demand is {pop.demand}")
            for path in flows:
                _check_route(net, pop, path)


def _check_route(net: Network, pop: Population, path: Path) -> None:
    node = pop.origin
    for eid in path:
        e = net.edge(eid)
        if e.tail != node:
            raise SolverError(f"route {path} is not connected at {eid!r}")
        node = e.head
    if node != pop.destination:
        raise SolverError(f"route {path} does not end at {pop.destination!r}")


@dataclass
class EquilibriumResult:
    kind: str
    flow: FlowDistribution
    edge_loads: dict[str, float]
    social_cost: float
    relative_gap: float
    iterations: int
    converged: bool
    path_costs: dict[str, dict[Path, float]]
    gap_trace: list[float] = field(default_factory=list)
    potential_trace: list[float] = field(default_factory=list)
    nonconvex: bool = False
    runtime: float = 0.0

    def used_paths(self, pop_id: str, threshold: float = 1e-8) -> dict[Path, float]:
        return {p: x for p, x in self.flow.paths[pop_id].items() if x > threshold}

    def to_dict(self, digits: int | None = None) -> dict:
        r = (lambda v: float(f"{v:.{digits}g}")) if digits else float
        rows = []
        for pop_id, costs in self.path_costs.items():
            for path, cost in costs.items():
                rows.append({
                    "population": pop_id,
                    "path": list(path),
                    "flow": r(self.flow.paths[pop_id].get(path, 0.0)),
                    "cost": r(cost),
                })
        return {
            "kind": self.kind,
            "social_cost": r(self.social_cost),
            "relative_gap": r(self.relative_gap),
            "iterations": self.iterations,
            "converged": self.converged,
            "nonconvex": self.nonconvex,
            "edge_loads": {k: r(v) for k, v in self.edge_loads.items()},
            "paths": rows,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> EquilibriumResult:
        paths: dict[str, dict[Path, float]] = defaultdict(dict)
        costs: dict[str, dict[Path, float]] = defaultdict(dict)
        for row in raw["paths"]:
            key = tuple(row["path"])
            costs[row["population"]][key] = float(row["cost"])
            if row["flow"]:
                paths[row["population"]][key] = float(row["flow"])
        return cls(
            kind=raw["kind"],
            flow=FlowDistribution(dict(paths)),
            edge_loads=dict(raw["edge_loads"]),
            social_cost=raw["social_cost"],
            relative_gap=raw["relative_gap"],
            iterations=raw["iterations"],
            converged=raw["converged"],
            path_costs=dict(costs),
            nonconvex=raw.get("nonconvex", False),
        )

    def to_csv(self, digits: int | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["population", "path", "flow", "cost"])
        for row in self.to_dict(digits)["paths"]:
            w.writerow([row["population"], " ".join(row["path"]), row["flow"], row["cost"]])
        return buf.getvalue()


# --------------------------------------------------------------------------
# cost evaluation
# --------------------------------------------------------------------------


class _Game:
    """Edge-indexed view of a network for one cost interpretation.

    ``kind`` is "ue" (travel costs, Beckmann potential) or "so" (marginal
    costs, social cost as potential).
    """

    def __init__(self, net: Network, kind: str):
        self.net = net
        self.kind = kind
        self.ids = net.edge_ids
        self.index = {eid: i for i, eid in enumerate(self.ids)}
        self.costs = [e.cost for e in net.edges]
        self.blocked = np.array([c.blocked for c in self.costs])
        self.out = defaultdict(list)
        for i, e in enumerate(net.edges):
            if not self.blocked[i]:
                self.out[e.tail].append((e.id, i, e.head))
        for lst in self.out.values():
            lst.sort()

    def edge_cost(self, i: int, x: float) -> float:
        x = max(x, 0.0)
        if self.kind == "ue":
            return eval_cost(self.costs[i], x)
        return marginal_cost(self.costs[i], x)

    def edge_costs(self, loads: np.ndarray) -> np.ndarray:
        return np.array([self.edge_cost(i, x) for i, x in enumerate(loads)])

    def potential(self, loads: np.ndarray) -> float:
        total = 0.0
        for i, x in enumerate(loads):
            x = max(x, 0.0)
            if x == 0.0:
                continue
            if self.kind == "ue":
                total += integral_cost(self.costs[i], x)
            else:
                total += x * eval_cost(self.costs[i], x)
        return total

    def incidence(self, path: Path) -> np.ndarray:
        v = np.zeros(len(self.ids))
        for eid in path:
            v[self.index[eid]] += 1.0
        return v

    def path_cost(self, path: Path, ec: np.ndarray) -> float:
        return float(sum(ec[self.index[eid]] for eid in path))

    def shortest_path(self, pop: Population, ec: np.ndarray) -> tuple[Path, float]:
        """Dijkstra with ties broken by the edge-id sequence."""
        heap = [(0.0, (), pop.origin)]
        done = set()
        while heap:
            dist, seq, node = heapq.heappop(heap)
            if node in done:
                continue
            done.add(node)
            if node == pop.destination:
                return seq, dist
            for eid, i, head in self.out[node]:
                if head not in done and math.isfinite(ec[i]):
                    heapq.heappush(heap, (dist + ec[i], seq + (eid,), head))
        raise BlockedError(f"no finite-cost route from {pop.origin!r} to {pop.destination!r}")


def _loads_array(game: _Game, flow: FlowDistribution) -> np.ndarray:
    loads = np.zeros(len(game.ids))
    for flows in flow.paths.values():
        for path, x in flows.items():
            for eid in path:
                loads[game.index[eid]] += x
    return loads


def best_response(net: Network, loads: Mapping[str, float], pop: Population | None = None, kind: str = "ue") -> Path:
    """A cheapest route for ``pop`` at the given edge loads."""
    game = _Game(net, kind)
    pop = pop or net.population
    arr = np.array([loads.get(eid, 0.0) for eid in game.ids])
    path, _ = game.shortest_path(pop, game.edge_costs(arr))
    return path


# --------------------------------------------------------------------------
# gap and social cost
# --------------------------------------------------------------------------


def _gap_terms(game: _Game, flow: FlowDistribution, ec: np.ndarray):
    total, best_total = 0.0, 0.0
    best = {}
    for pop in game.net.populations:
        if pop.demand == 0:
            continue
        for path, x in flow.paths[pop.id].items():
            if x > 0:
                total += x * game.path_cost(path, ec)
        bpath, bcost = game.shortest_path(pop, ec)
        best[pop.id] = (bpath, bcost)
        best_total += pop.demand * bcost
    return total, best_total, best


def _relative(total: float, best_total: float) -> float:
    if total <= 0:
        return 0.0
    return max(0.0, (total - best_total) / total)


def relative_gap(net: Network, flow: FlowDistribution, kind: str = "ue") -> float:
    """``(total cost - best-response cost) / total cost``; zero at an equilibrium."""
    flow.check_feasible(net)
    game = _Game(net, kind)
    ec = game.edge_costs(_loads_array(game, flow))
    total, best_total, _ = _gap_terms(game, flow, ec)
    return _relative(total, best_total)


def social_cost(net: Network, flow: FlowDistribution) -> float:
    """Total travel time, computed per edge and per population; both must agree."""
    flow.check_feasible(net)
    loads = flow.edge_loads(net)
    by_edge = sum(f * eval_cost(net.edge(eid).cost, f) for eid, f in loads.items() if f > 0)
    costs = {eid: eval_cost(net.edge(eid).cost, max(f, 0.0)) for eid, f in loads.items()}
    by_pop = 0.0
    for flows in flow.paths.values():
        for path, x in flows.items():
            if x > 0:
                by_pop += x * sum(costs[eid] for eid in path)
    if abs(by_edge - by_pop) > 1e-9 * max(1.0, abs(by_edge)):
        raise SolverError(f"social cost mismatch: edge sum {by_edge} vs population sum {by_pop}")
    return by_edge


# --------------------------------------------------------------------------
# solver
# --------------------------------------------------------------------------


def _bisect_step(game: _Game, loads: np.ndarray, d: np.ndarray, lam_max: float, iters: int) -> float | None:
    """Exact line search on the potential along ``loads + lam*d``.

    Returns None when the directional derivative at 0 is numerically flat.
    """
    nz = np.nonzero(d)[0]

    def slope(lam):
        return sum(game.edge_cost(i, loads[i] + lam * d[i]) * d[i] for i in nz)

    g0 = slope(0.0)
    if not g0 < -1e-15:
        return None
    if slope(lam_max) <= 0:
        return lam_max
    lo, hi = 0.0, lam_max
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if slope(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _initial_flow(game: _Game) -> FlowDistribution:
    ec = game.edge_costs(np.zeros(len(game.ids)))
    paths = {}
    for pop in game.net.populations:
        if pop.demand > 0:
            path, _ = game.shortest_path(pop, ec)
            paths[pop.id] = {path: pop.demand}
        else:
            paths[pop.id] = {}
    return FlowDistribution(paths)


def random_feasible_flow(net: Network, rng: random.Random | int | None = None) -> FlowDistribution:
    """Random route flows over every unblocked route (Dirichlet weights)."""
    rng = rng if isinstance(rng, random.Random) else random.Random(rng)
    paths = {}
    for pop in net.populations:
        routes = [p for p in enumerate_paths(net, pop, cap=ENUMERATION_LIMIT)
                  if not any(net.edge(eid).cost.blocked for eid in p)]
        if not routes:
            raise BlockedError(f"population {pop.id!r} has no unblocked route")
        w = [rng.expovariate(1.0) for _ in routes]
        s = sum(w)
        paths[pop.id] = {p: pop.demand * wi / s for p, wi in zip(routes, w)}
    return FlowDistribution(paths)


def _solve(net: Network, kind: str, cfg: SolverConfig, init: FlowDistribution | None) -> EquilibriumResult:
    t0 = time.perf_counter()
    game = _Game(net, kind)
    if init is not None:
        init.check_feasible(net)
        flow = FlowDistribution({k: dict(v) for k, v in init.paths.items()})
        for pop in net.populations:
            flow.paths.setdefault(pop.id, {})
    elif cfg.seed is not None:
        flow = random_feasible_flow(net, cfg.seed)
    else:
        flow = _initial_flow(game)
    loads = _loads_array(game, flow)
    pops = [pop for pop in net.populations if pop.demand > 0]
    gaps, potentials = [], [game.potential(loads)]
    converged = False
    gap = 0.0
    k = 0
    for k in range(cfg.max_iter):
        ec = game.edge_costs(loads)
        total, best_total, best = _gap_terms(game, flow, ec)
        gap = _relative(total, best_total)
        gaps.append(gap)
        if gap <= cfg.tol:
            converged = True
            break
        if cfg.method == "fw":
            target = np.zeros_like(loads)
            for pop in pops:
                target += pop.demand * game.incidence(best[pop.id][0])
            d = target - loads
            lam = _bisect_step(game, loads, d, 1.0, cfg.line_search_iters)
            if lam is None:
                lam = 2.0 / (k + 2)
            for pop in pops:
                flows = flow.paths[pop.id]
                for p in flows:
                    flows[p] *= 1.0 - lam
                bp = best[pop.id][0]
                flows[bp] = flows.get(bp, 0.0) + lam * pop.demand
            loads = loads + lam * d
        else:
            for pop in pops:
                ec = game.edge_costs(loads)
                bp, _ = game.shortest_path(pop, ec)
                flows = flow.paths[pop.id]
                away = max(
                    (p for p, x in flows.items() if x > 0),
                    key=lambda p: (game.path_cost(p, ec), p),
                )
                if away == bp:
                    continue
                d = game.incidence(bp) - game.incidence(away)
                lam = _bisect_step(game, loads, d, flows[away], cfg.line_search_iters)
                if lam is None:
                    lam = flows[away] * 2.0 / (k + 2)
                flows[away] -= lam
                flows[bp] = flows.get(bp, 0.0) + lam
                if flows[away] <= 1e-15 * max(1.0, pop.demand):
                    residue = flows.pop(away)
                    flows[bp] += residue
                loads = _loads_array(game, flow)
        for pop in pops:
            flows = flow.paths[pop.id]
            for p in [p for p, x in flows.items() if x <= 0]:
                del flows[p]
        potentials.append(game.potential(loads))
        if potentials[-1] > potentials[-2] + 1e-10 * max(1.0, abs(potentials[-2])):
            raise SolverError(f"potential increased at iteration {k}: {potentials[-2]} -> {potentials[-1]}")
    return _finish(net, kind, flow, gap, k if converged else k + 1, converged, gaps, potentials, t0)


def _finish(net, kind, flow, gap, iterations, converged, gaps, potentials, t0, nonconvex=False):
    flow.check_feasible(net, atol=1e-7)
    loads = flow.edge_loads(net)
    ue = _Game(net, "ue")
    ec = ue.edge_costs(np.array([loads[eid] for eid in ue.ids]))
    path_costs = {}
    for pop in net.populations:
        try:
            routes = enumerate_paths(net, pop, cap=ENUMERATION_LIMIT)
        except PathLimitError:
            routes = sorted(flow.paths[pop.id])
        path_costs[pop.id] = {p: ue.path_cost(p, ec) for p in routes}
    return EquilibriumResult(
        kind=kind,
        flow=flow,
        edge_loads=loads,
        social_cost=social_cost(net, flow),
        relative_gap=gap,
        iterations=iterations,
        converged=converged,
        path_costs=path_costs,
        gap_trace=gaps,
        potential_trace=potentials,
        nonconvex=nonconvex,
        runtime=time.perf_counter() - t0,
    )


def solve_tlue(net: Network, cfg: SolverConfig | None = None, init: FlowDistribution | None = None) -> EquilibriumResult:
    """Traffic-light user equilibrium by potential minimization.

    Stops when the relative gap drops to ``cfg.tol``; otherwise returns the
    last iterate with ``converged=False``.
    """
    return _solve(net, "ue", cfg or SolverConfig(), init)


def marginal_cost_convex(net: Network, points: int = 201) -> bool:
    """True when every ``x c_e(x)`` looks convex on ``[0, 2 * total demand]``."""
    top = max(2.0 * net.total_demand, 1e-9)
    grid = np.linspace(0.0, top, points)
    for e in net.edges:
        if e.cost.blocked:
            continue
        mc = np.array([marginal_cost(e.cost, x) for x in grid])
        if np.any(np.diff(mc) < -1e-9 * np.maximum(1.0, np.abs(mc[:-1]))):
            return False
    return True


def solve_so(net: Network, cfg: SolverConfig | None = None, init: FlowDistribution | None = None) -> EquilibriumResult:
    """Social optimum: the equilibrium of the marginal-cost game.

    Falls back to projected gradient on route flows when some ``x c_e(x)``
    is not convex.
    """
    cfg = cfg or SolverConfig()
    if marginal_cost_convex(net):
        return _solve(net, "so", cfg, init)
    return _projected_gradient_so(net, cfg)


def _project_simplex(v: np.ndarray, total: float) -> np.ndarray:
    if total == 0:
        return np.zeros_like(v)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    ind = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _projected_gradient_so(net: Network, cfg: SolverConfig) -> EquilibriumResult:
    t0 = time.perf_counter()
    game = _Game(net, "so")
    routes = {}
    for pop in net.populations:
        routes[pop.id] = [p for p in enumerate_paths(net, pop, cap=ENUMERATION_LIMIT)
                          if not any(net.edge(eid).cost.blocked for eid in p)]
    blocks = [(pop, np.array([game.incidence(p) for p in routes[pop.id]])) for pop in net.populations]
    xs = [np.full(len(routes[pop.id]), pop.demand / len(routes[pop.id])) for pop in net.populations]

    def loads_of(xs):
        return sum(x @ A for (_, A), x in zip(blocks, xs))

    def sc(xs):
        return game.potential(loads_of(xs))

    step = 1.0
    potentials = [sc(xs)]
    gaps = []
    converged = False
    k = 0
    for k in range(cfg.max_iter):
        mc = game.edge_costs(loads_of(xs))
        grads = [A @ mc for _, A in blocks]
        total = sum(float(g @ x) for g, x in zip(grads, xs))
        best = sum(pop.demand * float(g.min()) for (pop, _), g in zip(blocks, grads))
        gap = _relative(total, best)
        gaps.append(gap)
        if gap <= cfg.tol:
            converged = True
            break
        while True:
            cand = [_project_simplex(x - step * g, pop.demand) for (pop, _), x, g in zip(blocks, xs, grads)]
            val = sc(cand)
            if val <= potentials[-1] or step < 1e-14:
                break
            step *= 0.5
        xs = cand
        potentials.append(val)
        step *= 2.0
    flow = FlowDistribution({
        pop.id: {p: float(v) for p, v in zip(routes[pop.id], x) if v > 0}
        for (pop, _), x in zip(blocks, xs)
    })
    return _finish(net, "so", flow, gaps[-1], k + 1, converged, gaps, potentials, t0, nonconvex=True)


def price_of_anarchy(net: Network, cfg: SolverConfig | None = None) -> float:
    """Equilibrium social cost over optimal social cost."""
    ue = solve_tlue(net, cfg)
    so = solve_so(net, cfg)
    if so.social_cost <= 0:
        if ue.social_cost > 0:
            return math.inf
        raise NetworkError(["price of anarchy undefined: zero optimal and equilibrium cost"])
    return ue.social_cost / so.social_cost


def equilibrium_violation(net: Network, result: EquilibriumResult, threshold: float = 1e-8) -> float:
    """Largest excess cost of a used route over the cheapest route, relative to the cheapest."""
    worst = 0.0
    for pop in net.populations:
        costs = result.path_costs[pop.id]
        cheapest = min(costs.values())
        for path, x in result.flow.paths[pop.id].items():
            if x > threshold:
                worst = max(worst, (costs[path] - cheapest) / max(cheapest, 1e-12))
    return worst
