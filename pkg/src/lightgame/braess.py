"""Braess' paradox: detection, immunization by light cycles, Wheatstone analysis."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .costs import (
    DEFAULT_P_MAX, Blocking, EdgeCost, SimpleExponential, SumoFitted, Zero, eval_cost, marginal_cost,
)
from .equilibrium import SolverConfig, SolverError, solve_so, solve_tlue
from .io import load_network
from .network import (
    Network, NetworkError, is_series_parallel, light_nodes, max_sp_subgraph, place_lights,
)

WHEATSTONE_EDGES = ("O-B", "O-C", "B-C", "B-D", "C-D")


class ImmunizationError(NetworkError):
    pass


# --------------------------------------------------------------------------
# game pairs and detection
# --------------------------------------------------------------------------


@dataclass
class GamePair:
    """A baseline game and a modified game with cheaper edges or less demand."""

    baseline: Network
    modified: Network
    grid_points: int = 200

    def check(self) -> str:
        """Verify shared structure and dominance.

        Returns "symbolic" when every edge passes the coefficient test
        (which holds for all loads), "grid" when only the sampled grid was
        checked. Raises ``NetworkError`` on any violation.
        """
        b, m = self.baseline, self.modified
        errors = []
        if [(e.id, e.tail, e.head) for e in b.edges] != [(e.id, e.tail, e.head) for e in m.edges]:
            errors.append("games do not share the same edges")
        bpops = {p.id: p for p in b.populations}
        for p in m.populations:
            q = bpops.get(p.id)
            if q is None or (q.origin, q.destination) != (p.origin, p.destination):
                errors.append(f"population {p.id!r} differs between the games")
            elif p.demand > q.demand:
                errors.append(f"population {p.id!r}: modified demand {p.demand} exceeds {q.demand}")
        if errors:
            raise NetworkError(errors)
        top = 2.0 * b.total_demand
        grid = np.linspace(0.0, top, self.grid_points)
        symbolic = True
        for e in b.edges:
            ce, me = e.cost, m.edge(e.id).cost
            for t in grid:
                if eval_cost(me, t) > eval_cost(ce, t) + 1e-12:
                    errors.append(f"edge {e.id!r}: modified cost exceeds baseline at load {t:.4g}")
                    break
            if ce.blocked:
                continue
            cb, cm = ce.affine_coeffs(), me.affine_coeffs()
            if cb is None or cm is None or cm[0] > cb[0] or cm[1] > cb[1]:
                symbolic = False
        if errors:
            raise NetworkError(errors)
        return "symbolic" if symbolic else "grid"


@dataclass
class BraessReport:
    sc_baseline: float
    sc_modified: float
    paradox: bool
    dominance: str

    def to_dict(self, digits: int | None = None) -> dict:
        r = (lambda v: float(f"{v:.{digits}g}")) if digits else float
        return {
            "sc_baseline": r(self.sc_baseline),
            "sc_modified": r(self.sc_modified),
            "paradox": self.paradox,
            "dominance": self.dominance,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> BraessReport:
        return cls(float(raw["sc_baseline"]), float(raw["sc_modified"]), bool(raw["paradox"]), str(raw["dominance"]))


def detect_braess(pair: GamePair, cfg: SolverConfig | None = None) -> BraessReport:
    """Solve both equilibria; a paradox is a strict rise in social cost."""
    dominance = pair.check()
    ue_b = solve_tlue(pair.baseline, cfg)
    ue_m = solve_tlue(pair.modified, cfg)
    if not (ue_b.converged and ue_m.converged):
        raise SolverError("equilibrium solve did not converge")
    tol = (cfg or SolverConfig()).tol
    paradox = ue_b.social_cost < ue_m.social_cost * (1 - tol)
    return BraessReport(ue_b.social_cost, ue_m.social_cost, paradox, dominance)


# --------------------------------------------------------------------------
# immunization
# --------------------------------------------------------------------------


@dataclass
class Immunization:
    network: Network
    removed: tuple[str, ...]
    assigned: dict[str, float]
    immune: bool
    heuristic: bool = False


def immunize(net: Network, mode: str = "exact", p_max: float = DEFAULT_P_MAX) -> Immunization:
    """Assign light cycles that steer traffic onto a series-parallel subnetwork.

    ``exact`` closes each suppressed edge with an always-red light (infinite
    wait), which makes the effective network series-parallel. ``bounded``
    can only hold those lights at ``p_max`` red, so immunity is not
    guaranteed. Every other edge into a light gets ``1/(k)`` red where ``k``
    counts the surviving edges entering that junction, or 0 when ``k <= 1``.
    """
    if mode not in ("exact", "bounded"):
        raise ValueError(f"unknown mode {mode!r}")
    net = place_lights(net)
    sub = max_sp_subgraph(net)
    removed = set(sub.removed)
    if not removed:
        return Immunization(net, (), {}, True, sub.heuristic)
    missing = [eid for eid in sorted(removed) if not net.edge(eid).has_light]
    if missing:
        raise ImmunizationError([f"edge {eid!r} must be suppressed but has no light at its end" for eid in missing])
    lit = light_nodes(net.nodes, net.edges)
    updates, assigned = {}, {}
    for e in net.edges:
        if e.id in removed:
            if mode == "exact":
                if isinstance(e.cost.waiting, SumoFitted):
                    raise ImmunizationError([f"edge {e.id!r}: the fitted waiting family cannot block (p=1)"])
                cost = EdgeCost(e.cost.base, Blocking(), 1.0)
            else:
                waiting = e.cost.waiting
                if isinstance(waiting, Zero):
                    waiting = SimpleExponential()
                cost = EdgeCost(e.cost.base, waiting, p_max)
        elif e.head in lit:
            k = net.in_degree(e.head) - sum(1 for r in removed if net.edge(r).head == e.head)
            cost = e.cost.with_p(1.0 / k if k > 1 else 0.0)
        else:
            continue
        assigned[e.id] = cost.p
        updates[e.id] = replace(e, cost=cost, p_param=None)
    out = net.replace_edges(updates)
    if mode == "exact":
        effective = out.without_edges(eid for eid in removed)
        if not is_series_parallel(effective).is_sp:
            raise ImmunizationError(["effective network is not series-parallel"])
    return Immunization(out, tuple(sorted(removed)), assigned, mode == "exact", sub.heuristic)


# --------------------------------------------------------------------------
# Wheatstone network with one light
# --------------------------------------------------------------------------


def wheatstone_network(p: float, d: float = 1.0) -> Network:
    """Bridge network with a light at the lower junction.

    The lower entry carries ``1 + w(load, p)``, the bridge ``w(load, 1-p)``:
    one light, two phases.
    """
    net = load_network("wheatstone_light").with_parameters(p=p)
    return replace(net, populations=(replace(net.population, demand=d),))


def wheatstone_so_flow(p: float) -> tuple[float, float]:
    """Optimal upper-edge loads when the bridge is unused: ``x = y = e^p/(1+e^p)``.

    This is the minimizer over flows with no bridge traffic. For ``p > 0``
    the unrestricted optimum does route some traffic over the bridge; see
    ``wheatstone_tlue`` for the numerical optimum.
    """
    x = math.exp(p) / (1.0 + math.exp(p))
    return x, x


@dataclass
class WheatstonePoint:
    p: float
    x: float  # load on O-B at equilibrium
    y: float  # load on B-D at equilibrium
    sc_tlue: float
    x_so: float
    y_so: float
    sc_so: float
    residual: float = 0.0

    @property
    def mid_flow(self) -> float:
        return self.x - self.y

    @property
    def poa(self) -> float:
        return self.sc_tlue / self.sc_so


def _bisect_root(fn: Callable[[float], float], lo: float, hi: float) -> float:
    """Root of an increasing function on [lo, hi], clamped to the ends."""
    if fn(lo) >= 0:
        return lo
    if fn(hi) <= 0:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if fn(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _three_route_equilibrium(net: Network, d: float, edge_cost):
    """Equal-cost split over the three bridge routes by nested bisection.

    Routes: upper (O-B, B-D) with flow ``a``, lower (O-C, C-D) with ``b``,
    bridge (O-B, B-C, C-D) with ``m``. The inner search balances upper and
    lower for a fixed ``m``; the outer one balances the bridge route.
    """
    c = {eid: net.edge(eid).cost for eid in WHEATSTONE_EDGES}

    def route_costs(a, b, m):
        f = {"O-B": a + m, "B-D": a, "O-C": b, "C-D": b + m, "B-C": m}
        k = {eid: edge_cost(c[eid], f[eid]) for eid in f}
        return k["O-B"] + k["B-D"], k["O-C"] + k["C-D"], k["O-B"] + k["B-C"] + k["C-D"]

    def split(m):
        r = d - m
        a = _bisect_root(lambda a: (lambda c1, c2, _: c1 - c2)(*route_costs(a, r - a, m)), 0.0, r)
        return a, r - a

    def excess(m):
        a, b = split(m)
        c1, c2, c3 = route_costs(a, b, m)
        outer = [ci for ci, fl in ((c1, a), (c2, b)) if fl > 0] or [min(c1, c2)]
        return c3 - min(outer)

    m = _bisect_root(excess, 0.0, d)
    a, b = split(m)
    costs = route_costs(a, b, m)
    flows = (a, b, m)
    cmin = min(costs)
    residual = max(
        max((ci - cmin for ci, fl in zip(costs, flows) if fl > 1e-12), default=0.0),
        0.0,
    )
    return a, b, m, costs, residual


def wheatstone_tlue(p: float, d: float = 1.0) -> WheatstonePoint:
    """Equilibrium and optimum of the one-light Wheatstone network at red proportion ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    net = wheatstone_network(p, d)
    a, b, m, costs, res = _three_route_equilibrium(net, d, eval_cost)
    if res > 1e-10:
        raise SolverError(f"equilibrium residual {res:.3g} above 1e-10")
    sc_tlue = a * costs[0] + b * costs[1] + m * costs[2]
    sa, sb, sm, _, sres = _three_route_equilibrium(net, d, marginal_cost)
    if sres > 1e-10:
        raise SolverError(f"optimum residual {sres:.3g} above 1e-10")
    loads = {"O-B": sa + sm, "B-D": sa, "O-C": sb, "C-D": sb + sm, "B-C": sm}
    sc_so = sum(f * eval_cost(net.edge(eid).cost, f) for eid, f in loads.items())
    return WheatstonePoint(p, a + m, a, sc_tlue, sa + sm, sa, sc_so, res)


def reduction(sc: float, reference: float = 2.0) -> float:
    """Fractional social-cost reduction relative to ``reference``."""
    return 1.0 - sc / reference


# --------------------------------------------------------------------------
# parameter sweeps
# --------------------------------------------------------------------------

SWEEP_COLUMNS = ("p", "sc_tlue", "sc_so", "poa", "x", "y", "mid_flow")


@dataclass
class SweepPoint:
    p: float
    sc_tlue: float
    sc_so: float
    poa: float
    x: float = math.nan
    y: float = math.nan
    mid_flow: float = math.nan


@dataclass
class Sweep:
    points: list[SweepPoint] = field(default_factory=list)

    @property
    def tlue_increasing(self) -> bool:
        v = [pt.sc_tlue for pt in self.points]
        return all(b > a for a, b in zip(v, v[1:]))

    @property
    def so_increasing(self) -> bool:
        v = [pt.sc_so for pt in self.points]
        return all(b > a for a, b in zip(v, v[1:]))

    def to_dict(self, digits: int | None = 10) -> dict:
        r = (lambda v: float(f"{v:.{digits}g}")) if digits else float
        return {"points": [{col: r(getattr(pt, col)) for col in SWEEP_COLUMNS} for pt in self.points]}

    @classmethod
    def from_dict(cls, raw: dict) -> Sweep:
        return cls([SweepPoint(**{col: float(row[col]) for col in SWEEP_COLUMNS}) for row in raw["points"]])

    def to_csv(self, digits: int | None = 10) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for pt in self.points:
            row = [getattr(pt, col) for col in SWEEP_COLUMNS]
            w.writerow([f"{v:.{digits}g}" if digits else repr(v) for v in row])
        return buf.getvalue()


def _bridge_edges(net: Network):
    """``(upper entry, upper exit, bridge)`` edge ids if ``net`` is a Wheatstone bridge."""
    if len(net.populations) != 1 or len(net.edges) != 5:
        return None
    o, d = net.population.origin, net.population.destination
    for br in net.edges:
        u, v = br.tail, br.head
        if {u, v} & {o, d}:
            continue
        try:
            ids = (net.find_edge(o, u).id, net.find_edge(u, d).id, br.id)
            net.find_edge(o, v), net.find_edge(v, d)
        except KeyError:
            continue
        return ids
    return None


def sweep_p(template: Network, grid: Sequence[float], param: str = "p", cfg: SolverConfig | None = None) -> Sweep:
    """Equilibrium and optimum social cost over a grid of a red-proportion parameter."""
    cfg = cfg or SolverConfig(tol=1e-10)
    bridge = _bridge_edges(template)
    out = Sweep()
    for p in grid:
        net = template.with_parameters(**{param: float(p)})
        ue = solve_tlue(net, cfg)
        so = solve_so(net, cfg)
        pt = SweepPoint(float(p), ue.social_cost, so.social_cost, ue.social_cost / so.social_cost)
        if bridge is not None:
            up, down, mid = bridge
            pt.x, pt.y, pt.mid_flow = ue.edge_loads[up], ue.edge_loads[down], ue.edge_loads[mid]
        out.points.append(pt)
    return out


def wheatstone_sweep(grid: Sequence[float], d: float = 1.0) -> Sweep:
    """``sweep_p`` on the one-light Wheatstone network using the dedicated root finder."""
    out = Sweep()
    for p in grid:
        w = wheatstone_tlue(float(p), d)
        out.points.append(SweepPoint(w.p, w.sc_tlue, w.sc_so, w.poa, w.x, w.y, w.mid_flow))
    return out


__all__ = [
    "GamePair", "BraessReport", "detect_braess", "Immunization", "immunize",
    "WheatstonePoint", "wheatstone_network", "wheatstone_so_flow", "wheatstone_tlue",
    "reduction", "Sweep", "SweepPoint", "sweep_p", "wheatstone_sweep",
]
