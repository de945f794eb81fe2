from __future__ import annotations

import json
import math
import random
from dataclasses import replace

import numpy as np
import pytest

from lightgame.costs import Affine, Blocking, EdgeCost
from lightgame.equilibrium import (
    EquilibriumResult, FlowDistribution, SolverConfig, best_response, equilibrium_violation, price_of_anarchy,
    random_feasible_flow, relative_gap, social_cost, solve_so, solve_tlue,
)
from lightgame.io import load_network
from lightgame.network import Edge, Network, Population, enumerate_paths

from nets import random_dag, random_parallel_paths

MIDDLE = ("O-B", "B-C", "C-D")
UPPER = ("O-B", "B-D")
LOWER = ("O-C", "C-D")


def flow(paths: dict) -> FlowDistribution:
    return FlowDistribution({"1": paths})


def test_braess_equilibrium():
    res = solve_tlue(load_network("braess"))
    assert res.converged
    assert res.social_cost == pytest.approx(2.0, abs=1e-6)
    assert res.used_paths("1") == {MIDDLE: pytest.approx(1.0)}


def test_braess_without_bridge():
    res = solve_tlue(load_network("braess_before"))
    assert res.social_cost == pytest.approx(1.5, abs=1e-6)
    assert res.edge_loads["O-B"] == pytest.approx(0.5, abs=1e-4)
    assert res.edge_loads["B-C"] == 0.0


def test_pigou():
    net = load_network("pigou")
    ue = solve_tlue(net)
    assert ue.social_cost == pytest.approx(1.0, abs=1e-6)
    so = solve_so(net)
    assert so.social_cost == pytest.approx(0.75, abs=1e-6)
    assert so.edge_loads["O-M"] == pytest.approx(0.5, abs=1e-3)
    assert price_of_anarchy(net) == pytest.approx(4 / 3, abs=1e-5)


@pytest.mark.parametrize("name", ["braess", "braess_before"])
def test_braess_optimum(name):
    so = solve_so(load_network(name), SolverConfig(tol=1e-10))
    assert so.social_cost == pytest.approx(1.5, abs=1e-6)
    assert so.edge_loads["B-C"] == pytest.approx(0.0, abs=1e-3)


def test_zero_demand():
    net = load_network("pigou")
    net = replace(net, populations=(replace(net.population, demand=0.0),))
    so = solve_so(net)
    assert so.social_cost == 0.0
    assert all(v == 0.0 for v in so.edge_loads.values())


def test_single_edge_poa():
    net = Network(("O", "D"), (Edge("e", "O", "D", EdgeCost(Affine(1, 1))),), (Population("1", "O", "D"),))
    assert price_of_anarchy(net) == pytest.approx(1.0)


def test_best_response():
    net = load_network("braess")
    assert best_response(net, {e.id: 0.0 for e in net.edges}) == MIDDLE
    single = Network(("O", "D"), (Edge("e", "O", "D"),), (Population("1", "O", "D"),))
    assert best_response(single, {"e": 5.0}) == ("e",)
    blocked = load_network("braess_before")
    for loads in ({e.id: 0.0 for e in blocked.edges}, {"O-B": 1, "O-C": 0, "B-C": 0, "B-D": 0, "C-D": 1}):
        assert best_response(blocked, loads) != MIDDLE


def test_social_cost_examples():
    net = load_network("braess")
    assert social_cost(net, flow({MIDDLE: 1.0})) == pytest.approx(2.0)
    empty = replace(net, populations=(replace(net.population, demand=0.0),))
    assert social_cost(empty, flow({})) == 0.0
    wl = load_network("wheatstone_light").with_parameters(p=0.0)
    assert social_cost(wl, flow({UPPER: 0.5, LOWER: 0.5})) == pytest.approx(1.5)


def test_relative_gap_examples():
    net = load_network("braess")
    assert relative_gap(net, flow({UPPER: 0.5, LOWER: 0.5})) > 0
    assert relative_gap(net, flow({MIDDLE: 1.0})) == pytest.approx(0.0, abs=1e-12)
    single = Network(("O", "D"), (Edge("e", "O", "D", EdgeCost(Affine(2, 1))),), (Population("1", "O", "D", 3),))
    assert relative_gap(single, FlowDistribution({"1": {("e",): 3.0}})) == 0.0


def test_blocked_edge_never_used():
    net = load_network("braess_before")
    for method in ("pairwise", "fw"):
        res = solve_tlue(net, SolverConfig(method=method))
        assert res.edge_loads["B-C"] == 0.0


def test_classic_fw_agrees_with_pairwise():
    net = load_network("wheatstone_light").with_parameters(p=0.4)
    a = solve_tlue(net, SolverConfig(tol=1e-8))
    b = solve_tlue(net, SolverConfig(tol=1e-6, method="fw", max_iter=100_000))
    assert b.converged
    assert a.social_cost == pytest.approx(b.social_cost, rel=1e-4)


def test_potential_never_increases():
    net = load_network("wheatstone_light").with_parameters(p=0.6)
    for method in ("pairwise", "fw"):
        res = solve_tlue(net, SolverConfig(method=method, tol=1e-7, max_iter=20_000))
        pot = np.array(res.potential_trace)
        assert np.all(np.diff(pot) <= 1e-12 * np.maximum(1, np.abs(pot[:-1])))


def test_random_starts_agree():
    net = load_network("wheatstone_light").with_parameters(p=0.5)
    costs = [solve_tlue(net, SolverConfig(tol=1e-9, seed=s)).social_cost for s in range(10)]
    assert max(costs) - min(costs) <= 1e-4 * min(costs)


def test_iterates_stay_feasible():
    rng = random.Random(2)
    for _ in range(10):
        net = random_dag(rng)
        init = random_feasible_flow(net, rng)
        init.check_feasible(net)
        res = solve_tlue(net, SolverConfig(tol=1e-8), init=init)
        res.flow.check_feasible(net)
        total = sum(res.flow.paths["1"].values())
        assert total == pytest.approx(net.population.demand, rel=1e-12)
        assert all(v >= 0 for v in res.edge_loads.values())


def test_equilibrium_condition_and_optimum_bound():
    rng = random.Random(4)
    for _ in range(20):
        net = random_dag(rng)
        ue = solve_tlue(net, SolverConfig(tol=1e-9))
        so = solve_so(net, SolverConfig(tol=1e-9))
        assert ue.converged and so.converged
        assert equilibrium_violation(net, ue) <= 1e-4
        assert so.social_cost <= ue.social_cost + 1e-9


def test_result_roundtrip():
    res = solve_tlue(load_network("wheatstone_light"))
    back = EquilibriumResult.from_dict(json.loads(json.dumps(res.to_dict())))
    assert back.social_cost == res.social_cost
    assert back.edge_loads == res.edge_loads
    assert back.flow.paths == {k: {p: x for p, x in v.items() if x} for k, v in res.flow.paths.items()}
    assert res.to_csv(10).splitlines()[0] == "population,path,flow,cost"


# --------------------------------------------------------------------------
# grid-search oracle
# --------------------------------------------------------------------------


def _simplex_grid(n: int, d: float, step: float = 1e-3) -> np.ndarray:
    k = int(round(1 / step))
    if n == 2:
        a = np.arange(k + 1) / k
        return d * np.column_stack([a, 1 - a])
    i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
    keep = i + j <= k
    a, b = i[keep] / k, j[keep] / k
    return d * np.column_stack([a, b, 1 - a - b])


def _grid_oracle(net: Network):
    """UE and SO social cost by brute force over route splits (affine costs, no clamping)."""
    paths = enumerate_paths(net)
    pts = _simplex_grid(len(paths), net.population.demand)
    A = np.array([[1.0 if e.id in p else 0.0 for e in net.edges] for p in paths])
    loads = pts @ A
    a = np.array([e.cost.base.a for e in net.edges])
    b = np.array([e.cost.base.b for e in net.edges])
    potential = (0.5 * a * loads**2 + b * loads).sum(axis=1)
    sc = (loads * (a * loads + b)).sum(axis=1)
    return sc[np.argmin(potential)], sc.min()


def test_solver_matches_grid_oracle():
    rng = random.Random(10)
    for i in range(30):
        net = random_parallel_paths(rng, 2 + i % 2)
        ue_grid, so_grid = _grid_oracle(net)
        ue = solve_tlue(net, SolverConfig(tol=1e-9)).social_cost
        so = solve_so(net, SolverConfig(tol=1e-9)).social_cost
        assert ue == pytest.approx(ue_grid, rel=1e-2)
        assert so == pytest.approx(so_grid, rel=1e-2)


def test_grid_oracle_on_braess():
    ue, so = _grid_oracle(load_network("braess"))
    assert ue == pytest.approx(2.0, abs=1e-6)
    assert so == pytest.approx(1.5, abs=1e-5)


def test_poa_undefined_when_everything_is_free():
    net = Network(("O", "D"), (Edge("e", "O", "D", EdgeCost(Affine(0, 0))),), (Population("1", "O", "D"),))
    from lightgame.network import NetworkError

    with pytest.raises(NetworkError):
        price_of_anarchy(net)


def test_blocked_everything():
    from lightgame.equilibrium import BlockedError, SolverError

    cost = EdgeCost(Affine(1, 0), Blocking(), 1.0)
    net = Network(
        ("O", "A", "D"),
        (Edge("O-A", "O", "A"), Edge("O-D", "O", "D"), Edge("A-D", "A", "D", cost, has_light=True)),
        (Population("1", "O", "D"),),
    )
    assert solve_tlue(net).used_paths("1") == {("O-D",): pytest.approx(1.0)}
    only = Network(("O", "D"), (Edge("O-D", "O", "D", cost, has_light=True),), (Population("1", "O", "D"),))
    with pytest.raises(SolverError):
        solve_tlue(only)
    assert issubclass(BlockedError, SolverError)
    assert math.isinf(cost.base.value(0) + cost.waiting.value(0, 1.0))
