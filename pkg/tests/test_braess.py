from __future__ import annotations

import math
import random
from dataclasses import replace

import numpy as np
import pytest

from lightgame.braess import (
    SWEEP_COLUMNS, GamePair, ImmunizationError, Sweep, detect_braess, immunize, reduction, sweep_p,
    wheatstone_network, wheatstone_so_flow, wheatstone_sweep, wheatstone_tlue,
)
from lightgame.costs import Blocking, Constant, EdgeCost, eval_cost
from lightgame.equilibrium import SolverConfig, solve_so, solve_tlue
from lightgame.io import load_network
from lightgame.network import NetworkError, is_series_parallel

from nets import random_non_sp

GRID = [round(0.1 * k, 1) for k in range(10)]


# --------------------------------------------------------------------------
# detection
# --------------------------------------------------------------------------


def test_classic_paradox():
    rep = detect_braess(GamePair(load_network("braess_before"), load_network("braess")))
    assert rep.paradox
    assert rep.sc_baseline == pytest.approx(1.5, abs=1e-4)
    assert rep.sc_modified == pytest.approx(2.0, abs=1e-4)
    assert rep.dominance == "symbolic"


def test_identical_games():
    net = load_network("braess")
    assert not detect_braess(GamePair(net, net)).paradox


def _pigou_halved():
    net = load_network("pigou")
    return net.with_costs({"O-D": EdgeCost(Constant(0.5))})


def test_cheaper_pigou_is_no_paradox():
    base, cheap = load_network("pigou"), _pigou_halved()
    rep = detect_braess(GamePair(base, cheap))
    assert not rep.paradox
    # grid oracle: split s on the constant edge; equilibrium minimizes the potential
    for net, want in ((base, rep.sc_baseline), (cheap, rep.sc_modified)):
        s = np.linspace(0, 1, 100_001)
        c = net.edge("O-D").cost.base.value(0)
        pot = c * s + 0.5 * (1 - s) ** 2
        k = np.argmin(pot)
        assert want == pytest.approx(c * s[k] + (1 - s[k]) ** 2, abs=1e-4)
    assert rep.sc_modified < rep.sc_baseline


def test_pair_checks():
    base = load_network("braess")
    with pytest.raises(NetworkError, match="share"):
        GamePair(base, base.without_edges(["B-C"])).check()
    more = replace(base, populations=(replace(base.population, demand=2.0),))
    with pytest.raises(NetworkError, match="demand"):
        GamePair(base, more).check()
    with pytest.raises(NetworkError, match="exceeds baseline"):
        GamePair(load_network("braess"), load_network("braess_before")).check()
    assert GamePair(load_network("pigou"), _pigou_halved()).check() == "symbolic"


# --------------------------------------------------------------------------
# immunization
# --------------------------------------------------------------------------


def test_exact_immunization_of_wheatstone():
    imm = immunize(load_network("wheatstone_light"))
    assert imm.removed == ("B-C",)
    assert imm.immune
    bridge = imm.network.edge("B-C").cost
    assert isinstance(bridge.waiting, Blocking) and bridge.p == 1.0
    assert is_series_parallel(imm.network.without_edges(["B-C"])).is_sp
    ue = solve_tlue(imm.network)
    assert ue.social_cost == pytest.approx(1.5, abs=1e-4)


def test_sp_network_untouched():
    net = load_network("pigou")
    imm = immunize(net)
    assert imm.removed == () and imm.assigned == {} and imm.immune
    assert imm.network.edges == net.edges


def test_bounded_junction5():
    imm = immunize(load_network("junction5"), mode="bounded", p_max=0.85)
    assert imm.removed == ("U1-C", "U2-C", "U3-C", "U4-C")
    assert all(imm.assigned[e] == 0.85 for e in imm.removed)
    assert not imm.immune


def test_exact_junction5():
    imm = immunize(load_network("junction5"))
    # one surviving edge into the light: it gets no red
    assert imm.assigned["O-C"] == 0.0
    assert all(imm.network.edge(e).cost.blocked for e in imm.removed)


def test_fitted_family_cannot_block():
    net = load_network("braess")
    from lightgame.costs import SumoFitted

    cost = net.edge("B-C").cost
    net = net.with_costs({"B-C": EdgeCost(cost.base, SumoFitted(), 0.5)})
    with pytest.raises(ImmunizationError):
        immunize(net)


def test_immunized_equilibrium_equals_subnetwork_equilibrium():
    rng = random.Random(21)
    checked = 0
    while checked < 12:
        net = random_non_sp(rng, n_nodes=rng.randint(4, 6), max_edges=12)
        try:
            imm = immunize(net)
        except ImmunizationError:
            continue
        cfg = SolverConfig(tol=1e-10)
        got = solve_tlue(imm.network, cfg).social_cost
        want = solve_tlue(net.without_edges(imm.removed), cfg).social_cost
        assert got == pytest.approx(want, rel=1e-6, abs=1e-9)
        checked += 1


# --------------------------------------------------------------------------
# Wheatstone with one light
# --------------------------------------------------------------------------


def test_closed_form_flow():
    assert wheatstone_so_flow(0.0) == (0.5, 0.5)
    x, y = wheatstone_so_flow(1.0)
    assert x == y == pytest.approx(math.e / (1 + math.e))
    assert x == pytest.approx(0.7311, abs=1e-4)


def _restricted_sc(x, p):
    """Social cost with no bridge traffic, upper load ``x``, evaluated edge by edge."""
    net = wheatstone_network(p)
    loads = {"O-B": x, "B-D": x, "O-C": 1 - x, "C-D": 1 - x, "B-C": 0.0}
    return sum(f * eval_cost(net.edge(e).cost, f) for e, f in loads.items())


@pytest.mark.parametrize("p", GRID)
def test_closed_form_minimizes_bridgeless_cost(p):
    xs = np.round(np.arange(0, 1.0005, 1e-3), 3)
    best = xs[np.argmin([_restricted_sc(x, p) for x in xs])]
    assert best == pytest.approx(wheatstone_so_flow(p)[0], abs=2e-3)


def _grid_so(p, step=1e-3):
    """Unrestricted optimum by brute force over (upper, lower, bridge) route splits."""
    net = wheatstone_network(p)
    k = int(round(1 / step))
    i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
    keep = i + j <= k
    a, m = i[keep] / k, j[keep] / k
    b = 1 - a - m
    loads = {"O-B": a + m, "B-D": a, "O-C": b, "C-D": b + m, "B-C": m}
    sc = np.zeros_like(a)
    for e, f in loads.items():
        coeffs = net.edge(e).cost.affine_coeffs()
        sc += f * np.maximum(coeffs[0] * f + coeffs[1], 0)
    idx = np.argmin(sc)
    return sc[idx], (a + m)[idx], a[idx], m[idx]


def test_solver_optimum_at_green_matches_closed_form():
    so = solve_so(wheatstone_network(0.0), SolverConfig(tol=1e-12))
    assert so.edge_loads["O-B"] == pytest.approx(0.5, abs=1e-4)
    assert so.edge_loads["B-D"] == pytest.approx(0.5, abs=1e-4)
    assert so.social_cost == pytest.approx(1.5, abs=1e-6)


@pytest.mark.parametrize("p", [0.2, 0.5, 0.8])
def test_solver_optimum_matches_grid_oracle(p):
    sc, x, y, m = _grid_so(p)
    so = solve_so(wheatstone_network(p), SolverConfig(tol=1e-10))
    assert so.social_cost == pytest.approx(sc, abs=1e-5)
    assert so.edge_loads["O-B"] == pytest.approx(x, abs=3e-3)
    assert so.edge_loads["B-D"] == pytest.approx(y, abs=3e-3)
    # with any red on the lower entry the optimum sends some traffic over the bridge
    assert m > 0.01
    assert so.social_cost < _restricted_sc(wheatstone_so_flow(p)[0], p) - 1e-4


@pytest.mark.parametrize("p", GRID)
def test_root_finder_matches_iterative_solver(p):
    w = wheatstone_tlue(p)
    assert w.residual <= 1e-10
    ue = solve_tlue(wheatstone_network(p), SolverConfig(tol=1e-12, max_iter=50_000))
    assert ue.social_cost == pytest.approx(w.sc_tlue, abs=1e-6)
    so = solve_so(wheatstone_network(p), SolverConfig(tol=1e-12, max_iter=50_000))
    assert so.social_cost == pytest.approx(w.sc_so, abs=1e-6)


@pytest.mark.parametrize("p", GRID)
def test_bridge_always_used_and_cost_below_two(p):
    w = wheatstone_tlue(p)
    assert w.mid_flow > 0
    assert w.sc_tlue < 2.0
    assert w.sc_so <= w.sc_tlue + 1e-9


def test_wheatstone_rejects_bad_p():
    with pytest.raises(ValueError):
        wheatstone_tlue(1.5)


def test_sweep_monotone_and_consistent():
    generic = sweep_p(load_network("wheatstone_light"), GRID)
    dedicated = wheatstone_sweep(GRID)
    assert generic.tlue_increasing and generic.so_increasing
    assert dedicated.tlue_increasing and dedicated.so_increasing
    for a, b in zip(generic.points, dedicated.points):
        assert a.sc_tlue == pytest.approx(b.sc_tlue, abs=1e-6)
        assert a.sc_so == pytest.approx(b.sc_so, abs=1e-6)
        assert a.mid_flow == pytest.approx(b.mid_flow, abs=1e-4)
    assert generic.points[0].sc_so == pytest.approx(1.5, abs=1e-6)


def test_sweep_csv_and_dict():
    sw = wheatstone_sweep([0.0, 0.5])
    lines = sw.to_csv().splitlines()
    assert lines[0] == ",".join(SWEEP_COLUMNS)
    assert len(lines) == 3
    back = Sweep.from_dict(sw.to_dict(digits=None))
    assert back == sw


def test_reduction():
    assert reduction(1.52) == pytest.approx(0.24)
    assert reduction(2.0) == 0.0
