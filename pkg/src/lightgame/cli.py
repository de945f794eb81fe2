"""``lightgame`` command line.

Exit codes: 0 success, 1 domain error (bad network, solver failure,
oversaturated simulation), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .braess import GamePair, detect_braess, immunize, sweep_p
from .costs import DEFAULT_P_MAX, CostError, LightCycle
from .equilibrium import SolverConfig, SolverError, solve_so, solve_tlue
from .io import load_network, network_to_dict
from .lightsim import (
    DEFAULT_P_GRID, DEFAULT_T_GRID, GRID_COLUMNS, OversaturatedError, SimConfig, grid_to_csv, run_grid, simulate,
)
from .network import NetworkError, PathLimitError, is_series_parallel, max_sp_subgraph

DIGITS = 10

DOMAIN_ERRORS = (
    NetworkError, CostError, SolverError, OversaturatedError, PathLimitError, FileNotFoundError, IsADirectoryError,
)


def num(v: float) -> str:
    return f"{v:.{DIGITS}g}"


def _rows_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([num(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [[str(h) for h in header]] + [
        [f"{v:.{DIGITS}f}" if isinstance(v, float) else str(v) for v in row] for row in rows
    ]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _config(args) -> SolverConfig:
    return SolverConfig(tol=args.tol, max_iter=args.max_iter, seed=args.seed)


def _network(args):
    if not args.network:
        raise _Usage("--network is required for this command")
    return load_network(args.network)


class _Usage(Exception):
    pass


# --------------------------------------------------------------------------
# commands; each returns the report text
# --------------------------------------------------------------------------


def cmd_solve(args) -> str:
    net = _network(args)
    solver = solve_tlue if args.kind == "ue" else solve_so
    res = solver(net, _config(args))
    if not res.converged:
        raise SolverError(
            f"no convergence after {res.iterations} iterations (relative gap {res.relative_gap:.3g})"
        )
    if args.format == "json":
        return _json(res.to_dict(DIGITS))
    if args.format == "csv":
        return res.to_csv(DIGITS)
    rows = [
        (pop, " ".join(path), res.flow.paths[pop].get(path, 0.0), cost)
        for pop, costs in res.path_costs.items() for path, cost in costs.items()
    ]
    head = f"{args.kind.upper()} social cost {res.social_cost:.{DIGITS}f}  (relative gap {res.relative_gap:.3g}, {res.iterations} iterations)\n\n"
    loads = _table(["edge", "load"], [(e, x) for e, x in res.edge_loads.items()])
    return head + _table(["population", "route", "flow", "cost"], rows) + "\n" + loads


def cmd_poa(args) -> str:
    net = _network(args)
    cfg = _config(args)
    ue, so = solve_tlue(net, cfg), solve_so(net, cfg)
    for r in (ue, so):
        if not r.converged:
            raise SolverError(f"{r.kind} solve did not converge (relative gap {r.relative_gap:.3g})")
    if so.social_cost <= 0:
        raise NetworkError(["price of anarchy undefined: optimal social cost is zero"])
    poa = ue.social_cost / so.social_cost
    if args.format == "json":
        return _json({"sc_ue": float(num(ue.social_cost)), "sc_so": float(num(so.social_cost)), "poa": float(num(poa))})
    rows = [(ue.social_cost, so.social_cost, poa)]
    if args.format == "csv":
        return _rows_csv(["sc_ue", "sc_so", "poa"], rows)
    return _table(["SC(UE)", "SC(SO)", "PoA"], rows)


def cmd_sp_check(args) -> str:
    net = _network(args)
    res = is_series_parallel(net)
    witnesses = () if res.is_sp else max_sp_subgraph(net).removed
    labels = [f"{net.edge(e).tail}→{net.edge(e).head}" for e in witnesses]
    if args.format == "json":
        return _json({"series_parallel": res.is_sp, "witness_edges": list(witnesses), "trace": res.trace})
    if args.format == "csv":
        return _rows_csv(["series_parallel", "witness_edges"], [(str(res.is_sp).lower(), " ".join(witnesses))])
    if res.is_sp:
        return "series-parallel\n"
    noun = "edge" if len(labels) == 1 else "edges"
    return f"not series-parallel; witness {noun} {', '.join(labels)}\n"


def cmd_immunize(args) -> str:
    net = _network(args)
    mode = "bounded" if args.p_max is not None else "exact"
    imm = immunize(net, mode=mode, p_max=args.p_max if args.p_max is not None else DEFAULT_P_MAX)
    if args.format == "json":
        out = network_to_dict(imm.network)
        out["immunization"] = {
            "mode": mode,
            "removed": list(imm.removed),
            "assigned": {k: float(num(v)) for k, v in imm.assigned.items()},
            "immune": imm.immune,
            "heuristic": imm.heuristic,
        }
        return _json(out)
    rows = [(eid, p, "suppressed" if eid in imm.removed else "") for eid, p in imm.assigned.items()]
    if args.format == "csv":
        return _rows_csv(["edge", "p", "role"], rows)
    head = f"mode {mode}; immune: {'yes' if imm.immune else 'no'}"
    if imm.heuristic:
        head += " (greedy subgraph search)"
    return head + "\n\n" + _table(["edge", "red proportion", "role"], rows)


def cmd_braess_check(args) -> str:
    pair = GamePair(load_network(args.baseline), load_network(args.modified))
    rep = detect_braess(pair, _config(args))
    if args.format == "json":
        return _json(rep.to_dict(DIGITS))
    rows = [(rep.sc_baseline, rep.sc_modified, str(rep.paradox).lower(), rep.dominance)]
    if args.format == "csv":
        return _rows_csv(["sc_baseline", "sc_modified", "paradox", "dominance"], rows)
    verdict = "Braess paradox: yes" if rep.paradox else "Braess paradox: no"
    return verdict + "\n\n" + _table(["SC baseline", "SC modified", "paradox", "dominance"], rows)


def cmd_sweep(args) -> str:
    if args.steps < 1:
        raise _Usage("--steps must be at least 1")
    net = _network(args)
    if args.param not in net.parameters:
        raise NetworkError([f"network has no parameter {args.param!r}"])
    grid = np.linspace(args.start, args.stop, args.steps)
    cfg = SolverConfig(tol=min(args.tol, 1e-10), max_iter=args.max_iter, seed=args.seed)
    sw = sweep_p(net, grid, args.param, cfg)
    if args.format == "json":
        return _json(sw.to_dict(DIGITS))
    if args.format == "csv":
        return sw.to_csv(DIGITS)
    return _table(["p", "SC(TLUE)", "SC(SO)", "PoA"], [(pt.p, pt.sc_tlue, pt.sc_so, pt.poa) for pt in sw.points])


def cmd_sim_light(args) -> str:
    base = SimConfig(
        LightCycle.from_p(args.p, args.cycle),
        arrival_rate=args.arrival_rate,
        arrivals=args.arrivals,
        saturation=args.saturation,
        horizon=args.horizon,
        warmup=args.warmup,
        seed=args.seed if args.seed is not None else 0,
    )
    if args.grid:
        cells = run_grid(DEFAULT_P_GRID, DEFAULT_T_GRID, base)
        if args.format == "json":
            return _json([{k: (float(num(v)) if isinstance(v, float) else v) for k, v in asdict(c).items()} for c in cells])
        if args.format == "csv":
            return grid_to_csv(cells, DIGITS)
        return _table(GRID_COLUMNS, [[getattr(c, k) for k in GRID_COLUMNS] for c in cells])
    res = simulate(base)
    row = (args.p, args.cycle, args.arrival_rate, res.mean_x, res.mean_wait, res.mean_journey, base.seed)
    if args.format == "json":
        return _json({k: (float(num(v)) if isinstance(v, float) else v) for k, v in zip(GRID_COLUMNS, row)})
    if args.format == "csv":
        return _rows_csv(GRID_COLUMNS, [row])
    return _table(GRID_COLUMNS, [row])


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--network", help="network JSON file (or the name of a bundled network)")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--format", choices=("csv", "json", "table"), default="table")
    common.add_argument("--tol", type=float, default=1e-8, help="relative-gap tolerance")
    common.add_argument("--max-iter", type=int, default=10_000)
    common.add_argument("--seed", type=int, default=None)

    parser = argparse.ArgumentParser(prog="lightgame", description="Congestion games with traffic lights.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("solve", parents=[common], help="equilibrium (ue) or optimum (so) flow")
    p.add_argument("--kind", choices=("ue", "so"), default="ue")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("poa", parents=[common], help="price of anarchy")
    p.set_defaults(func=cmd_poa)

    p = sub.add_parser("sp-check", parents=[common], help="series-parallel test")
    p.set_defaults(func=cmd_sp_check)

    p = sub.add_parser("immunize", parents=[common], help="assign light cycles against Braess' paradox")
    p.add_argument("--p-max", type=float, default=None, help="bounded mode with this maximum red proportion")
    p.set_defaults(func=cmd_immunize)

    p = sub.add_parser("braess-check", parents=[common], help="compare a baseline and a modified game")
    p.add_argument("--baseline", required=True)
    p.add_argument("--modified", required=True)
    p.set_defaults(func=cmd_braess_check)

    p = sub.add_parser("sweep", parents=[common], help="social costs over a parameter grid")
    p.add_argument("--param", default="p")
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sim-light", parents=[common], help="point-queue simulation of one signalized approach")
    p.add_argument("--grid", action="store_true", help="run the p x T grid instead of one configuration")
    p.add_argument("--p", type=float, default=0.5, help="red proportion")
    p.add_argument("--cycle", type=float, default=60.0, help="cycle length T in seconds")
    p.add_argument("--arrival-rate", type=float, default=0.05)
    p.add_argument("--arrivals", choices=("poisson", "deterministic"), default="poisson")
    p.add_argument("--saturation", type=float, default=0.5)
    p.add_argument("--horizon", type=float, default=20_000.0)
    p.add_argument("--warmup", type=float, default=1_000.0)
    p.set_defaults(func=cmd_sim_light)
    return parser


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        text = args.func(args)
    except _Usage as exc:
        print(f"lightgame: usage error: {exc}", file=stderr)
        return 2
    except DOMAIN_ERRORS as exc:
        msgs = exc.errors if isinstance(exc, NetworkError) else [str(exc)]
        for m in msgs:
            print(f"lightgame: error: {m}", file=stderr)
        return 1
    except ValueError as exc:
        print(f"lightgame: error: {exc}", file=stderr)
        return 1
    if args.out:
        Path(args.out).write_text(text)
    else:
        stdout.write(text)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
