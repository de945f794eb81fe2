"""Network file format (JSON) and bundled example networks.

Schema::

    {
      "nodes": ["O", "B", "C", "D"],
      "parameters": {"p": 0.5},                      # optional
      "edges": [
        {"id": "O-C", "from": "O", "to": "C",
         "cost": {"base": {"affine": [0, 1]},
                  "waiting": {"family": "simple_exp", "p": "p"}}}
      ],
      "populations": [{"id": "1", "origin": "O", "destination": "D", "demand": 1}]
    }

``base`` is one of ``{"affine": [a, b]}``, ``{"constant": b}`` or
``{"polynomial": [c0, c1, ...]}``. A waiting ``p`` is either a number or a
parameter reference ``"name"`` / ``"1-name"`` resolved from ``parameters``.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .costs import CostError, EdgeCost, base_from_dict, waiting_from_name
from .network import Edge, Network, NetworkError, Population, parse_p_param, validate_network

BUNDLED = ("braess", "braess_before", "wheatstone_light", "junction5", "pigou")


def _edge_from_dict(raw: Mapping[str, Any], params: Mapping[str, float], errors: list[str]) -> Edge | None:
    try:
        eid = str(raw["id"])
        tail, head = str(raw["from"]), str(raw["to"])
    except KeyError as exc:
        errors.append(f"edge {raw!r} is missing field {exc.args[0]!r}")
        return None
    cost_raw = raw.get("cost", {"base": {"affine": [1, 0]}})
    p_param = None
    try:
        base = base_from_dict(cost_raw.get("base", {"affine": [1, 0]}))
        wraw = cost_raw.get("waiting") or {"family": "zero"}
        waiting = waiting_from_name(wraw.get("family", "zero"))
        p = wraw.get("p", 0.0)
        if isinstance(p, str):
            p_param = p
            name, complement = parse_p_param(p)
            if name not in params:
                errors.append(f"edge {eid!r}: unbound parameter {name!r}")
                return None
            p = 1.0 - params[name] if complement else params[name]
        cost = EdgeCost(base, waiting, float(p))
    except (CostError, TypeError, ValueError) as exc:
        errors.append(f"edge {eid!r}: {exc}")
        return None
    return Edge(eid, tail, head, cost, p_param=p_param)


def network_from_dict(raw: Mapping[str, Any]) -> Network:
    errors: list[str] = []
    params = {str(k): float(v) for k, v in raw.get("parameters", {}).items()}
    edges = []
    for er in raw.get("edges", []):
        e = _edge_from_dict(er, params, errors)
        if e is not None:
            edges.append(e)
    pops = []
    for i, pr in enumerate(raw.get("populations", [])):
        try:
            pops.append(Population(str(pr.get("id", i)), str(pr["origin"]), str(pr["destination"]), float(pr.get("demand", 1.0))))
        except KeyError as exc:
            errors.append(f"population {i} is missing field {exc.args[0]!r}")
    nodes = raw.get("nodes")
    if nodes is None:
        nodes = sorted({v for e in edges for v in (e.tail, e.head)})
    net = Network(tuple(str(v) for v in nodes), tuple(edges), tuple(pops), params)
    try:
        net = validate_network(net)
    except NetworkError as exc:
        errors.extend(exc.errors)
    if errors:
        raise NetworkError(errors)
    return net


def network_to_dict(net: Network) -> dict:
    edges = []
    for e in net.edges:
        cost = e.cost.to_dict()
        if e.p_param is not None:
            cost["waiting"] = {"family": e.cost.waiting.name, "p": e.p_param}
        edges.append({"id": e.id, "from": e.tail, "to": e.head, "cost": cost})
    out = {"nodes": list(net.nodes)}
    if net.parameters:
        out["parameters"] = dict(net.parameters)
    out["edges"] = edges
    out["populations"] = [
        {"id": p.id, "origin": p.origin, "destination": p.destination, "demand": p.demand}
        for p in net.populations
    ]
    return out


def bundled_path(name: str) -> Path:
    stem = Path(name).stem
    if stem not in BUNDLED:
        raise FileNotFoundError(f"no bundled network named {stem!r} (have {', '.join(BUNDLED)})")
    return Path(str(resources.files("lightgame") / "data" / f"{stem}.json"))


def load_network(source: str | Path) -> Network:
    """Load a network file; a missing path falls back to the bundled network of the same stem."""
    path = Path(source)
    if not path.exists():
        path = bundled_path(str(source))
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError([f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from None
    return network_from_dict(raw)


def dump_network(net: Network, path: str | Path | None = None) -> str:
    text = json.dumps(network_to_dict(net), indent=2)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text

