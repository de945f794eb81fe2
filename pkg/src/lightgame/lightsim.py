"""Fixed-cycle signal on a single approach, simulated as a point queue.

Vehicles drive the approach at free-flow speed and reach the stop line. A
vehicle finding green and no standing queue crosses without stopping;
otherwise it joins a vertical queue. The queue discharges only while green,
the head vehicle at the green onset and each follower one saturation
headway later.
Amber is folded into the phases: ``t_r`` includes the amber after red and
``t_g`` the amber after green.
"""

from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .costs import LightCycle


class OversaturatedError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    cycle: LightCycle
    arrival_rate: float = 0.05  # veh/s
    arrivals: str = "poisson"  # or "deterministic"
    saturation: float = 0.5  # veh/s discharged during green
    length: float = 500.0  # approach, m
    exit_length: float = 50.0  # m after the junction
    speed: float = 12.5  # m/s
    horizon: float = 20_000.0  # s
    warmup: float = 1_000.0  # s
    offset: float = 0.0  # time at which a red phase starts
    seed: int = 0

    def check(self) -> None:
        if self.arrivals not in ("poisson", "deterministic"):
            raise ValueError(f"unknown arrival process {self.arrivals!r}")
        if self.horizon <= self.warmup:
            raise ValueError("horizon must exceed the warm-up period")
        if self.arrival_rate <= 0 or self.saturation <= 0 or self.speed <= 0:
            raise ValueError("rates and speed must be positive")
        capacity = self.saturation * self.cycle.t_g / self.cycle.T
        if self.arrival_rate >= capacity:
            raise OversaturatedError(
                f"arrival rate {self.arrival_rate} veh/s is not below the green capacity "
                f"{self.saturation} x {self.cycle.t_g:.4g}/{self.cycle.T:.4g} = {capacity:.4g} veh/s; "
                "the queue grows without bound"
            )

    @property
    def free_flow_time(self) -> float:
        return (self.length + self.exit_length) / self.speed


@dataclass
class VehicleRecord:
    arrival: float  # enters the approach
    stop_line: float
    departure: float  # crosses the stop line
    exit: float

    @property
    def wait(self) -> float:
        return self.departure - self.stop_line

    @property
    def journey(self) -> float:
        return self.exit - self.arrival


@dataclass
class SimResult:
    mean_journey: float
    mean_wait: float
    mean_x: float
    records: list[VehicleRecord] = field(repr=False)
    arrivals_at_horizon: int = 0
    exited_at_horizon: int = 0
    in_system_at_horizon: int = 0


def _arrival_times(cfg: SimConfig) -> list[float]:
    out = []
    if cfg.arrivals == "deterministic":
        h = 1.0 / cfg.arrival_rate
        k = 0
        while k * h < cfg.horizon:
            out.append(k * h)
            k += 1
        return out
    rng = random.Random(cfg.seed)
    t = rng.expovariate(cfg.arrival_rate)
    while t < cfg.horizon:
        out.append(t)
        t += rng.expovariate(cfg.arrival_rate)
    return out


class _Signal:
    """Cycle ``k`` is red on ``[offset + kT, offset + kT + t_r)`` and green until ``offset + (k+1)T``."""

    def __init__(self, cycle: LightCycle, offset: float):
        self.t_r, self.T, self.offset = cycle.t_r, cycle.T, offset

    def cycle_of(self, t: float) -> int:
        return math.floor((t - self.offset) / self.T)

    def green(self, k: int) -> tuple[float, float]:
        start = self.offset + k * self.T
        return start + self.t_r, start + self.T

    def is_green(self, t: float) -> bool:
        start, end = self.green(self.cycle_of(t))
        return start <= t < end


def simulate(cfg: SimConfig) -> SimResult:
    cfg.check()
    sig = _Signal(cfg.cycle, cfg.offset)
    headway = 1.0 / cfg.saturation
    approach = cfg.length / cfg.speed
    leave = cfg.exit_length / cfg.speed
    records = []
    last_dep = -math.inf
    for t in _arrival_times(cfg):
        s = t + approach
        if last_dep <= s and sig.is_green(s):
            dep = s
        else:
            # queued: leaves at its green onset, but no sooner than one
            # headway after the vehicle ahead; departures fall in [onset, end)
            ready = max(s, last_dep + headway)
            k = sig.cycle_of(ready)
            while True:
                start, end = sig.green(k)
                dep = max(start, ready)
                if dep < end:
                    break
                k += 1
        last_dep = dep
        records.append(VehicleRecord(t, s, dep, dep + leave))

    window = [r for r in records if cfg.warmup <= r.arrival < cfg.horizon]
    mean_wait = float(np.mean([r.wait for r in window])) if window else 0.0
    mean_journey = float(np.mean([r.journey for r in window])) if window else cfg.free_flow_time
    return SimResult(
        mean_journey=mean_journey,
        mean_wait=mean_wait,
        mean_x=_time_average_count(records, cfg.warmup, cfg.horizon),
        records=records,
        arrivals_at_horizon=sum(1 for r in records if r.arrival < cfg.horizon),
        exited_at_horizon=sum(1 for r in records if r.exit <= cfg.horizon),
        in_system_at_horizon=sum(1 for r in records if r.arrival < cfg.horizon < r.exit),
    )


def _time_average_count(records: Sequence[VehicleRecord], lo: float, hi: float) -> float:
    """Mean number of vehicles on the approach (entered, not yet across the stop line)."""
    total = 0.0
    for r in records:
        a, b = max(r.arrival, lo), min(r.departure, hi)
        if b > a:
            total += b - a
    return total / (hi - lo)


# --------------------------------------------------------------------------
# regression and grid studies
# --------------------------------------------------------------------------


def fit_affine(samples: Iterable[tuple[float, float]]) -> tuple[float, float, float]:
    """Least-squares line through ``(congestion, journey)`` samples: ``(slope, intercept, R^2)``."""
    pts = np.asarray(list(samples), dtype=float)
    if pts.ndim != 2 or len(pts) < 3:
        raise ValueError("need at least 3 samples")
    x, y = pts[:, 0], pts[:, 1]
    if np.ptp(x) <= 1e-12 * max(1.0, np.abs(x).max()):
        raise ValueError("degenerate spread in congestion samples")
    A = np.column_stack([x, np.ones_like(x)])
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(np.sum((y - (a * x + b)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    scale = 1e-20 * max(1.0, float(np.sum(y**2)))
    if ss_tot <= scale:
        # flat response: the horizontal line is an exact fit
        return float(a), float(b), 1.0
    r2 = 1.0 - ss_res / ss_tot
    return float(a), float(b), r2


GRID_COLUMNS = ("p", "T", "arrival_rate", "mean_x", "mean_wait", "mean_journey", "seed")

DEFAULT_P_GRID = tuple(round(0.1 * i, 1) for i in range(9))
DEFAULT_T_GRID = (40.0, 60.0, 80.0, 100.0, 120.0)


@dataclass(frozen=True)
class GridCell:
    p: float
    T: float
    arrival_rate: float
    mean_x: float
    mean_wait: float
    mean_journey: float
    seed: int


def run_grid(
    ps: Sequence[float] = DEFAULT_P_GRID,
    Ts: Sequence[float] = DEFAULT_T_GRID,
    base: SimConfig | None = None,
) -> list[GridCell]:
    """Simulate every ``(p, T)`` pair with common random arrivals."""
    base = base or SimConfig(LightCycle(1.0, 1.0))
    cells = []
    for T in Ts:
        for p in ps:
            cfg = replace(base, cycle=LightCycle.from_p(p, T))
            res = simulate(cfg)
            cells.append(GridCell(p, T, cfg.arrival_rate, res.mean_x, res.mean_wait, res.mean_journey, cfg.seed))
    return cells


def grid_to_csv(cells: Sequence[GridCell], digits: int = 10) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GRID_COLUMNS)
    for c in cells:
        w.writerow([
            f"{getattr(c, col):.{digits}g}" if col != "seed" else c.seed for col in GRID_COLUMNS
        ])
    return buf.getvalue()


@dataclass
class CorrelationReport:
    rho_p: float  # Spearman(p, mean wait) over the whole factorial grid
    rho_T: float  # Spearman(T, mean wait) over the whole factorial grid
    rho_p_within_T: dict[float, float]  # per cycle-length stratum
    rho_T_within_p: dict[float, float]  # per red-proportion stratum (NaN if wait is constant)


def _spearman(a, b) -> float:
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return math.nan
    return float(stats.spearmanr(a, b)[0])


def correlation_report(cells: Sequence[GridCell]) -> CorrelationReport:
    """Rank correlation of mean waiting time with ``p`` and with ``T``.

    The pooled coefficients use the full factorial grid, so every level of
    one variable is balanced across all levels of the other. The per-stratum
    coefficients hold the other variable fixed.
    """
    ps = sorted({c.p for c in cells})
    Ts = sorted({c.T for c in cells})
    if len(ps) < 2 or len(Ts) < 2:
        raise ValueError("grid needs at least two values of both p and T")
    p = np.array([c.p for c in cells])
    T = np.array([c.T for c in cells])
    w = np.array([c.mean_wait for c in cells])
    within_T = {t: _spearman(p[T == t], w[T == t]) for t in Ts}
    within_p = {q: _spearman(T[p == q], w[p == q]) for q in ps}
    return CorrelationReport(_spearman(p, w), _spearman(T, w), within_T, within_p)
