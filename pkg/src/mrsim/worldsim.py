"""Ground-truth world: the hidden reality the estimators try to track.

Actual travel times depend on battery state of charge and per-zone floor
roughness.  The factor curve over state of charge is a shape-preserving
cubic through configurable knots: elevated near full charge, minimum of
exactly 1 in a mid band, rising again toward empty.  A global discrete
clock counts completed traversals; every observation is stamped with the
clock value at completion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from mrsim.topomap import Arc, ArcId, NodeId, TopoMap, ZoneId


class WorldError(Exception):
    pass


class DeadBatteryError(WorldError):
    pass


DEFAULT_BATTERY_KNOTS: tuple[tuple[float, float], ...] = (
    (0.02, 1.6),
    (0.2, 1.1),
    (0.5, 1.0),
    (0.85, 1.05),
    (1.0, 1.15),
)


class BatteryCurve:
    """Travel-time multiplier as a function of state of charge.

    Monotone piecewise-cubic Hermite interpolation (Fritsch-Carlson
    slopes) through the knots, so the curve never under- or overshoots
    between them: the minimum is exactly the smallest knot value.
    Evaluation outside the knot range clamps to the end knots.
    """

    def __init__(self, knots: Sequence[tuple[float, float]] = DEFAULT_BATTERY_KNOTS):
        pts = sorted(knots)
        if len(pts) < 2:
            raise ValueError("battery curve needs at least two knots")
        self.x = np.array([p[0] for p in pts], dtype=float)
        self.y = np.array([p[1] for p in pts], dtype=float)
        if np.any(np.diff(self.x) <= 0):
            raise ValueError("battery curve knots must have distinct soc values")
        self.m = self._fritsch_carlson_slopes(self.x, self.y)

    @staticmethod
    def _fritsch_carlson_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        h = np.diff(x)
        d = np.diff(y) / h
        n = len(x)
        m = np.zeros(n)
        for i in range(1, n - 1):
            if d[i - 1] == 0.0 or d[i] == 0.0 or np.sign(d[i - 1]) != np.sign(d[i]):
                m[i] = 0.0
            else:
                w1 = 2 * h[i] + h[i - 1]
                w2 = h[i] + 2 * h[i - 1]
                m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i])
        m[0] = BatteryCurve._endpoint_slope(h[0], h[1], d[0], d[1]) if n > 2 else d[0]
        m[-1] = BatteryCurve._endpoint_slope(h[-1], h[-2], d[-1], d[-2]) if n > 2 else d[-1]
        return m

    @staticmethod
    def _endpoint_slope(h0: float, h1: float, d0: float, d1: float) -> float:
        # one-sided slope limited so the end segment stays monotone
        slope = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1)
        if np.sign(slope) != np.sign(d0):
            return 0.0
        if np.sign(d0) != np.sign(d1) and abs(slope) > 3 * abs(d0):
            return 3 * d0
        return float(slope)

    def __call__(self, soc: float) -> float:
        if not (0.0 <= soc <= 1.0):
            raise ValueError(f"state of charge {soc} outside [0, 1]")
        x, y, m = self.x, self.y, self.m
        if soc <= x[0]:
            return float(y[0])
        if soc >= x[-1]:
            return float(y[-1])
        i = int(np.searchsorted(x, soc) - 1)
        h = x[i + 1] - x[i]
        t = (soc - x[i]) / h
        h00 = (1 + 2 * t) * (1 - t) ** 2
        h10 = t * (1 - t) ** 2
        h01 = t * t * (3 - 2 * t)
        h11 = t * t * (t - 1)
        return float(h00 * y[i] + h10 * h * m[i] + h01 * y[i + 1] + h11 * h * m[i + 1])


@dataclass
class BatteryState:
    soc: float
    discharge_rate: float

    def drain(self, travel_time: float) -> None:
        self.soc = max(0.0, self.soc - self.discharge_rate * travel_time)


@dataclass
class RobotPhysicalState:
    robot: int
    node: NodeId
    battery: BatteryState


@dataclass(frozen=True)
class TravelObservation:
    """One measured arc traversal at global clock instance k."""

    arc: ArcId
    robot: int
    instance: int
    travel_time: float


@dataclass
class FloorState:
    """Per-zone roughness plus a schedule of future changes.

    Schedule entries are (tick, zone, new_roughness); an entry takes
    effect for traversals after the global clock passes its tick.
    """

    roughness: dict[ZoneId, float]
    schedule: list[tuple[int, ZoneId, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        for z, r in self.roughness.items():
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"roughness {r} for zone {z!r} outside [0, 1]")
        last: dict[ZoneId, int] = {}
        for tick, zone, value in self.schedule:
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"scheduled roughness {value} for {zone!r} outside [0, 1]")
            if zone in last and tick <= last[zone]:
                raise ValueError(f"schedule ticks for zone {zone!r} not strictly increasing")
            last[zone] = tick
        self.schedule = sorted(self.schedule)
        self._applied = 0

    def apply_until(self, tick: int) -> None:
        while self._applied < len(self.schedule) and self.schedule[self._applied][0] <= tick:
            _, zone, value = self.schedule[self._applied]
            self.roughness[zone] = value
            self._applied += 1


@dataclass
class WorldConfig:
    base_pace: float = 1.0
    alpha: float = 0.5
    noise_rel_std: float = 0.03
    discharge_rate: float = 0.00065
    battery_knots: tuple[tuple[float, float], ...] = DEFAULT_BATTERY_KNOTS
    # anything numpy's default_rng accepts (int, sequence of ints, ...)
    seed: Union[int, tuple[int, ...]] = 0


def battery_factor(soc: float, curve: Optional[BatteryCurve] = None) -> float:
    """Multiplier >= 1 applied to travel times for the given state of charge."""
    return (curve or _default_curve)(soc)


_default_curve = BatteryCurve()


def ground_truth_travel_time(
    arc: Arc,
    battery: BatteryState,
    floor: FloorState,
    cfg: WorldConfig,
    rng: Optional[np.random.Generator] = None,
    curve: Optional[BatteryCurve] = None,
) -> float:
    """length x base_pace x battery_factor x (1 + alpha*roughness) x (1 + eps).

    eps is zero-mean Gaussian with the configured relative std, drawn from
    ``rng`` (noise disabled when the std is 0 or rng is None); the result
    is clamped strictly positive.
    """
    if battery.soc <= 0.0:
        raise DeadBatteryError(f"robot battery empty before traversing arc {arc.id}")
    rough = floor.roughness[arc.zone]
    tt = (
        arc.length
        * cfg.base_pace
        * battery_factor(battery.soc, curve)
        * (1.0 + cfg.alpha * rough)
    )
    if rng is not None and cfg.noise_rel_std > 0.0:
        eps = cfg.noise_rel_std * rng.standard_normal()
        tt *= max(0.05, 1.0 + eps)
    return tt


class World:
    """Single mutation point of the simulation.

    Traversals are serialized on the global clock: instance k equals the
    number of completed traversals.  Wall time accumulates separately for
    reporting.
    """

    def __init__(self, topo: TopoMap, floor: FloorState, cfg: WorldConfig):
        self.map = topo
        self.floor = floor
        self.cfg = cfg
        self.curve = BatteryCurve(cfg.battery_knots)
        self.rng = np.random.default_rng(cfg.seed)
        self.instance = 0
        self.wall_time = 0.0
        self.robots: dict[int, RobotPhysicalState] = {}

    def add_robot(self, robot: int, node: NodeId, soc: float = 1.0) -> RobotPhysicalState:
        self.map.node(node)
        state = RobotPhysicalState(robot, node, BatteryState(soc, self.cfg.discharge_rate))
        self.robots[robot] = state
        return state

    def advance_wall(self, duration: float) -> None:
        """Accumulate wall time that is not an arc traversal (e.g. turning
        in place); the instance clock and observations are unaffected."""
        if duration < 0:
            raise ValueError(f"negative duration {duration}")
        self.wall_time += duration

    def traverse(self, robot: int, arc_id: ArcId) -> TravelObservation:
        """Move the robot along the arc, advancing the clock; returns the
        observation stamped with the new clock instance."""
        state = self.robots[robot]
        arc = self.map.arc(arc_id)
        if state.node != arc.origin:
            raise WorldError(
                f"robot {robot} at node {state.node}, not at origin {arc.origin} of arc {arc_id}"
            )
        tt = ground_truth_travel_time(arc, state.battery, self.floor, self.cfg, self.rng, self.curve)
        self.instance += 1
        self.wall_time += tt
        state.battery.drain(tt)
        state.node = arc.destination
        self.floor.apply_until(self.instance)
        return TravelObservation(arc=arc_id, robot=robot, instance=self.instance, travel_time=tt)
