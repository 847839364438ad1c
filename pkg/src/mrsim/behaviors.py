"""Three-layer control stack for one robot.

The decision layer picks the next port task, plans a route, and records
realized observations in the robot's knowledge base and filter bank.  The
middle layer turns a plan into macro-actions (turns and straight moves
derived from node geometry) and compiles them into GO-<angle>-<distance>
commands.  The bottom layer executes GO commands against the world and
reports back; it never touches the map or the knowledge base -- commands
arrive with opaque arc handles and replies travel upward.

Obstacle behaviors of the middle layer are stubbed always-clear: the
simulated floor has no obstacles, the slot exists so the layer contract
stays complete.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

from mrsim import planner as planner_mod
from mrsim.estimator import EstimatorConfig, TravelTimeSeries, estimate_travel_time
from mrsim.knowledge import KnowledgeBase
from mrsim.planner import PathPlan, UnreachableError
from mrsim.sharing import (
    FleetDirectory,
    ObservationQuery,
    request_observation,
    select_observation_source,
)
from mrsim.topomap import ArcId, TopoMap
from mrsim.worldsim import DeadBatteryError, TravelObservation, World

TURN_TOLERANCE_DEG = 1.0

MACRO_KINDS = ("turn-left", "turn-right", "move-ahead", "stop-left", "stop-right", "stop")


class BehaviorError(Exception):
    pass


@dataclass(frozen=True)
class MacroAction:
    kind: str
    arc: Optional[ArcId] = None  # set for move-ahead

    def __post_init__(self) -> None:
        if self.kind not in MACRO_KINDS:
            raise BehaviorError(f"unknown macro-action kind {self.kind!r}")


@dataclass(frozen=True)
class GoCommand:
    angle: float
    distance: float
    arc: Optional[ArcId] = None  # opaque handle for the execution layer

    def __post_init__(self) -> None:
        if not (-180.0 < self.angle <= 180.0):
            raise BehaviorError(f"angle {self.angle} outside (-180, 180]")
        if self.distance < 0 or not math.isfinite(self.distance):
            raise BehaviorError(f"bad distance {self.distance}")


@dataclass(frozen=True)
class TaskAssignment:
    robot: int
    port: str
    issue_instance: int


@dataclass(frozen=True)
class ExecutionReply:
    ok: bool
    reason: str = ""


def _heading(topo: TopoMap, arc_id: ArcId) -> float:
    arc = topo.arc(arc_id)
    o, d = topo.node(arc.origin), topo.node(arc.destination)
    return math.degrees(math.atan2(d.y - o.y, d.x - o.x))


def _signed_delta(prev: float, new: float) -> float:
    delta = (new - prev) % 360.0
    if delta > 180.0:
        delta -= 360.0
    return delta


def decompose_path(plan: PathPlan, topo: TopoMap) -> list[MacroAction]:
    """Plan -> macro-actions: a turn wherever the heading changes by at
    least the tolerance (left of current heading is positive), one
    move-ahead per arc, terminal stop."""
    plan.verify_chain(topo)
    actions: list[MacroAction] = []
    prev_heading: Optional[float] = None
    for arc_id in plan.arcs:
        heading = _heading(topo, arc_id)
        if prev_heading is not None:
            delta = _signed_delta(prev_heading, heading)
            if delta >= TURN_TOLERANCE_DEG:
                actions.append(MacroAction("turn-left"))
            elif delta <= -TURN_TOLERANCE_DEG:
                actions.append(MacroAction("turn-right"))
        actions.append(MacroAction("move-ahead", arc=arc_id))
        prev_heading = heading
    actions.append(MacroAction("stop"))
    _check_well_formed(actions)
    return actions


def _check_well_formed(actions: list[MacroAction]) -> None:
    terminal = [i for i, a in enumerate(actions) if a.kind in ("stop", "stop-left", "stop-right")]
    if not terminal:
        raise BehaviorError("macro sequence lacks a terminal stop")
    for i in range(terminal[0] + 1, len(actions)):
        if actions[i].kind == "move-ahead":
            raise BehaviorError("movement after terminal stop")


def compile_macros(actions: list[MacroAction], plan: PathPlan, topo: TopoMap) -> list[GoCommand]:
    """Macro-actions -> GO commands.  One command per arc: collinear moves
    are not merged, so each observation keeps its arc boundary.  Turn
    angles come from the junction geometry; stop variants all become
    GO-0-0."""
    _check_well_formed(actions)
    commands: list[GoCommand] = []
    prev_heading: Optional[float] = None
    move_idx = 0
    for action in actions:
        if action.kind == "move-ahead":
            if move_idx >= len(plan.arcs) or plan.arcs[move_idx] != action.arc:
                raise BehaviorError("macro-actions do not line up with the plan's arcs")
            arc = topo.arc(action.arc)
            commands.append(GoCommand(angle=0.0, distance=arc.length, arc=action.arc))
            prev_heading = _heading(topo, action.arc)
            move_idx += 1
        elif action.kind in ("turn-left", "turn-right"):
            if move_idx >= len(plan.arcs):
                raise BehaviorError("turn after the last arc")
            if prev_heading is None:
                raise BehaviorError("turn before any movement")
            delta = _signed_delta(prev_heading, _heading(topo, plan.arcs[move_idx]))
            commands.append(GoCommand(angle=delta, distance=0.0))
        else:  # stop variants
            commands.append(GoCommand(angle=0.0, distance=0.0))
    return commands


def l0_execute(
    robot: int, commands: list[GoCommand], world: World, turn_time: float = 0.0
) -> tuple[list[TravelObservation], ExecutionReply]:
    """Drive the GO sequence against the world.  Each positive-distance
    command is one arc traversal yielding one observation.  Turns consume
    no clock by default; a nonzero ``turn_time`` accumulates wall time per
    turn but never enters an arc's travel-time observation.  A dead
    battery aborts mid-path with the partial list."""
    observations: list[TravelObservation] = []
    for cmd in commands:
        if cmd.distance <= 0.0:
            if cmd.angle != 0.0 and turn_time > 0.0:
                world.advance_wall(turn_time)
            continue
        try:
            observations.append(world.traverse(robot, cmd.arc))
        except DeadBatteryError as exc:
            return observations, ExecutionReply(ok=False, reason=str(exc))
    return observations, ExecutionReply(ok=True)


@dataclass
class LayerTrace:
    """Per-robot record of commands down and replies up, one entry per task."""

    robot: int
    entries: list[dict] = field(default_factory=list)

    def record(self, entry: dict) -> None:
        self.entries.append(entry)

    def dump_jsonl(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


class RobotController:
    """One robot: task cycle, planning with sharing, execution, recording."""

    def __init__(
        self,
        robot: int,
        topo: TopoMap,
        world: World,
        fleet: FleetDirectory,
        estimator_config: EstimatorConfig,
        task_ports: list[str],
        delta: int,
        sharing_enabled: bool,
        base_pace: float = 1.0,
        prefer_own_stale: bool = False,
        turn_time: float = 0.0,
    ):
        self.robot = robot
        self.topo = topo
        self.world = world
        self.fleet = fleet
        self.estimator_config = estimator_config
        self.task_ports = list(task_ports)
        self.delta = delta
        self.sharing_enabled = sharing_enabled
        self.base_pace = base_pace
        self.prefer_own_stale = prefer_own_stale
        self.turn_time = turn_time

        self.kb = KnowledgeBase(owner=robot)
        fleet.register(robot, self.kb)
        self.series: dict[ArcId, TravelTimeSeries] = {}
        self.trace = LayerTrace(robot=robot)
        self.task_pos = 0
        self.call_index = 0
        self.retired = False
        self.pending: Optional[tuple[TaskAssignment, PathPlan]] = None

    # -- estimation -----------------------------------------------------------

    def series_for(self, arc_id: ArcId) -> TravelTimeSeries:
        ser = self.series.get(arc_id)
        if ser is None:
            arc = self.topo.arc(arc_id)
            ser = TravelTimeSeries(self.estimator_config, prior_cost=arc.length * self.base_pace)
            self.series[arc_id] = ser
        return ser

    def _cost_provider(self, arc_id: ArcId, call_index: int, step_j: int) -> tuple[float, str]:
        arc = self.topo.arc(arc_id)
        ser = self.series_for(arc_id)
        k_target = self.world.instance + 1
        shared = None
        if self.sharing_enabled:
            query = ObservationQuery(
                requester=self.robot,
                origin=arc.origin,
                destination=arc.destination,
                target=self.world.instance,
                tolerance=self.delta,
            )
            shared = request_observation(self.fleet, query)
        reply, tag = select_observation_source(
            ser.own_last_instance, shared, k_target, self.delta, self.prefer_own_stale
        )
        fallback = None
        if reply is not None:
            fallback = TravelObservation(
                arc=arc_id, robot=reply.provider, instance=reply.time_stamped,
                travel_time=reply.travel_time,
            )
        est, prior_only = estimate_travel_time(ser, k_target, fallback)
        if prior_only:
            tag = "prior"
        return est, tag

    # -- decision layer ---------------------------------------------------------

    def next_task(self) -> Optional[TaskAssignment]:
        """Round-robin over the configured port list, skipping the port the
        robot is already standing on."""
        if not self.task_ports:
            return None
        here = self.world.robots[self.robot].node
        for _ in range(len(self.task_ports)):
            port = self.task_ports[self.task_pos % len(self.task_ports)]
            self.task_pos += 1
            if self.topo.port_node(port) != here:
                return TaskAssignment(robot=self.robot, port=port, issue_instance=self.world.instance)
        return None

    def plan_phase(self) -> Optional[PathPlan]:
        """Pick the next reachable task and plan it; read-only on stores."""
        if self.retired:
            return None
        self.pending = None
        for _ in range(max(1, len(self.task_ports))):
            task = self.next_task()
            if task is None:
                return None
            destination = self.topo.port_node(task.port)
            source = self.world.robots[self.robot].node
            self.call_index += 1
            try:
                route = planner_mod.plan(
                    self.topo, source, destination, self._cost_provider, self.call_index
                )
            except UnreachableError:
                self.trace.record(
                    {"robot": self.robot, "call": self.call_index, "task": task.port,
                     "skipped": "unreachable"}
                )
                continue
            self.pending = (task, route)
            return route
        return None

    # -- execution ---------------------------------------------------------------

    def execute_phase(self) -> Optional[dict]:
        """Run the pending plan through the lower layers, then record every
        realized observation in the knowledge base and the filter bank."""
        if self.pending is None or self.retired:
            return None
        task, route = self.pending
        self.pending = None
        actions = decompose_path(route, self.topo)
        commands = compile_macros(actions, route, self.topo)
        observations, reply = l0_execute(self.robot, commands, self.world, self.turn_time)
        for obs in observations:
            self.kb.assert_observation(obs, self.topo)
            self.series_for(obs.arc).incorporate(obs.instance, obs.travel_time, own=True)
        if not reply.ok:
            self.retired = True
        realized = sum(o.travel_time for o in observations)
        record = {
            "robot": self.robot,
            "call": route.call_index,
            "task": task.port,
            "plan": route.to_json_dict(self.robot),
            "macros": [a.kind for a in actions],
            "gos": [[c.angle, c.distance] for c in commands],
            "observations": [
                {"arc": o.arc, "instance": o.instance, "tt": round(o.travel_time, 12)}
                for o in observations
            ],
            "reply": {"ok": reply.ok, "reason": reply.reason},
            "realized": realized,
        }
        self.trace.record(record)
        return record
