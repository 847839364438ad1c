"""Experiment driver: isolated vs shared runs, aggregation, CSV reports.

A repetition is one task round: every active robot plans (reading the
fleet's stores), then every robot executes in id order (writing the world
and its own store).  A cell is one (map, regression, mode) combination;
cells restart the world with fresh batteries from a seed derived only from
(scenario seed, regression), so the two modes of a cell start from
identical worlds and differ in nothing but the sharing switch.

Reported path cost is the estimated total at planning time; the realized
ground-truth time of the executed path is reported alongside.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from mrsim.behaviors import RobotController
from mrsim.estimator import EstimatorConfig
from mrsim.sharing import FleetDirectory
from mrsim.topomap import TopoMap, load_map
from mrsim.worldsim import DEFAULT_BATTERY_KNOTS, FloorState, World, WorldConfig

MODES = ("isolated", "shared")

CSV_COLUMNS = ("map", "robot", "regression", "mode", "mean_Cp", "mean_realized", "improvement_pct")


class ConfigError(Exception):
    pass


class RunFailure(Exception):
    pass


@dataclass(frozen=True)
class RunResult:
    """One planning call: estimated path cost and what actually happened."""

    map_name: str
    robot: int
    regression: int
    mode: str
    repetition: int
    call_index: int
    total_cost: float
    realized: float
    provenance: dict[str, int] = field(hash=False, compare=False, default_factory=dict)


_SCENARIO_KEYS = {
    "map", "robots", "mode", "regressions", "repetitions", "delta", "seed",
    "world", "floor", "estimator", "start_ports", "tasks", "prefer_own_stale",
    "turn_time",
}
_WORLD_KEYS = {"alpha", "base_pace", "noise_rel_std", "discharge_rate", "battery_knots"}
_FLOOR_KEYS = {"roughness", "schedule"}


@dataclass
class ScenarioConfig:
    map_path: str
    robots: int = 4
    mode: str = "both"
    regressions: tuple[int, ...] = (4, 5, 6, 7)
    repetitions: int = 100
    delta: int = 25
    seed: int = 42
    alpha: float = 0.5
    base_pace: float = 1.0
    noise_rel_std: float = 0.03
    discharge_rate: float = 0.00065
    battery_knots: tuple[tuple[float, float], ...] = DEFAULT_BATTERY_KNOTS
    floor_roughness: dict = field(default_factory=dict)
    floor_schedule: tuple = ()
    estimator: dict = field(default_factory=dict)
    start_ports: tuple[str, ...] = ("P1", "P2", "P3", "P4")
    tasks: tuple[tuple[str, ...], ...] = ()
    prefer_own_stale: bool = False
    turn_time: float = 0.0

    def __post_init__(self) -> None:
        if self.robots < 1:
            raise ConfigError(f"robot count must be >= 1, got {self.robots}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.delta < 0:
            raise ConfigError(f"delta must be >= 0, got {self.delta}")
        if self.mode not in ("both",) + MODES:
            raise ConfigError(f"mode must be one of isolated/shared/both, got {self.mode!r}")
        if not self.regressions:
            raise ConfigError("at least one regression number required")
        if not self.tasks:
            raise ConfigError("scenario must define task port lists")

    @property
    def modes(self) -> tuple[str, ...]:
        return MODES if self.mode == "both" else (self.mode,)

    def world_config(self, regression: int) -> WorldConfig:
        return WorldConfig(
            base_pace=self.base_pace,
            alpha=self.alpha,
            noise_rel_std=self.noise_rel_std,
            discharge_rate=self.discharge_rate,
            battery_knots=tuple(tuple(k) for k in self.battery_knots),
            seed=(self.seed, regression),
        )

    def estimator_config(self, regression: int) -> EstimatorConfig:
        raw = dict(self.estimator)
        raw["regression_no"] = regression
        return EstimatorConfig.from_dict(raw)

    def task_list(self, robot: int) -> list[str]:
        return list(self.tasks[robot % len(self.tasks)])

    def start_port(self, robot: int) -> str:
        return self.start_ports[robot % len(self.start_ports)]


def fixture_path(name: str) -> str:
    """Filesystem path of a packaged fixture (maps, reference scenario)."""
    return str(resources.files("mrsim") / "fixtures" / name)


def resolve_map_path(name_or_path: str) -> str:
    if os.path.exists(name_or_path):
        return name_or_path
    candidate = fixture_path(
        name_or_path if name_or_path.endswith(".json") else name_or_path + ".json"
    )
    if os.path.exists(candidate):
        return candidate
    raise ConfigError(f"map {name_or_path!r} is neither a file nor a bundled fixture")


def load_scenario(path: str, **overrides) -> ScenarioConfig:
    """Scenario JSON -> ScenarioConfig; keyword overrides win over the file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    unknown = set(raw) - _SCENARIO_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown scenario keys {sorted(unknown)}")
    world = raw.get("world", {})
    if set(world) - _WORLD_KEYS:
        raise ConfigError(f"{path}: unknown world keys {sorted(set(world) - _WORLD_KEYS)}")
    floor = raw.get("floor", {})
    if set(floor) - _FLOOR_KEYS:
        raise ConfigError(f"{path}: unknown floor keys {sorted(set(floor) - _FLOOR_KEYS)}")
    kwargs = dict(
        map_path=raw.get("map", "map1"),
        robots=raw.get("robots", 4),
        mode=raw.get("mode", "both"),
        regressions=tuple(raw.get("regressions", (4, 5, 6, 7))),
        repetitions=raw.get("repetitions", 100),
        delta=raw.get("delta", 25),
        seed=raw.get("seed", 42),
        alpha=world.get("alpha", 0.5),
        base_pace=world.get("base_pace", 1.0),
        noise_rel_std=world.get("noise_rel_std", 0.03),
        discharge_rate=world.get("discharge_rate", 0.00065),
        battery_knots=tuple(tuple(k) for k in world.get("battery_knots", DEFAULT_BATTERY_KNOTS)),
        floor_roughness=dict(floor.get("roughness", {})),
        floor_schedule=tuple(tuple(e) for e in floor.get("schedule", ())),
        estimator=dict(raw.get("estimator", {})),
        start_ports=tuple(raw.get("start_ports", ("P1", "P2", "P3", "P4"))),
        tasks=tuple(tuple(t) for t in raw.get("tasks", ())),
        prefer_own_stale=raw.get("prefer_own_stale", False),
        turn_time=raw.get("turn_time", 0.0),
    )
    kwargs.update(overrides)
    try:
        return ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def reference_scenario(**overrides) -> ScenarioConfig:
    return load_scenario(fixture_path("reference_scenario.json"), **overrides)


# -- running ---------------------------------------------------------------


def run_cell(
    topo: TopoMap,
    map_name: str,
    scenario: ScenarioConfig,
    regression: int,
    mode: str,
) -> tuple[list[RunResult], str]:
    """One (map, regression, mode) cell: fresh world, full repetition loop.

    Returns the per-call results and a status: 'ok' or 'all-robots-dead'.
    """
    results, status, _ = _run_cell_impl(topo, map_name, scenario, regression, mode)
    return results, status


def run_cell_controllers(
    topo: TopoMap,
    map_name: str,
    scenario: ScenarioConfig,
    regression: int,
    mode: str,
) -> tuple[list[RunResult], list[RobotController]]:
    """run_cell, but also hand back the controllers (e.g. to export a
    robot's knowledge base after the run)."""
    results, _, controllers = _run_cell_impl(topo, map_name, scenario, regression, mode)
    return results, controllers


def _run_cell_impl(
    topo: TopoMap,
    map_name: str,
    scenario: ScenarioConfig,
    regression: int,
    mode: str,
) -> tuple[list[RunResult], str, list[RobotController]]:
    zone_roughness = {z: 0.0 for z in topo.zones}
    zone_roughness.update(scenario.floor_roughness)
    floor = FloorState(
        roughness=zone_roughness,
        schedule=[(int(t), z, float(v)) for t, z, v in scenario.floor_schedule],
    )
    world = World(topo, floor, scenario.world_config(regression))
    fleet = FleetDirectory()
    est_cfg = scenario.estimator_config(regression)
    controllers = []
    for robot in range(scenario.robots):
        world.add_robot(robot, topo.port_node(scenario.start_port(robot)))
        controllers.append(
            RobotController(
                robot=robot,
                topo=topo,
                world=world,
                fleet=fleet,
                estimator_config=est_cfg,
                task_ports=scenario.task_list(robot),
                delta=scenario.delta,
                sharing_enabled=(mode == "shared"),
                base_pace=scenario.base_pace,
                prefer_own_stale=scenario.prefer_own_stale,
                turn_time=scenario.turn_time,
            )
        )

    results: list[RunResult] = []
    status = "ok"
    for rep in range(scenario.repetitions):
        if all(c.retired for c in controllers):
            status = "all-robots-dead"
            break
        routes = [c.plan_phase() for c in controllers]
        for controller, route in zip(controllers, routes):
            if route is None:
                continue
            record = controller.execute_phase()
            if record is None:
                continue
            prov: dict[str, int] = {}
            for tag in route.provenance:
                prov[tag] = prov.get(tag, 0) + 1
            results.append(
                RunResult(
                    map_name=map_name,
                    robot=controller.robot,
                    regression=regression,
                    mode=mode,
                    repetition=rep,
                    call_index=route.call_index,
                    total_cost=route.total,
                    realized=record["realized"],
                    provenance=prov,
                )
            )
    return results, status, controllers


def run_experiment(
    scenario: ScenarioConfig, topo: Optional[TopoMap] = None, map_name: Optional[str] = None
) -> tuple[list[RunResult], dict[tuple[int, str], str]]:
    """All (regression, mode) cells of one map."""
    path = resolve_map_path(scenario.map_path)
    if topo is None:
        topo = load_map(path)
    if map_name is None:
        map_name = os.path.splitext(os.path.basename(path))[0]
    results: list[RunResult] = []
    statuses: dict[tuple[int, str], str] = {}
    for regression in scenario.regressions:
        for mode in scenario.modes:
            cell, status = run_cell(topo, map_name, scenario, regression, mode)
            results.extend(cell)
            statuses[(regression, mode)] = status
    return results, statuses


# -- aggregation and reporting ------------------------------------------------

CellKey = tuple[str, int, int]  # (map, robot, regression)


def aggregate(results: list[RunResult]) -> dict[tuple[str, int, int, str], tuple[float, float]]:
    """Mean estimated cost and mean realized time per (map, robot,
    regression, mode)."""
    sums: dict[tuple[str, int, int, str], list[float]] = {}
    for r in results:
        key = (r.map_name, r.robot, r.regression, r.mode)
        acc = sums.setdefault(key, [0.0, 0.0, 0.0])
        acc[0] += r.total_cost
        acc[1] += r.realized
        acc[2] += 1.0
    return {k: (v[0] / v[2], v[1] / v[2]) for k, v in sums.items()}


def compare(
    isolated: dict[CellKey, float], shared: dict[CellKey, float]
) -> tuple[dict[CellKey, float], float]:
    """Relative improvement (isolated - shared) / isolated per cell, plus the
    grand improvement computed from the grand mean costs."""
    if set(isolated) != set(shared):
        raise RunFailure(
            f"mode reports cover different cells: {sorted(set(isolated) ^ set(shared))}"
        )
    if not isolated:
        raise RunFailure("empty reports")
    per_cell = {}
    for key, iso in isolated.items():
        if iso <= 0:
            raise RunFailure(f"nonpositive isolated mean cost for {key}")
        per_cell[key] = (iso - shared[key]) / iso
    grand_iso = float(np.mean(list(isolated.values())))
    grand_shared = float(np.mean(list(shared.values())))
    return per_cell, (grand_iso - grand_shared) / grand_iso


def report_rows(results: list[RunResult]) -> list[dict]:
    """CSV-ready rows; improvement filled where both modes of a cell exist."""
    means = aggregate(results)
    iso = {k[:3]: v[0] for k, v in means.items() if k[3] == "isolated"}
    shared = {k[:3]: v[0] for k, v in means.items() if k[3] == "shared"}
    improvements: dict[CellKey, float] = {}
    if iso and shared and set(iso) == set(shared):
        improvements, _ = compare(iso, shared)
    rows = []
    for key in sorted(means):
        map_name, robot, regression, mode = key
        mean_cp, mean_realized = means[key]
        imp = improvements.get((map_name, robot, regression))
        rows.append(
            {
                "map": map_name,
                "robot": robot,
                "regression": regression,
                "mode": mode,
                "mean_Cp": mean_cp,
                "mean_realized": mean_realized,
                "improvement_pct": None if imp is None else 100.0 * imp,
            }
        )
    return rows


def write_report(rows: list[dict], path: str) -> None:
    """Fixed-format CSV (4 decimal places) so identical runs are
    byte-identical."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            imp = row.get("improvement_pct")
            fh.write(
                "%s,%d,%d,%s,%.4f,%.4f,%s\n"
                % (
                    row["map"],
                    row["robot"],
                    row["regression"],
                    row["mode"],
                    row["mean_Cp"],
                    row["mean_realized"],
                    "" if imp is None else "%.4f" % imp,
                )
            )


def spearman(xs: list[float], ys: list[float]) -> float:
    """Spearman rank correlation (Pearson on midranks)."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("need two equal-length samples of size >= 2")

    def midranks(vals: list[float]) -> np.ndarray:
        order = np.argsort(vals, kind="stable")
        ranks = np.empty(len(vals))
        sorted_vals = np.asarray(vals)[order]
        i = 0
        while i < len(vals):
            j = i
            while j + 1 < len(vals) and sorted_vals[j + 1] == sorted_vals[i]:
                j += 1
            ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
            i = j + 1
        return ranks

    rx, ry = midranks(xs), midranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx ** 2).sum() * (ry ** 2).sum())
    if denom == 0:
        return 0.0
    return float((rx * ry).sum() / denom)
