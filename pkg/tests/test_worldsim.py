import json
import os

import numpy as np
import pytest

from mrsim.topomap import Arc
from mrsim.worldsim import (
    BatteryCurve,
    BatteryState,
    DeadBatteryError,
    FloorState,
    World,
    WorldConfig,
    battery_factor,
    ground_truth_travel_time,
)

from .conftest import GOLDEN_DIR


def make_world(tiny_map, **cfg_kwargs):
    cfg = WorldConfig(**cfg_kwargs)
    floor = FloorState(roughness={"z": 0.0})
    return World(tiny_map, floor, cfg)


class TestBatteryCurve:
    def test_midband_minimum_is_exactly_one(self):
        assert battery_factor(0.5) == 1.0

    def test_low_soc_exceeds_midband(self):
        assert battery_factor(0.02) > battery_factor(0.5)

    def test_full_charge_between_one_and_empty(self):
        full = battery_factor(1.0)
        assert 1.0 < full < battery_factor(0.02)

    def test_matches_golden_values(self):
        golden = json.load(open(os.path.join(GOLDEN_DIR, "battery_curve.json")))
        for soc, expected in golden.items():
            assert battery_factor(float(soc)) == pytest.approx(expected, abs=1e-12)

    def test_never_below_one_anywhere(self):
        socs = np.linspace(0.0, 1.0, 2001)
        assert min(battery_factor(float(s)) for s in socs) >= 1.0

    def test_domain_checked(self):
        with pytest.raises(ValueError):
            battery_factor(-0.1)
        with pytest.raises(ValueError):
            battery_factor(1.1)

    def test_custom_knots(self):
        curve = BatteryCurve([(0.0, 2.0), (1.0, 1.0)])
        assert curve(0.0) == 2.0
        assert curve(1.0) == 1.0
        assert 1.0 < curve(0.5) < 2.0


class TestGroundTruth:
    ARC = Arc(id=0, origin=1, destination=2, length=3.0, zone="z")

    def test_all_multipliers_one(self):
        cfg = WorldConfig(noise_rel_std=0.0, base_pace=1.0, alpha=0.5)
        floor = FloorState(roughness={"z": 0.0})
        tt = ground_truth_travel_time(self.ARC, BatteryState(0.5, 0.0), floor, cfg, rng=None)
        assert tt == pytest.approx(3.0)

    def test_roughness_ratio_is_one_plus_alpha(self):
        cfg = WorldConfig(noise_rel_std=0.0, alpha=0.5)
        smooth = FloorState(roughness={"z": 0.0})
        rough = FloorState(roughness={"z": 1.0})
        battery = BatteryState(0.5, 0.0)
        t0 = ground_truth_travel_time(self.ARC, battery, smooth, cfg)
        t1 = ground_truth_travel_time(self.ARC, battery, rough, cfg)
        assert t1 / t0 == pytest.approx(1.0 + cfg.alpha)

    def test_hand_evaluated_default_config(self):
        # alpha=0.5, base_pace=1.0, length 3, roughness 0.4, mid-band soc, no noise
        cfg = WorldConfig(noise_rel_std=0.0)
        floor = FloorState(roughness={"z": 0.4})
        tt = ground_truth_travel_time(self.ARC, BatteryState(0.5, 0.0), floor, cfg)
        assert tt == pytest.approx(3.6)

    def test_dead_battery_raises(self):
        cfg = WorldConfig()
        floor = FloorState(roughness={"z": 0.0})
        with pytest.raises(DeadBatteryError):
            ground_truth_travel_time(self.ARC, BatteryState(0.0, 0.0), floor, cfg)

    def test_deterministic_without_noise(self):
        cfg = WorldConfig(noise_rel_std=0.0)
        floor = FloorState(roughness={"z": 0.3})
        battery = BatteryState(0.7, 0.0)
        a = ground_truth_travel_time(self.ARC, battery, floor, cfg)
        b = ground_truth_travel_time(self.ARC, battery, floor, cfg)
        assert a == b

    def test_monotone_in_roughness_and_battery(self):
        cfg = WorldConfig(noise_rel_std=0.0)
        battery = BatteryState(0.5, 0.0)
        prev = 0.0
        for rough in np.linspace(0, 1, 11):
            tt = ground_truth_travel_time(
                self.ARC, battery, FloorState(roughness={"z": float(rough)}), cfg
            )
            assert tt >= prev
            prev = tt
        floor = FloorState(roughness={"z": 0.0})
        # battery factor 1.0 at mid band vs 1.6 at 0.02
        assert ground_truth_travel_time(
            self.ARC, BatteryState(0.02, 0.0), floor, cfg
        ) > ground_truth_travel_time(self.ARC, BatteryState(0.5, 0.0), floor, cfg)


class TestTraverse:
    def test_single_traversal(self, tiny_map):
        world = make_world(tiny_map, noise_rel_std=0.0)
        world.add_robot(7, 1)
        obs = world.traverse(7, 0)
        assert obs.instance == 1
        assert obs.robot == 7
        assert world.robots[7].node == 2

    def test_instances_increase_soc_decreases(self, tmp_path):
        from .conftest import write_map

        from mrsim.topomap import load_map

        doc = {
            "nodes": [{"id": 1, "x": 0, "y": 0}, {"id": 2, "x": 1, "y": 0}],
            "arcs": [{"id": 0, "from": 1, "to": 2, "length": 1.0, "zone": "z",
                      "bidirectional": True}],
            "zones": ["z"],
        }
        topo = load_map(write_map(tmp_path, doc))
        world = World(topo, FloorState(roughness={"z": 0.0}), WorldConfig(discharge_rate=0.01))
        world.add_robot(0, 1)
        socs, instances = [], []
        for arc in (0, 1, 0, 1):
            obs = world.traverse(0, arc)
            instances.append(obs.instance)
            socs.append(world.robots[0].battery.soc)
            assert obs.travel_time > 0
        assert instances == [1, 2, 3, 4]
        assert all(a > b for a, b in zip(socs, socs[1:]))

    def test_not_at_origin_rejected(self, tiny_map):
        world = make_world(tiny_map)
        world.add_robot(0, 2)
        with pytest.raises(Exception, match="not at origin"):
            world.traverse(0, 0)

    def test_schedule_applies_after_crossing_tick(self, tmp_path):
        from .conftest import write_map

        from mrsim.topomap import load_map

        doc = {
            "nodes": [{"id": 1, "x": 0, "y": 0}, {"id": 2, "x": 1, "y": 0}],
            "arcs": [{"id": 0, "from": 1, "to": 2, "length": 1.0, "zone": "z",
                      "bidirectional": True}],
            "zones": ["z"],
        }
        topo = load_map(write_map(tmp_path, doc))
        floor = FloorState(roughness={"z": 0.0}, schedule=[(1, "z", 1.0)])
        world = World(topo, floor, WorldConfig(noise_rel_std=0.0, alpha=0.5, discharge_rate=0.0))
        world.add_robot(0, 1)
        first = world.traverse(0, 0)  # pre-change roughness
        second = world.traverse(0, 1)  # schedule tick 1 passed during first
        assert second.travel_time > first.travel_time
        assert second.travel_time / first.travel_time == pytest.approx(1.5)

    def test_seeded_reproducibility(self, tiny_map):
        def run(seed):
            world = make_world(tiny_map, seed=seed)
            world.add_robot(0, 1)
            return world.traverse(0, 0).travel_time

        assert run(123) == run(123)
        assert run(123) != run(124)

    def test_dead_battery_on_traverse(self, tiny_map):
        world = make_world(tiny_map)
        world.add_robot(0, 1, soc=0.0)
        with pytest.raises(DeadBatteryError):
            world.traverse(0, 0)


class TestFloorState:
    def test_schedule_must_increase_per_zone(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            FloorState(roughness={"z": 0.0}, schedule=[(5, "z", 0.1), (5, "z", 0.2)])

    def test_roughness_bounds(self):
        with pytest.raises(ValueError):
            FloorState(roughness={"z": 1.5})
        with pytest.raises(ValueError):
            FloorState(roughness={"z": 0.0}, schedule=[(1, "z", -0.1)])
