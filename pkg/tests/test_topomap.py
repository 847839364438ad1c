import json

import pytest

from mrsim.harness import fixture_path
from mrsim.topomap import (
    MapFormatError,
    MapValidationError,
    load_map,
    save_map,
)

from .conftest import write_map


def minimal_doc():
    return {
        "nodes": [{"id": 1, "x": 0.0, "y": 0.0}, {"id": 2, "x": 1.0, "y": 0.0}],
        "arcs": [{"id": 0, "from": 1, "to": 2, "length": 1.0, "zone": "z"}],
        "zones": ["z"],
    }


def test_minimal_map_loads(tmp_path):
    topo = load_map(write_map(tmp_path, minimal_doc()))
    assert len(topo.nodes) == 2
    assert len(topo.arcs) == 1


def test_dangling_node_reference_names_entity(tmp_path):
    doc = minimal_doc()
    doc["arcs"][0]["to"] = 99
    with pytest.raises(MapValidationError, match=r"arc 0.*99"):
        load_map(write_map(tmp_path, doc))


def test_map1_fixture_arc_count_matches_file():
    path = fixture_path("map1.json")
    raw = json.load(open(path))
    # oracle: count arc lines, doubling declared bidirectional corridors
    expected = sum(2 if rec.get("bidirectional") else 1 for rec in raw["arcs"])
    topo = load_map(path)
    assert len(topo.arcs) == expected
    assert len(topo.nodes) == 12
    assert len(topo.zones) == 2


@pytest.mark.parametrize("name", ["map1.json", "map2.json", "map3.json"])
def test_fixture_maps_meet_floor_requirements(name):
    topo = load_map(fixture_path(name))
    assert len(topo.nodes) >= 10
    assert len(topo.zones) >= 2
    assert len(topo.port_labels) >= 4


def test_neighbors_empty_for_sink(tmp_path):
    topo = load_map(write_map(tmp_path, minimal_doc()))
    assert topo.neighbors(2) == []


def test_neighbors_single_arc(tmp_path):
    topo = load_map(write_map(tmp_path, minimal_doc()))
    assert topo.neighbors(1) == [(0, 2)]


def test_neighbors_matches_linear_scan_on_fixture(map1):
    for u in map1.nodes:
        scan = sorted((a.id, a.destination) for a in map1.arcs.values() if a.origin == u)
        assert map1.neighbors(u) == scan


def test_neighbors_unknown_node(map1):
    with pytest.raises(MapValidationError, match="999"):
        map1.neighbors(999)


def test_arc_between_presence_absence_and_scan(map1, tiny_map):
    assert tiny_map.arc_between(1, 2) == 0
    assert tiny_map.arc_between(2, 1) is None
    for a in map1.arcs.values():
        assert map1.arc_between(a.origin, a.destination) == a.id


def test_roundtrip_save_load(tmp_path, map1):
    out = tmp_path / "copy.json"
    save_map(map1, str(out))
    again = load_map(str(out))
    assert again == map1


def test_bidirectional_expansion(tmp_path):
    doc = minimal_doc()
    doc["arcs"][0]["bidirectional"] = True
    topo = load_map(write_map(tmp_path, doc))
    assert len(topo.arcs) == 2
    reverse = topo.arc_between(2, 1)
    assert reverse is not None
    assert topo.arc(reverse).length == topo.arc(0).length
    assert topo.arc(reverse).zone == topo.arc(0).zone


def test_duplicate_ordered_pair_rejected(tmp_path):
    doc = minimal_doc()
    doc["arcs"].append({"id": 1, "from": 1, "to": 2, "length": 2.0, "zone": "z"})
    with pytest.raises(MapValidationError, match="both connect"):
        load_map(write_map(tmp_path, doc))


def test_nonpositive_length_rejected(tmp_path):
    doc = minimal_doc()
    doc["arcs"][0]["length"] = 0.0
    with pytest.raises(MapValidationError, match="arc 0"):
        load_map(write_map(tmp_path, doc))


def test_self_loop_rejected(tmp_path):
    doc = minimal_doc()
    doc["arcs"][0]["to"] = 1
    with pytest.raises(MapValidationError, match="origin equals destination"):
        load_map(write_map(tmp_path, doc))


def test_disconnected_graph_rejected(tmp_path):
    doc = minimal_doc()
    doc["nodes"].append({"id": 3, "x": 5.0, "y": 5.0})
    with pytest.raises(MapValidationError, match="not weakly connected"):
        load_map(write_map(tmp_path, doc))


def test_unknown_zone_rejected(tmp_path):
    doc = minimal_doc()
    doc["arcs"][0]["zone"] = "nowhere"
    with pytest.raises(MapValidationError, match="nowhere"):
        load_map(write_map(tmp_path, doc))


def test_unknown_keys_rejected(tmp_path):
    doc = minimal_doc()
    doc["extra"] = 1
    with pytest.raises(MapFormatError, match="extra"):
        load_map(write_map(tmp_path, doc))
    doc = minimal_doc()
    doc["arcs"][0]["speed"] = 3
    with pytest.raises(MapFormatError, match="speed"):
        load_map(write_map(tmp_path, doc))


def test_malformed_json_is_format_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{nodes: [")
    with pytest.raises(MapFormatError):
        load_map(str(path))


def test_duplicate_port_labels_rejected(tmp_path):
    doc = minimal_doc()
    doc["nodes"][0]["port"] = "P1"
    doc["nodes"][1]["port"] = "P1"
    with pytest.raises(MapValidationError, match="P1"):
        load_map(write_map(tmp_path, doc))


def test_map_is_immutable_view(map1):
    nodes = map1.nodes
    nodes.clear()
    assert len(map1.nodes) == 12


def test_neighbors_scan_oracle_on_random_maps():
    import numpy as np

    from mrsim.topomap import Arc, Node, TopoMap

    from .oracles import random_connected_digraph

    rng = np.random.default_rng(31)
    for _ in range(40):
        n, arcs = random_connected_digraph(rng, max_nodes=50)
        topo = TopoMap(
            [Node(i, float(i), 0.0) for i in range(n)],
            [Arc(a, u, v, 1.0, "z") for a, u, v, _w in arcs],
            ["z"],
        )
        for u in range(n):
            scan = sorted((a, v) for a, uu, v, _w in arcs if uu == u)
            assert topo.neighbors(u) == scan
