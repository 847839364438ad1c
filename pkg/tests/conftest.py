import json
import os

import pytest

from mrsim.harness import fixture_path
from mrsim.topomap import load_map

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


@pytest.fixture(scope="session")
def map1():
    return load_map(fixture_path("map1.json"))


@pytest.fixture(scope="session")
def map1_path():
    return fixture_path("map1.json")


@pytest.fixture
def tiny_map(tmp_path):
    """Two nodes, one arc."""
    doc = {
        "nodes": [{"id": 1, "x": 0.0, "y": 0.0}, {"id": 2, "x": 1.0, "y": 0.0}],
        "arcs": [{"id": 0, "from": 1, "to": 2, "length": 1.0, "zone": "z"}],
        "zones": ["z"],
    }
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(doc))
    return load_map(str(path))


def write_map(tmp_path, doc, name="m.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)
