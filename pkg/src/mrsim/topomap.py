"""Topological factory-floor maps: nodes, directed arcs, floor zones.

Maps are immutable after load.  Arcs are directed; a corridor that can be
driven both ways is declared once with ``"bidirectional": true`` and
expanded into two directed arcs at load time (reverse arcs get fresh ids
above the highest declared id, in declaration order).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional

NodeId = int
ArcId = int
ZoneId = str


class MapError(ValueError):
    """Base class for map file problems."""


class MapFormatError(MapError):
    """The file is not valid JSON or does not follow the map schema."""


class MapValidationError(MapError):
    """The file parsed but violates a map invariant."""


@dataclass(frozen=True)
class Node:
    id: NodeId
    x: float
    y: float
    port: Optional[str] = None

    @property
    def is_port(self) -> bool:
        return self.port is not None


@dataclass(frozen=True)
class Arc:
    id: ArcId
    origin: NodeId
    destination: NodeId
    length: float
    zone: ZoneId


_NODE_KEYS = {"id", "x", "y", "port"}
_ARC_KEYS = {"id", "from", "to", "length", "zone", "bidirectional"}
_TOP_KEYS = {"nodes", "arcs", "zones"}


class TopoMap:
    """Validated directed graph of nodes and arcs with zone labels.

    Read-only once constructed; safe to share between any number of
    concurrently planning robots.
    """

    def __init__(self, nodes: Iterable[Node], arcs: Iterable[Arc], zones: Iterable[ZoneId]):
        self._nodes = {n.id: n for n in nodes}
        self._arcs = {a.id: a for a in arcs}
        self._zones = tuple(zones)
        self._out: dict[NodeId, list[tuple[ArcId, NodeId]]] = {n: [] for n in self._nodes}
        self._by_pair: dict[tuple[NodeId, NodeId], ArcId] = {}
        self._validate()

    # -- construction ----------------------------------------------------

    def _validate(self) -> None:
        if not self._nodes:
            raise MapValidationError("map has no nodes")
        ports: dict[str, NodeId] = {}
        for n in self._nodes.values():
            if n.id < 0:
                raise MapValidationError(f"node {n.id}: negative id")
            if not (math.isfinite(n.x) and math.isfinite(n.y)):
                raise MapValidationError(f"node {n.id}: non-finite position")
            if n.port is not None:
                if n.port in ports:
                    raise MapValidationError(
                        f"port label {n.port!r} used by nodes {ports[n.port]} and {n.id}"
                    )
                ports[n.port] = n.id
        zone_set = set(self._zones)
        if len(zone_set) != len(self._zones):
            raise MapValidationError("duplicate zone names")
        for a in self._arcs.values():
            if a.id < 0:
                raise MapValidationError(f"arc {a.id}: negative id")
            for end, which in ((a.origin, "origin"), (a.destination, "destination")):
                if end not in self._nodes:
                    raise MapValidationError(f"arc {a.id}: {which} references unknown node {end}")
            if a.origin == a.destination:
                raise MapValidationError(f"arc {a.id}: origin equals destination ({a.origin})")
            if not (a.length > 0 and math.isfinite(a.length)):
                raise MapValidationError(f"arc {a.id}: nonpositive length {a.length}")
            if a.zone not in zone_set:
                raise MapValidationError(f"arc {a.id}: unknown zone {a.zone!r}")
            pair = (a.origin, a.destination)
            if pair in self._by_pair:
                raise MapValidationError(
                    f"arcs {self._by_pair[pair]} and {a.id} both connect {pair[0]} -> {pair[1]}"
                )
            self._by_pair[pair] = a.id
            self._out[a.origin].append((a.id, a.destination))
        for lst in self._out.values():
            lst.sort()
        self._check_weakly_connected()

    def _check_weakly_connected(self) -> None:
        undirected: dict[NodeId, set[NodeId]] = {n: set() for n in self._nodes}
        for a in self._arcs.values():
            undirected[a.origin].add(a.destination)
            undirected[a.destination].add(a.origin)
        start = next(iter(self._nodes))
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in undirected[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        missing = set(self._nodes) - seen
        if missing:
            raise MapValidationError(
                f"map is not weakly connected; unreachable nodes: {sorted(missing)}"
            )

    # -- queries ----------------------------------------------------------

    @property
    def nodes(self) -> dict[NodeId, Node]:
        return dict(self._nodes)

    @property
    def arcs(self) -> dict[ArcId, Arc]:
        return dict(self._arcs)

    @property
    def zones(self) -> tuple[ZoneId, ...]:
        return self._zones

    def node(self, node_id: NodeId) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise MapValidationError(f"unknown node id {node_id}") from None

    def arc(self, arc_id: ArcId) -> Arc:
        try:
            return self._arcs[arc_id]
        except KeyError:
            raise MapValidationError(f"unknown arc id {arc_id}") from None

    def neighbors(self, u: NodeId) -> list[tuple[ArcId, NodeId]]:
        """Outgoing (arc id, destination) pairs of ``u`` in ascending arc id."""
        if u not in self._nodes:
            raise MapValidationError(f"unknown node id {u}")
        return list(self._out[u])

    def arc_between(self, u: NodeId, v: NodeId) -> Optional[ArcId]:
        """The unique arc u -> v, or None."""
        if u not in self._nodes:
            raise MapValidationError(f"unknown node id {u}")
        if v not in self._nodes:
            raise MapValidationError(f"unknown node id {v}")
        return self._by_pair.get((u, v))

    def port_node(self, label: str) -> NodeId:
        for n in self._nodes.values():
            if n.port == label:
                return n.id
        raise MapValidationError(f"unknown port label {label!r}")

    @property
    def port_labels(self) -> list[str]:
        return sorted(n.port for n in self._nodes.values() if n.port is not None)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TopoMap):
            return NotImplemented
        return (
            self._nodes == other._nodes
            and self._arcs == other._arcs
            and set(self._zones) == set(other._zones)
        )


def _require_keys(record: dict, allowed: set, kind: str, label: object) -> None:
    unknown = set(record) - allowed
    if unknown:
        raise MapFormatError(f"{kind} {label}: unknown keys {sorted(unknown)}")


def load_map(path: str) -> TopoMap:
    """Parse and validate a map file (see the JSON schema in the README).

    Raises MapFormatError for malformed files and MapValidationError when
    the parsed map breaks an invariant; both name the offending entity.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MapFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise MapFormatError(f"{path}: top level must be an object")
    _require_keys(raw, _TOP_KEYS, "map file", path)
    for key in _TOP_KEYS:
        if key not in raw or not isinstance(raw[key], list):
            raise MapFormatError(f"{path}: missing or non-array key {key!r}")

    nodes = []
    for rec in raw["nodes"]:
        if not isinstance(rec, dict):
            raise MapFormatError(f"{path}: node entry is not an object: {rec!r}")
        _require_keys(rec, _NODE_KEYS, "node", rec.get("id"))
        try:
            nodes.append(
                Node(
                    id=int(rec["id"]),
                    x=float(rec["x"]),
                    y=float(rec["y"]),
                    port=rec.get("port"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MapFormatError(f"{path}: bad node entry {rec!r}: {exc}") from exc

    arcs = []
    two_way = []
    for rec in raw["arcs"]:
        if not isinstance(rec, dict):
            raise MapFormatError(f"{path}: arc entry is not an object: {rec!r}")
        _require_keys(rec, _ARC_KEYS, "arc", rec.get("id"))
        try:
            arc = Arc(
                id=int(rec["id"]),
                origin=int(rec["from"]),
                destination=int(rec["to"]),
                length=float(rec["length"]),
                zone=str(rec["zone"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MapFormatError(f"{path}: bad arc entry {rec!r}: {exc}") from exc
        arcs.append(arc)
        if rec.get("bidirectional", False):
            two_way.append(arc)

    next_id = max((a.id for a in arcs), default=-1) + 1
    for arc in two_way:
        arcs.append(
            Arc(
                id=next_id,
                origin=arc.destination,
                destination=arc.origin,
                length=arc.length,
                zone=arc.zone,
            )
        )
        next_id += 1

    zones = [str(z) for z in raw["zones"]]
    return TopoMap(nodes, arcs, zones)


def save_map(topo: TopoMap, path: str) -> None:
    """Serialize in expanded (fully directed) form; reloads to an equal map."""
    doc = {
        "nodes": [
            {"id": n.id, "x": n.x, "y": n.y, **({"port": n.port} if n.port else {})}
            for n in sorted(topo.nodes.values(), key=lambda n: n.id)
        ],
        "arcs": [
            {"id": a.id, "from": a.origin, "to": a.destination, "length": a.length, "zone": a.zone}
            for a in sorted(topo.arcs.values(), key=lambda a: a.id)
        ],
        "zones": list(topo.zones),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
