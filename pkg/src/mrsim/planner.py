"""Shortest-path search with on-demand estimated edge weights.

Dijkstra over the topological map where each arc's weight is produced by a
cost provider (the travel-time estimator with shared-observation fallback)
the first time the arc is touched in a planning call, then cached for the
rest of that call -- a single call must see one consistent weight per arc
or the optimality argument breaks.  Extract-min ties break on the lowest
node id and relaxation uses strict inequality, so plans are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from heapq import heappop, heappush
from typing import Callable, Optional

from mrsim.topomap import ArcId, NodeId, TopoMap

# (arc id, planning call index, extract-min step j) -> (weight, provenance tag)
CostProvider = Callable[[ArcId, int, int], tuple[float, str]]


class PlanningError(Exception):
    pass


class UnreachableError(PlanningError):
    pass


@dataclass(frozen=True)
class PathPlan:
    """An ordered arc chain with the per-arc estimated costs of one call."""

    source: NodeId
    destination: NodeId
    arcs: tuple[ArcId, ...]
    costs: tuple[float, ...]
    provenance: tuple[str, ...]
    total: float
    call_index: int

    def __post_init__(self) -> None:
        if len(self.arcs) != len(self.costs) or len(self.arcs) != len(self.provenance):
            raise PlanningError("arc, cost and provenance sequences must align")
        if abs(self.total - sum(self.costs)) > 1e-9:
            raise PlanningError(f"total {self.total} != sum of per-arc costs {sum(self.costs)}")

    def verify_chain(self, topo: TopoMap) -> None:
        at = self.source
        for arc_id in self.arcs:
            arc = topo.arc(arc_id)
            if arc.origin != at:
                raise PlanningError(f"arc {arc_id} does not chain at node {at}")
            at = arc.destination
        if at != self.destination:
            raise PlanningError(f"chain ends at {at}, not destination {self.destination}")

    def to_json_dict(self, robot: Optional[int] = None) -> dict:
        return {
            "robot": robot,
            "call": self.call_index,
            "arcs": list(self.arcs),
            "costs": list(self.costs),
            "total": self.total,
            "provenance": list(self.provenance),
        }


@dataclass
class PlannerScratch:
    """Working state of one search: tentative distances, predecessors,
    settled set and the extract-min step counter."""

    dist: dict[NodeId, float] = field(default_factory=dict)
    pred: dict[NodeId, tuple[NodeId, ArcId]] = field(default_factory=dict)
    visited: set[NodeId] = field(default_factory=set)
    steps: int = 0


def relax(u: NodeId, v: NodeId, w: float, arc: ArcId, scratch: PlannerScratch) -> bool:
    """Textbook relaxation; strict inequality keeps the earlier predecessor
    on ties."""
    if w <= 0:
        raise PlanningError(f"nonpositive weight {w} on arc {arc}")
    alt = scratch.dist.get(u, float("inf")) + w
    if alt < scratch.dist.get(v, float("inf")):
        scratch.dist[v] = alt
        scratch.pred[v] = (u, arc)
        return True
    return False


def findedgecost(
    topo: TopoMap,
    u: NodeId,
    v: NodeId,
    j: int,
    provider: CostProvider,
    cache: dict[ArcId, tuple[float, str]],
    call_index: int,
) -> tuple[ArcId, float, str]:
    """Weight of the arc u -> v for this call, estimating it on first touch."""
    arc_id = topo.arc_between(u, v)
    if arc_id is None:
        raise PlanningError(f"no arc between {u} and {v}")
    hit = cache.get(arc_id)
    if hit is None:
        hit = provider(arc_id, call_index, j)
        if not hit[0] > 0:
            raise PlanningError(f"cost provider returned nonpositive weight {hit[0]} for arc {arc_id}")
        cache[arc_id] = hit
    return arc_id, hit[0], hit[1]


def plan(
    topo: TopoMap,
    source: NodeId,
    destination: NodeId,
    provider: CostProvider,
    call_index: int = 0,
) -> PathPlan:
    """Least-estimated-cost route from source to destination."""
    if source == destination:
        raise PlanningError(f"source and destination are both {source}")
    topo.node(source)
    topo.node(destination)

    scratch = PlannerScratch()
    cache: dict[ArcId, tuple[float, str]] = {}
    scratch.dist[source] = 0.0
    heap: list[tuple[float, NodeId]] = [(0.0, source)]

    while heap:
        d, u = heappop(heap)
        if u in scratch.visited or d > scratch.dist.get(u, float("inf")):
            continue
        scratch.visited.add(u)
        scratch.steps += 1
        if u == destination:
            break
        for arc_id, v in topo.neighbors(u):
            if v in scratch.visited:
                continue
            _, w, _prov = findedgecost(topo, u, v, scratch.steps, provider, cache, call_index)
            if relax(u, v, w, arc_id, scratch):
                heappush(heap, (scratch.dist[v], v))

    if destination not in scratch.visited:
        raise UnreachableError(f"destination {destination} unreachable from {source}")

    chain: list[tuple[ArcId, float, str]] = []
    at = destination
    while at != source:
        u, arc_id = scratch.pred[at]
        w, prov = cache[arc_id]
        chain.append((arc_id, w, prov))
        at = u
    chain.reverse()

    result = PathPlan(
        source=source,
        destination=destination,
        arcs=tuple(a for a, _, _ in chain),
        costs=tuple(w for _, w, _ in chain),
        provenance=tuple(p for _, _, p in chain),
        total=sum(w for _, w, _ in chain),
        call_index=call_index,
    )
    result.verify_chain(topo)
    assert abs(result.total - scratch.dist[destination]) < 1e-9
    return result
