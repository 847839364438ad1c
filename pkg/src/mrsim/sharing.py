"""Inter-robot observation retrieval.

When a robot plans, an arc it has not traversed recently can still be
costed from another robot's experience: the requester queries every other
robot's knowledge base for the latest observation of the arc at or before
the target instance, accepts replies no staler than the tolerance, and
picks the freshest (ties to the lowest provider id).  Replies never carry
a time stamp beyond the target, so estimation stays causal.

Queries only happen in the planning phase of a round, when no store is
being written; replies are plain values and providers are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from mrsim.knowledge import KnowledgeBase
from mrsim.topomap import NodeId


@dataclass(frozen=True)
class ObservationQuery:
    requester: int
    origin: NodeId
    destination: NodeId
    target: int
    tolerance: int

    def __post_init__(self) -> None:
        if self.tolerance < 0:
            raise ValueError(f"staleness tolerance must be >= 0, got {self.tolerance}")


@dataclass(frozen=True)
class ObservationReply:
    provider: int
    travel_time: float
    time_stamped: int


class FleetDirectory:
    """Handles to every robot's knowledge base, for planning-phase reads."""

    def __init__(self) -> None:
        self._stores: dict[int, KnowledgeBase] = {}

    def register(self, robot: int, kb: KnowledgeBase) -> None:
        self._stores[robot] = kb

    def robots(self) -> list[int]:
        return sorted(self._stores)

    def store(self, robot: int) -> KnowledgeBase:
        return self._stores[robot]


def request_observation(fleet: FleetDirectory, query: ObservationQuery) -> Optional[ObservationReply]:
    """Ask every other robot for the arc's latest observation at or before
    the target instance; return the freshest reply within tolerance."""
    best: Optional[ObservationReply] = None
    for robot in fleet.robots():
        if robot == query.requester:
            continue
        hit = fleet.store(robot).query_latest(query.origin, query.destination, query.target)
        if hit is None:
            continue
        tt, stamped = hit
        assert stamped <= query.target, "provider returned an observation from the future"
        if stamped < query.target - query.tolerance:
            continue
        if best is None or stamped > best.time_stamped or (
            stamped == best.time_stamped and robot < best.provider
        ):
            best = ObservationReply(provider=robot, travel_time=tt, time_stamped=stamped)
    return best


def select_observation_source(
    own_last_instance: int,
    shared: Optional[ObservationReply],
    k: int,
    tolerance: int,
    prefer_own_stale: bool = False,
) -> tuple[Optional[ObservationReply], str]:
    """Observation precedence for estimating at instance k.

    Returns (reply to feed the estimator, provenance tag).  Precedence:
    own observation within tolerance of k-1 (``own-fresh``), else a shared
    reply (``shared``), else own history of any age (``own-stale``), else
    nothing (``prior``).  Own history already lives in the robot's own
    filter, so the reply is only non-None for ``shared``.
    ``prefer_own_stale`` flips the middle two preferences.
    """
    has_own = own_last_instance >= 0
    if has_own and own_last_instance >= k - 1 - tolerance:
        return None, "own-fresh"
    if prefer_own_stale and has_own:
        return None, "own-stale"
    if shared is not None:
        return shared, "shared"
    if has_own:
        return None, "own-stale"
    return None, "prior"
