"""Per-robot triple store for travel-time knowledge.

Each measured traversal becomes an edge individual described by
subject-predicate-object triples: typed ``ns:Edge``, linked to its origin
and destination node individuals (typed ``ns:Node``), and carrying the
measured travel time (``ns:tt``, float) and the global clock instance it
was measured at (``ns:timeStamped``, integer).  One individual per
(arc, instance) pair keeps each travel time bound to its time stamp.

The triple set is the source of truth; the (origin, destination) ->
time-ordered index is a rebuildable acceleration.  ``integrity_check``
applies the cardinality and domain/range rules and reports violations as
data rather than raising.
"""

from __future__ import annotations

import bisect
from typing import Optional, Union

from mrsim.topomap import NodeId, TopoMap
from mrsim.worldsim import TravelObservation

TYPE = "rdf:type"
ORIGIN = "ns:origin"
DESTINATION = "ns:destination"
TT = "ns:tt"
TIMESTAMPED = "ns:timeStamped"
EDGE_CLASS = "ns:Edge"
NODE_CLASS = "ns:Node"

PREDICATES = (TYPE, ORIGIN, DESTINATION, TT, TIMESTAMPED)

Literal = Union[str, float, int]
Triple = tuple[str, str, Literal]

HEADER = "#mrs-triples v1"


class KnowledgeError(Exception):
    pass


class IntegrityError(KnowledgeError):
    """A write contradicts data already in the store."""


class TripleParseError(KnowledgeError):
    """A dump file line could not be parsed."""


def _node_ind(node: NodeId) -> str:
    return f"node:{node}"


class KnowledgeBase:
    def __init__(self, owner: int, retention_cap: Optional[int] = None):
        self.owner = owner
        self.retention_cap = retention_cap
        self._triples: set[Triple] = set()
        self._index: dict[tuple[NodeId, NodeId], list[tuple[int, str, float]]] = {}
        self._by_key: dict[tuple[NodeId, NodeId, int], tuple[str, float]] = {}
        self._order: list[tuple[int, NodeId, NodeId]] = []
        self._next_edge = 0

    def __len__(self) -> int:
        return len(self._triples)

    @property
    def triples(self) -> frozenset[Triple]:
        return frozenset(self._triples)

    def observation_count(self) -> int:
        return len(self._by_key)

    # -- writes --------------------------------------------------------------

    def assert_observation(self, obs: TravelObservation, topo: TopoMap) -> str:
        """Record one traversal; returns the edge individual id.

        Re-asserting an identical observation is a no-op; re-asserting the
        same (arc, instance) with a different travel time is an integrity
        error.
        """
        arc = topo.arc(obs.arc)
        key = (arc.origin, arc.destination, obs.instance)
        existing = self._by_key.get(key)
        if existing is not None:
            ind, tt = existing
            if tt == obs.travel_time:
                return ind
            raise IntegrityError(
                f"conflicting travel time for arc {obs.arc} at instance {obs.instance}: "
                f"stored {tt}, asserted {obs.travel_time}"
            )
        ind = f"edge:{self._next_edge}"
        self._next_edge += 1
        o_ind, d_ind = _node_ind(arc.origin), _node_ind(arc.destination)
        self._triples.add((ind, TYPE, EDGE_CLASS))
        self._triples.add((o_ind, TYPE, NODE_CLASS))
        self._triples.add((d_ind, TYPE, NODE_CLASS))
        self._triples.add((ind, ORIGIN, o_ind))
        self._triples.add((ind, DESTINATION, d_ind))
        self._triples.add((ind, TT, float(obs.travel_time)))
        self._triples.add((ind, TIMESTAMPED, int(obs.instance)))
        self._by_key[key] = (ind, float(obs.travel_time))
        pair = (arc.origin, arc.destination)
        bisect.insort(
            self._index.setdefault(pair, []), (obs.instance, ind, float(obs.travel_time))
        )
        self._order.append((obs.instance, arc.origin, arc.destination))
        if self.retention_cap is not None and len(self._by_key) > self.retention_cap:
            self._evict_oldest()
        return ind

    def _evict_oldest(self) -> None:
        self._order.sort()
        instance, origin, destination = self._order.pop(0)
        ind, tt = self._by_key.pop((origin, destination, instance))
        self._triples.discard((ind, TYPE, EDGE_CLASS))
        self._triples.discard((ind, ORIGIN, _node_ind(origin)))
        self._triples.discard((ind, DESTINATION, _node_ind(destination)))
        self._triples.discard((ind, TT, tt))
        self._triples.discard((ind, TIMESTAMPED, instance))
        lst = self._index[(origin, destination)]
        lst.remove((instance, ind, tt))

    def add_raw_triple(self, subject: str, predicate: str, obj: Literal) -> None:
        """Unchecked insert, for building deliberately broken stores in
        tests and for import; bypasses the observation index."""
        self._triples.add((subject, predicate, obj))

    def _rebuild_index(self) -> None:
        """Regenerate the observation index from well-formed edge individuals."""
        types: dict[str, set[str]] = {}
        props: dict[str, dict[str, Literal]] = {}
        counts: dict[str, dict[str, int]] = {}
        for s, p, o in self._triples:
            if p == TYPE:
                types.setdefault(s, set()).add(str(o))
            else:
                props.setdefault(s, {})[p] = o
                counts.setdefault(s, {})[p] = counts.setdefault(s, {}).get(p, 0) + 1
        max_edge = -1
        for ind, ts in types.items():
            if EDGE_CLASS not in ts:
                continue
            if ind.startswith("edge:"):
                try:
                    max_edge = max(max_edge, int(ind.split(":", 1)[1]))
                except ValueError:
                    pass
            vals = props.get(ind, {})
            cnts = counts.get(ind, {})
            if any(cnts.get(p, 0) != 1 for p in (ORIGIN, DESTINATION, TT, TIMESTAMPED)):
                continue
            try:
                origin = int(str(vals[ORIGIN]).split(":", 1)[1])
                destination = int(str(vals[DESTINATION]).split(":", 1)[1])
            except (IndexError, ValueError):
                continue
            tt = float(vals[TT])
            instance = int(vals[TIMESTAMPED])
            key = (origin, destination, instance)
            if key in self._by_key:
                continue
            self._by_key[key] = (ind, tt)
            bisect.insort(self._index.setdefault((origin, destination), []), (instance, ind, tt))
            self._order.append((instance, origin, destination))
        self._next_edge = max_edge + 1

    # -- queries ---------------------------------------------------------------

    def query_latest(
        self, origin: NodeId, destination: NodeId, before: int
    ) -> Optional[tuple[float, int]]:
        """Latest (travel time, timeStamped) for the ordered node pair with
        timeStamped <= before (inclusive), or None."""
        lst = self._index.get((origin, destination))
        if not lst:
            return None
        pos = bisect.bisect_right(lst, before, key=lambda rec: rec[0]) - 1
        if pos < 0:
            return None
        instance, _ind, tt = lst[pos]
        return tt, instance

    def query_window(
        self, origin: NodeId, destination: NodeId, t0: int, t1: int
    ) -> list[tuple[float, int]]:
        """All observations with t0 <= timeStamped <= t1, ascending."""
        if t0 > t1:
            raise ValueError(f"empty-ordered window: t0={t0} > t1={t1}")
        lst = self._index.get((origin, destination), [])
        lo = bisect.bisect_left(lst, t0, key=lambda rec: rec[0])
        hi = bisect.bisect_right(lst, t1, key=lambda rec: rec[0])
        return [(tt, instance) for instance, _ind, tt in lst[lo:hi]]

    # -- integrity ---------------------------------------------------------------

    def integrity_check(self) -> list[str]:
        """Cardinality and domain/range rules; empty list means consistent."""
        violations: list[str] = []
        types: dict[str, set[str]] = {}
        props: dict[str, dict[str, list[Literal]]] = {}
        for s, p, o in self._triples:
            if p == TYPE:
                types.setdefault(s, set()).add(str(o))
            elif p in (ORIGIN, DESTINATION, TT, TIMESTAMPED):
                props.setdefault(s, {}).setdefault(p, []).append(o)
            else:
                violations.append(f"{s}: unknown predicate {p!r}")
        edges = {s for s, ts in types.items() if EDGE_CLASS in ts}
        nodes = {s for s, ts in types.items() if NODE_CLASS in ts}
        for s in sorted(set(props) - edges):
            used = sorted(props[s])
            violations.append(f"{s}: has {used} but is not typed {EDGE_CLASS} (domain violation)")
        for e in sorted(edges):
            vals = props.get(e, {})
            for pred in (ORIGIN, DESTINATION, TT, TIMESTAMPED):
                got = vals.get(pred, [])
                if len(got) != 1:
                    violations.append(f"{e}: expected exactly one {pred}, found {len(got)}")
            for pred in (ORIGIN, DESTINATION):
                for o in vals.get(pred, []):
                    if not isinstance(o, str) or o not in nodes:
                        violations.append(
                            f"{e}: {pred} value {o!r} is not a {NODE_CLASS} individual (range violation)"
                        )
            for o in vals.get(TT, []):
                if not isinstance(o, float):
                    violations.append(f"{e}: {TT} value {o!r} is not a float literal (range violation)")
            for o in vals.get(TIMESTAMPED, []):
                if not isinstance(o, int) or isinstance(o, bool):
                    violations.append(
                        f"{e}: {TIMESTAMPED} value {o!r} is not an integer literal (range violation)"
                    )
        return violations


# -- flat-file dump -----------------------------------------------------------


def _format_object(predicate: str, obj: Literal) -> str:
    if predicate == TT:
        return repr(float(obj))
    if predicate == TIMESTAMPED:
        return str(int(obj))
    return str(obj)


def export_triples(kb: KnowledgeBase, path: str) -> None:
    """One triple per line, tab-separated, deterministic order."""
    lines = sorted(f"{s}\t{p}\t{_format_object(p, o)}" for s, p, o in kb.triples)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(HEADER + "\n")
        for line in lines:
            fh.write(line + "\n")


def import_triples(path: str, owner: int = -1) -> KnowledgeBase:
    """Inverse of export_triples; import o export is the identity on
    triple sets.  Parse errors name the offending line number."""
    kb = KnowledgeBase(owner)
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != HEADER:
            raise TripleParseError(f"{path}:1: expected header {HEADER!r}, got {first!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise TripleParseError(f"{path}:{lineno}: expected 3 tab-separated fields")
            s, p, raw = parts
            if p not in PREDICATES:
                raise TripleParseError(f"{path}:{lineno}: unknown predicate {p!r}")
            obj: Literal
            try:
                if p == TT:
                    obj = float(raw)
                elif p == TIMESTAMPED:
                    obj = int(raw)
                else:
                    obj = raw
            except ValueError as exc:
                raise TripleParseError(f"{path}:{lineno}: bad literal {raw!r}: {exc}") from exc
            kb.add_raw_triple(s, p, obj)
    kb._rebuild_index()
    return kb
