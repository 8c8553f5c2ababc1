"""Information roadmap: a shared spatial graph whose nodes carry comms semantics.

Roadmaps are treated as values: merge/refresh return new instances and never
mutate their inputs, so snapshots can be shared across robots safely.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

from .propagation import PathLossModel, RadioSpec, predict_snr_clamped

STRONG_SNR_DB = 20.0  # checkpoint strength threshold
DEFAULT_INTENT_HORIZON = 120.0  # seconds before an unfulfilled drop intent expires


class NodeKind(Enum):
    FRONTIER = "frontier"
    BREADCRUMB = "breadcrumb"
    COMMS_CHECKPOINT = "comms_checkpoint"
    DROPPED_RADIO = "dropped_radio"
    DROP_INTENT = "drop_intent"


class CheckpointStrength(Enum):
    STRONG = "strong"
    WEAK = "weak"
    NONE = "none"


@dataclass(frozen=True)
class IrmNode:
    id: str
    kind: NodeKind
    position: tuple[float, float, float]
    snr: float = 0.0  # dB; meaningful for checkpoints and dropped radios
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        if self.snr < 0:
            raise ValueError(f"node snr must be >= 0, got {self.snr}")


@dataclass
class Irm:
    """Node set plus undirected edges with traversal lengths (meters)."""

    nodes: dict[str, IrmNode] = field(default_factory=dict)
    edges: dict[tuple[str, str], float] = field(default_factory=dict)

    @staticmethod
    def _key(a: str, b: str) -> tuple[str, str]:
        return (a, b) if a <= b else (b, a)

    def add_node(self, node: IrmNode) -> None:
        self.nodes[node.id] = node

    def add_edge(self, a: str, b: str, length: float) -> None:
        if a == b:
            raise ValueError(f"self-loop on node {a!r}")
        if a not in self.nodes or b not in self.nodes:
            raise ValueError(f"edge {a!r}-{b!r} references missing node")
        if length < 0:
            raise ValueError("edge length must be >= 0")
        self.edges[self._key(a, b)] = length

    def neighbors(self, node_id: str):
        for (a, b), length in self.edges.items():
            if a == node_id:
                yield b, length
            elif b == node_id:
                yield a, length

    def copy(self) -> "Irm":
        return Irm(nodes=dict(self.nodes), edges=dict(self.edges))

    def checkpoints(self) -> list[IrmNode]:
        return [n for n in self.nodes.values() if n.kind is NodeKind.COMMS_CHECKPOINT]

    def to_json(self) -> str:
        payload = {
            "nodes": [
                {
                    "id": n.id,
                    "kind": n.kind.value,
                    "position": list(n.position),
                    "snr": n.snr,
                    "timestamp": n.timestamp,
                }
                for n in sorted(self.nodes.values(), key=lambda n: n.id)
            ],
            "edges": [
                {"a": a, "b": b, "length": length}
                for (a, b), length in sorted(self.edges.items())
            ],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Irm":
        payload = json.loads(text)
        return cls.from_dict(payload)

    @classmethod
    def from_dict(cls, payload: dict) -> "Irm":
        irm = cls()
        for entry in payload.get("nodes", []):
            irm.add_node(
                IrmNode(
                    id=entry["id"],
                    kind=NodeKind(entry["kind"]),
                    position=tuple(entry["position"]),
                    snr=entry.get("snr", 0.0),
                    timestamp=entry.get("timestamp", 0.0),
                )
            )
        for entry in payload.get("edges", []):
            irm.add_edge(entry["a"], entry["b"], entry["length"])
        return irm


def classify_checkpoint(snr: float) -> CheckpointStrength:
    """Strong at or above the threshold, Weak in (0, threshold), None at 0."""
    if snr < 0:
        raise ValueError(f"snr must be >= 0, got {snr}")
    if snr >= STRONG_SNR_DB:
        return CheckpointStrength.STRONG
    if snr > 0:
        return CheckpointStrength.WEAK
    return CheckpointStrength.NONE


def _node_order_key(node: IrmNode) -> tuple:
    # total order over node content; used only to break exact timestamp ties
    return (node.kind.value, node.position, node.snr, node.id)


def merge(a: Irm, b: Irm) -> Irm:
    """Union of two roadmaps, keeping the newer node on id collisions.

    Exact timestamp ties fall back to a canonical content order so the
    result does not depend on argument order. Edge-length conflicts keep
    the shorter length.
    """
    out = Irm()
    ids = set(a.nodes) | set(b.nodes)
    for node_id in sorted(ids):
        na, nb = a.nodes.get(node_id), b.nodes.get(node_id)
        if na is None:
            out.add_node(nb)
        elif nb is None:
            out.add_node(na)
        elif na.timestamp != nb.timestamp:
            out.add_node(na if na.timestamp > nb.timestamp else nb)
        else:
            out.add_node(min(na, nb, key=_node_order_key))
    for key in sorted(set(a.edges) | set(b.edges)):
        lengths = [g.edges[key] for g in (a, b) if key in g.edges]
        if key[0] in out.nodes and key[1] in out.nodes:
            out.edges[key] = min(lengths)
    return out


def refresh_checkpoints(
    irm: Irm,
    radios: Sequence[RadioSpec],
    bottlenecks: dict[str, float],
    model: PathLossModel,
    rx_noise: float,
    now: float,
) -> Irm:
    """Re-predict every comms checkpoint's SNR from the current radio set.

    Each checkpoint takes the best over radios of min(radio backbone
    bottleneck, predicted SNR at the checkpoint position), clamped at 0,
    and its timestamp moves to `now`.
    """
    out = irm.copy()
    for node in irm.checkpoints():
        best = 0.0
        for radio in radios:
            snr = predict_snr_clamped(radio, node.position, rx_noise, model)
            best = max(best, min(bottlenecks.get(radio.id, math.inf), snr))
        out.nodes[node.id] = replace(node, snr=best, timestamp=now)
    return out


def graph_distances(irm: Irm, source: str) -> dict[str, float]:
    """Shortest-path distance (sum of edge lengths) from source to every reachable node."""
    if source not in irm.nodes:
        raise ValueError(f"unknown node {source!r}")
    dist = {source: 0.0}
    frontier: list[tuple[float, str]] = [(0.0, source)]
    while frontier:
        d, node = heapq.heappop(frontier)
        if d > dist.get(node, math.inf):
            continue
        for neighbor, length in irm.neighbors(node):
            nd = d + length
            if nd < dist.get(neighbor, math.inf):
                dist[neighbor] = nd
                heapq.heappush(frontier, (nd, neighbor))
    return dist


def strong_checkpoints(irm: Irm) -> list[IrmNode]:
    return [
        n for n in irm.checkpoints() if classify_checkpoint(n.snr) is CheckpointStrength.STRONG
    ]


def select_return_target(irm: Irm, robot_position_node: str) -> str | None:
    """Nearest strong checkpoint by graph distance, or a frontier beside it.

    When a frontier adjacent to the chosen checkpoint is strictly closer to
    the robot, the frontier wins (the robot can keep exploring there while
    in comms). Returns None when no strong checkpoint is reachable.
    """
    dist = graph_distances(irm, robot_position_node)
    candidates = [
        (dist[n.id], n.id) for n in strong_checkpoints(irm) if n.id in dist
    ]
    if not candidates:
        return None
    _, best = min(candidates)
    best_dist = dist[best]

    frontier_options = [
        (dist[nid], nid)
        for nid, _ in irm.neighbors(best)
        if irm.nodes[nid].kind is NodeKind.FRONTIER and nid in dist and dist[nid] < best_dist
    ]
    if frontier_options:
        return min(frontier_options)[1]
    return best


def next_closer_checkpoint(irm: Irm, current_target: str, base_node: str) -> str | None:
    """Strong checkpoint nearer the base than the current target, closest to that target.

    Ties in distance-to-base break toward the smaller node id. Returns None
    when the current target is already the closest strong checkpoint; the
    caller then falls back to the base itself.
    """
    if current_target not in irm.nodes:
        raise ValueError(f"unknown node {current_target!r}")
    from_base = graph_distances(irm, base_node)
    from_target = graph_distances(irm, current_target)
    target_dist = from_base.get(current_target, math.inf)

    candidates = [
        (from_target.get(n.id, math.inf), from_base[n.id], n.id)
        for n in strong_checkpoints(irm)
        if n.id != current_target and from_base.get(n.id, math.inf) < target_dist
    ]
    if not candidates:
        return None
    return min(candidates, key=lambda c: (c[0], c[2]))[2]


def expire_drop_intents(irm: Irm, now: float, horizon: float = DEFAULT_INTENT_HORIZON) -> Irm:
    """Drop intent nodes older than the horizon, along with their edges."""
    stale = {
        n.id
        for n in irm.nodes.values()
        if n.kind is NodeKind.DROP_INTENT and now - n.timestamp > horizon
    }
    if not stale:
        return irm
    out = Irm()
    for node in irm.nodes.values():
        if node.id not in stale:
            out.add_node(node)
    for (a, b), length in irm.edges.items():
        if a not in stale and b not in stale:
            out.edges[(a, b)] = length
    return out


def nodes_within(
    irm: Irm, position: Sequence[float], radius: float, kinds: Iterable[NodeKind]
) -> list[IrmNode]:
    """Nodes of the given kinds within a closed Euclidean ball of the position."""
    wanted = set(kinds)
    pos = tuple(position)
    return [
        n
        for n in irm.nodes.values()
        if n.kind in wanted and math.dist(n.position, pos) <= radius
    ]
