"""Time-stamped SNR link graph over radios, with bottleneck-SNR (max-min) routing.

Links are stored symmetrically; a link with SNR 0 is treated as absent.
Topologies are plain values: a single writer updates them, readers may
query any snapshot concurrently.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

DEFAULT_STALE_HORIZON = 30.0  # seconds; links older than this are skipped by routing


@dataclass(frozen=True)
class Route:
    """A path through the mesh and the SNR of its weakest link."""

    path: tuple[str, ...]
    bottleneck: float


@dataclass
class MeshTopology:
    """Undirected link graph: node ids plus (snr, timestamp) per link."""

    nodes: set[str] = field(default_factory=set)
    links: dict[tuple[str, str], tuple[float, float]] = field(default_factory=dict)

    @staticmethod
    def _key(i: str, j: str) -> tuple[str, str]:
        return (i, j) if i <= j else (j, i)

    def add_node(self, node: str) -> None:
        self.nodes.add(node)

    def set_link(self, i: str, j: str, snr: float, timestamp: float) -> "MeshTopology":
        """Record a symmetric link observation; SNR 0 removes the link.

        An observation older than the stored one is ignored.
        """
        if i == j:
            raise ValueError(f"self-link on node {i!r}")
        if snr < 0:
            raise ValueError(f"snr must be >= 0, got {snr}")
        self.nodes.add(i)
        self.nodes.add(j)
        key = self._key(i, j)
        existing = self.links.get(key)
        if existing is not None and existing[1] > timestamp:
            return self
        if snr == 0:
            self.links.pop(key, None)
        else:
            self.links[key] = (snr, timestamp)
        return self

    def link_snr(self, i: str, j: str) -> float | None:
        entry = self.links.get(self._key(i, j))
        return None if entry is None else entry[0]

    def neighbors(self, node: str, now: float | None = None, horizon: float = DEFAULT_STALE_HORIZON):
        """Yield (neighbor, snr) over links that are fresh at `now`."""
        for (a, b), (snr, ts) in self.links.items():
            if now is not None and ts < now - horizon:
                continue
            if a == node:
                yield b, snr
            elif b == node:
                yield a, snr

    def to_jsonl(self) -> str:
        """One JSON record per link: {i, j, snr_db, t}."""
        lines = []
        for (i, j) in sorted(self.links):
            snr, ts = self.links[(i, j)]
            lines.append(json.dumps({"i": i, "j": j, "snr_db": snr, "t": ts}, sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")


def widest_path_route(
    topology: MeshTopology,
    src: str,
    dst: str,
    now: float | None = None,
    horizon: float = DEFAULT_STALE_HORIZON,
) -> Route | None:
    """Route maximizing the minimum link SNR between src and dst.

    Ties break toward fewer hops, then the lexicographically smallest node
    sequence. Returns None when the nodes are disconnected. When `now` is
    given, links older than `horizon` are ignored.
    """
    if src not in topology.nodes:
        raise ValueError(f"unknown node {src!r}")
    if dst not in topology.nodes:
        raise ValueError(f"unknown node {dst!r}")
    if src == dst:
        return Route(path=(src,), bottleneck=math.inf)

    # Priority (-bottleneck, hops, path): popping smallest settles each node
    # on its max-min route; equal-length prefixes keep path order total.
    frontier: list[tuple[float, int, tuple[str, ...]]] = [(-math.inf, 0, (src,))]
    settled: set[str] = set()
    while frontier:
        neg_bneck, hops, path = heapq.heappop(frontier)
        node = path[-1]
        if node in settled:
            continue
        settled.add(node)
        if node == dst:
            return Route(path=path, bottleneck=-neg_bneck)
        for neighbor, snr in topology.neighbors(node, now=now, horizon=horizon):
            if neighbor in settled:
                continue
            bneck = min(-neg_bneck, snr)
            heapq.heappush(frontier, (-bneck, hops + 1, path + (neighbor,)))
    return None


def bottleneck_snr(topology: MeshTopology, route: Route) -> float:
    """Minimum link SNR along a route; raises if any hop is missing."""
    if len(route.path) < 2:
        return math.inf
    worst = math.inf
    for a, b in zip(route.path, route.path[1:]):
        snr = topology.link_snr(a, b)
        if snr is None:
            raise ValueError(f"route hop {a!r}-{b!r} has no link")
        worst = min(worst, snr)
    return worst
