import itertools
import json
import math
import random

import pytest

from meshdrop.mesh import MeshTopology, Route, bottleneck_snr, widest_path_route


def topology(*links):
    top = MeshTopology()
    for i, j, snr in links:
        top.set_link(i, j, snr, timestamp=0.0)
    return top


def brute_force_bottleneck(top: MeshTopology, src: str, dst: str) -> float | None:
    """Oracle: enumerate every simple path and take the best min-SNR."""
    if src == dst:
        return math.inf
    adjacency: dict[str, list[tuple[str, float]]] = {n: [] for n in top.nodes}
    for (a, b), (snr, _) in top.links.items():
        adjacency[a].append((b, snr))
        adjacency[b].append((a, snr))
    best = None

    def walk(node, seen, worst):
        nonlocal best
        if node == dst:
            if best is None or worst > best:
                best = worst
            return
        for neighbor, snr in adjacency[node]:
            if neighbor not in seen:
                walk(neighbor, seen | {neighbor}, min(worst, snr))

    walk(src, {src}, math.inf)
    return best


class TestSetLink:
    def test_single_link(self):
        top = MeshTopology().set_link("a", "b", 25.0, 1.0)
        assert top.link_snr("a", "b") == 25.0
        assert top.link_snr("b", "a") == 25.0
        assert top.nodes == {"a", "b"}

    def test_latest_timestamp_wins(self):
        top = MeshTopology()
        top.set_link("a", "b", 25.0, 1.0)
        top.set_link("a", "b", 12.0, 2.0)
        assert top.link_snr("a", "b") == 12.0

    def test_older_observation_ignored(self):
        top = MeshTopology()
        top.set_link("a", "b", 25.0, 5.0)
        top.set_link("a", "b", 12.0, 2.0)
        assert top.link_snr("a", "b") == 25.0

    def test_zero_snr_removes(self):
        top = MeshTopology()
        top.set_link("a", "b", 25.0, 1.0)
        top.set_link("a", "b", 0.0, 2.0)
        assert top.link_snr("a", "b") is None
        assert "a" in top.nodes  # nodes persist after link removal

    def test_self_link_rejected(self):
        with pytest.raises(ValueError):
            MeshTopology().set_link("a", "a", 10.0, 0.0)

    def test_negative_snr_rejected(self):
        with pytest.raises(ValueError):
            MeshTopology().set_link("a", "b", -1.0, 0.0)


class TestWidestPath:
    def test_src_equals_dst(self):
        top = topology(("a", "b", 20.0))
        route = widest_path_route(top, "a", "a")
        assert route == Route(path=("a",), bottleneck=math.inf)

    def test_two_hop_beats_weak_direct(self):
        top = topology(("a", "c", 5.0), ("a", "b", 20.0), ("b", "c", 18.0))
        route = widest_path_route(top, "a", "c")
        assert route.path == ("a", "b", "c")
        assert route.bottleneck == 18.0

    def test_disconnected_returns_none(self):
        top = topology(("a", "b", 20.0), ("c", "d", 20.0))
        assert widest_path_route(top, "a", "c") is None

    def test_unknown_node_rejected(self):
        top = topology(("a", "b", 20.0))
        with pytest.raises(ValueError):
            widest_path_route(top, "a", "zzz")

    def test_tie_breaks_prefer_fewer_hops(self):
        # both routes have bottleneck 10; direct link should win
        top = topology(("a", "c", 10.0), ("a", "b", 10.0), ("b", "c", 30.0))
        route = widest_path_route(top, "a", "c")
        assert route.path == ("a", "c")

    def test_tie_breaks_lexicographic(self):
        # two 2-hop routes with equal bottleneck: via b and via c
        top = topology(("a", "b", 10.0), ("b", "d", 10.0), ("a", "c", 10.0), ("c", "d", 10.0))
        route = widest_path_route(top, "a", "d")
        assert route.path == ("a", "b", "d")

    def test_stale_links_excluded(self):
        top = MeshTopology()
        top.set_link("a", "b", 20.0, timestamp=0.0)
        top.set_link("b", "c", 20.0, timestamp=99.0)
        top.set_link("a", "c", 5.0, timestamp=99.0)
        # at t=100 with 30 s horizon, a-b is stale: only the direct route remains
        route = widest_path_route(top, "a", "c", now=100.0)
        assert route.path == ("a", "c")
        assert route.bottleneck == 5.0

    def test_matches_brute_force_on_random_graphs(self):
        rng = random.Random(42)
        nodes = [chr(ord("a") + i) for i in range(7)]
        for _ in range(200):
            top = MeshTopology()
            for node in nodes:
                top.add_node(node)
            for i, j in itertools.combinations(nodes, 2):
                if rng.random() < 0.4:
                    top.set_link(i, j, rng.uniform(1.0, 40.0), 0.0)
            src, dst = rng.sample(nodes, 2)
            route = widest_path_route(top, src, dst)
            expected = brute_force_bottleneck(top, src, dst)
            if expected is None:
                assert route is None
            else:
                assert route.bottleneck == expected

    def test_monotonicity_raising_snr(self):
        rng = random.Random(3)
        nodes = ["a", "b", "c", "d", "e"]
        for _ in range(50):
            top = MeshTopology()
            for node in nodes:
                top.add_node(node)
            for i, j in itertools.combinations(nodes, 2):
                if rng.random() < 0.5:
                    top.set_link(i, j, rng.uniform(1.0, 30.0), 0.0)
            before = widest_path_route(top, "a", "e")
            boosted = MeshTopology()
            for node in nodes:
                boosted.add_node(node)
            for (i, j), (snr, ts) in top.links.items():
                boosted.set_link(i, j, snr + 5.0, ts)
            after = widest_path_route(boosted, "a", "e")
            if before is not None:
                assert after is not None
                assert after.bottleneck >= before.bottleneck


class TestBottleneckSnr:
    def test_single_link(self):
        top = topology(("a", "b", 25.0))
        assert bottleneck_snr(top, Route(("a", "b"), 25.0)) == 25.0

    def test_minimum_along_route(self):
        top = topology(("a", "b", 25.0), ("b", "c", 18.0), ("c", "d", 40.0))
        assert bottleneck_snr(top, Route(("a", "b", "c", "d"), 18.0)) == 18.0

    def test_broken_route_rejected(self):
        top = topology(("a", "b", 25.0))
        with pytest.raises(ValueError):
            bottleneck_snr(top, Route(("a", "b", "c"), 0.0))


class TestExport:
    def test_jsonl_one_record_per_link(self):
        top = topology(("b", "a", 25.0), ("b", "c", 18.0))
        lines = top.to_jsonl().strip().split("\n")
        records = [json.loads(line) for line in lines]
        assert records == [
            {"i": "a", "j": "b", "snr_db": 25.0, "t": 0.0},
            {"i": "b", "j": "c", "snr_db": 18.0, "t": 0.0},
        ]

    def test_empty_topology(self):
        assert MeshTopology().to_jsonl() == ""
