"""Deterministic fixed-tick simulator binding the whole stack.

Each tick: robots move along roadmap edges (frontier-greedy, overridden by
behavior directives), link SNRs are re-predicted from positions, traffic is
generated and endpoints serviced, datagrams propagate hop-by-hop through the
channel model, behaviors step, and roadmaps merge wherever strong
connectivity exists. Identical scenarios (seed included) produce identical
event logs.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
import random
from dataclasses import dataclass, field, replace

from . import behaviors as bhv
from . import irm as irm_mod
from .irm import Irm, IrmNode, NodeKind
from .mesh import MeshTopology, widest_path_route
from .propagation import PathLossModel, RadioSpec, path_loss, shannon_capacity
from .transport import DataClass, Datagram, Endpoint, TopicConfig

log = logging.getLogger(__name__)

SNR_RECORD_CAP = 9999.0  # keeps exported SNR values finite


class ScenarioError(ValueError):
    """Invalid scenario; carries every violation found."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class TruncatedLogError(ValueError):
    """Event log ends without a run-complete record."""


@dataclass(frozen=True)
class RadioParams:
    """Radio hardware parameters without identity or placement."""

    tx_power: float
    noise_level: float
    bandwidth: float

    def at(self, radio_id: str, position: tuple[float, float, float]) -> RadioSpec:
        return RadioSpec(radio_id, position, self.tx_power, self.noise_level, self.bandwidth)


@dataclass(frozen=True)
class ChannelModel:
    """Per-link delivery model: capacity efficiency and an SNR-driven loss ramp."""

    efficiency: float = 0.5
    loss_snr_lo: float = 0.0  # at or below: every datagram lost
    loss_snr_hi: float = 10.0  # at or above: no random loss

    def __post_init__(self) -> None:
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must be in (0, 1]")
        if not self.loss_snr_lo < self.loss_snr_hi:
            raise ValueError("loss_snr_lo must be < loss_snr_hi")

    def loss_probability(self, snr: float) -> float:
        if snr <= self.loss_snr_lo:
            return 1.0
        if snr >= self.loss_snr_hi:
            return 0.0
        return (self.loss_snr_hi - snr) / (self.loss_snr_hi - self.loss_snr_lo)


@dataclass
class LinkBudget:
    """Remaining per-tick byte budget on one link."""

    remaining: float

    def try_consume(self, nbytes: int) -> bool:
        if self.remaining >= nbytes:
            self.remaining -= nbytes
            return True
        return False


def channel_deliver(
    datagram: Datagram,
    link_snr: float,
    capacity_budget: LinkBudget,
    rng: random.Random,
    channel: ChannelModel,
) -> bool:
    """One link-level delivery attempt: capacity first, then the loss draw.

    Bytes beyond the budget are dropped outright; surviving datagrams are
    lost independently with the channel's SNR-dependent probability. The
    draw is by inversion (uniform sample compared against the probability).
    """
    if not capacity_budget.try_consume(datagram.wire_size):
        return False
    return rng.random() >= channel.loss_probability(link_snr)


@dataclass(frozen=True)
class TrafficSpec:
    """One traffic source: steady rate and/or scheduled bursts on a topic."""

    topic: TopicConfig
    rate: float = 0.0  # payload bytes/second published
    message_bytes: int = 1000
    bursts: tuple[tuple[float, int], ...] = ()
    to: str | None = None  # destination robot for base-originated traffic


@dataclass(frozen=True)
class RobotConfig:
    id: str
    start: str
    speed: float  # m/s
    radio: RadioParams
    slots: int


@dataclass
class Scenario:
    irm_seed_graph: Irm
    base_node: str
    base_radio: RadioParams
    drop_radio: RadioParams
    robots: list[RobotConfig]
    traffic: dict[str, list[TrafficSpec]]
    model: PathLossModel = field(default_factory=PathLossModel)
    channel: ChannelModel = field(default_factory=ChannelModel)
    duration: float = 60.0
    tick: float = 0.1
    seed: int = 0
    base_radio_id: str = "base"
    drop_scheduler: bhv.DropSchedulerConfig = field(default_factory=bhv.DropSchedulerConfig)
    return_to_comms: bhv.ReturnToCommsConfig = field(default_factory=bhv.ReturnToCommsConfig)
    outages: tuple[tuple[float, float], ...] = ()
    refresh_interval: float = 1.0
    retransmit_timeout: float = 1.0
    snapshot_interval: float = 10.0
    peak_rate_window: float = 10.0

    def validate(self) -> list[str]:
        """All violations found, empty when the scenario is runnable."""
        problems = []
        if self.tick <= 0:
            problems.append(f"tick: must be > 0, got {self.tick}")
        if self.duration < 0:
            problems.append(f"duration: must be >= 0, got {self.duration}")
        if self.base_node not in self.irm_seed_graph.nodes:
            problems.append(f"base_node: {self.base_node!r} not in seed graph")
        seen_ids = {self.base_radio_id}
        for robot in self.robots:
            prefix = f"robots[{robot.id}]"
            if robot.id in seen_ids:
                problems.append(f"{prefix}: duplicate id")
            seen_ids.add(robot.id)
            if robot.start not in self.irm_seed_graph.nodes:
                problems.append(f"{prefix}: start node {robot.start!r} not in seed graph")
            if robot.speed <= 0:
                problems.append(f"{prefix}: speed must be > 0")
            if not 0 <= robot.slots <= bhv.MAX_DROP_SLOTS:
                problems.append(f"{prefix}: slots must be in [0, {bhv.MAX_DROP_SLOTS}]")
        robot_ids = {r.id for r in self.robots}
        for source, specs in self.traffic.items():
            if source != self.base_radio_id and source not in robot_ids:
                problems.append(f"traffic[{source}]: unknown source")
            topic_ids = set()
            for spec in specs:
                tid = spec.topic.topic_id
                if source == self.base_radio_id:
                    if spec.to not in robot_ids:
                        problems.append(
                            f"traffic[{source}] topic {tid}: 'to' must name a robot"
                        )
                if spec.rate < 0:
                    problems.append(f"traffic[{source}] topic {tid}: rate must be >= 0")
                if spec.rate > 0 and spec.message_bytes <= 0:
                    problems.append(
                        f"traffic[{source}] topic {tid}: message_bytes must be > 0"
                    )
                if tid in topic_ids:
                    problems.append(f"traffic[{source}]: duplicate topic id {tid}")
                topic_ids.add(tid)
        for robot in self.robots:
            own = {s.topic.topic_id for s in self.traffic.get(robot.id, [])}
            inbound = {
                s.topic.topic_id
                for s in self.traffic.get(self.base_radio_id, [])
                if s.to == robot.id
            }
            clash = own & inbound
            if clash:
                problems.append(
                    f"traffic: topic ids {sorted(clash)} used in both directions for "
                    f"robot {robot.id}"
                )
        for start, end in self.outages:
            if end <= start:
                problems.append(f"outages: window ({start}, {end}) is empty")
        return problems

    # ------------------------------------------------------------------ io

    @classmethod
    def from_dict(cls, payload: dict) -> "Scenario":
        def radio_params(entry: dict) -> RadioParams:
            return RadioParams(
                tx_power=entry["tx_power"],
                noise_level=entry["noise_level"],
                bandwidth=entry["bandwidth"],
            )

        def topic_config(entry: dict) -> TopicConfig:
            return TopicConfig(
                topic_id=entry["topic_id"],
                data_class=DataClass(entry["class"]),
                token_rate=entry["token_rate"],
                bucket_depth=entry["bucket_depth"],
                max_payload=entry["max_payload"],
                compression_ratio=entry.get("compression_ratio", 1.0),
            )

        traffic = {
            source: [
                TrafficSpec(
                    topic=topic_config(spec["topic"]),
                    rate=spec.get("rate", 0.0),
                    message_bytes=spec.get("message_bytes", 1000),
                    bursts=tuple((b[0], b[1]) for b in spec.get("bursts", [])),
                    to=spec.get("to"),
                )
                for spec in specs
            ]
            for source, specs in payload.get("traffic", {}).items()
        }
        kwargs = {}
        if "model" in payload:
            kwargs["model"] = PathLossModel(**payload["model"])
        if "channel" in payload:
            kwargs["channel"] = ChannelModel(**payload["channel"])
        if "drop_scheduler" in payload:
            kwargs["drop_scheduler"] = bhv.DropSchedulerConfig(**payload["drop_scheduler"])
        if "return_to_comms" in payload:
            kwargs["return_to_comms"] = bhv.ReturnToCommsConfig(**payload["return_to_comms"])
        for name in (
            "duration",
            "tick",
            "seed",
            "base_radio_id",
            "refresh_interval",
            "retransmit_timeout",
            "snapshot_interval",
            "peak_rate_window",
        ):
            if name in payload:
                kwargs[name] = payload[name]
        if "outages" in payload:
            kwargs["outages"] = tuple((o[0], o[1]) for o in payload["outages"])
        return cls(
            irm_seed_graph=Irm.from_dict(payload["irm"]),
            base_node=payload["base_node"],
            base_radio=radio_params(payload["base_radio"]),
            drop_radio=radio_params(payload["drop_radio"]),
            robots=[
                RobotConfig(
                    id=entry["id"],
                    start=entry["start"],
                    speed=entry["speed"],
                    radio=radio_params(entry["radio"]),
                    slots=entry["slots"],
                )
                for entry in payload.get("robots", [])
            ],
            traffic=traffic,
            **kwargs,
        )

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


@dataclass
class MetricsReport:
    """Mission-level comms metrics plus the per-topic buffer time series."""

    duration_s: float
    max_delay_s: float
    effective_comm_range_m: float
    up_time_s: float  # best robot
    up_time_pct: float
    up_time_by_robot: dict[str, float]
    peak_rate_to_base_bps: float
    peak_rate_from_base_bps: float
    deployed_radios: int
    buffer_series: list[tuple[float, str, int, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "duration_s": self.duration_s,
            "max_delay_s": self.max_delay_s,
            "effective_comm_range_m": self.effective_comm_range_m,
            "up_time_s": self.up_time_s,
            "up_time_pct": self.up_time_pct,
            "up_time_by_robot": self.up_time_by_robot,
            "peak_rate_to_base_bps": self.peak_rate_to_base_bps,
            "peak_rate_from_base_bps": self.peak_rate_from_base_bps,
            "deployed_radios": self.deployed_radios,
        }


@dataclass
class SimResult:
    metrics: MetricsReport
    events: list[dict]
    snapshots: list[dict]


# --------------------------------------------------------------------- engine


class _Robot:
    def __init__(self, config: RobotConfig, scenario: Scenario, start_pos, now: float):
        self.config = config
        self.position = start_pos
        self.at_node = config.start
        self.plan: list[str] = []
        self.edge_progress = 0.0
        self.goal: str | None = None
        self.irm = scenario.irm_seed_graph.copy()
        self.drop_state = bhv.RobotDropState(
            robot_id=config.id,
            node=config.start,
            path_history=[config.start],
            slots_left=config.slots,
        )
        self.comms_state = bhv.RobotCommsState()
        self.intent_count = 0
        self.pending_intent: str | None = None
        self.seed_node = config.start  # last visited node of the seed graph
        topics = [spec.topic for spec in scenario.traffic.get(config.id, [])]
        topics += [
            spec.topic
            for spec in scenario.traffic.get(scenario.base_radio_id, [])
            if spec.to == config.id
        ]
        self.endpoint = Endpoint(topics, now=now, retransmit_timeout=scenario.retransmit_timeout)
        self.base_endpoint = Endpoint(
            topics, now=now, retransmit_timeout=scenario.retransmit_timeout
        )
        self.credits: dict[int, float] = {}
        self.base_credits: dict[int, float] = {}
        self.bursts_sent: set[tuple[str, int, int]] = set()


class _Simulation:
    def __init__(self, scenario: Scenario):
        problems = scenario.validate()
        if problems:
            raise ScenarioError(problems)
        self.scenario = scenario
        self.model = scenario.model
        self.channel = scenario.channel
        self.tick = scenario.tick
        self.now = 0.0
        self.topology = MeshTopology()
        self.base_irm = scenario.irm_seed_graph.copy()
        self.rng_channel = random.Random(f"{scenario.seed}:channel")
        self.rng_jam = random.Random(f"{scenario.seed}:jam")
        self.rng_traffic = random.Random(f"{scenario.seed}:traffic")
        self.events: list[dict] = []
        self.snapshots: list[dict] = []
        self.deployed = 0

        base_pos = scenario.irm_seed_graph.nodes[scenario.base_node].position
        self.base_id = scenario.base_radio_id
        # radio registry: id -> (params, position); robot radios track the robot
        self.static_radios: dict[str, tuple[RadioParams, tuple]] = {
            self.base_id: (scenario.base_radio, base_pos)
        }
        self.robots = [
            _Robot(cfg, scenario, scenario.irm_seed_graph.nodes[cfg.start].position, 0.0)
            for cfg in sorted(scenario.robots, key=lambda r: r.id)
        ]
        self.seed_distances = irm_mod.graph_distances(scenario.irm_seed_graph, scenario.base_node)
        self.topology.add_node(self.base_id)
        for robot in self.robots:
            self.topology.add_node(robot.config.id)
            self._visit(robot)  # starting node counts as visited
        self._next_refresh = 0.0
        self._next_snapshot = 0.0

    # ------------------------------------------------------------- plumbing

    def _record(self, event: dict) -> None:
        self.events.append(event)

    def _in_outage(self, t: float) -> bool:
        return any(start <= t < end for start, end in self.scenario.outages)

    def _radio_entries(self) -> list[tuple[str, RadioParams, tuple]]:
        entries = [(rid, params, pos) for rid, (params, pos) in self.static_radios.items()]
        entries += [(r.config.id, r.config.radio, r.position) for r in self.robots]
        return sorted(entries)

    def _pair_snr(self, a: tuple[str, RadioParams, tuple], b) -> float:
        d = max(math.dist(a[2], b[2]), self.model.d0)
        loss = path_loss(d, self.model)
        forward = a[1].tx_power - loss - b[1].noise_level
        reverse = b[1].tx_power - loss - a[1].noise_level
        return max(0.0, min(forward, reverse))

    def _update_topology(self) -> None:
        entries = self._radio_entries()
        outage = self._in_outage(self.now)
        for i in range(len(entries)):
            for j in range(i + 1, len(entries)):
                snr = 0.0 if outage else self._pair_snr(entries[i], entries[j])
                self.topology.set_link(entries[i][0], entries[j][0], snr, self.now)

    def _bottleneck(self, radio_id: str) -> float:
        route = widest_path_route(self.topology, radio_id, self.base_id, now=self.now)
        return 0.0 if route is None else min(route.bottleneck, SNR_RECORD_CAP)

    def _backbone(self) -> tuple[list[RadioSpec], dict[str, float]]:
        """Static backbone radios and their max-min SNR to the base over the backbone."""
        specs = [params.at(rid, pos) for rid, (params, pos) in sorted(self.static_radios.items())]
        backbone_top = MeshTopology()
        for rid in self.static_radios:
            backbone_top.add_node(rid)
        entries = {rid: (rid, params, pos) for rid, (params, pos) in self.static_radios.items()}
        ids = sorted(entries)
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                snr = self._pair_snr(entries[ids[i]], entries[ids[j]])
                backbone_top.set_link(ids[i], ids[j], snr, 0.0)
        bottlenecks = {}
        for rid in ids:
            if rid == self.base_id:
                bottlenecks[rid] = math.inf
            else:
                route = widest_path_route(backbone_top, rid, self.base_id)
                bottlenecks[rid] = 0.0 if route is None else route.bottleneck
        return specs, bottlenecks

    # --------------------------------------------------------------- motion

    def _visit(self, robot: _Robot) -> None:
        node = robot.irm.nodes[robot.at_node]
        snr = self._bottleneck(robot.config.id)
        if node.kind is NodeKind.COMMS_CHECKPOINT:
            robot.irm.nodes[node.id] = replace(node, snr=snr, timestamp=self.now)
        else:
            if node.kind is NodeKind.FRONTIER:
                robot.irm.nodes[node.id] = replace(
                    node, kind=NodeKind.BREADCRUMB, timestamp=self.now
                )
            # record a colocated checkpoint; breadcrumbs cannot change kind
            cp_id = f"cp:{robot.at_node}"
            robot.irm.add_node(
                IrmNode(cp_id, NodeKind.COMMS_CHECKPOINT, node.position, snr, self.now)
            )
            robot.irm.add_edge(robot.at_node, cp_id, 0.0)
        if robot.at_node in self.seed_distances:
            robot.seed_node = robot.at_node
        history = robot.drop_state.path_history
        if not history or history[-1] != robot.at_node:
            history.append(robot.at_node)
        robot.drop_state.node = robot.at_node

    def _nearest_frontier(self, robot: _Robot) -> str | None:
        dist = irm_mod.graph_distances(robot.irm, robot.at_node)
        options = [
            (dist[n.id], n.id)
            for n in robot.irm.nodes.values()
            if n.kind is NodeKind.FRONTIER and n.id in dist
        ]
        return min(options)[1] if options else None

    def _plan_to(self, robot: _Robot, goal: str) -> list[str]:
        if goal == robot.at_node:
            return []
        dist = {robot.at_node: 0.0}
        prev: dict[str, str] = {}
        frontier = [(0.0, robot.at_node)]
        while frontier:
            d, node = heapq.heappop(frontier)
            if d > dist.get(node, math.inf):
                continue
            if node == goal:
                break
            for neighbor, length in robot.irm.neighbors(node):
                nd = d + length
                if nd < dist.get(neighbor, math.inf):
                    dist[neighbor] = nd
                    prev[neighbor] = node
                    heapq.heappush(frontier, (nd, neighbor))
        if goal not in prev:
            return []
        path = [goal]
        while path[-1] != robot.at_node:
            path.append(prev[path[-1]])
        path.reverse()
        return path[1:]

    def _move(self, robot: _Robot) -> None:
        if robot.goal is None or robot.goal == robot.at_node:
            robot.plan = []
            robot.edge_progress = 0.0
            return
        if not robot.plan:
            robot.plan = self._plan_to(robot, robot.goal)
            robot.edge_progress = 0.0
            if not robot.plan:
                robot.goal = None
                return
        remaining = robot.config.speed * self.tick
        while robot.plan:
            nxt = robot.plan[0]
            edge_len = robot.irm.edges.get(Irm._key(robot.at_node, nxt))
            if edge_len is None:
                robot.plan = []  # roadmap changed underfoot; re-plan next tick
                break
            left = edge_len - robot.edge_progress
            if left <= remaining:
                remaining -= left
                robot.at_node = nxt
                robot.edge_progress = 0.0
                robot.plan.pop(0)
                robot.position = robot.irm.nodes[nxt].position
                self._visit(robot)
                if remaining <= 0:
                    break
            else:
                robot.edge_progress += remaining
                a = robot.irm.nodes[robot.at_node].position
                b = robot.irm.nodes[nxt].position
                frac = robot.edge_progress / edge_len
                robot.position = tuple(pa + (pb - pa) * frac for pa, pb in zip(a, b))
                break

    # ------------------------------------------------------------ transport

    def _publish_traffic(self, robot: _Robot) -> None:
        def pump(specs, endpoint, credits, source):
            for spec in specs:
                if spec.rate > 0:
                    credits[spec.topic.topic_id] = (
                        credits.get(spec.topic.topic_id, 0.0) + spec.rate * self.tick
                    )
                    while credits[spec.topic.topic_id] >= spec.message_bytes:
                        endpoint.publish(spec.topic.topic_id, bytes(spec.message_bytes), self.now)
                        credits[spec.topic.topic_id] -= spec.message_bytes
                for idx, (t_burst, nbytes) in enumerate(spec.bursts):
                    key = (source, spec.topic.topic_id, idx)
                    if t_burst <= self.now and key not in robot.bursts_sent:
                        endpoint.publish(spec.topic.topic_id, bytes(nbytes), self.now)
                        robot.bursts_sent.add(key)

        pump(self.scenario.traffic.get(robot.config.id, []), robot.endpoint,
             robot.credits, robot.config.id)
        base_specs = [
            spec
            for spec in self.scenario.traffic.get(self.base_id, [])
            if spec.to == robot.config.id
        ]
        pump(base_specs, robot.base_endpoint, robot.base_credits, self.base_id)

    def _link_budget(self, budgets: dict, a: str, b: str, snr: float,
                     bw: float) -> LinkBudget:
        key = (a, b) if a <= b else (b, a)
        if key not in budgets:
            capacity = self.channel.efficiency * shannon_capacity(bw, snr) / 8.0 * self.tick
            budgets[key] = LinkBudget(capacity)
        return budgets[key]

    def _bandwidth_of(self, radio_id: str) -> float:
        if radio_id in self.static_radios:
            return self.static_radios[radio_id][0].bandwidth
        for robot in self.robots:
            if robot.config.id == radio_id:
                return robot.config.radio.bandwidth
        raise KeyError(radio_id)

    def _send_over(self, route, datagram: Datagram, budgets: dict) -> bool:
        for a, b in zip(route.path, route.path[1:]):
            snr = self.topology.link_snr(a, b)
            if snr is None:
                return False
            bw = min(self._bandwidth_of(a), self._bandwidth_of(b))
            budget = self._link_budget(budgets, a, b, snr, bw)
            if not channel_deliver(datagram, snr, budget, self.rng_channel, self.channel):
                return False
        return True

    def _exchange(self, robot: _Robot, budgets: dict) -> tuple[int, int]:
        """Move one robot<->base flow for a tick; returns delivered payload bytes."""
        route = widest_path_route(self.topology, robot.config.id, self.base_id, now=self.now)
        to_base = 0
        from_base = 0

        up = robot.endpoint.service_transmit(self.now)
        down = robot.base_endpoint.service_transmit(self.now)
        if route is None:
            return 0, 0  # emitted datagrams are lost in the void

        reverse = replace(route, path=tuple(reversed(route.path)))
        for datagram in up:
            if not self._send_over(route, datagram, budgets):
                continue
            messages, acks = robot.base_endpoint.handle_datagram(datagram.encode(), self.now)
            to_base += sum(len(m.payload) for m in messages)
            for ack in acks:
                if self._send_over(reverse, ack, budgets):
                    robot.endpoint.handle_datagram(ack.encode(), self.now)
        for datagram in down:
            if not self._send_over(reverse, datagram, budgets):
                continue
            messages, acks = robot.endpoint.handle_datagram(datagram.encode(), self.now)
            from_base += sum(len(m.payload) for m in messages)
            for ack in acks:
                if self._send_over(route, ack, budgets):
                    robot.base_endpoint.handle_datagram(ack.encode(), self.now)
        return to_base, from_base

    # ------------------------------------------------------------ behaviors

    def _step_behaviors(self, robot: _Robot) -> None:
        aggregate = robot.endpoint.aggregate_queued_bytes()
        prev = robot.comms_state
        robot.comms_state, comms_directive = bhv.return_to_comms_step(
            prev,
            robot.at_node,
            aggregate,
            robot.irm,
            self.scenario.base_node,
            self.scenario.return_to_comms,
            self.now,
        )
        if robot.comms_state.mode is not prev.mode:
            self._record(
                {
                    "event": "mode",
                    "t": self.now,
                    "robot": robot.config.id,
                    "from": prev.mode.value,
                    "to": robot.comms_state.mode.value,
                    "target": robot.comms_state.target_node,
                }
            )

        before_commit = robot.drop_state.committed_site
        action = bhv.drop_scheduler_step(
            robot.drop_state,
            self.topology,
            robot.irm,
            self.scenario.drop_scheduler,
            self.rng_jam,
            base_node=self.base_id,
        )
        if robot.drop_state.committed_site and robot.drop_state.committed_site != before_commit:
            self._register_intent(robot, robot.drop_state.committed_site)
        if action.kind is bhv.DropActionKind.DROP:
            self._deploy_radio(robot, action.site)
        elif action.kind is bhv.DropActionKind.RETRY:
            self._record(
                {"event": "drop_jammed", "t": self.now, "robot": robot.config.id,
                 "site": action.site}
            )

        if action.kind in (bhv.DropActionKind.BACKTRACK, bhv.DropActionKind.RETRY):
            if robot.goal != action.site:
                robot.goal = action.site
                robot.plan = []
        elif comms_directive is not None:
            if robot.goal != comms_directive:
                robot.goal = comms_directive
                robot.plan = []
        else:
            goal = robot.goal
            still_frontier = (
                goal is not None
                and goal in robot.irm.nodes
                and robot.irm.nodes[goal].kind is NodeKind.FRONTIER
            )
            if not still_frontier:
                robot.goal = self._nearest_frontier(robot)
                robot.plan = []

    def _register_intent(self, robot: _Robot, site: str) -> None:
        intent_id = f"drop:{robot.config.id}:{robot.intent_count}"
        robot.intent_count += 1
        robot.pending_intent = intent_id
        position = robot.irm.nodes[site].position
        robot.irm.add_node(
            IrmNode(intent_id, NodeKind.DROP_INTENT, position, 0.0, self.now)
        )
        robot.irm.add_edge(site, intent_id, 0.0)
        self._record(
            {"event": "drop_committed", "t": self.now, "robot": robot.config.id, "site": site}
        )

    def _deploy_radio(self, robot: _Robot, site: str) -> None:
        intent_id = getattr(robot, "pending_intent", None)
        position = robot.irm.nodes[site].position
        if intent_id is None:
            intent_id = f"drop:{robot.config.id}:{robot.intent_count}"
            robot.intent_count += 1
            robot.irm.add_node(
                IrmNode(intent_id, NodeKind.DROP_INTENT, position, 0.0, self.now)
            )
            robot.irm.add_edge(site, intent_id, 0.0)
        snr = self._bottleneck(robot.config.id)
        robot.irm.nodes[intent_id] = replace(
            robot.irm.nodes[intent_id],
            kind=NodeKind.DROPPED_RADIO,
            snr=snr,
            timestamp=self.now,
        )
        robot.pending_intent = None
        self.static_radios[intent_id] = (self.scenario.drop_radio, position)
        self.topology.add_node(intent_id)
        self.deployed += 1
        self._record(
            {
                "event": "radio_deployed",
                "t": self.now,
                "robot": robot.config.id,
                "site": site,
                "radio_id": intent_id,
            }
        )

    def _merge_irms(self) -> None:
        """Share roadmaps across every strongly connected robot/base pair."""
        strong: list[tuple[str, str]] = []
        participants = {self.base_id: None}
        for robot in self.robots:
            participants[robot.config.id] = robot
        ids = sorted(participants)
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                route = widest_path_route(self.topology, ids[i], ids[j], now=self.now)
                if route is not None and route.bottleneck >= irm_mod.STRONG_SNR_DB:
                    strong.append((ids[i], ids[j]))
        for a, b in strong:
            irm_a = self.base_irm if participants[a] is None else participants[a].irm
            irm_b = self.base_irm if participants[b] is None else participants[b].irm
            if irm_a.nodes == irm_b.nodes and irm_a.edges == irm_b.edges:
                continue
            merged = irm_mod.merge(irm_a, irm_b)
            # copies: views are mutated in place later, so they must not alias
            if participants[a] is None:
                self.base_irm = merged.copy()
            else:
                participants[a].irm = merged.copy()
            if participants[b] is None:
                self.base_irm = merged.copy()
            else:
                participants[b].irm = merged.copy()

    def _refresh_irms(self) -> None:
        specs, bottlenecks = self._backbone()
        rx_noise = self.scenario.base_radio.noise_level
        self.base_irm = irm_mod.refresh_checkpoints(
            self.base_irm, specs, bottlenecks, self.model, rx_noise, self.now
        )
        self.base_irm = irm_mod.expire_drop_intents(self.base_irm, self.now)
        for robot in self.robots:
            robot.irm = irm_mod.refresh_checkpoints(
                robot.irm, specs, bottlenecks, self.model, rx_noise, self.now
            )
            robot.irm = irm_mod.expire_drop_intents(robot.irm, self.now)

    # ------------------------------------------------------------------ run

    def run(self) -> SimResult:
        scenario = self.scenario
        n_ticks = int(scenario.duration / scenario.tick + 1e-9)
        for i in range(n_ticks):
            self.now = (i + 1) * scenario.tick
            for robot in self.robots:
                self._move(robot)
            self._update_topology()
            if self.now >= self._next_refresh:
                self._refresh_irms()
                self._next_refresh += scenario.refresh_interval
            budgets: dict = {}
            to_base = 0
            from_base = 0
            for robot in self.robots:
                self._publish_traffic(robot)
            for robot in self.robots:
                up, down = self._exchange(robot, budgets)
                to_base += up
                from_base += down
            if to_base or from_base:
                self._record(
                    {"event": "delivered", "t": self.now, "to_base_bytes": to_base,
                     "from_base_bytes": from_base}
                )
            for robot in self.robots:
                self._step_behaviors(robot)
                # merge after every robot's step so drop intents reach
                # connected peers before they make their own drop decision
                self._merge_irms()
            for robot in self.robots:
                self._telemetry(robot)
            if self.now >= self._next_snapshot:
                self._snapshot()
                self._next_snapshot += scenario.snapshot_interval
        self._record({"event": "run_complete", "t": n_ticks * scenario.tick, "ticks": n_ticks})
        metrics = compute_metrics(self.events, scenario)
        return SimResult(metrics=metrics, events=self.events, snapshots=self.snapshots)

    def _telemetry(self, robot: _Robot) -> None:
        bottleneck = self._bottleneck(robot.config.id)
        stats = robot.endpoint.buffer_stats(self.now)
        queued = {str(s.topic_id): s.queued_bytes for s in stats if s.topic_id is not None}
        aggregate = stats[-1].queued_bytes
        self._record(
            {
                "event": "telemetry",
                "t": self.now,
                "robot": robot.config.id,
                "node": robot.at_node,
                "buffer_bytes": aggregate,
                "queued_by_topic": queued,
                "connected": bottleneck > 0.0,
                "bottleneck_db": bottleneck,
                "graph_dist_m": self.seed_distances.get(robot.seed_node, 0.0),
            }
        )

    def _snapshot(self) -> None:
        for (a, b) in sorted(self.topology.links):
            snr, ts = self.topology.links[(a, b)]
            self.snapshots.append({"t": self.now, "i": a, "j": b, "snr_db": snr, "link_t": ts})


def run(scenario: Scenario) -> SimResult:
    """Run a scenario to completion; deterministic for a fixed seed."""
    return _Simulation(scenario).run()


# -------------------------------------------------------------------- metrics


def compute_metrics(event_log: list[dict], scenario: Scenario) -> MetricsReport:
    """Derive the mission metrics from a complete event log.

    max delay: the longest stretch in which some robot's aggregate reliable
    buffer kept growing with no drain. effective comms range: farthest
    graph distance from base observed while a route existed. up time: time
    spent connected with the buffer under the resume threshold.
    """
    if not event_log or event_log[-1].get("event") != "run_complete":
        raise TruncatedLogError("event log has no run-complete record")
    duration = event_log[-1]["t"]

    by_robot: dict[str, list[dict]] = {}
    deliveries: dict[float, tuple[int, int]] = {}
    deployed = 0
    for entry in event_log:
        kind = entry.get("event")
        if kind == "telemetry":
            by_robot.setdefault(entry["robot"], []).append(entry)
        elif kind == "delivered":
            deliveries[entry["t"]] = (entry["to_base_bytes"], entry["from_base_bytes"])
        elif kind == "radio_deployed":
            deployed += 1

    max_delay = 0.0
    effective_range = 0.0
    up_time: dict[str, float] = {}
    buffer_series: list[tuple[float, str, int, int]] = []
    lower = scenario.return_to_comms.lower_bytes
    tick = scenario.tick

    for robot, rows in sorted(by_robot.items()):
        up_time[robot] = 0.0
        streak_start: float | None = None
        streak_grew = False
        prev_bytes = 0
        prev_t = 0.0
        for row in rows:
            t, size = row["t"], row["buffer_bytes"]
            for topic, queued in sorted(row.get("queued_by_topic", {}).items()):
                buffer_series.append((t, robot, int(topic), queued))
            if row["connected"]:
                effective_range = max(effective_range, row["graph_dist_m"])
                if size < lower:
                    up_time[robot] += tick
            blocked = size > 0 and size >= prev_bytes
            if blocked:
                if streak_start is None:
                    streak_start = prev_t
                if size > prev_bytes:
                    streak_grew = True
            else:
                if streak_start is not None and streak_grew:
                    max_delay = max(max_delay, prev_t - streak_start)
                streak_start = None
                streak_grew = False
            prev_bytes, prev_t = size, t
        if streak_start is not None and streak_grew:
            max_delay = max(max_delay, prev_t - streak_start)

    window = min(scenario.peak_rate_window, duration) if duration > 0 else 0.0
    peak_to = _peak_rate(deliveries, 0, duration, tick, window)
    peak_from = _peak_rate(deliveries, 1, duration, tick, window)
    best_up = max(up_time.values(), default=0.0)
    return MetricsReport(
        duration_s=duration,
        max_delay_s=max_delay,
        effective_comm_range_m=effective_range,
        up_time_s=best_up,
        up_time_pct=100.0 * best_up / duration if duration > 0 else 0.0,
        up_time_by_robot=up_time,
        peak_rate_to_base_bps=peak_to,
        peak_rate_from_base_bps=peak_from,
        deployed_radios=deployed,
        buffer_series=buffer_series,
    )


def _peak_rate(
    deliveries: dict[float, tuple[int, int]],
    index: int,
    duration: float,
    tick: float,
    window: float,
) -> float:
    if duration <= 0 or window <= 0 or not deliveries:
        return 0.0
    n_ticks = int(duration / tick + 1e-9)
    per_tick = [0] * (n_ticks + 1)
    for t, pair in deliveries.items():
        slot = int(t / tick + 0.5)
        if 0 <= slot <= n_ticks:
            per_tick[slot] += pair[index]
    span = max(1, int(window / tick + 1e-9))
    prefix = [0]
    for value in per_tick:
        prefix.append(prefix[-1] + value)
    best = 0
    for start in range(len(per_tick) - span + 1):
        best = max(best, prefix[start + span] - prefix[start])
    return best * 8.0 / (span * tick)


# ------------------------------------------------------------------- exports


def events_to_jsonl(events: list[dict]) -> str:
    return "\n".join(json.dumps(e, sort_keys=True) for e in events) + ("\n" if events else "")


def snapshots_to_jsonl(snapshots: list[dict]) -> str:
    return "\n".join(json.dumps(s, sort_keys=True) for s in snapshots) + (
        "\n" if snapshots else ""
    )


def buffer_series_to_csv(metrics: MetricsReport) -> str:
    lines = ["t,robot,topic,queued_bytes"]
    for t, robot, topic, queued in metrics.buffer_series:
        lines.append(f"{t:.3f},{robot},{topic},{queued}")
    return "\n".join(lines) + "\n"
