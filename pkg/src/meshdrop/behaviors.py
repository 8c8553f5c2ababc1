"""Comms-aware autonomy: relay-drop scheduling and the return-to-comms state machine.

Both behaviors are step functions over explicit per-robot state; robots share
only read-only roadmap snapshots, so instances can be stepped independently.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum

from . import irm as irm_mod
from .irm import Irm, NodeKind
from .mesh import MeshTopology, widest_path_route

log = logging.getLogger(__name__)

MAX_DROP_SLOTS = 6  # carrier capacity of the deployment hardware


@dataclass(frozen=True)
class DropSchedulerConfig:
    snr_floor: float = 20.0  # trigger threshold on bottleneck SNR to base
    slots_total: int = 6
    overlap_radius: float = 20.0  # meters; redundancy check, closed ball
    jam_probability: float = 0.0
    backtrack_limit: int = 10  # max history nodes considered before committing

    def __post_init__(self) -> None:
        if self.snr_floor <= 0:
            raise ValueError("snr_floor must be > 0")
        if not 0 <= self.slots_total <= MAX_DROP_SLOTS:
            raise ValueError(f"slots_total must be in [0, {MAX_DROP_SLOTS}]")
        if not 0 <= self.jam_probability < 1:
            raise ValueError("jam_probability must be in [0, 1)")


@dataclass(frozen=True)
class ReturnToCommsConfig:
    upper_bytes: int = 300_000  # buffer level that abandons exploration
    lower_bytes: int = 200_000  # buffer level that resumes it
    wait_timeout: float = 60.0  # seconds at a checkpoint before escalating

    def __post_init__(self) -> None:
        if not self.lower_bytes < self.upper_bytes:
            raise ValueError("lower_bytes must be < upper_bytes")
        if self.wait_timeout <= 0:
            raise ValueError("wait_timeout must be > 0")


class DropActionKind(Enum):
    NONE = "none"
    BACKTRACK = "backtrack"
    DROP = "drop"
    RETRY = "retry"


@dataclass(frozen=True)
class DropAction:
    kind: DropActionKind
    site: str | None = None


@dataclass
class RobotDropState:
    """Mutable per-robot scheduler state: where it has been and what it carries."""

    robot_id: str
    node: str
    path_history: list[str] = field(default_factory=list)
    slots_left: int = 0
    committed_site: str | None = None
    warned_no_slots: bool = False


class CommsMode(Enum):
    EXPLORING = "exploring"
    RETURNING_TO_COMMS = "returning_to_comms"
    WAITING_AT_CHECKPOINT = "waiting_at_checkpoint"
    ESCALATING_CLOSER = "escalating_closer"


@dataclass(frozen=True)
class RobotCommsState:
    mode: CommsMode = CommsMode.EXPLORING
    target_node: str | None = None
    wait_since: float | None = None


def recorded_snr(irm: Irm, node_id: str) -> float:
    """Best recorded/predicted SNR at a node's position (checkpoints and radios)."""
    node = irm.nodes[node_id]
    best = node.snr if node.kind in (NodeKind.COMMS_CHECKPOINT, NodeKind.DROPPED_RADIO) else 0.0
    for other in irm.nodes.values():
        if (
            other.kind in (NodeKind.COMMS_CHECKPOINT, NodeKind.DROPPED_RADIO)
            and other.position == node.position
        ):
            best = max(best, other.snr)
    return best


def should_skip_drop(candidate_site: str, irm: Irm, overlap_radius: float) -> bool:
    """True when an existing radio or drop intent already covers the candidate.

    The overlap test is a closed Euclidean ball: a radio exactly at the
    radius boundary still counts as redundant.
    """
    if candidate_site not in irm.nodes:
        raise ValueError(f"unknown node {candidate_site!r}")
    position = irm.nodes[candidate_site].position
    return bool(
        irm_mod.nodes_within(
            irm, position, overlap_radius, (NodeKind.DROPPED_RADIO, NodeKind.DROP_INTENT)
        )
    )


def _bottleneck_to_base(robot_node: str, topology: MeshTopology, base_node: str) -> float:
    if robot_node not in topology.nodes or base_node not in topology.nodes:
        return 0.0
    route = widest_path_route(topology, robot_node, base_node)
    return 0.0 if route is None else route.bottleneck


def _select_drop_site(robot: RobotDropState, irm: Irm, config: DropSchedulerConfig) -> str:
    """Pick the deployment site within the backtrack neighborhood.

    The neighborhood runs from the most recent history node with recorded
    SNR at or above the floor (bounded by the backtrack limit) up to the
    current node. Junctions (degree >= 3) win, then higher recorded SNR,
    then the smaller node id.
    """
    window = robot.path_history[-config.backtrack_limit :]
    candidates = [n for n in window if n in irm.nodes]
    if not candidates:
        raise ValueError(f"robot {robot.robot_id!r} has no usable path history")

    anchor = 0
    for idx in range(len(candidates) - 1, -1, -1):
        if recorded_snr(irm, candidates[idx]) >= config.snr_floor:
            anchor = idx
            break
    neighborhood = candidates[anchor:]

    # traversal degree only: zero-length edges are colocated annotations
    # (checkpoints, intents), not corridor branches
    degree = {
        n: sum(1 for _, length in irm.neighbors(n) if length > 0) for n in neighborhood
    }
    return min(
        neighborhood,
        key=lambda n: (degree[n] < 3, -recorded_snr(irm, n), n),
    )


def drop_scheduler_step(
    robot: RobotDropState,
    topology: MeshTopology,
    irm: Irm,
    config: DropSchedulerConfig,
    rng: random.Random,
    base_node: str,
) -> DropAction:
    """One scheduler decision for one robot.

    A drop sequence starts only while the bottleneck SNR to base is below
    the floor; once a site is committed the robot backtracks to it and
    deploys there even if SNR recovers on the way. A simulated jam consumes
    the unit and retries at the same site with the next one.
    """
    if robot.committed_site is None:
        # the mesh is keyed by radio id; a robot's radio carries its own id
        bottleneck = _bottleneck_to_base(robot.robot_id, topology, base_node)
        if bottleneck >= config.snr_floor:
            return DropAction(DropActionKind.NONE)
        if robot.slots_left <= 0:
            if not robot.warned_no_slots:
                log.warning("robot %s: drop triggered but no slots remain", robot.robot_id)
                robot.warned_no_slots = True
            return DropAction(DropActionKind.NONE)
        if not robot.path_history:
            raise ValueError(f"robot {robot.robot_id!r} triggered a drop with empty history")
        site = _select_drop_site(robot, irm, config)
        if should_skip_drop(site, irm, config.overlap_radius):
            log.debug("robot %s: drop at %s skipped (overlap)", robot.robot_id, site)
            return DropAction(DropActionKind.NONE)
        robot.committed_site = site
        if robot.node != site:
            return DropAction(DropActionKind.BACKTRACK, site)

    site = robot.committed_site
    if robot.node != site:
        return DropAction(DropActionKind.BACKTRACK, site)
    if robot.slots_left <= 0:
        log.warning("robot %s: slots exhausted at committed site %s", robot.robot_id, site)
        robot.committed_site = None
        return DropAction(DropActionKind.NONE)
    robot.slots_left -= 1
    if rng.random() < config.jam_probability:
        log.info("robot %s: drop at %s jammed, retrying", robot.robot_id, site)
        return DropAction(DropActionKind.RETRY, site)
    robot.committed_site = None
    return DropAction(DropActionKind.DROP, site)


def return_to_comms_step(
    state: RobotCommsState,
    robot_node: str,
    aggregate_buffer_bytes: int,
    irm: Irm,
    base_node: str,
    config: ReturnToCommsConfig,
    now: float,
) -> tuple[RobotCommsState, str | None]:
    """Advance the return-to-comms state machine one tick.

    Returns the new state and a motion directive: a node to move toward (or
    hold at), or None for nominal exploration. Dropping below the lower
    byte threshold resumes exploration immediately from any mode; a fresh
    trigger then requires crossing the upper threshold again.
    """
    if state.mode is CommsMode.EXPLORING:
        if aggregate_buffer_bytes <= config.upper_bytes:
            return state, None
        target = irm_mod.select_return_target(irm, robot_node)
        if target is None:
            reachable = irm_mod.graph_distances(irm, robot_node)
            if base_node in reachable:
                target = base_node
            else:
                log.error(
                    "robot at %s: buffer %d over limit but no strong checkpoint "
                    "and base unreachable",
                    robot_node,
                    aggregate_buffer_bytes,
                )
                return state, None
        return RobotCommsState(CommsMode.RETURNING_TO_COMMS, target), target

    if aggregate_buffer_bytes < config.lower_bytes:
        return RobotCommsState(CommsMode.EXPLORING), None

    if state.mode in (CommsMode.RETURNING_TO_COMMS, CommsMode.ESCALATING_CLOSER):
        if robot_node == state.target_node:
            return (
                RobotCommsState(CommsMode.WAITING_AT_CHECKPOINT, state.target_node, now),
                state.target_node,
            )
        return state, state.target_node

    # waiting at a checkpoint
    if now - state.wait_since > config.wait_timeout:
        nxt = None
        if state.target_node != base_node:
            nxt = irm_mod.next_closer_checkpoint(irm, state.target_node, base_node)
            if nxt is None:
                nxt = base_node
        if nxt is None or nxt == state.target_node:
            # already at the base; keep waiting with a fresh timer
            return replace(state, wait_since=now), state.target_node
        return RobotCommsState(CommsMode.ESCALATING_CLOSER, nxt), nxt
    return state, state.target_node
