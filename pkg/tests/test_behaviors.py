import random

import pytest

from meshdrop.behaviors import (
    CommsMode,
    DropAction,
    DropActionKind,
    DropSchedulerConfig,
    ReturnToCommsConfig,
    RobotCommsState,
    RobotDropState,
    drop_scheduler_step,
    return_to_comms_step,
    should_skip_drop,
)
from meshdrop.irm import Irm, IrmNode, NodeKind
from meshdrop.mesh import MeshTopology


def node(nid, kind=NodeKind.BREADCRUMB, pos=(0.0, 0.0, 0.0), snr=0.0, ts=0.0):
    return IrmNode(id=nid, kind=kind, position=pos, snr=snr, timestamp=ts)


def corridor_irm(snrs, spacing=10.0, junction_at=None):
    """Chain n0..n(k-1) of checkpoints with given SNRs; optionally a side spur."""
    irm = Irm()
    ids = []
    for i, snr in enumerate(snrs):
        nid = f"n{i}"
        irm.add_node(node(nid, NodeKind.COMMS_CHECKPOINT, (i * spacing, 0.0, 0.0), snr))
        if ids:
            irm.add_edge(ids[-1], nid, spacing)
        ids.append(nid)
    if junction_at is not None:
        spur = f"spur{junction_at}"
        irm.add_node(node(spur, NodeKind.BREADCRUMB, (junction_at * spacing, spacing, 0.0)))
        irm.add_edge(f"n{junction_at}", spur, spacing)
    return irm, ids


def linked(*links):
    top = MeshTopology()
    for i, j, snr in links:
        top.set_link(i, j, snr, 0.0)
    return top


class TestDropScheduler:
    def config(self, **kwargs):
        defaults = dict(snr_floor=20.0, slots_total=2, overlap_radius=20.0, jam_probability=0.0)
        defaults.update(kwargs)
        return DropSchedulerConfig(**defaults)

    def robot(self, node="n3", history=("n0", "n1", "n2", "n3"), slots=2):
        return RobotDropState(robot_id="r1", node=node, path_history=list(history),
                              slots_left=slots)

    def test_healthy_bottleneck_no_action(self):
        irm, _ = corridor_irm([30.0, 28.0, 25.0, 25.0])
        top = linked(("r1", "base", 25.0))
        action = drop_scheduler_step(self.robot(), top, irm, self.config(),
                                     random.Random(0), base_node="base")
        assert action == DropAction(DropActionKind.NONE)

    def test_triggered_commits_junction_site(self):
        # n2 is a degree-3 junction with recorded 22 dB; trigger at n3
        irm, _ = corridor_irm([30.0, 25.0, 22.0, 12.0], junction_at=2)
        top = linked(("r1", "base", 12.0))
        robot = self.robot()
        action = drop_scheduler_step(robot, top, irm, self.config(),
                                     random.Random(0), base_node="base")
        assert action == DropAction(DropActionKind.BACKTRACK, "n2")
        assert robot.committed_site == "n2"

    def test_drop_once_at_committed_site(self):
        irm, _ = corridor_irm([30.0, 25.0, 22.0, 12.0], junction_at=2)
        top = linked(("r1", "base", 12.0))
        robot = self.robot()
        drop_scheduler_step(robot, top, irm, self.config(), random.Random(0), base_node="base")
        robot.node = "n2"  # backtracked
        action = drop_scheduler_step(robot, top, irm, self.config(),
                                     random.Random(0), base_node="base")
        assert action == DropAction(DropActionKind.DROP, "n2")
        assert robot.slots_left == 1
        assert robot.committed_site is None

    def test_trigger_at_site_drops_without_backtrack(self):
        irm, _ = corridor_irm([30.0, 25.0, 12.0])
        top = linked(("r1", "base", 12.0))
        robot = self.robot(node="n1", history=["n0", "n1"])
        action = drop_scheduler_step(robot, top, irm, self.config(),
                                     random.Random(0), base_node="base")
        assert action == DropAction(DropActionKind.DROP, "n1")

    def test_jam_consumes_slot_and_retries(self):
        irm, _ = corridor_irm([30.0, 25.0, 12.0])
        top = linked(("r1", "base", 12.0))
        robot = self.robot(node="n1", history=["n0", "n1"], slots=2)
        rng = random.Random(0)  # first random() is 0.844 -> jam with p=0.9
        action = drop_scheduler_step(robot, top, irm, self.config(jam_probability=0.9),
                                     rng, base_node="base")
        assert action == DropAction(DropActionKind.RETRY, "n1")
        assert robot.slots_left == 1
        assert robot.committed_site == "n1"
        # retry succeeds with the remaining unit (next draw 0.758 < 0.9 jams again... use p=0.7)
        action = drop_scheduler_step(robot, top, irm, self.config(jam_probability=0.0),
                                     rng, base_node="base")
        assert action == DropAction(DropActionKind.DROP, "n1")
        assert robot.slots_left == 0

    def test_slots_exhausted_logs_and_idles(self, caplog):
        irm, _ = corridor_irm([30.0, 25.0, 12.0])
        top = linked(("r1", "base", 12.0))
        robot = self.robot(node="n1", history=["n0", "n1"], slots=0)
        with caplog.at_level("WARNING"):
            action = drop_scheduler_step(robot, top, irm, self.config(),
                                         random.Random(0), base_node="base")
        assert action == DropAction(DropActionKind.NONE)
        assert "no slots" in caplog.text

    def test_empty_history_rejected(self):
        irm, _ = corridor_irm([30.0])
        robot = RobotDropState(robot_id="r1", node="n0", path_history=[], slots_left=2)
        with pytest.raises(ValueError):
            drop_scheduler_step(robot, MeshTopology(), irm, self.config(),
                                random.Random(0), base_node="base")

    def test_overlapping_intent_skips(self):
        irm, _ = corridor_irm([30.0, 25.0, 12.0])
        irm.add_node(node("intent", NodeKind.DROP_INTENT, (5.0, 0.0, 0.0), ts=0.0))
        top = linked(("r1", "base", 12.0))
        robot = self.robot(node="n1", history=["n0", "n1"])
        action = drop_scheduler_step(robot, top, irm, self.config(),
                                     random.Random(0), base_node="base")
        assert action == DropAction(DropActionKind.NONE)
        assert robot.committed_site is None

    def test_never_drops_beyond_slots(self):
        irm, _ = corridor_irm([30.0, 25.0, 12.0])
        top = linked(("r1", "base", 12.0))
        robot = self.robot(node="n1", history=["n0", "n1"], slots=2)
        rng = random.Random(1)
        drops = 0
        for _ in range(20):
            action = drop_scheduler_step(robot, top, irm,
                                         self.config(jam_probability=0.3), rng,
                                         base_node="base")
            if action.kind is DropActionKind.DROP:
                drops += 1
        assert drops <= 2

    def test_no_trigger_means_no_drop_ever(self):
        irm, _ = corridor_irm([30.0, 25.0, 24.0, 23.0])
        top = linked(("r1", "base", 21.0))
        robot = self.robot()
        for _ in range(10):
            action = drop_scheduler_step(robot, top, irm, self.config(),
                                         random.Random(0), base_node="base")
            assert action.kind is DropActionKind.NONE


class TestShouldSkipDrop:
    def irm_with_candidate(self):
        irm = Irm()
        irm.add_node(node("site", pos=(0.0, 0.0, 0.0)))
        return irm

    def test_nearby_intent_skips(self):
        irm = self.irm_with_candidate()
        irm.add_node(node("i", NodeKind.DROP_INTENT, (5.0, 0.0, 0.0)))
        assert should_skip_drop("site", irm, 20.0) is True

    def test_no_radios_proceeds(self):
        assert should_skip_drop("site", self.irm_with_candidate(), 20.0) is False

    def test_boundary_is_closed(self):
        irm = self.irm_with_candidate()
        irm.add_node(node("d", NodeKind.DROPPED_RADIO, (20.0, 0.0, 0.0), snr=30.0))
        assert should_skip_drop("site", irm, 20.0) is True

    def test_unknown_candidate_rejected(self):
        with pytest.raises(ValueError):
            should_skip_drop("ghost", Irm(), 20.0)


class TestReturnToComms:
    def setup_method(self):
        self.irm, _ = corridor_irm([0.0, 25.0, 22.0, 0.0])
        # base=n0, strong checkpoints at n1 (10 m) and n2 (20 m), robot at n3
        self.config = ReturnToCommsConfig()

    def step(self, state, bytes_, now, robot_node="n3"):
        return return_to_comms_step(state, robot_node, bytes_, self.irm, "n0",
                                    self.config, now)

    def test_trigger_over_upper_bound(self):
        state, directive = self.step(RobotCommsState(), 310_000, now=0.0)
        assert state.mode is CommsMode.RETURNING_TO_COMMS
        assert state.target_node == "n2"  # nearest strong checkpoint to n3
        assert directive == "n2"

    def test_no_trigger_at_or_below_upper(self):
        state, directive = self.step(RobotCommsState(), 300_000, now=0.0)
        assert state.mode is CommsMode.EXPLORING
        assert directive is None

    def test_drop_below_lower_resumes_exploring(self):
        returning = RobotCommsState(CommsMode.RETURNING_TO_COMMS, "n2")
        state, directive = self.step(returning, 150_000, now=5.0)
        assert state.mode is CommsMode.EXPLORING
        assert directive is None

    def test_between_thresholds_keeps_returning(self):
        returning = RobotCommsState(CommsMode.RETURNING_TO_COMMS, "n2")
        state, directive = self.step(returning, 250_000, now=5.0)
        assert state is returning
        assert directive == "n2"

    def test_arrival_starts_waiting(self):
        returning = RobotCommsState(CommsMode.RETURNING_TO_COMMS, "n2")
        state, _ = self.step(returning, 250_000, now=7.0, robot_node="n2")
        assert state.mode is CommsMode.WAITING_AT_CHECKPOINT
        assert state.wait_since == 7.0

    def test_wait_timeout_escalates_closer(self):
        waiting = RobotCommsState(CommsMode.WAITING_AT_CHECKPOINT, "n2", wait_since=0.0)
        state, directive = self.step(waiting, 250_000, now=60.5, robot_node="n2")
        assert state.mode is CommsMode.ESCALATING_CLOSER
        assert state.target_node == "n1"  # strong checkpoint closer to base
        assert directive == "n1"

    def test_wait_under_timeout_holds(self):
        waiting = RobotCommsState(CommsMode.WAITING_AT_CHECKPOINT, "n2", wait_since=0.0)
        state, directive = self.step(waiting, 250_000, now=59.9, robot_node="n2")
        assert state is waiting
        assert directive == "n2"

    def test_escalation_falls_back_to_base(self):
        waiting = RobotCommsState(CommsMode.WAITING_AT_CHECKPOINT, "n1", wait_since=0.0)
        state, _ = self.step(waiting, 250_000, now=61.0, robot_node="n1")
        assert state.mode is CommsMode.ESCALATING_CLOSER
        assert state.target_node == "n0"

    def test_no_strong_checkpoint_targets_base(self):
        irm, _ = corridor_irm([0.0, 5.0, 0.0])
        state, directive = return_to_comms_step(
            RobotCommsState(), "n2", 350_000, irm, "n0", self.config, 0.0
        )
        assert state.mode is CommsMode.RETURNING_TO_COMMS
        assert state.target_node == "n0"

    def test_unreachable_base_logs_error(self, caplog):
        irm = Irm()
        irm.add_node(node("island"))
        irm.add_node(node("n0"))
        with caplog.at_level("ERROR"):
            state, directive = return_to_comms_step(
                RobotCommsState(), "island", 350_000, irm, "n0", self.config, 0.0
            )
        assert state.mode is CommsMode.EXPLORING
        assert directive is None
        assert "unreachable" in caplog.text

    def test_transition_graph_closed(self):
        """Random byte trajectories only ever take the documented transitions."""
        allowed = {
            CommsMode.EXPLORING: {CommsMode.EXPLORING, CommsMode.RETURNING_TO_COMMS},
            CommsMode.RETURNING_TO_COMMS: {
                CommsMode.RETURNING_TO_COMMS,
                CommsMode.WAITING_AT_CHECKPOINT,
                CommsMode.EXPLORING,
            },
            CommsMode.WAITING_AT_CHECKPOINT: {
                CommsMode.WAITING_AT_CHECKPOINT,
                CommsMode.EXPLORING,
                CommsMode.ESCALATING_CLOSER,
            },
            CommsMode.ESCALATING_CLOSER: {
                CommsMode.ESCALATING_CLOSER,
                CommsMode.WAITING_AT_CHECKPOINT,
                CommsMode.EXPLORING,
            },
        }
        rng = random.Random(17)
        state = RobotCommsState()
        robot_node = "n3"
        bytes_ = 0
        upward_crossings = 0
        triggers = 0
        above = False
        for step in range(500):
            bytes_ = max(0, bytes_ + rng.randrange(-60_000, 70_000))
            if bytes_ > self.config.upper_bytes and not above:
                upward_crossings += 1
                above = True
            elif bytes_ < self.config.upper_bytes:
                above = False
            prev = state
            state, directive = self.step(state, bytes_, now=float(step), robot_node=robot_node)
            assert state.mode in allowed[prev.mode]
            if prev.mode is CommsMode.EXPLORING and state.mode is CommsMode.RETURNING_TO_COMMS:
                triggers += 1
            # crude motion: hop to the directive target half the time
            if directive and rng.random() < 0.5:
                robot_node = directive
        assert triggers <= upward_crossings
