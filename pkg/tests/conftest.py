"""Shared scenario builders for the simulator and acceptance suites."""

from meshdrop.irm import Irm, IrmNode, NodeKind
from meshdrop.sim import ChannelModel, RadioParams, RobotConfig, Scenario, TrafficSpec
from meshdrop.transport import DataClass, TopicConfig

# tx 30 dBm, rx noise -69 dB, default model: SNR(d) = 65 - 38.3*log10(d),
# so SNR hits 0 near 49.8 m and the 20 dB strong radius is about 15 m
RADIO = RadioParams(tx_power=30.0, noise_level=-69.0, bandwidth=1e6)


def corridor_irm(n_nodes=16, spacing=10.0, spurs=(4, 8, 12)) -> Irm:
    """Corridor of frontier nodes along x with side spurs forming junctions."""
    irm = Irm()
    for i in range(n_nodes):
        kind = NodeKind.BREADCRUMB if i == 0 else NodeKind.FRONTIER
        irm.add_node(IrmNode(f"c{i:02d}", kind, (i * spacing, 0.0, 0.0)))
        if i > 0:
            irm.add_edge(f"c{i - 1:02d}", f"c{i:02d}", spacing)
    for i in spurs:
        if i < n_nodes:
            irm.add_node(IrmNode(f"s{i:02d}", NodeKind.FRONTIER, (i * spacing, spacing, 0.0)))
            irm.add_edge(f"c{i:02d}", f"s{i:02d}", spacing)
    return irm


def key_topic(topic_id=1, rate=16_000.0, depth=32_000.0, max_payload=1024):
    return TopicConfig(topic_id, DataClass.KEY, rate, depth, max_payload)


def mc_topic(topic_id=2, rate=8_000.0, depth=16_000.0, max_payload=1024):
    return TopicConfig(topic_id, DataClass.MISSION_CRITICAL, rate, depth, max_payload)


def corridor_scenario(
    n_robots=3,
    slots=2,
    n_nodes=16,
    duration=180.0,
    tick=0.1,
    seed=42,
    key_rate=4000.0,
    outages=(),
) -> Scenario:
    irm = corridor_irm(n_nodes=n_nodes)
    robots = [
        RobotConfig(id=f"r{k + 1}", start="c00", speed=1.5, radio=RADIO, slots=slots)
        for k in range(n_robots)
    ]
    traffic = {
        robot.id: [
            TrafficSpec(topic=key_topic(), rate=key_rate, message_bytes=2000),
            TrafficSpec(topic=mc_topic(), rate=500.0, message_bytes=500),
        ]
        for robot in robots
    }
    traffic["base"] = [
        TrafficSpec(topic=key_topic(topic_id=10, rate=8000.0), rate=1000.0,
                    message_bytes=1000, to=robots[0].id)
    ]
    return Scenario(
        irm_seed_graph=irm,
        base_node="c00",
        base_radio=RADIO,
        drop_radio=RADIO,
        robots=robots,
        traffic=traffic,
        channel=ChannelModel(efficiency=0.5, loss_snr_lo=0.0, loss_snr_hi=10.0),
        duration=duration,
        tick=tick,
        seed=seed,
        outages=tuple(outages),
    )


def reference_scenario() -> Scenario:
    """The repo's committed reference run: scenarios/reference.json mirrors this."""
    from meshdrop.behaviors import DropSchedulerConfig

    scenario = corridor_scenario(
        n_robots=2, slots=2, n_nodes=10, duration=60.0, tick=0.1, seed=2024,
        outages=((20.0, 40.0),),
    )
    scenario.drop_scheduler = DropSchedulerConfig(jam_probability=0.3)
    return scenario


def parked_scenario(duration=30.0, tick=0.1, seed=7, rate=10_000.0, outages=()) -> Scenario:
    """Single robot on a two-node graph beside the base, no frontiers to chase."""
    irm = Irm()
    irm.add_node(IrmNode("b", NodeKind.BREADCRUMB, (0.0, 0.0, 0.0)))
    irm.add_node(IrmNode("p", NodeKind.BREADCRUMB, (5.0, 0.0, 0.0)))
    irm.add_edge("b", "p", 5.0)
    robot = RobotConfig(id="r1", start="p", speed=1.0, radio=RADIO, slots=0)
    traffic = {
        "r1": [TrafficSpec(topic=key_topic(rate=40_000.0, depth=80_000.0), rate=rate,
                           message_bytes=1000)]
    }
    return Scenario(
        irm_seed_graph=irm,
        base_node="b",
        base_radio=RADIO,
        drop_radio=RADIO,
        robots=[robot],
        traffic=traffic,
        duration=duration,
        tick=tick,
        seed=seed,
        outages=tuple(outages),
    )
