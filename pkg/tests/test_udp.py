import time

from meshdrop.transport import DataClass, Endpoint, TopicConfig
from meshdrop.udp import UdpDriver


def test_loopback_reliable_transfer():
    topics = [TopicConfig(1, DataClass.KEY, 1e6, 1e6, 512)]
    sender = UdpDriver(Endpoint(topics))
    receiver = UdpDriver(Endpoint(topics))
    sender.connect(receiver.address)
    receiver.connect(sender.address)
    try:
        payloads = [bytes([i]) * (200 + i) for i in range(10)]
        for payload in payloads:
            sender.endpoint.publish(1, payload, now=0.0)

        received = []
        deadline = time.time() + 5.0
        now = 0.0
        while sender.endpoint.aggregate_queued_bytes() > 0 and time.time() < deadline:
            now += 0.05
            sender.pump(now)
            received.extend(receiver.pump(now))
            time.sleep(0.002)

        assert sender.endpoint.aggregate_queued_bytes() == 0
        assert [m.payload for m in received] == payloads
    finally:
        sender.close()
        receiver.close()
