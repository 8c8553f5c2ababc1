"""Optional broker mode: drive an endpoint over real UDP sockets.

The transfer protocol is channel-agnostic; this thin driver pumps encoded
datagrams between an :class:`~meshdrop.transport.Endpoint` and a UDP peer,
which is enough for loopback demos and bench tests against real sockets.
"""

from __future__ import annotations

import socket

from .transport import Endpoint

MAX_DATAGRAM = 65_507  # UDP payload ceiling


class UdpDriver:
    """Non-blocking UDP pump for one endpoint talking to one peer."""

    def __init__(self, endpoint: Endpoint, bind: tuple[str, int] = ("127.0.0.1", 0)):
        self.endpoint = endpoint
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind(bind)
        self.sock.setblocking(False)
        self.peer: tuple[str, int] | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.sock.getsockname()

    def connect(self, peer: tuple[str, int]) -> None:
        self.peer = peer

    def pump(self, now: float) -> list:
        """One service cycle: transmit due datagrams, drain the socket.

        Returns the messages that became deliverable this cycle. ACKs the
        endpoint produces are sent straight back to the peer.
        """
        if self.peer is None:
            raise RuntimeError("driver has no peer; call connect() first")
        for datagram in self.endpoint.service_transmit(now):
            self.sock.sendto(datagram.encode(), self.peer)
        delivered = []
        while True:
            try:
                data, _ = self.sock.recvfrom(MAX_DATAGRAM)
            except BlockingIOError:
                break
            messages, acks = self.endpoint.handle_datagram(data, now)
            delivered.extend(messages)
            for ack in acks:
                self.sock.sendto(ack.encode(), self.peer)
        return delivered

    def close(self) -> None:
        self.sock.close()
