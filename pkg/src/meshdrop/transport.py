"""Reliable prioritized data transfer over lossy datagram channels.

An :class:`Endpoint` keeps per-topic outbound queues with selective-repeat
retransmission, token-bucket rate limiting, chunking/reassembly, receive-side
re-ordering for ordered topics, and buffer statistics for the layers above.

Endpoints are single logical actors: calls into one endpoint must be
serialized by the caller; distinct endpoints are independent.
"""

from __future__ import annotations

import logging
import math
import struct
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

log = logging.getLogger(__name__)

MAGIC = b"\xac\x0d"
VERSION = 1
HEADER = struct.Struct(">2sBBHIHHH")  # magic, version, flags, topic, seq, chunk, count, len
HEADER_SIZE = HEADER.size

FLAG_ACK = 0x01  # bit0: 1 = ACK, 0 = DATA
FLAG_RELIABLE = 0x02  # bit1: chunk belongs to a reliable topic

DEFAULT_RETRANSMIT_TIMEOUT = 1.0  # seconds; fixed, no RTT estimation
DEFAULT_INFLIGHT_WINDOW = 64  # unACKed chunks per topic
DEFAULT_RATE_SMOOTHING = 0.2  # EMA factor per second for the measured rate
DEFAULT_TS_BUDGET_FRACTION = 0.05  # share of aggregate reliable rate reserved for time-sensitive


class MalformedDatagramError(ValueError):
    """Datagram bytes do not parse (bad magic, short header, length mismatch)."""


class VersionMismatchError(ValueError):
    """Datagram carries an unsupported protocol version."""


class UnknownTopicError(KeyError):
    """Operation references a topic id the endpoint is not configured for."""


class DataClass(Enum):
    KEY = "key"  # reliable, delivered in publish order
    MISSION_CRITICAL = "mission_critical"  # reliable, delivered as soon as complete
    TIME_SENSITIVE = "time_sensitive"  # best effort, latest value only

    @property
    def reliable(self) -> bool:
        return self is not DataClass.TIME_SENSITIVE


_CLASS_PRIORITY = {DataClass.MISSION_CRITICAL: 0, DataClass.KEY: 1, DataClass.TIME_SENSITIVE: 2}


@dataclass(frozen=True)
class TopicConfig:
    topic_id: int
    data_class: DataClass
    token_rate: float  # bytes/second granted to this topic
    bucket_depth: float  # bytes; burst ceiling
    max_payload: int  # bytes per datagram, header included
    compression_ratio: float = 1.0

    def __post_init__(self) -> None:
        if not 0 <= self.topic_id <= 0xFFFF:
            raise ValueError(f"topic_id must fit 16 bits, got {self.topic_id}")
        if self.data_class.reliable and self.token_rate <= 0:
            raise ValueError("reliable topics need token_rate > 0")
        if self.token_rate < 0:
            raise ValueError("token_rate must be >= 0")
        if self.max_payload <= HEADER_SIZE:
            raise ValueError(f"max_payload must exceed the {HEADER_SIZE}-byte header")
        if self.bucket_depth < self.max_payload:
            raise ValueError("bucket_depth must be >= max_payload")
        if not 0 < self.compression_ratio <= 1:
            raise ValueError("compression_ratio must be in (0, 1]")

    @property
    def chunk_capacity(self) -> int:
        return self.max_payload - HEADER_SIZE


@dataclass(frozen=True)
class Message:
    topic_id: int
    seq: int
    payload: bytes
    created_at: float


@dataclass(frozen=True)
class Datagram:
    """Wire unit. All multi-byte header fields are big-endian."""

    topic_id: int
    msg_seq: int
    chunk_index: int
    chunk_count: int
    payload: bytes = b""
    ack: bool = False
    reliable: bool = True

    def __post_init__(self) -> None:
        if not self.chunk_index < self.chunk_count:
            raise ValueError("chunk_index must be < chunk_count")
        if self.ack and self.payload:
            raise ValueError("ACK datagrams carry no payload")

    @property
    def wire_size(self) -> int:
        return HEADER_SIZE + len(self.payload)

    def encode(self) -> bytes:
        flags = (FLAG_ACK if self.ack else 0) | (FLAG_RELIABLE if self.reliable else 0)
        header = HEADER.pack(
            MAGIC,
            VERSION,
            flags,
            self.topic_id,
            self.msg_seq,
            self.chunk_index,
            self.chunk_count,
            len(self.payload),
        )
        return header + self.payload

    @classmethod
    def decode(cls, data: bytes) -> "Datagram":
        if len(data) < HEADER_SIZE:
            raise MalformedDatagramError(f"datagram too short ({len(data)} bytes)")
        magic, version, flags, topic_id, msg_seq, chunk_index, chunk_count, payload_len = (
            HEADER.unpack_from(data)
        )
        if magic != MAGIC:
            raise MalformedDatagramError(f"bad magic {magic!r}")
        if version != VERSION:
            raise VersionMismatchError(f"unsupported version {version}")
        payload = data[HEADER_SIZE:]
        if payload_len != len(payload):
            raise MalformedDatagramError(
                f"payload length mismatch: header says {payload_len}, got {len(payload)}"
            )
        return cls(
            topic_id=topic_id,
            msg_seq=msg_seq,
            chunk_index=chunk_index,
            chunk_count=chunk_count,
            payload=payload,
            ack=bool(flags & FLAG_ACK),
            reliable=bool(flags & FLAG_RELIABLE),
        )


@dataclass
class BufferStats:
    """Per-topic transfer bookkeeping; topic_id None is the all-topics aggregate."""

    topic_id: int | None
    queued_bytes: int
    measured_rate: float  # bytes/second, exponentially smoothed over ACKed bytes
    estimated_transfer_time: float  # seconds; inf when no rate has been measured


@dataclass
class _Chunk:
    index: int
    payload: bytes
    sent: bool = False
    acked: bool = False
    last_send: float = 0.0


@dataclass
class _Outbound:
    seq: int
    size: int
    chunks: list[_Chunk]
    acked_chunks: int = 0

    @property
    def complete(self) -> bool:
        return self.acked_chunks == len(self.chunks)


@dataclass
class _Bucket:
    rate: float
    depth: float
    tokens: float = 0.0  # starts empty; credit accrues from first service

    def refill(self, dt: float) -> None:
        if dt > 0:
            self.tokens = min(self.depth, self.tokens + self.rate * dt)

    def try_spend(self, amount: float) -> bool:
        if self.tokens >= amount:
            self.tokens -= amount
            return True
        return False


class _TopicState:
    def __init__(self, config: TopicConfig, now: float):
        self.config = config
        self.bucket = _Bucket(rate=config.token_rate, depth=config.bucket_depth)
        # sender side
        self.next_seq = 0
        self.queue: deque[_Outbound] = deque()
        self.by_seq: dict[int, _Outbound] = {}
        self.queued_bytes = 0
        self.inflight = 0
        self.ts_slot: Message | None = None
        # receiver side
        self.partial: dict[int, dict[int, bytes]] = {}
        self.partial_counts: dict[int, int] = {}
        self.delivered: set[int] = set()  # mission-critical / time-sensitive dedup
        self.next_deliver_seq = 0  # ordered (key) delivery cursor
        self.held: dict[int, Message] = {}  # completed key messages awaiting order
        # measured-rate EMA
        self.rate = 0.0
        self.rate_updated = now
        self.acked_bytes_accum = 0


def _compress(payload: bytes, ratio: float) -> bytes:
    """Model compression as a deterministic size reduction (identity at ratio 1)."""
    if ratio >= 1.0:
        return payload
    return payload[: math.ceil(len(payload) * ratio)]


def _chunk_payload(blob: bytes, capacity: int) -> list[bytes]:
    if not blob:
        return [b""]
    return [blob[i : i + capacity] for i in range(0, len(blob), capacity)]


class Endpoint:
    """One side of a transfer session; owns per-topic queues and ARQ state."""

    def __init__(
        self,
        topics: list[TopicConfig],
        *,
        now: float = 0.0,
        retransmit_timeout: float = DEFAULT_RETRANSMIT_TIMEOUT,
        inflight_window: int = DEFAULT_INFLIGHT_WINDOW,
        rate_smoothing: float = DEFAULT_RATE_SMOOTHING,
        ts_budget_fraction: float = DEFAULT_TS_BUDGET_FRACTION,
    ):
        self.topics: dict[int, _TopicState] = {}
        for config in topics:
            if config.topic_id in self.topics:
                raise ValueError(f"duplicate topic id {config.topic_id}")
            self.topics[config.topic_id] = _TopicState(config, now)
        self.retransmit_timeout = retransmit_timeout
        self.inflight_window = inflight_window
        self.rate_smoothing = rate_smoothing
        self._last_service = now

        reliable_rate = sum(
            t.config.token_rate for t in self.topics.values() if t.config.data_class.reliable
        )
        ts_payloads = [
            t.config.max_payload
            for t in self.topics.values()
            if t.config.data_class is DataClass.TIME_SENSITIVE and t.config.token_rate == 0
        ]
        # shared reserve for time-sensitive topics that carry no rate of their
        # own; unlike topic buckets it starts full (it is a standing reserve)
        ts_depth = float(max(ts_payloads)) if ts_payloads else 0.0
        self._ts_bucket = _Bucket(
            rate=ts_budget_fraction * reliable_rate, depth=ts_depth, tokens=ts_depth
        )

    # ---------------------------------------------------------------- sender

    def publish(self, topic_id: int, payload: bytes, now: float) -> Message:
        state = self._topic(topic_id)
        config = state.config
        blob = _compress(payload, config.compression_ratio)
        message = Message(topic_id=topic_id, seq=state.next_seq, payload=blob, created_at=now)
        state.next_seq += 1

        if config.data_class is DataClass.TIME_SENSITIVE:
            state.ts_slot = message  # latest value only
            return message

        chunks = _chunk_payload(blob, config.chunk_capacity)
        if len(chunks) > 0xFFFF:
            raise ValueError(
                f"payload of {len(blob)} bytes exceeds {0xFFFF} chunks at "
                f"max_payload {config.max_payload}"
            )
        outbound = _Outbound(
            seq=message.seq,
            size=len(blob),
            chunks=[_Chunk(index=i, payload=c) for i, c in enumerate(chunks)],
        )
        state.queue.append(outbound)
        state.by_seq[outbound.seq] = outbound
        state.queued_bytes += outbound.size
        return message

    def service_transmit(self, now: float) -> list[Datagram]:
        """Refill buckets, then emit due retransmissions followed by fresh chunks.

        Emission covers topics in class-priority order (mission-critical,
        key, time-sensitive); every datagram debits its wire size from the
        topic's bucket, and nothing is emitted on partial tokens.
        """
        dt = now - self._last_service
        self._last_service = now
        for state in self.topics.values():
            state.bucket.refill(dt)
        self._ts_bucket.refill(dt)

        out: list[Datagram] = []
        ordered = sorted(
            self.topics.values(),
            key=lambda s: (_CLASS_PRIORITY[s.config.data_class], s.config.topic_id),
        )
        for state in ordered:
            if state.config.data_class.reliable:
                out.extend(self._emit_retransmissions(state, now))
        for state in ordered:
            if state.config.data_class.reliable:
                out.extend(self._emit_fresh(state, now))
            else:
                out.extend(self._emit_time_sensitive(state))
        return out

    def _emit_retransmissions(self, state: _TopicState, now: float) -> list[Datagram]:
        out = []
        for outbound in state.queue:
            for chunk in outbound.chunks:
                if chunk.acked or not chunk.sent:
                    continue
                if now - chunk.last_send < self.retransmit_timeout:
                    continue
                wire = HEADER_SIZE + len(chunk.payload)
                if not state.bucket.try_spend(wire):
                    return out
                chunk.last_send = now
                out.append(self._data_datagram(state, outbound, chunk))
        return out

    def _emit_fresh(self, state: _TopicState, now: float) -> list[Datagram]:
        out = []
        for outbound in state.queue:
            for chunk in outbound.chunks:
                if chunk.sent:
                    continue
                if state.inflight >= self.inflight_window:
                    return out
                wire = HEADER_SIZE + len(chunk.payload)
                if not state.bucket.try_spend(wire):
                    return out
                chunk.sent = True
                chunk.last_send = now
                state.inflight += 1
                out.append(self._data_datagram(state, outbound, chunk))
        return out

    def _emit_time_sensitive(self, state: _TopicState) -> list[Datagram]:
        message = state.ts_slot
        if message is None:
            return []
        bucket = state.bucket if state.config.token_rate > 0 else self._ts_bucket
        chunks = _chunk_payload(message.payload, state.config.chunk_capacity)
        total_wire = sum(HEADER_SIZE + len(c) for c in chunks)
        if not bucket.try_spend(total_wire):
            return []  # slot stays pending until affordable (or overwritten)
        state.ts_slot = None
        return [
            Datagram(
                topic_id=state.config.topic_id,
                msg_seq=message.seq,
                chunk_index=i,
                chunk_count=len(chunks),
                payload=c,
                reliable=False,
            )
            for i, c in enumerate(chunks)
        ]

    def _data_datagram(self, state: _TopicState, outbound: _Outbound, chunk: _Chunk) -> Datagram:
        return Datagram(
            topic_id=state.config.topic_id,
            msg_seq=outbound.seq,
            chunk_index=chunk.index,
            chunk_count=len(outbound.chunks),
            payload=chunk.payload,
            reliable=True,
        )

    # -------------------------------------------------------------- receiver

    def handle_datagram(self, data: bytes, now: float) -> tuple[list[Message], list[Datagram]]:
        """Process one received datagram; returns (deliverable messages, ACKs to send).

        Duplicate chunks are idempotent but still re-ACKed, so a sender whose
        ACKs were lost converges. ACK datagrams are routed to handle_ack.
        """
        datagram = Datagram.decode(data)
        if datagram.ack:
            self.handle_ack(datagram, now)
            return [], []

        state = self.topics.get(datagram.topic_id)
        if state is None:
            log.warning("datagram for unconfigured topic %d dropped", datagram.topic_id)
            return [], []

        ack: list[Datagram] = []
        if datagram.reliable:
            ack.append(
                Datagram(
                    topic_id=datagram.topic_id,
                    msg_seq=datagram.msg_seq,
                    chunk_index=datagram.chunk_index,
                    chunk_count=datagram.chunk_count,
                    ack=True,
                )
            )

        if self._already_delivered(state, datagram.msg_seq):
            return [], ack

        chunks = state.partial.setdefault(datagram.msg_seq, {})
        state.partial_counts.setdefault(datagram.msg_seq, datagram.chunk_count)
        if datagram.chunk_index in chunks:
            return [], ack  # duplicate chunk
        chunks[datagram.chunk_index] = datagram.payload

        if len(chunks) < state.partial_counts[datagram.msg_seq]:
            return [], ack

        payload = b"".join(chunks[i] for i in range(len(chunks)))
        del state.partial[datagram.msg_seq]
        del state.partial_counts[datagram.msg_seq]
        message = Message(
            topic_id=datagram.topic_id, seq=datagram.msg_seq, payload=payload, created_at=now
        )
        return self._deliver(state, message), ack

    def _already_delivered(self, state: _TopicState, seq: int) -> bool:
        if state.config.data_class is DataClass.KEY:
            return seq < state.next_deliver_seq or seq in state.held
        return seq in state.delivered

    def _deliver(self, state: _TopicState, message: Message) -> list[Message]:
        if state.config.data_class is DataClass.KEY:
            # ordered topics hold completed messages until the gap closes
            state.held[message.seq] = message
            out = []
            while state.next_deliver_seq in state.held:
                out.append(state.held.pop(state.next_deliver_seq))
                state.next_deliver_seq += 1
            return out
        state.delivered.add(message.seq)
        return [message]

    def handle_ack(self, ack: Datagram, now: float) -> None:
        """Mark the referenced chunk delivered; fully ACKed messages leave the queue."""
        if not ack.ack:
            raise ValueError("handle_ack expects an ACK datagram")
        state = self.topics.get(ack.topic_id)
        if state is None:
            log.debug("ACK for unconfigured topic %d ignored", ack.topic_id)
            return
        outbound = state.by_seq.get(ack.msg_seq)
        if outbound is None:
            log.debug("ACK for unknown message %d/%d ignored", ack.topic_id, ack.msg_seq)
            return
        chunk = outbound.chunks[ack.chunk_index]
        if chunk.acked:
            return
        chunk.acked = True
        outbound.acked_chunks += 1
        if chunk.sent:
            state.inflight -= 1
        state.acked_bytes_accum += len(chunk.payload)
        if outbound.complete:
            state.queue.remove(outbound)
            del state.by_seq[outbound.seq]
            state.queued_bytes -= outbound.size

    # ----------------------------------------------------------------- stats

    def buffer_stats(self, now: float) -> list[BufferStats]:
        """Per-topic stats plus an aggregate entry (topic_id None), in topic order."""
        out = []
        total_queued = 0
        total_rate = 0.0
        for topic_id in sorted(self.topics):
            state = self.topics[topic_id]
            self._fold_rate(state, now)
            queued = state.queued_bytes
            if state.ts_slot is not None:
                queued += len(state.ts_slot.payload)
            eta = queued / state.rate if state.rate > 0 else math.inf
            out.append(
                BufferStats(
                    topic_id=topic_id,
                    queued_bytes=queued,
                    measured_rate=state.rate,
                    estimated_transfer_time=eta,
                )
            )
            total_queued += queued
            total_rate += state.rate
        eta = total_queued / total_rate if total_rate > 0 else math.inf
        out.append(
            BufferStats(
                topic_id=None,
                queued_bytes=total_queued,
                measured_rate=total_rate,
                estimated_transfer_time=eta,
            )
        )
        return out

    def aggregate_queued_bytes(self) -> int:
        total = 0
        for state in self.topics.values():
            total += state.queued_bytes
            if state.ts_slot is not None:
                total += len(state.ts_slot.payload)
        return total

    def _fold_rate(self, state: _TopicState, now: float) -> None:
        elapsed = now - state.rate_updated
        if elapsed <= 0:
            return
        instantaneous = state.acked_bytes_accum / elapsed
        alpha = 1.0 - (1.0 - self.rate_smoothing) ** elapsed
        state.rate += alpha * (instantaneous - state.rate)
        state.acked_bytes_accum = 0
        state.rate_updated = now

    def _topic(self, topic_id: int) -> _TopicState:
        try:
            return self.topics[topic_id]
        except KeyError:
            raise UnknownTopicError(topic_id) from None
