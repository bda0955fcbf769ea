"""In-process network joining simulated gateways.

Every frame is encoded to bytes and decoded again on the far side, so the
simulation exercises the same wire format as the loopback transport.  A
call to :meth:`SimNetwork.route` is a request/response exchange: the
receiver's handler returns the reply frame (an ``ack`` or an ``error``).

Two scheduling modes are offered.  ``deterministic`` delivers inline on the
caller's thread, which makes a seeded run reproducible byte for byte.
``threaded`` gives each gateway its own worker thread draining an inbox;
senders block on a future for the reply.  Both keep per-(sender, receiver)
FIFO order and deliver each frame at most once; there are no retries.
"""

from __future__ import annotations

import queue
import random
import threading
import time
from collections import Counter
from collections.abc import Callable
from concurrent.futures import Future
from dataclasses import dataclass, field
from datetime import timedelta
from typing import Any

from vasgw.errors import Dropped, UnknownGateway
from vasgw.gateway.frames import Frame, decode, encode

FrameHandler = Callable[[Frame], Frame]


@dataclass
class FaultPlan:
    """Injected link faults.  ``drop_types`` drops every frame of those types."""

    drop_rate: float = 0.0
    delay_ms: tuple[int, int] = (0, 0)
    drop_types: frozenset[str] = frozenset()
    links: frozenset[tuple[str, str]] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ValueError("drop-rate must lie in [0, 1]")
        lo, hi = self.delay_ms
        if lo < 0 or hi < lo:
            raise ValueError("delay range must be non-negative and ordered")

    def applies(self, src: str, dst: str) -> bool:
        return self.links is None or (src, dst) in self.links


@dataclass(frozen=True)
class Delivery:
    src: str
    dst: str
    seq: int
    frame_type: str
    ref: str
    delay_ms: int = 0


@dataclass
class _Inbox:
    items: queue.Queue = field(default_factory=queue.Queue)
    worker: threading.Thread | None = None


class SimNetwork:
    def __init__(self, mode: str = "deterministic", faults: FaultPlan | None = None, clock: Any = None) -> None:
        if mode not in ("deterministic", "threaded"):
            raise ValueError(f"unknown scheduling mode {mode!r}")
        self.mode = mode
        self.faults = faults or FaultPlan()
        self.clock = clock
        self._rng = random.Random(self.faults.seed)
        self._handlers: dict[str, FrameHandler] = {}
        self._inboxes: dict[str, _Inbox] = {}
        self._seq: Counter[tuple[str, str]] = Counter()
        self._pair_locks: dict[tuple[str, str], threading.Lock] = {}
        self._lock = threading.Lock()
        self.deliveries: list[Delivery] = []
        self.dropped: list[Delivery] = []
        self._closed = False

    def register(self, gateway_id: str, handler: FrameHandler) -> None:
        with self._lock:
            self._handlers[gateway_id] = handler
            if self.mode == "threaded" and gateway_id not in self._inboxes:
                inbox = _Inbox()
                inbox.worker = threading.Thread(target=self._drain, args=(gateway_id, inbox), daemon=True, name=f"gw-{gateway_id}")
                self._inboxes[gateway_id] = inbox
                inbox.worker.start()

    def gateways(self) -> list[str]:
        return sorted(self._handlers)

    def send(self, src: str, dst: str, frame: Frame) -> Future:
        """Queue ``frame`` for delivery and return a future for the reply frame."""
        if src not in self._handlers:
            raise UnknownGateway(src)
        if dst not in self._handlers:
            raise UnknownGateway(dst)
        pair = (src, dst)
        with self._lock:
            pair_lock = self._pair_locks.setdefault(pair, threading.Lock())
        with pair_lock:
            with self._lock:
                self._seq[pair] += 1
                seq = self._seq[pair]
                drop, delay = self._fault_for(src, dst, frame)
            record = Delivery(src, dst, seq, frame.frame_type, frame.ref, delay)
            future: Future = Future()
            if drop:
                with self._lock:
                    self.dropped.append(record)
                future.set_exception(Dropped(f"{frame.frame_type} frame {src}->{dst} dropped", src=src, dst=dst))
                return future
            wire = encode(frame)
            if self.mode == "deterministic":
                if delay and self.clock is not None and hasattr(self.clock, "advance"):
                    self.clock.advance(timedelta(milliseconds=delay))
                self._deliver(dst, wire, record, future)
            else:
                self._inboxes[dst].items.put((wire, record, future))
        return future

    def route(self, src: str, dst: str, frame: Frame, timeout: float | None = 30.0) -> Frame:
        return self.send(src, dst, frame).result(timeout)

    def close(self) -> None:
        self._closed = True
        for inbox in self._inboxes.values():
            inbox.items.put(None)

    def _fault_for(self, src: str, dst: str, frame: Frame) -> tuple[bool, int]:
        plan = self.faults
        if not plan.applies(src, dst):
            return False, 0
        if frame.frame_type in plan.drop_types:
            return True, 0
        drop = plan.drop_rate > 0 and self._rng.random() < plan.drop_rate
        lo, hi = plan.delay_ms
        delay = self._rng.randint(lo, hi) if hi else 0
        return drop, delay

    def _drain(self, gateway_id: str, inbox: _Inbox) -> None:
        while True:
            item = inbox.items.get()
            if item is None:
                return
            wire, record, future = item
            if record.delay_ms:
                time.sleep(record.delay_ms / 1000)
            self._deliver(gateway_id, wire, record, future)

    def _deliver(self, dst: str, wire: bytes, record: Delivery, future: Future) -> None:
        with self._lock:
            self.deliveries.append(record)
        try:
            reply = self._handlers[dst](decode(wire))
            future.set_result(decode(encode(reply)))
        except BaseException as exc:  # the sender sees whatever the receiver raised
            future.set_exception(exc)
