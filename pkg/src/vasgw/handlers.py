"""Simulated value-adding-service handlers.

One :class:`Handler` sits in the chain for each leaf slot of an enacted
composition.  Behaviours are deterministic functions of the envelope, the
handler's pushed configuration and the gateway-wide :class:`HandlerContext`.
"""

from __future__ import annotations

import json
import threading
from collections import defaultdict
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Union

from vasgw.clock import SystemClock
from vasgw.model import MessageEnvelope, VasKind
from vasgw.trust import TrustStore, issue_token, parse_token

DEFAULT_MAX_PAYLOAD = 1 << 20


@dataclass(frozen=True)
class Continue:
    envelope: MessageEnvelope


@dataclass(frozen=True)
class Reject:
    reason: str


Verdict = Union[Continue, Reject]


@dataclass
class HandlerContext:
    """Gateway-wide state that handler behaviours read or update."""

    trust: TrustStore = field(default_factory=TrustStore)
    clock: Any = field(default_factory=SystemClock)
    policies: dict[str, dict[str, Any]] = field(default_factory=dict)
    billing: dict[str, int] = field(default_factory=lambda: defaultdict(int))
    latency_samples: dict[str, list[float]] = field(default_factory=lambda: defaultdict(list))
    audited: dict[str, int] = field(default_factory=lambda: defaultdict(int))
    lock: threading.Lock = field(default_factory=threading.Lock)

    def roles_for(self, collaboration_id: str) -> set[str]:
        return set(self.policies.get(collaboration_id, {}).get("roles", ()))


class Handler:
    def __init__(self, slot_id: str, kind: VasKind, instance_id: str, collaboration_id: str, context: HandlerContext) -> None:
        self.slot_id = slot_id
        self.kind = kind
        self.instance_id = instance_id
        self.collaboration_id = collaboration_id
        self.context = context
        self.config: dict[str, Any] = {}
        self.invoked = 0
        self.rejected = 0

    def configure(self, document: Mapping[str, Any]) -> None:
        self.config.update(document)

    def __call__(self, envelope: MessageEnvelope) -> Verdict:
        self.invoked += 1
        verdict = BEHAVIOURS[self.kind](self, envelope)
        if isinstance(verdict, Reject):
            self.rejected += 1
        return verdict

    def __repr__(self) -> str:
        return f"Handler({self.slot_id!r}, {self.kind.value}, invoked={self.invoked}, rejected={self.rejected})"


def _policy_enforcement(h: Handler, env: MessageEnvelope) -> Verdict:
    limit = int(h.config.get("max-payload-bytes", DEFAULT_MAX_PAYLOAD))
    if len(env.payload) > limit:
        return Reject(f"payload of {len(env.payload)} bytes exceeds {limit}")
    for name in h.config.get("required-headers", ()):
        if not env.headers.get(name):
            return Reject(f"missing header {name!r}")
    return Continue(env)


def _authenticate(h: Handler, env: MessageEnvelope) -> Verdict:
    token = env.headers.get("token")
    if not h.context.trust.accepts(token):
        return Reject("missing or untrusted token" if token else "missing token")
    fip, _ = parse_token(token)  # type: ignore[misc]
    return Continue(env.with_headers(**{"authenticated-fip": fip}))


def _issue_token(h: Handler, env: MessageEnvelope) -> Verdict:
    if env.headers.get("token"):
        return Continue(env)
    subject = env.headers.get("credentials")
    key = h.context.trust.key_of(subject) if subject else None
    if key is None:
        return Reject("no credentials from a trusted identity provider")
    return Continue(env.with_headers(token=issue_token(subject, key)))  # type: ignore[arg-type]


def _authorise(h: Handler, env: MessageEnvelope) -> Verdict:
    allowed = set(h.config.get("roles", ())) | h.context.roles_for(h.collaboration_id)
    role = env.headers.get("sender-role")
    if not role or role not in allowed:
        return Reject(f"role {role!r} not permitted")
    return Continue(env)


def _audit(h: Handler, env: MessageEnvelope) -> Verdict:
    with h.context.lock:
        h.context.audited[h.collaboration_id] += 1
    return Continue(env)


def _bill(h: Handler, env: MessageEnvelope) -> Verdict:
    with h.context.lock:
        h.context.billing[h.collaboration_id] += int(h.config.get("units-per-message", 1))
    return Continue(env)


def _translate(h: Handler, env: MessageEnvelope) -> Verdict:
    target = h.config.get("field")
    mapping = h.config.get("map") or {}
    if not target or not mapping:
        return Continue(env)
    try:
        body = json.loads(env.payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return Continue(env)
    if isinstance(body, dict) and isinstance(body.get(target), str) and body[target] in mapping:
        body[target] = mapping[body[target]]
        return Continue(env.with_payload(json.dumps(body, sort_keys=True).encode("utf-8")))
    return Continue(env)


def _monitor(h: Handler, env: MessageEnvelope) -> Verdict:
    sent = env.headers.get("sent-at")
    if sent:
        try:
            elapsed = (h.context.clock.now() - datetime.fromisoformat(sent)).total_seconds() * 1000
        except (TypeError, ValueError):
            elapsed = None
        if elapsed is not None:
            with h.context.lock:
                h.context.latency_samples[h.collaboration_id].append(elapsed)
    return Continue(env)


BEHAVIOURS: dict[VasKind, Callable[[Handler, MessageEnvelope], Verdict]] = {
    VasKind.POLICY_ENFORCEMENT: _policy_enforcement,
    VasKind.AUTHENTICATION: _authenticate,
    VasKind.AUTHORISATION: _authorise,
    VasKind.AUDIT: _audit,
    VasKind.BILLING: _bill,
    VasKind.TRANSLATION: _translate,
    VasKind.MONITORING: _monitor,
    VasKind.TOKEN_ISSUANCE: _issue_token,
    VasKind.TOKEN_VALIDATION: _authenticate,
}
