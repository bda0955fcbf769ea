"""The jazz music store, end to end, on simulated gateways.

:class:`Topology` wires gateways onto one :class:`SimNetwork` and registers
each with the hosting gateway's VO manager through a :class:`RemoteMember`.
:func:`run_scenario` drives a fixed script over it and returns a report
whose JSON rendering is byte-identical for a given seed.
"""

from __future__ import annotations

import json
import random
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from typing import Any

from vasgw.catalog import STS_PEER, publish_catalog
from vasgw.clock import SimClock, iso
from vasgw.errors import VasError
from vasgw.gateway.negotiation import Agreed
from vasgw.gateway.network import FaultPlan, SimNetwork
from vasgw.gateway.node import GatewayNode, ProfileDefinition, RemoteMember, run_negotiation
from vasgw.model import (
    Adaptability,
    Constraint,
    Lifecycle,
    MessageEnvelope,
    Placement,
    ProfileRequest,
    VasKind,
    WantedService,
)
from vasgw.trust import simulated_public_key
from vasgw.vo import Accept, NewProfile, ProcessStep, Role

K = VasKind
VO_NAME = "jazz-store"
HOST = "vhe"
OPERATOR = "jazz-operator"
LABELS = ("label-blue", "label-swing")

PROCESS = (
    ProcessStep(Role.OPERATOR, "storefront"),
    ProcessStep(Role.CONTENT_PROVIDER, "jazz-catalogue"),
    ProcessStep(Role.CONTENT_PROVIDER, "track-download"),
)


def _request(owner: str, resource: str, adaptability: Adaptability, *wanted: tuple[VasKind, tuple[Constraint, ...]]) -> ProfileRequest:
    return ProfileRequest(owner, resource, tuple(WantedService(k, cs) for k, cs in wanted), adaptability=adaptability)


def music_store_profiles() -> dict[str, list[ProfileDefinition]]:
    """The VAS profile each partner offers for its capability."""
    return {
        OPERATOR: [
            ProfileDefinition(
                "storefront-watch",
                _request(OPERATOR, "storefront", Adaptability.OPEN, (K.AUDIT, ()), (K.MONITORING, ())),
            )
        ],
        "label-blue": [
            ProfileDefinition(
                "strict-authz",
                _request(
                    "label-blue",
                    "blue-catalogue",
                    Adaptability.GUARDED,
                    (K.AUTHENTICATION, ()),
                    (K.AUTHORISATION, (Constraint.semantics("XACML"),)),
                    (K.AUDIT, ()),
                ),
            )
        ],
        "label-swing": [
            ProfileDefinition(
                "metered-access",
                _request(
                    "label-swing",
                    "swing-catalogue",
                    Adaptability.OPEN,
                    (K.POLICY_ENFORCEMENT, ()),
                    (K.AUTHENTICATION, ()),
                    (K.AUTHORISATION, ()),
                    (K.BILLING, ()),
                ),
                Lifecycle.on_demand(),
            )
        ],
        "label-bebop": [
            ProfileDefinition(
                "bebop-basic",
                _request("label-bebop", "bebop-catalogue", Adaptability.OPEN, (K.AUTHENTICATION, ()), (K.AUTHORISATION, ())),
            )
        ],
    }


def tightened_blue_profile() -> ProfileRequest:
    """label-blue's adaptation: authentication within 10 ms plus monitoring."""
    return _request(
        "label-blue",
        "blue-catalogue",
        Adaptability.GUARDED,
        (K.AUTHENTICATION, (Constraint.max_latency(10),)),
        (K.AUTHORISATION, (Constraint.semantics("XACML"),)),
        (K.AUDIT, ()),
        (K.MONITORING, ()),
    )


@dataclass
class Topology:
    clock: SimClock = field(default_factory=SimClock)
    network: SimNetwork | None = None
    host_id: str = HOST
    nodes: dict[str, GatewayNode] = field(default_factory=dict)
    node_options: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.network is None:
            self.network = SimNetwork(clock=self.clock)

    @property
    def host(self) -> GatewayNode:
        return self.nodes[self.host_id]

    def add_gateway(self, gateway_id: str, role: Role, functions: Iterable[str] = ()) -> GatewayNode:
        """Boot a gateway; the host must be added first so later ones can register with it."""
        if gateway_id != self.host_id and self.host_id not in self.nodes:
            raise ValueError(f"add the hosting gateway {self.host_id!r} first")
        node = GatewayNode(gateway_id, role, clock=self.clock, **self.node_options)
        node.peers.register(STS_PEER, simulated_public_key(STS_PEER))
        self.nodes[gateway_id] = node
        self.network.register(gateway_id, node.handle_frame)  # type: ignore[union-attr]
        member = node if gateway_id == self.host_id else RemoteMember(self.network, self.host_id, gateway_id)
        self.host.host_vos().register_partner(node.card, member, functions)
        return node

    def send(self, src: str, dst: str, envelope: MessageEnvelope) -> dict[str, Any]:
        return RemoteMember(self.network, src, dst).send_message(envelope)


def music_store_topology(
    clock: SimClock | None = None, faults: FaultPlan | None = None, extra_labels: Iterable[str] = (), **node_options: Any
) -> Topology:
    clock = clock or SimClock()
    topo = Topology(clock=clock, network=SimNetwork(clock=clock, faults=faults), node_options=node_options)
    topo.add_gateway(HOST, Role.INFRASTRUCTURE_PROVIDER, {"hosting"})
    topo.add_gateway(OPERATOR, Role.OPERATOR, {"storefront", "catalogue-aggregation"})
    for label in (*LABELS, *extra_labels):
        topo.add_gateway(label, Role.CONTENT_PROVIDER, {"jazz-catalogue", "track-download"})
    for owner, definitions in music_store_profiles().items():
        if owner in topo.nodes:
            for d in definitions:
                topo.nodes[owner].define_profile(d)
    return topo


class ScenarioAborted(Exception):
    def __init__(self, step: str, error: VasError) -> None:
        super().__init__(f"{step}: {error.message}")
        self.step = step
        self.error = error


class ScenarioFailure(VasError):
    code = "scenario-failure"

    def __init__(self, check: str, reason: str) -> None:
        super().__init__(reason, check=check)


class _Script:
    def __init__(self, seed: int, faults: FaultPlan | None) -> None:
        self.seed = seed
        self.rng = random.Random(seed)
        self.faults = faults
        self.steps: list[dict[str, Any]] = []
        self.topo: Topology | None = None

    def step(self, name: str, action: Callable[[], dict[str, Any] | None]) -> dict[str, Any]:
        try:
            detail = action() or {}
        except VasError as exc:
            self.steps.append({"step": name, "outcome": "failed", "error": exc.to_doc()})
            raise ScenarioAborted(name, exc) from exc
        self.steps.append({"step": name, "outcome": "ok", **detail})
        return detail


def _envelope(clock: SimClock, collab: str, token: str, role: str, body: dict[str, Any], direction: Placement = Placement.REQUEST) -> MessageEnvelope:
    headers = {"token": token, "sender-role": role, "sent-at": iso(clock.now())}
    return MessageEnvelope(collab, direction, headers, json.dumps(body, sort_keys=True).encode("utf-8"))


def run_scenario(seed: int = 1, faults: FaultPlan | None = None) -> dict[str, Any]:
    """Run the jazz music store script; failures end the run with the step name recorded."""
    script = _Script(seed, faults)
    report: dict[str, Any] = {"scenario": "music-store", "seed": seed, "steps": script.steps}
    if faults is not None:
        report["faults"] = {"drop-types": sorted(faults.drop_types), "drop-rate": faults.drop_rate}
    try:
        _play(script, report)
    except ScenarioAborted as exc:
        report["status"] = "aborted"
        report["failed-step"] = exc.step
        report["error"] = exc.error.to_doc()
    else:
        report["status"] = "completed"
    topo = script.topo
    if topo is not None:
        manager = topo.host.host_vos()
        if VO_NAME in manager.vos:
            vo = manager.vos[VO_NAME]
            report["vo"] = vo.to_doc()
            report["final-state"] = vo.state.value
        report["audit-digests"] = {gid: n.factory.audit.digest() for gid, n in sorted(topo.nodes.items())}
        report["frames"] = len(topo.network.deliveries)  # type: ignore[union-attr]
    return report


def _play(script: _Script, report: dict[str, Any]) -> None:
    faults = script.faults
    if faults is not None and faults.seed != script.seed:
        faults = FaultPlan(faults.drop_rate, faults.delay_ms, faults.drop_types, faults.links, script.seed)
    topo = script.topo = music_store_topology(faults=faults)
    script.step("boot", lambda: {"gateways": sorted(topo.nodes)})
    manager = topo.host.host_vos()
    nodes = topo.nodes

    def create() -> dict[str, Any]:
        vo = manager.create_vo(OPERATOR, HOST, VO_NAME, "storefront-watch")
        manager.attach_process(VO_NAME, PROCESS)
        return {"vo": vo.vo_id, "state": vo.state.value}

    script.step("create_vo", create)

    def publish() -> dict[str, Any]:
        for gid in sorted(nodes):
            publish_catalog(nodes[gid].registry)
        return {"descriptors": len(nodes[HOST].registry.snapshot().descriptors())}

    script.step("publish_capabilities", publish)

    def bargain() -> dict[str, Any]:
        wanted = _request(
            OPERATOR,
            "blue-catalogue",
            Adaptability.GUARDED,
            (K.AUTHENTICATION, (Constraint.max_latency(25),)),
            (K.AUTHORISATION, (Constraint.semantics("XACML"), Constraint.max_latency(50))),
        )
        session = run_negotiation(topo.network, nodes[OPERATOR], "label-blue", wanted, f"{VO_NAME}/neg-1")
        summary = session.summary()
        if not isinstance(session.status, Agreed):
            return {"status": summary["status"], "rounds": session.round}
        return {"status": "Agreed", "rounds": session.round, "transcript": len(session.transcript), "agreed": summary["agreed"]}

    script.step("negotiate", bargain)

    invitations = {}
    for label in LABELS:
        invitations[label] = script.step("invite", lambda label=label: {"partner": label, "invitation": manager.invite(VO_NAME, label)})[
            "invitation"
        ]
    chosen = {"label-blue": "strict-authz", "label-swing": "metered-access"}
    for label in LABELS:

        def answer(label: str = label) -> dict[str, Any]:
            roster = manager.respond_invitation(invitations[label], Accept(chosen[label]))
            return {"partner": label, "status": roster[label].status.value, "profile": chosen[label]}

        script.step("respond_invitation", answer)

    def finalize() -> dict[str, Any]:
        vo = manager.finalize_federation(VO_NAME)
        return {
            "state": vo.state.value,
            "collaboration-ids": dict(sorted(vo.collaboration_ids.items())),
            "trust-edges": len(vo.trust_edges),
            "cards-per-gateway": {p: len(nodes[p].vo_cards.get(VO_NAME, [])) for p in vo.accepted()},
            "chains": {p: list(nodes[p].factory.profile(vo.collaboration_ids[p]).chain_slots) for p in vo.accepted()},  # type: ignore[union-attr]
        }

    script.step("finalize_federation", finalize)
    vo = manager.status(VO_NAME)
    collab = vo.collaboration_ids
    token = nodes[OPERATOR].issue_token()

    def traffic() -> dict[str, Any]:
        outcomes: dict[str, int] = {}
        sent = 0
        for label in LABELS:
            for _ in range(script.rng.randint(3, 5)):
                op = script.rng.choice(["search", "purchase"])
                body = {"op": op, "item": f"track-{script.rng.randint(1, 999):03d}", "currency": "USD"}
                result = topo.send(OPERATOR, label, _envelope(topo.clock, collab[label], token, "operator", body))
                outcomes[result["outcome"]] = outcomes.get(result["outcome"], 0) + 1
                sent += 1
            reply_token = nodes[label].issue_token()
            for _ in range(2):
                body = {"op": "catalogue-update", "count": script.rng.randint(1, 50)}
                env = _envelope(topo.clock, collab[OPERATOR], reply_token, "content-provider", body, Placement.RESPONSE)
                result = topo.send(label, OPERATOR, env)
                outcomes[result["outcome"]] = outcomes.get(result["outcome"], 0) + 1
                sent += 1
        if outcomes.get("Forwarded", 0) != sent:
            raise ScenarioFailure("traffic", f"only {outcomes.get('Forwarded', 0)} of {sent} honest messages were forwarded")
        return {"sent": sent, "outcomes": dict(sorted(outcomes.items()))}

    script.step("traffic", traffic)

    def adapt() -> dict[str, Any]:
        swing_before = nodes["label-swing"].factory.profile(collab["label-swing"]).ccm.ccm_id  # type: ignore[union-attr]
        manager.adapt_vo(VO_NAME, "label-blue", NewProfile("label-blue", tightened_blue_profile()))
        blue = nodes["label-blue"].factory.profile(collab["label-blue"])
        swing_after = nodes["label-swing"].factory.profile(collab["label-swing"]).ccm.ccm_id  # type: ignore[union-attr]
        body = {"op": "purchase", "item": "track-001", "currency": "USD"}
        result = topo.send(OPERATOR, "label-blue", _envelope(topo.clock, collab["label-blue"], token, "operator", body))
        return {
            "partner": "label-blue",
            "state": manager.status(VO_NAME).state.value,
            "chain": list(blue.chain_slots),  # type: ignore[union-attr]
            "notices": len(nodes["label-blue"].notices),
            "other-profile-untouched": swing_before == swing_after,
            "probe": result["outcome"],
        }

    script.step("adapt_vo", adapt)

    def forged() -> dict[str, Any]:
        body = {"op": "purchase", "item": "track-666", "currency": "USD"}
        env = _envelope(topo.clock, collab["label-blue"], "fip.unknown:0000000000000000", "operator", body)
        result = topo.send(OPERATOR, "label-blue", env)
        if result["outcome"] != "Rejected":
            raise ScenarioFailure("invalid_token", "a forged token was not rejected")
        return {"result": result["outcome"], "slot-id": result["slot-id"], "reason": result["reason"]}

    script.step("invalid_token", forged)


def render_report(report: dict[str, Any]) -> str:
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
