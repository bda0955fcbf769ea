"""On-disk state for CLI invocations.

Each CLI call is a fresh process, so the workspace keeps a registry journal
plus a log of the successful commands that changed gateway state.  Opening
the workspace replays that log against freshly booted, deterministic
gateways, which reconstructs the in-memory profiles, audit logs and VOs.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from vasgw.catalog import STS_PEER, publish_catalog
from vasgw.clock import SimClock
from vasgw.errors import JournalCorrupt
from vasgw.gateway.node import GatewayNode
from vasgw.gateway.scenario import Topology, music_store_topology
from vasgw.model import CCM, Lifecycle, MessageEnvelope, ProfileRequest, validate_profile_request
from vasgw.registries import Registry
from vasgw.trust import simulated_public_key
from vasgw.vo import Accept, Decline, MemberJoin, MemberLeave, NewProfile, ProcessStep, Role

LOCAL_GATEWAY = "local"
SPARE_LABELS = ("label-bebop",)


class Workspace:
    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.journal_path = self.root / "registry.journal"
        self.snapshot_path = self.root / "registry.snapshot"
        self.log_path = self.root / "commands.jsonl"

    def registry(self) -> Registry:
        self.root.mkdir(parents=True, exist_ok=True)
        snapshot = self.snapshot_path if self.snapshot_path.exists() else None
        return Registry.open(self.journal_path, snapshot)

    def commands(self, scope: str) -> list[dict[str, Any]]:
        if not self.log_path.exists():
            return []
        out = []
        for n, line in enumerate(self.log_path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                cmd = json.loads(line)
            except json.JSONDecodeError:
                raise JournalCorrupt(f"command log line {n} is not valid JSON") from None
            if cmd.get("scope") == scope:
                out.append(cmd)
        return out

    def record(self, scope: str, op: str, **args: Any) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        with self.log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps({"scope": scope, "op": op, **args}, sort_keys=True) + "\n")

    # the standalone gateway used by profile/send/audit/trust commands

    def local_node(self) -> GatewayNode:
        node = GatewayNode(LOCAL_GATEWAY, Role.INFRASTRUCTURE_PROVIDER, clock=SimClock(), registry=self.registry())
        node.peers.register(STS_PEER, simulated_public_key(STS_PEER))
        for cmd in self.commands("local"):
            apply_local(node, cmd)
        return node

    # the music-store topology used by vo commands

    def topology(self) -> Topology:
        topo = music_store_topology(extra_labels=SPARE_LABELS)
        for node in topo.nodes.values():
            publish_catalog(node.registry)
        for cmd in self.commands("vo"):
            apply_vo(topo, cmd)
        return topo


def apply_local(node: GatewayNode, cmd: dict[str, Any]) -> Any:
    op = cmd["op"]
    if op == "enact":
        ccm = CCM.from_doc(cmd["ccm"])
        if cmd.get("roles"):
            node.factory.push_policy(cmd["collab"], {"roles": list(cmd["roles"])})
        return node.factory.enact(ccm, cmd["collab"], Lifecycle.from_doc(cmd["lifecycle"]))
    if op == "send":
        if cmd.get("at"):
            node.clock.set(_parse_time(cmd["at"]))
        return node.factory.intercept(MessageEnvelope.from_doc(cmd["envelope"]))
    if op == "trust-add":
        node.trust.trust(cmd["fip"], cmd["key"])
        node.peers.register(cmd["fip"], cmd["key"])
        return None
    raise JournalCorrupt(f"unknown local command {op!r}")


def apply_vo(topo: Topology, cmd: dict[str, Any]) -> Any:
    manager = topo.host.host_vos()
    op = cmd["op"]
    if op == "create":
        vo = manager.create_vo(cmd["initiator"], topo.host_id, cmd["name"], cmd.get("profile"))
        if cmd.get("process") is not None:
            manager.attach_process(cmd["name"], [ProcessStep.from_doc(s) for s in cmd["process"]])
        return vo
    if op == "invite":
        return manager.invite(cmd["vo"], cmd["partner"])
    if op == "respond":
        answer = Accept(cmd["profile"]) if cmd["accept"] else Decline()
        return manager.respond_invitation(cmd["invitation"], answer)
    if op == "finalize":
        return manager.finalize_federation(cmd["vo"])
    if op == "adapt":
        return manager.adapt_vo(cmd["vo"], cmd["initiator"], change_from_doc(cmd["change"]))
    if op == "dissolve":
        return manager.dissolve_vo(cmd["vo"], cmd["initiator"])
    raise JournalCorrupt(f"unknown vo command {op!r}")


def change_from_doc(doc: dict[str, Any]) -> NewProfile | MemberJoin | MemberLeave:
    kind = doc.get("type")
    if kind == "new-profile":
        request: ProfileRequest = validate_profile_request(doc["request"])
        return NewProfile(doc["partner"], request)
    if kind == "member-join":
        return MemberJoin(doc["provider"], doc["profile-ref"])
    if kind == "member-leave":
        return MemberLeave(doc["partner"])
    raise ValueError(f"unknown change type {kind!r}; expected new-profile, member-join or member-leave")


def change_subject(doc: dict[str, Any]) -> str:
    return doc.get("partner") or doc.get("provider") or ""


def _parse_time(text: str) -> datetime:
    moment = datetime.fromisoformat(text)
    return moment if moment.tzinfo else moment.replace(tzinfo=timezone.utc)
