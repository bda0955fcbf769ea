"""Command-line entry point: ``vasgw <group> <command>``.

Exit status is 0 on success, 1 when an operation or scenario step fails,
and 2 for configuration or usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from vasgw.catalog import STS_PEER, publish_catalog
from vasgw.errors import ConfigError, MalformedDocument, VasError
from vasgw.gateway.config import load_config
from vasgw.gateway.loopback import LoopbackServer
from vasgw.gateway.network import FaultPlan
from vasgw.gateway.node import GatewayNode
from vasgw.gateway.scenario import OPERATOR, PROCESS, render_report, run_scenario
from vasgw.gateway.workspace import Workspace, apply_local, apply_vo, change_subject
from vasgw.model import (
    Lifecycle,
    MessageEnvelope,
    Placement,
    VasKind,
    Window,
    canonical_json,
    validate_profile_request,
)
from vasgw.planner import PredicationEngine, deviations_of, outcome_summary, plan
from vasgw.registries import ArchitectureDescription, CapabilityDescriptor, Registry, load_snapshot
from vasgw.trust import simulated_public_key

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(doc: Any) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False))


def _read_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"file {path!r} not found") from None
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path!r}: {exc}") from None


# -- scenario / gateway ----------------------------------------------------


def cmd_scenario(args: argparse.Namespace) -> int:
    faults = None
    if args.drop or args.drop_rate:
        faults = FaultPlan(drop_rate=args.drop_rate, drop_types=frozenset(args.drop), seed=args.seed)
    started = time.perf_counter()
    report = run_scenario(args.seed, faults)
    elapsed = time.perf_counter() - started
    text = render_report(report)
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    status = report["status"]
    line = f"scenario music-store seed={args.seed}: {status}, vo {report.get('final-state', '-')}, {elapsed:.3f}s"
    if status != "completed":
        line += f", failed at {report['failed-step']}: {report['error']['message']}"
    print(line, file=sys.stderr)
    return EXIT_OK if status == "completed" else EXIT_FAIL


def cmd_gateway_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if config.journal is not None:
        registry = Registry.open(config.journal, config.snapshot)
    else:
        registry = Registry()
    node = GatewayNode(
        config.gateway_id,
        config.role,
        registry=registry,
        weights=config.weights,
        depth_limit=config.depth_limit,
        max_rounds=config.max_rounds,
    )
    node.peers.register(STS_PEER, simulated_public_key(STS_PEER))
    if config.catalog == "music-store" and not registry.snapshot().descriptors():
        publish_catalog(registry)
    for definition in config.profiles:
        node.define_profile(definition)
    ready = {
        "gateway-id": config.gateway_id,
        "listen": config.listen,
        "capabilities": len(registry.snapshot().descriptors()),
        "architectures": len(registry.snapshot().architecture_list()),
        "profiles": sorted(node.definitions),
    }
    address = config.tcp_address
    if address is None:
        _emit({"status": "ready", **ready})
        return EXIT_OK
    server = LoopbackServer(config.gateway_id, node.handle_frame, *address)
    host, port = server.address
    _emit({"status": "listening", **ready, "address": f"tcp://{host}:{port}"})
    sys.stdout.flush()
    try:
        if args.serve_seconds is not None:
            server.start()
            time.sleep(args.serve_seconds)
        else:
            server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        if args.serve_seconds is not None:
            server.shutdown()
        server.server_close()
    return EXIT_OK


# -- registry / plan -------------------------------------------------------


def cmd_registry_publish(args: argparse.Namespace) -> int:
    registry = Workspace(args.state).registry()
    published: list[str] = []
    if args.builtin:
        publish_catalog(registry)
        published.append("music-store catalog")
    if args.file:
        doc = _read_json(args.file)
        items = doc if isinstance(doc, list) else [doc]
        for item in items:
            if not isinstance(item, dict):
                raise UsageError("each published item must be a JSON object")
            if "instance-id" in item:
                registry.publish_capability(CapabilityDescriptor.from_doc(item))
                published.append(item["instance-id"])
            elif "mandatory" in item or "category" in item:
                registry.publish_architecture(ArchitectureDescription.from_doc(item))
                published.append(item.get("id", "?"))
            else:
                raise UsageError("item is neither a capability descriptor nor an architecture description")
    if not published:
        raise UsageError("give --file F or --builtin")
    _emit({"published": published, "seq": registry.snapshot().seq})
    return EXIT_OK


def cmd_registry_list(args: argparse.Namespace) -> int:
    snap = Workspace(args.state).registry().snapshot()
    kind = VasKind.parse(args.kind) if args.kind else None
    caps = [d.to_doc() for d in snap.descriptors() if kind is None or d.kind is kind]
    archs = [a.to_doc() for a in snap.architecture_list() if kind is None or kind in a.members or a.realizes is kind]
    _emit({"capabilities": caps, "architectures": archs})
    return EXIT_OK


def cmd_registry_checkpoint(args: argparse.Namespace) -> int:
    ws = Workspace(args.state)
    registry = ws.registry()
    registry.checkpoint(ws.snapshot_path)
    _emit({"snapshot": str(ws.snapshot_path), "seq": registry.snapshot().seq})
    return EXIT_OK


def _plan_doc(outcome: Any) -> dict[str, Any]:
    doc = outcome_summary(outcome)
    ccm = getattr(outcome, "ccm", None)
    if ccm is not None:
        doc["models"] = {"agcm": ccm.ascm.agcm.to_doc(), "ascm": ccm.ascm.to_doc(), "ccm": ccm.to_doc()}
        doc["deviation-list"] = [d.to_doc() for d in deviations_of(ccm.ascm)]
    return doc


def cmd_plan(args: argparse.Namespace) -> int:
    request = validate_profile_request(_read_json(args.request))
    if args.snapshot:
        try:
            snapshot = load_snapshot(args.snapshot)
        except FileNotFoundError:
            raise UsageError(f"snapshot {args.snapshot!r} not found") from None
        outcome = plan(request, snapshot)
    else:
        outcome = PredicationEngine(Workspace(args.state).registry()).plan(request)
    doc = _plan_doc(outcome)
    if args.json:
        _emit(doc)
    else:
        print(f"outcome: {doc['result']}")
        if "chain" in doc:
            print(f"chain: {' -> '.join(doc['chain'])}")
            print(f"instances: {', '.join(i['instance-id'] for i in doc['models']['ccm']['instance-bindings'])}")
            print(f"score: {doc['score']}")
            for d in doc["deviation-list"]:
                print(f"deviation: {canonical_json(d)}")
        if "error" in doc:
            print(f"error: {doc['error']['code']}: {doc['error']['message']}")
    return EXIT_FAIL if doc["result"] == "Failed" else EXIT_OK


# -- local gateway: profiles, messages, audit, trust ---------------------------


def cmd_profile_enact(args: argparse.Namespace) -> int:
    ws = Workspace(args.state)
    node = ws.local_node()
    request = validate_profile_request(_read_json(args.request))
    outcome = node.engine.plan(request)
    doc = _plan_doc(outcome)
    if doc["result"] == "Failed" or (doc["result"] == "ProposalPending" and not args.accept):
        _emit(doc)
        if doc["result"] == "ProposalPending":
            print("proposal pending: re-run with --accept to enact it", file=sys.stderr)
        return EXIT_FAIL
    if args.lifecycle == "Scheduled":
        if not args.window:
            raise UsageError("a Scheduled lifecycle needs at least one --window HH:MM-HH:MM")
        lifecycle = Lifecycle.scheduled(*(Window.parse(w) for w in args.window))
    else:
        lifecycle = Lifecycle.from_doc(args.lifecycle)
    cmd = {
        "op": "enact",
        "collab": args.collab,
        "ccm": outcome.ccm.to_doc(),
        "lifecycle": lifecycle.to_doc(),
        "roles": sorted(args.role),
    }
    profile = apply_local(node, cmd)
    ws.record("local", **cmd)
    _emit(profile.to_doc())
    return EXIT_OK


def cmd_profile_status(args: argparse.Namespace) -> int:
    node = Workspace(args.state).local_node()
    profiles = [p for p in node.factory.profiles() if p.collaboration_id == args.collab]
    if not profiles:
        _emit({"collaboration-id": args.collab, "profile": None})
        return EXIT_FAIL
    out = []
    for p in profiles:
        doc = p.to_doc()
        doc.pop("ccm")
        doc["ccm-id"] = p.ccm.ccm_id
        doc["counters"] = [{"slot-id": s, "invoked": i, "rejected": r} for s, i, r in node.factory.chain_counters(args.collab)]
        out.append(doc)
    _emit(out[0] if len(out) == 1 else out)
    return EXIT_OK


def cmd_send(args: argparse.Namespace) -> int:
    ws = Workspace(args.state)
    node = ws.local_node()
    headers = {}
    for item in args.header:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"header {item!r} must look like key=value")
        headers[key] = value
    try:
        payload = Path(args.payload).read_bytes() if args.payload else b""
    except FileNotFoundError:
        raise UsageError(f"payload file {args.payload!r} not found") from None
    envelope = MessageEnvelope(args.collab, Placement(args.direction), headers, payload)
    cmd = {"op": "send", "envelope": envelope.to_doc(), "at": args.at}
    result = apply_local(node, cmd)
    ws.record("local", **cmd)
    _emit(result.to_doc())
    return EXIT_OK if type(result).__name__ == "Forwarded" else EXIT_FAIL


def cmd_audit_dump(args: argparse.Namespace) -> int:
    node = Workspace(args.state).local_node()
    for line in node.factory.audit.lines(args.collab):
        print(line)
    return EXIT_OK


def cmd_trust_add(args: argparse.Namespace) -> int:
    ws = Workspace(args.state)
    node = ws.local_node()
    key = args.key or simulated_public_key(args.seed or args.fip)
    cmd = {"op": "trust-add", "fip": args.fip, "key": key}
    apply_local(node, cmd)
    ws.record("local", **cmd)
    _emit({"trusted": node.trust.trusted()})
    return EXIT_OK


# -- VO lifecycle over the built-in music-store topology ---------------------


def _vo_step(args: argparse.Namespace, cmd: dict[str, Any]) -> Any:
    ws = Workspace(args.state)
    topo = ws.topology()
    result = apply_vo(topo, cmd)
    ws.record("vo", **cmd)
    return topo, result


def cmd_vo_create(args: argparse.Namespace) -> int:
    process = None if args.empty else [s.to_doc() for s in PROCESS]
    if args.process:
        process = _read_json(args.process)
    cmd = {"op": "create", "name": args.name, "initiator": args.initiator, "profile": args.profile, "process": process}
    _, vo = _vo_step(args, cmd)
    _emit(vo.to_doc())
    return EXIT_OK


def cmd_vo_invite(args: argparse.Namespace) -> int:
    _, invitation = _vo_step(args, {"op": "invite", "vo": args.vo, "partner": args.partner})
    _emit({"invitation": invitation})
    return EXIT_OK


def cmd_vo_respond(args: argparse.Namespace) -> int:
    if args.accept == args.decline:
        raise UsageError("give exactly one of --accept and --decline")
    if args.accept and not args.profile:
        raise UsageError("--accept needs --profile")
    cmd = {"op": "respond", "invitation": args.invitation, "accept": args.accept, "profile": args.profile}
    _, roster = _vo_step(args, cmd)
    _emit({p: e.to_doc() for p, e in sorted(roster.items())})
    return EXIT_OK


def cmd_vo_finalize(args: argparse.Namespace) -> int:
    _, vo = _vo_step(args, {"op": "finalize", "vo": args.vo})
    _emit(vo.to_doc())
    return EXIT_OK


def cmd_vo_adapt(args: argparse.Namespace) -> int:
    change = _read_json(args.change)
    if not isinstance(change, dict):
        raise UsageError("a change document must be a JSON object")
    initiator = args.initiator or change.get("initiator") or change_subject(change)
    change = {k: v for k, v in change.items() if k != "initiator"}
    try:
        cmd = {"op": "adapt", "vo": args.vo, "initiator": initiator, "change": change}
        _, vo = _vo_step(args, cmd)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad change document: {exc}") from None
    _emit(vo.to_doc())
    return EXIT_OK


def cmd_vo_dissolve(args: argparse.Namespace) -> int:
    _, vo = _vo_step(args, {"op": "dissolve", "vo": args.vo, "initiator": args.initiator})
    _emit(vo.to_doc())
    return EXIT_OK


def cmd_vo_status(args: argparse.Namespace) -> int:
    topo = Workspace(args.state).topology()
    vo = topo.host.host_vos().status(args.vo)
    doc = vo.to_doc()
    members = {}
    for p in vo.accepted():
        node = topo.nodes[p]
        collab = vo.collaboration_ids.get(p)
        profile = node.factory.profile(collab) if collab else None
        members[p] = {
            "cards": sorted(c.partner_id for c in node.vo_cards.get(args.vo, [])),
            "trusted": node.trust.trusted(),
            "chain": list(profile.chain_slots) if profile else None,
        }
    doc["member-gateways"] = members
    _emit(doc)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vasgw", description="B2B gateway with value-adding-service profiles")
    parser.add_argument("--state", default=".vasgw", help="workspace directory for CLI state (default: .vasgw)")
    groups = parser.add_subparsers(dest="group", required=True)

    sc = groups.add_parser("scenario", help="run a built-in scenario")
    sc_sub = sc.add_subparsers(dest="name", required=True)
    ms = sc_sub.add_parser("music-store", help="the jazz music store federation")
    ms.add_argument("--seed", type=int, default=1)
    ms.add_argument("--report", help="write the JSON report here instead of stdout")
    ms.add_argument("--drop", action="append", default=[], metavar="FRAME-TYPE", help="drop every frame of this type")
    ms.add_argument("--drop-rate", type=float, default=0.0, help="random drop probability per frame")
    ms.set_defaults(func=cmd_scenario)

    gw = groups.add_parser("gateway", help="run a gateway")
    gw_sub = gw.add_subparsers(dest="command", required=True)
    run = gw_sub.add_parser("run")
    run.add_argument("--config", required=True)
    run.add_argument("--serve-seconds", type=float, help="stop a tcp listener after this long")
    run.set_defaults(func=cmd_gateway_run)

    reg = groups.add_parser("registry", help="capability and architecture registries")
    reg_sub = reg.add_subparsers(dest="command", required=True)
    pub = reg_sub.add_parser("publish")
    pub.add_argument("--file", help="descriptor, architecture, or a list of them (JSON)")
    pub.add_argument("--builtin", action="store_true", help="publish the music-store catalog")
    pub.set_defaults(func=cmd_registry_publish)
    ls = reg_sub.add_parser("list")
    ls.add_argument("--kind")
    ls.set_defaults(func=cmd_registry_list)
    cp = reg_sub.add_parser("checkpoint")
    cp.set_defaults(func=cmd_registry_checkpoint)

    pl = groups.add_parser("plan", help="plan a profile request")
    pl.add_argument("--request", required=True)
    pl.add_argument("--snapshot")
    pl.add_argument("--json", action="store_true")
    pl.set_defaults(func=cmd_plan)

    prof = groups.add_parser("profile", help="secured profiles on the local gateway")
    prof_sub = prof.add_subparsers(dest="command", required=True)
    en = prof_sub.add_parser("enact")
    en.add_argument("--request", required=True)
    en.add_argument("--collab", required=True)
    en.add_argument("--lifecycle", choices=["Eager", "OnDemand", "Scheduled"], default="Eager")
    en.add_argument("--window", action="append", default=[], help="HH:MM-HH:MM, for Scheduled")
    en.add_argument("--accept", action="store_true", help="accept a pending proposal")
    en.add_argument("--role", action="append", default=[], help="sender role the authorisation handler admits")
    en.set_defaults(func=cmd_profile_enact)
    st = prof_sub.add_parser("status")
    st.add_argument("--collab", required=True)
    st.set_defaults(func=cmd_profile_status)

    send = groups.add_parser("send", help="push one message through the local gateway")
    send.add_argument("--collab", required=True)
    send.add_argument("--payload")
    send.add_argument("--header", action="append", default=[])
    send.add_argument("--direction", choices=["request", "response"], default="request")
    send.add_argument("--at", help="ISO time to set the gateway clock to first")
    send.set_defaults(func=cmd_send)

    au = groups.add_parser("audit", help="audit log")
    au_sub = au.add_subparsers(dest="command", required=True)
    dump = au_sub.add_parser("dump")
    dump.add_argument("--collab")
    dump.set_defaults(func=cmd_audit_dump)

    tr = groups.add_parser("trust", help="trust store")
    tr_sub = tr.add_subparsers(dest="command", required=True)
    add = tr_sub.add_parser("add")
    add.add_argument("--fip", required=True)
    add.add_argument("--key")
    add.add_argument("--seed", help="derive a simulated key from this seed")
    add.set_defaults(func=cmd_trust_add)

    vo = groups.add_parser("vo", help="virtual organisations on the music-store topology")
    vo_sub = vo.add_subparsers(dest="command", required=True)
    cr = vo_sub.add_parser("create")
    cr.add_argument("--name", required=True)
    cr.add_argument("--initiator", default=OPERATOR)
    cr.add_argument("--profile", help="the initiator's own VAS profile")
    cr.add_argument("--process", help="JSON list of {role, business-function} steps")
    cr.add_argument("--empty", action="store_true", help="leave the VO Empty (no process attached)")
    cr.set_defaults(func=cmd_vo_create)
    inv = vo_sub.add_parser("invite")
    inv.add_argument("--vo", required=True)
    inv.add_argument("--partner", required=True)
    inv.set_defaults(func=cmd_vo_invite)
    rs = vo_sub.add_parser("respond")
    rs.add_argument("--invitation", required=True)
    rs.add_argument("--accept", action="store_true")
    rs.add_argument("--decline", action="store_true")
    rs.add_argument("--profile")
    rs.set_defaults(func=cmd_vo_respond)
    fin = vo_sub.add_parser("finalize")
    fin.add_argument("--vo", required=True)
    fin.set_defaults(func=cmd_vo_finalize)
    ad = vo_sub.add_parser("adapt")
    ad.add_argument("--vo", required=True)
    ad.add_argument("--change", required=True)
    ad.add_argument("--initiator")
    ad.set_defaults(func=cmd_vo_adapt)
    ds = vo_sub.add_parser("dissolve")
    ds.add_argument("--vo", required=True)
    ds.add_argument("--initiator", default=OPERATOR)
    ds.set_defaults(func=cmd_vo_dissolve)
    vs = vo_sub.add_parser("status")
    vs.add_argument("--vo", required=True)
    vs.set_defaults(func=cmd_vo_status)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MalformedDocument as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG
    except VasError as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
