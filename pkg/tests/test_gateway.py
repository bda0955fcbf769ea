from __future__ import annotations

import io
import json
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vasgw.errors import ConfigError, Dropped, ProtocolViolation, UnknownGateway
from vasgw.gateway.cli import main as cli
from vasgw.gateway.config import load_config, parse_config
from vasgw.gateway.frames import FRAME_TYPES, Frame, decode, decode_prefix, encode, read_frame
from vasgw.gateway.loopback import LoopbackClient, LoopbackServer
from vasgw.gateway.network import FaultPlan, SimNetwork
from vasgw.gateway.scenario import run_scenario

# -- frames ------------------------------------------------------------------------

json_values = st.recursive(
    st.none() | st.booleans() | st.integers(-(2**40), 2**40) | st.text(max_size=20),
    lambda inner: st.lists(inner, max_size=4) | st.dictionaries(st.text(max_size=8), inner, max_size=4),
    max_leaves=12,
)
frames = st.builds(
    Frame,
    st.sampled_from(sorted(FRAME_TYPES)),
    st.text(max_size=30),
    st.text(max_size=30),
    st.dictionaries(st.text(max_size=8), json_values, max_size=5),
)


@given(frames)
@settings(max_examples=300)
def test_frame_round_trip(frame):
    wire = encode(frame)
    assert decode(wire) == frame
    assert decode(wire).body == frame.body
    assert int.from_bytes(wire[:4], "big") == len(wire) - 4


@given(st.lists(frames, max_size=6))
@settings(max_examples=100)
def test_stream_of_frames(batch):
    stream = io.BytesIO(b"".join(encode(f) for f in batch))
    read = []
    while (f := read_frame(stream)) is not None:
        read.append(f)
    assert read == batch


def test_partial_and_bad_frames():
    wire = encode(Frame("ping", "r", "a"))
    assert decode_prefix(wire[:3]) == (None, wire[:3])
    assert decode_prefix(wire[:-1])[0] is None
    with pytest.raises(ProtocolViolation):
        decode(wire + b"x")
    with pytest.raises(ProtocolViolation):
        read_frame(io.BytesIO(wire[:-2]))
    with pytest.raises(ProtocolViolation):
        decode(len(b"{oops").to_bytes(4, "big") + b"{oops")
    with pytest.raises(ProtocolViolation):
        Frame("shout", "r", "a")
    doc = Frame("ping", "r", "a").to_doc()
    doc["version"] = 2
    payload = json.dumps(doc).encode()
    with pytest.raises(ProtocolViolation):
        decode(len(payload).to_bytes(4, "big") + payload)


# -- simulated network --------------------------------------------------------------


def _echo(name: str, seen: list):
    def handle(frame: Frame) -> Frame:
        seen.append((frame.sender, frame.body["n"]))
        return frame.reply("ack", name, {"n": frame.body["n"]})

    return handle


@pytest.mark.parametrize("mode", ["deterministic", "threaded"])
def test_network_keeps_pair_fifo(mode):
    net = SimNetwork(mode)
    seen: list = []
    net.register("b", _echo("b", seen))
    for sender in ("a1", "a2", "a3"):
        net.register(sender, _echo(sender, []))

    def pump(sender: str) -> None:
        futures = [net.send(sender, "b", Frame("ping", "x", sender, {"n": i})) for i in range(50)]
        assert [f.result(10).body["n"] for f in futures] == list(range(50))

    threads = [threading.Thread(target=pump, args=(s,)) for s in ("a1", "a2", "a3")]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    net.close()
    for sender in ("a1", "a2", "a3"):
        assert [n for s, n in seen if s == sender] == list(range(50))
    assert len(net.deliveries) == 150


def test_network_unknown_gateway_and_drops():
    net = SimNetwork(faults=FaultPlan(drop_rate=1.0))
    net.register("a", _echo("a", []))
    net.register("b", _echo("b", []))
    with pytest.raises(UnknownGateway):
        net.send("a", "nowhere", Frame("ping", "x", "a", {"n": 0}))
    with pytest.raises(Dropped):
        net.route("a", "b", Frame("ping", "x", "a", {"n": 0}))
    assert len(net.dropped) == 1 and not net.deliveries
    with pytest.raises(ValueError):
        FaultPlan(drop_rate=1.5)


def test_network_drop_by_type_and_link():
    net = SimNetwork(faults=FaultPlan(drop_types=frozenset({"invitation"}), links=frozenset({("a", "b")})))
    net.register("a", _echo("a", []))
    net.register("b", _echo("b", []))
    with pytest.raises(Dropped):
        net.route("a", "b", Frame("invitation", "x", "a", {"n": 1}))
    assert net.route("b", "a", Frame("invitation", "x", "b", {"n": 2})).body == {"n": 2}
    assert net.route("a", "b", Frame("ping", "x", "a", {"n": 3})).body == {"n": 3}


def test_seeded_drops_are_reproducible():
    def run() -> list[int]:
        net = SimNetwork(faults=FaultPlan(drop_rate=0.5, seed=9))
        net.register("a", _echo("a", []))
        net.register("b", _echo("b", []))
        for i in range(40):
            net.send("a", "b", Frame("ping", "x", "a", {"n": i}))
        return [d.seq for d in net.dropped]

    first = run()
    assert first == run()
    assert 0 < len(first) < 40


# -- loopback ----------------------------------------------------------------------------


def test_loopback_round_trip():
    server = LoopbackServer("b", _echo("b", []))
    server.start()
    try:
        with LoopbackClient(*server.address) as client:
            replies = [client.route(Frame("ping", "r", "a", {"n": i})) for i in range(5)]
        assert [r.body["n"] for r in replies] == list(range(5))
        assert all(r.sender == "b" for r in replies)
    finally:
        server.shutdown()
        server.server_close()


# -- configuration -----------------------------------------------------------------------


@pytest.mark.parametrize(
    "doc",
    [
        [],
        {},
        {"gateway-id": ""},
        {"gateway-id": "g", "colour": "red"},
        {"gateway-id": "g", "role": "pirate"},
        {"gateway-id": "g", "listen": "http://x"},
        {"gateway-id": "g", "listen": "tcp://localhost:99999"},
        {"gateway-id": "g", "depth-limit": 0},
        {"gateway-id": "g", "max-rounds": True},
        {"gateway-id": "g", "weights": {"failure": -1}},
        {"gateway-id": "g", "weights": {"speed": 1}},
        {"gateway-id": "g", "catalog": "bookshop"},
        {"gateway-id": "g", "registry": {"snapshot": "missing.json"}},
        {"gateway-id": "g", "profiles": [{"ref": "p"}]},
    ],
)
def test_config_errors(doc, tmp_path):
    with pytest.raises(ConfigError):
        parse_config(doc, tmp_path)


def test_config_defaults_and_paths(tmp_path):
    cfg = parse_config({"gateway-id": "g", "listen": "tcp://127.0.0.1:0", "registry": {"journal": "j.log"}}, tmp_path)
    assert cfg.tcp_address == ("127.0.0.1", 0)
    assert cfg.journal == tmp_path / "j.log"
    assert cfg.max_rounds == 4 and cfg.role.value == "infrastructure-provider"
    (tmp_path / "bad.json").write_text("{nope")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")


# -- scenario --------------------------------------------------------------------------------


def test_scenario_federates_and_forwards():
    report = run_scenario(1)
    assert report["status"] == "completed"
    steps = {s["step"]: s for s in report["steps"]}
    assert len(set(steps["finalize_federation"]["collaboration-ids"].values())) == 3
    traffic = steps["traffic"]
    assert traffic["outcomes"] == {"Forwarded": traffic["sent"]}
    assert steps["adapt_vo"]["other-profile-untouched"]
    assert steps["invalid_token"]["result"] == "Rejected"
    assert report["final-state"] == "Operational"


def test_scenario_aborts_when_creation_orders_are_lost():
    report = run_scenario(1, FaultPlan(drop_types=frozenset({"creation-order"})))
    assert report["status"] == "aborted"
    assert report["failed-step"] == "finalize_federation"
    assert report["error"]["code"] == "dropped"
    # nothing was committed: the VO is still inviting, with no edges
    assert report["final-state"] == "Inviting"
    assert report["vo"]["trust-edges"] == []


# -- command line ----------------------------------------------------------------------------


def _run(capsys, *argv: str) -> tuple[int, str, str]:
    code = cli(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_exit_codes(tmp_path, capsys):
    assert _run(capsys, "--state", str(tmp_path), "no-such-command")[0] == 2
    assert _run(capsys, "--state", str(tmp_path), "plan", "--request", str(tmp_path / "missing.json"))[0] == 2
    (tmp_path / "bad.json").write_text(json.dumps({"owner-id": "a", "resource-id": "b", "wanted": []}))
    assert _run(capsys, "--state", str(tmp_path), "plan", "--request", str(tmp_path / "bad.json"))[0] == 2
    (tmp_path / "cfg.json").write_text(json.dumps({"gateway-id": "g", "role": "pirate"}))
    assert _run(capsys, "gateway", "run", "--config", str(tmp_path / "cfg.json"))[0] == 2
    code, _, err = _run(capsys, "--state", str(tmp_path / "ws"), "vo", "finalize", "--vo", "ghost")
    assert code == 1 and "unknown-vo" in err


def test_cli_plan_and_local_gateway(tmp_path, capsys):
    ws = str(tmp_path / "ws")
    assert _run(capsys, "--state", ws, "registry", "publish", "--builtin")[0] == 0
    req = tmp_path / "req.json"
    req.write_text(json.dumps({"owner-id": "shop", "resource-id": "cat", "wanted": ["authentication", "authorisation", "audit"], "adaptability": "Open"}))
    code, out, _ = _run(capsys, "--state", ws, "plan", "--request", str(req), "--json")
    doc = json.loads(out)
    assert code == 0 and doc["result"] == "Ready"
    code, out, _ = _run(capsys, "--state", ws, "profile", "enact", "--request", str(req), "--collab", "c1", "--role", "operator")
    assert code == 0 and json.loads(out)["collaboration-id"] == "c1"
    code, out, _ = _run(capsys, "--state", ws, "trust", "add", "--fip", "fip.shop")
    assert code == 0 and "fip.shop" in json.loads(out)["trusted"]
    code, out, _ = _run(capsys, "--state", ws, "send", "--collab", "c1", "--header", "sender-role=operator")
    assert code == 1 and json.loads(out)["outcome"] == "Rejected"
    code, out, _ = _run(capsys, "--state", ws, "send", "--collab", "nope")
    assert code == 1 and json.loads(out)["outcome"] == "NoProfile"
    code, out, _ = _run(capsys, "--state", ws, "audit", "dump", "--collab", "c1")
    assert code == 0 and len(out.splitlines()) >= 1
    assert _run(capsys, "--state", ws, "profile", "status", "--collab", "c1")[0] == 0
    assert _run(capsys, "--state", ws, "profile", "status", "--collab", "nope")[0] == 1


def test_cli_vo_lifecycle(tmp_path, capsys):
    ws = ["--state", str(tmp_path / "ws")]
    code, out, _ = _run(capsys, *ws, "vo", "create", "--name", "store", "--profile", "storefront-watch")
    assert code == 0 and json.loads(out)["state"] == "Configured"
    invitations = {}
    for label, profile in (("label-blue", "strict-authz"), ("label-swing", "metered-access")):
        code, out, _ = _run(capsys, *ws, "vo", "invite", "--vo", "store", "--partner", label)
        invitations[label] = json.loads(out)["invitation"]
        assert _run(capsys, *ws, "vo", "respond", "--invitation", invitations[label], "--accept", "--profile", profile)[0] == 0
    assert _run(capsys, *ws, "vo", "respond", "--invitation", invitations["label-blue"], "--accept")[0] == 2
    code, out, _ = _run(capsys, *ws, "vo", "finalize", "--vo", "store")
    assert code == 0 and json.loads(out)["state"] == "Operational"
    code, out, _ = _run(capsys, *ws, "vo", "status", "--vo", "store")
    doc = json.loads(out)
    assert len(doc["trust-edges"]) == 3
    assert all(len(m["cards"]) == 3 for m in doc["member-gateways"].values())
    code, _, err = _run(capsys, *ws, "vo", "dissolve", "--vo", "store", "--initiator", "label-blue")
    assert code == 1 and "not-authorized" in err
    code, out, _ = _run(capsys, *ws, "vo", "dissolve", "--vo", "store")
    assert code == 0 and json.loads(out)["state"] == "Dissolved"


def test_cli_scenario_report(tmp_path, capsys):
    out_file = tmp_path / "report.json"
    code, _, err = _run(capsys, "scenario", "music-store", "--seed", "1", "--report", str(out_file))
    assert code == 0 and "completed" in err
    assert json.loads(out_file.read_text())["status"] == "completed"
    code, _, err = _run(capsys, "scenario", "music-store", "--drop", "creation-order", "--report", str(out_file))
    assert code == 1 and "finalize_federation" in err


def test_cli_gateway_run_sim(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps({"gateway-id": "g1", "catalog": "music-store", "registry": {"journal": "j.log"}}))
    code, out, _ = _run(capsys, "gateway", "run", "--config", str(tmp_path / "cfg.json"))
    doc = json.loads(out)
    assert code == 0 and doc["status"] == "ready" and doc["capabilities"] > 0
    # the journal persisted the catalog, so a second boot does not republish
    code, out, _ = _run(capsys, "gateway", "run", "--config", str(tmp_path / "cfg.json"))
    assert json.loads(out)["capabilities"] == doc["capabilities"]
