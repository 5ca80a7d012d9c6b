"""Wire protocol, transports, and the remote tracker client.

The peer for most tests is tests/stub_server.py; the golden transcript
fixture pins the exact bytes any conforming server must produce.
"""

import random
import shlex
import shutil
import socket
import socketserver
import struct
import subprocess
import sys
import threading
from pathlib import Path

import pytest

from trackbank import TrackingEnv, connect_remote_tracker, rollout
from trackbank.baselines import FifoPolicy
from trackbank.bridge import (
    BridgeConnection,
    PROTOCOL_VERSION,
    close_message,
    dump_message,
    format_number,
    init_message,
    open_endpoint,
    parse_message,
    predict_message,
    remote_predict,
    reset_message,
)
from trackbank.errors import (
    BridgeConnectionError,
    ConfigurationError,
    ProtocolError,
)
from trackbank.trackers import ScriptedTracker, ScriptedTable

from helpers import flat_video, pivotal_table, table_from_fn

HERE = Path(__file__).parent
STUB = HERE / "stub_server.py"
TABLE = HERE / "fixtures" / "pivotal_table.tsv"
TRANSCRIPT = HERE / "fixtures" / "golden_transcript.txt"


def stub_endpoint(table=TABLE, extra=""):
    cmd = f"{shlex.quote(sys.executable)} {shlex.quote(str(STUB))} --table {shlex.quote(str(table))}"
    if extra:
        cmd += f" {extra}"
    return f"cmd:{cmd}"


# ------------------------------------------------------- number format


@pytest.mark.parametrize(
    "value,expected",
    [
        (0, "0"),
        (-0.0, "0"),
        (3, "3"),
        (1.0, "1"),
        (-2.0, "-2"),
        (0.5, "0.5"),
        (0.25, "0.25"),
        (0.1, "0.1"),
        (-0.125, "-0.125"),
        (1e-6, "0.000001"),
        (1.5e-7, "1.5e-7"),
        (1e-7, "1e-7"),
        (1e21, "1e+21"),
        (1.2345678901234568e20, "123456789012345680000"),
        (42, "42"),
    ],
)
def test_numbers_format_the_way_javascript_prints_them(value, expected):
    assert format_number(value) == expected


@pytest.mark.skipif(shutil.which("node") is None, reason="node not on PATH")
def test_number_formatting_agrees_with_a_javascript_runtime():
    rng = random.Random(7)
    values = [0.0, -0.0, 1.0, 0.5, 1e15, 1e16, 9007199254740992.0, 2.0**60,
              1e20, 1e21, 1e-6, 1e-7, 9.999e-7, 5e-324, 1.7976931348623157e308]
    for _ in range(60):
        values.append(rng.uniform(-1, 1) * 10 ** rng.randint(-300, 300))
    bits = [struct.unpack("<Q", struct.pack("<d", v))[0] for v in values]
    script = (
        "const dv=new DataView(new ArrayBuffer(8));"
        "const bits=[" + ",".join(f'"{x:016x}"' for x in bits) + "];"
        "for (const h of bits) { dv.setBigUint64(0, BigInt('0x'+h));"
        " console.log(String(dv.getFloat64(0))); }"
    )
    out = subprocess.run(
        ["node", "-e", script], capture_output=True, text=True, timeout=60
    )
    assert out.returncode == 0, out.stderr
    assert out.stdout.splitlines() == [format_number(v) for v in values]


def test_number_formatting_rejects_booleans_and_nonfinite_values():
    with pytest.raises(ConfigurationError):
        format_number(True)
    with pytest.raises(ConfigurationError):
        format_number(float("nan"))
    with pytest.raises(ConfigurationError):
        format_number(float("inf"))


# ----------------------------------------------------------- messages


def test_message_encodings_are_pinned():
    assert (
        dump_message(init_message("clip", 4, 2))
        == '{"kind":"init","version":"v1","video_id":"clip","T":4,"N":2}'
    )
    assert dump_message(predict_message(2, (0, 1))) == '{"kind":"predict","t":2,"bank":[0,1]}'
    assert dump_message(reset_message()) == '{"kind":"reset"}'
    assert dump_message(close_message()) == '{"kind":"close"}'
    assert PROTOCOL_VERSION == "v1"


def test_parse_message_round_trips_and_rejects_junk():
    msg = parse_message('{"kind":"predict","t":2,"bank":[0,1]}')
    assert msg == {"kind": "predict", "t": 2, "bank": [0, 1]}
    with pytest.raises(ProtocolError):
        parse_message("not json")
    with pytest.raises(ProtocolError):
        parse_message("[1,2]")
    with pytest.raises(ProtocolError):
        parse_message('{"t":2}')


def test_endpoint_grammar_is_validated():
    with pytest.raises(ConfigurationError):
        open_endpoint("ftp://nope")
    with pytest.raises(ConfigurationError):
        open_endpoint("tcp:justahost")
    with pytest.raises(ConfigurationError):
        open_endpoint("tcp:host:notaport")


# ------------------------------------------------------- stdio bridge


def test_remote_tracker_replays_the_table_exactly():
    video = flat_video(4)
    with connect_remote_tracker(stub_endpoint(), video, capacity=2) as remote:
        remote_trace = rollout(TrackingEnv(video, remote, capacity=2), FifoPolicy().select)
        again = rollout(TrackingEnv(video, remote, capacity=2), FifoPolicy().select)
    local = rollout(
        TrackingEnv(video, ScriptedTracker(pivotal_table()), capacity=2),
        FifoPolicy().select,
    )
    assert [s.reward for s in remote_trace.steps] == [s.reward for s in local.steps]
    assert remote_trace.final_return == local.final_return == 0.95
    assert [s.reward for s in again.steps] == [s.reward for s in remote_trace.steps]


def test_fractional_scores_cross_the_wire_unchanged(tmp_path):
    table = table_from_fn(3, 2, lambda t, slots: (0.42, False))
    path = tmp_path / "flat42.tsv"
    table.save(path)
    conn = open_endpoint(stub_endpoint(table=path))
    try:
        assert conn.request(init_message("x", 3, 2))["kind"] == "predict_result"
        assert remote_predict(conn, 1, [0]) == (0.42, False)
    finally:
        conn.request(close_message())
        conn.close()


def test_connecting_to_a_dead_command_fails_loudly():
    video = flat_video(4)
    endpoint = f"cmd:{shlex.quote(sys.executable)} -c 'import sys; sys.exit(0)'"
    with pytest.raises(BridgeConnectionError):
        connect_remote_tracker(endpoint, video, capacity=2)


def test_a_stalled_server_trips_the_timeout():
    video = flat_video(4)
    code = "import time,sys; sys.stdin.readline(); time.sleep(1.5)"
    endpoint = f"cmd:{shlex.quote(sys.executable)} -c {shlex.quote(code)}"
    with pytest.raises(BridgeConnectionError, match="timed out"):
        connect_remote_tracker(endpoint, video, capacity=2, timeout=0.2)


def test_version_rejection_surfaces_as_a_protocol_error():
    conn = open_endpoint(stub_endpoint())
    try:
        bad_init = dict(init_message("clip", 4, 2), version="v2")
        response = conn.request(bad_init)
        assert response["kind"] == "error"
        assert response["code"] == "version"
        assert response["message"] == "unsupported protocol version 'v2'"
    finally:
        conn.close()


def test_init_must_match_what_the_table_covers():
    video = flat_video(5)
    with pytest.raises(ProtocolError, match="table covers T=4 N=2"):
        connect_remote_tracker(stub_endpoint(), video, capacity=2)


def test_predicting_out_of_order_is_an_order_error():
    conn = open_endpoint(stub_endpoint())
    try:
        conn.request(init_message("clip", 4, 2))
        assert conn.request(predict_message(2, [0, 1]))["kind"] == "predict_result"
        response = conn.request(predict_message(1, [0]))
        assert response["kind"] == "error"
        assert response["code"] == "order"
        assert response["message"] == "t must increase within an episode: got 1 after 2"
    finally:
        conn.close()


def test_clients_reject_out_of_range_scores():
    video = flat_video(4)
    with connect_remote_tracker(
        stub_endpoint(extra="--corrupt-q"), video, capacity=2
    ) as remote:
        with pytest.raises(ProtocolError, match=r"q=1\.5"):
            rollout(TrackingEnv(video, remote, capacity=2), FifoPolicy().select)


def test_garbage_lines_do_not_poison_the_connection():
    conn = open_endpoint(stub_endpoint())
    try:
        for garbage in ("}{", "null", '"just a string"', '{"no_kind":1}'):
            conn.transport.send_line(garbage)
            response = parse_message(conn.transport.recv_line(conn.timeout))
            assert response["kind"] == "error"
            assert response["code"] == "parse"
            assert response["message"] == "invalid message line"
        unknown = conn.request({"kind": "frobnicate"})
        assert unknown["kind"] == "error"
        assert unknown["code"] == "unknown"
        assert conn.request(init_message("clip", 4, 2))["kind"] == "predict_result"
    finally:
        conn.close()


def test_blank_lines_are_ignored_by_the_server():
    conn = open_endpoint(stub_endpoint())
    try:
        conn.transport.send_line("")
        conn.transport.send_line("   ")
        assert conn.request(init_message("clip", 4, 2))["kind"] == "predict_result"
    finally:
        conn.close()


# ---------------------------------------------------------------- tcp


class _StubTCPHandler(socketserver.StreamRequestHandler):
    def handle(self):
        from stub_server import Server

        server = Server(ScriptedTable.load(TABLE))
        for raw in self.rfile:
            response, keep_going = server.handle(raw.decode("utf-8").rstrip("\n"))
            if response is not None:
                self.wfile.write((dump_message(response) + "\n").encode("utf-8"))
                self.wfile.flush()
            if not keep_going:
                return


def test_tcp_endpoints_speak_the_same_protocol():
    server = socketserver.ThreadingTCPServer(("127.0.0.1", 0), _StubTCPHandler)
    port = server.server_address[1]
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        video = flat_video(4)
        with connect_remote_tracker(f"tcp:127.0.0.1:{port}", video, capacity=2) as remote:
            trace = rollout(TrackingEnv(video, remote, capacity=2), FifoPolicy().select)
        assert trace.final_return == 0.95
    finally:
        server.shutdown()
        server.server_close()


def test_refused_tcp_connections_fail_loudly():
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    with pytest.raises(BridgeConnectionError):
        open_endpoint(f"tcp:127.0.0.1:{port}", timeout=2.0)


# ------------------------------------------------------- golden bytes


def read_transcript(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    assert len(lines) % 2 == 0, "transcript must pair every request with a response"
    pairs = []
    for i in range(0, len(lines), 2):
        assert lines[i].startswith("C ") and lines[i + 1].startswith("S "), i
        pairs.append((lines[i][2:], lines[i + 1][2:]))
    return pairs


def run_transcript(command, pairs):
    """Feed each request line to the process; collect one response per request."""
    proc = subprocess.Popen(
        command, stdin=subprocess.PIPE, stdout=subprocess.PIPE
    )
    got = []
    try:
        for request, _ in pairs:
            proc.stdin.write((request + "\n").encode("utf-8"))
            proc.stdin.flush()
            line = proc.stdout.readline()
            assert line.endswith(b"\n"), f"no response to {request!r}"
            got.append(line[:-1].decode("utf-8"))
        proc.stdin.close()
        assert proc.wait(timeout=10) == 0
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.wait()
    return got

def test_stub_server_matches_the_golden_transcript():
    pairs = read_transcript(TRANSCRIPT)
    assert len(pairs) == 15
    responses = run_transcript(
        [sys.executable, str(STUB), "--table", str(TABLE)], pairs
    )
    assert responses == [expected for _, expected in pairs]
