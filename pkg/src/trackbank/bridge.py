"""Line-delimited JSON bridge to external tracker processes.

Version v1. Each request line receives exactly one response line, UTF-8,
newline-terminated. Requests: init, predict, reset, close. Responses:
predict_result or error; reset/close/init are acknowledged with a
predict_result-shaped line {"q":1,"predicted_empty":false}.

Numbers are formatted the way ECMAScript stringifies them (integral floats
without a decimal point, no zero-padded exponents) so both sides of the
bridge produce byte-identical lines for the same values. Key order is fixed
per message kind. docs/protocol.md holds the full contract.
"""

from __future__ import annotations

import json
import os
import selectors
import shlex
import socket
import subprocess
import time
from typing import Iterable

from .bank import MemoryBank
from .errors import BridgeConnectionError, ConfigurationError, ProtocolError
from .videos import VideoSpec

PROTOCOL_VERSION = "v1"
DEFAULT_TIMEOUT = 10.0

ERROR_CODES = ("version", "order", "state", "parse", "unknown")


def format_number(value: float | int) -> str:
    """Render a finite number the way JSON.stringify would."""
    if isinstance(value, bool):
        raise ConfigurationError("booleans are not numbers on the wire")
    if isinstance(value, int):
        return str(value)
    f = float(value)
    if f != f or f in (float("inf"), float("-inf")):
        raise ConfigurationError(f"cannot encode non-finite number {f}")
    if f == 0.0:
        return "0"
    text = repr(f)
    if "e" not in text:
        # repr is shortest round-trip, same digit string ECMAScript picks
        return text[:-2] if text.endswith(".0") else text
    mantissa, _, exp_text = text.partition("e")
    exp = int(exp_text)
    if -7 < exp < 21:
        return _positional(mantissa, exp)
    sign = "+" if exp > 0 else "-"
    return f"{mantissa}e{sign}{abs(exp)}"


def _positional(mantissa: str, exp: int) -> str:
    sign = ""
    if mantissa.startswith("-"):
        sign, mantissa = "-", mantissa[1:]
    digits = mantissa.replace(".", "")
    point = (mantissa.index(".") if "." in mantissa else len(mantissa)) + exp
    if point <= 0:
        return sign + "0." + "0" * (-point) + digits
    if point >= len(digits):
        return sign + digits + "0" * (point - len(digits))
    return sign + digits[:point] + "." + digits[point:]


def _encode_value(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return format_number(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_encode_value(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ",".join(
            f"{json.dumps(str(k), ensure_ascii=False)}:{_encode_value(v)}"
            for k, v in value.items()
        ) + "}"
    raise ConfigurationError(f"cannot encode {type(value).__name__} on the wire")


def dump_message(message: dict) -> str:
    """Compact one-line encoding; key order follows the dict's order."""
    return _encode_value(message)


def parse_message(line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed message line {line!r} ({exc})") from exc
    if not isinstance(obj, dict) or not isinstance(obj.get("kind"), str):
        raise ProtocolError(f"message must be an object with a string 'kind': {line!r}")
    return obj


def init_message(video_id: str, video_length: int, capacity: int) -> dict:
    return {
        "kind": "init",
        "version": PROTOCOL_VERSION,
        "video_id": video_id,
        "T": int(video_length),
        "N": int(capacity),
    }


def predict_message(t: int, frame_indices: Iterable[int]) -> dict:
    return {"kind": "predict", "t": int(t), "bank": [int(f) for f in frame_indices]}


def reset_message() -> dict:
    return {"kind": "reset"}


def close_message() -> dict:
    return {"kind": "close"}


def predict_result_message(q: float, predicted_empty: bool) -> dict:
    return {"kind": "predict_result", "q": q, "predicted_empty": bool(predicted_empty)}


def ack_message() -> dict:
    return predict_result_message(1, False)


def error_message(code: str, message: str) -> dict:
    if code not in ERROR_CODES:
        raise ConfigurationError(f"unknown error code {code!r}")
    return {"kind": "error", "code": code, "message": message}


class _LineTransport:
    """Newline-framed byte stream with deadline-based reads."""

    def __init__(self) -> None:
        self._buffer = b""

    def _read_chunk(self, deadline: float) -> bytes:
        raise NotImplementedError

    def _write(self, data: bytes) -> None:
        raise NotImplementedError

    def send_line(self, line: str) -> None:
        self._write(line.encode("utf-8") + b"\n")

    def recv_line(self, timeout: float) -> str:
        deadline = time.monotonic() + timeout
        while b"\n" not in self._buffer:
            chunk = self._read_chunk(deadline)
            if not chunk:
                raise BridgeConnectionError("bridge endpoint closed the connection")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line.decode("utf-8")

    def close(self) -> None:
        raise NotImplementedError


class StdioTransport(_LineTransport):
    """Child process speaking the protocol over its standard streams."""

    def __init__(self, command: list[str]) -> None:
        super().__init__()
        if not command:
            raise ConfigurationError("bridge command must be non-empty")
        self.command = command
        try:
            self.proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
        except OSError as exc:
            raise BridgeConnectionError(
                f"cannot spawn bridge command {' '.join(command)!r}: {exc}"
            ) from exc
        self._selector = selectors.DefaultSelector()
        self._selector.register(self.proc.stdout, selectors.EVENT_READ)

    def _write(self, data: bytes) -> None:
        try:
            self.proc.stdin.write(data)
            self.proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise BridgeConnectionError(
                f"bridge process {' '.join(self.command)!r} is not accepting input ({exc})"
            ) from exc

    def _read_chunk(self, deadline: float) -> bytes:
        remaining = deadline - time.monotonic()
        if remaining <= 0 or not self._selector.select(remaining):
            raise BridgeConnectionError(
                f"timed out waiting for bridge process {' '.join(self.command)!r}"
            )
        return os.read(self.proc.stdout.fileno(), 65536)

    def close(self) -> None:
        self._selector.close()
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        try:
            self.proc.wait(timeout=5.0)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()


class TcpTransport(_LineTransport):
    def __init__(self, host: str, port: int, timeout: float = DEFAULT_TIMEOUT) -> None:
        super().__init__()
        self.address = f"{host}:{port}"
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise BridgeConnectionError(
                f"cannot connect to bridge endpoint {self.address}: {exc}"
            ) from exc

    def _write(self, data: bytes) -> None:
        try:
            self.sock.sendall(data)
        except OSError as exc:
            raise BridgeConnectionError(
                f"bridge endpoint {self.address} is not accepting input ({exc})"
            ) from exc

    def _read_chunk(self, deadline: float) -> bytes:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise BridgeConnectionError(
                f"timed out waiting for bridge endpoint {self.address}"
            )
        self.sock.settimeout(remaining)
        try:
            return self.sock.recv(65536)
        except socket.timeout:
            raise BridgeConnectionError(
                f"timed out waiting for bridge endpoint {self.address}"
            ) from None
        except OSError as exc:
            raise BridgeConnectionError(
                f"error reading from bridge endpoint {self.address}: {exc}"
            ) from exc

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class BridgeConnection:
    """Strict request-response client over a line transport."""

    def __init__(self, transport: _LineTransport, timeout: float = DEFAULT_TIMEOUT) -> None:
        self.transport = transport
        self.timeout = timeout

    def request(self, message: dict) -> dict:
        self.transport.send_line(dump_message(message))
        return parse_message(self.transport.recv_line(self.timeout))

    def close(self) -> None:
        self.transport.close()


def open_endpoint(endpoint: str, timeout: float = DEFAULT_TIMEOUT) -> BridgeConnection:
    """Endpoint grammar: ``cmd:<command line>`` or ``tcp:<host>:<port>``."""
    if endpoint.startswith("cmd:"):
        command = shlex.split(endpoint[len("cmd:"):])
        return BridgeConnection(StdioTransport(command), timeout)
    if endpoint.startswith("tcp:"):
        rest = endpoint[len("tcp:"):]
        host, sep, port_text = rest.rpartition(":")
        if not sep or not host:
            raise ConfigurationError(
                f"tcp endpoint must look like tcp:host:port, got {endpoint!r}"
            )
        try:
            port = int(port_text)
        except ValueError:
            raise ConfigurationError(f"invalid port in endpoint {endpoint!r}") from None
        return BridgeConnection(TcpTransport(host, port, timeout), timeout)
    raise ConfigurationError(
        f"unrecognized endpoint {endpoint!r}; expected cmd:<command> or tcp:<host>:<port>"
    )


def _expect_ack(response: dict, context: str) -> None:
    if response.get("kind") == "error":
        raise ProtocolError(
            f"{context} rejected [{response.get('code')}]: {response.get('message')}"
        )
    if response.get("kind") != "predict_result":
        raise ProtocolError(
            f"{context} expected an acknowledgement, got {response.get('kind')!r}"
        )


def remote_predict(
    conn: BridgeConnection, t: int, frame_indices: Iterable[int]
) -> tuple[float, bool]:
    response = conn.request(predict_message(t, frame_indices))
    if response.get("kind") == "error":
        raise ProtocolError(
            f"remote error [{response.get('code')}]: {response.get('message')}"
        )
    if response.get("kind") != "predict_result":
        raise ProtocolError(
            f"expected predict_result, got {response.get('kind')!r}"
        )
    q = response.get("q")
    predicted_empty = response.get("predicted_empty")
    if isinstance(q, bool) or not isinstance(q, (int, float)) or not 0.0 <= q <= 1.0:
        raise ProtocolError(f"remote q={q!r} is not a number in [0, 1]")
    if not isinstance(predicted_empty, bool):
        raise ProtocolError(f"remote predicted_empty={predicted_empty!r} is not a boolean")
    return float(q), predicted_empty


class RemoteTracker:
    """Tracker served by an external process over the bridge.

    Lookahead queries (hypothetical banks, out-of-order timesteps) are not
    supported: the protocol pins t to be strictly increasing per episode.
    """

    supports_lookahead = False

    def __init__(
        self,
        conn: BridgeConnection,
        video_id: str,
        video_length: int,
        capacity: int,
    ) -> None:
        self.conn = conn
        self.video_id = video_id
        response = conn.request(init_message(video_id, video_length, capacity))
        _expect_ack(response, f"init for video '{video_id}'")

    def start_episode(self) -> None:
        _expect_ack(self.conn.request(reset_message()), "reset")

    def predict(self, t: int, bank: MemoryBank) -> tuple[float, bool]:
        return remote_predict(self.conn, t, bank.frame_indices)

    def close(self) -> None:
        try:
            _expect_ack(self.conn.request(close_message()), "close")
        finally:
            self.conn.close()

    def __enter__(self) -> "RemoteTracker":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def connect_remote_tracker(
    endpoint: str,
    video: VideoSpec,
    capacity: int,
    timeout: float = DEFAULT_TIMEOUT,
) -> RemoteTracker:
    conn = open_endpoint(endpoint, timeout)
    try:
        return RemoteTracker(conn, video.video_id, video.length, capacity)
    except Exception:
        conn.close()
        raise
