"""Reference bridge server backed by a scripted table.

Speaks the line-delimited JSON protocol on stdin/stdout: one response per
request, blank lines ignored, close acknowledged before exiting. Used by the
bridge tests as the canonical peer; the golden transcript fixture was
recorded against it.

Usage: python3 stub_server.py --table <file> [--corrupt-q]
"""

import argparse
import sys

from trackbank.bridge import (
    PROTOCOL_VERSION,
    ack_message,
    dump_message,
    error_message,
    predict_result_message,
)
from trackbank.trackers import ScriptedTable


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


class Server:
    def __init__(self, table: ScriptedTable, corrupt_q: bool = False) -> None:
        self.table = table
        self.corrupt_q = corrupt_q
        self.initialized = False
        self.last_t = None

    def handle(self, line: str) -> tuple[dict | None, bool]:
        """Response message (None for blank input) and whether to keep serving."""
        if not line.strip():
            return None, True
        try:
            import json

            message = json.loads(line)
        except ValueError:
            return error_message("parse", "invalid message line"), True
        if not isinstance(message, dict) or not isinstance(message.get("kind"), str):
            return error_message("parse", "invalid message line"), True
        kind = message["kind"]
        if kind == "init":
            return self._handle_init(message), True
        if kind == "predict":
            return self._handle_predict(message), True
        if kind == "reset":
            if not self.initialized:
                return error_message("state", "reset before init"), True
            self.last_t = None
            return ack_message(), True
        if kind == "close":
            return ack_message(), False
        return error_message("unknown", f"unknown message kind '{kind}'"), True

    def _handle_init(self, message: dict) -> dict:
        version = message.get("version")
        if not isinstance(version, str):
            return error_message("parse", "malformed init")
        if version != PROTOCOL_VERSION:
            return error_message("version", f"unsupported protocol version '{version}'")
        t_len, capacity = message.get("T"), message.get("N")
        if not _is_int(t_len) or not _is_int(capacity) or not isinstance(
            message.get("video_id"), str
        ):
            return error_message("parse", "malformed init")
        if t_len != self.table.video_length or capacity != self.table.capacity:
            return error_message(
                "state",
                f"table covers T={self.table.video_length} N={self.table.capacity}, "
                f"init requested T={t_len} N={capacity}",
            )
        self.initialized = True
        self.last_t = None
        return ack_message()

    def _handle_predict(self, message: dict) -> dict:
        if not self.initialized:
            return error_message("state", "predict before init")
        t, bank = message.get("t"), message.get("bank")
        if (
            not _is_int(t)
            or not isinstance(bank, list)
            or not all(_is_int(f) for f in bank)
        ):
            return error_message("parse", "malformed predict")
        if self.last_t is not None and t <= self.last_t:
            return error_message(
                "order",
                f"t must increase within an episode: got {t} after {self.last_t}",
            )
        key = (t, tuple(bank))
        if key not in self.table.entries:
            return error_message(
                "state",
                f"no table entry for t={t} bank={','.join(str(f) for f in bank)}",
            )
        q, predicted_empty = self.table.entries[key]
        self.last_t = t
        if self.corrupt_q:
            return predict_result_message(1.5, predicted_empty)
        return predict_result_message(q, predicted_empty)


def serve(table_path: str, corrupt_q: bool) -> int:
    server = Server(ScriptedTable.load(table_path), corrupt_q=corrupt_q)
    out = sys.stdout
    for raw in sys.stdin:
        response, keep_going = server.handle(raw.rstrip("\n"))
        if response is not None:
            out.write(dump_message(response) + "\n")
            out.flush()
        if not keep_going:
            return 0
    return 0


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--table", required=True, help="scripted table file")
    parser.add_argument(
        "--corrupt-q",
        action="store_true",
        help="respond to predicts with q=1.5 (client validation testing)",
    )
    args = parser.parse_args()
    return serve(args.table, args.corrupt_q)


if __name__ == "__main__":
    sys.exit(main())
