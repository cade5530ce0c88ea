"""
Wire format between the coordinator and site agents.

One message per line: a compact JSON object with sorted keys, terminated
by "\\n". Every record carries

    v        format version (currently 1)
    kind     price | demand | fbar_report | window_advance | shutdown
    k        market iteration
    window   rolling-horizon window
    site     site name
    payload  kind-specific object

Payloads:

    price           {"price": [0.7]}
    demand          {"demand": [3.0], "value": -1.25}
    window_advance  {"z": [6.0], "allocation": [2.0] | null, "epochs": 5}
    fbar_report     {"model": {...PWL dict...} | null, "realized": -3.0,
                     "summary": {...counts...}, "stale": false, "error": null}
    shutdown        {}

Example:

    {"k":3,"kind":"price","payload":{"price":[0.7]},"site":"loc1","v":1,"window":0}

(kind, k, window, site) identifies a message; handlers answer repeats
with the reply they gave the first time.
"""

import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

from sdnum.errors import DecodeError, VersionError

VERSION = 1
KINDS = ("price", "demand", "fbar_report", "window_advance", "shutdown")
FIELDS = ("k", "kind", "payload", "site", "v", "window")

# Keys a payload may carry, by kind. Anything else is rejected on encode.
PAYLOAD_KEYS = {
    "price": {"price"},
    "demand": {"demand", "value"},
    "window_advance": {"z", "allocation", "epochs"},
    "fbar_report": {"model", "realized", "summary", "stale", "error"},
    "shutdown": set(),
}


@dataclass(frozen=True)
class WireMessage:
    kind: str
    k: int = 0
    window: int = 0
    site: str = ""
    payload: Dict[str, Any] = field(default_factory=dict)
    v: int = VERSION

    @property
    def key(self) -> Tuple[str, int, int, str]:
        return (self.kind, self.k, self.window, self.site)

    def reply(self, kind: str, payload: Dict[str, Any]) -> "WireMessage":
        return WireMessage(kind, self.k, self.window, self.site, payload)


def encode(msg: WireMessage) -> bytes:
    if msg.kind not in KINDS:
        raise VersionError(f"unknown message kind '{msg.kind}'", 0)
    extra = set(msg.payload) - PAYLOAD_KEYS[msg.kind]
    if extra:
        raise DecodeError(f"unexpected payload keys for {msg.kind}: {sorted(extra)}", 0)
    record = {
        "k": int(msg.k),
        "kind": msg.kind,
        "payload": msg.payload,
        "site": msg.site,
        "v": int(msg.v),
        "window": int(msg.window),
    }
    text = json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return text.encode("utf-8") + b"\n"


def decode(data: bytes, offset: int = 0) -> WireMessage:
    """
    Decode one newline-terminated record.

    Args:
        data: The record, including its trailing newline.
        offset: Position of the record in the stream, for error reports.

    Raises:
        DecodeError: truncated or malformed record (carries the byte offset).
        VersionError: well-formed record with an unknown version or kind.
    """
    if not data.endswith(b"\n"):
        raise DecodeError("truncated record (no terminating newline)", offset + len(data))
    body = data[:-1]
    if b"\n" in body:
        raise DecodeError("more than one record", offset + body.index(b"\n"))
    try:
        text = body.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DecodeError(f"invalid utf-8: {e.reason}", offset + e.start) from e
    try:
        record = json.loads(text)
    except json.JSONDecodeError as e:
        raise DecodeError(f"malformed record: {e.msg}", offset + e.pos) from e
    if not isinstance(record, dict):
        raise DecodeError("record is not an object", offset)
    missing = [f for f in FIELDS if f not in record]
    if missing:
        raise DecodeError(f"missing fields {missing}", offset)
    if record["v"] != VERSION:
        raise VersionError(f"unsupported version {record['v']}", offset)
    if record["kind"] not in KINDS:
        raise VersionError(f"unknown message kind '{record['kind']}'", offset)
    if not isinstance(record["payload"], dict):
        raise DecodeError("payload is not an object", offset)
    try:
        return WireMessage(
            kind=record["kind"],
            k=int(record["k"]),
            window=int(record["window"]),
            site=str(record["site"]),
            payload=record["payload"],
            v=VERSION,
        )
    except (TypeError, ValueError) as e:
        raise DecodeError(f"bad field type: {e}", offset) from e


def decode_stream(data: bytes) -> List[WireMessage]:
    """Decode consecutive records; offsets in errors are stream positions."""
    messages = []
    pos = 0
    while pos < len(data):
        end = data.find(b"\n", pos)
        chunk = data[pos:] if end < 0 else data[pos : end + 1]
        messages.append(decode(chunk, pos))
        pos += len(chunk)
    return messages


def price_message(k: int, window: int, site: str, price) -> WireMessage:
    return WireMessage("price", k, window, site, {"price": [float(p) for p in price]})


def window_advance_message(
    window: int, site: str, z, allocation=None, epochs: int = 0
) -> WireMessage:
    payload = {
        "z": [float(v) for v in z],
        "allocation": None if allocation is None else [float(v) for v in allocation],
        "epochs": int(epochs),
    }
    return WireMessage("window_advance", 0, window, site, payload)
