"""Framed wire format for parameter exchange.

Frame layout::

    byte 0      version (0x01)
    bytes 1-4   payload length, unsigned big-endian
    bytes 5-    UTF-8 JSON object
                {round, client_id, n_samples, weights, intercept, shapes[, meta]}

Floats are written in shortest round-trip decimal form, so every binary64
value survives the trip exactly.
"""

from __future__ import annotations

import json
import math
import struct
from typing import NamedTuple, Optional

import numpy as np

from ..errors import (
    LengthPrefixError,
    MalformedPayloadError,
    TruncatedPayloadError,
    UnknownVersionError,
)
from ..model.params import ModelParams

VERSION = 0x01
HEADER = struct.Struct(">BI")
MAX_PAYLOAD = 1 << 30


class ParamsMessage(NamedTuple):
    round: int
    client_id: int
    n_samples: int
    params: ModelParams
    meta: Optional[dict] = None


def encode_params_message(round, client_id, n_samples, params: ModelParams, meta=None) -> bytes:
    if not params.is_finite():
        raise ValueError("cannot encode non-finite parameters")
    body = {
        "round": int(round),
        "client_id": int(client_id),
        "n_samples": int(n_samples),
        "weights": [float(v) for v in params.weights],
        "intercept": float(params.intercept),
        "shapes": None if params.layer_shapes is None else [list(s) for s in params.layer_shapes],
    }
    if meta is not None:
        body["meta"] = meta
    payload = json.dumps(body, separators=(",", ":"), allow_nan=False).encode("utf-8")
    if len(payload) > MAX_PAYLOAD:
        raise LengthPrefixError(f"payload of {len(payload)} bytes exceeds limit")
    return HEADER.pack(VERSION, len(payload)) + payload


def parse_header(header: bytes) -> int:
    """Validate a 5-byte frame header and return the payload length."""
    if len(header) < HEADER.size:
        raise LengthPrefixError(f"frame header needs {HEADER.size} bytes, got {len(header)}")
    version, length = HEADER.unpack(header[: HEADER.size])
    if version != VERSION:
        raise UnknownVersionError(f"unknown protocol version 0x{version:02x}")
    if length > MAX_PAYLOAD:
        raise LengthPrefixError(f"declared payload length {length} exceeds limit")
    return length


def _as_float(value, key):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedPayloadError(f"{key} must be numeric")
    value = float(value)
    if not math.isfinite(value):
        raise MalformedPayloadError(f"{key} is not finite")
    return value


def decode_payload(payload: bytes) -> ParamsMessage:
    try:
        body = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedPayloadError(f"payload is not valid JSON: {exc}") from None
    if not isinstance(body, dict):
        raise MalformedPayloadError("payload must be a JSON object")
    missing = {"round", "client_id", "n_samples", "weights", "intercept", "shapes"} - body.keys()
    if missing:
        raise MalformedPayloadError(f"payload missing keys {sorted(missing)}")
    for key in ("round", "client_id", "n_samples"):
        if isinstance(body[key], bool) or not isinstance(body[key], int):
            raise MalformedPayloadError(f"{key} must be an integer")
    if not isinstance(body["weights"], list):
        raise MalformedPayloadError("weights must be a list")
    weights = np.array([_as_float(v, "weights") for v in body["weights"]], dtype=np.float64)
    shapes = body["shapes"]
    if shapes is not None:
        try:
            shapes = tuple((int(a), int(b)) for a, b in shapes)
        except (TypeError, ValueError):
            raise MalformedPayloadError("shapes must be a list of [in, out] pairs") from None
    params = ModelParams(weights, _as_float(body["intercept"], "intercept"), shapes)
    return ParamsMessage(body["round"], body["client_id"], body["n_samples"], params, body.get("meta"))


def decode_params_message(data: bytes) -> ParamsMessage:
    length = parse_header(data)
    payload = data[HEADER.size :]
    if len(payload) < length:
        raise TruncatedPayloadError(f"payload has {len(payload)} of {length} declared bytes")
    if len(payload) > length:
        raise LengthPrefixError(f"{len(payload) - length} bytes beyond the declared length")
    return decode_payload(payload)


def _recv_exact(sock, size: int) -> bytes:
    chunks = []
    remaining = size
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            got = size - remaining
            raise TruncatedPayloadError(f"connection closed after {got} of {size} bytes")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def send_message(sock, data: bytes) -> None:
    sock.sendall(data)


def recv_message(sock) -> ParamsMessage:
    header = _recv_exact(sock, HEADER.size)
    length = parse_header(header)
    return decode_payload(_recv_exact(sock, length))
