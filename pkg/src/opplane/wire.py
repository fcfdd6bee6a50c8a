"""Length-prefixed frame transport.

Frames are 4-byte big-endian payload length followed by the payload, which is
always a canonical JSON object. Used on the local stream socket between agent
process and plane, and on the TCP links between plane and remote endpoints.
"""

from __future__ import annotations

import json
import socket
import struct

from . import canonical

# Control objects are small; anything near this size is a protocol violation.
MAX_FRAME = 16 * 1024 * 1024


class FramingError(ConnectionError):
    pass


def send_frame(sock: socket.socket, payload: bytes) -> None:
    if len(payload) > MAX_FRAME:
        raise FramingError(f"frame of {len(payload)} bytes exceeds limit")
    sock.sendall(struct.pack(">I", len(payload)) + payload)


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise FramingError("connection closed mid-frame")
            return None
        buf.extend(chunk)
    return bytes(buf)


def recv_frame(sock: socket.socket) -> bytes | None:
    """Read one frame; None on clean EOF before a frame starts."""
    header = _recv_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        raise FramingError(f"declared frame length {length} exceeds limit")
    body = _recv_exact(sock, length)
    if body is None:
        raise FramingError("connection closed before frame body")
    return body


def send_obj(sock: socket.socket, obj) -> None:
    send_frame(sock, canonical.encode(obj))


def recv_obj(sock: socket.socket):
    """Read one frame and parse it as JSON; None on clean EOF."""
    frame = recv_frame(sock)
    if frame is None:
        return None
    try:
        return json.loads(frame.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FramingError(f"undecodable frame: {exc}") from exc
