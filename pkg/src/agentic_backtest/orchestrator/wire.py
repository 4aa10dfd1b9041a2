"""Length-prefixed JSON frames: 4-byte big-endian length, then a UTF-8 JSON body."""
from __future__ import annotations

import json
import socket
import struct

from ..errors import ValidationError
from .messages import message_from_dict

HEADER = struct.Struct(">I")
MAX_FRAME = 16 * 1024 * 1024


def encode_frame(msg) -> bytes:
    body = msg.to_dict() if hasattr(msg, "to_dict") else msg
    data = json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(data) > MAX_FRAME:
        raise ValidationError(f"frame of {len(data)} bytes exceeds {MAX_FRAME}")
    return HEADER.pack(len(data)) + data


def decode_frames(buffer: bytes) -> tuple[list[dict], bytes]:
    """Split complete frames off ``buffer``; returns (bodies, leftover bytes)."""
    out = []
    pos = 0
    while len(buffer) - pos >= HEADER.size:
        (n,) = HEADER.unpack_from(buffer, pos)
        if n > MAX_FRAME:
            raise ValidationError(f"declared frame length {n} exceeds {MAX_FRAME}")
        if len(buffer) - pos - HEADER.size < n:
            break
        body = buffer[pos + HEADER.size:pos + HEADER.size + n]
        out.append(json.loads(body.decode("utf-8")))
        pos += HEADER.size + n
    return out, buffer[pos:]


def decode_messages(buffer: bytes):
    bodies, rest = decode_frames(buffer)
    return [message_from_dict(b) for b in bodies], rest


def send_frame(sock: socket.socket, msg) -> None:
    sock.sendall(encode_frame(msg))


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    while n:
        chunk = sock.recv(n)
        if not chunk:
            raise ConnectionError("stream closed mid-frame")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock: socket.socket) -> dict:
    (n,) = HEADER.unpack(_recv_exact(sock, HEADER.size))
    if n > MAX_FRAME:
        raise ValidationError(f"declared frame length {n} exceeds {MAX_FRAME}")
    return json.loads(_recv_exact(sock, n).decode("utf-8"))
