"""Server-side codec for the ADPE protocol.

Written against the protocol document rather than any client library,
so an interop test between this host and an independent client
exercises the wire format itself.

Frame: ``ADPE | version u8 | msg_type u8 | payload_len u32 | payload``,
integers little-endian.  Tensors: ``rank u8 | dims u32 x rank | float32
row-major``.  Strings: u32 length-prefixed UTF-8.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

MAGIC = b"ADPE"
VERSION = 1
HEADER = struct.Struct("<4sBBI")

INIT = 0x01
STEP = 0x02
DECODE = 0x03
CLOSE = 0x0F
INIT_OK = 0x81
STEP_OUT = 0x82
IMAGE = 0x83
CLOSED = 0x8F
ERR = 0x7F

ERR_MALFORMED = 0x0001
ERR_UNKNOWN_LAYER = 0x0002
ERR_CAPACITY = 0x0003
ERR_BAD_STATE = 0x0004

MAX_PAYLOAD = 64 * 1024 * 1024
MAX_RANK = 8


class FrameError(Exception):
    """Anything wrong with bytes coming off the wire."""


def recv_exact(sock, n: int) -> Optional[bytes]:
    """Exactly ``n`` bytes, or None on a clean EOF at a frame boundary."""
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            if remaining == n:
                return None
            raise FrameError("connection dropped mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock) -> Optional[Tuple[int, bytes]]:
    header = recv_exact(sock, HEADER.size)
    if header is None:
        return None
    magic, version, msg_type, length = HEADER.unpack(header)
    if magic != MAGIC:
        raise FrameError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FrameError(f"unsupported version {version}")
    if length > MAX_PAYLOAD:
        raise FrameError(f"payload length {length} over limit")
    payload = recv_exact(sock, length)
    if payload is None and length > 0:
        raise FrameError("connection dropped before payload")
    return msg_type, payload or b""


def write_frame(sock, msg_type: int, payload: bytes) -> None:
    sock.sendall(HEADER.pack(MAGIC, VERSION, msg_type, len(payload)) + payload)


class Reader:
    """Sequential payload decoder with hard bounds checks."""

    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise FrameError("truncated payload")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f32(self) -> float:
        return struct.unpack("<f", self.take(4))[0]

    def string(self) -> str:
        raw = self.take(self.u32())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FrameError(f"bad UTF-8: {exc}") from None

    def tensor(self) -> np.ndarray:
        rank = self.u8()
        if rank > MAX_RANK:
            raise FrameError(f"tensor rank {rank} over limit")
        dims = tuple(self.u32() for _ in range(rank))
        count = 1
        for d in dims:
            count *= d
        if count * 4 > MAX_PAYLOAD:
            raise FrameError("tensor too large")
        data = self.take(count * 4)
        return np.frombuffer(data, dtype="<f4").reshape(dims).copy()

    def expect_end(self) -> None:
        if self.pos != len(self.data):
            raise FrameError("trailing bytes in payload")


def encode_tensor(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    out = struct.pack("<B", arr.ndim)
    if arr.ndim:
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return out + arr.tobytes(order="C")


@dataclass(frozen=True)
class InitRequest:
    steps: int
    guidance: float
    seed: int
    prompt: str
    edit: str
    null_prompt: str


def parse_init(payload: bytes) -> InitRequest:
    r = Reader(payload)
    req = InitRequest(
        steps=r.u16(),
        guidance=r.f32(),
        seed=r.u64(),
        prompt=r.string(),
        edit=r.string(),
        null_prompt=r.string(),
    )
    r.expect_end()
    if req.steps < 1:
        raise FrameError("step count must be at least 1")
    return req


@dataclass(frozen=True)
class StepRequest:
    t: int
    branch: int
    injected: Dict[int, np.ndarray]


def parse_step(payload: bytes) -> StepRequest:
    r = Reader(payload)
    t = r.u16()
    branch = r.u8()
    count = r.u16()
    injected: Dict[int, np.ndarray] = {}
    for _ in range(count):
        lid = r.u16()
        injected[lid] = r.tensor()
    r.expect_end()
    if branch not in (0, 1):
        raise FrameError(f"unknown branch {branch}")
    return StepRequest(t=t, branch=branch, injected=injected)


def parse_decode(payload: bytes) -> int:
    r = Reader(payload)
    branch = r.u8()
    r.expect_end()
    if branch not in (0, 1):
        raise FrameError(f"unknown branch {branch}")
    return branch


def encode_init_ok(catalog) -> bytes:
    out = struct.pack("<H", len(catalog))
    for lid in sorted(catalog):
        height, width, heads = catalog[lid]
        out += struct.pack("<HHHH", lid, height, width, heads)
    return out


def encode_step_out(
    noise_cond: np.ndarray,
    noise_uncond: np.ndarray,
    maps: Dict[int, np.ndarray],
    features: Dict[int, np.ndarray],
) -> bytes:
    out = encode_tensor(noise_cond) + encode_tensor(noise_uncond)
    out += struct.pack("<H", len(maps))
    for lid in sorted(maps):
        out += struct.pack("<H", lid) + encode_tensor(maps[lid])
    out += struct.pack("<H", len(features))
    for lid in sorted(features):
        out += struct.pack("<H", lid) + encode_tensor(features[lid])
    return out


def encode_err(code: int, message: str) -> bytes:
    return struct.pack("<H", code) + message.encode("utf-8")
