"""Binary wire protocol for driving a remote diffusion host.

Frames are ``ADPE | version u8 | msg_type u8 | payload_len u32 |
payload`` with all integers little-endian.  Tensors travel as ``rank u8
| dims u32 x rank | float32 row-major data``.  Strings are u32
length-prefixed UTF-8.

Message payloads:

==========  ====  =====================================================
INIT        0x01  T u16, w f32, seed u64, prompt, edit, null prompt
INIT_OK     0x81  layer count u16, then (id u16, h u16, w u16, heads u16)
STEP        0x02  t u16, branch u8, map count u16, (layer id u16, tensor)*
STEP_OUT    0x82  eps_cond tensor, eps_uncond tensor,
                  map count u16, (layer id u16, tensor)*,
                  feature count u16, (layer id u16, tensor)*
DECODE      0x03  branch u8
IMAGE       0x83  PNG bytes (rest of payload)
CLOSE       0x0F  empty
CLOSED      0x8F  empty
ERR         0x7F  code u16, UTF-8 message (rest of payload)
==========  ====  =====================================================
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .backend.base import LayerInfo
from .errors import ProtocolError

MAGIC = b"ADPE"
VERSION = 1
HEADER = struct.Struct("<4sBBI")

MSG_INIT = 0x01
MSG_STEP = 0x02
MSG_DECODE = 0x03
MSG_CLOSE = 0x0F
MSG_INIT_OK = 0x81
MSG_STEP_OUT = 0x82
MSG_IMAGE = 0x83
MSG_CLOSED = 0x8F
MSG_ERR = 0x7F

MAX_PAYLOAD = 256 * 1024 * 1024
MAX_TENSOR_RANK = 8


def encode_frame(msg_type: int, payload: bytes) -> bytes:
    return HEADER.pack(MAGIC, VERSION, msg_type, len(payload)) + payload


def read_exact(recv, n: int) -> bytes:
    """Drain exactly ``n`` bytes from ``recv(max_bytes) -> bytes``."""
    chunks: List[bytes] = []
    remaining = n
    while remaining > 0:
        chunk = recv(remaining)
        if not chunk:
            raise ProtocolError(f"connection closed with {remaining} bytes pending")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(recv) -> Tuple[int, bytes]:
    header = read_exact(recv, HEADER.size)
    magic, version, msg_type, length = HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload of {length} bytes exceeds limit")
    return msg_type, read_exact(recv, length)


class Cursor:
    """Sequential decoder over one payload."""

    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ProtocolError(
                f"payload truncated: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
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
        length = self.u32()
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"invalid UTF-8 string: {exc}") from None

    def rest(self) -> bytes:
        out = self.data[self.pos :]
        self.pos = len(self.data)
        return out

    def done(self) -> None:
        if self.pos != len(self.data):
            raise ProtocolError(
                f"{len(self.data) - self.pos} trailing bytes after payload"
            )


def encode_string(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def encode_tensor(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    if arr.ndim > MAX_TENSOR_RANK:
        raise ProtocolError(f"tensor rank {arr.ndim} exceeds limit {MAX_TENSOR_RANK}")
    head = struct.pack("<B", arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
    return head + dims + arr.tobytes(order="C")


def decode_tensor(cur: Cursor) -> np.ndarray:
    rank = cur.u8()
    if rank > MAX_TENSOR_RANK:
        raise ProtocolError(f"tensor rank {rank} exceeds limit {MAX_TENSOR_RANK}")
    dims = tuple(cur.u32() for _ in range(rank))
    count = 1
    for d in dims:
        count *= d
    nbytes = count * 4
    if nbytes > MAX_PAYLOAD:
        raise ProtocolError(f"tensor of {nbytes} bytes exceeds limit")
    data = cur.take(nbytes)
    return np.frombuffer(data, dtype="<f4").reshape(dims).copy()


# message bodies ---------------------------------------------------------


def encode_init(steps: int, guidance: float, seed: int, prompt: str, edit: str,
                null_prompt: str = "") -> bytes:
    body = struct.pack("<HfQ", steps, guidance, seed)
    body += encode_string(prompt) + encode_string(edit) + encode_string(null_prompt)
    return encode_frame(MSG_INIT, body)


@dataclass(frozen=True)
class InitRequest:
    steps: int
    guidance: float
    seed: int
    prompt: str
    edit: str
    null_prompt: str


def decode_init(payload: bytes) -> InitRequest:
    cur = Cursor(payload)
    steps = cur.u16()
    guidance = cur.f32()
    seed = cur.u64()
    req = InitRequest(
        steps=steps,
        guidance=guidance,
        seed=seed,
        prompt=cur.string(),
        edit=cur.string(),
        null_prompt=cur.string(),
    )
    cur.done()
    return req


def encode_init_ok(catalog: Dict[int, LayerInfo]) -> bytes:
    body = struct.pack("<H", len(catalog))
    for lid in sorted(catalog):
        info = catalog[lid]
        body += struct.pack("<HHHH", info.layer_id, info.height, info.width, info.heads)
    return encode_frame(MSG_INIT_OK, body)


def decode_init_ok(payload: bytes) -> Dict[int, LayerInfo]:
    cur = Cursor(payload)
    count = cur.u16()
    catalog = {}
    for _ in range(count):
        lid, h, w, heads = cur.u16(), cur.u16(), cur.u16(), cur.u16()
        catalog[lid] = LayerInfo(layer_id=lid, height=h, width=w, heads=heads)
    cur.done()
    return catalog


def encode_step(t: int, branch: int, injected: Dict[int, np.ndarray]) -> bytes:
    body = struct.pack("<HBH", t, branch, len(injected))
    for lid in sorted(injected):
        body += struct.pack("<H", lid) + encode_tensor(injected[lid])
    return encode_frame(MSG_STEP, body)


@dataclass(frozen=True)
class StepRequest:
    t: int
    branch: int
    injected: Dict[int, np.ndarray]


def decode_step(payload: bytes) -> StepRequest:
    cur = Cursor(payload)
    t = cur.u16()
    branch = cur.u8()
    count = cur.u16()
    injected = {}
    for _ in range(count):
        lid = cur.u16()
        injected[lid] = decode_tensor(cur)
    cur.done()
    return StepRequest(t=t, branch=branch, injected=injected)


def encode_step_out(
    noise_cond: np.ndarray,
    noise_uncond: np.ndarray,
    maps: Dict[int, np.ndarray],
    features: Dict[int, np.ndarray],
) -> bytes:
    body = encode_tensor(noise_cond) + encode_tensor(noise_uncond)
    body += struct.pack("<H", len(maps))
    for lid in sorted(maps):
        body += struct.pack("<H", lid) + encode_tensor(maps[lid])
    body += struct.pack("<H", len(features))
    for lid in sorted(features):
        body += struct.pack("<H", lid) + encode_tensor(features[lid])
    return encode_frame(MSG_STEP_OUT, body)


def decode_step_out(payload: bytes) -> Tuple[np.ndarray, np.ndarray, Dict[int, np.ndarray], Dict[int, np.ndarray]]:
    cur = Cursor(payload)
    noise_cond = decode_tensor(cur)
    noise_uncond = decode_tensor(cur)
    maps = {}
    for _ in range(cur.u16()):
        lid = cur.u16()
        maps[lid] = decode_tensor(cur)
    features = {}
    for _ in range(cur.u16()):
        lid = cur.u16()
        features[lid] = decode_tensor(cur)
    cur.done()
    return noise_cond, noise_uncond, maps, features


def encode_decode_request(branch: int) -> bytes:
    return encode_frame(MSG_DECODE, struct.pack("<B", branch))


def decode_decode_request(payload: bytes) -> int:
    cur = Cursor(payload)
    branch = cur.u8()
    cur.done()
    return branch


def encode_image(png: bytes) -> bytes:
    return encode_frame(MSG_IMAGE, png)


def encode_close() -> bytes:
    return encode_frame(MSG_CLOSE, b"")


def encode_closed() -> bytes:
    return encode_frame(MSG_CLOSED, b"")


def encode_err(code: int, message: str) -> bytes:
    return encode_frame(MSG_ERR, struct.pack("<H", code) + message.encode("utf-8"))


def decode_err(payload: bytes) -> Tuple[int, str]:
    cur = Cursor(payload)
    code = cur.u16()
    return code, cur.rest().decode("utf-8", errors="replace")
