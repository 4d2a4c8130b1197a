"""A look at the bytes the remote protocol puts on the wire."""

import numpy as np

from adapedit import wire


def hexdump(blob: bytes, limit: int = 64) -> str:
    shown = blob[:limit]
    lines = []
    for off in range(0, len(shown), 16):
        chunk = shown[off : off + 16]
        hexpart = " ".join(f"{b:02x}" for b in chunk)
        text = "".join(chr(b) if 32 <= b < 127 else "." for b in chunk)
        lines.append(f"{off:04x}  {hexpart:<47}  {text}")
    if len(blob) > limit:
        lines.append(f"... {len(blob) - limit} more bytes")
    return "\n".join(lines)


def main() -> None:
    init = wire.encode_init(50, 7.5, 42, "a dog standing", "a dog sitting")
    print("INIT frame (magic, version, type 0x01, length, payload):")
    print(hexdump(init, 96))

    injected = {0: np.arange(12, dtype=np.float32).reshape(1, 4, 3)}
    step = wire.encode_step(50, 1, injected)
    print("\nSTEP frame with one injected 1x4x3 tensor:")
    print(hexdump(step, 64))

    msg_type, payload = wire.read_frame(_Reader(step).read)
    request = wire.decode_step(payload)
    print(
        f"\ndecoded: type=0x{msg_type:02x} t={request.t} branch={request.branch} "
        f"layers={sorted(request.injected)} tensor shape={request.injected[0].shape}"
    )


class _Reader:
    def __init__(self, blob: bytes) -> None:
        self._blob = blob
        self._pos = 0

    def read(self, n: int) -> bytes:
        out = self._blob[self._pos : self._pos + n]
        self._pos += len(out)
        return out


if __name__ == "__main__":
    main()
