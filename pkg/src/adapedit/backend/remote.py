"""Client for an external diffusion host speaking the ADPE wire protocol.

The host owns latents, tokenization, and denoising; this client mirrors
the in-process session interface, so the controller code is identical
across backends.  The reference host folds model sub-tokens into whole
words before shipping maps, so the client-side vocabulary is one token
per word.
"""

from __future__ import annotations

import io
import socket
from typing import Dict, List, Optional

import numpy as np

from .. import wire
from ..errors import BackendUnavailable, ProtocolError
from ..prompts import TokenizedPrompt, default_vocab
from .base import LayerInfo, StepOutput


class RemoteSession:
    """One protocol session over a connected transport."""

    def __init__(
        self,
        transport,
        original: TokenizedPrompt,
        edited: TokenizedPrompt,
        steps: int,
        guidance: float,
        seed: int,
    ) -> None:
        self._sock = transport
        self._catalog: Dict[int, LayerInfo] = {}
        self._closed = False
        self._sock.sendall(
            wire.encode_init(steps, guidance, seed, original.text, edited.text)
        )
        msg_type, payload = wire.read_frame(self._sock.recv)
        if msg_type == wire.MSG_ERR:
            code, message = wire.decode_err(payload)
            raise ProtocolError(f"host refused session (code {code}): {message}")
        if msg_type != wire.MSG_INIT_OK:
            raise ProtocolError(f"expected INIT_OK, got message type 0x{msg_type:02x}")
        self._catalog = wire.decode_init_ok(payload)
        if not self._catalog:
            raise ProtocolError("host reported an empty layer catalog")

    def layers(self) -> Dict[int, LayerInfo]:
        return dict(self._catalog)

    def step(
        self,
        t: int,
        branch: int,
        injected_maps: Optional[Dict[int, np.ndarray]] = None,
    ) -> StepOutput:
        self._sock.sendall(wire.encode_step(t, branch, injected_maps or {}))
        msg_type, payload = wire.read_frame(self._sock.recv)
        if msg_type == wire.MSG_ERR:
            code, message = wire.decode_err(payload)
            raise ProtocolError(f"host rejected step t={t} (code {code}): {message}")
        if msg_type != wire.MSG_STEP_OUT:
            raise ProtocolError(f"expected STEP_OUT, got message type 0x{msg_type:02x}")
        noise_cond, noise_uncond, maps, features = wire.decode_step_out(payload)
        return StepOutput(
            noise_cond=noise_cond,
            noise_uncond=noise_uncond,
            maps=maps,
            features=features,
        )

    def decode_bytes(self, branch: int) -> bytes:
        """Raw PNG bytes as produced by the host."""
        self._sock.sendall(wire.encode_decode_request(branch))
        msg_type, payload = wire.read_frame(self._sock.recv)
        if msg_type == wire.MSG_ERR:
            code, message = wire.decode_err(payload)
            raise ProtocolError(f"host refused decode (code {code}): {message}")
        if msg_type != wire.MSG_IMAGE:
            raise ProtocolError(f"expected IMAGE, got message type 0x{msg_type:02x}")
        return payload

    def decode(self, branch: int) -> np.ndarray:
        from PIL import Image

        png = self.decode_bytes(branch)
        with Image.open(io.BytesIO(png)) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._sock.sendall(wire.encode_close())
            msg_type, _ = wire.read_frame(self._sock.recv)
            if msg_type != wire.MSG_CLOSED:
                raise ProtocolError(
                    f"expected CLOSED, got message type 0x{msg_type:02x}"
                )
        except (OSError, ProtocolError):
            pass  # best-effort goodbye; the socket is going away either way
        finally:
            try:
                self._sock.close()
            except OSError:
                pass


class RemoteBackend:
    """Backend factory that dials ``host:port`` per session."""

    name = "remote"

    def __init__(self, address: str, timeout: float = 30.0) -> None:
        host, _, port = address.rpartition(":")
        if not host or not port.isdigit():
            raise BackendUnavailable(f"invalid remote address {address!r}")
        self.host = host
        self.port = int(port)
        self.timeout = timeout

    def vocab(self, word: str) -> List[int]:
        return list(default_vocab(word))

    def open_session(
        self,
        original: TokenizedPrompt,
        edited: TokenizedPrompt,
        steps: int,
        guidance: float,
        seed: int,
    ) -> RemoteSession:
        try:
            sock = socket.create_connection(
                (self.host, self.port), timeout=self.timeout
            )
        except OSError as exc:
            raise BackendUnavailable(
                f"cannot reach host {self.host}:{self.port}: {exc}"
            ) from None
        return RemoteSession(sock, original, edited, steps, guidance, seed)
