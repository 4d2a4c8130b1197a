"""Host-side session state machines.

A session owns one INIT and a strictly ordered stream of STEPs per
branch (t = T down to 1).  The echo session implements the protocol
with no model behind it: it returns injected maps unchanged, byte for
byte, which lets protocol conformance run anywhere.
"""

from __future__ import annotations

import io
from typing import Dict, Tuple

import numpy as np

from .frames import ERR_BAD_STATE, InitRequest, StepRequest


class SessionError(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


class OrderedSession:
    """Shared bookkeeping: step ordering per branch."""

    def __init__(self, request: InitRequest) -> None:
        self.request = request
        self.next_t = {0: request.steps, 1: request.steps}

    def check_step(self, req: StepRequest) -> None:
        expected = self.next_t[req.branch]
        if expected < 1:
            raise SessionError(
                ERR_BAD_STATE, f"branch {req.branch} already finished sampling"
            )
        if req.t != expected:
            raise SessionError(
                ERR_BAD_STATE,
                f"out-of-order step: got t={req.t}, expected t={expected}",
            )

    def advance(self, branch: int) -> None:
        self.next_t[branch] -= 1

    def finished(self, branch: int) -> bool:
        return self.next_t[branch] < 1

    def close(self) -> None:
        pass


ECHO_CATALOG: Dict[int, Tuple[int, int, int]] = {
    0: (32, 32, 1),
    1: (16, 16, 1),
}


def _gray_png() -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.new("RGB", (32, 32), (127, 127, 127)).save(buf, format="PNG")
    return buf.getvalue()


class EchoSession(OrderedSession):
    """Model-free reference session for protocol tests."""

    def __init__(self, request: InitRequest) -> None:
        super().__init__(request)
        self._png = _gray_png()

    def catalog(self) -> Dict[int, Tuple[int, int, int]]:
        return dict(ECHO_CATALOG)

    def step(self, req: StepRequest):
        self.check_step(req)
        self.advance(req.branch)
        zero = np.zeros((1,), dtype=np.float32)
        return zero, zero, dict(req.injected), {}

    def decode(self, branch: int) -> bytes:
        return self._png
