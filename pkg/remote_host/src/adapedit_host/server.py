"""TCP host for the ADPE protocol.

One session per connection, steps strictly ordered per branch.  In echo
mode the host answers with the injected tensors themselves; in model
mode it runs a pretrained pipeline behind the same frames.  Malformed
input gets an ERR frame (or a closed connection) but never takes the
server down.
"""

from __future__ import annotations

import argparse
import socket
import socketserver
import sys
import threading
from typing import Optional

from . import frames
from .sessions import EchoSession, SessionError

RECV_TIMEOUT = 60.0


class HostState:
    def __init__(self, model_id: Optional[str], echo: bool, capacity: int) -> None:
        self.model_id = model_id
        self.echo = echo
        self.slots = threading.BoundedSemaphore(capacity)

    def open_session(self, request: frames.InitRequest):
        if self.echo:
            return EchoSession(request)
        from .model import DiffusionSession

        return DiffusionSession(request, self.model_id)


class ConnectionHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        state: HostState = self.server.state
        sock = self.request
        sock.settimeout(RECV_TIMEOUT)
        if not state.slots.acquire(blocking=False):
            self._send_err(frames.ERR_CAPACITY, "host is at session capacity")
            return
        try:
            self._serve_session(sock, state)
        finally:
            state.slots.release()

    def _send_err(self, code: int, message: str) -> None:
        try:
            frames.write_frame(
                self.request, frames.ERR, frames.encode_err(code, message)
            )
        except OSError:
            pass

    def _serve_session(self, sock: socket.socket, state: HostState) -> None:
        session = None
        try:
            while True:
                item = frames.read_frame(sock)
                if item is None:
                    return  # clean disconnect
                msg_type, payload = item

                if msg_type == frames.CLOSE:
                    frames.write_frame(sock, frames.CLOSED, b"")
                    return

                if session is None:
                    if msg_type != frames.INIT:
                        self._send_err(
                            frames.ERR_BAD_STATE, "first message must be INIT"
                        )
                        return
                    session = state.open_session(frames.parse_init(payload))
                    frames.write_frame(
                        sock,
                        frames.INIT_OK,
                        frames.encode_init_ok(session.catalog()),
                    )
                    continue

                if msg_type == frames.INIT:
                    self._send_err(
                        frames.ERR_BAD_STATE, "session already initialized"
                    )
                    return
                if msg_type == frames.STEP:
                    request = frames.parse_step(payload)
                    noise_c, noise_u, maps, feats = session.step(request)
                    frames.write_frame(
                        sock,
                        frames.STEP_OUT,
                        frames.encode_step_out(noise_c, noise_u, maps, feats),
                    )
                elif msg_type == frames.DECODE:
                    branch = frames.parse_decode(payload)
                    frames.write_frame(sock, frames.IMAGE, session.decode(branch))
                else:
                    self._send_err(
                        frames.ERR_MALFORMED, f"unknown message type 0x{msg_type:02x}"
                    )
                    return
        except frames.FrameError as exc:
            self._send_err(frames.ERR_MALFORMED, str(exc))
        except SessionError as exc:
            self._send_err(exc.code, str(exc))
        except (socket.timeout, OSError):
            pass
        finally:
            if session is not None:
                session.close()


class HostServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, state: HostState) -> None:
        super().__init__(address, ConnectionHandler)
        self.state = state


def start_server(
    bind: str = "127.0.0.1:0",
    model: Optional[str] = None,
    echo: bool = False,
    capacity: int = 4,
) -> HostServer:
    """Start serving in a background thread; returns the live server."""
    host, _, port = bind.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"invalid bind address {bind!r}")
    if not echo and not model:
        raise ValueError("either --echo or --model is required")
    state = HostState(model_id=model, echo=echo, capacity=1 if model else capacity)
    server = HostServer((host, int(port)), state)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="adapedit-host",
        description="Reference diffusion host for the attention-editing protocol.",
    )
    parser.add_argument("--bind", default="127.0.0.1:7641", help="host:port to listen on")
    parser.add_argument("--model", help="pretrained pipeline id or local path")
    parser.add_argument(
        "--echo", action="store_true", help="echo injected tensors, no model"
    )
    args = parser.parse_args(argv)
    try:
        server = start_server(bind=args.bind, model=args.model, echo=args.echo)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    mode = "echo" if args.echo else f"model={args.model}"
    print(f"serving on {server.server_address[0]}:{server.server_address[1]} ({mode})")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


if __name__ == "__main__":
    sys.exit(main())
