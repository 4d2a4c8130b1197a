"""Malformed-frame fuzzing: the host replies ERR or closes, never dies."""

import socket
import struct

import numpy as np
import pytest

from adapedit import wire

from adapedit_host.server import start_server


@pytest.fixture(scope="module")
def echo_server():
    server = start_server(bind="127.0.0.1:0", echo=True, capacity=8)
    yield server
    server.shutdown()
    server.server_close()


def poke(address, blob):
    """Send bytes, drain whatever comes back, report orderly shutdown."""
    sock = socket.create_connection(address, timeout=5)
    try:
        sock.sendall(blob)
        sock.shutdown(socket.SHUT_WR)
        while sock.recv(65536):
            pass
        return True
    except OSError:
        return True  # reset by the host is an acceptable rejection
    finally:
        sock.close()


def random_malformed_frame(rng):
    choice = rng.integers(0, 7)
    if choice == 0:  # random garbage
        return rng.bytes(int(rng.integers(1, 64)))
    if choice == 1:  # bad magic
        return b"XXXX" + struct.pack("<BBI", 1, 1, 4) + b"abcd"
    if choice == 2:  # bad version
        return b"ADPE" + struct.pack("<BBI", int(rng.integers(2, 255)), 1, 0)
    if choice == 3:  # declared length exceeds the cap
        return b"ADPE" + struct.pack("<BBI", 1, 2, 2**31)
    if choice == 4:  # truncated payload
        return b"ADPE" + struct.pack("<BBI", 1, 2, 1000) + rng.bytes(10)
    if choice == 5:  # valid INIT frame followed by a garbage-payload STEP
        good = wire.encode_init(3, 7.5, 0, "a", "b")
        bad = b"ADPE" + struct.pack("<BBI", 1, 2, 8) + rng.bytes(8)
        return good + bad
    # unknown message type after INIT
    good = wire.encode_init(3, 7.5, 0, "a", "b")
    return good + b"ADPE" + struct.pack("<BBI", 1, int(rng.integers(0x20, 0x7E)), 0)


class TestFuzzing:
    def test_thousand_malformed_frames(self, echo_server):
        address = echo_server.server_address
        rng = np.random.default_rng(1234)
        for i in range(1000):
            assert poke(address, random_malformed_frame(rng)), f"case {i}"

        # the host still serves a clean session afterwards
        sock = socket.create_connection(address, timeout=5)
        sock.sendall(wire.encode_init(2, 7.5, 0, "a dog", "a cat"))
        msg_type, payload = wire.read_frame(sock.recv)
        assert msg_type == wire.MSG_INIT_OK
        assert wire.decode_init_ok(payload)
        sock.sendall(wire.encode_close())
        assert wire.read_frame(sock.recv)[0] == wire.MSG_CLOSED
        sock.close()

    def test_malformed_tensor_rank(self, echo_server):
        address = echo_server.server_address
        body = struct.pack("<HBH", 3, 0, 1) + struct.pack("<H", 0)
        body += struct.pack("<B", 200)  # absurd rank
        blob = wire.encode_init(3, 7.5, 0, "a", "b")
        blob += b"ADPE" + struct.pack("<BBI", 1, 2, len(body)) + body
        sock = socket.create_connection(address, timeout=5)
        sock.sendall(blob)
        assert wire.read_frame(sock.recv)[0] == wire.MSG_INIT_OK
        msg_type, payload = wire.read_frame(sock.recv)
        assert msg_type == wire.MSG_ERR
        assert wire.decode_err(payload)[0] == 0x0001
        sock.close()
