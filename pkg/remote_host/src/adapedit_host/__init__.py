"""Reference server for the ADPE attention-editing wire protocol."""

from .server import HostServer, start_server
from .sessions import EchoSession

__all__ = ["EchoSession", "HostServer", "start_server"]
