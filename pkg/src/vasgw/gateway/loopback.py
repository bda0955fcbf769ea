"""Optional TCP loopback transport carrying the same frames as the simulation."""

from __future__ import annotations

import socket
import socketserver
import threading
from collections.abc import Callable

from vasgw.errors import ProtocolViolation, VasError
from vasgw.gateway.frames import Frame, encode, read_frame

FrameHandler = Callable[[Frame], Frame]


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        server: LoopbackServer = self.server  # type: ignore[assignment]
        while True:
            try:
                frame = read_frame(self.rfile)
            except ProtocolViolation as exc:
                reply = Frame("error", "", server.gateway_id, exc.to_doc())
                self.wfile.write(encode(reply))
                return
            if frame is None:
                return
            self.wfile.write(encode(server.handler(frame)))
            self.wfile.flush()


class LoopbackServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, gateway_id: str, handler: FrameHandler, host: str = "127.0.0.1", port: int = 0) -> None:
        self.gateway_id = gateway_id
        self.handler = handler
        super().__init__((host, port), _Handler)

    @property
    def address(self) -> tuple[str, int]:
        host, port = self.server_address[:2]
        return str(host), int(port)

    def start(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True, name=f"loopback-{self.gateway_id}")
        thread.start()
        return thread


class LoopbackClient:
    """One persistent connection; frames are answered in the order they are sent."""

    def __init__(self, host: str, port: int, timeout: float = 10.0) -> None:
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._rfile = self._sock.makefile("rb")
        self._lock = threading.Lock()

    def route(self, frame: Frame) -> Frame:
        with self._lock:
            self._sock.sendall(encode(frame))
            reply = read_frame(self._rfile)
        if reply is None:
            raise VasError("loopback peer closed the connection")
        return reply

    def close(self) -> None:
        self._rfile.close()
        self._sock.close()

    def __enter__(self) -> LoopbackClient:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()
