"""
Site agent: serves one site's runtime over a TCP stream.

The agent answers

    price           -> demand        (primal response on its current model)
    window_advance  -> fbar_report   (advance the ground truth, then refit)
    shutdown        -> shutdown      (checkpoint, acknowledge, stop serving)

Replies are cached by message key, so a resent request gets the reply it
got the first time. After every window advance the agent checkpoints its
ground state, model and last report to <state_dir>/<site>.json and reads
that file back on start.
"""

import json
import logging
import os
import socket
import socketserver
import threading
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from sdnum.errors import DecodeError, ProtocolError, SdnumError, VersionError
from sdnum.market import SiteRuntime, model_value, primal_response
from sdnum.protocol.wire import WireMessage, decode, encode

logger = logging.getLogger(__name__)

Endpoint = Tuple[str, int]


def parse_endpoint(text: str) -> Endpoint:
    """'host:port' (or ':port') to a (host, port) pair."""
    host, sep, port = text.strip().rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"endpoint must look like host:port, got '{text}'")
    return host or "127.0.0.1", int(port)


class _AgentHandler(socketserver.StreamRequestHandler):
    """One coordinator connection; records are handled in arrival order."""

    def setup(self):
        super().setup()
        self.server.agent._track(self.connection, add=True)

    def finish(self):
        self.server.agent._track(self.connection, add=False)
        try:
            super().finish()
        except OSError:
            pass

    def handle(self):
        agent: SiteAgent = self.server.agent
        offset = 0
        while True:
            try:
                line = self.rfile.readline()
            except OSError:
                return
            if not line:
                return
            try:
                msg = decode(line, offset)
            except VersionError as e:
                logger.warning("[Agent %s] ignoring record: %s", agent.name, e)
                offset += len(line)
                continue
            except DecodeError as e:
                logger.warning("[Agent %s] undecodable record: %s", agent.name, e)
                offset += len(line)
                continue
            offset += len(line)
            try:
                reply = agent.handle(msg)
            except SdnumError as e:
                logger.error("[Agent %s] cannot answer %s: %s", agent.name, msg.kind, e)
                continue
            try:
                self.wfile.write(encode(reply))
                self.wfile.flush()
            except OSError:
                return
            if msg.kind == "shutdown":
                threading.Thread(target=agent.stop, daemon=True).start()
                return


class _AgentServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class SiteAgent:
    """
    Long-running server around one SiteRuntime.

    Args:
        runtime: The site it serves.
        listen: (host, port) to bind; port 0 picks a free port.
        state_dir: Checkpoint directory; None disables checkpoints.
    """

    def __init__(
        self,
        runtime: SiteRuntime,
        listen: Endpoint = ("127.0.0.1", 0),
        state_dir: Union[str, Path, None] = None,
    ):
        self.runtime = runtime
        self.name = runtime.name
        self.listen = listen
        self.state_dir = None if state_dir is None else Path(state_dir)
        self.z: Optional[np.ndarray] = None
        self.window = -1

        self._lock = threading.Lock()
        self._replies: Dict[tuple, WireMessage] = {}
        self._connections = set()
        self._conn_lock = threading.Lock()
        self._server: Optional[_AgentServer] = None
        self._thread: Optional[threading.Thread] = None
        self._stopped = threading.Event()

        self._load_checkpoint()

    @property
    def checkpoint_path(self) -> Optional[Path]:
        if self.state_dir is None:
            return None
        return self.state_dir / f"{self.name}.json"

    @property
    def address(self) -> Endpoint:
        if self._server is None:
            return self.listen
        host, port = self._server.server_address[:2]
        return host, port

    # Message handling

    def handle(self, msg: WireMessage) -> WireMessage:
        """Answer one request; repeats get the cached reply."""
        with self._lock:
            cached = self._replies.get(msg.key)
            if cached is not None:
                logger.debug("[Agent %s] repeat %s", self.name, msg.key)
                return cached
            if msg.kind == "price":
                reply = self._on_price(msg)
            elif msg.kind == "window_advance":
                reply = self._on_window_advance(msg)
            elif msg.kind == "shutdown":
                self._save_checkpoint()
                reply = msg.reply("shutdown", {})
            else:
                raise ProtocolError(f"agents do not accept '{msg.kind}' messages")
            self._replies[msg.key] = reply
            return reply

    def _on_price(self, msg: WireMessage) -> WireMessage:
        model = self.runtime.model
        if model is None or self.z is None:
            raise ProtocolError("price received before the first window_advance")
        price = np.asarray(msg.payload["price"], dtype=float)
        demand = primal_response(model, price, self.runtime.cap(self.z))
        return msg.reply(
            "demand",
            {"demand": [float(v) for v in demand], "value": model_value(model, demand)},
        )

    def _on_window_advance(self, msg: WireMessage) -> WireMessage:
        payload = msg.payload
        self.z = np.asarray(payload["z"], dtype=float)
        realized = 0.0
        summary = {}
        if payload.get("allocation") is not None:
            outcome = self.runtime.advance(
                np.asarray(payload["allocation"], dtype=float),
                int(payload.get("epochs", 0)),
                msg.window - 1,
            )
            realized, summary = outcome.realized, outcome.summary
        error = None
        try:
            report = self.runtime.refresh(msg.window, self.z)
            if not report.success:
                error = report.error_message or "no model"
        except (SdnumError, OSError) as e:
            error = str(e)
            logger.error("[Agent %s] refresh for window %d failed: %s", self.name, msg.window, e)
        model = self.runtime.model
        self.window = msg.window
        # Price replies of earlier windows can no longer be asked for.
        self._replies = {k: v for k, v in self._replies.items() if k[2] >= msg.window}
        reply = msg.reply(
            "fbar_report",
            {
                "model": None if model is None else model.to_dict(),
                "realized": float(realized),
                "summary": summary,
                "stale": error is not None,
                "error": error,
            },
        )
        self._replies[msg.key] = reply
        self._save_checkpoint()
        return reply

    # Checkpoints

    def _save_checkpoint(self):
        path = self.checkpoint_path
        if path is None:
            return
        last = [r for k, r in self._replies.items() if k[0] == "window_advance"]
        data = {
            "site": self.name,
            "window": self.window,
            "z": None if self.z is None else self.z.tolist(),
            "runtime": self.runtime.snapshot(),
            "last_reply": encode(last[-1]).decode("utf-8") if last else None,
        }
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(data, sort_keys=True), encoding="utf-8")
        os.replace(tmp, path)
        logger.debug("[Agent %s] checkpoint written to %s", self.name, path)

    def _load_checkpoint(self):
        path = self.checkpoint_path
        if path is None or not path.exists():
            return
        data = json.loads(path.read_text(encoding="utf-8"))
        if data.get("runtime"):
            self.runtime.restore(data["runtime"])
        self.window = int(data.get("window", -1))
        if data.get("z") is not None:
            self.z = np.asarray(data["z"], dtype=float)
        if data.get("last_reply"):
            reply = decode(data["last_reply"].encode("utf-8"))
            self._replies[("window_advance", reply.k, reply.window, reply.site)] = reply
        logger.info("[Agent %s] resumed from checkpoint at window %d", self.name, self.window)

    # Server lifecycle

    def _track(self, conn: socket.socket, add: bool):
        with self._conn_lock:
            if add:
                self._connections.add(conn)
            else:
                self._connections.discard(conn)

    def start(self) -> "SiteAgent":
        """Serve in a background thread."""
        if self._thread is not None and self._thread.is_alive():
            return self
        self._server = _AgentServer(self.listen, _AgentHandler)
        self._server.agent = self
        self._stopped.clear()
        self._thread = threading.Thread(
            target=self._server.serve_forever,
            daemon=True,
            name=f"SiteAgent-{self.name}",
        )
        self._thread.start()
        logger.info("[Agent %s] listening on %s:%d", self.name, *self.address)
        return self

    def stop(self):
        """Stop serving and drop open connections."""
        if self._server is None:
            return
        server, self._server = self._server, None
        server.shutdown()
        with self._conn_lock:
            conns = list(self._connections)
            self._connections.clear()
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        server.server_close()
        self._stopped.set()
        logger.info("[Agent %s] stopped", self.name)

    def wait(self, timeout: Optional[float] = None) -> bool:
        return self._stopped.wait(timeout)

    def __enter__(self):
        return self.start()

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.stop()
        return False


def serve_site(
    runtime: SiteRuntime, listen: Endpoint, state_dir: Union[str, Path, None] = None
) -> SiteAgent:
    """Run an agent until a shutdown message arrives."""
    agent = SiteAgent(runtime, listen, state_dir).start()
    try:
        agent.wait()
    except KeyboardInterrupt:
        logger.info("[Agent %s] interrupted", agent.name)
        agent.stop()
    return agent
