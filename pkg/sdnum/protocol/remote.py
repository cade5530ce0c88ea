"""
Coordinator side of the site protocol.

RemoteSite stands in for a site agent: the rolling-horizon controller
refreshes and advances it like a local runtime, and the market quotes it
prices like a local site. Every request is resent over a fresh connection
until it is answered or the retries run out.
"""

import logging
import socket
import threading
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np

from sdnum.errors import ProtocolError, TransportError
from sdnum.fit import PwlUtility
from sdnum.market import (
    MarketSite,
    RollingHorizonController,
    SiteReport,
    SiteRuntime,
    WindowOutcome,
    model_value,
    oracle_from_dict,
)
from sdnum.protocol.agent import Endpoint, parse_endpoint
from sdnum.protocol.wire import (
    WireMessage,
    decode,
    encode,
    price_message,
    window_advance_message,
)

logger = logging.getLogger(__name__)

REPLY_KIND = {
    "price": "demand",
    "window_advance": "fbar_report",
    "shutdown": "shutdown",
}


def model_from_dict(data):
    if data is None:
        return None
    if "kind" in data:
        return oracle_from_dict(data)
    return PwlUtility.from_dict(data)


class RemoteSite(SiteRuntime, MarketSite):
    """
    A site agent reached over TCP.

    Args:
        endpoint: (host, port) or "host:port" of the agent.
        name: Site name used in every message.
        retry_count: Resends after the first attempt.
        retry_delay: Seconds between attempts.
        timeout: Socket timeout in seconds.
    """

    def __init__(
        self,
        endpoint,
        name: str,
        retry_count: int = 3,
        retry_delay: float = 0.5,
        timeout: float = 30.0,
    ):
        self.endpoint: Endpoint = (
            parse_endpoint(endpoint) if isinstance(endpoint, str) else tuple(endpoint)
        )
        self.name = name
        self.retry_count = retry_count
        self.retry_delay = retry_delay
        self.timeout = timeout
        self.model = None
        self.window = 0
        self._dim = 1
        self._z: Optional[np.ndarray] = None
        self._pending: dict = {}
        self._sock: Optional[socket.socket] = None
        self._rfile = None
        self._lock = threading.Lock()

    # Transport

    def _connect(self):
        if self._sock is not None:
            return
        sock = socket.create_connection(self.endpoint, timeout=self.timeout)
        self._sock = sock
        self._rfile = sock.makefile("rb")

    def close(self):
        if self._rfile is not None:
            try:
                self._rfile.close()
            except OSError:
                pass
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        self._sock = None
        self._rfile = None

    def _exchange(self, msg: WireMessage) -> WireMessage:
        self._connect()
        self._sock.sendall(encode(msg))
        line = self._rfile.readline()
        if not line:
            raise ConnectionError("agent closed the connection")
        reply = decode(line)
        if reply.kind != REPLY_KIND[msg.kind] or (reply.k, reply.window) != (msg.k, msg.window):
            raise ProtocolError(f"unexpected reply {reply.key} to {msg.key}")
        return reply

    def request(self, msg: WireMessage) -> WireMessage:
        """
        Send a request and wait for its reply, resending on failure.

        Raises:
            TransportError: no reply after retry_count + 1 attempts.
        """
        last_error = None
        with self._lock:
            for attempt in range(self.retry_count + 1):
                try:
                    return self._exchange(msg)
                except (OSError, ProtocolError) as e:
                    last_error = e
                    self.close()
                if attempt < self.retry_count:
                    logger.warning(
                        "[RemoteSite %s] Retry %d/%d for %s (%s)",
                        self.name, attempt + 1, self.retry_count, msg.kind, last_error,
                    )
                    time.sleep(self.retry_delay)
        raise TransportError(
            f"site {self.name} at {self.endpoint[0]}:{self.endpoint[1]} did not answer "
            f"{msg.kind} after {self.retry_count + 1} attempts: {last_error}"
        )

    # SiteRuntime

    @property
    def dim(self) -> int:
        return self._dim

    def _report(self, reply: WireMessage) -> Tuple[SiteReport, WindowOutcome]:
        payload = reply.payload
        model = model_from_dict(payload.get("model"))
        if model is not None:
            self.model = model
            self._dim = model.dim
        report = SiteReport(
            self.name,
            model,
            stale=bool(payload.get("stale", False)),
            error_message=payload.get("error"),
        )
        outcome = WindowOutcome(float(payload.get("realized", 0.0)), payload.get("summary") or {})
        return report, outcome

    def refresh(self, window: int, z) -> SiteReport:
        self._z = np.atleast_1d(np.asarray(z, dtype=float))
        self.window = window
        if window in self._pending:
            return self._pending.pop(window)
        reply = self.request(window_advance_message(window, self.name, self._z))
        report, _ = self._report(reply)
        return report

    def advance(self, allocation, epochs: int, window: int) -> WindowOutcome:
        z = self._z if self._z is not None else np.atleast_1d(np.asarray(allocation, float))
        msg = window_advance_message(
            window + 1, self.name, z, np.atleast_1d(allocation), epochs
        )
        report, outcome = self._report(self.request(msg))
        self._pending = {window + 1: report}
        return outcome

    def market_site(self, report: SiteReport, z) -> MarketSite:
        if report.stale and report.model is not None:
            self.model = report.model
        return self

    # MarketSite

    def primal_response(self, price, k: int = 0, supply=None) -> np.ndarray:
        reply = self.request(price_message(k, self.window, self.name, np.atleast_1d(price)))
        return np.asarray(reply.payload["demand"], dtype=float)

    def value(self, y) -> float:
        if self.model is None:
            raise ProtocolError(f"site {self.name} has not reported a model")
        return model_value(self.model, y)

    def max_slope(self) -> float:
        if self.model is None:
            raise ProtocolError(f"site {self.name} has not reported a model")
        return float(self.model.max_slope())

    def shutdown(self):
        """Ask the agent to checkpoint and exit; unreachable agents are ignored."""
        try:
            self.request(WireMessage("shutdown", 0, self.window, self.name, {}))
        except TransportError as e:
            logger.warning("[RemoteSite %s] shutdown not acknowledged: %s", self.name, e)
        finally:
            self.close()

    def __repr__(self) -> str:
        return f"RemoteSite({self.name!r}, {self.endpoint[0]}:{self.endpoint[1]})"


def parse_sites(text: str) -> List[Tuple[str, Endpoint]]:
    """
    Parse "name=host:port,name=host:port"; a bare endpoint is named after itself.
    """
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, sep, endpoint = item.partition("=")
        if not sep:
            name, endpoint = item, item
        out.append((name.strip(), parse_endpoint(endpoint)))
    if not out:
        raise ValueError("no site endpoints given")
    return out


def coordinate(
    sites: Sequence[Tuple[str, Endpoint]],
    z,
    T: int,
    tau: int,
    gamma: float,
    windows: int,
    alpha: Optional[float] = None,
    max_iters: int = 10000,
    tol: float = 1e-6,
    retry_count: int = 3,
    retry_delay: float = 0.5,
    timeout: float = 30.0,
    shutdown: bool = True,
    integer: bool = True,
) -> RollingHorizonController:
    """
    Run the rolling-horizon loop against remote site agents.

    Returns:
        The controller, with one WindowRecord per window in its history.
    """
    remotes = [
        RemoteSite(endpoint, name, retry_count, retry_delay, timeout) for name, endpoint in sites
    ]
    controller = RollingHorizonController(
        remotes,
        z,
        T=T,
        tau=tau,
        gamma=gamma,
        alpha=alpha,
        max_iters=max_iters,
        tol=tol,
        integer=integer,
        parallel=True,
    )
    try:
        controller.run(windows)
    finally:
        for remote in remotes:
            if shutdown:
                remote.shutdown()
            else:
                remote.close()
    return controller
