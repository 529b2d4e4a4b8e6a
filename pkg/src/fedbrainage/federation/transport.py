"""Round transports: in-process calls or TCP with one persistent connection per client."""

from __future__ import annotations

import logging
import socket
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

from ..errors import ProtocolError, RoundFailureError
from ..model.params import ModelParams
from ..model.schedules import TrainConfig
from .fedavg import ClientSite, ClientUpdate, FederationPlan, client_update
from .protocol import encode_params_message, recv_message, send_message

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 60.0


class InProcessTransport:
    """Calls each client's local epoch directly; optional thread pool."""

    def __init__(self, max_workers: int = 1):
        self.max_workers = max_workers

    def run_round(self, plan: FederationPlan, round_index: int, global_params: ModelParams):
        cfg = plan.train_cfg

        def work(client):
            return client_update(client, global_params, round_index, cfg)

        if self.max_workers > 1:
            with ThreadPoolExecutor(self.max_workers) as pool:
                return list(pool.map(work, plan.clients))
        return [work(c) for c in plan.clients]

    def close(self):
        pass


class TcpServerTransport:
    """Server side of the TCP transport.

    Clients connect and announce themselves with a hello frame (round 0,
    their client id and sample count). Each round the server sends the
    global parameters to every client, then waits for all replies; a client
    that errors or stays silent past ``timeout`` seconds fails the round.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0, timeout: float = DEFAULT_TIMEOUT):
        self.timeout = timeout
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(timeout)
        self.address = self._listener.getsockname()[:2]
        self.connections: dict[int, socket.socket] = {}
        self.hello_counts: dict[int, int] = {}
        self.meta: Optional[dict] = None

    def accept_clients(self, n_clients: int) -> dict[int, int]:
        """Block until ``n_clients`` have said hello; returns {client_id: n_samples}."""
        while len(self.connections) < n_clients:
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                raise ProtocolError(
                    f"only {len(self.connections)} of {n_clients} clients connected within {self.timeout}s"
                ) from None
            conn.settimeout(self.timeout)
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            hello = recv_message(conn)
            if hello.round != 0:
                conn.close()
                raise ProtocolError(f"expected hello frame, got round {hello.round}")
            if hello.client_id in self.connections:
                conn.close()
                raise ProtocolError(f"duplicate client id {hello.client_id}")
            self.connections[hello.client_id] = conn
            self.hello_counts[hello.client_id] = hello.n_samples
            log.info("client %d connected (%d samples)", hello.client_id, hello.n_samples)
        return dict(self.hello_counts)

    def _exchange(self, cid, round_index, params, meta):
        conn = self.connections[cid]
        try:
            send_message(conn, encode_params_message(round_index, cid, 0, params, meta))
            reply = recv_message(conn)
        except socket.timeout:
            raise RoundFailureError(round_index, cid, f"no reply within {self.timeout}s") from None
        except (OSError, ProtocolError) as exc:
            raise RoundFailureError(round_index, cid, str(exc)) from None
        if reply.round != round_index or reply.client_id != cid:
            raise RoundFailureError(round_index, cid, f"reply for round {reply.round} from client {reply.client_id}")
        loss = float((reply.meta or {}).get("loss", float("nan")))
        return ClientUpdate(cid, reply.params, reply.n_samples, loss)

    def run_round(self, plan: FederationPlan, round_index: int, global_params: ModelParams):
        meta = dict(plan.meta) if plan.meta else None
        missing = [cid for cid in plan.client_ids if cid not in self.connections]
        if missing:
            raise RoundFailureError(round_index, missing[0], "not connected")
        ids = plan.client_ids
        with ThreadPoolExecutor(max(1, len(ids))) as pool:
            futures = [pool.submit(self._exchange, cid, round_index, global_params, meta) for cid in ids]
            # barrier: every reply or the first failure in client-id order
            return [f.result() for f in futures]

    def close(self):
        stop = ModelParams([], 0.0)
        for cid, conn in self.connections.items():
            try:
                send_message(conn, encode_params_message(-1, cid, 0, stop, {"stop": True}))
            except OSError:
                pass
            conn.close()
        self.connections.clear()
        self._listener.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


Handler = Callable[[int, ModelParams, Optional[dict]], ClientUpdate]


def site_handler(site: ClientSite, cfg: TrainConfig) -> Handler:
    """Handler answering rounds with one local epoch on a fixed ClientSite."""

    def handle(round_index, params, meta):
        return client_update(site, params, round_index, cfg)

    return handle


def run_tcp_client(host: str, port: int, client_id: int, n_samples: int, handler: Handler, timeout: Optional[float] = None) -> int:
    """Connect to a server, say hello, and answer rounds until told to stop.

    Returns the number of rounds served.
    """
    served = 0
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.settimeout(timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        send_message(sock, encode_params_message(0, client_id, n_samples, ModelParams([], 0.0)))
        while True:
            try:
                msg = recv_message(sock)
            except ProtocolError:
                log.info("client %d: server closed the connection", client_id)
                break
            if (msg.meta or {}).get("stop"):
                break
            update = handler(msg.round, msg.params, msg.meta)
            reply = encode_params_message(msg.round, client_id, update.n_samples, update.params, {"loss": update.loss})
            send_message(sock, reply)
            served += 1
    return served


def start_client_threads(address, sites: list[ClientSite], cfg: TrainConfig, timeout: Optional[float] = None):
    """Spawn one TCP client thread per site (local multi-client runs and tests)."""
    threads = []
    for site in sites:
        t = threading.Thread(
            target=run_tcp_client,
            args=(address[0], address[1], site.client_id, site.sample_count, site_handler(site, cfg), timeout),
            daemon=True,
        )
        t.start()
        threads.append(t)
    return threads
