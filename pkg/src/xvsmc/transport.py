"""Point-to-point party messaging: framing, phase-tagged byte accounting, rounds.

Two interchangeable transports implement the same Session interface: an
in-process mesh of FIFO queues (single-machine tests and benchmarks) and a
TCP mesh.  Both serialize identical frames, so their ledgers agree byte for
byte for the same protocol run.

Frame layout (little-endian): u32 payload length, u8 phase, u8 kind,
payload bytes.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IncompatibleConfigError, ProtocolError
from .ring import FixedPointConfig
from .sharing import elements_from_bytes, elements_to_bytes

FRAME_HEADER = struct.Struct("<IBB")
FRAME_HEADER_BYTES = FRAME_HEADER.size  # 6

PHASE_OFFLINE = 0
PHASE_ONLINE = 1
PHASE_SETUP = 2  # handshake traffic, reported separately
PHASE_NAMES = {PHASE_OFFLINE: "offline", PHASE_ONLINE: "online", PHASE_SETUP: "setup"}

KIND_HANDSHAKE = 0
KIND_ELEMENTS = 1
KIND_BYTES = 2

SCHEME_IDS = {"additive2": 1, "rss3": 2}
SCHEME_PARTIES = {"additive2": 2, "rss3": 3}


@dataclass
class PartyConfig:
    party_id: int
    scheme: str
    fpcfg: FixedPointConfig = field(default_factory=FixedPointConfig)
    peers: dict = field(default_factory=dict)  # peer id -> (host, port)
    listen: tuple | None = None  # (host, port) this party accepts on
    material_dir: str | None = None
    timeout: float = 120.0

    def __post_init__(self):
        if self.scheme not in SCHEME_IDS:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        n = SCHEME_PARTIES[self.scheme]
        if not 0 <= self.party_id < n:
            raise ConfigError(f"party id {self.party_id} out of range for {self.scheme}")

    @property
    def n_parties(self) -> int:
        return SCHEME_PARTIES[self.scheme]


class CommLedger:
    """Per-peer, per-phase byte/message counters plus per-phase round counts."""

    def __init__(self):
        self._lock = threading.Lock()
        self.sent = {}      # (peer, phase) -> [bytes, messages]
        self.received = {}  # (peer, phase) -> [bytes, messages]
        self.rounds = {PHASE_OFFLINE: 0, PHASE_ONLINE: 0}

    def record_send(self, peer: int, phase: int, nbytes: int):
        with self._lock:
            entry = self.sent.setdefault((peer, phase), [0, 0])
            entry[0] += nbytes
            entry[1] += 1

    def record_recv(self, peer: int, phase: int, nbytes: int):
        with self._lock:
            entry = self.received.setdefault((peer, phase), [0, 0])
            entry[0] += nbytes
            entry[1] += 1

    def add_round(self, phase: int):
        with self._lock:
            self.rounds[phase] = self.rounds.get(phase, 0) + 1

    def totals(self, phase: int) -> dict:
        sent = sum(v[0] for (p, ph), v in self.sent.items() if ph == phase)
        recv = sum(v[0] for (p, ph), v in self.received.items() if ph == phase)
        msgs = sum(v[1] for (p, ph), v in self.sent.items() if ph == phase)
        return {"bytes_sent": sent, "bytes_received": recv, "messages_sent": msgs,
                "rounds": self.rounds.get(phase, 0)}

    def report(self) -> dict:
        phases = {}
        for ph in (PHASE_OFFLINE, PHASE_ONLINE, PHASE_SETUP):
            phases[PHASE_NAMES[ph]] = self.totals(ph)
        total = {
            k: phases["offline"][k] + phases["online"][k]
            for k in ("bytes_sent", "bytes_received", "messages_sent", "rounds")
        }
        per_peer = {}
        keys = set(self.sent) | set(self.received)
        for (peer, ph) in sorted(keys):
            d = per_peer.setdefault(str(peer), {})
            d[PHASE_NAMES[ph]] = {
                "bytes_sent": self.sent.get((peer, ph), [0, 0])[0],
                "bytes_received": self.received.get((peer, ph), [0, 0])[0],
                "messages_sent": self.sent.get((peer, ph), [0, 0])[1],
                "messages_received": self.received.get((peer, ph), [0, 0])[1],
            }
        return {"phases": phases, "total": total, "per_peer": per_peer}


class _QueueChannel:
    """One direction of an in-process FIFO link carrying raw frame bytes."""

    def __init__(self):
        self._q = queue.Queue()

    def send(self, data: bytes):
        self._q.put(data)

    def recv(self, timeout: float) -> bytes:
        try:
            return self._q.get(timeout=timeout)
        except queue.Empty:
            raise ProtocolError("timed out waiting for peer message")


class _TcpChannel:
    """Bidirectional TCP link; framing is done by the session."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def send(self, data: bytes):
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise ProtocolError(f"peer connection lost during send: {exc}") from exc

    def recv_exact(self, n: int, timeout: float) -> bytes:
        self._sock.settimeout(timeout)
        chunks = []
        got = 0
        while got < n:
            try:
                chunk = self._sock.recv(n - got)
            except socket.timeout:
                raise ProtocolError("timed out waiting for peer message")
            except OSError as exc:
                raise ProtocolError(f"peer connection lost during recv: {exc}") from exc
            if not chunk:
                raise ProtocolError("peer disconnected")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass


class Session:
    """A party's view of the full mesh: ordered channels plus the ledger."""

    def __init__(self, cfg: PartyConfig):
        self.cfg = cfg
        self.party_id = cfg.party_id
        self.n_parties = cfg.n_parties
        self.ledger = CommLedger()
        self.timeout = cfg.timeout

    # -- subclass plumbing ------------------------------------------------
    def _send_raw(self, peer: int, data: bytes):
        raise NotImplementedError

    def _recv_frame(self, peer: int):
        raise NotImplementedError

    # -- public API -------------------------------------------------------
    def peers(self):
        return [p for p in range(self.n_parties) if p != self.party_id]

    def send_bytes(self, peer: int, payload: bytes, phase: int, kind: int = KIND_BYTES):
        frame = FRAME_HEADER.pack(len(payload), phase, kind) + payload
        self._send_raw(peer, frame)
        self.ledger.record_send(peer, phase, len(frame))

    def recv_bytes(self, peer: int, phase: int | None = None) -> bytes:
        got_phase, kind, payload = self._recv_frame(peer)
        self.ledger.record_recv(peer, got_phase, len(payload) + FRAME_HEADER_BYTES)
        if phase is not None and got_phase != phase:
            raise ProtocolError(
                f"expected phase {PHASE_NAMES.get(phase)} message, got {PHASE_NAMES.get(got_phase)}"
            )
        return payload

    def send_elements(self, peer: int, values: np.ndarray, phase: int):
        self.send_bytes(peer, elements_to_bytes(values), phase, KIND_ELEMENTS)

    def recv_elements(self, peer: int, count: int, phase: int | None = None) -> np.ndarray:
        payload = self.recv_bytes(peer, phase)
        values = elements_from_bytes(payload)
        if values.size != count:
            raise ProtocolError(f"expected {count} elements from party {peer}, got {values.size}")
        return values

    def round_barrier(self, phase: int = PHASE_ONLINE):
        # Protocol logic is round-synchronous (every recv blocks), so the
        # barrier only advances the shared round index.
        self.ledger.add_round(phase)

    def handshake(self):
        """Exchange scheme/config digests with every peer and verify agreement."""
        payload = struct.pack(
            "<BBI", SCHEME_IDS[self.cfg.scheme], self.party_id, self.cfg.fpcfg.config_hash()
        )
        for peer in self.peers():
            self.send_bytes(peer, payload, PHASE_SETUP, KIND_HANDSHAKE)
        for peer in self.peers():
            got = self.recv_bytes(peer, PHASE_SETUP)
            scheme_id, peer_id, cfg_hash = struct.unpack("<BBI", got)
            if scheme_id != SCHEME_IDS[self.cfg.scheme]:
                raise IncompatibleConfigError(f"party {peer} runs a different scheme")
            if peer_id != peer:
                raise ProtocolError(f"party id mismatch on channel to {peer}: claimed {peer_id}")
            if cfg_hash != self.cfg.fpcfg.config_hash():
                raise IncompatibleConfigError(
                    f"party {peer} disagrees on the fixed-point configuration"
                )

    def report_ledger(self) -> dict:
        rep = self.ledger.report()
        rep["party_id"] = self.party_id
        rep["scheme"] = self.cfg.scheme
        return rep

    def close(self):
        pass


class InProcSession(Session):
    def __init__(self, cfg: PartyConfig, inboxes: dict, outboxes: dict):
        super().__init__(cfg)
        self._inboxes = inboxes    # peer -> _QueueChannel we read
        self._outboxes = outboxes  # peer -> _QueueChannel we write

    def _send_raw(self, peer, data):
        self._outboxes[peer].send(data)

    def _recv_frame(self, peer):
        data = self._inboxes[peer].recv(self.timeout)
        length, phase, kind = FRAME_HEADER.unpack_from(data)
        payload = data[FRAME_HEADER_BYTES:]
        if len(payload) != length:
            raise ProtocolError("frame length mismatch on in-process channel")
        return phase, kind, payload


def local_mesh(scheme: str, fpcfg: FixedPointConfig | None = None, material_dir=None,
               timeout: float = 120.0) -> list:
    """Build fully connected in-process sessions for all parties of a scheme."""
    fpcfg = fpcfg or FixedPointConfig()
    n = SCHEME_PARTIES[scheme]
    links = {}
    for a in range(n):
        for b in range(n):
            if a != b:
                links[(a, b)] = _QueueChannel()  # direction a -> b
    sessions = []
    for i in range(n):
        cfg = PartyConfig(party_id=i, scheme=scheme, fpcfg=fpcfg,
                          material_dir=material_dir, timeout=timeout)
        inboxes = {p: links[(p, i)] for p in range(n) if p != i}
        outboxes = {p: links[(i, p)] for p in range(n) if p != i}
        sessions.append(InProcSession(cfg, inboxes, outboxes))
    return sessions


class TcpSession(Session):
    def __init__(self, cfg: PartyConfig, channels: dict):
        super().__init__(cfg)
        self._channels = channels

    def _send_raw(self, peer, data):
        self._channels[peer].send(data)

    def _recv_frame(self, peer):
        chan = self._channels[peer]
        header = chan.recv_exact(FRAME_HEADER_BYTES, self.timeout)
        length, phase, kind = FRAME_HEADER.unpack(header)
        payload = chan.recv_exact(length, self.timeout) if length else b""
        return phase, kind, payload

    def close(self):
        for chan in self._channels.values():
            chan.close()


def connect_all(cfg: PartyConfig) -> TcpSession:
    """Establish the TCP mesh: accept from lower-id peers, dial higher ids.

    Completes the config-hash handshake before returning.
    """
    channels = {}
    lower = [p for p in cfg.peers if p < cfg.party_id]
    higher = [p for p in cfg.peers if p > cfg.party_id]
    server = None
    if lower:
        if cfg.listen is None:
            raise ConfigError("listen address required to accept lower-id peers")
        server = socket.create_server(cfg.listen, backlog=len(lower))
        server.settimeout(cfg.timeout)
    try:
        for peer in higher:
            host, port = cfg.peers[peer]
            deadline = cfg.timeout
            import time
            start = time.monotonic()
            while True:
                try:
                    sock = socket.create_connection((host, port), timeout=cfg.timeout)
                    break
                except OSError as exc:
                    if time.monotonic() - start > deadline:
                        raise ProtocolError(f"could not reach party {peer} at {host}:{port}: {exc}")
                    time.sleep(0.05)
            sock.sendall(struct.pack("<B", cfg.party_id))
            channels[peer] = _TcpChannel(sock)
        for _ in lower:
            try:
                sock, _addr = server.accept()
            except socket.timeout:
                raise ProtocolError("timed out waiting for lower-id peers to connect")
            peer = struct.unpack("<B", sock.recv(1))[0]
            if peer not in lower:
                raise ProtocolError(f"unexpected connection claiming party id {peer}")
            channels[peer] = _TcpChannel(sock)
    finally:
        if server is not None:
            server.close()
    session = TcpSession(cfg, channels)
    session.handshake()
    return session


def parse_config_file(path: str) -> PartyConfig:
    """Text key/value party configuration.

    Keys: party_id, scheme, peer.<id> = host:port, listen = host:port,
    f, m, s, material_dir, timeout.
    """
    values = {}
    peers = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"bad config line: {line!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key.startswith("peer."):
                pid = int(key.split(".", 1)[1])
                host, _, port = val.rpartition(":")
                peers[pid] = (host, int(port))
            else:
                values[key] = val
    def addr(val):
        host, _, port = val.rpartition(":")
        return (host, int(port))
    fpcfg = FixedPointConfig(
        f=int(values.get("f", 15)), m=int(values.get("m", 16)), s=int(values.get("s", 40))
    )
    return PartyConfig(
        party_id=int(values["party_id"]),
        scheme=values["scheme"],
        fpcfg=fpcfg,
        peers=peers,
        listen=addr(values["listen"]) if "listen" in values else None,
        material_dir=values.get("material_dir"),
        timeout=float(values.get("timeout", 120.0)),
    )
