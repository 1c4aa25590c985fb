"""Socket runtime: one coordinator process, one process per subsystem.

The coordinator listens; each subsystem connects and runs its own fast
loop. Exchanges are in lockstep per coordinator tick: every subsystem sends
one report stamped with the tick, the coordinator answers each with the new
price or allocation for that tick, and the subsystem then runs one
coordinator period of local steps. A subsystem's first report doubles as
its hello. The coordinator closes the connections after the last tick.

Only the dual and primal architectures run distributed: the override
scheme's constraint controller needs the total usage at every fast sample,
which is not part of the tick-level message set.
"""

from __future__ import annotations

import logging
import math
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..coordinators import dual_coordinator_step, primal_coordinator_step
from ..core import DistOptError, ProtocolError, UsageError
from ..scenarios import Scenario, disturbance_at
from .protocol import (
    AllocationUpdate,
    OpportunityCostReport,
    PriceBroadcast,
    UsageReport,
    decode_message,
    encode_message,
)
from .simulation import build_agents, build_coordinator

log = logging.getLogger(__name__)

__all__ = [
    "DISTRIBUTED_ARCHITECTURES",
    "ConnectionLost",
    "CoordinatorResult",
    "SubsystemResult",
    "run_coordinator",
    "run_subsystem",
    "run_distributed_local",
]

DISTRIBUTED_ARCHITECTURES = ("dual", "primal")


class ConnectionLost(DistOptError):
    """A peer went away mid-run; ``partial`` holds what was collected."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass
class CoordinatorResult:
    ticks: List[int] = field(default_factory=list)
    times: List[float] = field(default_factory=list)
    lam: List[np.ndarray] = field(default_factory=list)
    alloc: List[np.ndarray] = field(default_factory=list)
    dropped: int = 0


@dataclass
class SubsystemResult:
    index: int
    times: List[float] = field(default_factory=list)
    u: List[np.ndarray] = field(default_factory=list)
    signal: Optional[np.ndarray] = None

    @property
    def final_u(self) -> np.ndarray:
        return self.u[-1]


def _check_arch(arch: str) -> None:
    if arch not in DISTRIBUTED_ARCHITECTURES:
        raise UsageError(
            f"architecture {arch!r} cannot run distributed; choose from "
            f"{', '.join(DISTRIBUTED_ARCHITECTURES)}"
        )


def _n_ticks(s: Scenario, period: int) -> int:
    return s.n_steps // period + 1


class _Peer:
    def __init__(self, conn: socket.socket):
        self.conn = conn
        self.reader = conn.makefile("r", encoding="utf-8", newline="\n")
        self.writer = conn.makefile("w", encoding="utf-8", newline="\n")
        self.index: Optional[int] = None
        self.dropped = 0

    def read(self, expected_types, tick: int):
        """Next well-formed message of the expected kind for ``tick``.

        Malformed and out-of-turn lines are logged and dropped; the
        connection stays open.
        """
        while True:
            line = self.reader.readline()
            if not line:
                raise ConnectionLost(f"subsystem {self.index} closed the connection")
            try:
                msg = decode_message(line)
            except ProtocolError as exc:
                self.dropped += 1
                log.warning("dropped message from subsystem %s: %s", self.index, exc)
                continue
            if not isinstance(msg, expected_types) or msg.tick != tick:
                self.dropped += 1
                log.warning("dropped out-of-turn %s (tick %d, expected %d)",
                            type(msg).__name__, msg.tick, tick)
                continue
            if self.index is not None and msg.subsystem != self.index:
                self.dropped += 1
                log.warning("dropped report claiming subsystem %d on link %d", msg.subsystem, self.index)
                continue
            return msg

    def send(self, msg) -> None:
        self.writer.write(encode_message(msg))
        self.writer.flush()

    def close(self) -> None:
        for f in (self.writer, self.reader):
            try:
                f.close()
            except OSError:
                pass
        try:
            self.conn.close()
        except OSError:
            pass


def run_coordinator(
    s: Scenario,
    arch: str,
    host: str = "127.0.0.1",
    port: int = 0,
    on_listen=None,
    timeout: float = 60.0,
    period: Optional[int] = None,
) -> CoordinatorResult:
    """Serve one run. ``on_listen(port)`` is called once the socket is bound."""
    _check_arch(arch)
    d0 = disturbance_at(s, 0.0)
    coord = build_coordinator(s, arch, d0, period)
    P = coord.period
    report_type = UsageReport if arch == "dual" else OpportunityCostReport
    result = CoordinatorResult()
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    peers: List[_Peer] = []
    try:
        srv.bind((host, port))
        srv.listen(s.N)
        srv.settimeout(timeout)
        if on_listen is not None:
            on_listen(srv.getsockname()[1])
        pending = []
        for _ in range(s.N):
            conn, _addr = srv.accept()
            conn.settimeout(timeout)
            pending.append(_Peer(conn))
        # first reports identify the links
        first: Dict[int, object] = {}
        for peer in pending:
            msg = peer.read(report_type, 0)
            if msg.subsystem >= s.N or msg.subsystem in first:
                raise ProtocolError(f"bad or duplicate subsystem id {msg.subsystem}")
            peer.index = msg.subsystem
            first[msg.subsystem] = msg
        peers = sorted(pending, key=lambda p: p.index)
        for tick in range(_n_ticks(s, P)):
            if tick == 0:
                reports = [first[i] for i in range(s.N)]
            else:
                reports = [p.read(report_type, tick) for p in peers]
            t = tick * P * s.dt
            g_bar = disturbance_at(s, t).g_max
            if arch == "dual":
                g = np.array([r.g for r in reports])
                total = np.array([math.fsum(g[:, k]) for k in range(s.m)])
                coord = dual_coordinator_step(coord, total, g_bar)
                for p in peers:
                    p.send(PriceBroadcast(tuple(coord.lam), tick))
                result.lam.append(coord.lam.copy())
            else:
                lams = [r.lambda_i for r in reports]
                coord, _ = primal_coordinator_step(coord, lams, g_bar)
                for p in peers:
                    p.send(AllocationUpdate(p.index, tuple(coord.t[p.index]), tick))
                result.alloc.append(coord.t.copy())
            result.ticks.append(tick)
            result.times.append(t)
    except (OSError, ConnectionLost) as exc:
        raise ConnectionLost(f"coordinator aborted: {exc}", result) from exc
    finally:
        result.dropped = sum(p.dropped for p in peers)
        for p in peers:
            p.close()
        srv.close()
    return result


def _connect(host: str, port: int, timeout: float) -> socket.socket:
    deadline = time.monotonic() + timeout
    while True:
        try:
            return socket.create_connection((host, port), timeout=timeout)
        except OSError:
            if time.monotonic() > deadline:
                raise
            time.sleep(0.05)


def run_subsystem(
    s: Scenario,
    arch: str,
    index: int,
    host: str,
    port: int,
    timeout: float = 60.0,
    period: Optional[int] = None,
) -> SubsystemResult:
    """Run subsystem ``index``'s fast loop against a remote coordinator."""
    _check_arch(arch)
    if not 0 <= index < s.N:
        raise UsageError(f"subsystem index {index} out of range for N={s.N}")
    models = s.models()
    d0 = disturbance_at(s, 0.0)
    agent = build_agents(s, arch, models, d0)[index]
    P = s.period_for(arch) if period is None else int(period)
    K = s.n_steps
    result = SubsystemResult(index)
    conn = _connect(host, port, timeout)
    conn.settimeout(timeout)
    reader = conn.makefile("r", encoding="utf-8", newline="\n")
    writer = conn.makefile("w", encoding="utf-8", newline="\n")
    reply_type = PriceBroadcast if arch == "dual" else AllocationUpdate
    try:
        for tick in range(_n_ticks(s, P)):
            k0 = tick * P
            d = disturbance_at(s, k0 * s.dt).local[index]
            if arch == "dual":
                report = UsageReport(index, tuple(agent.usage(d)), tick)
            else:
                report = OpportunityCostReport(index, tuple(agent.lam_i), tick)
            writer.write(encode_message(report))
            writer.flush()
            while True:
                line = reader.readline()
                if not line:
                    raise ConnectionLost("coordinator closed the connection", result)
                try:
                    msg = decode_message(line)
                except ProtocolError as exc:
                    log.warning("subsystem %d dropped message: %s", index, exc)
                    continue
                if isinstance(msg, reply_type) and msg.tick == tick:
                    break
                log.warning("subsystem %d dropped out-of-turn %s", index, type(msg).__name__)
            signal = np.array(msg.lam if arch == "dual" else msg.t)
            result.signal = signal
            for k in range(k0, min(k0 + P, K + 1)):
                t = k * s.dt
                dk = disturbance_at(s, t).local[index]
                agent.local_step(dk, signal)
                result.times.append(t)
                result.u.append(agent.u.copy())
                if k < K:
                    agent.advance(dk, s.dt)
    except OSError as exc:
        raise ConnectionLost(f"subsystem {index} aborted: {exc}", result) from exc
    finally:
        for f in (writer, reader):
            try:
                f.close()
            except OSError:
                pass
        conn.close()
    return result


@dataclass
class DistributedRun:
    coordinator: CoordinatorResult
    subsystems: List[SubsystemResult]

    @property
    def final_u(self) -> List[np.ndarray]:
        return [r.final_u for r in self.subsystems]


def run_distributed_local(s: Scenario, arch: str, host: str = "127.0.0.1",
                          timeout: float = 60.0, period: Optional[int] = None) -> DistributedRun:
    """Coordinator and all subsystems as threads talking over loopback TCP."""
    _check_arch(arch)
    bound = threading.Event()
    port_box: List[int] = []
    errors: List[BaseException] = []
    results: Dict[str, object] = {}

    def on_listen(p):
        port_box.append(p)
        bound.set()

    def coord_main():
        try:
            results["coord"] = run_coordinator(s, arch, host, 0, on_listen, timeout, period)
        except BaseException as exc:  # surfaced in the caller's thread
            errors.append(exc)
            bound.set()

    def sub_main(i):
        try:
            results[i] = run_subsystem(s, arch, i, host, port_box[0], timeout, period)
        except BaseException as exc:
            errors.append(exc)

    ct = threading.Thread(target=coord_main, name="coordinator", daemon=True)
    ct.start()
    if not bound.wait(timeout) or not port_box:
        ct.join(1.0)
        raise errors[0] if errors else ConnectionLost("coordinator failed to start")
    subs = [threading.Thread(target=sub_main, args=(i,), name=f"subsystem-{i}", daemon=True)
            for i in range(s.N)]
    for th in subs:
        th.start()
    for th in subs:
        th.join(timeout * 4)
    ct.join(timeout)
    if errors:
        raise errors[0]
    return DistributedRun(results["coord"], [results[i] for i in range(s.N)])
