"""Round orchestration over a simulated message transport.

The coordinator broadcasts the global frame Z, every gateway runs one local
sweep in its own worker thread and replies with its updated W, and the
coordinator averages the replies into the next Z. Messages carry only frames
and round counters, never sample data; per-round diagnostics are collected
coordinator-side from the in-process gateway states.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import HyperParams
from .errors import ProtocolError, RoundTimeoutError
from .local_solver import GatewayState, local_objective, local_round
from .manifold import orthonormality_defect


@dataclass(frozen=True)
class GlobalModelMsg:
    """Coordinator -> gateway: the frame to agree with this round."""

    round: int
    Z: np.ndarray

    def to_payload(self) -> dict:
        return {"type": "global_model", "round": self.round, "entries": self.Z.tolist()}


@dataclass(frozen=True)
class ModelUpdateMsg:
    """Gateway -> coordinator: the locally updated frame. No sample data."""

    gateway_id: int
    round: int
    W: np.ndarray

    def to_payload(self) -> dict:
        return {"type": "model_update", "gateway_id": self.gateway_id,
                "round": self.round, "entries": self.W.tolist()}


class InProcessTransport:
    """Queue pair per gateway with optional latency injection.

    Reliable by default (never drops); a reply timeout can be set for
    fault-injection tests. When record_traffic is on, every payload crossing
    the transport is kept for inspection.
    """

    def __init__(self, n_gateways: int, latency: float = 0.0,
                 record_traffic: bool = False,
                 reply_timeout: Optional[float] = None):
        self.n_gateways = n_gateways
        self.latency = latency
        self.reply_timeout = reply_timeout
        self._inbox = [queue.Queue() for _ in range(n_gateways)]
        self._outbox = [queue.Queue() for _ in range(n_gateways)]
        self.traffic: list[dict] = [] if record_traffic else None

    def _record(self, msg) -> None:
        if self.traffic is not None:
            self.traffic.append(msg.to_payload())
        if self.latency > 0.0:
            time.sleep(self.latency)

    def broadcast(self, msg: GlobalModelMsg) -> None:
        for gid in range(self.n_gateways):
            self._record(msg)
            self._inbox[gid].put(msg)

    def shutdown(self) -> None:
        for gid in range(self.n_gateways):
            self._inbox[gid].put(None)

    def gateway_recv(self, gateway_id: int) -> Optional[GlobalModelMsg]:
        return self._inbox[gateway_id].get()

    def gateway_send(self, gateway_id: int, msg) -> None:
        if isinstance(msg, ModelUpdateMsg):
            self._record(msg)
        self._outbox[gateway_id].put(msg)

    def collect_updates(self, round_idx: int, shape: tuple[int, int]) -> list[ModelUpdateMsg]:
        """Barrier: wait for one reply from every gateway, in gateway order."""
        updates = []
        for gid in range(self.n_gateways):
            try:
                msg = self._outbox[gid].get(timeout=self.reply_timeout)
            except queue.Empty:
                raise RoundTimeoutError(
                    f"round {round_idx}: gateway {gid} did not reply within "
                    f"{self.reply_timeout}s") from None
            if isinstance(msg, BaseException):
                raise msg
            if msg.round != round_idx:
                raise ProtocolError(f"gateway {gid} replied for round {msg.round}, "
                                    f"expected {round_idx}")
            if msg.W.shape != shape:
                raise ProtocolError(f"gateway {gid} sent frame of shape {msg.W.shape}, "
                                    f"expected {shape}")
            updates.append(msg)
        return updates


def aggregate_z(W_list: Sequence[np.ndarray], Z_prev: np.ndarray,
                beta3: float, tau4: float) -> np.ndarray:
    """Damped average (beta3 * sum W_t + tau4 * Z_prev) / (N beta3 + tau4).

    The result is deliberately not re-orthonormalized; gateways re-enter the
    manifold through their own W-updates, and the detector orthonormalizes
    before scoring.
    """
    if len(W_list) == 0:
        raise ProtocolError("cannot aggregate an empty list of updates")
    Z_prev = np.asarray(Z_prev, dtype=float)
    total = np.zeros_like(Z_prev)
    for W in W_list:
        W = np.asarray(W, dtype=float)
        if W.shape != Z_prev.shape:
            raise ProtocolError(f"update shape {W.shape} does not match {Z_prev.shape}")
        total += W
    denom = len(W_list) * beta3 + tau4
    if denom <= 0.0:
        raise ValueError("N * beta3 + tau4 must be positive")
    return (beta3 * total + tau4 * Z_prev) / denom


@dataclass(frozen=True)
class RoundRecord:
    round: int
    objective: float
    consensus_residual: float
    gateway_objectives: tuple[float, ...]
    wall_time: float
    max_ortho_defect: float

    def to_export(self) -> dict:
        return {
            "round": self.round,
            "objective": self.objective,
            "consensus_residual": self.consensus_residual,
            "gateway_objectives": list(self.gateway_objectives),
        }


@dataclass
class RoundHistory:
    records: list[RoundRecord] = field(default_factory=list)

    def append(self, rec: RoundRecord) -> None:
        if self.records and rec.round <= self.records[-1].round:
            raise ProtocolError(f"round {rec.round} is not increasing past "
                                f"{self.records[-1].round}")
        self.records.append(rec)

    def objectives(self) -> list[float]:
        return [r.objective for r in self.records]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_export(), sort_keys=True) + "\n"
                       for r in self.records)

    def write_jsonl(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())


@dataclass(frozen=True)
class RunResult:
    Z: np.ndarray
    history: RoundHistory
    gateways: list[GatewayState]
    stopped: str  # "converged" | "max_rounds"


def global_objective(gateways: Sequence[GatewayState], Z: np.ndarray,
                     hp: HyperParams) -> float:
    """Sum of per-gateway local objectives against one global Z."""
    return float(sum(local_objective(s, Z, hp) for s in gateways))


def _gateway_worker(slot: int, states: list[GatewayState], hp: HyperParams,
                    transport: InProcessTransport) -> None:
    while True:
        msg = transport.gateway_recv(slot)
        if msg is None:
            return
        try:
            states[slot] = local_round(states[slot], msg.Z, hp)
            reply = ModelUpdateMsg(gateway_id=states[slot].gateway_id,
                                   round=msg.round, W=states[slot].W)
        except BaseException as exc:  # surfaced by collect_updates
            transport.gateway_send(slot, exc)
            return
        transport.gateway_send(slot, reply)


def run_rounds(gateways: Sequence[GatewayState], hp: HyperParams,
               transport: Optional[InProcessTransport] = None,
               Z0: Optional[np.ndarray] = None) -> RunResult:
    """Synchronous federation loop: broadcast Z, local sweeps, aggregate.

    Z starts at the shared seeded initializer (the first gateway's current W
    unless Z0 is given) and stops on the rounds limit or when its relative
    change drops to outer_tol (0 disables early stopping). One local sweep
    per communication round; the coordinator waits for all replies before
    aggregating.
    """
    states = list(gateways)
    if not states:
        raise ProtocolError("need at least one gateway")
    shape = states[0].W.shape
    for s in states:
        if s.W.shape != shape:
            raise ProtocolError(f"gateway {s.gateway_id} frame shape {s.W.shape} "
                                f"does not match {shape}")
    if transport is None:
        transport = InProcessTransport(len(states))
    if transport.n_gateways != len(states):
        raise ProtocolError(f"transport has {transport.n_gateways} channels for "
                            f"{len(states)} gateways")

    Z = np.array(states[0].W if Z0 is None else Z0, dtype=float)
    if Z.shape != shape:
        raise ProtocolError(f"Z0 shape {Z.shape} does not match {shape}")

    history = RoundHistory()
    workers = [threading.Thread(target=_gateway_worker,
                                args=(i, states, hp, transport), daemon=True)
               for i in range(len(states))]
    for w in workers:
        w.start()

    stopped = "max_rounds"
    t_start = time.perf_counter()
    try:
        for k in range(hp.rounds):
            transport.broadcast(GlobalModelMsg(round=k, Z=Z))
            updates = transport.collect_updates(k, shape)
            Z_new = aggregate_z([u.W for u in updates], Z, hp.beta3, hp.tau4)
            gateway_objs = tuple(local_objective(s, Z_new, hp) for s in states)
            consensus = max(float(np.linalg.norm(s.W - Z_new)) for s in states)
            defect = max(orthonormality_defect(s.W) for s in states)
            history.append(RoundRecord(
                round=k,
                objective=float(sum(gateway_objs)),
                consensus_residual=consensus,
                gateway_objectives=gateway_objs,
                wall_time=time.perf_counter() - t_start,
                max_ortho_defect=defect,
            ))
            rel_change = float(np.linalg.norm(Z_new - Z)) / max(1.0, float(np.linalg.norm(Z)))
            Z = Z_new
            # outer_tol 0 disables early stopping (exact fixed points included)
            if hp.outer_tol > 0.0 and rel_change <= hp.outer_tol:
                stopped = "converged"
                break
    finally:
        transport.shutdown()
        for w in workers:
            w.join(timeout=30.0)

    return RunResult(Z=Z, history=history, gateways=states, stopped=stopped)
