"""Master/worker message-passing execution of one CPA round.

The master encodes the data, sends one ``Assign`` message per worker and
decodes once every ``Response`` is in.  Workers run as threads that share
nothing with the master except their inbox and the common outbox queue.
Time is a logical tick: assignments leave at tick 0 and a response from
worker ``n`` is stamped ``1 + latency_n``, where the latency is drawn from a
generator seeded by ``(seed, n)``.  Ticks, and therefore the trace, do not
depend on thread scheduling.
"""
from __future__ import annotations

import enum
import hashlib
import json
import queue
import threading
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import pipeline as pl
from .errors import InvalidParams, MissingResponses, WorkerLoss
from .scheme import CpaScheme, SystemParams


class MessageKind(str, enum.Enum):
    ASSIGN = "Assign"
    RESPONSE = "Response"


_KIND_ORDER = {MessageKind.ASSIGN: 0, MessageKind.RESPONSE: 1}


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    worker_index: int
    payload: np.ndarray
    point: complex | None = None
    timestamp: int = 0

    def digest(self) -> str:
        """sha256 over shape and raw complex128 bytes of the payload."""
        arr = np.ascontiguousarray(self.payload, dtype=np.complex128)
        h = hashlib.sha256(repr(arr.shape).encode())
        h.update(arr.tobytes())
        return h.hexdigest()

    def sort_key(self) -> tuple[int, int, int]:
        return (self.timestamp, _KIND_ORDER[self.kind], self.worker_index)


@dataclass(frozen=True)
class ZeroLatency:
    def draw(self, seed: int, worker_index: int) -> int:
        return 0


@dataclass(frozen=True)
class UniformRandomLatency:
    """Integer latency uniform on ``0..max_ticks``."""

    max_ticks: int

    def __post_init__(self):
        if self.max_ticks < 0:
            raise InvalidParams("max_ticks must be >= 0")

    def draw(self, seed: int, worker_index: int) -> int:
        rng = np.random.default_rng(np.random.SeedSequence([seed, worker_index]))
        return int(rng.integers(0, self.max_ticks + 1))


@dataclass(frozen=True)
class SimConfig:
    latency_model: ZeroLatency | UniformRandomLatency = field(default_factory=ZeroLatency)
    seed: int = 0
    worker_count: int = 0
    absent: frozenset[int] = frozenset()
    threaded: bool = True

    def __post_init__(self):
        object.__setattr__(self, "absent", frozenset(self.absent))


@dataclass(frozen=True)
class RunTrace:
    messages: tuple[Message, ...]
    final: pl.AggregateResult
    seed: int

    @property
    def worker_count(self) -> int:
        return len(self.final.nodes)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"kind": m.kind.value, "worker_index": m.worker_index,
                             "tick": m.timestamp, "digest": m.digest()}, sort_keys=True)
                 for m in self.messages]
        return "".join(line + "\n" for line in lines)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_jsonl())


def _worker(index: int, task: pl.TaskSpec, present: bool, tick: int,
            inbox: queue.Queue, outbox: queue.Queue) -> None:
    msg: Message = inbox.get()
    if not present:
        return
    share = pl.EncodedShare(msg.worker_index, msg.point, msg.payload)
    resp = pl.worker_compute(share, task)
    outbox.put(Message(MessageKind.RESPONSE, index, resp.payload, None, tick))


def run_simulation(params: SystemParams, scheme: CpaScheme, data: pl.Dataset,
                   task: pl.TaskSpec, config: SimConfig,
                   method: str = pl.METHOD_CPA) -> RunTrace:
    """Run the protocol and return the ordered trace with the decoded result.

    ``method`` selects CPA decoding (the scheme must verify as feasible) or
    the individual-decoding baseline.
    """
    N = params.N
    if scheme.params != params:
        raise InvalidParams("scheme was built for different system parameters")
    if config.worker_count != N:
        raise InvalidParams(f"worker_count = {config.worker_count} but N = {N}")
    if method not in (pl.METHOD_CPA, pl.METHOD_INDIVIDUAL):
        raise InvalidParams(f"unknown method {method!r}")

    shares = pl.encode(data, scheme)
    assigns = [Message(MessageKind.ASSIGN, s.worker_index, s.payload, s.point, 0) for s in shares]
    ticks = [1 + config.latency_model.draw(config.seed, n) for n in range(N)]
    inboxes = [queue.Queue() for _ in range(N)]
    outbox: queue.Queue = queue.Queue()
    args = [(n, task, n not in config.absent, ticks[n], inboxes[n], outbox) for n in range(N)]

    if config.threaded:
        threads = [threading.Thread(target=_worker, args=a, daemon=True) for a in args]
        for t in threads:
            t.start()
        for msg in assigns:
            inboxes[msg.worker_index].put(msg)
        for t in threads:
            t.join()
    else:
        for msg, a in zip(assigns, args):
            inboxes[msg.worker_index].put(msg)
            _worker(*a)

    responses: list[Message] = []
    while not outbox.empty():
        responses.append(outbox.get_nowait())
    responses.sort(key=Message.sort_key)

    worker_responses = sorted((pl.WorkerResponse(m.worker_index, m.payload) for m in responses),
                              key=lambda r: r.worker_index)
    try:
        if method == pl.METHOD_CPA:
            final = pl.decode_cpa(worker_responses, scheme)
        else:
            _, final = pl.decode_individual(worker_responses, scheme.beta, params)
    except MissingResponses as exc:
        if config.absent:
            raise WorkerLoss(f"absent workers {sorted(config.absent)}: {exc}") from exc
        raise

    messages = tuple(sorted(assigns + responses, key=Message.sort_key))
    return RunTrace(messages, final, config.seed)


@dataclass
class TraceReport:
    violations: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations


def _index_violations(kind: MessageKind, msgs: Sequence[Message], N: int) -> Iterable[str]:
    seen: set[int] = set()
    for m in msgs:
        if not 0 <= m.worker_index < N:
            yield f"{kind.value}: worker_index {m.worker_index} outside [0, {N})"
        elif m.worker_index in seen:
            yield f"{kind.value}: duplicate index {m.worker_index}"
        seen.add(m.worker_index)
    missing = sorted(set(range(N)) - seen)
    if missing:
        yield f"{kind.value}: no message for workers {missing}"
    shapes = {np.shape(m.payload) for m in msgs}
    if len(shapes) > 1:
        yield f"{kind.value}: inconsistent payload shapes {sorted(shapes)}"


def trace_validate(trace: RunTrace) -> TraceReport:
    """Check the structural invariants of a trace; never raises."""
    report = TraceReport()
    N = trace.worker_count
    msgs = list(trace.messages)
    if len(msgs) != 2 * N:
        report.violations.append(f"message count {len(msgs)} != 2N = {2 * N}")
    for a, b in zip(msgs, msgs[1:]):
        if b.timestamp < a.timestamp:
            report.violations.append("messages are not in tick order")
            break
    by_kind = {k: [m for m in msgs if m.kind is k] for k in MessageKind}
    for kind, group in by_kind.items():
        report.violations.extend(_index_violations(kind, group, N))
    for m in by_kind[MessageKind.ASSIGN]:
        if m.point is None:
            report.violations.append(f"Assign to worker {m.worker_index} has no point")
    first_assign: dict[int, int] = {}
    for pos, m in enumerate(msgs):
        if m.kind is MessageKind.ASSIGN:
            first_assign.setdefault(m.worker_index, pos)
        elif m.worker_index not in first_assign:
            report.violations.append(f"Response from worker {m.worker_index} precedes its Assign")
    a_shapes = {np.shape(m.payload) for m in by_kind[MessageKind.ASSIGN]}
    r_shapes = {np.shape(m.payload) for m in by_kind[MessageKind.RESPONSE]}
    if a_shapes and r_shapes and a_shapes != r_shapes:
        report.violations.append(f"Assign shapes {sorted(a_shapes)} differ from Response shapes {sorted(r_shapes)}")
    return report
