"""Shared domain vocabulary: time, token sequences, sessions, requests, events.

Time is integer microseconds so runs are bit-reproducible. Token ids are
synthetic integers; only prefix identity matters, there is no tokenizer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

# Integer microseconds since simulation start.
SimTime = int

# Ordered token ids. Immutable so sequences can key caches and be shared freely.
TokenSeq = tuple[int, ...]


def is_prefix_of(a: TokenSeq, b: TokenSeq) -> bool:
    """True iff ``a`` equals the first ``len(a)`` elements of ``b``."""
    return len(a) <= len(b) and b[: len(a)] == a


@dataclass(frozen=True)
class AgentProfile:
    """One agent in a session's chain: which model it runs on and its fixed
    input-extension / output token lengths."""

    model_id: str
    input_extension_len: int
    output_len: int

    def __post_init__(self) -> None:
        if self.output_len < 1:
            raise ValueError("output_len must be >= 1")
        if self.input_extension_len < 0:
            raise ValueError("input_extension_len must be >= 0")


@dataclass(frozen=True)
class ScriptedRequest:
    """An explicit (model, context, output_len) triple for scripted sessions.

    Scripted sessions issue exactly these requests in order instead of the
    chained extend-then-generate construction; used for controlled memory
    scenarios where each request carries a hand-built context.
    """

    model_id: str
    context: TokenSeq
    output_len: int


@dataclass(frozen=True)
class SessionSpec:
    session_id: int
    arrival_time: SimTime
    initial_prompt_len: int
    turns: int
    agent_chain: tuple[AgentProfile, ...]
    scripted: Optional[tuple[ScriptedRequest, ...]] = None

    def __post_init__(self) -> None:
        if self.turns < 1:
            raise ValueError("turns must be >= 1")
        if not self.agent_chain and not self.scripted:
            raise ValueError("agent_chain must be non-empty")

    @property
    def total_requests(self) -> int:
        if self.scripted is not None:
            return len(self.scripted)
        return self.turns * len(self.agent_chain)


class SessionStatus(enum.Enum):
    WAITING_ADMISSION = "waiting_admission"
    ACTIVE = "active"
    DONE = "done"


@dataclass
class SessionState:
    """Mutable per-session context and chain position.

    The context is append-only: after step i it equals the context after
    step i-1 plus that step's input extension plus its output.
    """

    spec: SessionSpec
    context: list[int] = field(default_factory=list)
    turn_index: int = 0
    step_index: int = 0
    pinned_prefill_worker: Optional[int] = None
    status: SessionStatus = SessionStatus.WAITING_ADMISSION
    failed: bool = False

    def extend_context(self, new_tokens: TokenSeq) -> None:
        if self.status is SessionStatus.DONE:
            raise RuntimeError(
                f"session {self.spec.session_id} is done; context is frozen"
            )
        self.context.extend(new_tokens)

    def snapshot(self) -> TokenSeq:
        return tuple(self.context)

    @property
    def requests_issued(self) -> int:
        return self.turn_index * len(self.spec.agent_chain) + self.step_index


@dataclass(frozen=True)
class Request:
    request_id: int
    session_id: int
    model_id: str
    context_snapshot: TokenSeq
    output_len: int
    issue_time: SimTime


class EventKind(enum.Enum):
    SESSION_ARRIVAL = "SessionArrival"
    PREFILL_START = "PrefillStart"
    PREFILL_COMPLETE = "PrefillComplete"
    HANDOFF_COMPLETE = "HandoffComplete"
    DECODE_STEP = "DecodeStep"
    REQUEST_COMPLETE = "RequestComplete"
    SESSION_COMPLETE = "SessionComplete"


@dataclass(frozen=True, order=True)
class SimEvent:
    """A timestamped event; (time, seq) is a strict total order."""

    time: SimTime
    seq: int
    kind: EventKind = field(compare=False)
    session_id: int = field(compare=False, default=-1)
    request_id: int = field(compare=False, default=-1)
    worker_id: int = field(compare=False, default=-1)
    detail: str = field(compare=False, default="")

    def trace_line(self) -> str:
        return (
            f"{self.time} {self.seq} {self.kind.value} "
            f"{self.session_id} {self.request_id} {self.worker_id} {self.detail}"
        )
