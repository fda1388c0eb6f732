"""The discrete-event engine and worker fleet.

Prefill workers run FCFS one-job-at-a-time prefill; decode workers run
synchronous-step batched decode loops and also serialize KV ingest (cache
handoff) between step boundaries, which is what couples staging pressure
into decode throughput. An admission controller caps concurrent sessions.

Everything is single-threaded and deterministic: identical (config, seed)
pairs produce identical event traces.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .core import (
    EventKind,
    Request,
    SessionSpec,
    SessionState,
    SessionStatus,
    SimEvent,
    SimTime,
    TokenSeq,
)
from .costs import CostParams
from .kvstore import BlockPool, CapacityExhausted, KVBlock
from .router import Router, ServingMode
from . import workload as wl


class LivelockError(Exception):
    pass


UNBOUNDED = 1 << 62


@dataclass
class PrefillWorker:
    worker_id: int
    pool: BlockPool
    queue: deque[Request] = field(default_factory=deque)
    busy: bool = False


@dataclass
class ActiveDecode:
    request: Request
    generated: int = 0
    first_token_time: Optional[SimTime] = None
    last_token_time: Optional[SimTime] = None
    itl_us: list[int] = field(default_factory=list)


@dataclass
class DecodeWorker:
    worker_id: int
    model_id: str
    capacity_tokens: int
    max_batch: int
    batch: list[ActiveDecode] = field(default_factory=list)
    ingest_queue: deque[Request] = field(default_factory=deque)
    wait_queue: deque[ActiveDecode] = field(default_factory=deque)
    busy: bool = False
    resident_tokens: int = 0

    @property
    def resident_fraction(self) -> float:
        if self.capacity_tokens <= 0:
            return 0.0
        return self.resident_tokens / self.capacity_tokens


@dataclass
class AdmissionController:
    """Admits sessions strictly in arrival order up to the concurrency cap."""

    max_concurrent_sessions: int
    active_count: int = 0
    wait_queue: deque[SessionState] = field(default_factory=deque)

    def try_admit(self, session: SessionState) -> bool:
        if self.active_count < self.max_concurrent_sessions:
            self.active_count += 1
            return True
        self.wait_queue.append(session)
        return False

    def release(self) -> Optional[SessionState]:
        self.active_count -= 1
        if self.wait_queue:
            self.active_count += 1
            return self.wait_queue.popleft()
        return None


@dataclass
class RequestRecord:
    request_id: int
    session_id: int
    model_id: str
    issue_time_us: SimTime
    ttft_us: Optional[SimTime] = None
    e2e_us: Optional[SimTime] = None
    out_tokens: int = 0
    itl_us: list[int] = field(default_factory=list)
    failed: bool = False


@dataclass
class RunResult:
    end_time_us: SimTime
    records: list[RequestRecord]
    # (completion_time_us, tokens) per decode step, for windowed throughput
    token_completions: list[tuple[SimTime, int]]
    prefill_pool_stats: list[dict]
    peak_footprint_tokens: dict[str, int]
    total_matched_tokens: int
    total_lookup_tokens: int
    eviction_count: int
    failure_count: int
    staging_handoff_count: int
    trace: Optional[list[str]] = None

    @property
    def prefix_hit_ratio(self) -> float:
        if self.total_lookup_tokens == 0:
            return 0.0
        return self.total_matched_tokens / self.total_lookup_tokens


class Simulation:
    """One simulation run over a fixed session list."""

    def __init__(
        self,
        mode: ServingMode,
        sessions: list[SessionSpec],
        cost: CostParams,
        model_ids: list[str],
        block_size: int = 16,
        prefill_capacity_blocks: int = UNBOUNDED,
        decode_capacity_blocks: int = UNBOUNDED,
        max_batch: int = 64,
        max_concurrent_sessions: int = UNBOUNDED,
        max_sim_time_us: int = 100_000 * 1_000_000,
        record_trace: bool = False,
    ) -> None:
        self.mode = mode
        self.cost = cost
        self.router = Router(mode, model_ids)
        n = len(model_ids)
        self.prefill_workers = [
            PrefillWorker(i, BlockPool(prefill_capacity_blocks, block_size))
            for i in range(n)
        ]
        self.decode_workers = [
            DecodeWorker(
                worker_id=n + i,
                model_id=m,
                capacity_tokens=decode_capacity_blocks * block_size
                if decode_capacity_blocks < UNBOUNDED
                else UNBOUNDED,
                max_batch=max_batch,
            )
            for i, m in enumerate(model_ids)
        ]
        self.block_size = block_size
        self.admission = AdmissionController(max_concurrent_sessions)
        self.max_sim_time_us = max_sim_time_us
        self.sessions = {s.session_id: SessionState(spec=s) for s in sessions}
        self._heap: list[SimEvent] = []
        self._seq = 0
        self.now: SimTime = 0
        self._next_request_id = 0
        self._records: dict[int, RequestRecord] = {}
        self._record_order: list[int] = []
        self._token_completions: list[tuple[SimTime, int]] = []
        # request_id -> (prefill worker id, pinned blocks), held until handoff
        self._prefill_pins: dict[int, tuple[int, list[KVBlock]]] = {}
        self._inflight: dict[int, Request] = {}
        self.failure_count = 0
        self.staging_handoff_count = 0
        self.trace: Optional[list[str]] = [] if record_trace else None
        for spec in sessions:
            self._schedule(spec.arrival_time, EventKind.SESSION_ARRIVAL,
                           session_id=spec.session_id)

    # -- event plumbing --------------------------------------------------

    def _schedule(self, time: SimTime, kind: EventKind, *, session_id: int = -1,
                  request_id: int = -1, worker_id: int = -1, detail: str = "") -> None:
        if time < self.now:
            raise RuntimeError("cannot schedule into the past")
        event = SimEvent(time=time, seq=self._seq, kind=kind, session_id=session_id,
                         request_id=request_id, worker_id=worker_id, detail=detail)
        self._seq += 1
        heapq.heappush(self._heap, event)

    def run_until_idle(self) -> SimTime:
        handlers = {
            EventKind.SESSION_ARRIVAL: self._on_session_arrival,
            EventKind.PREFILL_START: self._on_prefill_start,
            EventKind.PREFILL_COMPLETE: self._on_prefill_complete,
            EventKind.HANDOFF_COMPLETE: self._on_handoff_complete,
            EventKind.DECODE_STEP: self._on_decode_step,
            EventKind.REQUEST_COMPLETE: self._on_request_complete,
            EventKind.SESSION_COMPLETE: self._on_session_complete,
        }
        while self._heap:
            event = heapq.heappop(self._heap)
            if event.time > self.max_sim_time_us:
                raise LivelockError(
                    f"simulated time {event.time} exceeded bound {self.max_sim_time_us}"
                )
            self.now = event.time
            if self.trace is not None:
                self.trace.append(event.trace_line())
            handlers[event.kind](event)
        for session in self.sessions.values():
            if session.status is not SessionStatus.DONE:
                raise RuntimeError(
                    f"event queue drained with session {session.spec.session_id} "
                    f"in state {session.status.value}"
                )
        return self.now

    def result(self) -> RunResult:
        matched = sum(w.pool.matched_tokens for w in self.prefill_workers)
        lookups = sum(w.pool.lookup_tokens for w in self.prefill_workers)
        evictions = sum(w.pool.eviction_count for w in self.prefill_workers)
        peak: dict[str, int] = {}
        for w in self.prefill_workers:
            for ns, tokens in w.pool.peak_footprint_tokens().items():
                peak[ns] = peak.get(ns, 0) + tokens
        return RunResult(
            end_time_us=self.now,
            records=[self._records[r] for r in self._record_order],
            token_completions=self._token_completions,
            prefill_pool_stats=[vars(w.pool.stats()) for w in self.prefill_workers],
            peak_footprint_tokens=peak,
            total_matched_tokens=matched,
            total_lookup_tokens=lookups,
            eviction_count=evictions,
            failure_count=self.failure_count,
            staging_handoff_count=self.staging_handoff_count,
            trace=self.trace,
        )

    # -- session lifecycle -----------------------------------------------

    def _on_session_arrival(self, event: SimEvent) -> None:
        session = self.sessions[event.session_id]
        if self.admission.try_admit(session):
            self._activate(session)

    def _activate(self, session: SessionState) -> None:
        session.status = SessionStatus.ACTIVE
        spec = session.spec
        if spec.scripted is None:
            session.extend_context(
                wl.synth_tokens(spec.session_id, wl.prompt_slot(),
                                spec.initial_prompt_len)
            )
        self._dispatch_step(session)

    def _dispatch_step(self, session: SessionState) -> None:
        spec = session.spec
        if spec.scripted is not None:
            scripted = spec.scripted[session.step_index]
            model_id = scripted.model_id
            context: TokenSeq = scripted.context
            output_len = scripted.output_len
        else:
            agent = spec.agent_chain[session.step_index]
            session.extend_context(
                wl.synth_tokens(spec.session_id,
                                wl.extension_slot(session.requests_issued),
                                agent.input_extension_len)
            )
            model_id = agent.model_id
            context = session.snapshot()
            output_len = agent.output_len
        # A session's first request is issued at session arrival: time spent
        # waiting for admission counts against that request's TTFT/E2E.
        issue_time = (
            spec.arrival_time if session.requests_issued == 0 else self.now
        )
        request = Request(
            request_id=self._next_request_id,
            session_id=spec.session_id,
            model_id=model_id,
            context_snapshot=context,
            output_len=output_len,
            issue_time=issue_time,
        )
        self._next_request_id += 1
        self._inflight[request.request_id] = request
        self._records[request.request_id] = RequestRecord(
            request_id=request.request_id,
            session_id=request.session_id,
            model_id=model_id,
            issue_time_us=issue_time,
        )
        self._record_order.append(request.request_id)
        depths = [len(w.queue) + (1 if w.busy else 0) for w in self.prefill_workers]
        worker = self.prefill_workers[self.router.route_prefill(request, depths)]
        worker.queue.append(request)
        if not worker.busy:
            worker.busy = True
            self._schedule(self.now, EventKind.PREFILL_START,
                           session_id=request.session_id,
                           request_id=request.request_id,
                           worker_id=worker.worker_id)

    # -- prefill ---------------------------------------------------------

    def _on_prefill_start(self, event: SimEvent) -> None:
        worker = self.prefill_workers[event.worker_id]
        request = worker.queue.popleft()
        assert request.request_id == event.request_id
        ns = self.router.prefill_namespace(request.model_id)
        matched, blocks = worker.pool.longest_prefix_match(
            ns, request.context_snapshot, self.now
        )
        self._prefill_pins[request.request_id] = (worker.worker_id, blocks)
        new_tokens = len(request.context_snapshot) - matched
        duration = self.cost.prefill_time(new_tokens)
        self._schedule(self.now + duration, EventKind.PREFILL_COMPLETE,
                       session_id=request.session_id,
                       request_id=request.request_id,
                       worker_id=worker.worker_id,
                       detail=f"matched={matched} new={new_tokens}")

    def _on_prefill_complete(self, event: SimEvent) -> None:
        worker = self.prefill_workers[event.worker_id]
        request = self._inflight[event.request_id]
        ns = self.router.prefill_namespace(request.model_id)
        worker_id, pinned = self._prefill_pins[event.request_id]
        try:
            allocated = worker.pool.insert(ns, request.context_snapshot, self.now)
            worker.pool.pin(allocated, self.now)
            pinned.extend(allocated)
        except CapacityExhausted as exc:
            worker.pool.release(pinned)
            del self._prefill_pins[event.request_id]
            self._fail_request(request, str(exc))
        else:
            decode = self.decode_workers[
                self.router.decode_worker(request) - len(self.prefill_workers)
            ]
            decode.ingest_queue.append(request)
            self._decode_advance(decode)
        # FCFS: start the next queued job regardless of this one's outcome
        if worker.queue:
            nxt = worker.queue[0]
            self._schedule(self.now, EventKind.PREFILL_START,
                           session_id=nxt.session_id,
                           request_id=nxt.request_id,
                           worker_id=worker.worker_id)
        else:
            worker.busy = False

    # -- decode ----------------------------------------------------------

    def _decode_advance(self, worker: DecodeWorker) -> None:
        """Pick the decode worker's next unit of work: pending KV ingest
        first (handoff transfers serialize with stepping), else one batch
        step. Membership only changes at these boundaries."""
        if worker.busy:
            return
        if worker.ingest_queue:
            request = worker.ingest_queue.popleft()
            fraction = worker.resident_fraction
            duration = self.cost.handoff_time(len(request.context_snapshot), fraction)
            staged = fraction > self.cost.staging_threshold
            if staged:
                self.staging_handoff_count += 1
            worker.busy = True
            self._schedule(self.now + duration, EventKind.HANDOFF_COMPLETE,
                           session_id=request.session_id,
                           request_id=request.request_id,
                           worker_id=worker.worker_id,
                           detail=f"tokens={len(request.context_snapshot)} "
                                  f"staged={int(staged)}")
            return
        while worker.wait_queue and len(worker.batch) < worker.max_batch:
            active = worker.wait_queue.popleft()
            worker.batch.append(active)
            worker.resident_tokens += len(active.request.context_snapshot)
        if worker.batch:
            duration = self.cost.decode_step_time(
                len(worker.batch), worker.resident_tokens
            )
            worker.busy = True
            self._schedule(self.now + duration, EventKind.DECODE_STEP,
                           worker_id=worker.worker_id,
                           detail=f"batch={len(worker.batch)}")

    def _on_handoff_complete(self, event: SimEvent) -> None:
        worker = self.decode_workers[event.worker_id - len(self.prefill_workers)]
        request = self._inflight[event.request_id]
        # prefill-side pins drop; blocks stay cached for future prefix hits
        prefill_id, blocks = self._prefill_pins.pop(event.request_id)
        self.prefill_workers[prefill_id].pool.release(blocks)
        worker.wait_queue.append(ActiveDecode(request=request))
        worker.busy = False
        self._decode_advance(worker)

    def _on_decode_step(self, event: SimEvent) -> None:
        worker = self.decode_workers[event.worker_id - len(self.prefill_workers)]
        finished: list[ActiveDecode] = []
        for active in worker.batch:
            active.generated += 1
            worker.resident_tokens += 1
            if active.first_token_time is None:
                active.first_token_time = self.now
            else:
                active.itl_us.append(self.now - active.last_token_time)
            active.last_token_time = self.now
            if active.generated >= active.request.output_len:
                finished.append(active)
        self._token_completions.append((self.now, len(worker.batch)))
        for active in finished:
            worker.batch.remove(active)
            worker.resident_tokens -= (
                len(active.request.context_snapshot) + active.generated
            )
            record = self._records[active.request.request_id]
            record.ttft_us = active.first_token_time - active.request.issue_time
            record.out_tokens = active.generated
            record.itl_us = active.itl_us
            self._schedule(self.now, EventKind.REQUEST_COMPLETE,
                           session_id=active.request.session_id,
                           request_id=active.request.request_id,
                           worker_id=worker.worker_id)
        worker.busy = False
        self._decode_advance(worker)

    # -- completion ------------------------------------------------------

    def _on_request_complete(self, event: SimEvent) -> None:
        request = self._inflight.pop(event.request_id)
        record = self._records[event.request_id]
        record.e2e_us = self.now - request.issue_time
        session = self.sessions[request.session_id]
        spec = session.spec
        if spec.scripted is None:
            session.extend_context(
                wl.synth_tokens(spec.session_id,
                                wl.output_slot(session.requests_issued),
                                request.output_len)
            )
        session.step_index += 1
        chain_len = len(spec.agent_chain) if spec.scripted is None else len(spec.scripted)
        if spec.scripted is None and session.step_index == chain_len:
            session.step_index = 0
            session.turn_index += 1
        done = (
            session.step_index == chain_len
            if spec.scripted is not None
            else session.turn_index == spec.turns
        )
        if done:
            session.status = SessionStatus.DONE
            self._schedule(self.now, EventKind.SESSION_COMPLETE,
                           session_id=spec.session_id)
        else:
            self._dispatch_step(session)

    def _on_session_complete(self, event: SimEvent) -> None:
        admitted = self.admission.release()
        if admitted is not None:
            self._activate(admitted)

    def _fail_request(self, request: Request, reason: str) -> None:
        self.failure_count += 1
        record = self._records[request.request_id]
        record.failed = True
        session = self.sessions[request.session_id]
        session.failed = True
        session.status = SessionStatus.DONE
        del self._inflight[request.request_id]
        self._schedule(self.now, EventKind.SESSION_COMPLETE,
                       session_id=request.session_id,
                       detail=f"failed: {reason}")
