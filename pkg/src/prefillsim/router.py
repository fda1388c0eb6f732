"""Serving-mode selection and prefix-locality-aware request routing.

Baseline: N isolated prefill/decode pairs; model i's requests only touch
pair i and cache under that model's namespace. Shared mode ("prefillshare"):
the same worker budget, but any prefill worker serves any model's request
against the shared namespace, and each session is pinned to one prefill
worker for its lifetime to preserve prefix locality.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .core import Request
from .kvstore import SHARED_NS, model_ns


class ServingMode(enum.Enum):
    BASELINE = "baseline"
    PREFILLSHARE = "prefillshare"


class ConfigurationError(Exception):
    pass


@dataclass
class RoutingTable:
    """session_id -> prefill worker id; a mapping never changes once set."""

    pins: dict[int, int] = field(default_factory=dict)

    def pin(self, session_id: int, worker_id: int) -> None:
        existing = self.pins.setdefault(session_id, worker_id)
        if existing != worker_id:
            raise RuntimeError(
                f"session {session_id} already pinned to worker {existing}"
            )

    def get(self, session_id: int) -> int | None:
        return self.pins.get(session_id)


class Router:
    def __init__(self, mode: ServingMode, model_ids: list[str]) -> None:
        self.mode = mode
        self.model_ids = list(model_ids)
        self.table = RoutingTable()
        # prefill worker i pairs with model i in baseline mode
        self._model_to_worker = {m: i for i, m in enumerate(model_ids)}

    def prefill_namespace(self, model_id: str) -> str:
        if self.mode is ServingMode.PREFILLSHARE:
            return SHARED_NS
        return model_ns(model_id)

    def route_prefill(self, request: Request, queue_depths: list[int]) -> int:
        """Choose the prefill worker for an admitted request.

        Shared mode returns the session's pinned worker if set, else the
        least-queued worker (tie: lowest id) and records the pin. Baseline
        always returns the model's dedicated worker.
        """
        if self.mode is ServingMode.BASELINE:
            worker = self._model_to_worker.get(request.model_id)
            if worker is None:
                raise ConfigurationError(f"unknown model_id {request.model_id!r}")
            return worker
        if request.model_id not in self._model_to_worker:
            raise ConfigurationError(f"unknown model_id {request.model_id!r}")
        pinned = self.table.get(request.session_id)
        if pinned is not None:
            return pinned
        worker = min(range(len(queue_depths)), key=lambda i: (queue_depths[i], i))
        self.table.pin(request.session_id, worker)
        return worker

    def decode_worker(self, request: Request) -> int:
        """Each model has exactly one decode worker in the reference fleet;
        decode worker ids follow the prefill workers."""
        idx = self._model_to_worker.get(request.model_id)
        if idx is None:
            raise ConfigurationError(f"unknown model_id {request.model_id!r}")
        return len(self.model_ids) + idx
