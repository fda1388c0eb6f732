"""Seeded multi-model agent session generator.

Sessions arrive via a Poisson process (exponential inter-arrival gaps drawn
by inverse CDF from a splitmix64 stream, so traces reproduce across
implementations). Each session runs a fixed agent chain for a fixed number
of turns. Token content is synthetic: ids are structured so distinct
sessions occupy disjoint id ranges and can never share prefixes with each
other; only agents within a session share context.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator

from .core import AgentProfile, SessionSpec, TokenSeq

_MASK = (1 << 64) - 1

# (input_extension_len, output_len, turns, initial_prompt_len) presets.
# Shared-prefix-dominant regimes; reflexion is heavier per step.
PATTERN_PRESETS = {
    "react": {"initial_prompt_len": 512, "input_extension_len": 64, "output_len": 128, "turns": 3},
    "reflexion": {"initial_prompt_len": 512, "input_extension_len": 96, "output_len": 256, "turns": 3},
}

DEFAULT_MODELS = ("model_a", "model_b", "model_c", "model_d")


def splitmix64(state: int) -> Iterator[int]:
    """The splitmix64 stream: portable, fully specified 64-bit generator."""
    while True:
        state = (state + 0x9E3779B97F4A7C15) & _MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        yield z ^ (z >> 31)


def mix_seed(*parts: int) -> int:
    """Derive an independent sub-seed from integer parts (order-sensitive)."""
    state = 0x243F6A8885A308D3
    for part in parts:
        stream = splitmix64((state ^ (part & _MASK)) & _MASK)
        state = next(stream)
    return state


@dataclass(frozen=True)
class WorkloadConfig:
    pattern: str = "react"
    arrival_rate_per_s: float = 4.0
    duration_s: float = 60.0
    seed: int = 0
    initial_prompt_len: int | None = None
    turns: int | None = None
    # per-agent (model_id, input_extension_len, output_len); pattern defaults
    # fill the lengths when only model ids are given
    agents: tuple[tuple[str, int, int], ...] | None = None

    def __post_init__(self) -> None:
        if self.pattern not in PATTERN_PRESETS:
            raise ValueError(f"unknown pattern {self.pattern!r}")
        if self.arrival_rate_per_s <= 0:
            raise ValueError("arrival_rate_per_s must be > 0")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be > 0")

    def resolved_agents(self) -> tuple[AgentProfile, ...]:
        preset = PATTERN_PRESETS[self.pattern]
        if self.agents is not None:
            return tuple(
                AgentProfile(model_id=m, input_extension_len=e, output_len=o)
                for m, e, o in self.agents
            )
        return tuple(
            AgentProfile(
                model_id=m,
                input_extension_len=preset["input_extension_len"],
                output_len=preset["output_len"],
            )
            for m in DEFAULT_MODELS
        )

    def resolved_turns(self) -> int:
        return self.turns if self.turns is not None else PATTERN_PRESETS[self.pattern]["turns"]

    def resolved_initial_prompt_len(self) -> int:
        if self.initial_prompt_len is not None:
            return self.initial_prompt_len
        return PATTERN_PRESETS[self.pattern]["initial_prompt_len"]


def generate(config: WorkloadConfig) -> list[SessionSpec]:
    """Ordered session specs; deterministic per seed, truncated at duration."""
    stream = splitmix64(config.seed & _MASK)
    duration_us = int(round(config.duration_s * 1_000_000))
    agents = config.resolved_agents()
    turns = config.resolved_turns()
    prompt_len = config.resolved_initial_prompt_len()
    sessions: list[SessionSpec] = []
    t = 0
    while True:
        # u in (0, 1]: avoids log(0)
        u = (next(stream) + 1) / 2.0**64
        gap_s = -math.log(u) / config.arrival_rate_per_s
        t += int(round(gap_s * 1_000_000))
        if t > duration_us:
            break
        # Rotate each session's chain round-robin so concurrently admitted
        # sessions spread across models instead of marching through the
        # same agent position in lockstep.
        rot = len(sessions) % len(agents)
        sessions.append(
            SessionSpec(
                session_id=len(sessions),
                arrival_time=t,
                initial_prompt_len=prompt_len,
                turns=turns,
                agent_chain=agents[rot:] + agents[:rot],
            )
        )
    return sessions


# Purpose slots for synth_tokens: the initial prompt is slot 0; the k-th
# request's input extension is slot 2k+1 and its output slot 2k+2.
def prompt_slot() -> int:
    return 0


def extension_slot(request_index: int) -> int:
    return 2 * request_index + 1


def output_slot(request_index: int) -> int:
    return 2 * request_index + 2


def synth_tokens(session_id: int, purpose: int, length: int) -> TokenSeq:
    """Deterministic synthetic tokens.

    Token ids are structured as (session_id+1, purpose, index) packed into
    one integer, so distinct sessions occupy disjoint id ranges by
    construction and inter-session prefix collisions are impossible.
    """
    if length < 0:
        raise ValueError("length must be >= 0")
    if length > 1 << 16 or purpose >= 1 << 16:
        raise ValueError("length/purpose exceed the packing limits")
    base = ((session_id + 1) << 32) | (purpose << 16)
    return tuple(base | i for i in range(length))


# -- workload trace export ----------------------------------------------

def export_sessions(sessions: list[SessionSpec]) -> str:
    """Deterministic JSON of a generated workload, so baseline and shared
    runs can consume byte-identical traces."""
    payload = {
        "schema_version": 1,
        "sessions": [
            {
                "session_id": s.session_id,
                "arrival_time_us": s.arrival_time,
                "initial_prompt_len": s.initial_prompt_len,
                "turns": s.turns,
                "agents": [
                    [a.model_id, a.input_extension_len, a.output_len]
                    for a in s.agent_chain
                ],
            }
            for s in sessions
        ],
    }
    return json.dumps(payload, sort_keys=True, indent=1)


def import_sessions(text: str) -> list[SessionSpec]:
    payload = json.loads(text)
    return [
        SessionSpec(
            session_id=s["session_id"],
            arrival_time=s["arrival_time_us"],
            initial_prompt_len=s["initial_prompt_len"],
            turns=s["turns"],
            agent_chain=tuple(
                AgentProfile(model_id=m, input_extension_len=e, output_len=o)
                for m, e, o in s["agents"]
            ),
        )
        for s in payload["sessions"]
    ]
