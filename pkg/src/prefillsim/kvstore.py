"""Block-granular KV-cache pool with a namespaced prefix index.

Blocks carry token identity and size only (no tensors). Full blocks of a
sequence are indexed for reuse; partial tail blocks are computed by the cost
model but never cached. Eviction is strict LRU by last_access over unpinned
leaf blocks (deepest-first within a path, so no interior cached prefix
dangles), tie-broken by ascending block_id.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field

from .core import SimTime, TokenSeq

# Namespace tags. Lookups never cross namespaces: the shared namespace holds
# the base module's cache, per-model namespaces hold each fine-tuned model's.
SHARED_NS = "shared"


def model_ns(model_id: str) -> str:
    return f"model:{model_id}"


class CapacityExhausted(Exception):
    """Raised when pinned blocks prevent freeing enough space."""


@dataclass
class KVBlock:
    block_id: int
    namespace: str
    token_span: TokenSeq  # block-aligned slice this block caches
    ref_count: int = 0
    last_access: SimTime = 0
    # index bookkeeping
    parent_id: int = -1  # -1 = namespace root
    child_count: int = 0


@dataclass
class PoolStats:
    capacity_blocks: int
    used_blocks: int
    free_blocks: int
    matched_tokens: int
    lookup_tokens: int
    eviction_count: int

    @property
    def hit_ratio(self) -> float:
        if self.lookup_tokens == 0:
            return 0.0
        return self.matched_tokens / self.lookup_tokens


class BlockPool:
    """One worker's KV pool: a radix index per namespace over fixed-size
    block edges, with exact capacity accounting."""

    def __init__(self, capacity_blocks: int, block_size: int) -> None:
        if capacity_blocks < 0 or block_size < 1:
            raise ValueError("capacity_blocks >= 0 and block_size >= 1 required")
        self.capacity_blocks = capacity_blocks
        self.block_size = block_size
        self._next_block_id = 0
        # (namespace, parent_block_id, token_span) -> KVBlock
        self._edges: dict[tuple[str, int, TokenSeq], KVBlock] = {}
        self._blocks: dict[int, KVBlock] = {}
        # lazy min-heap of (last_access, block_id) eviction candidates
        self._lru: list[tuple[SimTime, int]] = []
        self.matched_tokens = 0
        self.lookup_tokens = 0
        self.eviction_count = 0
        self._footprint: dict[str, int] = {}
        self._peak_footprint: dict[str, int] = {}

    # -- queries ---------------------------------------------------------

    @property
    def used_blocks(self) -> int:
        return len(self._blocks)

    @property
    def free_blocks(self) -> int:
        return self.capacity_blocks - len(self._blocks)

    def stats(self) -> PoolStats:
        return PoolStats(
            capacity_blocks=self.capacity_blocks,
            used_blocks=self.used_blocks,
            free_blocks=self.free_blocks,
            matched_tokens=self.matched_tokens,
            lookup_tokens=self.lookup_tokens,
            eviction_count=self.eviction_count,
        )

    def footprint_tokens(self) -> dict[str, int]:
        """Exact count of indexed token slots per namespace."""
        return dict(self._footprint)

    def peak_footprint_tokens(self) -> dict[str, int]:
        return dict(self._peak_footprint)

    # -- operations ------------------------------------------------------

    def _walk(self, ns: str, query: TokenSeq) -> list[KVBlock]:
        """Cached chain of full blocks covering the longest block-aligned
        prefix of query. No stats or access-time side effects."""
        bs = self.block_size
        chain: list[KVBlock] = []
        parent = -1
        for start in range(0, len(query) - bs + 1, bs):
            block = self._edges.get((ns, parent, query[start : start + bs]))
            if block is None:
                break
            chain.append(block)
            parent = block.block_id
        return chain

    def longest_prefix_match(
        self, ns: str, query: TokenSeq, now: SimTime
    ) -> tuple[int, list[KVBlock]]:
        """Largest block-aligned cached prefix of query in ns.

        Matched blocks are pinned and their last_access updated; the caller
        must release() them. A miss returns (0, []).
        """
        chain = self._walk(ns, query)
        for block in chain:
            block.ref_count += 1
            block.last_access = now
        self.lookup_tokens += len(query)
        matched = len(chain) * self.block_size
        self.matched_tokens += matched
        return matched, chain

    def insert(self, ns: str, seq: TokenSeq, now: SimTime) -> list[KVBlock]:
        """Cache all full blocks of seq in ns, reusing any cached prefix.

        Returns newly allocated blocks (unpinned, last_access=now). Raises
        CapacityExhausted when pinned blocks prevent freeing enough space;
        the pool is unchanged in that case.
        """
        bs = self.block_size
        n_full = len(seq) // bs
        chain = self._walk(ns, seq)
        need = n_full - len(chain)
        if need == 0:
            return []
        # Protect the matched chain while evicting: its tail is otherwise an
        # evictable leaf, and extending an evicted parent would dangle.
        for block in chain:
            block.ref_count += 1
        try:
            if self.free_blocks < need:
                self.evict_until(need)
        finally:
            for block in chain:
                block.ref_count -= 1
                if block.ref_count == 0 and block.child_count == 0:
                    heapq.heappush(self._lru, (block.last_access, block.block_id))
        allocated: list[KVBlock] = []
        parent = chain[-1].block_id if chain else -1
        if chain:
            chain[-1].child_count += 1
        for i in range(len(chain), n_full):
            span = seq[i * bs : (i + 1) * bs]
            block = KVBlock(
                block_id=self._next_block_id,
                namespace=ns,
                token_span=span,
                last_access=now,
                parent_id=parent,
                child_count=1,  # provisional: next allocated block chains on
            )
            self._next_block_id += 1
            self._edges[(ns, parent, span)] = block
            self._blocks[block.block_id] = block
            allocated.append(block)
            parent = block.block_id
        allocated[-1].child_count = 0
        heapq.heappush(self._lru, (now, allocated[-1].block_id))
        self._footprint[ns] = self._footprint.get(ns, 0) + need * bs
        if self._footprint[ns] > self._peak_footprint.get(ns, 0):
            self._peak_footprint[ns] = self._footprint[ns]
        return allocated

    def evict_until(self, need: int) -> int:
        """Free blocks (oldest unpinned leaves first) until free_blocks >= need.

        Raises CapacityExhausted if unsatisfiable; already-performed evictions
        are kept (they were valid LRU actions).
        """
        if need > self.capacity_blocks:
            raise CapacityExhausted(
                f"need {need} blocks exceeds capacity {self.capacity_blocks}"
            )
        evicted = 0
        while self.free_blocks < need:
            block = self._pop_lru_leaf()
            if block is None:
                raise CapacityExhausted(
                    f"cannot free {need} blocks: all remaining blocks pinned"
                )
            self._evict(block)
            evicted += 1
        return evicted

    def _pop_lru_leaf(self) -> KVBlock | None:
        while self._lru:
            last_access, block_id = heapq.heappop(self._lru)
            block = self._blocks.get(block_id)
            if (
                block is not None
                and block.ref_count == 0
                and block.child_count == 0
                and block.last_access == last_access
            ):
                return block
        return None

    def _evict(self, block: KVBlock) -> None:
        del self._edges[(block.namespace, block.parent_id, block.token_span)]
        del self._blocks[block.block_id]
        self._footprint[block.namespace] -= len(block.token_span)
        self.eviction_count += 1
        if block.parent_id != -1:
            parent = self._blocks.get(block.parent_id)
            if parent is not None:
                parent.child_count -= 1
                if parent.child_count == 0 and parent.ref_count == 0:
                    heapq.heappush(self._lru, (parent.last_access, parent.block_id))

    def pin(self, blocks: list[KVBlock], now: SimTime) -> None:
        for block in blocks:
            block.ref_count += 1
            block.last_access = now

    def release(self, blocks: list[KVBlock]) -> None:
        """Unpin blocks; they become eviction candidates at their recorded
        last_access. Releasing an unpinned block is a programming error."""
        for block in blocks:
            if block.ref_count <= 0:
                raise RuntimeError(f"release underflow on block {block.block_id}")
            block.ref_count -= 1
            if block.ref_count == 0 and block.child_count == 0:
                heapq.heappush(self._lru, (block.last_access, block.block_id))

    # -- debugging -------------------------------------------------------

    def dump_tree(self) -> str:
        """Deterministic text dump: one line per node,
        `path-prefix-hash block_id ref_count last_access`."""
        lines: list[str] = []

        def visit(ns: str, parent: int, path: tuple[int, ...]) -> None:
            children = sorted(
                (
                    block
                    for (ens, eparent, _), block in self._edges.items()
                    if ens == ns and eparent == parent
                ),
                key=lambda b: b.block_id,
            )
            for block in children:
                full = path + block.token_span
                digest = hashlib.sha1(
                    ",".join(map(str, full)).encode()
                ).hexdigest()[:12]
                lines.append(
                    f"{ns} {digest} {block.block_id} "
                    f"{block.ref_count} {block.last_access}"
                )
                visit(ns, block.block_id, full)

        for ns in sorted({ns for (ns, _, _) in self._edges}):
            visit(ns, -1, ())
        return "\n".join(lines)
