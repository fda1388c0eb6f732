"""A deliberately naive reference implementation of the KV block pool.

Stores every cached block as a flat record keyed by its full block-aligned
path and rescans everything on each operation. Slow but obviously correct;
the production pool must agree with it operation-for-operation, including
eviction order and all counters.
"""

from __future__ import annotations

from dataclasses import dataclass


class RefCapacityExhausted(Exception):
    pass


@dataclass
class RefBlock:
    block_id: int
    namespace: str
    path: tuple  # concatenated token ids from the root through this block
    ref_count: int = 0
    last_access: int = 0


class ReferencePool:
    def __init__(self, capacity_blocks: int, block_size: int) -> None:
        self.capacity_blocks = capacity_blocks
        self.block_size = block_size
        self._next_id = 0
        # (namespace, path) -> RefBlock
        self.blocks: dict[tuple[str, tuple], RefBlock] = {}
        self.matched_tokens = 0
        self.lookup_tokens = 0
        self.eviction_count = 0

    @property
    def used_blocks(self) -> int:
        return len(self.blocks)

    def _chain(self, ns: str, query: tuple) -> list[RefBlock]:
        bs = self.block_size
        chain = []
        for end in range(bs, len(query) + 1, bs):
            block = self.blocks.get((ns, query[:end]))
            if block is None:
                break
            chain.append(block)
        return chain

    def longest_prefix_match(self, ns: str, query: tuple, now: int) -> int:
        chain = self._chain(ns, query)
        for block in chain:
            block.ref_count += 1
            block.last_access = now
        self.lookup_tokens += len(query)
        matched = len(chain) * self.block_size
        self.matched_tokens += matched
        return matched

    def release_prefix(self, ns: str, query: tuple, matched: int) -> None:
        """Undo the pins a longest_prefix_match with this outcome took."""
        bs = self.block_size
        for end in range(bs, matched + 1, bs):
            self.blocks[(ns, query[:end])].ref_count -= 1

    def _is_leaf(self, block: RefBlock) -> bool:
        want = len(block.path) + self.block_size
        return not any(
            ns == block.namespace and len(path) == want and path[: len(block.path)] == block.path
            for (ns, path) in self.blocks
        )

    def _evict_one(self) -> bool:
        candidates = [
            b for b in self.blocks.values() if b.ref_count == 0 and self._is_leaf(b)
        ]
        if not candidates:
            return False
        victim = min(candidates, key=lambda b: (b.last_access, b.block_id))
        del self.blocks[(victim.namespace, victim.path)]
        self.eviction_count += 1
        return True

    def insert(self, ns: str, seq: tuple, now: int) -> None:
        bs = self.block_size
        n_full = len(seq) // bs
        chain = self._chain(ns, seq)
        need = n_full - len(chain)
        if need == 0:
            return
        if need > self.capacity_blocks:
            raise RefCapacityExhausted("exceeds capacity")
        # Pin the matched chain so eviction cannot orphan the extension.
        for block in chain:
            block.ref_count += 1
        try:
            while self.capacity_blocks - len(self.blocks) < need:
                if not self._evict_one():
                    raise RefCapacityExhausted("all remaining blocks pinned")
        finally:
            for block in chain:
                block.ref_count -= 1
        for i in range(len(chain), n_full):
            path = seq[: (i + 1) * bs]
            self.blocks[(ns, path)] = RefBlock(
                block_id=self._next_id, namespace=ns, path=path, last_access=now
            )
            self._next_id += 1

    def snapshot(self) -> set[tuple[str, tuple]]:
        return set(self.blocks)
