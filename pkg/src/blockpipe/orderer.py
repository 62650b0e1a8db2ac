"""Ordering phase: batch cutting, within-block early abort and reordering.

Conflict-graph edges point from a reader to the writer of a key it read
(Ti -> Tj when Tj writes something Ti reads). Ti must then precede Tj in the
block, so the final schedule is a topological order of the graph.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Set, Tuple

from . import kernels
from .model import CycleDetected, Mode, Transaction, Version


@dataclass
class BatchPolicy:
    max_tx_count: int = 1024
    max_bytes: int = 2 * 1024 * 1024
    max_wait: float = 1.0
    max_unique_keys: int = 16384

    def __post_init__(self):
        for name in ("max_tx_count", "max_bytes", "max_wait", "max_unique_keys"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


class BatchCutter:
    """Accumulates transactions and cuts a batch when any limit is reached.

    Limits: transaction count, serialized bytes, time since the first
    transaction of the batch, and number of distinct keys touched.
    """

    def __init__(self, policy: BatchPolicy):
        self.policy = policy
        self._pending: List[Transaction] = []
        self._bytes = 0
        self._keys: Set[str] = set()
        self._first_at: Optional[float] = None
        self.last_reason: Optional[str] = None

    @property
    def pending(self) -> int:
        return len(self._pending)

    @property
    def deadline(self) -> Optional[float]:
        if self._first_at is None:
            return None
        return self._first_at + self.policy.max_wait

    def ingest(self, tx: Transaction, now: float = 0.0) -> Optional[List[Transaction]]:
        """Add one transaction; returns the finished batch if a limit was hit."""
        if not self._pending:
            self._first_at = now
        self._pending.append(tx)
        self._bytes += tx.size_bytes
        self._keys.update(tx.read_keys)
        self._keys.update(tx.write_keys)
        reason = self._reason(now)
        return self.cut_batch(reason) if reason else None

    def tick(self, now: float) -> Optional[List[Transaction]]:
        reason = self._reason(now)
        return self.cut_batch(reason) if reason else None

    def _reason(self, now: float) -> Optional[str]:
        if not self._pending:
            return None
        p = self.policy
        if len(self._pending) >= p.max_tx_count:
            return "count"
        if self._bytes >= p.max_bytes:
            return "bytes"
        if len(self._keys) >= p.max_unique_keys:
            return "keys"
        # compare against the same sum the timer was scheduled with; the
        # difference now - first can round just below max_wait
        if now >= self._first_at + p.max_wait:
            return "time"
        return None

    def cut_batch(self, reason: str = "forced") -> List[Transaction]:
        batch = self._pending
        self._pending = []
        self._bytes = 0
        self._keys = set()
        self._first_at = None
        self.last_reason = reason if batch else None
        return batch


# --- within-block early abort ------------------------------------------------

FIRST_SEEN = "first_seen"
STALE = "stale"


def within_block_early_abort(batch: Sequence[Transaction], rule: str = FIRST_SEEN
                             ) -> Tuple[List[Transaction], List[Transaction]]:
    """Split a batch into (kept, aborted) by read-version disagreement.

    ``first_seen``: the first version of each key read in arrival order is the
    reference, and any transaction that read a different version is aborted.
    ``stale``: the newest version of each key read anywhere in the batch is
    the reference, so only transactions holding an older version (which can
    never validate) are aborted.
    """
    if rule not in (FIRST_SEEN, STALE):
        raise ValueError(f"unknown rule {rule!r}")
    ref: Dict[str, Version] = {}
    for tx in batch:
        for key, ver in tx.rs:
            cur = ref.get(key)
            if cur is None or (rule == STALE and ver > cur):
                ref[key] = ver
    kept, aborted = [], []
    for tx in batch:
        if all(ref[key] == ver for key, ver in tx.rs):
            kept.append(tx)
        else:
            aborted.append(tx)
    return kept, aborted


# --- conflict graph ----------------------------------------------------------

@dataclass
class ConflictGraph:
    """Reader -> writer graph over a batch, plus the bit-vectors it came from."""

    n: int
    succ: List[List[int]]
    pred: List[List[int]]
    keys: List[str]
    read_vectors: List[int]
    write_vectors: List[int]

    def edges(self):
        for i, row in enumerate(self.succ):
            for j in row:
                yield i, j

    @cached_property
    def succ_sets(self) -> List[Set[int]]:
        return [set(row) for row in self.succ]

    def has_edge(self, i: int, j: int) -> bool:
        return j in self.succ_sets[i]


def build_conflict_graph(txs: Sequence[Transaction]) -> ConflictGraph:
    key_index: Dict[str, int] = {}
    read_idx, write_idx = [], []
    for tx in txs:
        read_idx.append([key_index.setdefault(k, len(key_index)) for k in tx.read_keys])
        write_idx.append([key_index.setdefault(k, len(key_index)) for k in tx.write_keys])
    succ = kernels.conflict_successors(read_idx, write_idx, len(key_index))
    pred: List[List[int]] = [[] for _ in txs]
    for i, row in enumerate(succ):
        for j in row:
            pred[j].append(i)

    def vec(idx):
        v = 0
        for k in idx:
            v |= 1 << k
        return v

    return ConflictGraph(len(txs), succ, pred, list(key_index),
                         [vec(r) for r in read_idx], [vec(w) for w in write_idx])


def _alive_mask(n: int, nodes) -> Optional[bytes]:
    if nodes is None:
        return None
    mask = bytearray(n)
    for v in nodes:
        mask[v] = 1
    return bytes(mask)


def strongly_connected_subgraphs(g: ConflictGraph, nodes=None) -> List[List[int]]:
    """SCCs of ``g`` (restricted to ``nodes`` if given), smallest member first."""
    return kernels.strongly_connected(g.succ, _alive_mask(g.n, nodes))


def enumerate_cycles(g: ConflictGraph, component: Sequence[int],
                     per_start_limit: int = 0) -> List[List[int]]:
    """Elementary cycles inside one SCC; singletons have none."""
    if len(component) <= 1:
        return []
    return kernels.elementary_cycles(g.succ, list(component), per_start_limit)


# --- cycle breaking ------------------------------------------------------------

@dataclass
class CycleTable:
    cycles: List[Set[int]]
    participation_count: Dict[int, int] = field(default_factory=dict)

    @classmethod
    def of(cls, cycles) -> "CycleTable":
        sets = [set(c) for c in cycles]
        counts: Dict[int, int] = {}
        for c in sets:
            for t in c:
                counts[t] = counts.get(t, 0) + 1
        return cls(sets, counts)


def greedy_cycle_break(txs, cycles) -> Tuple[List[int], List[int]]:
    """Remove transactions until no listed cycle survives.

    Always removes the transaction occurring in the most remaining cycles,
    the smaller batch index winning ties. ``txs`` is the batch (or its
    length). Returns (surviving indices ascending, removed indices in removal
    order).
    """
    n = txs if isinstance(txs, int) else len(txs)
    table = CycleTable.of(cycles)
    counts = table.participation_count
    member_of: Dict[int, List[int]] = {}
    for ci, c in enumerate(table.cycles):
        for t in c:
            member_of.setdefault(t, []).append(ci)
    live = [True] * len(table.cycles)
    remaining = len(table.cycles)
    heap = [(-cnt, t) for t, cnt in counts.items()]
    heapq.heapify(heap)
    removed: List[int] = []
    gone: Set[int] = set()
    while remaining:
        neg, t = heapq.heappop(heap)
        if t in gone or -neg != counts[t]:
            continue  # stale heap entry
        gone.add(t)
        removed.append(t)
        touched: Set[int] = set()
        for ci in member_of.get(t, ()):
            if not live[ci]:
                continue
            live[ci] = False
            remaining -= 1
            for u in table.cycles[ci]:
                counts[u] -= 1
                touched.add(u)
        counts[t] = 0
        for u in touched:
            if counts[u] > 0 and u not in gone:
                heapq.heappush(heap, (-counts[u], u))
    survivors = [i for i in range(n) if i not in gone]
    return survivors, removed


# --- schedule ----------------------------------------------------------------

def derive_schedule(nodes: Sequence[int], g: ConflictGraph) -> List[int]:
    """Serializable order of ``nodes`` (must induce an acyclic subgraph of g).

    Walks from the lowest unscheduled node up to a node whose writers-of-reads
    are all scheduled, emits it, descends to its readers, and repeats; the
    emission order is reversed at the end. For every edge Ti -> Tj the result
    places Ti before Tj.
    """
    alive = set(nodes)
    if not alive:
        return []
    # "parents" are the writers of what a node reads; "children" its readers
    parents = {v: [w for w in g.succ[v] if w in alive] for v in alive}
    children = {v: [w for w in g.pred[v] if w in alive] for v in alive}
    pcur = dict.fromkeys(alive, 0)
    ccur = dict.fromkeys(alive, 0)
    order_nodes = sorted(alive)
    scheduled: Set[int] = set()
    order: List[int] = []
    next_idx = 0
    start = order_nodes[0]
    steps = 0
    total = len(order_nodes)
    while len(order) < total:
        if start in scheduled:
            while order_nodes[next_idx] in scheduled:
                next_idx += 1
            start = order_nodes[next_idx]
            continue
        steps += 1
        if steps > 2 * total + len(order) * total:
            raise CycleDetected("schedule walk did not terminate")
        ps, i = parents[start], pcur[start]
        while i < len(ps) and ps[i] in scheduled:
            i += 1
        pcur[start] = i
        if i < len(ps):
            start = ps[i]
            continue
        scheduled.add(start)
        order.append(start)
        steps = 0
        cs, i = children[start], ccur[start]
        while i < len(cs) and cs[i] in scheduled:
            i += 1
        ccur[start] = i
        if i < len(cs):
            start = cs[i]
    order.reverse()
    return order


def is_acyclic(g: ConflictGraph, nodes) -> bool:
    return all(len(c) == 1 for c in strongly_connected_subgraphs(g, nodes))


# --- full reordering ---------------------------------------------------------

@dataclass
class ReorderResult:
    txs: List[Transaction]
    mismatch_aborted: List[Transaction] = field(default_factory=list)
    cycle_aborted: List[Transaction] = field(default_factory=list)
    cycles_found: int = 0
    rounds: int = 0

    @property
    def early_aborted(self) -> List[Transaction]:
        return self.mismatch_aborted + self.cycle_aborted

    def __iter__(self):
        return iter((self.txs, self.early_aborted))


EXACT = "exact"
SHORTEST = "shortest"


def cycles_for_round(g: ConflictGraph, survivors, search: str) -> List[List[int]]:
    cycles: List[List[int]] = []
    for comp in strongly_connected_subgraphs(g, survivors):
        if len(comp) > 1:
            if search == EXACT:
                cycles.extend(enumerate_cycles(g, comp))
            else:
                cycles.extend(kernels.shortest_cycles(g.succ, comp))
    return cycles


def break_cycles(g: ConflictGraph, nodes: Sequence[int], search: str = EXACT
                 ) -> Tuple[List[int], List[int], int, int]:
    """Greedy cycle removal over ``nodes``; returns (survivors, removed, cycles, rounds).

    ``exact`` enumerates every elementary cycle once and runs a single greedy
    pass, which is exponential on dense graphs. ``shortest`` feeds the greedy
    pass one shortest cycle through each node of every non-trivial SCC, then
    recomputes the SCCs on the survivors and repeats until none has a cycle.
    """
    if search not in (EXACT, SHORTEST):
        raise ValueError(f"unknown cycle search {search!r}")
    survivors = sorted(nodes)
    removed_all: List[int] = []
    total_cycles = 0
    rounds = 0
    while True:
        cycles = cycles_for_round(g, survivors, search)
        if not cycles:
            break
        rounds += 1
        total_cycles += len(cycles)
        _, removed = greedy_cycle_break(g.n, cycles)
        removed_all.extend(removed)
        gone = set(removed)
        survivors = [v for v in survivors if v not in gone]
        if search == EXACT:
            break
    return survivors, removed_all, total_cycles, rounds


def reorder(batch: Sequence[Transaction], mode: Mode = Mode.PLUSPLUS, *,
            mismatch_rule: str = FIRST_SEEN, cycle_search: str = EXACT) -> ReorderResult:
    """Order a cut batch into a block.

    VANILLA keeps arrival order. EARLY_ABORT_ONLY keeps arrival order after
    dropping version-mismatched transactions. Reordering modes break conflict
    cycles and return a serializable schedule; PLUSPLUS aborts the cycle
    breakers while REORDER_ONLY appends them after the schedule in arrival
    order.
    """
    batch = list(batch)
    if not mode.reorders and not mode.early_aborts:
        return ReorderResult(batch)
    mismatched: List[Transaction] = []
    if mode.early_aborts:
        batch, mismatched = within_block_early_abort(batch, mismatch_rule)
    if not mode.reorders:
        return ReorderResult(batch, mismatched)
    g = build_conflict_graph(batch)
    if not any(g.succ):
        # nothing to reorder; the schedule walk would reverse independent txs
        return ReorderResult(batch, mismatched)
    survivors, removed, n_cycles, rounds = break_cycles(g, range(g.n), cycle_search)
    order = derive_schedule(survivors, g)
    scheduled = [batch[i] for i in order]
    broken = [batch[i] for i in sorted(removed)]
    if mode.early_aborts:
        return ReorderResult(scheduled, mismatched, broken, n_cycles, rounds)
    return ReorderResult(scheduled + broken, mismatched, [], n_cycles, rounds)
