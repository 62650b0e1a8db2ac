"""End-to-end pipeline: clients, endorsing peers, orderer and committing peers.

Everything runs as events on one scheduler. The virtual scheduler is fully
deterministic for a given seed; the wall-clock scheduler executes the same
events paced against real time, and an event that runs late observes the
late time, so CPU cost shows up in the results.

Actors per channel:

* clients fire proposals at a fixed rate, with a bound on outstanding ones;
* each proposal is simulated in lockstep on one peer per organization;
* the orderer cuts batches, reorders/aborts depending on the mode, and
  delivers blocks to every peer in the same order;
* every peer validates and commits blocks one at a time on a shared host CPU.

Counts are taken at a reference peer (the first peer of the first
organization) when it finishes committing a block; aborts are counted when
they are detected.
"""
from __future__ import annotations

import hashlib
import heapq
import itertools
import random
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence

from .config import (
    ChannelStats, CostModel, NetworkTopology, RunConfig, RunMetrics, peer_id,
)
from .endorser import SimAbortRule, Simulation, endorse_and_form, pack_transaction, simulate
from .model import (
    Block, ContractCall, EarlyAbortNotice, EndorsementMismatch, EndorsementPolicy, Mode,
    Proposal, Version, WriteSet,
)
from .orderer import BatchCutter, BatchPolicy, reorder
from .statestore import StateStore
from .validator import BlockCommitter, Ledger
from .workload import gen_asset_proposals

__all__ = [
    "VirtualScheduler", "WallClockScheduler", "NetworkTopology", "CostModel",
    "run", "run_detailed", "BlockDelivery", "deliver_blocks", "running_example",
]


# --- schedulers ----------------------------------------------------------------

class VirtualScheduler:
    def __init__(self):
        self.now = 0.0
        self._heap = []
        self._seq = itertools.count()
        self.max_lag = 0.0

    def at(self, t: float, fn: Callable, *args):
        heapq.heappush(self._heap, (t, next(self._seq), fn, args))

    def after(self, dt: float, fn: Callable, *args):
        self.at(self.now + dt, fn, *args)

    def pending(self) -> int:
        return len(self._heap)

    def run(self, until: float):
        heap = self._heap
        while heap and heap[0][0] < until:
            t, _, fn, args = heapq.heappop(heap)
            self.now = t
            fn(*args)


class WallClockScheduler(VirtualScheduler):
    """Runs events no earlier than their due time in real seconds."""

    def run(self, until: float):
        heap = self._heap
        start = time.perf_counter()
        while heap and heap[0][0] < until:
            due = heap[0][0]
            elapsed = time.perf_counter() - start
            if due > elapsed:
                time.sleep(due - elapsed)
                elapsed = due
            t, _, fn, args = heapq.heappop(heap)
            self.max_lag = max(self.max_lag, elapsed - t)
            self.now = max(t, elapsed)
            fn(*args)


# --- building blocks -----------------------------------------------------------

class HostCPU:
    """Validation cores of one peer host, shared by all its channels."""

    def __init__(self, cores: int):
        self.cores = cores
        self.busy = 0
        self._waiting = deque()

    def acquire(self, fn: Callable):
        if self.busy < self.cores:
            self.busy += 1
            fn()
        else:
            self._waiting.append(fn)

    def release(self):
        if self._waiting:
            self._waiting.popleft()()
        else:
            self.busy -= 1


class BlockDelivery:
    """Per-channel FIFO fan-out from the orderer to every peer.

    Each peer gets its own delay, but a block never overtakes an earlier one
    at the same peer.
    """

    def __init__(self, sched: VirtualScheduler, sinks: Sequence[Callable[[Block], None]],
                 delay: Callable[[int], float]):
        self.sched = sched
        self.sinks = list(sinks)
        self.delay = delay
        self._last = [0.0] * len(self.sinks)

    def deliver(self, block: Block):
        for i, sink in enumerate(self.sinks):
            t = max(self._last[i], self.sched.now + self.delay(i))
            self._last[i] = t
            self.sched.at(t, sink, block)


def deliver_blocks(blocks: Sequence[Block], n_peers: int, *, base_delay: float = 0.005,
                   jitter: float = 0.0, seed: int = 0, interval: float = 0.001):
    """Emit ``blocks`` one per ``interval`` to ``n_peers`` with random delays.

    Returns each peer's received sequence of block ids.
    """
    sched = VirtualScheduler()
    rng = random.Random(seed)
    received: List[List[int]] = [[] for _ in range(n_peers)]
    sinks = [lambda b, r=r: r.append(b.block_id) for r in received]
    fan = BlockDelivery(sched, sinks, lambda i: base_delay + rng.uniform(0.0, jitter))
    for k, b in enumerate(blocks):
        sched.at(k * interval, fan.deliver, b)
    sched.run(float("inf"))
    return received


def _chain(prev: bytes, block: Block) -> bytes:
    h = hashlib.sha256(prev)
    h.update(block.block_id.to_bytes(8, "little"))
    for seq, (tx, ok) in enumerate(zip(block.txs, block.validity)):
        if ok:
            h.update(seq.to_bytes(4, "little"))
            for key, value in tx.ws:
                h.update(key.encode())
                h.update(value.to_bytes(8, "little", signed=True))
    return h.digest()


class Peer:
    def __init__(self, pid: str, host: HostCPU, initial: Dict[str, int]):
        self.id = pid
        self.host = host
        self.store = StateStore(initial)
        self.ledger = Ledger()
        self.inbox: deque = deque()
        self.committer: Optional[BlockCommitter] = None
        self.busy = False            # waiting for a core or committing
        self.wants_lock = False
        self.active_sims = 0
        self.chain = [b""]

    @property
    def height(self) -> int:
        return self.ledger.height


@dataclass
class _SimJob:
    proposal: Proposal
    sims: List[Simulation]
    dead: bool = False


class EndorserGroup:
    """One peer per organization, simulating each proposal in lockstep."""

    def __init__(self, peers: List[Peer], slots: int):
        self.peers = peers
        self.slots = slots
        self.active = 0
        self.queue: deque = deque()


# --- channel -------------------------------------------------------------------

class Channel:
    def __init__(self, idx: int, cfg: RunConfig, sched: VirtualScheduler,
                 hosts: Dict[str, HostCPU], log: Optional[List[str]]):
        self.idx = idx
        self.cfg = cfg
        self.mode = cfg.mode
        self.costs: CostModel = cfg.costs
        self.sched = sched
        self.log_lines = log
        self.locked = not cfg.mode.early_aborts
        self.n_bins = int(-(-cfg.duration // 1))
        self.bins = {k: [0] * self.n_bins for k in ("success", "fail", "ea_sim", "ea_order")}
        self.stats = ChannelStats(idx)
        self.pending: Dict[int, "Client"] = {}
        topo = cfg.topology
        self.params = replace(cfg.workload, seed=cfg.seed * 7919 + idx)
        initial = self.params.initial_state()
        self.peers: Dict[str, Peer] = {
            pid: Peer(pid, hosts[pid], initial) for pid in topo.peer_ids()}
        self.reference = self.peers[peer_id(0, 0)]
        self.groups = [EndorserGroup([self.peers[peer_id(o, x)]
                                      for o in range(topo.organizations)], self.costs.sim_slots)
                       for x in range(topo.peers_per_org)]
        self.clients = [Client(self, c) for c in range(topo.clients_per_channel)]
        self.cutter = BatchCutter(cfg.batch)
        self.order_queue: deque = deque()
        self.ordering = False
        self.next_block_id = 1
        rng = random.Random(f"{cfg.seed}:deliver{idx}")
        peers = list(self.peers.values())
        jitter = self.costs.deliver_jitter
        self.fanout = BlockDelivery(
            sched, [lambda b, p=p: self._on_block(p, b) for p in peers],
            lambda i: self.costs.deliver_delay + (rng.uniform(0.0, jitter) if jitter else 0.0))
        self.tamper = {p: _tamper_ws for p in cfg.tamper_peers}

    def log(self, actor: str, kind: str, tx_id):
        if self.log_lines is not None:
            self.log_lines.append(f"{self.sched.now:.6f},ch{self.idx}.{actor},{kind},{tx_id}")

    def start(self):
        n = len(self.clients)
        for c in self.clients:
            self.sched.at(c.id / (self.cfg.rate * n), c.fire)

    # -- outcomes ------------------------------------------------------------

    def resolve(self, tx_id: int, kind: str):
        client = self.pending.pop(tx_id, None)
        if client is None:
            raise RuntimeError(f"transaction {tx_id} resolved twice")
        client.in_flight -= 1
        setattr(self.stats, kind, getattr(self.stats, kind) + 1)
        b = min(int(self.sched.now), self.n_bins - 1)
        self.bins[kind][b] += 1
        self.log("ref" if kind in ("success", "fail") else "client", kind, tx_id)

    # -- simulation ----------------------------------------------------------

    def submit(self, group: EndorserGroup, proposal: Proposal):
        group.queue.append(proposal)
        self._pump(group)

    def _can_simulate(self, group: EndorserGroup) -> bool:
        if group.active >= group.slots:
            return False
        return not self.locked or not any(p.wants_lock for p in group.peers)

    def _pump(self, group: EndorserGroup):
        while group.queue and self._can_simulate(group):
            self._start_sim(group, group.queue.popleft())

    def _start_sim(self, group: EndorserGroup, proposal: Proposal):
        rule = self.cfg.sim_abort_rule
        sims = [Simulation(proposal, p.store, self.mode, peer_id=p.id, rule=rule,
                           tamper=self.tamper.get(p.id)) for p in group.peers]
        job = _SimJob(proposal, sims)
        group.active += 1
        for p in group.peers:
            p.active_sims += 1
        self.log("endorser", "simulate", proposal.proposal_id)
        n = sims[0].n_reads
        c = self.costs
        if self.locked:
            # the peer lock keeps the state frozen for the whole simulation
            for s in sims:
                while not s.done:
                    s.step()
        else:
            for i in range(n):
                self.sched.after((i + 1) * c.sim_per_read, self._read, group, job)
        self.sched.after(n * c.sim_per_read + c.sim_base, self._sim_done, group, job)

    def _read(self, group: EndorserGroup, job: _SimJob):
        if job.dead:
            return
        for s in job.sims:
            notice = s.step()
            if notice is not None:
                job.dead = True
                self.log(s.peer_id, "early_abort_sim", job.proposal.proposal_id)
                self.resolve(job.proposal.proposal_id, "ea_sim")
                self._release(group)
                return

    def _sim_done(self, group: EndorserGroup, job: _SimJob):
        if job.dead:
            return
        results = [s.result() for s in job.sims]
        self._release(group)
        self.sched.after(self.costs.net_delay, self._collect, job.proposal, results)

    def _release(self, group: EndorserGroup):
        group.active -= 1
        for p in group.peers:
            p.active_sims -= 1
            if p.active_sims == 0 and p.wants_lock and not p.busy:
                self._try_commit(p)
        self._pump(group)

    def _collect(self, proposal: Proposal, results):
        try:
            tx = endorse_and_form(proposal, results)
        except EndorsementMismatch:
            self.stats.endorse_mismatch += 1
            self.resolve(proposal.proposal_id, "fail")
            return
        self.sched.after(self.costs.net_delay, self._to_orderer, tx)

    # -- ordering ------------------------------------------------------------

    def _to_orderer(self, tx):
        was_empty = self.cutter.pending == 0
        batch = self.cutter.ingest(tx, self.sched.now)
        if batch:
            self._enqueue(batch)
        elif was_empty:
            deadline = self.cutter.deadline
            self.sched.at(deadline, self._tick, deadline)

    def _tick(self, deadline: float):
        if self.cutter.deadline != deadline:
            return
        batch = self.cutter.tick(max(self.sched.now, deadline))
        if batch:
            self._enqueue(batch)

    def _enqueue(self, batch):
        self.order_queue.append(batch)
        self._order_next()

    def _order_next(self):
        if self.ordering or not self.order_queue:
            return
        self.ordering = True
        batch = self.order_queue.popleft()
        res = reorder(batch, self.mode, mismatch_rule=self.cfg.mismatch_rule,
                      cycle_search=self.cfg.cycle_search)
        c = self.costs
        cost = c.order_base + c.order_per_tx * len(batch)
        if self.mode.reorders:
            cost += c.reorder_per_tx * len(batch) + c.reorder_per_cycle * res.cycles_found
        self.sched.after(cost, self._emit, res)

    def _emit(self, res):
        for tx in res.early_aborted:
            self.resolve(tx.tx_id, "ea_order")
        if res.txs:
            block = Block(self.next_block_id, tuple(res.txs))
            self.next_block_id += 1
            self.stats.blocks += 1
            self.log("orderer", "block", block.block_id)
            self.fanout.deliver(block)
        self.ordering = False
        self._order_next()

    # -- validation and commit -----------------------------------------------

    def _on_block(self, peer: Peer, block: Block):
        peer.inbox.append(block)
        self._try_commit(peer)

    def _try_commit(self, peer: Peer):
        if peer.busy or not peer.inbox:
            return
        peer.wants_lock = True
        if self.locked and peer.active_sims > 0:
            return
        peer.busy = True
        peer.host.acquire(lambda: self._start_commit(peer))

    def _start_commit(self, peer: Peer):
        block = peer.inbox.popleft()
        peer.committer = BlockCommitter(block, peer.store)
        c = self.costs
        t0 = c.commit_base
        if self.locked or not block.txs:
            self.sched.after(t0 + c.validate_per_tx * len(block.txs), self._finish_commit, peer)
        else:
            self.sched.after(t0 + c.validate_per_tx, self._commit_step, peer)

    def _commit_step(self, peer: Peer):
        cm = peer.committer
        cm.step()
        if cm.done:
            self._finish_commit(peer)
        else:
            self.sched.after(self.costs.validate_per_tx, self._commit_step, peer)

    def _finish_commit(self, peer: Peer):
        block = peer.committer.finish()
        peer.committer = None
        peer.ledger.append(block)
        peer.chain.append(_chain(peer.chain[-1], block))
        if peer is self.reference:
            for tx, ok in zip(block.txs, block.validity):
                self.resolve(tx.tx_id, "success" if ok else "fail")
        peer.busy = False
        peer.wants_lock = False
        peer.host.release()
        for g in self.groups:
            if peer in g.peers:
                self._pump(g)
        self._try_commit(peer)

    # -- checks --------------------------------------------------------------

    def check(self) -> List[str]:
        out = []
        s = self.stats
        if s.fired != s.resolved + len(self.pending):
            out.append(f"ch{self.idx}: conservation broken: fired={s.fired} "
                       f"resolved={s.resolved} pending={len(self.pending)}")
        for kind, col in self.bins.items():
            if sum(col) != getattr(s, kind):
                out.append(f"ch{self.idx}: per-second {kind} does not sum to total")
        peers = list(self.peers.values())
        ref = self.reference
        for p in peers:
            n = min(p.height, ref.height)
            if p.chain[:n + 1] != ref.chain[:n + 1]:
                out.append(f"ch{self.idx}: {p.id} state history diverges from {ref.id}")
            for a, b in zip(p.ledger.blocks[:n], ref.ledger.blocks[:n]):
                if ([t.tx_id for t in a.txs] != [t.tx_id for t in b.txs]
                        or a.validity != b.validity):
                    out.append(f"ch{self.idx}: {p.id} block {a.block_id} differs")
                    break
            if p.height == ref.height and p.committer is None and ref.committer is None:
                if dict(p.store.items()) != dict(ref.store.items()):
                    out.append(f"ch{self.idx}: {p.id} final state differs")
        return out


def _tamper_ws(ws: WriteSet) -> WriteSet:
    return WriteSet.of((k, v + 1) for k, v in ws)


class Client:
    def __init__(self, channel: Channel, cid: int):
        self.ch = channel
        self.id = cid
        cfg = channel.cfg
        policy = EndorsementPolicy(cfg.topology.endorsers_for(cid))
        self.stream = gen_asset_proposals(channel.params, None, client_id=cid,
                                          start_id=cid << 40, policy=policy)
        self.group = channel.groups[cid % cfg.topology.peers_per_org]
        self.period = 1.0 / cfg.rate
        self.in_flight = 0
        self.k = 0

    def fire(self):
        ch = self.ch
        if self.in_flight < ch.cfg.window:
            proposal = next(self.stream)
            self.in_flight += 1
            ch.stats.fired += 1
            ch.pending[proposal.proposal_id] = self
            ch.log(f"client{self.id}", "fire", proposal.proposal_id)
            ch.sched.after(ch.costs.net_delay, ch.submit, self.group, proposal)
        else:
            ch.stats.throttled += 1
        self.k += 1
        nxt = self.id / (ch.cfg.rate * len(ch.clients)) + self.k * self.period
        if nxt < ch.cfg.duration:
            ch.sched.at(nxt, self.fire)


# --- entry points --------------------------------------------------------------

def run(config: RunConfig) -> RunMetrics:
    """Run the configured experiment and return per-second metrics."""
    return run_detailed(config)[0]


def run_detailed(config: RunConfig):
    """Like :func:`run`, also returning the channel objects (peers, ledgers)."""
    config.validate()
    sched = WallClockScheduler() if config.scheduler == "wall" else VirtualScheduler()
    hosts = {pid: HostCPU(config.costs.cores) for pid in config.topology.peer_ids()}
    log: Optional[List[str]] = [] if config.event_log else None
    channels = [Channel(i, config, sched, hosts, log)
                for i in range(config.topology.channels)]
    started = time.perf_counter()
    if config.duration > 0:
        for ch in channels:
            ch.start()
        sched.run(config.duration)
    n_bins = int(-(-config.duration // 1))
    metrics = RunMetrics(n_bins, wall_seconds=time.perf_counter() - started,
                         max_lag=sched.max_lag)
    for sec in range(n_bins):
        vals = [sum(ch.bins[k][sec] for ch in channels)
                for k in ("success", "fail", "ea_sim", "ea_order")]
        metrics.rows.append((sec, vals[0] + vals[1], *vals))
    for ch in channels:
        metrics.channels.append(ch.stats)
        metrics.violations.extend(ch.check())
    if log is not None:
        metrics.events = log
    return metrics, channels


# --- scripted three-transaction scenario ------------------------------------------

@dataclass
class ExampleOutcome:
    flags: Dict[str, List[bool]]
    reasons: Dict[str, List[str]]
    states: Dict[str, str]
    ledgers: Dict[str, str]
    success: int
    fail: int
    block: Block
    txs: Dict[str, object] = field(default_factory=dict)


def running_example() -> ExampleOutcome:
    """Two organizations with two peers each; three concurrent transfers.

    T7 moves 30 from BalA to BalB honestly. T8 moves 70, but one of its
    endorsers reports a forged write set, and the client packs that forged
    set with both endorsement digests. T9 moves 100 and was simulated on the
    same state as T7. All three go into block 4 in that order.
    """
    topo = NetworkTopology(2, 2, 1, 1)
    entries = {"BalA": (100, Version(3, 0)), "BalB": (50, Version(2, 0))}
    stores = {pid: StateStore.from_entries(entries, 3) for pid in topo.peer_ids()}
    a1, a2, b1, b2 = peer_id(0, 0), peer_id(0, 1), peer_id(1, 0), peer_id(1, 1)

    def proposal(pid, amount, endorsers):
        call = ContractCall("asset-transfer", ("BalA", "BalB"), ("BalA", "BalB"),
                            (-amount, amount))
        return Proposal(pid, 0, call, EndorsementPolicy(endorsers))

    p7 = proposal(7, 30, (a1, b1))
    t7 = endorse_and_form(p7, [simulate(p7, stores[a1], peer_id=a1),
                               simulate(p7, stores[b1], peer_id=b1)])
    p8 = proposal(8, 70, (a2, b2))
    forged = simulate(p8, stores[a2], peer_id=a2,
                      tamper=lambda ws: WriteSet.of({**ws.as_dict(), "BalA": 100}))
    honest = simulate(p8, stores[b2], peer_id=b2)
    t8 = pack_transaction(p8, forged.rs, forged.ws, [(a2, forged.digest), (b2, honest.digest)])
    p9 = proposal(9, 100, (a1, b1))
    t9 = endorse_and_form(p9, [simulate(p9, stores[a1], peer_id=a1),
                               simulate(p9, stores[b1], peer_id=b1)])

    cutter = BatchCutter(BatchPolicy(max_tx_count=3))
    batch = None
    for tx in (t7, t8, t9):
        batch = cutter.ingest(tx)
    block = Block(4, tuple(reorder(batch, Mode.VANILLA).txs))

    ledgers = {pid: Ledger(first_block_id=4) for pid in stores}
    sched = VirtualScheduler()

    def sink(pid):
        def _commit(b):
            cm = BlockCommitter(b, stores[pid])
            ledgers[pid].append(cm.finish())
        return _commit

    fan = BlockDelivery(sched, [sink(p) for p in stores], lambda i: 0.001 * (i + 1))
    fan.deliver(block)
    sched.run(float("inf"))
    done = {pid: ledgers[pid].blocks[-1] for pid in stores}
    ref = done[a1]
    return ExampleOutcome(
        flags={p: list(b.validity) for p, b in done.items()},
        reasons={p: list(b.reasons) for p, b in done.items()},
        states={p: s.dump() for p, s in stores.items()},
        ledgers={p: l.dump() for p, l in ledgers.items()},
        success=sum(ref.validity), fail=len(ref.validity) - sum(ref.validity),
        block=block, txs={"T7": t7, "T8": t8, "T9": t9})
