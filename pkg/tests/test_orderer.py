import random
import time

import pytest
from hypothesis import given, settings, strategies as st

from blockpipe.model import CycleDetected, GENESIS, Mode, Version, make_transaction
from blockpipe.orderer import (
    EXACT, FIRST_SEEN, SHORTEST, STALE, BatchCutter, BatchPolicy, CycleTable, build_conflict_graph,
    break_cycles, derive_schedule, enumerate_cycles, greedy_cycle_break, is_acyclic,
    reorder, strongly_connected_subgraphs, within_block_early_abort,
)
from blockpipe.workload import gen_cycle_groups, mvcc_replay_oracle

from conftest import EXAMPLE_READS, EXAMPLE_WRITES


def random_batch(rng, n_tx, n_keys, max_rw=4, stale=0.0):
    txs = []
    for i in range(n_tx):
        keys = [f"k{j}" for j in range(n_keys)]
        reads = rng.sample(keys, rng.randint(0, min(max_rw, n_keys)))
        writes = rng.sample(keys, rng.randint(0, min(max_rw, n_keys)))
        rs = [(k, Version(1, 0) if rng.random() < stale else GENESIS) for k in reads]
        txs.append(make_transaction(i, rs, {k: i for k in writes}))
    return txs


# --- batch cutting ---------------------------------------------------------------

def test_cut_on_count():
    cutter = BatchCutter(BatchPolicy(max_tx_count=256))
    txs = random_batch(random.Random(0), 256, 40)
    outs = [cutter.ingest(t, 0.0) for t in txs]
    assert all(o is None for o in outs[:-1])
    assert len(outs[-1]) == 256 and cutter.last_reason == "count"


def test_cut_on_time():
    cutter = BatchCutter(BatchPolicy(max_wait=1.0))
    assert cutter.ingest(make_transaction(1, (), {"a": 1}), 5.0) is None
    assert cutter.deadline == 6.0
    assert cutter.tick(5.999) is None
    batch = cutter.tick(6.0)
    assert len(batch) == 1 and cutter.last_reason == "time"


def test_time_cut_fires_exactly_at_deadline():
    # 1.0086 - 0.0086 rounds below 1.0; the deadline tick must still cut
    cutter = BatchCutter(BatchPolicy(max_wait=1.0))
    cutter.ingest(make_transaction(1, (), {"a": 1}), 0.0086)
    assert len(cutter.tick(cutter.deadline)) == 1
    for first in (0.1, 0.2, 0.3, 0.7, 1e-9, 123.456):
        cutter.ingest(make_transaction(1, (), {"a": 1}), first)
        assert cutter.tick(cutter.deadline) is not None, first


def test_cut_on_unique_keys():
    cutter = BatchCutter(BatchPolicy(max_unique_keys=4))
    assert cutter.ingest(make_transaction(1, [("k1", GENESIS)], {"k2": 1})) is None
    batch = cutter.ingest(make_transaction(2, [("k3", GENESIS)], {"k4": 1}))
    assert [t.tx_id for t in batch] == [1, 2] and cutter.last_reason == "keys"


def test_cut_on_bytes():
    tx = make_transaction(1, [("k1", GENESIS)], {"k1": 1})
    cutter = BatchCutter(BatchPolicy(max_bytes=3 * tx.size_bytes))
    assert cutter.ingest(tx) is None
    assert cutter.ingest(make_transaction(2, [("k1", GENESIS)], {"k1": 1})) is None
    assert len(cutter.ingest(make_transaction(3, [("k1", GENESIS)], {"k1": 1}))) == 3
    assert cutter.last_reason == "bytes"


def test_empty_cutter_never_cuts():
    cutter = BatchCutter(BatchPolicy())
    assert cutter.tick(1e9) is None and cutter.deadline is None
    assert cutter.cut_batch() == [] and cutter.last_reason is None


def test_policy_values_must_be_positive():
    with pytest.raises(ValueError):
        BatchPolicy(max_bytes=0)


# --- within-block early abort ---------------------------------------------------

def test_first_seen_aborts_later_different_version():
    t6 = make_transaction(6, [("k", Version(1, 0))], {"a": 1})
    t7 = make_transaction(7, [("k", Version(2, 0))], {"b": 1})
    kept, aborted = within_block_early_abort([t6, t7], FIRST_SEEN)
    assert kept == [t6] and aborted == [t7]


def test_stale_rule_aborts_the_older_reader():
    t6 = make_transaction(6, [("k", Version(1, 0))], {"a": 1})
    t7 = make_transaction(7, [("k", Version(2, 0))], {"b": 1})
    kept, aborted = within_block_early_abort([t6, t7], STALE)
    assert kept == [t7] and aborted == [t6]


def test_agreeing_versions_abort_nothing(four_txs):
    for rule in (FIRST_SEEN, STALE):
        assert within_block_early_abort(four_txs, rule) == (four_txs, [])


@pytest.mark.parametrize("seed", range(50))
def test_first_seen_matches_brute_force(seed):
    rng = random.Random(seed)
    batch = random_batch(rng, 30, 10, stale=0.3)
    kept, aborted = within_block_early_abort(batch, FIRST_SEEN)
    want = []
    for tx in batch:
        ok = True
        for key, ver in tx.rs:
            first = next(v for t in batch for k, v in t.rs if k == key)
            ok &= first == ver
        want.append(ok)
    assert kept == [t for t, w in zip(batch, want) if w]
    assert aborted == [t for t, w in zip(batch, want) if not w]


@pytest.mark.parametrize("seed", range(50))
def test_stale_filter_only_drops_doomed_transactions(seed):
    """Any tx dropped by the stale rule fails validation in every order."""
    rng = random.Random(seed)
    batch = random_batch(rng, 20, 8, stale=0.3)
    _, aborted = within_block_early_abort(batch, STALE)
    # current state: every key at the newest version anybody observed
    newest = {}
    for tx in batch:
        for k, v in tx.rs:
            newest[k] = max(newest.get(k, v), v)
    for tx in aborted:
        for _ in range(5):
            order = batch[:]
            rng.shuffle(order)
            flags = mvcc_replay_oracle(order, {k: newest.get(k, GENESIS) for k in newest})
            assert not flags[order.index(tx)]


# --- conflict graph ---------------------------------------------------------------

def test_example_edges(six_txs):
    g = build_conflict_graph(six_txs)
    assert set(g.edges()) == {(0, 1), (0, 3), (1, 2), (1, 3), (1, 4), (2, 4), (2, 5),
                              (3, 0), (3, 4), (4, 2)}


def test_example_bit_vectors(six_txs):
    g = build_conflict_graph(six_txs)
    # T0 reads K0 and K1
    assert {g.keys[b] for b in range(len(g.keys)) if g.read_vectors[0] >> b & 1} == \
        {"K0", "K1"}
    for i in range(6):
        r = {g.keys[b] for b in range(len(g.keys)) if g.read_vectors[i] >> b & 1}
        w = {g.keys[b] for b in range(len(g.keys)) if g.write_vectors[i] >> b & 1}
        assert r == {f"K{k}" for k in EXAMPLE_READS[i]}
        assert w == {f"K{k}" for k in EXAMPLE_WRITES[i]}


def test_empty_graph():
    g = build_conflict_graph([])
    assert g.n == 0 and list(g.edges()) == []
    assert reorder([], Mode.PLUSPLUS).txs == []


@pytest.mark.parametrize("seed", range(20))
def test_edges_match_key_intersection(backend, seed):
    rng = random.Random(seed)
    txs = random_batch(rng, 50, 30)
    g = build_conflict_graph(txs)
    want = {(i, j) for i, a in enumerate(txs) for j, b in enumerate(txs)
            if i != j and set(a.read_keys) & set(b.write_keys)}
    assert set(g.edges()) == want


def test_example_sccs(six_txs, backend):
    g = build_conflict_graph(six_txs)
    assert sorted(strongly_connected_subgraphs(g)) == [[0, 1, 3], [2, 4], [5]]


def test_edgeless_graph_has_singleton_sccs():
    txs = [make_transaction(i, [(f"r{i}", GENESIS)], {f"w{i}": 1}) for i in range(5)]
    g = build_conflict_graph(txs)
    assert sorted(strongly_connected_subgraphs(g)) == [[i] for i in range(5)]


def test_example_cycles(six_txs, backend):
    g = build_conflict_graph(six_txs)
    found = {tuple(sorted(c)) for comp in strongly_connected_subgraphs(g)
             for c in enumerate_cycles(g, comp)}
    assert found == {(0, 3), (0, 1, 3), (2, 4)}
    assert enumerate_cycles(g, [5]) == []


def test_example_cycle_direction(six_txs):
    g = build_conflict_graph(six_txs)
    long = [c for c in enumerate_cycles(g, [0, 1, 3]) if len(c) == 3][0]
    for a, b in zip(long, long[1:] + long[:1]):
        assert g.has_edge(a, b)


def test_example_participation_and_removal():
    cycles = [[0, 3], [0, 1, 3], [2, 4]]
    table = CycleTable.of(cycles)
    assert table.participation_count == {0: 2, 1: 1, 2: 1, 3: 2, 4: 1}
    survivors, removed = greedy_cycle_break(6, cycles)
    assert removed == [0, 2]
    assert survivors == [1, 3, 4, 5]


def test_acyclic_batch_removes_nothing():
    assert greedy_cycle_break(4, []) == ([0, 1, 2, 3], [])


def test_example_schedule(six_txs):
    g = build_conflict_graph(six_txs)
    assert derive_schedule([1, 3, 4, 5], g) == [5, 1, 3, 4]


def test_single_node_schedule(six_txs):
    assert derive_schedule([2], build_conflict_graph(six_txs)) == [2]


def test_schedule_rejects_cycles(six_txs):
    with pytest.raises(CycleDetected):
        derive_schedule([0, 1, 3], build_conflict_graph(six_txs))


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 25), st.floats(0.0, 0.5), st.randoms(use_true_random=False))
def test_schedule_is_topological_on_random_dags(n, p, rnd):
    # a DAG: reader i depends only on writers with a larger index
    txs = []
    for i in range(n):
        reads = [(f"w{j}", GENESIS) for j in range(i + 1, n) if rnd.random() < p]
        txs.append(make_transaction(i, reads, {f"w{i}": 1}))
    rnd.shuffle(txs)
    g = build_conflict_graph(txs)
    order = derive_schedule(range(n), g)
    assert sorted(order) == list(range(n))
    pos = {v: k for k, v in enumerate(order)}
    assert all(pos[i] < pos[j] for i, j in g.edges())
    assert order == derive_schedule(range(n), g)


def test_cycle_groups_lose_one_per_group():
    txs = gen_cycle_groups(64, 4)
    res = reorder(txs, Mode.PLUSPLUS)
    assert len(res.txs) == 48 and len(res.cycle_aborted) == 16
    assert all(mvcc_replay_oracle(res.txs))


# --- reorder -------------------------------------------------------------------

def test_example_end_to_end(six_txs):
    res = reorder(six_txs, Mode.PLUSPLUS)
    assert [t.tx_id for t in res.txs] == [5, 1, 3, 4]
    assert [t.tx_id for t in res.cycle_aborted] == [0, 2]
    assert res.mismatch_aborted == []


def test_vanilla_keeps_arrival_order(four_txs):
    res = reorder(four_txs, Mode.VANILLA)
    assert [t.tx_id for t in res.txs] == [1, 2, 3, 4] and res.early_aborted == []
    assert mvcc_replay_oracle(res.txs) == [True, False, False, False]


def test_plusplus_makes_all_four_valid(four_txs):
    res = reorder(four_txs, Mode.PLUSPLUS)
    assert len(res.txs) == 4 and all(mvcc_replay_oracle(res.txs))
    assert res.txs[-1].tx_id == 1


def test_reorder_only_appends_cycle_breakers(six_txs):
    res = reorder(six_txs, Mode.REORDER_ONLY)
    assert [t.tx_id for t in res.txs] == [5, 1, 3, 4, 0, 2]
    assert res.early_aborted == []


def test_independent_batch_unchanged():
    txs = [make_transaction(i, [(f"r{i}", GENESIS)], {f"w{i}": 1}) for i in range(6)]
    res = reorder(txs, Mode.PLUSPLUS)
    assert res.txs == txs and res.early_aborted == []


@pytest.mark.parametrize("search", [EXACT, SHORTEST])
@pytest.mark.parametrize("seed", range(40))
def test_reordered_schedule_is_serializable(seed, search):
    rng = random.Random(seed)
    # exhaustive cycle enumeration is exponential, keep those batches small
    batch = random_batch(rng, rng.randint(1, 14 if search == EXACT else 40), rng.randint(2, 20))
    res = reorder(batch, Mode.PLUSPLUS, cycle_search=search)
    assert all(mvcc_replay_oracle(res.txs))
    assert sorted(t.tx_id for t in res.txs + res.early_aborted) == list(range(len(batch)))
    again = reorder(batch, Mode.PLUSPLUS, cycle_search=search)
    assert [t.tx_id for t in again.txs] == [t.tx_id for t in res.txs]
    if search == EXACT:
        assert len(res.cycle_aborted) <= res.cycles_found


@pytest.mark.parametrize("seed", range(10))
def test_break_cycles_leaves_acyclic_graph(seed):
    rng = random.Random(seed)
    for search in (EXACT, SHORTEST):
        # exhaustive enumeration only on a batch small enough for it
        n = 30 if search == EXACT else 300
        g = build_conflict_graph(random_batch(rng, n, 30, max_rw=3 if search == EXACT else 6))
        survivors, removed, _, _ = break_cycles(g, range(g.n), search)
        assert is_acyclic(g, survivors)
        assert sorted(survivors + removed) == list(range(g.n))


def test_unknown_cycle_search_rejected(six_txs):
    with pytest.raises(ValueError):
        break_cycles(build_conflict_graph(six_txs), range(6), "fastest")


def test_shortest_search_on_example(six_txs, backend):
    res = reorder(six_txs, Mode.PLUSPLUS, cycle_search=SHORTEST)
    assert [t.tx_id for t in res.cycle_aborted] == [0, 2]
    assert [t.tx_id for t in res.txs] == [5, 1, 3, 4]


def test_large_batch_reorders_quickly():
    rng = random.Random(3)
    keys = [f"acc{i}" for i in range(10000)]
    hot = keys[:100]
    batch = []
    for i in range(1024):
        pick = lambda p: hot[rng.randrange(100)] if rng.random() < p else \
            keys[100 + rng.randrange(9900)]  # noqa: E731
        reads = {pick(0.1) for _ in range(4)}
        writes = {pick(0.05) for _ in range(4)}
        batch.append(make_transaction(i, [(k, GENESIS) for k in reads], {k: 1 for k in writes}))
    best = min(_timed(batch) for _ in range(3))
    assert best < 0.05


def _timed(batch):
    t0 = time.perf_counter()
    res = reorder(batch, Mode.PLUSPLUS, cycle_search=SHORTEST)
    elapsed = time.perf_counter() - t0
    assert all(mvcc_replay_oracle(res.txs))
    return elapsed

