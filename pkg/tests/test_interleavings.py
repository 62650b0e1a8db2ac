"""Replayed interleavings: early-abort rules against plain validation."""
import pytest

import _harness
from blockpipe.endorser import SimAbortRule
from blockpipe.model import Mode
from blockpipe.orderer import FIRST_SEEN

SEEDS = range(400)


def test_recordings_are_deterministic():
    a, b = _harness.record(11), _harness.record(11)
    assert a.events == b.events and a.proposals == b.proposals
    va, vb = _harness.judge(a), _harness.judge(b)
    assert va == vb


def test_recordings_cover_every_step():
    rec = _harness.record(3)
    kinds = [k for k, _ in rec.events]
    assert kinds.count("seal") == _harness.N_COMMIT_BLOCKS
    assert kinds.count("start") == len(rec.proposals)
    assert kinds.count("commit") == sum(len(b.txs) for b in rec.commit_blocks)


def test_vanilla_replay_never_aborts():
    for seed in range(50):
        rec = _harness.record(seed)
        out = _harness.replay(rec, Mode.VANILLA, SimAbortRule.BLOCK_ID)
        assert out.sim_aborted == []
        assert len(out.completed) == len(rec.proposals)


@pytest.mark.parametrize("seed", SEEDS)
def test_default_rules_have_no_false_aborts(seed):
    v = _harness.judge(_harness.record(seed))
    assert v.false_aborts() == []
    assert set(v.order_cycle) <= v.cycle_members


def test_block_id_rule_aborts_transactions_that_would_commit():
    totals = _harness.survey(SEEDS, sim_rule=SimAbortRule.BLOCK_ID)
    assert totals["false_sim"] > 0


def test_first_seen_rule_aborts_transactions_that_would_commit():
    totals = _harness.survey(SEEDS, mismatch_rule=FIRST_SEEN)
    assert totals["false_mismatch"] > 0


def test_default_rules_commit_more_than_vanilla_overall():
    totals = _harness.survey(SEEDS)
    assert totals["plusplus_valid"] > totals["vanilla_valid"]
