"""Workload generators and the reference MVCC replay oracle.

The asset-transfer generator draws accounts from a hot set with a given
probability per slot. The two sequence families are the stand-alone
reordering benchmarks: interleaved single-key readers and writers, and
independent groups that each form one dependency ring.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Optional, Sequence

from .model import (
    GENESIS, ContractCall, EndorsementPolicy, InvalidSpec, Proposal, Transaction,
    make_transaction,
)

INTERLEAVED_RW = "interleaved"
CYCLE_GROUPS = "cycles"


def account_name(i: int) -> str:
    return f"acc{i:05d}"


@dataclass
class WorkloadParams:
    n_accounts: int = 10000
    rw: int = 4
    hot_read_prob: float = 0.1
    hot_write_prob: float = 0.05
    hot_set_fraction: float = 0.01
    seed: int = 0
    initial_balance: int = 1000
    max_amount: int = 100

    def __post_init__(self):
        for name in ("hot_read_prob", "hot_write_prob", "hot_set_fraction"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise InvalidSpec(f"{name}={p} outside [0, 1]")
        if self.rw < 1:
            raise InvalidSpec("rw must be at least 1")
        if self.hot_set_size >= self.n_accounts:
            raise InvalidSpec("hot set must leave some cold accounts")
        if self.rw > self.hot_set_size or self.rw > self.n_accounts - self.hot_set_size:
            raise InvalidSpec("rw exceeds the hot or cold account pool")

    @property
    def hot_set_size(self) -> int:
        return max(1, math.ceil(self.hot_set_fraction * self.n_accounts))

    def hot_accounts(self) -> List[str]:
        return [account_name(i) for i in range(self.hot_set_size)]

    def initial_state(self) -> Dict[str, int]:
        rng = random.Random(f"{self.seed}:balances")
        return {account_name(i): rng.randint(self.initial_balance // 2, self.initial_balance)
                for i in range(self.n_accounts)}


class AccountPicker:
    """Draws distinct accounts, each slot hot with probability ``p``."""

    def __init__(self, params: WorkloadParams, rng: random.Random):
        self.rng = rng
        self.n_hot = params.hot_set_size
        self.n = params.n_accounts

    def pick(self, count: int, p: float) -> List[str]:
        chosen: List[int] = []
        taken = set()
        for _ in range(count):
            hot = self.rng.random() < p
            while True:
                i = (self.rng.randrange(self.n_hot) if hot
                     else self.n_hot + self.rng.randrange(self.n - self.n_hot))
                if i not in taken:
                    break
            taken.add(i)
            chosen.append(i)
        return [account_name(i) for i in chosen]


def zero_sum_amounts(rng: random.Random, count: int, max_amount: int) -> List[int]:
    if count == 1:
        return [0]
    amounts = [rng.randint(-max_amount, max_amount) for _ in range(count - 1)]
    amounts.append(-sum(amounts))
    return amounts


def gen_asset_proposals(params: WorkloadParams, count: Optional[int] = None, *,
                        client_id: int = 0, start_id: int = 0,
                        policy: Optional[EndorsementPolicy] = None) -> Iterator[Proposal]:
    """Seeded stream of asset-transfer proposals (endless if ``count`` is None).

    Each proposal reads ``rw`` balances and updates ``rw`` balances; reads and
    writes are drawn separately, so the hot probabilities apply per slot.
    """
    rng = random.Random(f"{params.seed}:client{client_id}")
    picker = AccountPicker(params, rng)
    policy = policy or EndorsementPolicy(("peer0.org0", "peer0.org1"))
    i = 0
    while count is None or i < count:
        reads = picker.pick(params.rw, params.hot_read_prob)
        writes = picker.pick(params.rw, params.hot_write_prob)
        amounts = zero_sum_amounts(rng, params.rw, params.max_amount)
        call = ContractCall("asset-transfer", tuple(reads), tuple(writes), tuple(amounts))
        yield Proposal(start_id + i, client_id, call, policy)
        i += 1


# --- stand-alone sequences ---------------------------------------------------

@dataclass
class SequenceSpec:
    family: str
    n: int
    param: int

    def __post_init__(self):
        if self.family == INTERLEAVED_RW:
            if self.n < 2 or self.n % 2:
                raise InvalidSpec("interleaved sequences need an even n >= 2")
            if not 1 <= self.param <= self.n // 2 + 1:
                raise InvalidSpec(f"shift must be in [1, {self.n // 2 + 1}]")
        elif self.family == CYCLE_GROUPS:
            if self.param < 2 or self.n % self.param:
                raise InvalidSpec(f"cycle length {self.param} must be >= 2 and divide {self.n}")
        else:
            raise InvalidSpec(f"unknown family {self.family!r}")

    def build(self) -> List[Transaction]:
        if self.family == INTERLEAVED_RW:
            return gen_interleaved_rw(self.n, self.param)
        return gen_cycle_groups(self.n, self.param)


def gen_interleaved_rw(n: int, i: int) -> List[Transaction]:
    """S_1 is n/2 single-key writers then n/2 readers of the same keys; S_i
    moves the last i-1 transactions of S_1 to the front."""
    SequenceSpec(INTERLEAVED_RW, n, i)
    half = n // 2
    base = ([("w", f"k{j}") for j in range(1, half + 1)]
            + [("r", f"k{j}") for j in range(1, half + 1)])
    shift = i - 1
    seq = base[len(base) - shift:] + base[:len(base) - shift] if shift else base
    txs = []
    for tx_id, (op, key) in enumerate(seq):
        if op == "w":
            txs.append(make_transaction(tx_id, (), {key: 1}))
        else:
            txs.append(make_transaction(tx_id, [(key, GENESIS)], ()))
    return txs


def gen_cycle_groups(n: int, t: int) -> List[Transaction]:
    """n/t groups on disjoint keys; within a group tx_m reads k_(m-1) and
    writes k_m, except the first (reads and writes k_0) and the last (writes
    k_0)."""
    SequenceSpec(CYCLE_GROUPS, n, t)
    txs = []
    for g in range(n // t):
        k = [f"g{g}k{m}" for m in range(max(t - 1, 1))]
        for m in range(t):
            if m == 0:
                r, w = k[0], k[0]
            elif m == t - 1:
                r, w = k[t - 2], k[0]
            else:
                r, w = k[m - 1], k[m]
            txs.append(make_transaction(len(txs), [(r, GENESIS)], {w: 1}))
    return txs


# --- oracle ------------------------------------------------------------------

class _Written:
    """Version marker for a write made during replay; equal only to itself."""

    __slots__ = ("pos",)

    def __init__(self, pos):
        self.pos = pos

    def __repr__(self):
        return f"<written@{self.pos}>"


def mvcc_replay_oracle(txs: Sequence[Transaction], initial_state: Mapping = None) -> List[bool]:
    """Sequential MVCC replay, deliberately independent of ``validator``.

    ``initial_state`` maps key -> version (or anything with a ``version``
    attribute, or a store exposing ``items()``). A key missing from it is
    treated as absent; by default every key in ``txs`` starts at genesis.
    Writes replace the key's marker with a fresh object, so no later read
    recorded in a transaction can match it.
    """
    if initial_state is None:
        initial_state = genesis_versions(batch_keys(txs))
    versions: Dict[str, object] = {}
    for key, v in initial_state.items():
        versions[key] = tuple(getattr(v, "version", v))
    flags = []
    for pos, tx in enumerate(txs):
        ok = True
        for key, ver in tx.rs.entries:
            cur = versions.get(key)
            if cur is None or isinstance(cur, _Written) or cur != tuple(ver):
                ok = False
                break
        flags.append(ok)
        if ok:
            mark = _Written(pos)
            for key, _ in tx.ws.entries:
                versions[key] = mark
    return flags


def genesis_versions(keys) -> Dict[str, tuple]:
    return {k: tuple(GENESIS) for k in keys}


def batch_keys(txs: Sequence[Transaction]) -> List[str]:
    keys = set()
    for tx in txs:
        keys.update(tx.read_keys)
        keys.update(tx.write_keys)
    return sorted(keys)
