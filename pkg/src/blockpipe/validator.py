"""Validation and commit phase: endorsement check, MVCC check, ledger append."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .model import Block, KeyNotFound, OutOfOrderBlock, Transaction
from .statestore import StateStore

OK = "ok"
BAD_ENDORSEMENT = "endorsement"
STALE_READ = "mvcc"


def check_endorsement(tx: Transaction) -> bool:
    """Recompute the digest and compare it with every carried one."""
    required = tx.policy.required_endorsers
    carried = dict(tx.digests)
    if len(carried) != len(tx.digests) or set(carried) != set(required):
        return False
    expected = tx.content_digest
    return all(carried[p] == expected for p in required)


def check_serializability(tx: Transaction, store: StateStore) -> bool:
    """True iff every read version is still the current one."""
    for key, version in tx.rs:
        try:
            if store.read(key).version != version:
                return False
        except KeyNotFound:
            return False
    return True


class Ledger:
    """Append-only list of validated blocks with contiguous ids from 1."""

    def __init__(self, first_block_id: int = 1):
        self.first_block_id = first_block_id
        self.blocks: List[Block] = []

    @property
    def height(self) -> int:
        return self.first_block_id - 1 + len(self.blocks)

    def append(self, block: Block) -> None:
        if block.validity is None:
            raise ValueError("only validated blocks can be appended")
        if block.block_id != self.height + 1:
            raise OutOfOrderBlock(f"ledger at {self.height}, got block {block.block_id}")
        self.blocks.append(block)

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def entries(self):
        for block in self.blocks:
            for seq, (tx, ok, why) in enumerate(zip(block.txs, block.validity, block.reasons)):
                yield block.block_id, seq, tx.tx_id, ok, why

    def dump(self) -> str:
        """One ``block_id,tx_seq,tx_id,valid|invalid,reason`` line per transaction."""
        lines = [f"{b},{s},{t},{'valid' if ok else 'invalid'},{why}"
                 for b, s, t, ok, why in self.entries()]
        return "\n".join(lines) + ("\n" if lines else "")


class BlockCommitter:
    """Validates one block transaction by transaction against a live store.

    Endorsement results are computed up front (they do not depend on order or
    state and may run on ``executor``). Each :meth:`step` then checks the next
    transaction's reads and, if valid, publishes its writes immediately so
    later transactions of the same block see them. :meth:`finish` seals the
    block in the store and returns it with validity flags.
    """

    def __init__(self, block: Block, store: StateStore, executor=None):
        if block.block_id != store.last_block_id + 1:
            raise OutOfOrderBlock(f"store at {store.last_block_id}, got block {block.block_id}")
        self.block = block
        self.store = store
        if executor is not None and len(block.txs) > 1:
            self._endorsed = list(executor.map(check_endorsement, block.txs))
        else:
            self._endorsed = [check_endorsement(tx) for tx in block.txs]
        self.validity: List[bool] = []
        self.reasons: List[str] = []

    @property
    def done(self) -> bool:
        return len(self.validity) == len(self.block.txs)

    def step(self) -> Tuple[bool, str]:
        seq = len(self.validity)
        tx = self.block.txs[seq]
        if not self._endorsed[seq]:
            ok, why = False, BAD_ENDORSEMENT
        elif not check_serializability(tx, self.store):
            ok, why = False, STALE_READ
        else:
            ok, why = True, OK
            self.store.publish(self.block.block_id, seq, tx.ws)
        self.validity.append(ok)
        self.reasons.append(why)
        return ok, why

    def finish(self) -> Block:
        while not self.done:
            self.step()
        self.store.seal(self.block.block_id)
        return self.block.with_flags(self.validity, self.reasons)


def validate_and_commit(block: Block, store: StateStore, ledger: Optional[Ledger] = None,
                        executor=None) -> List[bool]:
    """Validate ``block`` in order, apply valid writes, append to ``ledger``."""
    done = BlockCommitter(block, store, executor).finish()
    if ledger is not None:
        ledger.append(done)
    return list(done.validity)


def validate_blocks(blocks: Sequence[Block], store: StateStore,
                    ledger: Optional[Ledger] = None) -> List[List[bool]]:
    return [validate_and_commit(b, store, ledger) for b in blocks]
