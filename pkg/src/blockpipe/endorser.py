"""Simulation phase: run a contract against the current state, capture RS/WS."""
from __future__ import annotations

import enum
from collections import Counter
from typing import Callable, Dict, List, Optional, Sequence

from .model import (
    ContractCall, EarlyAbortNotice, EndorsementMismatch, Mode, Phase, Proposal,
    ReadSet, SimulationResult, Transaction, Version, WriteSet, compute_digest,
)
from .statestore import StateStore


class SimAbortRule(enum.Enum):
    """When a read observes a block id newer than the simulation's snapshot.

    BLOCK_ID aborts immediately on that observation. CONFIRMED additionally
    requires that some key read earlier in the same simulation has since been
    overwritten, which proves the read set is already stale.
    """

    BLOCK_ID = "block_id"
    CONFIRMED = "confirmed"


# A contract is a read plan plus a pure function from the values read to the
# values written.

def _asset_reads(call: ContractCall) -> List[str]:
    seen = dict.fromkeys(call.read_keys)
    for k in call.write_keys:
        seen.setdefault(k)
    return list(seen)


def _asset_writes(call: ContractCall, values: Dict[str, int]) -> Dict[str, int]:
    amounts = list(call.amounts) + [0] * (len(call.write_keys) - len(call.amounts))
    return {k: values[k] + amt for k, amt in zip(call.write_keys, amounts)}


def _kv_reads(call: ContractCall) -> List[str]:
    return list(dict.fromkeys(call.read_keys))


def _kv_writes(call: ContractCall, values: Dict[str, int]) -> Dict[str, int]:
    amounts = list(call.amounts) + [1] * (len(call.write_keys) - len(call.amounts))
    return dict(zip(call.write_keys, amounts))


CONTRACTS = {
    "asset-transfer": (_asset_reads, _asset_writes),
    "kv": (_kv_reads, _kv_writes),
}


class Simulation:
    """One contract execution on one peer, advanced one read at a time.

    ``step()`` performs the next read and returns an EarlyAbortNotice if the
    early-abort check fires, otherwise None. ``result()`` is available once
    ``done`` is true.
    """

    def __init__(self, proposal: Proposal, store: StateStore, mode: Mode = Mode.VANILLA,
                 *, peer_id: str = "", rule: SimAbortRule = SimAbortRule.BLOCK_ID,
                 tamper: Optional[Callable[[WriteSet], WriteSet]] = None):
        try:
            plan, self._write_fn = CONTRACTS[proposal.contract.contract_name]
        except KeyError:
            raise ValueError(f"unknown contract {proposal.contract.contract_name!r}") from None
        self.proposal = proposal
        self.store = store
        self.peer_id = peer_id
        self.rule = rule
        self.tamper = tamper
        self.check = mode.early_aborts
        self.snapshot = store.snapshot_last_block_id()
        self.trace: List[tuple] = []
        self._plan = plan(proposal.contract)
        self._values: Dict[str, int] = {}
        self._versions: Dict[str, Version] = {}
        self._pos = 0
        self.aborted: Optional[EarlyAbortNotice] = None

    @property
    def n_reads(self) -> int:
        return len(self._plan)

    @property
    def done(self) -> bool:
        return self.aborted is not None or self._pos >= len(self._plan)

    def step(self) -> Optional[EarlyAbortNotice]:
        if self.done:
            return self.aborted
        key = self._plan[self._pos]
        self._pos += 1
        entry = self.store.read(key)
        self.trace.append((key, entry.version))
        if key not in self._versions:
            self._values[key] = entry.value
            self._versions[key] = entry.version
        if self.check and entry.version.block_id > self.snapshot and self._stale(key):
            self.aborted = EarlyAbortNotice(
                self.proposal.proposal_id, key, entry.version.block_id,
                self.snapshot, Phase.SIMULATION, self.peer_id)
        return self.aborted

    def _stale(self, current: str) -> bool:
        if self.rule is SimAbortRule.BLOCK_ID:
            return True
        for k, ver in self._versions.items():
            if k != current:
                now = self.store.get(k)
                if now is not None and now.version != ver:
                    return True
        return False

    def result(self) -> SimulationResult:
        if self.aborted is not None:
            raise RuntimeError("simulation was early-aborted")
        if not self.done:
            raise RuntimeError("simulation has pending reads")
        call = self.proposal.contract
        rs = ReadSet.of(self._versions.items())
        ws = WriteSet.of(self._write_fn(call, self._values))
        if self.tamper is not None:
            ws = self.tamper(ws)
        digest = compute_digest(rs, ws, call.contract_name, self.proposal.policy)
        return SimulationResult(rs, ws, digest, self.peer_id)


def simulate(proposal: Proposal, store: StateStore, mode: Mode = Mode.VANILLA, *,
             peer_id: str = "", rule: SimAbortRule = SimAbortRule.BLOCK_ID,
             tamper: Optional[Callable[[WriteSet], WriteSet]] = None):
    """Run a proposal's contract to completion.

    Returns a SimulationResult, or an EarlyAbortNotice when ``mode`` has early
    abort enabled and a read sees a version newer than the snapshot taken at
    the start. The store is never written.
    """
    sim = Simulation(proposal, store, mode, peer_id=peer_id, rule=rule, tamper=tamper)
    while not sim.done:
        notice = sim.step()
        if notice is not None:
            return notice
    return sim.result()


def endorse_and_form(proposal: Proposal, results: Sequence[SimulationResult]) -> Transaction:
    """Assemble the transaction if every endorser produced the same RS and WS.

    Raises EndorsementMismatch naming the peers that disagree with a strict
    majority, or every peer when no result has one.
    """
    required = proposal.policy.required_endorsers
    by_peer = {r.peer_id: r for r in results}
    missing = [p for p in required if p not in by_peer]
    if missing:
        raise EndorsementMismatch(missing)
    ordered = [by_peer[p] for p in required]
    votes = Counter((r.rs, r.ws) for r in ordered)
    if len(votes) > 1:
        winner, best = votes.most_common(1)[0]
        if 2 * best <= len(ordered):
            raise EndorsementMismatch([r.peer_id for r in ordered])
        raise EndorsementMismatch([r.peer_id for r in ordered if (r.rs, r.ws) != winner])
    return pack_transaction(proposal, ordered[0].rs, ordered[0].ws,
                            [(r.peer_id, r.digest) for r in ordered])


def pack_transaction(proposal: Proposal, rs: ReadSet, ws: WriteSet, digests) -> Transaction:
    """Form a transaction from arbitrary parts without checking them.

    The honest path goes through :func:`endorse_and_form`; this is also what a
    misbehaving client would call to smuggle in a tampered write set.
    """
    return Transaction(proposal.proposal_id, rs, ws, tuple(digests), proposal.policy,
                       proposal.contract.contract_name, proposal.client_id)
