"""Shared domain types and the deterministic endorsement digest."""
from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, NamedTuple, Optional, Sequence, Tuple


class BlockpipeError(Exception):
    """Base class for all errors raised by this package."""


class KeyNotFound(BlockpipeError, KeyError):
    pass


class OutOfOrderBlock(BlockpipeError):
    pass


class EndorsementMismatch(BlockpipeError):
    def __init__(self, peers: Sequence[str]):
        super().__init__(f"endorsement results disagree: {', '.join(peers)}")
        self.peers = tuple(peers)


class CycleDetected(BlockpipeError):
    pass


class ConfigError(BlockpipeError):
    pass


class InvalidSpec(BlockpipeError, ValueError):
    pass


Key = str


class Version(NamedTuple):
    """(block_id, tx_seq) of the transaction that wrote a value."""

    block_id: int
    tx_seq: int

    def __str__(self):
        return f"({self.block_id},{self.tx_seq})"


GENESIS = Version(0, 0)


class Mode(enum.Enum):
    VANILLA = "vanilla"
    PLUSPLUS = "plusplus"
    REORDER_ONLY = "reorder"
    EARLY_ABORT_ONLY = "earlyabort"

    @property
    def reorders(self) -> bool:
        return self in (Mode.PLUSPLUS, Mode.REORDER_ONLY)

    @property
    def early_aborts(self) -> bool:
        return self in (Mode.PLUSPLUS, Mode.EARLY_ABORT_ONLY)

    @classmethod
    def parse(cls, text: str) -> "Mode":
        aliases = {
            "vanilla": cls.VANILLA,
            "plusplus": cls.PLUSPLUS,
            "++": cls.PLUSPLUS,
            "reorder": cls.REORDER_ONLY,
            "reorderonly": cls.REORDER_ONLY,
            "earlyabort": cls.EARLY_ABORT_ONLY,
            "earlyabortonly": cls.EARLY_ABORT_ONLY,
        }
        try:
            return aliases[text.strip().lower().replace("_", "").replace("-", "")]
        except KeyError:
            raise ConfigError(f"unknown mode {text!r}") from None


def _canonical(pairs: Iterable[tuple], kind: str) -> tuple:
    entries = tuple(sorted(pairs, key=lambda kv: kv[0]))
    for (a, _), (b, _) in zip(entries, entries[1:]):
        if a == b:
            raise ValueError(f"duplicate key {a!r} in {kind}")
    for k, _ in entries:
        if not k:
            raise ValueError(f"empty key in {kind}")
    return entries


@dataclass(frozen=True)
class ReadSet:
    entries: Tuple[Tuple[Key, Version], ...] = ()

    @classmethod
    def of(cls, pairs: Iterable[Tuple[Key, Version]] = ()) -> "ReadSet":
        return cls(tuple((k, Version(*v)) for k, v in _canonical(pairs, "read set")))

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    @cached_property
    def keys(self) -> Tuple[Key, ...]:
        return tuple(k for k, _ in self.entries)

    def as_dict(self) -> dict:
        return dict(self.entries)


@dataclass(frozen=True)
class WriteSet:
    entries: Tuple[Tuple[Key, int], ...] = ()

    @classmethod
    def of(cls, pairs: Iterable[Tuple[Key, int]] = ()) -> "WriteSet":
        if isinstance(pairs, dict):
            pairs = pairs.items()
        return cls(tuple((k, int(v)) for k, v in _canonical(pairs, "write set")))

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    @cached_property
    def keys(self) -> Tuple[Key, ...]:
        return tuple(k for k, _ in self.entries)

    def as_dict(self) -> dict:
        return dict(self.entries)


@dataclass(frozen=True)
class EndorsementPolicy:
    required_endorsers: Tuple[str, ...]

    def __post_init__(self):
        if not self.required_endorsers:
            raise ValueError("endorsement policy needs at least one peer")
        object.__setattr__(self, "required_endorsers", tuple(self.required_endorsers))


@dataclass(frozen=True)
class ContractCall:
    contract_name: str
    read_keys: Tuple[Key, ...] = ()
    write_keys: Tuple[Key, ...] = ()
    amounts: Tuple[int, ...] = ()


@dataclass(frozen=True)
class Proposal:
    proposal_id: int
    client_id: int
    contract: ContractCall
    policy: EndorsementPolicy


# --- canonical serialization -------------------------------------------------

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_I64 = struct.Struct("<q")
_VER = struct.Struct("<QI")


@lru_cache(maxsize=1 << 16)
def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def canonical_bytes(rs: ReadSet, ws: WriteSet, contract_name: str,
                    policy: EndorsementPolicy) -> bytes:
    """Byte stream hashed by :func:`compute_digest`.

    Layout, all integers little-endian, strings as u32 length + UTF-8::

        u32 |rs|  { str key, u64 block_id, u32 tx_seq }  ascending key
        u32 |ws|  { str key, i64 value }                 ascending key
        str contract_name
        u32 |peers| { str peer_id }                      ascending peer id
    """
    pack_str = _pack_str
    ver = _VER.pack
    val = _I64.pack
    out = [_U32.pack(len(rs.entries))]
    out.extend(pack_str(k) + ver(v[0], v[1]) for k, v in rs.entries)
    out.append(_U32.pack(len(ws.entries)))
    out.extend(pack_str(k) + val(v) for k, v in ws.entries)
    out.append(pack_str(contract_name))
    peers = sorted(policy.required_endorsers)
    out.append(_U32.pack(len(peers)))
    out.extend(pack_str(p) for p in peers)
    return b"".join(out)


def compute_digest(rs: ReadSet, ws: WriteSet, contract_name: str,
                   policy: EndorsementPolicy) -> bytes:
    """SHA-256 over the canonical serialization; stands in for a signature."""
    return hashlib.sha256(canonical_bytes(rs, ws, contract_name, policy)).digest()


@dataclass(frozen=True)
class Transaction:
    tx_id: int
    rs: ReadSet
    ws: WriteSet
    digests: Tuple[Tuple[str, bytes], ...]
    policy: EndorsementPolicy
    contract_name: str
    client_id: int = 0

    @cached_property
    def canonical(self) -> bytes:
        return canonical_bytes(self.rs, self.ws, self.contract_name, self.policy)

    @cached_property
    def content_digest(self) -> bytes:
        """Digest recomputed from the carried content (the object is immutable)."""
        return hashlib.sha256(self.canonical).digest()

    @cached_property
    def size_bytes(self) -> int:
        return (len(self.canonical) + 8
                + sum(4 + len(p.encode()) + len(d) for p, d in self.digests))

    @property
    def read_keys(self) -> Tuple[Key, ...]:
        return self.rs.keys

    @property
    def write_keys(self) -> Tuple[Key, ...]:
        return self.ws.keys


def make_transaction(tx_id: int, reads: Iterable[Tuple[Key, Version]] = (),
                     writes=(), *, policy: Optional[EndorsementPolicy] = None,
                     contract_name: str = "kv", client_id: int = 0) -> Transaction:
    """Build a transaction whose digests are honest for every policy peer."""
    policy = policy or EndorsementPolicy(("peer0",))
    rs, ws = ReadSet.of(reads), WriteSet.of(writes)
    digest = compute_digest(rs, ws, contract_name, policy)
    return Transaction(tx_id, rs, ws,
                       tuple((p, digest) for p in policy.required_endorsers),
                       policy, contract_name, client_id)


@dataclass(frozen=True)
class Block:
    block_id: int
    txs: Tuple[Transaction, ...]
    validity: Optional[Tuple[bool, ...]] = None
    reasons: Optional[Tuple[str, ...]] = None

    def with_flags(self, validity: Sequence[bool], reasons: Sequence[str]) -> "Block":
        if len(validity) != len(self.txs):
            raise ValueError("one validity flag per transaction")
        return Block(self.block_id, self.txs, tuple(validity), tuple(reasons))

    def __len__(self):
        return len(self.txs)


@dataclass
class SimulationResult:
    rs: ReadSet
    ws: WriteSet
    digest: bytes
    peer_id: str


class Phase(enum.Enum):
    SIMULATION = "simulation"
    ORDERING = "ordering"


@dataclass(frozen=True)
class EarlyAbortNotice:
    proposal_id: int
    offending_key: Key
    observed_block_id: int
    snapshot_block_id: int
    phase: Phase = Phase.SIMULATION
    peer_id: str = field(default="", compare=False)
