"""Versioned key-value current state.

Readers never take a lock. Each key maps to an immutable ``StateEntry`` and a
write replaces the whole entry with a single dict assignment, so a reader sees
either the old or the new (value, version) pair. ``last_block_id`` is bumped
only after every write of a block is visible, which leaves the window that
simulation-phase early abort looks for.
"""
from __future__ import annotations

import threading
from pathlib import Path
from typing import Dict, Iterable, Iterator, Mapping, NamedTuple, Optional, Sequence, Tuple

from .model import GENESIS, Key, KeyNotFound, OutOfOrderBlock, Version, WriteSet


class StateEntry(NamedTuple):
    value: int
    version: Version


class StateStore:
    def __init__(self, initial: Optional[Mapping[Key, int]] = None):
        self._data: Dict[Key, StateEntry] = {}
        self._last_block_id = 0
        self._open_block: Optional[int] = None
        self._open_seq = -1
        self._write_lock = threading.Lock()
        for key, value in (initial or {}).items():
            if not key:
                raise ValueError("empty key")
            self._data[key] = StateEntry(int(value), GENESIS)

    @classmethod
    def from_entries(cls, entries: Mapping[Key, Tuple[int, Version]],
                     last_block_id: int) -> "StateStore":
        store = cls()
        for key, (value, ver) in entries.items():
            store._data[key] = StateEntry(int(value), Version(*ver))
        store._last_block_id = last_block_id
        return store

    # -- reads ---------------------------------------------------------------

    def read(self, key: Key) -> StateEntry:
        try:
            return self._data[key]
        except KeyError:
            raise KeyNotFound(key) from None

    def get(self, key: Key, default=None):
        return self._data.get(key, default)

    def snapshot_last_block_id(self) -> int:
        return self._last_block_id

    @property
    def last_block_id(self) -> int:
        return self._last_block_id

    def __contains__(self, key) -> bool:
        return key in self._data

    def __len__(self) -> int:
        return len(self._data)

    def keys(self) -> Iterator[Key]:
        return iter(list(self._data))

    def items(self) -> Iterator[Tuple[Key, StateEntry]]:
        return iter(list(self._data.items()))

    # -- writes --------------------------------------------------------------

    def publish(self, block_id: int, tx_seq: int, ws: WriteSet | Iterable[Tuple[Key, int]]):
        """Make one valid transaction's writes visible, stamped (block_id, tx_seq)."""
        with self._write_lock:
            if self._open_block is None:
                if block_id != self._last_block_id + 1:
                    raise OutOfOrderBlock(
                        f"block {block_id} after {self._last_block_id}")
                self._open_block, self._open_seq = block_id, -1
            elif block_id != self._open_block:
                raise OutOfOrderBlock(f"block {self._open_block} is still open")
            if tx_seq <= self._open_seq:
                raise ValueError(f"tx_seq {tx_seq} not increasing within block {block_id}")
            self._open_seq = tx_seq
            version = Version(block_id, tx_seq)
            for key, value in ws:
                self._data[key] = StateEntry(int(value), version)

    def seal(self, block_id: int):
        """Finish a block: advance last_block_id after all its writes are published."""
        with self._write_lock:
            if block_id != self._last_block_id + 1:
                raise OutOfOrderBlock(f"block {block_id} after {self._last_block_id}")
            if self._open_block not in (None, block_id):
                raise OutOfOrderBlock(f"block {self._open_block} is still open")
            self._open_block = None
            self._last_block_id = block_id

    def commit_block(self, block_id: int, valid_writes: Sequence[Tuple[int, WriteSet]]):
        if block_id != self._last_block_id + 1:
            raise OutOfOrderBlock(f"block {block_id} after {self._last_block_id}")
        for tx_seq, ws in valid_writes:
            self.publish(block_id, tx_seq, ws)
        self.seal(block_id)

    # -- snapshots -----------------------------------------------------------

    def dump(self) -> str:
        """One ``key,value,block_id,tx_seq`` line per key, ascending key."""
        lines = []
        for key in sorted(self._data):
            value, ver = self._data[key]
            lines.append(f"{key},{value},{ver.block_id},{ver.tx_seq}")
        return "\n".join(lines) + ("\n" if lines else "")

    def save(self, path) -> None:
        Path(path).write_text(f"# last_block_id={self._last_block_id}\n" + self.dump())

    @classmethod
    def load(cls, path) -> "StateStore":
        entries = {}
        last = 0
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                if "last_block_id=" in line:
                    last = int(line.split("=", 1)[1])
                continue
            key, value, block_id, tx_seq = line.rsplit(",", 3)
            entries[key] = (int(value), Version(int(block_id), int(tx_seq)))
        return cls.from_entries(entries, last)
