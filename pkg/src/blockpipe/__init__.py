"""Simulator for a simulate-order-validate-commit blockchain pipeline with
within-block reordering and early abort."""
from .model import (
    GENESIS, Block, BlockpipeError, ConfigError, ContractCall, CycleDetected,
    EarlyAbortNotice, EndorsementMismatch, EndorsementPolicy, InvalidSpec,
    KeyNotFound, Mode, OutOfOrderBlock, Phase, Proposal, ReadSet,
    SimulationResult, Transaction, Version, WriteSet, compute_digest,
    make_transaction,
)
from .statestore import StateEntry, StateStore
from .endorser import SimAbortRule, Simulation, endorse_and_form, pack_transaction, simulate
from .orderer import (
    BatchCutter, BatchPolicy, ConflictGraph, CycleTable, ReorderResult,
    build_conflict_graph, derive_schedule, enumerate_cycles, greedy_cycle_break,
    reorder, strongly_connected_subgraphs, within_block_early_abort,
)

__version__ = "0.1.0"
