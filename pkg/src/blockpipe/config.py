"""Run configuration, cost model and run metrics.

Configuration files are INI files with optional ``[run]``, ``[topology]``,
``[batch]``, ``[workload]`` and ``[costs]`` sections; every key maps to a
field below. Probabilities accept either ``0.4`` or ``40%``.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .model import ConfigError, InvalidSpec, Mode
from .orderer import EXACT, FIRST_SEEN, SHORTEST, STALE, BatchPolicy
from .endorser import SimAbortRule
from .workload import WorkloadParams


@dataclass
class NetworkTopology:
    organizations: int = 2
    peers_per_org: int = 2
    channels: int = 1
    clients_per_channel: int = 4

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 1:
                raise ConfigError(f"topology.{f.name} must be >= 1")

    def peer_ids(self) -> List[str]:
        return [peer_id(o, x) for o in range(self.organizations)
                for x in range(self.peers_per_org)]

    def endorsers_for(self, client_id: int) -> Tuple[str, ...]:
        """One peer per organization; clients are spread over peer indices."""
        x = client_id % self.peers_per_org
        return tuple(peer_id(o, x) for o in range(self.organizations))


def peer_id(org: int, idx: int) -> str:
    return f"peer{idx}.org{org}"


@dataclass
class CostModel:
    """Virtual service times in seconds.

    Simulation holds an endorsement slot for ``sim_base + reads * sim_per_read``.
    Validation of a block takes ``commit_base + n * validate_per_tx`` and needs
    one of the host's ``cores`` (shared by all channels on that host).
    """

    net_delay: float = 0.002
    sim_base: float = 0.001
    sim_per_read: float = 0.0002
    sim_slots: int = 16
    order_base: float = 0.001
    order_per_tx: float = 0.00001
    reorder_per_tx: float = 0.000002
    reorder_per_cycle: float = 0.0000005
    deliver_delay: float = 0.005
    deliver_jitter: float = 0.0
    commit_base: float = 0.010
    validate_per_tx: float = 0.0005
    cores: int = 4

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"costs.{f.name} must be non-negative")
        if self.sim_slots < 1 or self.cores < 1:
            raise ConfigError("sim_slots and cores must be >= 1")


def default_batch() -> BatchPolicy:
    return BatchPolicy(max_tx_count=1024, max_bytes=2 * 1024 * 1024, max_wait=1.0,
                       max_unique_keys=16384)


@dataclass
class RunConfig:
    mode: Mode = Mode.PLUSPLUS
    topology: NetworkTopology = field(default_factory=NetworkTopology)
    batch: BatchPolicy = field(default_factory=default_batch)
    workload: WorkloadParams = field(default_factory=WorkloadParams)
    costs: CostModel = field(default_factory=CostModel)
    rate: float = 512.0
    duration: float = 90.0
    seed: int = 0
    scheduler: str = "virtual"
    window: int = 1024
    cycle_search: str = SHORTEST
    sim_abort_rule: SimAbortRule = SimAbortRule.CONFIRMED
    mismatch_rule: str = STALE
    tamper_peers: Tuple[str, ...] = ()
    event_log: bool = False
    output: Optional[str] = None

    def validate(self) -> "RunConfig":
        if self.rate <= 0:
            raise ConfigError("rate must be positive")
        if self.duration < 0:
            raise ConfigError("duration must be non-negative")
        if self.scheduler not in ("virtual", "wall"):
            raise ConfigError(f"unknown scheduler {self.scheduler!r}")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.cycle_search not in (EXACT, SHORTEST):
            raise ConfigError(f"unknown cycle_search {self.cycle_search!r}")
        if self.mismatch_rule not in (FIRST_SEEN, STALE):
            raise ConfigError(f"unknown mismatch rule {self.mismatch_rule!r}")
        if self.topology.organizations < 1:
            raise ConfigError("need at least one organization")
        unknown = set(self.tamper_peers) - set(self.topology.peer_ids())
        if unknown:
            raise ConfigError(f"tamper_peers not in topology: {sorted(unknown)}")
        if self.workload.rw * 2 > self.workload.n_accounts:
            raise ConfigError("too few accounts for rw")
        return self

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


# --- INI loading ---------------------------------------------------------------

_SECTIONS = {
    "run": {"mode", "rate", "duration", "seed", "scheduler", "window", "cycle_search",
            "sim_abort_rule", "mismatch_rule", "tamper_peers", "event_log", "output"},
    "topology": {f.name for f in dataclasses.fields(NetworkTopology)},
    "batch": {"bs", "max_tx_count", "max_bytes", "max_wait", "max_unique_keys"},
    "workload": {"n_accounts", "rw", "hr", "hw", "hss", "hot_read_prob", "hot_write_prob",
                 "hot_set_fraction", "seed", "initial_balance", "max_amount"},
    "costs": {f.name for f in dataclasses.fields(CostModel)},
}

_WORKLOAD_ALIASES = {"hr": "hot_read_prob", "hw": "hot_write_prob", "hss": "hot_set_fraction"}


def parse_fraction(text) -> float:
    s = str(text).strip()
    try:
        return float(s[:-1]) / 100.0 if s.endswith("%") else float(s)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None


def _num(text, kind):
    try:
        return kind(str(text).strip())
    except ValueError:
        raise ConfigError(f"expected {kind.__name__}, got {text!r}") from None


def _bool(text) -> bool:
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def load_config(path=None, overrides: Optional[Dict[str, Dict[str, str]]] = None) -> RunConfig:
    """Build a RunConfig from an INI file plus ``{section: {key: value}}`` overrides."""
    # no interpolation, so percentages like "hr = 40%" are plain values
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    if path is not None:
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    sections: Dict[str, Dict[str, str]] = {s: dict(parser[s]) for s in parser.sections()}
    for sec, values in (overrides or {}).items():
        sections.setdefault(sec, {}).update({k: v for k, v in values.items() if v is not None})
    for sec, values in sections.items():
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
        bad = set(values) - _SECTIONS[sec]
        if bad:
            raise ConfigError(f"unknown keys in [{sec}]: {sorted(bad)}")
    return config_from_sections(sections)


def config_from_sections(sections: Dict[str, Dict[str, str]]) -> RunConfig:
    cfg = RunConfig()
    run = sections.get("run", {})
    if "mode" in run:
        cfg.mode = Mode.parse(run["mode"])
    for key, kind in (("rate", float), ("duration", float), ("seed", int),
                      ("window", int)):
        if key in run:
            setattr(cfg, key, _num(run[key], kind))
    for key in ("scheduler", "mismatch_rule", "cycle_search", "output"):
        if key in run:
            setattr(cfg, key, run[key].strip())
    if "sim_abort_rule" in run:
        try:
            cfg.sim_abort_rule = SimAbortRule(run["sim_abort_rule"].strip().lower())
        except ValueError:
            raise ConfigError(f"unknown sim_abort_rule {run['sim_abort_rule']!r}") from None
    if "tamper_peers" in run:
        cfg.tamper_peers = tuple(p.strip() for p in run["tamper_peers"].split(",") if p.strip())
    if "event_log" in run:
        cfg.event_log = _bool(run["event_log"])

    topo = sections.get("topology", {})
    cfg.topology = NetworkTopology(**{k: _num(v, int) for k, v in topo.items()})

    b = dict(sections.get("batch", {}))
    if "bs" in b:
        b["max_tx_count"] = b.pop("bs")
    kinds = {"max_tx_count": int, "max_bytes": int, "max_wait": float, "max_unique_keys": int}
    try:
        cfg.batch = dataclasses.replace(default_batch(),
                                        **{k: _num(v, kinds[k]) for k, v in b.items()})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    w = {_WORKLOAD_ALIASES.get(k, k): v for k, v in sections.get("workload", {}).items()}
    wkw = {}
    for k, v in w.items():
        if k in ("hot_read_prob", "hot_write_prob", "hot_set_fraction"):
            wkw[k] = parse_fraction(v)
        else:
            wkw[k] = _num(v, int)
    wkw.setdefault("seed", cfg.seed)
    try:
        cfg.workload = WorkloadParams(**wkw)
    except InvalidSpec as exc:
        raise ConfigError(str(exc)) from None

    costs = sections.get("costs", {})
    ckinds = {f.name: (int if f.type in ("int", int) else float)
              for f in dataclasses.fields(CostModel)}
    cfg.costs = CostModel(**{k: _num(v, ckinds[k]) for k, v in costs.items()})
    return cfg.validate()


# --- metrics -------------------------------------------------------------------

CSV_HEADER = "second,total,success,fail,ea_sim,ea_order"


@dataclass
class ChannelStats:
    channel: int
    fired: int = 0
    throttled: int = 0
    success: int = 0
    fail: int = 0
    endorse_mismatch: int = 0
    ea_sim: int = 0
    ea_order: int = 0
    blocks: int = 0

    @property
    def resolved(self) -> int:
        return self.success + self.fail + self.ea_sim + self.ea_order

    @property
    def in_flight(self) -> int:
        return self.fired - self.resolved


@dataclass
class RunMetrics:
    """Per-second counts at the reference peer plus run-level totals."""

    duration: int
    rows: List[Tuple[int, int, int, int, int, int]] = field(default_factory=list)
    channels: List[ChannelStats] = field(default_factory=list)
    violations: List[str] = field(default_factory=list)
    events: List[str] = field(default_factory=list)
    wall_seconds: float = 0.0
    max_lag: float = 0.0

    def _col(self, i):
        return sum(r[i] for r in self.rows)

    @property
    def total(self):
        return self._col(1)

    @property
    def success(self):
        return self._col(2)

    @property
    def fail(self):
        return self._col(3)

    @property
    def ea_sim(self):
        return self._col(4)

    @property
    def ea_order(self):
        return self._col(5)

    @property
    def fired(self):
        return sum(c.fired for c in self.channels)

    @property
    def in_flight(self):
        return sum(c.in_flight for c in self.channels)

    def mean(self, col: str) -> float:
        idx = CSV_HEADER.split(",").index(col)
        return self._col(idx) / self.duration if self.duration else 0.0

    @property
    def success_tps(self) -> float:
        return self.mean("success")

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        lines += [",".join(map(str, r)) for r in self.rows]
        totals = [self._col(i) for i in range(1, 6)]
        lines.append("summary," + ",".join(map(str, totals)))
        means = [f"{t / self.duration:.3f}" if self.duration else "0.000" for t in totals]
        lines.append("mean," + ",".join(means))
        return "\n".join(lines) + "\n"

    def summary(self) -> Dict[str, float]:
        return {
            "success": self.success, "fail": self.fail, "ea_sim": self.ea_sim,
            "ea_order": self.ea_order, "fired": self.fired, "in_flight": self.in_flight,
            "success_tps": round(self.success_tps, 3),
        }
