"""Command-line driver.

    blockpipe run        one experiment, per-second CSV
    blockpipe grid       the 108-point BS x RW x HR x HW x HSS sweep
    blockpipe breakdown  the four modes side by side
    blockpipe scale      channel / client sweeps
    blockpipe microbench the stand-alone reordering benchmarks

Exit codes: 0 ok, 2 bad configuration, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import gc
import itertools
import logging
import os
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .config import RunConfig, load_config, parse_fraction
from .model import BlockpipeError, ConfigError, InvalidSpec, Mode
from .orderer import reorder
from .pipeline import run_detailed
from .workload import CYCLE_GROUPS, INTERLEAVED_RW, SequenceSpec, mvcc_replay_oracle

log = logging.getLogger("blockpipe")

OUT_ENV = "BLOCKPIPE_OUT"

GRID = {
    "bs": (256, 512, 1024),
    "rw": (4, 8),
    "hr": (0.10, 0.20, 0.40),
    "hw": (0.05, 0.10),
    "hss": (0.01, 0.02, 0.04),
}
BREAKDOWN_MODES = (Mode.VANILLA, Mode.REORDER_ONLY, Mode.EARLY_ABORT_ONLY, Mode.PLUSPLUS)
MICRO_HEADER = "param,valid_arrival,valid_reordered,reorder_time_ms"


def out_dir(arg: Optional[str]) -> Path:
    path = Path(arg or os.environ.get(OUT_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _overrides(args) -> Dict[str, Dict[str, str]]:
    ov: Dict[str, Dict[str, Optional[str]]] = {
        "run": {"mode": args.mode, "duration": args.duration, "seed": args.seed,
                "rate": args.rate, "scheduler": args.scheduler, "window": args.window},
        "topology": {"channels": args.channels, "clients_per_channel": args.clients},
        "batch": {"bs": args.bs},
        "workload": {"rw": args.rw, "hr": args.hr, "hw": args.hw, "hss": args.hss,
                     "n_accounts": args.accounts},
    }
    return {sec: {k: str(v) for k, v in vals.items() if v is not None}
            for sec, vals in ov.items()}


def build_config(args) -> RunConfig:
    return load_config(args.config, _overrides(args))


def _tag(cfg: RunConfig) -> str:
    w = cfg.workload
    return (f"{cfg.mode.value}_bs{cfg.batch.max_tx_count}_rw{w.rw}"
            f"_hr{round(w.hot_read_prob * 100)}_hw{round(w.hot_write_prob * 100)}"
            f"_hss{round(w.hot_set_fraction * 100)}")


def run_experiment(cfg: RunConfig, dest: Path, name: Optional[str] = None,
                   dumps: bool = False):
    """Run one configuration and write ``<name>.csv`` (plus optional dumps)."""
    metrics, channels = run_detailed(cfg)
    name = name or _tag(cfg)
    (dest / f"{name}.csv").write_text(metrics.to_csv())
    if cfg.event_log:
        (dest / f"{name}.events").write_text("\n".join(metrics.events) + "\n")
    if dumps:
        ref = channels[0].reference
        (dest / f"{name}.ledger").write_text(ref.ledger.dump())
        (dest / f"{name}.state").write_text(ref.store.dump())
    for v in metrics.violations:
        log.error("invariant violated: %s", v)
    if metrics.violations:
        raise RuntimeError(f"{len(metrics.violations)} invariant violations")
    return metrics


def _print_summary(label: str, m) -> None:
    s = m.summary()
    print(f"{label}: success={s['success']} fail={s['fail']} ea_sim={s['ea_sim']} "
          f"ea_order={s['ea_order']} in_flight={s['in_flight']} "
          f"success_tps={s['success_tps']:.1f}")


# --- verbs ---------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = build_config(args)
    if args.events:
        cfg.event_log = True
    dest = out_dir(args.out)
    m = run_experiment(cfg, dest, args.name, dumps=args.dump)
    _print_summary(_tag(cfg), m)
    return 0


def _grid_values(args):
    pick = lambda given, key: given if given else GRID[key]  # noqa: E731
    return list(itertools.product(pick(args.bs_list, "bs"), pick(args.rw_list, "rw"),
                                  pick(args.hr_list, "hr"), pick(args.hw_list, "hw"),
                                  pick(args.hss_list, "hss")))


def cmd_grid(args) -> int:
    base = build_config(args)
    dest = out_dir(args.out)
    points = _grid_values(args)
    rows = ["mode,bs,rw,hr,hw,hss,seed,success,fail,ea_sim,ea_order,success_tps"]
    for i, (bs, rw, hr, hw, hss) in enumerate(points):
        seed = base.seed + i if not args.same_seed else base.seed
        w = dataclasses.replace(base.workload, rw=rw, hot_read_prob=hr, hot_write_prob=hw,
                                hot_set_fraction=hss, seed=seed)
        b = dataclasses.replace(base.batch, max_tx_count=bs)
        for mode in args.modes:
            cfg = base.replace(mode=mode, batch=b, workload=w, seed=seed)
            m = run_experiment(cfg, dest)
            s = m.summary()
            rows.append(f"{mode.value},{bs},{rw},{hr},{hw},{hss},{seed},{s['success']},"
                        f"{s['fail']},{s['ea_sim']},{s['ea_order']},{s['success_tps']}")
            _print_summary(_tag(cfg), m)
    (dest / "grid_summary.csv").write_text("\n".join(rows) + "\n")
    return 0


def cmd_breakdown(args) -> int:
    base = build_config(args)
    dest = out_dir(args.out)
    rows = ["mode,success,fail,ea_sim,ea_order,success_tps"]
    for mode in BREAKDOWN_MODES:
        cfg = base.replace(mode=mode)
        m = run_experiment(cfg, dest)
        s = m.summary()
        rows.append(f"{mode.value},{s['success']},{s['fail']},{s['ea_sim']},"
                    f"{s['ea_order']},{s['success_tps']}")
        _print_summary(mode.value, m)
    (dest / "breakdown.csv").write_text("\n".join(rows) + "\n")
    return 0


def cmd_scale(args) -> int:
    base = build_config(args)
    dest = out_dir(args.out)
    rows = ["mode,channels,clients,success,fail,success_tps,fail_tps"]
    for mode in args.modes:
        for ch in args.channel_list:
            for cl in args.client_list:
                topo = dataclasses.replace(base.topology, channels=ch, clients_per_channel=cl)
                cfg = base.replace(mode=mode, topology=topo)
                m = run_experiment(cfg, dest, f"scale_{mode.value}_ch{ch}_cl{cl}")
                s = m.summary()
                rows.append(f"{mode.value},{ch},{cl},{s['success']},{s['fail']},"
                            f"{s['success_tps']},{m.mean('fail'):.3f}")
                _print_summary(f"{mode.value} channels={ch} clients={cl}", m)
    (dest / "scale.csv").write_text("\n".join(rows) + "\n")
    return 0


def microbench_rows(family: str, n: int, params: Sequence[int], repeat: int = 1):
    """(param, valid_arrival, valid_reordered, reorder_time_ms) per point."""
    rows = []
    for p in params:
        txs = SequenceSpec(family, n, p).build()
        arrival = sum(mvcc_replay_oracle(txs))
        best = float("inf")
        for _ in range(max(1, repeat)):
            # like timeit: keep collector pauses out of the measurement
            gc.collect()
            gc.disable()
            try:
                t0 = time.perf_counter()
                res = reorder(txs, Mode.PLUSPLUS)
                best = min(best, time.perf_counter() - t0)
            finally:
                gc.enable()
        rows.append((p, arrival, sum(mvcc_replay_oracle(res.txs)), best * 1000.0))
    return rows


def cmd_microbench(args) -> int:
    family = {"interleaved": INTERLEAVED_RW, "1": INTERLEAVED_RW,
              "cycles": CYCLE_GROUPS, "2": CYCLE_GROUPS}[args.family]
    if args.param:
        params = args.param
    elif family == INTERLEAVED_RW:
        params = list(range(1, args.n // 2 + 2))
    else:
        params = [t for t in (2, 4, 8, 16, 32) if args.n % t == 0]
    rows = microbench_rows(family, args.n, params, args.repeat)
    text = MICRO_HEADER + "\n" + "".join(f"{p},{a},{r},{ms:.3f}\n" for p, a, r, ms in rows)
    dest = out_dir(args.out)
    (dest / f"microbench_{family}_n{args.n}.csv").write_text(text)
    sys.stdout.write(text)
    return 0


# --- parser --------------------------------------------------------------------

def _mode(text: str) -> Mode:
    try:
        return Mode.parse(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _fraction(text: str) -> float:
    try:
        return parse_fraction(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    p.add_argument("--mode")
    p.add_argument("--duration", type=float, help="seconds of firing")
    p.add_argument("--seed", type=int)
    p.add_argument("--rate", type=float, help="proposals per second per client")
    p.add_argument("--window", type=int, help="max outstanding proposals per client")
    p.add_argument("--scheduler", choices=("virtual", "wall"))
    p.add_argument("--channels", type=int)
    p.add_argument("--clients", type=int, help="clients per channel")
    p.add_argument("--accounts", type=int)
    p.add_argument("--bs", type=int, help="max transactions per block")
    p.add_argument("--rw", type=int, help="balances read and written per transaction")
    p.add_argument("--hr", help="hot read probability, e.g. 0.4 or 40%%")
    p.add_argument("--hw", help="hot write probability")
    p.add_argument("--hss", help="hot set size as a fraction of accounts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockpipe", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="run one experiment")
    _common(p)
    p.add_argument("--name", help="output file stem")
    p.add_argument("--events", action="store_true", help="write the event log")
    p.add_argument("--dump", action="store_true", help="write ledger and state dumps")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("grid", help="throughput sweep")
    _common(p)
    p.add_argument("--modes", nargs="+", type=_mode, default=[Mode.VANILLA, Mode.PLUSPLUS])
    p.add_argument("--bs-list", nargs="+", type=int)
    p.add_argument("--rw-list", nargs="+", type=int)
    p.add_argument("--hr-list", nargs="+", type=_fraction)
    p.add_argument("--hw-list", nargs="+", type=_fraction)
    p.add_argument("--hss-list", nargs="+", type=_fraction)
    p.add_argument("--same-seed", action="store_true", help="reuse one seed for all points")
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("breakdown", help="vanilla / reorder / early abort / both")
    _common(p)
    p.set_defaults(fn=cmd_breakdown)

    p = sub.add_parser("scale", help="channel and client sweeps")
    _common(p)
    p.add_argument("--modes", nargs="+", type=_mode, default=[Mode.VANILLA, Mode.PLUSPLUS])
    p.add_argument("--channel-list", nargs="+", type=int, default=[1, 2, 4, 8])
    p.add_argument("--client-list", nargs="+", type=int, default=[4])
    p.set_defaults(fn=cmd_scale)

    p = sub.add_parser("microbench", help="stand-alone reordering benchmark")
    p.add_argument("--family", choices=("interleaved", "cycles", "1", "2"),
                   default="interleaved")
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--param", nargs="+", type=int, help="shift i or cycle length t")
    p.add_argument("--repeat", type=int, default=1, help="timing repetitions (min taken)")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_microbench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, InvalidSpec) as exc:
        print(f"blockpipe: configuration error: {exc}", file=sys.stderr)
        return 2
    except (BlockpipeError, RuntimeError, OSError) as exc:
        print(f"blockpipe: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
