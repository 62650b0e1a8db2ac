"""Compare the compiled and pure-Python reordering kernels.

Times each kernel on generated conflict graphs, then the whole PlusPlus
reorder on the two micro-benchmark families and on a contended batch, once
per backend. Prints a table and optionally writes CSV.

    python benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv]
"""
import argparse
import contextlib
import csv
import gc
import random
import sys
import time

from blockpipe import kernels
from blockpipe.model import Mode, make_transaction
from blockpipe.orderer import SHORTEST, reorder
from blockpipe.workload import CYCLE_GROUPS, INTERLEAVED_RW, SequenceSpec

NAMES = ("conflict_successors", "strongly_connected", "elementary_cycles", "shortest_cycles")


@contextlib.contextmanager
def use_backend(mod):
    saved = {n: getattr(kernels, n) for n in NAMES}
    for n in NAMES:
        setattr(kernels, n, getattr(mod, n))
    try:
        yield
    finally:
        for n, fn in saved.items():
            setattr(kernels, n, fn)


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        gc.collect()
        gc.disable()
        try:
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        finally:
            gc.enable()
    return best * 1000.0


def random_sets(rng, n_tx, n_keys, per_tx):
    reads = [rng.sample(range(n_keys), per_tx) for _ in range(n_tx)]
    writes = [rng.sample(range(n_keys), per_tx) for _ in range(n_tx)]
    return reads, writes


def contended_batch(rng, n_tx=1024, hot=100, cold=10000, rw=8, p_hot=0.4):
    txs = []
    for i in range(n_tx):
        def pick():
            return f"h{rng.randrange(hot)}" if rng.random() < p_hot else f"c{rng.randrange(cold)}"
        reads = {pick() for _ in range(rw)}
        writes = {pick() for _ in range(rw)}
        txs.append(make_transaction(i, [(k, (0, 0)) for k in reads], {k: 1 for k in writes}))
    return txs


def cases(rng):
    reads, writes = random_sets(rng, 1024, 4096, 8)
    dense = [[j for j in range(12) if j != i and rng.random() < 0.5] for i in range(12)]
    sparse_r, sparse_w = random_sets(rng, 512, 2048, 2)
    yield "conflict_successors 1024tx/4096k", \
        lambda: kernels.conflict_successors(reads, writes, 4096)
    succ = kernels.available_backends()["python"].conflict_successors(sparse_r, sparse_w, 2048)
    yield "strongly_connected 512 nodes", lambda: kernels.strongly_connected(succ, None)
    comps = [c for c in kernels.available_backends()["python"].strongly_connected(dense, None)
             if len(c) > 1]
    yield "elementary_cycles dense 12", \
        lambda: [kernels.elementary_cycles(dense, c, 0) for c in comps]
    big = [c for c in kernels.available_backends()["python"].strongly_connected(succ, None)
           if len(c) > 1]
    yield "shortest_cycles 512 nodes", \
        lambda: [kernels.shortest_cycles(succ, c) for c in big]
    inter = SequenceSpec(INTERLEAVED_RW, 1024, 257).build()
    groups = SequenceSpec(CYCLE_GROUPS, 1024, 32).build()
    batch = contended_batch(rng)
    yield "reorder interleaved n=1024", lambda: reorder(inter, Mode.PLUSPLUS)
    yield "reorder cycles n=1024 t=32", lambda: reorder(groups, Mode.PLUSPLUS)
    yield "reorder contended 1024", \
        lambda: reorder(batch, Mode.PLUSPLUS, cycle_search=SHORTEST)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", help="also write results here")
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; timing the Python backend only", file=sys.stderr)
    rows = []
    for label, fn in cases(random.Random(args.seed)):
        row = {"case": label}
        for name, mod in backends.items():
            with use_backend(mod):
                row[name] = best_of(fn, args.repeat)
        rows.append(row)

    names = list(backends)
    head = f"{'case':34s}" + "".join(f"{n + ' ms':>12s}" for n in names)
    if len(names) == 2:
        head += f"{'speedup':>10s}"
    print(head)
    for r in rows:
        line = f"{r['case']:34s}" + "".join(f"{r[n]:12.3f}" for n in names)
        if len(names) == 2:
            line += f"{r['python'] / r['cython']:9.1f}x"
        print(line)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["case", *names])
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
