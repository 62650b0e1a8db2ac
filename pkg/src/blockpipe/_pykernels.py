"""Pure-Python reordering kernels (fallback for ``_ckernels``).

Both modules expose the same three functions and must return identical
results; ``blockpipe.kernels`` picks one at import time.
"""
from __future__ import annotations

from typing import List, Optional, Sequence


def conflict_successors(read_idx: Sequence[Sequence[int]],
                        write_idx: Sequence[Sequence[int]],
                        n_keys: int) -> List[List[int]]:
    """succ[i] = sorted {j != i : read-vector(i) & write-vector(j) != 0}.

    Evaluated column-wise: per key, a bit-vector over transactions marking its
    writers; a reader's row is the OR of the writer vectors of its keys.
    """
    writers = [0] * n_keys
    for j, keys in enumerate(write_idx):
        bit = 1 << j
        for k in keys:
            writers[k] |= bit
    succ = []
    for i, keys in enumerate(read_idx):
        row = 0
        for k in keys:
            row |= writers[k]
        row &= ~(1 << i)
        out = []
        while row:
            low = row & -row
            out.append(low.bit_length() - 1)
            row ^= low
        succ.append(out)
    return succ


def strongly_connected(succ: Sequence[Sequence[int]],
                       alive: Optional[bytes] = None) -> List[List[int]]:
    """Tarjan's SCCs over nodes with ``alive[v]`` set (all nodes if None).

    Components are returned with members ascending, ordered by smallest member.
    """
    n = len(succ)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: List[int] = []
    comps: List[List[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1 or (alive is not None and not alive[root]):
            continue
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        work = [[root, 0]]
        while work:
            frame = work[-1]
            v = frame[0]
            adj = succ[v]
            descended = False
            while frame[1] < len(adj):
                w = adj[frame[1]]
                frame[1] += 1
                if alive is not None and not alive[w]:
                    continue
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append([w, 0])
                    descended = True
                    break
                if on_stack[w] and index[w] < low[v]:
                    low[v] = index[w]
            if descended:
                continue
            work.pop()
            if work:
                u = work[-1][0]
                if low[v] < low[u]:
                    low[u] = low[v]
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comp.sort()
                comps.append(comp)
    comps.sort(key=lambda c: c[0])
    return comps


def elementary_cycles(succ: Sequence[Sequence[int]], component: Sequence[int],
                      per_start_limit: int = 0) -> List[List[int]]:
    """Johnson's circuit enumeration inside one strongly connected component.

    For each start node s (ascending) the search is restricted to component
    nodes >= s, so every cycle is reported once, rotated to begin at its
    smallest node. ``per_start_limit`` > 0 stops the search from one start
    node after that many cycles.
    """
    members = sorted(component)
    in_comp = set(members)
    local = {v: [w for w in succ[v] if w in in_comp] for v in members}
    cycles: List[List[int]] = []
    for s in members:
        nbrs = {v: [w for w in local[v] if w >= s] for v in members if v >= s}
        blocked = {s}
        bmap = {}
        path = [s]
        iters = [iter(nbrs[s])]
        closed = [False]
        found = 0
        while iters:
            v = path[-1]
            advanced = False
            for w in iters[-1]:
                if w == s:
                    cycles.append(path[:])
                    found += 1
                    closed[-1] = True
                    if per_start_limit and found >= per_start_limit:
                        break
                elif w not in blocked:
                    path.append(w)
                    blocked.add(w)
                    iters.append(iter(nbrs[w]))
                    closed.append(False)
                    advanced = True
                    break
            if per_start_limit and found >= per_start_limit:
                break
            if advanced:
                continue
            iters.pop()
            path.pop()
            f = closed.pop()
            if f:
                todo = [v]
                while todo:
                    x = todo.pop()
                    if x in blocked:
                        blocked.discard(x)
                        todo.extend(bmap.pop(x, ()))
            else:
                for w in nbrs[v]:
                    bmap.setdefault(w, set()).add(v)
            if closed:
                closed[-1] = closed[-1] or f
    return cycles


def shortest_cycles(succ: Sequence[Sequence[int]], component: Sequence[int]) -> List[List[int]]:
    """For each node of ``component``, one shortest cycle through it.

    Breadth-first search from the node inside the component, neighbors in
    ascending order; duplicates (same cycle up to rotation) are dropped.
    Returns cycles in global ids, start node first.
    """
    members = sorted(component)
    inside = set(members)
    seen_cycles = set()
    cycles = []
    for s in members:
        parent = {s: -1}
        frontier = [s]
        closing = -1
        while frontier and closing < 0:
            nxt = []
            for v in frontier:
                for w in sorted(succ[v]):
                    if w == s:
                        closing = v
                        break
                    if w in inside and w not in parent:
                        parent[w] = v
                        nxt.append(w)
                if closing >= 0:
                    break
            frontier = nxt
        if closing < 0:
            continue
        path = []
        v = closing
        while v != -1:
            path.append(v)
            v = parent[v]
        path.reverse()
        i = path.index(min(path))
        key = tuple(path[i:] + path[:i])
        if key not in seen_cycles:
            seen_cycles.add(key)
            cycles.append(path)
    return cycles
