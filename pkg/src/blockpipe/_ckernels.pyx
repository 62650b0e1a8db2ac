# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled reordering kernels; same contract as ``_pykernels``."""
from libc.stdlib cimport malloc, calloc, free
from libc.string cimport memset
from libc.stdint cimport uint64_t, int64_t

from . import _pykernels

cdef extern from *:
    int __builtin_ctzll(unsigned long long) nogil

# Components above this size go to the pure-Python search (the blocked-map
# bit matrix below is quadratic in component size).
cdef int MAX_BITMAP_NODES = 16384


cdef inline int _ctz(uint64_t x) nogil:
    return __builtin_ctzll(x)


def conflict_successors(read_idx, write_idx, Py_ssize_t n_keys):
    cdef Py_ssize_t n = len(read_idx)
    cdef Py_ssize_t words = (n + 63) // 64
    cdef Py_ssize_t i, j, k, w
    cdef uint64_t *writers
    cdef uint64_t *row
    cdef uint64_t bits
    if n == 0:
        return []
    writers = <uint64_t *> calloc(max(n_keys, 1) * words, sizeof(uint64_t))
    row = <uint64_t *> malloc(words * sizeof(uint64_t))
    if writers == NULL or row == NULL:
        free(writers)
        free(row)
        raise MemoryError()
    try:
        for j in range(n):
            for k in write_idx[j]:
                writers[k * words + (j >> 6)] |= (<uint64_t> 1) << (j & 63)
        succ = []
        for i in range(n):
            memset(row, 0, words * sizeof(uint64_t))
            for k in read_idx[i]:
                for w in range(words):
                    row[w] |= writers[k * words + w]
            row[i >> 6] &= ~((<uint64_t> 1) << (i & 63))
            out = []
            for w in range(words):
                bits = row[w]
                while bits:
                    out.append(w * 64 + _ctz(bits))
                    bits &= bits - 1
            succ.append(out)
        return succ
    finally:
        free(writers)
        free(row)


cdef struct CSR:
    int n
    int *off
    int *tgt


cdef int _build_csr(CSR *g, succ, alive) except -1:
    cdef int n = len(succ)
    cdef int v, e = 0
    g.n = n
    g.off = <int *> malloc((n + 1) * sizeof(int))
    if g.off == NULL:
        raise MemoryError()
    total = 0
    for adj in succ:
        total += len(adj)
    g.tgt = <int *> malloc(max(total, 1) * sizeof(int))
    if g.tgt == NULL:
        free(g.off)
        raise MemoryError()
    for v in range(n):
        g.off[v] = e
        for w in succ[v]:
            if alive is None or alive[w]:
                g.tgt[e] = w
                e += 1
    g.off[n] = e
    return 0


cdef void _free_csr(CSR *g):
    free(g.off)
    free(g.tgt)


def strongly_connected(succ, alive=None):
    cdef CSR g
    cdef int n = len(succ)
    cdef int root, v, w, u, counter = 0, sp = 0, wp = 0
    cdef int *index
    cdef int *low
    cdef int *stack
    cdef int *wnode
    cdef int *wpos
    cdef char *on
    cdef char *live
    if n == 0:
        return []
    _build_csr(&g, succ, alive)
    index = <int *> malloc(n * sizeof(int))
    low = <int *> malloc(n * sizeof(int))
    stack = <int *> malloc(n * sizeof(int))
    wnode = <int *> malloc(n * sizeof(int))
    wpos = <int *> malloc(n * sizeof(int))
    on = <char *> calloc(n, 1)
    live = <char *> malloc(n)
    comps = []
    try:
        for v in range(n):
            index[v] = -1
            live[v] = 1 if (alive is None or alive[v]) else 0
        for root in range(n):
            if index[root] != -1 or not live[root]:
                continue
            index[root] = counter
            low[root] = counter
            counter += 1
            stack[sp] = root
            sp += 1
            on[root] = 1
            wnode[0] = root
            wpos[0] = g.off[root]
            wp = 1
            while wp > 0:
                v = wnode[wp - 1]
                descended = False
                while wpos[wp - 1] < g.off[v + 1]:
                    w = g.tgt[wpos[wp - 1]]
                    wpos[wp - 1] += 1
                    if index[w] == -1:
                        index[w] = counter
                        low[w] = counter
                        counter += 1
                        stack[sp] = w
                        sp += 1
                        on[w] = 1
                        wnode[wp] = w
                        wpos[wp] = g.off[w]
                        wp += 1
                        descended = True
                        break
                    if on[w] and index[w] < low[v]:
                        low[v] = index[w]
                if descended:
                    continue
                wp -= 1
                if wp > 0:
                    u = wnode[wp - 1]
                    if low[v] < low[u]:
                        low[u] = low[v]
                if low[v] == index[v]:
                    comp = []
                    while True:
                        sp -= 1
                        w = stack[sp]
                        on[w] = 0
                        comp.append(w)
                        if w == v:
                            break
                    comp.sort()
                    comps.append(comp)
    finally:
        free(index)
        free(low)
        free(stack)
        free(wnode)
        free(wpos)
        free(on)
        free(live)
        _free_csr(&g)
    comps.sort(key=lambda c: c[0])
    return comps


def elementary_cycles(succ, component, long per_start_limit=0):
    cdef list members = sorted(component)
    cdef int m = len(members)
    cdef int words, s, v, w, x, i, e, depth, top, found
    cdef int *off
    cdef int *tgt
    cdef int *path
    cdef int *pos
    cdef int *todo
    cdef char *closed
    cdef char *blocked
    cdef uint64_t *bmap
    cdef uint64_t bits
    cdef bint advanced, f
    if m == 0:
        return []
    if m > MAX_BITMAP_NODES:
        return _pykernels.elementary_cycles(succ, component, per_start_limit)
    local = {g: i for i, g in enumerate(members)}
    words = (m + 63) // 64
    off = <int *> malloc((m + 1) * sizeof(int))
    path = <int *> malloc(m * sizeof(int))
    pos = <int *> malloc(m * sizeof(int))
    todo = <int *> malloc((m + 1) * sizeof(int))
    closed = <char *> malloc(m)
    blocked = <char *> malloc(m)
    bmap = <uint64_t *> malloc(<size_t> m * words * sizeof(uint64_t))
    adj = []
    total = 0
    for g in members:
        row = sorted(local[t] for t in succ[g] if t in local)
        adj.append(row)
        total += len(row)
    tgt = <int *> malloc(max(total, 1) * sizeof(int))
    cycles = []
    try:
        if (off == NULL or path == NULL or pos == NULL or todo == NULL or closed == NULL
                or blocked == NULL or bmap == NULL or tgt == NULL):
            raise MemoryError()
        e = 0
        for v in range(m):
            off[v] = e
            for w in adj[v]:
                tgt[e] = w
                e += 1
        off[m] = e
        for s in range(m):
            memset(blocked + s, 0, m - s)
            memset(bmap + <size_t> s * words, 0, <size_t> (m - s) * words * sizeof(uint64_t))
            found = 0
            depth = 1
            path[0] = s
            pos[0] = off[s]
            closed[0] = 0
            blocked[s] = 1
            while depth > 0:
                v = path[depth - 1]
                advanced = False
                while pos[depth - 1] < off[v + 1]:
                    w = tgt[pos[depth - 1]]
                    pos[depth - 1] += 1
                    if w < s:
                        continue
                    if w == s:
                        cycles.append([members[path[i]] for i in range(depth)])
                        found += 1
                        closed[depth - 1] = 1
                        if per_start_limit and found >= per_start_limit:
                            break
                    elif not blocked[w]:
                        path[depth] = w
                        pos[depth] = off[w]
                        closed[depth] = 0
                        blocked[w] = 1
                        depth += 1
                        advanced = True
                        break
                if per_start_limit and found >= per_start_limit:
                    break
                if advanced:
                    continue
                depth -= 1
                f = closed[depth]
                if f:
                    # unblock closure; each node is queued at most once
                    blocked[v] = 0
                    todo[0] = v
                    top = 1
                    while top > 0:
                        top -= 1
                        x = todo[top]
                        for i in range(words):
                            bits = bmap[<size_t> x * words + i]
                            while bits:
                                w = i * 64 + _ctz(bits)
                                if blocked[w]:
                                    blocked[w] = 0
                                    todo[top] = w
                                    top += 1
                                bits &= bits - 1
                            bmap[<size_t> x * words + i] = 0
                else:
                    for i in range(off[v], off[v + 1]):
                        w = tgt[i]
                        if w >= s:
                            bmap[<size_t> w * words + (v >> 6)] |= (<uint64_t> 1) << (v & 63)
                if depth > 0 and f:
                    closed[depth - 1] = 1
    finally:
        free(off)
        free(tgt)
        free(path)
        free(pos)
        free(todo)
        free(closed)
        free(blocked)
        free(bmap)
    return cycles


def shortest_cycles(succ, component):
    cdef list members = sorted(component)
    cdef int m = len(members)
    cdef int s, v, w, i, e, head, tail, closing
    cdef int *off
    cdef int *tgt
    cdef int *parent
    cdef int *queue
    if m == 0:
        return []
    local = {g: i for i, g in enumerate(members)}
    adj = []
    total = 0
    for g in members:
        row = sorted(local[t] for t in succ[g] if t in local)
        adj.append(row)
        total += len(row)
    off = <int *> malloc((m + 1) * sizeof(int))
    tgt = <int *> malloc(max(total, 1) * sizeof(int))
    parent = <int *> malloc(m * sizeof(int))
    queue = <int *> malloc(m * sizeof(int))
    cycles = []
    seen = set()
    try:
        if off == NULL or tgt == NULL or parent == NULL or queue == NULL:
            raise MemoryError()
        e = 0
        for v in range(m):
            off[v] = e
            for w in adj[v]:
                tgt[e] = w
                e += 1
        off[m] = e
        for s in range(m):
            for v in range(m):
                parent[v] = -2
            parent[s] = -1
            queue[0] = s
            head = 0
            tail = 1
            closing = -1
            while head < tail and closing < 0:
                v = queue[head]
                head += 1
                for i in range(off[v], off[v + 1]):
                    w = tgt[i]
                    if w == s:
                        closing = v
                        break
                    if parent[w] == -2:
                        parent[w] = v
                        queue[tail] = w
                        tail += 1
            if closing < 0:
                continue
            path = []
            v = closing
            while v != -1:
                path.append(members[v])
                v = parent[v]
            path.reverse()
            i = path.index(min(path))
            key = tuple(path[i:] + path[:i])
            if key not in seen:
                seen.add(key)
                cycles.append(path)
    finally:
        free(off)
        free(tgt)
        free(parent)
        free(queue)
    return cycles
