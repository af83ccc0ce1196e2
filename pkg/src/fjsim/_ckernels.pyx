# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernels.

Line-for-line mirror of ``_pykernels``: same event ordering, same draw
order, same floating-point expressions, so results are bit-identical.
"""
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport log, pow, NAN
from libc.stdlib cimport malloc, realloc, free
from libc.string cimport memset
from numpy.random cimport bitgen_t

import numpy as np

cdef int EXP = 0, PARETO = 1, DET = 2, CORR = 3
cdef int RANDOM = 0, POD = 1, LWL = 2
cdef int METRIC_JOBS = 0
cdef int ARRIVAL = -1


cdef bitgen_t* _bitgen(object bit_generator) except NULL:
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid bit generator capsule")
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef struct Heap:
    double* t
    long long* seq
    int* kind
    Py_ssize_t size
    Py_ssize_t cap
    long long counter


cdef inline bint _less(Heap* h, Py_ssize_t a, Py_ssize_t b) nogil:
    if h.t[a] < h.t[b]:
        return True
    if h.t[a] > h.t[b]:
        return False
    return h.seq[a] < h.seq[b]


cdef inline void _swap(Heap* h, Py_ssize_t a, Py_ssize_t b) nogil:
    cdef double tt = h.t[a]
    cdef long long ss = h.seq[a]
    cdef int kk = h.kind[a]
    h.t[a] = h.t[b]; h.seq[a] = h.seq[b]; h.kind[a] = h.kind[b]
    h.t[b] = tt; h.seq[b] = ss; h.kind[b] = kk


cdef int _heap_init(Heap* h, Py_ssize_t cap) nogil:
    h.t = <double*> malloc(cap * sizeof(double))
    h.seq = <long long*> malloc(cap * sizeof(long long))
    h.kind = <int*> malloc(cap * sizeof(int))
    h.size = 0
    h.cap = cap
    h.counter = 0
    if h.t == NULL or h.seq == NULL or h.kind == NULL:
        return -1
    return 0


cdef void _heap_free(Heap* h) nogil:
    free(h.t); free(h.seq); free(h.kind)


cdef long long _heap_push(Heap* h, double t, int kind) nogil:
    cdef Py_ssize_t i, parent
    if h.size == h.cap:
        h.cap *= 2
        h.t = <double*> realloc(h.t, h.cap * sizeof(double))
        h.seq = <long long*> realloc(h.seq, h.cap * sizeof(long long))
        h.kind = <int*> realloc(h.kind, h.cap * sizeof(int))
        if h.t == NULL or h.seq == NULL or h.kind == NULL:
            return -1
    i = h.size
    h.size += 1
    h.t[i] = t
    h.seq[i] = h.counter
    h.kind[i] = kind
    h.counter += 1
    while i > 0:
        parent = (i - 1) >> 1
        if _less(h, i, parent):
            _swap(h, i, parent)
            i = parent
        else:
            break
    return h.seq[i]


cdef void _heap_pop(Heap* h, double* t, long long* seq, int* kind) nogil:
    cdef Py_ssize_t i = 0, l, r, m
    t[0] = h.t[0]; seq[0] = h.seq[0]; kind[0] = h.kind[0]
    h.size -= 1
    if h.size == 0:
        return
    h.t[0] = h.t[h.size]; h.seq[0] = h.seq[h.size]; h.kind[0] = h.kind[h.size]
    while True:
        l = 2 * i + 1
        r = l + 1
        m = i
        if l < h.size and _less(h, l, m):
            m = l
        if r < h.size and _less(h, r, m):
            m = r
        if m == i:
            break
        _swap(h, i, m)
        i = m


cdef inline double _u(bitgen_t* rng) nogil:
    return rng.next_double(rng.state)


cdef struct FJ:
    int n, k, groups, code, cancel, policy, d, metric
    double lam, p1, p2, task_mean
    Py_ssize_t horizon
    bitgen_t* rng
    Heap heap
    double* xd
    char* joined
    int* done
    long long* nxt
    long long* head
    long long* cur
    long long* qseq
    long long* backlog
    long long* tail
    long long* in_group
    int* perm
    long long* scratch
    long long npreempt


cdef inline double _draw(FJ* s, long long j) nogil:
    cdef double u
    if s.code == EXP:
        u = _u(s.rng)
        return -log(1.0 - u) / s.p1
    if s.code == PARETO:
        u = _u(s.rng)
        return s.p1 * pow(1.0 - u, -1.0 / s.p2)
    if s.code == DET:
        return s.p1
    u = _u(s.rng)
    return s.p2 * s.xd[j] + (1.0 - s.p2) * (-log(1.0 - u) / s.p1)


cdef int _start(FJ* s, int q, double t) nogil:
    cdef long long j = s.head[q]
    cdef double d
    if s.cancel:
        while j != -1 and s.joined[j]:
            j = s.nxt[j]
    if j == -1:
        s.head[q] = -1
        s.cur[q] = -1
        s.qseq[q] = -1
        return 0
    s.head[q] = s.nxt[j]
    s.cur[q] = j
    d = _draw(s, j)
    s.qseq[q] = _heap_push(&s.heap, t + d, q)
    if s.qseq[q] < 0:
        return -1
    return 0


cdef double _load(FJ* s, int g) nogil:
    cdef int i, a, b
    cdef long long tmp
    if s.metric == METRIC_JOBS:
        return <double> s.in_group[g]
    for i in range(s.n):
        s.scratch[i] = s.backlog[g * s.n + i]
    # insertion sort; n is small
    for a in range(1, s.n):
        tmp = s.scratch[a]
        b = a - 1
        while b >= 0 and s.scratch[b] > tmp:
            s.scratch[b + 1] = s.scratch[b]
            b -= 1
        s.scratch[b + 1] = tmp
    return s.task_mean * s.scratch[s.k - 1]


cdef int _choose(FJ* s) nogil:
    cdef int g, i, j, tmp, best
    cdef double v, bestv
    if s.groups == 1:
        return 0
    if s.policy == RANDOM:
        g = <int> (_u(s.rng) * s.groups)
        return g if g < s.groups else s.groups - 1
    if s.policy == POD and s.d < s.groups:
        for i in range(s.groups):
            s.perm[i] = i
        for i in range(s.d):
            j = i + <int> (_u(s.rng) * (s.groups - i))
            if j >= s.groups:
                j = s.groups - 1
            tmp = s.perm[i]; s.perm[i] = s.perm[j]; s.perm[j] = tmp
        best = -1
        bestv = 0.0
        for i in range(s.d):
            g = s.perm[i]
            v = _load(s, g)
            if best == -1 or v < bestv or (v == bestv and g < best):
                best = g
                bestv = v
        return best
    best = 0
    bestv = _load(s, 0)
    for g in range(1, s.groups):
        v = _load(s, g)
        if v < bestv:
            best = g
            bestv = v
    return best


def fork_join(int n, int k, int groups, double lam, int code, double p1, double p2,
              bint cancel, int policy, int d, int metric, double task_mean,
              Py_ssize_t horizon, object bit_generator, record=None):
    if record is not None:
        raise ValueError("task recording is only available in the pure-Python kernel")
    cdef FJ s
    cdef Py_ssize_t nq = n * groups, i
    cdef double[::1] arrival = np.zeros(horizon)
    cdef double[::1] join = np.full(horizon, np.nan)
    cdef long long[::1] group = np.zeros(horizon, dtype=np.longlong)
    cdef double[::1] finish0 = np.full(horizon, np.nan)
    cdef long long njoined = 0, nevents = 0, nextjob = 0, j, seq, c
    cdef double t
    cdef int kind, q, q2, g
    cdef int err = 0

    memset(&s, 0, sizeof(FJ))
    s.n = n; s.k = k; s.groups = groups; s.code = code; s.cancel = cancel
    s.policy = policy; s.d = d; s.metric = metric
    s.lam = lam; s.p1 = p1; s.p2 = p2; s.task_mean = task_mean
    s.horizon = horizon
    s.rng = _bitgen(bit_generator)

    s.xd = <double*> malloc(horizon * sizeof(double))
    s.joined = <char*> malloc(horizon * sizeof(char))
    s.done = <int*> malloc(horizon * sizeof(int))
    s.nxt = <long long*> malloc(horizon * sizeof(long long))
    s.head = <long long*> malloc(nq * sizeof(long long))
    s.cur = <long long*> malloc(nq * sizeof(long long))
    s.qseq = <long long*> malloc(nq * sizeof(long long))
    s.backlog = <long long*> malloc(nq * sizeof(long long))
    s.tail = <long long*> malloc(groups * sizeof(long long))
    s.in_group = <long long*> malloc(groups * sizeof(long long))
    s.perm = <int*> malloc(groups * sizeof(int))
    s.scratch = <long long*> malloc(n * sizeof(long long))
    try:
        if (s.xd == NULL or s.joined == NULL or s.done == NULL or s.nxt == NULL
                or s.head == NULL or s.cur == NULL or s.qseq == NULL or s.backlog == NULL
                or s.tail == NULL or s.in_group == NULL or s.perm == NULL or s.scratch == NULL
                or _heap_init(&s.heap, 2 * nq + 16) != 0):
            raise MemoryError()
        for i in range(horizon):
            s.xd[i] = 0.0
            s.joined[i] = 0
            s.done[i] = 0
            s.nxt[i] = -1
        for i in range(nq):
            s.head[i] = -1
            s.cur[i] = -1
            s.qseq[i] = -1
            s.backlog[i] = 0
        for i in range(groups):
            s.tail[i] = -1
            s.in_group[i] = 0

        with bit_generator.lock, nogil:
            if _heap_push(&s.heap, -log(1.0 - _u(s.rng)) / lam, ARRIVAL) < 0:
                err = -1
            while err == 0 and njoined < horizon:
                _heap_pop(&s.heap, &t, &seq, &kind)
                if kind == ARRIVAL:
                    nevents += 1
                    j = nextjob
                    nextjob += 1
                    arrival[j] = t
                    if code == CORR:
                        s.xd[j] = -log(1.0 - _u(s.rng)) / p1
                    g = _choose(&s)
                    group[j] = g
                    s.in_group[g] += 1
                    if s.tail[g] != -1:
                        s.nxt[s.tail[g]] = j
                    s.tail[g] = j
                    for q in range(g * n, (g + 1) * n):
                        s.backlog[q] += 1
                        if s.head[q] == -1:
                            s.head[q] = j
                        if s.cur[q] == -1:
                            if _start(&s, q, t) != 0:
                                err = -1
                    if nextjob < horizon:
                        if _heap_push(&s.heap, t + (-log(1.0 - _u(s.rng)) / lam), ARRIVAL) < 0:
                            err = -1
                    continue
                q = kind
                if seq != s.qseq[q]:
                    continue
                nevents += 1
                j = s.cur[q]
                s.cur[q] = -1
                s.qseq[q] = -1
                s.backlog[q] -= 1
                g = <int> group[j]
                if q == g * n:
                    finish0[j] = t
                s.done[j] += 1
                if s.done[j] == k:
                    join[j] = t
                    s.joined[j] = 1
                    s.in_group[g] -= 1
                    njoined += 1
                    if cancel:
                        for q2 in range(g * n, (g + 1) * n):
                            c = s.cur[q2]
                            if c != -1 and c <= j:
                                s.backlog[q2] -= 1
                                if c == j:
                                    s.npreempt += 1
                                    if _start(&s, q2, t) != 0:
                                        err = -1
                if _start(&s, q, t) != 0:
                    err = -1
        if err != 0:
            raise MemoryError()
    finally:
        free(s.xd); free(s.joined); free(s.done); free(s.nxt)
        free(s.head); free(s.cur); free(s.qseq); free(s.backlog)
        free(s.tail); free(s.in_group); free(s.perm); free(s.scratch)
        _heap_free(&s.heap)

    return {
        "arrival": np.asarray(arrival),
        "join": np.asarray(join),
        "group": np.asarray(group).astype(np.int64),
        "finish0": np.asarray(finish0),
        "events": int(nevents),
        "preemptions": int(s.npreempt),
    }


def split_merge(int n, int k, double lam, int code, double p1, double p2,
                Py_ssize_t horizon, object bit_generator):
    cdef bitgen_t* rng = _bitgen(bit_generator)
    cdef double[::1] arrival = np.empty(horizon)
    cdef double[::1] join = np.empty(horizon)
    cdef double* vals = <double*> malloc(n * sizeof(double))
    cdef double t = 0.0, free_at = 0.0, x, tmp, s, begin
    cdef Py_ssize_t j
    cdef int i, a, b
    if vals == NULL:
        raise MemoryError()
    try:
        with bit_generator.lock, nogil:
            for j in range(horizon):
                t = t + (-log(1.0 - _u(rng)) / lam)
                arrival[j] = t
                if code == CORR:
                    x = -log(1.0 - _u(rng)) / p1
                    for i in range(n):
                        vals[i] = p2 * x + (1.0 - p2) * (-log(1.0 - _u(rng)) / p1)
                elif code == EXP:
                    for i in range(n):
                        vals[i] = -log(1.0 - _u(rng)) / p1
                elif code == PARETO:
                    for i in range(n):
                        vals[i] = p1 * pow(1.0 - _u(rng), -1.0 / p2)
                else:
                    for i in range(n):
                        vals[i] = p1
                for a in range(1, n):
                    tmp = vals[a]
                    b = a - 1
                    while b >= 0 and vals[b] > tmp:
                        vals[b + 1] = vals[b]
                        b -= 1
                    vals[b + 1] = tmp
                s = vals[k - 1]
                begin = t if t > free_at else free_at
                free_at = begin + s
                join[j] = free_at
    finally:
        free(vals)
    return {"arrival": np.asarray(arrival), "join": np.asarray(join), "events": 2 * horizon}
