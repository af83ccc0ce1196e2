"""Pure-Python simulation kernels.

These are the reference semantics; ``_ckernels.pyx`` mirrors them line
for line and the test-suite checks that both produce bit-identical
output from the same stream.  Any change here must be made there too.
"""
from __future__ import annotations

import heapq
import math

import numpy as np

from .dists import CORR, DET, EXP, PARETO

RANDOM, POD, LWL = 0, 1, 2
METRIC_JOBS, METRIC_WORK = 0, 1
ARRIVAL = -1

_CHUNK = 4096


class EventQueue:
    """Min-heap of (time, sequence, kind); sequence breaks ties by insertion."""

    def __init__(self):
        self._heap = []
        self._seq = 0

    def push(self, time: float, kind: int) -> int:
        seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (time, seq, kind))
        return seq

    def pop(self):
        return heapq.heappop(self._heap)

    def __len__(self):
        return len(self._heap)


class _Uniforms:
    # buffered draws; consumption order equals one next_double per call
    def __init__(self, bit_generator):
        self._gen = np.random.Generator(bit_generator)
        self._buf = []
        self._i = 0

    def __call__(self) -> float:
        if self._i == len(self._buf):
            self._buf = self._gen.random(_CHUNK).tolist()
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return u


def fork_join(n, k, groups, lam, code, p1, p2, cancel, policy, d, metric, task_mean,
              horizon, bit_generator, record=None):
    """Simulate ``groups`` independent (n, k) fork-join groups behind one router.

    Returns a dict of per-job arrays (arrival, join, group, finish0) and
    event counters.  ``record``, when a dict, receives per-job task start
    and finish lists keyed by job id for invariant checks.
    """
    U = _Uniforms(bit_generator)
    delta = p2
    nq = n * groups

    arrival = [0.0] * horizon
    join = [math.nan] * horizon
    group = [0] * horizon
    finish0 = [math.nan] * horizon
    joined = [False] * horizon
    done = [0] * horizon
    nxt = [-1] * horizon
    xd = [0.0] * horizon

    head = [-1] * nq
    cur = [-1] * nq
    qseq = [-1] * nq
    backlog = [0] * nq
    tail = [-1] * groups
    in_group = [0] * groups
    perm = [0] * groups

    evq = EventQueue()
    njoined = 0
    nevents = 0
    npreempt = 0
    if record is not None:
        record.setdefault("starts", {})
        record.setdefault("finishes", {})

    def draw(j):
        if code == EXP:
            return -math.log(1.0 - U()) / p1
        if code == PARETO:
            return p1 * (1.0 - U()) ** (-1.0 / p2)
        if code == DET:
            return p1
        return delta * xd[j] + (1.0 - delta) * (-math.log(1.0 - U()) / p1)

    def start(q, t):
        j = head[q]
        if cancel:
            while j != -1 and joined[j]:
                j = nxt[j]
        if j == -1:
            head[q] = -1
            cur[q] = -1
            qseq[q] = -1
            return
        head[q] = nxt[j]
        cur[q] = j
        s = draw(j)
        qseq[q] = evq.push(t + s, q)
        if record is not None:
            record["starts"].setdefault(j, []).append((q, t))

    def load(g):
        if metric == METRIC_JOBS:
            return float(in_group[g])
        b = sorted(backlog[g * n:(g + 1) * n])
        return task_mean * b[k - 1]

    def choose():
        if groups == 1:
            return 0
        if policy == RANDOM:
            g = int(U() * groups)
            return g if g < groups else groups - 1
        if policy == POD and d < groups:
            for i in range(groups):
                perm[i] = i
            for i in range(d):
                j = i + int(U() * (groups - i))
                if j >= groups:
                    j = groups - 1
                perm[i], perm[j] = perm[j], perm[i]
            best, bestv = -1, 0.0
            for i in range(d):
                g = perm[i]
                v = load(g)
                if best == -1 or v < bestv or (v == bestv and g < best):
                    best, bestv = g, v
            return best
        best, bestv = 0, load(0)
        for g in range(1, groups):
            v = load(g)
            if v < bestv:
                best, bestv = g, v
        return best

    evq.push(-math.log(1.0 - U()) / lam, ARRIVAL)
    nextjob = 0
    while njoined < horizon:
        t, seq, kind = evq.pop()
        if kind == ARRIVAL:
            nevents += 1
            j = nextjob
            nextjob += 1
            arrival[j] = t
            if code == CORR:
                xd[j] = -math.log(1.0 - U()) / p1
            g = choose()
            group[j] = g
            in_group[g] += 1
            if tail[g] != -1:
                nxt[tail[g]] = j
            tail[g] = j
            for q in range(g * n, (g + 1) * n):
                backlog[q] += 1
                if head[q] == -1:
                    head[q] = j
                if cur[q] == -1:
                    start(q, t)
            if nextjob < horizon:
                evq.push(t + (-math.log(1.0 - U()) / lam), ARRIVAL)
            continue
        q = kind
        if seq != qseq[q]:
            continue
        nevents += 1
        j = cur[q]
        cur[q] = -1
        qseq[q] = -1
        backlog[q] -= 1
        g = group[j]
        if q == g * n:
            finish0[j] = t
        if record is not None:
            record["finishes"].setdefault(j, []).append((q, t))
        done[j] += 1
        if done[j] == k:
            join[j] = t
            joined[j] = True
            in_group[g] -= 1
            njoined += 1
            if cancel:
                for q2 in range(g * n, (g + 1) * n):
                    c = cur[q2]
                    if c != -1 and c <= j:
                        backlog[q2] -= 1
                        if c == j:
                            npreempt += 1
                            start(q2, t)
        start(q, t)

    return {
        "arrival": np.array(arrival),
        "join": np.array(join),
        "group": np.array(group, dtype=np.int64),
        "finish0": np.array(finish0),
        "events": nevents,
        "preemptions": npreempt,
    }


def split_merge(n, k, lam, code, p1, p2, horizon, bit_generator):
    """M/G/1 queue whose service is the k-th smallest of n fresh task draws."""
    U = _Uniforms(bit_generator)
    delta = p2
    arrival = np.empty(horizon)
    join = np.empty(horizon)
    vals = [0.0] * n
    t = 0.0
    free = 0.0
    for j in range(horizon):
        t = t + (-math.log(1.0 - U()) / lam)
        arrival[j] = t
        if code == CORR:
            x = -math.log(1.0 - U()) / p1
            for i in range(n):
                vals[i] = delta * x + (1.0 - delta) * (-math.log(1.0 - U()) / p1)
        elif code == EXP:
            for i in range(n):
                vals[i] = -math.log(1.0 - U()) / p1
        elif code == PARETO:
            for i in range(n):
                vals[i] = p1 * (1.0 - U()) ** (-1.0 / p2)
        else:
            for i in range(n):
                vals[i] = p1
        s = sorted(vals)[k - 1]
        begin = t if t > free else free
        free = begin + s
        join[j] = free
    return {"arrival": arrival, "join": join, "events": 2 * horizon}
