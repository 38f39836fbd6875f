"""Malleable scheduling: volumes, balancing events, PE graph, request routing.

Volumes are computed identically on every PE from the same consolidated
event set: each active job j gets v_j = clamp(lambda * pi_j * d_j, 1, d_j)
with lambda chosen so the volumes fill the worker budget, then fractional
shares are rounded by largest remainder.  All arithmetic is exact
(fractions), so the result is bit-identical everywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from random import Random
from typing import Iterable, Mapping, Sequence

from .formula import Cnf


# ---------------------------------------------------------------------------
# descriptors and balancing events

@dataclass(frozen=True)
class JobDescriptor:
    """What the client knows about a job it wants solved."""

    job: int
    priority: float
    arrival_s: float = 0.0
    demand: int | None = None        # max PEs wanted; None = whole budget
    cnf: Cnf | None = None
    synthetic_s: float | None = None  # fixed-duration workload instead of a CNF
    wallclock_limit_s: float | None = None
    cpu_limit_s: float | None = None
    max_volume: int | None = None
    seq_time_s: float | None = None   # optional reference for speedup reports

    def __post_init__(self) -> None:
        if not (0.0 < self.priority < 1.0):
            raise ValueError(f"priority {self.priority} out of (0,1)")
        if (self.cnf is None) == (self.synthetic_s is None):
            raise ValueError("job needs exactly one of cnf or synthetic_s")


@dataclass(frozen=True)
class JobInfo:
    """Balancing view of a job, as carried in events and job tables."""

    job: int
    priority: float
    arrival: float
    demand: int
    epoch: int = 0


@dataclass(frozen=True)
class BalancingEvent:
    job: int
    epoch: int
    demand: int  # 0 announces completion
    priority: float
    arrival: float


def consolidate(
    *event_sets: Iterable[BalancingEvent],
) -> dict[int, BalancingEvent]:
    """Fold event sets; per job the highest epoch wins."""
    out: dict[int, BalancingEvent] = {}
    for evs in event_sets:
        for ev in evs:
            cur = out.get(ev.job)
            if cur is None or ev.epoch > cur.epoch:
                out[ev.job] = ev
    return out


def apply_events(
    table: Mapping[int, JobInfo],
    events: Iterable[BalancingEvent] | Mapping[int, BalancingEvent],
) -> dict[int, JobInfo]:
    """New job table with the events applied (stale epochs ignored)."""
    if isinstance(events, Mapping):
        events = events.values()
    out = dict(table)
    for ev in sorted(events, key=lambda e: e.job):
        cur = out.get(ev.job)
        if cur is not None and ev.epoch <= cur.epoch:
            continue
        if ev.demand <= 0:
            out.pop(ev.job, None)
        else:
            out[ev.job] = JobInfo(ev.job, ev.priority, ev.arrival, ev.demand, ev.epoch)
    return out


# ---------------------------------------------------------------------------
# volume computation

@dataclass(frozen=True)
class VolumeMap:
    """Volumes per job; deferred jobs exceeded the budget and wait at 0."""

    volumes: dict[int, int]
    deferred: tuple[int, ...] = ()

    def get(self, job: int, default: int = 0) -> int:
        return self.volumes.get(job, default)


def _tie_key(j: JobInfo) -> tuple:
    return (-j.priority, j.arrival, j.job)


def compute_volumes(jobs: Iterable[JobInfo], budget: int) -> VolumeMap:
    """Deterministic fair volumes for the active jobs under a PE budget.

    Guarantees: sum of volumes <= budget; 1 <= v_j <= demand_j for every
    scheduled job; unpinned jobs sit within one PE of their exact
    proportional share.  With more jobs than budget, surplus jobs (lowest
    priority, then latest arrival, then highest id) are deferred at 0.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    active = sorted(jobs, key=lambda j: j.job)
    for j in active:
        if not (0.0 < j.priority < 1.0):
            raise ValueError(f"job {j.job}: priority {j.priority} out of (0,1)")
        if j.demand < 1:
            raise ValueError(f"job {j.job}: demand must be >= 1")
    if len({j.job for j in active}) != len(active):
        raise ValueError("duplicate job ids")
    n = len(active)
    if n == 0:
        return VolumeMap({})

    if budget < n:
        order = sorted(active, key=_tie_key)
        vols = {j.job: 1 for j in order[:budget]}
        deferred = tuple(j.job for j in order[budget:])
        return VolumeMap({j.job: vols.get(j.job, 0) for j in active}, deferred)

    total_d = sum(j.demand for j in active)
    if budget >= total_d:
        return VolumeMap({j.job: j.demand for j in active})

    w = {j.job: Fraction(j.priority) * j.demand for j in active}
    points = sorted({Fraction(1) / w[j.job] for j in active}
                    | {Fraction(j.demand) / w[j.job] for j in active})
    segments = [(Fraction(0), points[0])]
    segments += list(zip(points, points[1:]))

    floor_set: list[JobInfo] = []
    cap_set: list[JobInfo] = []
    mid_set: list[JobInfo] = []
    lam = None
    for a, b in segments:
        m = (a + b) / 2
        floor_set = [j for j in active if m * w[j.job] < 1]
        cap_set = [j for j in active if m * w[j.job] > j.demand]
        mid_set = [j for j in active
                   if 1 <= m * w[j.job] <= j.demand]
        base = len(floor_set) + sum(j.demand for j in cap_set)
        wm = sum(w[j.job] for j in mid_set)
        if wm == 0:
            if base == budget:
                lam = m
                break
            continue
        cand = Fraction(budget - base) / wm
        if a <= cand <= b:
            lam = cand
            break
    assert lam is not None, "water level must exist for n <= budget < total demand"

    vols = {j.job: 1 for j in floor_set}
    vols.update({j.job: j.demand for j in cap_set})
    shares = {j.job: lam * w[j.job] for j in mid_set}
    floors = {job: int(s) for job, s in shares.items()}  # Fraction floor
    leftover = (budget - len(floor_set) - sum(j.demand for j in cap_set)
                - sum(floors.values()))
    by_remainder = sorted(
        mid_set,
        key=lambda j: (-(shares[j.job] - floors[j.job]),) + _tie_key(j),
    )
    for j in by_remainder[:leftover]:
        floors[j.job] += 1
    vols.update(floors)
    return VolumeMap({j.job: vols[j.job] for j in active})


# ---------------------------------------------------------------------------
# job trees and request routing

def parent_index(x: int) -> int:
    if x < 1:
        raise ValueError("root has no parent")
    return (x - 1) // 2


def child_indices(x: int) -> tuple[int, int]:
    return (2 * x + 1, 2 * x + 2)


def max_request_hops(p: int) -> int:
    """Starvation guard: park a request after 32*ln(p) unmatched hops."""
    return max(1, math.ceil(32.0 * math.log(max(2, p))))


@dataclass
class JobRequest:
    """A request for someone to adopt node x of job's tree."""

    job: int
    x: int
    hops: int = 0
    origin: int = -1        # PE that emitted it (client for x = 0)
    hint_used: bool = False


@dataclass(frozen=True)
class PeView:
    """The slice of PE state the routing policy needs."""

    pe_id: int
    idle: bool
    holds_suspended: bool   # a suspended node for exactly (job, x)
    can_adopt: bool         # idle and cache admits (after eviction if needed)
    hint: int | None
    neighbors: Sequence[int]
    h_max: int


@dataclass(frozen=True)
class RouteDecision:
    action: str             # "resume" | "adopt" | "park" | "forward"
    dst: int | None = None


def route_request(req: JobRequest, view: PeView, rng: Random) -> RouteDecision:
    """Routing policy for one request arriving at one PE.

    Resume beats fresh adoption; a remembered former child is preferred
    once per walk; exhausted requests go back to their origin to be
    re-emitted next epoch.
    """
    if view.idle and view.holds_suspended:
        return RouteDecision("resume")
    if view.can_adopt:
        return RouteDecision("adopt")
    if req.hops >= view.h_max:
        return RouteDecision("park", req.origin)
    req.hops += 1
    if view.hint is not None and not req.hint_used and view.hint != view.pe_id:
        req.hint_used = True
        return RouteDecision("forward", view.hint)
    if not view.neighbors:
        return RouteDecision("park", req.origin)
    return RouteDecision("forward", view.neighbors[rng.randrange(len(view.neighbors))])


def pick_eviction(
    candidates: Iterable[tuple[float, int, int]],
) -> tuple[int, int] | None:
    """Least-recently-active suspended node as (job, x); None if empty.

    Candidates are (last_active, job, x) triples.
    """
    best = None
    for item in candidates:
        if best is None or item < best:
            best = item
    return (best[1], best[2]) if best else None


# ---------------------------------------------------------------------------
# PE communication graph

def build_pe_graph(
    worker_ids: Sequence[int], degree: int, seed: int
) -> dict[int, tuple[int, ...]]:
    """r-regular directed neighbor lists from r seeded permutations.

    Permutations with self-loops or duplicate edges are redrawn; a swap
    repair kicks in for tiny worker counts where rejection is hopeless.
    """
    ids = list(worker_ids)
    n = len(ids)
    if n == 0:
        return {}
    if n == 1:
        return {ids[0]: ()}
    deg = max(1, min(degree, n - 1))
    rng = Random(seed)
    edges: dict[int, list[int]] = {w: [] for w in ids}
    for _ in range(deg):
        perm = None
        for _try in range(200):
            cand = ids[:]
            rng.shuffle(cand)
            if all(cand[i] != ids[i] and cand[i] not in edges[ids[i]]
                   for i in range(n)):
                perm = cand
                break
        if perm is None:
            perm = _repair_permutation(ids, edges, rng)
        for i in range(n):
            edges[ids[i]].append(perm[i])
    return {w: tuple(vs) for w, vs in edges.items()}


def _repair_permutation(
    ids: list[int], edges: dict[int, list[int]], rng: Random
) -> list[int]:
    """Swap conflicting positions pairwise until the permutation is clean."""
    n = len(ids)
    cand = ids[:]
    rng.shuffle(cand)

    def bad(i: int) -> bool:
        return cand[i] == ids[i] or cand[i] in edges[ids[i]]

    for _round in range(4 * n):
        conflicts = [i for i in range(n) if bad(i)]
        if not conflicts:
            return cand
        for i in conflicts:
            for off in range(1, n):
                j = (i + off) % n
                cand[i], cand[j] = cand[j], cand[i]
                if not bad(i) and not bad(j):
                    break
                cand[i], cand[j] = cand[j], cand[i]
    # pathological tiny configurations: fall back to per-node sampling,
    # which keeps out-degree exact but may skew in-degree
    return [rng.choice([w for w in ids if w != ids[i] and w not in edges[ids[i]]])
            for i in range(n)]
