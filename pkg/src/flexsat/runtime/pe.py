"""PE actors: a client that submits jobs and workers that schedule + solve.

One WorkerPE hosts at most one active job-tree node plus a small cache of
suspended ones.  All coordination is message passing (see transport):
random-walk job requests, binary-tree volume propagation, epoch-aligned
balancing reductions over the static PE tree, and root-driven clause
sharing epochs over each job tree.
"""
from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field
from random import Random
from typing import Any, Optional

from ..exchange import (
    ExchangeConfig,
    ClauseFilter,
    LbdGate,
    buffer_limit,
    deserialize,
    merge,
    serialize,
)
from ..formula import Clause, ModelError, check_model
from ..sched import (
    BalancingEvent,
    JobDescriptor,
    JobRequest,
    PeView,
    apply_events,
    child_indices,
    compute_volumes,
    consolidate,
    parent_index,
    pick_eviction,
    route_request,
    VolumeMap,
)
from ..solver import SAT, UNKNOWN
from ..solver.cdcl import CdclSolver
from ..solver.config import make_portfolio_config, throttled_thread_count
from ..solver.control import RUNNING, SUSPENDED as S_SUSPENDED, TERMINATED, SolverControl
from ..solver.ring import ImportRing
from ..solver.sls import SlsSolver
from ..util import derive_seed
from . import transport as tp
from .transport import Context, Envelope

# Node lifecycle.
PENDING = "PENDING"      # adopted, waiting for the payload / first volume
ACTIVE = "ACTIVE"
SUSPENDED = "SUSPENDED"

CLIENT_ID = 0


@dataclass
class RunShared:
    """Run-wide constants and shared sinks, wired up by the cluster."""

    num_pes: int
    budget: int
    h_max: int
    workers: tuple[int, ...]
    e_us: int                      # balancing epoch period
    share_us: int                  # clause sharing period
    excfg: ExchangeConfig
    threads: int                   # nominal solvers per PE
    huge_size: int                 # serialized size where thread throttling starts
    cache_size: int
    filter_halflife_us: Optional[int]
    sim: bool
    slice_us: int                  # simulated solver time slice
    cdcl_per_slice: int            # conflicts per slice
    sls_per_slice: int             # flips per slice
    ring_capacity: int
    sink_cap: int
    seed: int
    sharing: bool
    ramp: str                      # "double" | "full"
    registry: list = field(default_factory=list)


@dataclass
class EpochState:
    """In-flight clause sharing epoch at one tree node."""

    own: list[int]
    expected: dict[int, int]                     # child index -> PE
    got: dict[int, tuple[list[int], int]] = field(default_factory=dict)
    reply_to: Optional[tuple[int, int]] = None   # (PE, parent index); None at root
    participants: list[tuple[int, int]] = field(default_factory=list)


class SolverSlot:
    """One portfolio solver bound to a tree node."""

    def __init__(self, index: int, kind: str, solver, control: SolverControl,
                 ring: Optional[ImportRing], filt: Optional[ClauseFilter],
                 forget_rng):
        self.index = index
        self.kind = kind
        self.solver = solver
        self.control = control
        self.ring = ring
        self.filt = filt
        self.forget_rng = forget_rng
        self.next_forget_us: Optional[int] = None
        self.done = False
        self.thread: Optional[threading.Thread] = None


class JobNode:
    """One cached job-tree node on a PE."""

    def __init__(self, job: int, x: int, gate: LbdGate):
        self.job = job
        self.x = x
        self.key = (job, x)
        self.state = PENDING
        self.desc: Optional[JobDescriptor] = None
        self.parent_pe: Optional[int] = None
        self.links: dict[int, Optional[int]] = {1: None, 2: None}
        self.pending_req = {1: False, 2: False}
        self.volume = 0
        self.slots: Optional[list[SolverSlot]] = None
        self.sink: deque = deque()
        self.gate = gate
        self.epochs: dict[int, EpochState] = {}
        self.share_count = 0
        self.last_active = 0
        self.job_epoch = 0
        self.cur_demand = 1
        self.ramp_on = True
        self.ramp_cap = 1
        self.ever_active = False
        self.result_reported = False
        self.share_timer_on = False


class BasePE:
    """Balancing-reduction participation shared by client and workers."""

    def __init__(self, ctx: Context, shared: RunShared):
        self.ctx = ctx
        self.shared = shared
        self.pe_id = ctx.pe_id
        self.rng = ctx.rng
        p = shared.num_pes
        self.red_parent = (self.pe_id - 1) // 2 if self.pe_id > 0 else None
        self.red_children = tuple(
            c for c in (2 * self.pe_id + 1, 2 * self.pe_id + 2) if c < p)
        self.pending_events: dict[int, BalancingEvent] = {}
        self.red: dict[int, dict] = {}
        self.jobs_table: dict[int, Any] = {}
        self.volumes = VolumeMap({})
        self.balance_epoch = 0

    # -- plumbing ----------------------------------------------------------
    def send(self, dst: int, kind: str, job: Optional[int], payload: dict,
             extra_delay_us: int = 0) -> None:
        self.ctx.send(Envelope(kind, self.pe_id, dst, job, payload), extra_delay_us)

    def log(self, kind: str, job: Optional[int], detail: str = "") -> None:
        self.ctx.log(kind, job, detail)

    def on_start(self) -> None:
        self.ctx.set_timer(self.shared.e_us, "balance", 1)

    def on_envelope(self, env: Envelope) -> None:
        handler = getattr(self, "_h_" + env.kind.lower(), None)
        if handler is not None:
            handler(env)

    def on_timer(self, tag: str, data: Any) -> None:
        handler = getattr(self, "_t_" + tag, None)
        if handler is not None:
            handler(data)

    # -- balancing epochs --------------------------------------------------
    def _red_entry(self, k: int) -> dict:
        return self.red.setdefault(k, {"events": {}, "got": set(), "ready": False})

    def _t_balance(self, k: int) -> None:
        st = self._red_entry(k)
        st["events"] = consolidate(st["events"].values(), self.pending_events.values())
        self.pending_events = {}
        st["ready"] = True
        self._try_reduce(k)
        self._on_balance_tick(k)
        delay = max(1000, (k + 1) * self.shared.e_us - self.ctx.now_us())
        self.ctx.set_timer(delay, "balance", k + 1)

    def _h_event_reduce(self, env: Envelope) -> None:
        k = env.payload["epoch"]
        st = self._red_entry(k)
        st["events"] = consolidate(st["events"].values(), env.payload["events"].values())
        st["got"].add(env.src)
        self._try_reduce(k)

    def _try_reduce(self, k: int) -> None:
        st = self.red.get(k)
        if st is None or not st["ready"] or not set(self.red_children) <= st["got"]:
            return
        del self.red[k]
        if self.pe_id == CLIENT_ID:
            if st["events"]:
                for c in self.red_children:
                    self.send(c, tp.EVENT_BROADCAST, None,
                              {"epoch": k, "events": st["events"]})
                self._apply_broadcast(k, st["events"])
        else:
            self.send(self.red_parent, tp.EVENT_REDUCE, None,
                      {"epoch": k, "events": st["events"]})

    def _h_event_broadcast(self, env: Envelope) -> None:
        k = env.payload["epoch"]
        events = env.payload["events"]
        for c in self.red_children:
            self.send(c, tp.EVENT_BROADCAST, None, {"epoch": k, "events": events})
        self._apply_broadcast(k, events)

    def _apply_broadcast(self, k: int, events: dict[int, BalancingEvent]) -> None:
        self.jobs_table = apply_events(self.jobs_table, events)
        self.volumes = compute_volumes(self.jobs_table.values(), self.shared.budget)
        self.balance_epoch = k
        self._after_volumes(k, events)

    # hooks
    def _on_balance_tick(self, k: int) -> None:
        pass

    def _after_volumes(self, k: int, events: dict[int, BalancingEvent]) -> None:
        pass


class WorkerPE(BasePE):
    """Scheduling + solving actor; at most one node computes at a time."""

    def __init__(self, ctx: Context, shared: RunShared, neighbors: tuple[int, ...]):
        super().__init__(ctx, shared)
        self.neighbors = neighbors
        self.nodes: dict[tuple[int, int], JobNode] = {}
        self.hints: dict[tuple[int, int], int] = {}
        self.occupied: Optional[tuple[int, int]] = None
        self._step_on = False

    # -- state inspection (cluster sampler / post-run stats) ---------------
    def busy_active(self) -> bool:
        node = self.nodes.get(self.occupied) if self.occupied else None
        return node is not None and node.state == ACTIVE

    # -- job requests ------------------------------------------------------
    def _h_job_request(self, env: Envelope) -> None:
        req: JobRequest = env.payload["req"]
        if req.origin == self.pe_id and req.hops >= self.shared.h_max:
            self._request_returned(req)  # parked: retry next epoch
            return
        key = (req.job, req.x)
        node = self.nodes.get(key)
        idle = self.occupied is None
        holds = node is not None and node.state == SUSPENDED
        view = PeView(self.pe_id, idle, holds, idle and self._cache_admits(),
                      self.hints.get(key), self.neighbors, self.shared.h_max)
        dec = route_request(req, view, self.rng)
        if dec.action == "resume":
            self._do_resume(node, req)
        elif dec.action == "adopt":
            self._do_adopt(req)
        else:  # park or forward: both just move the request along
            self.send(dec.dst, tp.JOB_REQUEST, req.job, {"req": req})

    def _cache_admits(self) -> bool:
        if len(self.nodes) < self.shared.cache_size:
            return True
        return any(n.state == SUSPENDED and not n.epochs and n.key != self.occupied
                   for n in self.nodes.values())

    def _route_onward(self, req: JobRequest) -> None:
        if req.hops >= self.shared.h_max or not self.neighbors:
            self.send(req.origin, tp.JOB_REQUEST, req.job, {"req": req})
            return
        req.hops += 1
        dst = self.neighbors[self.rng.randrange(len(self.neighbors))]
        self.send(dst, tp.JOB_REQUEST, req.job, {"req": req})

    def _do_resume(self, node: JobNode, req: JobRequest) -> None:
        node.parent_pe = req.origin
        # Provisional volume until the parent's VOLUME_UPDATE lands; the stale
        # pre-suspension value would re-suspend the node immediately.
        node.volume = max(node.volume, node.x + 1)
        self.send(req.origin, tp.ADOPT_ACK, node.job,
                  {"x": node.x, "mode": "resume"})
        self.log("ADOPT", node.job, f"x={node.x} mode=resume hops={req.hops}")
        self._activate(node)

    def _do_adopt(self, req: JobRequest) -> None:
        while len(self.nodes) >= self.shared.cache_size:
            cands = [(n.last_active, n.job, n.x) for n in self.nodes.values()
                     if n.state == SUSPENDED and not n.epochs and n.key != self.occupied]
            victim = pick_eviction(cands)
            if victim is None:
                self._route_onward(req)
                return
            self.teardown_node(victim[0], victim[1], "evict", abort_children=False)
        node = JobNode(req.job, req.x, self._new_gate())
        node.parent_pe = req.origin
        node.last_active = self.ctx.now_us()
        self.nodes[node.key] = node
        self.occupied = node.key
        self.send(req.origin, tp.ADOPT_ACK, req.job, {"x": req.x, "mode": "fresh"})
        self.log("ADOPT", req.job, f"x={req.x} mode=fresh hops={req.hops}")

    def _new_gate(self) -> LbdGate:
        cfg = self.shared.excfg
        return LbdGate(enabled=cfg.lbd_gate_enabled, limit=cfg.lbd_gate_init)

    def _request_returned(self, req: JobRequest) -> None:
        if req.x == 0:
            return
        pnode = self.nodes.get((req.job, parent_index(req.x)))
        if pnode is not None:
            side = 1 if req.x % 2 == 1 else 2
            pnode.pending_req[side] = False  # repair pass retries next epoch

    def _emit_child_request(self, node: JobNode, side: int, cx: int) -> None:
        req = JobRequest(node.job, cx, hops=0, origin=self.pe_id)
        hint = self.hints.get((node.job, cx))
        if hint is not None and hint != self.pe_id:
            req.hint_used = True
            dst = hint
        elif self.neighbors:
            dst = self.neighbors[self.rng.randrange(len(self.neighbors))]
        else:
            return
        node.pending_req[side] = True
        self.send(dst, tp.JOB_REQUEST, node.job, {"req": req})

    # -- adoption handshake ------------------------------------------------
    def _h_adopt_ack(self, env: Envelope) -> None:
        job = env.job
        x = env.payload["x"]
        pnode = self.nodes.get((job, parent_index(x)))
        if pnode is None or pnode.state != ACTIVE:
            self.send(env.src, tp.ABORT, job, {"x": x})
            return
        side = 1 if x % 2 == 1 else 2
        pnode.pending_req[side] = False
        if x >= pnode.volume:
            # demand shrank while the request was in flight
            if env.payload["mode"] == "fresh":
                # nothing to preserve; don't leave a PE stuck in PENDING
                self.send(env.src, tp.ABORT, job, {"x": x})
            else:
                self.hints[(job, x)] = env.src
                self.send(env.src, tp.VOLUME_UPDATE, job, {"x": x, "v": pnode.volume})
            return
        pnode.links[side] = env.src
        self.hints.pop((job, x), None)
        if env.payload["mode"] == "fresh":
            self.send(env.src, tp.JOB_PAYLOAD, job,
                      {"x": x, "desc": pnode.desc, "v": pnode.volume})
        else:
            self.send(env.src, tp.VOLUME_UPDATE, job, {"x": x, "v": pnode.volume})

    def _h_job_payload(self, env: Envelope) -> None:
        job = env.job
        x = env.payload["x"]
        node = self.nodes.get((job, x))
        if node is None or node.state != PENDING:
            return
        node.desc = env.payload["desc"]
        node.volume = env.payload["v"]
        if x == 0:
            desc = node.desc
            cap = self.shared.budget
            if desc.demand is not None:
                cap = min(cap, desc.demand)
            if desc.max_volume is not None:
                cap = min(cap, desc.max_volume)
            node.ramp_cap = max(1, cap)
            # Ramping is for jobs of unknown parallelism; an explicit
            # demand (or mono's full ramp) is posted in one go.
            if self.shared.ramp == "full" or desc.demand is not None:
                node.cur_demand = node.ramp_cap
                node.ramp_on = False
            else:
                node.cur_demand = 1
                node.ramp_on = node.ramp_cap > 1
            # The root keeps its seat but stays pending until the next
            # balancing epoch grants it a volume; starting it right away
            # would push the busy count past the budget.
            node.volume = 0
            node.job_epoch = 0
            self.pending_events[job] = BalancingEvent(
                job, 0, node.cur_demand, desc.priority, desc.arrival_s)
        elif x < node.volume:
            self._activate(node)
        else:
            node.state = SUSPENDED
            node.last_active = self.ctx.now_us()
            if self.occupied == node.key:
                self.occupied = None
            self.log("SUSPEND", job, f"x={x} early=1")

    # -- node lifecycle ----------------------------------------------------
    def _activate(self, node: JobNode) -> None:
        mode = "resume" if node.ever_active else "fresh"
        node.ever_active = True
        node.state = ACTIVE
        node.last_active = self.ctx.now_us()
        self.occupied = node.key
        self.log("START", node.job, f"x={node.x} mode={mode}")
        desc = node.desc
        if desc is not None and desc.cnf is not None and node.slots is None:
            self._spawn_slots(node)
        if node.slots:
            for slot in node.slots:
                if slot.control.state == S_SUSPENDED:
                    slot.control.resume()
        if node.x == 0 and desc is not None:
            if desc.cnf is not None and self.shared.sharing and not node.share_timer_on:
                node.share_timer_on = True
                self.ctx.set_timer(self.shared.share_us, "share", node.job)
            if desc.synthetic_s is not None and mode == "fresh":
                self.ctx.set_timer(int(desc.synthetic_s * 1e6), "synth", node.job)
        self._ensure_step()
        self._apply_volume(node)

    def _spawn_slots(self, node: JobNode) -> None:
        desc = node.desc
        t = throttled_thread_count(desc.cnf.serialized_size, self.shared.huge_size,
                                   self.shared.threads)
        nonce = derive_seed(self.shared.seed, "job", node.job)
        node.slots = []
        for i in range(t):
            scfg = make_portfolio_config(node.x, t, i, nonce)
            control = SolverControl()
            if scfg.kind == "cdcl":
                ring = ImportRing(self.shared.ring_capacity)
                filt = ClauseFilter()
                slot = SolverSlot(i, "cdcl", None, control, ring, filt,
                                  Random(derive_seed(scfg.seed, "forget")))
                solver = CdclSolver(
                    desc.cnf, scfg.cdcl, seed=scfg.seed, control=control,
                    import_fn=self._make_import(slot),
                    export_fn=self._make_export(node, slot),
                    export_max_len=self.shared.excfg.export_max_len)
                slot.solver = solver
            else:
                solver = SlsSolver(desc.cnf, scfg.sls, seed=scfg.seed, control=control)
                slot = SolverSlot(i, "sls", solver, control, None, None, None)
            if self.shared.filter_halflife_us and slot.filt is not None:
                slot.next_forget_us = self.ctx.now_us() + self.shared.filter_halflife_us
            node.slots.append(slot)
            self.shared.registry.append((node.job, node.x, self.pe_id, slot))
            if not self.shared.sim:
                slot.thread = threading.Thread(
                    target=self._solver_thread, args=(node, slot), daemon=True)
                slot.thread.start()

    def _make_export(self, node: JobNode, slot: SolverSlot):
        sink_cap = self.shared.sink_cap

        def export_fn(lits, lbd):
            if not node.gate.admits(len(lits), lbd):
                return
            clause = Clause(tuple(lits), lbd)
            if not slot.filt.register_export(clause):
                return
            if len(node.sink) < sink_cap:
                node.sink.append(clause)
        return export_fn

    def _make_import(self, slot: SolverSlot):
        def import_fn():
            while True:
                lits = slot.ring.try_pop()
                if lits is None:
                    return None
                if slot.filt.check_import(Clause(lits)):
                    return lits
        return import_fn

    def _suspend_node(self, node: JobNode) -> None:
        job, x = node.key
        for side, cx in zip((1, 2), child_indices(x)):
            link = node.links[side]
            if link is not None:
                self.send(link, tp.VOLUME_UPDATE, job, {"x": cx, "v": node.volume})
                self.hints[(job, cx)] = link
                node.links[side] = None
            node.pending_req[side] = False
        if node.slots:
            for slot in node.slots:
                if slot.control.state == RUNNING:
                    slot.control.suspend()
        node.state = SUSPENDED
        node.last_active = self.ctx.now_us()
        # A deferred root keeps its seat so it can resume in place.
        if x != 0 and self.occupied == node.key:
            self.occupied = None
        self.log("SUSPEND", job, f"x={x}")

    def _apply_volume(self, node: JobNode) -> None:
        if node.state != ACTIVE:
            return
        job, x = node.key
        v = node.volume
        if x >= v:
            self._suspend_node(node)
            return
        for side, cx in zip((1, 2), child_indices(x)):
            link = node.links[side]
            if cx < v:
                if link is not None:
                    self.send(link, tp.VOLUME_UPDATE, job, {"x": cx, "v": v})
                elif not node.pending_req[side]:
                    self._emit_child_request(node, side, cx)
            else:
                if link is not None:
                    self.send(link, tp.VOLUME_UPDATE, job, {"x": cx, "v": v})
                    self.hints[(job, cx)] = link
                    node.links[side] = None
                node.pending_req[side] = False

    def _h_volume_update(self, env: Envelope) -> None:
        node = self.nodes.get((env.job, env.payload["x"]))
        if node is None:
            return
        node.volume = env.payload["v"]
        if node.state == ACTIVE:
            self._apply_volume(node)
        elif node.state == PENDING and node.x >= node.volume:
            # shrunk out of the tree before the payload arrived
            self.teardown_node(node.job, node.x, "shrunk", abort_children=False)

    def teardown_node(self, job: int, x: int, reason: str,
                      abort_children: bool = True) -> None:
        node = self.nodes.pop((job, x), None)
        for side, cx in zip((1, 2), child_indices(x)):
            dst = node.links[side] if node is not None else None
            hinted = self.hints.pop((job, cx), None)
            if abort_children:
                dst = dst if dst is not None else hinted
                if dst is not None:
                    self.send(dst, tp.ABORT, job, {"x": cx})
        if node is None:
            return
        if node.slots:
            for slot in node.slots:
                if slot.control.state != TERMINATED:
                    slot.control.terminate()
        if self.occupied == node.key:
            self.occupied = None
        self.log("END", job, f"x={x} reason={reason}")

    def _h_abort(self, env: Envelope) -> None:
        self.teardown_node(env.job, env.payload["x"], "abort")

    # -- balancing hooks ---------------------------------------------------
    def _on_balance_tick(self, k: int) -> None:
        # repair pass: re-emit child requests that got parked or lost
        key = self.occupied
        node = self.nodes.get(key) if key else None
        if node is None or node.state != ACTIVE:
            return
        for side, cx in zip((1, 2), child_indices(node.x)):
            if (cx < node.volume and node.links[side] is None
                    and not node.pending_req[side]):
                self._emit_child_request(node, side, cx)

    def _after_volumes(self, k: int, events: dict[int, BalancingEvent]) -> None:
        for ev in events.values():
            if ev.demand <= 0:
                for key in [key for key in self.nodes if key[0] == ev.job]:
                    self.teardown_node(key[0], key[1], "done")
                self.hints = {hk: v for hk, v in self.hints.items()
                              if hk[0] != ev.job}
        for key, node in list(self.nodes.items()):
            job, x = key
            if x != 0 or node.desc is None or job not in self.jobs_table:
                continue
            v = self.volumes.get(job)
            self.log("VOLUME", job, f"v={v} epoch={k} demand={node.cur_demand}")
            if v >= 1:
                node.volume = v  # before _activate: it applies the volume
                if node.state != ACTIVE:
                    self._activate(node)
                if node.state == ACTIVE:
                    if (node.ramp_on and v == node.cur_demand
                            and node.cur_demand < node.ramp_cap):
                        node.cur_demand = min(2 * node.cur_demand, node.ramp_cap)
                        self._emit_event(node, node.cur_demand)
                    self._apply_volume(node)
            elif node.state == ACTIVE:
                node.volume = 0
                self._suspend_node(node)

    def _emit_event(self, node: JobNode, demand: int) -> None:
        node.job_epoch += 1
        self.pending_events[node.job] = BalancingEvent(
            node.job, node.job_epoch, demand,
            node.desc.priority, node.desc.arrival_s)

    def _h_demand_set(self, env: Envelope) -> None:
        node = self.nodes.get((env.job, 0))
        if node is None or node.desc is None:
            return
        want = max(1, env.payload["demand"])
        if node.desc.max_volume is not None:
            want = min(want, node.desc.max_volume)
        node.cur_demand = want
        node.ramp_on = False
        self._emit_event(node, want)

    # -- clause sharing epochs ---------------------------------------------
    def _t_share(self, job: int) -> None:
        node = self.nodes.get((job, 0))
        if node is None:
            return  # tree left this PE; the timer chain ends here
        if node.state == ACTIVE and node.desc is not None and node.desc.cnf is not None:
            node.share_count += 1
            self._begin_epoch(node, node.share_count)
        self.ctx.set_timer(self.shared.share_us, "share", job)

    def _drain_exports(self, node: JobNode) -> list[int]:
        out = []
        sink = node.sink
        while sink:
            try:
                out.append(sink.popleft())
            except IndexError:
                break
        limit = buffer_limit(1, self.shared.excfg)
        buf = serialize(out, limit)
        node.gate.update(len(buf) / limit if limit else 1.0)
        return buf

    def _prune_epochs(self, node: JobNode, n: int) -> None:
        for old in [e for e in node.epochs if e <= n - 4]:
            del node.epochs[old]

    def _begin_epoch(self, node: JobNode, n: int) -> None:
        self._prune_epochs(node, n)
        own = self._drain_exports(node)
        links = [(cx, node.links[side])
                 for side, cx in zip((1, 2), child_indices(node.x))
                 if node.links[side] is not None]
        if not links:
            merged, u_out = merge([], own, self.shared.excfg)
            self._apply_import(node, merged)
            self.log("SHARE", node.job, f"epoch={n} u={u_out} lits={len(merged)}")
            return
        node.epochs[n] = EpochState(own=own, expected=dict(links))
        for cx, pe in links:
            self.send(pe, tp.CLAUSES_BEGIN, node.job, {"x": cx, "epoch": n})

    def _h_clauses_begin(self, env: Envelope) -> None:
        job = env.job
        x = env.payload["x"]
        n = env.payload["epoch"]
        node = self.nodes.get((job, x))
        if node is None or node.desc is None or node.desc.cnf is None:
            # absent nodes still answer so the epoch completes
            self.send(env.src, tp.CLAUSES_UP, job,
                      {"x": parent_index(x), "child_x": x, "epoch": n,
                       "buf": [], "u": 0})
            return
        self._prune_epochs(node, n)
        own = self._drain_exports(node)
        links = [(cx, node.links[side])
                 for side, cx in zip((1, 2), child_indices(x))
                 if node.links[side] is not None]
        if not links:
            self.send(env.src, tp.CLAUSES_UP, job,
                      {"x": parent_index(x), "child_x": x, "epoch": n,
                       "buf": own, "u": 1})
            return
        node.epochs[n] = EpochState(own=own, expected=dict(links),
                                    reply_to=(env.src, parent_index(x)))
        for cx, pe in links:
            self.send(pe, tp.CLAUSES_BEGIN, job, {"x": cx, "epoch": n})

    def _h_clauses_up(self, env: Envelope) -> None:
        job = env.job
        node = self.nodes.get((job, env.payload["x"]))
        if node is None:
            return
        n = env.payload["epoch"]
        st = node.epochs.get(n)
        if st is None:
            return
        st.got[env.payload["child_x"]] = (env.payload["buf"], env.payload["u"])
        if len(st.got) == len(st.expected):
            self._complete_epoch(node, n, st)

    def _complete_epoch(self, node: JobNode, n: int, st: EpochState) -> None:
        ins = [(buf, u) for _cx, (buf, u) in sorted(st.got.items()) if u > 0]
        merged, u_out = merge(ins, st.own, self.shared.excfg)
        st.participants = [(cx, st.expected[cx])
                           for cx, (_b, u) in sorted(st.got.items()) if u > 0]
        if st.reply_to is None:  # root: turn around and broadcast
            for cx, pe in st.participants:
                self.send(pe, tp.CLAUSES_BCAST, node.job,
                          {"x": cx, "epoch": n, "buf": merged})
            self._apply_import(node, merged)
            del node.epochs[n]
            self.log("SHARE", node.job, f"epoch={n} u={u_out} lits={len(merged)}")
        else:
            pe, px = st.reply_to
            self.send(pe, tp.CLAUSES_UP, node.job,
                      {"x": px, "child_x": node.x, "epoch": n,
                       "buf": merged, "u": u_out})

    def _h_clauses_bcast(self, env: Envelope) -> None:
        job = env.job
        node = self.nodes.get((job, env.payload["x"]))
        if node is None:
            return
        n = env.payload["epoch"]
        st = node.epochs.pop(n, None)
        buf = env.payload["buf"]
        if st is not None:
            for cx, pe in st.participants:
                self.send(pe, tp.CLAUSES_BCAST, job, {"x": cx, "epoch": n, "buf": buf})
        self._apply_import(node, buf)

    def _apply_import(self, node: JobNode, buf: list[int]) -> None:
        if not buf or not node.slots:
            return
        clauses = deserialize(buf)
        for slot in node.slots:
            if slot.ring is None:
                continue
            for clause in clauses:
                slot.ring.try_push(clause.lits)

    # -- results -----------------------------------------------------------
    def _solver_finished(self, node: JobNode, slot: SolverSlot, verdict: str,
                         delay_us: int = 0) -> None:
        slot.done = True
        if node.result_reported:
            return
        node.result_reported = True
        model = slot.solver.model if verdict == SAT else None
        stats = slot.solver.stats
        winner = f"pe{self.pe_id}.x{node.x}.s{slot.index}.{slot.kind}"
        if node.slots:
            for other in node.slots:
                if other.control.state != TERMINATED:
                    other.control.terminate()
        if node.x == 0:
            self._finish_root(node, verdict, model, stats, winner, delay_us)
        else:
            self.log("RESULT", node.job, f"verdict={verdict} x={node.x}")
            self.send(node.parent_pe, tp.RESULT, node.job,
                      {"x": parent_index(node.x), "verdict": verdict,
                       "model": model, "stats": stats, "winner": winner},
                      extra_delay_us=delay_us)

    def _h_result(self, env: Envelope) -> None:
        job = env.job
        node = self.nodes.get((job, env.payload["x"]))
        if node is None or node.result_reported:
            return
        node.result_reported = True
        p = env.payload
        if node.x == 0:
            self._finish_root(node, p["verdict"], p["model"], p["stats"], p["winner"])
        else:
            self.send(node.parent_pe, tp.RESULT, job,
                      {"x": parent_index(node.x), "verdict": p["verdict"],
                       "model": p["model"], "stats": p["stats"],
                       "winner": p["winner"]})

    def _finish_root(self, node: JobNode, verdict: str, model, stats, winner: str,
                     delay_us: int = 0) -> None:
        self.log("RESULT", node.job, f"verdict={verdict} x=0")
        self.send(CLIENT_ID, tp.RESULT, node.job,
                  {"verdict": verdict, "model": model, "stats": stats,
                   "winner": winner}, extra_delay_us=delay_us)
        self._emit_event(node, 0)  # completion: drop the job at the next epoch
        self.teardown_node(node.job, 0, "done")

    def _t_synth(self, job: int) -> None:
        node = self.nodes.get((job, 0))
        if node is None or node.result_reported:
            return
        node.result_reported = True
        self._finish_root(node, "DONE", None, None, f"pe{self.pe_id}.x0.synth")

    def _h_solver_done(self, env: Envelope) -> None:
        # real mode: a solver thread reports in via the mailbox
        node = self.nodes.get((env.job, env.payload["x"]))
        if node is None or not node.slots:
            return
        slot = node.slots[env.payload["slot"]]
        self._solver_finished(node, slot, env.payload["verdict"])

    # -- solver driving ----------------------------------------------------
    def _forget_check(self, slot: SolverSlot) -> None:
        hl = self.shared.filter_halflife_us
        if not hl or slot.filt is None or slot.next_forget_us is None:
            return
        now = self.ctx.now_us()
        while now >= slot.next_forget_us:
            slot.filt.forget_half(slot.forget_rng)
            slot.next_forget_us += hl

    def _ensure_step(self) -> None:
        if self.shared.sim and not self._step_on:
            self._step_on = True
            self.ctx.set_timer(self.shared.slice_us, "step", None)

    def _t_step(self, _data) -> None:
        self._step_on = False
        key = self.occupied
        node = self.nodes.get(key) if key else None
        if node is None or node.state != ACTIVE or not node.slots:
            return
        any_live = False
        for slot in node.slots:
            if slot.done or slot.control.state != RUNNING:
                continue
            self._forget_check(slot)
            stats = slot.solver.stats
            if slot.kind == "cdcl":
                before = stats.conflicts
                budget = self.shared.cdcl_per_slice
            else:
                before = stats.flips
                budget = self.shared.sls_per_slice
            verdict = slot.solver.step(budget)
            if verdict is not None:
                used = (stats.conflicts if slot.kind == "cdcl" else stats.flips) - before
                frac = min(1.0, used / budget) if budget else 1.0
                self._solver_finished(node, slot, verdict,
                                      delay_us=int(self.shared.slice_us * frac))
                if self.nodes.get(key) is not node:
                    return  # the node tore itself down
            else:
                any_live = True
        if any_live:
            self._ensure_step()

    def _solver_thread(self, node: JobNode, slot: SolverSlot) -> None:
        chunk = 1000 if slot.kind == "cdcl" else 20000
        while True:
            state = slot.control.state
            if state == TERMINATED:
                return
            if state == S_SUSPENDED:
                slot.control.park_while_suspended()
                continue
            self._forget_check(slot)
            verdict = slot.solver.step(chunk)
            if verdict is not None:
                self.send(self.pe_id, tp.SOLVER_DONE, node.job,
                          {"x": node.x, "slot": slot.index, "verdict": verdict})
                return


class ClientPE(BasePE):
    """Submits jobs, enforces limits, collects results."""

    def __init__(self, ctx: Context, shared: RunShared,
                 descriptors: list[JobDescriptor],
                 demand_changes: Optional[list[tuple[float, int, int]]] = None,
                 max_jobs: Optional[int] = None):
        super().__init__(ctx, shared)
        self.descs = {d.job: d for d in descriptors}
        self.order = [d.job for d in sorted(descriptors, key=lambda d: (d.arrival_s, d.job))]
        self.demand_changes = demand_changes or []
        self.max_jobs = max_jobs if max_jobs is not None else len(descriptors)
        self.active: set[int] = set()
        self.waiting: list[int] = []
        self.outstanding: set[int] = set()
        self.root_pe: dict[int, int] = {}
        self.aborted: set[int] = set()
        self.results: dict[int, dict] = {}
        self.finished = False

    def on_start(self) -> None:
        super().on_start()
        for job, desc in self.descs.items():
            self.ctx.set_timer(int(desc.arrival_s * 1e6), "intro", job)
        for at_s, job, demand in self.demand_changes:
            self.ctx.set_timer(int(at_s * 1e6), "demand", (job, demand))

    # -- submission --------------------------------------------------------
    def _t_intro(self, job: int) -> None:
        desc = self.descs[job]
        kind = "cnf" if desc.cnf is not None else "synth"
        self.log("INTRO", job, f"pri={desc.priority:g} kind={kind}")
        if len(self.active) < self.max_jobs:
            self._introduce(job)
        else:
            self.waiting.append(job)

    def _introduce(self, job: int) -> None:
        desc = self.descs[job]
        self.active.add(job)
        self._emit_root_request(job)
        if desc.wallclock_limit_s is not None:
            self.ctx.set_timer(int(desc.wallclock_limit_s * 1e6), "deadline", job)

    def _emit_root_request(self, job: int) -> None:
        req = JobRequest(job, 0, hops=0, origin=self.pe_id)
        workers = self.shared.workers
        dst = workers[self.rng.randrange(len(workers))]
        self.outstanding.add(job)
        self.log("REQUEST", job, f"x=0 dst={dst}")
        self.send(dst, tp.JOB_REQUEST, job, {"req": req})

    def _admit_next(self) -> None:
        while self.waiting and len(self.active) < self.max_jobs:
            self._introduce(self.waiting.pop(0))

    def _on_balance_tick(self, k: int) -> None:
        # re-emit requests that came back parked
        for job in sorted(self.active):
            if (job not in self.root_pe and job not in self.outstanding
                    and job not in self.results):
                self._emit_root_request(job)

    def _h_job_request(self, env: Envelope) -> None:
        req: JobRequest = env.payload["req"]
        self.outstanding.discard(req.job)

    # -- placement ---------------------------------------------------------
    def _h_adopt_ack(self, env: Envelope) -> None:
        job = env.job
        self.outstanding.discard(job)
        if job in self.aborted or job in self.results or job in self.root_pe:
            self.send(env.src, tp.ABORT, job, {"x": 0})
            return
        self.root_pe[job] = env.src
        desc = self.descs[job]
        size = desc.cnf.serialized_size if desc.cnf is not None else 0
        self.log("PLACED", job, f"pe={env.src} size={size}")
        self.send(env.src, tp.JOB_PAYLOAD, job, {"x": 0, "desc": desc, "v": 1})

    # -- completion --------------------------------------------------------
    def _record(self, job: int, verdict: str, model_state: str, detail: str,
                assignment=None) -> None:
        desc = self.descs[job]
        response_us = self.ctx.now_us() - int(desc.arrival_s * 1e6)
        self.results[job] = {"verdict": verdict, "response_us": response_us,
                             "model": model_state, "assignment": assignment}
        self.log("DONE", job,
                 f"verdict={verdict} response_ms={response_us / 1000:.3f} "
                 f"model={model_state}" + (" " + detail if detail else ""))
        self.active.discard(job)
        self.root_pe.pop(job, None)
        self.outstanding.discard(job)
        self._admit_next()
        if len(self.results) == len(self.descs):
            self.finished = True

    def _h_result(self, env: Envelope) -> None:
        job = env.job
        if job in self.results:
            return
        p = env.payload
        verdict = p["verdict"]
        desc = self.descs[job]
        model_state = "-"
        if verdict == SAT and desc.cnf is not None:
            try:
                ok = p["model"] is not None and check_model(desc.cnf, p["model"])
            except ModelError:
                ok = False
            model_state = "ok" if ok else "bad"
        stats = p.get("stats")
        detail = f"winner={p.get('winner', '-')}"
        if stats is not None:
            detail += (f" conflicts={stats.conflicts} learned={stats.learned}"
                       f" imported={stats.imported} flips={stats.flips}")
        self._record(job, verdict, model_state, detail, assignment=p.get("model"))

    def _t_deadline(self, job: int) -> None:
        if job in self.results:
            return
        self.aborted.add(job)
        root = self.root_pe.get(job)
        if root is not None:
            self.send(root, tp.ABORT, job, {"x": 0})
        self._record(job, UNKNOWN, "-", "reason=deadline")

    def _t_demand(self, data: tuple[int, int]) -> None:
        job, demand = data
        root = self.root_pe.get(job)
        self.log("DEMAND", job, f"demand={demand} root={root}")
        if root is not None and job not in self.results:
            self.send(root, tp.DEMAND_SET, job, {"x": 0, "demand": demand})

    def finalize(self, now_us: int) -> None:
        """Mark whatever is still unresolved when the run stops."""
        for job, desc in self.descs.items():
            if job not in self.results:
                response_us = max(0, now_us - int(desc.arrival_s * 1e6))
                self.results[job] = {"verdict": UNKNOWN,
                                     "response_us": response_us, "model": "-"}
        self.finished = True
