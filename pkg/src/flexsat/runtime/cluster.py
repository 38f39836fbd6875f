"""Cluster assembly and run orchestration.

One process hosts the whole cluster: PE 0 is the client, PEs 1..p-1 are
workers.  --sim drives everything from a deterministic discrete-event
loop with a simulated solver cost model; --real gives every PE (and every
solver) its own thread and uses the wall clock.
"""
from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass, replace
from random import Random
from typing import Optional

from ..exchange import ExchangeConfig
from ..formula import Cnf
from ..harness.report import RunReport, report_from_trace
from ..sched import JobDescriptor, build_pe_graph, max_request_hops
from ..solver.control import TERMINATED
from ..util import derive_seed
from .pe import CLIENT_ID, ClientPE, RunShared, WorkerPE
from .transport import RealContext, RealRouter, SimContext, SimLoop, Trace


@dataclass
class ClusterConfig:
    """All the knobs of one cluster run."""

    num_pes: int = 8
    threads: int = 2
    epsilon: float = 0.05
    balance_period_s: float = 0.1
    share_period_s: float = 1.0
    alpha: float = 0.875
    beta: int = 1500
    export_max_len: int = 30
    lbd_gate: bool = False
    filter_halflife_s: Optional[float] = None
    cache_size: int = 3
    degree: int = 4
    seed: int = 0
    sim: bool = True
    timeout_s: float = 300.0
    max_jobs: Optional[int] = None
    sharing: bool = True
    ramp: str = "double"            # "double" | "full"
    slice_ms: float = 2.0           # simulated solver time slice
    cdcl_rate: float = 20.0         # simulated conflicts per ms
    sls_rate: float = 400.0         # simulated flips per ms
    latency_us: int = 100
    jitter_us: int = 50
    huge_size: int = 100_000_000    # formula size where threads throttle
    ring_capacity: int = 1 << 16
    sink_cap: int = 4096

    @property
    def budget(self) -> int:
        return math.floor((1.0 - self.epsilon) * (self.num_pes - 1))

    def validate(self) -> None:
        if self.num_pes < 2:
            raise ValueError("need at least one worker besides the client")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon out of [0,1)")
        if self.budget < 1:
            raise ValueError(
                f"budget {self.budget} < 1: lower epsilon or add PEs "
                f"(p={self.num_pes}, eps={self.epsilon})")
        if self.ramp not in ("double", "full"):
            raise ValueError(f"unknown ramp policy {self.ramp!r}")
        if self.balance_period_s <= 0 or self.share_period_s <= 0:
            raise ValueError("periods must be positive")
        if self.slice_ms <= 0 or self.cdcl_rate <= 0 or self.sls_rate <= 0:
            raise ValueError("simulation rates must be positive")
        if self.timeout_s <= 0:
            raise ValueError("timeout must be positive")
        self.exchange_config().validate()

    def exchange_config(self) -> ExchangeConfig:
        return ExchangeConfig(
            beta=self.beta, alpha=self.alpha,
            share_period_s=self.share_period_s,
            export_max_len=self.export_max_len,
            lbd_gate_enabled=self.lbd_gate)

    def public_dict(self) -> dict:
        return {
            "num_pes": self.num_pes, "threads": self.threads,
            "budget": self.budget, "epsilon": self.epsilon,
            "balance_period_s": self.balance_period_s,
            "share_period_s": self.share_period_s,
            "alpha": self.alpha, "beta": self.beta,
            "sharing": self.sharing, "ramp": self.ramp,
            "seed": self.seed, "sim": self.sim,
            "timeout_s": self.timeout_s,
            "filter_halflife_s": self.filter_halflife_s,
        }


class Cluster:
    """A client plus workers, wired to one transport."""

    def __init__(self, cfg: ClusterConfig, jobs: list[JobDescriptor],
                 demand_changes: Optional[list[tuple[float, int, int]]] = None,
                 max_jobs: Optional[int] = None):
        cfg.validate()
        self.cfg = cfg
        self.trace = Trace()
        workers = tuple(range(1, cfg.num_pes))
        graph = build_pe_graph(workers, cfg.degree, derive_seed(cfg.seed, "graph"))
        e_us = int(cfg.balance_period_s * 1e6)
        self.shared = RunShared(
            num_pes=cfg.num_pes,
            budget=cfg.budget,
            h_max=max_request_hops(cfg.num_pes),
            workers=workers,
            e_us=e_us,
            share_us=int(cfg.share_period_s * 1e6),
            excfg=cfg.exchange_config(),
            threads=cfg.threads,
            huge_size=cfg.huge_size,
            cache_size=cfg.cache_size,
            filter_halflife_us=(int(cfg.filter_halflife_s * 1e6)
                                if cfg.filter_halflife_s else None),
            sim=cfg.sim,
            slice_us=int(cfg.slice_ms * 1000),
            cdcl_per_slice=max(1, int(cfg.slice_ms * cfg.cdcl_rate)),
            sls_per_slice=max(1, int(cfg.slice_ms * cfg.sls_rate)),
            ring_capacity=cfg.ring_capacity,
            sink_cap=cfg.sink_cap,
            seed=cfg.seed,
            sharing=cfg.sharing,
            ramp=cfg.ramp,
        )
        self._loop = SimLoop(cfg.seed, cfg.latency_us, cfg.jitter_us) if cfg.sim else None
        self._router = None if cfg.sim else RealRouter(time.monotonic_ns())
        self._ctxs = {}
        for pe in range(cfg.num_pes):
            rng = Random(derive_seed(cfg.seed, "pe", pe))
            if cfg.sim:
                self._ctxs[pe] = SimContext(pe, rng, self._loop, self.trace)
            else:
                self._ctxs[pe] = RealContext(pe, rng, self._router, self.trace)
        self.client = ClientPE(self._ctxs[CLIENT_ID], self.shared, jobs,
                               demand_changes,
                               max_jobs if max_jobs is not None else cfg.max_jobs)
        self.workers = {pe: WorkerPE(self._ctxs[pe], self.shared, tuple(graph[pe]))
                        for pe in workers}
        self.pes = {CLIENT_ID: self.client, **self.workers}

    # -- shared bits -------------------------------------------------------
    def _busy_count(self) -> tuple[int, int]:
        busy = sum(1 for w in self.workers.values() if w.busy_active())
        return busy, len(self.client.active)

    def _log_config(self) -> None:
        blob = json.dumps(self.cfg.public_dict(), sort_keys=True,
                          separators=(",", ":"))
        self.trace.add(0, -1, "CONFIG", None, blob)

    def _log_stats(self, now_us: int) -> None:
        totals = {"slots": 0, "conflicts": 0, "propagations": 0, "decisions": 0,
                  "restarts": 0, "flips": 0, "learned": 0, "exported": 0,
                  "imported": 0}
        for _job, _x, _pe, slot in self.shared.registry:
            stats = slot.solver.stats
            totals["slots"] += 1
            for key in ("conflicts", "propagations", "decisions", "restarts",
                        "flips", "learned", "exported", "imported"):
                totals[key] += getattr(stats, key)
        detail = " ".join(f"{k}={v}" for k, v in totals.items())
        self.trace.add(now_us, -1, "STATS", None, detail)

    def _finish_report(self, now_us: int, reason: str) -> RunReport:
        self.client.finalize(now_us)
        self._log_stats(now_us)
        self.trace.add(now_us, -1, "RUN_END", None, f"reason={reason}")
        report = report_from_trace(self.trace.lines())
        report.models = {job: rec.get("assignment")
                         for job, rec in self.client.results.items()}
        return report

    # -- run modes ---------------------------------------------------------
    def run(self) -> RunReport:
        return self._run_sim() if self.cfg.sim else self._run_real()

    def _run_sim(self) -> RunReport:
        loop = self._loop
        timeout_us = int(self.cfg.timeout_s * 1e6)
        self._log_config()
        for pe in self.pes.values():
            pe.on_start()
        tick_us = self.shared.e_us
        loop.post_timer(-1, tick_us // 2, "tick", None)

        def on_message(dst, env):
            actor = self.pes.get(dst)
            if actor is not None:
                actor.on_envelope(env)

        def on_timer(pe, tag, data):
            if pe == -1:
                busy, active = self._busy_count()
                self.trace.add(loop.now, -1, "TICK", None,
                               f"busy={busy} active={active}")
                loop.post_timer(-1, tick_us, "tick", None)
            else:
                actor = self.pes.get(pe)
                if actor is not None:
                    actor.on_timer(tag, data)

        loop.run(on_message, on_timer, lambda: self.client.finished, timeout_us)
        reason = "all-done" if self.client.finished else "timeout"
        return self._finish_report(loop.now, reason)

    def _run_real(self) -> RunReport:
        router = self._router
        timeout_us = int(self.cfg.timeout_s * 1e6)
        self._log_config()
        threads = []
        for pe, actor in self.pes.items():
            ctx = self._ctxs[pe]

            def pe_main(actor=actor, ctx=ctx):
                actor.on_start()
                ctx.pump(actor.on_envelope,
                         lambda tag, data: actor.on_timer(tag, data))

            t = threading.Thread(target=pe_main, name=f"pe-{pe}", daemon=True)
            threads.append(t)

        def sampler_main():
            tick_s = self.shared.e_us / 1e6
            time.sleep(tick_s / 2)
            while not router.stop.is_set():
                busy, active = self._busy_count()
                self.trace.add(router.now_us(), -1, "TICK", None,
                               f"busy={busy} active={active}")
                time.sleep(tick_s)

        sampler = threading.Thread(target=sampler_main, name="sampler", daemon=True)
        for t in threads:
            t.start()
        sampler.start()
        while router.now_us() < timeout_us and not self.client.finished:
            time.sleep(0.005)
        reason = "all-done" if self.client.finished else "timeout"
        end_us = router.now_us()
        router.stop.set()
        for t in threads:
            t.join(timeout=2.0)
        for _job, _x, _pe, slot in self.shared.registry:
            if slot.control.state != TERMINATED:
                slot.control.terminate()
        sampler.join(timeout=2.0)
        return self._finish_report(end_us, reason)


def run_cluster(cfg: ClusterConfig, scenario) -> RunReport:
    """Run a scheduling scenario (see harness.scenario) to completion."""
    if scenario.overrides:
        cfg = replace(cfg, **scenario.overrides)
    cluster = Cluster(cfg, scenario.jobs, scenario.demand_changes,
                      scenario.max_jobs)
    return cluster.run()


def mono_mode(cnf: Cnf, cfg: ClusterConfig, job_id: int = 1) -> RunReport:
    """Solve one formula on the whole cluster and stop at the first result.

    The idle reserve makes no sense for a single job, so epsilon drops to
    0 and the job asks for the full budget at once.
    """
    mono_cfg = replace(cfg, epsilon=0.0, ramp="full", max_jobs=1)
    desc = JobDescriptor(job=job_id, priority=0.5, arrival_s=0.0, cnf=cnf)
    cluster = Cluster(mono_cfg, [desc])
    return cluster.run()
