"""Shared test fixtures: formula generators and independent oracles.

Oracles here deliberately avoid the production algorithms: satisfiability
is decided by exhaustive truth tables, buffer limits by arbitrary
precision arithmetic with exact branches for the rational cases, merges
by decode-everything-and-redo, volumes by bisection on the water level.
"""
from __future__ import annotations

from fractions import Fraction
from random import Random

import mpmath as mp

from flexsat.exchange import ExchangeConfig, buffer_limit, serialize
from flexsat.formula import Clause, Cnf
from flexsat.sched import JobInfo

# ---------------------------------------------------------------------------
# formula generators


def random_3cnf(rng: Random, n: int, m: int) -> Cnf:
    clauses = []
    for _ in range(m):
        vs = rng.sample(range(1, n + 1), 3)
        clauses.append([v if rng.random() < 0.5 else -v for v in vs])
    return Cnf.from_clauses(n, clauses)


def random_kcnf(rng: Random, n: int, m: int, k: int) -> Cnf:
    clauses = []
    for _ in range(m):
        vs = rng.sample(range(1, n + 1), min(k, n))
        clauses.append([v if rng.random() < 0.5 else -v for v in vs])
    return Cnf.from_clauses(n, clauses)


def php_cnf(holes: int) -> Cnf:
    """Pigeonhole: holes+1 pigeons into `holes` holes; always UNSAT."""
    pigeons = holes + 1

    def var(p: int, h: int) -> int:
        return p * holes + h + 1

    clauses = [[var(p, h) for h in range(holes)] for p in range(pigeons)]
    for h in range(holes):
        for a in range(pigeons):
            for b in range(a + 1, pigeons):
                clauses.append([-var(a, h), -var(b, h)])
    return Cnf.from_clauses(pigeons * holes, clauses)


def xor_chain_cnf(n: int, parity: int) -> Cnf:
    """x1 xor ... xor xn = parity, Tseitin-style chain over 2n-1 variables.

    Variables 1..n are the inputs; n+1..2n-1 hold running parities.
    parity=0 is satisfiable (2^(n-1) models over the inputs), and adding
    both parities of the same chain is how callers build UNSAT variants.
    """
    clauses = []
    prev = 1
    aux = n
    for i in range(2, n + 1):
        aux += 1
        # aux <-> prev xor x_i
        clauses += [[-aux, prev, i], [-aux, -prev, -i],
                    [aux, -prev, i], [aux, prev, -i]]
        prev = aux
    clauses.append([prev] if parity else [-prev])
    return Cnf.from_clauses(aux, clauses)


def crafted_corpus() -> list[tuple[str, Cnf]]:
    """Twenty small structured instances, SAT and UNSAT mixed."""
    rng = Random(0xC0FFEE)
    out: list[tuple[str, Cnf]] = [
        ("php3", php_cnf(3)),
        ("php4", php_cnf(4)),
        ("xor9_sat", xor_chain_cnf(9, 0)),
        ("xor12_sat", xor_chain_cnf(12, 1)),
        ("units", Cnf.from_clauses(6, [[1], [-2], [3], [-4], [5], [-6],
                                       [1, 2], [-2, -4], [5, 6]])),
        ("contradict", Cnf.from_clauses(4, [[1], [-1, 2], [-2, 3], [-3, -1]])),
        ("empty", Cnf.from_clauses(5, [])),
        ("triangle2col", Cnf.from_clauses(6, [
            [1, 2], [3, 4], [5, 6],
            [-1, -3], [-3, -5], [-1, -5],
            [-2, -4], [-4, -6], [-2, -6]])),
        ("chain_imp", Cnf.from_clauses(12, [[-i, i + 1] for i in range(1, 12)]
                                       + [[1]])),
        ("chain_unsat", Cnf.from_clauses(12, [[-i, i + 1] for i in range(1, 12)]
                                         + [[1], [-12]])),
    ]
    # An UNSAT xor chain: both parities over shared inputs.
    base = xor_chain_cnf(8, 0)
    flipped = xor_chain_cnf(8, 1)
    both = [list(c.lits) for c in base.clauses] + [list(c.lits) for c in flipped.clauses]
    out.append(("xor8_unsat", Cnf.from_clauses(base.num_vars, both)))
    while len(out) < 20:
        i = len(out)
        n = rng.randrange(12, 25)
        m = int(n * rng.choice([3.5, 4.3, 5.0]))
        out.append((f"rand{i}_{n}v", random_3cnf(rng, n, m)))
    return out


# ---------------------------------------------------------------------------
# exhaustive satisfiability oracle (truth tables as big integers)


def _var_table(i: int, n: int) -> int:
    """Truth table of variable i (0-based) over 2^n assignment rows.

    Built by doubling (shift + or), which stays linear in the table size;
    the closed-form big-integer division is quadratic and far too slow
    once tables reach a million bits.
    """
    half = 1 << i
    width = half * 2
    pat = ((1 << half) - 1) << half
    rows = 1 << n
    while width < rows:
        pat |= pat << width
        width *= 2
    return pat


def formula_table(cnf: Cnf) -> int:
    """Big-int truth table of the formula; bit a = 1 iff row a satisfies it."""
    n = cnf.num_vars
    rows = 1 << n
    ones = (1 << rows) - 1
    var_tt = {v: _var_table(v - 1, n) for v in range(1, n + 1)}
    acc = ones
    for c in cnf.clauses:
        tt = 0
        for lit in c.lits:
            tt |= var_tt[lit] if lit > 0 else (~var_tt[-lit] & ones)
        acc &= tt
        if acc == 0:
            break
    return acc


def oracle_verdict(cnf: Cnf) -> str:
    return "SAT" if formula_table(cnf) != 0 else "UNSAT"


def oracle_count(cnf: Cnf) -> int:
    return bin(formula_table(cnf)).count("1")


def oracle_model(cnf: Cnf) -> dict[int, bool] | None:
    tt = formula_table(cnf)
    if tt == 0:
        return None
    row = (tt & -tt).bit_length() - 1
    return {v: bool((row >> (v - 1)) & 1) for v in range(1, cnf.num_vars + 1)}


# ---------------------------------------------------------------------------
# buffer-limit oracle


def limit_oracle(u: int, alpha: Fraction, beta: int) -> int:
    """ceil(u * alpha^log2(u) * beta) via exact branches + mpmath.

    alpha = 1 and alpha = 1/2 are rational for every u; powers of two are
    rational for every alpha.  The remaining cases are irrational, where
    50 and 80 digits must agree or the point is flagged as unstable.
    """
    if alpha == 1:
        return u * beta
    if alpha == Fraction(1, 2):
        return beta
    if u & (u - 1) == 0:
        k = u.bit_length() - 1
        exact = alpha ** k * u * beta
        return -(-exact.numerator // exact.denominator)

    def numeric(dps: int) -> int:
        with mp.workdps(dps):
            a = mp.mpf(alpha.numerator) / alpha.denominator
            return int(mp.ceil(u * a ** (mp.log(u) / mp.log(2)) * beta))

    lo, hi = numeric(50), numeric(80)
    assert lo == hi, f"oracle unstable at u={u} alpha={alpha} beta={beta}"
    return hi


# ---------------------------------------------------------------------------
# merge oracle


def merge_oracle(buffers, own_export, cfg: ExchangeConfig) -> tuple[list[int], int]:
    """Decode everything, dedup, sort, refill greedily under the limit.

    Mirrors the documented contract (whole clauses, stop at the first
    clause that does not fit) without reusing the streaming merge.
    """
    from flexsat.exchange import deserialize

    u_out = 1 + sum(u for _, u in buffers)
    limit = buffer_limit(u_out, cfg)
    seen = set()
    clauses = []
    for buf, _u in list(buffers) + [(own_export, 1)]:
        for c in deserialize(buf):
            if c.lits not in seen:
                seen.add(c.lits)
                clauses.append(c)
    clauses.sort(key=lambda c: (len(c), c.sort_key))
    out: list[int] = []
    kept: list[Clause] = []
    for c in clauses:
        trial = serialize(kept + [c])
        if len(trial) > limit:
            break
        kept.append(c)
        out = trial
    return out, u_out


# ---------------------------------------------------------------------------
# volume oracle


def water_shares(jobs: list[JobInfo], budget: int) -> dict[int, Fraction] | None:
    """Exact clamped ideal shares, found by bisection on the water level.

    Independent of the production segment search: the level is isolated
    by halving a rational interval until the floor/cap membership is
    stable at both endpoints, then solved exactly on that segment.
    Returns None when budget < n (no level exists with everyone seated).
    """
    if not jobs or budget < len(jobs):
        return None
    total = sum(j.demand for j in jobs)
    if budget >= total:
        return {j.job: Fraction(j.demand) for j in jobs}

    w = {j.job: Fraction(j.priority) * j.demand for j in jobs}

    def filled(lam: Fraction) -> Fraction:
        return sum(min(Fraction(j.demand), max(Fraction(1), lam * w[j.job]))
                   for j in jobs)

    def parts(lam: Fraction):
        floor = frozenset(j.job for j in jobs if lam * w[j.job] < 1)
        cap = frozenset(j.job for j in jobs if lam * w[j.job] > j.demand)
        return floor, cap

    lo = Fraction(0)
    hi = max(Fraction(j.demand) / w[j.job] for j in jobs) + 1
    for _ in range(300):
        if parts(lo) == parts(hi):
            break
        mid = (lo + hi) / 2
        if filled(mid) < budget:
            lo = mid
        else:
            hi = mid
    floor, cap = parts(hi)
    mid_jobs = [j for j in jobs if j.job not in floor and j.job not in cap]
    base = len(floor) + sum(j.demand for j in jobs if j.job in cap)
    wsum = sum(w[j.job] for j in mid_jobs)
    lam = Fraction(budget - base) / wsum if wsum else hi
    shares = {}
    for j in jobs:
        if j.job in floor:
            shares[j.job] = Fraction(1)
        elif j.job in cap:
            shares[j.job] = Fraction(j.demand)
        else:
            shares[j.job] = lam * w[j.job]
    assert sum(shares.values()) == budget, "water level failed to close"
    return shares


def volume_oracle(jobs: list[JobInfo], budget: int) -> dict[int, int]:
    """Integer volumes from the exact shares via floors + largest remainder."""
    if not jobs:
        return {}
    if budget < len(jobs):
        order = sorted(jobs, key=lambda j: (-j.priority, j.arrival, j.job))
        grant = {j.job for j in order[:budget]}
        return {j.job: (1 if j.job in grant else 0) for j in jobs}
    shares = water_shares(jobs, budget)

    vols = {job: int(s) for job, s in shares.items()}  # Fraction floor
    leftover = budget - sum(vols.values())
    by_job = {j.job: j for j in jobs}
    order = sorted(
        (j.job for j in jobs if shares[j.job] != vols[j.job]),
        key=lambda job: (-(shares[job] - vols[job]), -by_job[job].priority,
                         by_job[job].arrival, job),
    )
    for job in order[:leftover]:
        vols[job] += 1
    return vols
