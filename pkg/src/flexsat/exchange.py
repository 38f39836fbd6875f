"""Communication-limited clause exchange: flat buffers, merging, filters.

The exchange format is a flat integer sequence grouped by clause length:
for each length l = 1, 2, 3, ... the group is a count n_l followed by
n_l * l literals.  Groups appear in increasing length; a zero count is
emitted only when a longer group follows, so trailing empty groups cost
nothing.  Within a group, clauses are in canonical lexicographic order
(literals compared by (|lit|, sign)).  A whole buffer is therefore sorted
by (length, clause), which is what makes cheap k-way merging possible.

Aggregation up a job tree carries a single counter u (how many buffers
were folded in so far).  The size admitted at a node shrinks
sublinearly with u: limit(u) = ceil(u * alpha^log2(u) * beta).  With
alpha = 1 this is the linear u*beta; with alpha = 1/2 it converges to
beta, i.e. the root broadcast never exceeds a constant.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from fractions import Fraction
from random import Random
from typing import Iterable, Sequence

from .formula import Clause, literal_key
from .util import MASK64, mix64


class BufferFormatError(ValueError):
    """Raised when a clause buffer violates the flat format."""


@dataclass
class ExchangeConfig:
    """Tuning for clause exchange.

    beta: base buffer size in integers contributed by a single PE.
    alpha: per-level discount in [0.5, 1.0] applied as alpha^log2(u).
    share_period_s: seconds between sharing epochs of a job tree.
    export_max_len: solvers only export clauses up to this many literals.
    lbd_gate_*: optional export gate on LBD scores (off by default).
    """

    beta: int = 1500
    alpha: float = 0.875
    share_period_s: float = 1.0
    export_max_len: int | None = 30
    lbd_gate_enabled: bool = False
    lbd_gate_init: int = 2

    def validate(self) -> None:
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if not (0.5 <= self.alpha <= 1.0):
            raise ValueError("alpha out of [0.5,1]")
        if self.share_period_s <= 0:
            raise ValueError("share period must be positive")
        if self.export_max_len is not None and self.export_max_len < 1:
            raise ValueError("export_max_len must be >= 1")


def buffer_limit(u: int, cfg: ExchangeConfig) -> int:
    """Admitted buffer size (in integers) after aggregating u buffers.

    ceil(u * alpha^log2(u) * beta), with log2 over the reals.  Powers of
    two are computed exactly in rationals so the ceiling never suffers
    float rounding right at an integer boundary.
    """
    if u < 1:
        raise ValueError("u must be >= 1")
    if cfg.alpha == 1.0:
        return u * cfg.beta
    if cfg.alpha == 0.5:
        return cfg.beta  # (1/2)^log2(u) = 1/u exactly, for every u
    if u & (u - 1) == 0:  # power of two: alpha^log2(u) is rational
        k = u.bit_length() - 1
        exact = Fraction(cfg.alpha) ** k * u * cfg.beta
        return -(-exact.numerator // exact.denominator)
    return math.ceil(u * cfg.alpha ** math.log2(u) * cfg.beta)


# ---------------------------------------------------------------------------
# serialization

def serialize(clauses: Iterable[Clause], limit: int | None = None) -> list[int]:
    """Flatten a clause set into the length-grouped integer format.

    Clauses are taken in (length, lexicographic) order.  If a limit is
    given, clauses are added greedily until the next one would push the
    serialized size (group counts included) past it; everything after
    that point is discarded.
    """
    ordered = sorted(set(clauses), key=lambda c: (len(c), c.sort_key))
    out: list[int] = []
    count_pos: dict[int, int] = {}
    cur_len = 0
    for c in ordered:
        n = len(c)
        new_headers = n - cur_len  # zero counts for skipped lengths + own
        cost = n + (new_headers if n > cur_len else 0)
        if limit is not None and len(out) + cost > limit:
            break
        while cur_len < n:
            cur_len += 1
            count_pos[cur_len] = len(out)
            out.append(0)
        out[count_pos[n]] += 1
        out.extend(c.lits)
    return out


def deserialize(buf: Sequence[int]) -> list[Clause]:
    """Exact inverse of serialize for well-formed buffers.

    Validates group counts, literal ranges, canonical order within each
    group and within each clause; raises BufferFormatError otherwise.
    """
    clauses: list[Clause] = []
    pos = 0
    length = 0
    total = len(buf)
    while pos < total:
        length += 1
        n = buf[pos]
        pos += 1
        if n < 0:
            raise BufferFormatError(f"negative count {n} for length {length}")
        need = n * length
        if pos + need > total:
            raise BufferFormatError(f"truncated group of length {length}")
        prev_key = None
        for _ in range(n):
            lits = tuple(buf[pos:pos + length])
            pos += length
            if any(l == 0 for l in lits):
                raise BufferFormatError("zero literal inside clause")
            keys = tuple(literal_key(l) for l in lits)
            if any(keys[i] >= keys[i + 1] for i in range(length - 1)):
                raise BufferFormatError(f"clause {lits} not canonical")
            if prev_key is not None and keys <= prev_key:
                raise BufferFormatError("group not in canonical order")
            prev_key = keys
            clauses.append(Clause(lits))
    return clauses


def buffer_to_bytes(buf: Sequence[int]) -> bytes:
    """Little-endian int32 encoding, the on-disk form for golden files."""
    return struct.pack(f"<{len(buf)}i", *buf)


def buffer_from_bytes(raw: bytes) -> list[int]:
    if len(raw) % 4:
        raise BufferFormatError("byte length not a multiple of 4")
    return list(struct.unpack(f"<{len(raw) // 4}i", raw))


# ---------------------------------------------------------------------------
# merging

def _stream(buf: Sequence[int]):
    """Yield (length, sort_key, lits) triples from a flat buffer, validating."""
    pos = 0
    length = 0
    total = len(buf)
    prev_key = None
    while pos < total:
        length += 1
        n = buf[pos]
        pos += 1
        if n < 0:
            raise BufferFormatError(f"negative count {n}")
        if pos + n * length > total:
            raise BufferFormatError(f"truncated group of length {length}")
        prev_key = None
        for _ in range(n):
            lits = tuple(buf[pos:pos + length])
            pos += length
            keys = tuple(literal_key(l) for l in lits)
            if any(l == 0 for l in lits) or any(
                keys[i] >= keys[i + 1] for i in range(length - 1)
            ):
                raise BufferFormatError(f"clause {lits} not canonical")
            if prev_key is not None and keys <= prev_key:
                raise BufferFormatError("group not in canonical order")
            prev_key = keys
            yield (length, keys, lits)


def merge(
    buffers: Sequence[tuple[Sequence[int], int]],
    own_export: Sequence[int],
    cfg: ExchangeConfig,
) -> tuple[list[int], int]:
    """k-way merge of child buffers plus this node's own export.

    Each input is (flat buffer, u).  The output u counts this node too:
    u_out = 1 + sum(u_in).  Duplicate clauses are emitted once.  The
    output is truncated at buffer_limit(u_out): whole clauses only, and
    once one clause does not fit nothing longer is admitted either.
    """
    import heapq

    u_out = 1 + sum(u for _, u in buffers)
    limit = buffer_limit(u_out, cfg)

    streams = [_stream(buf) for buf, _ in buffers]
    streams.append(_stream(own_export))
    heap: list[tuple[int, tuple, tuple, int]] = []
    for idx, st in enumerate(streams):
        first = next(st, None)
        if first is not None:
            heapq.heappush(heap, (first[0], first[1], first[2], idx))

    out: list[int] = []
    count_pos: dict[int, int] = {}
    cur_len = 0
    seen: set[tuple[int, ...]] = set()
    while heap:
        length, _keys, lits, idx = heapq.heappop(heap)
        nxt = next(streams[idx], None)
        if nxt is not None:
            heapq.heappush(heap, (nxt[0], nxt[1], nxt[2], idx))
        if lits in seen:
            continue
        cost = length + (length - cur_len if length > cur_len else 0)
        if len(out) + cost > limit:
            break  # whole-clause truncation: everything longer is dropped too
        seen.add(lits)
        while cur_len < length:
            cur_len += 1
            count_pos[cur_len] = len(out)
            out.append(0)
        out[count_pos[length]] += 1
        out.extend(lits)
    return out, u_out


# ---------------------------------------------------------------------------
# duplicate filtering

_LEN_SALT = 0xC2B2AE3D27D4EB4F


def commutative_hash(lits: Iterable[int]) -> int:
    """Order-independent 64-bit clause hash.

    Sum (mod 2^64) of an avalanche mix of each literal, xored with a mix
    of the clause length, so permutations collide and sub/superset
    clauses do not collide trivially.
    """
    h = 0
    n = 0
    for lit in lits:
        h = (h + mix64(lit)) & MASK64
        n += 1
    return h ^ mix64(n ^ _LEN_SALT)


class ClauseFilter:
    """Per-solver duplicate filter: exact set for units, AMQ for the rest.

    The approximate part is a Bloom filter over commutative clause hashes.
    Forgetting is probabilistic with a half life: each call removes each
    unit with probability 1/2 and retires one Bloom generation, so a
    non-unit clause becomes admittable again after at most two calls.

    Single-owner: exactly one execution context may mutate a filter.
    """

    def __init__(self, amq_bits: int = 1 << 24, num_hashes: int = 4):
        if amq_bits < 8 or amq_bits & (amq_bits - 1):
            raise ValueError("amq_bits must be a power of two >= 8")
        self.amq_bits = amq_bits
        self.num_hashes = num_hashes
        self.unit_set: set[int] = set()
        self._cur: bytearray | None = None
        self._old: bytearray | None = None

    # -- bloom internals ---------------------------------------------------
    def _indices(self, lits: tuple[int, ...]) -> list[int]:
        h = commutative_hash(lits)
        h1 = h & (self.amq_bits - 1)
        h2 = mix64(h) | 1
        return [(h1 + i * h2) & (self.amq_bits - 1) for i in range(self.num_hashes)]

    @staticmethod
    def _test(gen: bytearray | None, idxs: list[int]) -> bool:
        if gen is None:
            return False
        return all(gen[i >> 3] & (1 << (i & 7)) for i in idxs)

    def _test_and_add(self, lits: tuple[int, ...]) -> bool:
        """Return True iff the clause was absent; inserts it either way."""
        if len(lits) == 1:
            lit = lits[0]
            if lit in self.unit_set:
                return False
            self.unit_set.add(lit)
            return True
        idxs = self._indices(lits)
        present = self._test(self._cur, idxs) or self._test(self._old, idxs)
        if self._cur is None:
            self._cur = bytearray(self.amq_bits >> 3)
        cur = self._cur
        for i in idxs:
            cur[i >> 3] |= 1 << (i & 7)
        return not present

    # -- public surface ----------------------------------------------------
    def register_export(self, clause: Clause) -> bool:
        """Admit a locally learned clause; False if it was already seen."""
        return self._test_and_add(clause.lits)

    def check_import(self, clause: Clause) -> bool:
        """Admit an incoming clause; False blocks re-import of known ones."""
        return self._test_and_add(clause.lits)

    def forget_half(self, rng: Random) -> None:
        """Half-life step: drop each unit with p=1/2, retire one AMQ generation."""
        kept = {u for u in sorted(self.unit_set) if rng.getrandbits(1)}
        self.unit_set = kept
        self._old = self._cur
        self._cur = None


@dataclass
class LbdGate:
    """Export admission by LBD score, loosened when sharing runs underfull.

    Disabled means everything passes.  Unit clauses always pass.  After a
    sharing round that filled less than 80% of the base buffer the limit
    is incremented.
    """

    enabled: bool = False
    limit: int = 2

    def admits(self, length: int, lbd: int | None) -> bool:
        if not self.enabled or length == 1 or lbd is None:
            return True
        return lbd <= self.limit

    def update(self, fill_ratio: float) -> None:
        if self.enabled and fill_ratio < 0.8:
            self.limit += 1
