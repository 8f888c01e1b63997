"""Lockstep batch execution of ECM stage 1.

A job is a list of curve seeds for one modulus.  Items are grouped into
lane groups of ``lanes`` curves; inside a group every lane executes the same
operation sequence bit for bit, the way work-items of one wavefront would.
A lane whose curve setup already produced an outcome keeps computing on a
placeholder curve and its result is selected at the end, so no lane ever
takes a different path.  Lane groups are independent and may be spread over
worker processes; results are merged by item index.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

from . import ecm
from .ecm import Outcome, StageResult
from .errors import ConfigError, ContractError
from .modred import ResidueArith, get_strategy
from .mpnat import MulCounter

# Smallest elapsed time used when deriving a rate.
MIN_ELAPSED = 1e-6


@dataclass(frozen=True)
class BatchJob:
    n: int
    b1: int
    sigmas: tuple[int, ...]
    lanes: int = 1
    parallelism: int = 1
    strategy: str = "classic"
    lazy: bool = True

    def __post_init__(self):
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "sigmas", tuple(int(s) for s in self.sigmas))
        if not self.sigmas:
            raise ConfigError("a batch needs at least one sigma")
        if self.lanes < 1 or self.parallelism < 1:
            raise ConfigError("lanes and parallelism must be positive")
        if self.b1 < 2:
            raise ConfigError(f"B1 must be at least 2, got {self.b1}")
        if self.n < 3 or not self.n & 1:
            raise ConfigError(f"n must be odd and at least 3, got {self.n}")
        get_strategy(self.strategy)


@dataclass(frozen=True)
class BatchReport:
    results: tuple[StageResult, ...]
    counters: MulCounter
    elapsed: float
    mulmods_per_sec: float
    cond_reductions_per_iteration: int

    def first_factor(self) -> Optional[tuple[int, StageResult]]:
        for i, r in enumerate(self.results):
            if r.outcome is Outcome.FACTOR_FOUND:
                return i, r
        return None


def _lockstep_ladder(ar: ResidueArith, a24s, xs, zs, s: int) -> None:
    """x([s]P) for every lane, updating ``xs``/``zs`` in place.

    The loop order is bit-major: all lanes finish bit i before any lane
    starts bit i-1.  Counters are credited per lane exactly as
    :func:`ecm._ladder_raw` does.
    """
    lanes = len(xs)
    if s == 0:
        one = ar.lift(1)
        for j in range(lanes):
            xs[j], zs[j] = one, 0
        return
    kernel = ar.kernel
    mc = ar.correction
    m1 = ar.m
    sh = ar.width + 2
    lazy = ar.lazy

    def mul(x, y):
        v = kernel(x, y) - m1
        return v + (m1 & (v >> sh))

    if lazy:
        mul = kernel  # noqa: F811

    def add(x, y):
        v = x + y - mc
        return v + (mc & (v >> sh))

    def sub(x, y):
        v = x - y
        return v + (mc & (v >> sh))

    px, pz = list(xs), list(zs)
    state = []
    for j in range(lanes):
        X, Z, a24 = px[j], pz[j], a24s[j]
        s_ = add(X, Z)
        d_ = sub(X, Z)
        ss = mul(s_, s_)
        dd = mul(d_, d_)
        t = sub(ss, dd)
        state.append([X, Z, mul(ss, dd), mul(t, add(dd, mul(a24, t)))])
    swap = 0
    for i in range(s.bit_length() - 2, -1, -1):
        bit = (s >> i) & 1
        mask = -(swap ^ bit)
        swap = bit
        for j in range(lanes):
            x0, z0, x1, z1 = state[j]
            tx = (x0 ^ x1) & mask
            tz = (z0 ^ z1) & mask
            x0 ^= tx
            x1 ^= tx
            z0 ^= tz
            z1 ^= tz
            s0 = add(x0, z0)
            d0 = sub(x0, z0)
            s1 = add(x1, z1)
            d1 = sub(x1, z1)
            u = mul(d0, s1)
            v = mul(s0, d1)
            su = add(u, v)
            df = sub(u, v)
            x1 = mul(pz[j], mul(su, su))
            z1 = mul(px[j], mul(df, df))
            ss = mul(s0, s0)
            dd = mul(d0, d0)
            t = sub(ss, dd)
            a24 = a24s[j]
            state[j] = [mul(ss, dd), mul(t, add(dd, mul(a24, t))), x1, z1]
    mask = -swap
    for j in range(lanes):
        x0, z0, x1, z1 = state[j]
        xs[j] = x0 ^ ((x0 ^ x1) & mask)
        zs[j] = z0 ^ ((z0 ^ z1) & mask)

    steps = s.bit_length() - 1
    mults = (5 + ecm.STEP_MULMODS * steps) * lanes
    addsubs = (4 + ecm.STEP_ADDSUBS * steps) * lanes
    c, d = ar.counter, ar.counts
    c.submuls += d.submuls * mults
    c.adds += d.adds * mults + addsubs
    c.mulmods += d.mulmods * mults
    c.bm_parts += d.bm_parts * mults
    c.cond_reductions += d.cond_reductions * mults + addsubs + (0 if lazy else mults)


def run_lane_group(
    n: int, b1: int, sigmas: Sequence[int], strategy: str = "classic", lazy: bool = True
) -> list[StageResult]:
    """Stage 1 for up to one group of lanes in lockstep.

    Each item's ``counters`` hold the work done on that lane.
    """
    ctx = ecm.modulus_ctx(n)
    plan = ecm.stage1_plan(b1)
    lanes = len(sigmas)
    early: list[Optional[StageResult]] = []
    a24s, xs, zs = [], [], []
    ar = ResidueArith(ctx, strategy, lazy)
    for sig in sigmas:
        a24, X, Z, res = _lane_start(ar, ctx, sig, lazy)
        a24s.append(a24)
        xs.append(X)
        zs.append(Z)
        early.append(res)
    for q in plan.factors:
        _lockstep_ladder(ar, a24s, xs, zs, q)
    per_lane = MulCounter(**{k: v // lanes for k, v in ar.counter.as_dict().items()})
    results = []
    for j, sig in enumerate(sigmas):
        outcome, d = ecm._gcd_outcome(ecm.binary_gcd(zs[j] % n, n), n, ctx.r_exp)
        computed = StageResult(outcome, d, 1, per_lane.copy(), sig)
        results.append(early[j] if early[j] is not None else computed)
    return results


def _group_task(args) -> list[StageResult]:
    return run_lane_group(*args)


def _lane_start(ar: ResidueArith, ctx, sig, lazy: bool):
    """``(a24, X, Z, early_result)`` for one lane; failed setups get a
    placeholder curve so the lane still runs the common sequence."""
    try:
        curve, point = ecm.curve_from_sigma(ctx, sig, lazy)
    except ecm.InversionFailure as exc:
        outcome, d = ecm._gcd_outcome(exc.gcd, ctx.m.value, ctx.r_exp)
        early = StageResult(outcome, d, 1, MulCounter(), sig)
    except ConfigError:
        early = StageResult(Outcome.NO_FACTOR, None, 0, MulCounter(), sig)
    else:
        return ar.unwrap(curve.a24), ar.unwrap(point.X), ar.unwrap(point.Z), None
    return ar.lift(2), ar.lift(2), ar.lift(1), early


def reduction_op_census(job: BatchJob, optimized: bool) -> int:
    """Conditional reductions per fused ladder iteration (one doubling plus
    one differential addition) under the lazy (``optimized``) or eager
    discipline, measured on every lane of the first lane group."""
    ctx = ecm.modulus_ctx(job.n)
    counts = set()
    for sig in job.sigmas[: job.lanes]:
        counter = MulCounter()
        ar = ResidueArith(ctx, job.strategy, optimized, counter)
        a24, X, Z, _ = _lane_start(ar, ctx, sig, optimized)
        R1 = ecm._double(ar, a24, X, Z)
        before = counter.cond_reductions
        ecm._step(ar, a24, (X, Z), R1, (X, Z))
        counts.add(counter.cond_reductions - before)
    if len(counts) != 1:
        raise ContractError(f"lanes disagree on the reduction count: {sorted(counts)}")
    return counts.pop()


def run_batch(job: BatchJob) -> BatchReport:
    groups = [
        job.sigmas[i : i + job.lanes] for i in range(0, len(job.sigmas), job.lanes)
    ]
    tasks = [(job.n, job.b1, g, job.strategy, job.lazy) for g in groups]
    start = time.perf_counter()
    if job.parallelism == 1 or len(tasks) == 1:
        chunks = [_group_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=job.parallelism) as pool:
            chunks = list(pool.map(_group_task, tasks))
    elapsed = max(time.perf_counter() - start, MIN_ELAPSED)
    results = tuple(r for chunk in chunks for r in chunk)
    total = MulCounter()
    for r in results:
        total.merge(r.counters)
    return BatchReport(
        results=results,
        counters=total,
        elapsed=elapsed,
        mulmods_per_sec=total.mulmods / elapsed,
        cond_reductions_per_iteration=reduction_op_census(job, job.lazy),
    )

