"""ECM stage 1 with x-only Montgomery curve arithmetic.

Curves come from the Suyama sigma parametrization; points are kept as
projective ``(X : Z)`` pairs of Montgomery-form residues, with ``Z = 0``
encoding the neutral element.  Stage 1 multiplies the start point by every
maximal prime power below B1, one Montgomery ladder per prime power, and
takes a single gcd of the final Z with n.

All curve arithmetic runs through :class:`simdmod.modred.ResidueArith`,
which fixes the reduction discipline: lazy (every value kept below 2m, one
conditional correction per addition or subtraction, none after products) or
eager (every operation reduced to ``[0, m)``).
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional

from .errors import ConfigError, ContractError, InvalidModulusError
from .modred import LazyResidue, MontCtx, ResidueArith, mont_setup
from .mpnat import FixedNat, MulCounter, round_width

# Per fused ladder iteration (one doubling plus one differential addition
# sharing X+Z and X-Z of the doubled point).
STEP_MULMODS = 11
STEP_ADDSUBS = 8

# sigma = 0, +-1, +-3, +-5 give v = 0 or a singular curve.
DEGENERATE_SIGMAS = (0, 1, 3, 5)


class Outcome(enum.Enum):
    FACTOR_FOUND = "factor_found"
    NO_FACTOR = "no_factor"
    TRIVIAL_GCD_N = "trivial_gcd_n"


@dataclass(frozen=True)
class CurveParams:
    a24: LazyResidue  # (A + 2) / 4
    n_ctx: MontCtx


@dataclass(frozen=True)
class XZPoint:
    X: LazyResidue
    Z: LazyResidue


@dataclass(frozen=True)
class PrimePowerPlan:
    b1: int
    factors: tuple[int, ...]
    k_bitlen: int

    @property
    def k(self) -> int:
        return math.prod(self.factors)


@dataclass(frozen=True)
class StageResult:
    outcome: Outcome
    factor: Optional[FixedNat] = None
    curves_tried: int = 0
    counters: MulCounter = field(default_factory=MulCounter)
    sigma: Optional[int] = None
    curve_index: Optional[int] = None


class InversionFailure(ContractError):
    """A denominator shared a factor with n; ``gcd`` is that common factor."""

    def __init__(self, gcd: int):
        super().__init__(f"denominator not invertible, gcd = {gcd}")
        self.gcd = gcd


# --- plan and gcd -----------------------------------------------------------

def primes_up_to(limit: int) -> list[int]:
    if limit < 2:
        return []
    sieve = bytearray([1]) * (limit + 1)
    sieve[0:2] = b"\x00\x00"
    for p in range(2, math.isqrt(limit) + 1):
        if sieve[p]:
            sieve[p * p :: p] = bytes(len(range(p * p, limit + 1, p)))
    return [i for i, flag in enumerate(sieve) if flag]


@lru_cache(maxsize=None)
def stage1_plan(b1: int) -> PrimePowerPlan:
    """Maximal prime powers ``p**e <= b1 < p**(e+1)`` for every prime p <= b1."""
    if b1 < 2:
        raise ConfigError(f"B1 must be at least 2, got {b1}")
    factors = []
    for p in primes_up_to(b1):
        q = p
        while q * p <= b1:
            q *= p
        factors.append(q)
    return PrimePowerPlan(b1, tuple(factors), math.prod(factors).bit_length())


def binary_gcd(a: int, b: int) -> int:
    """Stein's gcd: shifts and subtractions only."""
    a, b = abs(a), abs(b)
    if a == 0:
        return b
    if b == 0:
        return a
    shift = ((a | b) & -(a | b)).bit_length() - 1
    a >>= (a & -a).bit_length() - 1
    while b:
        b >>= (b & -b).bit_length() - 1
        if a > b:
            a, b = b, a
        b -= a
    return a << shift


def _inverse(x: int, n: int) -> int:
    g = binary_gcd(x % n, n)
    if g != 1:
        raise InversionFailure(g)
    return pow(x, -1, n)


# --- curve setup ------------------------------------------------------------

def _as_int(v) -> int:
    return v.value if isinstance(v, FixedNat) else int(v)


def is_degenerate_sigma(sigma, n: int) -> bool:
    s = _as_int(sigma) % n
    return s in DEGENERATE_SIGMAS or n - s in DEGENERATE_SIGMAS


def curve_from_sigma(
    ctx: MontCtx, sigma, lazy: bool = True
) -> tuple[CurveParams, XZPoint]:
    """Suyama curve and start point for ``sigma``.

    u = sigma**2 - 5, v = 4*sigma, start point (u**3 : v**3) and
    a24 = (v - u)**3 * (3u + v) / (16 * u**3 * v), all mod n.  Raises
    :class:`InversionFailure` when the denominator is not a unit.
    """
    n = ctx.m.value
    s = _as_int(sigma) % n
    if is_degenerate_sigma(s, n):
        raise ConfigError(f"sigma = {s} gives a singular or undefined curve")
    u = (s * s - 5) % n
    v = 4 * s % n
    den = 16 * pow(u, 3, n) * v % n
    a24 = pow(v - u, 3, n) * (3 * u + v) * _inverse(den, n) % n
    ar = ResidueArith(ctx, lazy=lazy)
    curve = CurveParams(ar.wrap(ar.lift(a24)), ctx)
    point = XZPoint(ar.wrap(ar.lift(pow(u, 3, n))), ar.wrap(ar.lift(pow(v, 3, n))))
    return curve, point


def neutral(ctx: MontCtx, lazy: bool = True) -> XZPoint:
    ar = ResidueArith(ctx, lazy=lazy)
    return XZPoint(ar.wrap(ar.lift(1)), ar.wrap(0))


# --- x-only arithmetic on raw ints -------------------------------------------

def _double(ar: ResidueArith, a24: int, X: int, Z: int) -> tuple[int, int]:
    s = ar.add(X, Z)
    d = ar.sub(X, Z)
    ss = ar.mul(s, s)
    dd = ar.mul(d, d)
    t = ar.sub(ss, dd)  # 4XZ
    return ar.mul(ss, dd), ar.mul(t, ar.add(dd, ar.mul(a24, t)))


def _diffadd(ar: ResidueArith, P, Q, D) -> tuple[int, int]:
    u = ar.mul(ar.sub(P[0], P[1]), ar.add(Q[0], Q[1]))
    v = ar.mul(ar.add(P[0], P[1]), ar.sub(Q[0], Q[1]))
    su = ar.add(u, v)
    df = ar.sub(u, v)
    return ar.mul(D[1], ar.mul(su, su)), ar.mul(D[0], ar.mul(df, df))


def _step(ar: ResidueArith, a24: int, R0, R1, D):
    """``(2*R0, R0 + R1)`` given ``D = R1 - R0``, sharing R0's X+Z and X-Z."""
    s0 = ar.add(R0[0], R0[1])
    d0 = ar.sub(R0[0], R0[1])
    s1 = ar.add(R1[0], R1[1])
    d1 = ar.sub(R1[0], R1[1])
    u = ar.mul(d0, s1)
    v = ar.mul(s0, d1)
    su = ar.add(u, v)
    df = ar.sub(u, v)
    added = (ar.mul(D[1], ar.mul(su, su)), ar.mul(D[0], ar.mul(df, df)))
    ss = ar.mul(s0, s0)
    dd = ar.mul(d0, d0)
    t = ar.sub(ss, dd)
    doubled = (ar.mul(ss, dd), ar.mul(t, ar.add(dd, ar.mul(a24, t))))
    return doubled, added


def _ladder_raw(
    ar: ResidueArith, a24: int, X: int, Z: int, s: int
) -> tuple[int, int]:
    """x([s]P) on raw ints with the operations of :func:`_step` inlined.

    Counters are credited in bulk: every iteration performs the same
    operations, so the tally is the per-step census times the step count.
    """
    if s == 0:
        return ar.lift(1), 0
    kernel = ar.kernel
    m = ar.correction
    sh = ar.width + 2
    lazy = ar.lazy
    m1 = ar.m

    def mul(x, y):
        v = kernel(x, y) - m1
        return v + (m1 & (v >> sh))

    if lazy:
        mul = kernel  # noqa: F811

    def add(x, y):
        v = x + y - m
        return v + (m & (v >> sh))

    def sub(x, y):
        v = x - y
        return v + (m & (v >> sh))

    # R0 = P, R1 = 2P via the doubling formulas.
    s_ = add(X, Z)
    d_ = sub(X, Z)
    ss = mul(s_, s_)
    dd = mul(d_, d_)
    t = sub(ss, dd)
    x0, z0, x1, z1 = X, Z, mul(ss, dd), mul(t, add(dd, mul(a24, t)))
    swap = 0
    for i in range(s.bit_length() - 2, -1, -1):
        bit = (s >> i) & 1
        mask = -(swap ^ bit)
        swap = bit
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
        x1 = mul(Z, mul(su, su))
        z1 = mul(X, mul(df, df))
        ss = mul(s0, s0)
        dd = mul(d0, d0)
        t = sub(ss, dd)
        x0 = mul(ss, dd)
        z0 = mul(t, add(dd, mul(a24, t)))
    mask = -swap
    tx = (x0 ^ x1) & mask
    tz = (z0 ^ z1) & mask
    x0 ^= tx
    z0 ^= tz

    steps = s.bit_length() - 1
    mults = 5 + STEP_MULMODS * steps
    addsubs = 4 + STEP_ADDSUBS * steps
    c = ar.counter
    d = ar.counts
    c.submuls += d.submuls * mults
    c.adds += d.adds * mults + addsubs
    c.mulmods += d.mulmods * mults
    c.bm_parts += d.bm_parts * mults
    c.cond_reductions += d.cond_reductions * mults + addsubs + (0 if lazy else mults)
    return x0, z0


# --- public point operations ---------------------------------------------------

def _arith(ctx: MontCtx, lazy: bool, strategy: str, counter) -> ResidueArith:
    return ResidueArith(ctx, strategy, lazy, counter)


def xz_double(
    curve: CurveParams, p: XZPoint, counter: Optional[MulCounter] = None,
    strategy: str = "classic", lazy: bool = True,
) -> XZPoint:
    """x([2]P) with 2M + 2S + one multiplication by a24."""
    ar = _arith(curve.n_ctx, lazy, strategy, counter)
    X, Z = _double(ar, ar.unwrap(curve.a24), ar.unwrap(p.X), ar.unwrap(p.Z))
    return XZPoint(ar.wrap(X), ar.wrap(Z))


def xz_diffadd(
    p: XZPoint, q: XZPoint, diff: XZPoint, ctx: MontCtx,
    counter: Optional[MulCounter] = None, strategy: str = "classic", lazy: bool = True,
) -> XZPoint:
    """x(P + Q) from x(P), x(Q) and x(P - Q) with 4M + 2S."""
    ar = _arith(ctx, lazy, strategy, counter)
    raw = [(ar.unwrap(pt.X), ar.unwrap(pt.Z)) for pt in (p, q, diff)]
    X, Z = _diffadd(ar, *raw)
    return XZPoint(ar.wrap(X), ar.wrap(Z))


def ladder_step(
    curve: CurveParams, r0: XZPoint, r1: XZPoint, diff: XZPoint,
    counter: Optional[MulCounter] = None, strategy: str = "classic", lazy: bool = True,
) -> tuple[XZPoint, XZPoint]:
    """One fused ladder iteration: ``([2]R0, R0 + R1)``."""
    ar = _arith(curve.n_ctx, lazy, strategy, counter)
    raw = [(ar.unwrap(pt.X), ar.unwrap(pt.Z)) for pt in (r0, r1, diff)]
    doubled, added = _step(ar, ar.unwrap(curve.a24), *raw)
    return (
        XZPoint(ar.wrap(doubled[0]), ar.wrap(doubled[1])),
        XZPoint(ar.wrap(added[0]), ar.wrap(added[1])),
    )


def ladder(
    curve: CurveParams, p: XZPoint, s, counter: Optional[MulCounter] = None,
    strategy: str = "classic", lazy: bool = True,
) -> XZPoint:
    """x([s]P) by the Montgomery ladder; the operation sequence depends only
    on the bit length of s.  ``s = 0`` yields the neutral element."""
    s = _as_int(s)
    if s < 0:
        raise ContractError("scalar must be non-negative")
    ar = _arith(curve.n_ctx, lazy, strategy, counter)
    X, Z = _ladder_raw(ar, ar.unwrap(curve.a24), ar.unwrap(p.X), ar.unwrap(p.Z), s)
    return XZPoint(ar.wrap(X), ar.wrap(Z))


# --- stage 1 ----------------------------------------------------------------------

def modulus_ctx(n) -> MontCtx:
    nv = _as_int(n)
    if nv < 3 or not nv & 1:
        raise InvalidModulusError(f"n must be odd and at least 3, got {nv}")
    return mont_setup(FixedNat(nv, round_width(nv.bit_length() + 2)))


def _gcd_outcome(g: int, n: int, width: int) -> tuple[Outcome, Optional[FixedNat]]:
    if g == n or g == 0:
        return Outcome.TRIVIAL_GCD_N, None
    if g == 1:
        return Outcome.NO_FACTOR, None
    if n % g:
        raise ContractError(f"reported factor {g} does not divide n")
    return Outcome.FACTOR_FOUND, FixedNat(g, width)


def stage1(
    n, b1: int, sigma, strategy: str = "classic", lazy: bool = True,
    counter: Optional[MulCounter] = None, ctx: Optional[MontCtx] = None,
) -> StageResult:
    """One curve of ECM stage 1 on ``n``."""
    ctx = ctx or modulus_ctx(n)
    nv = ctx.m.value
    plan = stage1_plan(b1)
    counter = counter if counter is not None else MulCounter()
    sig = _as_int(sigma)
    try:
        curve, point = curve_from_sigma(ctx, sig, lazy)
    except InversionFailure as exc:
        outcome, d = _gcd_outcome(exc.gcd, nv, ctx.r_exp)
        return StageResult(outcome, d, 1, counter, sig)
    ar = ResidueArith(ctx, strategy, lazy, counter)
    a24 = ar.unwrap(curve.a24)
    X, Z = ar.unwrap(point.X), ar.unwrap(point.Z)
    for q in plan.factors:
        X, Z = _ladder_raw(ar, a24, X, Z, q)
    outcome, d = _gcd_outcome(binary_gcd(Z % nv, nv), nv, ctx.r_exp)
    return StageResult(outcome, d, 1, counter, sig)


def sigma_stream(seed: int, count: int) -> list[int]:
    """Deterministic curve seeds for a run."""
    rng = random.Random(seed)
    return [rng.randrange(6, 1 << 32) for _ in range(count)]


def factor(
    n, b1: int, curves: int, seed: int = 0, strategy: str = "classic",
    lazy: bool = True, sigmas: Optional[Iterable[int]] = None,
) -> StageResult:
    """Run curves until one yields a proper factor of n."""
    if curves < 1:
        raise ConfigError("need at least one curve")
    ctx = modulus_ctx(n)
    counter = MulCounter()
    seeds = list(sigmas) if sigmas is not None else sigma_stream(seed, curves)
    for i, sig in enumerate(seeds[:curves]):
        if is_degenerate_sigma(sig, ctx.m.value):
            continue
        res = stage1(ctx.m.value, b1, sig, strategy, lazy, counter, ctx)
        if res.outcome is Outcome.FACTOR_FOUND:
            return StageResult(res.outcome, res.factor, i + 1, counter, sig, i)
    return StageResult(Outcome.NO_FACTOR, None, min(curves, len(seeds)), counter)
