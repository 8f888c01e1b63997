"""Barrett and Montgomery reduction with lazy bound tracking.

Montgomery residues are kept in a work width ``R = 2**r_exp`` that is at
least two bits wider than the modulus, which lets products of unreduced
operands go through REDC without a final subtraction.  Every residue carries
a :class:`Bound` class stating how far above the canonical range it may be;
:func:`mont_mul` derives the output class from the input classes alone.

Four REDC strategies share one interface:

``classic``
    ``b = a*m' mod R`` as a low-half product, then ``b*m`` from the four
    half-width products of the schoolbook split.
``opt_schoolbook``
    As classic, but ``m0*b0`` is recovered from ``b*m = -a (mod R)`` so only
    three half-width products are computed.
``opt_split_k2`` / ``opt_split_k3``
    ``b*m`` by Karatsuba / Toom-3 with the product at point 0 rebuilt from
    the same congruence: 2 and 4 sub-products instead of 3 and 5.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

from .errors import ConfigError, ContractError, InvalidModulusError, WidthError
from .mpnat import (
    KARATSUBA_THRESHOLD,
    LIMB_BITS,
    TOOM3_THRESHOLD,
    FixedNat,
    IntMul,
    MulCounter,
    _mul_evaluated,
    _school,
    select,
    toom3_evaluate,
    toom3_interpolate,
)
from .truncmul import ALPHAS, _mul_low, karatsuba_kernel, low_rows, optimal_rho, toom3_kernel

# Verify every residue against its declared bound.  Costs one comparison per
# operation; disable with SIMDMOD_CHECK_BOUNDS=0 for throughput runs.
CHECK_BOUNDS = os.environ.get("SIMDMOD_CHECK_BOUNDS", "1") != "0"


def set_bound_checks(enabled: bool) -> bool:
    """Toggle residue bound verification; returns the previous setting."""
    global CHECK_BOUNDS
    previous, CHECK_BOUNDS = CHECK_BOUNDS, bool(enabled)
    return previous


class Bound(enum.IntEnum):
    """Magnitude classes, ordered by inclusion (m < R' = 2**n)."""

    CANONICAL = 0  # value < m
    LT_2M = 1  # value < 2m
    LT_2Rp = 2  # value < 2R'
    LT_3Rp = 3  # value < 3R'
    LT_13_4Rp = 4  # value < 13R'/4

    def limit(self, ctx: "MontCtx") -> int:
        return ctx.bound_limits[self]


def product_bound(bx: Bound, by: Bound) -> Bound:
    """Bound class of ``redc(x*y)`` given the operand classes.

    With ``R >= 4R' > 4m``: operands below 2m give a result below 2m;
    operands below 2R' give at most ``R' + m < 2R'``; operands below 3R'
    give less than ``9R'/4 + m < 13R'/4``.
    """
    hi = max(bx, by)
    if hi <= Bound.LT_2M:
        return Bound.LT_2M
    if hi <= Bound.LT_2Rp:
        return Bound.LT_2Rp
    if hi <= Bound.LT_3Rp:
        return Bound.LT_13_4Rp
    raise ContractError(f"no product bound for operand classes {bx.name} x {by.name}")


@dataclass(frozen=True, slots=True)
class LazyResidue:
    value: FixedNat
    bound: Bound

    def __reduce__(self):
        return (LazyResidue, (self.value, self.bound))


@dataclass(frozen=True)
class BarrettCtx:
    m: FixedNat
    n: int
    mu: FixedNat


@dataclass(frozen=True)
class MontCtx:
    m: FixedNat
    n: int
    r_exp: int
    m_prime: FixedNat
    two_m: FixedNat
    r_prime_exp: int
    r2: FixedNat

    def __post_init__(self):
        m = self.m.value
        if m < 3 or not m & 1:
            raise InvalidModulusError(f"modulus must be odd and >= 3, got {m}")
        if self.r_exp < self.n + 2:
            raise WidthError("work width must exceed the modulus by two bits")
        if (m * self.m_prime.value + 1) % (1 << self.r_exp):
            raise ContractError("m' is not -1/m mod R")
        rp = 1 << self.r_prime_exp
        object.__setattr__(self, "limb_bits", self.m_prime.limb_bits)
        object.__setattr__(self, "num_limbs", self.r_exp // self.m_prime.limb_bits)
        object.__setattr__(self, "_kernels", {})
        object.__setattr__(self, "bound_limits", {
            Bound.CANONICAL: m,
            Bound.LT_2M: 2 * m,
            Bound.LT_2Rp: 2 * rp,
            Bound.LT_3Rp: 3 * rp,
            Bound.LT_13_4Rp: 13 * rp // 4,
        })

    def residue(self, value: int, bound: Bound) -> LazyResidue:
        if CHECK_BOUNDS and not 0 <= value < self.bound_limits[bound]:
            raise ContractError(f"residue {value} violates bound {bound.name}")
        return LazyResidue(FixedNat(value, self.r_exp, self.limb_bits), bound)


# --- Barrett -----------------------------------------------------------------

def _check_modulus(m: FixedNat) -> int:
    if m.value < 3 or not m.value & 1:
        raise InvalidModulusError(f"modulus must be odd and >= 3, got {m.value}")
    return m.value.bit_length()


def barrett_setup(m: FixedNat) -> BarrettCtx:
    n = _check_modulus(m)
    mu = (1 << (2 * n)) // m.value
    return BarrettCtx(m, n, FixedNat(mu, m.width_bits * 2 + m.limb_bits, m.limb_bits))


def barrett_reduce(ctx: BarrettCtx, a: FixedNat) -> FixedNat:
    m = ctx.m.value
    if a.value >= m * m:
        raise ContractError("Barrett input must be below m^2")
    n = ctx.n
    r = a.value - (((a.value >> (n - 1)) * ctx.mu.value) >> (n + 1)) * m
    # r lies in [0, 3m): pick r-2m, r-m or r by the two borrow bits.
    w = n + 3
    r1, r2 = r - m, r - 2 * m
    b1, b2 = int(r1 < 0), int(r2 < 0)
    mask = (1 << w) - 1
    out = select(b1, r & mask, select(b2, r1 & mask, r2 & mask, w), w)
    return FixedNat(out, ctx.m.width_bits, ctx.m.limb_bits)


# --- Montgomery setup --------------------------------------------------------

def _neg_inverse_pow2(m: int, bits: int) -> int:
    """-1/m mod 2**bits by Hensel lifting; doubles correct bits per step."""
    inv, good = 1, 1  # m*1 = 1 mod 2
    while good < bits:
        good *= 2
        inv = (inv * (2 - m * inv)) & ((1 << good) - 1)
    return (-inv) & ((1 << bits) - 1)


def mont_setup(
    m: FixedNat, r_exp: Optional[int] = None, limb_bits: Optional[int] = None
) -> MontCtx:
    """Montgomery context for the odd modulus ``m``.

    ``r_exp`` defaults to the smallest even number of limbs covering
    ``bitlen(m) + 2`` bits; the even limb count lets both split strategies
    cut ``R`` into two equal halves.
    """
    n = _check_modulus(m)
    if n > m.width_bits - 2:
        raise WidthError(f"{n}-bit modulus leaves no two-bit headroom in {m.width_bits} bits")
    lb = limb_bits or m.limb_bits
    if lb < 2:
        raise ConfigError("limbs must be at least two bits wide")
    if r_exp is None:
        limbs = -(-(n + 2) // lb)
        r_exp = (limbs + (limbs & 1)) * lb
    if r_exp % (2 * lb):
        raise ConfigError(f"r_exp={r_exp} is not an even number of {lb}-bit limbs")
    if r_exp < n + 2:
        raise WidthError(f"r_exp={r_exp} gives less than two bits of headroom")
    mv = m.value
    R = 1 << r_exp
    return MontCtx(
        m=FixedNat(mv, r_exp, lb),
        n=n,
        r_exp=r_exp,
        m_prime=FixedNat(_neg_inverse_pow2(mv, r_exp), r_exp, lb),
        two_m=FixedNat(2 * mv, r_exp, lb),
        r_prime_exp=n,
        r2=FixedNat(R * R % mv, r_exp, lb),
    )


# --- REDC strategies -----------------------------------------------------------

@lru_cache(maxsize=None)
def _inv3(bits: int) -> int:
    return pow(3, -1, 1 << bits)


def _halves(ctx: MontCtx, b: int):
    h = ctx.num_limbs // 2
    hb = h * ctx.limb_bits
    hm = (1 << hb) - 1
    m = ctx.m.value
    return h, hb, b & hm, b >> hb, m & hm, m >> hb


def _bm_classic(ctx, a, b, counter):
    h, hb, b0, b1, m0, m1 = _halves(ctx, b)
    lb = ctx.limb_bits
    p11 = _school(m1, b1, h, lb, counter)
    mid = _school(m1, b0, h, lb, counter) + _school(m0, b1, h, lb, counter)
    p00 = _school(m0, b0, h, lb, counter)
    if counter is not None:
        counter.bm_parts += 4
        counter.adds += 3
    return (p11 << (2 * hb)) + (mid << hb) + p00


def _bm_opt_schoolbook(ctx, a, b, counter):
    h, hb, b0, b1, m0, m1 = _halves(ctx, b)
    lb = ctx.limb_bits
    p11 = _school(m1, b1, h, lb, counter)
    mid = _school(m1, b0, h, lb, counter) + _school(m0, b1, h, lb, counter)
    # b*m = -a (mod R) and R = 2**(2*hb), so m0*b0 is the missing low part.
    p00 = (-(a + (mid << hb))) & ((1 << (2 * hb)) - 1)
    if counter is not None:
        counter.bm_parts += 3
        counter.adds += 4
    return (p11 << (2 * hb)) + (mid << hb) + p00


def _bm_split_k2(ctx, a, b, counter, mul=None):
    h, hb, b0, b1, m0, m1 = _halves(ctx, b)
    lb = ctx.limb_bits
    mul = mul or _school

    def sub_mul(x, y):
        return mul(x, y, h, lb, counter)

    winf = sub_mul(b1, m1)
    w1 = _mul_evaluated(b0 + b1, m0 + m1, h, lb, sub_mul, counter)
    hm = (1 << hb) - 1
    w0_lo = -a & hm
    l0 = (w1 - w0_lo - winf) & hm  # low digits of the linear coefficient
    w0 = (-a - (l0 << hb)) & ((1 << (2 * hb)) - 1)
    if counter is not None:
        counter.bm_parts += 2
        counter.adds += 8
    return w0 + ((w1 - w0 - winf) << hb) + (winf << (2 * hb))


def _bm_split_k3(ctx, a, b, counter, mul=None):
    lb = ctx.limb_bits
    h = -(-ctx.num_limbs // 3)
    hb = h * lb
    hm = (1 << hb) - 1
    mul = mul or _school
    m = ctx.m.value
    be = toom3_evaluate(b & hm, (b >> hb) & hm, b >> (2 * hb))
    me = toom3_evaluate(m & hm, (m >> hb) & hm, m >> (2 * hb))

    def sub_mul(x, y):
        return mul(x, y, h, lb, counter)

    w1, wm1, w2 = (_mul_evaluated(be[i], me[i], h, lb, sub_mul, counter) for i in (1, 2, 3))
    winf = sub_mul(be[4], me[4])

    # 6*c1 = k - 3*w0 where c1 is the linear coefficient of b*m.
    k = 6 * w1 - 2 * wm1 - w2 + 12 * winf
    inv3 = _inv3(hb)
    neg_a = -a
    w0_lo = neg_a & hm
    # c1 mod H/2 needs only w0 mod H; its parity fixes bit hb of w0,
    # which then yields c1 mod H.
    c1_half = ((((k - 3 * w0_lo) & hm) >> 1) * inv3) & (hm >> 1)
    w0_2h = (neg_a - ((c1_half & 1) << hb)) & ((hm << 1) | 1)
    l0 = ((((k - 3 * w0_2h) & ((hm << 1) | 1)) >> 1) * inv3) & hm
    w0 = (neg_a - (l0 << hb)) & ((1 << (2 * hb)) - 1)

    coeffs = toom3_interpolate(w0, w1, wm1, w2, winf)
    if counter is not None:
        counter.bm_parts += 4
        counter.adds += 26
    return sum(c << (i * hb) for i, c in enumerate(coeffs))


@dataclass(frozen=True)
class Strategy:
    name: str
    rho: float
    low_mul: IntMul  # leaf multiplier of the low-half product b = a*m'
    product: IntMul  # full product x*y feeding REDC
    bm: Callable
    # Largest limb count at which every product of this strategy bottoms out
    # in schoolbook rows; up to here a straight-line kernel is generated.
    leaf_limit: int = 16


def _with_mul(bm, mul):
    def f(ctx, a, b, counter):
        return bm(ctx, a, b, counter, mul)

    return f


_K2 = karatsuba_kernel(KARATSUBA_THRESHOLD)
_K3 = toom3_kernel(TOOM3_THRESHOLD)

STRATEGIES = {
    "classic": Strategy("classic", 0.5, _school, _school, _bm_classic),
    "opt_schoolbook": Strategy("opt_schoolbook", 0.5, _school, _school, _bm_opt_schoolbook),
    "opt_split_k2": Strategy(
        "opt_split_k2", round(optimal_rho(ALPHAS["Karatsuba-Ofman"]).rho_hat, 3),
        _K2, _K2, _with_mul(_bm_split_k2, _K2), KARATSUBA_THRESHOLD,
    ),
    "opt_split_k3": Strategy(
        "opt_split_k3", round(optimal_rho(ALPHAS["Toom-Cook-3"]).rho_hat, 3),
        _K3, _K3, _with_mul(_bm_split_k3, _K3), 16,
    ),
}


def get_strategy(name: str) -> Strategy:
    try:
        return STRATEGIES[name.replace("-", "_")]
    except KeyError:
        raise ConfigError(f"unknown REDC strategy {name!r}") from None


def _redc(ctx: MontCtx, a: int, strategy: Strategy, counter: Optional[MulCounter]) -> int:
    r_exp = ctx.r_exp
    rmask = (1 << r_exp) - 1
    n = ctx.num_limbs
    b = _mul_low(a & rmask, ctx.m_prime.value, n, ctx.limb_bits, strategy.rho, counter,
                 strategy.low_mul)
    t = a + strategy.bm(ctx, a, b, counter)
    if counter is not None:
        counter.adds += 1
    if t & rmask:
        raise ContractError("a + b*m is not divisible by R; m' is inconsistent with m")
    return t >> r_exp


def _class_for(ctx: MontCtx, max_value: int) -> Bound:
    for bound in Bound:
        if max_value < ctx.bound_limits[bound]:
            return bound
    raise ContractError("REDC input too large: result exceeds every tracked bound")


def _redc_public(ctx, a: FixedNat, strategy: Strategy, counter) -> LazyResidue:
    av = a.value
    # Largest possible output for this input: (a + (R-1)m) / R.
    worst = (av + ((1 << ctx.r_exp) - 1) * ctx.m.value) >> ctx.r_exp
    bound = _class_for(ctx, worst)
    return ctx.residue(_redc(ctx, av, strategy, counter), bound)


def redc_classic(ctx: MontCtx, a: FixedNat, counter: Optional[MulCounter] = None) -> LazyResidue:
    """``a / R mod m`` without the final conditional subtraction."""
    return _redc_public(ctx, a, STRATEGIES["classic"], counter)


def redc_opt_schoolbook(
    ctx: MontCtx, a: FixedNat, counter: Optional[MulCounter] = None
) -> LazyResidue:
    return _redc_public(ctx, a, STRATEGIES["opt_schoolbook"], counter)


def redc_opt_split(
    ctx: MontCtx, a: FixedNat, k: int, counter: Optional[MulCounter] = None
) -> LazyResidue:
    if k not in (2, 3):
        raise ConfigError(f"split REDC supports k=2 or k=3, not {k}")
    return _redc_public(ctx, a, STRATEGIES[f"opt_split_k{k}"], counter)


# --- straight-line kernels ------------------------------------------------------
#
# For small limb counts the per-call loop overhead of the generic kernels
# dominates.  ``_kernel_factory`` emits Python source performing the same limb
# products as the generic path (schoolbook rows of the full product, the rows
# of ``low_rows`` for b = a*m' mod R, then the strategy's b*m assembly) with
# every shift and mask folded to a literal.  Operation counts do not depend on
# the data, so they are measured once on the generic path and added per call.

def _const_rows(name: str, k: int, var: str, lb: int) -> str:
    """Schoolbook rows of the constant ``k``-limb operand ``name_0..`` times ``var``."""
    terms = [f"{name}_0 * {var}"]
    terms += [f"({name}_{i} * {var} << {i * lb})" for i in range(1, k)]
    return "(" + " + ".join(terms) + ")"


def _limb_consts(name: str, expr: str, k: int, lb: int) -> list[str]:
    mask = (1 << lb) - 1
    return [f"    {name}_{i} = ({expr} >> {i * lb}) & {mask}" for i in range(k)]


def _emit_bm(name: str, n: int, lb: int, consts: list, body: list) -> None:
    if name in ("classic", "opt_schoolbook"):
        h = n // 2
        hb = h * lb
        consts += [f"    m0 = m & {(1 << hb) - 1}", f"    m1 = m >> {hb}"]
        consts += _limb_consts("M0", "m0", h, lb) + _limb_consts("M1", "m1", h, lb)
        body += [
            f"        b0 = b & {(1 << hb) - 1}",
            f"        b1 = b >> {hb}",
            f"        mid = {_const_rows('M1', h, 'b0', lb)} + {_const_rows('M0', h, 'b1', lb)}",
        ]
        if name == "classic":
            body.append(f"        p00 = {_const_rows('M0', h, 'b0', lb)}")
        else:
            body.append(f"        p00 = -(t + (mid << {hb})) & {(1 << 2 * hb) - 1}")
        body.append(
            f"        bm = ({_const_rows('M1', h, 'b1', lb)} << {2 * hb}) + (mid << {hb}) + p00"
        )
    elif name == "opt_split_k2":
        h = n // 2
        hb = h * lb
        hm = (1 << hb) - 1
        consts += [
            f"    m0 = m & {hm}", f"    m1 = m >> {hb}",
            f"    SL = (m0 + m1) & {hm}", f"    SH = (m0 + m1) >> {hb}",
        ]
        consts += _limb_consts("M1", "m1", h, lb) + _limb_consts("SL", "SL", h, lb)
        body += [
            f"        b0 = b & {hm}",
            f"        b1 = b >> {hb}",
            f"        winf = {_const_rows('M1', h, 'b1', lb)}",
            "        u = b0 + b1",
            f"        ul = u & {hm}",
            f"        uh = u >> {hb}",
            f"        w1 = {_const_rows('SL', h, 'ul', lb)} + ((uh * SL + SH * ul) << {hb})"
            f" + ((uh * SH) << {2 * hb})",
            f"        l0 = (w1 + t - winf) & {hm}",
            f"        w0 = (-t - (l0 << {hb})) & {(1 << 2 * hb) - 1}",
            f"        bm = w0 + ((w1 - w0 - winf) << {hb}) + (winf << {2 * hb})",
        ]
    elif name == "opt_split_k3":
        h = -(-n // 3)
        hb = h * lb
        hm = (1 << hb) - 1
        h2m = (hm << 1) | 1
        consts += [
            f"    me = toom3_evaluate(m & {hm}, (m >> {hb}) & {hm}, m >> {2 * hb})",
            "    VN2 = me[2] < 0",
        ]
        for i in (1, 2, 3):
            consts += [f"    V{i} = abs(me[{i}]) & {hm}", f"    VH{i} = abs(me[{i}]) >> {hb}"]
            consts += _limb_consts(f"V{i}", f"V{i}", h, lb)
        consts += ["    E4 = me[4]"] + _limb_consts("E4", "E4", h, lb)
        body += [
            f"        b0 = b & {hm}",
            f"        b1 = (b >> {hb}) & {hm}",
            f"        b2 = b >> {2 * hb}",
            "        s = b0 + b2",
            "        u1 = s + b1",
            "        u2 = s - b1",
            "        neg2 = u2 < 0",
            "        if neg2:",
            "            u2 = -u2",
            "        u3 = b0 + 2 * b1 + 4 * b2",
        ]
        for i in (1, 2, 3):
            body += [
                f"        ul = u{i} & {hm}",
                f"        uh = u{i} >> {hb}",
                f"        w{i} = {_const_rows(f'V{i}', h, 'ul', lb)} + ((uh * V{i} + VH{i} * ul)"
                f" << {hb}) + ((uh * VH{i}) << {2 * hb})",
            ]
        body += [
            "        if neg2 != VN2:",
            "            w2 = -w2",
            f"        winf = {_const_rows('E4', h, 'b2', lb)}",
            "        kk = 6 * w1 - 2 * w2 - w3 + 12 * winf",
            "        na = -t",
            f"        c1h = ((((kk - 3 * (na & {hm})) & {hm}) >> 1) * {_inv3(hb)}) & {hm >> 1}",
            f"        w02 = (na - ((c1h & 1) << {hb})) & {h2m}",
            f"        l0 = ((((kk - 3 * w02) & {h2m}) >> 1) * {_inv3(hb)}) & {hm}",
            f"        w0 = (na - (l0 << {hb})) & {(1 << 2 * hb) - 1}",
            "        c1 = ((kk - 3 * w0) // 2) // 3",
            "        c2 = (w1 + w2) // 2 - w0 - winf",
            "        c3 = (w1 - w2) // 2 - c1",
            f"        bm = w0 + (c1 << {hb}) + (c2 << {2 * hb}) + (c3 << {3 * hb})"
            f" + (winf << {4 * hb})",
        ]
    else:
        raise ConfigError(f"no kernel template for strategy {name!r}")


@lru_cache(maxsize=None)
def _kernel_factory(name: str, n: int, lb: int) -> Callable:
    st = STRATEGIES[name]
    r_exp = n * lb
    rmask = (1 << r_exp) - 1
    lmask = (1 << lb) - 1
    rows = low_rows(n, st.rho)
    consts = ["def make(m, mp):"]
    for yo, k in sorted({(yo, k) for _, yo, k, _ in rows}):
        consts.append(f"    P_{yo}_{k} = (mp >> {yo * lb}) & {(1 << (k * lb)) - 1}")
    prod = ["(x & %d) * y" % lmask]
    prod += [f"(((x >> {i * lb}) & {lmask}) * y << {i * lb})" for i in range(1, n)]
    low = [
        (f"((a >> {xi * lb}) & {lmask})" if xi else f"(a & {lmask})")
        + f" * P_{yo}_{k}" + (f" << {oo * lb}" if oo else "")
        for xi, yo, k, oo in rows
    ]
    body = [
        "    def kernel(x, y):",
        "        t = " + " + ".join(prod),
        f"        a = t & {rmask}",
        "        b = (" + " + ".join(f"({term})" for term in low) + f") & {rmask}",
    ]
    _emit_bm(name, n, lb, consts, body)
    body += [
        "        t += bm",
        f"        if t & {rmask}:",
        "            raise ContractError(\"a + b*m is not divisible by R; m' is inconsistent with m\")",
        f"        return t >> {r_exp}",
        "    return kernel",
    ]
    namespace = {"toom3_evaluate": toom3_evaluate, "ContractError": ContractError}
    exec("\n".join(consts + body), namespace)
    return namespace["make"]


def _generic_kernel(ctx: MontCtx, st: Strategy) -> Callable[[int, int], int]:
    n, lb = ctx.num_limbs, ctx.limb_bits

    def kernel(x, y):
        return _redc(ctx, st.product(x, y, n, lb, None), st, None)

    return kernel


_SHAPE_COUNTS: dict = {}


def mulredc_kernel(ctx: MontCtx, strategy: str = "classic") -> tuple[Callable, MulCounter]:
    """``(kernel, per_call_counts)`` where ``kernel(x, y)`` returns REDC of the
    product ``x*y`` and ``per_call_counts`` is the exact tally one call of the
    generic instrumented path would record (``mulmods`` included)."""
    st = get_strategy(strategy)
    key = (st.name, ctx.m.value, ctx.m_prime.value)
    cached = ctx._kernels.get(key)
    if cached is not None:
        return cached
    n, lb = ctx.num_limbs, ctx.limb_bits
    if n <= st.leaf_limit:
        kernel = _kernel_factory(st.name, n, lb)(ctx.m.value, ctx.m_prime.value)
    else:
        kernel = _generic_kernel(ctx, st)
    shape = (st.name, n, lb)
    counts = _SHAPE_COUNTS.get(shape)
    if counts is None:
        counts = MulCounter(mulmods=1)
        probe = (1 << ctx.n) - 1
        _redc(ctx, st.product(probe, probe, n, lb, counts), st, counts)
        _SHAPE_COUNTS[shape] = counts
    ctx._kernels[key] = (kernel, counts)
    return kernel, counts


def _tally(counter: MulCounter, d: MulCounter) -> None:
    counter.submuls += d.submuls
    counter.cond_reductions += d.cond_reductions
    counter.adds += d.adds
    counter.mulmods += d.mulmods
    counter.bm_parts += d.bm_parts


# --- conditional reductions ----------------------------------------------------

def _cond_sub(v: int, modulus: int, width: int) -> int:
    d = v - modulus
    return select(int(d < 0), v, d & ((1 << width) - 1), width)


def _cond_add(v: int, modulus: int, width: int) -> int:
    """``v`` is a two's-complement word of ``width`` bits."""
    borrow = v >> (width - 1) & 1
    return select(borrow, (v + modulus) & ((1 << width) - 1), v, width)


def cond_sub_after_add(
    ctx: MontCtx, a: FixedNat, counter: Optional[MulCounter] = None, use_two_m: bool = False
) -> FixedNat:
    """Map ``0 <= a < 2M`` into ``[0, M)`` with M = m (or 2m)."""
    modulus = ctx.two_m.value if use_two_m else ctx.m.value
    if CHECK_BOUNDS and a.value >= 2 * modulus:
        raise ContractError("reduction after addition needs a < 2M")
    if counter is not None:
        counter.cond_reductions += 1
    return FixedNat(_cond_sub(a.value, modulus, a.width_bits), a.width_bits, a.limb_bits)


def cond_add_after_sub(
    ctx: MontCtx, diff: FixedNat, borrow: int, use_two_m: bool = False,
    counter: Optional[MulCounter] = None,
) -> FixedNat:
    """Map the signed value ``diff - borrow*2**width`` from ``[-M, M)`` into
    ``[0, M)``, M = m (or 2m); the borrow bit alone drives the select."""
    modulus = ctx.two_m.value if use_two_m else ctx.m.value
    w = diff.width_bits
    signed = diff.value - (borrow << w)
    if CHECK_BOUNDS and not -modulus <= signed < modulus:
        raise ContractError("reduction after subtraction needs -M <= a < M")
    if counter is not None:
        counter.cond_reductions += 1
    out = select(borrow, (diff.value + modulus) & ((1 << w) - 1), diff.value, w)
    return FixedNat(out, w, diff.limb_bits)


# --- residue arithmetic --------------------------------------------------------

def mont_mul(
    ctx: MontCtx, x: LazyResidue, y: LazyResidue, strategy: str = "classic",
    counter: Optional[MulCounter] = None,
) -> LazyResidue:
    """``x*y/R mod m``; the result class follows from the operand classes."""
    bound = product_bound(x.bound, y.bound)
    kernel, counts = mulredc_kernel(ctx, strategy)
    if counter is not None:
        _tally(counter, counts)
    return ctx.residue(kernel(x.value.value, y.value.value), bound)


def _lazy_modulus(ctx: MontCtx, x: LazyResidue, y: LazyResidue) -> tuple[int, Bound]:
    hi = max(x.bound, y.bound)
    if hi == Bound.CANONICAL:
        return ctx.m.value, Bound.CANONICAL
    if hi == Bound.LT_2M:
        return ctx.two_m.value, Bound.LT_2M
    raise ContractError(f"addition operands must be below 2m, got {hi.name}")


def add_mod(
    ctx: MontCtx, x: LazyResidue, y: LazyResidue, counter: Optional[MulCounter] = None
) -> LazyResidue:
    """Sum of two residues, kept in the wider of the two operand classes."""
    modulus, bound = _lazy_modulus(ctx, x, y)
    if counter is not None:
        counter.adds += 1
        counter.cond_reductions += 1
    v = _cond_sub(x.value.value + y.value.value, modulus, ctx.r_exp)
    return ctx.residue(v, bound)


def sub_mod(
    ctx: MontCtx, x: LazyResidue, y: LazyResidue, counter: Optional[MulCounter] = None
) -> LazyResidue:
    modulus, bound = _lazy_modulus(ctx, x, y)
    if counter is not None:
        counter.adds += 1
        counter.cond_reductions += 1
    w = ctx.r_exp
    v = _cond_add((x.value.value - y.value.value) & ((1 << w) - 1), modulus, w)
    return ctx.residue(v, bound)


def canonicalize(
    ctx: MontCtx, x: LazyResidue, counter: Optional[MulCounter] = None
) -> LazyResidue:
    """Bring any tracked class down to ``[0, m)`` by conditional subtractions
    of m * 2**j, largest first."""
    m = ctx.m.value
    steps = 0
    while (m << steps) < x.bound.limit(ctx):
        steps += 1
    v = x.value.value
    for j in reversed(range(steps)):
        v = _cond_sub(v, m << j, ctx.r_exp)
    if counter is not None:
        counter.cond_reductions += steps
    return ctx.residue(v, Bound.CANONICAL)


def to_mont(ctx: MontCtx, x: FixedNat, counter: Optional[MulCounter] = None) -> LazyResidue:
    """``x*R mod m`` as a canonical residue."""
    if x.value >= ctx.m.value:
        raise ContractError("to_mont needs x < m")
    xr = ctx.residue(x.value, Bound.CANONICAL)
    r2 = ctx.residue(ctx.r2.value, Bound.CANONICAL)
    return canonicalize(ctx, mont_mul(ctx, xr, r2, "classic", counter), counter)


def from_mont(ctx: MontCtx, x: LazyResidue, counter: Optional[MulCounter] = None) -> FixedNat:
    """Canonical plain value of a Montgomery-form residue."""
    if counter is None:
        v = mulredc_kernel(ctx, "classic")[0](x.value.value, 1)
    else:
        v = _redc(ctx, x.value.value, STRATEGIES["classic"], counter)
    # x < R gives v <= m; one subtraction finishes.
    v = _cond_sub(v, ctx.m.value, ctx.r_exp)
    if counter is not None:
        counter.cond_reductions += 1
    return FixedNat(v, ctx.r_exp, ctx.limb_bits)


# --- raw-int arithmetic engine ---------------------------------------------------

class ResidueArith:
    """Modular arithmetic on raw Montgomery-form ints under one fixed bound
    discipline, for inner loops that cannot afford wrapper objects.

    ``lazy=True`` keeps every value below 2m: products skip the final
    subtraction, sums and differences use a single 2m correction.
    ``lazy=False`` is the eager baseline: every add, sub and product is
    followed by a reduction to ``[0, m)``.
    """

    def __init__(self, ctx: MontCtx, strategy: str = "classic", lazy: bool = True,
                 counter: Optional[MulCounter] = None):
        self.ctx = ctx
        self.strategy = get_strategy(strategy)
        self.kernel, self.counts = mulredc_kernel(ctx, strategy)
        self.lazy = lazy
        self.counter = counter if counter is not None else MulCounter()
        self.bound = Bound.LT_2M if lazy else Bound.CANONICAL
        self.limit = ctx.bound_limits[self.bound]
        self.m = ctx.m.value
        self.correction = 2 * self.m if lazy else self.m
        self.width = ctx.r_exp
        self.mask = (1 << ctx.r_exp) - 1
        self.n = ctx.num_limbs
        self.lb = ctx.limb_bits

    def _check(self, v: int) -> int:
        if CHECK_BOUNDS and not 0 <= v < self.limit:
            raise ContractError(f"value escaped bound {self.bound.name}")
        return v

    def mul(self, x: int, y: int) -> int:
        c = self.counter
        v = self.kernel(x, y)
        _tally(c, self.counts)
        if not self.lazy:
            v = _cond_sub(v, self.m, self.width)
            c.cond_reductions += 1
        return self._check(v)

    def add(self, x: int, y: int) -> int:
        c = self.counter
        c.adds += 1
        c.cond_reductions += 1
        return self._check(_cond_sub(x + y, self.correction, self.width))

    def sub(self, x: int, y: int) -> int:
        c = self.counter
        c.adds += 1
        c.cond_reductions += 1
        return self._check(_cond_add((x - y) & self.mask, self.correction, self.width))

    def cswap(self, bit: int, x: int, y: int) -> tuple[int, int]:
        t = (x ^ y) & (-bit & self.mask)
        return x ^ t, y ^ t

    def wrap(self, v: int) -> LazyResidue:
        return self.ctx.residue(v, self.bound)

    def unwrap(self, r: LazyResidue) -> int:
        if r.bound > self.bound:
            raise ContractError(f"{r.bound.name} operand in a {self.bound.name} kernel")
        return r.value.value

    def lift(self, x: int) -> int:
        """Plain integer (any size) to a canonical Montgomery-form int."""
        return (x % self.m) * (1 << self.width) % self.m
