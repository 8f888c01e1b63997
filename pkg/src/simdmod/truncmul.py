"""Truncated (low-half) products with a tunable split fraction.

``mul_low`` computes ``a*b mod 2**out_bits`` by one full product of the low
``ceil(rho*n)`` limbs plus two recursive low-half products of the remaining
cross terms.  ``optimal_rho`` gives the split fraction minimising the cost
ratio against a full product for a multiplier of complexity O(n**alpha).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from .mpnat import (
    ContractError,
    FixedNat,
    IntMul,
    MulCounter,
    _karatsuba,
    _school,
    _toom3,
    round_width,
)


@dataclass(frozen=True)
class RhoProfile:
    alpha: float
    rho_hat: float
    c_rho: float


def cost_ratio(rho: float, alpha: float) -> float:
    """Upper bound of (low-half cost) / (full product cost) at split ``rho``."""
    denom = 1.0 - 2.0 * (1.0 - rho) ** alpha
    if denom <= 0:
        return math.inf
    return rho**alpha / denom


def optimal_rho(alpha: float) -> RhoProfile:
    if not 1.0 < alpha <= 2.0:
        raise ContractError(f"alpha must lie in ]1, 2], got {alpha}")
    rho_hat = 1.0 - 2.0 ** (-1.0 / (alpha - 1.0))
    return RhoProfile(alpha, rho_hat, cost_ratio(rho_hat, alpha))


# Exponents of the multipliers in this package, keyed like the tables.
ALPHAS = {
    "Schoolbook": 2.0,
    "Karatsuba-Ofman": math.log(3, 2),
    "Toom-Cook-3": math.log(5, 3),
    "Toom-Cook-4": math.log(7, 4),
}


def split_limbs(n: int, rho: float) -> int:
    """Limb count of the fully multiplied low part."""
    return min(n, max(-(-n // 2), math.ceil(rho * n - 1e-12)))


@lru_cache(maxsize=None)
def low_plan(n: int, rho: float) -> tuple[tuple[int, int, int, int], ...]:
    """Leaf products of the truncated recursion on ``n`` limbs.

    Each leaf ``(x_off, y_off, k, out_off)`` multiplies the ``k``-limb chunks
    of x and y starting at limb offsets ``x_off``/``y_off`` and adds the full
    product at limb offset ``out_off``.  Truncating the sum once at the end
    is equivalent to truncating every recursive low product.
    """
    if n < 2:
        return ((0, 0, n, 0),)
    k = split_limbs(n, rho)
    leaves = [(0, 0, k, 0)]
    if k < n:
        r = n - k
        for xo, yo, kk, oo in low_plan(r, rho):
            leaves.append((xo + k, yo, kk, oo + k))  # high(x) * low(y)
        for xo, yo, kk, oo in low_plan(r, rho):
            leaves.append((xo, yo + k, kk, oo + k))  # low(x) * high(y)
    return tuple(leaves)


@lru_cache(maxsize=None)
def low_rows(n: int, rho: float) -> tuple[tuple[int, int, int, int], ...]:
    """``low_plan`` with schoolbook leaves unrolled into limb-by-vector rows
    ``(x_limb, y_off, k, out_off)``."""
    return tuple(
        (xo + i, yo, k, oo + i) for xo, yo, k, oo in low_plan(n, rho) for i in range(k)
    )


def _mul_low(
    x: int, y: int, n: int, lb: int, rho: float,
    counter: Optional[MulCounter], mul: IntMul = _school,
) -> int:
    """``x*y mod 2**(n*lb)`` for x, y < 2**(n*lb)."""
    acc = 0
    if mul is _school:
        mask = (1 << lb) - 1
        products = 0
        for xi, yo, k, oo in low_rows(n, rho):
            acc += (((x >> (xi * lb)) & mask) * ((y >> (yo * lb)) & ((1 << (k * lb)) - 1))) << (oo * lb)
            products += k
        if counter is not None:
            counter.submuls += products
    else:
        for xo, yo, k, oo in low_plan(n, rho):
            km = (1 << (k * lb)) - 1
            acc += mul((x >> (xo * lb)) & km, (y >> (yo * lb)) & km, k, lb, counter) << (oo * lb)
    if counter is not None:
        counter.adds += len(low_plan(n, rho)) - 1
    return acc & ((1 << (n * lb)) - 1)


def mul_low(
    a: FixedNat, b: FixedNat, out_bits: int, rho: float = 0.5,
    counter: Optional[MulCounter] = None, mul: IntMul = _school,
) -> FixedNat:
    """Low ``out_bits`` bits of ``a*b``; result width is ``out_bits`` rounded
    up to whole limbs."""
    if not 0.5 <= rho <= 1.0:
        raise ContractError(f"rho must lie in [0.5, 1], got {rho}")
    if a.limb_bits != b.limb_bits:
        raise ContractError("limb sizes differ")
    if not 0 < out_bits <= min(a.width_bits, b.width_bits):
        raise ContractError(f"out_bits {out_bits} exceeds operand width")
    lb = a.limb_bits
    width = round_width(out_bits, lb)
    n = width // lb
    m = (1 << width) - 1
    v = _mul_low(a.value & m, b.value & m, n, lb, rho, counter, mul)
    return FixedNat(v & ((1 << out_bits) - 1), width, lb)


def karatsuba_kernel(threshold: int) -> IntMul:
    def kernel(x, y, n, lb, counter):
        return _karatsuba(x, y, n, lb, threshold, counter)

    return kernel


def toom3_kernel(threshold: int) -> IntMul:
    def kernel(x, y, n, lb, counter):
        return _toom3(x, y, n, lb, threshold, counter)

    return kernel
