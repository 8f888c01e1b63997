"""Fixed-width natural numbers and instrumented limb multipliers.

A :class:`FixedNat` is an unsigned integer of a declared bit width, viewed as
an array of ``limb_bits``-bit limbs (least significant first).  The value is
held as a masked Python int; every multiplier below works on limb
boundaries and reports the number of limb products it performed to a
:class:`MulCounter`.

The ``_school``/``_karatsuba``/``_toom3`` kernels operate on plain ints with
an explicit limb count so that the reduction code in :mod:`simdmod.modred`
can call them without allocating wrapper objects.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, fields
from typing import Callable, Optional

from .errors import ContractError, WidthError

LIMB_BITS = 32
KARATSUBA_THRESHOLD = 8
TOOM3_THRESHOLD = 24

_HEX_RE = re.compile(r"[0-9a-fA-F]+")


@dataclass(slots=True)
class MulCounter:
    """Exact operation tallies for one computation.

    ``submuls`` counts limb products, ``cond_reductions`` conditional
    reductions, ``adds`` wide additions/subtractions (including the linear
    glue of the split multipliers), ``mulmods`` modular multiplications and
    ``bm_parts`` the sub-products spent forming ``b*m`` inside REDC.
    """

    submuls: int = 0
    cond_reductions: int = 0
    adds: int = 0
    mulmods: int = 0
    bm_parts: int = 0

    def copy(self) -> "MulCounter":
        return MulCounter(*(getattr(self, f.name) for f in fields(self)))

    def merge(self, other: "MulCounter") -> "MulCounter":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def __sub__(self, other: "MulCounter") -> "MulCounter":
        return MulCounter(
            *(getattr(self, f.name) - getattr(other, f.name) for f in fields(self))
        )

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True, slots=True)
class FixedNat:
    value: int
    width_bits: int
    limb_bits: int = LIMB_BITS

    def __post_init__(self):
        if self.limb_bits < 1 or self.width_bits < self.limb_bits:
            raise WidthError(f"bad width {self.width_bits}/{self.limb_bits}")
        if self.width_bits % self.limb_bits:
            raise WidthError(
                f"width {self.width_bits} is not a multiple of the limb size {self.limb_bits}"
            )
        if self.value < 0 or self.value >> self.width_bits:
            raise WidthError(f"value does not fit in {self.width_bits} bits")

    @classmethod
    def from_int(cls, value: int, width_bits: int, limb_bits: int = LIMB_BITS) -> "FixedNat":
        return cls(int(value), width_bits, limb_bits)

    @classmethod
    def from_limbs(cls, limbs, limb_bits: int = LIMB_BITS) -> "FixedNat":
        value = 0
        for i, limb in enumerate(limbs):
            if not 0 <= limb < (1 << limb_bits):
                raise WidthError(f"limb {i} out of range: {limb}")
            value |= limb << (i * limb_bits)
        return cls(value, len(limbs) * limb_bits, limb_bits)

    @classmethod
    def from_hex(cls, text: str, width_bits: int, limb_bits: int = LIMB_BITS) -> "FixedNat":
        text = text.strip()
        if not _HEX_RE.fullmatch(text):
            raise ValueError(f"not a hexadecimal string: {text!r}")
        return cls(int(text, 16), width_bits, limb_bits)

    @property
    def num_limbs(self) -> int:
        return self.width_bits // self.limb_bits

    @property
    def limbs(self) -> tuple:
        mask = (1 << self.limb_bits) - 1
        return tuple(
            (self.value >> (i * self.limb_bits)) & mask for i in range(self.num_limbs)
        )

    def to_hex(self) -> str:
        return format(self.value, f"0{-(-self.width_bits // 4)}x")

    def resize(self, width_bits: int) -> "FixedNat":
        """Zero-extend to a wider width; narrowing must not drop set bits."""
        return FixedNat(self.value, width_bits, self.limb_bits)

    def __reduce__(self):
        return (FixedNat, (self.value, self.width_bits, self.limb_bits))

    def __int__(self) -> int:
        return self.value

    def __index__(self) -> int:
        return self.value

    def __repr__(self) -> str:
        return f"FixedNat(0x{self.to_hex()}, w={self.width_bits}/{self.limb_bits})"


def round_width(bits: int, limb_bits: int = LIMB_BITS) -> int:
    """Smallest whole number of limbs covering ``bits`` (at least one limb)."""
    return max(1, -(-bits // limb_bits)) * limb_bits


def _same_shape(a: FixedNat, b: FixedNat) -> None:
    if a.width_bits != b.width_bits or a.limb_bits != b.limb_bits:
        raise WidthError(
            f"width mismatch: {a.width_bits}/{a.limb_bits} vs {b.width_bits}/{b.limb_bits}"
        )


def add(a: FixedNat, b: FixedNat) -> tuple[FixedNat, int]:
    _same_shape(a, b)
    s = a.value + b.value
    w = a.width_bits
    return FixedNat(s & ((1 << w) - 1), w, a.limb_bits), s >> w


def sub(a: FixedNat, b: FixedNat) -> tuple[FixedNat, int]:
    _same_shape(a, b)
    d = a.value - b.value
    w = a.width_bits
    return FixedNat(d & ((1 << w) - 1), w, a.limb_bits), int(d < 0)


def cmp(a: FixedNat, b: FixedNat) -> int:
    """-1, 0 or 1 as ``a`` is less than, equal to or greater than ``b``."""
    _same_shape(a, b)
    return (a.value > b.value) - (a.value < b.value)


def select(bit: int, if_one: int, if_zero: int, width_bits: int) -> int:
    """Mask select between two ``width_bits`` words; no data-dependent jump."""
    mask = -bit & ((1 << width_bits) - 1)
    return (if_one & mask) | (if_zero & ~mask & ((1 << width_bits) - 1))


# --- int-level kernels ---------------------------------------------------
#
# Signature: kernel(x, y, n, lb, counter) -> x*y, with x, y < 2**(n*lb).

IntMul = Callable[[int, int, int, int, Optional[MulCounter]], int]


def _school(x: int, y: int, n: int, lb: int, counter: Optional[MulCounter]) -> int:
    """Operand-scanning basecase: one limb-by-vector row per limb of ``x``.

    Each row is the ``mul_1`` primitive (n limb products); rows are shifted
    one limb apart and accumulated.
    """
    mask = (1 << lb) - 1
    acc = 0
    for s in range(0, n * lb, lb):
        acc += (((x >> s) & mask) * y) << s
    if counter is not None:
        counter.submuls += n * n
    return acc


def _mul_evaluated(
    u: int, v: int, h: int, lb: int, mul: Callable[[int, int], int],
    counter: Optional[MulCounter],
) -> int:
    """Product of two evaluation-point values that overflow ``h`` limbs by a
    few bits (and may be negative).

    Only the ``h``-limb low parts go through ``mul``; the small high parts
    contribute by shifted additions of small multiples.
    """
    neg = (u < 0) != (v < 0)
    u, v = abs(u), abs(v)
    hb = h * lb
    hm = (1 << hb) - 1
    ul, uh = u & hm, u >> hb
    vl, vh = v & hm, v >> hb
    # The glue terms are added unconditionally so the operation count does
    # not depend on the data.
    p = mul(ul, vl) + ((uh * vl + vh * ul) << hb) + ((uh * vh) << (2 * hb))
    if counter is not None:
        counter.adds += 2
    return -p if neg else p


def _karatsuba(
    x: int, y: int, n: int, lb: int, threshold: int, counter: Optional[MulCounter]
) -> int:
    if n <= threshold:
        return _school(x, y, n, lb, counter)
    h = (n + 1) // 2
    hb = h * lb
    hm = (1 << hb) - 1
    x0, x1 = x & hm, x >> hb
    y0, y1 = y & hm, y >> hb

    def sub_mul(a, b):
        return _karatsuba(a, b, h, lb, threshold, counter)

    z0 = sub_mul(x0, y0)
    z2 = sub_mul(x1, y1)
    z1 = _mul_evaluated(x0 + x1, y0 + y1, h, lb, sub_mul, counter)
    if counter is not None:
        counter.adds += 6
    return z0 + ((z1 - z0 - z2) << hb) + (z2 << (2 * hb))


def toom3_evaluate(p0: int, p1: int, p2: int) -> tuple[int, int, int, int, int]:
    """Values of ``p0 + p1*t + p2*t**2`` at t = 0, 1, -1, 2, infinity."""
    s = p0 + p2
    return p0, s + p1, s - p1, p0 + 2 * p1 + 4 * p2, p2


def toom3_interpolate(w0: int, w1: int, wm1: int, w2: int, winf: int) -> tuple[int, ...]:
    """Coefficients c0..c4 of the degree-4 product from its values at
    0, 1, -1, 2, infinity.  Every division is exact."""
    t = 6 * w1 - 2 * wm1 - w2 - 3 * w0 + 12 * winf
    c1 = (t // 2) // 3
    c2 = (w1 + wm1) // 2 - w0 - winf
    c3 = (w1 - wm1) // 2 - c1
    return w0, c1, c2, c3, winf


def _toom3(
    x: int, y: int, n: int, lb: int, threshold: int, counter: Optional[MulCounter]
) -> int:
    if n <= threshold:
        return _school(x, y, n, lb, counter)
    h = (n + 2) // 3
    hb = h * lb
    hm = (1 << hb) - 1
    xe = toom3_evaluate(x & hm, (x >> hb) & hm, x >> (2 * hb))
    ye = toom3_evaluate(y & hm, (y >> hb) & hm, y >> (2 * hb))

    def sub_mul(a, b):
        return _toom3(a, b, h, lb, threshold, counter)

    w0 = sub_mul(xe[0], ye[0])
    w1, wm1, w2 = (
        _mul_evaluated(xe[i], ye[i], h, lb, sub_mul, counter) for i in (1, 2, 3)
    )
    winf = sub_mul(xe[4], ye[4])
    coeffs = toom3_interpolate(w0, w1, wm1, w2, winf)
    if counter is not None:
        counter.adds += 20
    return sum(c << (i * hb) for i, c in enumerate(coeffs))


# --- FixedNat multipliers ----------------------------------------------------

def _product(a: FixedNat, b: FixedNat, value: int) -> FixedNat:
    return FixedNat(value, 2 * a.width_bits, a.limb_bits)


def mul_schoolbook(a: FixedNat, b: FixedNat, counter: Optional[MulCounter] = None) -> FixedNat:
    _same_shape(a, b)
    return _product(a, b, _school(a.value, b.value, a.num_limbs, a.limb_bits, counter))


def mul_karatsuba(
    a: FixedNat, b: FixedNat, threshold: int = KARATSUBA_THRESHOLD,
    counter: Optional[MulCounter] = None,
) -> FixedNat:
    _same_shape(a, b)
    if threshold < 1:
        raise ContractError("threshold must be at least one limb")
    v = _karatsuba(a.value, b.value, a.num_limbs, a.limb_bits, threshold, counter)
    return _product(a, b, v)


def mul_toom3(
    a: FixedNat, b: FixedNat, threshold: int = TOOM3_THRESHOLD,
    counter: Optional[MulCounter] = None,
) -> FixedNat:
    _same_shape(a, b)
    if threshold < 1:
        raise ContractError("threshold must be at least one limb")
    v = _toom3(a.value, b.value, a.num_limbs, a.limb_bits, threshold, counter)
    return _product(a, b, v)
