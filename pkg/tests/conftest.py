import random

import pytest
import sympy

from simdmod.modred import ResidueArith, mont_setup
from simdmod.mpnat import FixedNat
from simdmod import ecm

# Test curve over F_101: B*y^2 = x^3 + A*x^2 + x.
P101, A101, B101 = 101, 7, 1


def affine_add(p, A, B, P, Q):
    """Montgomery-curve group law in affine coordinates; None is infinity."""
    if P is None:
        return Q
    if Q is None:
        return P
    (x1, y1), (x2, y2) = P, Q
    if x1 == x2 and (y1 + y2) % p == 0:
        return None
    if P == Q:
        lam = (3 * x1 * x1 + 2 * A * x1 + 1) * pow(2 * B * y1, -1, p) % p
    else:
        lam = (y2 - y1) * pow(x2 - x1, -1, p) % p
    x3 = (B * lam * lam - A - x1 - x2) % p
    return x3, (lam * (x1 - x3) - y1) % p


def affine_multiples(p, A, B, P, count):
    """[P, 2P, ..., count*P]."""
    out, acc = [], None
    for _ in range(count):
        acc = affine_add(p, A, B, acc, P)
        out.append(acc)
    return out


def curve_points(p, A, B):
    return [
        (x, y) for x in range(p) for y in range(p)
        if (B * y * y - (x ** 3 + A * x * x + x)) % p == 0
    ]


def rand_prime(rng, lo, hi):
    """Seeded random prime in [lo, hi)."""
    while True:
        p = sympy.nextprime(rng.randrange(lo, hi) - 1)
        if p < hi:
            return p


class SmallCurve:
    """Library objects for a Montgomery curve over a small prime field."""

    def __init__(self, p, A, B=1, lazy=True):
        self.p, self.A, self.B = p, A, B
        self.ctx = mont_setup(FixedNat(p, 32))
        self.ar = ResidueArith(self.ctx, lazy=lazy)
        a24 = (A + 2) * pow(4, -1, p) % p
        self.curve = ecm.CurveParams(self.ar.wrap(self.ar.lift(a24)), self.ctx)
        self.rinv = pow(1 << self.ctx.r_exp, -1, p)

    def point(self, x, z=1):
        return ecm.XZPoint(self.ar.wrap(self.ar.lift(x)), self.ar.wrap(self.ar.lift(z)))

    def plain(self, r):
        return r.value.value * self.rinv % self.p

    def affine_x(self, pt):
        """Affine x of an XZPoint, or None for the neutral element."""
        X, Z = self.plain(pt.X), self.plain(pt.Z)
        if Z == 0:
            return None
        return X * pow(Z, -1, self.p) % self.p


@pytest.fixture(scope="session")
def f101():
    return SmallCurve(P101, A101, B101)


@pytest.fixture
def rng():
    return random.Random(20240611)
