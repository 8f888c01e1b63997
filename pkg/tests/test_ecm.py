import math
import random

import pytest
import sympy
from hypothesis import given, settings, strategies as st

from conftest import (
    A101, B101, P101, SmallCurve, affine_multiples, curve_points, rand_prime,
)
from simdmod import ecm
from simdmod.errors import ConfigError, ContractError, InvalidModulusError
from simdmod.modred import ResidueArith
from simdmod.mpnat import FixedNat, MulCounter


# --- plan and gcd --------------------------------------------------------------------

def test_primes_up_to_matches_sympy():
    assert ecm.primes_up_to(1) == []
    assert ecm.primes_up_to(30) == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    assert ecm.primes_up_to(20000) == list(sympy.primerange(2, 20001))


def test_stage1_plan_small():
    plan = ecm.stage1_plan(10)
    assert plan.factors == (8, 9, 5, 7)
    assert plan.k == 2520 == math.lcm(*range(1, 11))


@pytest.mark.parametrize("b1", [2, 3, 18, 100, 1000, 8192])
def test_stage1_plan_is_lcm(b1):
    plan = ecm.stage1_plan(b1)
    assert plan.k == math.lcm(*range(1, b1 + 1))
    assert plan.k_bitlen == plan.k.bit_length()
    for q in plan.factors:
        p = sympy.primefactors(q)[0]
        assert q <= b1 < q * p


def test_stage1_plan_bitlen_8192():
    assert ecm.stage1_plan(8192).k_bitlen == 11797


def test_stage1_plan_rejects_small_bound():
    with pytest.raises(ConfigError):
        ecm.stage1_plan(1)


@given(st.integers(0, 1 << 200), st.integers(0, 1 << 200))
def test_binary_gcd_matches_math_gcd(a, b):
    assert ecm.binary_gcd(a, b) == math.gcd(a, b)


def test_binary_gcd_edges():
    assert ecm.binary_gcd(0, 0) == 0
    assert ecm.binary_gcd(0, 12) == 12
    assert ecm.binary_gcd(-12, 18) == 6


# --- curve setup ------------------------------------------------------------------------

def test_degenerate_sigmas():
    n = 1000003
    for s in (0, 1, 3, 5, n - 1, n - 3, n - 5, n, 2 * n + 3):
        assert ecm.is_degenerate_sigma(s, n)
        with pytest.raises(ConfigError):
            ecm.curve_from_sigma(ecm.modulus_ctx(n), s)
    for s in (2, 4, 6, 7, n - 2):
        assert not ecm.is_degenerate_sigma(s, n)


def test_sigma_stream_deterministic():
    a = ecm.sigma_stream(5, 20)
    assert a == ecm.sigma_stream(5, 20)
    assert a != ecm.sigma_stream(6, 20)
    assert all(6 <= s < 1 << 32 for s in a)


def _suyama_plain(p, sigma):
    u, v = (sigma * sigma - 5) % p, 4 * sigma % p
    x0 = pow(u, 3, p) * pow(pow(v, 3, p), -1, p) % p
    A = (pow(v - u, 3, p) * (3 * u + v) * pow(4 * pow(u, 3, p) * v, -1, p) - 2) % p
    return A, x0


def _legendre(a, p):
    return sympy.legendre_symbol(a % p, p) if a % p else 0


def _order_containing(p, A, x0):
    """Order of the curve B*y^2 = x^3 + A*x^2 + x on which x0 is affine."""
    g = (x0**3 + A * x0 * x0 + x0) % p
    chi = _legendre(g, p)
    return p + 1 + chi * sum(_legendre(x**3 + A * x * x + x, p) for x in range(p))


@pytest.mark.parametrize("p", [1009, 1013, 2003, 4001])
def test_suyama_curves_have_order_divisible_by_twelve(p):
    rng = random.Random(p)
    for sigma in [6] + [rng.randrange(7, p - 6) for _ in range(5)]:
        if ecm.is_degenerate_sigma(sigma, p):
            continue
        A, x0 = _suyama_plain(p, sigma)
        if (A * A - 4) % p == 0:
            continue
        assert _order_containing(p, A, x0) % 12 == 0


def test_curve_from_sigma_matches_plain_formula():
    n = 1000003 * 1000033
    ctx = ecm.modulus_ctx(n)
    ar = ResidueArith(ctx)
    rinv = pow(1 << ctx.r_exp, -1, n)
    for sigma in (6, 7, 11, 123456789):
        curve, point = ecm.curve_from_sigma(ctx, sigma)
        A, x0 = _suyama_plain(n, sigma)
        a24 = ar.unwrap(curve.a24) * rinv % n
        assert a24 == (A + 2) * pow(4, -1, n) % n
        X, Z = ar.unwrap(point.X) * rinv % n, ar.unwrap(point.Z) * rinv % n
        assert X * pow(Z, -1, n) % n == x0


def test_curve_setup_inversion_failure_reports_gcd():
    # sigma = 7 gives u = 44, a multiple of 11.
    ctx = ecm.modulus_ctx(143)
    with pytest.raises(ecm.InversionFailure) as info:
        ecm.curve_from_sigma(ctx, 7)
    assert info.value.gcd == 11


def test_modulus_ctx_validation():
    with pytest.raises(InvalidModulusError):
        ecm.modulus_ctx(100)
    with pytest.raises(InvalidModulusError):
        ecm.modulus_ctx(1)


# --- group law over F_101 ----------------------------------------------------------------

POINTS = [pt for pt in curve_points(P101, A101, B101) if pt != (0, 0)]


def _expect(multiples, s):
    q = multiples[s - 1]
    return None if q is None else q[0]


def test_curve_has_expected_size():
    # 95 affine points plus infinity.
    assert len(curve_points(P101, A101, B101)) == 95


def test_ladder_matches_affine_oracle(f101):
    for pt in POINTS:
        multiples = affine_multiples(P101, A101, B101, pt, 50)
        P = f101.point(pt[0])
        for s in range(1, 51):
            assert f101.affine_x(ecm.ladder(f101.curve, P, s)) == _expect(multiples, s)


def test_double_and_diffadd_match_affine_oracle(f101):
    for pt in POINTS:
        multiples = affine_multiples(P101, A101, B101, pt, 51)
        P = f101.point(pt[0])
        for s in range(1, 26):
            sP = f101.point(*_xz(multiples[s - 1]))
            got = ecm.xz_double(f101.curve, sP)
            assert f101.affine_x(got) == _expect(multiples, 2 * s)
        for s in range(2, 50):
            diff = multiples[s - 2]
            # x-only addition needs a difference that is neither O nor (0, 0).
            if diff is None or diff[0] == 0:
                continue
            sP = f101.point(*_xz(multiples[s - 1]))
            prev = f101.point(*_xz(diff))
            got = ecm.xz_diffadd(sP, P, prev, f101.ctx)
            assert f101.affine_x(got) == _expect(multiples, s + 1)


def _xz(q):
    return (1, 0) if q is None else (q[0], 1)


def test_ladder_of_neutral_and_zero_scalar(f101):
    inf = ecm.neutral(f101.ctx)
    for s in (0, 1, 7, 50):
        assert f101.affine_x(ecm.ladder(f101.curve, inf, s)) is None
    assert f101.affine_x(ecm.ladder(f101.curve, f101.point(POINTS[0][0]), 0)) is None
    with pytest.raises(ContractError):
        ecm.ladder(f101.curve, inf, -1)


@pytest.mark.parametrize("lazy", [True, False])
def test_projective_scaling_invariance(lazy):
    c = SmallCurve(P101, A101, B101, lazy=lazy)
    for pt in POINTS[::7]:
        for lam in (2, 5, 77):
            a = c.affine_x(ecm.ladder(c.curve, c.point(pt[0]), 37, lazy=lazy))
            b = c.affine_x(ecm.ladder(c.curve, c.point(pt[0] * lam % P101, lam), 37, lazy=lazy))
            assert a == b


@pytest.mark.parametrize("strategy", ["classic", "opt_schoolbook", "opt_split_k2",
                                      "opt_split_k3"])
def test_strategies_agree_on_ladder(strategy, rng):
    prng = random.Random("test_strategies_agree_on_ladder")
    n = rand_prime(prng, 1 << 120, 1 << 121) * rand_prime(prng, 1 << 120, 1 << 121)
    ctx = ecm.modulus_ctx(n)
    curve, point = ecm.curve_from_sigma(ctx, 1234567)
    s = rng.getrandbits(300)
    ref = ecm.ladder(curve, point, s)
    got = ecm.ladder(curve, point, s, strategy=strategy)
    assert got == ref


def _ladder_by_steps(curve, P, s, counter, lazy):
    """Reference ladder built from the public double and step operations."""
    R0, R1 = P, ecm.xz_double(curve, P, counter, lazy=lazy)
    for i in range(s.bit_length() - 2, -1, -1):
        if (s >> i) & 1:
            R1, R0 = ecm.ladder_step(curve, R1, R0, P, counter, lazy=lazy)
        else:
            R0, R1 = ecm.ladder_step(curve, R0, R1, P, counter, lazy=lazy)
    return R0


@pytest.mark.parametrize("lazy", [True, False])
def test_bulk_ladder_counters_match_step_by_step(lazy, rng):
    prng = random.Random("test_bulk_ladder_counters_match_step_by_step")
    n = rand_prime(prng, 1 << 100, 1 << 101) * rand_prime(prng, 1 << 100, 1 << 101)
    ctx = ecm.modulus_ctx(n)
    curve, point = ecm.curve_from_sigma(ctx, 98765, lazy)
    for s in (1, 2, 3, 5, 6, rng.getrandbits(64) | 1, rng.getrandbits(100)):
        c1, c2 = MulCounter(), MulCounter()
        fast = ecm.ladder(curve, point, s, c1, lazy=lazy)
        ref = _ladder_by_steps(curve, point, s, c2, lazy) if s > 1 else point
        if s == 1:
            c2 = c1.copy()
        assert fast == ref
        assert c1.as_dict() == c2.as_dict()


@pytest.mark.parametrize("lazy", [True, False])
def test_step_census(lazy):
    n = 1000003 * 1000033
    ctx = ecm.modulus_ctx(n)
    curve, point = ecm.curve_from_sigma(ctx, 99, lazy)
    R1 = ecm.xz_double(curve, point, lazy=lazy)
    c = MulCounter()
    ecm.ladder_step(curve, point, R1, point, c, lazy=lazy)
    assert c.mulmods == ecm.STEP_MULMODS
    assert c.cond_reductions == ecm.STEP_ADDSUBS + (0 if lazy else ecm.STEP_MULMODS)


def test_ladder_counts_depend_only_on_bit_length():
    n = 1000003 * 1000033
    ctx = ecm.modulus_ctx(n)
    curve, point = ecm.curve_from_sigma(ctx, 99)
    counts = set()
    for s in (1 << 40, (1 << 41) - 1, (1 << 40) + 12345):
        c = MulCounter()
        ecm.ladder(curve, point, s, c)
        counts.add(tuple(c.as_dict().items()))
    assert len(counts) == 1


def test_plan_order_does_not_matter():
    prng = random.Random("test_plan_order_does_not_matter")
    n = rand_prime(prng, 1 << 60, 1 << 61) * rand_prime(prng, 1 << 60, 1 << 61)
    ctx = ecm.modulus_ctx(n)
    ar = ResidueArith(ctx)
    curve, point = ecm.curve_from_sigma(ctx, 4242)
    factors = list(ecm.stage1_plan(200).factors)
    results = []
    for order in (factors, factors[::-1], random.Random(1).sample(factors, len(factors))):
        pt = point
        for q in order:
            pt = ecm.ladder(curve, pt, q)
        results.append((ar.unwrap(pt.X), ar.unwrap(pt.Z)))
    (x1, z1) = results[0]
    for x2, z2 in results[1:]:
        assert (x1 * z2 - x2 * z1) % n == 0


# --- stage 1 ----------------------------------------------------------------------------------

def test_n143_with_precomputed_sigma():
    res = ecm.stage1(143, 18, 7)
    assert res.outcome is ecm.Outcome.FACTOR_FOUND
    assert res.factor.value == 11


def test_n143_has_no_ladder_path_sigma():
    # Every Suyama curve has 12 | order, and over F_11 and F_13 every such
    # order divides lcm(1..18); the ladder always kills the point mod both.
    ctx = ecm.modulus_ctx(143)
    outcomes = set()
    for sigma in range(6, 600):
        if ecm.is_degenerate_sigma(sigma, 143):
            continue
        try:
            ecm.curve_from_sigma(ctx, sigma)
        except ecm.InversionFailure:
            continue
        outcomes.add(ecm.stage1(143, 18, sigma, ctx=ctx).outcome)
    assert outcomes == {ecm.Outcome.TRIVIAL_GCD_N}


def test_stage1_finds_factor_when_order_is_smooth():
    prng = random.Random("test_stage1_finds_factor_when_order_is_smooth")
    rng = random.Random(3)
    b1 = 100
    k = ecm.stage1_plan(b1).k
    found = 0
    q = rand_prime(prng, 1 << 60, 1 << 61)
    for p in sympy.primerange(1000, 1400):
        sigma = rng.randrange(6, 1 << 30)
        if ecm.is_degenerate_sigma(sigma, p) or (sigma * sigma - 5) % p == 0:
            continue
        A, x0 = _suyama_plain(p, sigma)
        if (A * A - 4) % p == 0 or x0 == 0:
            continue
        n = p * q
        ctx = ecm.modulus_ctx(n)
        curve, point = ecm.curve_from_sigma(ctx, sigma)
        for f in ecm.stage1_plan(b1).factors:
            point = ecm.ladder(curve, point, f)
        z = ResidueArith(ctx).unwrap(point.Z)
        if k % _order_containing(p, A, x0) == 0:
            assert z % p == 0
            res = ecm.stage1(n, b1, sigma)
            assert res.outcome is ecm.Outcome.FACTOR_FOUND and res.factor.value == p
            found += 1
    assert found > 0


def test_stage1_lazy_and_eager_agree():
    prng = random.Random("test_stage1_lazy_and_eager_agree")
    n = rand_prime(prng, 1 << 20, 1 << 21) * rand_prime(prng, 1 << 50, 1 << 51)
    for sigma in ecm.sigma_stream(9, 5):
        a = ecm.stage1(n, 300, sigma, lazy=True)
        b = ecm.stage1(n, 300, sigma, lazy=False)
        assert a.outcome == b.outcome and a.factor == b.factor
        assert b.counters.cond_reductions > a.counters.cond_reductions


def test_factor_driver_reports_curve_and_counters():
    prng = random.Random("test_factor_driver_reports_curve_and_counters")
    p, q = 1000003, rand_prime(prng, 1 << 40, 1 << 41)
    res = ecm.factor(p * q, 2000, 40, seed=2)
    assert res.outcome is ecm.Outcome.FACTOR_FOUND
    assert (p * q) % res.factor.value == 0 and 1 < res.factor.value < p * q
    assert res.curves_tried == res.curve_index + 1
    assert res.counters.mulmods > 0


def test_factor_skips_degenerate_and_gives_up():
    prng = random.Random("test_factor_skips_degenerate_and_gives_up")
    n = rand_prime(prng, 1 << 60, 1 << 61) * rand_prime(prng, 1 << 60, 1 << 61)
    res = ecm.factor(n, 10, 3, sigmas=[0, 1, 5])
    assert res.outcome is ecm.Outcome.NO_FACTOR and res.counters.mulmods == 0
    with pytest.raises(ConfigError):
        ecm.factor(n, 10, 0)


def test_gcd_outcome_rejects_non_divisor():
    with pytest.raises(ContractError):
        ecm._gcd_outcome(7, 143, 32)
    assert ecm._gcd_outcome(143, 143, 32)[0] is ecm.Outcome.TRIVIAL_GCD_N
    assert ecm._gcd_outcome(1, 143, 32)[0] is ecm.Outcome.NO_FACTOR
    outcome, f = ecm._gcd_outcome(13, 143, 32)
    assert outcome is ecm.Outcome.FACTOR_FOUND and f == FixedNat(13, 32)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 400), st.integers(6, 1 << 32))
def test_stage1_outcome_is_consistent(b1, sigma):
    n = 1000003 * 999983
    res = ecm.stage1(n, b1, sigma)
    if res.outcome is ecm.Outcome.FACTOR_FOUND:
        assert n % res.factor.value == 0 and res.factor.value not in (1, n)
    else:
        assert res.factor is None
