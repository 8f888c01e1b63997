import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from simdmod.errors import ContractError
from simdmod.mpnat import FixedNat, MulCounter
from simdmod.truncmul import (
    ALPHAS,
    cost_ratio,
    karatsuba_kernel,
    low_plan,
    low_rows,
    mul_low,
    optimal_rho,
    split_limbs,
    toom3_kernel,
)

# Reference optimum split and cost ratio per multiplier, 3 decimals.
OPTIMA = {
    "Schoolbook": (0.500, 0.500),
    "Karatsuba-Ofman": (0.694, 0.808),
    "Toom-Cook-3": (0.775, 0.888),
    "Toom-Cook-4": (0.820, 0.923),
}


@pytest.mark.parametrize("name", list(OPTIMA))
def test_optimal_rho_matches_reference_values(name):
    prof = optimal_rho(ALPHAS[name])
    assert (round(prof.rho_hat, 3), round(prof.c_rho, 3)) == OPTIMA[name]


@pytest.mark.parametrize("name", list(OPTIMA))
def test_rho_hat_minimises_cost_ratio(name):
    alpha = ALPHAS[name]
    prof = optimal_rho(alpha)
    grid = [0.5 + i / 2000 for i in range(1001)]
    best = min(cost_ratio(r, alpha) for r in grid)
    assert prof.c_rho <= best + 1e-12


def test_cost_ratio_tends_to_one_as_alpha_drops():
    values = [optimal_rho(a).c_rho for a in (2.0, 1.8, 1.6, 1.4, 1.2, 1.05)]
    assert values == sorted(values)
    assert values[-1] < 1.0


def test_optimal_rho_rejects_bad_alpha():
    for alpha in (1.0, 0.5, 2.5):
        with pytest.raises(ContractError):
            optimal_rho(alpha)


def test_cost_ratio_infinite_below_half():
    assert cost_ratio(0.2, 2.0) == math.inf


def test_split_limbs_range():
    for n in range(1, 80):
        for rho in (0.5, 0.694, 0.775, 1.0):
            k = split_limbs(n, rho)
            assert -(-n // 2) <= k <= n


def _covered_pairs(n, plan):
    pairs = []
    for xo, yo, k, oo in plan:
        assert xo + yo == oo
        for i in range(k):
            for j in range(k):
                if oo + i + j < n:
                    pairs.append((xo + i, yo + j))
    return pairs


@pytest.mark.parametrize("rho", [0.5, 0.694, 0.775, 1.0])
def test_plan_covers_each_low_limb_product_once(rho):
    for n in range(1, 40):
        pairs = _covered_pairs(n, low_plan(n, rho))
        want = [(i, j) for i in range(n) for j in range(n) if i + j < n]
        assert sorted(pairs) == sorted(want)


def test_low_rows_unrolls_plan():
    for n in (1, 5, 16, 33):
        rows = low_rows(n, 0.5)
        assert sum(k for _, _, k, _ in rows) == sum(k * k for *_, k, _ in low_plan(n, 0.5))


def test_mul_low_submuls_at_half():
    n = 64
    c = MulCounter()
    a = FixedNat(random.Random(1).getrandbits(32 * n), 32 * n)
    mul_low(a, a, 32 * n, 0.5, c)
    assert c.submuls == n * (n + 1) // 2 == 2080
    assert abs(c.submuls - n * n / 2) <= n / 2


def test_mul_low_examples():
    a = FixedNat(0xFFFFFFFF_FFFFFFFF, 64)
    assert mul_low(a, a, 64).value == 1
    assert mul_low(a, a, 32).value == 1
    b = FixedNat(0x1_0000_0000, 64)
    assert mul_low(b, b, 64).value == 0
    c = mul_low(FixedNat(3, 96), FixedNat(5, 96), 40)
    assert c.value == 15 and c.width_bits == 64


def test_mul_low_validation():
    a = FixedNat(1, 64)
    with pytest.raises(ContractError):
        mul_low(a, a, 64, rho=0.4)
    with pytest.raises(ContractError):
        mul_low(a, a, 64, rho=1.1)
    with pytest.raises(ContractError):
        mul_low(a, a, 65)
    with pytest.raises(ContractError):
        mul_low(a, FixedNat(1, 64, 16), 64)


@pytest.mark.parametrize("mul", [None, karatsuba_kernel(2), toom3_kernel(2)],
                         ids=["school", "karatsuba", "toom3"])
def test_mul_low_random_oracle(mul):
    rng = random.Random(7)
    kwargs = {} if mul is None else {"mul": mul}
    for _ in range(3000):
        limbs = rng.randint(1, 24)
        w = 32 * limbs
        a, b = FixedNat(rng.getrandbits(w), w), FixedNat(rng.getrandbits(w), w)
        out_bits = rng.randint(1, w)
        rho = rng.choice((0.5, 0.6, 0.694, 0.775, 0.9, 1.0))
        got = mul_low(a, b, out_bits, rho, **kwargs)
        assert got.value == (a.value * b.value) % (1 << out_bits)


@settings(max_examples=300)
@given(st.integers(1, 30), st.floats(0.5, 1.0), st.data())
def test_mul_low_is_product_mod_power_of_two(limbs, rho, data):
    w = 32 * limbs
    x = data.draw(st.integers(0, (1 << w) - 1))
    y = data.draw(st.integers(0, (1 << w) - 1))
    out_bits = data.draw(st.integers(1, w))
    got = mul_low(FixedNat(x, w), FixedNat(y, w), out_bits, rho)
    assert got.value == x * y % (1 << out_bits)


def test_mul_low_8bit_limbs_sample():
    rng = random.Random(8)
    xs = [rng.getrandbits(16) for _ in range(120)] + [0, 1, 0xFF, 0x100, 0xFFFF]
    for x in xs:
        for y in xs:
            a, b = FixedNat(x, 16, 8), FixedNat(y, 16, 8)
            assert mul_low(a, b, 16).value == x * y & 0xFFFF


def test_submuls_shrink_relative_to_full_product():
    for n in (8, 16, 32, 64):
        c = MulCounter()
        a = FixedNat(1, 32 * n)
        mul_low(a, a, 32 * n, 0.5, c)
        assert c.submuls < n * n
