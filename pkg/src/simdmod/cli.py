"""Command-line entry point: ``simdmod {factor,bench,tables,selftest}``."""

from __future__ import annotations

import argparse
import copy
import json
import random
import statistics
import sys
import time
from fractions import Fraction
from typing import Callable, Optional

from . import batch, ecm
from .errors import ContractError
from .modred import (
    Bound,
    MontCtx,
    ResidueArith,
    STRATEGIES,
    canonicalize,
    get_strategy,
    mont_mul,
    mont_setup,
)
from .mpnat import FixedNat, MulCounter, mul_karatsuba, mul_toom3, round_width
from .truncmul import ALPHAS, optimal_rho

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NO_FACTOR = 2
EXIT_SELFTEST = 3

DEFAULT_WIDTH = 254
DEFAULT_B1 = 8192
BENCH_REFERENCE_WIDTH = 192

STRATEGY_FLAGS = {
    "classic": "classic",
    "opt-schoolbook": "opt_schoolbook",
    "opt-k2": "opt_split_k2",
    "opt-k3": "opt_split_k3",
}


class InputError(ValueError):
    pass


class Emitter:
    """Writes either human-readable lines or one JSON object per line."""

    def __init__(self, fmt: str, stream=None):
        self.fmt = fmt
        self.stream = stream or sys.stdout

    def note(self, text: str) -> None:
        """Text-only line (headings); omitted from JSON output."""
        if self.fmt != "jsonl":
            print(text, file=self.stream)

    def record(self, text: str, **fields) -> None:
        if self.fmt == "jsonl":
            print(json.dumps(fields, sort_keys=True), file=self.stream)
        else:
            print(text, file=self.stream)


# --- input handling --------------------------------------------------------------

def parse_modulus(text: Optional[str], width: int) -> int:
    if text is None:
        raise InputError("--n is required")
    try:
        n = FixedNat.from_hex(text, round_width(max(width, 4 * len(text.strip())))).value
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if n < 3 or not n & 1:
        raise InputError(f"modulus must be odd and at least 3, got 0x{n:x}")
    if n.bit_length() > width:
        raise InputError(f"modulus has {n.bit_length()} bits; capacity is {width}")
    return n


# --- factor ------------------------------------------------------------------------

def cmd_factor(args, out: Emitter) -> int:
    n = parse_modulus(args.n, args.width)
    strategy = STRATEGY_FLAGS[args.strategy]
    sigmas = ecm.sigma_stream(args.seed, args.curves)
    start = time.perf_counter()
    if args.lanes == 1 and args.parallelism == 1:
        res = ecm.factor(n, args.b1, args.curves, strategy=strategy, sigmas=sigmas)
        found = (res.curve_index, res) if res.outcome is ecm.Outcome.FACTOR_FOUND else None
        tried = res.curves_tried
    else:
        found, tried = None, 0
        chunk = args.lanes * args.parallelism
        for i in range(0, len(sigmas), chunk):
            job = batch.BatchJob(
                n, args.b1, sigmas[i : i + chunk], args.lanes, args.parallelism, strategy
            )
            hit = batch.run_batch(job).first_factor()
            if hit is not None:
                found, tried = (i + hit[0], hit[1]), i + hit[0] + 1
                break
            tried = i + len(job.sigmas)
    elapsed = time.perf_counter() - start
    if found is None:
        out.record(
            f"no factor of 0x{n:x} after {tried} curves (B1={args.b1})",
            command="factor", n=f"{n:x}", outcome="no_factor", curves_tried=tried,
            b1=args.b1, elapsed=elapsed,
        )
        return EXIT_NO_FACTOR
    index, res = found
    d = res.factor.value
    if n % d:
        raise ContractError(f"reported factor {d} does not divide n")
    out.record(
        f"factor {d} (0x{d:x}) of 0x{n:x}: cofactor {n // d}, sigma={res.sigma}, "
        f"curve {index}, B1={args.b1}",
        command="factor", n=f"{n:x}", outcome="factor_found", factor=f"{d:x}",
        cofactor=f"{n // d:x}", sigma=res.sigma, curve_index=index,
        curves_tried=index + 1, b1=args.b1, elapsed=elapsed,
    )
    return EXIT_OK


# --- bench -----------------------------------------------------------------------------

def _bench_modulus(args) -> int:
    if args.n is not None:
        return parse_modulus(args.n, args.width)
    rng = random.Random(args.seed)
    return rng.getrandbits(args.width) | (1 << (args.width - 1)) | 1


def _bench_state(ctx, strategy: str, lazy: bool, seed: int):
    counter = MulCounter()
    ar = ResidueArith(ctx, strategy, lazy, counter)
    for sigma in ecm.sigma_stream(seed, 64):
        try:
            curve, point = ecm.curve_from_sigma(ctx, sigma, lazy)
            break
        except (ecm.InversionFailure, ValueError):
            continue
    else:
        raise InputError("no usable curve for the bench modulus")
    return ar, [ar.unwrap(curve.a24), ar.unwrap(point.X), ar.unwrap(point.Z)]


def measure_throughput(
    n: int, strategy: str, seconds: float, seed: int = 0, unit_bits: int = 64,
) -> dict:
    """Ladder throughput of the lazy and eager disciplines on one curve.

    Work units (one ladder over a ``unit_bits``-bit scalar) run in adjacent
    lazy/eager pairs, alternating which goes first, until each discipline
    has run for ``seconds``.  Besides the window totals this returns the
    median over pairs of the eager/lazy unit-time ratio: neighbouring units
    see the same host load, which makes the ratio far steadier than
    comparing totals.
    """
    ctx = ecm.modulus_ctx(n)
    states = {lazy: _bench_state(ctx, strategy, lazy, seed) for lazy in (True, False)}
    scalar = (1 << unit_bits) - 1
    elapsed = {True: 0.0, False: 0.0}
    ratios = []
    window = max(seconds, 1e-3)
    while min(elapsed.values()) < window:
        order = (True, False) if len(ratios) % 2 == 0 else (False, True)
        unit = {}
        for lazy in order:
            ar, st = states[lazy]
            t0 = time.perf_counter()
            st[1], st[2] = ecm._ladder_raw(ar, st[0], st[1], st[2], scalar)
            unit[lazy] = max(time.perf_counter() - t0, batch.MIN_ELAPSED)
            elapsed[lazy] += unit[lazy]
        ratios.append(unit[False] / unit[True])
    out = {"lazy_over_eager": statistics.median(ratios), "pairs": len(ratios)}
    for lazy, (ar, _) in states.items():
        out[lazy] = {
            "mulmods": ar.counter.mulmods,
            "elapsed": elapsed[lazy],
            "mulmods_per_sec": ar.counter.mulmods / max(elapsed[lazy], batch.MIN_ELAPSED),
            "cond_reductions": ar.counter.cond_reductions,
        }
    return out


def cmd_bench(args, out: Emitter) -> int:
    n = _bench_modulus(args)
    width = n.bit_length()
    names = list(STRATEGIES) if args.all_strategies else [STRATEGY_FLAGS[args.strategy]]
    scale = (width / BENCH_REFERENCE_WIDTH) ** 2
    job = batch.BatchJob(n, 2, ecm.sigma_stream(args.seed, 4), lanes=4)
    census = {lazy: batch.reduction_op_census(job, lazy) for lazy in (True, False)}
    for name in names:
        res = measure_throughput(n, name, args.seconds, args.seed)
        for lazy in (True, False):
            r = res[lazy]
            label = "lazy" if lazy else "eager"
            rate = r["mulmods_per_sec"]
            out.record(
                f"{name:15s} {label:5s} {rate:10.0f} MulMod/s  scaled to "
                f"{BENCH_REFERENCE_WIDTH} bit: {rate * scale:10.0f} MulMod/s  "
                f"({census[lazy]} cond. reductions per ladder step)",
                command="bench", strategy=name, discipline=label, width=width,
                mulmods=r["mulmods"], elapsed=r["elapsed"], mulmods_per_sec=rate,
                scaled_mulmods_per_sec=rate * scale,
                cond_reductions_per_iteration=census[lazy],
            )
        ratio = res["lazy_over_eager"]
        out.record(
            f"{name:15s} lazy/eager throughput ratio {ratio:.3f} "
            f"(median of {res['pairs']} paired units)",
            command="bench", strategy=name, summary="lazy_over_eager", ratio=ratio,
            pairs=res["pairs"],
        )
    return EXIT_OK


# --- tables ----------------------------------------------------------------------------

MULTIPLIER_ROWS = ("Schoolbook", "Karatsuba-Ofman", "Toom-Cook-3", "Toom-Cook-4")


def split_table() -> list[tuple[str, float, float, float]]:
    rows = []
    for name in MULTIPLIER_ROWS:
        prof = optimal_rho(ALPHAS[name])
        rows.append((name, prof.alpha, prof.rho_hat, prof.c_rho))
    return rows


def saving_table() -> list[tuple[str, Fraction]]:
    """Cost of the high product with the saved sub-multiplication, relative
    to computing it in full."""
    rows = [("Schoolbook", Fraction(3, 4))]
    for name, k in (("Karatsuba-Ofman", 2), ("Toom-Cook-3", 3), ("Toom-Cook-4", 4)):
        rows.append((name, Fraction(2 * k - 2, 2 * k - 1)))
    return rows


def cmd_tables(args, out: Emitter) -> int:
    out.note("optimal split of the truncated product")
    out.note(f"{'algorithm':16s} {'alpha':>6s} {'rho':>6s} {'C_rho':>6s}")
    for name, alpha, rho, c in split_table():
        out.record(
            f"{name:16s} {alpha:6.3f} {rho:6.3f} {c:6.3f}",
            table="split", algorithm=name, alpha=round(alpha, 6), rho_hat=f"{rho:.3f}",
            c_rho=f"{c:.3f}",
        )
    out.note("")
    out.note("high product with one saved sub-multiplication")
    out.note(f"{'algorithm':16s} {'C_hat':>6s}")
    for name, frac in saving_table():
        out.record(
            f"{name:16s} {float(frac):6.3f}",
            table="saving", algorithm=name, c_hat=f"{float(frac):.3f}",
            ratio=f"{frac.numerator}/{frac.denominator}",
        )
    return EXIT_OK


# --- selftest -----------------------------------------------------------------------------

FAULTS = ("m-prime",)


def _corrupt_m_prime(ctx: MontCtx) -> MontCtx:
    """A copy of ``ctx`` whose m' is off by one bit; bypasses validation."""
    bad = copy.copy(ctx)
    mp = ctx.m_prime
    object.__setattr__(bad, "m_prime", FixedNat(mp.value ^ 2, mp.width_bits, mp.limb_bits))
    object.__setattr__(bad, "_kernels", {})
    return bad


def _suite_oracle(rng: random.Random, fault) -> list:
    failures = []
    for bits in (64, 128, 254):
        for _ in range(100):
            m = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
            ctx = mont_setup(FixedNat(m, round_width(bits + 2)))
            R = 1 << ctx.r_exp
            x, y = rng.randrange(m), rng.randrange(m)
            X = ctx.residue(x * R % m, Bound.CANONICAL)
            Y = ctx.residue(y * R % m, Bound.CANONICAL)
            for name in STRATEGIES:
                got = canonicalize(ctx, mont_mul(ctx, X, Y, name)).value.value
                if got != x * y * R % m:
                    failures.append({"m": hex(m), "x": hex(x), "y": hex(y), "strategy": name})
    return failures


def _suite_lazy_bounds(rng: random.Random, fault) -> list:
    failures = []
    for bits in (64, 128, 254):
        for _ in range(50):
            m = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
            ctx = mont_setup(FixedNat(m, round_width(bits + 2)))
            if fault == "m-prime":
                ctx = _corrupt_m_prime(ctx)
            rp = 1 << ctx.r_prime_exp
            rinv = pow(1 << ctx.r_exp, -1, m)
            for bound, limit, out_limit in (
                (Bound.LT_2Rp, 2 * rp, 2 * rp),
                (Bound.LT_3Rp, 3 * rp, 13 * rp // 4),
            ):
                x, y = rng.randrange(limit), rng.randrange(limit)
                for name in STRATEGIES:
                    case = {"m": hex(m), "x": hex(x), "y": hex(y), "strategy": name,
                            "bound": bound.name}
                    try:
                        v = mont_mul(ctx, ctx.residue(x, bound), ctx.residue(y, bound), name)
                        v = v.value.value
                    except ContractError as exc:
                        failures.append({**case, "error": str(exc)})
                        continue
                    if v >= out_limit or (v - x * y * rinv) % m:
                        failures.append({**case, "result": hex(v)})
    return failures


def _suite_counters(rng: random.Random, fault) -> list:
    failures = []
    c = MulCounter()
    a = FixedNat(rng.getrandbits(64), 64)
    mul_karatsuba(a, a, threshold=1, counter=c)
    if c.submuls != 3:
        failures.append({"check": "karatsuba 2-limb submuls", "got": c.submuls})
    c = MulCounter()
    a = FixedNat(rng.getrandbits(96), 96)
    mul_toom3(a, a, threshold=1, counter=c)
    if c.submuls != 5:
        failures.append({"check": "toom3 3-limb submuls", "got": c.submuls})
    ctx = mont_setup(FixedNat(rng.getrandbits(250) | (1 << 249) | 1, 256))
    x = ctx.residue(1, Bound.CANONICAL)
    for name, want in (("classic", 4), ("opt_schoolbook", 3), ("opt_split_k2", 2),
                       ("opt_split_k3", 4)):
        c = MulCounter()
        mont_mul(ctx, x, x, name, c)
        if c.bm_parts != want:
            failures.append({"check": f"{name} b*m parts", "got": c.bm_parts, "want": want})
    return failures


def affine_montgomery_multiple(p: int, A: int, B: int, pt, s: int):
    """``s * pt`` on ``B*y^2 = x^3 + A*x^2 + x`` over F_p in affine
    coordinates (None is the point at infinity)."""

    def add(P, Q):
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

    acc = None
    for _ in range(s):
        acc = add(acc, pt)
    return acc


def _suite_group_law(rng: random.Random, fault) -> list:
    p, A, B = 101, 7, 1
    ctx = mont_setup(FixedNat(p, 32))
    ar = ResidueArith(ctx)
    a24 = (A + 2) * pow(4, -1, p) % p
    curve = ecm.CurveParams(ar.wrap(ar.lift(a24)), ctx)
    points = [(x, y) for x in range(1, p) for y in range(p)
              if (B * y * y - (x ** 3 + A * x * x + x)) % p == 0]
    failures = []
    for pt in rng.sample(points, min(12, len(points))):
        P = ecm.XZPoint(ar.wrap(ar.lift(pt[0])), ar.wrap(ar.lift(1)))
        for s in range(1, 21):
            want = affine_montgomery_multiple(p, A, B, pt, s)
            got = ecm.ladder(curve, P, s)
            X = _plain(ctx, got.X.value.value)
            Z = _plain(ctx, got.Z.value.value)
            ok = Z == 0 if want is None else Z != 0 and X * pow(Z, -1, p) % p == want[0]
            if not ok:
                failures.append({"point": pt, "s": s})
    return failures


def _plain(ctx: MontCtx, v: int) -> int:
    return v * pow(1 << ctx.r_exp, -1, ctx.m.value) % ctx.m.value


SUITES: dict[str, Callable] = {
    "oracle_equivalence": _suite_oracle,
    "lazy_bounds": _suite_lazy_bounds,
    "counters": _suite_counters,
    "group_law_f101": _suite_group_law,
}


def run_selftest(seed: int = 0, fault: Optional[str] = None) -> list[dict]:
    results = []
    for name, suite in SUITES.items():
        rng = random.Random(f"{seed}:{name}")
        t0 = time.perf_counter()
        failures = suite(rng, fault)
        results.append({
            "suite": name,
            "passed": not failures,
            "failures": len(failures),
            "first_failure": failures[0] if failures else None,
            "elapsed": time.perf_counter() - t0,
        })
    return results


def cmd_selftest(args, out: Emitter) -> int:
    results = run_selftest(args.seed, args.inject_fault)
    for r in results:
        status = "PASS" if r["passed"] else "FAIL"
        text = f"{status} {r['suite']} ({r['elapsed']:.2f}s)"
        if not r["passed"]:
            text += f": {r['failures']} failures, first {r['first_failure']}"
        out.record(text, command="selftest", **r)
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_SELFTEST


# --- argument parsing ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", help="modulus in hexadecimal, no prefix")
    common.add_argument("--b1", type=int, default=DEFAULT_B1, help="stage 1 bound")
    common.add_argument("--curves", type=int, default=50, help="curves to try")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--strategy", choices=sorted(STRATEGY_FLAGS), default="classic",
                        help="REDC strategy")
    common.add_argument("--lanes", type=int, default=1, help="curves per lockstep group")
    common.add_argument("--parallelism", type=int, default=1, help="worker processes")
    common.add_argument("--format", choices=("text", "jsonl"), default="text")
    common.add_argument("--width", type=int, default=DEFAULT_WIDTH,
                        help="modulus capacity in bits")

    parser = argparse.ArgumentParser(
        prog="simdmod", description="Lazy Montgomery arithmetic and ECM stage 1."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("factor", parents=[common], help="find a factor with ECM stage 1")
    bench = sub.add_parser("bench", parents=[common], help="modular multiplication throughput")
    bench.add_argument("--seconds", type=float, default=1.0,
                       help="measurement window per discipline (at least 1 s)")
    bench.add_argument("--all-strategies", action="store_true")
    sub.add_parser("tables", parents=[common], help="print the split-cost tables")
    st = sub.add_parser("selftest", parents=[common], help="run the built-in checks")
    st.add_argument("--inject-fault", choices=FAULTS, default=None, help=argparse.SUPPRESS)
    return parser


COMMANDS = {
    "factor": cmd_factor,
    "bench": cmd_bench,
    "tables": cmd_tables,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Emitter(args.format)
    try:
        if args.b1 < 2 or args.curves < 1 or args.lanes < 1 or args.parallelism < 1:
            raise InputError("--b1 must be >= 2; --curves, --lanes, --parallelism >= 1")
        if args.width < 3:
            raise InputError("--width must be at least 3 bits")
        if args.command == "bench":
            args.seconds = max(args.seconds, 1.0)
        get_strategy(STRATEGY_FLAGS[args.strategy])
        return COMMANDS[args.command](args, out)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
