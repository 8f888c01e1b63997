import json
import subprocess
import sys

import pytest

from simdmod import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def jsonl(text):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def test_factor_143_text(capsys):
    code, out, _ = run(capsys, "factor", "--n", "8f", "--b1", "18", "--curves", "20",
                       "--seed", "1")
    assert code == cli.EXIT_OK
    assert out.startswith("factor 11 ")


def test_factor_jsonl_record(capsys):
    code, out, _ = run(capsys, "factor", "--n", "8f", "--b1", "18", "--curves", "20",
                       "--seed", "1", "--format", "jsonl")
    assert code == 0
    (rec,) = jsonl(out)
    assert rec["outcome"] == "factor_found"
    assert int(rec["factor"], 16) * int(rec["cofactor"], 16) == 143


def test_factor_with_lanes_and_workers(capsys):
    n = 1000003 * 1099511627791
    code, out, _ = run(capsys, "factor", "--n", f"{n:x}", "--b1", "2000", "--curves", "16",
                       "--lanes", "4", "--parallelism", "2", "--format", "jsonl")
    assert code == 0
    (rec,) = jsonl(out)
    assert n % int(rec["factor"], 16) == 0


def test_factor_no_factor_exit_code(capsys):
    n = 1000003 * 1000033
    code, out, _ = run(capsys, "factor", "--n", f"{n:x}", "--b1", "3", "--curves", "2")
    assert code == cli.EXIT_NO_FACTOR
    assert "no factor" in out


@pytest.mark.parametrize("argv", [
    ["factor", "--n", "8e"],
    ["factor", "--n", "zz"],
    ["factor", "--n", "0x8f"],
    ["factor"],
    ["factor", "--n", "8f", "--width", "4"],
    ["factor", "--n", "8f", "--b1", "1"],
    ["factor", "--n", "8f", "--curves", "0"],
    ["factor", "--n", "8f", "--lanes", "0"],
])
def test_input_errors_exit_one(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == cli.EXIT_INPUT
    assert err.startswith("error:")


def test_unknown_strategy_is_rejected(capsys):
    with pytest.raises(SystemExit):
        cli.main(["factor", "--n", "8f", "--strategy", "fast"])


def test_tables_text(capsys):
    code, out, _ = run(capsys, "tables")
    assert code == 0
    for value in ("0.694  0.808", "0.775  0.888", "0.820  0.923", "0.500  0.500"):
        assert value in out
    for value in ("0.750", "0.667", "0.800", "0.857"):
        assert value in out


def test_tables_jsonl(capsys):
    _, out, _ = run(capsys, "tables", "--format", "jsonl")
    recs = jsonl(out)
    t3 = [r for r in recs if r["table"] == "saving"]
    assert [r["c_hat"] for r in t3] == ["0.750", "0.667", "0.800", "0.857"]
    assert [r["ratio"] for r in t3] == ["3/4", "2/3", "4/5", "6/7"]
    t2 = {r["algorithm"]: (r["rho_hat"], r["c_rho"]) for r in recs if r["table"] == "split"}
    assert t2["Karatsuba-Ofman"] == ("0.694", "0.808")


def test_selftest_passes(capsys):
    code, out, _ = run(capsys, "selftest", "--format", "jsonl")
    assert code == cli.EXIT_OK
    recs = jsonl(out)
    assert {r["suite"] for r in recs} == set(cli.SUITES)
    assert all(r["passed"] for r in recs)


def test_selftest_detects_injected_fault(capsys):
    code, out, _ = run(capsys, "selftest", "--inject-fault", "m-prime")
    assert code == cli.EXIT_SELFTEST
    assert "FAIL lazy_bounds" in out


def test_bench_jsonl(capsys):
    code, out, _ = run(capsys, "bench", "--width", "64", "--seconds", "1",
                       "--format", "jsonl")
    assert code == 0
    recs = jsonl(out)
    rates = {r["discipline"]: r for r in recs if "discipline" in r}
    assert rates["lazy"]["cond_reductions_per_iteration"] == 8
    assert rates["eager"]["cond_reductions_per_iteration"] == 19
    assert all(r["mulmods_per_sec"] > 0 for r in rates.values())
    (summary,) = [r for r in recs if r.get("summary") == "lazy_over_eager"]
    assert summary["pairs"] > 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "simdmod", "tables"], capture_output=True,
                          text=True, timeout=120)
    assert proc.returncode == 0 and "0.857" in proc.stdout
