import json
import subprocess
import sys

import pytest

from tendersim import cli

HONEST = """\
name: honest
n: 4
network: {mode: SYNCHRONOUS, delta: 2}
expect: {Agreement: HOLDS, Termination(bounded): PASS}
"""


@pytest.fixture
def honest_cfg(tmp_path):
    p = tmp_path / "honest.yaml"
    p.write_text(HONEST)
    return p


def test_run_ok_writes_artifacts(tmp_path, honest_cfg, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", str(honest_cfg), "--seed", "3", "--out", str(out)]) == 0
    report = json.loads((out / "honest-s3.report.json").read_text())
    assert report["status"]["Agreement"] == "HOLDS"
    assert (out / "honest-s3.trace.jsonl").stat().st_size > 0
    assert "Agreement" in capsys.readouterr().out


def test_unexpected_verdict_exits_1(tmp_path, honest_cfg):
    rc = cli.main(["run", str(honest_cfg), "--seed", "3", "--out", str(tmp_path),
                   "--expect", "Agreement=VIOLATED", "--quiet"])
    assert rc == 1


def test_bundled_scenario_by_name(tmp_path):
    assert cli.main(["run", "agreement_violation", "--seed", "1", "--out", str(tmp_path),
                     "--quiet"]) == 0
    assert cli.main(["run", "agreement_violation", "--seed", "1", "--out", str(tmp_path),
                     "--unlock-rule", "corrected", "--quiet"]) == 1


@pytest.mark.parametrize("argv", [
    ["run", "x.yaml"],                       # no seed
    ["bogus"],
    ["scenarios", "show"],
    ["fuzz", "--seed", "1", "--unlock-rule", "maybe"],
])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as e:
        cli.main(argv)
    assert e.value.code == 2


@pytest.mark.parametrize("body", ["n: 4\nbyzantine: [1, 2]\n", "n: 0\n", "n: 4\nmechanism: NOPE\n", "- a list\n",
                                  "n: [4\n", "n: 4\nbogus_key: 1\n"])
def test_bad_config_exits_2_without_artifacts(tmp_path, body, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(body)
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--seed", "1", "--out", str(out)]) == 2
    assert not out.exists()
    assert capsys.readouterr().err.startswith("tendersim:")


def test_bad_expect_syntax(tmp_path, honest_cfg):
    assert cli.main(["run", str(honest_cfg), "--seed", "1", "--out", str(tmp_path),
                     "--expect", "Agreement"]) == 2


def test_missing_files_exit_2(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope.yaml"), "--seed", "1"]) == 2
    assert cli.main(["check", str(tmp_path / "nope.jsonl")]) == 2


def test_check_full_and_truncated(tmp_path, honest_cfg, capsys):
    cli.main(["run", str(honest_cfg), "--seed", "5", "--out", str(tmp_path), "--quiet"])
    trace = tmp_path / "honest-s5.trace.jsonl"
    assert cli.main(["check", str(trace)]) == 0
    full = json.loads(capsys.readouterr().out)
    assert full["partial"] is False and full["status"]["Agreement"] == "HOLDS"

    text = trace.read_text()
    torn = tmp_path / "torn.jsonl"
    torn.write_text(text[: len(text) // 2])
    assert cli.main(["check", str(torn)]) == 1
    assert json.loads(capsys.readouterr().out)["partial"] is True

    junk = tmp_path / "junk.jsonl"
    junk.write_text("not json\n")
    assert cli.main(["check", str(junk)]) == 2


def test_scenarios_list(capsys):
    assert cli.main(["scenarios", "list"]) == 0
    names = [line.split(":")[0] for line in capsys.readouterr().out.splitlines()]
    assert names == ["agreement_violation", "fairness_violation", "livelock"]


def test_run_is_byte_deterministic(tmp_path, honest_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        cli.main(["run", str(honest_cfg), "--seed", "11", "--out", str(d), "--quiet"])
    for name in ("honest-s11.trace.jsonl", "honest-s11.report.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_fuzz_deterministic_and_env_out(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("TENDERSIM_OUT", str(tmp_path / "env"))
    assert cli.main(["fuzz", "--seed", "100", "--runs", "6"]) == 0
    first = (tmp_path / "env" / "fuzz-summary.json").read_bytes()
    assert cli.main(["fuzz", "--seed", "100", "--runs", "6", "--out", str(tmp_path / "x")]) == 0
    assert (tmp_path / "x" / "fuzz-summary.json").read_bytes() == first
    s = json.loads(first)
    assert s["runs"] == 6 and s["safety_violations"] == 0
    assert "6 runs" in capsys.readouterr().out


def test_fuzz_campaign_file_and_errors(tmp_path):
    camp = tmp_path / "c.yaml"
    camp.write_text("name: small\nn: [4]\nmodes: [SYNCHRONOUS]\nruns: 3\n")
    assert cli.main(["fuzz", str(camp), "--seed", "1", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "small-summary.json").read_text())["runs"] == 3
    camp.write_text("strategies: [teleport]\n")
    assert cli.main(["fuzz", str(camp), "--seed", "1", "--out", str(tmp_path)]) == 2
    assert cli.main(["fuzz", "--seed", "1", "--runs", "0", "--out", str(tmp_path)]) == 2
    assert cli.main(["fuzz", "--seed", "1", "--runs", "2", "--expect-violations",
                     "--out", str(tmp_path)]) == 1


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "tendersim", "scenarios", "list"],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0 and "livelock" in r.stdout


def test_bundled_legacy_campaign_rediscovers_agreement_bug(tmp_path, capsys):
    out = str(tmp_path)
    assert cli.main(["fuzz", "legacy_targeted", "--seed", "10", "--runs", "10",
                     "--expect-violations", "--out", out]) == 0
    s = json.loads((tmp_path / "legacy_targeted-summary.json").read_text())
    assert s["violations"]["Agreement"] >= 1
    seed = next(f["seed"] for f in s["failures"] if "Agreement" in f["violated"])
    repro = tmp_path / "legacy_targeted-reproducers" / f"seed-{seed}.yaml"
    assert cli.main(["run", str(repro), "--seed", str(seed), "--out", out, "--quiet",
                     "--expect", "Agreement=VIOLATED"]) == 0
    assert cli.main(["fuzz", "legacy_targeted", "--seed", "10", "--runs", "10",
                     "--unlock-rule", "corrected", "--out", out]) == 0
