"""Command line entry: ``python -m tendersim {run,fuzz,check,scenarios}``.

Exit status: 0 when every expectation is met, 1 on an unexpected verdict,
2 on a usage or configuration error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from . import harness
from .adversary import scenario_names, scenario_path
from .config import ConfigError, from_dict

EXIT_OK, EXIT_UNEXPECTED, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tendersim", description="Deterministic Tendermint consensus simulator.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one config or bundled scenario")
    r.add_argument("config", help="YAML run config, or the name of a bundled scenario")
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--out", help=f"artifact directory (default ${harness.OUT_ENV} or ./tendersim-out)")
    r.add_argument("--n", type=int)
    r.add_argument("--f", type=int)
    r.add_argument("--unlock-rule", choices=["corrected", "legacy"])
    r.add_argument("--step-timers", choices=["after_quorum", "on_entry"])
    r.add_argument("--mechanism")
    r.add_argument("--selector", choices=["static", "stake_rotation"])
    r.add_argument("--heights", type=int)
    r.add_argument("--rounds", type=int)
    r.add_argument("--time", type=int)
    r.add_argument("--tail-window", type=int)
    r.add_argument("--expect", action="append", metavar="PROPERTY=STATUS",
                   help="replace the config's expectations (repeatable)")
    r.add_argument("--quiet", action="store_true")

    z = sub.add_parser("fuzz", help="run a seeded fuzz campaign")
    z.add_argument("campaign", nargs="?",
                   help="YAML campaign file or bundled campaign name (defaults built in)")
    z.add_argument("--seed", type=int, required=True, help="first seed of the range")
    z.add_argument("--runs", type=int, help="number of seeds (overrides the campaign)")
    z.add_argument("--unlock-rule", choices=["corrected", "legacy"])
    z.add_argument("--workers", type=int, default=1)
    z.add_argument("--expect-violations", action="store_true",
                   help="succeed only if at least one Agreement violation is found")
    z.add_argument("--out")

    c = sub.add_parser("check", help="re-evaluate every property on a saved trace")
    c.add_argument("trace")
    c.add_argument("--tail-window", type=int, default=10)

    s = sub.add_parser("scenarios", help="bundled scenarios")
    s.add_argument("action", choices=["list"])
    return p


def _load_yaml(spec: str, bundled=(scenario_names, scenario_path)) -> dict:
    path = Path(spec)
    names, locate = bundled
    if not path.exists() and spec in names():
        text = locate(spec).read_text()
    else:
        try:
            text = path.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read {spec}: {e.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{spec}: invalid YAML ({e.__class__.__name__})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{spec}: expected a mapping at top level")
    return data


def _apply_overrides(data: dict, a) -> dict:
    for key in ("n", "f", "unlock_rule", "step_timers", "mechanism", "selector", "tail_window"):
        v = getattr(a, key)
        if v is not None:
            data[key] = v
    hz = dict(data.get("horizon") or {})
    for flag, key in (("heights", "heights"), ("rounds", "rounds"), ("time", "time")):
        v = getattr(a, flag)
        if v is not None:
            hz[key] = v
    if hz:
        data["horizon"] = hz
    if a.expect:
        expect = {}
        for item in a.expect:
            key, sep, value = item.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"--expect wants PROPERTY=STATUS, got {item!r}")
            expect[key.strip()] = value.strip()
        data["expect"] = expect
    return data


def cmd_run(a) -> int:
    data = _apply_overrides(_load_yaml(a.config), a)
    cfg = from_dict(data, seed=a.seed)
    result = harness.run_config(cfg)
    tpath, rpath = harness.write_artifacts(result, harness.out_dir(a.out))
    if not a.quiet:
        print(harness.render(result.report))
        print(f"trace: {tpath}\nreport: {rpath}")
    return EXIT_OK if result.ok else EXIT_UNEXPECTED


def cmd_fuzz(a) -> int:
    campaign = harness.campaign_from_dict(
        _load_yaml(a.campaign, (harness.campaign_names, harness.campaign_path)) if a.campaign else None)
    if a.unlock_rule:
        campaign["unlock_rule"] = a.unlock_rule
    runs = a.runs if a.runs is not None else int(campaign["runs"])
    if runs < 1:
        raise ConfigError("--runs must be positive")
    campaign["runs"] = runs
    summary = harness.fuzz(campaign, range(a.seed, a.seed + runs), workers=max(1, a.workers))
    path = harness.write_fuzz_artifacts(summary, harness.out_dir(a.out))
    print(f"{summary['runs']} runs, safety violations: {summary['safety_violations']}, "
          f"termination-link violations: {summary['termination_link_violations']}")
    for name, count in summary["violations"].items():
        print(f"  {name}: {count}")
    print(f"summary: {path}")
    if a.expect_violations:
        return EXIT_OK if summary["violations"].get("Agreement", 0) else EXIT_UNEXPECTED
    bad = summary["safety_violations"] or summary["termination_link_violations"]
    return EXIT_UNEXPECTED if bad else EXIT_OK


def cmd_check(a) -> int:
    try:
        report = harness.check_trace(a.trace, a.tail_window)
    except OSError as e:
        raise ConfigError(f"cannot read {a.trace}: {e.strerror}") from None
    except (ValueError, KeyError) as e:
        raise ConfigError(f"{a.trace}: malformed trace ({e})") from None
    sys.stdout.write(harness.dumps(report))
    return EXIT_UNEXPECTED if report["partial"] else EXIT_OK


def cmd_scenarios(a) -> int:
    for name in scenario_names():
        data = yaml.safe_load(scenario_path(name).read_text())
        print(f"{name}: {data.get('description', '').strip().splitlines()[0] if data.get('description') else ''}")
    return EXIT_OK


def main(argv=None) -> int:
    a = _parser().parse_args(argv)
    handler = {"run": cmd_run, "fuzz": cmd_fuzz, "check": cmd_check,
               "scenarios": cmd_scenarios}[a.cmd]
    try:
        return handler(a)
    except ConfigError as e:
        print(f"tendersim: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
