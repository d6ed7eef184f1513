"""Test the voltelab command line."""

from __future__ import annotations

import json
import logging
from argparse import Namespace
from pathlib import Path

from pytest_console_scripts import ScriptRunner

from .. import __version__
from ..cmd.common import DEVICE_ENV, PROFILE_ENV, verbosity_config
from .env_tools import _scope_env


def _gen(script_runner: ScriptRunner, path: Path, *args: str) -> None:
    script_runner.run(
        ["voltelab", "gen", "--out", str(path), *args], check=True
    )


def test_version(script_runner: ScriptRunner) -> None:
    result = script_runner.run(["voltelab", "--version"], check=True)
    assert __version__ in result.stdout


def test_help_lists_exit_codes(script_runner: ScriptRunner) -> None:
    result = script_runner.run(["voltelab", "--help"], check=True)
    text = " ".join(result.stdout.split())
    assert "3 config error" in text
    assert "6 profile mismatch" in text
    assert f"${PROFILE_ENV}" in text


def test_verbosity_config() -> None:
    voltelab_logger = logging.getLogger("voltelab")
    before = voltelab_logger.level
    try:
        for verbose, level in [(0, "WARNING"), (1, "INFO"), (4, "DEBUG")]:
            verbosity_config(Namespace(verbose=verbose))
            assert logging.getLevelName(voltelab_logger.level) == level
    finally:
        voltelab_logger.setLevel(before)


def test_gen_analyze_report(
    tmp_path: Path, script_runner: ScriptRunner
) -> None:
    trace = tmp_path / "call.jsonl"
    _gen(script_runner, trace, "--scenario", "1", "--victim", "callee")
    assert trace.is_file()
    assert (tmp_path / "call.truth.json").is_file()
    result = script_runner.run(
        ["voltelab", "analyze", "--in", str(trace)], check=True
    )
    report = json.loads(result.stdout)
    (call,) = report["call_records"]
    assert call["termination_cause"] == "CallerCancelRinging"
    assert report["config"]["profile"] == "carrier1"
    # the text rendering goes to stdout without --out
    result = script_runner.run(
        ["voltelab", "report", "--in", str(trace)], check=True
    )
    assert "call records:" in result.stdout
    assert "CallerCancelRinging" in result.stdout
    out = tmp_path / "report.json"
    result = script_runner.run(
        ["voltelab", "report", "--in", str(trace), "--out", str(out)],
        check=True,
    )
    assert result.stdout == ""
    assert out.with_suffix(".txt").is_file()


def test_mapid_population(tmp_path: Path, script_runner: ScriptRunner) -> None:
    directory = tmp_path / "pop"
    _gen(script_runner, directory, "--population", "2", "--seed", "7")
    traces = sorted(directory.glob("victim-*[0-9].jsonl"))
    assert len(traces) == 2
    args = ["voltelab", "mapid", "--attacker-log"]
    args += [str(directory / "attacker.json")]
    for path in traces:
        args += ["--in", str(path)]
    result = script_runner.run(args, check=True)
    bindings = json.loads(result.stdout)["bindings"]
    assert len(bindings) == 2
    assert {b["method"] for b in bindings} == {"Passive"}
    # mapid cannot run without the attacker's log
    result = script_runner.run(["voltelab", "mapid", "--in", str(traces[0])])
    assert result.returncode == 2


def test_environment_defaults(
    tmp_path: Path, script_runner: ScriptRunner
) -> None:
    trace = tmp_path / "call.jsonl"
    _gen(script_runner, trace)
    analyze = ["voltelab", "analyze", "--in", str(trace)]
    with _scope_env(**{PROFILE_ENV: "carrier9", DEVICE_ENV: None}):
        assert script_runner.run(analyze).returncode == 3
        result = script_runner.run([*analyze, "--profile", "carrier1"])
        assert result.returncode == 0
    with _scope_env(**{PROFILE_ENV: None, DEVICE_ENV: "pixel"}):
        assert script_runner.run(analyze).returncode == 6
        result = script_runner.run([*analyze, "--device", "s7"])
        assert result.returncode == 0
        assert json.loads(result.stdout)["config"]["device"] == "s7"


def test_errors(tmp_path: Path, script_runner: ScriptRunner) -> None:
    trace = tmp_path / "call.jsonl"
    _gen(script_runner, trace)
    analyze = ["voltelab", "analyze", "--in", str(trace)]
    assert script_runner.run([*analyze, "--window-ms", "0"]).returncode == 3
    missing = str(tmp_path / "missing.jsonl")
    result = script_runner.run(["voltelab", "analyze", "--in", missing])
    assert result.returncode == 4
    bad = tmp_path / "bad.jsonl"
    bad.write_text("not json\n")
    result = script_runner.run(["voltelab", "guess", "--in", str(bad)])
    assert result.returncode == 5
    result = script_runner.run(["voltelab", "gen", "--scenario", "7"])
    assert result.returncode == 2
    result = script_runner.run(
        ["voltelab", "gen", "--out", str(trace), "--loss", "1.5"]
    )
    assert result.returncode == 3
