#!/usr/bin/env python3
"""Generate relay traces and analyse them for VoLTE privacy leaks."""

# vim: ft=python

import logging
import sys
from argparse import ArgumentParser
from pathlib import Path

from voltelab.cmd.common import (
    EPILOG,
    analysis_parser,
    common_parser,
    pipeline_config,
    profile_parser,
    verbosity_config,
)
from voltelab.pipeline import ConfigError, ExitCode, run_pipeline
from voltelab.report import render_text
from voltelab.tools import dumps_canonical

logger = logging.getLogger(__name__)

parser = ArgumentParser(
    description=__doc__, epilog=EPILOG, parents=[common_parser]
)
subparsers = parser.add_subparsers(dest="subcommand", required=True)

gen_parser = subparsers.add_parser(
    "gen",
    parents=[profile_parser],
    help="Generate a call trace, an attach trace or a victim population",
)
gen_parser.add_argument(
    "--scenario",
    type=int,
    choices=(1, 2, 3, 4),
    default=1,
    help="1 caller cancels, 2 caller hangs up, 3 callee declines,"
    " 4 callee hangs up (default 1)",
)
gen_parser.add_argument(
    "--victim",
    choices=("caller", "callee"),
    help="Side of the call the victim is on (default depends on scenario)",
)
gen_parser.add_argument(
    "--length-ms",
    type=float,
    default=30_000.0,
    help="Conversation length of answered calls (default 30000)",
)
gen_parser.add_argument(
    "--loss",
    type=float,
    default=0.0,
    help="Probability of missing each victim scheduling request (default 0)",
)
gen_parser.add_argument(
    "--population",
    type=int,
    metavar="N",
    help="Generate N victims called once each, plus the attacker's call log",
)
gen_parser.add_argument(
    "--attach",
    action="store_true",
    help="Generate only the NAS messages of one attach",
)
gen_parser.add_argument(
    "--tamper",
    action="store_true",
    help="Corrupt the M-TMSI of the victim's attach request",
)
gen_parser.add_argument(
    "--voicemail",
    action="store_true",
    help="Redirect a declined call to voicemail (scenario 3, victim caller)",
)

guess_parser = subparsers.add_parser(
    "guess",
    parents=[profile_parser, analysis_parser],
    help="Recover SR and CQI configurations from PUCCH observations",
)
guess_parser.add_argument(
    "--known-period",
    type=int,
    metavar="MS",
    help="SR periodicity fixed by the carrier; no SR is dropped",
)

subparsers.add_parser(
    "analyze",
    parents=[profile_parser, analysis_parser],
    help="Recover the signalling log, call records and voice activity",
)


def _add_identity_options(sub: ArgumentParser, required: bool) -> None:
    sub.add_argument(
        "--attacker-log",
        type=Path,
        required=required,
        metavar="FILE",
        help="JSON log of the calls the attacker placed",
    )
    sub.add_argument(
        "--reallocations",
        type=Path,
        metavar="FILE",
        help="JSON list of identity reallocations",
    )


_add_identity_options(
    subparsers.add_parser(
        "mapid",
        parents=[profile_parser, analysis_parser],
        help="Bind network identities to dialled phone numbers",
    ),
    required=True,
)
report_parser = subparsers.add_parser(
    "report",
    parents=[profile_parser, analysis_parser],
    help="Write one consolidated report and its text rendering",
)
report_parser.add_argument(
    "--known-period",
    type=int,
    metavar="MS",
    help="SR periodicity fixed by the carrier; no SR is dropped",
)
_add_identity_options(report_parser, required=False)


def main() -> None:  # noqa: D103
    args = parser.parse_args()
    verbosity_config(args)
    try:
        config = pipeline_config(args)
    except ConfigError as err:
        logger.error("%s", err)
        raise SystemExit(int(ExitCode.CONFIG_ERROR))
    result = run_pipeline(config, args.subcommand)
    if result.report is not None and config.output is None:
        if args.subcommand == "report":
            sys.stdout.write(render_text(result.report))
        else:
            sys.stdout.write(dumps_canonical(result.report))
    raise SystemExit(int(result.exit_code))


if __name__ == "__main__":
    main()
