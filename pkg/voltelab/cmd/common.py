"""Code shared among the subcommands.

All functions in this module are private.
"""

from __future__ import annotations

import logging
import os
from argparse import ArgumentParser, Namespace
from pathlib import Path

from typing_extensions import TypedDict

from voltelab import __version__
from voltelab.pipeline import ExitCode, PipelineConfig

logger = logging.getLogger(__name__)

DEFAULT_PROFILE = "carrier1"
PROFILE_ENV = "VOLTELAB_PROFILE"
DEVICE_ENV = "VOLTELAB_DEVICE"

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"
# -v: per stage summaries; -vv: every skipped step, lost SR and revision
VERBOSITY_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)

EPILOG = (
    "exit status: "
    + ", ".join(
        f"{int(code)} {code.name.lower().replace('_', ' ')}"
        for code in ExitCode
    )
    + "; 2 for a bad command line.  "
    f"--profile and --device default to ${PROFILE_ENV} and ${DEVICE_ENV}."
)
"""Exit codes and environment of the voltelab command."""

common_parser = ArgumentParser(add_help=False)
"""Version and logging arguments shared by all commands."""

common_parser.add_argument(
    "--version", action="version", version=f"%(prog)s {__version__}"
)
common_parser.add_argument(
    "-v",
    "--verbose",
    action="count",
    help="Log what each stage recovered; -vv also logs every skipped"
    " script step, lost SR and revised message",
    default=0,
)


profile_parser = ArgumentParser(add_help=False)
"""Carrier, device and seed selection shared by all subcommands."""

profile_parser.add_argument(
    "--profile",
    type=str,
    help="Carrier profile name or path to a profile JSON file"
    f" (default ${PROFILE_ENV}, else {DEFAULT_PROFILE})",
)
profile_parser.add_argument(
    "--device",
    type=str,
    help="Device fingerprinted on the carrier"
    f" (default ${DEVICE_ENV}, else the profile's first device)",
)
profile_parser.add_argument(
    "--seed", type=int, default=0, help="Seed of all randomness"
)
profile_parser.add_argument(
    "--in",
    dest="inputs",
    action="append",
    default=[],
    type=Path,
    metavar="TRACE",
    help="Input trace, may be given several times",
)
profile_parser.add_argument(
    "--out",
    dest="output",
    type=Path,
    help="Output file (or directory for population traces);"
    " reports go to standard output when omitted",
)


analysis_parser = ArgumentParser(add_help=False)
"""Thresholds of the analysis stages."""

analysis_parser.add_argument(
    "--window-ms",
    type=float,
    default=5000.0,
    help="Largest delay from a dial to the victim's Invite (default 5000)",
)
analysis_parser.add_argument(
    "--cn-threshold",
    type=int,
    help="Largest comfort noise payload in bytes (default from profile)",
)
analysis_parser.add_argument(
    "--ta-tol",
    type=float,
    default=2.0,
    help="Largest timing advance error of victim reports in us (default 2)",
)
analysis_parser.add_argument(
    "--snr-min",
    type=float,
    default=10.0,
    help="Smallest SNR of victim reports in dB (default 10)",
)
analysis_parser.add_argument(
    "--fragment-gap-ms",
    type=float,
    default=5.0,
    help="Largest gap between fragments of one IP packet (default 5)",
)


def verbosity_config(args: Namespace) -> None:
    """Send voltelab logs to standard error at the requested verbosity.

    Only the ``voltelab`` loggers are raised; other libraries stay at
    warning level.
    """
    level = VERBOSITY_LEVELS[min(args.verbose, len(VERBOSITY_LEVELS) - 1)]
    logging.basicConfig(format=LOG_FORMAT)
    logging.getLogger("voltelab").setLevel(level)


class ProfileArgs(TypedDict):
    """Profile selection kwargs of PipelineConfig."""

    profile: str
    device: str | None
    seed: int


def profile_values(args: Namespace) -> ProfileArgs:
    """Return profile selection, falling back to the environment."""
    return {
        "profile": args.profile
        or os.environ.get(PROFILE_ENV)
        or DEFAULT_PROFILE,
        "device": args.device or os.environ.get(DEVICE_ENV) or None,
        "seed": args.seed,
    }


def pipeline_config(args: Namespace) -> PipelineConfig:
    """Return the pipeline configuration of parsed arguments.

    Options a subcommand does not define keep their defaults.
    """
    optional = {
        "window_ms": "window_ms",
        "cn_threshold": "cn_threshold",
        "ta_tol": "ta_tolerance_us",
        "snr_min": "snr_min_db",
        "fragment_gap_ms": "fragment_gap_ms",
        "loss": "loss",
        "scenario": "scenario",
        "victim": "victim_role",
        "length_ms": "conversation_ms",
        "population": "population",
        "attach": "attach_only",
        "tamper": "tamper",
        "voicemail": "voicemail",
        "known_period": "known_period",
        "attacker_log": "attacker_log",
        "reallocations": "reallocations",
    }
    extra = {
        field: getattr(args, name)
        for name, field in optional.items()
        if hasattr(args, name)
    }
    config = PipelineConfig(
        inputs=tuple(args.inputs),
        output=args.output,
        **profile_values(args),
        **extra,
    )
    logger.debug("Pipeline configuration %s", config)
    return config
