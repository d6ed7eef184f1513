"""Run generation and analysis stages from one configuration.

Each subcommand of the command line maps to one pipeline here.  Pipelines
never raise for the failures a user can cause: they log the reason and
return a distinct exit code instead.
"""

from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from typing import Any, Callable

from typing_extensions import Literal

from .activity import (
    VOICE_DRB,
    ActivityTimeline,
    FrameClass,
    activity_timeline,
    filter_rtcp,
    packet_counts,
    rtp_from_pdcp,
)
from .identity import (
    DEFAULT_WINDOW_MS,
    AttackerCallLog,
    IdentityBinding,
    IdentityError,
    IdentityKind,
    Method,
    NasRecord,
    NoExtractionOpportunity,
    binding_validity,
    extract_imsi,
    identity_from_nas,
    passive_map,
)
from .pdcp import (
    DEFAULT_FRAGMENT_GAP_MS,
    Direction,
    PdcpError,
    PdcpRecord,
    detect_control_info,
    reassemble,
    sip_payload_size,
)
from .phy import (
    DEFAULT_SNR_MIN_DB,
    DEFAULT_TA_TOLERANCE_US,
    CqiConfig,
    GuessAction,
    PucchObservation,
    SchedulingError,
    SrConfig,
    guess_cqi_config,
    guess_sr_config,
)
from .profiles import (
    SIP_BEARER,
    CarrierProfile,
    ProfileError,
    ProfileMismatchError,
    load_profile,
)
from .report import (
    activity_section,
    bindings_section,
    build_report,
    call_records_section,
    phy_section,
    signalling_section,
    write_report,
)
from .scenarios import Role, Scenario
from .sip import (
    CallRecord,
    FingerprintError,
    SipEvent,
    classify_size,
    extract_call_records,
    revise_log,
)
from .traceio import (
    TraceFormatError,
    TraceStreams,
    read_attacker_log,
    read_reallocations,
    read_trace,
    split_streams,
    truth_paths,
    write_attacker_log,
    write_generated,
)
from .tracegen import (
    ScenarioSpec,
    gen_attach_trace,
    gen_call_trace,
    gen_population,
    make_subscriber,
)

logger = logging.getLogger(__name__)

Subcommand = Literal["gen", "guess", "analyze", "mapid", "report"]
SUBCOMMANDS: tuple[Subcommand, ...] = (
    "gen",
    "guess",
    "analyze",
    "mapid",
    "report",
)


class ConfigError(ValueError):
    """Raised for invalid thresholds, paths or option combinations."""


class ExitCode(IntEnum):
    """Process exit status of a pipeline; argparse keeps 2 for usage."""

    OK = 0
    CONFIG_ERROR = 3
    MISSING_FILE = 4
    SCHEMA_ERROR = 5
    PROFILE_MISMATCH = 6
    ANALYSIS_ERROR = 7


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a pipeline run depends on.

    `cn_threshold` defaults to the carrier profile's value; `device` to the
    first device the profile lists.
    """

    inputs: tuple[Path, ...] = ()
    output: Path | None = None
    profile: str = "carrier1"
    device: str | None = None
    seed: int = 0
    window_ms: float = DEFAULT_WINDOW_MS
    cn_threshold: int | None = None
    ta_tolerance_us: float = DEFAULT_TA_TOLERANCE_US
    snr_min_db: float = DEFAULT_SNR_MIN_DB
    loss: float = 0.0
    fragment_gap_ms: float = DEFAULT_FRAGMENT_GAP_MS
    scenario: int = int(Scenario.CALLER_CANCEL)
    victim_role: str | None = None
    conversation_ms: float = 30_000.0
    population: int | None = None
    attach_only: bool = False
    tamper: bool = False
    voicemail: bool = False
    known_period: int | None = None
    attacker_log: Path | None = None
    reallocations: Path | None = None

    def __post_init__(self) -> None:
        positive = {
            "window_ms": self.window_ms,
            "ta_tolerance_us": self.ta_tolerance_us,
            "snr_min_db": self.snr_min_db,
            "fragment_gap_ms": self.fragment_gap_ms,
            "conversation_ms": self.conversation_ms,
        }
        if self.cn_threshold is not None:
            positive["cn_threshold"] = self.cn_threshold
        if self.known_period is not None:
            positive["known_period"] = self.known_period
        if self.population is not None:
            positive["population"] = self.population
        for name, value in positive.items():
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if not 0 <= self.loss < 1:
            raise ConfigError(f"loss must lie in [0, 1), got {self.loss}")
        if self.scenario not in set(Scenario):
            raise ConfigError(f"unknown scenario {self.scenario}")
        if self.victim_role not in (None, *(role.value for role in Role)):
            raise ConfigError(f"unknown victim role {self.victim_role!r}")
        if self.seed < 0:
            raise ConfigError(f"seed must not be negative, got {self.seed}")

    def as_dict(self) -> dict[str, Any]:
        """Return the configuration as JSON compatible values."""
        values: dict[str, Any] = {}
        for name, value in vars(self).items():
            if isinstance(value, Path):
                value = str(value)
            elif isinstance(value, tuple):
                value = [str(item) for item in value]
            values[name] = value
        return values


@dataclass(frozen=True)
class PipelineResult:
    """Exit status, files written and the report of a run, if any."""

    exit_code: ExitCode
    outputs: tuple[Path, ...] = ()
    report: Mapping[str, Any] | None = None


@dataclass(frozen=True)
class PhyGuess:
    """Configurations recovered from PUCCH observations."""

    sr: SrConfig | None
    cqi: CqiConfig | None
    actions: tuple[GuessAction, ...] = ()
    errors: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Analysis:
    """Everything recovered from the PDCP and NAS records of one trace.

    `extracted` is True when the identity was revealed by a tampered attach.
    """

    events: tuple[SipEvent, ...]
    calls: tuple[CallRecord, ...]
    timeline: ActivityTimeline
    counts: Mapping[Direction, Counter[FrameClass]]
    removed_rtcp: int
    identity: str | None
    extracted: bool
    drb3_lifetime: tuple[float, float] | None


def select_device(profile: CarrierProfile, device: str | None) -> str:
    """Return `device`, or the profile's first device when None."""
    device = device or profile.devices[0]
    profile.fingerprint_db(device)
    return device


def guess_phy(
    observations: Sequence[PucchObservation],
    profile: CarrierProfile,
    config: PipelineConfig,
    *,
    strict: bool = True,
) -> PhyGuess:
    """Recover the victim's SR and channel report configurations.

    With `strict` unset, failures are recorded in the result instead of
    raised.
    """
    thresholds = {
        "ta_tolerance_us": config.ta_tolerance_us,
        "snr_min_db": config.snr_min_db,
    }
    errors: dict[str, str] = {}
    actions: list[GuessAction] = []
    sr: SrConfig | None = None
    cqi: CqiConfig | None = None
    try:
        sr, sr_actions = guess_sr_config(
            observations,
            config.known_period,
            profile.dsr_trans_max,
            **thresholds,
        )
        actions += sr_actions
    except SchedulingError as err:
        if strict:
            raise
        errors["sr"] = str(err)
    try:
        cqi, cqi_actions = guess_cqi_config(
            observations, profile.mimo, **thresholds
        )
        actions += cqi_actions
    except SchedulingError as err:
        if strict:
            raise
        errors["cqi"] = str(err)
    for name, error in errors.items():
        logger.warning("%s guess failed: %s", name.upper(), error)
    return PhyGuess(sr, cqi, tuple(actions), errors)


def _sip_events(
    records: Sequence[PdcpRecord],
    profile: CarrierProfile,
    device: str,
    config: PipelineConfig,
) -> tuple[list[SipEvent], int]:
    """Return classified SIP events and the number of RTCP packets dropped."""
    db = profile.fingerprint_db(device)
    ctx = profile.transport_context()
    sip_records = [record for record in records if record.drb == SIP_BEARER.drb]
    packets = detect_control_info(
        reassemble(sip_records, profile.mtu, config.fragment_gap_ms), ctx
    )
    rtcp_on_sip = profile.rtcp_bearer == SIP_BEARER.drb
    events = []
    removed = 0
    for index, packet in enumerate(packets):
        if packet.control is not None:
            continue
        if rtcp_on_sip and packet.total_len in profile.rtcp_sizes:
            removed += 1
            continue
        try:
            size = sip_payload_size(packet, ctx)
        except PdcpError as err:
            logger.debug("Packet %d skipped: %s", index, err)
            continue
        events.append(
            SipEvent(
                packet.time_ms,
                packet.direction,
                size,
                classify_size(size, packet.direction, db),
                packet=index,
            )
        )
    logger.info(
        "%d SIP events from %d DRB%d packets",
        len(events),
        len(packets),
        SIP_BEARER.drb,
    )
    return events, removed


def _identity(stream: Sequence[NasRecord]) -> tuple[str | None, bool]:
    try:
        return extract_imsi(stream).imsi, True
    except NoExtractionOpportunity:
        return identity_from_nas(stream), False


def analyze_streams(
    streams: TraceStreams,
    profile: CarrierProfile,
    device: str,
    config: PipelineConfig,
) -> Analysis:
    """Recover the signalling log, call records and voice activity."""
    events, removed = _sip_events(streams.pdcp, profile, device, config)
    revised = revise_log(events)
    voice = rtp_from_pdcp(streams.pdcp, profile.pdcp_overhead_bytes)
    if profile.rtcp_bearer == VOICE_DRB:
        voice, removed = filter_rtcp(voice, profile.rtcp_sizes)
    cn_threshold = config.cn_threshold or profile.cn_threshold
    timeline = activity_timeline(
        voice,
        cn_threshold=cn_threshold,
        max_audio_bytes=profile.max_compressed_audio_bytes,
    )
    counts = packet_counts(
        voice, cn_threshold, profile.max_compressed_audio_bytes
    )
    drb3_times = [r.time_ms for r in streams.pdcp if r.drb == VOICE_DRB]
    lifetime = (min(drb3_times), max(drb3_times)) if drb3_times else None
    identity, extracted = _identity(streams.nas)
    calls = extract_call_records(revised, lifetime, identity or "unknown")
    return Analysis(
        tuple(revised),
        tuple(calls),
        timeline,
        counts,
        removed,
        identity,
        extracted,
        lifetime,
    )


def map_identities(
    analyses: Sequence[Analysis],
    attacker_log: AttackerCallLog,
    reallocations: Sequence[tuple[str, float]] = (),
    window_ms: float = DEFAULT_WINDOW_MS,
) -> list[IdentityBinding]:
    """Bind the identities of analysed traces to dialled numbers.

    Bindings of identities revealed by a tampered attach are Active.
    """
    calls = [call for analysis in analyses for call in analysis.calls]
    revealed = {
        analysis.identity for analysis in analyses if analysis.extracted
    }
    bindings = [
        (
            replace(binding, method=Method.ACTIVE)
            if binding.identity_value in revealed
            else binding
        )
        for binding in passive_map(attacker_log, calls, window_ms)
    ]
    return binding_validity(bindings, reallocations)


def _profile_and_device(config: PipelineConfig) -> tuple[CarrierProfile, str]:
    profile = load_profile(config.profile)
    return profile, select_device(profile, config.device)


def _single_input(config: PipelineConfig) -> Path:
    if len(config.inputs) != 1:
        raise ConfigError(
            f"expected one input trace, got {len(config.inputs)}"
        )
    path = config.inputs[0]
    if config.output is not None and config.output.resolve() == path.resolve():
        raise ConfigError(f"refusing to overwrite input {path}")
    return path


def _read_streams(path: Path) -> TraceStreams:
    return split_streams(read_trace(path))


def _provenance(
    paths: Sequence[Path], streams: Sequence[TraceStreams], stages: list[str]
) -> dict[str, Any]:
    return {
        "inputs": [str(path) for path in paths],
        "records": [
            {"phy": len(s.phy), "pdcp": len(s.pdcp), "nas": len(s.nas)}
            for s in streams
        ],
        "stages": stages,
    }


def _finish(
    config: PipelineConfig, report: dict[str, Any], text: bool = False
) -> PipelineResult:
    outputs: tuple[Path, ...] = ()
    if config.output is not None:
        outputs = tuple(write_report(config.output, report, text))
    return PipelineResult(ExitCode.OK, outputs, report)


def _gen(config: PipelineConfig) -> PipelineResult:
    if config.output is None:
        raise ConfigError("gen needs an output path")
    profile, device = _profile_and_device(config)
    identity_kind = IdentityKind(profile.identity_kind)
    if config.population is not None:
        population = gen_population(
            config.population,
            profile,
            device,
            config.seed,
            tamper=config.tamper,
        )
        outputs: list[Path] = []
        for i, trace in enumerate(population.traces):
            path = config.output / f"victim-{i:03d}.jsonl"
            write_generated(path, trace)
            outputs += [path, *truth_paths(path)]
        log_path = config.output / "attacker.json"
        write_attacker_log(log_path, population.attacker_log)
        return PipelineResult(ExitCode.OK, (*outputs, log_path))
    subscriber = make_subscriber(config.seed)
    if config.attach_only:
        if config.tamper and identity_kind is not IdentityKind.GUTI:
            raise ProfileMismatchError(
                f"{profile.name} attaches with {identity_kind.value}, "
                "tampering needs a GUTI"
            )
        trace = gen_attach_trace(
            subscriber,
            config.tamper,
            config.seed,
            identity_kind=identity_kind,
            profile=profile.name,
        )
    else:
        try:
            spec = ScenarioSpec(
                scenario=Scenario(config.scenario),
                profile=profile,
                device=device,
                subscriber=subscriber,
                victim_role=(
                    None
                    if config.victim_role is None
                    else Role(config.victim_role)
                ),
                conversation_length_ms=config.conversation_ms,
                seed=config.seed,
                voicemail=config.voicemail,
                tamper_attach=config.tamper,
                loss=config.loss,
            )
        except ProfileMismatchError:
            raise
        except ValueError as err:
            raise ConfigError(str(err)) from err
        trace = gen_call_trace(spec)
    write_generated(config.output, trace)
    return PipelineResult(
        ExitCode.OK, (config.output, *truth_paths(config.output))
    )


def _guess(config: PipelineConfig) -> PipelineResult:
    path = _single_input(config)
    profile = load_profile(config.profile)
    streams = _read_streams(path)
    guess = guess_phy(streams.phy, profile, config)
    report = build_report(
        config.as_dict(),
        {
            "phy_params": phy_section(
                guess.sr, guess.cqi, guess.actions, guess.errors
            )
        },
        _provenance([path], [streams], ["guess"]),
    )
    return _finish(config, report)


def _analysis_sections(analysis: Analysis) -> dict[str, Any]:
    return {
        "signalling_log": signalling_section(analysis.events),
        "call_records": call_records_section(analysis.calls),
        "activity": activity_section(
            analysis.timeline, analysis.counts, analysis.removed_rtcp
        ),
    }


def _analyze(config: PipelineConfig) -> PipelineResult:
    path = _single_input(config)
    profile, device = _profile_and_device(config)
    streams = _read_streams(path)
    analysis = analyze_streams(streams, profile, device, config)
    report = build_report(
        config.as_dict(),
        _analysis_sections(analysis),
        _provenance([path], [streams], ["reassemble", "classify", "activity"]),
    )
    return _finish(config, report)


def _mapid(config: PipelineConfig) -> PipelineResult:
    if not config.inputs:
        raise ConfigError("mapid needs at least one input trace")
    if config.attacker_log is None:
        raise ConfigError("mapid needs an attacker call log")
    profile, device = _profile_and_device(config)
    attacker_log = read_attacker_log(config.attacker_log)
    reallocations = (
        read_reallocations(config.reallocations)
        if config.reallocations is not None
        else []
    )
    all_streams = [_read_streams(path) for path in config.inputs]
    analyses = [
        analyze_streams(streams, profile, device, config)
        for streams in all_streams
    ]
    bindings = map_identities(
        analyses, attacker_log, reallocations, config.window_ms
    )
    report = build_report(
        config.as_dict(),
        {
            "call_records": call_records_section(
                call for analysis in analyses for call in analysis.calls
            ),
            "bindings": bindings_section(bindings),
        },
        _provenance(
            list(config.inputs), all_streams, ["classify", "mapid"]
        ),
    )
    return _finish(config, report)


def _report(config: PipelineConfig) -> PipelineResult:
    path = _single_input(config)
    profile, device = _profile_and_device(config)
    streams = _read_streams(path)
    guess = guess_phy(streams.phy, profile, config, strict=False)
    analysis = analyze_streams(streams, profile, device, config)
    sections = {
        "phy_params": phy_section(
            guess.sr, guess.cqi, guess.actions, guess.errors
        ),
        **_analysis_sections(analysis),
    }
    stages = ["guess", "reassemble", "classify", "activity"]
    if config.attacker_log is not None:
        reallocations = (
            read_reallocations(config.reallocations)
            if config.reallocations is not None
            else []
        )
        bindings = map_identities(
            [analysis],
            read_attacker_log(config.attacker_log),
            reallocations,
            config.window_ms,
        )
        sections["bindings"] = bindings_section(bindings)
        stages.append("mapid")
    report = build_report(
        config.as_dict(), sections, _provenance([path], [streams], stages)
    )
    return _finish(config, report, text=True)


_PIPELINES: Mapping[str, Callable[[PipelineConfig], PipelineResult]] = {
    "gen": _gen,
    "guess": _guess,
    "analyze": _analyze,
    "mapid": _mapid,
    "report": _report,
}


def run_pipeline(
    config: PipelineConfig, subcommand: Subcommand
) -> PipelineResult:
    """Run `subcommand` with `config` and return its exit status.

    Parameters
    ----------
    config : PipelineConfig
        Paths, profile selection, thresholds and seed.
    subcommand : {"gen", "guess", "analyze", "mapid", "report"}
        Pipeline to run.

    Returns
    -------
    PipelineResult
        ``ExitCode.OK`` with the files written and the report, or the exit
        code matching the failure.
    """
    try:
        pipeline = _PIPELINES[subcommand]
    except KeyError:
        logger.error("Unknown subcommand %r", subcommand)
        return PipelineResult(ExitCode.CONFIG_ERROR)
    try:
        return pipeline(config)
    except ProfileMismatchError as err:
        code, error = ExitCode.PROFILE_MISMATCH, err
    except (ProfileError, ConfigError) as err:
        code, error = ExitCode.CONFIG_ERROR, err
    except FileNotFoundError as err:
        code, error = ExitCode.MISSING_FILE, err
    except (TraceFormatError, FingerprintError) as err:
        code, error = ExitCode.SCHEMA_ERROR, err
    except (SchedulingError, PdcpError, IdentityError) as err:
        code, error = ExitCode.ANALYSIS_ERROR, err
    except ValueError as err:
        code, error = ExitCode.ANALYSIS_ERROR, err
    logger.error("%s failed: %s", subcommand, error)
    return PipelineResult(code)
