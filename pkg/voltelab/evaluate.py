"""Score analysis results against generator ground truth."""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .activity import (
    WINDOW_MS,
    ActivityInterval,
    ActivityTimeline,
    VoiceState,
    window_states,
)
from .pdcp import Direction
from .phy import (
    DEFAULT_SNR_MIN_DB,
    DEFAULT_TA_TOLERANCE_US,
    SchedulingError,
    guess_cqi_config,
    guess_sr_config,
)
from .sip import SipEvent, top_candidate
from .tracegen import CallTruth, PhyCorpusItem, VadInterval

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhyOutcome:
    """Which fields of one connection were recovered exactly.

    `ri` is None for connections without rank indicator reporting.
    """

    sr: bool
    cqi: bool
    ri: bool | None

    @property
    def success(self) -> bool:
        """True if every configured field was recovered."""
        return self.sr and self.cqi and self.ri is not False


@dataclass(frozen=True)
class PhyScore:
    """Per field success rates over a corpus."""

    n: int
    sr: float
    cqi: float
    ri: float | None
    overall: float


def evaluate_phy_item(
    item: PhyCorpusItem,
    *,
    known_periodicity: bool = False,
    ta_tolerance_us: float = DEFAULT_TA_TOLERANCE_US,
    snr_min_db: float = DEFAULT_SNR_MIN_DB,
) -> PhyOutcome:
    """Guess the configurations of one connection and compare with truth."""
    thresholds = {"ta_tolerance_us": ta_tolerance_us, "snr_min_db": snr_min_db}
    try:
        sr, _ = guess_sr_config(
            item.observations,
            item.known_periodicity if known_periodicity else None,
            item.sr.dsr_trans_max,
            **thresholds,
        )
        sr_ok = sr == item.sr
    except SchedulingError as err:
        logger.debug("SR guess failed: %s", err)
        sr_ok = False
    try:
        cqi, _ = guess_cqi_config(item.observations, False, **thresholds)
        cqi_ok = (cqi.cqi_pucch_resource_index, cqi.cqi_pmi_config_index) == (
            item.cqi.cqi_pucch_resource_index,
            item.cqi.cqi_pmi_config_index,
        )
    except SchedulingError as err:
        logger.debug("CQI guess failed: %s", err)
        cqi_ok = False
    ri_ok = None
    if item.mimo:
        try:
            full, _ = guess_cqi_config(item.observations, True, **thresholds)
            ri_ok = full.ri_config_index == item.cqi.ri_config_index
        except SchedulingError as err:
            logger.debug("RI guess failed: %s", err)
            ri_ok = False
    return PhyOutcome(sr_ok, cqi_ok, ri_ok)


def phy_success_rates(
    corpus: Sequence[PhyCorpusItem],
    *,
    known_periodicity: bool = False,
    ta_tolerance_us: float = DEFAULT_TA_TOLERANCE_US,
    snr_min_db: float = DEFAULT_SNR_MIN_DB,
) -> PhyScore:
    """Return the fraction of connections whose fields were recovered."""
    if not corpus:
        raise ValueError("empty corpus")
    outcomes = [
        evaluate_phy_item(
            item,
            known_periodicity=known_periodicity,
            ta_tolerance_us=ta_tolerance_us,
            snr_min_db=snr_min_db,
        )
        for item in corpus
    ]
    ris = [outcome.ri for outcome in outcomes if outcome.ri is not None]
    n = len(outcomes)
    score = PhyScore(
        n=n,
        sr=sum(outcome.sr for outcome in outcomes) / n,
        cqi=sum(outcome.cqi for outcome in outcomes) / n,
        ri=sum(ris) / len(ris) if ris else None,
        overall=sum(outcome.success for outcome in outcomes) / n,
    )
    logger.info(
        "PHY success over %d: SR %.3f, CQI %.3f, RI %s",
        n,
        score.sr,
        score.cqi,
        score.ri,
    )
    return score


@dataclass(frozen=True)
class SignallingScore:
    """Labelling accuracy of a signalling log."""

    total: int
    raw_correct: int
    revised_correct: int

    @property
    def raw_accuracy(self) -> float:
        """Share of messages named by size alone."""
        return self.raw_correct / self.total if self.total else 1.0

    @property
    def revised_accuracy(self) -> float:
        """Share of messages named after context revision."""
        return self.revised_correct / self.total if self.total else 1.0


def _event_key(time_ms: float, direction: Direction) -> tuple[float, str]:
    return round(time_ms, 1), direction.value


def signalling_accuracy(
    events: Iterable[SipEvent], calls: Iterable[CallTruth]
) -> SignallingScore:
    """Compare raw and revised labels with the messages really sent.

    Events are matched to messages by arrival time and direction; a message
    with no matching event counts as wrong.
    """
    by_key = {_event_key(e.time_ms, e.direction): e for e in events}
    total = raw = revised = 0
    for call in calls:
        for message in call.messages:
            total += 1
            event = by_key.get(_event_key(message.time_ms, message.direction))
            if event is None:
                logger.warning(
                    "No event for %s at %.1f ms",
                    message.operation,
                    message.time_ms,
                )
                continue
            raw += top_candidate(event.candidates) == message.operation
            revised += event.resolved == message.operation
    return SignallingScore(total, raw, revised)


@dataclass(frozen=True)
class TimelineScore:
    """Agreement of a recovered timeline with the true speech pattern.

    `agreement` is the share of windows inside the true pattern given the
    right state; `transition_error_ms` the largest distance from a true
    state change to the nearest recovered one.
    """

    agreement: Mapping[Direction, float]
    transition_error_ms: Mapping[Direction, float]


def _as_activity(intervals: Sequence[VadInterval]) -> list[ActivityInterval]:
    return [
        ActivityInterval(
            interval.start_ms,
            interval.end_ms,
            VoiceState.SPEAKING if interval.speaking else VoiceState.SILENT,
        )
        for interval in intervals
    ]


def _changes(intervals: Sequence[ActivityInterval]) -> np.ndarray:
    return np.array(
        [
            after.start_ms
            for before, after in zip(intervals, intervals[1:])
            if after.state is not before.state
        ],
        dtype=float,
    )


def timeline_agreement(
    timeline: ActivityTimeline,
    vad: Mapping[Direction, Sequence[VadInterval]],
    window_ms: int = WINDOW_MS,
) -> TimelineScore:
    """Compare `timeline` with the true pattern window by window."""
    agreement = {}
    errors = {}
    for direction, truth_intervals in vad.items():
        if not truth_intervals:
            continue
        truth = _as_activity(truth_intervals)
        recovered = list(timeline.intervals.get(direction, ()))
        start = truth[0].start_ms
        n_windows = int((truth[-1].end_ms - start) // window_ms)
        expected = window_states(truth, start, n_windows, window_ms)
        found = window_states(recovered, start, n_windows, window_ms)
        inside = expected >= 0
        agreement[direction] = float(
            np.mean(expected[inside] == found[inside])
        )
        true_changes = _changes(truth)
        found_changes = _changes(recovered)
        if not len(true_changes):
            errors[direction] = 0.0
        elif not len(found_changes):
            errors[direction] = float("inf")
        else:
            distance = np.abs(true_changes[:, None] - found_changes[None, :])
            errors[direction] = float(distance.min(axis=1).max())
        logger.info(
            "%s: %.4f of windows agree, transition error %.1f ms",
            direction.short,
            agreement[direction],
            errors[direction],
        )
    return TimelineScore(agreement, errors)
