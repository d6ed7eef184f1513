"""Physical layer scheduling arithmetic and configuration recovery.

A relay sitting between a victim UE and the cell sees PUCCH activity only:
which TTI a scheduling request (SR) or channel report (CQI / RI) arrived in,
on which resource index, and with which timing advance and SNR.  The routines
here turn a handful of those observations into the ``schedulingRequestConfig``
and ``cqi-ReportConfig`` values the cell assigned to the victim.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Hashable, Iterable, Sequence
from dataclasses import dataclass
from enum import Enum

from typing_extensions import Literal

logger = logging.getLogger(__name__)

# 1024 system frames of 10 subframes each
TTI_MODULUS = 10240

DEFAULT_TA_TOLERANCE_US = 2.0
DEFAULT_SNR_MIN_DB = 10.0

SR_PERIODICITIES = (1, 2, 5, 10, 20, 40, 80)

# (first index, last index, periodicity); offset is index - first
_SR_ROWS: tuple[tuple[int, int, int], ...] = (
    (0, 4, 5),
    (5, 14, 10),
    (15, 34, 20),
    (35, 74, 40),
    (75, 154, 80),
    (155, 156, 2),
    (157, 157, 1),
)

# cqi-pmi-ConfigIndex rows (FDD); 317 and 542-1023 are reserved
_CQI_PMI_ROWS: tuple[tuple[int, int, int], ...] = (
    (0, 1, 2),
    (2, 6, 5),
    (7, 16, 10),
    (17, 36, 20),
    (37, 76, 40),
    (77, 156, 80),
    (157, 316, 160),
    (318, 349, 32),
    (350, 413, 64),
    (414, 541, 128),
)

# ri-ConfigIndex rows: (first index, last index, M_RI); N_OFFSET,RI is
# first - index, so it lies in [-160, 0]
_RI_ROWS: tuple[tuple[int, int, int], ...] = (
    (0, 160, 1),
    (161, 321, 2),
    (322, 482, 4),
    (483, 643, 8),
    (644, 804, 16),
    (805, 965, 32),
)

SR_CONFIG_INDEX_MAX = 157


class SchedulingError(ValueError):
    """Raised when scheduling parameters cannot be derived."""


class ObservationKind(str, Enum):
    """PUCCH report types a relay can tell apart."""

    SR = "SR"
    CQI = "CQI"
    RI = "RI"


class Origin(str, Enum):
    """Who sent a PUCCH observation, as judged from TA and SNR."""

    VICTIM = "Victim"
    OTHER = "Other"


@dataclass(frozen=True, order=True)
class Tti:
    """Transmission time interval as (system frame number, subframe)."""

    sfn: int
    subframe: int

    def __post_init__(self) -> None:
        if not 0 <= self.sfn <= 1023:
            raise ValueError(f"sfn {self.sfn} outside [0, 1023]")
        if not 0 <= self.subframe <= 9:
            raise ValueError(f"subframe {self.subframe} outside [0, 9]")

    @property
    def index(self) -> int:
        """Return ``10 * sfn + subframe``."""
        return 10 * self.sfn + self.subframe

    @classmethod
    def from_index(cls, index: int) -> Tti:
        """Return the TTI for `index`, wrapped modulo 10240.

        Examples
        --------
        >>> Tti.from_index(10245)
        Tti(sfn=0, subframe=5)
        """
        sfn, subframe = divmod(index % TTI_MODULUS, 10)
        return cls(sfn, subframe)

    def shifted(self, ms: int) -> Tti:
        """Return the TTI `ms` subframes later (or earlier if negative)."""
        return Tti.from_index(self.index + ms)


@dataclass(frozen=True)
class PucchObservation:
    """One decoded PUCCH report.

    Observations are unique per ``(kind, tti, pucch_index)``: SR and channel
    reports occupy disjoint PUCCH formats and so disjoint resource spaces.
    """

    kind: ObservationKind
    tti: Tti
    pucch_index: int
    ta_us: float
    snr_db: float

    def __post_init__(self) -> None:
        if self.pucch_index < 0:
            raise ValueError(f"negative pucch_index {self.pucch_index}")
        if not math.isfinite(self.ta_us):
            raise ValueError("ta_us must be finite")


@dataclass(frozen=True)
class SrConfig:
    """Recovered ``schedulingRequestConfig``."""

    periodicity_ms: int
    subframe_offset: int
    sr_config_index: int
    sr_pucch_resource_index: int
    dsr_trans_max: int

    def __post_init__(self) -> None:
        if self.dsr_trans_max < 1:
            raise ValueError("dsr_trans_max must be positive")
        expanded = sr_config_expand(self.sr_config_index)
        if expanded != (self.periodicity_ms, self.subframe_offset):
            raise ValueError(
                f"sr_config_index {self.sr_config_index} expands to "
                f"{expanded}, not "
                f"{(self.periodicity_ms, self.subframe_offset)}"
            )


@dataclass(frozen=True)
class CqiConfig:
    """Recovered periodic ``cqi-ReportConfig``.

    `ri_config_index` and the RI timing fields are set only for MIMO
    connections.
    """

    cqi_pucch_resource_index: int
    cqi_pmi_config_index: int
    periodicity_ms: int
    subframe_offset: int
    ri_config_index: int | None = None
    ri_periodicity_ms: int | None = None
    ri_offset: int | None = None
    format_indicator: str = "widebandCQI"

    @property
    def mimo(self) -> bool:
        """True when rank indicator reporting is configured."""
        return self.ri_config_index is not None


@dataclass(frozen=True)
class CandidateRanking:
    """Values of one parameter ordered by decreasing empirical frequency."""

    parameter: str
    ranking: tuple[tuple[Hashable, float], ...]

    @property
    def values(self) -> list[Hashable]:
        """Values in priority order."""
        return [value for value, _ in self.ranking]


GuessActionKind = Literal["dropped", "forwarded", "granted"]


@dataclass(frozen=True)
class GuessAction:
    """One relay decision taken while guessing a configuration."""

    tti: Tti
    kind: ObservationKind
    action: GuessActionKind
    note: str = ""


def tti_delta(earlier: Tti, later: Tti) -> int:
    """Return the number of subframes from `earlier` to `later`.

    Parameters
    ----------
    earlier : Tti
        First observation.
    later : Tti
        Following observation, possibly after a system frame wrap.

    Returns
    -------
    int
        ``(later.index - earlier.index) mod 10240``, in ``(0, 10240)``.

    Raises
    ------
    SchedulingError
        If both TTIs are identical ("zero period").

    Examples
    --------
    >>> tti_delta(Tti(10, 0), Tti(12, 0))
    20
    >>> tti_delta(Tti(1023, 5), Tti(0, 5))
    10
    """
    delta = (later.index - earlier.index) % TTI_MODULUS
    if delta == 0:
        raise SchedulingError(f"zero period between {earlier} and {later}")
    return delta


def _expand(
    rows: Sequence[tuple[int, int, int]], index: int, table: str
) -> tuple[int, int]:
    for first, last, period in rows:
        if first <= index <= last:
            return period, index - first
    raise SchedulingError(f"no table row for {table} index {index}")


def _lookup(
    rows: Sequence[tuple[int, int, int]], period: int, offset: int, table: str
) -> int:
    for first, _, row_period in rows:
        if row_period == period:
            if not 0 <= offset < period:
                raise SchedulingError(
                    f"{table} offset {offset} outside [0, {period})"
                )
            return first + offset
    raise SchedulingError(f"no table row for {table} periodicity {period}")


def sr_config_expand(sr_config_index: int) -> tuple[int, int]:
    """Return ``(periodicity_ms, subframe_offset)`` for `sr_config_index`.

    Examples
    --------
    >>> sr_config_expand(0)
    (5, 0)
    >>> sr_config_expand(8)
    (10, 3)
    >>> sr_config_expand(30)
    (20, 15)
    """
    return _expand(_SR_ROWS, sr_config_index, "sr-ConfigIndex")


def sr_config_lookup(periodicity_ms: int, subframe_offset: int) -> int:
    """Return the ``sr-ConfigIndex`` for a periodicity and offset.

    Raises
    ------
    SchedulingError
        If the periodicity has no table row or the offset is out of range.

    Examples
    --------
    >>> sr_config_lookup(5, 0)
    0
    >>> sr_config_lookup(10, 3)
    8
    >>> sr_config_lookup(20, 15)
    30
    """
    return _lookup(_SR_ROWS, periodicity_ms, subframe_offset, "sr-ConfigIndex")


def cqi_pmi_config_expand(cqi_pmi_config_index: int) -> tuple[int, int]:
    """Return ``(periodicity_ms, subframe_offset)`` for a CQI/PMI index.

    Examples
    --------
    >>> cqi_pmi_config_expand(41)
    (40, 4)
    """
    return _expand(_CQI_PMI_ROWS, cqi_pmi_config_index, "cqi-pmi-ConfigIndex")


def cqi_pmi_config_lookup(periodicity_ms: int, subframe_offset: int) -> int:
    """Return the ``cqi-pmi-ConfigIndex`` for a periodicity and offset.

    Examples
    --------
    >>> cqi_pmi_config_lookup(40, 4)
    41
    """
    return _lookup(
        _CQI_PMI_ROWS, periodicity_ms, subframe_offset, "cqi-pmi-ConfigIndex"
    )


def ri_config_expand(ri_config_index: int) -> tuple[int, int]:
    """Return ``(M_RI, N_OFFSET_RI)`` for `ri_config_index`.

    Examples
    --------
    >>> ri_config_expand(474)
    (4, -152)
    """
    multiple, offset = _expand(_RI_ROWS, ri_config_index, "ri-ConfigIndex")
    return multiple, -offset


def ri_config_lookup(multiple: int, n_offset: int) -> int:
    """Return the ``ri-ConfigIndex`` for ``M_RI`` and ``N_OFFSET_RI``.

    Examples
    --------
    >>> ri_config_lookup(4, -152)
    474
    """
    for first, last, row_multiple in _RI_ROWS:
        if row_multiple == multiple:
            if not -(last - first) <= n_offset <= 0:
                raise SchedulingError(
                    f"ri-ConfigIndex offset {n_offset} outside [-160, 0]"
                )
            return first - n_offset
    raise SchedulingError(f"no table row for ri-ConfigIndex M_RI {multiple}")


def ri_timing(
    cqi_periodicity_ms: int, cqi_offset: int, ri_config_index: int
) -> tuple[int, int]:
    """Return the RI ``(periodicity_ms, subframe_offset)`` for a CQI timing.

    Examples
    --------
    >>> ri_timing(40, 4, 474)
    (160, 12)
    """
    multiple, n_offset = ri_config_expand(ri_config_index)
    period = cqi_periodicity_ms * multiple
    return period, (cqi_offset + n_offset) % period


def ri_config_from_timing(
    cqi_periodicity_ms: int,
    cqi_offset: int,
    ri_periodicity_ms: int,
    ri_offset: int,
) -> int:
    """Return the ``ri-ConfigIndex`` producing the observed RI timing.

    The RI offset is relative to the CQI offset.  Of the equivalent
    ``N_OFFSET_RI`` values the one in ``(-ri_periodicity_ms, 0]`` is used.

    Examples
    --------
    >>> ri_config_from_timing(40, 4, 160, 12)
    474
    """
    multiple, remainder = divmod(ri_periodicity_ms, cqi_periodicity_ms)
    if remainder:
        raise SchedulingError(
            f"RI period {ri_periodicity_ms} is not a multiple of CQI period "
            f"{cqi_periodicity_ms}"
        )
    n_offset = -((cqi_offset - ri_offset) % ri_periodicity_ms)
    return ri_config_lookup(multiple, n_offset)


def classify_origin(
    obs: PucchObservation,
    ta_tolerance_us: float = DEFAULT_TA_TOLERANCE_US,
    snr_min_db: float = DEFAULT_SNR_MIN_DB,
) -> Origin:
    """Return whether `obs` was sent by the relayed victim.

    The relay aligns the victim's uplink timing, so victim reports arrive with
    near zero timing advance error and high SNR; reports from other UEs in the
    cell scatter over tens of microseconds at low SNR.  Both comparisons are
    inclusive.

    Parameters
    ----------
    obs : PucchObservation
        Observation to classify.
    ta_tolerance_us : float, optional
        Largest absolute timing advance error accepted for the victim.
    snr_min_db : float, optional
        Smallest SNR accepted for the victim.

    Returns
    -------
    Origin
        ``Origin.VICTIM`` or ``Origin.OTHER``.
    """
    if ta_tolerance_us <= 0 or snr_min_db <= 0:
        raise ValueError("TA tolerance and SNR threshold must be positive")
    if abs(obs.ta_us) <= ta_tolerance_us and obs.snr_db >= snr_min_db:
        return Origin.VICTIM
    return Origin.OTHER


def victim_observations(
    stream: Iterable[PucchObservation],
    kind: ObservationKind,
    ta_tolerance_us: float = DEFAULT_TA_TOLERANCE_US,
    snr_min_db: float = DEFAULT_SNR_MIN_DB,
) -> list[PucchObservation]:
    """Return the victim observations of `kind` in arrival order."""
    kept = []
    others = 0
    for obs in stream:
        if obs.kind != kind:
            continue
        if classify_origin(obs, ta_tolerance_us, snr_min_db) is Origin.VICTIM:
            kept.append(obs)
        else:
            others += 1
    logger.debug(
        "%s: %d victim and %d other observations", kind.value, len(kept), others
    )
    return kept


def guess_sr_config(
    stream: Iterable[PucchObservation],
    known_periodicity: int | None = None,
    dsr_trans_max: int = 64,
    *,
    ta_tolerance_us: float = DEFAULT_TA_TOLERANCE_US,
    snr_min_db: float = DEFAULT_SNR_MIN_DB,
) -> tuple[SrConfig, list[GuessAction]]:
    """Recover the victim's scheduling request configuration.

    Without a known periodicity the relay drops the first victim SR.  The UE
    re-sends at its next SR opportunity and the distance between the two
    gives the periodicity; the relay then answers the second SR with an uplink
    grant.  With a known periodicity (carriers fixing it per logical channel)
    the first SR is enough and nothing is dropped.

    Parameters
    ----------
    stream : iterable of PucchObservation
        Observations in arrival order.  Non-SR and non-victim observations are
        ignored.
    known_periodicity : None or int, optional
        SR periodicity known in advance for the victim's bearer.
    dsr_trans_max : int, optional
        ``dsr-TransMax`` of the victim; dropping needs at least one re-send.
    ta_tolerance_us, snr_min_db : float, optional
        Victim classification thresholds, see :func:`classify_origin`.

    Returns
    -------
    config : SrConfig
        Recovered configuration.
    actions : list of GuessAction
        Relay decisions, one per consumed SR.

    Raises
    ------
    SchedulingError
        On "insufficient observations" or a periodicity that has no table row
        ("lookup failure").
    """
    srs = victim_observations(
        stream, ObservationKind.SR, ta_tolerance_us, snr_min_db
    )
    if known_periodicity is not None:
        if not srs:
            raise SchedulingError("insufficient observations: no victim SR")
        first = srs[0]
        periodicity = known_periodicity
        actions = [
            GuessAction(first.tti, first.kind, "granted", "UL-Grant at T+4")
        ]
    else:
        if dsr_trans_max < 2:
            raise SchedulingError(
                f"dsr-TransMax {dsr_trans_max} leaves no re-send to observe"
            )
        if len(srs) < 2:
            raise SchedulingError(
                f"insufficient observations: {len(srs)} victim SR, need 2"
            )
        first, second = srs[:2]
        periodicity = tti_delta(first.tti, second.tti)
        actions = [
            GuessAction(first.tti, first.kind, "dropped", "flushed"),
            GuessAction(second.tti, second.kind, "granted", "UL-Grant at T+4"),
        ]
    if periodicity not in SR_PERIODICITIES:
        raise SchedulingError(
            f"lookup failure: periodicity {periodicity} has no SR table row"
        )
    offset = first.tti.index % periodicity
    config = SrConfig(
        periodicity_ms=periodicity,
        subframe_offset=offset,
        sr_config_index=sr_config_lookup(periodicity, offset),
        sr_pucch_resource_index=first.pucch_index,
        dsr_trans_max=dsr_trans_max,
    )
    logger.info(
        "SR config %d (period %d, offset %d) after %d SR, %d dropped",
        config.sr_config_index,
        periodicity,
        offset,
        len(actions),
        dropped_count(actions),
    )
    return config, actions


def _period_offset(
    observations: Sequence[PucchObservation], kind: ObservationKind
) -> tuple[int, int]:
    if len(observations) < 2:
        raise SchedulingError(
            f"insufficient observations: {len(observations)} victim "
            f"{kind.value}, need 2"
        )
    first, second = observations[:2]
    period = tti_delta(first.tti, second.tti)
    return period, first.tti.index % period


def guess_cqi_config(
    stream: Iterable[PucchObservation],
    mimo: bool = False,
    *,
    ta_tolerance_us: float = DEFAULT_TA_TOLERANCE_US,
    snr_min_db: float = DEFAULT_SNR_MIN_DB,
) -> tuple[CqiConfig, list[GuessAction]]:
    """Recover the victim's periodic channel report configuration.

    A missing channel report makes the cell drop the connection, so every
    observation is forwarded.  CQI timing comes from the first two victim CQI
    reports; RI timing, for MIMO connections only, from the first two victim
    RI reports.

    Raises
    ------
    SchedulingError
        On "insufficient observations" or "lookup failure".
    """
    observations = list(stream)
    cqis = victim_observations(
        observations, ObservationKind.CQI, ta_tolerance_us, snr_min_db
    )
    period, offset = _period_offset(cqis, ObservationKind.CQI)
    try:
        pmi_index = cqi_pmi_config_lookup(period, offset)
    except SchedulingError as err:
        raise SchedulingError(f"lookup failure: {err}") from err
    actions = [GuessAction(obs.tti, obs.kind, "forwarded") for obs in cqis[:2]]
    ri_index = ri_period = ri_offset = None
    if mimo:
        ris = victim_observations(
            observations, ObservationKind.RI, ta_tolerance_us, snr_min_db
        )
        ri_period, ri_offset = _period_offset(ris, ObservationKind.RI)
        try:
            ri_index = ri_config_from_timing(
                period, offset, ri_period, ri_offset
            )
        except SchedulingError as err:
            raise SchedulingError(f"lookup failure: {err}") from err
        actions += [
            GuessAction(obs.tti, obs.kind, "forwarded") for obs in ris[:2]
        ]
    config = CqiConfig(
        cqi_pucch_resource_index=cqis[0].pucch_index,
        cqi_pmi_config_index=pmi_index,
        periodicity_ms=period,
        subframe_offset=offset,
        ri_config_index=ri_index,
        ri_periodicity_ms=ri_period,
        ri_offset=ri_offset,
    )
    logger.info(
        "CQI config %d (period %d, offset %d), ri-ConfigIndex %s",
        pmi_index,
        period,
        offset,
        ri_index,
    )
    return config, actions


def dropped_count(actions: Iterable[GuessAction]) -> int:
    """Return the number of dropped observations in an action log."""
    return sum(1 for action in actions if action.action == "dropped")


def rank_candidates(
    history: Sequence[Hashable], parameter: str = "value"
) -> CandidateRanking:
    """Rank observed parameter values by empirical frequency.

    Ties keep the order of first occurrence.

    Examples
    --------
    >>> rank_candidates(["a", "a", "b", "a", "c"]).ranking
    (('a', 0.6), ('b', 0.2), ('c', 0.2))
    """
    if not history:
        raise ValueError("empty history")
    counts: dict[Hashable, int] = {}
    for value in history:
        counts[value] = counts.get(value, 0) + 1
    # dicts keep first-occurrence order and sorted() is stable
    ordered = sorted(counts.items(), key=lambda item: -item[1])
    total = len(history)
    return CandidateRanking(
        parameter, tuple((value, count / total) for value, count in ordered)
    )


def attempts_until(ranking: CandidateRanking, value: Hashable) -> int:
    """Return how many tries in priority order it takes to hit `value`.

    Examples
    --------
    >>> attempts_until(rank_candidates([3, 1, 1]), 3)
    2
    """
    try:
        return ranking.values.index(value) + 1
    except ValueError:
        raise ValueError(
            f"{value!r} never observed for {ranking.parameter}"
        ) from None
