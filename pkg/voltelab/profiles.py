"""Carrier profiles: the per network constants the lab is parameterized by.

Profiles are JSON documents shipped in ``voltelab/data/profiles``.  Each one
fixes MTUs, the SIP transport and its IPsec overhead, RTCP placement, codec
frame sizes and the distributions radio parameters are drawn from.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from packaging.specifiers import SpecifierSet
from packaging.version import InvalidVersion, Version
from typing_extensions import Literal

from .pdcp import IpsecMode, MtuConfig, Protocol, TransportContext
from .sip import FingerprintDb, bundled_db_path, load_db
from .tools import PathType, weighted_choice

logger = logging.getLogger(__name__)

PROFILE_PATH = Path(__file__).parent / "data" / "profiles"
PROFILE_FORMAT_VERSIONS = SpecifierSet(">=1.0,<2")


class ProfileError(ValueError):
    """Raised for unknown or malformed carrier profiles."""


class ProfileMismatchError(ProfileError):
    """Raised when a device or scenario does not fit a carrier profile."""


@dataclass(frozen=True)
class Bearer:
    """Data radio bearer with its logical channel and QoS class."""

    drb: int
    lcid: int
    qci: int


SIP_BEARER = Bearer(drb=2, lcid=4, qci=5)
RTP_BEARER = Bearer(drb=3, lcid=5, qci=1)


@dataclass(frozen=True)
class Distribution:
    """Discrete distribution of a radio parameter."""

    values: tuple[int, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values or len(self.values) != len(self.weights):
            raise ProfileError("distribution needs one weight per value")
        if any(weight < 0 for weight in self.weights) or not sum(self.weights):
            raise ProfileError("distribution weights must be non-negative")

    @classmethod
    def from_json(cls, raw: Any) -> Distribution:
        """Parse ``{"values": [...], "weights": [...]}`` or a constant."""
        if isinstance(raw, int):
            return cls((raw,), (1.0,))
        values = tuple(int(value) for value in raw["values"])
        weights = tuple(
            float(weight) for weight in raw.get("weights", [1.0] * len(values))
        )
        return cls(values, weights)

    def sample(self, rng: np.random.Generator) -> int:
        """Draw one value."""
        return int(weighted_choice(rng, self.values, self.weights))


@dataclass(frozen=True)
class CarrierProfile:
    """Constants of one carrier network as observed by the relay."""

    name: str
    rat: Literal["lte", "nr-sa"]
    mtu: MtuConfig
    protocol: Protocol
    ipsec_mode: IpsecMode
    ipsec_overhead_bytes: int
    ip_header_bytes: int
    tcp_acks: bool
    rtcp_sizes: frozenset[int]
    rtcp_bearer: int
    rtcp_interval_ms: float
    pdcp_overhead_bytes: int
    identity_kind: Literal["GUTI", "SUCI"]
    fingerprint_carrier: str
    devices: tuple[str, ...]
    mimo: bool
    dsr_trans_max: int
    sr_periodicity_by_lcid: Mapping[int, int]
    sr_pucch_resource_index: Distribution
    cqi_pucch_resource_index: Distribution
    cqi_periodicity_ms: Distribution
    ri_config_index: Distribution
    pucch_resource_count: int
    interference_per_s: float
    audio_frame_bytes: int
    cn_frame_bytes: int
    max_compressed_audio_bytes: int
    cn_threshold: int
    rohc_init_frames: int
    fingerprint_dir: Path | None = None

    def __post_init__(self) -> None:
        if self.rtcp_bearer not in (SIP_BEARER.drb, RTP_BEARER.drb):
            raise ProfileError(f"RTCP bearer DRB{self.rtcp_bearer} unknown")
        if self.ipsec_overhead_bytes < 0 or self.pdcp_overhead_bytes < 0:
            raise ProfileError("overheads must not be negative")
        if not self.cn_threshold < self.max_compressed_audio_bytes:
            raise ProfileError("comfort noise threshold above audio maximum")

    def transport_context(self) -> TransportContext:
        """Return the header overheads of SIP transport on this carrier."""
        return TransportContext.build(
            self.protocol,
            self.ipsec_mode,
            ip_header_bytes=self.ip_header_bytes,
            ipsec_overhead_bytes=self.ipsec_overhead_bytes,
        )

    def fingerprint_db(self, device: str) -> FingerprintDb:
        """Return the fingerprint database of `device`.

        Databases are read from the profile's own fingerprint directory
        when it names one, else from the packaged databases.

        Raises
        ------
        ProfileMismatchError
            If the device has no fingerprints on this carrier.
        """
        if device not in self.devices:
            raise ProfileMismatchError(
                f"device {device!r} not fingerprinted on {self.name} "
                f"(known: {', '.join(self.devices)})"
            )
        if self.fingerprint_dir is None:
            return load_db(bundled_db_path(self.fingerprint_carrier, device))
        return load_db(
            self.fingerprint_dir / f"{self.fingerprint_carrier}-{device}.json"
        )


def _check_version(raw: Mapping[str, Any], source: str) -> None:
    try:
        version = Version(str(raw.get("format_version", "1.0")))
    except InvalidVersion as err:
        raise ProfileError(f"{source}: {err}") from err
    if version not in PROFILE_FORMAT_VERSIONS:
        raise ProfileError(
            f"{source}: unsupported profile format {version} "
            f"(supported: {PROFILE_FORMAT_VERSIONS})"
        )


def _fingerprint_dir(
    raw: Mapping[str, Any], base_dir: Path | None
) -> Path | None:
    if "fingerprint_dir" not in raw:
        return None
    path = Path(raw["fingerprint_dir"])
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    return path


def profile_from_json(
    raw: Mapping[str, Any], source: str = "", base_dir: Path | None = None
) -> CarrierProfile:
    """Build a profile from a parsed JSON document.

    A relative ``fingerprint_dir`` is resolved against `base_dir`, the
    directory of the profile file.
    """
    source = source or str(raw.get("name", "profile"))
    _check_version(raw, source)
    try:
        mtu = raw["mtu"]
        codec = raw["codec"]
        radio = raw["radio"]
        transport = raw["transport"]
        return CarrierProfile(
            name=str(raw["name"]),
            rat=raw.get("rat", "lte"),
            mtu=MtuConfig(int(mtu["uplink"]), int(mtu["downlink"])),
            protocol=Protocol(transport["protocol"]),
            ipsec_mode=IpsecMode(transport["ipsec_mode"]),
            ipsec_overhead_bytes=int(transport.get("ipsec_overhead_bytes", 0)),
            ip_header_bytes=int(transport.get("ip_header_bytes", 40)),
            tcp_acks=bool(transport.get("tcp_acks", True)),
            rtcp_sizes=frozenset(int(size) for size in raw["rtcp"]["sizes"]),
            rtcp_bearer=int(raw["rtcp"]["bearer"]),
            rtcp_interval_ms=float(raw["rtcp"].get("interval_ms", 5000.0)),
            pdcp_overhead_bytes=int(raw.get("pdcp_overhead_bytes", 0)),
            identity_kind=raw.get("identity_kind", "GUTI"),
            fingerprint_carrier=str(
                raw.get("fingerprint_carrier", raw["name"])
            ),
            devices=tuple(str(device) for device in raw["devices"]),
            mimo=bool(radio["mimo"]),
            dsr_trans_max=int(radio["dsr_trans_max"]),
            sr_periodicity_by_lcid={
                int(lcid): int(period)
                for lcid, period in radio["sr_periodicity_by_lcid"].items()
            },
            sr_pucch_resource_index=Distribution.from_json(
                radio["sr_pucch_resource_index"]
            ),
            cqi_pucch_resource_index=Distribution.from_json(
                radio["cqi_pucch_resource_index"]
            ),
            cqi_periodicity_ms=Distribution.from_json(
                radio["cqi_periodicity_ms"]
            ),
            ri_config_index=Distribution.from_json(radio["ri_config_index"]),
            pucch_resource_count=int(radio.get("pucch_resource_count", 2048)),
            interference_per_s=float(radio.get("interference_per_s", 10.0)),
            audio_frame_bytes=int(codec["audio_frame_bytes"]),
            cn_frame_bytes=int(codec.get("cn_frame_bytes", 6)),
            max_compressed_audio_bytes=int(
                codec.get("max_compressed_audio_bytes", 70)
            ),
            cn_threshold=int(codec.get("cn_threshold", 10)),
            rohc_init_frames=int(codec.get("rohc_init_frames", 4)),
            fingerprint_dir=_fingerprint_dir(raw, base_dir),
        )
    except (KeyError, TypeError, ValueError) as err:
        if isinstance(err, ProfileError):
            raise
        raise ProfileError(f"{source}: malformed profile ({err})") from err


def available_profiles() -> list[str]:
    """Return the names of the packaged carrier profiles."""
    return sorted(path.stem for path in PROFILE_PATH.glob("*.json"))


def load_profile(name_or_path: str | PathType) -> CarrierProfile:
    """Return a packaged profile by name, or a profile file by path.

    Raises
    ------
    ProfileError
        For unknown names and malformed documents.
    """
    path = Path(name_or_path)
    if path.suffix != ".json":
        path = PROFILE_PATH / f"{name_or_path}.json"
        if not path.is_file():
            raise ProfileError(
                f"unknown carrier profile {str(name_or_path)!r} "
                f"(available: {', '.join(available_profiles())})"
            )
    try:
        with open(path, encoding="utf-8") as fobj:
            raw = json.load(fobj)
    except json.JSONDecodeError as err:
        raise ProfileError(f"{path}: {err}") from err
    if not isinstance(raw, Mapping):
        raise ProfileError(f"{path}: profile must be a JSON object")
    profile = profile_from_json(raw, str(path), path.parent)
    logger.debug("Loaded carrier profile %s from %s", profile.name, path)
    return profile
