"""Tests for carrier profiles."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import pytest

from ..pdcp import Direction, IpsecMode, Protocol
from ..profiles import (
    PROFILE_PATH,
    Distribution,
    ProfileError,
    ProfileMismatchError,
    available_profiles,
    load_profile,
)
from ..tools import rng_for


def _raw(name: str = "carrier1") -> dict[str, Any]:
    with open(PROFILE_PATH / f"{name}.json", encoding="utf-8") as fobj:
        return json.load(fobj)


def test_packaged_profiles() -> None:
    assert available_profiles() == ["carrier1", "carrier1-sa", "carrier2"]
    carrier1 = load_profile("carrier1")
    assert carrier1.mtu.for_direction(Direction.UPLINK) == 1212
    assert carrier1.mimo
    assert carrier1.rtcp_bearer == 3
    carrier2 = load_profile("carrier2")
    assert carrier2.mtu.for_direction(Direction.UPLINK) == 1308
    assert carrier2.mtu.for_direction(Direction.DOWNLINK) == 1276
    assert carrier2.ipsec_mode is IpsecMode.ENCRYPTED
    assert carrier2.devices == ("iphone11",)
    sa = load_profile("carrier1-sa")
    assert sa.identity_kind == "SUCI"
    assert sa.fingerprint_db("s7") == carrier1.fingerprint_db("s7")


def test_transport_context() -> None:
    ctx = load_profile("carrier1").transport_context()
    assert ctx.protocol is Protocol.TCP
    assert ctx.ipsec_mode is IpsecMode.PLAINTEXT
    assert (ctx.overhead("SYNC"), ctx.overhead("data")) == (102, 82)


def test_fingerprint_db_lookup() -> None:
    carrier2 = load_profile("carrier2")
    assert carrier2.fingerprint_db("iphone11").device == "iphone11"
    with pytest.raises(ProfileMismatchError, match="'s7' not fingerprinted"):
        carrier2.fingerprint_db("s7")


def test_load_profile_by_path(tmp_path: Path) -> None:
    raw = _raw()
    raw["name"] = "lab"
    raw["mtu"] = {"uplink": 1400, "downlink": 1400}
    path = tmp_path / "lab.json"
    path.write_text(json.dumps(raw))
    profile = load_profile(path)
    assert profile.name == "lab"
    # fingerprints default to the carrier of the same name
    assert profile.fingerprint_carrier == "lab"
    assert load_profile(str(path)).mtu == profile.mtu
    with pytest.raises(FileNotFoundError):
        load_profile(tmp_path / "other.json")


def test_own_fingerprint_dir(decline_profile: Path) -> None:
    profile = load_profile(decline_profile)
    assert profile.fingerprint_dir == decline_profile.parent / "fingerprints"
    db = profile.fingerprint_db("s7")
    assert db.entry("486 Busy Here", Direction.DOWNLINK) is not None
    packaged = load_profile("carrier1").fingerprint_db("s7")
    assert packaged.entry("486 Busy Here", Direction.DOWNLINK) is None
    assert load_profile("carrier1").fingerprint_dir is None


@pytest.mark.parametrize(
    "changes, message",
    [
        ({"format_version": "2.0"}, "unsupported profile format 2.0"),
        ({"format_version": "one"}, "Invalid version"),
        ({"rtcp": {"sizes": [128], "bearer": 4}}, "DRB4 unknown"),
        ({"transport": {"protocol": "SCTP"}}, "malformed profile"),
        ({"radio": {}}, "malformed profile"),
        ({"pdcp_overhead_bytes": -1}, "must not be negative"),
    ],
)
def test_profile_errors(
    tmp_path: Path, changes: dict[str, Any], message: str
) -> None:
    raw = {**_raw(), **changes}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(raw))
    with pytest.raises(ProfileError, match=message):
        load_profile(path)


def test_unknown_and_malformed(tmp_path: Path) -> None:
    with pytest.raises(ProfileError, match="available: carrier1"):
        load_profile("carrier9")
    path = tmp_path / "list.json"
    path.write_text("[]")
    with pytest.raises(ProfileError, match="must be a JSON object"):
        load_profile(path)
    path.write_text("{")
    with pytest.raises(ProfileError):
        load_profile(path)


def test_distribution() -> None:
    constant = Distribution.from_json(474)
    assert constant.values == (474,)
    assert constant.sample(rng_for(0, "d")) == 474
    skewed = Distribution.from_json({"values": [1, 2], "weights": [0, 1]})
    rng = rng_for(0, "d")
    assert {skewed.sample(rng) for _ in range(10)} == {2}
    with pytest.raises(ProfileError):
        Distribution((1, 2), (1.0,))
    with pytest.raises(ProfileError):
        Distribution((1,), (0.0,))
