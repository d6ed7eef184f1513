"""Pytest configuration script."""

import json
from pathlib import Path

import pytest

from voltelab.identity import Subscriber
from voltelab.profiles import PROFILE_PATH, CarrierProfile, load_profile
from voltelab.sip import FingerprintDb, bundled_db_path
from voltelab.tracegen import make_subscriber


@pytest.fixture(scope="session")
def carrier1() -> CarrierProfile:
    """Return the packaged LTE profile with TCP and IPsec."""
    return load_profile("carrier1")


@pytest.fixture(scope="session")
def carrier2() -> CarrierProfile:
    """Return the packaged profile with the larger IPsec overhead."""
    return load_profile("carrier2")


@pytest.fixture(scope="session")
def s7_db(carrier1: CarrierProfile) -> FingerprintDb:
    """Return the S7 fingerprints on carrier1."""
    return carrier1.fingerprint_db("s7")


@pytest.fixture
def subscriber() -> Subscriber:
    """Return the first subscriber of seed 0."""
    return make_subscriber(0)


@pytest.fixture
def decline_profile(tmp_path: Path) -> Path:
    """Return a carrier1 profile whose S7 also hears the decline downlink.

    The profile reads its fingerprints from a ``fingerprints`` directory next
    to it, holding the packaged S7 database plus a downlink 486 Busy Here.
    """
    with open(bundled_db_path("carrier1", "s7"), encoding="utf-8") as fobj:
        db = json.load(fobj)
    db["entries"].append(
        {
            "operation": "486 Busy Here",
            "direction": "downlink",
            "ranges": [{"center": 520, "tolerance": 1}],
        }
    )
    (tmp_path / "fingerprints").mkdir()
    (tmp_path / "fingerprints" / "carrier1-s7.json").write_text(json.dumps(db))
    with open(PROFILE_PATH / "carrier1.json", encoding="utf-8") as fobj:
        profile = json.load(fobj)
    profile["devices"] = ["s7"]
    profile["fingerprint_dir"] = "fingerprints"
    path = tmp_path / "lab.json"
    path.write_text(json.dumps(profile))
    return path
