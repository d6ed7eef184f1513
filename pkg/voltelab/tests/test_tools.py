"""Test tools module."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from ..tools import (
    dumps_canonical,
    dumps_line,
    rng_for,
    round_floats,
    weighted_choice,
    write_lines,
)


def test_rng_for() -> None:
    first = rng_for(3, "phy").integers(1 << 30, size=4)
    assert list(first) == list(rng_for(3, "phy").integers(1 << 30, size=4))
    assert list(first) != list(rng_for(3, "sip").integers(1 << 30, size=4))
    assert list(first) != list(rng_for(4, "phy").integers(1 << 30, size=4))
    # string and integer labels are both stable
    a = rng_for(0, "victim", 2).random()
    assert a == rng_for(0, "victim", 2).random()
    assert a != rng_for(0, "victim", 3).random()


def test_weighted_choice() -> None:
    rng = rng_for(0, "choice")
    assert {weighted_choice(rng, "ab", [1, 0]) for _ in range(20)} == {"a"}
    assert weighted_choice(rng, [7]) == 7
    with pytest.raises(ValueError):
        weighted_choice(rng, [])


def test_round_floats() -> None:
    value = {"a": 1.23456, "b": [np.float64(0.5), (np.int64(3), True)]}
    assert round_floats(value) == {"a": 1.235, "b": [0.5, [3, True]]}
    assert round_floats(np.bool_(False)) is False
    assert round_floats("x") == "x"
    with pytest.raises(ValueError, match="non-finite"):
        round_floats([float("nan")])


def test_dumps(tmp_path: Path) -> None:
    obj = {"b": 1.00001, "a": [1, 2]}
    text = dumps_canonical(obj)
    assert text.endswith("}\n")
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [1, 2], "b": 1.0}
    assert dumps_line(obj) == '{"a": [1, 2], "b": 1.0}\n'
    path = tmp_path / "deep" / "out.txt"
    write_lines(path, ["one\n", "two\n"])
    assert path.read_text() == "one\ntwo\n"
