"""Small helpers shared by the generator, the pipeline and the tests."""

from __future__ import annotations

import hashlib
import json
import math
import os
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any, Union

import numpy as np

PathType = Union[str, "os.PathLike[str]"]


def _path_word(component: object) -> int:
    """Return a stable 32-bit word for one seed path component."""
    if isinstance(component, (int, np.integer)) and component >= 0:
        return int(component) & 0xFFFFFFFF
    digest = hashlib.sha256(str(component).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def rng_for(seed: int, *path: object) -> np.random.Generator:
    """Return a generator derived from `seed` and a labelled path.

    Generators for distinct paths are statistically independent, and the
    same ``(seed, path)`` always yields the same stream, so adding a new
    consumer of randomness does not perturb existing ones.

    Examples
    --------
    >>> a = rng_for(7, "sip", 3).integers(1000)
    >>> b = rng_for(7, "sip", 3).integers(1000)
    >>> bool(a == b)
    True
    """
    sequence = np.random.SeedSequence(
        entropy=seed, spawn_key=tuple(_path_word(part) for part in path)
    )
    return np.random.default_rng(sequence)


def weighted_choice(
    rng: np.random.Generator,
    values: Sequence[Any],
    weights: Sequence[float] | None = None,
) -> Any:
    """Return one of `values`, drawn with `weights` (uniform by default)."""
    if not values:
        raise ValueError("nothing to choose from")
    probabilities = None
    if weights is not None:
        total = float(sum(weights))
        probabilities = [weight / total for weight in weights]
    return values[int(rng.choice(len(values), p=probabilities))]


def round_floats(obj: Any, ndigits: int = 3) -> Any:
    """Return `obj` with every float rounded, recursing into containers."""
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            raise ValueError(f"non-finite value {obj}")
        return round(float(obj), ndigits)
    if isinstance(obj, dict):
        return {key: round_floats(value, ndigits) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(value, ndigits) for value in obj]
    return obj


def dumps_canonical(obj: Any) -> str:
    """Return `obj` as deterministic, indented JSON text."""
    return json.dumps(round_floats(obj), indent=2, sort_keys=True) + "\n"


def dumps_line(obj: Any) -> str:
    """Return `obj` as one deterministic JSON line."""
    return json.dumps(round_floats(obj), sort_keys=True) + "\n"


def write_lines(path: PathType, lines: Iterable[str]) -> None:
    """Write `lines` to `path`, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fobj:
        fobj.writelines(lines)
