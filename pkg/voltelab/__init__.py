"""Privacy analysis lab for encrypted VoLTE traffic."""

import warnings

from .activity import activity_timeline
from .identity import extract_imsi, passive_map
from .pdcp import reassemble
from .phy import guess_cqi_config, guess_sr_config
from .sip import classify_size, extract_call_records, revise_log

try:
    from ._version import __version__
except ImportError:
    __version__ = "0.0.0"
    warnings.warn(
        "voltelab was not installed and is missing version metadata."
        "\nMake sure this package is installed in development mode"
        " with this command:\n\tpip install --editable .",
        RuntimeWarning,
    )

__all__ = (
    "activity_timeline",
    "classify_size",
    "extract_call_records",
    "extract_imsi",
    "guess_cqi_config",
    "guess_sr_config",
    "passive_map",
    "reassemble",
    "revise_log",
    "__version__",
)
