"""Feature attribution: MI kernels and proxy signal scores."""

from .kernels import BACKEND, backends, entropy_bits, expected_mi_bits, mi_bits
from .scores import (
    FEATURES,
    AlphaOutOfRange,
    AttributionScore,
    ContingencyTable,
    EmptyGroup,
    EmptyTable,
    NoGroups,
    adjusted_mi,
    adjusted_mi_flagged,
    expected_mi,
    feature_values,
    group_entropy,
    mutual_information,
    proxy_cmi,
    rank_features,
    stability,
)

__all__ = [
    "BACKEND",
    "backends",
    "entropy_bits",
    "expected_mi_bits",
    "mi_bits",
    "FEATURES",
    "AlphaOutOfRange",
    "AttributionScore",
    "ContingencyTable",
    "EmptyGroup",
    "EmptyTable",
    "NoGroups",
    "adjusted_mi",
    "adjusted_mi_flagged",
    "expected_mi",
    "feature_values",
    "group_entropy",
    "mutual_information",
    "proxy_cmi",
    "rank_features",
    "stability",
]
