"""Per-feature predictive-signal scores over device signatures.

Each metadata feature is scored against the predicted vendor labels by
a blend of chance-adjusted mutual information and an entropy-stability
term. Both use log base 2 throughout.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from ..records import DeviceSignature, PseudoLabel
from . import kernels

__all__ = [
    "ContingencyTable",
    "AttributionScore",
    "EmptyTable",
    "EmptyGroup",
    "NoGroups",
    "AlphaOutOfRange",
    "mutual_information",
    "expected_mi",
    "adjusted_mi",
    "adjusted_mi_flagged",
    "group_entropy",
    "stability",
    "proxy_cmi",
    "rank_features",
    "FEATURES",
]

FEATURES = (
    "oui_friendly",
    "dhcp_hostname",
    "remote_hostname",
    "user_agent_info",
    "netdisco_info",
    "user_labels",
)

_DEGENERATE_EPS = 1e-12


class EmptyTable(ValueError):
    """Contingency table has no observations."""


class EmptyGroup(ValueError):
    """A feature-value group has no label observations."""


class NoGroups(ValueError):
    """Stability needs at least one group."""


class AlphaOutOfRange(ValueError):
    """Blend weight must lie in [0, 1]."""


@dataclass(frozen=True)
class ContingencyTable:
    """Counts of (feature value, label) co-occurrences."""

    row_values: tuple[str, ...]
    col_values: tuple[str, ...]
    counts: np.ndarray

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "ContingencyTable":
        pairs = list(pairs)
        if not pairs:
            raise EmptyTable("no observations")
        rows = tuple(sorted({x for x, _ in pairs}))
        cols = tuple(sorted({y for _, y in pairs}))
        row_index = {v: i for i, v in enumerate(rows)}
        col_index = {v: i for i, v in enumerate(cols)}
        counts = np.zeros((len(rows), len(cols)), dtype=np.int64)
        for x, y in pairs:
            counts[row_index[x], col_index[y]] += 1
        return cls(rows, cols, counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def row_marginals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def col_marginals(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def _check_table(table: ContingencyTable) -> None:
    if table.n == 0:
        raise EmptyTable("table sums to zero")


def mutual_information(table: ContingencyTable) -> float:
    """I(X; Y) in bits."""
    _check_table(table)
    return kernels.mi_bits(table.counts)


def expected_mi(table: ContingencyTable) -> float:
    """Exact E[I(X; Y)] under the fixed-marginal permutation null, in bits."""
    _check_table(table)
    return kernels.expected_mi_bits(table.counts)


def adjusted_mi_flagged(table: ContingencyTable) -> tuple[float, bool]:
    """Chance-adjusted MI: (I - E[I]) / (max(H(X), H(Y)) - E[I]).

    Returns (value, degenerate). Degenerate covers every case where the
    ratio is undefined or vacuous: either marginal constant, or the
    denominator collapsing to zero. The value is 0.0 in all such cases.
    """
    _check_table(table)
    hx = kernels.entropy_bits(table.row_marginals())
    hy = kernels.entropy_bits(table.col_marginals())
    if hx <= 0.0 or hy <= 0.0:
        return 0.0, True
    emi = kernels.expected_mi_bits(table.counts)
    denom = max(hx, hy) - emi
    if abs(denom) < _DEGENERATE_EPS:
        return 0.0, True
    mi = kernels.mi_bits(table.counts)
    return (mi - emi) / denom, False


def adjusted_mi(table: ContingencyTable) -> float:
    return adjusted_mi_flagged(table)[0]


def group_entropy(label_counts: Mapping[str, int]) -> float:
    """H(Y | X = x) in bits for one feature-value group."""
    total = sum(label_counts.values())
    if total <= 0:
        raise EmptyGroup("group has no observations")
    h = 0.0
    for count in label_counts.values():
        if count > 0:
            p = count / total
            h -= p * math.log2(p)
    return h


def stability(
    groups: Mapping[str, Mapping[str, int]], label_space_size: int
) -> float:
    """1 - (sum_i n_i H(Y|X=x_i)) / (N log2 |Y|).

    A single-label space makes every group pure; the score is 1.0 by
    convention in that degenerate case.
    """
    if not groups:
        raise NoGroups("no feature-value groups")
    if label_space_size < 1:
        raise ValueError("label space must be non-empty")
    if label_space_size == 1:
        for counts in groups.values():
            if sum(counts.values()) <= 0:
                raise EmptyGroup("group has no observations")
        return 1.0
    total = 0
    weighted = 0.0
    for counts in groups.values():
        n_i = sum(counts.values())
        weighted += n_i * group_entropy(counts)
        total += n_i
    return 1.0 - weighted / (total * math.log2(label_space_size))


def proxy_cmi(ami: float, stability_score: float, alpha: float = 0.5) -> float:
    """alpha * stability + (1 - alpha) * ami."""
    if not 0.0 <= alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha={alpha!r}")
    return alpha * stability_score + (1.0 - alpha) * ami


@dataclass(frozen=True)
class AttributionScore:
    feature_name: str
    ami: float | None
    stability: float | None
    proxy_cmi: float | None
    alpha: float
    n_samples: int
    note: str | None = None

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "feature_name": self.feature_name,
            "ami": self.ami,
            "stability": self.stability,
            "proxy_cmi": self.proxy_cmi,
            "alpha": self.alpha,
            "n_samples": self.n_samples,
        }
        if self.note:
            out["note"] = self.note
        return out


def feature_values(signature: DeviceSignature, feature: str) -> list[str]:
    """Observed values of one feature on one signature, deterministic order."""
    if feature == "oui_friendly":
        return [signature.oui_friendly] if signature.oui_friendly else []
    if feature == "dhcp_hostname":
        return [signature.dhcp_hostname] if signature.dhcp_hostname else []
    if feature == "remote_hostname":
        return sorted({d.base_domain for d in signature.remote_hostnames})
    if feature == "user_agent_info":
        return sorted(f"{t.kind}:{t.value}" for t in signature.user_agent_tokens)
    if feature == "netdisco_info":
        return [f"{k}={v}" for k, v in sorted(signature.netdisco_identifiers.items())]
    if feature == "user_labels":
        return list(signature.user_labels)
    raise KeyError(f"unknown feature: {feature!r}")


def rank_features(
    signatures: Sequence[DeviceSignature],
    predictions: Iterable[PseudoLabel],
    alpha: float = 0.5,
    features: Sequence[str] = FEATURES,
) -> list[AttributionScore]:
    """Score and rank features against predicted vendor labels.

    Search-augmented predictions are excluded so scores reflect the
    device's own metadata. Multi-valued features contribute one
    (value, label) observation per value. Features observed on fewer
    than two devices get a null score and sort last.
    """
    if not 0.0 <= alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha={alpha!r}")
    by_device: dict[str, str] = {}
    for label in sorted(predictions, key=lambda l: (l.device_id, l.model_name)):
        if label.config.search_augmented:
            continue
        by_device.setdefault(label.device_id, label.vendor)

    sig_by_id = {s.device_id: s for s in signatures}
    devices = sorted(set(by_device) & set(sig_by_id))
    label_space = len({by_device[d] for d in devices})

    scores: list[AttributionScore] = []
    for feature in features:
        pairs: list[tuple[str, str]] = []
        contributing = 0
        for device_id in devices:
            values = feature_values(sig_by_id[device_id], feature)
            if values:
                contributing += 1
                pairs.extend((value, by_device[device_id]) for value in values)
        if contributing < 2:
            scores.append(
                AttributionScore(
                    feature, None, None, None, alpha, len(pairs), "insufficient_data"
                )
            )
            continue
        table = ContingencyTable.from_pairs(pairs)
        ami, degenerate = adjusted_mi_flagged(table)
        groups: dict[str, Counter] = {}
        for value, label in pairs:
            groups.setdefault(value, Counter())[label] += 1
        stab = stability(groups, label_space)
        scores.append(
            AttributionScore(
                feature,
                ami,
                stab,
                proxy_cmi(ami, stab, alpha),
                alpha,
                len(pairs),
                "degenerate_ami" if degenerate else None,
            )
        )

    def sort_key(score: AttributionScore) -> tuple:
        if score.proxy_cmi is None:
            return (1, 0.0, score.feature_name)
        return (0, -score.proxy_cmi, score.feature_name)

    return sorted(scores, key=sort_key)
