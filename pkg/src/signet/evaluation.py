"""Tiered agreement rubrics, chance-corrected agreement, and support partitions.

The rubric grades each (predicted, reference) vendor pair at several
strictness tiers: exact string match after normalization, semantic
equivalence, brand/subsidiary aliasing, ambiguous-reference exclusion,
their union, and optional per-device manual adjudication. By
construction the unified tier is at least as generous as any single
tier, and manual adjudication can only add credit on top of it.
"""

from __future__ import annotations

import math
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .vendor_aliases import VendorAliasStore

__all__ = [
    "normalize_label",
    "LabeledPair",
    "TierVerdict",
    "RubricConfig",
    "MissingRubricComponent",
    "EmptyInput",
    "tier_match",
    "tiered_accuracy",
    "cohens_kappa",
    "kappa_from_pairs",
    "tier_partition",
    "TierBucket",
    "EvalReport",
    "evaluate",
    "load_semantic_map",
    "load_ambiguous_labels",
    "load_adjudications",
    "TIERS",
]

TIERS = ("strict", "semantic", "brand", "ambiguous_excluded", "unified", "manual")

HEAD_MIN_SUPPORT = 101  # head: > 100 samples per class
MID_MIN_SUPPORT = 11  # mid: 11..100; tail: <= 10

_WS = re.compile(r"\s+")
_EDGE_PUNCT = re.compile(r"^[\s\.,;:!\?'\"()\[\]]+|[\s\.,;:!\?'\"()\[\]]+$")


def normalize_label(label: str) -> str:
    """Surface normalization: NFKC, casefold, collapse whitespace, strip
    leading/trailing punctuation. No semantic rewriting happens here."""
    text = unicodedata.normalize("NFKC", label)
    text = _EDGE_PUNCT.sub("", text)
    text = _WS.sub(" ", text)
    return text.casefold().strip()


class MissingRubricComponent(ValueError):
    """A tier's backing data (map, store, or label set) is missing."""


class EmptyInput(ValueError):
    """No labeled pairs to evaluate."""


@dataclass(frozen=True)
class LabeledPair:
    device_id: str
    predicted_vendor: str
    reference_vendor: str

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "LabeledPair":
        return cls(obj["device_id"], obj["predicted_vendor"], obj["reference_vendor"])

    def to_json(self) -> dict[str, str]:
        return {
            "device_id": self.device_id,
            "predicted_vendor": self.predicted_vendor,
            "reference_vendor": self.reference_vendor,
        }


@dataclass(frozen=True)
class TierVerdict:
    strict: bool
    semantic: bool
    brand: bool
    ambiguous_reference: bool
    unified: bool
    manual: bool


def load_semantic_map(path: str | Path) -> dict[str, str]:
    """TSV of ``label<TAB>canonical`` descriptor equivalences, normalized."""
    mapping: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected label<TAB>canonical")
        mapping[normalize_label(parts[0])] = normalize_label(parts[1])
    return mapping


def load_ambiguous_labels(path: str | Path) -> frozenset[str]:
    labels = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            labels.add(normalize_label(line))
    return frozenset(labels)


def load_adjudications(path: str | Path) -> dict[str, bool]:
    """TSV of ``device_id<TAB>accept|reject[<TAB>note]``."""
    verdicts: dict[str, bool] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 2 or parts[1] not in ("accept", "reject"):
            raise ValueError(f"{path}:{lineno}: expected device_id<TAB>accept|reject")
        verdicts[parts[0]] = parts[1] == "accept"
    return verdicts


@dataclass(frozen=True)
class RubricConfig:
    semantic_map: Mapping[str, str]
    alias_store: VendorAliasStore
    ambiguous_labels: frozenset[str]
    manual_adjudications: Mapping[str, bool] | None = None

    def __post_init__(self) -> None:
        if self.semantic_map is None:
            raise MissingRubricComponent("semantic_map")
        if self.alias_store is None:
            raise MissingRubricComponent("alias_store")
        if self.ambiguous_labels is None:
            raise MissingRubricComponent("ambiguous_labels")


def tier_match(pair: LabeledPair, rubric: RubricConfig) -> TierVerdict:
    """Grade one pair at every tier.

    Wider tiers are unioned with strict, so strict <= semantic, strict
    <= brand, and unified >= all of them hold structurally.
    """
    pred = normalize_label(pair.predicted_vendor)
    ref = normalize_label(pair.reference_vendor)
    strict = pred == ref

    mapped_pred = rubric.semantic_map.get(pred, pred)
    mapped_ref = rubric.semantic_map.get(ref, ref)
    semantic = strict or mapped_pred == mapped_ref

    brand_pred = normalize_label(rubric.alias_store.resolve(pred))
    brand_ref = normalize_label(rubric.alias_store.resolve(ref))
    brand = strict or brand_pred == brand_ref

    ambiguous_reference = ref in rubric.ambiguous_labels
    unified = strict or semantic or brand or ambiguous_reference

    manual = unified
    if rubric.manual_adjudications and pair.device_id in rubric.manual_adjudications:
        # adjudication can only add credit, never remove it
        manual = unified or rubric.manual_adjudications[pair.device_id]

    return TierVerdict(
        strict=strict,
        semantic=semantic,
        brand=brand,
        ambiguous_reference=ambiguous_reference,
        unified=unified,
        manual=manual,
    )


def tiered_accuracy(
    pairs: Sequence[LabeledPair], rubric: RubricConfig
) -> dict[str, float | None]:
    """Accuracy at every tier.

    The ambiguous_excluded tier is strict accuracy over the pairs whose
    reference is not ambiguous (None when every reference is ambiguous);
    all other tiers use the full denominator.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("no labeled pairs")
    verdicts = [tier_match(pair, rubric) for pair in pairs]
    n = len(verdicts)
    non_ambiguous = [v for v in verdicts if not v.ambiguous_reference]
    return {
        "strict": sum(v.strict for v in verdicts) / n,
        "semantic": sum(v.semantic for v in verdicts) / n,
        "brand": sum(v.brand for v in verdicts) / n,
        "ambiguous_excluded": (
            sum(v.strict for v in non_ambiguous) / len(non_ambiguous)
            if non_ambiguous
            else None
        ),
        "unified": sum(v.unified for v in verdicts) / n,
        "manual": sum(v.manual for v in verdicts) / n,
    }


def cohens_kappa(confusion: np.ndarray | Sequence[Sequence[int]]) -> float:
    """Cohen's kappa from a square confusion matrix.

    kappa = (p_o - p_e) / (1 - p_e). A degenerate p_e of 1 means both
    raters are constant on the same label; agreement is perfect and the
    value is 1.0 by convention.
    """
    matrix = np.asarray(confusion, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("confusion matrix must be square")
    if (matrix < 0).any():
        raise ValueError("confusion matrix must be non-negative")
    total = matrix.sum()
    if total <= 0:
        raise EmptyInput("confusion matrix sums to zero")
    p_o = np.trace(matrix) / total
    p_e = float((matrix.sum(axis=1) * matrix.sum(axis=0)).sum()) / (total * total)
    if math.isclose(p_e, 1.0, abs_tol=1e-15):
        return 1.0 if math.isclose(p_o, 1.0, abs_tol=1e-15) else 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def kappa_from_pairs(pairs: Sequence[LabeledPair]) -> float:
    """Cohen's kappa between predicted and reference labels, normalized."""
    if not pairs:
        raise EmptyInput("no labeled pairs")
    labels = sorted(
        {normalize_label(p.predicted_vendor) for p in pairs}
        | {normalize_label(p.reference_vendor) for p in pairs}
    )
    index = {label: i for i, label in enumerate(labels)}
    matrix = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for pair in pairs:
        matrix[
            index[normalize_label(pair.predicted_vendor)],
            index[normalize_label(pair.reference_vendor)],
        ] += 1
    return cohens_kappa(matrix)


@dataclass(frozen=True)
class TierBucket:
    accuracy: float | None
    class_count: int
    sample_count: int

    def to_json(self) -> dict[str, Any]:
        return {
            "accuracy": self.accuracy,
            "class_count": self.class_count,
            "sample_count": self.sample_count,
        }


def tier_partition(
    pairs: Sequence[LabeledPair],
    rubric: RubricConfig,
    tier: str = "manual",
) -> dict[str, TierBucket]:
    """Head/mid/tail accuracy by reference-class support.

    Support counts pairs per normalized reference label: head > 100,
    mid 11..100, tail <= 10.
    """
    if tier not in TIERS or tier == "ambiguous_excluded":
        raise ValueError(f"unsupported partition tier: {tier!r}")
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("no labeled pairs")
    support: dict[str, int] = {}
    for pair in pairs:
        ref = normalize_label(pair.reference_vendor)
        support[ref] = support.get(ref, 0) + 1

    def bucket_of(count: int) -> str:
        if count >= HEAD_MIN_SUPPORT:
            return "head"
        if count >= MID_MIN_SUPPORT:
            return "mid"
        return "tail"

    grouped: dict[str, list[LabeledPair]] = {"head": [], "mid": [], "tail": []}
    classes: dict[str, set[str]] = {"head": set(), "mid": set(), "tail": set()}
    for pair in pairs:
        ref = normalize_label(pair.reference_vendor)
        name = bucket_of(support[ref])
        grouped[name].append(pair)
        classes[name].add(ref)

    out: dict[str, TierBucket] = {}
    for name in ("head", "mid", "tail"):
        bucket_pairs = grouped[name]
        if not bucket_pairs:
            out[name] = TierBucket(None, 0, 0)
            continue
        verdicts = [tier_match(pair, rubric) for pair in bucket_pairs]
        hits = sum(getattr(v, tier) for v in verdicts)
        out[name] = TierBucket(hits / len(verdicts), len(classes[name]), len(bucket_pairs))
    return out


@dataclass(frozen=True)
class EvalReport:
    n_pairs: int
    per_tier: Mapping[str, float | None]
    kappa: float | None
    partition: Mapping[str, TierBucket] | None
    provenance: Mapping[str, Any] | None = None

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "n_pairs": self.n_pairs,
            "per_tier": dict(self.per_tier),
            "kappa": self.kappa,
        }
        if self.partition is not None:
            out["partition"] = {k: v.to_json() for k, v in self.partition.items()}
        if self.provenance is not None:
            out["provenance"] = dict(self.provenance)
        return out


def evaluate(
    pairs: Sequence[LabeledPair],
    rubric: RubricConfig,
    *,
    with_kappa: bool = True,
    with_partition: bool = True,
    partition_tier: str = "manual",
    provenance: Mapping[str, Any] | None = None,
) -> EvalReport:
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("no labeled pairs")
    return EvalReport(
        n_pairs=len(pairs),
        per_tier=tiered_accuracy(pairs, rubric),
        kappa=kappa_from_pairs(pairs) if with_kappa else None,
        partition=tier_partition(pairs, rubric, partition_tier) if with_partition else None,
        provenance=provenance,
    )


def pairs_from_predictions(
    predictions: Iterable[Any], references: Mapping[str, str]
) -> list[LabeledPair]:
    """Join predicted labels against a device->vendor reference map."""
    pairs = []
    for label in sorted(predictions, key=lambda l: l.device_id):
        ref = references.get(label.device_id)
        if ref is not None:
            pairs.append(LabeledPair(label.device_id, label.vendor, ref))
    return pairs
