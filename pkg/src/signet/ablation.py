"""Leave-one-field-out ablation over the labeling pipeline.

Each run removes one metadata field from every signature, relabels, and
rescores, isolating that field's contribution. Devices whose ablated
signature can no longer be labeled count as misses, so the denominator
stays fixed across runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

from .attribution.scores import FEATURES
from .evaluation import normalize_label
from .records import DeviceSignature, PseudoLabel

__all__ = ["ablate_signature", "leave_one_out", "AblationReport"]

Labeler = Callable[[Sequence[DeviceSignature]], Sequence[PseudoLabel]]


def ablate_signature(signature: DeviceSignature, feature: str) -> DeviceSignature:
    """A copy of the signature with one feature removed.

    The derived talks_to_ads bit is left as observed; it is its own
    prompt line, not part of any ablatable field.
    """
    if feature == "oui_friendly":
        return signature.replace(oui_friendly=None)
    if feature == "dhcp_hostname":
        return signature.replace(dhcp_hostname=None)
    if feature == "remote_hostname":
        return signature.replace(remote_hostnames=frozenset())
    if feature == "user_agent_info":
        return signature.replace(user_agent_tokens=frozenset())
    if feature == "netdisco_info":
        return signature.replace(netdisco_identifiers={})
    if feature == "user_labels":
        return signature.replace(user_labels=())
    raise ValueError(f"unknown feature: {feature!r}")


@dataclass(frozen=True)
class AblationReport:
    baseline_accuracy: float
    per_feature_accuracy: Mapping[str, float]
    n_devices: int

    @property
    def deltas(self) -> dict[str, float]:
        return {
            feature: accuracy - self.baseline_accuracy
            for feature, accuracy in self.per_feature_accuracy.items()
        }

    def to_json(self) -> dict[str, Any]:
        return {
            "baseline_accuracy": self.baseline_accuracy,
            "per_feature_accuracy": dict(sorted(self.per_feature_accuracy.items())),
            "deltas": dict(sorted(self.deltas.items())),
            "n_devices": self.n_devices,
        }


def _accuracy(
    labels: Sequence[PseudoLabel], references: Mapping[str, str], device_ids: Sequence[str]
) -> float:
    by_device = {label.device_id: label.vendor for label in labels}
    hits = 0
    for device_id in device_ids:
        vendor = by_device.get(device_id)
        if vendor is not None and normalize_label(vendor) == normalize_label(
            references[device_id]
        ):
            hits += 1
    return hits / len(device_ids)


def leave_one_out(
    signatures: Sequence[DeviceSignature],
    references: Mapping[str, str],
    labeler: Labeler,
    features: Sequence[str] = FEATURES,
) -> AblationReport:
    """Baseline plus one relabeling run per removed feature.

    Accuracy is normalized exact-match against the references, over the
    fixed set of devices that have both a signature and a reference.
    """
    scored = sorted(s.device_id for s in signatures if s.device_id in references)
    if not scored:
        raise ValueError("no overlap between signatures and references")
    in_scope = [s for s in sorted(signatures, key=lambda s: s.device_id)]

    baseline = _accuracy(list(labeler(in_scope)), references, scored)
    per_feature: dict[str, float] = {}
    for feature in features:
        ablated = [ablate_signature(s, feature) for s in in_scope]
        per_feature[feature] = _accuracy(list(labeler(ablated)), references, scored)
    return AblationReport(baseline, per_feature, len(scored))
