"""Seeded metadata perturbations and a robustness harness.

Five perturbation kinds cover the attack surface of flow-level
metadata: injecting a misleading domain, scrambling a domain's
spelling, swapping a hostname for a decoy, and spoofing the user label
or DHCP hostname. Perturbations are pure functions of (signature,
perturbation, seed); inputs are never mutated and ground truth is never
touched.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .evaluation import normalize_label
from .prompts import build_prompt
from .records import DeviceSignature, DomainPort, PromptConfig, PseudoLabel

__all__ = [
    "PERTURBATION_KINDS",
    "Perturbation",
    "NotApplicable",
    "perturb",
    "load_decoy_hostnames",
    "robustness_suite",
    "RobustnessReport",
    "PerturbationOutcome",
]

PERTURBATION_KINDS = (
    "inject_token",
    "scramble_domain",
    "swap_hostname",
    "spoof_user_label",
    "spoof_dhcp_hostname",
)


class NotApplicable(ValueError):
    """The signature lacks the field this perturbation targets."""


@dataclass(frozen=True)
class Perturbation:
    """One perturbation request: what to do and with which payload."""

    kind: str
    payload: str = ""

    def __post_init__(self) -> None:
        if self.kind not in PERTURBATION_KINDS:
            raise ValueError(f"unknown perturbation kind: {self.kind!r}")


def load_decoy_hostnames(path: str | Path) -> tuple[str, ...]:
    decoys = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            decoys.append(line)
    if not decoys:
        raise ValueError(f"decoy list {path} is empty")
    return tuple(decoys)


def _scramble_label(label: str, rng: random.Random) -> str:
    """Transpose one interior adjacent character pair, keeping the first
    and last characters fixed. googleapis -> goolgeapis is the k=3 swap."""
    candidates = [
        k for k in range(1, len(label) - 2) if label[k] != label[k + 1]
    ]
    if not candidates:
        raise NotApplicable(f"label {label!r} has no scrambleable interior pair")
    k = candidates[rng.randrange(len(candidates))]
    chars = list(label)
    chars[k], chars[k + 1] = chars[k + 1], chars[k]
    return "".join(chars)


def _find_target(
    hostnames: frozenset[DomainPort], payload: str, rng: random.Random
) -> DomainPort:
    ordered = sorted(hostnames)
    if payload:
        wanted = DomainPort.parse(payload).base_domain
        for domain in ordered:
            if domain.base_domain == wanted:
                return domain
        raise NotApplicable(f"{wanted!r} not among the signature's hostnames")
    return ordered[rng.randrange(len(ordered))]


def perturb(
    signature: DeviceSignature, perturbation: Perturbation, seed: int = 0
) -> DeviceSignature:
    """Apply one perturbation; deterministic for a given seed.

    The input signature is returned untouched as a new object; derived
    bits (talks_to_ads) keep their originally observed values.
    """
    rng = random.Random(f"{seed}:{perturbation.kind}:{perturbation.payload}")
    kind = perturbation.kind
    payload = perturbation.payload

    if kind == "inject_token":
        if not payload:
            raise ValueError("inject_token needs a domain payload")
        injected = DomainPort.parse(payload)
        return signature.replace(
            remote_hostnames=signature.remote_hostnames | {injected}
        )

    if kind == "scramble_domain":
        if not signature.remote_hostnames:
            raise NotApplicable("no remote hostnames to scramble")
        target = _find_target(signature.remote_hostnames, payload, rng)
        head, _, tail = target.base_domain.partition(".")
        scrambled = _scramble_label(head, rng) + (f".{tail}" if tail else "")
        replaced = DomainPort(scrambled, target.port)
        return signature.replace(
            remote_hostnames=(signature.remote_hostnames - {target}) | {replaced}
        )

    if kind == "swap_hostname":
        if not payload:
            raise ValueError("swap_hostname needs a decoy payload")
        if not signature.remote_hostnames:
            raise NotApplicable("no remote hostnames to swap")
        ordered = sorted(signature.remote_hostnames)
        victim = ordered[rng.randrange(len(ordered))]
        decoy = DomainPort.parse(payload)
        replacement = DomainPort(
            decoy.base_domain, decoy.port if decoy.port is not None else victim.port
        )
        return signature.replace(
            remote_hostnames=(signature.remote_hostnames - {victim}) | {replacement}
        )

    if kind == "spoof_user_label":
        if not payload:
            raise ValueError("spoof_user_label needs a label payload")
        return signature.replace(user_labels=(payload,))

    if kind == "spoof_dhcp_hostname":
        if not payload:
            raise ValueError("spoof_dhcp_hostname needs a hostname payload")
        return signature.replace(dhcp_hostname=payload)

    raise ValueError(f"unknown perturbation kind: {kind!r}")


Labeler = Callable[[Sequence[DeviceSignature]], Sequence[PseudoLabel]]


@dataclass(frozen=True)
class PerturbationOutcome:
    kind: str
    n_devices: int
    n_skipped: int
    unchanged_fraction: float | None
    flipped_devices: tuple[str, ...]
    hallucination_devices: tuple[str, ...]

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "n_devices": self.n_devices,
            "n_skipped": self.n_skipped,
            "unchanged_fraction": self.unchanged_fraction,
            "flipped_devices": list(self.flipped_devices),
            "hallucination_devices": list(self.hallucination_devices),
        }


@dataclass(frozen=True)
class RobustnessReport:
    outcomes: Mapping[str, PerturbationOutcome]
    provenance: Mapping[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "outcomes": {k: v.to_json() for k, v in sorted(self.outcomes.items())}
        }
        if self.provenance:
            out["provenance"] = dict(self.provenance)
        return out


def _mentions(text: str, vendor: str) -> bool:
    return re.search(rf"(?<!\w){re.escape(vendor)}(?!\w)", text, re.IGNORECASE) is not None


def flag_hallucinations(
    signature: DeviceSignature,
    label: PseudoLabel,
    vendor_lexicon: Iterable[str],
    config: PromptConfig,
) -> list[str]:
    """Vendor names the explanation cites that appear neither in the
    device's own prompt text nor in the prediction itself."""
    if not label.explanation:
        return []
    prompt = build_prompt(signature, config)
    prompt_text = prompt if isinstance(prompt, str) else "\n".join(prompt)
    flags = []
    predicted = normalize_label(label.vendor)
    for vendor in sorted(set(vendor_lexicon)):
        if normalize_label(vendor) == predicted:
            continue
        if _mentions(label.explanation, vendor) and not _mentions(prompt_text, vendor):
            flags.append(vendor)
    return flags


def robustness_suite(
    signatures: Sequence[DeviceSignature],
    labeler: Labeler,
    perturbations: Sequence[Perturbation],
    *,
    seed: int = 0,
    config: PromptConfig | None = None,
    vendor_lexicon: Iterable[str] = (),
) -> RobustnessReport:
    """Label clean and perturbed copies, report prediction churn.

    Devices a perturbation does not apply to are skipped for that kind.
    unchanged_fraction compares vendor predictions (normalized) between
    the clean and perturbed runs over the devices with both.
    """
    ordered = sorted(signatures, key=lambda s: s.device_id)
    config = config or PromptConfig()
    lexicon = tuple(vendor_lexicon)

    clean_labels = {l.device_id: l for l in labeler(ordered)}
    outcomes: dict[str, PerturbationOutcome] = {}
    for perturbation in perturbations:
        perturbed: list[DeviceSignature] = []
        skipped = 0
        for signature in ordered:
            try:
                perturbed.append(perturb(signature, perturbation, seed))
            except NotApplicable:
                skipped += 1
        if not perturbed:
            outcomes[perturbation.kind] = PerturbationOutcome(
                perturbation.kind, 0, skipped, None, (), ()
            )
            continue
        perturbed_by_id = {s.device_id: s for s in perturbed}
        new_labels = {l.device_id: l for l in labeler(perturbed)}
        both = sorted(set(clean_labels) & set(new_labels) & set(perturbed_by_id))
        flipped = tuple(
            d
            for d in both
            if normalize_label(new_labels[d].vendor)
            != normalize_label(clean_labels[d].vendor)
        )
        hallucinated = tuple(
            d
            for d in both
            if flag_hallucinations(perturbed_by_id[d], new_labels[d], lexicon, config)
        )
        outcomes[perturbation.kind] = PerturbationOutcome(
            kind=perturbation.kind,
            n_devices=len(both),
            n_skipped=skipped,
            unchanged_fraction=(
                (len(both) - len(flipped)) / len(both) if both else None
            ),
            flipped_devices=flipped,
            hallucination_devices=hallucinated,
        )
    return RobustnessReport(outcomes=outcomes, provenance={"seed": seed})
