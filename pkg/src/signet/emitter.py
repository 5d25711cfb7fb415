"""Instruction-pair emission with curriculum phases and vendor spans.

Phase I trains on high-signal devices (at least one remote hostname);
Phase II covers the full device set. The Phase II holdout is a superset
of the Phase I holdout, so nothing held out early ever leaks into later
training. Every emitted response carries the character span of the
vendor string for span-supervised consumers.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from .prompts import build_prompt, render_response
from .records import DeviceSignature, PromptConfig, PseudoLabel

__all__ = [
    "InstructionPair",
    "SpanNotFound",
    "InvalidFraction",
    "select_high_signal",
    "SplitPlan",
    "make_splits",
    "emit_instruction_pair",
    "emit_dataset",
]

_VENDOR_MARKER = "Vendor: "

PHASES = ("I", "II")
SPLITS = ("train", "holdout")


class SpanNotFound(ValueError):
    """The rendered response does not contain the vendor at a findable span."""


class InvalidFraction(ValueError):
    """Holdout fraction must lie strictly between 0 and 1."""


@dataclass(frozen=True)
class InstructionPair:
    device_id: str
    instruction: str
    response: str
    vendor_span: tuple[int, int]
    phase: str
    split: str

    def __post_init__(self) -> None:
        if self.phase not in PHASES:
            raise ValueError(f"phase must be one of {PHASES}")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}")
        start, end = self.vendor_span
        if not 0 <= start < end <= len(self.response):
            raise ValueError(f"vendor_span out of bounds: {self.vendor_span}")

    def to_json(self) -> dict[str, Any]:
        return {
            "device_id": self.device_id,
            "instruction": self.instruction,
            "response": self.response,
            "vendor_span": list(self.vendor_span),
            "phase": self.phase,
            "split": self.split,
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "InstructionPair":
        return cls(
            device_id=obj["device_id"],
            instruction=obj["instruction"],
            response=obj["response"],
            vendor_span=tuple(obj["vendor_span"]),
            phase=obj["phase"],
            split=obj["split"],
        )

    @property
    def vendor_text(self) -> str:
        start, end = self.vendor_span
        return self.response[start:end]


def select_high_signal(
    signatures: Sequence[DeviceSignature],
) -> list[DeviceSignature]:
    """Devices with at least one remote hostname, sorted by id."""
    return sorted(
        (s for s in signatures if s.remote_hostnames), key=lambda s: s.device_id
    )


@dataclass(frozen=True)
class SplitPlan:
    phase1_train: tuple[str, ...]
    phase1_holdout: tuple[str, ...]
    phase2_train: tuple[str, ...]
    phase2_holdout: tuple[str, ...]

    def to_json(self) -> dict[str, Any]:
        return {
            "phase1_train": list(self.phase1_train),
            "phase1_holdout": list(self.phase1_holdout),
            "phase2_train": list(self.phase2_train),
            "phase2_holdout": list(self.phase2_holdout),
        }


def make_splits(
    signatures: Sequence[DeviceSignature],
    holdout_fraction: float = 0.1,
    seed: int = 0,
) -> SplitPlan:
    """Seeded train/holdout assignment for both phases.

    Holdout sizes are floor(n * fraction) of each phase's population.
    The Phase II holdout always contains the whole Phase I holdout, even
    when that overshoots its floor target.
    """
    if not 0.0 < holdout_fraction < 1.0:
        raise InvalidFraction(f"holdout_fraction={holdout_fraction!r}")
    high_ids = [s.device_id for s in select_high_signal(signatures)]
    all_ids = sorted(s.device_id for s in signatures)
    rng = random.Random(f"{seed}:splits")

    h1 = int(len(high_ids) * holdout_fraction)
    phase1_holdout = sorted(rng.sample(high_ids, h1)) if h1 else []
    phase1_train = [d for d in high_ids if d not in set(phase1_holdout)]

    h2 = int(len(all_ids) * holdout_fraction)
    extra_needed = max(0, h2 - len(phase1_holdout))
    remaining = [d for d in all_ids if d not in set(phase1_holdout)]
    extra = sorted(rng.sample(remaining, extra_needed)) if extra_needed else []
    phase2_holdout = sorted(set(phase1_holdout) | set(extra))
    phase2_train = [d for d in all_ids if d not in set(phase2_holdout)]

    return SplitPlan(
        phase1_train=tuple(phase1_train),
        phase1_holdout=tuple(phase1_holdout),
        phase2_train=tuple(phase2_train),
        phase2_holdout=tuple(phase2_holdout),
    )


def emit_instruction_pair(
    signature: DeviceSignature,
    label: PseudoLabel,
    phase: str,
    split: str,
    config: PromptConfig | None = None,
) -> InstructionPair:
    """Render one (instruction, response) pair with the vendor span.

    The span is located from the rightmost ``Vendor: `` marker in the
    response and verified to slice out the vendor string exactly.
    """
    if label.device_id != signature.device_id:
        raise ValueError("label and signature describe different devices")
    config = config or label.config
    if config.granularity != "joint":
        raise ValueError("instruction pairs are emitted from joint prompts")
    instruction = build_prompt(signature, config)
    assert isinstance(instruction, str)
    response = render_response(label)

    marker = response.rfind(_VENDOR_MARKER)
    if marker == -1:
        raise SpanNotFound("response lacks a vendor marker")
    start = marker + len(_VENDOR_MARKER)
    end = start + len(label.vendor)
    if response[start:end] != label.vendor:
        raise SpanNotFound("vendor span does not slice the vendor string")
    return InstructionPair(
        device_id=signature.device_id,
        instruction=instruction,
        response=response,
        vendor_span=(start, end),
        phase=phase,
        split=split,
    )


def emit_dataset(
    signatures: Sequence[DeviceSignature],
    labels: Sequence[PseudoLabel],
    plan: SplitPlan,
    config: PromptConfig | None = None,
) -> list[InstructionPair]:
    """All pairs for both phases, ordered (phase, split, device_id).

    Devices without a label are skipped; a device selected for both
    phases appears once per phase.
    """
    sig_by_id = {s.device_id: s for s in signatures}
    label_by_id: dict[str, PseudoLabel] = {}
    for label in sorted(labels, key=lambda l: (l.device_id, l.model_name)):
        label_by_id.setdefault(label.device_id, label)

    quadrants = (
        ("I", "train", plan.phase1_train),
        ("I", "holdout", plan.phase1_holdout),
        ("II", "train", plan.phase2_train),
        ("II", "holdout", plan.phase2_holdout),
    )
    pairs: list[InstructionPair] = []
    for phase, split, device_ids in quadrants:
        for device_id in sorted(device_ids):
            signature = sig_by_id.get(device_id)
            label = label_by_id.get(device_id)
            if signature is None or label is None:
                continue
            pairs.append(emit_instruction_pair(signature, label, phase, split, config))
    return pairs
