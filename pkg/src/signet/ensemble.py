"""Ensemble pseudo-labeling: query several backends, consolidate, vote.

Votes are weighted pluralities over alias-resolved vendor names, so two
backends answering "Nest" and "Google" agree when the alias store maps
one to the other. The winning label's explanation comes from the
highest-weight agreeing backend; every tie falls back to model-name
lexicographic order, which keeps runs deterministic.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .attribution.scores import AttributionScore
from .predictors import Predictor, PredictorError
from .prompts import (
    EmptySignature,
    MalformedResponse,
    ParsedResponse,
    PlaceholderResponse,
    build_prompt,
    parse_response,
)
from .records import DeviceSignature, PromptConfig, PseudoLabel
from .vendor_aliases import VendorAliasStore

__all__ = [
    "EnsembleWeights",
    "NoLabels",
    "MissingWeight",
    "derive_weights",
    "ensemble_vote",
    "label_dataset",
    "vote_dataset",
    "LabelingError",
]

ENSEMBLE_MODEL_NAME = "ensemble"


class NoLabels(ValueError):
    """Vote called with no candidate labels."""


class MissingWeight(KeyError):
    """A label's model has no entry in the ensemble weights."""


@dataclass(frozen=True)
class EnsembleWeights:
    """Non-negative per-model vote weights; at least one must be positive."""

    weights: Mapping[str, float]

    def __post_init__(self) -> None:
        if not self.weights:
            raise ValueError("weights must be non-empty")
        for model, weight in self.weights.items():
            if weight < 0:
                raise ValueError(f"negative weight for {model!r}")
        if not any(w > 0 for w in self.weights.values()):
            raise ValueError("at least one weight must be positive")

    def get(self, model_name: str) -> float:
        if model_name not in self.weights:
            raise MissingWeight(model_name)
        return float(self.weights[model_name])

    @classmethod
    def uniform(cls, model_names: Iterable[str]) -> "EnsembleWeights":
        return cls({name: 1.0 for name in model_names})

    def to_json(self) -> dict[str, float]:
        return dict(sorted(self.weights.items()))


def derive_weights(
    scores_by_model: Mapping[str, Sequence[AttributionScore]],
) -> EnsembleWeights:
    """Weight each model by its mean proxy CMI over scored features.

    Negative means clamp to zero; if every model clamps to zero the
    weights fall back to uniform.
    """
    weights: dict[str, float] = {}
    for model, scores in scores_by_model.items():
        values = [s.proxy_cmi for s in scores if s.proxy_cmi is not None]
        mean = sum(values) / len(values) if values else 0.0
        weights[model] = max(0.0, mean)
    if not weights:
        raise ValueError("no models to weight")
    if not any(w > 0 for w in weights.values()):
        return EnsembleWeights.uniform(weights)
    return EnsembleWeights(weights)


def ensemble_vote(
    labels: Sequence[PseudoLabel],
    weights: EnsembleWeights | None = None,
    alias_store: VendorAliasStore | None = None,
) -> PseudoLabel:
    """Consolidate one device's per-model labels into a single label."""
    labels = list(labels)
    if not labels:
        raise NoLabels("no candidate labels")
    device_ids = {label.device_id for label in labels}
    if len(device_ids) != 1:
        raise ValueError(f"labels span multiple devices: {sorted(device_ids)}")
    if weights is None:
        weights = EnsembleWeights.uniform(sorted({l.model_name for l in labels}))

    resolve = alias_store.resolve if alias_store is not None else (lambda v: v)
    tally: dict[str, float] = {}
    supporters: dict[str, list[tuple[float, str, PseudoLabel]]] = {}
    for label in labels:
        canonical = resolve(label.vendor)
        weight = weights.get(label.model_name)
        tally[canonical] = tally.get(canonical, 0.0) + weight
        supporters.setdefault(canonical, []).append((weight, label.model_name, label))

    def vendor_rank(vendor: str) -> tuple:
        best = sorted(supporters[vendor], key=lambda s: (-s[0], s[1]))[0]
        # total weight, then strongest supporter, then its name, then vendor
        return (-tally[vendor], -best[0], best[1], vendor)

    winner = sorted(tally, key=vendor_rank)[0]
    _, _, chosen = sorted(supporters[winner], key=lambda s: (-s[0], s[1]))[0]

    return PseudoLabel(
        device_id=chosen.device_id,
        vendor=winner,
        model_name=ENSEMBLE_MODEL_NAME,
        config=chosen.config,
        raw_response=chosen.raw_response,
        device_type=chosen.device_type,
        explanation=chosen.explanation,
    )


@dataclass(frozen=True)
class LabelingError:
    device_id: str
    model_name: str
    stage: str
    error: str

    def to_json(self) -> dict[str, str]:
        return {
            "device_id": self.device_id,
            "model_name": self.model_name,
            "stage": self.stage,
            "error": self.error,
        }


def _label_one(
    signature: DeviceSignature,
    backends: Mapping[str, Predictor],
    config: PromptConfig,
    augment,
) -> tuple[list[PseudoLabel], list[LabelingError]]:
    labels: list[PseudoLabel] = []
    errors: list[LabelingError] = []
    try:
        prompt = build_prompt(signature, config, augment)
    except EmptySignature:
        return [], [LabelingError(signature.device_id, "*", "prompt", "empty signature")]

    for model_name in sorted(backends):
        predictor = backends[model_name]
        try:
            if config.granularity == "separate":
                vendor_prompt, type_prompt = prompt
                vendor_text = predictor.query(vendor_prompt)
                parsed = parse_response(vendor_text, config, expect="vendor")
                raw = vendor_text
                device_type = None
                try:
                    type_text = predictor.query(type_prompt)
                    device_type = parse_response(
                        type_text, config, expect="type"
                    ).device_type
                    raw = f"{vendor_text}\n---\n{type_text}"
                except (MalformedResponse, PlaceholderResponse) as exc:
                    errors.append(
                        LabelingError(
                            signature.device_id, model_name, "type_parse", str(exc)
                        )
                    )
                parsed = ParsedResponse(
                    vendor=parsed.vendor,
                    device_type=device_type,
                    explanation=parsed.explanation,
                )
            else:
                raw = predictor.query(prompt)
                parsed = parse_response(raw, config)
            labels.append(
                PseudoLabel(
                    device_id=signature.device_id,
                    vendor=parsed.vendor,
                    model_name=model_name,
                    config=config,
                    raw_response=raw,
                    device_type=parsed.device_type,
                    explanation=parsed.explanation,
                )
            )
        except (MalformedResponse, PlaceholderResponse, ValueError) as exc:
            errors.append(
                LabelingError(signature.device_id, model_name, "parse", str(exc))
            )
        except PredictorError:
            raise
    return labels, errors


def label_dataset(
    signatures: Sequence[DeviceSignature],
    backends: Mapping[str, Predictor],
    config: PromptConfig,
    *,
    jobs: int = 1,
    augment: Callable[[DeviceSignature], str] | None = None,
) -> tuple[list[PseudoLabel], list[LabelingError]]:
    """Query every backend for every signature.

    Returns per-model labels sorted by (device_id, model_name) plus an
    error log; voting is a separate step. Transport errors propagate
    after built-in retries so callers can distinguish exhaustion from
    malformed content.
    """
    if not backends:
        raise ValueError("no prediction backends")
    ordered = sorted(signatures, key=lambda s: s.device_id)
    results: list[tuple[list[PseudoLabel], list[LabelingError]]]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(lambda s: _label_one(s, backends, config, augment), ordered)
            )
    else:
        results = [_label_one(s, backends, config, augment) for s in ordered]

    labels: list[PseudoLabel] = []
    errors: list[LabelingError] = []
    for got_labels, got_errors in results:
        labels.extend(got_labels)
        errors.extend(got_errors)
    labels.sort(key=lambda l: (l.device_id, l.model_name))
    return labels, errors


def vote_dataset(
    labels: Sequence[PseudoLabel],
    weights: EnsembleWeights | None = None,
    alias_store: VendorAliasStore | None = None,
) -> list[PseudoLabel]:
    """Group per-model labels by device and vote each group."""
    by_device: dict[str, list[PseudoLabel]] = {}
    for label in labels:
        by_device.setdefault(label.device_id, []).append(label)
    return [
        ensemble_vote(by_device[device_id], weights, alias_store)
        for device_id in sorted(by_device)
    ]
