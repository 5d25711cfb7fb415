from __future__ import annotations

import pytest

from signet.attribution.scores import AttributionScore
from signet.ensemble import (
    EnsembleWeights,
    LabelingError,
    MissingWeight,
    NoLabels,
    derive_weights,
    ensemble_vote,
    label_dataset,
    vote_dataset,
)
from signet.predictors import StubPredictor, TransportError, field_echo_stub
from signet.records import PromptConfig, PseudoLabel
from signet.vendor_aliases import VendorAliasStore

from conftest import nest_signature, ring_signature, wyze_signature

CONFIG = PromptConfig(cot=False)


def _label(model: str, vendor: str, device_id: str = "d") -> PseudoLabel:
    return PseudoLabel(
        device_id=device_id,
        vendor=vendor,
        model_name=model,
        config=CONFIG,
        raw_response=f"Vendor: {vendor}",
        device_type=f"type-from-{model}",
    )


def test_weighted_plurality_wins():
    labels = [_label("m1", "Nest"), _label("m2", "Wyze"), _label("m3", "Wyze")]
    weights = EnsembleWeights({"m1": 1.0, "m2": 0.4, "m3": 0.4})
    voted = ensemble_vote(labels, weights)
    assert voted.vendor == "Nest"  # 1.0 beats 0.8
    assert voted.model_name == "ensemble"
    assert voted.device_type == "type-from-m1"


def test_alias_resolution_consolidates_before_voting():
    store = VendorAliasStore({"Nest": "Google", "Nest Labs": "Google"})
    labels = [_label("m1", "Nest"), _label("m2", "Nest Labs"), _label("m3", "Wyze")]
    voted = ensemble_vote(labels, alias_store=store)
    # individually 1-1-1, but the two Nest spellings pool under Google
    assert voted.vendor == "Google"


def test_tie_breaks_by_strongest_supporter_then_name():
    labels = [_label("m1", "Nest"), _label("m2", "Wyze")]
    voted = ensemble_vote(labels, EnsembleWeights({"m1": 0.5, "m2": 0.5}))
    # equal totals and equal best supporters: lexicographic on
    # (supporter name, vendor) keeps it deterministic
    assert voted.vendor == "Nest"

    voted = ensemble_vote(labels, EnsembleWeights({"m1": 0.4, "m2": 0.6}))
    assert voted.vendor == "Wyze"


def test_winner_metadata_comes_from_strongest_supporter():
    labels = [
        _label("weak", "Nest"),
        _label("strong", "Nest"),
        _label("other", "Wyze"),
    ]
    weights = EnsembleWeights({"weak": 0.1, "strong": 0.9, "other": 0.5})
    voted = ensemble_vote(labels, weights)
    assert voted.vendor == "Nest"
    assert voted.device_type == "type-from-strong"
    assert voted.raw_response == "Vendor: Nest"


def test_vote_rejects_mixed_devices_and_empty():
    with pytest.raises(NoLabels):
        ensemble_vote([])
    with pytest.raises(ValueError):
        ensemble_vote([_label("m1", "A", "d1"), _label("m2", "B", "d2")])


def test_missing_weight_raises():
    weights = EnsembleWeights({"m1": 1.0})
    with pytest.raises(MissingWeight):
        ensemble_vote([_label("m2", "Nest")], weights)


def test_weights_validation():
    with pytest.raises(ValueError):
        EnsembleWeights({"m1": -0.1})
    with pytest.raises(ValueError):
        EnsembleWeights({"m1": 0.0, "m2": 0.0})
    assert EnsembleWeights.uniform(["b", "a"]).to_json() == {"a": 1.0, "b": 1.0}


def _score(proxy: float | None) -> AttributionScore:
    return AttributionScore(
        feature_name="f",
        ami=proxy,
        stability=proxy,
        proxy_cmi=proxy,
        alpha=0.5,
        n_samples=10,
        note=None if proxy is not None else "insufficient_data",
    )


def test_derive_weights_mean_proxy_cmi():
    weights = derive_weights(
        {
            "m1": [_score(0.8), _score(0.4)],
            "m2": [_score(0.2), _score(None)],
            "m3": [_score(-0.5)],
        }
    )
    assert weights.get("m1") == pytest.approx(0.6)
    assert weights.get("m2") == pytest.approx(0.2)
    assert weights.get("m3") == 0.0  # negative mean clamps


def test_derive_weights_all_zero_falls_back_to_uniform():
    weights = derive_weights({"m1": [_score(-1.0)], "m2": [_score(0.0)]})
    assert weights.get("m1") == weights.get("m2") == 1.0


def test_label_dataset_with_stub_backends():
    signatures = [nest_signature(), ring_signature(), wyze_signature()]
    backends = {
        "echo-oui": field_echo_stub("OUI"),
        "echo-dhcp": field_echo_stub("DHCP Hostname"),
    }
    labels, errors = label_dataset(signatures, backends, PromptConfig())
    assert errors == []
    assert [(l.device_id, l.model_name) for l in labels] == [
        ("cam-nest-01", "echo-dhcp"),
        ("cam-nest-01", "echo-oui"),
        ("cam-wyze-03", "echo-dhcp"),
        ("cam-wyze-03", "echo-oui"),
        ("doorbell-ring-02", "echo-dhcp"),
        ("doorbell-ring-02", "echo-oui"),
    ]
    by_key = {(l.device_id, l.model_name): l.vendor for l in labels}
    assert by_key[("cam-nest-01", "echo-oui")] == "Google, Inc"
    assert by_key[("doorbell-ring-02", "echo-dhcp")] == "ring-doorbell-pro"


def test_label_dataset_parallel_matches_serial():
    signatures = [nest_signature(), ring_signature(), wyze_signature()]
    backends = {"echo": field_echo_stub("OUI")}
    serial, _ = label_dataset(signatures, backends, PromptConfig())
    parallel, _ = label_dataset(signatures, backends, PromptConfig(), jobs=4)
    assert serial == parallel


def test_label_dataset_records_parse_failures():
    signatures = [nest_signature()]
    backends = {"mute": StubPredictor()}  # empty answers
    labels, errors = label_dataset(signatures, backends, PromptConfig())
    assert labels == []
    assert len(errors) == 1
    assert isinstance(errors[0], LabelingError)
    assert errors[0].device_id == "cam-nest-01"
    assert errors[0].model_name == "mute"


def test_label_dataset_propagates_transport_errors():
    class Exploding:
        def query(self, prompt: str) -> str:
            raise TransportError("endpoint unreachable")

    with pytest.raises(TransportError):
        label_dataset([nest_signature()], {"bad": Exploding()}, PromptConfig())


def test_label_dataset_separate_granularity_merges_type():
    stub = StubPredictor(
        responder=lambda p: (
            "Vendor: Nest" if "the vendor" in p else "Device Type: camera"
        )
    )
    labels, errors = label_dataset(
        [nest_signature()], {"m": stub}, PromptConfig(granularity="separate", cot=False)
    )
    assert errors == []
    assert labels[0].vendor == "Nest"
    assert labels[0].device_type == "camera"


def test_vote_dataset_groups_by_device():
    labels = [
        _label("m1", "Nest", "d1"),
        _label("m2", "Nest", "d1"),
        _label("m1", "Wyze", "d2"),
    ]
    voted = vote_dataset(labels)
    assert [(v.device_id, v.vendor) for v in voted] == [("d1", "Nest"), ("d2", "Wyze")]
    assert all(v.model_name == "ensemble" for v in voted)
