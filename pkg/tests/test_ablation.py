from __future__ import annotations

import pytest

from signet.ablation import AblationReport, ablate_signature, leave_one_out
from signet.attribution.scores import FEATURES
from signet.ensemble import label_dataset
from signet.predictors import field_echo_stub
from signet.records import PromptConfig

from conftest import nest_signature, ring_signature, wyze_signature


def test_ablate_each_feature_empties_only_that_field():
    sig = ring_signature()
    assert ablate_signature(sig, "oui_friendly").oui_friendly is None
    assert ablate_signature(sig, "dhcp_hostname").dhcp_hostname is None
    assert ablate_signature(sig, "remote_hostname").remote_hostnames == frozenset()
    assert ablate_signature(sig, "user_agent_info").user_agent_tokens == frozenset()
    assert ablate_signature(sig, "netdisco_info").netdisco_identifiers == {}
    assert ablate_signature(sig, "user_labels").user_labels == ()


def test_ablate_leaves_everything_else_alone():
    sig = ring_signature()
    out = ablate_signature(sig, "dhcp_hostname")
    assert out.oui_friendly == sig.oui_friendly
    assert out.remote_hostnames == sig.remote_hostnames
    assert out.netdisco_identifiers == sig.netdisco_identifiers
    assert out.talks_to_ads == sig.talks_to_ads
    # original is untouched
    assert sig.dhcp_hostname == "ring-doorbell-pro"


def test_ablate_keeps_observed_ads_bit():
    # the derived bit reflects the observed traffic, not the remaining fields
    sig = ring_signature().replace(talks_to_ads=True)
    assert ablate_signature(sig, "remote_hostname").talks_to_ads is True


def test_ablate_unknown_feature():
    with pytest.raises(ValueError):
        ablate_signature(ring_signature(), "nonsense")


def _echo_labeler(field_label: str):
    stub = field_echo_stub(field_label)

    def labeler(signatures):
        labels, _ = label_dataset(signatures, {"stub": stub}, PromptConfig())
        return labels

    return labeler


def test_leave_one_out_collapses_only_keyed_feature():
    signatures = [nest_signature(), ring_signature(), wyze_signature()]
    references = {
        "cam-nest-01": "Google, Inc",
        "doorbell-ring-02": "Amazon Technologies Inc",
        "cam-wyze-03": "Wyze Labs Inc",
    }
    report = leave_one_out(signatures, references, _echo_labeler("OUI"))
    assert report.baseline_accuracy == pytest.approx(1.0)
    assert report.n_devices == 3
    deltas = report.deltas
    assert deltas["oui_friendly"] == pytest.approx(-1.0)
    for feature in FEATURES:
        if feature != "oui_friendly":
            assert deltas[feature] == pytest.approx(0.0), feature


def test_leave_one_out_missing_prediction_counts_as_miss():
    # DHCP echo: nest has no dhcp_hostname, so its answer falls to the
    # default vendor and misses; ablating dhcp kills the other two as well
    signatures = [nest_signature(), ring_signature(), wyze_signature()]
    references = {
        "cam-nest-01": "nest-cam",
        "doorbell-ring-02": "ring-doorbell-pro",
        "cam-wyze-03": "wyze-cam-v3",
    }
    report = leave_one_out(signatures, references, _echo_labeler("DHCP Hostname"))
    assert report.baseline_accuracy == pytest.approx(2.0 / 3.0)
    assert report.per_feature_accuracy["dhcp_hostname"] == pytest.approx(0.0)


def test_leave_one_out_fixed_denominator():
    signatures = [nest_signature(), ring_signature()]
    references = {"cam-nest-01": "Google, Inc", "unrelated-device": "Acme"}
    report = leave_one_out(signatures, references, _echo_labeler("OUI"))
    assert report.n_devices == 1  # only the overlap counts
    assert report.baseline_accuracy == pytest.approx(1.0)


def test_leave_one_out_requires_overlap():
    with pytest.raises(ValueError):
        leave_one_out([nest_signature()], {"other": "X"}, _echo_labeler("OUI"))


def test_report_json_round_trip():
    report = AblationReport(
        baseline_accuracy=0.75,
        per_feature_accuracy={"oui_friendly": 0.25, "dhcp_hostname": 0.75},
        n_devices=4,
    )
    out = report.to_json()
    assert out["baseline_accuracy"] == 0.75
    assert out["deltas"]["oui_friendly"] == pytest.approx(-0.5)
    assert out["n_devices"] == 4
