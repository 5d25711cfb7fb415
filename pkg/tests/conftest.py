from __future__ import annotations

from pathlib import Path

import pytest

from signet.records import DeviceSignature, DomainPort, UAToken

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def psl_path() -> Path:
    return FIXTURES / "public_suffix_list.dat"


def nest_signature() -> DeviceSignature:
    return DeviceSignature(
        device_id="cam-nest-01",
        oui_friendly="Google, Inc.",
        remote_hostnames=frozenset(
            {DomainPort("googleapis.com"), DomainPort("nest.com")}
        ),
        user_labels=("Nest Cam",),
    )


def ring_signature() -> DeviceSignature:
    return DeviceSignature(
        device_id="doorbell-ring-02",
        oui_friendly="Amazon Technologies Inc.",
        dhcp_hostname="ring-doorbell-pro",
        remote_hostnames=frozenset(
            {DomainPort("ring.com", 49152), DomainPort("amazon.com", 443)}
        ),
        netdisco_identifiers={"manufacturer": "Ring", "model": "Ring Doorbell Pro"},
        user_labels=("Front Door",),
    )


def wyze_signature() -> DeviceSignature:
    return DeviceSignature(
        device_id="cam-wyze-03",
        oui_friendly="Wyze Labs Inc.",
        dhcp_hostname="wyze-cam-v3",
        remote_hostnames=frozenset({DomainPort("wyzecam.com", 443)}),
        user_agent_tokens=frozenset({UAToken("other", "WyzeCam/2.14.35")}),
        user_labels=("Wyze Cam",),
    )
