"""Core record types shared across the pipeline.

Flow records are the raw per-connection metadata rows; device signatures
are the canonical per-device aggregate the rest of the toolchain consumes.
All types serialize to plain JSON objects with deterministic key order so
that repeated runs produce byte-identical output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

__all__ = [
    "FlowRecord",
    "FlowDecodeError",
    "DomainPort",
    "UAToken",
    "DeviceSignature",
    "PromptConfig",
    "PseudoLabel",
    "canonical_dumps",
]

UA_TOKEN_KINDS = ("browser", "os", "model", "sdk", "other")
GRANULARITIES = ("separate", "joint")


def canonical_dumps(obj: Any) -> str:
    """Serialize to the one canonical JSON form used for all outputs."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


class FlowDecodeError(ValueError):
    """A flow JSON object is missing required fields or has wrong types."""


def _opt_str(obj: Mapping[str, Any], key: str) -> str | None:
    value = obj.get(key)
    if value is None:
        return None
    if not isinstance(value, str):
        raise FlowDecodeError(f"field {key!r} must be a string, got {type(value).__name__}")
    value = value.strip()
    return value or None


@dataclass(frozen=True)
class FlowRecord:
    """One raw flow-level metadata row for a device.

    Every field other than ``device_id`` may be absent; absence is kept
    distinct from empty throughout the pipeline.
    """

    device_id: str
    ts: float = 0.0
    remote_hostname: str | None = None
    remote_port: int | None = None
    user_label: str | None = None
    oui_friendly: str | None = None
    dhcp_hostname: str | None = None
    user_agent_info: str | None = None
    netdisco_info: Mapping[str, str] | None = None

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "FlowRecord":
        if not isinstance(obj, Mapping):
            raise FlowDecodeError("flow record must be a JSON object")
        device_id = obj.get("device_id")
        if not isinstance(device_id, str) or not device_id:
            raise FlowDecodeError("device_id must be a non-empty string")

        ts = obj.get("ts", 0.0)
        if not isinstance(ts, (int, float)) or isinstance(ts, bool):
            raise FlowDecodeError("ts must be a number")

        port_raw = obj.get("remote_port")
        port: int | None
        if port_raw is None:
            port = None
        elif isinstance(port_raw, int) and not isinstance(port_raw, bool):
            port = port_raw
        elif isinstance(port_raw, str) and port_raw.isdigit():
            port = int(port_raw)
        else:
            raise FlowDecodeError("remote_port must be an integer")
        if port is not None and not 0 < port < 65536:
            raise FlowDecodeError(f"remote_port out of range: {port}")

        netdisco = obj.get("netdisco_info")
        if netdisco is not None:
            if not isinstance(netdisco, Mapping):
                raise FlowDecodeError("netdisco_info must be an object")
            cleaned: dict[str, str] = {}
            for key, value in netdisco.items():
                if not isinstance(key, str):
                    raise FlowDecodeError("netdisco_info keys must be strings")
                if value is None:
                    continue
                cleaned[key] = value if isinstance(value, str) else canonical_dumps(value)
            netdisco = cleaned or None

        return cls(
            device_id=device_id,
            ts=float(ts),
            remote_hostname=_opt_str(obj, "remote_hostname"),
            remote_port=port,
            user_label=_opt_str(obj, "user_label"),
            oui_friendly=_opt_str(obj, "oui_friendly"),
            dhcp_hostname=_opt_str(obj, "dhcp_hostname"),
            user_agent_info=_opt_str(obj, "user_agent_info"),
            netdisco_info=netdisco,
        )

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"device_id": self.device_id, "ts": self.ts}
        for key in (
            "remote_hostname",
            "remote_port",
            "user_label",
            "oui_friendly",
            "dhcp_hostname",
            "user_agent_info",
        ):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.netdisco_info:
            out["netdisco_info"] = dict(self.netdisco_info)
        return out


@dataclass(frozen=True)
class DomainPort:
    """A registrable domain with an optional retained port."""

    base_domain: str
    port: int | None = None

    def __post_init__(self) -> None:
        if not self.base_domain:
            raise ValueError("base_domain must be non-empty")
        if self.port is not None and not 0 < self.port < 65536:
            raise ValueError(f"port out of range: {self.port}")

    def render(self) -> str:
        if self.port is None:
            return self.base_domain
        return f"{self.base_domain}:{self.port}"

    @classmethod
    def parse(cls, text: str) -> "DomainPort":
        host, sep, port = text.rpartition(":")
        if sep and port.isdigit():
            return cls(host, int(port))
        return cls(text, None)

    def __lt__(self, other: "DomainPort") -> bool:  # total order with None ports first
        if not isinstance(other, DomainPort):
            return NotImplemented
        return (self.base_domain, self.port is not None, self.port or 0) < (
            other.base_domain,
            other.port is not None,
            other.port or 0,
        )


@dataclass(frozen=True, order=True)
class UAToken:
    """One classified user-agent token."""

    kind: str
    value: str

    def __post_init__(self) -> None:
        if self.kind not in UA_TOKEN_KINDS:
            raise ValueError(f"unknown token kind: {self.kind!r}")
        if not self.value:
            raise ValueError("token value must be non-empty")


@dataclass(frozen=True)
class DeviceSignature:
    """Canonical per-device signature after preprocessing.

    Collections are sets or first-seen-ordered tuples, so two signatures
    built from the same flows in any order compare equal.
    """

    device_id: str
    oui_friendly: str | None = None
    dhcp_hostname: str | None = None
    remote_hostnames: frozenset[DomainPort] = frozenset()
    user_agent_tokens: frozenset[UAToken] = frozenset()
    netdisco_identifiers: Mapping[str, str] = field(default_factory=dict)
    user_labels: tuple[str, ...] = ()
    talks_to_ads: bool = False

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DeviceSignature):
            return NotImplemented
        return self.to_json() == other.to_json()

    def replace(self, **changes: Any) -> "DeviceSignature":
        return replace(self, **changes)

    def is_empty(self) -> bool:
        return not any(
            (
                self.oui_friendly,
                self.dhcp_hostname,
                self.remote_hostnames,
                self.user_agent_tokens,
                self.netdisco_identifiers,
                self.user_labels,
            )
        )

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"device_id": self.device_id, "talks_to_ads": self.talks_to_ads}
        if self.oui_friendly is not None:
            out["oui_friendly"] = self.oui_friendly
        if self.dhcp_hostname is not None:
            out["dhcp_hostname"] = self.dhcp_hostname
        if self.remote_hostnames:
            out["remote_hostnames"] = [d.render() for d in sorted(self.remote_hostnames)]
        if self.user_agent_tokens:
            out["user_agent_tokens"] = [
                {"kind": t.kind, "value": t.value} for t in sorted(self.user_agent_tokens)
            ]
        if self.netdisco_identifiers:
            out["netdisco_identifiers"] = dict(sorted(self.netdisco_identifiers.items()))
        if self.user_labels:
            out["user_labels"] = list(self.user_labels)
        return out

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "DeviceSignature":
        return cls(
            device_id=obj["device_id"],
            oui_friendly=obj.get("oui_friendly"),
            dhcp_hostname=obj.get("dhcp_hostname"),
            remote_hostnames=frozenset(
                DomainPort.parse(d) for d in obj.get("remote_hostnames", ())
            ),
            user_agent_tokens=frozenset(
                UAToken(t["kind"], t["value"]) for t in obj.get("user_agent_tokens", ())
            ),
            netdisco_identifiers=dict(obj.get("netdisco_identifiers", {})),
            user_labels=tuple(obj.get("user_labels", ())),
            talks_to_ads=bool(obj.get("talks_to_ads", False)),
        )

    def dumps(self) -> str:
        return canonical_dumps(self.to_json())


@dataclass(frozen=True)
class PromptConfig:
    """Prompting switches for one labeling run.

    ``search_augmented`` requires the caller to supply an augmentation
    hook when building prompts; the config alone carries no search logic.
    """

    granularity: str = "joint"
    cot: bool = True
    include_ports: bool = False
    search_augmented: bool = False

    def __post_init__(self) -> None:
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"granularity must be one of {GRANULARITIES}")

    def to_json(self) -> dict[str, Any]:
        return {
            "granularity": self.granularity,
            "cot": self.cot,
            "include_ports": self.include_ports,
            "search_augmented": self.search_augmented,
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "PromptConfig":
        return cls(
            granularity=obj.get("granularity", "joint"),
            cot=bool(obj.get("cot", True)),
            include_ports=bool(obj.get("include_ports", False)),
            search_augmented=bool(obj.get("search_augmented", False)),
        )


@dataclass(frozen=True)
class PseudoLabel:
    """One model's (or the ensemble's) prediction for a device."""

    device_id: str
    vendor: str
    model_name: str
    config: PromptConfig
    raw_response: str
    device_type: str | None = None
    explanation: str | None = None

    def __post_init__(self) -> None:
        if not self.vendor or not self.vendor.strip():
            raise ValueError("vendor must be non-empty")
        if self.config.cot and not (self.explanation and self.explanation.strip()):
            raise ValueError("explanation required when cot is enabled")

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "device_id": self.device_id,
            "vendor": self.vendor,
            "model_name": self.model_name,
            "config": self.config.to_json(),
            "raw_response": self.raw_response,
        }
        if self.device_type is not None:
            out["device_type"] = self.device_type
        if self.explanation is not None:
            out["explanation"] = self.explanation
        return out

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "PseudoLabel":
        return cls(
            device_id=obj["device_id"],
            vendor=obj["vendor"],
            model_name=obj["model_name"],
            config=PromptConfig.from_json(obj.get("config", {})),
            raw_response=obj.get("raw_response", ""),
            device_type=obj.get("device_type"),
            explanation=obj.get("explanation"),
        )


def signature_sort_key(sig: DeviceSignature) -> str:
    return sig.device_id


def flows_sorted(flows: Iterable[FlowRecord]) -> list[FlowRecord]:
    """Deterministic flow ordering: by device, then time, then content."""
    return sorted(flows, key=lambda f: (f.device_id, f.ts, canonical_dumps(f.to_json())))
