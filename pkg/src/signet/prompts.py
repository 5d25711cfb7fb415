"""Prompt construction and response parsing for vendor/type prediction.

Prompts render signature fields in a fixed order with fixed labels, so
downstream ablation can verify a field's absence by its label text.
Parsing is tolerant of the common response shapes: a JSON object, an
inline ``Device Type: X, Vendor: Y`` prediction, or an explanation
followed by the prediction. The first well-formed prediction wins, so
trailing repetition is harmless.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Callable

from .records import DeviceSignature, PromptConfig, PseudoLabel

__all__ = [
    "ParsedResponse",
    "EmptySignature",
    "MissingAugmentationHook",
    "MalformedResponse",
    "PlaceholderResponse",
    "build_prompt",
    "parse_response",
    "render_response",
    "FIELD_LABELS",
    "named_configs",
]

FIELD_LABELS = (
    ("oui_friendly", "OUI"),
    ("dhcp_hostname", "DHCP Hostname"),
    ("remote_hostname", "Remote Hostnames"),
    ("user_agent_info", "User Agent"),
    ("talks_to_ads", "Talks to Ads"),
    ("user_labels", "User Label"),
    ("netdisco_info", "Netdisco Info"),
)

_PREAMBLE = "Below is information about a device."
_FORM_JOINT = "Device Type: <device type>, Vendor: <vendor>"
_FORM_VENDOR = "Vendor: <vendor>"
_FORM_TYPE = "Device Type: <device type>"


class EmptySignature(ValueError):
    """Signature has no renderable metadata fields."""


class MissingAugmentationHook(ValueError):
    """Config requests search augmentation but no hook was supplied."""


class MalformedResponse(ValueError):
    """No prediction could be extracted from the response text."""


class PlaceholderResponse(ValueError):
    """The response parrots the format placeholders instead of answering."""


@dataclass(frozen=True)
class ParsedResponse:
    vendor: str | None
    device_type: str | None
    explanation: str | None


def _field_lines(
    signature: DeviceSignature, config: PromptConfig
) -> list[str]:
    lines: list[str] = []
    if signature.oui_friendly:
        lines.append(f"OUI: {signature.oui_friendly}")
    if signature.dhcp_hostname:
        lines.append(f"DHCP Hostname: {signature.dhcp_hostname}")
    if signature.remote_hostnames:
        if config.include_ports:
            hosts = sorted(d.render() for d in signature.remote_hostnames)
        else:
            hosts = sorted({d.base_domain for d in signature.remote_hostnames})
        lines.append(f"Remote Hostnames: {', '.join(hosts)}")
    if signature.user_agent_tokens:
        values = [t.value for t in sorted(signature.user_agent_tokens)]
        lines.append(f"User Agent: {' '.join(values)}")
    lines.append(f"Talks to Ads: {signature.talks_to_ads}")
    if signature.user_labels:
        lines.append(f"User Label: {'; '.join(signature.user_labels)}")
    if signature.netdisco_identifiers:
        values = [v for _, v in sorted(signature.netdisco_identifiers.items())]
        lines.append(f"Netdisco Info: {'; '.join(values)}")
    return lines


def _instruction(target: str, form: str, cot: bool) -> str:
    if cot:
        return (
            f"{_PREAMBLE} Think step-by-step, then predict {target}. "
            "Respond with an Explanation followed by a prediction in the "
            f"form: {form}."
        )
    return (
        f"{_PREAMBLE} Predict {target}. "
        f"Respond only with a prediction in the form: {form}."
    )


def build_prompt(
    signature: DeviceSignature,
    config: PromptConfig,
    augment: Callable[[DeviceSignature], str] | None = None,
) -> str | tuple[str, str]:
    """Render the prompt(s) for one signature.

    Joint granularity returns one prompt; separate granularity returns a
    (vendor_prompt, type_prompt) pair.
    """
    lines = _field_lines(signature, config)
    if len(lines) == 1:  # only the derived ads bit is present
        raise EmptySignature(signature.device_id)
    if config.search_augmented:
        if augment is None:
            raise MissingAugmentationHook(
                "search_augmented config needs an augmentation hook"
            )
        extra = augment(signature).strip()
        if extra:
            lines.append(f"Search Context: {extra}")
    body = "\n".join(lines)

    if config.granularity == "joint":
        head = _instruction("the device type and vendor", _FORM_JOINT, config.cot)
        return f"{head}\n\n{body}"
    vendor_head = _instruction("the vendor", _FORM_VENDOR, config.cot)
    type_head = _instruction("the device type", _FORM_TYPE, config.cot)
    return (f"{vendor_head}\n\n{body}", f"{type_head}\n\n{body}")


_COMBO = re.compile(
    r"Device\s*Type\s*:\s*(?P<type>[^,\n]*?)\s*,\s*Vendor\s*:\s*(?P<vendor>[^\n]+)",
    re.IGNORECASE,
)
_VENDOR = re.compile(r"Vendor\s*:\s*(?P<vendor>[^\n]+)", re.IGNORECASE)
_TYPE = re.compile(r"Device\s*Type\s*:\s*(?P<type>[^,\n]+)", re.IGNORECASE)
_EXPLANATION = re.compile(
    r"Explanation\s*:\s*(?P<explanation>.*?)(?=\n\s*(?:Device\s*Type|Vendor)\s*:|\Z)",
    re.IGNORECASE | re.DOTALL,
)
_PLACEHOLDER = re.compile(r"^<[^<>]*>$|^\.{2,}$")


def _clean(value: str | None) -> str | None:
    if value is None:
        return None
    value = value.strip().strip('"').strip("'").rstrip(".,;").strip()
    return value or None


def _check_placeholder(value: str | None) -> None:
    if value is None:
        return
    if _PLACEHOLDER.fullmatch(value.strip()):
        raise PlaceholderResponse(value)
    lowered = value.lower()
    if "<vendor>" in lowered or "<device type>" in lowered or "<explanation>" in lowered:
        raise PlaceholderResponse(value)


def _clean_checked(value: str | None) -> str | None:
    # placeholders are rejected before cleaning so "..." is not silently
    # stripped down to an empty string
    _check_placeholder(value)
    return _clean(value)


def _json_candidate(text: str) -> dict | None:
    decoder = json.JSONDecoder()
    idx = text.find("{")
    while idx != -1:
        try:
            obj, _ = decoder.raw_decode(text, idx)
        except ValueError:
            idx = text.find("{", idx + 1)
            continue
        if isinstance(obj, dict):
            return obj
        idx = text.find("{", idx + 1)
    return None


def parse_response(
    text: str, config: PromptConfig, expect: str = "auto"
) -> ParsedResponse:
    """Extract (vendor, device_type, explanation) from a model response.

    ``expect`` is "joint", "vendor", or "type"; "auto" maps separate
    granularity to "vendor". The expected prediction field is required;
    everything else is best-effort.
    """
    if expect == "auto":
        expect = "joint" if config.granularity == "joint" else "vendor"
    if expect not in ("joint", "vendor", "type"):
        raise ValueError(f"expect must be joint/vendor/type, got {expect!r}")

    vendor: str | None = None
    device_type: str | None = None
    explanation: str | None = None

    obj = _json_candidate(text)
    if obj is not None:
        keyed = {str(k).strip().lower(): v for k, v in obj.items()}
        vendor = _clean_checked(str(keyed["vendor"])) if "vendor" in keyed else None
        for key in ("device type", "device_type", "type"):
            if key in keyed:
                device_type = _clean_checked(str(keyed[key]))
                break
        if "explanation" in keyed and keyed["explanation"] is not None:
            explanation = str(keyed["explanation"]).strip() or None

    if vendor is None:
        combo = _COMBO.search(text)
        first_vendor = _VENDOR.search(text)
        if combo and (first_vendor is None or combo.start() <= first_vendor.start()):
            vendor = _clean_checked(combo.group("vendor"))
            device_type = device_type or _clean_checked(combo.group("type"))
        else:
            if first_vendor:
                vendor = _clean_checked(first_vendor.group("vendor"))
            if device_type is None:
                type_match = _TYPE.search(text)
                if type_match:
                    device_type = _clean_checked(type_match.group("type"))

    if explanation is None:
        expl_match = _EXPLANATION.search(text)
        if expl_match:
            explanation = expl_match.group("explanation").strip() or None

    _check_placeholder(vendor)
    _check_placeholder(device_type)
    _check_placeholder(explanation)

    if expect in ("joint", "vendor") and not vendor:
        raise MalformedResponse("no extractable vendor")
    if expect == "type" and not device_type:
        raise MalformedResponse("no extractable device type")
    return ParsedResponse(vendor=vendor, device_type=device_type, explanation=explanation)


def render_response(label: PseudoLabel) -> str:
    """Canonical textual response for a pseudo-label.

    parse_response of the result recovers (vendor, device_type) exactly.
    """
    if label.device_type:
        prediction = f"Device Type: {label.device_type}, Vendor: {label.vendor}"
    else:
        prediction = f"Vendor: {label.vendor}"
    if label.explanation:
        return f"Explanation: {label.explanation}\n\n{prediction}"
    return prediction


def named_configs() -> dict[str, PromptConfig]:
    """The twelve standard prompting configurations."""
    out: dict[str, PromptConfig] = {}
    for granularity in ("separate", "joint"):
        base = granularity.capitalize()
        for cot in (False, True):
            for ports in (False, True):
                name = base
                if cot:
                    name += "+CoT"
                if ports:
                    name += "+Ports"
                out[name] = PromptConfig(
                    granularity=granularity, cot=cot, include_ports=ports
                )
    for cot in (False, True):
        for ports in (False, True):
            name = "Search"
            if cot:
                name += "+CoT"
            if ports:
                name += "+Ports"
            out[name] = PromptConfig(
                granularity="joint",
                cot=cot,
                include_ports=ports,
                search_augmented=True,
            )
    return out
