"""Six-stage canonicalization of raw flows into device signatures.

Stages: (1) drop non-informative hostnames, (2) reduce hostnames to
registrable domains with ports retained, (3) merge operator-equivalent
domains, (4) keep only stable netdisco identifier keys, (5) tokenize
user agents, (6) deduplicate per-device rows into a signature. A
derived ``talks_to_ads`` bit is set by exact base-domain lookup against
an ad/tracker domain list.
"""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .psl import HostnameIsPublicSuffix, InvalidHostname, PublicSuffixRules
from .records import (
    DeviceSignature,
    DomainPort,
    FlowRecord,
    UAToken,
    canonical_dumps,
    flows_sorted,
)
from .useragent import parse_user_agent, tokenize_user_agent

__all__ = [
    "PipelineConfig",
    "PipelineStats",
    "EmptyInput",
    "filter_hostname",
    "extract_base_domain",
    "merge_equivalent_domains",
    "parse_netdisco",
    "derive_talks_to_ads",
    "canonicalize_device",
    "run_pipeline",
    "load_domain_aliases",
    "load_ad_domains",
    "signature_to_flows",
]

NETDISCO_KEPT_KEYS = ("manufacturer", "model", "device_type", "friendly_name")

_NONINFORMATIVE_SUFFIXES = (".local", ".arpa")
_UUID = re.compile(
    r"(?:uuid:)?[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}",
    re.IGNORECASE,
)
_MAC_OR_SERIAL = re.compile(r"^[0-9a-f][0-9a-f:\-]{10,}$", re.IGNORECASE)


class EmptyInput(ValueError):
    """No decodable flow records were supplied."""


def filter_hostname(hostname: str | None) -> str | None:
    """Stage 1: return the hostname lowercased, or None if non-informative.

    Non-informative means: any IP literal, mDNS ``.local`` names,
    reverse-lookup ``.arpa`` names, or structurally invalid names.
    """
    if hostname is None:
        return None
    host = hostname.strip().rstrip(".").lower()
    if not host:
        return None
    if host.startswith("[") and host.endswith("]"):
        host = host[1:-1]
    try:
        ipaddress.ip_address(host)
        return None
    except ValueError:
        pass
    if any(host.endswith(suffix) for suffix in _NONINFORMATIVE_SUFFIXES):
        return None
    if ".." in host or host.startswith("."):
        return None
    return host


def extract_base_domain(
    hostname: str, port: int | None, rules: PublicSuffixRules
) -> DomainPort:
    """Stage 2: reduce a hostname to its registrable domain, keeping the port.

    Raises HostnameIsPublicSuffix when nothing is left to register.
    """
    return DomainPort(rules.registrable_domain(hostname), port)


def merge_equivalent_domains(
    domain: DomainPort, aliases: Mapping[str, str]
) -> DomainPort:
    """Stage 3: exact base-domain alias replacement; ports pass through."""
    target = aliases.get(domain.base_domain)
    if target is None or target == domain.base_domain:
        return domain
    return DomainPort(target, domain.port)


def parse_netdisco(blob: Mapping[str, Any] | None) -> dict[str, str]:
    """Stage 4: keep only stable identifier keys with non-volatile values."""
    if not blob:
        return {}
    out: dict[str, str] = {}
    for key in NETDISCO_KEPT_KEYS:
        value = blob.get(key)
        if value is None:
            continue
        if not isinstance(value, str):
            value = canonical_dumps(value)
        value = value.strip()
        if not value:
            continue
        if _UUID.search(value) or _MAC_OR_SERIAL.fullmatch(value):
            continue
        out[key] = value
    return out


def derive_talks_to_ads(
    domains: Iterable[DomainPort], ad_domains: frozenset[str]
) -> bool:
    """Exact base-domain membership; no substring matching."""
    return any(d.base_domain in ad_domains for d in domains)


def load_domain_aliases(path: str | Path) -> dict[str, str]:
    """Load a two-column TSV of ``alias<TAB>canonical`` base domains.

    Chains are resolved to their fixed point at load; cycles are an error.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ValueError(f"{path}:{lineno}: expected alias<TAB>canonical")
        raw[parts[0].strip().lower()] = parts[1].strip().lower()

    resolved: dict[str, str] = {}
    for alias in raw:
        seen = {alias}
        target = raw[alias]
        while target in raw:
            if target in seen:
                raise ValueError(f"alias cycle involving {alias!r}")
            seen.add(target)
            target = raw[target]
        resolved[alias] = target
    return resolved


def load_ad_domains(path: str | Path) -> frozenset[str]:
    domains = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            domains.add(line)
    return frozenset(domains)


@dataclass(frozen=True)
class PipelineConfig:
    psl_rules: PublicSuffixRules
    domain_aliases: Mapping[str, str] = field(default_factory=dict)
    ad_domains: frozenset[str] = frozenset()


@dataclass
class PipelineStats:
    """Row accounting for one pipeline run.

    Invariant: input_flows >= flows_after_hostname_filter >=
    canonical_rows >= unique_devices.
    """

    input_flows: int = 0
    decode_errors: int = 0
    flows_after_hostname_filter: int = 0
    canonical_rows: int = 0
    unique_devices: int = 0
    per_stage_drop_counts: dict[str, int] = field(
        default_factory=lambda: {
            "hostname_noninformative": 0,
            "flow_empty_after_filter": 0,
            "hostname_public_suffix": 0,
            "netdisco_volatile_keys": 0,
            "ua_tokens_dropped": 0,
            "duplicate_rows": 0,
        }
    )

    def to_json(self) -> dict[str, Any]:
        return {
            "input_flows": self.input_flows,
            "decode_errors": self.decode_errors,
            "flows_after_hostname_filter": self.flows_after_hostname_filter,
            "canonical_rows": self.canonical_rows,
            "unique_devices": self.unique_devices,
            "per_stage_drop_counts": dict(sorted(self.per_stage_drop_counts.items())),
        }


def _flow_row(
    flow: FlowRecord, config: PipelineConfig, stats: PipelineStats
) -> dict[str, Any] | None:
    """Stages 1-5 for a single flow; returns the canonical row content
    (ts excluded) or None when nothing informative survives."""
    host = filter_hostname(flow.remote_hostname)
    if flow.remote_hostname is not None and host is None:
        stats.per_stage_drop_counts["hostname_noninformative"] += 1

    domain: DomainPort | None = None
    if host is not None:
        try:
            domain = extract_base_domain(host, flow.remote_port, config.psl_rules)
            domain = merge_equivalent_domains(domain, config.domain_aliases)
        except (HostnameIsPublicSuffix, InvalidHostname):
            stats.per_stage_drop_counts["hostname_public_suffix"] += 1
            domain = None

    netdisco = parse_netdisco(flow.netdisco_info)
    if flow.netdisco_info:
        stats.per_stage_drop_counts["netdisco_volatile_keys"] += len(
            flow.netdisco_info
        ) - len(netdisco)

    tokens = parse_user_agent(flow.user_agent_info)
    if flow.user_agent_info:
        raw_count = len(tokenize_user_agent(flow.user_agent_info))
        # delta counts tokens removed entirely (hashes, bare build tags)
        stats.per_stage_drop_counts["ua_tokens_dropped"] += max(
            0, raw_count - len(tokens)
        )

    row = {
        "domain": domain.render() if domain else None,
        "user_label": flow.user_label,
        "oui_friendly": flow.oui_friendly,
        "dhcp_hostname": flow.dhcp_hostname,
        "ua": sorted(f"{t.kind}:{t.value}" for t in tokens),
        "netdisco": dict(sorted(netdisco.items())),
    }
    if domain is None and not any(
        (flow.user_label, flow.oui_friendly, flow.dhcp_hostname, tokens, netdisco)
    ):
        return None
    return row


def canonicalize_device(
    device_id: str,
    flows: Iterable[FlowRecord],
    config: PipelineConfig,
    stats: PipelineStats | None = None,
) -> DeviceSignature | None:
    """Stage 6: fold one device's flows into a canonical signature.

    Returns None when no flow carries informative content. Output is
    invariant under input flow permutation: sets for unordered fields,
    first-seen order (ties broken by value) elsewhere.
    """
    stats = stats if stats is not None else PipelineStats()
    domains: set[DomainPort] = set()
    tokens: set = set()
    netdisco_first: dict[str, tuple[float, str]] = {}
    label_first: dict[str, float] = {}
    oui_candidates: list[tuple[float, str]] = []
    dhcp_candidates: list[tuple[float, str]] = []
    seen_rows: set[str] = set()
    kept_any = False

    for flow in flows_sorted(flows):
        row = _flow_row(flow, config, stats)
        if row is None:
            stats.per_stage_drop_counts["flow_empty_after_filter"] += 1
            continue
        kept_any = True
        stats.flows_after_hostname_filter += 1
        key = canonical_dumps(row)
        if key in seen_rows:
            stats.per_stage_drop_counts["duplicate_rows"] += 1
            continue
        seen_rows.add(key)

        if row["domain"]:
            domains.add(DomainPort.parse(row["domain"]))
        for entry in row["ua"]:
            kind, _, value = entry.partition(":")
            tokens.add(UAToken(kind, value))
        for key_, value in row["netdisco"].items():
            prior = netdisco_first.get(key_)
            cand = (flow.ts, value)
            if prior is None or cand < prior:
                netdisco_first[key_] = cand
        if row["user_label"] is not None:
            label = row["user_label"]
            if label not in label_first or flow.ts < label_first[label]:
                label_first[label] = flow.ts
        if row["oui_friendly"] is not None:
            oui_candidates.append((flow.ts, row["oui_friendly"]))
        if row["dhcp_hostname"] is not None:
            dhcp_candidates.append((flow.ts, row["dhcp_hostname"]))

    if not kept_any:
        return None

    stats.canonical_rows += len(seen_rows)
    signature = DeviceSignature(
        device_id=device_id,
        oui_friendly=min(oui_candidates)[1] if oui_candidates else None,
        dhcp_hostname=min(dhcp_candidates)[1] if dhcp_candidates else None,
        remote_hostnames=frozenset(domains),
        user_agent_tokens=frozenset(tokens),
        netdisco_identifiers={k: v for k, (_, v) in sorted(netdisco_first.items())},
        user_labels=tuple(
            label for label, _ in sorted(label_first.items(), key=lambda kv: (kv[1], kv[0]))
        ),
        talks_to_ads=derive_talks_to_ads(domains, config.ad_domains),
    )
    return None if signature.is_empty() else signature


def run_pipeline(
    flows: Iterable[FlowRecord],
    config: PipelineConfig,
    *,
    decode_errors: int = 0,
) -> tuple[list[DeviceSignature], PipelineStats]:
    """Run stages 1-6 over a flow collection, grouped by device.

    Raises EmptyInput when no flows were supplied at all.
    """
    stats = PipelineStats(decode_errors=decode_errors)
    by_device: dict[str, list[FlowRecord]] = {}
    for flow in flows:
        stats.input_flows += 1
        by_device.setdefault(flow.device_id, []).append(flow)
    if stats.input_flows == 0:
        raise EmptyInput("no decodable flow records")

    signatures: list[DeviceSignature] = []
    for device_id in sorted(by_device):
        signature = canonicalize_device(device_id, by_device[device_id], config, stats)
        if signature is not None:
            signatures.append(signature)
    stats.unique_devices = len(signatures)
    return signatures, stats


def signature_to_flows(signature: DeviceSignature) -> list[FlowRecord]:
    """Re-expand a signature into synthetic flows that canonicalize back
    to the same signature. Useful for idempotence checks."""
    flows: list[FlowRecord] = []
    base = dict(
        device_id=signature.device_id,
        ts=0.0,
        user_label=signature.user_labels[0] if signature.user_labels else None,
        oui_friendly=signature.oui_friendly,
        dhcp_hostname=signature.dhcp_hostname,
        netdisco_info=dict(signature.netdisco_identifiers) or None,
    )
    hostnames = sorted(signature.remote_hostnames)
    ua_values = [t.value for t in sorted(signature.user_agent_tokens)]
    labels = list(signature.user_labels)
    count = max(len(hostnames), len(ua_values), len(labels), 1)
    for i in range(count):
        row = dict(base)
        row["ts"] = float(i)
        if i < len(hostnames):
            row["remote_hostname"] = hostnames[i].base_domain
            row["remote_port"] = hostnames[i].port
        if i < len(ua_values):
            row["user_agent_info"] = ua_values[i]
        if i < len(labels):
            row["user_label"] = labels[i]
        flows.append(FlowRecord(**row))
    return flows
