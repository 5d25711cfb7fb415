"""signet: device signatures from network metadata.

Library and CLI for turning raw flow-level IoT metadata into canonical
device signatures, attributing predictive signal to metadata fields,
orchestrating ensemble pseudo-labeling, scoring predictions against
tiered rubrics, stress-testing them under metadata perturbations, and
emitting curriculum instruction-pair datasets.
"""

__version__ = "0.1.0"

from .records import (
    DeviceSignature,
    DomainPort,
    FlowRecord,
    PromptConfig,
    PseudoLabel,
    UAToken,
)

__all__ = [
    "__version__",
    "DeviceSignature",
    "DomainPort",
    "FlowRecord",
    "PromptConfig",
    "PseudoLabel",
    "UAToken",
]
