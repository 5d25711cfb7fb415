"""Command-line interface.

Subcommands mirror the pipeline stages: preprocess, label, vote,
attribute, evaluate, ablate, perturb, emit. Exit codes: 0 success,
2 usage errors (argparse validation, missing input paths), 3 fatal
input decode failures, 4 prediction transport exhaustion.

Stream outputs (JSONL) start with one provenance record carrying the
command, configuration, seed, and input digests; report outputs embed
the same object under a "provenance" key. Nothing here writes
timestamps, so identical invocations produce identical bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from . import __version__
from .ablation import leave_one_out
from .adversarial import Perturbation, NotApplicable, load_decoy_hostnames, perturb
from .attribution.scores import rank_features
from .emitter import emit_dataset, make_splits
from .ensemble import EnsembleWeights, label_dataset, vote_dataset
from .evaluation import (
    EvalReport,
    LabeledPair,
    RubricConfig,
    evaluate,
    load_adjudications,
    load_ambiguous_labels,
    load_semantic_map,
)
from .jsonl import JsonlError, iter_jsonl, sha256_file, write_jsonl
from .predictors import (
    ENV_KEY,
    ENV_URL,
    HttpPredictor,
    Predictor,
    PredictorError,
    RateLimiter,
    StubPredictor,
    field_echo_stub,
)
from .preprocess import (
    EmptyInput,
    PipelineConfig,
    load_ad_domains,
    load_domain_aliases,
    run_pipeline,
)
from .psl import PublicSuffixRules
from .records import (
    DeviceSignature,
    FlowDecodeError,
    FlowRecord,
    PromptConfig,
    PseudoLabel,
    canonical_dumps,
)
from .vendor_aliases import VendorAliasStore

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NETWORK = 4


class _InputError(Exception):
    """Fatal input decode problem; maps to exit code 3."""


def _existing_file(value: str) -> Path:
    path = Path(value)
    if not path.is_file():
        raise argparse.ArgumentTypeError(f"input file not found: {value}")
    return path


def _fraction(value: str) -> float:
    try:
        parsed = float(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {value}") from exc
    if not 0.0 < parsed < 1.0:
        raise argparse.ArgumentTypeError("fraction must be strictly between 0 and 1")
    return parsed


def _alpha(value: str) -> float:
    try:
        parsed = float(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {value}") from exc
    if not 0.0 <= parsed <= 1.0:
        raise argparse.ArgumentTypeError("alpha must lie in [0, 1]")
    return parsed


def _provenance(
    command: str,
    inputs: Mapping[str, Path],
    config: Mapping[str, Any] | None = None,
    seed: int | None = None,
) -> dict[str, Any]:
    out: dict[str, Any] = {
        "record": "provenance",
        "command": command,
        "package_version": __version__,
        "inputs": {
            name: {"path": str(path), "sha256": sha256_file(path)}
            for name, path in sorted(inputs.items())
        },
    }
    if config:
        out["config"] = dict(sorted(config.items()))
    if seed is not None:
        out["seed"] = seed
    return out


def _iter_data_records(path: Path) -> Iterable[Mapping[str, Any]]:
    try:
        for _, obj in iter_jsonl(path, strict=True):
            if isinstance(obj, Mapping) and obj.get("record") == "provenance":
                continue
            yield obj
    except (JsonlError, OSError, UnicodeDecodeError) as exc:
        raise _InputError(str(exc)) from exc


def _read_signatures(path: Path) -> list[DeviceSignature]:
    out = []
    for obj in _iter_data_records(path):
        try:
            out.append(DeviceSignature.from_json(obj))
        except (KeyError, TypeError, ValueError) as exc:
            raise _InputError(f"{path}: bad signature record: {exc}") from exc
    if not out:
        raise _InputError(f"{path}: no signature records")
    return out


def _read_labels(path: Path) -> list[PseudoLabel]:
    out = []
    for obj in _iter_data_records(path):
        try:
            out.append(PseudoLabel.from_json(obj))
        except (KeyError, TypeError, ValueError) as exc:
            raise _InputError(f"{path}: bad label record: {exc}") from exc
    if not out:
        raise _InputError(f"{path}: no label records")
    return out


def _read_references(path: Path) -> dict[str, str]:
    refs: dict[str, str] = {}
    for obj in _iter_data_records(path):
        device_id = obj.get("device_id")
        vendor = obj.get("vendor")
        if not isinstance(device_id, str) or not isinstance(vendor, str):
            raise _InputError(f"{path}: reference records need device_id and vendor")
        refs[device_id] = vendor
    if not refs:
        raise _InputError(f"{path}: no reference records")
    return refs


def _load_or_input_error(loader: Callable[[], Any], what: str) -> Any:
    try:
        return loader()
    except (OSError, UnicodeDecodeError, ValueError) as exc:
        raise _InputError(f"failed to load {what}: {exc}") from exc


# ---------------------------------------------------------------- preprocess


def _cmd_preprocess(args: argparse.Namespace) -> int:
    rules = _load_or_input_error(
        lambda: PublicSuffixRules.load(args.psl), f"suffix rules from {args.psl}"
    )
    aliases = (
        _load_or_input_error(
            lambda: load_domain_aliases(args.domain_aliases), "domain aliases"
        )
        if args.domain_aliases
        else {}
    )
    ads = (
        _load_or_input_error(lambda: load_ad_domains(args.ad_domains), "ad domains")
        if args.ad_domains
        else frozenset()
    )
    config = PipelineConfig(psl_rules=rules, domain_aliases=aliases, ad_domains=ads)

    flows: list[FlowRecord] = []
    decode_errors = 0
    try:
        for _, obj in iter_jsonl(args.flows, strict=False):
            if isinstance(obj, JsonlError):
                decode_errors += 1
                continue
            try:
                flows.append(FlowRecord.from_json(obj))
            except FlowDecodeError:
                decode_errors += 1
    except (OSError, UnicodeDecodeError) as exc:
        raise _InputError(str(exc)) from exc

    try:
        signatures, stats = run_pipeline(flows, config, decode_errors=decode_errors)
    except EmptyInput as exc:
        raise _InputError(str(exc)) from exc

    inputs = {"flows": args.flows, "psl": args.psl}
    if args.domain_aliases:
        inputs["domain_aliases"] = args.domain_aliases
    if args.ad_domains:
        inputs["ad_domains"] = args.ad_domains
    provenance = _provenance("preprocess", inputs)

    records: list[Any] = [provenance]
    records.extend(s.to_json() for s in signatures)
    write_jsonl(args.out, records)

    if args.stats:
        stats_doc = stats.to_json()
        stats_doc["provenance"] = provenance
        Path(args.stats).write_text(
            canonical_dumps(stats_doc) + "\n", encoding="utf-8"
        )
    print(
        f"preprocess: {stats.input_flows} flows -> {stats.unique_devices} signatures "
        f"({stats.decode_errors} decode errors)"
    )
    return EXIT_OK


# --------------------------------------------------------------------- label


def _prompt_config(args: argparse.Namespace) -> PromptConfig:
    return PromptConfig(
        granularity=args.granularity,
        cot=not args.no_cot,
        include_ports=args.ports,
        search_augmented=False,
    )


def _build_backends(args: argparse.Namespace) -> dict[str, Predictor]:
    model_names = [m.strip() for m in args.models.split(",") if m.strip()]
    if not model_names:
        raise _InputError("no model names given")
    backends: dict[str, Predictor] = {}
    if args.stub or args.stub_table:
        for name in model_names:
            if args.stub_table:
                backends[name] = StubPredictor.from_table_file(
                    args.stub_table, default=args.stub_default
                )
            else:
                backends[name] = field_echo_stub(
                    field_label=args.stub_echo_field,
                    vendor_default=args.stub_default_vendor,
                )
        return backends
    endpoint = os.environ.get(ENV_URL, "").strip()
    if not endpoint:
        raise _UsageError(
            f"--stub not given and {ENV_URL} is not set; nothing to query"
        )
    limiter = RateLimiter(args.rate, args.burst) if args.rate else None
    for name in model_names:
        backends[name] = HttpPredictor(
            endpoint,
            os.environ.get(ENV_KEY) or None,
            model=name,
            max_attempts=args.max_attempts,
            rate_limiter=limiter,
        )
    return backends


class _UsageError(Exception):
    """Maps to exit code 2 outside argparse's own validation."""


def _cmd_label(args: argparse.Namespace) -> int:
    signatures = _read_signatures(args.signatures)
    backends = _build_backends(args)
    config = _prompt_config(args)
    labels, errors = label_dataset(
        signatures, backends, config, jobs=args.jobs
    )
    provenance = _provenance(
        "label",
        {"signatures": args.signatures},
        config={
            "models": sorted(backends),
            "granularity": config.granularity,
            "cot": config.cot,
            "include_ports": config.include_ports,
            "stub": bool(args.stub or args.stub_table),
        },
    )
    records: list[Any] = [provenance]
    records.extend(l.to_json() for l in labels)
    write_jsonl(args.out, records)
    if args.errors:
        write_jsonl(args.errors, [e.to_json() for e in errors])
    print(f"label: {len(labels)} labels, {len(errors)} errors")
    return EXIT_OK


# ---------------------------------------------------------------------- vote


def _cmd_vote(args: argparse.Namespace) -> int:
    labels = _read_labels(args.labels)
    store = (
        _load_or_input_error(
            lambda: VendorAliasStore.from_file(args.vendor_aliases), "vendor aliases"
        )
        if args.vendor_aliases
        else None
    )
    weights = None
    if args.weights:
        raw = _load_or_input_error(
            lambda: json.loads(Path(args.weights).read_text(encoding="utf-8")),
            "ensemble weights",
        )
        if not isinstance(raw, dict):
            raise _InputError(f"{args.weights}: weights must be a JSON object")
        weights = EnsembleWeights({str(k): float(v) for k, v in raw.items()})

    voted = vote_dataset(labels, weights, store)
    inputs = {"labels": args.labels}
    if args.vendor_aliases:
        inputs["vendor_aliases"] = args.vendor_aliases
    if args.weights:
        inputs["weights"] = args.weights
    records: list[Any] = [_provenance("vote", inputs)]
    records.extend(l.to_json() for l in voted)
    write_jsonl(args.out, records)
    print(f"vote: {len(voted)} devices")
    return EXIT_OK


# ----------------------------------------------------------------- attribute


def _cmd_attribute(args: argparse.Namespace) -> int:
    signatures = _read_signatures(args.signatures)
    labels = _read_labels(args.labels)
    scores = rank_features(signatures, labels, alpha=args.alpha)

    records: list[Any] = [
        _provenance(
            "attribute",
            {"signatures": args.signatures, "labels": args.labels},
            config={"alpha": args.alpha},
        )
    ]
    records.extend(s.to_json() for s in scores)
    if args.out:
        write_jsonl(args.out, records)

    def fmt(value: float | None) -> str:
        return f"{value:10.4f}" if value is not None else " " * 6 + "null"

    width = max(len(s.feature_name) for s in scores)
    print(f"{'feature':<{width}}  {'proxy_cmi':>10}  {'ami':>10}  {'stability':>10}  n")
    for score in scores:
        print(
            f"{score.feature_name:<{width}}  {fmt(score.proxy_cmi)}  "
            f"{fmt(score.ami)}  {fmt(score.stability)}  {score.n_samples}"
        )
    return EXIT_OK


# ------------------------------------------------------------------ evaluate


def _rubric_from_args(args: argparse.Namespace) -> RubricConfig:
    semantic = _load_or_input_error(
        lambda: load_semantic_map(args.semantic_map), "semantic map"
    )
    store = _load_or_input_error(
        lambda: VendorAliasStore.from_file(args.vendor_aliases), "vendor aliases"
    )
    ambiguous = _load_or_input_error(
        lambda: load_ambiguous_labels(args.ambiguous), "ambiguous labels"
    )
    manual = (
        _load_or_input_error(lambda: load_adjudications(args.manual), "adjudications")
        if args.manual
        else None
    )
    return RubricConfig(semantic, store, ambiguous, manual)


def _print_report(report: EvalReport) -> None:
    print(f"pairs: {report.n_pairs}")
    for tier, accuracy in report.per_tier.items():
        shown = "null" if accuracy is None else f"{accuracy:.4f}"
        print(f"{tier:>20}: {shown}")
    if report.kappa is not None:
        print(f"{'kappa':>20}: {report.kappa:.4f}")
    if report.partition:
        for name, bucket in report.partition.items():
            shown = "null" if bucket.accuracy is None else f"{bucket.accuracy:.4f}"
            print(
                f"{name:>20}: {shown} "
                f"({bucket.class_count} classes, {bucket.sample_count} samples)"
            )


def _cmd_evaluate(args: argparse.Namespace) -> int:
    predictions = _read_labels(args.pred)
    references = _read_references(args.refs)
    rubric = _rubric_from_args(args)
    pairs = [
        LabeledPair(l.device_id, l.vendor, references[l.device_id])
        for l in sorted(predictions, key=lambda l: l.device_id)
        if l.device_id in references
    ]
    if not pairs:
        raise _InputError("no overlap between predictions and references")

    inputs = {
        "pred": args.pred,
        "refs": args.refs,
        "semantic_map": args.semantic_map,
        "vendor_aliases": args.vendor_aliases,
        "ambiguous": args.ambiguous,
    }
    if args.manual:
        inputs["manual"] = args.manual
    report = evaluate(
        pairs,
        rubric,
        partition_tier=args.partition_tier,
        provenance=_provenance("evaluate", inputs),
    )
    if args.out:
        Path(args.out).write_text(
            canonical_dumps(report.to_json()) + "\n", encoding="utf-8"
        )
    _print_report(report)
    return EXIT_OK


# -------------------------------------------------------------------- ablate


def _cmd_ablate(args: argparse.Namespace) -> int:
    signatures = _read_signatures(args.signatures)
    references = _read_references(args.refs)
    backends = _build_backends(args)
    config = _prompt_config(args)
    store = (
        _load_or_input_error(
            lambda: VendorAliasStore.from_file(args.vendor_aliases), "vendor aliases"
        )
        if args.vendor_aliases
        else None
    )

    def labeler(sigs: Sequence[DeviceSignature]) -> Sequence[PseudoLabel]:
        labels, _ = label_dataset(sigs, backends, config, jobs=args.jobs)
        return vote_dataset(labels, None, store)

    report = leave_one_out(signatures, references, labeler)
    doc = report.to_json()
    doc["provenance"] = _provenance(
        "ablate",
        {"signatures": args.signatures, "refs": args.refs},
        config={"models": sorted(backends), "stub": bool(args.stub or args.stub_table)},
    )
    if args.out:
        Path(args.out).write_text(canonical_dumps(doc) + "\n", encoding="utf-8")
    print(f"baseline: {report.baseline_accuracy:.4f} over {report.n_devices} devices")
    for feature, accuracy in sorted(report.per_feature_accuracy.items()):
        delta = report.deltas[feature]
        print(f"  -{feature:<18} {accuracy:.4f} (delta {delta:+.4f})")
    return EXIT_OK


# ------------------------------------------------------------------- perturb


def _cmd_perturb(args: argparse.Namespace) -> int:
    signatures = _read_signatures(args.signatures)
    decoys: tuple[str, ...] = ()
    if args.decoys:
        decoys = _load_or_input_error(
            lambda: load_decoy_hostnames(args.decoys), "decoy hostnames"
        )
    if args.kind == "swap_hostname" and not args.payload and not decoys:
        raise _UsageError("swap_hostname needs --payload or --decoys")
    if args.kind in ("inject_token", "spoof_user_label", "spoof_dhcp_hostname") and (
        not args.payload
    ):
        raise _UsageError(f"{args.kind} needs --payload")

    rng = random.Random(f"{args.seed}:decoy-choice")
    out_records: list[Any] = [
        _provenance(
            "perturb",
            {"signatures": args.signatures},
            config={"kind": args.kind, "payload": args.payload or ""},
            seed=args.seed,
        )
    ]
    applied = 0
    skipped = 0
    for signature in sorted(signatures, key=lambda s: s.device_id):
        payload = args.payload
        if args.kind == "swap_hostname" and not payload:
            payload = decoys[rng.randrange(len(decoys))]
        try:
            perturbed = perturb(signature, Perturbation(args.kind, payload), args.seed)
            applied += 1
        except NotApplicable:
            perturbed = signature
            skipped += 1
        out_records.append(perturbed.to_json())
    write_jsonl(args.out, out_records)
    print(f"perturb: {applied} perturbed, {skipped} passed through")
    return EXIT_OK


# ---------------------------------------------------------------------- emit


def _cmd_emit(args: argparse.Namespace) -> int:
    signatures = _read_signatures(args.signatures)
    labels = _read_labels(args.labels)
    plan = make_splits(signatures, args.holdout_fraction, args.seed)
    config = PromptConfig(granularity="joint", cot=True, include_ports=args.ports)
    pairs = emit_dataset(signatures, labels, plan, config)

    records: list[Any] = [
        _provenance(
            "emit",
            {"signatures": args.signatures, "labels": args.labels},
            config={
                "holdout_fraction": args.holdout_fraction,
                "include_ports": args.ports,
            },
            seed=args.seed,
        )
    ]
    records.extend(p.to_json() for p in pairs)
    write_jsonl(args.out, records)
    if args.plan:
        Path(args.plan).write_text(canonical_dumps(plan.to_json()) + "\n", "utf-8")
    by_quadrant: dict[tuple[str, str], int] = {}
    for pair in pairs:
        by_quadrant[(pair.phase, pair.split)] = (
            by_quadrant.get((pair.phase, pair.split), 0) + 1
        )
    summary = ", ".join(
        f"{phase}/{split}={count}" for (phase, split), count in sorted(by_quadrant.items())
    )
    print(f"emit: {len(pairs)} pairs ({summary})")
    return EXIT_OK


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="signet",
        description="Device signatures from network metadata.",
    )
    parser.add_argument("--version", action="version", version=f"signet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="flows JSONL -> canonical signatures")
    p.add_argument("--flows", type=_existing_file, required=True)
    p.add_argument("--psl", type=_existing_file, required=True,
                   help="public suffix rules file")
    p.add_argument("--domain-aliases", type=_existing_file)
    p.add_argument("--ad-domains", type=_existing_file)
    p.add_argument("--out", required=True)
    p.add_argument("--stats", help="write pipeline stats JSON here")
    p.set_defaults(func=_cmd_preprocess)

    def add_backend_options(p: argparse.ArgumentParser) -> None:
        p.add_argument("--models", default="stub", help="comma-separated model names")
        p.add_argument("--stub", action="store_true", help="use the offline stub")
        p.add_argument("--stub-table", type=_existing_file,
                       help="JSON prompt-hash response table for the stub")
        p.add_argument("--stub-default", help="stub default response text")
        p.add_argument("--stub-echo-field", default="OUI",
                       help="prompt field the rule stub echoes as vendor")
        p.add_argument("--stub-default-vendor", default="Unknown")
        p.add_argument("--granularity", choices=("joint", "separate"), default="joint")
        p.add_argument("--no-cot", action="store_true")
        p.add_argument("--ports", action="store_true")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--rate", type=float, help="requests per second cap")
        p.add_argument("--burst", type=int, default=1)
        p.add_argument("--max-attempts", type=int, default=4)

    p = sub.add_parser("label", help="signatures -> per-model pseudo-labels")
    p.add_argument("--signatures", type=_existing_file, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--errors", help="write labeling errors JSONL here")
    add_backend_options(p)
    p.set_defaults(func=_cmd_label)

    p = sub.add_parser("vote", help="per-model labels -> one label per device")
    p.add_argument("--labels", type=_existing_file, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vendor-aliases", type=_existing_file)
    p.add_argument("--weights", type=_existing_file, help="JSON model->weight map")
    p.set_defaults(func=_cmd_vote)

    p = sub.add_parser("attribute", help="score features against predictions")
    p.add_argument("--signatures", type=_existing_file, required=True)
    p.add_argument("--labels", type=_existing_file, required=True)
    p.add_argument("--alpha", type=_alpha, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_attribute)

    p = sub.add_parser("evaluate", help="grade predictions against references")
    p.add_argument("--pred", type=_existing_file, required=True)
    p.add_argument("--refs", type=_existing_file, required=True)
    p.add_argument("--semantic-map", type=_existing_file, required=True)
    p.add_argument("--vendor-aliases", type=_existing_file, required=True)
    p.add_argument("--ambiguous", type=_existing_file, required=True)
    p.add_argument("--manual", type=_existing_file)
    p.add_argument("--partition-tier", default="manual",
                   choices=("strict", "semantic", "brand", "unified", "manual"))
    p.add_argument("--out")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="leave-one-field-out accuracy deltas")
    p.add_argument("--signatures", type=_existing_file, required=True)
    p.add_argument("--refs", type=_existing_file, required=True)
    p.add_argument("--vendor-aliases", type=_existing_file)
    p.add_argument("--out")
    add_backend_options(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("perturb", help="apply one perturbation kind to a corpus")
    p.add_argument("--signatures", type=_existing_file, required=True)
    p.add_argument("--kind", required=True, choices=(
        "inject_token", "scramble_domain", "swap_hostname",
        "spoof_user_label", "spoof_dhcp_hostname"))
    p.add_argument("--payload", default="")
    p.add_argument("--decoys", type=_existing_file)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_perturb)

    p = sub.add_parser("emit", help="signatures + labels -> instruction pairs")
    p.add_argument("--signatures", type=_existing_file, required=True)
    p.add_argument("--labels", type=_existing_file, required=True)
    p.add_argument("--holdout-fraction", type=_fraction, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ports", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--plan", help="write the split plan JSON here")
    p.set_defaults(func=_cmd_emit)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code is None:
            return EXIT_OK
        if isinstance(exc.code, int):
            return exc.code
        print(exc.code, file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"signet: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _InputError as exc:
        print(f"signet: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PredictorError as exc:
        print(f"signet: prediction backend failed: {exc}", file=sys.stderr)
        return EXIT_NETWORK


if __name__ == "__main__":
    sys.exit(main())
