"""Scenario configuration: schema, defaults and loading.

One scenario describes a full deployment: measuring spots with redundant
sensors behind shared LoRa clusters, an intermittent backbone per
concentrator with store-and-forward buffering, the fault and trust
parameters, the consensus protocol costs, and the quantum-plane knobs.
Configs are JSON documents validated against a strict schema (unknown
keys rejected); every field has a documented default, so `{}` is a valid
config.  CLI flags override file values via dotted paths.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .trustnet import FaultKind, OperationMode

DAY_S = 86400.0


class ConfigError(ValueError):
    """Invalid or malformed scenario configuration."""


@dataclass(frozen=True)
class LoraConfig:
    bitrate_bps: float = 5470.0
    duty_cycle: float = 0.01
    error_p: float = 0.10
    queue_bytes: int = 16384


@dataclass(frozen=True)
class NvisConfig:
    bitrate_bps: float = 3000.0
    p_up: float = 0.70
    mean_up_s: float = 100800.0  # 28 h; the scaled DOWN mean is then 12 h
    error_p: float = 0.16


@dataclass(frozen=True)
class DtnConfig:
    capacity_bytes: int = 524288
    bundle_bytes: int = 40


@dataclass(frozen=True)
class ConsensusConfig:
    vote_bytes: int = 340
    round_timeout_s: float = 1800.0
    collect_timeout_s: float = 900.0
    quantum_frame_bytes: int = 24
    quantum_round_success_p: float = 0.75
    pairs_per_round: int = 1


@dataclass(frozen=True)
class QuantumConfig:
    p_ent: float = 0.8
    attempt_period_s: float = 0.1
    f0: float = 0.97
    f_target: float = 0.9
    gamma_x: float = 1e-6
    gamma_y: float = 1e-6
    gamma_z: float = 1e-6
    max_purify_rounds: int = 8
    control_frame_bytes: int = 8
    reserved_fraction: float = 0.3


@dataclass(frozen=True)
class TrustConfig:
    weight: float = 0.1
    theta_ost: float = 0.5
    hysteresis: float = 0.1
    probe_period_s: float = 86400.0
    series: bool = False
    exclude_observer: int | None = None  # isolated from the overridden faulty sensor


@dataclass(frozen=True)
class FaultOverride:
    spot: int
    sensor: int
    p_b0: float
    fault_kind: str = "soft"


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    duration_days: float = 400.0
    warmup_days: float = 7.0
    spots: int = 32
    redundancy: int = 3
    concentrators: int = 5
    mode: str = "standard"
    p_b0: float = 0.01
    fault_kind: str = "soft"
    reading_period_s: float = 21600.0
    reading_bytes: int = 40
    deadline_s: float = 21600.0
    lora: LoraConfig = field(default_factory=LoraConfig)
    nvis: NvisConfig = field(default_factory=NvisConfig)
    dtn: DtnConfig = field(default_factory=DtnConfig)
    consensus: ConsensusConfig = field(default_factory=ConsensusConfig)
    quantum: QuantumConfig = field(default_factory=QuantumConfig)
    trust: TrustConfig = field(default_factory=TrustConfig)
    fault_override: FaultOverride | None = None

    @property
    def operation_mode(self) -> OperationMode:
        return OperationMode(self.mode)

    @property
    def fault(self) -> FaultKind:
        return FaultKind(self.fault_kind)

    @property
    def duration_s(self) -> float:
        return self.duration_days * DAY_S

    @property
    def warmup_s(self) -> float:
        return self.warmup_days * DAY_S


def _number(minimum=None, maximum=None, exclusive_min=None):
    spec: dict = {"type": "number"}
    if minimum is not None:
        spec["minimum"] = minimum
    if exclusive_min is not None:
        spec["exclusiveMinimum"] = exclusive_min
    if maximum is not None:
        spec["maximum"] = maximum
    return spec


def _integer(minimum=None, maximum=None):
    spec: dict = {"type": "integer"}
    if minimum is not None:
        spec["minimum"] = minimum
    if maximum is not None:
        spec["maximum"] = maximum
    return spec


def _object(properties: dict) -> dict:
    return {"type": "object", "properties": properties, "additionalProperties": False}


SCENARIO_SCHEMA = _object({
    "seed": _integer(minimum=0),
    "duration_days": _number(exclusive_min=0),
    "warmup_days": _number(minimum=0),
    "spots": _integer(minimum=1, maximum=1024),
    "redundancy": _integer(minimum=1, maximum=10),
    "concentrators": _integer(minimum=1, maximum=64),
    "mode": {"enum": [m.value for m in OperationMode]},
    "p_b0": _number(minimum=0, maximum=1),
    "fault_kind": {"enum": [k.value for k in FaultKind]},
    "reading_period_s": _number(exclusive_min=0),
    "reading_bytes": _integer(minimum=1),
    "deadline_s": _number(exclusive_min=0),
    "lora": _object({
        "bitrate_bps": _number(exclusive_min=0),
        "duty_cycle": _number(exclusive_min=0, maximum=1),
        "error_p": _number(minimum=0, maximum=1),
        "queue_bytes": _integer(minimum=1),
    }),
    "nvis": _object({
        "bitrate_bps": _number(exclusive_min=0),
        "p_up": _number(exclusive_min=0, maximum=1),
        "mean_up_s": _number(exclusive_min=0),
        "error_p": _number(minimum=0, maximum=1),
    }),
    "dtn": _object({
        "capacity_bytes": _integer(minimum=1),
        "bundle_bytes": _integer(minimum=1),
    }),
    "consensus": _object({
        "vote_bytes": _integer(minimum=1),
        "round_timeout_s": _number(exclusive_min=0),
        "collect_timeout_s": _number(exclusive_min=0),
        "quantum_frame_bytes": _integer(minimum=1),
        "quantum_round_success_p": _number(exclusive_min=0, maximum=1),
        "pairs_per_round": _integer(minimum=1, maximum=16),
    }),
    "quantum": _object({
        "p_ent": _number(exclusive_min=0, maximum=1),
        "attempt_period_s": _number(exclusive_min=0),
        "f0": _number(exclusive_min=0.5, maximum=1),
        "f_target": _number(exclusive_min=0.5, maximum=1),
        "gamma_x": _number(minimum=0),
        "gamma_y": _number(minimum=0),
        "gamma_z": _number(minimum=0),
        "max_purify_rounds": _integer(minimum=0, maximum=64),
        "control_frame_bytes": _integer(minimum=1),
        "reserved_fraction": _number(minimum=0, maximum=1),
    }),
    "trust": _object({
        "weight": _number(exclusive_min=0, maximum=0.999),
        "theta_ost": _number(minimum=0, maximum=1),
        "hysteresis": _number(minimum=0, maximum=1),
        "probe_period_s": _number(exclusive_min=0),
        "series": {"type": "boolean"},
        "exclude_observer": {"type": ["integer", "null"], "minimum": 0},
    }),
    "fault_override": {
        "type": ["object", "null"],
        "properties": {
            "spot": _integer(minimum=0),
            "sensor": _integer(minimum=0),
            "p_b0": _number(minimum=0, maximum=1),
            "fault_kind": {"enum": [k.value for k in FaultKind]},
        },
        "required": ["spot", "sensor", "p_b0"],
        "additionalProperties": False,
    },
})

_SECTION_TYPES = {
    "lora": LoraConfig,
    "nvis": NvisConfig,
    "dtn": DtnConfig,
    "consensus": ConsensusConfig,
    "quantum": QuantumConfig,
    "trust": TrustConfig,
}


def validate_document(doc: dict) -> None:
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field {path}: {exc.message}") from exc


def config_from_dict(doc: dict) -> ScenarioConfig:
    """Build a validated config; cross-field constraints checked here."""
    validate_document(doc)
    kwargs: dict = {}
    for key, value in doc.items():
        if key in _SECTION_TYPES:
            kwargs[key] = _SECTION_TYPES[key](**value)
        elif key == "fault_override":
            kwargs[key] = FaultOverride(**value) if value is not None else None
        else:
            kwargs[key] = value
    cfg = ScenarioConfig(**kwargs)
    if cfg.operation_mode.uses_consensus and cfg.redundancy < 4:
        raise ConfigError(
            f"mode {cfg.mode!r} needs at least 4 redundant sensors per spot "
            f"to tolerate a byzantine member, got {cfg.redundancy}")
    if cfg.warmup_days >= cfg.duration_days:
        raise ConfigError("warm-up must be shorter than the run")
    if cfg.fault_override is not None:
        if cfg.fault_override.spot >= cfg.spots:
            raise ConfigError("fault_override.spot outside the deployment")
        if cfg.fault_override.sensor >= cfg.redundancy:
            raise ConfigError("fault_override.sensor outside the spot group")
    if cfg.trust.exclude_observer is not None \
            and cfg.trust.exclude_observer >= cfg.redundancy:
        raise ConfigError("trust.exclude_observer outside the spot group")
    return cfg


def load_config(path) -> ScenarioConfig:
    try:
        with open(Path(path)) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON (line {exc.lineno}): {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return config_from_dict(doc)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    doc = dataclasses.asdict(cfg)
    return doc


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.path=value`` overrides onto a config document."""
    out = json.loads(json.dumps(doc))  # deep copy
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw  # bare strings allowed
        node = out
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {dotted!r} descends into a non-object")
        node[parts[-1]] = value
    return out
