"""Configuration management for uavchain.

A scenario is a YAML document merged over the shipped ``defaults.yaml``. Every key maps
onto a :class:`SimConfig` field; unknown keys are rejected rather than ignored.
"""

import dataclasses
import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import yaml

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CONFIG_ENV_VAR = "UAVCHAIN_CONFIG"
LINK_KINDS = ("n2d", "d2d", "n2b", "d2b")


class ConfigError(Exception):
    """Base class for configuration problems."""


class ConfigParseError(ConfigError):
    """The document is not valid YAML or not a mapping."""


class ConfigValidationError(ConfigError):
    """A key is unknown or a value breaks an invariant."""

    def __init__(self, key: str, value: Any, reason: str) -> None:
        super().__init__(f"{key}={value!r}: {reason}")
        self.key = key
        self.value = value
        self.reason = reason


class Scheme(str, Enum):
    """Delivery scheme under test."""

    N2N_BS = "n2n-bs"
    N2N_UAV_NO_BC = "n2n-uav"
    N2N_UAV_BC = "n2n-uav-bc"

    @classmethod
    def parse(cls, text: str) -> "Scheme":
        """Accept either the value (``n2n-bs``) or the member name (``N2N_BS``)."""
        needle = text.strip()
        for scheme in cls:
            if needle.lower() == scheme.value or needle.upper() == scheme.name:
                return scheme
        raise ValueError(f"unknown scheme {text!r}")

    @property
    def uses_uavs(self) -> bool:
        return self is not Scheme.N2N_BS


@dataclass(frozen=True)
class LinkSettings:
    """Per link-class radio budget as written in the config."""

    max_range_m: float
    base_success: Optional[float]
    path_loss_exponent: float


@dataclass(frozen=True)
class SimConfig:
    """Full scenario parameterization. Build it with :func:`load_config`."""

    schema_version: int
    scheme: Scheme
    seed: int
    area_width_m: float
    area_height_m: float
    n_nodes: int
    n_uavs: int
    n_bs: int
    n_providers: int
    uav_altitude_m: float
    bs_height_m: float
    duration_s: float
    cbr_packet_bytes: int
    cbr_interval_s: float
    tx_power_uav_w: float
    tx_power_node_w: float
    node_speed_min_mps: float
    node_speed_max_mps: float
    mobility_tick_s: float
    reposition_interval_s: float
    density_cell_m: float
    reposition_jitter_m: float
    uav_speed_mps: float
    rogue_follow_density: bool
    rogue_speed_mps: float
    rogue_uav_fraction: float
    rogue_replay_fraction: float
    rogue_replay_reference_nodes: int
    validators: int
    faulty_validators: int
    consensus_interval_s: float
    contract_duration_s: float
    uav_beacon_messages: int
    accounting_base_flows: int
    accounting_flows_per_node: float
    accounting_flows_per_pair: float
    metrics_snapshot_interval_s: float
    cbr_start_spread_s: float
    bs_capacity_pps: float
    bs_contention_per_node: float
    uav_capacity_pps: float
    min_link_quality: float
    bs_fallback: bool
    fanet_forwarding: str
    reference_tx_power_w: float
    outage_at_reference_power: float
    links: dict[str, LinkSettings] = field(default_factory=dict)

    @property
    def cbr_rate_pps(self) -> float:
        return 1.0 / self.cbr_interval_s

    def to_dict(self) -> dict[str, Any]:
        """Canonical plain-data mapping (the inverse of :func:`load_config`)."""
        data = dataclasses.asdict(self)
        data["scheme"] = self.scheme.value
        return data

    def with_overrides(self, **overrides: Any) -> "SimConfig":
        """Return a validated copy with top-level fields replaced."""
        data = self.to_dict()
        for key, value in overrides.items():
            if key not in data:
                raise ConfigValidationError(key, value, "unknown key")
            data[key] = value
        return _build(data)


def _default_document() -> dict[str, Any]:
    text = resources.files("uavchain.core").joinpath("defaults.yaml").read_text(encoding="utf-8")
    loaded = yaml.safe_load(text)
    assert isinstance(loaded, dict)
    return loaded


def default_config() -> SimConfig:
    """The shipped default scenario."""
    return _build(_default_document())


def load_config(text: str) -> SimConfig:
    """Parse a YAML document and return a validated :class:`SimConfig`.

    Args:
        text: YAML document; missing keys take the shipped defaults

    Returns:
        Validated configuration

    Raises:
        ConfigParseError: document is not YAML or not a mapping
        ConfigValidationError: unknown key or invariant violation
    """
    try:
        loaded = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigParseError(f"invalid YAML: {e}") from e

    if loaded is None:
        loaded = {}
    if not isinstance(loaded, dict):
        raise ConfigParseError(f"config must be a mapping, got {type(loaded).__name__}")

    merged = _default_document()
    for key, value in loaded.items():
        if key == "links" and isinstance(value, dict):
            links = dict(merged["links"])
            for kind, settings in value.items():
                if kind not in LINK_KINDS:
                    raise ConfigValidationError(f"links.{kind}", settings, "unknown link kind")
                if not isinstance(settings, dict):
                    raise ConfigValidationError(f"links.{kind}", settings, "must be a mapping")
                links[kind] = {**links[kind], **settings}
            merged["links"] = links
        else:
            merged[key] = value
    return _build(merged)


def load_config_file(path: Optional[Path] = None) -> SimConfig:
    """Load a config file, falling back to ``$UAVCHAIN_CONFIG`` and then the defaults."""
    if path is None:
        env_path = os.environ.get(CONFIG_ENV_VAR)
        if not env_path:
            return default_config()
        path = Path(env_path)

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigParseError(f"cannot read {path}: {e}") from e
    logger.info("loading config from %s", path)
    return load_config(text)


_FIELD_NAMES = {f.name for f in dataclasses.fields(SimConfig)}
_INT_FIELDS = {f.name for f in dataclasses.fields(SimConfig) if f.type in (int, "int")}
_BOOL_FIELDS = {f.name for f in dataclasses.fields(SimConfig) if f.type in (bool, "bool")}
_FLOAT_FIELDS = {f.name for f in dataclasses.fields(SimConfig) if f.type in (float, "float")}


def _build(data: dict[str, Any]) -> SimConfig:
    unknown = sorted(set(data) - _FIELD_NAMES)
    if unknown:
        raise ConfigValidationError(unknown[0], data[unknown[0]], "unknown key")
    missing = sorted(_FIELD_NAMES - set(data))
    if missing:
        raise ConfigValidationError(missing[0], None, "required key missing")

    values = dict(data)
    try:
        values["scheme"] = (
            values["scheme"]
            if isinstance(values["scheme"], Scheme)
            else Scheme.parse(str(values["scheme"]))
        )
    except ValueError as e:
        raise ConfigValidationError("scheme", data["scheme"], str(e)) from e

    for name in _INT_FIELDS:
        values[name] = _as_int(name, values[name])
    for name in _BOOL_FIELDS:
        if not isinstance(values[name], bool):
            raise ConfigValidationError(name, values[name], "must be true or false")
    for name in _FLOAT_FIELDS:
        values[name] = _as_float(name, values[name])

    values["links"] = _build_links(values["links"])
    config = SimConfig(**values)
    _validate(config)
    return config


def _build_links(raw: Any) -> dict[str, LinkSettings]:
    if not isinstance(raw, dict):
        raise ConfigValidationError("links", raw, "must be a mapping")
    links: dict[str, LinkSettings] = {}
    for kind in LINK_KINDS:
        settings = raw.get(kind)
        if isinstance(settings, LinkSettings):
            links[kind] = settings
            continue
        if not isinstance(settings, dict):
            raise ConfigValidationError(f"links.{kind}", settings, "missing link budget")
        extra = sorted(set(settings) - {"max_range_m", "base_success", "path_loss_exponent"})
        if extra:
            key = f"links.{kind}.{extra[0]}"
            raise ConfigValidationError(key, settings[extra[0]], "unknown key")
        base = settings.get("base_success")
        links[kind] = LinkSettings(
            max_range_m=_as_float(f"links.{kind}.max_range_m", settings.get("max_range_m")),
            base_success=None if base is None else _as_float(f"links.{kind}.base_success", base),
            path_loss_exponent=_as_float(
                f"links.{kind}.path_loss_exponent", settings.get("path_loss_exponent")
            ),
        )
    return links


def _as_int(key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigValidationError(key, value, "must be an integer")
    if isinstance(value, float) and not (math.isfinite(value) and value.is_integer()):
        raise ConfigValidationError(key, value, "must be an integer")
    return int(value)


def _as_float(key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigValidationError(key, value, "must be a number")
    return float(value)


def _validate(c: SimConfig) -> None:
    """Check every invariant, reporting the first offending key."""
    checks: list[tuple[str, bool, str]] = [
        ("schema_version", c.schema_version == SCHEMA_VERSION, f"must be {SCHEMA_VERSION}"),
        ("seed", 0 <= c.seed < 2**64, "must be a 64-bit unsigned integer"),
        ("area_width_m", c.area_width_m > 0, "must be > 0"),
        ("area_height_m", c.area_height_m > 0, "must be > 0"),
        ("n_nodes", 0 <= c.n_nodes <= 9999, "must be in [0, 9999]"),
        ("n_uavs", 0 <= c.n_uavs <= 999, "must be in [0, 999]"),
        ("n_bs", 1 <= c.n_bs <= 9, "must be in [1, 9]"),
        ("n_providers", c.n_providers >= 1, "must be >= 1"),
        ("uav_altitude_m", c.uav_altitude_m >= 0, "must be >= 0"),
        ("bs_height_m", c.bs_height_m >= 0, "must be >= 0"),
        ("duration_s", c.duration_s > 0, "must be > 0"),
        ("cbr_packet_bytes", c.cbr_packet_bytes > 0, "must be > 0"),
        ("cbr_interval_s", c.cbr_interval_s > 0, "must be > 0"),
        ("tx_power_uav_w", c.tx_power_uav_w > 0, "must be > 0"),
        ("tx_power_node_w", c.tx_power_node_w > 0, "must be > 0"),
        ("node_speed_min_mps", c.node_speed_min_mps > 0, "must be > 0"),
        (
            "node_speed_max_mps",
            c.node_speed_max_mps >= c.node_speed_min_mps,
            "must be >= node_speed_min_mps",
        ),
        ("mobility_tick_s", c.mobility_tick_s > 0, "must be > 0"),
        ("reposition_interval_s", c.reposition_interval_s > 0, "must be > 0"),
        ("density_cell_m", c.density_cell_m > 0, "must be > 0"),
        ("reposition_jitter_m", c.reposition_jitter_m >= 0, "must be >= 0"),
        ("uav_speed_mps", c.uav_speed_mps >= 0, "must be >= 0"),
        ("rogue_speed_mps", c.rogue_speed_mps >= 0, "must be >= 0"),
        ("rogue_uav_fraction", 0.0 <= c.rogue_uav_fraction <= 1.0, "must be in [0, 1]"),
        ("rogue_replay_fraction", c.rogue_replay_fraction >= 0, "must be >= 0"),
        ("rogue_replay_reference_nodes", c.rogue_replay_reference_nodes >= 1, "must be >= 1"),
        ("validators", c.validators >= 1, "must be >= 1"),
        (
            "faulty_validators",
            0 <= c.faulty_validators < c.validators,
            "must be >= 0 and < validators",
        ),
        ("consensus_interval_s", c.consensus_interval_s > 0, "must be > 0"),
        ("contract_duration_s", c.contract_duration_s > 0, "must be > 0"),
        ("uav_beacon_messages", c.uav_beacon_messages >= 0, "must be >= 0"),
        ("accounting_base_flows", c.accounting_base_flows >= 0, "must be >= 0"),
        ("accounting_flows_per_node", c.accounting_flows_per_node >= 0, "must be >= 0"),
        ("accounting_flows_per_pair", c.accounting_flows_per_pair >= 0, "must be >= 0"),
        ("metrics_snapshot_interval_s", c.metrics_snapshot_interval_s > 0, "must be > 0"),
        (
            "cbr_start_spread_s",
            0 <= c.cbr_start_spread_s <= c.duration_s,
            "must be in [0, duration_s]",
        ),
        ("bs_capacity_pps", c.bs_capacity_pps > 0, "must be > 0"),
        (
            "bs_contention_per_node",
            0.0 <= c.bs_contention_per_node <= 1.0,
            "must be in [0, 1]",
        ),
        ("uav_capacity_pps", c.uav_capacity_pps > 0, "must be > 0"),
        ("min_link_quality", 0.0 <= c.min_link_quality < 1.0, "must be in [0, 1)"),
        ("fanet_forwarding", c.fanet_forwarding in ("greedy", "none"), "must be greedy or none"),
        ("reference_tx_power_w", c.reference_tx_power_w > 0, "must be > 0"),
        (
            "outage_at_reference_power",
            0.0 <= c.outage_at_reference_power < 1.0,
            "must be in [0, 1)",
        ),
    ]
    for key, ok, reason in checks:
        if not ok:
            raise ConfigValidationError(key, getattr(c, key), reason)

    for kind, link in c.links.items():
        if link.max_range_m <= 0:
            raise ConfigValidationError(
                f"links.{kind}.max_range_m", link.max_range_m, "must be > 0"
            )
        if link.base_success is not None and not 0.0 <= link.base_success <= 1.0:
            raise ConfigValidationError(
                f"links.{kind}.base_success", link.base_success, "must be in [0, 1]"
            )
        if link.path_loss_exponent <= 0:
            raise ConfigValidationError(
                f"links.{kind}.path_loss_exponent", link.path_loss_exponent, "must be > 0"
            )


def dump_config(config: SimConfig) -> str:
    """Serialize a config back to YAML."""
    return yaml.safe_dump(config.to_dict(), default_flow_style=False, sort_keys=True)
