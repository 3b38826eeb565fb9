"""Toolkit configuration: one JSON file, unit-suffixed keys, strict parsing.

Every key names its unit (``_mm``, ``_hz``, ``_db`` ...). Sections and
keys that are absent fall back to the built-in defaults; keys that are not
recognized are errors, so a misspelled calibration constant cannot be
silently ignored.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import defaults
from .amplifier import CoiledUnit
from .attacks import MicrophoneModel
from .coupling import Arrangement, ArrayConfig, CouplingModel, reference_array
from .device import PRESETS, EnclosureKind, EnclosurePreset
from .errors import ConfigError, MetashieldError
from .metrics import RecognitionPolicy
from .resonator import AirMedium, ResonatorUnit

ENV_VAR = "METASHIELD_CONFIG"
SCHEMA_VERSION = 1

# (config key, attribute, scale from config value to attribute value)
_AIR = (("sound_speed_m_per_s", "sound_speed", 1.0), ("density_kg_per_m3", "density", 1.0))
_COUPLING = (
    ("alpha_m", "alpha", 1.0),
    ("z_ref_pa_s_per_m3", "z_ref", 1.0),
    ("q_broadening_gain", "q_broadening_gain", 1.0),
    ("shift_gain", "shift_gain", 1.0),
)
_UNIT = (
    ("h_mm", "h", 1e-3),
    ("r_mm", "r", 1e-3),
    ("cavity_radius_mm", "cavity_radius", 1e-3),
    ("q", "q_factor", 1.0),
    ("neck_length_mm", "neck_length", 1e-3),
)
_COILED = (
    ("l_mm", "l", 1e-3),
    ("k_mm", "k", 1e-3),
    ("d_mm", "d", 1e-3),
    ("g_mm", "g", 1e-3),
    ("L_coiled_mm", "L_coiled", 1e-3),
    ("L_straight_mm", "L_straight", 1e-3),
    ("q_amp", "q_amp", 1.0),
    ("peak_gain", "peak_gain", 1.0),
)
_PRESET = (
    ("length_mm", "length", 1e-3),
    ("width_mm", "width", 1e-3),
    ("height_mm", "height", 1e-3),
    ("channel_width_mm", "channel_width", 1e-3),
    ("channel_height_mm", "channel_height", 1e-3),
    ("wall_mm", "wall", 1e-3),
    ("amp_center_target_hz", "amp_center_target", 1.0),
    ("amp_gain_target", "amp_gain_target", 1.0),
    ("channel_delta_L_mm", "channel_delta_L", 1e-3),
    ("channel_mix", "channel_mix", 1.0),
    ("gain_adjust", "gain_adjust", 1.0),
)
_POLICY = (
    ("corr_threshold", "corr_threshold", 1.0),
    ("snr_threshold_db", "snr_threshold_db", 1.0),
    ("word_distortion_db", "word_distortion_db", 1.0),
    ("crr_band_hz", "crr_band", 1.0),
    ("crr_tolerance_db", "crr_tolerance_db", 1.0),
    ("command_band_hz", "command_band", 1.0),
    ("noise_band_hz", "noise_band", 1.0),
    ("distortion_band_hz", "distortion_band", 1.0),
    ("subband_hz", "subband_hz", 1.0),
    ("max_lag_s", "max_lag_s", 1.0),
)
_MIC = (
    ("a1", "a1", 1.0),
    ("a2", "a2", 1.0),
    ("lowpass_cutoff_hz", "lowpass_cutoff", 1.0),
    ("noise_floor_db", "noise_floor_db", 1.0),
    ("transition_hz", "transition_hz", 1.0),
    ("stopband_db", "stopband_db", 1.0),
)


@dataclass(frozen=True)
class ToolkitConfig:
    """Everything a command needs besides its flags."""

    air: AirMedium = field(default_factory=AirMedium)
    coupling: CouplingModel = field(default_factory=CouplingModel)
    unit_defaults: ResonatorUnit = field(default_factory=lambda: ResonatorUnit(h=defaults.IADM_HEIGHTS[0]))
    array: ArrayConfig = field(default_factory=reference_array)
    coiled: CoiledUnit = field(default_factory=CoiledUnit)
    presets: dict = field(default_factory=lambda: dict(PRESETS))
    policy: RecognitionPolicy = field(default_factory=RecognitionPolicy)
    microphone: MicrophoneModel = field(default_factory=MicrophoneModel)
    root_seed: int = 0

    def preset(self, kind) -> EnclosurePreset:
        return self.presets[EnclosureKind(kind)]


def _encode(obj, table) -> dict:
    out = {}
    for key, attr, scale in table:
        v = getattr(obj, attr)
        if isinstance(v, tuple):
            out[key] = [float(x) / scale for x in v]
        else:
            out[key] = float(v) / scale
    return out


def _decode(raw, table, base, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object")
    known = {k: (a, s) for k, a, s in table}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    changes = {}
    for key, value in raw.items():
        attr, scale = known[key]
        try:
            if isinstance(getattr(base, attr), tuple):
                changes[attr] = tuple(float(x) * scale for x in value)
            else:
                changes[attr] = float(value) * scale
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.{key}: {exc}") from exc
    try:
        return replace(base, **changes)
    except MetashieldError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def to_dict(cfg: ToolkitConfig) -> dict:
    """Plain JSON-ready representation with unit-suffixed keys."""
    return {
        "schema_version": SCHEMA_VERSION,
        "air": _encode(cfg.air, _AIR),
        "coupling": _encode(cfg.coupling, _COUPLING),
        "resonator": {k: v for k, v in _encode(cfg.unit_defaults, _UNIT).items() if k != "h_mm"},
        "array": {
            "arrangement": cfg.array.arrangement.value,
            "spacing_mm": cfg.array.spacing / 1e-3,
            "units": [_encode(u, _UNIT) for u in cfg.array.units],
        },
        "aadm": _encode(cfg.coiled, _COILED),
        "presets": {k.value: _encode(p, _PRESET) for k, p in sorted(cfg.presets.items(), key=lambda kv: kv[0].value)},
        "policy": _encode(cfg.policy, _POLICY),
        "microphone": _encode(cfg.microphone, _MIC),
        "seeds": {"root": int(cfg.root_seed)},
    }


def dumps(cfg: ToolkitConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2) + "\n"


def from_dict(raw: dict) -> ToolkitConfig:
    """Parse a config mapping, filling absent entries from the defaults.

    Raises
    ------
    ConfigError
        On unknown sections or keys, wrong value types, or values the
        underlying records reject.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    sections = {"schema_version", "air", "coupling", "resonator", "array", "aadm", "presets", "policy", "microphone", "seeds"}
    unknown = sorted(set(raw) - sections)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    if raw.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {raw['schema_version']!r}")
    base = ToolkitConfig()
    air = _decode(raw.get("air", {}), _AIR, base.air, "air")
    coupling = _decode(raw.get("coupling", {}), _COUPLING, base.coupling, "coupling")
    res_table = tuple(t for t in _UNIT if t[0] != "h_mm")
    unit_defaults = _decode(raw.get("resonator", {}), res_table, base.unit_defaults, "resonator")

    arr_raw = raw.get("array", {})
    if not isinstance(arr_raw, dict):
        raise ConfigError("array must be an object")
    unknown = sorted(set(arr_raw) - {"arrangement", "spacing_mm", "units"})
    if unknown:
        raise ConfigError(f"unknown key(s) in array: {', '.join(unknown)}")
    if "units" in arr_raw:
        if not isinstance(arr_raw["units"], list) or not arr_raw["units"]:
            raise ConfigError("array.units must be a non-empty list")
        for i, u in enumerate(arr_raw["units"]):
            if not isinstance(u, dict) or "h_mm" not in u:
                raise ConfigError(f"array.units[{i}] needs h_mm")
        units = tuple(_decode(u, _UNIT, unit_defaults, f"array.units[{i}]") for i, u in enumerate(arr_raw["units"]))
    else:
        units = tuple(replace(unit_defaults, h=h) for h in defaults.IADM_HEIGHTS)
    try:
        array = ArrayConfig(
            units,
            Arrangement(arr_raw.get("arrangement", base.array.arrangement.value)),
            float(arr_raw.get("spacing_mm", base.array.spacing / 1e-3)) * 1e-3,
        )
    except (MetashieldError, ValueError, TypeError) as exc:
        raise ConfigError(f"array: {exc}") from exc

    coiled = _decode(raw.get("aadm", {}), _COILED, base.coiled, "aadm")
    presets_raw = raw.get("presets", {})
    if not isinstance(presets_raw, dict):
        raise ConfigError("presets must be an object")
    presets = dict(base.presets)
    for name, body in presets_raw.items():
        try:
            kind = EnclosureKind(name)
        except ValueError:
            raise ConfigError(f"unknown preset {name!r}") from None
        presets[kind] = _decode(body, _PRESET, presets[kind], f"presets.{name}")
    policy = _decode(raw.get("policy", {}), _POLICY, base.policy, "policy")
    mic = _decode(raw.get("microphone", {}), _MIC, base.microphone, "microphone")

    seeds = raw.get("seeds", {})
    if not isinstance(seeds, dict) or set(seeds) - {"root"}:
        raise ConfigError("seeds accepts only the key 'root'")
    root = seeds.get("root", 0)
    if isinstance(root, bool) or not isinstance(root, int) or root < 0:
        raise ConfigError("seeds.root must be a non-negative integer")
    return ToolkitConfig(air, coupling, unit_defaults, array, coiled, presets, policy, mic, root)


def load(path) -> ToolkitConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return from_dict(raw)


def save(cfg: ToolkitConfig, path) -> None:
    Path(path).write_text(dumps(cfg))


def resolve(path=None) -> ToolkitConfig:
    """Explicit path, else the path in ``METASHIELD_CONFIG``, else defaults."""
    chosen = path if path is not None else os.environ.get(ENV_VAR) or None
    return ToolkitConfig() if chosen is None else load(chosen)


__all__ = ["ToolkitConfig", "ENV_VAR", "load", "save", "resolve", "dumps", "from_dict", "to_dict"]
