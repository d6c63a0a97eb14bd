"""
Run configuration: JSON in, validated parameter objects out.

Numbers in a config file are SI (with the absorber-volume fields in um^3 as
the device model uses). Strings with a unit suffix such as ``"24 nH"`` or
``"0.8 eV"`` are converted on the way in. Values are resolved with the
precedence built-in defaults < config file < command-line overrides.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Any, Optional

from .device_model import EV, DeviceParams, ParamRange
from .pulse_sim import DigitizerParams, PulseShapeParams, Ringing, SourceParams


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the dotted field path."""


# unit -> (dimension, decimal exponent, extra factor); decimal scaling is done on
# the string so "24 nH" becomes exactly the double nearest 24e-9
_PREFIX = {"": 0, "k": 3, "M": 6, "G": 9, "m": -3, "u": -6, "µ": -6,
           "n": -9, "p": -12, "f": -15, "a": -18}
_BASE = {"s": "time", "H": "inductance", "K": "temperature", "J": "energy", "Hz": "frequency",
         "ohm": "resistance", "Ohm": "resistance", "Ω": "resistance", "W": "power",
         "A": "current", "S/s": "frequency"}
UNITS = {}
for _b, _dim in _BASE.items():
    for _p, _f in _PREFIX.items():
        UNITS[_p + _b] = (_dim, _f, 1.0)
for _p, _f in _PREFIX.items():
    UNITS[_p + "eV"] = ("energy", _f, EV)

FIELD_DIMENSIONS = {
    "t0": "temperature", "r0": "resistance", "inductance": "inductance",
    "photon_energy": "energy", "amp_bandwidth": "frequency", "i0": "current",
    "p0_override": "power", "lowpass_tau": "time", "energy_fwhm": "energy",
    "rise_times": "time", "decay_times": "time", "sample_rate": "frequency",
    "repetition_rate": "frequency", "optical_pulse_duration": "time",
    "arrival_time_offset": "time", "timing_spread": "time", "frequency": "frequency",
    "damping_time": "time",
}

_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([^\d\s].*?)?\s*$")


def parse_quantity(value: Any, dimension: Optional[str] = None, path: str = "value") -> float:
    """
    Convert a number or a unit-suffixed string to SI.

    Examples
    --------
    >>> parse_quantity("24 nH", "inductance")
    2.4e-08
    >>> parse_quantity(17.5e-9, "time")
    1.75e-08
    """
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{path}: expected a number or quantity string, got {value!r}")
    m = _QTY.match(value)
    if not m:
        raise ConfigError(f"{path}: cannot parse quantity {value!r}")
    number, unit = m.group(1), m.group(2)
    if not unit:
        return float(number)
    unit = unit.strip()
    if unit not in UNITS:
        raise ConfigError(f"{path}: unknown unit {unit!r}")
    dim, exp, factor = UNITS[unit]
    if dimension is not None and dim != dimension:
        raise ConfigError(f"{path}: unit {unit!r} is a {dim}, expected a {dimension}")
    mant, _, e = number.lower().partition("e")
    scaled = float(f"{mant}e{int(e or 0) + exp}")
    return scaled if factor == 1.0 else scaled * factor


def _q(section: str, name: str, value):
    dim = FIELD_DIMENSIONS.get(name)
    path = f"{section}.{name}"
    if isinstance(value, (list, tuple)):
        return tuple(parse_quantity(v, dim, f"{path}[{i}]") for i, v in enumerate(value))
    if value is None:
        return None
    if name in ("bits", "trace_length", "pre_trigger", "rng_seed"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if name in ("noise_filtered",):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    return parse_quantity(value, dim, path)


def _build(cls, section: str, base, overrides: dict):
    if not isinstance(overrides, dict):
        raise ConfigError(f"{section}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    values = {}
    for k, v in overrides.items():
        if k not in names or k == "tag":
            raise ConfigError(f"{section}.{k}: unknown field")
        if k == "ringing":
            values[k] = None if v is None else _build(Ringing, f"{section}.ringing", None, v)
        else:
            values[k] = _q(section, k, v)
    try:
        return dataclasses.replace(base, **values) if base is not None else cls(**values)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{section}: {exc}") from None


@dataclass(frozen=True)
class AnalysisSettings:
    """Knobs of the measurement pipeline."""

    thresholds: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    classes: tuple = (1, 2, 3)
    hist_bins: int = 1000
    smooth_fraction: float = 0.01
    peak_significance: float = 5.0
    max_valley_ratio: float = 0.2
    template_nsigma: float = 5.0
    gate_width: float = 6.0

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(f) for f in self.thresholds))
        object.__setattr__(self, "classes", tuple(int(n) for n in self.classes))
        for f in self.thresholds:
            if not 0 < f < 1:
                raise ValueError(f"AnalysisSettings.thresholds: {f} not in (0, 1)")
        if not self.thresholds:
            raise ValueError("AnalysisSettings.thresholds must not be empty")
        if any(n < 1 for n in self.classes):
            raise ValueError("AnalysisSettings.classes: photon classes start at 1")
        if self.hist_bins < 10:
            raise ValueError("AnalysisSettings.hist_bins must be >= 10")
        for name in ("smooth_fraction", "peak_significance", "max_valley_ratio",
                     "template_nsigma", "gate_width"):
            if not getattr(self, name) > 0:
                raise ValueError(f"AnalysisSettings.{name} must be > 0")


@dataclass(frozen=True)
class RunConfig:
    device: DeviceParams = field(default_factory=DeviceParams.nominal)
    ranges: ParamRange = field(default_factory=ParamRange.nominal)
    shape: PulseShapeParams = field(default_factory=PulseShapeParams.nominal)
    digitizer: DigitizerParams = field(default_factory=DigitizerParams.nominal)
    source: SourceParams = field(default_factory=SourceParams.nominal)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)

    @property
    def seed(self) -> int:
        return int(self.source.rng_seed)

    @classmethod
    def nominal(cls) -> "RunConfig":
        return cls()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        """Overlay `d` on the built-in defaults; unknown keys are errors."""
        if not isinstance(d, dict):
            raise ConfigError("config: top level must be an object")
        known = {"device", "ranges", "shape", "digitizer", "source", "analysis", "seed"}
        for k in d:
            if k not in known:
                raise ConfigError(f"{k}: unknown section")
        base = cls()
        device = _build(DeviceParams, "device", base.device, d.get("device", {}))
        intervals = dict(ParamRange.nominal(device).intervals)
        if "ranges" in d:
            if not isinstance(d["ranges"], dict):
                raise ConfigError("ranges: expected an object")
            intervals = {}
            for k, v in d["ranges"].items():
                if not (isinstance(v, (list, tuple)) and len(v) == 2):
                    raise ConfigError(f"ranges.{k}: expected [lower, upper]")
                intervals[k] = _q("ranges", k, v)
        try:
            ranges = ParamRange(device, intervals)
        except ValueError as exc:
            raise ConfigError(f"ranges: {exc}") from None
        shape = _build(PulseShapeParams, "shape", base.shape, d.get("shape", {}))
        digi = _build(DigitizerParams, "digitizer", base.digitizer, d.get("digitizer", {}))
        src = _build(SourceParams, "source", base.source, d.get("source", {}))
        if "seed" in d:
            src = _build(SourceParams, "source", src, {"rng_seed": d["seed"]})
        an = d.get("analysis", {})
        if not isinstance(an, dict):
            raise ConfigError("analysis: expected an object")
        try:
            analysis = dataclasses.replace(AnalysisSettings(), **an)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"analysis: {exc}") from None
        return cls(device, ranges, shape, digi, src, analysis)

    def to_dict(self) -> dict:
        """Plain SI tree; ``from_dict(to_dict())`` reproduces the config."""
        def plain(obj):
            d = dataclasses.asdict(obj)
            d.pop("tag", None)
            return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
        src = plain(self.source)
        seed = src.pop("rng_seed")
        return {
            "device": plain(self.device),
            "ranges": {k: list(v) for k, v in self.ranges.intervals.items()},
            "shape": plain(self.shape),
            "digitizer": plain(self.digitizer),
            "source": src,
            "analysis": plain(self.analysis),
            "seed": seed,
        }

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: not valid JSON ({exc})") from None
    return RunConfig.from_dict(d)


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def apply_overrides(cfg: RunConfig, section: str, values: dict) -> RunConfig:
    """Apply command-line style overrides to one section, skipping ``None`` values."""
    values = {k: v for k, v in values.items() if v is not None}
    if not values:
        return cfg
    d = cfg.to_dict()
    if section == "seed":
        d["seed"] = values["seed"]
    else:
        d[section].update(values)
    return RunConfig.from_dict(d)
