"""System configuration for the movable-antenna covert DFRC design pipeline.

All quantities are stored internally in linear units (watts, meters, radians).
The config-file boundary speaks dB/dBW and degrees; ``load_config`` and
``emit_config`` convert on the way in and out.  ``emit_config`` searches for a
file value whose conversion reproduces the in-memory float bitwise, so
``load -> emit -> load`` is an exact identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

SCHEMES = ("ma", "fpa", "gas", "upper")


class ConfigError(ValueError):
    """Raised for invalid, missing, or inconsistent configuration data."""


def _db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def _deg_to_rad(deg: float) -> float:
    return deg * math.pi / 180.0


# default Willie link gain: reference path loss at 1 m applied over 60 m
_WILLIE_GAIN_DB_DEFAULT = 10.0 * math.log10(1e-3 * 60.0 ** -3.2)


@dataclass(frozen=True)
class SystemConfig:
    """Scenario, hardware, and solver parameters in internal (linear) units."""

    num_antennas: int = 4            # N, transmit and receive array size
    num_users: int = 3               # K
    num_paths: int = 6               # L receive paths per user
    wavelength: float = 0.1          # meters
    min_spacing: float = 0.05        # minimum antenna separation, meters
    region_length: float = 1.0       # length D of the placement segment, meters
    total_power: float = _db_to_linear(15.0)        # watts
    radar_snr_threshold: float = _db_to_linear(15.0)  # linear SNR floor
    covertness_level: float = 0.1    # epsilon
    detection_samples: int = 100     # M samples seen by the detector
    target_angle: float = _deg_to_rad(35.0)  # radians
    reflection_gain: float = _db_to_linear(-70.0)   # |alpha|^2
    willie_gain: float = _db_to_linear(_WILLIE_GAIN_DB_DEFAULT)  # |beta|^2
    noise_user: float = _db_to_linear(-90.0)    # sigma_k^2, watts
    noise_radar: float = _db_to_linear(-90.0)   # sigma_r^2, watts
    noise_willie: float = _db_to_linear(-90.0)  # sigma_w^2, watts
    path_loss_ref: float = _db_to_linear(-30.0)  # C0 at 1 m
    path_loss_exponent: float = 3.2
    user_center: float = 40.0        # disc center distance from the array, meters
    user_radius: float = 5.0         # disc radius, meters
    rng_seed: int = 1
    scheme: str = "ma"
    conic_tol: float = 1e-8
    conic_max_iter: int = 200
    bcd_max_iter: int = 50
    bcd_rel_tol: float = 1e-4
    pgd_max_iter: int = 100
    pgd_step_tol: float = 1e-7       # step-norm exit threshold, meters

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """Check every invariant; raise ConfigError naming the offending field."""
        for name in ("num_antennas", "num_users", "num_paths", "detection_samples",
                     "conic_max_iter", "bcd_max_iter", "pgd_max_iter"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.rng_seed, int) or self.rng_seed < 0:
            raise ConfigError(f"rng_seed must be a nonnegative integer, got {self.rng_seed!r}")
        for name in ("wavelength", "min_spacing", "region_length", "total_power",
                     "reflection_gain", "willie_gain",
                     "noise_user", "noise_radar", "noise_willie", "path_loss_ref",
                     "path_loss_exponent", "conic_tol", "bcd_rel_tol", "pgd_step_tol"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {v!r}")
        # zero means "no radar demand" / "no covertness demand"; both are
        # legitimate relaxations used by the comparison schemes
        for name in ("radar_snr_threshold", "covertness_level"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be a nonnegative number, got {v!r}")
        if not 0.0 <= self.target_angle <= math.pi:
            raise ConfigError(
                f"target_angle must lie in [0, pi] radians, got {self.target_angle!r}")
        span = (self.num_antennas - 1) * self.min_spacing
        if self.region_length < span:
            raise ConfigError(
                f"region_length {self.region_length} cannot hold num_antennas="
                f"{self.num_antennas} at min_spacing {self.min_spacing} "
                f"(needs at least {span})")
        if not (self.user_radius >= 0 and self.user_center > self.user_radius):
            raise ConfigError(
                f"user disc must keep users at positive range: center "
                f"{self.user_center!r}, radius {self.user_radius!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(
                f"scheme must be one of {SCHEMES}, got {self.scheme!r}")


# file key -> (dataclass field, parser from file units, formatter to file units).
# Parsers take the raw string; formatters take the internal value and return a
# float in file units (or the value itself for pass-through keys).
def _float_key(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _int_key(s: str) -> int:
    return int(s)


_IDENT = ("identity",)
_DB = ("db",)
_DEG = ("deg",)

_FILE_KEYS = {
    "num_antennas": ("num_antennas", "int"),
    "num_users": ("num_users", "int"),
    "num_paths": ("num_paths", "int"),
    "wavelength_m": ("wavelength", "float"),
    "min_spacing_m": ("min_spacing", "float"),
    "region_length_m": ("region_length", "float"),
    "power_dbw": ("total_power", "db"),
    "radar_snr_db": ("radar_snr_threshold", "db"),
    "covertness_level": ("covertness_level", "float"),
    "detection_samples": ("detection_samples", "int"),
    "target_angle_deg": ("target_angle", "deg"),
    "reflection_gain_db": ("reflection_gain", "db"),
    "willie_gain_db": ("willie_gain", "db"),
    "noise_user_dbw": ("noise_user", "db"),
    "noise_radar_dbw": ("noise_radar", "db"),
    "noise_willie_dbw": ("noise_willie", "db"),
    "path_loss_ref_db": ("path_loss_ref", "db"),
    "path_loss_exponent": ("path_loss_exponent", "float"),
    "user_center_m": ("user_center", "float"),
    "user_radius_m": ("user_radius", "float"),
    "rng_seed": ("rng_seed", "int"),
    "scheme": ("scheme", "str"),
    "conic_tol": ("conic_tol", "float"),
    "conic_max_iter": ("conic_max_iter", "int"),
    "bcd_max_iter": ("bcd_max_iter", "int"),
    "bcd_rel_tol": ("bcd_rel_tol", "float"),
    "pgd_max_iter": ("pgd_max_iter", "int"),
    "pgd_step_tol": ("pgd_step_tol", "float"),
}

_CONVERT = {
    "db": _db_to_linear,
    "deg": _deg_to_rad,
    "float": float,
}

_INVERT = {
    "db": lambda x: 10.0 * math.log10(x),
    "deg": lambda x: x * 180.0 / math.pi,
    "float": float,
}


def _exact_file_value(internal: float, kind: str) -> float:
    """File-unit value whose conversion reproduces ``internal`` bitwise.

    The naive inverse can land one or two ulps off; search the neighbors.
    """
    fwd = _CONVERT[kind]
    guess = _INVERT[kind](internal)
    if fwd(guess) == internal:
        return guess
    lo = hi = guess
    for _ in range(64):
        lo = math.nextafter(lo, -math.inf)
        if fwd(lo) == internal:
            return lo
        hi = math.nextafter(hi, math.inf)
        if fwd(hi) == internal:
            return hi
    return guess  # no exact preimage exists; closest representable


def load_config(path: str | Path) -> SystemConfig:
    """Parse a flat key=value config file into a SystemConfig.

    Every key in the schema must be present exactly once; unknown keys are
    rejected.  Raises ConfigError naming the offending key or field.
    """
    path = Path(path)
    raw: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _FILE_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        raw[key] = value.strip()
    missing = [k for k in _FILE_KEYS if k not in raw]
    if missing:
        raise ConfigError(f"{path}: missing keys: {', '.join(missing)}")

    kwargs = {}
    for key, (field_name, kind) in _FILE_KEYS.items():
        text = raw[key]
        try:
            if kind == "int":
                kwargs[field_name] = _int_key(text)
            elif kind == "str":
                kwargs[field_name] = text
            else:
                kwargs[field_name] = _CONVERT[kind](_float_key(text))
        except ValueError as exc:
            raise ConfigError(f"{path}: invalid value for {key!r}: {text!r} ({exc})") from None
    try:
        return SystemConfig(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def emit_config(config: SystemConfig, path: str | Path) -> None:
    """Write ``config`` in file units such that load_config returns it bitwise."""
    lines = ["# madfrc system configuration"]
    for key, (field_name, kind) in _FILE_KEYS.items():
        value = getattr(config, field_name)
        if kind in ("int", "str"):
            lines.append(f"{key} = {value}")
        elif kind == "float":
            lines.append(f"{key} = {value!r}")
        else:
            lines.append(f"{key} = {_exact_file_value(value, kind)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def default_config() -> SystemConfig:
    """The reference scenario used throughout the experiments."""
    return SystemConfig()


def config_as_dict(config: SystemConfig) -> dict:
    """Plain-dict snapshot (internal units), JSON-ready."""
    return {f.name: getattr(config, f.name) for f in fields(config)}
