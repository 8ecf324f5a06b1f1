"""JSON run configuration with unit-suffixed keys.

A configuration is a JSON object with optional sections::

    {
      "cavity":     {"wavelength_nm": 1560, "finesse": 3e5, "waist_um": 65,
                     "power_mW": 1.0, "detuning_over_kappa": -1.0},
      "particle":   {"radius_nm": 150, "refractive_index": 3.47},
      "transit":    {"vx_cm_s": 23, "vz_m_s": 0.7, "ux_over_kappa": 2.3},
      "simulation": {"sample_rate_MHz": 10, "rtol": 1e-8},
      "noise":      {"scattering": 0.0, "seed": 0},
      "analysis":   {"node_threshold": 0.05},
      "mie_scan":   {"radius_min_nm": 10, "radius_max_nm": 400, "n_points": 391},
      "sweep":      {"n_runs": 200, "seed": 0}
    }

Every key carries its unit; values are converted to SI on ingestion.  Unknown
keys are rejected so that a typo never silently falls back to a default.
``"particle": null`` describes an empty cavity.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

from .analysis import NODE_THRESHOLD, NOTABLE_LEVEL
from .dynamics import SimOptions
from .ensemble import SweepSpec
from .errors import ConfigError
from .params import AMU, SILICON_INDEX_1560, CavityConfig, ParticleConfig
from .signals import NoiseOptions

PRESETS = ("fig3", "figS4", "figS5", "empty-cavity", "blue-detuned")

_CAVITY_KEYS = {
    "wavelength_nm": ("wavelength", 1e-9),
    "wavelength_m": ("wavelength", 1.0),
    "finesse": ("finesse", 1.0),
    "waist_um": ("waist", 1e-6),
    "waist_m": ("waist", 1.0),
    "mirror_radius_mm": ("curved_mirror_radius", 1e-3),
    "mirror_radius_m": ("curved_mirror_radius", 1.0),
    "length_mm": ("cavity_length", 1e-3),
    "length_m": ("cavity_length", 1.0),
    "power_mW": ("input_power", 1e-3),
    "power_W": ("input_power", 1.0),
    "detuning_MHz": ("detuning", 2e6 * math.pi),
    "detuning_rad_s": ("detuning", 1.0),
    "long_root": ("use_long_root", None),
}

_PARTICLE_KEYS = {
    "radius_nm": ("radius", 1e-9),
    "radius_m": ("radius", 1.0),
    "density_kg_m3": ("mass_density", 1.0),
    "relative_permittivity": ("relative_permittivity", 1.0),
    "mass_amu": ("mass", AMU),
    "mass_kg": ("mass", 1.0),
    "atom_mass_amu": ("atom_mass_amu", 1.0),
}

_TRANSIT_KEYS = {
    "vx_cm_s": ("v_x", 1e-2),
    "vx_m_s": ("v_x", 1.0),
    "vz_m_s": ("v_z", 1.0),
    "entry_phase_rad": ("entry_phase", 1.0),
    "y_offset_um": ("y_offset", 1e-6),
    "y_offset_m": ("y_offset", 1.0),
    "z_start_waists": ("z_start", 1.0),
    "ux_over_kappa": ("ux_over_kappa", 1.0),
    "shift_over_kappa": ("shift_over_kappa", 1.0),
}

_SIMULATION_KEYS = {
    "rtol": ("rtol", 1.0),
    "atol": ("atol", 1.0),
    "sample_rate_MHz": ("sample_rate", 1e6),
    "sample_rate_Hz": ("sample_rate", 1.0),
    "gravity": ("gravity", None),
    "frozen_field": ("frozen_field", None),
    "servo_corner_kHz": ("servo_corner", 1e3),
    "max_step_us": ("max_step", 1e-6),
    "max_steps": ("max_steps", None),
}

_NOISE_KEYS = {
    "intensity": ("intensity", 1.0),
    "phase_rad": ("phase", 1.0),
    "scattering": ("scattering", 1.0),
    "seed": ("seed", None),
}

_ANALYSIS_KEYS = {
    "node_threshold": ("node_threshold", 1.0),
    "min_level": ("min_level", 1.0),
    "noise_floor": ("noise_floor", 1.0),
    "anharmonicity": ("anharmonicity", None),
}

_MIE_KEYS = {
    "radius_min_nm": ("radius_min", 1e-9),
    "radius_max_nm": ("radius_max", 1e-9),
    "n_points": ("n_points", None),
    "refractive_index": ("refractive_index", 1.0),
    "wavelength_nm": ("wavelength", 1e-9),
}

_SECTIONS = ("cavity", "particle", "transit", "simulation", "noise", "analysis", "mie_scan", "sweep")


@dataclass(frozen=True)
class TransitConfig:
    """Initial conditions of one transit.

    ``ux_over_kappa`` fixes the coupling directly; when it is ``None`` the
    finite-size (Mie) value for the particle radius and ``y_offset`` is used.
    """

    v_x: float = 0.23
    v_z: float = 0.7
    entry_phase: float = 0.0
    y_offset: float = 0.0
    z_start: float = 3.0
    ux_over_kappa: float | None = None
    shift_over_kappa: float | None = None


@dataclass(frozen=True)
class AnalysisConfig:
    node_threshold: float = NODE_THRESHOLD
    min_level: float = NOTABLE_LEVEL
    noise_floor: float | None = None
    anharmonicity: str = "energy"


@dataclass(frozen=True)
class MieScanConfig:
    radius_min: float = 10e-9
    radius_max: float = 400e-9
    n_points: int = 391
    refractive_index: float = SILICON_INDEX_1560
    wavelength: float | None = None

    def __post_init__(self):
        if not 0 <= self.radius_min < self.radius_max:
            raise ConfigError("mie_scan needs 0 <= radius_min < radius_max")
        if self.n_points < 2:
            raise ConfigError("mie_scan needs at least two points")
        if self.refractive_index < 1:
            raise ConfigError("refractive index below 1 is not supported")


@dataclass(frozen=True)
class RunConfig:
    cavity: CavityConfig = field(default_factory=CavityConfig)
    detuning_over_kappa: float | None = None
    particle: ParticleConfig | None = field(default_factory=ParticleConfig)
    transit: TransitConfig = field(default_factory=TransitConfig)
    options: SimOptions = field(default_factory=SimOptions)
    noise: NoiseOptions = field(default_factory=NoiseOptions)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    mie_scan: MieScanConfig = field(default_factory=MieScanConfig)
    sweep: dict | None = None

    def resolved_cavity(self) -> CavityConfig:
        """Cavity configuration with a relative detuning applied."""
        if self.detuning_over_kappa is None:
            return self.cavity
        return self.cavity.with_detuning_in_kappa(self.detuning_over_kappa)

    def sweep_spec(self, seed=None) -> SweepSpec:
        """Sweep description; cavity and integrator settings come from this config."""
        data = dict(self.sweep or {})
        if seed is not None:
            data["seed"] = int(seed)
        spec = SweepSpec.from_dict(data)
        return replace(spec, cavity=replace(self.cavity, detuning=0.0), options=self.options)

    def snapshot(self):
        """Resolved configuration in SI units, JSON-serialisable."""
        out = {
            "cavity": asdict(self.resolved_cavity()),
            "detuning_over_kappa": self.detuning_over_kappa,
            "particle": None if self.particle is None else asdict(self.particle),
            "transit": asdict(self.transit),
            "simulation": asdict(self.options),
            "noise": asdict(self.noise),
            "analysis": asdict(self.analysis),
            "mie_scan": asdict(self.mie_scan),
        }
        if self.sweep is not None:
            out["sweep"] = self.sweep_spec().to_dict()
        return json.loads(json.dumps(out, default=list))


def _convert(section, data, table, extra=()):
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be an object")
    out = {}
    for key, value in data.items():
        if key in extra:
            continue
        if key not in table:
            raise ConfigError(f"unknown key '{section}.{key}' (accepted: {', '.join(sorted([*table, *extra]))})")
        name, factor = table[key]
        if name in out:
            raise ConfigError(f"'{section}.{name}' given more than once")
        if value is None or factor is None:
            out[name] = value
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"'{section}.{key}' must be a number")
        out[name] = float(value) * factor
    return out


def _build(cls, section, kwargs):
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"section '{section}': {exc}") from exc


def parse_config(data) -> RunConfig:
    """Build a :class:`RunConfig` from a decoded JSON object."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)} (accepted: {', '.join(_SECTIONS)})")

    cav = data.get("cavity", {})
    kw = _convert("cavity", cav, _CAVITY_KEYS, extra=("detuning_over_kappa",))
    detuning_over_kappa = cav.get("detuning_over_kappa")
    if detuning_over_kappa is not None:
        if "detuning" in kw:
            raise ConfigError("give either cavity.detuning_over_kappa or an absolute detuning")
        detuning_over_kappa = float(detuning_over_kappa)
    cavity = _build(CavityConfig, "cavity", kw)

    particle = ParticleConfig()
    if "particle" in data:
        raw = data["particle"]
        if raw is None:
            particle = None
        else:
            kw = _convert("particle", raw, _PARTICLE_KEYS, extra=("refractive_index",))
            if "refractive_index" in raw:
                if "relative_permittivity" in kw:
                    raise ConfigError("give either particle.refractive_index or particle.relative_permittivity")
                kw["relative_permittivity"] = float(raw["refractive_index"]) ** 2
            particle = _build(ParticleConfig, "particle", kw)

    transit = _build(TransitConfig, "transit", _convert("transit", data.get("transit", {}), _TRANSIT_KEYS))
    if transit.v_z == 0:
        raise ConfigError("transit.vz_m_s must be non-zero")
    if transit.ux_over_kappa is None and particle is not None and transit.shift_over_kappa is not None:
        raise ConfigError("transit.shift_over_kappa requires transit.ux_over_kappa")
    sim = _convert("simulation", data.get("simulation", {}), _SIMULATION_KEYS)
    if "max_steps" in sim and sim["max_steps"] is not None:
        sim["max_steps"] = int(sim["max_steps"])
    options = _build(SimOptions, "simulation", sim)
    noise = _convert("noise", data.get("noise", {}), _NOISE_KEYS)
    if "seed" in noise:
        noise["seed"] = int(noise["seed"])
    noise = _build(NoiseOptions, "noise", noise)
    if min(noise.intensity, noise.phase, noise.scattering) < 0:
        raise ConfigError("noise levels must be non-negative")
    analysis = _build(AnalysisConfig, "analysis", _convert("analysis", data.get("analysis", {}), _ANALYSIS_KEYS))
    mie = _convert("mie_scan", data.get("mie_scan", {}), _MIE_KEYS)
    if "n_points" in mie:
        mie["n_points"] = int(mie["n_points"])
    mie_scan = _build(MieScanConfig, "mie_scan", mie)

    sweep = data.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict):
            raise ConfigError("section 'sweep' must be an object")
        if "cavity" in sweep or "options" in sweep:
            raise ConfigError("sweep takes its cavity and simulation settings from the top-level sections")
        SweepSpec.from_dict(sweep)

    config = RunConfig(cavity, detuning_over_kappa, particle, transit, options, noise, analysis, mie_scan, sweep)
    config.resolved_cavity()
    return config


def merge(base, override):
    """Recursive dictionary merge; ``override`` wins."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def preset_data(name) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}' (available: {', '.join(PRESETS)})")
    text = resources.files("cavcool.presets").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def read_json(path) -> dict:
    """Decode a JSON file; malformed content is a configuration error."""
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def load_config(path=None, preset=None) -> tuple[RunConfig, dict]:
    """Configuration from a preset, a file, or a file layered on a preset.

    Returns the parsed configuration and the merged raw dictionary.
    """
    raw = preset_data(preset) if preset else {}
    if path is not None:
        raw = merge(raw, read_json(path))
    return parse_config(raw), raw
