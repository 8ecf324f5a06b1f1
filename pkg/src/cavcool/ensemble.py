"""Seeded Monte Carlo sweeps over transits.

Each run simulates one transit from ``-z_start`` to ``+z_start`` waists,
measures the exit velocity ``v_m`` from the last oscillation of ``S_N``
whose maxima exceed ``measure_level``, takes the true final velocity
``v_f`` at the end of the run (``z_start`` envelope half-widths past the
mode centre) and records the area ratio of the same interval.  A run is
trapped when a channelling turning point occurs in the exit wing, taken to
start ``exit_wing_start`` envelope half-widths after the centre.  Sample
parameters come from per-run random streams spawned from the master seed,
so results do not depend on execution order or worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .analysis import area_ratio, classify_extrema, extract_vx, fit_envelope
from .dynamics import SimOptions, simulate_transit
from .errors import CavcoolError, ConfigError
from .params import (
    SILICON_DENSITY,
    SILICON_INDEX_1560,
    CavityConfig,
    ParticleConfig,
    derive_cavity,
    particle_properties,
)
from .signals import normalized_scattering, synthesize



def _check_range(name, rng, low=-math.inf, high=math.inf):
    if len(rng) != 2 or not all(math.isfinite(v) for v in rng):
        raise ConfigError(f"{name}: expected two finite numbers, got {rng}")
    a, b = rng
    if a > b:
        raise ConfigError(f"{name}: lower bound {a} exceeds upper bound {b}")
    if a < low or b > high:
        raise ConfigError(f"{name}: range {rng} outside [{low}, {high}]")


@dataclass(frozen=True)
class SweepSpec:
    """Sampling distributions and per-run settings of a sweep.

    Ranges are ``(low, high)``; equal bounds fix the value.  The field
    strength is swept through the input power, log-uniformly when
    ``power_log`` is set.  Velocities are in m/s, the offset in waists.
    """

    n_runs: int = 200
    seed: int = 0
    power_mw: tuple = (0.01, 3.0)
    power_log: bool = True
    ux_over_kappa: tuple = (2.3, 2.3)
    v_x: tuple = (0.01, 0.3)
    v_z: tuple = (0.3, 1.5)
    entry_phase: tuple = (0.0, math.pi)
    y_offset_over_waist: tuple = (0.0, 0.0)
    detuning_over_kappa: float = -1.0
    radius: float = 150e-9
    density: float = SILICON_DENSITY
    refractive_index: float = SILICON_INDEX_1560
    z_start: float = 3.0
    measure_level: float = 0.01
    node_threshold: float = 0.005
    exit_wing_start: float = 1.0
    cavity: CavityConfig = field(default_factory=CavityConfig)
    options: SimOptions = field(default_factory=SimOptions)

    def __post_init__(self):
        if self.n_runs < 1:
            raise ConfigError("n_runs must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        _check_range("power_mw", self.power_mw, 0.0)
        if self.power_log and self.power_mw[0] <= 0:
            raise ConfigError("log-uniform power sampling needs a positive lower bound")
        _check_range("ux_over_kappa", self.ux_over_kappa, 0.0)
        _check_range("v_x", self.v_x)
        _check_range("v_z", self.v_z)
        if min(abs(self.v_z[0]), abs(self.v_z[1])) == 0 or self.v_z[0] * self.v_z[1] < 0:
            raise ConfigError("v_z range must exclude zero")
        _check_range("entry_phase", self.entry_phase)
        _check_range("y_offset_over_waist", self.y_offset_over_waist)
        if not 0 < self.measure_level < 1:
            raise ConfigError("measure_level must lie in (0, 1)")
        if self.exit_wing_start < 0:
            raise ConfigError("exit_wing_start must be non-negative")
        if self.z_start <= 0:
            raise ConfigError("z_start must be positive")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown sweep keys: {sorted(unknown)}")
        if "cavity" in data and isinstance(data["cavity"], dict):
            data["cavity"] = CavityConfig(**data["cavity"])
        if "options" in data and isinstance(data["options"], dict):
            data["options"] = SimOptions(**data["options"])
        for key in ("power_mw", "ux_over_kappa", "v_x", "v_z", "entry_phase", "y_offset_over_waist"):
            if key in data:
                data[key] = tuple(float(v) for v in data[key])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class SweepSample:
    index: int
    power: float
    ux_over_kappa: float
    v_x: float
    v_z: float
    entry_phase: float
    y_offset: float


@dataclass(frozen=True)
class CorrelationPoint:
    index: int
    r_a: float
    r_v: float
    trapped: bool
    v_m: float
    v_f: float
    sample: SweepSample
    error: str = ""

    @property
    def ok(self):
        return not self.error


def _uniform(rng, bounds):
    a, b = bounds
    return a if a == b else float(rng.uniform(a, b))


def draw_samples(spec: SweepSpec) -> list:
    """One parameter set per run, each from its own spawned stream."""
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_runs)
    out = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        lo, hi = spec.power_mw
        if spec.power_log and lo != hi:
            power = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        else:
            power = _uniform(rng, spec.power_mw)
        out.append(
            SweepSample(
                index=i,
                power=power * 1e-3,
                ux_over_kappa=_uniform(rng, spec.ux_over_kappa),
                v_x=_uniform(rng, spec.v_x),
                v_z=_uniform(rng, spec.v_z),
                entry_phase=_uniform(rng, spec.entry_phase),
                y_offset=_uniform(rng, spec.y_offset_over_waist) * spec.cavity.waist,
            )
        )
    return out


def run_one(spec: SweepSpec, sample: SweepSample) -> CorrelationPoint:
    """Simulate and evaluate one sample; failures are recorded, not raised."""
    nan = float("nan")
    try:
        config = dataclasses.replace(spec.cavity, input_power=sample.power)
        config = config.with_detuning_in_kappa(spec.detuning_over_kappa)
        cav = derive_cavity(config)
        particle = ParticleConfig(
            radius=spec.radius, mass_density=spec.density, relative_permittivity=spec.refractive_index**2
        )
        pd = particle_properties(particle, cav)
        trace = simulate_transit(
            cav,
            pd,
            sample.ux_over_kappa * cav.kappa,
            sample.v_x,
            sample.v_z,
            sample.entry_phase,
            sample.y_offset,
            spec.z_start,
            spec.options,
        )
        d = synthesize(trace, cav)
        s = normalized_scattering(d)
        env = fit_envelope(s)
        cls = classify_extrema(s, env, spec.node_threshold)
        ar = area_ratio(s, d, env, cls, min_level=spec.measure_level)
        v_m = extract_vx(s, cls, env, "exit", cav.wavelength, min_level=spec.measure_level)
        v_f = abs(float(trace.vx[-1]))
        start = env.center + spec.exit_wing_start * env.half_width
        trapped = any(e.kind == "turn" and e.t > start for e in cls.events)
        r_v = v_m / v_f if v_f > 0 else math.inf
        return CorrelationPoint(sample.index, ar.r_a, r_v, trapped, v_m, v_f, sample)
    except CavcoolError as exc:
        return CorrelationPoint(sample.index, nan, nan, False, nan, nan, sample, f"{type(exc).__name__}: {exc}")


def _run_packed(args):
    return run_one(*args)


def run_sweep(spec: SweepSpec, workers: int = 1) -> list:
    """All runs of ``spec`` in index order.

    ``workers > 1`` distributes runs over processes; the output is
    identical to the serial result.
    """
    samples = draw_samples(spec)
    if workers <= 1 or len(samples) == 1:
        return [run_one(spec, s) for s in samples]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_packed, [(spec, s) for s in samples], chunksize=max(1, len(samples) // (4 * workers))))


def _spearman(x, y):
    if len(x) < 3 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    rho = spearmanr(x, y).statistic
    return float(rho) if np.isfinite(rho) else None


def _branch(points):
    r_a = np.array([p.r_a for p in points])
    r_v = np.array([p.r_v for p in points])
    if len(points) == 0:
        return {"n": 0}
    return {
        "n": len(points),
        "r_a_median": float(np.median(r_a)),
        "r_v_median": float(np.median(r_v)),
        "r_a_std": float(np.std(r_a)),
        "r_v_std": float(np.std(r_v)),
        "spearman_r_a_r_v": _spearman(r_a, r_v),
    }


def _binned(points, edges):
    r_a = np.array([p.r_a for p in points])
    r_v = np.array([p.r_v for p in points])
    bins = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (r_a >= lo) & (r_a < hi)
        bins.append(
            {
                "r_a_low": float(lo),
                "r_a_high": float(hi),
                "n": int(sel.sum()),
                "r_v_median": float(np.median(r_v[sel])) if sel.any() else None,
                "r_v_q90": float(np.quantile(r_v[sel], 0.9)) if sel.any() else None,
            }
        )
    return bins


def _crossover(bins):
    """Centre of the first bin boundary where the median of ``r_v - 1`` turns positive."""
    filled = [b for b in bins if b["n"] > 0]
    for a, b in zip(filled, filled[1:]):
        if a["r_v_median"] < 1 <= b["r_v_median"]:
            return 0.5 * (a["r_a_high"] + b["r_a_low"])
    return None


def summarize(points, edges=(0.0, 0.5, 0.7, 0.8, 0.85, 0.9, 0.95, 1.0, 1.05, 2.0)) -> dict:
    """Branch-resolved statistics of a sweep.

    ``untrapped.spearman_r_a_r_v`` measures the monotone relation on the
    free branch; ``trapped.crossover_r_a`` is where the binned median of
    ``r_v`` crosses 1.
    """
    points = list(points)
    if not points:
        raise ConfigError("no points to summarise")
    good = [p for p in points if p.ok and np.isfinite(p.r_a) and np.isfinite(p.r_v)]
    trapped = [p for p in good if p.trapped]
    free = [p for p in good if not p.trapped]
    edges = np.asarray(edges, float)
    tb = _binned(trapped, edges)
    out = {
        "n_runs": len(points),
        "n_ok": len(good),
        "n_failed": len(points) - len(good),
        "all": _branch(good),
        "untrapped": {**_branch(free), "bins": _binned(free, edges)},
        "trapped": {**_branch(trapped), "bins": tb, "crossover_r_a": _crossover(tb)},
    }
    return out


CSV_COLUMNS = (
    "index",
    "r_a",
    "r_v",
    "trapped",
    "v_m",
    "v_f",
    "power_W",
    "ux_over_kappa",
    "v_x",
    "v_z",
    "entry_phase",
    "y_offset_m",
    "error",
)


def points_to_csv(points) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for p in points:
        s = p.sample
        writer.writerow(
            [
                p.index,
                repr(float(p.r_a)),
                repr(float(p.r_v)),
                int(p.trapped),
                repr(float(p.v_m)),
                repr(float(p.v_f)),
                repr(s.power),
                repr(s.ux_over_kappa),
                repr(s.v_x),
                repr(s.v_z),
                repr(s.entry_phase),
                repr(s.y_offset),
                p.error,
            ]
        )
    return buf.getvalue()


def write_results(points, csv_path, json_path=None):
    """Scatter CSV (one row per run) and optional summary JSON."""
    with open(csv_path, "w", newline="") as fh:
        fh.write(points_to_csv(points))
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(summarize(points), fh, indent=2, sort_keys=True)
            fh.write("\n")
