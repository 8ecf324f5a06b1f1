"""Command-line front end.

``cavcool simulate``, ``cavcool analyze``, ``cavcool mie-scan`` and
``cavcool sweep`` each write their results, PNG figures and a
``manifest.json`` (enough to re-run the command) into ``--out``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O
error.  On failure a JSON object describing the error is printed to stderr
and, when possible, written to ``error.json`` in the output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import analyze
from .config import PRESETS, RunConfig, load_config, parse_config
from .dynamics import simulate_transit
from .ensemble import run_sweep, summarize, write_results
from .errors import CavcoolError, ConfigError, NumericError
from .mie import effective_ux, force_factor_curve
from .params import ParticleConfig, derive_cavity, particle_properties, u0_from_radius
from .signals import DetectorTraces, DivisionGuardError, normalized_scattering, synthesize

log = logging.getLogger("cavcool")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class _Run:
    """Bookkeeping for one command: inputs, outputs and the manifest."""

    def __init__(self, command, out_dir, argv, raw_config=None, config: RunConfig | None = None, seed=None):
        self.command = command
        self.out_dir = Path(out_dir)
        self.argv = list(argv) if argv is not None else None
        self.raw_config = raw_config
        self.config = config
        self.seed = seed
        self.inputs = []
        self.outputs = []
        self.started = time.perf_counter()
        self.stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name):
        self.outputs.append(name)
        return self.out_dir / name

    def write_manifest(self, extra=None):
        manifest = {
            "tool": "cavcool",
            "version": __version__,
            "command": self.command,
            "argv": self.argv,
            "seed": self.seed,
            "config": self.raw_config,
            "resolved": self.config.snapshot() if self.config is not None else None,
            "inputs": self.inputs,
            "outputs": sorted(set(self.outputs)),
            "started_utc": self.stamp,
            "wall_clock_s": round(time.perf_counter() - self.started, 3),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        }
        if extra:
            manifest.update(extra)
        (self.out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _apply_overrides(config: RunConfig, seed=None, sample_rate=None, noise=None) -> RunConfig:
    if sample_rate is not None:
        if not sample_rate > 0:
            raise ConfigError("--sample-rate must be positive")
        config = replace(config, options=replace(config.options, sample_rate=float(sample_rate)))
    if noise is not None:
        if noise < 0:
            raise ConfigError("--noise must be non-negative")
        config = replace(config, noise=replace(config.noise, intensity=float(noise), scattering=float(noise)))
    if seed is not None:
        if seed < 0:
            raise ConfigError("--seed must be non-negative")
        config = replace(config, noise=replace(config.noise, seed=int(seed)))
        if config.sweep is not None:
            config = replace(config, sweep={**config.sweep, "seed": int(seed)})
    return config


def _record_overrides(raw, seed=None, sample_rate=None, noise=None):
    """Fold command-line overrides into the raw config kept in the manifest."""
    raw = json.loads(json.dumps(raw))
    if sample_rate is not None:
        sim = raw.setdefault("simulation", {})
        for key in ("sample_rate_MHz", "sample_rate_Hz"):
            sim.pop(key, None)
        sim["sample_rate_Hz"] = float(sample_rate)
    if noise is not None:
        raw.setdefault("noise", {}).update(intensity=float(noise), scattering=float(noise))
    if seed is not None:
        raw.setdefault("noise", {})["seed"] = int(seed)
        if "sweep" in raw:
            raw["sweep"]["seed"] = int(seed)
    return raw


def _transit_coupling(config: RunConfig, cav, pd):
    """Coupling and cavity-shift rates (rad/s) for the configured transit."""
    tr = config.transit
    if config.particle is None:
        return 0.0, None
    if tr.ux_over_kappa is not None:
        u_x = tr.ux_over_kappa * cav.kappa
    else:
        u_x = effective_ux(config.particle.radius, tr.y_offset, cav, config.particle.relative_permittivity)
    shift = None if tr.shift_over_kappa is None else tr.shift_over_kappa * cav.kappa
    return u_x, shift


def simulate_config(config: RunConfig):
    """Simulated transit and detector channels for ``config``."""
    cav = derive_cavity(config.resolved_cavity())
    particle = config.particle if config.particle is not None else ParticleConfig()
    pd = particle_properties(particle, cav)
    u_x, shift = _transit_coupling(config, cav, pd)
    tr = config.transit
    trace = simulate_transit(
        cav, pd, u_x, tr.v_x, tr.v_z, tr.entry_phase, tr.y_offset, tr.z_start, config.options, shift
    )
    trace.metadata["scatterer"] = config.particle is not None
    d = synthesize(trace, cav, config.noise, config.options.sample_rate)
    return cav, trace, d


def _s_n_or_zero(d):
    try:
        return normalized_scattering(d).s_n
    except DivisionGuardError:
        return np.zeros_like(d.t)


def cmd_simulate(config_path=None, out_dir="out", preset=None, seed=None, sample_rate=None, noise=None, argv=None):
    """Simulate one transit; writes trace, detector channels, figures and manifest."""
    config, raw = load_config(config_path, preset)
    config = _apply_overrides(config, seed, sample_rate, noise)
    run = _Run("simulate", out_dir, argv, _record_overrides(raw, seed, sample_rate, noise), config, config.noise.seed)
    if config_path:
        run.inputs.append(str(config_path))
    cav, trace, d = simulate_config(config)
    trace.save(run.path("trace.csv"))
    run.outputs.append("trace.json")
    s_n = _s_n_or_zero(d)
    d.save(run.path("detector.csv"), s_n)
    from . import plotting

    plotting.plot_detector(d, s_n, run.path("detector.png"))
    plotting.plot_trace(trace, run.path("trace.png"))
    v_in, v_out = float(trace.vx[0]), float(trace.vx[-1])
    summary = {
        "v_x_in": v_in,
        "v_x_out": v_out,
        "energy_ratio": (v_in / v_out) ** 2 if v_out else None,
        "kappa": cav.kappa,
        "u_x": trace.metadata["u_x"],
        "n_samples": len(d.t),
    }
    run.path("simulation.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    run.write_manifest()
    return EXIT_OK


def _config_for_trace(trace_path, config_path, preset):
    """Explicit config or preset, else the config recorded next to the trace."""
    if config_path is not None or preset is not None:
        return load_config(config_path, preset)
    manifest = Path(trace_path).parent / "manifest.json"
    if manifest.exists():
        recorded = json.loads(manifest.read_text()).get("config")
        if isinstance(recorded, dict):
            return parse_config(recorded), recorded
    return parse_config({}), {}


def cmd_analyze(trace_path, out_dir="out", config_path=None, preset=None, argv=None):
    """Evaluate a detector trace CSV; writes the report JSON, plot-data CSVs and figures."""
    config, raw = _config_for_trace(trace_path, config_path, preset)
    run = _Run("analyze", out_dir, argv, raw, config)
    run.inputs.append(str(trace_path))
    d = DetectorTraces.load(trace_path)
    cav = derive_cavity(config.resolved_cavity())
    particle = config.particle or ParticleConfig()
    a = config.analysis
    report = analyze(
        d,
        cav,
        noise_floor=a.noise_floor,
        min_level=a.min_level,
        node_threshold=a.node_threshold,
        anharmonicity=a.anharmonicity,
        density=particle.mass_density,
        n_rel=particle.refractive_index,
    )
    report.save(run.out_dir)
    run.outputs += ["report.json", "envelope.csv", "extrema.csv", "trajectory.csv"]
    from . import plotting

    plotting.plot_analysis(report, normalized_scattering(d), run.path("analysis.png"))
    run.write_manifest()
    return EXIT_OK


def cmd_mie_scan(config_path=None, out_dir="out", preset=None, argv=None):
    """Finite-size force ratio ``U_x / U_0`` over the configured radius range."""
    config, raw = load_config(config_path, preset)
    run = _Run("mie-scan", out_dir, argv, raw, config)
    if config_path:
        run.inputs.append(str(config_path))
    m = config.mie_scan
    cav = derive_cavity(replace(config.resolved_cavity(), wavelength=m.wavelength or config.cavity.wavelength))
    radii = np.linspace(m.radius_min, m.radius_max, m.n_points)
    ratio = force_factor_curve(radii, m.refractive_index, cav.k)
    u0 = np.array([u0_from_radius(r, m.refractive_index**2, cav) for r in radii])
    np.savetxt(
        run.path("mie_scan.csv"),
        np.column_stack([radii, ratio, u0, u0 * ratio]),
        delimiter=",",
        header="radius_m,ux_over_u0,u0_rad_s,ux_rad_s",
        comments="",
        fmt="%.12g",
    )
    from . import plotting

    plotting.plot_mie(radii, ratio, run.path("mie_scan.png"))
    run.write_manifest()
    return EXIT_OK


def cmd_sweep(spec_path=None, out_dir="out", preset=None, seed=None, workers=1, argv=None):
    """Monte Carlo ensemble of transits; scatter CSV plus summary JSON."""
    config, raw = load_config(spec_path, preset)
    if config.sweep is None:
        raise ConfigError("configuration has no 'sweep' section")
    config = _apply_overrides(config, seed=seed)
    spec = config.sweep_spec()
    run = _Run("sweep", out_dir, argv, _record_overrides(raw, seed), config, spec.seed)
    if spec_path:
        run.inputs.append(str(spec_path))
    points = run_sweep(spec, workers=workers)
    for p in points:
        if not p.ok:
            log.warning("run %d failed: %s", p.index, p.error)
    write_results(points, run.path("sweep.csv"), run.path("summary.json"))
    from . import plotting

    plotting.plot_sweep(points, run.path("sweep.png"))
    stats = summarize(points)
    run.write_manifest({"n_ok": stats["n_ok"], "n_failed": stats["n_failed"]})
    if stats["n_ok"] == 0:
        raise NumericError(f"all {stats['n_runs']} runs failed")
    return EXIT_OK


def exit_code_for(exc) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (NumericError, CavcoolError, FloatingPointError)):
        return EXIT_NUMERIC
    if isinstance(exc, OSError):
        return EXIT_IO
    raise exc


def _report_error(exc, out_dir, command):
    code = exit_code_for(exc)
    payload = {
        "error": type(exc).__name__,
        "message": str(exc),
        "exit_code": code,
        "command": command,
    }
    text = json.dumps(payload, indent=2) + "\n"
    sys.stderr.write(text)
    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / "error.json").write_text(text)
        except OSError:
            pass
    return code


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cavcool",
        description="Cavity cooling of dielectric nanoparticles: simulation, signal analysis and sweeps.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", type=Path, help="JSON configuration with unit-suffixed keys")
        p.add_argument("--preset", choices=PRESETS, help="built-in configuration (a --config is layered on top)")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        if seed:
            p.add_argument("--seed", type=int, help="random seed (noise or sweep sampling)")

    p = sub.add_parser("simulate", help="simulate one transit and synthesize detector traces")
    common(p)
    p.add_argument("--sample-rate", type=float, help="sample rate in Hz")
    p.add_argument("--noise", type=float, help="relative noise on intensity and scattering channels")

    p = sub.add_parser("analyze", help="evaluate a detector trace CSV")
    p.add_argument("trace", type=Path, help="CSV with columns t_s,I_c,phase_rad,I_s,S_N")
    common(p, seed=False)

    p = sub.add_parser("mie-scan", help="finite-size force ratio against particle radius")
    common(p, seed=False)

    p = sub.add_parser("sweep", help="Monte Carlo ensemble for the area-ratio study")
    common(p)
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out, args.preset, args.seed, args.sample_rate, args.noise, argv)
        if args.command == "analyze":
            return cmd_analyze(args.trace, args.out, args.config, args.preset, argv)
        if args.command == "mie-scan":
            return cmd_mie_scan(args.config, args.out, args.preset, argv)
        if args.command == "sweep":
            return cmd_sweep(args.config, args.out, args.preset, args.seed, args.workers, argv)
    except (CavcoolError, OSError, FloatingPointError) as exc:
        return _report_error(exc, args.out, args.command)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
