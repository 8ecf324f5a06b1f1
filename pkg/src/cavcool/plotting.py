"""PNG figures written next to the CSV outputs (non-interactive backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

US = 1e6
STYLE = {
    "figure.dpi": 110,
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_detector(d, s_n, path):
    """Normalised scattering, cavity phase and intracavity intensity."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(7, 6), sharex=True)
        t = d.t * US
        axes[0].plot(t, s_n, lw=0.5, color="k")
        axes[0].set_ylabel("$S_N$")
        axes[1].plot(t, d.phase, lw=0.7, color="C0")
        axes[1].set_ylabel("phase (rad)")
        axes[2].plot(t, d.i_c, lw=0.7, color="C3")
        axes[2].set_ylabel("$I_c$ (photons)")
        axes[2].set_xlabel("time (µs)")
        return _save(fig, path)


def plot_trace(trace, path):
    """Transverse position and velocity of a simulated transit."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 1, figsize=(7, 4.5), sharex=True)
        t = trace.t * US
        axes[0].plot(t, trace.x * US, lw=0.7)
        axes[0].set_ylabel("x (µm)")
        axes[1].plot(t, trace.vx * 100, lw=0.7, color="C2")
        axes[1].set_ylabel("$v_x$ (cm/s)")
        axes[1].set_xlabel("time (µs)")
        return _save(fig, path)


def plot_analysis(report, s, path):
    """``S_N`` with the fitted envelope, classified extrema and the reconstruction."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 1, figsize=(7, 5.5), sharex=True)
        t = s.t * US
        ax = axes[0]
        ax.plot(t, s.s_n, lw=0.5, color="0.3", label="$S_N$")
        ax.plot(t, report.envelope(s.t), lw=1.0, color="C1", label="Gaussian envelope")
        markers = {"max": ("C3", "v"), "node": ("C0", "o"), "turn": ("C2", "s")}
        for kind, (color, marker) in markers.items():
            ev = [e for e in report.classification.events if e.kind == kind]
            if ev:
                ax.plot(
                    [e.t * US for e in ev], [e.s_n for e in ev], marker, ms=3, color=color, ls="none", label=kind
                )
        ax.set_ylabel("$S_N$")
        ax.legend(loc="upper right", ncol=2)
        traj = report.trajectory
        ax = axes[1]
        x = traj.x * US
        ax.plot(t, x, lw=0.8, color="k")
        if np.any(traj.trapped):
            ax.plot(t, np.where(traj.trapped, x, np.nan), lw=1.2, color="C3", label="channelled")
            ax.legend(loc="upper left")
        ax.set_ylabel("reconstructed x (µm)")
        ax.set_xlabel("time (µs)")
        ax.set_title(
            f"$v_{{in}}$ = {100 * report.v_x_in:.1f} cm/s, $v_{{out}}$ = {100 * report.v_x_out:.1f} cm/s, "
            f"cooling factor {report.cooling_factor:.2g}",
            fontsize=9,
        )
        return _save(fig, path)


def plot_mie(radii, ratio, path):
    """Finite-size force ratio against particle radius."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(np.asarray(radii) * 1e9, ratio, color="k")
        ax.axhline(0.0, color="0.6", lw=0.6)
        ax.axhline(1.0, color="0.6", lw=0.6, ls="--")
        ax.set_xlabel("radius R (nm)")
        ax.set_ylabel("$U_x / U_0$")
        return _save(fig, path)


def plot_sweep(points, path):
    """Velocity ratio against area ratio, split into free and channelled runs."""
    ok = [p for p in points if p.ok]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 4))
        for trapped, color, label in ((False, "C0", "untrapped"), (True, "C3", "trapped")):
            sel = [p for p in ok if p.trapped == trapped]
            if sel:
                ax.plot([p.r_a for p in sel], [p.r_v for p in sel], ".", ms=2, color=color, label=label)
        ax.axhline(1.0, color="0.6", lw=0.6)
        ax.axvline(1.0, color="0.6", lw=0.6)
        ax.set_xlim(0.4, 1.2)
        ax.set_ylim(0.0, 1.6)
        ax.set_xlabel("area ratio $r_A$")
        ax.set_ylabel("velocity ratio $r_v$")
        if ok:
            ax.legend(loc="lower right")
        return _save(fig, path)
