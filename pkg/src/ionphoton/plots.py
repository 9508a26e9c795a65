"""Figure rendering for the CLI report paths (Agg backend, files only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_scan(path, detunings_hz, rates, fitted=None):
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    ax.plot(np.asarray(detunings_hz) / 1e6, rates, "k.-", lw=0.8, ms=3,
            label="model" if fitted is None else "data")
    if fitted is not None:
        ax.plot(np.asarray(detunings_hz) / 1e6, fitted, "b--", lw=1.2, label="fit")
        ax.legend()
    ax.set_xlabel("repump detuning (MHz)")
    ax.set_ylabel("fluorescence rate (counts/s)")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def render_wavepacket(path, times, density, normalized=None, beat=None):
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    ax.plot(np.asarray(times) * 1e9, density, "k-", lw=0.9)
    ax.set_xlabel("time after trigger (ns)")
    ax.set_ylabel("detected rate (1/s)")
    ax.grid(alpha=0.3)
    if beat is not None and beat.found:
        ax.set_title(f"quantum beat at {beat.frequency/1e6:.3f} MHz")
    return _save(fig, path)


def render_g2(path, bin_centers, counts, window=None):
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    ax.bar(np.asarray(bin_centers) * 1e6, counts,
           width=(bin_centers[1] - bin_centers[0]) * 1e6 if len(bin_centers) > 1 else 0.1,
           color="steelblue", edgecolor="none")
    ax.set_xlabel("delay t_B - t_A (us)")
    ax.set_ylabel("pair counts")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def render_witness(path, curve_ps, curve_pc_qng, curve_pc_classical,
                   measured=None):
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    ok = (curve_pc_qng > 0) & (curve_ps > 0)
    ax.plot(curve_pc_classical[ok], curve_ps[ok], "r-", label="classical bound")
    ax.plot(curve_pc_qng[ok], curve_ps[ok], "b-", label="QNG threshold")
    if measured is not None:
        pc, ps, pc_ci, ps_ci = measured
        pc_plot = max(pc, 1e-12)
        xerr = [[max(pc_plot - max(pc_ci[0], 1e-12), 0.0)], [max(pc_ci[1] - pc, 0.0)]]
        yerr = [[max(ps - ps_ci[0], 0.0)], [max(ps_ci[1] - ps, 0.0)]]
        ax.errorbar([pc_plot], [ps], xerr=xerr, yerr=yerr, fmt="ko", capsize=3,
                    label="measured")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("coincidence probability Pc")
    ax.set_ylabel("single probability Ps")
    ax.grid(alpha=0.3, which="both")
    ax.legend()
    return _save(fig, path)
