"""Figure rendering for the report path.

Each result table gets one PNG next to its CSV.  Rendering dispatches
on the table name; anything unrecognized falls back to a line plot of
the first two columns.  The Agg backend keeps this headless.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_tables"]

_DPI = 130


def _plot_histogram(table, ax_c, ax_s):
    x = np.asarray(table.columns["bin_center"]) * 1e3
    ax_c.step(x, table.columns["coincidences"], where="mid", lw=1.0, color="C3")
    ax_c.set_ylabel("coincidences")
    ax_c.set_ylim(bottom=0)
    ax_s.step(x, table.columns["singles_d1"], where="mid", lw=1.0, label="D1")
    ax_s.step(x, table.columns["singles_d2"], where="mid", lw=1.0, label="D2")
    ax_s.set_ylabel("singles")
    ax_s.set_xlabel("scan position (mm)")
    ax_s.set_ylim(bottom=0)
    ax_s.legend(loc="best", fontsize=8)


def _render_histogram(table, path):
    fig, (ax_c, ax_s) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 5.0))
    _plot_histogram(table, ax_c, ax_s)
    exp = table.metadata.get("experiment", "coincidence scan")
    ax_c.set_title(str(exp))
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def _render_pattern(table, path):
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(np.asarray(table.columns["x2"]) * 1e3, table.columns["intensity"], lw=1.0)
    ax.set_xlabel("x2 (mm)")
    ax.set_ylabel("relative intensity")
    ax.set_ylim(bottom=0)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def _render_twm(table, path):
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    g_abs = np.asarray(table.columns["g_abs"])
    dk = np.asarray(table.columns["delta_k"])
    af = np.asarray(table.columns["af_abs"])
    for g in np.unique(g_abs):
        sel = g_abs == g
        order = np.argsort(dk[sel])
        ax.plot(dk[sel][order], af[sel][order], lw=1.0, label=f"|g| = {g:.3g}")
    ax.set_xlabel("phase mismatch")
    ax.set_ylabel("|amplification factor|")
    if np.unique(g_abs).size <= 8:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def _render_mirror(table, path):
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    z_s = np.asarray(table.columns["z_s"])
    z_i = np.asarray(table.columns["z_i"])
    virtual = np.asarray(table.columns["virtual"], dtype=bool)
    ax.plot(z_s[~virtual], z_i[~virtual], ".", ms=3, label="real image")
    if virtual.any():
        ax.plot(z_s[virtual], z_i[virtual], ".", ms=3, label="virtual image")
    ax.axhline(0.0, color="0.7", lw=0.8)
    ax.set_xlabel("object distance")
    ax.set_ylabel("conjugate distance")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def _render_focus(table, path):
    cols = table.columns
    if "s_prime" in cols:
        x, y = np.asarray(cols["s_prime"]), np.asarray(cols["sharpness"])
        labels = ("image-side distance", "coincidence sharpness")
        mark = table.metadata.get("s_prime_solution")
    else:
        x, y = np.asarray(cols["z_i"]), np.asarray(cols["spot_rms"])
        labels = ("candidate image distance", "spot rms")
        mark = table.metadata.get("z_i_solution")
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(x, y, "o-", ms=4, lw=1.0)
    if mark is not None:
        ax.axvline(float(mark), color="C3", lw=0.8, ls="--", label="expected")
        ax.legend(fontsize=8)
    ax.set_xlabel(labels[0])
    ax.set_ylabel(labels[1])
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def _render_generic(table, path):
    names = list(table.columns)
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    if len(names) >= 2:
        ax.plot(table.columns[names[0]], table.columns[names[1]], lw=1.0)
        ax.set_xlabel(names[0])
        ax.set_ylabel(names[1])
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def _render_phasematch(table, path):
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    omega_s = np.asarray(table.columns["omega_s"])
    ax.plot(omega_s, np.degrees(np.asarray(table.columns["theta_ps"])), ".", ms=3, label="signal")
    ax.plot(omega_s, np.degrees(np.asarray(table.columns["theta_pi"])), ".", ms=3, label="idler")
    ax.set_xlabel("signal frequency")
    ax.set_ylabel("cone angle (deg)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def _renderer(name: str):
    if name == "histogram":
        return _render_histogram
    if name in ("pattern", "image_histogram"):
        return _render_pattern if name == "pattern" else _render_image_hist
    if name == "twm_sweep":
        return _render_twm
    if name == "mirror_sweep":
        return _render_mirror
    if name == "focus_scan":
        return _render_focus
    if name == "phasematch":
        return _render_phasematch
    return _render_generic


def _render_image_hist(table, path):
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    x = np.asarray(table.columns["bin_center"]) * 1e3
    ax.step(x, table.columns["counts"], where="mid", lw=1.0)
    ax.set_xlabel("image-plane position (mm)")
    ax.set_ylabel("rays")
    ax.set_ylim(bottom=0)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_tables(tables, out_dir: str) -> list:
    """Render one PNG per table into out_dir; returns the file names."""
    written = []
    for table in tables:
        name = f"{table.name}.png"
        _renderer(table.name)(table, os.path.join(out_dir, name))
        written.append(name)
    return written
