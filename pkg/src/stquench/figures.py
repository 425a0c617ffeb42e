"""Figure rendering for the CLI reports.

Every report command writes PNG figures next to its CSV output.  The CSV
files remain the machine-readable contract; figures are for eyeballs.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_energy_series(rows, path):
    """rows: (t, E, E0, eps)."""
    arr = np.array(rows)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
    axes[0].plot(arr[:, 0], arr[:, 1], "-", lw=1.2, label="$\\langle H(t)\\rangle$")
    good = np.isfinite(arr[:, 2])
    if np.any(good):
        axes[0].plot(arr[good, 0], arr[good, 2], "o--", ms=3, lw=0.8,
                     label="$E_0(t)$")
    axes[0].set_xlabel("$t\\,[1/J]$")
    axes[0].set_ylabel("energy $[J]$")
    axes[0].legend(fontsize=8)
    good = np.isfinite(arr[:, 3])
    if np.any(good):
        axes[1].plot(arr[good, 0], arr[good, 3], "s-", ms=3, lw=1.0, color="crimson")
    axes[1].set_xlabel("$t\\,[1/J]$")
    axes[1].set_ylabel("excitation density $\\epsilon(t)$")
    return _save(fig, path)


def plot_local_energy(rows, path, t_select=None):
    """rows: (t, x, y, eps_xy); renders the profile at the latest time."""
    arr = np.array(rows)
    t_last = t_select if t_select is not None else arr[:, 0].max()
    sel = arr[np.isclose(arr[:, 0], t_last)]
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    xs = np.unique(sel[:, 1])
    prof = [sel[np.isclose(sel[:, 1], x), 3].mean() for x in xs]
    ax.plot(xs, prof, "o-", ms=4)
    ax.set_xlabel("$x$ [lattice]")
    ax.set_ylabel("$\\epsilon(x)\\,[J]$")
    ax.set_title(f"local excitation energy at t = {t_last:.3g}")
    return _save(fig, path)


def plot_entropy_map(times, bonds, mat, path, fit=None):
    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    pad = 0.5 if bonds.min() == bonds.max() else 0.0
    extent = [bonds.min() - pad, bonds.max() + pad, times.min(), times.max()]
    im = ax.imshow(mat - mat[0][None, :], origin="lower", aspect="auto",
                   extent=extent, cmap="magma")
    fig.colorbar(im, ax=ax, label="$\\Delta S_{vN}$")
    if fit is not None:
        ts = np.linspace(times.min(), times.max(), 50)
        for sign in (+1, -1):
            ax.plot(sign * (fit.velocity * ts + fit.intercept), ts, "w--", lw=1)
        ax.set_title(f"c = {fit.velocity:.3f} ± {fit.uncertainty:.3f}")
    ax.set_xlim(extent[0], extent[1])
    ax.set_xlabel("bond position $x$")
    ax.set_ylabel("$t\\,[1/J]$")
    return _save(fig, path)


def plot_correlations(rows, path):
    arr = np.array(rows)
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.semilogy(arr[:, 1], np.abs(arr[:, 2]), "o-", ms=4)
    ax.set_xlabel("separation $r$")
    ax.set_ylabel("$|C_x(r)|$")
    return _save(fig, path)


def plot_collapse(curves, path, xlabel="rescaled x", ylabel="rescaled y",
                  labels=None, residual=None, logy=False):
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for k, (x, y) in enumerate(curves):
        lbl = labels[k] if labels else None
        if logy:
            ax.semilogy(x, y, "o-", ms=3, lw=0.9, label=lbl)
        else:
            ax.plot(x, y, "o-", ms=3, lw=0.9, label=lbl)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if labels:
        ax.legend(fontsize=8)
    if residual is not None:
        ax.set_title(f"collapse residual = {residual:.3e}")
    return _save(fig, path)


def plot_gap_curve(rows, path):
    """rows: (Ly, g, E0, E1, gap, degenerate)."""
    arr = np.array(rows)
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for ly in np.unique(arr[:, 0]):
        sel = arr[arr[:, 0] == ly]
        order = np.argsort(sel[:, 1])
        ax.plot(sel[order, 1], sel[order, 4], "o-", ms=4, label=f"Ly={int(ly)}")
    ax.set_xlabel("$g$")
    ax.set_ylabel("gap $[J]$")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_velocity_curve(vs, curves, path, labels=None, diamonds=None):
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for k, eps in enumerate(curves):
        finite = np.isfinite(vs)
        ax.semilogy(np.asarray(vs)[finite], np.asarray(eps)[finite], "o-",
                    ms=4, label=labels[k] if labels else None)
        if diamonds is not None and np.any(~finite):
            ax.axhline(np.asarray(eps)[~finite][0], ls=":", lw=0.8)
    if diamonds is not None:
        for y in np.atleast_1d(diamonds):
            ax.plot([], [])
    ax.set_xlabel("front velocity $v$")
    ax.set_ylabel("$\\bar\\epsilon\\,[J]$")
    if labels:
        ax.legend(fontsize=8)
    return _save(fig, path)


def plot_theory_profile(x, profiles, path, labels=None, bands=None):
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    for k, prof in enumerate(profiles):
        ax.plot(x, prof, lw=1.2, label=labels[k] if labels else None)
    if bands:
        for lo, hi in bands:
            ax.axvspan(lo, hi, alpha=0.12, color="red")
            ax.axvspan(-hi, -lo, alpha=0.12, color="red")
    ax.set_xlabel("$x$ [lattice]")
    ax.set_ylabel("$\\epsilon_{th}(x)$")
    if labels:
        ax.legend(fontsize=8)
    return _save(fig, path)


def plot_dmrg_convergence(stats, path):
    """stats: list of dicts with sweep, energy, max_trunc_err, max_chi."""
    fig, axes = plt.subplots(1, 2, figsize=(8.6, 3.2))
    sweeps = [s["sweep"] for s in stats]
    energies = np.array([s["energy"] for s in stats])
    axes[0].plot(sweeps, energies, "o-")
    axes[0].set_xlabel("sweep")
    axes[0].set_ylabel("energy $[J]$")
    final = energies[-1]
    err = np.abs(energies - final)
    err[err == 0] = np.nan
    axes[1].semilogy(sweeps, err, "o-")
    axes[1].set_xlabel("sweep")
    axes[1].set_ylabel("|E - E_final|")
    return _save(fig, path)
