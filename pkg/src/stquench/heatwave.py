"""Analytic free-boson model of Doppler-cooled quench fronts.

A front moving at v > c excites linearly dispersing modes whose effective
temperature is rescaled by the relativistic Doppler factor
eta(theta) = gamma (1 - beta cos theta), beta = c / v, with theta the
emission angle relative to the front velocity.  Modes co-propagating with
the front are blue shifted (hot), counter-propagating and transverse
modes are red shifted (cold).  Integrating the populated modes up to the
infrared cutoff m / eta (or the smoothing cutoff 1/tau, whichever is
lower) gives the angular energy density; sweeping emission events along
the front trajectories and propagating each angular parcel at speed c
reconstructs the spatial energy profile at the end of the quench.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate


@dataclass
class HeatwaveParams:
    """Model inputs: emergent speed of light c, front velocity v > c,
    initial gap mass m, front smoothing time tau, linear system scale
    length (sets the 1/L^2 mode-density normalization)."""

    c: float
    v: float
    m: float
    tau: float = 0.0
    length: float = 1.0

    def __post_init__(self):
        if self.c <= 0 or self.m <= 0 or self.length <= 0:
            raise ValueError("c, m and length must be positive")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")

    @property
    def beta(self):
        return self.c / self.v

    @property
    def gamma(self):
        b = self.beta
        return 1.0 / np.sqrt(1.0 - b * b)

    def require_superluminal(self):
        if not self.v > self.c:
            raise ValueError("the analytic model needs a superluminal front (v > c)")


def doppler_factor(theta, beta):
    """eta(theta) = gamma (1 - beta cos theta) for beta in [0, 1)."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < -1e-12) or np.any(theta > np.pi + 1e-12):
        raise ValueError("theta must lie in [0, pi]")
    if not 0 <= beta < 1:
        raise ValueError("beta must lie in [0, 1); subluminal fronts are outside "
                         "the analytic model")
    gamma = 1.0 / np.sqrt(1.0 - beta * beta)
    out = gamma * (1.0 - beta * np.cos(theta))
    return out if out.ndim else float(out)


def mode_population(k, theta, params):
    """Occupation of the mode with momentum k emitted at angle theta.

    Infrared branch m / (4 eta w) below the crossover eta w = m; above it
    an exponential tail, rescaled to be continuous at the crossover.
    """
    params.require_superluminal()
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise ValueError("k must be positive")
    eta = doppler_factor(theta, params.beta)
    x = eta * params.c * k / params.m  # eta w / m
    out = np.where(x <= 1.0, 1.0 / (4.0 * np.maximum(x, 1e-300)),
                   0.25 * np.exp(-2.0 * np.clip(x - 1.0, 0.0, 700.0)))
    return out if out.ndim else float(out)


def cutoff_frequency(theta, params):
    """min(m / eta, 1/tau): infrared Doppler cutoff or smoothing cutoff."""
    eta = doppler_factor(theta, params.beta)
    w_ir = params.m / eta
    if params.tau > 0:
        return np.minimum(w_ir, 1.0 / params.tau)
    return w_ir


def angular_energy_density(theta, params):
    """Energy radiated per angle: integral of w N(k) k dk up to the cutoff.

    Closed form of the infrared branch: m w*^2 / (8 c^2 eta L^2) with
    w* = min(m/eta, 1/tau); for w* = m/eta this is m^3/(8 c^2 eta^3 L^2).
    """
    params.require_superluminal()
    eta = doppler_factor(theta, params.beta)
    w_star = cutoff_frequency(theta, params)
    return params.m * w_star**2 / (8.0 * params.c**2 * eta * params.length**2)


def isotropic_energy_density(params):
    """v -> infinity limit: eta = 1 for every angle."""
    w_star = params.m if params.tau == 0 else min(params.m, 1.0 / params.tau)
    return params.m * w_star**2 / (8.0 * params.c**2 * params.length**2)


def angular_average(params):
    """(1/pi) integral of eps(theta) over [0, pi]."""
    params.require_superluminal()
    val, _ = integrate.quad(lambda th: angular_energy_density(th, params),
                            0.0, np.pi, limit=200, epsabs=1e-13, epsrel=1e-12)
    return val / np.pi


def spatial_energy_profile(x_grid, tq, params, n_events=2000, n_angles=4096,
                           plateau_reference=None):
    """Energy density profile at time tq from front emission bookkeeping.

    Two fronts start at x = 0 at t = 0 and move at +-v; emission events
    are spread uniformly over the swept length (weight v dt per event and
    front).  Each event radiates parcels eps(theta) dphi / (2 pi) on a
    circle of radius c (tq - t_e); parcels are binned in x on the strip.
    Returns (bin centers, profile).  If plateau_reference is given the
    profile is rescaled so the hot-plateau mean matches it.
    """
    params.require_superluminal()
    if tq <= 0:
        raise ValueError("tq must be positive")
    x_grid = np.asarray(x_grid, dtype=float)
    if x_grid.ndim != 1 or x_grid.size < 2:
        raise ValueError("x_grid must be a 1D array of bin edges")
    v, c = params.v, params.c

    phi = (np.arange(n_angles) + 0.5) * (2.0 * np.pi / n_angles)
    dphi = 2.0 * np.pi / n_angles
    cos_phi = np.cos(phi)
    t_events = (np.arange(n_events) + 0.5) * (tq / n_events)
    w_event = v * (tq / n_events)

    hist = np.zeros(x_grid.size - 1)
    for s in (+1.0, -1.0):
        theta_rel = np.arccos(np.clip(s * cos_phi, -1.0, 1.0))
        eps_parcel = angular_energy_density(theta_rel, params) * dphi / (2.0 * np.pi)
        for te in t_events:
            r = c * (tq - te)
            x_land = s * v * te + r * cos_phi
            hist += np.histogram(x_land, bins=x_grid, weights=w_event * eps_parcel)[0]
    widths = np.diff(x_grid)
    profile = hist / widths
    centers = 0.5 * (x_grid[1:] + x_grid[:-1])

    if plateau_reference is not None:
        plateau = hot_plateau_value(centers, profile, tq, params)
        if plateau <= 0:
            raise ValueError("empty hot plateau; cannot normalize")
        profile = profile * (plateau_reference / plateau)
    return centers, profile


def hot_plateau_value(x, profile, tq, params):
    """Mean profile value over the interior of the hot band c tq < |x| < v tq."""
    lo = params.c * tq
    hi = params.v * tq
    margin = 0.15 * (hi - lo)
    mask = (np.abs(x) > lo + margin) & (np.abs(x) < hi - margin)
    if not np.any(mask):
        mask = (np.abs(x) > lo) & (np.abs(x) < hi)
    if not np.any(mask):
        return 0.0
    return float(np.mean(profile[mask]))


def emitted_energy(tq, params):
    """Total energy radiated by both fronts up to tq (bookkeeping units)."""
    return 2.0 * params.v * tq * angular_average(params)


def total_energy_vs_velocity(velocities, params, system_length, region=None,
                             n_grid=800, n_events=1500, n_angles=2048):
    """Average post-quench energy density against front velocity.

    For each v the profile at tq = system_length / (2 v) is averaged over
    the full system (region=None) or over x in [region[0], region[1]].
    v = inf is the uniform quench: the isotropic angular integral.
    Returns an array matching `velocities`.
    """
    out = []
    half = system_length / 2.0
    lo, hi = (-half, half) if region is None else region
    for v in np.asarray(velocities, dtype=float):
        if np.isinf(v):
            out.append(isotropic_energy_density(params))
            continue
        pv = HeatwaveParams(params.c, float(v), params.m, params.tau, params.length)
        pv.require_superluminal()
        tq = half / v
        edges = np.linspace(-half, half, n_grid + 1)
        x, prof = spatial_energy_profile(edges, tq, pv, n_events=n_events,
                                         n_angles=n_angles)
        mask = (x >= lo) & (x <= hi)
        out.append(float(np.mean(prof[mask])))
    return np.array(out)
