"""Post-processing: scaling collapses, critical fits, light-cone extraction.

Collapse quality is measured as the pairwise L2 distance between linearly
interpolated rescaled curves on their overlapping domain, normalized by
the number of curves; the same metric backs the gap and correlation
collapses and their best-fit modes.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize


class CollapseError(ValueError):
    pass


class NoFrontError(ValueError):
    pass


@dataclass(frozen=True)
class CriticalConstants:
    """Critical-point constants of the 2D transverse-field Ising model."""

    gc_inf: float = 3.04438
    nu: float = 0.629971
    z: float = 1.0
    eta_anom: float = 0.036298
    a_shift: float = -2.88

    @property
    def two_delta(self):
        return 1.0 + self.eta_anom


CRITICAL = CriticalConstants()


def pseudo_critical_field(ly, constants=CRITICAL):
    """Finite-circumference critical field gc(Ly) = gc_inf + a Ly^(-1/nu)."""
    if ly < 1:
        raise ValueError("Ly must be at least 1")
    if ly < 2:
        warnings.warn("gc(Ly) is calibrated for Ly >= 2; extrapolating")
    return constants.gc_inf + constants.a_shift * float(ly) ** (-1.0 / constants.nu)


def collapse_residual(curves):
    """Mean squared pairwise distance between interpolated curves.

    curves: list of (x, y) arrays already rescaled.  Pairs without any
    x-overlap contribute nothing; if no pair overlaps the residual is
    undefined and NaN is returned.
    """
    if len(curves) < 2:
        raise CollapseError("need at least two curves to measure a collapse")
    clean = []
    for x, y in curves:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        order = np.argsort(x)
        clean.append((x[order], y[order]))
    total = 0.0
    pairs = 0
    for i in range(len(clean)):
        for j in range(i + 1, len(clean)):
            xi, yi = clean[i]
            xj, yj = clean[j]
            lo = max(xi[0], xj[0])
            hi = min(xi[-1], xj[-1])
            if hi <= lo:
                continue
            grid = np.unique(np.concatenate([xi[(xi >= lo) & (xi <= hi)],
                                             xj[(xj >= lo) & (xj <= hi)]]))
            if grid.size < 2:
                continue
            di = np.interp(grid, xi, yi)
            dj = np.interp(grid, xj, yj)
            total += float(np.mean((di - dj) ** 2))
            pairs += 1
    if pairs == 0:
        return float("nan")
    return total / len(clean)


@dataclass
class CollapseResult:
    residual: float
    curves: list
    gc: float = None
    nu: float = None
    two_delta: float = None
    fitted: bool = False


def gap_collapse(dataset, gc, nu, z=1.0, fit=False):
    """Rescale gap curves to (g - gc) Ly^(1/nu) vs gap Ly^z and score them.

    dataset: iterable of (Ly, g array, gap array).  With fit=True the
    residual is minimized over (gc, nu) starting from the given values.
    """
    dataset = [(int(ly), np.asarray(g, float), np.asarray(gap, float))
               for ly, g, gap in dataset]
    if len({ly for ly, _, _ in dataset}) < 2:
        raise CollapseError("gap collapse needs at least two distinct Ly")
    for _, g, gap in dataset:
        if np.any(gap <= 0):
            raise CollapseError("gaps must be positive")

    def rescaled(gc_, nu_):
        return [((g - gc_) * ly ** (1.0 / nu_), gap * ly**z)
                for ly, g, gap in dataset]

    if fit:
        def cost(p):
            gc_, nu_ = p
            if not 0.1 < nu_ < 5.0:
                return 1e6
            r = collapse_residual(rescaled(gc_, nu_))
            return r if np.isfinite(r) else 1e6

        res = optimize.minimize(cost, x0=[gc, nu], method="Nelder-Mead",
                                options={"xatol": 1e-7, "fatol": 1e-14,
                                         "maxiter": 4000})
        gc, nu = float(res.x[0]), float(res.x[1])
    curves = rescaled(gc, nu)
    return CollapseResult(collapse_residual(curves), curves, gc=gc, nu=nu,
                          fitted=fit)


def correlation_collapse(dataset, two_delta):
    """Rescale correlation rows to Ly^(2 Delta) C vs r / Ly and score them."""
    dataset = [(int(ly), np.asarray(r, float), np.asarray(c, float))
               for ly, r, c in dataset]
    if len({ly for ly, _, _ in dataset}) < 2:
        raise CollapseError("correlation collapse needs at least two distinct Ly")
    curves = [(r / ly, ly**two_delta * c) for ly, r, c in dataset]
    return CollapseResult(collapse_residual(curves), curves, two_delta=two_delta)


@dataclass
class FrontFit:
    velocity: float
    uncertainty: float
    intercept: float
    times: np.ndarray
    positions: np.ndarray
    threshold: float


def _front_positions(times, x_bonds, entropy, threshold):
    base = entropy[0]
    ds = entropy - base[None, :]
    xs = np.abs(np.asarray(x_bonds, float))
    x_edge = xs.max()
    ts, pos = [], []
    for k in range(1, len(times)):
        hit = ds[k] > threshold
        if not np.any(hit):
            continue
        front = xs[hit].max()
        if front >= x_edge:  # reached the boundary; reflections spoil the fit
            continue
        ts.append(times[k])
        pos.append(front)
    return np.array(ts), np.array(pos)


def _linear_fit(t, x):
    a = np.vstack([t, np.ones_like(t)]).T
    coef, res, *_ = np.linalg.lstsq(a, x, rcond=None)
    dof = max(len(t) - 2, 1)
    sigma2 = (res[0] / dof) if res.size else 0.0
    cov = sigma2 * np.linalg.inv(a.T @ a)
    return coef[0], coef[1], float(np.sqrt(max(cov[0, 0], 0.0)))


def velocity_from_front(times, x_bonds, entropy, threshold):
    """Fit the light-cone front speed from an entropy map S(t, x_bond).

    The front at each time is the outermost bond whose entropy exceeds the
    t=0 baseline by `threshold`; a linear fit of front position against
    time gives the speed.  The quoted uncertainty combines the fit
    standard error with the spread under +-20% threshold variation.
    """
    times = np.asarray(times, float)
    entropy = np.asarray(entropy, float)
    if entropy.shape != (times.size, len(x_bonds)):
        raise ValueError("entropy map shape must be (n_times, n_bonds)")
    ts, pos = _front_positions(times, x_bonds, entropy, threshold)
    if ts.size < 2:
        raise NoFrontError("no usable front crossings above the threshold")
    c, b, sigma = _linear_fit(ts, pos)
    spread = 0.0
    for factor in (0.8, 1.2):
        try:
            ts2, pos2 = _front_positions(times, x_bonds, entropy, factor * threshold)
            if ts2.size >= 2:
                c2, _, _ = _linear_fit(ts2, pos2)
                spread = max(spread, abs(c2 - c))
        except NoFrontError:
            continue
    return FrontFit(float(c), float(np.hypot(sigma, spread)), float(b),
                    ts, pos, threshold)


@dataclass
class PowerLawFit:
    offset: float          # Q'
    amplitude: float       # b'
    exponent: float        # p in offset + amplitude * Ly^(-p)
    offset_err: float
    amplitude_err: float
    exponent_err: float
    degenerate: bool
    fixed_exponent: bool


def energy_density_scaling_fit(ly, eps0, fixed_exponent=None, n_bootstrap=200,
                               rng=None):
    """Fit eps0(Ly) = Q' + b' Ly^(-p) by damped least squares.

    With fixed_exponent the problem is linear in (Q', b'); otherwise p is
    fitted too and bootstrap resampling (200 draws) supplies parameter
    uncertainties.  Degenerate data (no resolvable Ly dependence) is
    flagged rather than fitted.
    """
    ly = np.asarray(ly, float)
    eps0 = np.asarray(eps0, float)
    if ly.size < 4:
        raise ValueError("need at least four Ly points")
    rng = rng or np.random.default_rng(1234)

    span = eps0.max() - eps0.min()
    scale = max(abs(eps0).max(), 1.0)
    if span < 1e-12 * scale:
        return PowerLawFit(float(eps0.mean()), 0.0, float("nan"),
                           0.0, 0.0, float("nan"), True, fixed_exponent is not None)

    def solve(lys, es):
        if fixed_exponent is not None:
            basis = np.vstack([np.ones_like(lys), lys ** (-fixed_exponent)]).T
            (q, b), *_ = np.linalg.lstsq(basis, es, rcond=None)
            return q, b, fixed_exponent

        def residuals(p):
            q, b, ex = p
            return q + b * lys ** (-ex) - es

        def jac(p):
            q, b, ex = p
            col_q = np.ones_like(lys)
            col_b = lys ** (-ex)
            col_e = -b * np.log(lys) * lys ** (-ex)
            return np.vstack([col_q, col_b, col_e]).T

        q0 = es[np.argmax(lys)]
        ex0 = 1.4
        b0 = (es[np.argmin(lys)] - q0) * lys.min() ** ex0
        sol = optimize.least_squares(residuals, x0=[q0, b0, ex0], jac=jac,
                                     method="lm", xtol=1e-14, ftol=1e-14)
        return tuple(sol.x)

    q, b, p = solve(ly, eps0)
    draws = []
    for _ in range(n_bootstrap):
        idx = rng.integers(0, ly.size, ly.size)
        if len(np.unique(ly[idx])) < 3:
            continue
        try:
            draws.append(solve(ly[idx], eps0[idx]))
        except Exception:
            continue
    if draws:
        arr = np.array(draws)
        errs = arr.std(axis=0)
    else:
        errs = np.array([np.nan] * 3)
    degenerate = abs(b) < 1e-10 * scale
    return PowerLawFit(float(q), float(b), float(p), float(errs[0]),
                       float(errs[1]), float(errs[2]), bool(degenerate),
                       fixed_exponent is not None)


@dataclass
class EntropyFit:
    linear: float      # a in a Ly + b ln Ly + c
    log: float         # b
    constant: float    # c
    residual: float
    condition: float
    collinear: bool


def entropy_area_law_fit(ly, svn):
    """Least-squares fit S(Ly) = a Ly + b ln Ly + c."""
    ly = np.asarray(ly, float)
    svn = np.asarray(svn, float)
    if ly.size < 3:
        raise ValueError("need at least three Ly points")
    basis = np.vstack([ly, np.log(ly), np.ones_like(ly)]).T
    coef, res, rank, sing = np.linalg.lstsq(basis, svn, rcond=None)
    cond = float(sing.max() / max(sing.min(), 1e-300))
    collinear = cond > 1e8 or rank < 3
    if collinear:
        warnings.warn("entropy fit basis is nearly collinear over this Ly span")
    residual = float(res[0]) if res.size else float(
        np.sum((basis @ coef - svn) ** 2))
    return EntropyFit(float(coef[0]), float(coef[1]), float(coef[2]),
                      residual, cond, bool(collinear))


def speed_vs_size_fit(gc_values, c_values):
    """Linear fit c(Ly) = a gc(Ly) + c_inf; returns (a, c_inf, a_err, c_err)."""
    gc_values = np.asarray(gc_values, float)
    c_values = np.asarray(c_values, float)
    a = np.vstack([gc_values, np.ones_like(gc_values)]).T
    coef, res, *_ = np.linalg.lstsq(a, c_values, rcond=None)
    dof = max(len(c_values) - 2, 1)
    sigma2 = (res[0] / dof) if res.size else 0.0
    cov = sigma2 * np.linalg.inv(a.T @ a)
    return (float(coef[0]), float(coef[1]),
            float(np.sqrt(max(cov[0, 0], 0.0))), float(np.sqrt(max(cov[1, 1], 0.0))))
