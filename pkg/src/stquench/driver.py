"""Experiment drivers: gapped-state preparation, spatiotemporal quenches,
uniform-quench baselines, the light-cone speed experiment, and the exact
dense twin of a quench used for oracle comparisons.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .lattice import (CylinderLattice, ModelParams, TfiMpoTemplate, field_grid,
                      uniform_field_grid, static_field_grid,
                      local_energy_operators, evaluate_local_energies)
from .mpo import Term
from .mps import Mps
from .dmrg import DmrgSettings, ground_state, InstantaneousGroundStates
from .tdvp import TdvpSettings, evolve
from .analysis import velocity_from_front, NoFrontError
from . import oracle as ed

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SZ = np.array([[1.0, 0.0], [0.0, -1.0]])


@dataclass
class MeasurementPlan:
    scalars_every: int = 1        # energy + entropy cadence (steps)
    grid_every: int = 10          # local energy + instantaneous E0 cadence
    correlations_at_end: bool = True
    y_average_correlations: bool = False


@dataclass
class QuenchProtocol:
    """Everything needed to run one quench experiment."""

    lattice: CylinderLattice
    params: ModelParams
    dt: float = 0.05
    order: int = 2
    t_end: float = None           # defaults to tq (uniform runs: 4 tau)
    uniform: bool = False
    measure: MeasurementPlan = field(default_factory=MeasurementPlan)

    @property
    def tq(self):
        """Time at which the front reaches the outermost site."""
        return float(np.max(np.abs(self.lattice.x_coords)) / self.params.v)

    @property
    def t0(self):
        return self.params.t0

    def resolved_t_end(self):
        if self.t_end is not None:
            if not self.uniform and self.t_end < self.tq - 1e-12:
                warnings.warn("t_end is before the front reaches the edge")
            return float(self.t_end)
        if self.uniform:
            return max(4.0 * self.params.tau, 2.0 * self.dt)
        return self.tq


class ObservableSeries:
    """Time-stamped records of every observable a run produces."""

    def __init__(self):
        self.energy = []        # (t, E, E0, eps)  E0/eps NaN off the grid cadence
        self.local_energy = []  # (t, x, y, eps_xy)
        self.correlations = []  # (t, r, cx)
        self.entropy = []       # (t, xbond, svn)
        self.truncation = []    # (t, max_discard, max_chi)

    def energy_array(self):
        return np.array(self.energy) if self.energy else np.zeros((0, 4))

    def final_local_energy_grid(self):
        if not self.local_energy:
            return {}
        t_last = max(r[0] for r in self.local_energy)
        return {(r[1], r[2]): r[3] for r in self.local_energy
                if r[0] == t_last}

    def entropy_map(self):
        """(times, bond positions, matrix S[t, bond])."""
        if not self.entropy:
            return np.zeros(0), np.zeros(0), np.zeros((0, 0))
        times = sorted({r[0] for r in self.entropy})
        bonds = sorted({r[1] for r in self.entropy})
        tidx = {t: i for i, t in enumerate(times)}
        bidx = {b: j for j, b in enumerate(bonds)}
        mat = np.full((len(times), len(bonds)), np.nan)
        for t, b, s in self.entropy:
            mat[tidx[t], bidx[b]] = s
        return np.array(times), np.array(bonds), mat


def correlation_row_sites(lattice, y_row=0):
    """Center site and the sites at distance r along +x in the same row."""
    origin_col = lattice.lx // 2
    origin = lattice.site(origin_col, y_row)
    targets = [(r, lattice.site(origin_col + r, y_row))
               for r in range(1, lattice.lx - origin_col)]
    return origin, targets


def measure_correlation_row(psi, lattice, y_average=False):
    """C_x(r) = <sx_0 sx_r> along a y-row through the center column."""
    rows = range(lattice.ly) if y_average else [0]
    acc = {}
    for y in rows:
        origin, targets = correlation_row_sites(lattice, y)
        got = psi.string_correlations(SX, origin, SX, [s for _, s in targets])
        for r, s in targets:
            acc.setdefault(r, []).append(got[s].real)
    return {r: float(np.mean(v)) for r, v in acc.items()}


def prepare_initial_state(protocol, dmrg_settings=None, rng=None):
    """DMRG ground state of the gapped Hamiltonian at t0 = -2 tau."""
    dmrg_settings = dmrg_settings or DmrgSettings()
    lattice, params = protocol.lattice, protocol.params
    template = TfiMpoTemplate(lattice, params.J)
    mpo0 = template.at_time(params, protocol.t0, uniform=protocol.uniform)
    psi, e0, info = ground_state(mpo0, dmrg_settings, rng=rng)
    return psi, e0, info, template


def run_quench(protocol, dmrg_settings=None, tdvp_settings=None, rng=None,
               ground_cache=None, initial_state=None, checkpoint=None,
               checkpoint_cb=None, checkpoint_every=0):
    """Evolve the gapped ground state through the quench, measuring as we go.

    Returns (series, final state, info).  ground_cache may be shared with
    an oracle run so both use identical instantaneous ground energies.
    """
    dmrg_settings = dmrg_settings or DmrgSettings()
    tdvp_settings = tdvp_settings or TdvpSettings(dt=protocol.dt,
                                                  order=protocol.order)
    lattice, params = protocol.lattice, protocol.params
    plan = protocol.measure
    t_end = protocol.resolved_t_end()
    n_sites = lattice.n_sites

    if initial_state is not None:
        psi, template = initial_state, TfiMpoTemplate(lattice, params.J)
        prep_info = {"resumed": True}
    else:
        psi, e_prep, prep_info, template = prepare_initial_state(
            protocol, dmrg_settings, rng)
    psi = psi.astype(np.complex128)

    if ground_cache is None:
        ground_cache = InstantaneousGroundStates(lattice, params, dmrg_settings,
                                                 uniform=protocol.uniform, rng=rng)
    series = ObservableSeries()
    n_steps = max(0, int(round((t_end - protocol.t0) / protocol.dt)))
    cuts = lattice.column_cuts()
    cut_positions = [lattice.bond_x_position(i) for i in range(lattice.lx - 1)]

    def fields_at(t):
        if protocol.uniform:
            return uniform_field_grid(lattice, params, t)
        return field_grid(lattice, params, t)

    def mpo_at(t):
        return template.with_fields(fields_at(t))

    def measure(psi_t, t, step):
        is_final = step >= n_steps
        if step % plan.scalars_every and not is_final:
            return
        energy = float(np.real(psi_t.expectation(mpo_at(t))))
        on_grid = (step % plan.grid_every == 0) or is_final
        e0 = eps = float("nan")
        if on_grid:
            e0, eps0_grid, _ = ground_cache.at(t)
            ops = local_energy_operators(lattice, fields_at(t), params.J)
            grid = evaluate_local_energies(psi_t, ops)
            for (i, j), val in grid.items():
                series.local_energy.append(
                    (t, lattice.bond_x_position(i), j, val - eps0_grid[(i, j)]))
            eps = (energy - e0) / n_sites
        series.energy.append((t, energy, e0, eps))
        for i, cut in enumerate(cuts):
            series.entropy.append((t, cut_positions[i],
                                   psi_t.entanglement_entropy(cut)))
        series.truncation.append((t, psi_t.discarded_max, psi_t.max_bond_dim))
        if is_final and plan.correlations_at_end:
            row = measure_correlation_row(psi_t, lattice,
                                          plan.y_average_correlations)
            for r, c in sorted(row.items()):
                series.correlations.append((t, r, c))

    start_step = 0 if checkpoint is None else int(checkpoint.get("step", 0))
    observers = [measure]
    if checkpoint_cb is not None and checkpoint_every > 0:
        def checkpointer(psi_t, t, step):
            if step > start_step and step % checkpoint_every == 0:
                checkpoint_cb(psi_t, t, step)
        observers.append(checkpointer)
    log = evolve(psi, mpo_at, protocol.t0, t_end, tdvp_settings,
                 observers=observers, start_step=start_step)
    info = {"prep": prep_info, "evolution": log, "t_end": t_end,
            "tq": protocol.tq, "n_steps": n_steps}
    return series, psi, info


def uniform_quench_baseline(protocol, dmrg_settings=None, tdvp_settings=None,
                            rng=None, ground_cache=None):
    """The v = infinity reference: same tanh profile applied homogeneously."""
    uni = QuenchProtocol(protocol.lattice, protocol.params, dt=protocol.dt,
                         order=protocol.order, t_end=protocol.t_end,
                         uniform=True, measure=protocol.measure)
    return run_quench(uni, dmrg_settings, tdvp_settings, rng,
                      ground_cache=ground_cache)


def average_local_energy(grid, lattice, half_width=None):
    """Mean excitation energy over bonds with |x| <= half_width (or all)."""
    vals = []
    for (x, y), v in grid.items():
        if half_width is None or abs(x) <= half_width + 1e-9:
            vals.append(v)
    if not vals:
        raise ValueError("no bonds inside the averaging window")
    return float(np.mean(vals))


@dataclass
class LightConeResult:
    times: np.ndarray
    bond_positions: np.ndarray
    entropy: np.ndarray       # S[t, bond]
    fit: object               # FrontFit or None
    threshold: float
    ground_energy: float


def light_cone_experiment(lattice, gc, dmrg_settings=None, tdvp_settings=None,
                          perturb_site=None, kick="x", t_end=2.0, rng=None,
                          threshold=None, measure_every=1):
    """Kick the critical ground state at one site and track the entropy cone.

    perturb_site defaults to (Lx // 2, 0), the site just right of center.
    Returns the entropy map over the column cuts and the fitted front
    speed (fit is None when no front is detected).
    """
    dmrg_settings = dmrg_settings or DmrgSettings()
    tdvp_settings = tdvp_settings or TdvpSettings(dt=0.05, order=2)
    template = TfiMpoTemplate(lattice)
    mpo = template.with_fields(static_field_grid(lattice, gc))
    psi, e0, info = ground_state(mpo, dmrg_settings, rng=rng)
    psi = psi.astype(np.complex128)
    if perturb_site is None:
        perturb_site = (lattice.lx // 2, 0)
    op = SX if kick == "x" else SZ
    psi.apply_local_operator(op, lattice.site(*perturb_site))

    cuts = lattice.column_cuts()
    positions = np.array([lattice.bond_x_position(i)
                          for i in range(lattice.lx - 1)])
    rows = []
    times = []

    def observer(psi_t, t, step):
        if step % measure_every:
            return
        times.append(t)
        rows.append([psi_t.entanglement_entropy(c) for c in cuts])

    evolve(psi, lambda t: mpo, 0.0, t_end, tdvp_settings, observers=[observer])
    mat = np.array(rows)
    tarr = np.array(times)
    if threshold is None:
        spread = np.max(mat - mat[0][None, :])
        threshold = 0.1 * spread if spread > 0 else 1.0
    try:
        fit = velocity_from_front(tarr, positions, mat, threshold)
    except NoFrontError:
        fit = None
    return LightConeResult(tarr, positions, mat, fit, threshold, e0)


def oracle_quench(protocol, ground_cache=None, dt_micro_factor=20,
                  dmrg_settings=None, rng=None):
    """Dense twin of run_quench via time-ordered Krylov micro-steps.

    Measures the same observables on full state vectors; shares the
    instantaneous-ground-state cache with the MPS run when provided so
    the excitation energies subtract identical references.
    """
    lattice, params = protocol.lattice, protocol.params
    if lattice.n_sites > ed.N_CAP:
        raise ValueError("oracle quench needs a dense-solvable system")
    plan = protocol.measure
    t_end = protocol.resolved_t_end()
    n_sites = lattice.n_sites
    n_steps = max(0, int(round((t_end - protocol.t0) / protocol.dt)))

    def fields_at(t):
        if protocol.uniform:
            return uniform_field_grid(lattice, params, t)
        return field_grid(lattice, params, t)

    dense_template = ed.TfiDenseTemplate(lattice, params.J)

    def hamiltonian_at(t):
        return dense_template.with_fields(fields_at(t))

    if ground_cache is None:
        ground_cache = InstantaneousGroundStates(
            lattice, params, dmrg_settings or DmrgSettings(),
            uniform=protocol.uniform, rng=rng)

    h0 = hamiltonian_at(protocol.t0)
    w, v = ed.dense_spectrum(lattice, fields_at(protocol.t0), k=1, J=params.J)
    psi = v[:, 0].astype(np.complex128)

    series = ObservableSeries()
    cuts = lattice.column_cuts()
    cut_positions = [lattice.bond_x_position(i) for i in range(lattice.lx - 1)]
    dt_micro = protocol.dt / dt_micro_factor

    def measure(t, step):
        is_final = step >= n_steps
        if step % plan.scalars_every and not is_final:
            return
        h = hamiltonian_at(t)
        energy = float(np.real(np.vdot(psi, h @ psi)))
        on_grid = (step % plan.grid_every == 0) or is_final
        e0 = eps = float("nan")
        if on_grid:
            e0, eps0_grid, _ = ground_cache.at(t)
            ops = local_energy_operators(lattice, fields_at(t), params.J)
            for op in ops:
                terms = [Term(c, list(s), list(o)) for c, s, o in op.terms]
                m = ed.sparse_operator(n_sites, terms)
                val = float(np.real(np.vdot(psi, m @ psi)))
                series.local_energy.append(
                    (t, lattice.bond_x_position(op.bond_col), op.row,
                     val - eps0_grid[(op.bond_col, op.row)]))
            eps = (energy - e0) / n_sites
        series.energy.append((t, energy, e0, eps))
        for i, cut in enumerate(cuts):
            series.entropy.append(
                (t, cut_positions[i], ed.dense_entropy(psi, cut, n_sites)))
        series.truncation.append((t, 0.0, 0))
        if is_final and plan.correlations_at_end:
            origin, targets = correlation_row_sites(lattice, 0)
            for r, site in targets:
                m = ed.sparse_operator(n_sites,
                                       [Term(1.0, [origin, site], ["x", "x"])])
                series.correlations.append(
                    (t, r, float(np.real(np.vdot(psi, m @ psi)))))

    measure(protocol.t0, 0)
    for k in range(n_steps):
        t_from = protocol.t0 + k * protocol.dt
        t_to = min(protocol.t0 + (k + 1) * protocol.dt, t_end)
        psi = ed.krylov_evolve(psi, None, t_from, t_to, dt_micro,
                               hamiltonian_at=hamiltonian_at)
        measure(t_to, k + 1)
    return series, psi, {"t_end": t_end, "tq": protocol.tq, "n_steps": n_steps}


def compare_series(a, b):
    """Max absolute deviation per observable between two runs."""
    def table(rows, keyfields):
        return {tuple(r[:keyfields]): np.array(r[keyfields:]) for r in rows}

    out = {}
    for name, keyfields in [("energy", 1), ("local_energy", 3),
                            ("correlations", 2), ("entropy", 2)]:
        ta = table(getattr(a, name), keyfields)
        tb = table(getattr(b, name), keyfields)
        keys = sorted(set(ta) & set(tb))
        if not keys:
            out[name] = float("nan")
            continue
        devs = []
        for k in keys:
            va, vb = ta[k], tb[k]
            good = np.isfinite(va) & np.isfinite(vb)
            if np.any(good):
                devs.append(np.max(np.abs(va[good] - vb[good])))
        out[name] = float(max(devs)) if devs else float("nan")
    return out
