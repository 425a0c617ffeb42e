"""Cylinder lattice, quench front, Hamiltonian MPO and local energy density.

Sites of an Lx x Ly cylinder (periodic in y) are linearized column-major:
site(col, row) = col * Ly + row.  All bonds then span at most Ly chain
sites (x-bonds exactly Ly, y-wrap bonds Ly - 1), and a quench front that
depends only on the column acts on contiguous chain blocks.

The model is H = -J (sum_<ij> sx_i sx_j + sum_i g_i sz_i) with per-site
fields g_i; during a quench g_i(t) = gc + h * f(x_i, t) with the moving
tanh front f.  Fields (gc, h) are measured in units of J.
"""

from dataclasses import dataclass, field

import numpy as np

from .mpo import Mpo, MpoBuilder, Term


class CylinderLattice:
    """Lx x Ly lattice, optionally periodic along y, with a snake site map."""

    def __init__(self, lx, ly, y_periodic=True):
        if lx < 2:
            raise ValueError("need at least two columns")
        if ly < 1:
            raise ValueError("need at least one row")
        if y_periodic and ly == 1:
            raise ValueError("y-periodic with a single row would create self-bonds")
        self.lx = int(lx)
        self.ly = int(ly)
        self.y_periodic = bool(y_periodic)

    def __repr__(self):
        kind = "cylinder" if self.y_periodic else "strip"
        return f"CylinderLattice({self.lx}x{self.ly} {kind})"

    @property
    def n_sites(self):
        return self.lx * self.ly

    def site(self, col, row):
        if not (0 <= col < self.lx and 0 <= row < self.ly):
            raise ValueError(f"site ({col},{row}) outside {self.lx}x{self.ly}")
        return col * self.ly + row

    def col_row(self, n):
        return divmod(n, self.ly)

    def x_coord(self, col):
        """Centered column coordinate, symmetric about 0."""
        return col - (self.lx - 1) / 2.0

    @property
    def x_coords(self):
        return np.array([self.x_coord(c) for c in range(self.lx)])

    def x_bonds(self):
        """Bonds between neighboring columns: ((col,row), (col+1,row))."""
        return [((i, j), (i + 1, j)) for i in range(self.lx - 1) for j in range(self.ly)]

    def y_bonds(self):
        """Bonds within a column; a single bond per column pair for Ly=2."""
        bonds = []
        for i in range(self.lx):
            for j in range(self.ly - 1):
                bonds.append(((i, j), (i, j + 1)))
            if self.y_periodic and self.ly >= 3:
                bonds.append(((i, self.ly - 1), (i, 0)))
        return bonds

    def bonds(self):
        return self.x_bonds() + self.y_bonds()

    def bond_x_position(self, bond_col):
        """x coordinate of the cut between columns bond_col and bond_col+1."""
        return 0.5 * (self.x_coord(bond_col) + self.x_coord(bond_col + 1))

    def column_cuts(self):
        """Chain cuts that bisect the cylinder between columns."""
        return [(i + 1) * self.ly for i in range(self.lx - 1)]


@dataclass
class ModelParams:
    """Couplings of the quenched transverse-field Ising model.

    gc and h are dimensionless (fields in units of J); v is the front
    velocity in lattice units per unit time and tau the front smoothing
    time.  The quench starts at t0 = -2 tau.
    """

    gc: float
    h: float = 0.0
    J: float = 1.0
    v: float = 1.0
    tau: float = 0.0

    def __post_init__(self):
        if self.J <= 0:
            raise ValueError("J must be positive")
        if self.h < 0:
            raise ValueError("h must be non-negative")
        if not self.v > 0:
            raise ValueError("front velocity must be positive")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")

    @property
    def t0(self):
        return -2.0 * self.tau


def front_profile(x, t, v, tau):
    """Moving quench front f(x, t) = 1/2 + 1/2 tanh[(|x| - v t)/(v tau)].

    Starts near 1 everywhere for t <= -2 tau and decays to 0 as the front
    (at |x| = v t) passes.  tau = 0 degenerates to a sharp step:
    f = 1 where |x| > v t, else 0.
    """
    x = np.asarray(x, dtype=float)
    if not (np.all(np.isfinite(x)) and np.isfinite(t)):
        raise ValueError("non-finite front arguments")
    if not v > 0:
        raise ValueError("front velocity must be positive")
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if tau == 0:
        out = np.where(np.abs(x) > v * t, 1.0, 0.0)
    else:
        out = 0.5 + 0.5 * np.tanh((np.abs(x) - v * t) / (v * tau))
    return out if out.ndim else float(out)

def uniform_front(t, tau):
    """Spatially uniform quench profile f(t) = 1/2 + 1/2 tanh(-t/tau)."""
    if not np.isfinite(t):
        raise ValueError("non-finite time")
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if tau == 0:
        return 1.0 if t < 0 else 0.0
    return 0.5 + 0.5 * np.tanh(-t / tau)


def transverse_field(x, t, params):
    """Instantaneous per-site field g(x, t) = gc + h f(x, t)."""
    return params.gc + params.h * front_profile(x, t, params.v, params.tau)


def field_grid(lattice, params, t):
    """Per-site fields for the moving-front quench at time t."""
    cols = transverse_field(lattice.x_coords, t, params)
    return np.repeat(np.atleast_1d(cols), lattice.ly)


def uniform_field_grid(lattice, params, t):
    """Per-site fields for the homogeneous quench at time t."""
    g = params.gc + params.h * uniform_front(t, params.tau)
    return np.full(lattice.n_sites, g)


def static_field_grid(lattice, g):
    return np.full(lattice.n_sites, float(g))


def hamiltonian_terms(lattice, fields, J=1.0):
    """Weighted Pauli strings of H = -J (sum sx sx + sum g_i sz_i)."""
    fields = np.asarray(fields, dtype=float)
    if fields.shape != (lattice.n_sites,):
        raise ValueError("need one field value per site")
    if not np.all(np.isfinite(fields)):
        raise ValueError("non-finite fields")
    terms = []
    for (ca, ra), (cb, rb) in lattice.bonds():
        terms.append(Term(-J, [lattice.site(ca, ra), lattice.site(cb, rb)], ["x", "x"]))
    for n in range(lattice.n_sites):
        terms.append(Term(-J * fields[n], [n], ["z"]))
    return terms


def build_tfi_mpo(lattice, fields, J=1.0):
    """Exact MPO of the Hamiltonian for the given per-site fields."""
    builder = MpoBuilder(lattice.n_sites)
    builder.terms = hamiltonian_terms(lattice, fields, J)
    return builder.compile()


class TfiMpoTemplate:
    """Pre-compiled Hamiltonian MPO whose field entries update in O(N).

    Bond structure is fixed by the lattice; only the single-site sz block
    (the ready -> done channel) depends on the fields, so time-dependent
    Hamiltonians can be produced cheaply inside evolution loops.
    """

    def __init__(self, lattice, J=1.0):
        self.lattice = lattice
        self.J = float(J)
        base = build_tfi_mpo(lattice, np.zeros(lattice.n_sites), J)
        self._tensors = base.tensors
        self._sz = np.array([[1.0, 0.0], [0.0, -1.0]])
        # ready row is 0 on every bond; done column is the last state
        self._slots = [(0, w.shape[1] - 1) for w in self._tensors]

    def with_fields(self, fields):
        fields = np.asarray(fields, dtype=float)
        if fields.shape != (self.lattice.n_sites,):
            raise ValueError("need one field value per site")
        tensors = []
        for n, w in enumerate(self._tensors):
            w = w.copy()
            row, col = self._slots[n]
            w[row, col] += -self.J * fields[n] * self._sz
            tensors.append(w)
        return Mpo(tensors, terms=hamiltonian_terms(self.lattice, fields, self.J))

    def at_time(self, params, t, uniform=False):
        grid = uniform_field_grid if uniform else field_grid
        return self.with_fields(grid(self.lattice, params, t))


@dataclass
class LocalEnergyOperator:
    """Bond-local energy operator h_{i,j} living on columns i, i+1, row j."""

    bond_col: int
    row: int
    x: float
    terms: list = field(default_factory=list)

    def add(self, coef, sites, ops):
        self.terms.append((float(coef), tuple(sites), tuple(ops)))


def local_energy_operators(lattice, fields, J=1.0):
    """Bond-local operators whose sum is exactly the full Hamiltonian.

    Every x-bond belongs to its own operator; site fields and y-bonds are
    split evenly between the adjacent bond columns (boundary columns get
    the full share their missing neighbor would have taken, including the
    vertical-bond share, so the sum rule holds exactly on every geometry).
    """
    if lattice.lx < 2:
        raise ValueError("local energy decomposition needs at least two columns")
    fields = np.asarray(fields, dtype=float)
    if fields.shape != (lattice.n_sites,):
        raise ValueError("need one field value per site")

    def n_cols(col):
        # number of bond columns adjacent to a site column
        return 2 if 0 < col < lattice.lx - 1 else 1

    ops = {}
    for i in range(lattice.lx - 1):
        for j in range(lattice.ly):
            ops[(i, j)] = LocalEnergyOperator(i, j, lattice.bond_x_position(i))

    for (ca, ra), (cb, rb) in lattice.x_bonds():
        ops[(ca, ra)].add(-J, [lattice.site(ca, ra), lattice.site(cb, rb)], ["x", "x"])

    for col in range(lattice.lx):
        share = 1.0 / n_cols(col)
        slots = [c for c in (col - 1, col) if 0 <= c <= lattice.lx - 2]
        for row in range(lattice.ly):
            g = fields[lattice.site(col, row)]
            for c in slots:
                ops[(c, row)].add(-J * share * g, [lattice.site(col, row)], ["z"])

    for (ca, ra), (cb, rb) in lattice.y_bonds():
        col = ca
        cols = [c for c in (col - 1, col) if 0 <= c <= lattice.lx - 2]
        rows = (ra, rb)
        w = 1.0 / (len(cols) * len(rows))
        for c in cols:
            for r in rows:
                ops[(c, r)].add(-J * w, [lattice.site(ca, ra), lattice.site(cb, rb)],
                                ["x", "x"])

    return [ops[(i, j)] for i in range(lattice.lx - 1) for j in range(lattice.ly)]


def evaluate_local_energies(psi, operators):
    """Expectation of each bond-local operator on an MPS.

    Batches the needed <sz_n> and <sx_a sx_b> once, grouped by source site,
    then assembles every operator from the shared pool.
    """
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    sz = np.array([[1.0, 0.0], [0.0, -1.0]])
    z_sites = set()
    pair_targets = {}
    for op in operators:
        for _, sites, names in op.terms:
            if len(sites) == 1:
                z_sites.add(sites[0])
            else:
                a, b = sorted(sites)
                pair_targets.setdefault(a, set()).add(b)
    z_vals = psi.one_point(sz, sorted(z_sites))
    xx_vals = {}
    for a in sorted(pair_targets):
        got = psi.string_correlations(sx, a, sx, sorted(pair_targets[a]))
        for b, v in got.items():
            xx_vals[(a, b)] = v

    out = {}
    for op in operators:
        val = 0.0
        for coef, sites, names in op.terms:
            if len(sites) == 1:
                val += coef * z_vals[sites[0]].real
            else:
                a, b = sorted(sites)
                val += coef * xx_vals[(a, b)].real
        out[(op.bond_col, op.row)] = val
    return out
