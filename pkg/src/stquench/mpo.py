"""Matrix product operators compiled from weighted Pauli strings.

Operators are specified as sums of one- and two-site terms and compiled
into an exact finite-state-machine MPO: one "ready" channel, one "done"
channel, and one carrier channel per open two-site source.  No
compression is involved, so the compiled MPO reproduces the operator sum
to machine precision.
"""

import numpy as np

PAULI = {
    "I": np.eye(2),
    "x": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]]),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]]),
}


class Term:
    """A weighted operator string on one or two sites."""

    __slots__ = ("coef", "sites", "ops")

    def __init__(self, coef, sites, ops):
        order = np.argsort(sites)
        self.coef = float(coef)
        self.sites = tuple(int(sites[k]) for k in order)
        self.ops = tuple(ops[k] for k in order)
        if len(self.sites) not in (1, 2):
            raise ValueError("only one- and two-site terms are supported")
        if len(set(self.sites)) != len(self.sites):
            raise ValueError("repeated site in term")

    def __repr__(self):
        body = " ".join(f"{op}@{s}" for op, s in zip(self.ops, self.sites))
        return f"Term({self.coef:+g} * {body})"


class Mpo:
    """MPO as a list of rank-4 tensors with legs (wl, wr, out, in)."""

    def __init__(self, tensors, terms=None):
        self.tensors = list(tensors)
        self.terms = terms

    def __len__(self):
        return len(self.tensors)

    @property
    def length(self):
        return len(self.tensors)

    @property
    def bond_dims(self):
        return [w.shape[1] for w in self.tensors[:-1]]

    @property
    def max_bond_dim(self):
        return max(self.bond_dims) if self.bond_dims else 1

    def scaled(self, factor):
        tensors = [w.copy() for w in self.tensors]
        tensors[0] = tensors[0] * factor
        return Mpo(tensors, terms=self.terms)

    def to_dense(self):
        """Contract to a full 2^N x 2^N matrix.  Memory-bound to N <= 12."""
        n = len(self.tensors)
        if n > 12:
            raise ValueError(f"dense reconstruction capped at 12 sites, got {n}")
        # acc legs: (out_total, in_total, wr)
        acc = np.transpose(self.tensors[0][0], (1, 2, 0))
        for w in self.tensors[1:]:
            acc = np.tensordot(acc, w, axes=([2], [0]))  # out in wr' out' in'
            d_out = acc.shape[0] * acc.shape[3]
            d_in = acc.shape[1] * acc.shape[4]
            acc = np.transpose(acc, (0, 3, 1, 4, 2)).reshape(d_out, d_in, -1)
        return acc[:, :, 0]


class MpoBuilder:
    """Collects weighted Pauli strings and compiles them into an exact MPO."""

    def __init__(self, n_sites, phys_dim=2):
        if n_sites < 1:
            raise ValueError("need at least one site")
        self.n_sites = int(n_sites)
        self.phys_dim = int(phys_dim)
        self.terms = []

    def add(self, coef, sites, ops):
        """Add coef * op_0(site_0) [* op_1(site_1)]; ops are PAULI keys."""
        for op in ops:
            if op not in PAULI:
                raise ValueError(f"unknown operator {op!r}")
        term = Term(coef, list(sites), list(ops))
        for s in term.sites:
            if not 0 <= s < self.n_sites:
                raise ValueError(f"site {s} outside chain of {self.n_sites}")
        self.terms.append(term)
        return self

    def compile(self, dtype=np.float64):
        """Build the MPO tensors.  Carriers for two-site terms sharing the
        same (source site, source operator) are merged."""
        n = self.n_sites
        d = self.phys_dim
        onsite = [np.zeros((d, d), dtype=dtype) for _ in range(n)]
        # carrier key: (source site, source op) -> list of (partner, op, coef)
        emissions = {}
        for t in self.terms:
            if len(t.sites) == 1:
                onsite[t.sites[0]] += t.coef * PAULI[t.ops[0]].astype(dtype)
            else:
                key = (t.sites[0], t.ops[0])
                emissions.setdefault(key, []).append((t.sites[1], t.ops[1], t.coef))

        # carriers active on the bond right of site s: source <= s < max partner
        def active(bond_site):
            keys = []
            for key, em in emissions.items():
                last = max(p for p, _, _ in em)
                if key[0] <= bond_site < last:
                    keys.append(key)
            return sorted(keys)

        bond_states = []  # per internal bond: ordered state labels
        for s in range(n - 1):
            bond_states.append(["ready"] + active(s) + ["done"])

        tensors = []
        ident = np.eye(d, dtype=dtype)
        for s in range(n):
            left = ["ready"] if s == 0 else bond_states[s - 1]
            right = ["done"] if s == n - 1 else bond_states[s]
            w = np.zeros((len(left), len(right), d, d), dtype=dtype)
            li = {lab: k for k, lab in enumerate(left)}
            ri = {lab: k for k, lab in enumerate(right)}
            if "ready" in ri:
                w[li["ready"], ri["ready"]] = ident
            if "done" in li:
                w[li["done"], ri["done"]] = ident
            w[li["ready"], ri["done"]] += onsite[s]
            for key, em in emissions.items():
                src, op = key
                if src == s and key in ri:
                    w[li["ready"], ri[key]] = PAULI[op].astype(dtype)
                if key in li and key in ri:
                    w[li[key], ri[key]] = ident
                if key in li:
                    for partner, pop, coef in em:
                        if partner == s:
                            w[li[key], ri["done"]] += coef * PAULI[pop].astype(dtype)
            tensors.append(w)
        return Mpo(tensors, terms=list(self.terms))


def identity_mpo(n_sites, dtype=np.float64):
    eye = np.eye(2, dtype=dtype).reshape(1, 1, 2, 2)
    return Mpo([eye.copy() for _ in range(n_sites)])


def single_site_mpo(n_sites, site, op, coef=1.0):
    b = MpoBuilder(n_sites)
    b.add(coef, [site], [op])
    return b.compile()
