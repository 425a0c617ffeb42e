"""Matrix product states: canonical forms, truncation, measurements, storage.

Site tensors carry legs (left bond, physical, right bond).  A state keeps a
single orthogonality center; tensors left of it are left isometries and
tensors right of it are right isometries.  All measurement routines exploit
that gauge, so they move the center as needed (the represented state is
unchanged by such moves).
"""

import struct
import warnings
from collections import namedtuple

import numpy as np
import scipy.linalg

TruncatedSvd = namedtuple(
    "TruncatedSvd", ["u", "s", "vh", "discarded_weight", "zero_matrix"]
)

_CHECKPOINT_MAGIC = b"STQMPS01"
_DTYPE_CODES = {np.dtype(np.float64): 0, np.dtype(np.complex128): 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def truncated_svd(mat, chi_max=None, cutoff=0.0):
    """SVD with rank truncation by relative discarded weight.

    Keeps min(chi_max, #{s : s^2 / sum(s^2) > cutoff}) singular values (at
    least one).  discarded_weight is the truncated tail of s^2 relative to
    the total.  An all-zero matrix yields a rank-1 zero factorization with
    zero_matrix=True.
    """
    mat = np.asarray(mat)
    if not np.all(np.isfinite(mat)):
        raise ValueError("non-finite matrix in truncated_svd")
    if chi_max is not None and chi_max < 1:
        raise ValueError("chi_max must be >= 1")
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    m, n = mat.shape
    if not mat.any():
        u = np.zeros((m, 1), dtype=mat.dtype)
        vh = np.zeros((1, n), dtype=mat.dtype)
        return TruncatedSvd(u, np.zeros(1), vh, 0.0, True)
    try:
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        u, s, vh = scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")
    weights = s * s
    total = weights.sum()
    keep = int(np.count_nonzero(weights / total > cutoff))
    keep = max(keep, 1)
    if chi_max is not None:
        keep = min(keep, int(chi_max))
    discarded = float(weights[keep:].sum() / total)
    return TruncatedSvd(u[:, :keep], s[:keep], vh[:keep], discarded, False)


class Mps:
    """Finite MPS with an orthogonality center and a truncation log."""

    def __init__(self, tensors, center=0, chi_max=None, cutoff=0.0):
        self.tensors = list(tensors)
        self.center = int(center)
        self.chi_max = chi_max
        self.cutoff = float(cutoff)
        self.discarded_total = 0.0
        self.discarded_max = 0.0
        if not self.tensors:
            raise ValueError("empty MPS")
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise ValueError("boundary bonds must have dimension 1")

    # -- constructors ---------------------------------------------------

    @classmethod
    def product_state(cls, states, **kwargs):
        tensors = []
        for vec in states:
            vec = np.asarray(vec)
            if vec.dtype.kind != "c":
                vec = vec.astype(np.float64)
            nrm = np.linalg.norm(vec)
            if nrm == 0:
                raise ValueError("zero local state")
            tensors.append((vec / nrm).reshape(1, len(vec), 1))
        return cls(tensors, center=0, **kwargs)

    @classmethod
    def all_up(cls, n_sites, **kwargs):
        return cls.product_state([[1.0, 0.0]] * n_sites, **kwargs)

    @classmethod
    def random(cls, n_sites, chi, rng, phys_dim=2, dtype=np.float64, **kwargs):
        dims = [1]
        for i in range(1, n_sites):
            dims.append(int(min(chi, phys_dim**i, phys_dim ** (n_sites - i))))
        dims.append(1)
        tensors = []
        for i in range(n_sites):
            shape = (dims[i], phys_dim, dims[i + 1])
            t = rng.standard_normal(shape)
            if np.dtype(dtype) == np.dtype(np.complex128):
                t = t + 1j * rng.standard_normal(shape)
            tensors.append(t.astype(dtype))
        psi = cls(tensors, center=0, **kwargs)
        psi.canonicalize(0)
        psi.normalize()
        return psi

    @classmethod
    def from_dense(cls, vec, n_sites, phys_dim=2, **kwargs):
        """Exact MPS from a state vector (small systems only)."""
        vec = np.asarray(vec)
        if vec.size != phys_dim**n_sites:
            raise ValueError("vector length does not match site count")
        tensors = []
        rest = vec.reshape(1, -1)
        for _ in range(n_sites - 1):
            rest = rest.reshape(rest.shape[0] * phys_dim, -1)
            u, s, vh = np.linalg.svd(rest, full_matrices=False)
            keep = int(np.count_nonzero(s > 1e-14 * s[0])) if s[0] > 0 else 1
            tensors.append(u[:, :keep].reshape(-1, phys_dim, keep))
            rest = (s[:keep, None] * vh[:keep])
        tensors.append(rest.reshape(-1, phys_dim, 1))
        psi = cls(tensors, center=n_sites - 1, **kwargs)
        return psi

    # -- basics ----------------------------------------------------------

    def __len__(self):
        return len(self.tensors)

    @property
    def n_sites(self):
        return len(self.tensors)

    @property
    def phys_dim(self):
        return self.tensors[0].shape[1]

    @property
    def bond_dims(self):
        return [t.shape[2] for t in self.tensors[:-1]]

    @property
    def max_bond_dim(self):
        return max(self.bond_dims) if self.bond_dims else 1

    @property
    def dtype(self):
        return self.tensors[self.center].dtype

    def copy(self):
        other = Mps([t.copy() for t in self.tensors], self.center,
                    self.chi_max, self.cutoff)
        other.discarded_total = self.discarded_total
        other.discarded_max = self.discarded_max
        return other

    def astype(self, dtype):
        other = self.copy()
        other.tensors = [t.astype(dtype) for t in other.tensors]
        return other

    def record_truncation(self, discarded):
        self.discarded_total += discarded
        self.discarded_max = max(self.discarded_max, discarded)

    # -- gauge -----------------------------------------------------------

    def move_center_right(self):
        i = self.center
        a = self.tensors[i]
        dl, d, dr = a.shape
        q, r = np.linalg.qr(a.reshape(dl * d, dr))
        self.tensors[i] = q.reshape(dl, d, -1)
        self.tensors[i + 1] = np.tensordot(r, self.tensors[i + 1], axes=([1], [0]))
        self.center = i + 1

    def move_center_left(self):
        i = self.center
        a = self.tensors[i]
        dl, d, dr = a.shape
        r, q = scipy.linalg.rq(a.reshape(dl, d * dr), mode="economic")
        self.tensors[i] = q.reshape(-1, d, dr)
        self.tensors[i - 1] = np.tensordot(self.tensors[i - 1], r, axes=([2], [0]))
        self.center = i - 1

    def move_center_to(self, i):
        while self.center < i:
            self.move_center_right()
        while self.center > i:
            self.move_center_left()

    def canonicalize(self, center=0):
        """Re-establish the isometry gauge from scratch."""
        self.center = 0
        for _ in range(len(self) - 1):
            self.move_center_right()
        self.move_center_to(center)

    def norm(self):
        e = np.ones((1, 1), dtype=self.dtype)
        for a in self.tensors:
            t = np.tensordot(e, a, axes=([1], [0]))         # b d r
            e = np.tensordot(a.conj(), t, axes=([0, 1], [0, 1]))  # rb r
        return float(np.sqrt(abs(e[0, 0].real)))

    def normalize(self):
        nrm = np.linalg.norm(self.tensors[self.center])
        if nrm == 0:
            raise ValueError("cannot normalize zero state")
        self.tensors[self.center] = self.tensors[self.center] / nrm
        return self

    def split_update(self, i, theta, direction, chi_max=None, cutoff=None):
        """Replace sites (i, i+1) by the SVD split of the two-site tensor.

        direction "right" leaves the center at i+1, "left" at i.  Truncation
        uses the state's defaults unless overridden; the state is
        renormalized and the discarded weight recorded.
        """
        chi_max = self.chi_max if chi_max is None else chi_max
        cutoff = self.cutoff if cutoff is None else cutoff
        dl, d1, d2, dr = theta.shape
        res = truncated_svd(theta.reshape(dl * d1, d2 * dr), chi_max, cutoff)
        s = res.s / np.linalg.norm(res.s) if not res.zero_matrix else res.s
        if res.zero_matrix:
            raise ValueError("zero two-site tensor in split_update")
        self.record_truncation(res.discarded_weight)
        k = len(s)
        if direction == "right":
            self.tensors[i] = res.u.reshape(dl, d1, k)
            self.tensors[i + 1] = (s[:, None] * res.vh).reshape(k, d2, dr)
            self.center = i + 1
        elif direction == "left":
            self.tensors[i] = (res.u * s[None, :]).reshape(dl, d1, k)
            self.tensors[i + 1] = res.vh.reshape(k, d2, dr)
            self.center = i
        else:
            raise ValueError("direction must be 'left' or 'right'")
        return res.discarded_weight

    def compress(self, chi_max=None, cutoff=None):
        """Sweep truncation down to chi_max / cutoff."""
        self.canonicalize(len(self) - 1)
        for i in range(len(self) - 2, -1, -1):
            theta = np.tensordot(self.tensors[i], self.tensors[i + 1], axes=([2], [0]))
            self.split_update(i, theta, "left", chi_max, cutoff)
        self.normalize()
        return self

    # -- measurements ----------------------------------------------------

    def overlap(self, other):
        """<self|other>."""
        if len(self) != len(other):
            raise ValueError("length mismatch")
        e = np.ones((1, 1), dtype=np.result_type(self.dtype, other.dtype))
        for a, b in zip(self.tensors, other.tensors):
            t = np.tensordot(e, b, axes=([1], [0]))
            e = np.tensordot(a.conj(), t, axes=([0, 1], [0, 1]))
        return complex(e[0, 0])

    def expectation(self, mpo):
        """<psi|O|psi> for an MPO of matching length."""
        if len(mpo.tensors) != len(self):
            raise ValueError("length mismatch between state and operator")
        e = np.ones((1, 1, 1), dtype=self.dtype)
        for a, w in zip(self.tensors, mpo.tensors):
            e = _env_left(e, w, a, a)
        val = e[0, 0, 0]
        return complex(val) if np.iscomplexobj(val) else float(val)

    def one_point(self, op, sites=None):
        """<op_i> for each requested site (defaults to all sites)."""
        sites = range(len(self)) if sites is None else sorted(sites)
        out = {}
        for i in sites:
            self.move_center_to(i)
            a = self.tensors[i]
            val = np.einsum("ldr,de,ler->", a.conj(), op, a)
            out[i] = complex(val)
        return out

    def string_correlations(self, op_a, source, op_b, targets):
        """<op_a(source) op_b(t)> for every t in targets (all > source)."""
        targets = sorted(targets)
        if not targets:
            return {}
        if targets[0] <= source:
            raise ValueError("targets must lie right of the source site")
        if targets[-1] >= len(self):
            raise ValueError("target site out of range")
        self.move_center_to(source)
        a = self.tensors[source]
        e = np.einsum("ldr,de,les->rs", a.conj(), op_a, a)
        out = {}
        want = set(targets)
        for j in range(source + 1, targets[-1] + 1):
            b = self.tensors[j]
            if j in want:
                out[j] = complex(np.einsum("rs,rdt,de,set->", e, b.conj(), op_b, b))
            if j < targets[-1]:
                e = np.einsum("rs,rdt,sdu->tu", e, b.conj(), b)
        return out

    def two_point(self, op_a, site_a, op_b, site_b):
        """<op_a(site_a) op_b(site_b)> for distinct sites."""
        if site_a == site_b:
            raise ValueError("sites must differ")
        if site_a > site_b:
            site_a, site_b, op_a, op_b = site_b, site_a, op_b, op_a
        return self.string_correlations(op_a, site_a, op_b, [site_b])[site_b]

    def schmidt_values(self, cut):
        """Singular values across the cut (left block holds `cut` sites)."""
        if not 1 <= cut <= len(self) - 1:
            raise ValueError("cut must lie strictly inside the chain")
        self.move_center_to(cut - 1)
        a = self.tensors[cut - 1]
        dl, d, dr = a.shape
        s = np.linalg.svd(a.reshape(dl * d, dr), compute_uv=False)
        return s

    def entanglement_entropy(self, cut):
        """Von Neumann entropy (natural log) across the cut."""
        s = self.schmidt_values(cut)
        total = (s * s).sum()
        if abs(total - 1.0) > 1e-8:
            warnings.warn("state not normalized; normalizing for the entropy")
            s = s / np.sqrt(total)
        p = s * s
        p = p[p > 1e-300]
        return float(-(p * np.log(p)).sum())

    def entropy_profile(self, cuts=None):
        """Entropies for several cuts in one left-to-right sweep."""
        cuts = range(1, len(self)) if cuts is None else sorted(cuts)
        out = {}
        for c in cuts:
            out[c] = self.entanglement_entropy(c)
        return out

    def apply_local_operator(self, op, site, renormalize=True):
        """Apply a single-site operator at `site`, keeping the gauge."""
        self.move_center_to(site)
        a = self.tensors[site]
        a = np.tensordot(np.asarray(op), a, axes=([1], [1])).transpose(1, 0, 2)
        nrm = np.linalg.norm(a)
        if nrm < 1e-14:
            raise ValueError("operator annihilated the state")
        self.tensors[site] = a / nrm if renormalize else a
        return self

    def to_dense(self):
        """Contract to a full state vector (exponential in size)."""
        acc = self.tensors[0][0]  # d r
        for a in self.tensors[1:]:
            acc = np.tensordot(acc, a, axes=([acc.ndim - 1], [0]))
        return acc.reshape(-1)

    # -- storage ----------------------------------------------------------

    def save(self, path):
        """Versioned binary checkpoint; round-trips bit-exactly."""
        with open(path, "wb") as fh:
            code = _DTYPE_CODES[np.dtype(self.dtype)]
            chi = self.chi_max if self.chi_max is not None else 0
            fh.write(_CHECKPOINT_MAGIC)
            fh.write(struct.pack("<IIiBdd", len(self), chi, self.center, code,
                                 self.discarded_total, self.discarded_max))
            for t in self.tensors:
                fh.write(struct.pack("<III", *t.shape))
                fh.write(np.ascontiguousarray(t).tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic = fh.read(len(_CHECKPOINT_MAGIC))
            if magic != _CHECKPOINT_MAGIC:
                raise ValueError(f"not an MPS checkpoint: {path}")
            n, chi, center, code, dtot, dmax = struct.unpack(
                "<IIiBdd", fh.read(struct.calcsize("<IIiBdd")))
            dtype = _CODE_DTYPES[code]
            tensors = []
            for _ in range(n):
                shape = struct.unpack("<III", fh.read(12))
                count = int(np.prod(shape))
                data = fh.read(count * dtype.itemsize)
                tensors.append(np.frombuffer(data, dtype=dtype).reshape(shape).copy())
        psi = cls(tensors, center=center, chi_max=chi if chi else None)
        psi.discarded_total = dtot
        psi.discarded_max = dmax
        return psi


# -- environment contractions (shared with dmrg/tdvp) ----------------------

def _env_left(e, w, a_bra, a_ket):
    """Grow a (bra, mpo, ket) environment by one site from the left."""
    t = np.tensordot(e, a_ket, axes=([2], [0]))          # b m d r
    t = np.tensordot(t, w, axes=([1, 2], [0, 3]))        # b r wr dout
    t = np.tensordot(a_bra.conj(), t, axes=([0, 1], [0, 3]))  # rb r wr
    return t.transpose(0, 2, 1)


def _env_right(e, w, a_bra, a_ket):
    """Grow a (bra, mpo, ket) environment by one site from the right."""
    t = np.tensordot(a_ket, e, axes=([2], [2]))          # l d b m
    t = np.tensordot(t, w, axes=([3, 1], [1, 3]))        # l b wl dout
    t = np.tensordot(a_bra.conj(), t, axes=([1, 2], [3, 1]))  # lb l wl
    return t.transpose(0, 2, 1)
