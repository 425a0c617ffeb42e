"""Time evolution by the projector-splitting variational principle.

step2 performs the symmetric second-order sweep (two-site by default,
one-site for fixed bond dimension); step4 composes three step2 substeps
with the triple-jump coefficients w1, w2 = 1 - 2 w1, w1 where
w1 = 1/(2 - 2^(1/3)).  Time-dependent Hamiltonians are handled by
freezing the fields at each substep midpoint, which preserves the
integrator order.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .mps import _env_left, _env_right

W1_TRIPLE_JUMP = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
W2_TRIPLE_JUMP = 1.0 - 2.0 * W1_TRIPLE_JUMP


class KrylovError(RuntimeError):
    pass


class TruncationOverflow(RuntimeError):
    """Raised when a step discards more weight than the configured cap."""


@dataclass
class TdvpSettings:
    dt: float = 0.05
    order: int = 2
    chi_max: int = 64
    cutoff: float = 1e-12
    krylov_dim: int = 40
    krylov_tol: float = 1e-12
    mode: str = "two-site"
    max_step_discard: float = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.order not in (2, 4):
            raise ValueError("order must be 2 or 4")
        if self.mode not in ("two-site", "one-site"):
            raise ValueError("mode must be 'two-site' or 'one-site'")


def lanczos_expm_apply(matvec, vec, scale, max_dim=40, tol=1e-12):
    """exp(scale * A) @ vec for Hermitian A given through matvec.

    Lanczos with full reorthogonalization; stops when the a-posteriori
    residual estimate drops below tol * |vec|.  Raises KrylovError if the
    cap is hit without convergence.
    """
    norm0 = np.linalg.norm(vec)
    if norm0 == 0:
        return vec.copy()
    dim = vec.size
    max_dim = min(max_dim, dim)
    basis = [vec / norm0]
    alphas, betas = [], []
    w = matvec(basis[0])
    alphas.append(float(np.vdot(basis[0], w).real))
    w = w - alphas[0] * basis[0]

    def small_exp():
        if len(alphas) == 1:
            return np.array([np.exp(scale * alphas[0])])
        evals, evecs = scipy.linalg.eigh_tridiagonal(alphas, betas)
        return evecs @ (np.exp(scale * evals) * evecs[0].conj())

    for _ in range(max_dim - 1):
        beta = np.linalg.norm(w)
        if beta < 1e-14 * max(1.0, abs(alphas[0])):
            u = small_exp()
            return norm0 * (np.stack(basis, axis=1) @ u)
        q = w / beta
        for b in basis:  # full reorthogonalization
            q = q - np.vdot(b, q) * b
        q = q / np.linalg.norm(q)
        betas.append(float(beta))
        basis.append(q)
        w = matvec(q) - beta * basis[-2]
        alphas.append(float(np.vdot(q, w).real))
        w = w - alphas[-1] * q
        u = small_exp()
        err = abs(scale) * np.linalg.norm(w) * abs(u[-1])
        if err < tol:
            return norm0 * (np.stack(basis, axis=1) @ u)
    if len(alphas) == dim:  # exhausted the full space: exact
        u = small_exp()
        return norm0 * (np.stack(basis, axis=1) @ u)
    raise KrylovError(f"Krylov exponential did not converge within {max_dim} vectors")


def _expm_with_retry(matvec, vec, scale, settings):
    try:
        return lanczos_expm_apply(matvec, vec, scale, settings.krylov_dim,
                                  settings.krylov_tol)
    except KrylovError:
        half = lanczos_expm_apply(matvec, vec, scale / 2, settings.krylov_dim,
                                  settings.krylov_tol)
        return lanczos_expm_apply(matvec, half, scale / 2, settings.krylov_dim,
                                  settings.krylov_tol)


def _mv_two_site(lenv, w1, w2, renv):
    def mv(x):
        t = np.tensordot(lenv, x, axes=([2], [0]))
        t = np.tensordot(t, w1, axes=([1, 2], [0, 3]))
        t = np.tensordot(t, w2, axes=([3, 1], [0, 3]))
        return np.tensordot(t, renv, axes=([1, 3], [2, 1]))
    return mv


def _mv_one_site(lenv, w, renv):
    def mv(x):
        t = np.tensordot(lenv, x, axes=([2], [0]))
        t = np.tensordot(t, w, axes=([1, 2], [0, 3]))
        return np.tensordot(t, renv, axes=([1, 2], [2, 1]))
    return mv


def _mv_zero_site(lenv, renv):
    def mv(x):
        t = np.tensordot(lenv, x, axes=([2], [0]))
        return np.tensordot(t, renv, axes=([1, 2], [1, 2]))
    return mv


def _flat(mv, shape):
    def wrapped(x):
        return mv(x.reshape(shape)).reshape(-1)
    return wrapped


def _sweep_two_site(psi, mpo, dt, settings):
    """Symmetric left-right-left two-site sweep evolving by dt."""
    n = len(psi)
    w = mpo.tensors
    psi.move_center_to(0)
    lenv = [None] * (n + 1)
    renv = [None] * (n + 1)
    lenv[0] = np.ones((1, 1, 1), dtype=psi.dtype)
    renv[n] = np.ones((1, 1, 1), dtype=psi.dtype)
    for i in range(n - 1, 1, -1):
        renv[i] = _env_right(renv[i + 1], w[i], psi.tensors[i], psi.tensors[i])
    half = -0.5j * dt
    max_disc = 0.0

    for i in range(n - 1):
        theta = np.tensordot(psi.tensors[i], psi.tensors[i + 1], axes=([2], [0]))
        shape = theta.shape
        mv = _flat(_mv_two_site(lenv[i], w[i], w[i + 1], renv[i + 2]), shape)
        theta = _expm_with_retry(mv, theta.reshape(-1), half, settings).reshape(shape)
        max_disc = max(max_disc, psi.split_update(i, theta, "right",
                                                  settings.chi_max, settings.cutoff))
        lenv[i + 1] = _env_left(lenv[i], w[i], psi.tensors[i], psi.tensors[i])
        if i < n - 2:
            a = psi.tensors[i + 1]
            mv = _flat(_mv_one_site(lenv[i + 1], w[i + 1], renv[i + 2]), a.shape)
            a = _expm_with_retry(mv, a.reshape(-1), -half, settings).reshape(a.shape)
            psi.tensors[i + 1] = a

    for i in range(n - 2, -1, -1):
        theta = np.tensordot(psi.tensors[i], psi.tensors[i + 1], axes=([2], [0]))
        shape = theta.shape
        mv = _flat(_mv_two_site(lenv[i], w[i], w[i + 1], renv[i + 2]), shape)
        theta = _expm_with_retry(mv, theta.reshape(-1), half, settings).reshape(shape)
        max_disc = max(max_disc, psi.split_update(i, theta, "left",
                                                  settings.chi_max, settings.cutoff))
        renv[i + 1] = _env_right(renv[i + 2], w[i + 1], psi.tensors[i + 1],
                                 psi.tensors[i + 1])
        if i > 0:
            a = psi.tensors[i]
            mv = _flat(_mv_one_site(lenv[i], w[i], renv[i + 1]), a.shape)
            a = _expm_with_retry(mv, a.reshape(-1), -half, settings).reshape(a.shape)
            psi.tensors[i] = a
    return max_disc


def _sweep_one_site(psi, mpo, dt, settings):
    """Symmetric one-site sweep: fixed bond dimensions, no truncation."""
    n = len(psi)
    w = mpo.tensors
    psi.move_center_to(0)
    lenv = [None] * (n + 1)
    renv = [None] * (n + 1)
    lenv[0] = np.ones((1, 1, 1), dtype=psi.dtype)
    renv[n] = np.ones((1, 1, 1), dtype=psi.dtype)
    for i in range(n - 1, 0, -1):
        renv[i] = _env_right(renv[i + 1], w[i], psi.tensors[i], psi.tensors[i])
    half = -0.5j * dt

    for i in range(n):
        a = psi.tensors[i]
        mv = _flat(_mv_one_site(lenv[i], w[i], renv[i + 1]), a.shape)
        a = _expm_with_retry(mv, a.reshape(-1), half, settings).reshape(a.shape)
        if i < n - 1:
            dl, d, dr = a.shape
            q, r = np.linalg.qr(a.reshape(dl * d, dr))
            psi.tensors[i] = q.reshape(dl, d, -1)
            lenv[i + 1] = _env_left(lenv[i], w[i], psi.tensors[i], psi.tensors[i])
            mv = _flat(_mv_zero_site(lenv[i + 1], renv[i + 1]), r.shape)
            r = _expm_with_retry(mv, r.reshape(-1), -half, settings).reshape(r.shape)
            psi.tensors[i + 1] = np.tensordot(r, psi.tensors[i + 1], axes=([1], [0]))
            psi.center = i + 1
        else:
            psi.tensors[i] = a

    for i in range(n - 1, -1, -1):
        a = psi.tensors[i]
        mv = _flat(_mv_one_site(lenv[i], w[i], renv[i + 1]), a.shape)
        a = _expm_with_retry(mv, a.reshape(-1), half, settings).reshape(a.shape)
        if i > 0:
            dl, d, dr = a.shape
            r, q = scipy.linalg.rq(a.reshape(dl, d * dr), mode="economic")
            psi.tensors[i] = q.reshape(-1, d, dr)
            renv[i] = _env_right(renv[i + 1], w[i], psi.tensors[i], psi.tensors[i])
            mv = _flat(_mv_zero_site(lenv[i], renv[i]), r.shape)
            r = _expm_with_retry(mv, r.reshape(-1), -half, settings).reshape(r.shape)
            psi.tensors[i - 1] = np.tensordot(psi.tensors[i - 1], r, axes=([2], [0]))
            psi.center = i - 1
        else:
            psi.tensors[i] = a
    return 0.0


def step2(psi, mpo_at, t, dt, settings):
    """Second-order step from t to t + dt (fields frozen at t + dt/2)."""
    mpo = mpo_at(t + 0.5 * dt)
    sweep = _sweep_two_site if settings.mode == "two-site" else _sweep_one_site
    disc = sweep(psi, mpo, dt, settings)
    if settings.max_step_discard is not None and disc > settings.max_step_discard:
        raise TruncationOverflow(
            f"discarded weight {disc:.3e} exceeds cap {settings.max_step_discard:.3e}")
    return disc


def step4(psi, mpo_at, t, dt, settings):
    """Fourth-order triple-jump composition of step2 substeps."""
    disc = 0.0
    u = t
    for wk in (W1_TRIPLE_JUMP, W2_TRIPLE_JUMP, W1_TRIPLE_JUMP):
        disc = max(disc, step2(psi, mpo_at, u, wk * dt, settings))
        u += wk * dt
    return disc


def evolve(psi, mpo_at, t0, t_end, settings, observers=(), start_step=0):
    """Drive step2/step4 from t0 to t_end, firing observers after each step.

    Observers are callables (psi, t, step_index); they also fire once at
    t0 (step_index = start_step) so a zero-duration schedule still yields
    the initial measurements.  Returns a log with truncation diagnostics.
    """
    if t_end < t0:
        raise ValueError("t_end must be >= t0")
    if np.iscomplexobj(psi.tensors[0]) is False:
        psi.tensors = [t.astype(np.complex128) for t in psi.tensors]
    stepper = step4 if settings.order == 4 else step2
    n_steps = max(0, int(round((t_end - t0) / settings.dt)))
    if abs(t0 + n_steps * settings.dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
        n_steps = int(np.ceil((t_end - t0) / settings.dt - 1e-12))
    log = {"times": [], "max_discard": [], "max_chi": []}
    if start_step == 0:
        for obs in observers:
            obs(psi, t0, 0)
    t = t0 + start_step * settings.dt
    for k in range(start_step, n_steps):
        dt = min(settings.dt, t_end - t)
        disc = stepper(psi, mpo_at, t, dt, settings)
        t = t0 + (k + 1) * settings.dt if k + 1 < n_steps else t_end
        log["times"].append(t)
        log["max_discard"].append(disc)
        log["max_chi"].append(psi.max_bond_dim)
        for obs in observers:
            obs(psi, t, k + 1)
    return log
