import numpy as np
import pytest

from stquench.dmrg import (ConvergenceWarning, DmrgSettings,
                           InstantaneousGroundStates, energy_gap, ground_state,
                           spectral_bandwidth)
from stquench.lattice import (CylinderLattice, ModelParams, build_tfi_mpo,
                              field_grid, static_field_grid)
from stquench.oracle import FreeFermionChain, dense_spectrum


class TestGroundState:
    def test_two_site_closed_form(self, rng, tight_dmrg):
        lat = CylinderLattice(2, 1, y_periodic=False)
        mpo = build_tfi_mpo(lat, static_field_grid(lat, 1.0))
        _, e0, info = ground_state(mpo, tight_dmrg, rng=rng)
        assert e0 == pytest.approx(-np.sqrt(5), abs=1e-10)
        assert info["converged"]

    def test_free_fermion_chain_l16(self, rng, tight_dmrg):
        lat = CylinderLattice(16, 1, y_periodic=False)
        mpo = build_tfi_mpo(lat, static_field_grid(lat, 1.5))
        _, e0, _ = ground_state(mpo, tight_dmrg, rng=rng)
        exact = FreeFermionChain(16, 1.5).ground_energy
        assert exact == pytest.approx(-26.566811869027354, abs=1e-10)
        assert abs(e0 - exact) / abs(exact) < 1e-8

    def test_cylinder_against_dense(self, rng, tight_dmrg):
        lat = CylinderLattice(3, 4, y_periodic=True)
        fields = static_field_grid(lat, 3.0)
        mpo = build_tfi_mpo(lat, fields)
        _, e0, _ = ground_state(mpo, tight_dmrg, rng=rng)
        w, _ = dense_spectrum(lat, fields, k=1)
        assert abs(e0 - w[0]) / abs(w[0]) < 1e-8

    def test_variational_upper_bound(self, rng):
        rough = DmrgSettings(chi_schedule=(4,), max_sweeps=2, min_sweeps=2,
                             noise_schedule=(0.0,), energy_tol=1e-14)
        lat = CylinderLattice(3, 3, y_periodic=True)
        fields = static_field_grid(lat, 3.04438)
        mpo = build_tfi_mpo(lat, fields)
        w, _ = dense_spectrum(lat, fields, k=1)
        with pytest.warns(ConvergenceWarning):
            _, e0, _ = ground_state(mpo, rough, rng=rng)
        assert e0 >= w[0] - 1e-10

    def test_chi_monotonicity(self, rng):
        lat = CylinderLattice(4, 3, y_periodic=True)
        fields = static_field_grid(lat, 3.0)
        mpo = build_tfi_mpo(lat, fields)
        energies = []
        for chi in (4, 8, 16):
            s = DmrgSettings(chi_schedule=(chi,), cutoff=1e-14,
                             energy_tol=1e-12, eig_tol=1e-13, max_sweeps=25,
                             min_sweeps=4, noise_schedule=(1e-7, 0.0))
            _, e0, _ = ground_state(mpo, s, rng=rng)
            energies.append(e0)
        assert energies[1] <= energies[0] + 1e-9
        assert energies[2] <= energies[1] + 1e-9

    def test_energy_monotone_across_sweeps(self, rng, tight_dmrg):
        lat = CylinderLattice(8, 1, y_periodic=False)
        mpo = build_tfi_mpo(lat, static_field_grid(lat, 1.2))
        _, _, info = ground_state(mpo, tight_dmrg, rng=rng)
        energies = info["energies"]
        assert all(b <= a + 1e-9 for a, b in zip(energies, energies[1:]))

    def test_warm_start_converges_quickly(self, rng, tight_dmrg):
        lat = CylinderLattice(8, 1, y_periodic=False)
        mpo1 = build_tfi_mpo(lat, static_field_grid(lat, 1.5))
        psi, _, _ = ground_state(mpo1, tight_dmrg, rng=rng)
        mpo2 = build_tfi_mpo(lat, static_field_grid(lat, 1.52))
        _, e0, info = ground_state(mpo2, tight_dmrg, initial_guess=psi, rng=rng)
        assert info["sweeps"] <= 6
        w, _ = dense_spectrum(lat, static_field_grid(lat, 1.52), k=1)
        assert abs(e0 - w[0]) < 1e-8


class TestEnergyGap:
    def test_two_site_gap(self, rng, tight_dmrg):
        lat = CylinderLattice(2, 1, y_periodic=False)
        mpo = build_tfi_mpo(lat, static_field_grid(lat, 1.0))
        _, _, e0, e1, gap, info = energy_gap(mpo, tight_dmrg, rng=rng)
        assert gap == pytest.approx(np.sqrt(5) - 1, abs=1e-8)
        assert info["overlap"] < 1e-6

    def test_chain_gap_vs_free_fermions(self, rng, tight_dmrg):
        lat = CylinderLattice(12, 1, y_periodic=False)
        mpo = build_tfi_mpo(lat, static_field_grid(lat, 2.0))
        _, _, e0, e1, gap, info = energy_gap(mpo, tight_dmrg, rng=rng)
        assert gap == pytest.approx(FreeFermionChain(12, 2.0).gap, abs=1e-6)

    def test_cylinder_gap_vs_dense(self, rng, tight_dmrg):
        lat = CylinderLattice(3, 3, y_periodic=True)
        fields = static_field_grid(lat, 3.04438)
        mpo = build_tfi_mpo(lat, fields)
        _, _, e0, e1, gap, info = energy_gap(mpo, tight_dmrg, rng=rng)
        w, _ = dense_spectrum(lat, fields, k=2)
        assert gap == pytest.approx(w[1] - w[0], abs=1e-6)
        assert info["overlap"] < 1e-6

    def test_near_degenerate_flagged(self, rng, tight_dmrg):
        # almost-classical ferromagnet: the doublet splitting ~ L g^L is far
        # below the resolvable scale, so the gap reports as degenerate
        lat = CylinderLattice(8, 1, y_periodic=False)
        mpo = build_tfi_mpo(lat, static_field_grid(lat, 0.01))
        _, _, e0, e1, gap, info = energy_gap(mpo, tight_dmrg, rng=rng)
        assert gap >= -1e-9
        assert info["degenerate"]


class TestSpectralBandwidth:
    def test_two_site_width(self, rng, tight_dmrg):
        lat = CylinderLattice(2, 1, y_periodic=False)
        mpo = build_tfi_mpo(lat, static_field_grid(lat, 1.0))
        emin, emax, width = spectral_bandwidth(mpo, tight_dmrg, rng=rng)
        assert width == pytest.approx(2 * np.sqrt(5), abs=1e-8)

    def test_chain_width_vs_free_fermions(self, rng, tight_dmrg):
        lat = CylinderLattice(10, 1, y_periodic=False)
        mpo = build_tfi_mpo(lat, static_field_grid(lat, 1.0))
        _, _, width = spectral_bandwidth(mpo, tight_dmrg, rng=rng)
        assert width == pytest.approx(24.762979999309508, abs=1e-6)

    def test_extensive_growth(self, rng, tight_dmrg):
        widths = {}
        for L in (6, 12):
            lat = CylinderLattice(L, 1, y_periodic=False)
            mpo = build_tfi_mpo(lat, static_field_grid(lat, 1.0))
            _, _, widths[L] = spectral_bandwidth(mpo, tight_dmrg, rng=rng)
        assert widths[12] / widths[6] == pytest.approx(2.0, rel=0.15)


class TestInstantaneousGroundStates:
    def test_limits_and_caching(self, rng, tight_dmrg):
        lat = CylinderLattice(2, 3, y_periodic=True)
        params = ModelParams(gc=2.5, h=12.5, v=2.0, tau=0.4)
        cache = InstantaneousGroundStates(lat, params, tight_dmrg, rng=rng)
        e_t0, grid, _ = cache.at(params.t0)
        mpo0 = build_tfi_mpo(lat, field_grid(lat, params, params.t0))
        w, _ = dense_spectrum(lat, field_grid(lat, params, params.t0), k=1)
        assert abs(e_t0 - w[0]) / abs(w[0]) < 1e-8
        assert sum(grid.values()) == pytest.approx(e_t0, abs=1e-8)
        assert cache.at(params.t0) is cache.at(params.t0)

    def test_mid_quench_matches_dense(self, rng, tight_dmrg):
        lat = CylinderLattice(3, 4, y_periodic=True)
        params = ModelParams(gc=2.8, h=14.0, v=2.0, tau=0.4)
        cache = InstantaneousGroundStates(lat, params, tight_dmrg, rng=rng)
        t = 0.21
        e_t, _, _ = cache.at(t)
        w, _ = dense_spectrum(lat, field_grid(lat, params, t), k=1)
        assert abs(e_t - w[0]) / abs(w[0]) < 1e-8
