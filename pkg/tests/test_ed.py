"""Fock-space diagonalization cross-checked against the Pauli route and
analytic fillings."""

import math

import numpy as np
import pytest

from risbvqe.circuits import build_mr_nc1
from risbvqe.ed import (GroundState, SectorLabel, ed_rdm1, ed_rdm1_full,
                        ground_state, half_filling_sector,
                        hamiltonian_matrix, sector_basis, sector_of)
from risbvqe.estimator import (measure_rdm1, measure_rdm1_full,
                               parameter_shift_minimize)
from risbvqe.hamiltonians import EmbeddingHamiltonian, OrbitalHamiltonian
from risbvqe.simulator import QuantumState

RNG = np.random.default_rng(40813)


def random_embedding(rng) -> EmbeddingHamiltonian:
    return EmbeddingHamiltonian(n_c=1, u_int=rng.uniform(0, 3),
                                d_mix=[[rng.uniform(-1, 1)]],
                                lambda_c=[[rng.uniform(-1, 1)]],
                                mu=rng.uniform(-1, 1))


class TestSectors:
    def test_sector_of(self):
        assert sector_of(0b1010, 4) == SectorLabel(2, 0)
        assert sector_of(0b1100, 4) == SectorLabel(2, 2)
        assert sector_of(0b0001, 4) == SectorLabel(1, -1)

    def test_basis_sizes(self):
        assert len(sector_basis(4, SectorLabel(2, 0))) == 4
        assert len(sector_basis(8, half_filling_sector(2))) == 36
        assert len(sector_basis(4, None)) == 16

    def test_impossible_sector(self):
        with pytest.raises(ValueError):
            sector_basis(4, SectorLabel(9, 0))

    def test_blocks_never_mix(self):
        full = hamiltonian_matrix(random_embedding(RNG))
        for col in range(16):
            for row in np.flatnonzero(np.abs(full[:, col]) > 1e-14):
                assert sector_of(int(row), 4) == sector_of(col, 4)


class TestGroundState:
    def test_matches_pauli_route(self):
        for _ in range(6):
            emb = random_embedding(RNG)
            via_fock = np.sort(np.linalg.eigvalsh(hamiltonian_matrix(emb)))
            via_pauli = np.sort(np.linalg.eigvalsh(emb.orbital().matrix()))
            np.testing.assert_allclose(via_fock, via_pauli, atol=1e-9)

    def test_free_fermion_energy(self):
        emb = EmbeddingHamiltonian(n_c=1, u_int=0.0, d_mix=[[-0.4]],
                                   lambda_c=[[0.004]], mu=0.1)
        eps = np.linalg.eigvalsh(emb.orbital().h)
        want = eps[eps < 0].sum() + emb.orbital().const
        assert abs(ground_state(emb).energy - want) < 1e-12

    def test_decoupled_additivity(self):
        emb = EmbeddingHamiltonian(n_c=1, u_int=2.2, d_mix=[[0.0]],
                                   lambda_c=[[0.3]], mu=0.15)
        # Impurity minimum: occupy one spin (-mu < 0, U-2mu > 0 here);
        # bath level -(lambda_c + mu) < 0 fills both spins.
        imp_e = min(0.0, -emb.mu, 2 * -emb.mu + emb.u_int)
        bath_level = -(0.3 + emb.mu)
        bath_e = min(0.0, bath_level, 2 * bath_level)
        want = imp_e + bath_e + 2 * 0.3
        assert abs(ground_state(emb).energy - want) < 1e-12

    def test_sector_restriction_is_variational(self):
        emb = random_embedding(RNG)
        sector_e = ground_state(emb, half_filling_sector(1)).energy
        assert sector_e >= ground_state(emb).energy - 1e-12

    def test_state_stays_in_sector(self):
        emb = random_embedding(RNG)
        gs = ground_state(emb, SectorLabel(2, 0))
        for idx in np.flatnonzero(np.abs(gs.state) > 1e-12):
            assert sector_of(int(idx), 4) == SectorLabel(2, 0)
        assert abs(np.linalg.norm(gs.state) - 1.0) < 1e-12

    def test_degeneracy_count(self):
        emb = EmbeddingHamiltonian(n_c=1, u_int=1.0, d_mix=[[0.0]],
                                   lambda_c=[[0.0]], mu=0.0)
        gs = ground_state(emb)
        assert gs.energy == pytest.approx(0.0, abs=1e-12)
        assert gs.degeneracy == 12

    def test_mode_cap(self):
        with pytest.raises(ValueError):
            hamiltonian_matrix(OrbitalHamiltonian(np.zeros((14, 14))))


class TestRdm1:
    def test_slater_determinant_idempotent(self):
        emb = EmbeddingHamiltonian(n_c=1, u_int=0.0, d_mix=[[-0.4]],
                                   lambda_c=[[0.004]], mu=0.0)
        rho = ed_rdm1_full(ground_state(emb, SectorLabel(2, 0)).state)
        np.testing.assert_allclose(rho @ rho, rho, atol=1e-10)

    def test_matches_estimator_route(self):
        emb = random_embedding(RNG)
        psi = ground_state(emb, SectorLabel(2, 0)).state
        state = QuantumState.from_vector(psi)
        got = ed_rdm1(psi, n_c=1).matrix
        want = measure_rdm1(state, n_c=1).matrix
        np.testing.assert_allclose(got, want, atol=1e-10)
        np.testing.assert_allclose(ed_rdm1_full(psi),
                                   measure_rdm1_full(state), atol=1e-10)

    def test_occupations_in_range(self):
        emb = random_embedding(RNG)
        rdm = ed_rdm1(ground_state(emb).state, n_c=1)
        assert rdm.occupations.min() >= -1e-10
        assert rdm.occupations.max() <= 1 + 1e-10


class TestNaturalOrbitalExactness:
    def test_mr_hits_ground_energy_in_no_basis(self):
        # In the basis diagonalizing the ground state's 1-RDM, the
        # half-filled single-site cluster ground state takes the paired
        # two-determinant form the MR circuit spans exactly.
        for u_int in (0.0, 1.0, 2.5):
            lam = 0.5 * u_int
            emb = EmbeddingHamiltonian(n_c=1, u_int=u_int, d_mix=[[-0.3]],
                                       lambda_c=[[-lam]], mu=lam)
            gs = ground_state(emb, half_filling_sector(1))
            rdm = ed_rdm1(gs.state, n_c=1).matrix.real
            occ, vecs = np.linalg.eigh(rdm)
            v = vecs[:, ::-1]
            rotated = emb.orbital().rotate(v)
            fit = parameter_shift_minimize(build_mr_nc1(), rotated.to_pauli())
            assert abs(fit.energy - gs.energy) < 1e-8
