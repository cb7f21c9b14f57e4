"""Exact diagonalization of small fermionic clusters.

The matrix is assembled directly in the occupation-number basis with
explicit sign bookkeeping, sharing nothing with the Pauli-compilation
route, so the two constructions can cross-check each other.  Mode p sits on
bit p counted from the most significant end of the basis index, matching
the qubit layout used elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .estimator import Rdm1
from .hamiltonians import EmbeddingHamiltonian, OrbitalHamiltonian

MODE_CAP = 12
DEGENERACY_RTOL = 1e-9


@dataclass(frozen=True)
class SectorLabel:
    """Conserved quantum numbers: particle count and 2*Sz."""

    n_particles: int
    sz_twice: int


def half_filling_sector(n_c: int) -> SectorLabel:
    return SectorLabel(n_particles=2 * n_c, sz_twice=0)


def _orbital(ham) -> OrbitalHamiltonian:
    if isinstance(ham, EmbeddingHamiltonian):
        return ham.orbital()
    return ham


def _occ(index: int, mode: int, n_modes: int) -> int:
    return (index >> (n_modes - 1 - mode)) & 1


def _parity_sign(index: int, mode: int, n_modes: int) -> int:
    # Fermionic sign from occupied modes preceding `mode` (the higher bits).
    return -1 if bin(index >> (n_modes - mode)).count("1") % 2 else 1


def _apply_ladder(index: int, mode: int, dagger: bool,
                  n_modes: int) -> tuple[int, int] | None:
    occupied = _occ(index, mode, n_modes)
    if dagger == bool(occupied):
        return None
    sign = _parity_sign(index, mode, n_modes)
    return index ^ (1 << (n_modes - 1 - mode)), sign


def sector_of(index: int, n_modes: int) -> SectorLabel:
    half = n_modes // 2
    n_up = bin(index >> half).count("1")
    n_dn = bin(index & ((1 << half) - 1)).count("1")
    return SectorLabel(n_up + n_dn, n_up - n_dn)


def sector_basis(n_modes: int, sector: SectorLabel | None) -> list[int]:
    if sector is None:
        return list(range(2 ** n_modes))
    if not 0 <= sector.n_particles <= n_modes:
        raise ValueError(f"sector {sector} impossible for {n_modes} modes")
    return [i for i in range(2 ** n_modes)
            if sector_of(i, n_modes) == sector]


def hamiltonian_matrix(ham, sector: SectorLabel | None = None) -> np.ndarray:
    """Dense Hamiltonian over the (sector-restricted) Fock basis."""
    orb = _orbital(ham)
    m = orb.n_modes
    if m > MODE_CAP:
        raise ValueError(f"{m} modes exceeds the dense cap {MODE_CAP}")
    basis = sector_basis(m, sector)
    position = {idx: col for col, idx in enumerate(basis)}
    dim = len(basis)
    out = np.zeros((dim, dim), dtype=complex)
    for coeff, ops in orb.to_fermion_operator().terms:
        for col, start in enumerate(basis):
            state, sign = start, 1
            dead = False
            for mode, dagger in reversed(ops):
                step = _apply_ladder(state, mode, dagger, m)
                if step is None:
                    dead = True
                    break
                state, s = step
                sign *= s
            if dead:
                continue
            row = position.get(state)
            if row is None:
                raise ValueError("term leaves the requested sector")
            out[row, col] += sign * coeff
    return out


class GroundState(NamedTuple):
    energy: float
    state: np.ndarray
    degeneracy: int


def ground_state(ham, sector: SectorLabel | None = None) -> GroundState:
    """Lowest eigenpair, embedded back into the full 2^m amplitude space."""
    orb = _orbital(ham)
    m = orb.n_modes
    basis = sector_basis(m, sector)
    matrix = hamiltonian_matrix(orb, sector)
    vals, vecs = np.linalg.eigh(matrix)
    e0 = float(vals[0])
    tol = DEGENERACY_RTOL * max(1.0, abs(e0))
    degeneracy = int(np.sum(vals <= e0 + tol))
    full = np.zeros(2 ** m, dtype=complex)
    full[basis] = vecs[:, 0]
    return GroundState(e0, full, degeneracy)


def ed_rdm1_full(psi: np.ndarray) -> np.ndarray:
    """<c+_p c_q> over every mode, straight from amplitudes."""
    psi = np.asarray(psi).ravel()
    m = int(round(np.log2(psi.size)))
    if 2 ** m != psi.size:
        raise ValueError("amplitude vector length is not a power of two")
    rdm = np.zeros((m, m), dtype=complex)
    for idx in np.flatnonzero(np.abs(psi) > 1e-16):
        amp = psi[idx]
        for q in range(m):
            step = _apply_ladder(int(idx), q, dagger=False, n_modes=m)
            if step is None:
                continue
            mid, s1 = step
            for p in range(m):
                step2 = _apply_ladder(mid, p, dagger=True, n_modes=m)
                if step2 is None:
                    continue
                final, s2 = step2
                rdm[p, q] += np.conj(psi[final]) * amp * s1 * s2
    return rdm


def ed_rdm1(psi: np.ndarray, n_c: int, spin_average: bool = True) -> Rdm1:
    """Per-spin 1-RDM of an embedded-cluster eigenstate."""
    full = ed_rdm1_full(psi)
    if full.shape[0] != 4 * n_c:
        raise ValueError(f"state covers {full.shape[0]} modes, expected "
                         f"{4 * n_c}")
    up = full[:2 * n_c, :2 * n_c]
    if not spin_average:
        return Rdm1(up)
    down = full[2 * n_c:, 2 * n_c:]
    return Rdm1(0.5 * (up + down))
