"""Variational minimization of cluster energies over circuit parameters.

Single starts wrap scipy optimizers around the exact (or sampled) channel
expectation; multi-start keeps the best of a seeded batch.  The landscape
scan sweeps the single-site self-consistency cost over an (R, lambda) grid
with the one-parameter ansatz tuned analytically at each node.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .circuits import Circuit, build_mr_nc1
from .ed import ed_rdm1, ground_state, half_filling_sector
from .embedding import LatticeSpec, SymMatrix, risb_cost
from .estimator import (expectation, measure_rdm1, parameter_shift_minimize,
                        sample_expectation)
from .pauli import PauliSum
from .simulator import NoiseModel, run, run_many

GRADIENT_STEP = 1e-6
GRADIENT_TOL = 1e-8


@dataclass
class VqeResult:
    """Best point of one optimization (or of a multi-start batch)."""

    best_params: np.ndarray
    best_energy: float
    trace: list
    n_starts: int
    converged: bool
    parameter_names: tuple
    n_iter: int = 0
    wall_seconds: float = 0.0
    start_energies: list = field(default_factory=list)
    start_traces: list = field(default_factory=list)

    def bindings(self) -> dict:
        return dict(zip(self.parameter_names, self.best_params))


def _objective(circuit: Circuit, observable: PauliSum,
               noise: NoiseModel | None, n_shots: int | None,
               shot_rng) -> Callable:
    names = circuit.parameter_names

    def energy(x: np.ndarray) -> float:
        state = run(circuit, dict(zip(names, x)), noise=noise)
        if n_shots:
            value = sample_expectation(state, observable, n_shots,
                                       seed=int(shot_rng.integers(2 ** 63)))
        else:
            value = expectation(state, observable)
        if not math.isfinite(value):
            raise RuntimeError(f"objective diverged to {value}")
        return value

    return energy


def finite_difference_gradient(fn: Callable, x: np.ndarray,
                               step: float = GRADIENT_STEP) -> np.ndarray:
    """Central-difference gradient on angle vectors."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        shift = np.zeros_like(x)
        shift[i] = step
        grad[i] = (fn(x + shift) - fn(x - shift)) / (2.0 * step)
    return grad


def _batched_gradient(circuit: Circuit, observable: PauliSum,
                      noise: NoiseModel | None) -> Callable:
    """Central-difference gradient with all shifted points executed in one
    vectorized pass; identical values to finite_difference_gradient."""
    names = circuit.parameter_names

    def gradient(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        points = np.repeat(x[None, :], 2 * x.size, axis=0)
        rows = np.arange(x.size)
        points[2 * rows, rows] += GRADIENT_STEP
        points[2 * rows + 1, rows] -= GRADIENT_STEP
        states = run_many(circuit, [dict(zip(names, p)) for p in points],
                          noise=noise)
        values = np.array([expectation(s, observable) for s in states])
        if not np.all(np.isfinite(values)):
            bad = values[~np.isfinite(values)][0]
            raise RuntimeError(f"objective diverged to {bad}")
        return (values[0::2] - values[1::2]) / (2.0 * GRADIENT_STEP)

    return gradient


def vqe_minimize(observable: PauliSum, ansatz: Circuit,
                 optimizer: str = "bfgs",
                 noise: NoiseModel | None = None,
                 seed: int | None = None,
                 max_iter: int = 10_000,
                 x0: Sequence[float] | None = None,
                 n_shots: int | None = None) -> VqeResult:
    """Minimize <observable> over the ansatz angles.

    BFGS differentiates the exact channel expectation by central
    differences; finite-shot objectives are stochastic, so they are
    restricted to the simplex optimizer.
    """
    names = ansatz.parameter_names
    if not names:
        raise ValueError("ansatz has no free parameters")
    optimizer = optimizer.lower().replace("-", "").replace("_", "")
    if optimizer not in ("bfgs", "neldermead"):
        raise ValueError(f"unknown optimizer {optimizer!r}")
    if n_shots and optimizer == "bfgs":
        raise ValueError("finite-shot objectives need the gradient-free "
                         "optimizer")
    rng = np.random.default_rng(seed)
    if x0 is None:
        x0 = rng.uniform(-math.pi, math.pi, len(names))
    x0 = np.asarray(x0, dtype=float)
    if x0.size != len(names):
        raise ValueError(f"{x0.size} initial angles for {len(names)} "
                         f"parameters")

    raw = _objective(ansatz, observable, noise, n_shots, rng)
    trace: list[tuple[int, float]] = []
    best = {"energy": math.inf, "x": x0.copy()}

    def traced(x: np.ndarray) -> float:
        value = raw(x)
        trace.append((len(trace), value))
        if value < best["energy"]:
            best.update(energy=value, x=np.asarray(x, dtype=float).copy())
        return value

    started = time.perf_counter()
    if optimizer == "bfgs":
        result = minimize(traced, x0, method="BFGS",
                          jac=_batched_gradient(ansatz, observable, noise),
                          options={"gtol": GRADIENT_TOL,
                                   "maxiter": max_iter})
    else:
        result = minimize(traced, x0, method="Nelder-Mead",
                          options={"maxiter": max_iter, "xatol": 1e-6,
                                   "fatol": 1e-9})
    return VqeResult(best_params=best["x"], best_energy=best["energy"],
                     trace=trace, n_starts=1,
                     converged=bool(result.success),
                     parameter_names=names, n_iter=int(result.nit),
                     wall_seconds=time.perf_counter() - started)


def multi_start(observable: PauliSum, ansatz: Circuit, n_starts: int = 5,
                seed: int | None = None, **kwargs) -> VqeResult:
    """Best-of-n restarts with starting angles drawn from one seeded
    stream; ties resolve to the earliest start."""
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    rng = np.random.default_rng(seed)
    n_params = len(ansatz.parameter_names)
    winner: VqeResult | None = None
    energies: list[float] = []
    traces: list[list] = []
    for index in range(n_starts):
        x0 = rng.uniform(-math.pi, math.pi, n_params)
        outcome = vqe_minimize(observable, ansatz, x0=x0,
                               seed=int(rng.integers(2 ** 63)), **kwargs)
        energies.append(outcome.best_energy)
        traces.append(outcome.trace)
        if winner is None or outcome.best_energy < winner.best_energy:
            winner = outcome
    winner.n_starts = n_starts
    winner.start_energies = energies
    winner.start_traces = traces
    return winner


def mr_impurity_solver(noise: NoiseModel | None = None) -> Callable:
    """Single-site cluster solver built on the two-determinant circuit.

    The cluster is rotated to its natural orbitals (from the exact
    half-filled ground state), the one free angle is tuned analytically,
    and the measured density matrix is rotated back.  Depolarizing noise
    acts on every circuit run, including the measurement of the density
    matrix itself.
    """
    circuit = build_mr_nc1()

    def solve(emb) -> np.ndarray:
        gs = ground_state(emb, half_filling_sector(emb.n_c))
        _, vecs = np.linalg.eigh(ed_rdm1(gs.state, emb.n_c).matrix)
        basis = vecs[:, ::-1]
        rotated = emb.orbital().rotate(basis)
        fit = parameter_shift_minimize(circuit, rotated.to_pauli(),
                                       noise=noise)
        state = run(circuit, {"theta": fit.theta}, noise=noise)
        with warnings.catch_warnings():
            # Unequal gate counts on the two spin registers make channel
            # noise slightly spin-asymmetric; averaging is intended here.
            warnings.filterwarnings("ignore", message="spin blocks")
            rdm = measure_rdm1(state, emb.n_c).matrix
        return basis @ rdm @ basis.conj().T

    return solve


@dataclass(frozen=True)
class LandscapeTable:
    """Self-consistency cost over an (R, lambda) grid per noise scale."""

    r_values: np.ndarray
    lambda_values: np.ndarray
    noise_scales: tuple
    costs: np.ndarray

    def min_node(self, scale_index: int = 0) -> tuple[int, int]:
        sheet = self.costs[scale_index]
        flat = int(np.argmin(sheet))
        return flat // sheet.shape[1], flat % sheet.shape[1]


def landscape_scan(spec: LatticeSpec, r_values, lambda_values,
                   noise_scales: Sequence[float] = (0.0,),
                   base_noise: NoiseModel | None = None) -> LandscapeTable:
    """Cost of the single-site self-consistency on a rectangular grid.

    Each node runs the full pipeline with the circuit-based cluster solver
    at every requested fraction of the base noise level.
    """
    if spec.n_c != 1:
        raise ValueError("landscape scans cover the single-site pipeline")
    r_values = np.asarray(r_values, dtype=float)
    lambda_values = np.asarray(lambda_values, dtype=float)
    if r_values.size == 0 or lambda_values.size == 0:
        raise ValueError("grid is empty")
    costs = np.empty((len(noise_scales), r_values.size, lambda_values.size))
    for s, scale in enumerate(noise_scales):
        noise = None
        if scale > 0.0:
            if base_noise is None:
                raise ValueError("positive noise scale needs a base noise "
                                 "model")
            noise = base_noise.scaled(scale)
        solver = mr_impurity_solver(noise)
        for i, r in enumerate(r_values):
            for j, lam in enumerate(lambda_values):
                report = risb_cost(SymMatrix(float(r)),
                                   SymMatrix(float(lam)), spec,
                                   impurity_solver=solver)
                costs[s, i, j] = report.cost
    return LandscapeTable(r_values=r_values, lambda_values=lambda_values,
                          noise_scales=tuple(noise_scales), costs=costs)
