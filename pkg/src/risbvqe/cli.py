"""Batch experiment driver.

Commands
    vqe           multi-start ground-state searches on the self-consistent
                  cluster Hamiltonian, one trace file per seed
    noize         iterative basis-update run plus an exact-NO reference
    risb-sweep    self-consistency along a U grid (exact or circuit solver)
    landscape     cost over an (R, lambda) grid for the single-site problem
    ed-reference  classical sweep used as the warm-start table

Configuration is an INI file; every key is optional.  Grammar, with
defaults:

    [run]
    kind =                 ; normally left empty, the subcommand fills it
    seed = 7

    [lattice]
    n_c = 1                ; cluster size, 1 or 2
    t = -0.25              ; hopping
    u = 1.0                ; interaction for single-point commands
    mesh = 0               ; k-points per axis, 0 = cluster-size default
    beta = 0.0             ; inverse temperature, 0 = cluster-size default

    [sweep]
    u_start = 0.05
    u_stop = 3.0
    u_step = 0.05
    u_values =             ; comma list, overrides start/stop/step

    [ansatz]
    tag = mrep             ; ed | mr | mrep | ldca | hea
    layers = 4             ; mrep depth
    cycles = 1             ; ldca depth
    basis = exact-no       ; original | exact-no | noize

    [optimizer]
    tag = bfgs             ; bfgs | nelder-mead
    n_starts = 3
    max_iter = 10000       ; circuit-optimizer iteration cap
    noize_steps = 3
    risb_max_iter = 100    ; outer self-consistency iteration cap

    [noise]
    mode = off             ; off | calibrated | scale
    scale = 1.0            ; fraction of the calibrated level in scale mode
    eps1 = 0.0016          ; one-qubit benchmarking error rate
    eps2 = 0.006           ; two-qubit benchmarking error rate

    [landscape]
    r_start = 0.8
    r_stop = 1.2
    r_num = 5
    lam_start = 0.01
    lam_stop = 0.09
    lam_num = 5

    [output]
    dir = runs
    label = run
    classical_table =      ; sweep CSV warm-starting circuit-solver sweeps

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .circuits import (Circuit, build_hea_nc1, build_ldca, build_mr_nc1,
                       build_mrep)
from .ed import ground_state, half_filling_sector
from .embedding import (LatticeSpec, SymMatrix, classical_point, eps_loc,
                        risb_sweep)
from .noization import exact_no_basis, noize, rotate_hamiltonian, \
    vqe_impurity_solver
from .runio import config_hash, read_table, write_csv, write_json
from .simulator import calibrate_noise
from .vqe import landscape_scan, multi_start, vqe_minimize

KINDS = ("vqe", "noize", "risb-sweep", "landscape", "ed-reference")
ANSATZE = ("ed", "mr", "mrep", "ldca", "hea")
BASES = ("original", "exact-no", "noize")
OPTIMIZERS = ("bfgs", "nelder-mead")
NOISE_MODES = ("off", "calibrated", "scale")

SWEEP_COLUMNS = ("U", "Z_plus", "Z_minus", "lambda_tilde_plus",
                 "lambda_tilde_minus", "cost_final", "n_iter",
                 "solver_tag", "noise_tag")


class ConfigError(Exception):
    """Rejected configuration; the driver maps it to exit code 2."""


@dataclass(frozen=True)
class RunConfig:
    """Flat, fully-typed view of one experiment configuration."""

    kind: str = ""
    seed: int = 7
    n_c: int = 1
    t: float = -0.25
    u: float = 1.0
    mesh: int = 0
    beta: float = 0.0
    u_start: float = 0.05
    u_stop: float = 3.0
    u_step: float = 0.05
    u_values: str = ""
    ansatz: str = "mrep"
    layers: int = 4
    cycles: int = 1
    basis: str = "exact-no"
    optimizer: str = "bfgs"
    n_starts: int = 3
    max_iter: int = 10_000
    noize_steps: int = 3
    risb_max_iter: int = 100
    noise_mode: str = "off"
    noise_scale: float = 1.0
    eps1: float = 0.0016
    eps2: float = 0.006
    r_start: float = 0.8
    r_stop: float = 1.2
    r_num: int = 5
    lam_start: float = 0.01
    lam_stop: float = 0.09
    lam_num: int = 5
    out_dir: str = "runs"
    label: str = "run"
    classical_table: str = ""


# (section, key, config field, value type)
SCHEMA = (
    ("run", "kind", "kind", str),
    ("run", "seed", "seed", int),
    ("lattice", "n_c", "n_c", int),
    ("lattice", "t", "t", float),
    ("lattice", "u", "u", float),
    ("lattice", "mesh", "mesh", int),
    ("lattice", "beta", "beta", float),
    ("sweep", "u_start", "u_start", float),
    ("sweep", "u_stop", "u_stop", float),
    ("sweep", "u_step", "u_step", float),
    ("sweep", "u_values", "u_values", str),
    ("ansatz", "tag", "ansatz", str),
    ("ansatz", "layers", "layers", int),
    ("ansatz", "cycles", "cycles", int),
    ("ansatz", "basis", "basis", str),
    ("optimizer", "tag", "optimizer", str),
    ("optimizer", "n_starts", "n_starts", int),
    ("optimizer", "max_iter", "max_iter", int),
    ("optimizer", "noize_steps", "noize_steps", int),
    ("optimizer", "risb_max_iter", "risb_max_iter", int),
    ("noise", "mode", "noise_mode", str),
    ("noise", "scale", "noise_scale", float),
    ("noise", "eps1", "eps1", float),
    ("noise", "eps2", "eps2", float),
    ("landscape", "r_start", "r_start", float),
    ("landscape", "r_stop", "r_stop", float),
    ("landscape", "r_num", "r_num", int),
    ("landscape", "lam_start", "lam_start", float),
    ("landscape", "lam_stop", "lam_stop", float),
    ("landscape", "lam_num", "lam_num", int),
    ("output", "dir", "out_dir", str),
    ("output", "label", "label", str),
    ("output", "classical_table", "classical_table", str),
)


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    known = {(section, key) for section, key, _, _ in SCHEMA}
    sections = {section for section, _, _, _ in SCHEMA}
    for section in parser.sections():
        if section not in sections:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if (section, key) not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
    values: dict = {}
    for section, key, field, kind in SCHEMA:
        if not parser.has_option(section, key):
            continue
        raw = parser.get(section, key)
        if kind is str:
            values[field] = raw.strip()
            continue
        try:
            values[field] = kind(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: expected "
                              f"{kind.__name__}, got {raw!r}") from exc
    cfg = RunConfig(**values)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    def choose(value, allowed, where):
        if value not in allowed:
            raise ConfigError(f"{where} must be one of "
                              f"{', '.join(allowed)}; got {value!r}")

    if cfg.kind:
        choose(cfg.kind, KINDS, "[run] kind")
    choose(cfg.ansatz, ANSATZE, "[ansatz] tag")
    choose(cfg.basis, BASES, "[ansatz] basis")
    choose(cfg.optimizer, OPTIMIZERS, "[optimizer] tag")
    choose(cfg.noise_mode, NOISE_MODES, "[noise] mode")
    if cfg.n_c not in (1, 2):
        raise ConfigError("[lattice] n_c must be 1 or 2")
    if cfg.mesh < 0 or cfg.beta < 0:
        raise ConfigError("[lattice] mesh and beta must be nonnegative")
    if cfg.u_step <= 0:
        raise ConfigError("[sweep] u_step must be positive")
    if min(cfg.layers, cfg.cycles, cfg.n_starts, cfg.max_iter,
           cfg.noize_steps, cfg.risb_max_iter) < 1:
        raise ConfigError("iteration and depth counts must be >= 1")
    if not 0.0 <= cfg.noise_scale <= 1.0:
        raise ConfigError("[noise] scale must lie in [0, 1]")
    if cfg.eps1 < 0 or cfg.eps2 < 0:
        raise ConfigError("[noise] error rates must be nonnegative")
    if cfg.r_num < 1 or cfg.lam_num < 1:
        raise ConfigError("[landscape] grid sizes must be >= 1")


def serialize_config(cfg: RunConfig, for_hash: bool = False) -> str:
    """Canonical INI text; `for_hash` drops the command name and output
    naming, which do not influence computed values."""
    skip = {("run", "kind"), ("output", "dir"),
            ("output", "label")} if for_hash else set()
    lines: list[str] = []
    current = None
    for section, key, field, _ in SCHEMA:
        if (section, key) in skip:
            continue
        if section != current:
            if lines:
                lines.append("")
            lines.append(f"[{section}]")
            current = section
        value = getattr(cfg, field)
        if isinstance(value, float):
            value = "%.17g" % value
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def run_hash(cfg: RunConfig) -> str:
    return config_hash(serialize_config(cfg, for_hash=True))


def lattice_spec(cfg: RunConfig, u: float | None = None) -> LatticeSpec:
    try:
        return LatticeSpec(n_c=cfg.n_c, u=cfg.u if u is None else float(u),
                           t=cfg.t, mesh=cfg.mesh or None,
                           beta=cfg.beta or None)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_noise(cfg: RunConfig):
    if cfg.noise_mode == "off":
        return None
    try:
        base = calibrate_noise(cfg.eps1, cfg.eps2)
        if cfg.noise_mode == "scale":
            return base.scaled(cfg.noise_scale)
        return base
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def noise_tag(cfg: RunConfig) -> str:
    if cfg.noise_mode == "scale":
        return "scale%g" % cfg.noise_scale
    return cfg.noise_mode


def build_ansatz(cfg: RunConfig) -> Circuit | None:
    if cfg.ansatz == "ed":
        return None
    if cfg.ansatz in ("mr", "hea") and cfg.n_c != 1:
        raise ConfigError(f"the {cfg.ansatz} ansatz covers only the "
                          "single-site cluster")
    if cfg.ansatz == "mr":
        return build_mr_nc1()
    if cfg.ansatz == "hea":
        return build_hea_nc1()
    if cfg.ansatz == "mrep":
        return build_mrep(n_c=cfg.n_c, n_layers=cfg.layers)
    return build_ldca(n_qubits=4 * cfg.n_c, n_cycles=cfg.cycles)


def u_grid(cfg: RunConfig) -> list[float]:
    if cfg.u_values.strip():
        try:
            us = [float(tok) for tok in cfg.u_values.split(",")
                  if tok.strip()]
        except ValueError as exc:
            raise ConfigError(f"[sweep] u_values: {exc}") from exc
    else:
        us = [float(u) for u in np.arange(cfg.u_start,
                                          cfg.u_stop + cfg.u_step / 2,
                                          cfg.u_step)]
    if not us:
        raise ConfigError("the U grid is empty")
    return us


def _require_circuit(cfg: RunConfig) -> Circuit:
    ansatz = build_ansatz(cfg)
    if ansatz is None:
        raise ConfigError("this command needs a circuit ansatz, not 'ed'")
    return ansatz


def _write_sweep_artifacts(cfg: RunConfig, points, solver_tag: str,
                           ntag: str) -> Path:
    out = Path(cfg.out_dir)
    h = run_hash(cfg)
    rows = []
    for point in points:
        spec_u = lattice_spec(cfg, u=point.u)
        z = point.output.z
        lt = point.output.lambda_tilde(spec_u)
        rows.append((point.u, z.plus, z.minus, lt.plus, lt.minus,
                     point.output.cost, point.output.n_iter, solver_tag,
                     ntag))
        trace_path = out / (f"{cfg.label}_trace_{solver_tag}_{ntag}"
                            f"_u{point.u:g}.csv")
        # cost_trace rows are already (step, cost) pairs
        write_csv(trace_path, ("step", "cost"),
                  point.output.cost_trace, h)
    sweep_path = out / f"{cfg.label}_sweep_{solver_tag}_{ntag}.csv"
    write_csv(sweep_path, SWEEP_COLUMNS, rows, h)
    return sweep_path


def run_classical_sweep(cfg: RunConfig) -> Path:
    """Exact-solver sweep; the ed-reference command and the ED branch of
    risb-sweep both land here, so their artifacts are identical."""
    us = u_grid(cfg)
    if us[0] > 1e-12:
        us = [0.0] + us
    spec = lattice_spec(cfg, u=0.0)
    points = risb_sweep(spec, us, max_iter=cfg.risb_max_iter)
    return _write_sweep_artifacts(cfg, points, "ed", "off")


def load_reference(cfg: RunConfig) -> dict:
    """Warm-start table from a classical sweep CSV.

    R is recovered as sqrt(Z) (classical solutions keep R positive) and
    lambda from lambda-tilde via the local level at half filling, where
    particle-hole symmetry pins mu to U/2.
    """
    if not cfg.classical_table:
        raise ConfigError("a classical reference table is required; set "
                          "[output] classical_table")
    path = Path(cfg.classical_table)
    if not path.exists():
        raise ConfigError(f"classical reference table {path} not found")
    rows = read_table(path)
    if not rows:
        raise ConfigError(f"classical reference table {path} is empty")
    mapping: dict = {}
    for row in rows:
        try:
            u = float(row["U"])
            z_plus = max(float(row["Z_plus"]), 0.0)
            z_minus = row["Z_minus"]
            lt_plus = float(row["lambda_tilde_plus"])
            lt_minus = row["lambda_tilde_minus"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed reference table {path}: "
                              f"{exc}") from exc
        local = eps_loc(lattice_spec(cfg, u=u), 0.5 * u)
        if cfg.n_c == 1 or (isinstance(z_minus, float)
                            and math.isnan(z_minus)):
            r = SymMatrix(math.sqrt(z_plus))
            lam = SymMatrix(lt_plus + local.plus)
        else:
            r = SymMatrix(math.sqrt(z_plus),
                          math.sqrt(max(float(z_minus), 0.0)))
            lam = SymMatrix(lt_plus + local.plus,
                            float(lt_minus) + local.minus)
        mapping[u] = (r, lam)
    return mapping


def cmd_ed_reference(cfg: RunConfig) -> int:
    run_classical_sweep(cfg)
    return 0


def cmd_risb_sweep(cfg: RunConfig) -> int:
    if cfg.ansatz == "ed":
        run_classical_sweep(cfg)
        return 0
    reference = load_reference(cfg)
    ansatz = _require_circuit(cfg)
    noise = build_noise(cfg)
    solver = vqe_impurity_solver(ansatz, basis=cfg.basis, noise=noise,
                                 n_starts=cfg.n_starts, seed=cfg.seed,
                                 optimizer=cfg.optimizer,
                                 max_iter=cfg.max_iter,
                                 n_steps=cfg.noize_steps)
    us = u_grid(cfg)
    spec = lattice_spec(cfg, u=us[0])
    points = risb_sweep(spec, us, solver, reference=reference,
                        max_iter=cfg.risb_max_iter)
    _write_sweep_artifacts(cfg, points, cfg.ansatz, noise_tag(cfg))
    return 0


def cmd_vqe(cfg: RunConfig) -> int:
    if cfg.basis == "noize":
        raise ConfigError("iterative basis updates belong to the noize "
                          "command; pick original or exact-no here")
    ansatz = _require_circuit(cfg)
    noise = build_noise(cfg)
    ntag = noise_tag(cfg)
    out = Path(cfg.out_dir)
    h = run_hash(cfg)
    records = []
    for u in u_grid(cfg):
        spec = lattice_spec(cfg, u=u)
        _, report = classical_point(spec)
        emb = report.emb
        e0 = ground_state(emb, half_filling_sector(cfg.n_c)).energy
        orbital = emb.orbital()
        if cfg.basis == "exact-no":
            orbital = rotate_hamiltonian(orbital, exact_no_basis(emb))
        observable = orbital.to_pauli()
        energies = []
        for i in range(cfg.n_starts):
            seed = cfg.seed + i
            fit = vqe_minimize(observable, ansatz,
                               optimizer=cfg.optimizer, noise=noise,
                               seed=seed, max_iter=cfg.max_iter)
            trace_path = out / (f"{cfg.label}_vqe_{cfg.ansatz}_{cfg.basis}"
                                f"_{ntag}_u{u:g}_s{seed}.csv")
            write_csv(trace_path, ("step", "energy"), fit.trace, h)
            energies.append(fit.best_energy)
        best = min(energies)
        records.append({"u": u, "e0": e0, "energies": energies,
                        "best_energy": best,
                        "rel_error": abs(best - e0) / abs(e0)})
    write_json(out / (f"{cfg.label}_vqe_{cfg.ansatz}_{cfg.basis}_{ntag}"
                      "_summary.json"),
               {"runs": records}, h)
    return 0


def cmd_noize(cfg: RunConfig) -> int:
    if cfg.ansatz == "mr":
        # a superposition of two determinants that differ by a double
        # excitation has a diagonal 1-RDM at every angle, so the measured
        # rotation never leaves the starting basis
        raise ConfigError("the two-determinant circuit cannot drive the "
                          "basis iteration; use mrep, ldca, or hea")
    ansatz = _require_circuit(cfg)
    noise = build_noise(cfg)
    spec = lattice_spec(cfg)
    _, report = classical_point(spec)
    emb = report.emb
    e0 = ground_state(emb, half_filling_sector(cfg.n_c)).energy
    result = noize(emb, ansatz=ansatz, n_steps=cfg.noize_steps,
                   n_starts=cfg.n_starts, seed=cfg.seed, noise=noise,
                   optimizer=cfg.optimizer, max_iter=cfg.max_iter)
    rotated = rotate_hamiltonian(emb.orbital(), exact_no_basis(emb))
    reference = multi_start(rotated.to_pauli(), ansatz,
                            n_starts=cfg.n_starts, seed=cfg.seed + 1,
                            optimizer=cfg.optimizer, noise=noise,
                            max_iter=cfg.max_iter)
    payload = {"u": cfg.u, "e0": e0,
               "exact_no_energy": reference.best_energy,
               "steps": result.reports}
    write_json(Path(cfg.out_dir) / (f"{cfg.label}_noize_{cfg.ansatz}"
                                    f"_{noise_tag(cfg)}.json"),
               payload, run_hash(cfg))
    return 0


def cmd_landscape(cfg: RunConfig) -> int:
    if cfg.n_c != 1:
        raise ConfigError("landscape scans cover the single-site pipeline")
    r_values = np.linspace(cfg.r_start, cfg.r_stop, cfg.r_num)
    lam_values = np.linspace(cfg.lam_start, cfg.lam_stop, cfg.lam_num)
    if cfg.noise_mode == "off":
        scales, base = (0.0,), None
    else:
        scales = (cfg.noise_scale if cfg.noise_mode == "scale" else 1.0,)
        base = calibrate_noise(cfg.eps1, cfg.eps2)
    table = landscape_scan(lattice_spec(cfg), r_values, lam_values,
                           noise_scales=scales, base_noise=base)
    rows = []
    for s, scale in enumerate(table.noise_scales):
        for i, r in enumerate(table.r_values):
            for j, lam in enumerate(table.lambda_values):
                rows.append((scale, r, lam, table.costs[s, i, j]))
    write_csv(Path(cfg.out_dir) / (f"{cfg.label}_landscape"
                                   f"_{noise_tag(cfg)}.csv"),
              ("scale", "R", "lambda", "cost"), rows, run_hash(cfg))
    return 0


COMMANDS = {
    "vqe": cmd_vqe,
    "noize": cmd_noize,
    "risb-sweep": cmd_risb_sweep,
    "landscape": cmd_landscape,
    "ed-reference": cmd_ed_reference,
}


def parse_noise_flag(value: str) -> tuple[str, float]:
    if value in ("off", "calibrated"):
        return value, 1.0
    if value.startswith("scale="):
        try:
            return "scale", float(value[len("scale="):])
        except ValueError as exc:
            raise ConfigError(f"--noise {value!r}: {exc}") from exc
    raise ConfigError(f"--noise must be off, calibrated, or scale=X; "
                      f"got {value!r}")


def set_threads(n: int) -> None:
    # Best effort: honored by BLAS pools spawned after this point.
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risbvqe",
        description="Slave-boson embedding experiments with circuit-based "
                    "cluster solvers")
    subparsers = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sub = subparsers.add_parser(kind)
        sub.add_argument("--config", metavar="PATH",
                         help="INI configuration file")
        sub.add_argument("--seed", type=int, metavar="N")
        sub.add_argument("--out", metavar="DIR",
                         help="output directory (default from config)")
        sub.add_argument("--threads", type=int, metavar="N")
        sub.add_argument("--noise", metavar="MODE",
                         help="off, calibrated, or scale=X")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    text = ""
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"configuration file {path} not found")
        text = path.read_text(encoding="utf-8")
    cfg = replace(parse_config(text), kind=args.kind)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    if args.noise:
        mode, scale = parse_noise_flag(args.noise)
        cfg = replace(cfg, noise_mode=mode, noise_scale=scale)
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        set_threads(args.threads)
    validate_config(cfg)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.kind](load_config(args))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ValueError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
