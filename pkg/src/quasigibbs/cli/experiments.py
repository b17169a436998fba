"""Experiment runners: one per CLI subcommand.

Each runner fans out over (seed, epsilon) tasks, optionally on a process
pool, and merges rows deterministically by key, so worker count and
scheduling order never change the emitted bytes. Per-task randomness comes
from seeds derived by hashing, never from shared generator state.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Callable

import numpy as np

from .. import perturb
from ..channel import (
    ChannelModel,
    build_model,
    compose_epsilon_channel,
    local_ergodicity_check,
    make_rng,
    validate_cptp,
)
from ..densemath import PAULI_X, PAULI_Y, PAULI_Z, trace_distance
from ..errors import ContractViolationError, QuasigibbsError
from ..gibbs import (
    connected_term_probe,
    diameter_profile,
    gibbs_hamiltonian,
    pauli_transform,
)
from ..lattice import build_graph, build_ring, canonical_edge
from ..steady import dense_fixed_point_oracle, iterate_fixed_point
from .config import ExperimentConfig, ModelSpec, config_hash, derive_seed
from .csvio import write_csv

_LETTERS = {"X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}


def _build_graph_from_spec(spec: ModelSpec):
    if spec.graph_kind == "ring":
        return build_ring(spec.ring_n)
    return build_graph(spec.n, spec.edges)


def _reset_states(spec: ModelSpec, n: int, seed: int) -> list[np.ndarray]:
    rng = make_rng(derive_seed(seed, "reset"))
    lam = spec.lambdas
    if isinstance(lam, dict):
        lam_values = [float(rng.uniform(float(lam["low"]), float(lam["high"]))) for _ in range(n)]
    elif isinstance(lam, (list, tuple)):
        lam_values = [float(v) for v in lam]
    else:
        lam_values = [float(lam)] * n
    if len(lam_values) != n:
        raise ContractViolationError(f"need {n} lambda values, got {len(lam_values)}")

    dirs = spec.directions
    states = []
    for i, lv in enumerate(lam_values):
        if isinstance(dirs, str):
            if dirs == "random":
                v = rng.standard_normal(3)
                v /= np.linalg.norm(v)
            else:
                v = {"x": (1.0, 0, 0), "y": (0, 1.0, 0), "z": (0, 0, 1.0)}[dirs]
        else:
            v = np.asarray(dirs[i], dtype=float)
            v = v / np.linalg.norm(v)
        states.append(
            0.5 * (np.eye(2) + lv * (v[0] * PAULI_X + v[1] * PAULI_Y + v[2] * PAULI_Z))
        )
    return states


def build_model_from_spec(spec: ModelSpec, epsilon: float, seed: int) -> ChannelModel:
    graph = _build_graph_from_spec(spec)
    states = _reset_states(spec, graph.n, seed)
    return build_model(
        graph,
        states,
        spec.correlator_kind,
        epsilon,
        seed=derive_seed(seed, "correlator"),
        k=spec.correlator_k,
        rank=spec.correlator_rank,
    )


def model_id(cfg: ExperimentConfig, seed: int) -> str:
    return f"{cfg.model.correlator_kind}-{cfg.model.num_qubits}q-s{seed}"


def zero_state(n: int) -> np.ndarray:
    rho = np.zeros((2**n, 2**n), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def mixed_state(n: int) -> np.ndarray:
    return np.eye(2**n, dtype=complex) / (2**n)


def _initial_state(cfg: ExperimentConfig, n: int) -> np.ndarray:
    if cfg.params.get("init", "zero") == "mixed":
        return mixed_state(n)
    return zero_state(n)


def _observable(cfg: ExperimentConfig, key: str, default_site: int = 0):
    raw = cfg.params.get(key, {"letter": "Z", "site": default_site})
    letter = str(raw.get("letter", "Z")).upper()
    if letter not in _LETTERS:
        raise ContractViolationError(f"params.{key}.letter must be X, Y or Z")
    return _LETTERS[letter], int(raw.get("site", default_site)), letter


@dataclass
class ExperimentResult:
    paths: list[Path]
    status: str = "ok"


def _fan_out(cfg: ExperimentConfig, task: Callable, keys: list[tuple]) -> list[tuple]:
    """task must be a picklable callable of (cfg, key); results come back
    sorted by key so the merge order is deterministic."""
    bound = partial(task, cfg)
    if cfg.workers > 1 and len(keys) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(bound, keys))
    else:
        results = [bound(k) for k in keys]
    return sorted(zip(keys, results), key=lambda kv: kv[0])


def _seed_eps_keys(cfg: ExperimentConfig) -> list[tuple]:
    return [(si, ei) for si in range(len(cfg.seeds)) for ei in range(len(cfg.epsilons))]


# ---------------------------------------------------------------------------
# steady_state
# ---------------------------------------------------------------------------


def _task_steady_state(cfg: ExperimentConfig, key: tuple) -> list[tuple]:
    si, ei = key
    seed, eps = cfg.seeds[si], cfg.epsilons[ei]
    chash = config_hash(cfg)
    model = build_model_from_spec(cfg.model, eps, seed)
    handle = compose_epsilon_channel(model)
    _, rec = iterate_fixed_point(
        handle,
        _initial_state(cfg, cfg.model.num_qubits),
        tol=cfg.convergence_tol,
        max_iter=cfg.max_iter,
    )
    return [
        (chash, seed, eps, it, res, rec.converged)
        for it, res in zip(rec.residual_iters, rec.residual_history)
    ]


def _run_steady_state(cfg: ExperimentConfig) -> ExperimentResult:
    rows = []
    for _, r in _fan_out(cfg, _task_steady_state, _seed_eps_keys(cfg)):
        rows.extend(r)
    path = write_csv(
        Path(cfg.out) / "steady_state.csv",
        "steady_state.v1",
        {"config_hash": config_hash(cfg), "seeds": "/".join(map(str, cfg.seeds))},
        ["config_hash", "seed", "epsilon", "iteration", "residual", "converged"],
        rows,
    )
    return ExperimentResult(paths=[path])


# ---------------------------------------------------------------------------
# gibbs_decay
# ---------------------------------------------------------------------------


def _task_gibbs_decay(cfg: ExperimentConfig, key: tuple):
    si, ei = key
    seed, eps = cfg.seeds[si], cfg.epsilons[ei]
    chash = config_hash(cfg)
    n = cfg.model.num_qubits
    k_cap = int(cfg.params.get("k_cap", n - 3))
    model = build_model_from_spec(cfg.model, eps, seed)
    handle = compose_epsilon_channel(model)
    rho, rec = iterate_fixed_point(
        handle, _initial_state(cfg, n), tol=cfg.convergence_tol, max_iter=cfg.max_iter
    )
    run_row = (chash, seed, eps, rec.converged, rec.iterations, rec.final_residual)
    if not rec.converged:
        return run_row + ("non_converged",), []
    try:
        ham = gibbs_hamiltonian(rho, floor=cfg.log_floor)
        profile = diameter_profile(pauli_transform(ham), n, k_cap=k_cap, epsilon=eps)
    except QuasigibbsError as exc:
        return run_row + (f"error:{type(exc).__name__}",), []
    rows = [
        (chash, model_id(cfg, seed), seed, eps, k, profile.norms[k])
        for k in sorted(profile.norms)
    ]
    return run_row + ("ok",), rows


def _run_gibbs_decay(cfg: ExperimentConfig) -> ExperimentResult:
    run_rows, profile_rows = [], []
    for _, (run_row, rows) in _fan_out(cfg, _task_gibbs_decay, _seed_eps_keys(cfg)):
        run_rows.append(run_row)
        profile_rows.extend(rows)
    meta = {"config_hash": config_hash(cfg), "seeds": "/".join(map(str, cfg.seeds))}
    p1 = write_csv(
        Path(cfg.out) / "gibbs_decay.csv",
        "gibbs_decay.v1",
        meta,
        ["config_hash", "model_id", "seed", "epsilon", "k", "norm"],
        profile_rows,
    )
    p2 = write_csv(
        Path(cfg.out) / "runs.csv",
        "runs.v1",
        meta,
        ["config_hash", "seed", "epsilon", "converged", "iterations", "final_residual", "status"],
        run_rows,
    )
    return ExperimentResult(paths=[p1, p2])


# ---------------------------------------------------------------------------
# oracle_check
# ---------------------------------------------------------------------------


def _task_oracle_check(cfg: ExperimentConfig, key: tuple) -> list[tuple]:
    si, ei = key
    seed, eps = cfg.seeds[si], cfg.epsilons[ei]
    chash = config_hash(cfg)
    n = cfg.model.num_qubits
    iterate_tol = float(cfg.params.get("iterate_tol", 1e-11))
    model = build_model_from_spec(cfg.model, eps, seed)
    handle = compose_epsilon_channel(model)
    rho_iter, _ = iterate_fixed_point(
        handle, _initial_state(cfg, n), tol=iterate_tol, max_iter=cfg.max_iter
    )
    rho_oracle = dense_fixed_point_oracle(handle, n)
    return [(chash, seed, eps, n, trace_distance(rho_iter, rho_oracle))]


def _run_oracle_check(cfg: ExperimentConfig) -> ExperimentResult:
    rows = []
    for _, r in _fan_out(cfg, _task_oracle_check, _seed_eps_keys(cfg)):
        rows.extend(r)
    path = write_csv(
        Path(cfg.out) / "oracle_check.csv",
        "oracle_check.v1",
        {"config_hash": config_hash(cfg), "seeds": "/".join(map(str, cfg.seeds))},
        ["config_hash", "seed", "epsilon", "n", "trace_distance"],
        rows,
    )
    return ExperimentResult(paths=[path])


# ---------------------------------------------------------------------------
# perturb_sweep
# ---------------------------------------------------------------------------


def _task_perturb_sweep(cfg: ExperimentConfig, key: tuple) -> list[tuple]:
    si, ei = key
    seed, eps = cfg.seeds[si], cfg.epsilons[ei]
    if not (0.0 <= eps < 1.0):
        raise ContractViolationError(f"perturb_sweep needs epsilon < 1, got {eps}")
    chash = config_hash(cfg)
    k_max = int(cfg.params.get("k_max", 8))
    op, site, letter = _observable(cfg, "observable")
    model = build_model_from_spec(cfg.model, 0.0, seed)
    engine = perturb.TransitionEngine(model, prune=cfg.prune_threshold)
    seq = perturb.heisenberg_sequence(engine, op, (site,), k_max)
    rows = []
    total = 0.0
    for k, term in enumerate(seq):
        total += (eps**k) * term.identity_coefficient().real
        rows.append(
            (
                chash,
                model_id(cfg, seed),
                f"{letter}{site}",
                seed,
                eps,
                k,
                total,
                term.l1_norm(),
                len(term.support()),
            )
        )
    return rows


def _run_perturb_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    rows = []
    for _, r in _fan_out(cfg, _task_perturb_sweep, _seed_eps_keys(cfg)):
        rows.extend(r)
    path = write_csv(
        Path(cfg.out) / "perturb_sweep.csv",
        "perturb_sweep.v1",
        {"config_hash": config_hash(cfg), "seeds": "/".join(map(str, cfg.seeds))},
        [
            "config_hash",
            "model_id",
            "observable",
            "seed",
            "epsilon",
            "k",
            "partial_sum",
            "l1_norm",
            "support_size",
        ],
        rows,
    )
    return ExperimentResult(paths=[path])


# ---------------------------------------------------------------------------
# covariance_decay
# ---------------------------------------------------------------------------


def _task_covariance_decay(cfg: ExperimentConfig, key: tuple) -> list[tuple]:
    si, ei = key
    seed, eps = cfg.seeds[si], cfg.epsilons[ei]
    chash = config_hash(cfg)
    n = cfg.model.num_qubits
    k_max = int(cfg.params.get("k_max", 6))
    distances = [int(d) for d in cfg.params.get("distances", [1, 2, 3, 4])]
    op_a, site_a, letter_a = _observable(cfg, "observable", 0)
    op_b, _, letter_b = _observable(cfg, "partner", 0)
    model = build_model_from_spec(cfg.model, 0.0, seed)
    engine = perturb.TransitionEngine(model, prune=cfg.prune_threshold)
    rows = []
    for d in distances:
        site_b = (site_a + d) % n
        res = perturb.covariance_series(op_a, (site_a,), op_b, (site_b,), engine, eps, k_max)
        rows.append(
            (
                chash,
                seed,
                eps,
                d,
                f"{letter_a}{site_a}",
                f"{letter_b}{site_b}",
                k_max,
                res.value,
                res.covariance_bound,
                -1 if res.first_nonzero_order is None else res.first_nonzero_order,
            )
        )
    return rows


def _run_covariance_decay(cfg: ExperimentConfig) -> ExperimentResult:
    rows = []
    for _, r in _fan_out(cfg, _task_covariance_decay, _seed_eps_keys(cfg)):
        rows.extend(r)
    path = write_csv(
        Path(cfg.out) / "covariance_decay.csv",
        "covariance_decay.v1",
        {"config_hash": config_hash(cfg), "seeds": "/".join(map(str, cfg.seeds))},
        [
            "config_hash",
            "seed",
            "epsilon",
            "distance",
            "observable",
            "partner",
            "k_max",
            "covariance",
            "bound",
            "first_nonzero_order",
        ],
        rows,
    )
    return ExperimentResult(paths=[path])


# ---------------------------------------------------------------------------
# connected_probe
# ---------------------------------------------------------------------------


def _task_connected_probe(cfg: ExperimentConfig, key: tuple) -> list[tuple]:
    (si,) = key
    seed = cfg.seeds[si]
    chash = config_hash(cfg)
    n = cfg.model.num_qubits
    h_step = float(cfg.params.get("h_step", 1e-3))
    pairs = cfg.params.get("pairs")
    if pairs is None:
        half = n // 2
        pairs = {
            "adjacent": [[0, 1], [1, 2]],
            "disconnected": [[0, 1], [half, half + 1]],
        }
    model = build_model_from_spec(cfg.model, 0.0, seed)
    rows = []
    for name in sorted(pairs):
        e1, e2 = pairs[name]
        result = connected_term_probe(
            model,
            (canonical_edge(*e1), canonical_edge(*e2)),
            h_step=h_step,
            log_floor=cfg.log_floor,
        )
        rows.append(
            (
                chash,
                seed,
                name,
                f"{e1[0]}-{e1[1]}",
                f"{e2[0]}-{e2[1]}",
                h_step,
                result.mixed_partial_norm,
                ";".join(map(str, result.support_estimate)),
                result.max_coefficient,
            )
        )
    return rows


def _run_connected_probe(cfg: ExperimentConfig) -> ExperimentResult:
    rows = []
    for _, r in _fan_out(cfg, _task_connected_probe, [(si,) for si in range(len(cfg.seeds))]):
        rows.extend(r)
    path = write_csv(
        Path(cfg.out) / "connected_probe.csv",
        "connected_probe.v1",
        {"config_hash": config_hash(cfg), "seeds": "/".join(map(str, cfg.seeds))},
        [
            "config_hash",
            "seed",
            "pair",
            "edge1",
            "edge2",
            "h_step",
            "mixed_partial_norm",
            "support_estimate",
            "max_coefficient",
        ],
        rows,
    )
    return ExperimentResult(paths=[path])


# ---------------------------------------------------------------------------
# validate_model
# ---------------------------------------------------------------------------


def _task_validate_model(cfg: ExperimentConfig, key: tuple) -> list[tuple]:
    (si,) = key
    seed = cfg.seeds[si]
    chash = config_hash(cfg)
    model = build_model_from_spec(cfg.model, cfg.epsilons[0], seed)
    rows = []
    for i in range(model.graph.n):
        ch = model.dissipators[i]
        rep = validate_cptp(ch)
        rows.append((chash, seed, f"dissipator:{i}", "cptp", rep.cp_min_eig, rep.trace_preserving))
        erg = local_ergodicity_check(ch, k_max=3)
        rows.append((chash, seed, f"dissipator:{i}", "ergodic", erg.span_dims[-1], erg.ergodic))
    for e in model.graph.edges:
        ch = model.correlators[e]
        rep = validate_cptp(ch)
        label = f"correlator:{e[0]}-{e[1]}"
        rows.append((chash, seed, label, "cptp", rep.cp_min_eig, rep.trace_preserving))
        erg = local_ergodicity_check(ch, k_max=8)
        rows.append((chash, seed, label, "ergodic", erg.span_dims[-1], erg.ergodic))
    return rows


def _run_validate_model(cfg: ExperimentConfig) -> ExperimentResult:
    rows = []
    for _, r in _fan_out(cfg, _task_validate_model, [(si,) for si in range(len(cfg.seeds))]):
        rows.extend(r)
    path = write_csv(
        Path(cfg.out) / "validate_model.csv",
        "validate_model.v1",
        {"config_hash": config_hash(cfg), "seeds": "/".join(map(str, cfg.seeds))},
        ["config_hash", "seed", "component", "check", "value", "passed"],
        rows,
    )
    return ExperimentResult(paths=[path])


_RUNNERS = {
    "steady_state": _run_steady_state,
    "gibbs_decay": _run_gibbs_decay,
    "oracle_check": _run_oracle_check,
    "perturb_sweep": _run_perturb_sweep,
    "covariance_decay": _run_covariance_decay,
    "connected_probe": _run_connected_probe,
    "validate_model": _run_validate_model,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    runner = _RUNNERS.get(cfg.kind)
    if runner is None:
        raise ContractViolationError(f"unknown experiment kind {cfg.kind!r}")
    return runner(cfg)
