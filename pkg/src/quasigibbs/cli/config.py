"""Experiment configuration: schema, validation, hashing, derived seeds.

Configs are YAML (JSON is a YAML subset and parses the same way). Schema
violations are collected and reported all at once rather than one per run.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..errors import ConfigError

EXPERIMENT_KINDS = (
    "steady_state",
    "gibbs_decay",
    "oracle_check",
    "perturb_sweep",
    "covariance_decay",
    "connected_probe",
    "validate_model",
)

CORRELATOR_KINDS = ("cz", "haar_mixture", "random_kraus")

DEFAULT_EPSILONS = [round(0.1 * i, 10) for i in range(1, 11)]


def derive_seed(master: int, *parts: int | str) -> int:
    """Stable per-task seed so parallel execution order cannot change results."""
    text = ":".join([str(int(master))] + [str(p) for p in parts])
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return int(digest[:15], 16)


@dataclass(frozen=True)
class ModelSpec:
    graph_kind: str  # "ring" or "explicit"
    ring_n: int | None
    n: int | None
    edges: tuple[tuple[int, int, float], ...]
    lambdas: Any  # float | list[float] | {"low","high"}
    directions: Any  # "x"|"y"|"z"|"random" | list of 3-vectors
    correlator_kind: str
    correlator_k: int
    correlator_rank: int

    @property
    def num_qubits(self) -> int:
        return self.ring_n if self.graph_kind == "ring" else int(self.n)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    model: ModelSpec
    epsilons: tuple[float, ...]
    seeds: tuple[int, ...]
    convergence_tol: float
    log_floor: float
    prune_threshold: float
    max_iter: int
    workers: int
    out: str
    params: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def config_hash(cfg: ExperimentConfig) -> str:
    text = json.dumps(cfg.raw, sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def _parse_epsilons(value: Any, issues: list[str]) -> list[float]:
    if value is None:
        return list(DEFAULT_EPSILONS)
    if isinstance(value, dict):
        try:
            start, stop, step = float(value["start"]), float(value["stop"]), float(value["step"])
        except (KeyError, TypeError, ValueError):
            issues.append("epsilons: range form needs numeric start/stop/step")
            return []
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        out = [round(start + i * step, 12) for i in range(max(count, 0))]
    elif isinstance(value, (list, tuple)):
        out = []
        for v in value:
            try:
                out.append(float(v))
            except (TypeError, ValueError):
                issues.append(f"epsilons: {v!r} is not a number")
        out = out
    else:
        try:
            out = [float(value)]
        except (TypeError, ValueError):
            issues.append(f"epsilons: {value!r} is not a number or list")
            return []
    for v in out:
        if not (0.0 <= v <= 1.0):
            issues.append(f"epsilons: value {v} outside [0, 1]")
    return out


def _parse_model(value: Any, issues: list[str]) -> ModelSpec | None:
    if not isinstance(value, dict):
        issues.append("model: section missing or not a mapping")
        return None
    graph = value.get("graph")
    graph_kind = None
    ring_n = None
    n = None
    edges: tuple = ()
    if isinstance(graph, dict) and "ring" in graph:
        graph_kind = "ring"
        try:
            ring_n = int(graph["ring"])
            if ring_n < 3:
                issues.append(f"model.graph.ring: need n >= 3, got {ring_n}")
        except (TypeError, ValueError):
            issues.append(f"model.graph.ring: {graph.get('ring')!r} is not an integer")
    elif isinstance(graph, dict) and "edges" in graph:
        graph_kind = "explicit"
        try:
            n = int(graph["n"])
        except (KeyError, TypeError, ValueError):
            issues.append("model.graph: explicit form needs an integer n")
        raw_edges = graph.get("edges", [])
        parsed = []
        for item in raw_edges:
            try:
                u, v, p = int(item[0]), int(item[1]), float(item[2])
                parsed.append((u, v, p))
            except (TypeError, ValueError, IndexError):
                issues.append(f"model.graph.edges: bad entry {item!r}, expected [u, v, p]")
        edges = tuple(parsed)
    else:
        issues.append("model.graph: expected {ring: n} or {n: ..., edges: [[u, v, p], ...]}")

    diss = value.get("dissipators") or {}
    if not isinstance(diss, dict):
        issues.append("model.dissipators: expected a mapping")
        diss = {}
    lambdas = diss.get("lambdas", {"low": 0.1, "high": 0.9})
    directions = diss.get("directions", "random")
    if isinstance(directions, str) and directions not in ("x", "y", "z", "random"):
        issues.append(
            f"model.dissipators.directions: {directions!r} not one of x, y, z, random"
        )

    corr = value.get("correlator")
    if not isinstance(corr, dict) or "kind" not in corr:
        issues.append(
            "model.correlator.kind: missing; allowed kinds are " + ", ".join(CORRELATOR_KINDS)
        )
        corr = {"kind": "cz"}
    kind = corr.get("kind")
    if kind not in CORRELATOR_KINDS:
        issues.append(
            f"model.correlator.kind: {kind!r} not one of " + ", ".join(CORRELATOR_KINDS)
        )
        kind = "cz"
    return ModelSpec(
        graph_kind=graph_kind or "ring",
        ring_n=ring_n,
        n=n,
        edges=edges,
        lambdas=lambdas,
        directions=directions,
        correlator_kind=kind,
        correlator_k=int(corr.get("k", 1) or 1),
        correlator_rank=int(corr.get("rank", 3) or 3),
    )


def parse_config(data: dict, source: str = "<config>") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    issues: list[str] = []

    kind = data.get("experiment")
    if kind is not None and kind not in EXPERIMENT_KINDS:
        issues.append(
            f"experiment: {kind!r} not one of " + ", ".join(EXPERIMENT_KINDS)
        )
    model = _parse_model(data.get("model"), issues)
    epsilons = _parse_epsilons(data.get("epsilons"), issues)

    seeds_raw = data.get("seeds", [0])
    if isinstance(seeds_raw, int):
        seeds_raw = [seeds_raw]
    seeds: list[int] = []
    if not isinstance(seeds_raw, (list, tuple)) or len(seeds_raw) == 0:
        issues.append("seeds: need at least one integer seed")
    else:
        for s in seeds_raw:
            try:
                seeds.append(int(s))
            except (TypeError, ValueError):
                issues.append(f"seeds: {s!r} is not an integer")

    tols = data.get("tolerances") or {}
    if not isinstance(tols, dict):
        issues.append("tolerances: expected a mapping")
        tols = {}

    def _positive(name: str, default: float) -> float:
        try:
            v = float(tols.get(name, default))
        except (TypeError, ValueError):
            issues.append(f"tolerances.{name}: not a number")
            return default
        if v <= 0:
            issues.append(f"tolerances.{name}: must be positive, got {v}")
        return v

    convergence_tol = _positive("convergence_tol", 1e-8)
    log_floor = _positive("log_floor", 1e-14)
    prune_threshold = _positive("prune_threshold", 1e-15)

    def _posint(name: str, default: int) -> int:
        try:
            v = int(data.get(name, default))
        except (TypeError, ValueError):
            issues.append(f"{name}: not an integer")
            return default
        if v < 1:
            issues.append(f"{name}: must be >= 1, got {v}")
        return v

    max_iter = _posint("max_iter", 200_000)
    workers = _posint("workers", 1)
    out = str(data.get("output", "out"))
    params = data.get("params") or {}
    if not isinstance(params, dict):
        issues.append("params: expected a mapping")
        params = {}

    if issues:
        raise ConfigError(f"{source}: invalid configuration:\n  - " + "\n  - ".join(issues))
    return ExperimentConfig(
        kind=kind or "steady_state",
        model=model,
        epsilons=tuple(epsilons),
        seeds=tuple(seeds),
        convergence_tol=convergence_tol,
        log_floor=log_floor,
        prune_threshold=prune_threshold,
        max_iter=max_iter,
        workers=workers,
        out=out,
        params=params,
        raw=data,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: parse error: {exc}") from exc
    return parse_config(data, source=str(p))
