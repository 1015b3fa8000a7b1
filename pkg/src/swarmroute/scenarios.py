"""Scenario configuration, run dispatch, sweeps, and cross-method reports.

Configs are single JSON files with nested keys; unknown keys are rejected so
typos fail loudly.  Every run is reproducible from (config, seed): outputs
are written with deterministic formatting, and the summary echoes the full
effective configuration.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .distributed import (
    Schedule,
    SYNCHRONIZED,
    network_performance,
    run_to_convergence,
)
from .errors import ConfigError, PfsaFormatError
from .measure import compute_measure, stationary_performance
from .mobility import SimConfig, SimTrace, run_ideal_process, run_real_process
from .network import (
    FailureModel,
    NetworkPfsa,
    Rect,
    SwarmSnapshot,
    build_network_pfsa,
    neighbor_map,
    network_roles,
)
from .pfsa import Pfsa, apply_policy, build_transition_matrix, load_pfsa
from .supervisor import (
    brute_force_optimal,
    optimal_supervisor,
    policy_iteration,
    select_theta,
    target_indices,
)

MODES = ("frozen", "real", "ideal")
SWEEP_AXES = ("n_agents", "epsilon", "v_s", "r_c")


# ---------------------------------------------------------------------------
# Configuration schema
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TargetSpec:
    kind: str  # "point" or "rect"
    x: float
    y: float
    w: float = 0.0
    h: float = 0.0


@dataclass
class ScenarioConfig:
    """Validated scenario parameters with paper-default values filled in."""

    n_agents: int
    targets: Tuple[TargetSpec, ...]
    seed: int = 0
    arena: Tuple[float, float] = (20.0, 20.0)
    r_c: Optional[float] = None
    v_s: float = 2.5
    dt: float = 0.02
    epsilon: float = 0.001
    theta_override: Optional[float] = None
    failure: FailureModel = field(default_factory=FailureModel)
    obstacles: Tuple[Rect, ...] = ()
    voids: Tuple[Rect, ...] = ()
    sharer_fraction: float = 0.0
    duration: float = 30.0
    mode: str = "real"
    epochs_per_tick: int = 1
    tol: float = 1e-8
    capture_factor: float = 0.05
    trace_stride: int = 10
    record_directions: bool = False
    stop_when_all_reached: bool = True
    out_dir: Optional[str] = None

    def resolved_r_c(self) -> float:
        """Auto radius: 1.5x the connectivity-threshold estimate."""
        if self.r_c is not None:
            return float(self.r_c)
        area = self.arena[0] * self.arena[1]
        n = max(self.n_agents, 2)
        return 1.5 * math.sqrt(area * math.log(n) / (math.pi * n))

    def echo(self) -> Dict:
        data = {
            "n_agents": self.n_agents,
            "seed": self.seed,
            "arena": list(self.arena),
            "r_c": self.resolved_r_c(),
            "v_s": self.v_s,
            "dt": self.dt,
            "epsilon": self.epsilon,
            "theta_override": self.theta_override,
            "failure": {
                "lambda_at_zero": self.failure.lambda_at_zero,
                "lambda_at_rc": self.failure.lambda_at_rc,
                "noise_amplitude": self.failure.spatial_noise_amplitude,
                "noise_seed": self.failure.noise_seed,
            },
            "targets": [asdict(t) for t in self.targets],
            "obstacles": [asdict(r) for r in self.obstacles],
            "voids": [asdict(r) for r in self.voids],
            "sharer_fraction": self.sharer_fraction,
            "duration": self.duration,
            "mode": self.mode,
            "epochs_per_tick": self.epochs_per_tick,
            "tol": self.tol,
            "capture_factor": self.capture_factor,
            "trace_stride": self.trace_stride,
            "record_directions": self.record_directions,
            "stop_when_all_reached": self.stop_when_all_reached,
        }
        return data


_TOP_KEYS = {
    "seed", "n_agents", "arena", "r_c", "v_s", "dt", "epsilon", "theta_override",
    "failure", "targets", "obstacles", "voids", "sharer_fraction", "duration",
    "mode", "epochs_per_tick", "tol", "capture_factor", "trace_stride",
    "record_directions", "stop_when_all_reached", "out_dir",
}
_FAILURE_KEYS = {"lambda_at_zero", "lambda_at_rc", "noise_amplitude", "noise_seed"}
_RECT_KEYS = {"x", "y", "w", "h"}
_TARGET_KEYS = {"type", "x", "y", "w", "h"}


def _reject_unknown(mapping: Dict, allowed: set, path: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} at {path}")


def _parse_rect(data: Dict, path: str) -> Rect:
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must be an object with x, y, w, h")
    _reject_unknown(data, _RECT_KEYS, path)
    try:
        return Rect(float(data["x"]), float(data["y"]), float(data["w"]), float(data["h"]))
    except KeyError as exc:
        raise ConfigError(f"{path}: missing key {exc}") from exc


def _parse_target(data: Dict, path: str) -> TargetSpec:
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must be an object")
    _reject_unknown(data, _TARGET_KEYS, path)
    kind = data.get("type", "point")
    if kind == "point":
        return TargetSpec("point", float(data["x"]), float(data["y"]))
    if kind == "rect":
        return TargetSpec("rect", float(data["x"]), float(data["y"]),
                          float(data["w"]), float(data["h"]))
    raise ConfigError(f"{path}: unknown target type {kind!r}")


def parse_scenario(data: Dict) -> ScenarioConfig:
    """Validate a parsed JSON object into a ScenarioConfig."""
    if not isinstance(data, dict):
        raise ConfigError("scenario file must hold a JSON object")
    _reject_unknown(data, _TOP_KEYS, "top level")
    if "n_agents" not in data:
        raise ConfigError("n_agents is required")
    if "targets" not in data or not data["targets"]:
        raise ConfigError("at least one target is required")
    failure_data = data.get("failure", {})
    _reject_unknown(failure_data, _FAILURE_KEYS, "failure")
    seed = int(data.get("seed", 0))
    failure = FailureModel(
        lambda_at_zero=float(failure_data.get("lambda_at_zero", 0.3)),
        lambda_at_rc=float(failure_data.get("lambda_at_rc", 0.1)),
        spatial_noise_amplitude=float(failure_data.get("noise_amplitude", 0.0)),
        noise_seed=int(failure_data.get("noise_seed", seed)),
        obstacle_regions=tuple(
            _parse_rect(r, f"obstacles[{i}]") for i, r in enumerate(data.get("obstacles", []))
        ),
    )
    arena_raw = data.get("arena", [20.0, 20.0])
    if not (isinstance(arena_raw, (list, tuple)) and len(arena_raw) == 2):
        raise ConfigError("arena must be [width, height]")
    config = ScenarioConfig(
        n_agents=int(data["n_agents"]),
        targets=tuple(_parse_target(t, f"targets[{i}]") for i, t in enumerate(data["targets"])),
        seed=seed,
        arena=(float(arena_raw[0]), float(arena_raw[1])),
        r_c=None if data.get("r_c") is None else float(data["r_c"]),
        v_s=float(data.get("v_s", 2.5)),
        dt=float(data.get("dt", 0.02)),
        epsilon=float(data.get("epsilon", 0.001)),
        theta_override=(
            None if data.get("theta_override") is None else float(data["theta_override"])
        ),
        failure=failure,
        obstacles=failure.obstacle_regions,
        voids=tuple(_parse_rect(r, f"voids[{i}]") for i, r in enumerate(data.get("voids", []))),
        sharer_fraction=float(data.get("sharer_fraction", 0.0)),
        duration=float(data.get("duration", 30.0)),
        mode=str(data.get("mode", "real")),
        epochs_per_tick=int(data.get("epochs_per_tick", 1)),
        tol=float(data.get("tol", 1e-8)),
        capture_factor=float(data.get("capture_factor", 0.05)),
        trace_stride=int(data.get("trace_stride", 10)),
        record_directions=bool(data.get("record_directions", False)),
        stop_when_all_reached=bool(data.get("stop_when_all_reached", True)),
        out_dir=data.get("out_dir"),
    )
    _validate_scenario(config)
    return config


def _rect_in_arena(rect: Rect, arena: Tuple[float, float]) -> bool:
    return 0.0 <= rect.x and 0.0 <= rect.y and rect.x1 <= arena[0] and rect.y1 <= arena[1]


def _validate_scenario(config: ScenarioConfig) -> None:
    if config.n_agents < 1:
        raise ConfigError("n_agents must be positive")
    if config.mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    if not (0.0 <= config.sharer_fraction < 1.0):
        raise ConfigError("sharer_fraction must lie in [0, 1)")
    if config.epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    w, h = config.arena
    if w <= 0 or h <= 0:
        raise ConfigError("arena must have positive extent")
    for i, t in enumerate(config.targets):
        if t.kind == "point":
            if not (0.0 <= t.x <= w and 0.0 <= t.y <= h):
                raise ConfigError(f"targets[{i}] lies outside the arena")
        else:
            if not _rect_in_arena(Rect(t.x, t.y, t.w, t.h), config.arena):
                raise ConfigError(f"targets[{i}] lies outside the arena")
    for name, rects in (("obstacles", config.obstacles), ("voids", config.voids)):
        for i, rect in enumerate(rects):
            if not _rect_in_arena(rect, config.arena):
                raise ConfigError(f"{name}[{i}] lies outside the arena")


def load_scenario(path) -> ScenarioConfig:
    """Read and validate a scenario JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse scenario file {path}: {exc}") from exc
    return parse_scenario(data)


# ---------------------------------------------------------------------------
# Placement
# ---------------------------------------------------------------------------

def _target_agent_positions(targets: Sequence[TargetSpec]) -> Tuple[np.ndarray, Tuple[Rect, ...]]:
    """Static sensing agents: one per point target, five per extended target
    (center plus edge midpoints)."""
    points: List[Tuple[float, float]] = []
    rects: List[Rect] = []
    for t in targets:
        if t.kind == "point":
            points.append((t.x, t.y))
        else:
            rect = Rect(t.x, t.y, t.w, t.h)
            rects.append(rect)
            cx, cy = t.x + t.w / 2.0, t.y + t.h / 2.0
            points.extend(
                [(cx, cy), (t.x, cy), (rect.x1, cy), (cx, t.y), (cx, rect.y1)]
            )
    return np.asarray(points, dtype=float), tuple(rects)


def _place_agents(config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform placement excluding voids and obstacles, drawn in batches."""
    w, h = config.arena
    blocked = tuple(config.voids) + tuple(config.obstacles)
    out = np.empty((0, 2))
    for _ in range(200):
        need = config.n_agents - out.shape[0]
        if need <= 0:
            break
        batch = rng.random((max(need * 2, 16), 2)) * np.array([w, h])
        keep = np.ones(batch.shape[0], dtype=bool)
        for rect in blocked:
            keep &= ~rect.contains(batch)
        out = np.vstack([out, batch[keep]])
    if out.shape[0] < config.n_agents:
        raise ConfigError("placement regions leave too little free area for the agents")
    return out[: config.n_agents]


@dataclass
class ScenarioSetup:
    """Placed scenario: initial geometry plus the resolved theta."""

    config: ScenarioConfig
    positions: np.ndarray
    sharer_mask: np.ndarray
    target_points: np.ndarray
    target_rects: Tuple[Rect, ...]
    r_c: float
    theta: float
    m_initial: int


def build_setup(config: ScenarioConfig) -> ScenarioSetup:
    """Place agents and targets, resolve r_c and theta."""
    seq = np.random.SeedSequence(config.seed)
    place_seed, sharer_seed = seq.spawn(2)
    rng = np.random.default_rng(place_seed)
    positions = _place_agents(config, rng)
    target_points, target_rects = _target_agent_positions(config.targets)
    r_c = config.resolved_r_c()
    sharer_mask = np.zeros(config.n_agents, dtype=bool)
    n_sharers = int(config.sharer_fraction * config.n_agents)
    if n_sharers:
        picks = np.random.default_rng(sharer_seed).choice(
            config.n_agents, size=n_sharers, replace=False
        )
        sharer_mask[picks] = True
    all_positions = np.vstack([positions, target_points])
    snapshot = SwarmSnapshot(
        positions=all_positions,
        target_ids=frozenset(range(config.n_agents, all_positions.shape[0])),
        r_c=r_c,
    )
    m_initial = max((len(s) for s in neighbor_map(snapshot)), default=1) or 1
    theta = (
        float(config.theta_override)
        if config.theta_override is not None
        else select_theta(config.epsilon, m_initial)
    )
    return ScenarioSetup(
        config=config,
        positions=positions,
        sharer_mask=sharer_mask,
        target_points=target_points,
        target_rects=target_rects,
        r_c=r_c,
        theta=theta,
        m_initial=m_initial,
    )


def frozen_network(setup: ScenarioSetup) -> Tuple[SwarmSnapshot, NetworkPfsa]:
    all_positions = np.vstack([setup.positions, setup.target_points])
    n_mobile = setup.positions.shape[0]
    snapshot = SwarmSnapshot(
        positions=all_positions,
        target_ids=frozenset(range(n_mobile, all_positions.shape[0])),
        r_c=setup.r_c,
    )
    return snapshot, build_network_pfsa(snapshot, model=setup.config.failure)


def sim_config(setup: ScenarioSetup) -> SimConfig:
    cfg = setup.config
    return SimConfig(
        positions=setup.positions,
        sharer_mask=setup.sharer_mask,
        target_points=setup.target_points,
        arena=cfg.arena,
        r_c=setup.r_c,
        v_s=cfg.v_s,
        dt=cfg.dt,
        duration=cfg.duration,
        theta=setup.theta,
        failure=cfg.failure,
        seed=cfg.seed,
        target_rects=setup.target_rects,
        epochs_per_tick=cfg.epochs_per_tick,
        tol=cfg.tol,
        capture_factor=cfg.capture_factor,
        trace_stride=cfg.trace_stride,
        record_directions=cfg.record_directions,
        stop_when_all_reached=cfg.stop_when_all_reached,
        echo=cfg.echo(),
    )


# ---------------------------------------------------------------------------
# Output formatting
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return repr(float(x))


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path: Path, data: Dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _trace_files(trace: SimTrace, out: Path) -> None:
    metrics_rows = zip(
        trace.times,
        trace.fraction_reached,
        trace.diameter,
        trace.max_path_length,
        trace.corrections,
    )
    write_csv(
        out / "metrics.csv",
        ["t", "fraction_reached", "diameter", "max_path_length", "decision_corrections"],
        metrics_rows,
    )
    rows = []
    for snap in trace.snapshots:
        for agent in range(trace.n_mobile):
            rows.append(
                (
                    snap.time,
                    agent,
                    snap.positions[agent, 0],
                    snap.positions[agent, 1],
                    snap.measures[agent],
                    int(snap.chosen[agent]),
                    bool(snap.reached[agent]),
                )
            )
    write_csv(
        out / "trace.csv",
        ["t", "agent_id", "x", "y", "measure", "best_neighbor_id", "reached_flag"],
        rows,
    )


# ---------------------------------------------------------------------------
# Run dispatch
# ---------------------------------------------------------------------------

def run_frozen(setup: ScenarioSetup, out: Optional[Path] = None) -> Dict:
    cfg = setup.config
    snapshot, net = frozen_network(setup)
    result = run_to_convergence(
        net,
        setup.theta,
        Schedule(SYNCHRONIZED, cfg.seed),
        tol=cfg.tol,
    )
    rho = network_performance(net, result.policy, setup.theta)
    summary = {
        "mode": "frozen",
        "epochs": result.epochs,
        "decision_corrections": result.update_count,
        "policy_size": len(result.policy),
        "rho_norm": float(np.linalg.norm(rho)),
        "measure_norm": float(np.linalg.norm(result.agent_measures)),
        "theta": setup.theta,
        "m_initial": setup.m_initial,
        "gamma_star": net.gamma_star(),
        "n_agents": cfg.n_agents,
        "seed": cfg.seed,
        "config": cfg.echo(),
    }
    if out is not None:
        write_json(out / "summary.json", summary)
        write_csv(
            out / "telemetry.csv",
            ["epoch", "decision_corrections", "rho_norm_estimate", "max_delta"],
            ((s.epoch, s.corrections, s.rho_norm, s.max_delta) for s in result.telemetry),
        )
    return summary


def run_mobile(setup: ScenarioSetup, ideal: bool, out: Optional[Path] = None) -> Dict:
    cfg = setup.config
    trace = run_ideal_process(sim_config(setup)) if ideal else run_real_process(sim_config(setup))
    summary = {
        "mode": "ideal" if ideal else "real",
        "t_conv": trace.t_conv,
        "final_fraction": trace.final_fraction,
        "n_mobile": trace.n_mobile,
        "n_sharers": trace.n_sharers,
        "epochs_total": trace.epochs_total,
        "c2_max_gap": trace.c2_max_gap,
        "obstacle_violations": trace.obstacle_violations,
        "theta": setup.theta,
        "seed": cfg.seed,
        "config": cfg.echo(),
    }
    if out is not None:
        write_json(out / "summary.json", summary)
        _trace_files(trace, out)
    return summary


def run(config: ScenarioConfig, out_dir: Optional[str] = None) -> Dict:
    """Dispatch a scenario to its mode and optionally persist outputs."""
    out = None
    chosen_dir = out_dir if out_dir is not None else config.out_dir
    if chosen_dir is not None:
        out = Path(chosen_dir)
        out.mkdir(parents=True, exist_ok=True)
    setup = build_setup(config)
    if config.mode == "frozen":
        return run_frozen(setup, out)
    return run_mobile(setup, ideal=(config.mode == "ideal"), out=out)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _sweep_variant(config: ScenarioConfig, axis: str, value: float, rep: int) -> ScenarioConfig:
    new = replace(config, seed=config.seed + rep)
    if axis == "n_agents":
        n = int(value)
        # constant density: scale the arena with the agent count
        factor = math.sqrt(n / config.n_agents)
        new = replace(
            new,
            n_agents=n,
            arena=(config.arena[0] * factor, config.arena[1] * factor),
            targets=tuple(
                TargetSpec(t.kind, t.x * factor, t.y * factor, t.w * factor, t.h * factor)
                for t in config.targets
            ),
        )
    elif axis == "epsilon":
        new = replace(new, epsilon=float(value), theta_override=None)
    elif axis == "v_s":
        new = replace(new, v_s=float(value))
    elif axis == "r_c":
        new = replace(new, r_c=float(value))
    else:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
    return new


def sweep(
    config: ScenarioConfig,
    axis: str,
    values: Sequence[float],
    reps: int = 10,
    out_dir: Optional[str] = None,
) -> Dict:
    """Run seeded repetitions per axis value; aggregate epochs and timing laws.

    Raw rows are flushed incrementally so partial results survive a failed
    value; aggregation reports mean/min/max per value.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
    out = None
    raw_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        raw_path = out / "sweep_raw.csv"
        raw_path.write_text(
            "axis,value,rep,seed,epochs,t_conv,vs_t_conv,rc_over_t_conv\n", encoding="utf-8"
        )
    rows: List[Dict] = []
    try:
        for value in values:
            for rep in range(reps):
                variant = _sweep_variant(config, axis, value, rep)
                summary = run(variant, out_dir=None)
                if variant.mode == "frozen":
                    epochs = summary["epochs"]
                    t_conv = None
                else:
                    epochs = summary["epochs_total"]
                    t_conv = summary["t_conv"]
                    if t_conv is None:
                        t_conv = variant.duration  # capped: never converged
                row = {
                    "axis": axis,
                    "value": float(value),
                    "rep": rep,
                    "seed": variant.seed,
                    "epochs": epochs,
                    "t_conv": t_conv,
                    "vs_t_conv": None if t_conv is None else variant.v_s * t_conv,
                    "rc_over_t_conv": (
                        None if t_conv is None else variant.resolved_r_c() / t_conv
                    ),
                    "theta": summary["theta"],
                    "m": summary.get("m_initial"),
                    "gamma_star": summary.get("gamma_star"),
                    "n_agents": variant.n_agents,
                    "epsilon": variant.epsilon,
                }
                rows.append(row)
                if raw_path is not None:
                    with open(raw_path, "a", encoding="utf-8") as fh:
                        fh.write(
                            ",".join(
                                [
                                    axis,
                                    _fmt(row["value"]),
                                    str(rep),
                                    str(row["seed"]),
                                    str(row["epochs"]),
                                    _fmt(row["t_conv"]),
                                    _fmt(row["vs_t_conv"]),
                                    _fmt(row["rc_over_t_conv"]),
                                ]
                            )
                            + "\n"
                        )
    finally:
        aggregate = _aggregate_sweep(rows)
        if out is not None and rows:
            write_csv(
                out / "sweep.csv",
                [
                    "axis", "value",
                    "epochs_mean", "epochs_min", "epochs_max",
                    "t_conv_mean", "t_conv_min", "t_conv_max",
                    "vs_t_conv_mean", "rc_over_t_conv_mean",
                ],
                [
                    (
                        a["axis"], a["value"],
                        a["epochs_mean"], a["epochs_min"], a["epochs_max"],
                        a["t_conv_mean"], a["t_conv_min"], a["t_conv_max"],
                        a["vs_t_conv_mean"], a["rc_over_t_conv_mean"],
                    )
                    for a in aggregate
                ],
            )
    return {"axis": axis, "rows": rows, "aggregate": aggregate}


def _aggregate_sweep(rows: List[Dict]) -> List[Dict]:
    result = []
    for value in sorted({r["value"] for r in rows}):
        sub = [r for r in rows if r["value"] == value]
        epochs = [r["epochs"] for r in sub]
        t_convs = [r["t_conv"] for r in sub if r["t_conv"] is not None]
        vs = [r["vs_t_conv"] for r in sub if r["vs_t_conv"] is not None]
        rc = [r["rc_over_t_conv"] for r in sub if r["rc_over_t_conv"] is not None]
        result.append(
            {
                "axis": sub[0]["axis"],
                "value": value,
                "epochs_mean": float(np.mean(epochs)),
                "epochs_min": float(np.min(epochs)),
                "epochs_max": float(np.max(epochs)),
                "t_conv_mean": float(np.mean(t_convs)) if t_convs else None,
                "t_conv_min": float(np.min(t_convs)) if t_convs else None,
                "t_conv_max": float(np.max(t_convs)) if t_convs else None,
                "vs_t_conv_mean": float(np.mean(vs)) if vs else None,
                "rc_over_t_conv_mean": float(np.mean(rc)) if rc else None,
            }
        )
    return result


# ---------------------------------------------------------------------------
# Cross-method comparison on a serialized network PFSA
# ---------------------------------------------------------------------------

def network_from_pfsa(pfsa: Pfsa, roles: Dict[str, str]) -> NetworkPfsa:
    """Rebuild the network index maps from a role-annotated PFSA file.

    Requires the naming emitted by this package's network serialization
    ("a<i>", "v<i>><j>", "dump").
    """
    if not roles:
        raise PfsaFormatError("network reconstruction needs role annotations")
    agent_index: Dict[int, int] = {}
    virtual_index: Dict[Tuple[int, int], int] = {}
    dump_index = None
    for idx, state in enumerate(pfsa.states):
        role = roles.get(state)
        if role == "agent":
            agent_index[int(state[1:])] = idx
        elif role == "virtual":
            i, j = state[1:].split(">")
            virtual_index[(int(i), int(j))] = idx
        elif role == "dump":
            dump_index = idx
    if dump_index is None or not agent_index:
        raise PfsaFormatError("role annotations must name agents and a dump state")
    n = len(agent_index)
    neighbors: List[List[int]] = [[] for _ in range(n)]
    lam = {}
    for (i, j), idx in sorted(virtual_index.items()):
        neighbors[i].append(j)
        state = pfsa.states[idx]
        lam[(i, j)] = float(pfsa.morph.get((state, "fail"), 0.0))
    chi = pfsa.chi()
    targets = frozenset(i for i, idx in agent_index.items() if abs(chi[idx] - 1.0) <= 1e-9)
    net = NetworkPfsa(
        pfsa=pfsa,
        agent_index=agent_index,
        virtual_index=virtual_index,
        dump_index=dump_index,
        neighbors=tuple(tuple(s) for s in neighbors),
        lam=lam,
        target_ids=targets,
    )
    net.validate_counts()
    return net


def compare(
    pfsa_path,
    theta: float,
    epsilon: float,
    brute_force_limit: int = 20,
) -> Dict:
    """Four-way cross-check on a serialized network: distributed, centralized,
    brute-force, and policy-iteration rows with measure/performance norms."""
    pfsa, roles = load_pfsa(pfsa_path)
    net = network_from_pfsa(pfsa, roles)
    targets = target_indices(pfsa)
    chi = pfsa.chi()

    rows: Dict[str, Dict] = {}
    measures: Dict[str, np.ndarray] = {}

    dist = run_to_convergence(net, theta)
    measures["distributed"] = dist.measures
    rows["distributed"] = {
        "policy_size": len(dist.policy),
        "epochs": dist.epochs,
        "pi": build_transition_matrix(apply_policy(pfsa, dist.policy)),
    }

    central = optimal_supervisor(pfsa, theta)
    measures["centralized"] = central.measure.values
    rows["centralized"] = {
        "policy_size": len(central.policy),
        "iterations": central.iterations,
        "pi": build_transition_matrix(apply_policy(pfsa, central.policy)),
    }

    if len(pfsa.controllable) <= brute_force_limit:
        brute = brute_force_optimal(pfsa, theta, limit=brute_force_limit)
        measures["brute_force"] = brute.measure.values
        rows["brute_force"] = {
            "policy_size": len(brute.policy),
            "pi": build_transition_matrix(apply_policy(pfsa, brute.policy)),
        }

    pi_result = policy_iteration(pfsa, 1.0 - theta)
    measures["policy_iteration"] = pi_result.metadata["measure_scale"] * pi_result.values
    rows["policy_iteration"] = {
        "policy_size": len(pi_result.policy),
        "iterations": pi_result.iterations,
        "pi": pi_result.transition_matrix,
    }

    report = {"theta": theta, "epsilon": epsilon, "rows": {}, "max_pairwise_measure_delta": {}}
    for name, row in rows.items():
        rho = stationary_performance(row.pop("pi"), targets)
        report["rows"][name] = {
            **row,
            "measure_norm": float(np.linalg.norm(measures[name])),
            "rho_norm": float(np.linalg.norm(rho)),
            "rho": [float(v) for v in rho],
        }
    names = sorted(measures)
    for a_i in range(len(names)):
        for b_i in range(a_i + 1, len(names)):
            a, b = names[a_i], names[b_i]
            delta = float(np.max(np.abs(measures[a] - measures[b])))
            report["max_pairwise_measure_delta"][f"{a}|{b}"] = delta
    return report
