"""Unfrozen swarm simulation: co-evolving routes and positions.

Agents follow the measure gradient: each tick they refresh their neighbor
topology, run one or more distributed measure epochs, pick a strictly
better neighbor of maximal measure (ties broken uniformly at random), and
pursue its current position at constant speed.  A follower never loses
radio contact with the agent it follows: a followed agent scales its own
displacement back just enough to keep every follower within range.

Two drivers are provided.  The real process interleaves a fixed number of
measure epochs with every movement tick; the ideal process re-converges the
routes completely at every tick (that computation is excluded from simulated
time) and serves as the analytical reference trajectory.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .distributed import ASYNC, SYNCHRONIZED, MeasureEngine, Schedule
from .errors import ConfigError, NumericalError
from .network import (
    FailureModel,
    Rect,
    clip_segments_to_rect,
    link_failure_probabilities,
)
from .validation import check_theta

C2_TOL = 1e-6  # meters of allowed follower-leader overshoot
OBSTACLE_MARGIN = 1e-9


# ---------------------------------------------------------------------------
# State containers
# ---------------------------------------------------------------------------

@dataclass
class MobileSwarmState:
    """One tick of the mobile swarm: geometry, measures, and decisions.

    The population is mobile agents first (sharers flagged), then the static
    target agents.  ``chosen`` holds the index of the agent each mover is
    pursuing (-1 when holding position); ``goals`` the point it moves toward.
    """

    positions: np.ndarray
    measures: np.ndarray
    chosen: np.ndarray
    goals: np.ndarray
    reached: np.ndarray
    sharer_mask: np.ndarray
    static_mask: np.ndarray
    link_src: np.ndarray
    link_dst: np.ndarray
    time: float
    v_s: float
    dt: float
    r_c: float
    capture_radius: float
    target_points: np.ndarray
    target_rects: Tuple[Rect, ...] = ()
    obstacles: Tuple[Rect, ...] = ()
    arena: Tuple[float, float] = (0.0, 0.0)

    @property
    def n_total(self) -> int:
        return self.positions.shape[0]

    def count_mask(self) -> np.ndarray:
        """Agents that count toward arrival statistics: mobile non-sharers."""
        return ~self.static_mask & ~self.sharer_mask


@dataclass(frozen=True)
class ConvergenceMetrics:
    """Route-quality metrics of one swarm configuration."""

    hop_counts: np.ndarray
    path_lengths: np.ndarray
    diameter: float
    max_path_length: float
    fraction_reached: float
    t_conv: Optional[float] = None


@dataclass(frozen=True)
class TraceSnapshot:
    time: float
    positions: np.ndarray
    measures: np.ndarray
    chosen: np.ndarray
    reached: np.ndarray


@dataclass
class SimTrace:
    """Time series of one simulation run plus integrity counters."""

    times: np.ndarray
    fraction_reached: np.ndarray
    diameter: np.ndarray
    max_path_length: np.ndarray
    corrections: np.ndarray
    snapshots: List[TraceSnapshot]
    directions: Optional[np.ndarray]
    t_conv: Optional[float]
    final_fraction: float
    seed: int
    config_echo: Dict
    n_mobile: int
    n_sharers: int
    c2_max_gap: float
    obstacle_violations: int
    epochs_total: int


@dataclass
class SimConfig:
    """Resolved inputs of a mobile-swarm run (geometry already placed)."""

    positions: np.ndarray
    sharer_mask: np.ndarray
    target_points: np.ndarray
    arena: Tuple[float, float]
    r_c: float
    v_s: float
    dt: float
    duration: float
    theta: float
    failure: FailureModel
    seed: int = 0
    target_rects: Tuple[Rect, ...] = ()
    epochs_per_tick: int = 1
    tol: float = 1e-8
    capture_factor: float = 0.05
    trace_stride: int = 10
    record_directions: bool = False
    stop_when_all_reached: bool = True
    echo: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.sharer_mask = np.asarray(self.sharer_mask, dtype=bool)
        self.target_points = np.atleast_2d(np.asarray(self.target_points, dtype=float))
        check_theta(self.theta)
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ConfigError("positions must be (N, 2)")
        if self.sharer_mask.shape[0] != self.positions.shape[0]:
            raise ConfigError("sharer mask must match the mobile agent count")
        if self.dt <= 0 or self.duration <= 0 or self.r_c <= 0 or self.v_s < 0:
            raise ConfigError("dt, duration and r_c must be positive; v_s non-negative")
        if self.epochs_per_tick < 1:
            raise ConfigError("epochs_per_tick must be at least 1")
        if self.v_s * self.dt > 0.1 * self.r_c:
            warnings.warn(
                f"v_s*dt = {self.v_s * self.dt:.3g} m exceeds 0.1*r_c; "
                "movement may outrun route updates",
                stacklevel=2,
            )


# ---------------------------------------------------------------------------
# Decision making
# ---------------------------------------------------------------------------

def best_neighbor(
    agent_id: int,
    neighbor_ids: Sequence[int],
    measures: np.ndarray,
    rng: np.random.Generator,
) -> Optional[int]:
    """Uniformly choose among the maximal-measure neighbors strictly better
    than the agent itself; None when no neighbor strictly exceeds it."""
    own = measures[agent_id]
    values = [(measures[j], j) for j in neighbor_ids if measures[j] > own]
    if not values:
        return None
    top = max(v for v, _ in values)
    ties = [j for v, j in values if v == top]
    return int(ties[rng.integers(len(ties))]) if len(ties) > 1 else int(ties[0])


def _choose_best_neighbors(
    link_src: np.ndarray,
    link_dst: np.ndarray,
    measures: np.ndarray,
    mover_mask: np.ndarray,
    rng: np.random.Generator,
    survivable: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Vectorized best-neighbor choice; returns -1 for agents that hold.

    ``survivable`` masks out links whose move fails with certainty (e.g.
    across an obstacle): pursuing such a neighbor can never succeed, so it
    is not a movement candidate.
    """
    n = measures.shape[0]
    chosen = np.full(n, -1, dtype=np.int64)
    if link_src.size == 0:
        return chosen
    cand = mover_mask[link_src] & (measures[link_dst] > measures[link_src])
    if survivable is not None:
        cand &= survivable
    if not cand.any():
        return chosen
    best = np.full(n, -np.inf)
    np.maximum.at(best, link_src[cand], measures[link_dst[cand]])
    is_max = cand & (measures[link_dst] == best[link_src])
    keys = np.where(is_max, rng.random(link_src.shape[0]), -1.0)
    best_key = np.full(n, -1.0)
    np.maximum.at(best_key, link_src[is_max], keys[is_max])
    pick = is_max & (keys == best_key[link_src])
    chosen[link_src[pick]] = link_dst[pick]
    return chosen


# ---------------------------------------------------------------------------
# Movement
# ---------------------------------------------------------------------------

def _truncate_at_obstacles(
    positions: np.ndarray,
    disp: np.ndarray,
    obstacles: Tuple[Rect, ...],
) -> np.ndarray:
    """Scale displacements so no segment enters an obstacle rectangle."""
    if not obstacles:
        return disp
    scale = np.ones(positions.shape[0])
    endpoints = positions + disp
    for rect in obstacles:
        hit, t_enter = clip_segments_to_rect(positions, endpoints, rect)
        scale = np.where(hit, np.minimum(scale, np.maximum(t_enter - OBSTACLE_MARGIN, 0.0)), scale)
    return disp * scale[:, None]


def _enforce_c2(
    positions: np.ndarray,
    disp: np.ndarray,
    chosen: np.ndarray,
    r_c: float,
    max_passes: int = 50,
) -> np.ndarray:
    """Scale followed agents' displacements so their followers stay in range.

    Followers of agent i are the agents currently pursuing i.  A follower
    moves toward i's old position, so zero displacement for i is always
    feasible; the minimal scale-back is found by bisection per leader.
    Leaders are rechecked after each pass because a scaled leader advances
    less toward its own target, which may re-open someone else's constraint.
    """
    followers = np.where(chosen >= 0)[0]
    if followers.size == 0:
        return disp
    leaders = chosen[followers]
    # a leader may not worsen a pair that already exceeds the radius
    allowed = np.maximum(
        r_c, np.linalg.norm(positions[followers] - positions[leaders], axis=1)
    )
    scale = np.ones(positions.shape[0])
    for _ in range(max_passes):
        new_pos = positions + scale[:, None] * disp
        gaps = np.linalg.norm(new_pos[followers] - new_pos[leaders], axis=1)
        bad = gaps > allowed + C2_TOL
        if not bad.any():
            return scale[:, None] * disp
        for i in np.unique(leaders[bad]):
            mine = leaders == i
            follower_pos = (
                positions[followers[mine]]
                + scale[followers[mine], None] * disp[followers[mine]]
            )
            budget = allowed[mine]
            lo, hi = 0.0, scale[i]
            step = float(np.linalg.norm(disp[i]))
            if step == 0.0:
                continue
            while (hi - lo) * step > C2_TOL * 0.5:
                mid = 0.5 * (lo + hi)
                pos_i = positions[i] + mid * disp[i]
                if np.all(np.linalg.norm(follower_pos - pos_i, axis=1) <= budget):
                    lo = mid
                else:
                    hi = mid
            scale[i] = lo
    raise NumericalError("follower-distance enforcement did not settle")


def step_positions(state: MobileSwarmState) -> MobileSwarmState:
    """Advance one tick: pursue goals at constant speed, under the
    follower-range restriction, obstacle avoidance, and target pinning."""
    pos = state.positions
    movers = (
        ~state.static_mask
        & ~state.reached
        & (np.any(state.goals != pos, axis=1))
    )
    to_goal = state.goals - pos
    dist = np.linalg.norm(to_goal, axis=1)
    step = np.minimum(state.v_s * state.dt, dist)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(dist[:, None] > 0.0, to_goal / np.where(dist == 0.0, 1.0, dist)[:, None], 0.0)
    disp = np.where(movers[:, None], unit * step[:, None], 0.0)
    disp = _truncate_at_obstacles(pos, disp, state.obstacles)
    disp = _enforce_c2(pos, disp, state.chosen, state.r_c)
    new_pos = pos + disp
    reached = state.reached.copy()
    # pinned where captured (inside the capture ring): teleporting onto the
    # target point could yank a followed agent out of its followers' range
    newly = _capture(new_pos, state) & ~reached & state.count_mask()
    if newly.any():
        reached |= newly
    return replace(
        state,
        positions=new_pos,
        reached=reached,
        time=state.time + state.dt,
    )


def _capture(positions: np.ndarray, state: MobileSwarmState) -> np.ndarray:
    dist = _distance_to_targets(positions, state.target_points, state.target_rects)
    return dist <= state.capture_radius


def _distance_to_targets(
    positions: np.ndarray,
    target_points: np.ndarray,
    target_rects: Tuple[Rect, ...],
) -> np.ndarray:
    dist = np.full(positions.shape[0], np.inf)
    if target_points.size:
        diffs = positions[:, None, :] - target_points[None, :, :]
        dist = np.minimum(dist, np.linalg.norm(diffs, axis=2).min(axis=1))
    for rect in target_rects:
        dist = np.minimum(dist, rect.distance(positions))
    return dist


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _hop_and_path(
    positions: np.ndarray,
    measures: np.ndarray,
    link_src: np.ndarray,
    link_dst: np.ndarray,
    target_mask: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Minimal monotone-hop counts to a target and the physical length of
    one such minimal-hop path, per agent (inf when none exists)."""
    n = positions.shape[0]
    hops = np.full(n, -1, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    hops[target_mask] = 0
    usable = measures[link_dst] >= measures[link_src]
    level = 0
    while True:
        cand = usable & (hops[link_dst] == level) & (hops[link_src] == -1)
        if not cand.any():
            break
        srcs = link_src[cand]
        dsts = link_dst[cand]
        uniq, first = np.unique(srcs, return_index=True)
        hops[uniq] = level + 1
        parent[uniq] = dsts[first]
        level += 1
    htilde = np.full(n, np.inf)
    htilde[target_mask] = 0.0
    for lv in range(1, level + 1):
        idx = np.where(hops == lv)[0]
        if idx.size == 0:
            break
        par = parent[idx]
        htilde[idx] = htilde[par] + np.linalg.norm(positions[idx] - positions[par], axis=1)
    h = np.where(hops >= 0, hops.astype(float), np.inf)
    zero_measure = (measures <= 0.0) & ~target_mask
    h[zero_measure] = np.inf
    htilde[zero_measure] = np.inf
    return h, htilde


def compute_metrics(state: MobileSwarmState) -> ConvergenceMetrics:
    """Hop counts, physical path lengths, swarm diameter, and arrival stats."""
    counted = state.count_mask()
    h, htilde = _hop_and_path(
        state.positions, state.measures, state.link_src, state.link_dst, state.static_mask
    )
    dist = _distance_to_targets(state.positions, state.target_points, state.target_rects)
    relevant = counted & ~state.reached
    diameter = 2.0 * float(dist[relevant].max()) if relevant.any() else 0.0
    finite = counted & np.isfinite(htilde)
    max_path = float(htilde[finite].max()) if finite.any() else 0.0
    frac = float(state.reached[counted].mean()) if counted.any() else 1.0
    return ConvergenceMetrics(
        hop_counts=h,
        path_lengths=htilde,
        diameter=diameter,
        max_path_length=max_path,
        fraction_reached=frac,
    )


# ---------------------------------------------------------------------------
# Simulation drivers
# ---------------------------------------------------------------------------

class _MobileSim:
    """Mutable simulation assembling topology, measures, and movement."""

    def __init__(self, config: SimConfig):
        self.config = config
        n_mobile = config.positions.shape[0]
        n_static = config.target_points.shape[0]
        self.n_mobile = n_mobile
        self.n_total = n_mobile + n_static
        self.positions = np.vstack([config.positions, config.target_points])
        self.static_mask = np.zeros(self.n_total, dtype=bool)
        self.static_mask[n_mobile:] = True
        self.sharer_mask = np.zeros(self.n_total, dtype=bool)
        self.sharer_mask[:n_mobile] = config.sharer_mask
        self.reached = np.zeros(self.n_total, dtype=bool)
        chi = np.where(self.static_mask, 1.0, 0.0)
        self.engine = MeasureEngine(
            chi,
            np.zeros(0, dtype=np.int64),
            np.zeros(0, dtype=np.int64),
            np.zeros(0),
            np.zeros(0, dtype=bool),
            config.theta,
        )
        self.engine.check_monotone = False
        seq = np.random.SeedSequence(config.seed)
        tie_seed, sharer_seed = seq.spawn(2)
        self.tie_rng = np.random.default_rng(tie_seed)
        self.sharer_rng = np.random.default_rng(sharer_seed)
        self.sharer_heading = self.sharer_rng.uniform(0, 2 * np.pi, self.n_total)
        self.link_src = np.zeros(0, dtype=np.int64)
        self.link_dst = np.zeros(0, dtype=np.int64)
        self.time = 0.0
        self.c2_max_gap = 0.0
        self.obstacle_violations = 0
        self.epochs_total = 0
        self._refresh_topology()

    # -- per-tick stages ---------------------------------------------------

    def _refresh_topology(self) -> None:
        tree = cKDTree(self.positions)
        pairs = tree.query_pairs(self.config.r_c, output_type="ndarray")
        if pairs.size:
            src = np.concatenate([pairs[:, 0], pairs[:, 1]])
            dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
            order = np.lexsort((dst, src))
            src, dst = src[order], dst[order]
        else:
            src = np.zeros(0, dtype=np.int64)
            dst = np.zeros(0, dtype=np.int64)
        lam = link_failure_probabilities(
            self.config.failure, self.positions[src], self.positions[dst], self.config.r_c
        ) if src.size else np.zeros(0)
        controllable = ~self.static_mask[src] if src.size else np.zeros(0, dtype=bool)
        self.engine.rebuild_topology(src, dst, lam, controllable)
        self.link_src, self.link_dst = src, dst

    def _measure_epochs(self, ideal: bool) -> int:
        if ideal:
            epochs, corrections, _ = self.engine.run(
                Schedule(SYNCHRONIZED, self.config.seed),
                tol=self.config.tol,
                collect_telemetry=False,
            )
            self.epochs_total += epochs
            return corrections
        corrections = 0
        for _ in range(self.config.epochs_per_tick):
            flips, _ = self.engine.sync_epoch()
            corrections += flips
        self.epochs_total += self.config.epochs_per_tick
        return corrections

    def _decide(self) -> Tuple[np.ndarray, np.ndarray]:
        movers = ~self.static_mask & ~self.reached & ~self.sharer_mask
        chosen = _choose_best_neighbors(
            self.link_src,
            self.link_dst,
            self.engine.nu,
            movers,
            self.tie_rng,
            survivable=self.engine.link_lam < 1.0 - 1e-9,
        )
        goals = self.positions.copy()
        has_leader = chosen >= 0
        goals[has_leader] = self.positions[chosen[has_leader]]
        roam = self.sharer_mask & ~self.static_mask
        if roam.any():
            self.sharer_heading[roam] += self.sharer_rng.normal(0.0, 0.3, int(roam.sum()))
            heading = self.sharer_heading[roam]
            offset = np.stack([np.cos(heading), np.sin(heading)], axis=1)
            goal = self.positions[roam] + offset * max(
                self.config.v_s * self.config.dt, 1e-6
            ) * 2.0
            w, h = self.config.arena
            goal[:, 0] = np.clip(goal[:, 0], 0.0, w)
            goal[:, 1] = np.clip(goal[:, 1], 0.0, h)
            goals[roam] = goal
        return chosen, goals

    def state(self, chosen=None, goals=None) -> MobileSwarmState:
        n = self.n_total
        return MobileSwarmState(
            positions=self.positions,
            measures=self.engine.nu.copy(),
            chosen=chosen if chosen is not None else np.full(n, -1, dtype=np.int64),
            goals=goals if goals is not None else self.positions.copy(),
            reached=self.reached.copy(),
            sharer_mask=self.sharer_mask,
            static_mask=self.static_mask,
            link_src=self.link_src,
            link_dst=self.link_dst,
            time=self.time,
            v_s=self.config.v_s,
            dt=self.config.dt,
            r_c=self.config.r_c,
            capture_radius=self.config.capture_factor * self.config.r_c,
            target_points=self.config.target_points,
            target_rects=self.config.target_rects,
            obstacles=self.config.failure.obstacle_regions,
            arena=self.config.arena,
        )

    def _verify_tick(self, state: MobileSwarmState) -> None:
        followers = np.where(state.chosen >= 0)[0]
        if followers.size:
            gaps = np.linalg.norm(
                state.positions[followers] - state.positions[state.chosen[followers]], axis=1
            )
            worst = float(gaps.max())
            self.c2_max_gap = max(self.c2_max_gap, worst)
            if worst > state.r_c + 2 * C2_TOL:
                raise NumericalError(
                    f"follower left communication range: gap {worst:.6f} > {state.r_c}"
                )
        for rect in state.obstacles:
            # boundary contact is allowed; the strict interior is a violation
            interior = (
                (state.positions[:, 0] > rect.x + OBSTACLE_MARGIN)
                & (state.positions[:, 0] < rect.x1 - OBSTACLE_MARGIN)
                & (state.positions[:, 1] > rect.y + OBSTACLE_MARGIN)
                & (state.positions[:, 1] < rect.y1 - OBSTACLE_MARGIN)
                & ~self.static_mask
            )
            self.obstacle_violations += int(np.count_nonzero(interior))

    # -- main loop ----------------------------------------------------------

    def run(self, ideal: bool) -> SimTrace:
        cfg = self.config
        n_ticks = int(round(cfg.duration / cfg.dt))
        times = [0.0]
        corrections0 = self._measure_epochs(ideal)
        state0 = self.state()
        metrics0 = compute_metrics(state0)
        fraction = [metrics0.fraction_reached]
        diameter = [metrics0.diameter]
        max_path = [metrics0.max_path_length]
        corrections = [corrections0]
        directions: List[np.ndarray] = []
        snapshots = [TraceSnapshot(0.0, self.positions.copy(), self.engine.nu.copy(),
                                   np.full(self.n_total, -1, dtype=np.int64),
                                   self.reached.copy())]
        t_conv = None
        for tick in range(1, n_ticks + 1):
            chosen, goals = self._decide()
            state = self.state(chosen, goals)
            old_pos = self.positions
            new_state = step_positions(state)
            self.positions = new_state.positions
            self.reached = new_state.reached
            self.time = new_state.time
            self._verify_tick(new_state)
            if cfg.record_directions:
                disp = (self.positions - old_pos)[: self.n_mobile]
                norms = np.linalg.norm(disp, axis=1, keepdims=True)
                directions.append(np.where(norms > 0.0, disp / np.where(norms == 0.0, 1.0, norms), 0.0))
            self._refresh_topology()
            flips = self._measure_epochs(ideal)
            metrics = compute_metrics(self.state())
            times.append(self.time)
            fraction.append(metrics.fraction_reached)
            diameter.append(metrics.diameter)
            max_path.append(metrics.max_path_length)
            corrections.append(flips)
            if tick % cfg.trace_stride == 0 or tick == n_ticks:
                snapshots.append(TraceSnapshot(self.time, self.positions.copy(),
                                               self.engine.nu.copy(), chosen.copy(),
                                               self.reached.copy()))
            if t_conv is None and metrics.fraction_reached >= 0.999:
                t_conv = self.time
            if cfg.stop_when_all_reached and metrics.fraction_reached >= 1.0:
                break
        return SimTrace(
            times=np.asarray(times),
            fraction_reached=np.asarray(fraction),
            diameter=np.asarray(diameter),
            max_path_length=np.asarray(max_path),
            corrections=np.asarray(corrections, dtype=np.int64),
            snapshots=snapshots,
            directions=np.asarray(directions) if cfg.record_directions and directions else None,
            t_conv=t_conv,
            final_fraction=float(fraction[-1]),
            seed=cfg.seed,
            config_echo=dict(cfg.echo),
            n_mobile=self.n_mobile,
            n_sharers=int(self.sharer_mask.sum()),
            c2_max_gap=self.c2_max_gap,
            obstacle_violations=self.obstacle_violations,
            epochs_total=self.epochs_total,
        )


def run_real_process(config: SimConfig) -> SimTrace:
    """Implementable process: a fixed number of measure epochs per tick."""
    return _MobileSim(config).run(ideal=False)


def run_ideal_process(config: SimConfig) -> SimTrace:
    """Reference process: fully re-converged routes every tick, with the
    convergence epochs excluded from simulated time."""
    return _MobileSim(config).run(ideal=True)


def deviation_fraction(real: SimTrace, ideal: SimTrace, angle_tol: float = 1e-6) -> np.ndarray:
    """Per-tick fraction of mobile agents whose unit velocity directions
    differ between the two processes by more than ``angle_tol`` radians."""
    if real.directions is None or ideal.directions is None:
        raise ConfigError("both traces must be recorded with record_directions=True")
    if real.directions.shape != ideal.directions.shape:
        raise ConfigError(
            f"trace shapes differ: {real.directions.shape} vs {ideal.directions.shape}"
        )
    a, b = real.directions, ideal.directions
    na = np.linalg.norm(a, axis=2)
    nb = np.linalg.norm(b, axis=2)
    both_zero = (na == 0.0) & (nb == 0.0)
    one_zero = (na == 0.0) != (nb == 0.0)
    dots = np.clip(np.sum(a * b, axis=2), -1.0, 1.0)
    angle = np.arccos(np.where(both_zero | one_zero, 1.0, dots))
    differs = (~both_zero) & (one_zero | (angle > angle_tol))
    return differs.mean(axis=1)
