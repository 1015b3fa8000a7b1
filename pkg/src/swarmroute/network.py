"""Frozen-swarm network construction: geometry, link failure, PFSA assembly.

Agents within communication radius of each other become neighbors; every
directed neighbor link (i, j) gets an intermediate state carrying the link's
failure branch (probability lambda_ij into an absorbing dump state, the rest
forwarding to j).  Target agents are static: their outgoing moves are
built as permanent self-loops so their measure pins at one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, PfsaFormatError
from .pfsa import Pfsa

DUMP_STATE = "dump"
FAIL_SYMBOL = "fail"
IDLE_SYMBOL = "idle"
GAMMA_STAR_FLOOR = 1e-3


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle given by lower-left corner and extent."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ConfigError(f"rectangle extent must be positive, got {self.w}x{self.h}")

    @property
    def x1(self) -> float:
        return self.x + self.w

    @property
    def y1(self) -> float:
        return self.y + self.h

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (
            (pts[:, 0] >= self.x)
            & (pts[:, 0] <= self.x1)
            & (pts[:, 1] >= self.y)
            & (pts[:, 1] <= self.y1)
        )

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance from points to the rectangle (zero inside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dx = np.maximum(np.maximum(self.x - pts[:, 0], pts[:, 0] - self.x1), 0.0)
        dy = np.maximum(np.maximum(self.y - pts[:, 1], pts[:, 1] - self.y1), 0.0)
        return np.hypot(dx, dy)


def clip_segments_to_rect(p0: np.ndarray, p1: np.ndarray, rect: Rect):
    """Liang-Barsky clip of segments p0 -> p1 against a rectangle.

    Returns (hit, t_enter): a boolean mask of segments that overlap the
    rectangle and the parameter in [0, 1] at which each enters it.
    """
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    p1 = np.atleast_2d(np.asarray(p1, dtype=float))
    d = p1 - p0
    t0 = np.zeros(p0.shape[0])
    t1 = np.ones(p0.shape[0])
    ok = np.ones(p0.shape[0], dtype=bool)
    bounds = (
        (-d[:, 0], p0[:, 0] - rect.x),
        (d[:, 0], rect.x1 - p0[:, 0]),
        (-d[:, 1], p0[:, 1] - rect.y),
        (d[:, 1], rect.y1 - p0[:, 1]),
    )
    for p, q in bounds:
        parallel = p == 0.0
        ok &= ~(parallel & (q < 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(parallel, 0.0, q / np.where(parallel, 1.0, p))
        entering = (p < 0.0) & ~parallel
        leaving = (p > 0.0) & ~parallel
        t0 = np.where(entering, np.maximum(t0, t), t0)
        t1 = np.where(leaving, np.minimum(t1, t), t1)
    hit = ok & (t0 <= t1)
    return hit, np.where(hit, t0, 1.0)


def segment_intersects_rect(p0, p1, rect: Rect) -> bool:
    hit, _ = clip_segments_to_rect(np.asarray([p0]), np.asarray([p1]), rect)
    return bool(hit[0])


# ---------------------------------------------------------------------------
# Snapshot and failure model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SwarmSnapshot:
    """Fixed spatial configuration: positions, target agents, radio range."""

    positions: np.ndarray
    target_ids: FrozenSet[int]
    r_c: float

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ConfigError(f"positions must be (N, 2), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ConfigError("positions must be finite")
        if self.r_c <= 0:
            raise ConfigError("communication radius must be positive")
        targets = frozenset(int(t) for t in self.target_ids)
        if not targets:
            raise ConfigError("at least one target agent is required")
        if any(t < 0 or t >= pos.shape[0] for t in targets):
            raise ConfigError("target ids must index the agent set")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "target_ids", targets)

    @property
    def n_agents(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class FailureModel:
    """Distance-dependent link failure probabilities with seeded spatial noise.

    The base profile interpolates linearly from ``lambda_at_zero`` at
    distance zero to ``lambda_at_rc`` at the communication radius; failure
    probabilities never increase with distance, hence the endpoint ordering
    constraint.  Links crossing an obstacle fail with certainty.
    """

    lambda_at_zero: float = 0.3
    lambda_at_rc: float = 0.1
    spatial_noise_amplitude: float = 0.0
    noise_seed: int = 0
    obstacle_regions: Tuple[Rect, ...] = ()

    def __post_init__(self):
        if not (0.0 <= self.lambda_at_rc <= self.lambda_at_zero <= 1.0):
            raise ConfigError(
                "need 0 <= lambda_at_rc <= lambda_at_zero <= 1 "
                f"(got {self.lambda_at_rc}, {self.lambda_at_zero})"
            )
        if not (0.0 <= self.spatial_noise_amplitude < 1.0):
            raise ConfigError("spatial_noise_amplitude must lie in [0, 1)")
        object.__setattr__(self, "obstacle_regions", tuple(self.obstacle_regions))


def _splitmix64(x: np.ndarray) -> np.ndarray:
    # uint64 wraparound is the intended mixing behavior
    x = (x + np.uint64(0x9E3779B97F4A7C15)).astype(np.uint64)
    x ^= x >> np.uint64(30)
    x *= np.uint64(0xBF58476D1CE4E5B9)
    x ^= x >> np.uint64(27)
    x *= np.uint64(0x94D049BB133111EB)
    x ^= x >> np.uint64(31)
    return x


def _cell_noise(cx: np.ndarray, cy: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic value noise in [-1, 1) keyed by grid cell and seed."""
    cx = np.atleast_1d(cx).astype(np.int64).view(np.uint64)
    cy = np.atleast_1d(cy).astype(np.int64).view(np.uint64)
    seed_arr = np.atleast_1d(np.int64(seed)).view(np.uint64)
    with np.errstate(over="ignore"):
        key = _splitmix64(cx * np.uint64(0xC2B2AE3D27D4EB4F))
        key ^= _splitmix64(cy * np.uint64(0x165667B19E3779F9))
        key ^= _splitmix64(seed_arr * np.uint64(0x9E3779B97F4A7C15))
        u = (_splitmix64(key) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
    return 2.0 * u - 1.0


def link_failure_probabilities(
    model: FailureModel,
    positions_src: np.ndarray,
    positions_dst: np.ndarray,
    r_c: float,
) -> np.ndarray:
    """Vectorized failure probability for directed links src -> dst."""
    p0 = np.atleast_2d(positions_src)
    p1 = np.atleast_2d(positions_dst)
    dist = np.linalg.norm(p1 - p0, axis=1)
    lam = model.lambda_at_zero + (model.lambda_at_rc - model.lambda_at_zero) * (dist / r_c)
    if model.spatial_noise_amplitude > 0.0:
        mid = 0.5 * (p0 + p1)
        cells = np.floor(mid / r_c)
        noise = _cell_noise(cells[:, 0], cells[:, 1], model.noise_seed)
        lam = lam + model.spatial_noise_amplitude * noise
    lam = np.clip(lam, 0.0, 1.0)
    for rect in model.obstacle_regions:
        hit, _ = clip_segments_to_rect(p0, p1, rect)
        lam = np.where(hit, 1.0, lam)
    return lam


def failure_prob(model: FailureModel, snapshot: SwarmSnapshot, i: int, j: int) -> float:
    """Failure probability of moving from agent i toward neighbor j."""
    pos = snapshot.positions
    if i == j or np.linalg.norm(pos[i] - pos[j]) > snapshot.r_c:
        raise ConfigError(f"agents {i} and {j} are not neighbors")
    return float(
        link_failure_probabilities(model, pos[i][None, :], pos[j][None, :], snapshot.r_c)[0]
    )


# ---------------------------------------------------------------------------
# Neighbor map
# ---------------------------------------------------------------------------

def neighbor_map(snapshot: SwarmSnapshot) -> Tuple[Tuple[int, ...], ...]:
    """Per-agent neighbor tuples: mutual single-hop reachability within r_c."""
    n = snapshot.n_agents
    sets: Tuple[list, ...] = tuple([] for _ in range(n))
    if n > 1:
        tree = cKDTree(snapshot.positions)
        pairs = tree.query_pairs(snapshot.r_c, output_type="ndarray")
        for i, j in pairs:
            sets[i].append(int(j))
            sets[j].append(int(i))
    return tuple(tuple(sorted(s)) for s in sets)


def swarm_is_connected(neighbors: Sequence[Sequence[int]]) -> bool:
    n = len(neighbors)
    if n == 0:
        return True
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in neighbors[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    return bool(seen.all())


def gamma_star(lam_values: Iterable[float], floor: float = GAMMA_STAR_FLOOR) -> float:
    """Lower bound on link failure probabilities, floored to stay positive."""
    values = list(lam_values)
    if not values:
        return floor
    return max(float(min(values)), floor)


# ---------------------------------------------------------------------------
# Network PFSA assembly
# ---------------------------------------------------------------------------

def agent_state(i: int) -> str:
    return f"a{i}"


def virtual_state(i: int, j: int) -> str:
    return f"v{i}>{j}"


def move_symbol(i: int, j: int) -> str:
    return f"go{i}>{j}"


@dataclass(frozen=True)
class NetworkPfsa:
    """A frozen-swarm PFSA plus index maps between agents and states."""

    pfsa: Pfsa
    agent_index: Dict[int, int]
    virtual_index: Dict[Tuple[int, int], int]
    dump_index: int
    neighbors: Tuple[Tuple[int, ...], ...]
    lam: Dict[Tuple[int, int], float]
    target_ids: FrozenSet[int]

    @property
    def n_agents(self) -> int:
        return len(self.agent_index)

    @cached_property
    def max_neighborhood(self) -> int:
        return max((len(s) for s in self.neighbors), default=0)

    def gamma_star(self, floor: float = GAMMA_STAR_FLOOR) -> float:
        return gamma_star(self.lam.values(), floor)

    def validate_counts(self) -> None:
        n_agents = self.n_agents
        n_virtual = sum(len(s) for s in self.neighbors)
        n_states = self.pfsa.n_states
        if n_states != n_agents + n_virtual + 1:
            raise PfsaFormatError(
                f"state count {n_states} != agents {n_agents} + links {n_virtual} + dump"
            )
        if not (n_agents + 1 <= n_states <= n_agents * n_agents + 1):
            raise PfsaFormatError(f"state count {n_states} outside [N+1, N^2+1]")


def build_network_pfsa(
    snapshot: SwarmSnapshot,
    neighbors: Optional[Sequence[Sequence[int]]] = None,
    model: Optional[FailureModel] = None,
    dump_characteristic: float = 0.0,
) -> NetworkPfsa:
    """Assemble the frozen-network PFSA from geometry and the failure model.

    States are ordered agents first, then one state per directed link in
    (source, neighbor) order, then the dump.  Agent rows spread probability
    1/m over their m links (controllable); link states forward with
    probability 1 - lambda_ij or fail into the dump; the dump self-loops.
    Target agents' moves are built as permanent (non-controllable)
    self-loops, and isolated agents idle in place.
    """
    if model is None:
        model = FailureModel()
    if neighbors is None:
        neighbors = neighbor_map(snapshot)
    neighbors = tuple(tuple(int(j) for j in s) for s in neighbors)
    if dump_characteristic not in (0.0, -1.0):
        raise ConfigError("dump_characteristic must be 0 or -1")
    n = snapshot.n_agents
    if len(neighbors) != n:
        raise ConfigError("neighbor map length does not match the snapshot")
    states = [agent_state(i) for i in range(n)]
    agent_index = {i: i for i in range(n)}
    links = [(i, j) for i in range(n) for j in neighbors[i]]
    virtual_index = {}
    for (i, j) in links:
        virtual_index[(i, j)] = len(states)
        states.append(virtual_state(i, j))
    dump_index = len(states)
    states.append(DUMP_STATE)

    lam_arr = (
        link_failure_probabilities(
            model,
            snapshot.positions[[i for i, _ in links]],
            snapshot.positions[[j for _, j in links]],
            snapshot.r_c,
        )
        if links
        else np.zeros(0)
    )
    lam = {link: float(v) for link, v in zip(links, lam_arr)}

    transitions = {}
    morph = {}
    controllable = set()
    symbols = []
    has_isolated = False
    for i in range(n):
        m = len(neighbors[i])
        src = agent_state(i)
        if m == 0:
            has_isolated = True
            transitions[(src, IDLE_SYMBOL)] = src
            morph[(src, IDLE_SYMBOL)] = 1.0
            continue
        share = 1.0 / m
        for j in neighbors[i]:
            sym = move_symbol(i, j)
            symbols.append(sym)
            morph[(src, sym)] = share
            if i in snapshot.target_ids:
                transitions[(src, sym)] = src
            else:
                transitions[(src, sym)] = virtual_state(i, j)
                controllable.add((src, sym))
            vstate = virtual_state(i, j)
            lam_ij = lam[(i, j)]
            transitions[(vstate, sym)] = agent_state(j)
            morph[(vstate, sym)] = 1.0 - lam_ij
            transitions[(vstate, FAIL_SYMBOL)] = DUMP_STATE
            morph[(vstate, FAIL_SYMBOL)] = lam_ij
    transitions[(DUMP_STATE, FAIL_SYMBOL)] = DUMP_STATE
    morph[(DUMP_STATE, FAIL_SYMBOL)] = 1.0
    symbols.append(FAIL_SYMBOL)
    if has_isolated:
        symbols.append(IDLE_SYMBOL)

    chi = [1.0 if i in snapshot.target_ids else 0.0 for i in range(n)]
    chi += [0.0] * len(links)
    chi.append(dump_characteristic)

    pfsa = Pfsa(
        states=tuple(states),
        alphabet=tuple(symbols),
        transitions=transitions,
        morph=morph,
        characteristic=tuple(chi),
        controllable=frozenset(controllable),
    )
    net = NetworkPfsa(
        pfsa=pfsa,
        agent_index=agent_index,
        virtual_index=virtual_index,
        dump_index=dump_index,
        neighbors=neighbors,
        lam=lam,
        target_ids=snapshot.target_ids,
    )
    net.validate_counts()
    return net


def network_roles(net: NetworkPfsa) -> Dict[str, str]:
    """Role annotation map used by the PFSA text serialization."""
    roles = {agent_state(i): "agent" for i in net.agent_index}
    roles.update({net.pfsa.states[k]: "virtual" for k in net.virtual_index.values()})
    roles[DUMP_STATE] = "dump"
    return roles


def random_connected_snapshot(
    n_agents: int,
    arena: Tuple[float, float],
    r_c: float,
    rng: np.random.Generator,
    n_targets: int = 1,
    max_tries: int = 200,
) -> SwarmSnapshot:
    """Uniform placement redrawn until the communication graph is connected."""
    w, h = arena
    for _ in range(max_tries):
        pos = rng.random((n_agents, 2)) * np.array([w, h])
        targets = frozenset(int(t) for t in rng.choice(n_agents, size=n_targets, replace=False))
        snapshot = SwarmSnapshot(positions=pos, target_ids=targets, r_c=r_c)
        if swarm_is_connected(neighbor_map(snapshot)):
            return snapshot
    raise ConfigError(
        f"no connected placement of {n_agents} agents found in {max_tries} draws; "
        "increase r_c or the agent density"
    )
