"""Per-agent asynchronous measure percolation and control adaptation.

Each agent repeatedly queries its neighbors' measures, stages the failure
discount of each link, disables links whose staged value falls below its own
measure (re-enabling the rest at probability 1/m), and recomputes its own
measure from the staged values.  On a frozen network the measures climb
monotonically from zero to the fixed point of the centrally optimized
automaton; the induced forwarding decisions stop changing after finitely
many epochs.

The per-agent arithmetic lives in :func:`agent_update`; :class:`MeasureEngine`
is an array-based driver that applies the same rule to the whole swarm per
epoch (vectorized for the synchronized schedule, agent-by-agent in seeded
random order for the asynchronous one).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator

from .errors import NonConvergenceError, NumericalError
from .network import NetworkPfsa, agent_state, move_symbol
from .pfsa import DisablingSet
from .validation import check_theta

BOUND_SLACK = 1e-12
MONOTONE_SLACK = 1e-12
ROW_SLACK = 1e-12

SYNCHRONIZED = "synchronized"
ASYNC = "random-permutation-async"


@dataclass(frozen=True)
class Schedule:
    """Update order: all-at-once from a snapshot, or a seeded permutation
    of agents reading current (possibly this-epoch) values."""

    mode: str = SYNCHRONIZED
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (SYNCHRONIZED, ASYNC):
            raise ValueError(f"unknown schedule mode {self.mode!r}")


@dataclass(frozen=True)
class NeighborRecord:
    """One row of the per-agent data table."""

    neighbor_id: int
    measure: float
    lam: float
    forwarding: bool
    link_prob: float
    virtual_measure: float


@dataclass(frozen=True)
class AgentLocalState:
    """Everything one agent maintains locally.

    ``self_loop_prob`` plus the link probabilities sum to one; a neighbor's
    forwarding decision is true exactly when its link probability is
    positive.
    """

    agent_id: int
    self_measure: float
    self_loop_prob: float
    neighbors: Tuple[NeighborRecord, ...]

    def validate(self) -> None:
        total = self.self_loop_prob + sum(r.link_prob for r in self.neighbors)
        if abs(total - 1.0) > ROW_SLACK:
            raise NumericalError(f"agent {self.agent_id}: row mass {total!r} != 1")
        if self.self_loop_prob < -ROW_SLACK:
            raise NumericalError(f"agent {self.agent_id}: negative self-loop probability")
        for r in self.neighbors:
            if r.forwarding != (r.link_prob > 0.0):
                raise NumericalError(
                    f"agent {self.agent_id}: forwarding flag out of sync for {r.neighbor_id}"
                )
        if not (-BOUND_SLACK <= self.self_measure <= 1.0 + BOUND_SLACK):
            raise NumericalError(f"agent {self.agent_id}: measure {self.self_measure} outside [0, 1]")


def agent_update(
    state: AgentLocalState,
    neighbor_measures: Mapping[int, float],
    chi_i: float,
    theta: float,
) -> AgentLocalState:
    """One local update: query, adapt control, stage links, recompute measure.

    For each neighbor j the staged link value is
    ``(1 - theta) * (1 - lam_ij) * nu_j``; the link is disabled when that
    value falls below the agent's own measure and re-enabled (probability
    1/m) otherwise.  The new self-measure combines the staged values of
    enabled links, the self-loop mass, and the immediate payoff theta*chi.
    Agents with no neighbors degenerate to the self-loop recursion.
    """
    theta = check_theta(theta)
    m = len(state.neighbors)
    if m == 0:
        new_measure = (1.0 - theta) * state.self_measure + theta * chi_i
        return replace(state, self_measure=new_measure)
    share = 1.0 / m
    records: List[NeighborRecord] = []
    linked = 0.0
    enabled_count = 0
    for rec in state.neighbors:
        nu_j = float(neighbor_measures[rec.neighbor_id])
        staged = (1.0 - theta) * (1.0 - rec.lam) * nu_j
        enabled = staged >= state.self_measure
        if enabled:
            enabled_count += 1
            linked += share * staged
        records.append(
            NeighborRecord(
                neighbor_id=rec.neighbor_id,
                measure=nu_j,
                lam=rec.lam,
                forwarding=enabled,
                link_prob=share if enabled else 0.0,
                virtual_measure=staged,
            )
        )
    self_loop = (m - enabled_count) / m
    if self_loop < -ROW_SLACK:
        raise NumericalError(f"agent {state.agent_id}: self-loop mass went negative")
    new_measure = (
        (1.0 - theta) * linked
        + (1.0 - theta) * self_loop * state.self_measure
        + theta * chi_i
    )
    new_state = AgentLocalState(
        agent_id=state.agent_id,
        self_measure=new_measure,
        self_loop_prob=self_loop,
        neighbors=tuple(records),
    )
    new_state.validate()
    return new_state


def forwarding_table(state: AgentLocalState) -> List[int]:
    """Enabled neighbor ids, best (highest cached measure) first, then by id."""
    enabled = [r for r in state.neighbors if r.forwarding]
    enabled.sort(key=lambda r: (-r.measure, r.neighbor_id))
    return [r.neighbor_id for r in enabled]


def sync_iteration_bound(
    n_agents: int,
    m: int,
    epsilon: float,
    gamma_star: float,
    constant: float = 4.0,
) -> float:
    """Calibrated epoch bound C * N * m^2 / (epsilon * (1 - gamma_star)).

    The constant was calibrated once on a pilot batch of random connected
    networks (N = 100, m <= 6, epsilon = 0.05) and is held fixed.
    """
    if n_agents <= 0 or m <= 0 or epsilon <= 0:
        raise ValueError("n_agents, m and epsilon must be positive")
    if not (0.0 < gamma_star < 1.0):
        raise ValueError("gamma_star must lie in (0, 1)")
    return constant * n_agents * m * m / (epsilon * (1.0 - gamma_star))


@dataclass(frozen=True)
class EpochStats:
    """Telemetry row: decision corrections and measure movement per epoch."""

    epoch: int
    corrections: int
    rho_norm: float
    max_delta: float


@dataclass
class DistributedResult:
    """Outcome of running the engine to convergence on a frozen network."""

    measures: np.ndarray
    agent_measures: np.ndarray
    policy: DisablingSet
    epochs: int
    update_count: int
    telemetry: List[EpochStats]
    theta: float


class MeasureEngine:
    """Array-based driver for the per-agent update over a fixed link set.

    Topology is flat arrays over directed links grouped by source agent;
    the mutable state is the agent measures, per-link staged values, and the
    per-link enabled flags.  ``check_monotone`` asserts the non-decreasing
    property and is switched off automatically for nonzero initialization
    or after a topology rebuild.
    """

    def __init__(
        self,
        chi: np.ndarray,
        link_src: np.ndarray,
        link_dst: np.ndarray,
        link_lam: np.ndarray,
        controllable: np.ndarray,
        theta: float,
        check_invariants: bool = True,
    ):
        self.theta = check_theta(theta)
        self.chi = np.asarray(chi, dtype=float)
        self.n = self.chi.shape[0]
        self.check_invariants = check_invariants
        self.check_monotone = check_invariants
        self.invariant_checks = 0
        self._set_links(link_src, link_dst, link_lam, controllable)
        self.nu = np.zeros(self.n)
        self.vmeas = np.zeros(self.link_src.shape[0])
        self.enabled = self.controllable.copy()

    # -- topology ---------------------------------------------------------

    def _set_links(self, link_src, link_dst, link_lam, controllable) -> None:
        src = np.asarray(link_src, dtype=np.int64)
        if src.size and np.any(np.diff(src) < 0):
            raise ValueError("links must be grouped by source agent")
        self.link_src = src
        self.link_dst = np.asarray(link_dst, dtype=np.int64)
        self.link_lam = np.asarray(link_lam, dtype=float)
        # staged link value = edge_gain * neighbor measure
        self.edge_gain = (1.0 - self.theta) * (1.0 - self.link_lam)
        self.controllable = np.asarray(controllable, dtype=bool)
        self.m = np.bincount(src, minlength=self.n).astype(np.int64)
        self.m_eff = np.maximum(self.m, 1)
        self.indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(self.m, out=self.indptr[1:])

    def rebuild_topology(self, link_src, link_dst, link_lam, controllable) -> None:
        """Swap in a new link set, carrying enabled flags of persisting links.

        New links start enabled (the fresh-construction default); measures
        are kept.  Monotonicity is no longer guaranteed afterwards, so that
        check is dropped while boundedness stays enforced.
        """
        old_keys = self.link_src * np.int64(self.n) + self.link_dst
        old_order = np.argsort(old_keys, kind="stable")
        old_keys = old_keys[old_order]
        old_enabled = self.enabled[old_order]
        old_vmeas = self.vmeas[old_order]
        self._set_links(link_src, link_dst, link_lam, controllable)
        new_keys = self.link_src * np.int64(self.n) + self.link_dst
        if old_keys.size:
            pos = np.minimum(np.searchsorted(old_keys, new_keys), old_keys.size - 1)
            match = old_keys[pos] == new_keys
            carried_enabled = old_enabled[pos]
            carried_vmeas = old_vmeas[pos]
        else:
            match = np.zeros(new_keys.shape, dtype=bool)
            carried_enabled = np.zeros(new_keys.shape, dtype=bool)
            carried_vmeas = np.zeros(new_keys.shape)
        self.enabled = np.where(match, carried_enabled, True) & self.controllable
        self.vmeas = np.where(match, carried_vmeas, 0.0)
        self.check_monotone = False

    # -- state ------------------------------------------------------------

    def set_measures(self, agent_measures, virtual_measures=None) -> None:
        nu = np.asarray(agent_measures, dtype=float)
        if nu.shape[0] != self.n:
            raise ValueError("agent measure vector has wrong length")
        self.nu = nu.copy()
        if virtual_measures is not None:
            self.vmeas = np.asarray(virtual_measures, dtype=float).copy()
        if np.any(self.nu != 0.0) or np.any(self.vmeas != 0.0):
            self.check_monotone = False

    def _check_state(self, nu_new: np.ndarray, nu_old: np.ndarray) -> None:
        if not self.check_invariants:
            return
        self.invariant_checks += nu_new.size
        low = float(np.min(nu_new)) if nu_new.size else 0.0
        high = float(np.max(nu_new)) if nu_new.size else 0.0
        if low < -BOUND_SLACK or high > 1.0 + BOUND_SLACK:
            raise NumericalError(f"measure left [0, 1]: range [{low!r}, {high!r}]")
        if self.check_monotone and nu_new.size:
            drop = float(np.min(nu_new - nu_old))
            if drop < -MONOTONE_SLACK:
                raise NumericalError(f"measure decreased by {-drop:.3e} on a frozen network")

    # -- epochs -----------------------------------------------------------

    def sync_epoch(self) -> Tuple[int, float]:
        """One synchronized epoch: every agent updates from a common snapshot."""
        theta = self.theta
        nu_old = self.nu
        staged = self.edge_gain * nu_old[self.link_dst]
        want = self.controllable & (staged >= nu_old[self.link_src])
        flips = int(np.count_nonzero(want != self.enabled))
        contrib = np.bincount(
            self.link_src, weights=np.where(want, staged, 0.0), minlength=self.n
        )
        e = np.bincount(self.link_src[want], minlength=self.n)
        # zero-neighbor agents degenerate to a pure self-loop row
        self_coeff = np.where(self.m > 0, (self.m - e) / self.m_eff, 1.0)
        nu_new = (
            (1.0 - theta) * (contrib / self.m_eff + self_coeff * nu_old)
            + theta * self.chi
        )
        delta = float(np.max(np.abs(nu_new - nu_old))) if nu_new.size else 0.0
        if staged.size:
            delta = max(delta, float(np.max(np.abs(staged - self.vmeas))))
        self._check_state(nu_new, nu_old)
        self.nu = nu_new
        self.vmeas = staged
        self.enabled = want
        return flips, delta

    def async_epoch(self, order: np.ndarray) -> Tuple[int, float]:
        """One asynchronous epoch: agents update in the given order, each
        reading the freshest values of its neighbors."""
        theta = self.theta
        flips = 0
        delta = 0.0
        for i in order:
            lo, hi = self.indptr[i], self.indptr[i + 1]
            nu_i = self.nu[i]
            if lo == hi:
                nu_new = (1.0 - theta) * nu_i + theta * self.chi[i]
            else:
                staged = self.edge_gain[lo:hi] * self.nu[self.link_dst[lo:hi]]
                want = self.controllable[lo:hi] & (staged >= nu_i)
                flips += int(np.count_nonzero(want != self.enabled[lo:hi]))
                delta = max(delta, float(np.max(np.abs(staged - self.vmeas[lo:hi]))))
                self.enabled[lo:hi] = want
                self.vmeas[lo:hi] = staged
                m = hi - lo
                e = int(np.count_nonzero(want))
                nu_new = (
                    (1.0 - theta) * (float(staged[want].sum()) + (m - e) * nu_i) / m
                    + theta * self.chi[i]
                )
            self._check_state(np.asarray([nu_new]), np.asarray([nu_i]))
            delta = max(delta, abs(nu_new - nu_i))
            self.nu[i] = nu_new
        return flips, delta

    def run(
        self,
        schedule: Schedule,
        tol: float,
        max_epochs: Optional[int] = None,
        collect_telemetry: bool = True,
    ) -> Tuple[int, int, List[EpochStats]]:
        """Epoch loop until no decision flips and the projected error is
        below ``tol``; returns (epochs, total corrections, telemetry).

        The per-epoch measure delta contracts at rate at most (1 - theta),
        so stopping at delta < tol * theta / (1 - theta) leaves the measures
        within ~tol of the fixed point.
        """
        if tol <= 0:
            raise ValueError("tol must be positive")
        if max_epochs is None:
            max_epochs = int(60.0 / self.theta) + 50 * self.n + 1000
        threshold = tol * self.theta / (1.0 - self.theta)
        rng = np.random.default_rng(schedule.seed)
        corrections = 0
        telemetry: List[EpochStats] = []
        for epoch in range(1, max_epochs + 1):
            if schedule.mode == SYNCHRONIZED:
                flips, delta = self.sync_epoch()
            else:
                flips, delta = self.async_epoch(rng.permutation(self.n))
            corrections += flips
            if collect_telemetry:
                telemetry.append(
                    EpochStats(epoch, flips, float(np.linalg.norm(self.nu)), delta)
                )
            if flips == 0 and delta < threshold:
                return epoch, corrections, telemetry
        raise NonConvergenceError(
            f"no convergence in {max_epochs} epochs (last delta {delta:.3e})",
            residual=delta,
            iterations=max_epochs,
        )

    # -- introspection ----------------------------------------------------

    def local_state(self, agent_id: int) -> AgentLocalState:
        """Materialize one agent's data table from the engine arrays."""
        lo, hi = self.indptr[agent_id], self.indptr[agent_id + 1]
        m = hi - lo
        records = []
        for k in range(lo, hi):
            enabled = bool(self.enabled[k])
            records.append(
                NeighborRecord(
                    neighbor_id=int(self.link_dst[k]),
                    measure=float(self.nu[self.link_dst[k]]),
                    lam=float(self.link_lam[k]),
                    forwarding=enabled,
                    link_prob=(1.0 / m) if enabled else 0.0,
                    virtual_measure=float(self.vmeas[k]),
                )
            )
        e = int(np.count_nonzero(self.enabled[lo:hi]))
        return AgentLocalState(
            agent_id=agent_id,
            self_measure=float(self.nu[agent_id]),
            self_loop_prob=(m - e) / m if m else 1.0,
            neighbors=tuple(records),
        )


def engine_from_network(
    net: NetworkPfsa,
    theta: float,
    init: Optional[np.ndarray] = None,
    check_invariants: bool = True,
) -> MeasureEngine:
    """Build an engine from a frozen-network PFSA (links in state order)."""
    links = sorted(net.virtual_index)
    n = net.n_agents
    src = np.asarray([i for i, _ in links], dtype=np.int64)
    dst = np.asarray([j for _, j in links], dtype=np.int64)
    lam = np.asarray([net.lam[link] for link in links], dtype=float)
    controllable = np.asarray([i not in net.target_ids for i, _ in links], dtype=bool)
    chi = net.pfsa.chi()[:n]
    engine = MeasureEngine(chi, src, dst, lam, controllable, theta, check_invariants)
    if init is not None:
        init = np.asarray(init, dtype=float)
        if init.shape[0] != net.pfsa.n_states:
            raise ValueError("init must cover every network state")
        agent_init = init[:n]
        virt_init = np.asarray(
            [init[net.virtual_index[link]] for link in links], dtype=float
        )
        engine.set_measures(agent_init, virt_init)
    return engine


def run_to_convergence(
    net: NetworkPfsa,
    theta: float,
    schedule: Schedule = Schedule(),
    tol: float = 1e-10,
    init: Optional[np.ndarray] = None,
    max_epochs: Optional[int] = None,
    check_invariants: bool = True,
) -> DistributedResult:
    """Run the distributed update on a frozen network until routes and
    measures are stationary.

    Returns the full-state measure vector (agents, then link states, then
    dump), the induced disabling set, the epoch count, and the total number
    of forwarding-decision corrections.
    """
    engine = engine_from_network(net, theta, init, check_invariants)
    epochs, corrections, telemetry = engine.run(schedule, tol, max_epochs)
    links = sorted(net.virtual_index)
    n_states = net.pfsa.n_states
    measures = np.zeros(n_states)
    measures[: net.n_agents] = engine.nu
    for k, link in enumerate(links):
        measures[net.virtual_index[link]] = engine.vmeas[k]
    measures[net.dump_index] = net.pfsa.characteristic[net.dump_index]
    disabled = frozenset(
        (agent_state(int(i)), move_symbol(int(i), int(j)))
        for (i, j), on, ctrl in zip(links, engine.enabled, engine.controllable)
        if ctrl and not on
    )
    return DistributedResult(
        measures=measures,
        agent_measures=engine.nu.copy(),
        policy=disabled,
        epochs=epochs,
        update_count=corrections,
        telemetry=telemetry,
        theta=engine.theta,
    )


def agent_performance(engine: MeasureEngine, target_mask: np.ndarray) -> np.ndarray:
    """Per-agent probability of eventually reaching a target under the
    engine's current forwarding decisions.

    Works at the agent level: a walk leaving agent i picks one of its e_i
    enabled links uniformly (self-loop mass only delays, never redirects),
    survives that link with probability 1 - lambda, and continues from the
    neighbor.  Targets score one; agents with no enabled link score zero.
    Solved as one sparse linear system, so it scales to networks whose full
    state space is never materialized.
    """
    from scipy import sparse
    from scipy.sparse.linalg import spsolve

    target_mask = np.asarray(target_mask, dtype=bool)
    n = engine.n
    e = np.bincount(engine.link_src[engine.enabled], minlength=n).astype(float)
    unknown = ~target_mask & (e > 0)
    rho = np.where(target_mask, 1.0, 0.0)
    if not unknown.any():
        return rho
    col_of = np.full(n, -1, dtype=np.int64)
    idx = np.where(unknown)[0]
    col_of[idx] = np.arange(idx.size)
    live = engine.enabled & unknown[engine.link_src]
    src = engine.link_src[live]
    dst = engine.link_dst[live]
    weight = (1.0 - engine.link_lam[live]) / e[src]
    rhs = np.zeros(idx.size)
    to_target = target_mask[dst]
    np.add.at(rhs, col_of[src[to_target]], weight[to_target])
    interior = unknown[dst]
    mat = sparse.coo_matrix(
        (
            np.concatenate([np.ones(idx.size), -weight[interior]]),
            (
                np.concatenate([np.arange(idx.size), col_of[src[interior]]]),
                np.concatenate([np.arange(idx.size), col_of[dst[interior]]]),
            ),
        ),
        shape=(idx.size, idx.size),
    ).tocsr()
    solved = spsolve(mat, rhs)
    if not np.all(np.isfinite(solved)):
        raise NumericalError("absorption solve produced non-finite probabilities")
    rho[idx] = solved
    return rho


def network_performance(
    net: NetworkPfsa,
    policy: DisablingSet,
    theta: float = 0.5,
) -> np.ndarray:
    """Arrival probabilities of a frozen network under a given disabling set."""
    engine = engine_from_network(net, theta)
    links = sorted(net.virtual_index)
    disabled_links = np.asarray(
        [
            (agent_state(int(i)), move_symbol(int(i), int(j))) in policy
            for (i, j) in links
        ],
        dtype=bool,
    )
    engine.enabled = engine.controllable & ~disabled_links
    target_mask = np.zeros(net.n_agents, dtype=bool)
    for t in net.target_ids:
        target_mask[t] = True
    return agent_performance(engine, target_mask)


class DistributedRouteOptimizer(BaseEstimator):
    """Estimator wrapper around :func:`run_to_convergence`.

    Parameters mirror the functional interface; fitted attributes expose the
    converged measures, the induced policy, and per-epoch telemetry.
    """

    def __init__(
        self,
        theta: float = 0.01,
        mode: str = SYNCHRONIZED,
        seed: int = 0,
        tol: float = 1e-10,
        max_epochs: Optional[int] = None,
    ):
        self.theta = theta
        self.mode = mode
        self.seed = seed
        self.tol = tol
        self.max_epochs = max_epochs

    def fit(self, net: NetworkPfsa, y=None):
        result = run_to_convergence(
            net,
            self.theta,
            Schedule(self.mode, self.seed),
            tol=self.tol,
            max_epochs=self.max_epochs,
        )
        self.measures_ = result.measures
        self.agent_measures_ = result.agent_measures
        self.policy_ = result.policy
        self.epochs_ = result.epochs
        self.corrections_ = result.update_count
        self.telemetry_ = result.telemetry
        return self

    def predict(self, net: NetworkPfsa) -> np.ndarray:
        """Fitted per-agent measures (the gradient agents follow)."""
        if not hasattr(self, "agent_measures_"):
            raise NumericalError("DistributedRouteOptimizer must be fitted before predict")
        return self.agent_measures_.copy()
