"""Centralized optimal supervision of a PFSA, plus validation oracles.

The supervisor synthesis iterates measure computation and transition
enabling/disabling until the disabling set is stable; each sweep provably
improves the measure vector elementwise.  Brute-force enumeration and a
discounted policy-iteration baseline are kept alongside as independent
routes for testing the synthesis.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from sklearn.base import BaseEstimator

from .errors import NonConvergenceError, NumericalError, PfsaFormatError
from .measure import MeasureVector, compute_measure, stationary_performance
from .pfsa import DisablingSet, Pfsa, apply_policy, build_transition_matrix
from .validation import CHECK_TOL, check_theta

BRUTE_FORCE_LIMIT = 20
TARGET_CHI_ATOL = 1e-9


@dataclass(frozen=True)
class SupervisorResult:
    """Fixed-point policy of the supervision loop and its measure."""

    policy: DisablingSet
    measure: MeasureVector
    iterations: int
    theta_used: float


def _policy_from_measure(pfsa: Pfsa, nu: np.ndarray) -> DisablingSet:
    """Disable every controllable transition into a lower-measure state.

    Destinations are read from the base automaton, so re-enabling restores
    the original move; ties keep the transition enabled.
    """
    index = pfsa.state_index
    disabled = set()
    for (src, sym) in pfsa.controllable:
        dst = pfsa.transitions[(src, sym)]
        if nu[index[dst]] < nu[index[src]]:
            disabled.add((src, sym))
    return frozenset(disabled)


def optimal_supervisor(
    pfsa: Pfsa,
    theta: float,
    max_iter: Optional[int] = None,
) -> SupervisorResult:
    """Iterate measure computation and control adaptation to a fixed point.

    Every sweep recomputes the measure of the currently supervised plant,
    then disables controllable transitions whose destination measure falls
    below the source and re-enables the rest.  The measure sequence is
    asserted elementwise non-decreasing; the loop stops when the disabling
    set repeats.
    """
    theta = check_theta(theta)
    pfsa.validate()
    if max_iter is None:
        max_iter = 10 * max(pfsa.n_states, 1)
    chi = pfsa.chi()
    policy: DisablingSet = frozenset()
    prev_values: Optional[np.ndarray] = None
    for iteration in range(1, max_iter + 1):
        plant = apply_policy(pfsa, policy)
        nu = compute_measure(build_transition_matrix(plant), chi, theta)
        if prev_values is not None:
            drop = float(np.min(nu.values - prev_values))
            if drop < -CHECK_TOL:
                raise NumericalError(
                    f"measure decreased by {-drop:.3e} during supervision sweep {iteration}"
                )
        prev_values = nu.values
        new_policy = _policy_from_measure(pfsa, nu.values)
        if new_policy == policy:
            return SupervisorResult(policy, nu, iteration, theta)
        policy = new_policy
    raise NonConvergenceError(
        f"supervision did not stabilize in {max_iter} sweeps "
        f"(last policy size {len(policy)})",
        iterations=max_iter,
    )


def brute_force_optimal(
    pfsa: Pfsa,
    theta: float,
    limit: int = BRUTE_FORCE_LIMIT,
    atol: float = CHECK_TOL,
) -> SupervisorResult:
    """Enumerate all disabling sets and return the elementwise-dominant one.

    Among policies whose measure matches the dominant one within ``atol``,
    the smallest (then lexicographically first) disabling set is returned,
    i.e. the maximally permissive optimum.  If no policy dominates all
    others elementwise, the uniqueness claim underlying the whole approach
    is broken, which is reported as an error.
    """
    theta = check_theta(theta)
    pfsa.validate()
    pairs = sorted(pfsa.controllable)
    if len(pairs) > limit:
        raise PfsaFormatError(
            f"{len(pairs)} controllable transitions exceed the enumeration guard {limit}"
        )
    chi = pfsa.chi()
    candidates: List[Tuple[DisablingSet, np.ndarray]] = []
    for k in range(len(pairs) + 1):
        for combo in itertools.combinations(pairs, k):
            policy = frozenset(combo)
            pi = build_transition_matrix(apply_policy(pfsa, policy))
            candidates.append((policy, compute_measure(pi, chi, theta).values))
    sums = [float(v.sum()) for _, v in candidates]
    best_policy, best_values = candidates[int(np.argmax(sums))]
    for policy, values in candidates:
        if np.any(values > best_values + atol):
            raise NumericalError(
                "no elementwise-dominant policy exists: "
                f"{sorted(policy)} beats {sorted(best_policy)} somewhere"
            )
    ties = [
        policy
        for policy, values in candidates
        if np.all(np.abs(values - best_values) <= atol)
    ]
    winner = min(ties, key=lambda p: (len(p), sorted(p)))
    pi = build_transition_matrix(apply_policy(pfsa, winner))
    measure = compute_measure(pi, chi, theta)
    return SupervisorResult(winner, measure, len(candidates), theta)


def select_theta(epsilon: float, m: int) -> float:
    """Parameter guaranteeing the limiting policy performs within epsilon
    of the best achievable arrival probabilities: epsilon / m**2, where m is
    the largest neighborhood size.  Clamped into (0, 0.5] with a warning."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if m < 1:
        raise ValueError("neighborhood size m must be >= 1")
    theta = epsilon / float(m * m)
    if theta > 0.5:
        warnings.warn(
            f"theta={theta:.4g} clamped to 0.5; epsilon/m^2 exceeded the usable range",
            stacklevel=2,
        )
        theta = 0.5
    return theta


def critical_theta_sweep(
    pfsa: Pfsa,
    theta_start: float,
    min_theta: float = 1e-6,
) -> float:
    """Estimate the largest theta below which the optimal policy is stable.

    Halves theta from ``theta_start``, synthesizing the supervisor at each
    value, until three consecutive values yield an identical disabling set;
    returns the largest theta of that stable run.
    """
    theta = check_theta(theta_start)
    run_start = theta
    run_policy = None
    run_length = 0
    while theta >= min_theta:
        policy = optimal_supervisor(pfsa, theta).policy
        if run_policy is not None and policy == run_policy:
            run_length += 1
        else:
            run_policy = policy
            run_start = theta
            run_length = 1
        if run_length >= 3:
            return run_start
        theta *= 0.5
    raise NonConvergenceError(
        f"no policy stable across three halvings above {min_theta:g}"
    )


# ---------------------------------------------------------------------------
# Discounted dynamic-programming baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolicyIterationResult:
    """Discounted-optimal single-move policy and its value vector.

    ``policy`` maps each state with controllable moves to the one symbol it
    keeps enabled (all other controllables self-loop).  ``metadata`` records
    the scaling constant linking values to measures: nu = measure_scale * V.
    """

    policy: Dict[str, str]
    values: np.ndarray
    transition_matrix: np.ndarray
    iterations: int
    discount: float
    metadata: Dict[str, float]


def _action_rows(pfsa: Pfsa, base_pi: np.ndarray):
    """Per-state action table: symbol -> transition row with the other
    controllables at that state redirected to self."""
    index = pfsa.state_index
    by_state: Dict[str, List[Tuple[str, int, float]]] = {}
    for (src, sym) in sorted(pfsa.controllable):
        dst = pfsa.transitions[(src, sym)]
        by_state.setdefault(src, []).append((sym, index[dst], pfsa.morph[(src, sym)]))
    actions: Dict[str, Dict[str, np.ndarray]] = {}
    for src, moves in by_state.items():
        i = index[src]
        rows: Dict[str, np.ndarray] = {}
        for keep_sym, _, _ in moves:
            row = base_pi[i].copy()
            for sym, dst_idx, prob in moves:
                if sym != keep_sym and dst_idx != i:
                    row[dst_idx] -= prob
                    row[i] += prob
            rows[keep_sym] = row
        actions[src] = rows
    return actions


def policy_iteration(
    pfsa: Pfsa,
    discount: float,
    max_iter: int = 500,
    bellman_tol: float = 1e-9,
) -> PolicyIterationResult:
    """Policy iteration over single-enabled-move policies at a given discount.

    Rewards equal the state characteristic, so the value function is the
    measure divided by (1 - discount).  States without controllable moves
    keep their native rows.
    """
    if not (0.0 < discount < 1.0):
        raise ValueError(f"discount must lie in (0, 1), got {discount}")
    pfsa.validate()
    base_pi = build_transition_matrix(pfsa)
    chi = pfsa.chi()
    index = pfsa.state_index
    n = pfsa.n_states
    actions = _action_rows(pfsa, base_pi)
    policy = {src: sorted(rows)[0] for src, rows in actions.items()}
    for iteration in range(1, max_iter + 1):
        pi = base_pi.copy()
        for src, sym in policy.items():
            pi[index[src]] = actions[src][sym]
        values = np.linalg.solve(np.eye(n) - discount * pi, chi)
        changed = False
        for src, rows in actions.items():
            current = policy[src]
            best_sym, best_q = current, float(rows[current] @ values)
            for sym, row in rows.items():
                q = float(row @ values)
                if q > best_q + 1e-13:
                    best_sym, best_q = sym, q
            if best_sym != current:
                policy[src] = best_sym
                changed = True
        if not changed:
            residual = float(np.max(np.abs(values - (chi + discount * pi @ values))))
            if residual > bellman_tol * max(1.0, float(np.max(np.abs(values)))):
                raise NumericalError(f"Bellman residual {residual:.3e} after convergence")
            return PolicyIterationResult(
                policy=dict(policy),
                values=values,
                transition_matrix=pi,
                iterations=iteration,
                discount=discount,
                metadata={"measure_scale": 1.0 - discount},
            )
    raise NonConvergenceError(f"policy iteration did not converge in {max_iter} sweeps")


def target_indices(pfsa: Pfsa) -> List[int]:
    """Indices of states whose characteristic equals one."""
    chi = pfsa.chi()
    return [int(i) for i in np.where(np.abs(chi - 1.0) <= TARGET_CHI_ATOL)[0]]


def utopian_performance(
    pfsa: Pfsa,
    policy: Optional[DisablingSet] = None,
    theta: float = 1e-6,
) -> np.ndarray:
    """Best-achievable arrival probabilities at the characteristic-one states.

    Synthesizes the supervisor at a vanishing theta (or applies a supplied
    optimal policy) and returns the absorption probabilities of the
    controlled chain.
    """
    targets = target_indices(pfsa)
    if not targets:
        raise PfsaFormatError("no state with characteristic 1; nothing to reach")
    if policy is None:
        policy = optimal_supervisor(pfsa, theta).policy
    pi = build_transition_matrix(apply_policy(pfsa, policy))
    return stationary_performance(pi, targets)


# ---------------------------------------------------------------------------
# Estimator-style wrappers
# ---------------------------------------------------------------------------

class OptimalSupervisor(BaseEstimator):
    """Estimator wrapper around :func:`optimal_supervisor`.

    Parameters
    ----------
    theta : float
        Measure parameter in (0, 1).
    max_iter : int or None
        Sweep cap; defaults to 10x the state count.
    """

    def __init__(self, theta: float = 0.01, max_iter: Optional[int] = None):
        self.theta = theta
        self.max_iter = max_iter

    def fit(self, pfsa: Pfsa, y=None):
        result = optimal_supervisor(pfsa, self.theta, self.max_iter)
        self.policy_ = result.policy
        self.measure_ = result.measure
        self.n_iter_ = result.iterations
        self.plant_ = apply_policy(pfsa, result.policy)
        return self

    def transform(self, pfsa: Pfsa) -> Pfsa:
        """Apply the learned disabling set to a compatible automaton."""
        if not hasattr(self, "policy_"):
            raise NumericalError("OptimalSupervisor must be fitted before transform")
        return apply_policy(pfsa, self.policy_)

    def fit_transform(self, pfsa: Pfsa, y=None) -> Pfsa:
        return self.fit(pfsa).plant_


class PolicyIterationSolver(BaseEstimator):
    """Estimator wrapper around :func:`policy_iteration`."""

    def __init__(self, discount: float = 0.99, max_iter: int = 500):
        self.discount = discount
        self.max_iter = max_iter

    def fit(self, pfsa: Pfsa, y=None):
        result = policy_iteration(pfsa, self.discount, self.max_iter)
        self.policy_ = result.policy
        self.values_ = result.values
        self.transition_matrix_ = result.transition_matrix
        self.n_iter_ = result.iterations
        self.measure_scale_ = result.metadata["measure_scale"]
        return self

    def predict(self, pfsa: Pfsa) -> np.ndarray:
        """Measure-scaled values of the fitted policy: nu = (1 - discount) * V."""
        if not hasattr(self, "values_"):
            raise NumericalError("PolicyIterationSolver must be fitted before predict")
        return self.measure_scale_ * self.values_
