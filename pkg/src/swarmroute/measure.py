"""Language measure of PFSA states and limiting (Cesaro) behavior.

The central quantity is the per-state measure vector nu solving

    (I - (1-theta) * Pi) nu = theta * chi,     theta in (0, 1)

which scores every state by the discounted payoff of the strings it
generates.  As theta -> 0+ the measure approaches P @ chi, where P is the
Cesaro limit of Pi; for absorbing chains P holds the absorption
probabilities, so the limit connects measures to end-to-end success
probabilities of routing policies.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import NonConvergenceError, NumericalError, PfsaFormatError
from .validation import (
    CHECK_TOL,
    check_characteristic,
    check_theta,
    check_transition_matrix,
)

RESIDUAL_BOUND = 1e-10  # per-dimension residual contract of compute_measure
CESARO_TOL = 1e-9

EDGE_EPS = 0.0  # entries strictly above this count as graph edges
ABSORBING_ATOL = 1e-9


@dataclass(frozen=True)
class MeasureVector:
    """Per-state measure values together with the theta they were computed at."""

    values: np.ndarray
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __getitem__(self, i: int) -> float:
        return float(self.values[i])


def compute_measure(pi, chi, theta: float) -> MeasureVector:
    """Solve the measure linear system for a row-stochastic matrix.

    Parameters
    ----------
    pi : (n, n) array_like
        Row-stochastic state transition matrix.
    chi : (n,) array_like
        Per-state characteristic weights in [-1, 1].
    theta : float
        Discount-like parameter in (0, 1); outside that interval the system
        matrix is not guaranteed invertible and the call is rejected.

    Returns
    -------
    MeasureVector
        The unique solution of (I - (1-theta) Pi) nu = theta chi.
    """
    theta = check_theta(theta)
    pi = check_transition_matrix(pi)
    n = pi.shape[0]
    chi = check_characteristic(chi, n)
    a = np.eye(n) - (1.0 - theta) * pi
    nu = np.linalg.solve(a, theta * chi)
    residual = float(np.linalg.norm(a @ nu - theta * chi))
    if not np.isfinite(residual) or residual > RESIDUAL_BOUND * n:
        raise NumericalError(
            f"measure solve residual {residual:.3e} exceeds {RESIDUAL_BOUND * n:.3e}"
        )
    return MeasureVector(values=nu, theta=theta)


def _absorbing_states(pi: np.ndarray) -> np.ndarray:
    return np.where(np.abs(np.diag(pi) - 1.0) <= ABSORBING_ATOL)[0]


def _reaches_absorbing(pi: np.ndarray, absorbing: np.ndarray) -> np.ndarray:
    """Boolean mask of states with a path into the absorbing set."""
    n = pi.shape[0]
    reached = np.zeros(n, dtype=bool)
    reached[absorbing] = True
    frontier = reached.copy()
    while frontier.any():
        # predecessors of the current frontier
        preds = (pi[:, frontier] > EDGE_EPS).any(axis=1) & ~reached
        reached |= preds
        frontier = preds
    return reached


def _acyclic_ignoring_self_loops(pi: np.ndarray) -> bool:
    """Kahn's algorithm on the off-diagonal adjacency."""
    adj = pi > EDGE_EPS
    np.fill_diagonal(adj, False)
    indeg = adj.sum(axis=0)
    stack = list(np.where(indeg == 0)[0])
    seen = 0
    indeg = indeg.astype(int)
    while stack:
        u = stack.pop()
        seen += 1
        for v in np.where(adj[u])[0]:
            indeg[v] -= 1
            if indeg[v] == 0:
                stack.append(v)
    return seen == pi.shape[0]


@dataclass(frozen=True)
class SAResult:
    """Outcome of the strongly-absorbing check; falsy when a condition fails."""

    holds: bool
    certificate: str = ""

    def __bool__(self) -> bool:
        return self.holds


def is_strongly_absorbing(pi) -> SAResult:
    """Check the three strongly-absorbing conditions on a stochastic matrix.

    A graph qualifies when (1) at least one absorbing state exists, (2) every
    state reaches some absorbing state, and (3) the directed graph on
    distinct states is acyclic, so an edge i -> j rules out any return path
    j -> ... -> i.  The certificate names the first violated condition.
    """
    pi = check_transition_matrix(pi)
    absorbing = _absorbing_states(pi)
    if absorbing.size == 0:
        return SAResult(False, "no absorbing state")
    reached = _reaches_absorbing(pi, absorbing)
    if not reached.all():
        missing = np.where(~reached)[0]
        return SAResult(False, f"states {missing.tolist()} cannot reach an absorbing state")
    if not _acyclic_ignoring_self_loops(pi):
        return SAResult(False, "directed cycle among distinct states")
    return SAResult(True)


def _cesaro_structural(pi: np.ndarray, absorbing: np.ndarray) -> np.ndarray:
    """Exact Cesaro limit of an absorbing chain via the transient-block solve."""
    n = pi.shape[0]
    mask = np.zeros(n, dtype=bool)
    mask[absorbing] = True
    transient = np.where(~mask)[0]
    limit = np.zeros((n, n), dtype=float)
    limit[absorbing, absorbing] = 1.0
    if transient.size:
        q = pi[np.ix_(transient, transient)]
        r = pi[np.ix_(transient, absorbing)]
        b = np.linalg.solve(np.eye(transient.size) - q, r)
        limit[np.ix_(transient, absorbing)] = b
    return limit


def _cesaro_averaging(pi: np.ndarray, tol: float, max_doublings: int) -> np.ndarray:
    """Power averaging with a doubling horizon until elementwise Cauchy tolerance.

    Uses A_{2k} = (A_k + Pi^k A_k) / 2 so a horizon of 2^d costs d matrix
    products instead of 2^d.
    """
    avg = np.eye(pi.shape[0])
    power = pi.copy()
    residual = np.inf
    for _ in range(max_doublings):
        nxt = 0.5 * (avg + power @ avg)
        residual = float(np.max(np.abs(nxt - avg)))
        avg = nxt
        power = power @ power
        if residual < tol:
            return avg
    raise NonConvergenceError(
        f"Cesaro averaging did not reach {tol:.1e} (achieved {residual:.3e})",
        residual=residual,
        iterations=max_doublings,
    )


def cesaro_limit(
    pi,
    method: str = "auto",
    tol: float = CESARO_TOL,
    max_doublings: int = 64,
) -> np.ndarray:
    """Cesaro limit P = lim (1/k) sum_{j<k} Pi^j of a row-stochastic matrix.

    For absorbing chains whose states all reach the absorbing set the limit
    is computed exactly from the absorption structure; otherwise iterated
    power averaging with a doubling horizon runs until the elementwise Cauchy
    tolerance is met.  ``method`` forces one path ("structural"/"averaging")
    for cross-checking.
    """
    pi = check_transition_matrix(pi)
    absorbing = _absorbing_states(pi)
    structural_ok = absorbing.size > 0 and _reaches_absorbing(pi, absorbing).all()
    if method == "auto":
        method = "structural" if structural_ok else "averaging"
    if method == "structural":
        if not structural_ok:
            raise PfsaFormatError("structural Cesaro limit needs an absorbing chain")
        return _cesaro_structural(pi, absorbing)
    if method == "averaging":
        return _cesaro_averaging(pi, tol, max_doublings)
    raise ValueError(f"unknown method {method!r}")


def stationary_performance(pi_star, target_index: Union[int, Sequence[int]]) -> np.ndarray:
    """Probability that a walk from each state is absorbed at the target(s).

    ``pi_star`` is a controlled transition matrix; ``target_index`` one state
    index or an iterable of them.  Row i of the Cesaro limit gives the
    limiting state distribution from i, so its mass on the target columns is
    the eventual-arrival probability.
    """
    pi_star = check_transition_matrix(pi_star)
    if np.isscalar(target_index):
        cols = [int(target_index)]
    else:
        cols = [int(c) for c in target_index]
    limit = cesaro_limit(pi_star)
    return limit[:, cols].sum(axis=1)


def spectral_bound_check(pi, atol: float = CHECK_TOL) -> Tuple[float, float, bool]:
    """Largest non-unity eigenvalue magnitude vs. largest non-unity diagonal.

    Only claimed for strongly absorbing graphs, so other inputs are rejected.
    Returns (max |eigenvalue| != 1, max diagonal < 1, bound holds).
    """
    pi = check_transition_matrix(pi)
    sa = is_strongly_absorbing(pi)
    if not sa:
        raise PfsaFormatError(f"spectral bound needs a strongly absorbing graph: {sa.certificate}")
    eigs = np.linalg.eigvals(pi)
    nonunity = eigs[np.abs(eigs - 1.0) > atol]
    max_eig = float(np.max(np.abs(nonunity))) if nonunity.size else 0.0
    diag = np.diag(pi)
    nonunity_diag = diag[diag < 1.0 - ABSORBING_ATOL]
    max_diag = float(np.max(nonunity_diag)) if nonunity_diag.size else 0.0
    return max_eig, max_diag, bool(max_eig <= max_diag + atol)
