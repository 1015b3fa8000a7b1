"""Probabilistic finite state automata: representation, control, serialization.

A Pfsa bundles the state set, alphabet, partial transition map, per-state
symbol generation probabilities, per-state payoff weights, and the set of
transitions a supervisor is allowed to disable.  Disabling a transition
replaces it with a self-loop of identical generation probability; the
original automaton is never mutated.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, Mapping, Optional, Tuple

import numpy as np

from .errors import PfsaFormatError
from .validation import ROW_SUM_TOL, check_characteristic

StateId = str
Symbol = str
TransitionKey = Tuple[StateId, Symbol]

#: A supervision policy: the set of (state, symbol) pairs redirected to self-loops.
DisablingSet = FrozenSet[TransitionKey]

EMPTY_POLICY: DisablingSet = frozenset()


@dataclass(frozen=True)
class Pfsa:
    """A probabilistic finite state automaton.

    Parameters
    ----------
    states : tuple of str
        Ordered state identifiers.
    alphabet : tuple of str
        Ordered symbol identifiers.
    transitions : mapping (state, symbol) -> state
        Partial transition map; undefined pairs generate nothing.
    morph : mapping (state, symbol) -> float
        Generation probability of each defined transition.  Per state the
        probabilities sum to one; undefined pairs are implicitly zero.
    characteristic : tuple of float
        Per-state payoff weight in [-1, 1], aligned with ``states``.
    controllable : frozenset of (state, symbol)
        Transitions a supervisor may disable.
    """

    states: Tuple[StateId, ...]
    alphabet: Tuple[Symbol, ...]
    transitions: Mapping[TransitionKey, StateId]
    morph: Mapping[TransitionKey, float]
    characteristic: Tuple[float, ...]
    controllable: DisablingSet = EMPTY_POLICY

    @cached_property
    def state_index(self) -> Dict[StateId, int]:
        return {s: i for i, s in enumerate(self.states)}

    @property
    def n_states(self) -> int:
        return len(self.states)

    def chi(self) -> np.ndarray:
        """Characteristic weights as a vector aligned with ``states``."""
        return np.asarray(self.characteristic, dtype=float)

    def out_symbols(self, state: StateId) -> Tuple[Symbol, ...]:
        return tuple(sym for (q, sym) in self.transitions if q == state)

    def validate(self) -> None:
        """Check structural invariants; raise PfsaFormatError on violation."""
        if len(set(self.states)) != len(self.states):
            raise PfsaFormatError("duplicate state identifiers")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise PfsaFormatError("duplicate symbols")
        known_states = set(self.states)
        known_symbols = set(self.alphabet)
        check_characteristic(self.characteristic, self.n_states)
        if set(self.transitions) != set(self.morph):
            raise PfsaFormatError("transition map and morph define different pairs")
        row_sums: Dict[StateId, float] = {s: 0.0 for s in self.states}
        for (src, sym), dst in self.transitions.items():
            if src not in known_states or dst not in known_states:
                raise PfsaFormatError(f"transition {(src, sym)} -> {dst} uses unknown state")
            if sym not in known_symbols:
                raise PfsaFormatError(f"transition {(src, sym)} uses unknown symbol")
            p = self.morph[(src, sym)]
            if not (0.0 <= p <= 1.0):
                raise PfsaFormatError(f"probability of {(src, sym)} is {p}, outside [0, 1]")
            row_sums[src] += p
        for state, total in row_sums.items():
            if abs(total - 1.0) > ROW_SUM_TOL:
                raise PfsaFormatError(f"state {state!r}: generation row sums to {total!r}")
        for pair in self.controllable:
            if pair not in self.transitions:
                raise PfsaFormatError(f"controllable pair {pair} has no defined transition")


def build_transition_matrix(pfsa: Pfsa) -> np.ndarray:
    """State transition probability matrix of a PFSA.

    Entry (i, j) sums the generation probabilities of all symbols taking
    state i to state j.  Raises rather than normalizing when a generation
    row does not sum to one.
    """
    pfsa.validate()
    n = pfsa.n_states
    index = pfsa.state_index
    pi = np.zeros((n, n), dtype=float)
    for (src, sym), dst in pfsa.transitions.items():
        pi[index[src], index[dst]] += pfsa.morph[(src, sym)]
    return pi


def check_policy(pfsa: Pfsa, disabled: Iterable[TransitionKey]) -> DisablingSet:
    """Validate that a disabling set only touches controllable transitions."""
    policy = frozenset(disabled)
    extra = policy - frozenset(pfsa.controllable)
    if extra:
        raise PfsaFormatError(f"cannot disable non-controllable transitions: {sorted(extra)}")
    return policy


def apply_policy(pfsa: Pfsa, disabled: Iterable[TransitionKey]) -> Pfsa:
    """Return a new PFSA with each disabled transition redirected to a self-loop.

    Generation probabilities are untouched, so row sums are preserved
    exactly; the input automaton is retained unmodified.
    """
    policy = check_policy(pfsa, disabled)
    if not policy:
        return pfsa
    transitions = dict(pfsa.transitions)
    for (src, sym) in policy:
        transitions[(src, sym)] = src
    return Pfsa(
        states=pfsa.states,
        alphabet=pfsa.alphabet,
        transitions=transitions,
        morph=dict(pfsa.morph),
        characteristic=pfsa.characteristic,
        controllable=pfsa.controllable,
    )


# ---------------------------------------------------------------------------
# Flat text serialization
#
#   state <id> <characteristic>
#   trans <src> <symbol> <dst> <probability> <c|u>
#   role  <id> <agent|virtual|dump>        (optional annotation)
#
# One record per line, whitespace separated, '#' starts a comment.
# ---------------------------------------------------------------------------

_VALID_ROLES = ("agent", "virtual", "dump")


def _check_token(token: str, kind: str) -> str:
    if not token or any(ch.isspace() for ch in token):
        raise PfsaFormatError(f"{kind} {token!r} must be non-empty and whitespace-free")
    return token


def dumps_pfsa(pfsa: Pfsa, roles: Optional[Mapping[StateId, str]] = None) -> str:
    """Serialize to the flat text format; deterministic for a given input."""
    pfsa.validate()
    lines = ["# swarmroute pfsa v1"]
    for state, chi in zip(pfsa.states, pfsa.characteristic):
        _check_token(state, "state id")
        lines.append(f"state {state} {chi!r}")
    for (src, sym) in sorted(pfsa.transitions):
        dst = pfsa.transitions[(src, sym)]
        prob = pfsa.morph[(src, sym)]
        flag = "c" if (src, sym) in pfsa.controllable else "u"
        _check_token(sym, "symbol")
        lines.append(f"trans {src} {sym} {dst} {prob!r} {flag}")
    if roles:
        for state in pfsa.states:
            if state in roles:
                role = roles[state]
                if role not in _VALID_ROLES:
                    raise PfsaFormatError(f"unknown role {role!r} for state {state!r}")
                lines.append(f"role {state} {role}")
    return "\n".join(lines) + "\n"


def save_pfsa(pfsa: Pfsa, path, roles: Optional[Mapping[StateId, str]] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_pfsa(pfsa, roles))


def loads_pfsa(text: str) -> Tuple[Pfsa, Dict[StateId, str]]:
    """Parse the flat text format; returns the automaton and any role annotations."""
    states = []
    chi = []
    transitions: Dict[TransitionKey, StateId] = {}
    morph: Dict[TransitionKey, float] = {}
    controllable = set()
    roles: Dict[StateId, str] = {}
    symbols = []
    seen_symbols = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "state":
                _, state, value = parts
                states.append(state)
                chi.append(float(value))
            elif kind == "trans":
                _, src, sym, dst, prob, flag = parts
                key = (src, sym)
                if key in transitions:
                    raise PfsaFormatError(f"duplicate transition {key}")
                transitions[key] = dst
                morph[key] = float(prob)
                if flag == "c":
                    controllable.add(key)
                elif flag != "u":
                    raise PfsaFormatError(f"bad controllable flag {flag!r}")
                if sym not in seen_symbols:
                    seen_symbols.add(sym)
                    symbols.append(sym)
            elif kind == "role":
                _, state, role = parts
                if role not in _VALID_ROLES:
                    raise PfsaFormatError(f"unknown role {role!r}")
                roles[state] = role
            else:
                raise PfsaFormatError(f"unknown record type {kind!r}")
        except (ValueError, PfsaFormatError) as exc:
            raise PfsaFormatError(f"line {lineno}: {exc}") from exc
    pfsa = Pfsa(
        states=tuple(states),
        alphabet=tuple(symbols),
        transitions=transitions,
        morph=morph,
        characteristic=tuple(chi),
        controllable=frozenset(controllable),
    )
    pfsa.validate()
    for state in roles:
        if state not in pfsa.state_index:
            raise PfsaFormatError(f"role annotation for unknown state {state!r}")
    return pfsa, roles


def load_pfsa(path) -> Tuple[Pfsa, Dict[StateId, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_pfsa(fh.read())
