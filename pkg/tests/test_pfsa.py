import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmroute import (
    Pfsa,
    PfsaFormatError,
    apply_policy,
    build_transition_matrix,
    dumps_pfsa,
    loads_pfsa,
)


def simple_pfsa(morph_b=(0.3, 0.7)):
    """Two states; q0 emits two symbols into q1; q1 self-loops."""
    return Pfsa(
        states=("q0", "q1"),
        alphabet=("s1", "s2", "loop"),
        transitions={("q0", "s1"): "q1", ("q0", "s2"): "q1", ("q1", "loop"): "q1"},
        morph={("q0", "s1"): morph_b[0], ("q0", "s2"): morph_b[1], ("q1", "loop"): 1.0},
        characteristic=(0.0, 1.0),
        controllable=frozenset({("q0", "s1")}),
    )


def random_pfsa(seed, n_states=5, n_symbols=3):
    rng = np.random.default_rng(seed)
    states = tuple(f"q{i}" for i in range(n_states))
    symbols = tuple(f"s{k}" for k in range(n_symbols))
    transitions, morph = {}, {}
    controllable = set()
    for q in states:
        weights = rng.random(n_symbols) + 0.05
        weights /= weights.sum()
        for sym, w in zip(symbols, weights):
            dst = states[rng.integers(n_states)]
            transitions[(q, sym)] = dst
            morph[(q, sym)] = float(w)
            if rng.random() < 0.5:
                controllable.add((q, sym))
    chi = tuple(float(v) for v in rng.uniform(-1, 1, n_states))
    return Pfsa(states, symbols, transitions, morph, chi, frozenset(controllable))


class TestBuildTransitionMatrix:
    def test_single_state_self_loop(self):
        p = Pfsa(("q",), ("a",), {("q", "a"): "q"}, {("q", "a"): 1.0}, (1.0,))
        assert np.array_equal(build_transition_matrix(p), [[1.0]])

    def test_parallel_edges_summed(self):
        pi = build_transition_matrix(simple_pfsa())
        assert pi[0, 1] == pytest.approx(1.0, abs=1e-15)
        assert pi[0, 0] == 0.0

    def test_malformed_row_rejected(self):
        p = simple_pfsa(morph_b=(0.3, 0.6))
        with pytest.raises(PfsaFormatError, match="sums to"):
            build_transition_matrix(p)


class TestApplyPolicy:
    def test_empty_policy_is_identity(self):
        p = simple_pfsa()
        assert apply_policy(p, frozenset()) is p

    def test_disable_redirects_to_self_loop(self):
        p = Pfsa(
            states=("q0", "q1"),
            alphabet=("a", "loop"),
            transitions={("q0", "a"): "q1", ("q1", "loop"): "q1"},
            morph={("q0", "a"): 1.0, ("q1", "loop"): 1.0},
            characteristic=(0.0, 1.0),
            controllable=frozenset({("q0", "a")}),
        )
        controlled = apply_policy(p, {("q0", "a")})
        pi = build_transition_matrix(controlled)
        assert pi[0, 0] == 1.0 and pi[0, 1] == 0.0

    def test_original_retained_immutably(self):
        p = simple_pfsa()
        before = build_transition_matrix(p).copy()
        apply_policy(p, {("q0", "s1")})
        assert np.array_equal(build_transition_matrix(p), before)

    def test_non_controllable_rejected(self):
        with pytest.raises(PfsaFormatError, match="non-controllable"):
            apply_policy(simple_pfsa(), {("q0", "s2")})

    @given(st.integers(0, 200))
    @settings(max_examples=25, deadline=None)
    def test_row_stochasticity_preserved(self, seed):
        p = random_pfsa(seed)
        controlled = apply_policy(p, p.controllable)
        pi = build_transition_matrix(controlled)
        assert np.allclose(pi.sum(axis=1), 1.0, atol=1e-12)


class TestValidation:
    def test_probability_out_of_range(self):
        p = Pfsa(("q",), ("a", "b"), {("q", "a"): "q", ("q", "b"): "q"},
                 {("q", "a"): 1.5, ("q", "b"): -0.5}, (0.0,))
        with pytest.raises(PfsaFormatError):
            p.validate()

    def test_characteristic_out_of_range(self):
        p = Pfsa(("q",), ("a",), {("q", "a"): "q"}, {("q", "a"): 1.0}, (2.0,))
        with pytest.raises(PfsaFormatError):
            p.validate()

    def test_controllable_must_have_transition(self):
        p = Pfsa(("q",), ("a",), {("q", "a"): "q"}, {("q", "a"): 1.0}, (0.0,),
                 controllable=frozenset({("q", "zzz")}))
        with pytest.raises(PfsaFormatError, match="controllable"):
            p.validate()


class TestSerialization:
    def test_round_trip(self):
        p = random_pfsa(42)
        text = dumps_pfsa(p)
        loaded, roles = loads_pfsa(text)
        assert loaded.states == p.states
        assert dict(loaded.transitions) == dict(p.transitions)
        assert loaded.morph == pytest.approx(p.morph)
        assert loaded.characteristic == pytest.approx(p.characteristic)
        assert loaded.controllable == p.controllable
        assert roles == {}

    def test_round_trip_is_deterministic(self):
        p = random_pfsa(7)
        assert dumps_pfsa(p) == dumps_pfsa(loads_pfsa(dumps_pfsa(p))[0])

    def test_roles_survive(self):
        p = simple_pfsa()
        text = dumps_pfsa(p, roles={"q0": "agent", "q1": "dump"})
        _, roles = loads_pfsa(text)
        assert roles == {"q0": "agent", "q1": "dump"}

    def test_duplicate_transition_rejected(self):
        text = "state q 0.0\ntrans q a q 0.5 u\ntrans q a q 0.5 u\n"
        with pytest.raises(PfsaFormatError, match="duplicate"):
            loads_pfsa(text)

    def test_unknown_record_rejected(self):
        with pytest.raises(PfsaFormatError, match="unknown record"):
            loads_pfsa("blah q 1\n")

    def test_bad_flag_rejected(self):
        with pytest.raises(PfsaFormatError, match="flag"):
            loads_pfsa("state q 0.0\ntrans q a q 1.0 x\n")
