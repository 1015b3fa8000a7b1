"""Acceptance suite: one test per exit criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s``.  Every tolerance is fixed
here; the random instances are seeded and the mobile scenarios are the desk
scale stand-ins for the large-swarm experiments.
"""
import time

import numpy as np
import pytest

from swarmroute import (
    FailureModel,
    Schedule,
    apply_policy,
    build_network_pfsa,
    build_transition_matrix,
    compute_measure,
    deviation_fraction,
    engine_from_network,
    is_strongly_absorbing,
    run_ideal_process,
    run_real_process,
    run_to_convergence,
    select_theta,
    spectral_bound_check,
    stationary_performance,
    sync_iteration_bound,
)
from swarmroute.network import neighbor_map, swarm_is_connected
from swarmroute.scenarios import build_setup, parse_scenario, sim_config, sweep
from swarmroute.supervisor import (
    brute_force_optimal,
    optimal_supervisor,
    policy_iteration,
    target_indices,
)

from conftest import grown_snapshot, random_sa_matrix

MODEL = FailureModel(lambda_at_zero=0.3, lambda_at_rc=0.08)


def _ok(n, text):
    print(f"\nACCEPTANCE {n:>2} PASS: {text}")


def batch_networks(sizes, seed0, model=MODEL, **kw):
    nets = []
    for i, n in enumerate(sizes):
        rng = np.random.default_rng(seed0 + i)
        snap = grown_snapshot(n, 1.0, rng, **kw)
        nets.append(build_network_pfsa(snap, model=model))
    return nets


def small_controllable_networks(count, seed0, max_controllables=12):
    """Sparse little networks whose policy space is brute-forceable."""
    nets = []
    seed = seed0
    while len(nets) < count:
        rng = np.random.default_rng(seed)
        seed += 1
        n = int(rng.integers(4, 8))
        snap = grown_snapshot(n, 1.0, rng, spread=(0.7, 0.95), sep=0.6)
        net = build_network_pfsa(snap, model=MODEL)
        if len(net.pfsa.controllable) <= max_controllables:
            nets.append(net)
    return nets


def test_c01_distributed_equals_centralized_closed_form():
    """50 random connected frozen networks: distributed measures solve the
    measure system of the final controlled matrix to 1e-7."""
    t0 = time.time()
    sizes = [10] * 17 + [25] * 17 + [50] * 16
    worst = 0.0
    for i, net in enumerate(batch_networks(sizes, seed0=3000)):
        assert swarm_is_connected(net.neighbors)
        theta = select_theta(0.05, net.max_neighborhood)
        result = run_to_convergence(net, theta, tol=1e-8)
        pi = build_transition_matrix(apply_policy(net.pfsa, result.policy))
        closed = compute_measure(pi, net.pfsa.chi(), theta)
        worst = max(worst, float(np.max(np.abs(result.measures - closed.values))))
    assert worst <= 1e-7
    _ok(1, f"50 networks, max |nu_dist - nu_closed| = {worst:.2e} <= 1e-7 "
           f"({time.time() - t0:.0f}s)")


def test_c02_epsilon_optimality():
    """25 brute-forceable networks at theta = eps/m^2: the limiting policy's
    arrival probabilities are within eps = 0.05 of the utopian ones."""
    t0 = time.time()
    epsilon = 0.05
    worst = 0.0
    for net in small_controllable_networks(25, seed0=5000):
        theta = select_theta(epsilon, net.max_neighborhood)
        dist = run_to_convergence(net, theta, tol=1e-8)
        targets = target_indices(net.pfsa)
        pi_policy = build_transition_matrix(apply_policy(net.pfsa, dist.policy))
        rho_policy = stationary_performance(pi_policy, targets)
        utopian = brute_force_optimal(net.pfsa, 1e-6)
        pi_u = build_transition_matrix(apply_policy(net.pfsa, utopian.policy))
        rho_u = stationary_performance(pi_u, targets)
        worst = max(worst, float(np.max(np.abs(rho_policy - rho_u))))
    assert worst <= epsilon
    _ok(2, f"25 networks, max ||rho_policy - rho_utopian||_inf = {worst:.4f} "
           f"<= {epsilon} ({time.time() - t0:.0f}s)")


def test_c03_boundedness_and_monotonicity():
    """Every update is checked in-engine: measures stay in [0, 1] always and
    never decrease on zero-initialized frozen runs; violations raise."""
    t0 = time.time()
    checks = 0
    runs = 0
    for i, net in enumerate(batch_networks([12] * 6 + [30] * 6, seed0=7000)):
        theta = select_theta(0.05, net.max_neighborhood)
        for schedule in (Schedule("synchronized", i), Schedule("random-permutation-async", i)):
            engine = engine_from_network(net, theta)
            assert engine.check_invariants and engine.check_monotone
            engine.run(schedule, tol=1e-8)
            assert float(np.min(engine.nu)) >= -1e-12
            assert float(np.max(engine.nu)) <= 1.0 + 1e-12
            checks += engine.invariant_checks
            runs += 1
        # boundedness also holds from arbitrary starts (monotonicity not claimed)
        rng = np.random.default_rng(100 + i)
        init = rng.random(net.pfsa.n_states)
        run_to_convergence(net, theta, tol=1e-8, init=init)
        runs += 1
    _ok(3, f"{runs} runs, {checks} in-engine invariant checks, zero violations "
           f"({time.time() - t0:.0f}s)")


def test_c04_initialization_independence():
    """20 networks, zero init vs 3 random inits: final measures agree to 1e-7."""
    t0 = time.time()
    worst = 0.0
    for i, net in enumerate(batch_networks([12] * 10 + [20] * 10, seed0=9000)):
        theta = select_theta(0.05, net.max_neighborhood)
        base = run_to_convergence(net, theta, tol=1e-9)
        rng = np.random.default_rng(i)
        for _ in range(3):
            init = rng.random(net.pfsa.n_states)
            other = run_to_convergence(net, theta, tol=1e-9, init=init)
            worst = max(worst, float(np.max(np.abs(base.measures - other.measures))))
    assert worst <= 1e-7
    _ok(4, f"20 networks x 3 random inits, max discrepancy = {worst:.2e} <= 1e-7 "
           f"({time.time() - t0:.0f}s)")


def test_c05_spectral_bound():
    """100 random strongly absorbing matrices: non-unity eigenvalue magnitudes
    never exceed the largest non-unity diagonal entry."""
    t0 = time.time()
    rng = np.random.default_rng(42)
    violations = 0
    for _ in range(100):
        n = int(rng.integers(3, 13))
        pi = random_sa_matrix(rng, n, n_absorbing=int(rng.integers(1, 3)))
        assert is_strongly_absorbing(pi).holds
        max_eig, max_diag, holds = spectral_bound_check(pi)
        if not holds:
            violations += 1
    assert violations == 0
    _ok(5, f"100 SA matrices, zero spectral-bound violations ({time.time() - t0:.0f}s)")


def test_c06_dynamic_programming_cross_check():
    """Policy iteration at discount 1-theta and the supervisor at theta induce
    controlled chains with identical arrival probabilities (1e-8)."""
    t0 = time.time()
    theta = 1e-6
    worst = 0.0
    for net in batch_networks([5] * 7 + [7] * 7 + [9] * 6, seed0=11000,
                              spread=(0.6, 0.95), sep=0.55):
        targets = target_indices(net.pfsa)
        sup = optimal_supervisor(net.pfsa, theta)
        rho_sup = stationary_performance(
            build_transition_matrix(apply_policy(net.pfsa, sup.policy)), targets
        )
        pi_result = policy_iteration(net.pfsa, 1.0 - theta)
        rho_pi = stationary_performance(pi_result.transition_matrix, targets)
        worst = max(worst, float(np.max(np.abs(rho_sup - rho_pi))))
    assert worst <= 1e-8
    _ok(6, f"20 networks, max ||rho_PI - rho_supervisor||_inf = {worst:.2e} <= 1e-8 "
           f"({time.time() - t0:.0f}s)")


def _assert_acyclic(n, edges):
    indeg = np.zeros(n, dtype=int)
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        indeg[v] += 1
    stack = [i for i in range(n) if indeg[i] == 0]
    seen = 0
    while stack:
        u = stack.pop()
        seen += 1
        for v in adj[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                stack.append(v)
    assert seen == n, "strict-improvement graph has a directed cycle"


def test_c07_loop_freeness_and_reachability():
    """The limiting policy's strict-improvement graph is acyclic and every
    positive-measure agent reaches a target within N enabled hops."""
    t0 = time.time()
    for net in batch_networks([10] * 5 + [25] * 5 + [50] * 5, seed0=13000):
        theta = select_theta(0.05, net.max_neighborhood)
        result = run_to_convergence(net, theta, tol=1e-8)
        nu = result.agent_measures
        n = net.n_agents
        enabled = [
            (i, j)
            for (i, j) in net.virtual_index
            if (f"a{i}", f"go{i}>{j}") not in result.policy
            and i not in net.target_ids
        ]
        _assert_acyclic(n, [(i, j) for (i, j) in enabled if nu[j] > nu[i]])
        # reachability: BFS from the targets backward along enabled links
        hops = np.full(n, -1, dtype=int)
        for tgt in net.target_ids:
            hops[tgt] = 0
        frontier = list(net.target_ids)
        while frontier:
            nxt = []
            for j in frontier:
                for (i, jj) in enabled:
                    if jj == j and hops[i] == -1:
                        hops[i] = hops[j] + 1
                        nxt.append(i)
            frontier = nxt
        positive = nu > 0.0
        assert np.all(hops[positive] >= 0), "positive-measure agent cannot reach a target"
        assert np.max(hops[positive]) <= n
    _ok(7, f"15 networks: strict-improvement graphs acyclic, all positive-measure "
           f"agents within N hops ({time.time() - t0:.0f}s)")


FROZEN_BASE = {
    "n_agents": 100,
    "targets": [{"type": "point", "x": 5.7, "y": 5.7}],
    "arena": [11.4, 11.4],
    "r_c": 1.2,
    "epsilon": 0.05,
    "seed": 400,
    "mode": "frozen",
    "failure": {"lambda_at_zero": 0.3, "lambda_at_rc": 0.08},
}


def test_c08_complexity_trends():
    """Synchronized epochs stay under the calibrated bound on every run;
    halving epsilon roughly doubles them; quadrupling N stays sub-linear."""
    t0 = time.time()
    cfg = parse_scenario(FROZEN_BASE)

    eps_report = sweep(cfg, "epsilon", [0.1, 0.05, 0.025], reps=5)
    means = {a["value"]: a["epochs_mean"] for a in eps_report["aggregate"]}
    r1 = means[0.05] / means[0.1]
    r2 = means[0.025] / means[0.05]
    assert 1.5 <= r1 <= 3.0 and 1.5 <= r2 <= 3.0

    n_report = sweep(cfg, "n_agents", [25, 100, 400], reps=5)
    n_means = {a["value"]: a["epochs_mean"] for a in n_report["aggregate"]}
    growth = n_means[400] / n_means[100]
    assert growth < 4.0

    checked = 0
    for row in eps_report["rows"] + n_report["rows"]:
        bound = sync_iteration_bound(
            row["n_agents"], row["m"], row["epsilon"], row["gamma_star"], constant=4.0
        )
        assert row["epochs"] <= bound, (row, bound)
        checked += 1
    _ok(8, f"epsilon-halving ratios {r1:.2f}, {r2:.2f} in [1.5, 3]; "
           f"epochs(400)/epochs(100) = {growth:.2f} < 4; "
           f"{checked} runs under the C=4 bound ({time.time() - t0:.0f}s)")


MOBILE_BASE = {
    "n_agents": 250,
    "targets": [{"type": "point", "x": 10.0, "y": 10.0}],
    "arena": [20.0, 20.0],
    "r_c": 5.6,
    "v_s": 2.5,
    "dt": 0.02,
    "epsilon": 0.05,
    "theta_override": 0.05,
    "tol": 1e-4,
    "duration": 40.0,
    "mode": "real",
    "epochs_per_tick": 5,
    "seed": 100,
    "failure": {"lambda_at_zero": 0.3, "lambda_at_rc": 0.05},
}


def test_c09_mobile_convergence_and_diameter_envelope():
    """N = 500 connected swarm: everyone reaches the target, and the swarm
    diameter of the ideal process stays under 2 D_0 exp(-(v_s/r_c) t) * 1.25."""
    t0 = time.time()
    raw = dict(MOBILE_BASE, n_agents=500, r_c=7.5, duration=14.0, mode="ideal", seed=12)
    setup = build_setup(parse_scenario(raw))
    all_pos = np.vstack([setup.positions, setup.target_points])
    from swarmroute import SwarmSnapshot

    snap = SwarmSnapshot(
        positions=all_pos,
        target_ids=frozenset(range(500, all_pos.shape[0])),
        r_c=setup.r_c,
    )
    assert swarm_is_connected(neighbor_map(snap))
    trace = run_ideal_process(sim_config(setup))
    assert trace.final_fraction >= 0.999
    envelope = 2.0 * trace.diameter[0] * 1.25 * np.exp(
        -(setup.config.v_s / setup.r_c) * trace.times
    )
    assert np.all(trace.diameter <= envelope + 1e-9)
    _ok(9, f"N=500 ideal process: fraction {trace.final_fraction:.3f} >= 0.999 by "
           f"t={trace.t_conv:.2f}s; diameter under envelope at all "
           f"{len(trace.times)} ticks ({time.time() - t0:.0f}s)")


def test_c10_velocity_and_radius_laws():
    """v_s * T_conv constant within 25% over {1,2,4} m/s; r_c / T_conv constant
    within 25% over the connected radius range; disconnection at least
    doubles T_conv."""
    t0 = time.time()
    cfg = parse_scenario(MOBILE_BASE)

    v_report = sweep(cfg, "v_s", [1.0, 2.0, 4.0], reps=3)
    products = [a["vs_t_conv_mean"] for a in v_report["aggregate"]]
    assert all(r["t_conv"] < cfg.duration for r in v_report["rows"])
    v_mean = float(np.mean(products))
    v_spread = max(abs(p / v_mean - 1.0) for p in products)
    assert v_spread <= 0.25

    r_values = [4.2, 4.9, 5.6, 6.3]
    r_report = sweep(cfg, "r_c", r_values, reps=3)
    ratios = [a["rc_over_t_conv_mean"] for a in r_report["aggregate"]]
    assert all(r["t_conv"] < cfg.duration for r in r_report["rows"])
    r_mean = float(np.mean(ratios))
    r_spread = max(abs(r / r_mean - 1.0) for r in ratios)
    assert r_spread <= 0.25

    knee_report = sweep(cfg, "r_c", [1.2], reps=3)
    t_knee = knee_report["aggregate"][0]["t_conv_mean"]
    t_connected_max = max(a["t_conv_mean"] for a in r_report["aggregate"])
    assert t_knee >= 2.0 * t_connected_max
    _ok(10, f"v_s*T_conv spread {v_spread:.1%} <= 25%; r_c/T_conv spread "
            f"{r_spread:.1%} <= 25%; below-knee T_conv {t_knee:.1f}s >= "
            f"2 x {t_connected_max:.1f}s ({time.time() - t0:.0f}s)")


def test_c11_real_vs_ideal_match():
    """Paired seeded runs at small speed: fraction-reached curves within 0.05
    sup-norm, and the direction-deviation curve decays."""
    t0 = time.time()
    raw = dict(
        MOBILE_BASE,
        v_s=1.0,
        duration=24.0,
        epochs_per_tick=10,
        seed=200,
        record_directions=True,
        stop_when_all_reached=False,
    )
    sc = sim_config(build_setup(parse_scenario(raw)))
    real = run_real_process(sc)
    ideal = run_ideal_process(sc)
    gap = float(np.max(np.abs(real.fraction_reached - ideal.fraction_reached)))
    assert gap <= 0.05
    dev = deviation_fraction(real, ideal)
    head = float(np.mean(dev[:100]))
    tail = float(np.mean(dev[-100:]))
    assert tail < head
    _ok(11, f"fraction-reached sup-gap {gap:.3f} <= 0.05; deviation decays "
            f"{head:.3f} -> {tail:.4f} ({time.time() - t0:.0f}s)")


CASE_COMMON = {
    "n_agents": 500,
    "arena": [20.0, 20.0],
    "r_c": 3.0,
    "v_s": 2.5,
    "dt": 0.02,
    "epsilon": 0.05,
    "theta_override": 0.05,
    "tol": 1e-4,
    "duration": 30.0,
    "mode": "real",
    "epochs_per_tick": 5,
    "seed": 77,
    "failure": {"lambda_at_zero": 0.3, "lambda_at_rc": 0.05},
}

CASES = {
    "void": dict(CASE_COMMON, targets=[{"type": "point", "x": 16.0, "y": 10.0}],
                 voids=[{"x": 7.0, "y": 6.0, "w": 6.0, "h": 8.0}]),
    "two_point_targets": dict(CASE_COMMON,
                              targets=[{"type": "point", "x": 4.0, "y": 4.0},
                                       {"type": "point", "x": 16.0, "y": 16.0}]),
    "two_extended_targets": dict(CASE_COMMON,
                                 targets=[{"type": "rect", "x": 3.0, "y": 8.0, "w": 2.0, "h": 4.0},
                                          {"type": "rect", "x": 15.0, "y": 8.0, "w": 2.0, "h": 4.0}]),
    "obstacle": dict(CASE_COMMON, targets=[{"type": "point", "x": 10.0, "y": 14.0}],
                     obstacles=[{"x": 7.0, "y": 8.0, "w": 6.0, "h": 2.5}]),
    "sharers_30pct": dict(CASE_COMMON, targets=[{"type": "point", "x": 10.0, "y": 10.0}],
                          sharer_fraction=0.3, duration=40.0),
}


def test_c12_scenario_case_studies():
    """Void, split targets, extended targets, obstacle, and information-sharer
    scenarios all complete with >= 99% arrivals and no invariant violations."""
    t0 = time.time()
    summaries = []
    for name, raw in CASES.items():
        config = parse_scenario(raw)
        setup = build_setup(config)
        trace = run_real_process(sim_config(setup))
        assert trace.final_fraction >= 0.99, name
        assert trace.obstacle_violations == 0, name
        assert trace.c2_max_gap <= config.resolved_r_c() + 2e-6, name
        if name == "obstacle":
            rects = config.obstacles
            for snapshot in trace.snapshots:
                mobile = snapshot.positions[: trace.n_mobile]
                for rect in rects:
                    strictly_inside = (
                        (mobile[:, 0] > rect.x + 1e-9)
                        & (mobile[:, 0] < rect.x1 - 1e-9)
                        & (mobile[:, 1] > rect.y + 1e-9)
                        & (mobile[:, 1] < rect.y1 - 1e-9)
                    )
                    assert not strictly_inside.any(), "agent inside obstacle"
        summaries.append(f"{name}={trace.final_fraction:.3f}")
    _ok(12, "; ".join(summaries) + f" ({time.time() - t0:.0f}s)")
