import math

import numpy as np
import pytest

from cslsh.adaptive import (
    AdaptiveConfig,
    ForestEnsemble,
    LevelPairStatus,
    _QueryState,
    adaptive_nearest_neighbor,
    bottom_up_phase,
    choose_level,
    ensemble_from_bytes,
    ensemble_to_bytes,
    forests_for,
    quorum_check,
    run_level_pair,
    trees_per_forest,
)
from cslsh.core import Dataset, RngSeed, _pack_bits
from cslsh.families import BitSampling
from cslsh.oracle import static_level_choice, natural_algorithm
from cslsh.data import InstanceSpec, generate

SEED = RngSeed(31337)


def hamming_set(rng, n, dim):
    return Dataset.from_bits(rng.integers(0, 2, size=(n, dim), dtype=np.uint8))


def build(ds, K=8, l_prime=4, config=AdaptiveConfig(), tag="ens"):
    R = forests_for(ds.n, config)
    return ForestEnsemble(
        ds, BitSampling(ds.dim), K, R * l_prime, SEED.child(tag), config, l_prime=l_prime
    )


def test_ensemble_shape():
    rng = SEED.child("shape").generator()
    ds = hamming_set(rng, 100, 16)
    ens = build(ds)
    assert ens.R == math.ceil(8 * math.log(100))
    assert ens.l_prime == 4
    assert len(ens.forests) == ens.R
    assert all(f.L == 4 and f.K == 8 for f in ens.forests)
    with pytest.raises(ValueError):
        ForestEnsemble(ds, BitSampling(16), 8, 64, SEED, l_prime=3)


def test_trees_per_forest_power_of_two():
    assert trees_per_forest(512, 45) == 8
    assert trees_per_forest(100, 45) == 2
    assert trees_per_forest(10, 45) == 1


def test_single_point_dataset():
    ds = Dataset.from_bits(np.array([[1, 0, 1, 0, 1, 0, 1, 0]], dtype=np.uint8))
    ens = build(ds, K=4, l_prime=2, tag="one")
    res = adaptive_nearest_neighbor(ens, ds.point(0), SEED.child("one-q"))
    assert res.point == 0


def test_quorum_check_examples():
    def statuses(hi_flags, lo_flags):
        return [LevelPairStatus(h, l) for h, l in zip(hi_flags, lo_flags)]

    s4 = statuses([True, False, False, False], [False] * 4)
    assert quorum_check(s4, 0.25)  # ceil(4/4) = 1
    s8 = statuses([True] + [False] * 7, [True] + [False] * 7)
    assert not quorum_check(s8, 0.25)  # per-level quorum is 2, not pooled
    s8b = statuses([False] * 8, [True, True] + [False] * 6)
    assert quorum_check(s8b, 0.25)


def test_choose_level_trivial_cases():
    # all points identical and maximally far: zero collisions at level 1
    far = Dataset.from_packed(
        np.tile(_pack_bits(np.ones((1, 8), dtype=np.uint8)), (32, 1)), 8
    )
    q = _pack_bits(np.zeros((1, 8), dtype=np.uint8))[0]
    ens = build(far, K=4, l_prime=4, tag="far")
    state = _QueryState(ens, q, SEED.child("far-q"))
    assert choose_level(state, 1) == 1
    # all points equal to q and n > 10 * K * L': no level qualifies, fall to K
    K, lp = 4, 4
    eq = Dataset.from_packed(
        np.tile(_pack_bits(np.zeros((1, 8), dtype=np.uint8)), (256, 1)), 8
    )
    assert eq.n > 10 * K * lp
    ens2 = build(eq, K=K, l_prime=lp, tag="eq")
    state2 = _QueryState(ens2, q, SEED.child("eq-q"))
    assert choose_level(state2, lp) == K


def test_run_level_pair_certain_confirmation():
    # p1 = 1 with small buckets: every forest terminates at j = 4 (t = 3);
    # four 8-point buckets stay within the 10 * i * j = 40 collision cap
    eq = Dataset.from_packed(
        np.tile(_pack_bits(np.zeros((1, 8), dtype=np.uint8)), (8, 1)), 8
    )
    q = eq.point(0)
    ens = build(eq, K=4, l_prime=4, tag="cert")
    state = _QueryState(ens, q, SEED.child("cert-q"))
    statuses = run_level_pair(state, 1, 4)
    assert all(s.terminated_hi for s in statuses)
    assert state.best_point() == 0


def test_run_level_pair_budget_exhaustion():
    # bucket size n = 200 exceeds the cap 10 * i * j = 10: no samples land
    eq = Dataset.from_packed(
        np.tile(_pack_bits(np.zeros((1, 8), dtype=np.uint8)), (200, 1)), 8
    )
    q = eq.point(0)
    ens = build(eq, K=4, l_prime=4, tag="exh")
    state = _QueryState(ens, q, SEED.child("exh-q"))
    statuses = run_level_pair(state, 1, 1)
    assert not any(s.terminated for s in statuses)
    # the partial scans still feed the global best
    assert state.best_point() == 0


def test_work_cap_accounting():
    rng = SEED.child("cap").generator()
    ds = hamming_set(rng, 128, 16)
    q = _pack_bits(rng.integers(0, 2, size=(1, 16), dtype=np.uint8))[0]
    config = AdaptiveConfig()
    ens = build(ds, K=8, l_prime=4, config=config, tag="cap")
    for j in (1, 2, 4):
        state = _QueryState(ens, q, SEED.child("cap-q", j))
        i = choose_level(state, j)
        before = state.counters.collisions_inspected
        run_level_pair(state, i, j)
        spent = state.counters.collisions_inspected - before
        # two instances per forest, each capped at 10 * i * j (+1 for a final
        # fallback draw at the boundary)
        assert spent <= ens.R * 2 * (config.collision_cap * i * j + 1)


def test_level_scan_cost_contract():
    # the top-down scan costs O(i * j) node visits and hash evals per forest
    rng = SEED.child("scan").generator()
    ds = hamming_set(rng, 512, 16)
    q = _pack_bits(rng.integers(0, 2, size=(1, 16), dtype=np.uint8))[0]
    ens = build(ds, K=12, l_prime=8, tag="scan")
    for j in (1, 2, 4, 8):
        state = _QueryState(ens, q, SEED.child("scan-q", j))
        i = choose_level(state, j)
        assert state.counters.nodes_visited <= ens.R * j * (i + 2)
        assert state.counters.hash_evaluations <= ens.R * j * i


def test_bottom_up_terminates_at_level_zero():
    # adversarial: every bucket empty at every level (far duplicates), tiny
    # forests; the sweep must reach level 0 and stop there deterministically
    far = Dataset.from_packed(
        np.tile(_pack_bits(np.ones((1, 8), dtype=np.uint8)), (8, 1)), 8
    )
    q = _pack_bits(np.zeros((1, 8), dtype=np.uint8))[0]
    config = AdaptiveConfig(c_forests=2.0)
    ens = build(far, K=4, l_prime=2, config=config, tag="bu")
    state = _QueryState(ens, q, SEED.child("bu-q"))
    level = bottom_up_phase(state, 3)
    assert level >= 0
    assert state.best_point() == 0  # smallest id among the equidistant points


def test_lock_step_fairness():
    rng = SEED.child("fair").generator()
    ds = hamming_set(rng, 256, 16)
    q = _pack_bits(rng.integers(0, 2, size=(1, 16), dtype=np.uint8))[0]
    ens = build(ds, K=12, l_prime=4, tag="fair")
    res = adaptive_nearest_neighbor(ens, q, SEED.child("fair-q"))
    assert res.rounds_spread <= 1


def test_distance_zero_queries():
    spec = InstanceSpec("uniform-hamming", n=256, dim=32, n_queries=60, seed=3,
                        queries_from_data=True)
    inst = generate(spec)
    ens = ForestEnsemble(
        inst.dataset, BitSampling(32), 16,
        forests_for(256, AdaptiveConfig()) * 8,
        SEED.child("d0"), l_prime=8,
    )
    hits = 0
    for k in range(60):
        res = adaptive_nearest_neighbor(ens, inst.query(k), SEED.child("d0-q", k))
        hits += int(res.point == inst.ground_truth[k])
    assert hits == 60


def test_determinism():
    rng = SEED.child("det").generator()
    ds = hamming_set(rng, 128, 16)
    q = _pack_bits(rng.integers(0, 2, size=(1, 16), dtype=np.uint8))[0]
    a = adaptive_nearest_neighbor(build(ds, tag="det"), q, SEED.child("det-q"))
    b = adaptive_nearest_neighbor(build(ds, tag="det"), q, SEED.child("det-q"))
    assert a.point == b.point
    assert a.counters.as_dict() == b.counters.as_dict()
    assert (a.level, a.phase) == (b.level, b.phase)


def test_separation_small():
    # tiny version of the adversarial-cluster separation
    spec = InstanceSpec("dense-cluster", n=256, dim=64, n_queries=80, seed=5,
                        cluster_size=128, cluster_distance=8, shell_flips=32)
    inst = generate(spec)
    config = AdaptiveConfig()
    ens = ForestEnsemble(
        inst.dataset, BitSampling(64), 40, forests_for(256, config) * 8,
        SEED.child("sep"), config, l_prime=8,
    )
    adaptive_hits = 0
    natural_hits = 0
    f0 = ens.forests[0]
    for k in range(80):
        q = inst.query(k)
        res = adaptive_nearest_neighbor(ens, q, SEED.child("sep-q", k))
        adaptive_hits += int(res.point == inst.ground_truth[k])
        i0 = static_level_choice(f0, q, 8.0)
        pid, _ = natural_algorithm(f0, q, i0, f0.L)
        natural_hits += int(pid == inst.ground_truth[k])
    assert adaptive_hits >= 78
    assert natural_hits <= 8  # the static level sheds the whole cluster


def test_ensemble_serialization_round_trip():
    rng = SEED.child("ser").generator()
    ds = hamming_set(rng, 64, 16)
    ens = build(ds, K=6, l_prime=2, tag="ser")
    blob = ensemble_to_bytes(ens)
    loaded = ensemble_from_bytes(blob, ds)
    assert loaded.R == ens.R and loaded.l_prime == ens.l_prime and loaded.K == ens.K
    q = _pack_bits(rng.integers(0, 2, size=(1, 16), dtype=np.uint8))[0]
    a = adaptive_nearest_neighbor(ens, q, SEED.child("ser-q"))
    b = adaptive_nearest_neighbor(loaded, q, SEED.child("ser-q"))
    assert a.point == b.point and a.counters.as_dict() == b.counters.as_dict()


def test_adaptive_on_angular_data():
    from cslsh.families import SignRandomProjection

    spec = InstanceSpec("gaussian-angular", n=128, dim=12, n_queries=40, seed=9)
    inst = generate(spec)
    config = AdaptiveConfig()
    ens = ForestEnsemble(
        inst.dataset, SignRandomProjection(12), 12,
        forests_for(128, config) * 4, SEED.child("ang"), config, l_prime=4,
    )
    hits = 0
    for k in range(40):
        res = adaptive_nearest_neighbor(ens, inst.query(k), SEED.child("ang-q", k))
        hits += int(res.point == inst.ground_truth[k])
    assert hits >= 38
