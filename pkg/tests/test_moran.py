from __future__ import annotations

import io
import math

import numpy as np
import pytest

from pangenome import moran
from pangenome import _moran_kernel as K
from pangenome.errors import NotConverged, RangeError
from pangenome.params import ModelParams, RngSpec
from pangenome.stats import aggregate_groups

from oracles import exact_increment_moments


def P(theta=1.0, rho=1.0, gamma=0.0, n=1, N=20):
    return ModelParams(theta, rho, gamma, n, N)


def test_no_gain_keeps_genomes_empty():
    pop = moran.run_to_equilibrium(P(0, 1, 1, N=30), burn_in=5, rng=RngSpec(1))
    assert pop.total_genes == 0
    assert pop.event_counts[2] == 0
    assert all(len(g) == 0 for g in pop.individuals)


def test_no_transfer_events_without_gamma():
    pop = moran.Population(2)
    moran.simulate(pop, P(2, 1, 0, N=2), 200.0, np.random.default_rng(2))
    assert pop.event_counts[3] == 0
    assert pop.event_counts[:3].sum() > 0


def test_event_frequencies_match_compensator():
    # the count of each event type minus its summed step probabilities is a martingale
    pop = moran.Population(50)
    moran.simulate(pop, P(2, 1, 1, N=50), 800.0, np.random.default_rng(3))
    assert pop.event_counts.sum() > 10**6
    for c in range(4):
        mean, var = pop.compensator[:, c]
        assert abs(pop.event_counts[c] - mean) <= 3 * math.sqrt(var), moran.EVENT_TYPES[c]


def test_genomes_stay_sets_and_population_size_is_constant():
    pop = moran.Population(10)
    gen = np.random.default_rng(4)
    p = P(20, 1, 5, N=10)
    for t in (1.0, 5.0, 20.0):
        moran.simulate(pop, p, t, gen)
        indiv, genes, glen = pop._arrays[:3]
        assert len(indiv) == 10 and len(pop.individuals) == 10
        for i in range(10):
            raw = genes[indiv[i], : glen[indiv[i]]]
            assert len(set(raw.tolist())) == len(raw)
        assert pop.total_genes == sum(len(g) for g in pop.individuals)
        assert all(max(g, default=-1) < pop.next_gene_id for g in pop.individuals)
    assert pop.time == 20.0


def test_capacity_grows_on_demand():
    pop = moran.Population(5)
    moran.simulate(pop, P(200, 1, 0, N=5), 5.0, np.random.default_rng(5))
    assert pop._arrays[1].shape[1] > 32
    assert pop.total_genes == sum(len(g) for g in pop.individuals)


def test_individuals_are_exchangeable():
    p = P(2, 1, 1, N=8)
    first, last = [], []
    for s in range(400):
        pop = moran.Population.from_genomes([[0, 1, 2, 3]] + [[]] * 7)
        moran.simulate(pop, p, 0.5, RngSpec(s, 77))
        first.append(len(pop.genome(1)))
        last.append(len(pop.genome(7)))
    d = np.array(first, float) - np.array(last, float)
    assert abs(d.mean()) <= 3 * d.std(ddof=1) / math.sqrt(len(d))


def test_step_fires_exactly_one_event():
    pop = moran.Population.from_genomes([[0], [1, 2], []])
    p = P(1, 1, 1, N=3)
    gen = np.random.default_rng(6)
    for k in range(1, 21):
        before = pop.time
        moran.step(pop, p, gen)
        assert pop.event_counts.sum() == k
        assert pop.time > before
    with pytest.raises(RangeError):
        moran.step(pop, P(N=4), gen)


def test_equilibrium_mean_genome_size():
    # without transfer the expected genome size is theta/rho for every N
    batch = moran.moran_sample_batch(P(1, 1, 0, n=5, N=100), 2000, seed=7, burn_in=50, per_chain=100)
    est = aggregate_groups(batch.avg_genes(), batch.chain)
    assert abs(est.z(1.0)) <= 3


def test_doubling_burn_in_changes_nothing_detectable():
    p = P(2, 1, 0.5, n=5, N=100)
    a = moran.moran_sample_batch(p, 2000, seed=8, burn_in=20, per_chain=100)
    b = moran.moran_sample_batch(p, 2000, seed=9, burn_in=40, per_chain=100)
    for stat in ("avg_genes", "pairwise_diff", "pangenome_size"):
        ea = aggregate_groups(getattr(a, stat)(), a.chain)
        eb = aggregate_groups(getattr(b, stat)(), b.chain)
        pooled = math.hypot(ea.std_error, eb.std_error)
        assert abs(ea.mean - eb.mean) <= 3 * pooled, stat
    assert a.not_converged_chains <= 2 and b.not_converged_chains <= 2


def test_batch_does_not_depend_on_threads():
    p = P(1, 1, 0.5, n=3, N=30)
    a = moran.moran_sample_batch(p, 60, seed=10, burn_in=5, per_chain=20, threads=1)
    b = moran.moran_sample_batch(p, 60, seed=10, burn_in=5, per_chain=20, threads=2)
    assert np.array_equal(a.spectrum, b.spectrum) and np.array_equal(a.chain, b.chain)
    assert a.reps == 60 and a.chains == 3


def test_short_burn_in_with_large_transient_warns():
    with pytest.warns(NotConverged):
        pop = moran.run_to_equilibrium(P(100, 1, 0, N=50), burn_in=1, rng=RngSpec(11))
    assert pop.diagnostics["converged"] is False


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_burn_in_must_be_positive(bad):
    with pytest.raises(RangeError):
        moran.run_to_equilibrium(P(), burn_in=bad)


def test_sample_individuals():
    genomes = [[i] for i in range(10)]
    pop = moran.Population.from_genomes(genomes)
    gen = np.random.default_rng(12)
    full = moran.sample_individuals(pop, 10, gen)
    assert sorted(g.sorted() for g in full) == genomes
    hits = np.zeros(10)
    draws = 20_000
    for _ in range(draws):
        hits[next(iter(moran.sample_individuals(pop, 1, gen)[0]))] += 1
    sd = math.sqrt(draws * 0.1 * 0.9)
    assert np.all(np.abs(hits - draws / 10) <= 4 * sd)
    for n in (0, 11, 2.5):
        with pytest.raises(RangeError):
            moran.sample_individuals(pop, n, gen)


def test_dump_and_load_round_trip():
    genomes = [[3, 1], [], [7]]
    buf = io.StringIO()
    moran.dump_genomes(genomes, buf)
    assert buf.getvalue() == "1\t3\n\n7\n"
    loaded = moran.load_genomes(buf.getvalue())
    assert [g.sorted() for g in loaded] == [[1, 3], [], [7]]
    pop = moran.Population.from_genomes(loaded, time=2.5)
    assert pop.time == 2.5 and pop.next_gene_id == 8 and pop.total_genes == 3
    assert pop.individuals == loaded


# ---------------------------------------------------------------- drift


@pytest.mark.parametrize("rho, gamma", [(0, 0), (1, 0), (1, 2)])
def test_drift_examples(rho, gamma):
    est = moran.tagged_gene_drift_check(ModelParams(0, rho, gamma, 1, 500), 0.5, 0.01, 20_000, RngSpec(13))
    drift, _ = moran.expected_drift(rho, gamma, 0.5, 0.01)
    assert abs(est.drift - drift) <= 3 * est.drift_se
    assert est.windows == 20_000


@pytest.mark.parametrize("rho, gamma", [(1, 0), (1, 2), (2, 1)])
def test_drift_matches_exact_finite_population_law(rho, gamma):
    N, k0, dt = 100, 30, 0.05
    est = moran.tagged_gene_drift_check(ModelParams(0, rho, gamma, 1, N), k0 / N, dt, 100_000, RngSpec(14))
    mean, var = exact_increment_moments(N, k0, rho, gamma, dt)
    assert abs(est.drift - mean) <= 3 * est.drift_se
    assert abs(est.variance - var) <= 3 * est.variance_se


def test_ordered_resampling_doubles_the_variance():
    p = ModelParams(0, 1, 0, 1, 200)
    a = moran.tagged_gene_drift_check(p, 0.5, 0.01, 20_000, RngSpec(15))
    b = moran.tagged_gene_drift_check(p, 0.5, 0.01, 20_000, RngSpec(15), resampling="ordered")
    assert 1.8 < b.variance / a.variance < 2.2
    with pytest.raises(ValueError):
        moran.tagged_gene_drift_check(p, 0.5, 0.01, 100, RngSpec(1), resampling="sideways")


@pytest.mark.parametrize("kwargs", [
    dict(x0=0.0), dict(x0=1.0), dict(x0=0.5005), dict(dt=0.0), dict(reps=1),
])
def test_drift_check_validation(kwargs):
    args = dict(x0=0.5, dt=0.01, reps=100)
    args.update(kwargs)
    with pytest.raises(RangeError):
        moran.tagged_gene_drift_check(ModelParams(0, 1, 0, 1, 500), args["x0"], args["dt"], args["reps"], RngSpec(1))


def test_kernel_reset_is_consistent():
    arrays = K.new_state(10, 4)
    K.reset_tagged(*arrays, 3)
    indiv, genes, glen, gref, free, S = arrays
    assert S[K.S_TOTAL] == 3
    assert gref[:2].tolist() == [7, 3]
    # every unreferenced version is on the free list exactly once
    assert sorted(free[: S[K.S_NFREE]].tolist()) == [v for v in range(11) if gref[v] == 0]
