"""Forward finite-population simulator of genomes with gain, loss and transfer.

Each of ``N`` individuals carries a set of gene ids.  Events in continuous
time are

* resampling: for an ordered pair ``(i, j)`` the genome of ``i`` replaces
  that of ``j``;
* loss: each gene copy is deleted at rate ``rho/2``;
* gain: each individual acquires a fresh gene at rate ``theta/2``;
* transfer: for each ordered pair and each gene of the donor, the gene is
  copied into the acceptor at rate ``gamma/2N`` (a no-op if already there).

Two resampling conventions are offered.  ``"paper"`` (the default) lets
either member of an unordered pair reproduce with rate ``1/2`` for each
ordered pair, so two given lineages coalesce at rate 1 and a gene at
frequency ``x`` has infinitesimal variance ``x(1-x)``; this is the timescale
of the large-population formulas.  ``"ordered"`` uses rate 1 per ordered
pair, doubling both.
"""
from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from typing import Iterable, Sequence, TextIO

import numpy as np

from . import _moran_kernel as K
from . import montecarlo
from .errors import NotConverged, RangeError
from .params import ModelParams, RngSpec, validate

log = logging.getLogger(__name__)

DEFAULT_BURN_IN = 20.0
DEFAULT_SPACING = 1.0
DEFAULT_PER_CHAIN = 200
MIN_CHAINS = 10
RESAMPLING_RATES = {"paper": 0.5, "ordered": 1.0}
EVENT_TYPES = ("resampling", "loss", "gain", "transfer")

_GENE_CAP = 32
_CHECKPOINTS_PER_WINDOW = 50


class Genome(frozenset):
    """Duplicate-free set of gene ids carried by one individual."""

    @property
    def genes(self) -> frozenset:
        return frozenset(self)

    def sorted(self) -> list[int]:
        return sorted(self)


def _pair_rate(resampling: str) -> float:
    try:
        return RESAMPLING_RATES[resampling]
    except KeyError:
        raise RangeError("resampling", f"resampling must be one of {sorted(RESAMPLING_RATES)}, got {resampling!r}") from None


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngSpec):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"rng must be an RngSpec or numpy Generator, got {type(rng).__name__}")


def _require_N(params: ModelParams) -> int:
    validate(params)
    if params.N is None:
        raise RangeError("N", "forward simulation needs a population size N")
    return int(params.N)


class Population:
    """``N`` genomes, the model time and the next unused gene id.

    The genomes live in compiled arrays with copy-on-write sharing; use
    :attr:`individuals` for a Python view.  ``event_counts`` tallies events by
    type and ``compensator`` holds, per type, the summed event probabilities
    of every step and their summed Bernoulli variances.
    """

    def __init__(self, N: int, gene_cap: int = _GENE_CAP):
        if int(N) != N or N < 2:
            raise RangeError("N", f"population size must be an integer >= 2, got {N}")
        self._arrays = K.new_state(int(N), gene_cap)
        self._clock = np.zeros(1)
        self.event_counts = np.zeros(4, dtype=np.int64)
        self.compensator = np.zeros((2, 4))
        self.diagnostics: dict = {}

    @classmethod
    def from_genomes(cls, genomes: Sequence[Iterable[int]], time: float = 0.0) -> Population:
        sets = [sorted(set(int(g) for g in genome)) for genome in genomes]
        cap = max([_GENE_CAP] + [2 * len(s) + 2 for s in sets])
        pop = cls(len(sets), gene_cap=cap)
        indiv, genes, glen, gref, free, S = pop._arrays
        gref[0] = 0
        nfree = 0
        # version v+1 belongs to individual v; version 0 stays free
        for i, s in enumerate(sets):
            indiv[i] = i + 1
            gref[i + 1] = 1
            glen[i + 1] = len(s)
            genes[i + 1, : len(s)] = s
        free[nfree] = 0
        S[K.S_NFREE] = 1
        S[K.S_TOTAL] = sum(len(s) for s in sets)
        S[K.S_MAXLEN] = max((len(s) for s in sets), default=0)
        S[K.S_NEXT_ID] = 1 + max((s[-1] for s in sets if s), default=-1)
        pop._clock[0] = time
        return pop

    @property
    def N(self) -> int:
        return self._arrays[0].shape[0]

    @property
    def time(self) -> float:
        return float(self._clock[0])

    @property
    def next_gene_id(self) -> int:
        return int(self._arrays[5][K.S_NEXT_ID])

    @property
    def total_genes(self) -> int:
        return int(self._arrays[5][K.S_TOTAL])

    def genome(self, i: int) -> Genome:
        indiv, genes, glen = self._arrays[:3]
        v = indiv[i]
        return Genome(int(g) for g in genes[v, : glen[v]])

    @property
    def individuals(self) -> list[Genome]:
        return [self.genome(i) for i in range(self.N)]

    def mean_genes(self) -> float:
        return self.total_genes / self.N

    def _grow(self) -> None:
        indiv, genes, glen, gref, free, S = self._arrays
        bigger = np.zeros((genes.shape[0], 2 * genes.shape[1]), dtype=np.int64)
        bigger[:, : genes.shape[1]] = genes
        self._arrays = (indiv, bigger, glen, gref, free, S)
        log.debug("genome capacity raised to %d", bigger.shape[1])

    def _advance(self, gen, params, t_end, max_events, pair_rate) -> int:
        done = 0
        while True:
            status, events = K.advance(
                gen, *self._arrays, self._clock,
                float(params.theta), float(params.rho), float(params.gamma), pair_rate,
                float(t_end), max_events - done, self.event_counts, self.compensator,
            )
            done += events
            if status == K.STATUS_OK:
                return done
            self._grow()


def step(population: Population, params: ModelParams, rng, *, resampling: str = "paper") -> Population:
    """Advance ``population`` in place by exactly one event and return it.

    ``rng`` should be a numpy Generator when stepping repeatedly; an
    :class:`RngSpec` restarts its stream on every call.
    """
    if _require_N(params) != population.N:
        raise RangeError("N", f"params.N={params.N} does not match population size {population.N}")
    population._advance(_as_generator(rng), params, math.inf, 1, _pair_rate(resampling))
    return population


def simulate(population: Population, params: ModelParams, until: float, rng, *, resampling: str = "paper") -> Population:
    """Advance ``population`` in place until its time reaches ``until``."""
    if _require_N(params) != population.N:
        raise RangeError("N", f"params.N={params.N} does not match population size {population.N}")
    population._advance(_as_generator(rng), params, until, np.iinfo(np.int64).max, _pair_rate(resampling))
    return population


def _window_difference_se(series: np.ndarray, m: int, decay: float) -> float:
    """Standard error of the difference of the means of two adjacent windows.

    ``series`` holds ``2m`` equally spaced checkpoints whose stationary
    autocorrelation at lag ``k`` is ``decay**k``.  The stationary variance is
    recovered from the one-step innovations ``x[i+1] - decay*x[i]``, which a
    relaxing mean with the same decay leaves unchanged.
    """
    innov = series[1:] - decay * series[:-1]
    innov = innov - innov.mean()
    var = float(innov @ innov) / (len(innov) - 1) / (1.0 - decay * decay)
    lags = np.abs(np.subtract.outer(np.arange(2 * m), np.arange(2 * m)))
    w = np.concatenate([np.full(m, 1.0 / m), np.full(m, -1.0 / m)])
    return math.sqrt(max(var * float(w @ (decay**lags) @ w), 0.0))


def _burn_in(pop: Population, gen, params, burn_in: float, pair_rate: float) -> dict:
    """Run to ``burn_in`` and compare mean genome size over the last two quarter windows."""
    big = np.iinfo(np.int64).max
    half = 0.5 * burn_in
    pop._advance(gen, params, half, big, pair_rate)
    window = 0.25 * burn_in
    means = []
    for w in range(2):
        values = np.empty(_CHECKPOINTS_PER_WINDOW)
        start = half + w * window
        for c in range(_CHECKPOINTS_PER_WINDOW):
            pop._advance(gen, params, start + (c + 1) * window / _CHECKPOINTS_PER_WINDOW, big, pair_rate)
            values[c] = pop.mean_genes()
        means.append(values)
    m1, m2 = (float(m.mean()) for m in means)
    # Without transfer the mean genome size relaxes at exactly rate rho/2.
    spacing = window / _CHECKPOINTS_PER_WINDOW
    decay = math.exp(-0.5 * params.rho * spacing)
    se = _window_difference_se(np.concatenate(means), _CHECKPOINTS_PER_WINDOW, decay)
    converged = abs(m1 - m2) <= 3.0 * se
    return {
        "burn_in": burn_in,
        "window_means": [m1, m2],
        "pooled_se": se,
        "converged": converged,
    }


def run_to_equilibrium(
    params: ModelParams,
    burn_in: float = DEFAULT_BURN_IN,
    rng=None,
    *,
    resampling: str = "paper",
) -> Population:
    """Simulate from empty genomes until time ``burn_in``.

    The mean genome size is tracked over the last two quarters of the run
    and the two window means are compared.  Their standard error assumes
    checkpoint correlations decay at rate ``rho/2``, the exact relaxation
    rate of the mean genome size without transfer, and takes the stationary
    variance from one-step innovations, so a deterministic transient does
    not inflate it.  A difference above three
    pooled standard errors issues :class:`NotConverged`; the outcome is kept
    in ``population.diagnostics`` either way.
    """
    N = _require_N(params)
    if not burn_in > 0:
        raise RangeError("burn_in", f"burn_in must be > 0, got {burn_in}")
    gen = _as_generator(rng if rng is not None else RngSpec(0))
    pop = Population(N)
    pop.diagnostics = _burn_in(pop, gen, params, burn_in, _pair_rate(resampling))
    if not pop.diagnostics["converged"]:
        m1, m2 = pop.diagnostics["window_means"]
        warnings.warn(
            NotConverged(
                f"mean genome size moved from {m1:.4g} to {m2:.4g} "
                f"(pooled SE {pop.diagnostics['pooled_se']:.3g}) near the end of burn-in"
            ),
            stacklevel=2,
        )
    return pop


def sample_individuals(population: Population, n: int, rng) -> list[Genome]:
    """``n`` distinct individuals chosen uniformly without replacement, in draw order."""
    if int(n) != n or not 1 <= n <= population.N:
        raise RangeError("n", f"sample size must be in 1..{population.N}, got {n}")
    gen = _as_generator(rng)
    idx = gen.choice(population.N, size=int(n), replace=False)
    return [population.genome(int(i)) for i in idx]


@dataclasses.dataclass
class MoranBatch:
    """Snapshots of samples taken along independent equilibrium chains.

    ``spectrum[r, k-1]`` counts genes in exactly ``k`` of the ``n`` sampled
    genomes of snapshot ``r``; ``chain[r]`` identifies its chain.  Snapshots
    of one chain are correlated, so standard errors should treat chains as
    the independent units.
    """

    n: int
    N: int
    spectrum: np.ndarray
    first_genome: np.ndarray
    chain: np.ndarray
    burn_in: float
    spacing: float
    not_converged_chains: int
    resampling: str
    per_chain: int

    @property
    def reps(self) -> int:
        return self.spectrum.shape[0]

    @property
    def chains(self) -> int:
        return int(self.chain.max()) + 1 if self.reps else 0

    def avg_genes(self) -> np.ndarray:
        k = np.arange(1, self.n + 1)
        return self.spectrum @ k / self.n

    def pairwise_diff(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros(self.reps)
        k = np.arange(1, self.n + 1)
        return self.spectrum @ (k * (self.n - k)) / (self.n * (self.n - 1))

    def pangenome_size(self) -> np.ndarray:
        return self.spectrum.sum(axis=1)


def moran_sample_batch(
    params: ModelParams,
    reps: int,
    seed: int,
    *,
    burn_in: float = DEFAULT_BURN_IN,
    spacing: float = DEFAULT_SPACING,
    per_chain: int | None = None,
    threads: int | None = None,
    resampling: str = "paper",
) -> MoranBatch:
    """``reps`` equilibrium samples of size ``params.n`` from independent chains.

    Each chain burns in for ``burn_in`` and then yields up to ``per_chain``
    snapshots ``spacing`` time units apart.  By default ``per_chain`` is
    :data:`DEFAULT_PER_CHAIN`, reduced so that small runs still span
    :data:`MIN_CHAINS` chains for the standard errors.  Chain ``c`` draws from stream
    ``c`` of the Moran namespace, so the output does not depend on ``threads``.
    """
    N = _require_N(params)
    n = int(params.n)
    if not burn_in > 0:
        raise RangeError("burn_in", f"burn_in must be > 0, got {burn_in}")
    if not spacing > 0:
        raise RangeError("spacing", f"spacing must be > 0, got {spacing}")
    if per_chain is None:
        per_chain = min(DEFAULT_PER_CHAIN, max(1, -(-int(reps) // MIN_CHAINS)))
    if int(per_chain) != per_chain or per_chain < 1:
        raise RangeError("per_chain", f"per_chain must be an integer >= 1, got {per_chain}")
    pair_rate = _pair_rate(resampling)
    big = np.iinfo(np.int64).max

    def worker(gen, chain, count):
        pop = Population(N)
        diag = _burn_in(pop, gen, params, burn_in, pair_rate)
        spectrum = np.zeros((count, n), dtype=np.int64)
        first = np.zeros(count, dtype=np.int64)
        idx = np.empty(N, dtype=np.int64)
        for r in range(count):
            pop._advance(gen, params, burn_in + (r + 1) * spacing, big, pair_rate)
            buf = np.empty(max(1, n * pop._arrays[1].shape[1]), dtype=np.int64)
            indiv, genes, glen = pop._arrays[:3]
            first[r] = K.sample_spectrum(gen, indiv, genes, glen, n, idx, buf, spectrum[r])
        return spectrum, first, np.full(count, chain, dtype=np.int64), diag["converged"]

    parts = montecarlo.run_blocks(
        worker, reps, seed,
        stream_offset=montecarlo.STREAM_MORAN, block_size=int(per_chain), threads=threads,
    )
    if parts:
        spectrum = np.concatenate([p[0] for p in parts])
        first = np.concatenate([p[1] for p in parts])
        chain = np.concatenate([p[2] for p in parts])
    else:
        spectrum = np.zeros((0, n), dtype=np.int64)
        first = np.zeros(0, dtype=np.int64)
        chain = np.zeros(0, dtype=np.int64)
    bad = sum(1 for p in parts if not p[3])
    return MoranBatch(n, N, spectrum, first, chain, float(burn_in), float(spacing), bad, resampling, int(per_chain))


@dataclasses.dataclass(frozen=True)
class DriftEstimate:
    """Mean and variance of the tagged-gene frequency increment over a window."""

    drift: float
    variance: float
    drift_se: float
    variance_se: float
    windows: int

    def as_tuple(self) -> tuple[float, float]:
        return self.drift, self.variance


def tagged_gene_drift_check(
    params: ModelParams,
    x0: float,
    dt: float,
    reps: int,
    rng,
    *,
    resampling: str = "paper",
) -> DriftEstimate:
    """Empirical drift and variance of a tagged gene's frequency over ``reps`` windows.

    Every window starts from ``N*x0`` individuals carrying only the tagged
    gene and the rest empty, with gains switched off, and runs for ``dt``.
    Loss may be switched off here with ``rho = 0``.  For large ``N`` the
    increment should have mean ``(-rho/2 x0 + gamma/2 x0 (1-x0)) dt`` and
    variance ``x0 (1-x0) dt``.
    """
    if params.N is None or int(params.N) != params.N or params.N < 2:
        raise RangeError("N", f"population size must be an integer >= 2, got {params.N}")
    if not params.rho >= 0:
        raise RangeError("rho", f"rho must be >= 0, got {params.rho}")
    if not params.gamma >= 0:
        raise RangeError("gamma", f"gamma must be >= 0, got {params.gamma}")
    N = int(params.N)
    if not 0 < x0 < 1:
        raise RangeError("x0", f"x0 must be in (0, 1), got {x0}")
    carriers = round(N * x0)
    if abs(carriers - N * x0) > 1e-9 * N:
        raise RangeError("x0", f"N*x0 must be an integer, got {N * x0}")
    if not dt > 0:
        raise RangeError("dt", f"dt must be > 0, got {dt}")
    if int(reps) != reps or reps < 2:
        raise RangeError("reps", f"reps must be an integer >= 2, got {reps}")
    gen = _as_generator(rng)
    arrays = K.new_state(N, 4)
    out = np.empty(int(reps), dtype=np.int64)
    status, _ = K.drift_windows(
        gen, *arrays, float(params.rho), float(params.gamma), _pair_rate(resampling),
        carriers, float(dt), out,
    )
    # a single-gene population never exceeds the capacity
    assert status == K.STATUS_OK
    inc = out / N
    mean = float(inc.mean())
    var = float(inc.var(ddof=1))
    centred = inc - mean
    m4 = float(np.mean(centred**4))
    var_se = math.sqrt(max(m4 - var * var, 0.0) / len(inc))
    return DriftEstimate(mean, var, math.sqrt(var / len(inc)), var_se, len(inc))


def expected_drift(rho: float, gamma: float, x0: float, dt: float) -> tuple[float, float]:
    """Large-population drift and variance of the frequency increment over ``dt``."""
    return (-0.5 * rho * x0 + 0.5 * gamma * x0 * (1 - x0)) * dt, x0 * (1 - x0) * dt


def dump_genomes(genomes: Iterable[Iterable[int]], out: TextIO) -> None:
    """Write one line per genome with its sorted gene ids separated by tabs."""
    for genome in genomes:
        out.write("\t".join(str(g) for g in sorted(genome)) + "\n")


def load_genomes(text: str) -> list[Genome]:
    """Inverse of :func:`dump_genomes`; an empty line is an empty genome."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [Genome(int(tok) for tok in line.split("\t") if tok) for line in lines]
