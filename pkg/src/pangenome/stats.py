"""Sample statistics of a set of genomes and Monte Carlo aggregation."""
from __future__ import annotations

import dataclasses
import math
from collections import Counter
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientData


@dataclasses.dataclass(frozen=True)
class SampleStatistics:
    """Average genome size ``A``, average pairwise difference ``D``,
    pangenome size ``G`` and the gene frequency spectrum of ``n`` genomes.

    ``spectrum[k-1]`` counts genes present in exactly ``k`` genomes.  ``A``
    and ``D`` are kept as exact fractions; use :meth:`as_floats` for a
    rounded view.
    """

    n: int
    avg_genes: Fraction
    avg_pairwise_diff: Fraction
    pangenome_size: int
    spectrum: tuple[int, ...]

    def as_floats(self) -> dict:
        return {
            "A": float(self.avg_genes),
            "D": float(self.avg_pairwise_diff),
            "G": self.pangenome_size,
            "spectrum": list(self.spectrum),
        }


def compute_statistics(sample: Sequence[Iterable[int]]) -> SampleStatistics:
    """Statistics of ``sample`` using exact integer arithmetic.

    ``D`` averages ``|G_i \\ G_j|`` over ordered pairs ``i != j`` and is 0
    for a single genome.
    """
    genomes = [frozenset(g) for g in sample]
    n = len(genomes)
    if n < 1:
        raise ValueError("need at least one genome")
    counts = Counter()
    for g in genomes:
        counts.update(g)
    spectrum = [0] * n
    for c in counts.values():
        spectrum[c - 1] += 1
    total = sum(len(g) for g in genomes)
    diff = 0
    for i, gi in enumerate(genomes):
        for j, gj in enumerate(genomes):
            if i != j:
                diff += len(gi - gj)
    return SampleStatistics(
        n=n,
        avg_genes=Fraction(total, n),
        avg_pairwise_diff=Fraction(diff, n * (n - 1)) if n > 1 else Fraction(0),
        pangenome_size=len(counts),
        spectrum=tuple(spectrum),
    )


def statistics_from_spectrum(spectrum: Sequence[int]) -> SampleStatistics:
    """Statistics determined by a spectrum alone.

    A gene in ``k`` of ``n`` genomes is missing from the other ``n - k``, so
    it contributes ``k (n - k)`` ordered pairs to the difference count.
    """
    spectrum = tuple(int(s) for s in spectrum)
    n = len(spectrum)
    total = sum(k * s for k, s in enumerate(spectrum, start=1))
    diff = sum(k * (n - k) * s for k, s in enumerate(spectrum, start=1))
    return SampleStatistics(
        n=n,
        avg_genes=Fraction(total, n),
        avg_pairwise_diff=Fraction(diff, n * (n - 1)) if n > 1 else Fraction(0),
        pangenome_size=sum(spectrum),
        spectrum=spectrum,
    )


@dataclasses.dataclass(frozen=True)
class MCEstimate:
    mean: float
    variance: float
    std_error: float
    reps: int

    def z(self, target: float) -> float:
        """Standardised distance of ``target`` from the mean (0 if both coincide exactly)."""
        diff = self.mean - target
        if self.std_error == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.std_error

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def aggregate(values: Iterable[float]) -> MCEstimate:
    """One-pass Welford mean and sample variance with a compensated mean.

    Raises
    ------
    InsufficientData
        For fewer than two values.
    """
    count = 0
    mean = 0.0
    comp = 0.0  # Kahan compensation for the running mean
    m2 = 0.0
    for x in values:
        x = float(x)
        count += 1
        delta = x - mean
        step = delta / count - comp
        new_mean = mean + step
        comp = (new_mean - mean) - step
        m2 += delta * (x - new_mean)
        mean = new_mean
    if count < 2:
        raise InsufficientData(f"need at least 2 values, got {count}")
    variance = max(m2 / (count - 1), 0.0)
    return MCEstimate(mean, variance, math.sqrt(variance / count), count)


def aggregate_groups(values: np.ndarray, groups: np.ndarray) -> MCEstimate:
    """Mean of correlated ``values`` with a standard error from group means.

    Groups (for example the chains of a Monte Carlo run) must be mutually
    independent.  ``variance`` is the per-value sample variance and
    ``std_error`` the batch-means error, which is larger when values within a
    group are positively correlated.
    """
    values = np.asarray(values, dtype=float)
    groups = np.asarray(groups)
    labels, inverse, sizes = np.unique(groups, return_inverse=True, return_counts=True)
    if len(labels) < 2:
        raise InsufficientData(f"need at least 2 groups, got {len(labels)}")
    sums = np.bincount(inverse, weights=values)
    overall = aggregate(values)
    mean = overall.mean
    # ratio estimator variance for unequal group sizes
    resid = sums - mean * sizes
    g = len(labels)
    se = math.sqrt(g / (g - 1) * float(resid @ resid)) / len(values)
    return MCEstimate(mean, overall.variance, se, len(values))


def spectrum_estimates(spectra: np.ndarray, groups: np.ndarray | None = None) -> list[MCEstimate]:
    """Per-class estimates of a ``(reps, n)`` spectrum array."""
    spectra = np.asarray(spectra)
    if groups is None:
        return [aggregate(spectra[:, k]) for k in range(spectra.shape[1])]
    return [aggregate_groups(spectra[:, k], groups) for k in range(spectra.shape[1])]
