"""Backward-in-time samplers: single-gene graphs, the coupled many-gene graph and the two-gene process.

Times run backwards from the sampling moment.  In every graph each
unordered pair of lines coalesces at rate 1, each line is lost at rate
``rho/2`` and splits at rate ``gamma/2``; a split keeps the line id for the
continuing line and creates a new incoming line.  Sample ``i`` carries a
gene iff the gain point lies on a line that is an ancestor of ``i``, i.e.
is reachable from ``i`` by moving back in time.

The coupled sampler builds the graphs of genes ``1, 2, ...`` one after the
other on top of a shared lineage structure that starts as a Kingman
coalescent of the sample (see :mod:`pangenome._agtg_kernel`).  Each gene
graph is run until all of its lines are lost.
"""
from __future__ import annotations

import dataclasses
import math
from collections.abc import Iterable

import numpy as np

from . import _agtg_kernel as K
from . import montecarlo
from .birthdeath import BirthDeathSpec, excess_threshold
from .errors import RangeError, ResourceLimit
from .params import ModelParams, RngSpec, validate

DEFAULT_MAX_ALIVE = 10**6
DEFAULT_EPSILON = 1e-6
_SEG_CAP = 1024
_LINE_CAP = 1024
_REC_CAP = 4096

EVENT_NAMES = {K.EV_COALESCENCE: "coalescence", K.EV_LOSS: "loss", K.EV_SPLIT: "split"}
_EVENT_CODES = {v: k for k, v in EVENT_NAMES.items()}


@dataclasses.dataclass(frozen=True)
class AgtgEvent:
    """One event of a gene graph.

    ``lines`` is ``(a, b, merged)`` for a coalescence, ``(line,)`` for a
    loss and ``(line, incoming)`` for a split.
    """

    time: float
    kind: str
    lines: tuple[int, ...]


@dataclasses.dataclass(frozen=True)
class AgtgGraph:
    """Time-ordered event log of one gene graph.

    Lines ``0..n-1`` are the sampled lines alive at time 0; later lines are
    numbered in birth order.
    """

    n: int
    events: tuple[AgtgEvent, ...]
    total_length: float

    @property
    def initial_lines(self) -> range:
        return range(self.n)

    def line_table(self) -> dict[int, dict]:
        """Birth, death and origin of every line, rebuilt from the events."""
        lines = {i: {"birth": 0.0, "death": math.inf, "origin": ("sample", i)} for i in range(self.n)}
        for ev in self.events:
            if ev.kind == "coalescence":
                a, b, c = ev.lines
                lines[a]["death"] = ev.time
                lines[b]["death"] = ev.time
                lines[c] = {"birth": ev.time, "death": math.inf, "origin": ("merged", a, b)}
            elif ev.kind == "loss":
                lines[ev.lines[0]]["death"] = ev.time
            elif ev.kind == "split":
                p, c = ev.lines
                lines[c] = {"birth": ev.time, "death": math.inf, "origin": ("incoming", p)}
            else:
                raise ValueError(f"unknown event kind {ev.kind!r}")
        return lines

    def recompute_length(self) -> float:
        return math.fsum(v["death"] - v["birth"] for v in self.line_table().values())

    def split_count(self) -> int:
        return sum(ev.kind == "split" for ev in self.events)

    def to_text(self) -> str:
        """Line-oriented export: a header, then ``time kind line...`` per event."""
        out = [f"# agtg n={self.n} length={self.total_length!r}"]
        out.extend(f"{ev.time!r} {ev.kind} " + " ".join(map(str, ev.lines)) for ev in self.events)
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> AgtgGraph:
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("# agtg"):
            raise ValueError("missing '# agtg' header")
        header = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
        events = []
        for ln in lines[1:]:
            parts = ln.split()
            if parts[1] not in _EVENT_CODES:
                raise ValueError(f"unknown event kind {parts[1]!r}")
            events.append(AgtgEvent(float(parts[0]), parts[1], tuple(int(p) for p in parts[2:])))
        return cls(int(header["n"]), tuple(events), float(header["length"]))


@dataclasses.dataclass(frozen=True)
class GenePresence:
    flags: np.ndarray
    gain_line: int
    gain_time: float


@dataclasses.dataclass(frozen=True)
class StoppingPolicy:
    """When to stop building gene graphs in the coupled sampler.

    Gene ``k`` is gained at ``T_k`` (a rate ``theta/2`` Poisson process)
    and kept iff ``T_k`` does not exceed the length of its graph.  Genes
    with ``T_k > t`` are therefore kept with expected total
    ``(theta/2) E[(L - t)^+]``, where ``L`` is the length of a single-gene
    graph.  Graphs are built for all ``T_k <= t_stop`` with ``t_stop``
    chosen so that this expected number of missed genes equals
    ``epsilon``.
    """

    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not self.epsilon > 0:
            raise RangeError("epsilon", f"epsilon must be > 0, got {self.epsilon}")

    def t_stop(self, params: ModelParams, n: int) -> float:
        if params.theta == 0:
            return 0.0
        # L = 2T for the birth-death hitting time T, so (theta/2) E[(L-t)^+]
        # equals theta E[(T - t/2)^+]
        s = excess_threshold(BirthDeathSpec(params.rho, params.gamma), n, self.epsilon / params.theta)
        return 2.0 * s


@dataclasses.dataclass(frozen=True)
class CoupledAgtgSample:
    """Genomes of ``n`` sampled individuals read off the coupled graphs.

    Gene ids are the indices ``k = 1, 2, ...`` of the gene graphs.
    """

    genomes: tuple[frozenset, ...]
    graphs_generated: int
    gain_events: tuple[tuple[float, bool], ...]
    t_stop: float
    epsilon: float
    split_events: int
    graphs: tuple[AgtgGraph, ...] | None = None


@dataclasses.dataclass(frozen=True)
class TwoGeneState:
    x: int
    y: int
    z: int

    def __post_init__(self):
        for name in ("x", "y", "z"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise RangeError(name, f"{name} must be a non-negative integer, got {v}")
        if self.x + self.y + self.z < 1:
            raise RangeError("x", "need at least one line")


@dataclasses.dataclass(frozen=True)
class PangenomeBatch:
    """Per-replicate output of the coupled sampler.

    ``spectrum[r, k-1]`` counts genes carried by exactly ``k`` samples,
    ``first_genome[r]`` the genes of sample 0 and ``first_length[r]`` the
    length of the first gene graph (NaN when none was built).
    """

    n: int
    spectrum: np.ndarray
    first_genome: np.ndarray
    graphs: np.ndarray
    splits: np.ndarray
    first_length: np.ndarray
    t_stop: float
    epsilon: float

    @property
    def reps(self) -> int:
        return self.spectrum.shape[0]

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


class _Workspace:
    def __init__(self, n, seg_cap=_SEG_CAP, line_cap=_LINE_CAP, rec_cap=_REC_CAP):
        self.n = n
        self.seg_cap = seg_cap
        self.line_cap = line_cap
        self.rec_cap = rec_cap
        self.Fa, self.Ia, self.C = K.new_workspace(n, seg_cap, line_cap)

    def grow(self, max_alive):
        if self.line_cap > 4 * max_alive + 16:
            raise ResourceLimit("gene graph exceeded the workspace limit")
        self.__init__(self.n, self.seg_cap * 2, self.line_cap * 2, self.rec_cap * 2)


def _raise_for(status, max_alive):
    if status == K.STATUS_TOO_MANY_LINES:
        raise ResourceLimit(f"alive-line count exceeded {max_alive}")
    if status == K.STATUS_INCONSISTENT:
        raise AssertionError("lineage union is inconsistent: merge target not explored")


def _run_with_retry(gen, ws, max_alive, call):
    """Run ``call()``; on a full workspace, enlarge it and replay from the same random state."""
    state = gen.bit_generator.state
    while True:
        status, done = call()
        if status == K.STATUS_OK:
            return
        _raise_for(status, max_alive)
        ws.grow(max_alive)
        gen.bit_generator.state = state


def _check(params: ModelParams, n: int | None) -> tuple[ModelParams, int]:
    validate(params)
    n = params.n if n is None else n
    if int(n) != n or n < 1:
        raise RangeError("n", f"sample size must be an integer >= 1, got {n}")
    return params, int(n)


def _graph_from_records(n, rec_t, rec_i, count, length) -> AgtgGraph:
    events = []
    for r in range(count):
        kind = int(rec_i[r, 1])
        a, b, c = (int(v) for v in rec_i[r, 2:5])
        if kind == K.EV_COALESCENCE:
            lines = (a, b, c)
        elif kind == K.EV_LOSS:
            lines = (a,)
        else:
            lines = (a, b)
        events.append(AgtgEvent(float(rec_t[r]), EVENT_NAMES[kind], lines))
    times = [e.time for e in events]
    if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
        # distinct continuous draws; equal times would mean a kernel bug
        raise AssertionError("gene graph events are not strictly time-ordered")
    return AgtgGraph(n, tuple(events), float(length))


def _recorded_gene(gen, ws, n, params, gene, max_alive, record):
    rec_cap = ws.rec_cap if record else 0
    rec_t = np.empty(rec_cap)
    rec_i = np.empty((rec_cap, 5), dtype=np.int64)
    ws.C[K.C_NREC] = 0
    result = K.run_gene(
        gen, ws.Fa, ws.Ia, ws.C, n, params.rho, params.gamma, gene, max_alive, record, rec_t, rec_i
    )
    return result, rec_t, rec_i


def sample_single_gene_agtg(
    params: ModelParams, n: int | None, rng: RngSpec, max_alive: int = DEFAULT_MAX_ALIVE
) -> tuple[AgtgGraph, GenePresence]:
    """One single-gene graph from ``n`` lines with its gain point and presence flags."""
    params, n = _check(params, n)
    gen = rng.generator()
    ws = _Workspace(n)
    while True:
        state = gen.bit_generator.state
        K.init_union(gen, ws.Fa, ws.Ia, ws.C, n, False)
        (status, length), rec_t, rec_i = _recorded_gene(gen, ws, n, params, 0, max_alive, True)
        if status == K.STATUS_OK:
            break
        _raise_for(status, max_alive)
        gen.bit_generator.state = state
        ws.grow(max_alive)
    graph = _graph_from_records(n, rec_t, rec_i, int(ws.C[K.C_NREC]), length)
    line, when = K.place_gain(gen, ws.Fa, ws.Ia, ws.C, length)
    flags = np.zeros(n, dtype=np.int8)
    flags[ws.Ia[K.I_CARRIERS][: ws.C[K.C_NCARRIERS]]] = 1
    return graph, GenePresence(flags, int(line), float(when))


def graph_length(graph: AgtgGraph) -> float:
    return graph.total_length


def presence_from_graph(graph: AgtgGraph, gain_line: int) -> np.ndarray:
    """Presence flags for a gain point on ``gain_line``, by walking the graph towards the present.

    A point on a line reaches exactly the samples below that line: through
    both branches of a coalescence, and from an incoming line to the line
    it split off from.  Where on the line the point sits does not matter.
    """
    table = graph.line_table()
    if gain_line not in table:
        raise RangeError("gain_line", f"line {gain_line} is not in the graph")
    flags = np.zeros(graph.n, dtype=np.int8)
    seen = set()
    stack = [gain_line]
    while stack:
        ln = stack.pop()
        if ln in seen:
            continue
        seen.add(ln)
        origin = table[ln]["origin"]
        if origin[0] == "sample":
            flags[origin[1]] = 1
        else:
            stack.extend(origin[1:])
    return flags


def single_gene_agtg_batch(
    params: ModelParams,
    n: int | None,
    reps: int,
    seed: int,
    *,
    threads: int | None = None,
    max_alive: int = DEFAULT_MAX_ALIVE,
) -> dict[str, np.ndarray]:
    """Lengths, carrier counts and split counts of ``reps`` independent single-gene graphs."""
    params, n = _check(params, n)

    def worker(gen, b, count):
        ws = _Workspace(n)
        lengths = np.empty(count)
        ncar = np.empty(count, dtype=np.int64)
        splits = np.empty(count, dtype=np.int64)

        def call():
            return K.single_gene_block(
                gen, ws.Fa, ws.Ia, ws.C, n, params.rho, params.gamma, max_alive, lengths, ncar, splits
            )

        _run_with_retry(gen, ws, max_alive, call)
        return lengths, ncar, splits

    parts = montecarlo.run_blocks(worker, reps, seed, stream_offset=montecarlo.STREAM_AGTG, threads=threads)
    return {
        "length": montecarlo.concat([p[0] for p in parts]),
        "carriers": montecarlo.concat([p[1] for p in parts]).astype(np.int64),
        "splits": montecarlo.concat([p[2] for p in parts]).astype(np.int64),
    }


def sample_pangenome_agtg(
    params: ModelParams,
    n: int | None,
    rng: RngSpec,
    stop: StoppingPolicy | None = None,
    *,
    keep_graphs: bool = False,
    max_alive: int = DEFAULT_MAX_ALIVE,
) -> CoupledAgtgSample:
    """One draw of ``n`` genomes from the coupled graphs, keeping every gene's outcome."""
    params, n = _check(params, n)
    stop = stop or StoppingPolicy()
    t_stop = stop.t_stop(params, n)
    gen = rng.generator()
    ws = _Workspace(n)
    while True:
        start_state = gen.bit_generator.state
        result = _pangenome_detailed(gen, ws, params, n, t_stop, keep_graphs, max_alive)
        if result is not None:
            break
        gen.bit_generator.state = start_state
        ws.grow(max_alive)
    genomes, gains, graphs, splits = result
    return CoupledAgtgSample(
        genomes=tuple(frozenset(g) for g in genomes),
        graphs_generated=len(gains),
        gain_events=tuple(gains),
        t_stop=t_stop,
        epsilon=stop.epsilon,
        split_events=splits,
        graphs=tuple(graphs) if keep_graphs else None,
    )


def _pangenome_detailed(gen, ws, params, n, t_stop, keep_graphs, max_alive):
    K.init_union(gen, ws.Fa, ws.Ia, ws.C, n, True)
    genomes = [set() for _ in range(n)]
    gains = []
    graphs = []
    splits = 0
    if params.theta <= 0:
        return genomes, gains, graphs, splits
    gain = 0.0
    gene = 0
    while True:
        gain += gen.exponential(2.0 / params.theta)
        if gain > t_stop:
            return genomes, gains, graphs, splits
        (status, length), rec_t, rec_i = _recorded_gene(gen, ws, n, params, gene, max_alive, keep_graphs)
        _raise_for(status, max_alive)
        if status != K.STATUS_OK:
            return None
        gene += 1
        splits += int(ws.C[K.C_NSPLIT])
        if keep_graphs:
            graphs.append(_graph_from_records(n, rec_t, rec_i, int(ws.C[K.C_NREC]), length))
        accepted = gain <= length
        gains.append((float(gain), bool(accepted)))
        if accepted:
            K.place_gain(gen, ws.Fa, ws.Ia, ws.C, length)
            for i in ws.Ia[K.I_CARRIERS][: ws.C[K.C_NCARRIERS]]:
                genomes[int(i)].add(gene)


def pangenome_agtg_batch(
    params: ModelParams,
    n: int | None,
    reps: int,
    seed: int,
    stop: StoppingPolicy | None = None,
    *,
    threads: int | None = None,
    max_alive: int = DEFAULT_MAX_ALIVE,
) -> PangenomeBatch:
    """``reps`` independent coupled samples reduced to per-replicate spectra."""
    params, n = _check(params, n)
    stop = stop or StoppingPolicy()
    t_stop = stop.t_stop(params, n)

    def worker(gen, b, count):
        ws = _Workspace(n)
        spectrum = np.zeros((count, n), dtype=np.int64)
        first = np.zeros(count, dtype=np.int64)
        graphs = np.zeros(count, dtype=np.int64)
        splits = np.zeros(count, dtype=np.int64)
        first_len = np.empty(count)

        def call():
            return K.pangenome_block(
                gen, ws.Fa, ws.Ia, ws.C, n, params.theta, params.rho, params.gamma, t_stop, max_alive,
                spectrum, first, graphs, splits, first_len,
            )

        _run_with_retry(gen, ws, max_alive, call)
        return spectrum, first, graphs, splits, first_len

    parts = montecarlo.run_blocks(worker, reps, seed, stream_offset=montecarlo.STREAM_AGTG, threads=threads)
    cat = lambda i, shape: np.concatenate([p[i] for p in parts]) if parts else np.zeros(shape)  # noqa: E731
    return PangenomeBatch(
        n=n,
        spectrum=cat(0, (0, n)).astype(np.int64),
        first_genome=cat(1, 0).astype(np.int64),
        graphs=cat(2, 0).astype(np.int64),
        splits=cat(3, 0).astype(np.int64),
        first_length=cat(4, 0),
        t_stop=t_stop,
        epsilon=stop.epsilon,
    )


def sample_two_gene_agtg(
    params: ModelParams, init: TwoGeneState, rng: RngSpec, max_alive: int = DEFAULT_MAX_ALIVE
) -> tuple[float, float]:
    """Total lengths ``(L1, L2)`` of lines carrying gene 1 and gene 2 until both are gone."""
    validate(params)
    out = np.empty((1, 2))
    status, _ = K.two_gene_block(rng.generator(), params.rho, params.gamma, init.x, init.y, init.z, max_alive, out)
    if status != K.STATUS_OK:
        raise ResourceLimit(f"alive-line count exceeded {max_alive}")
    return float(out[0, 0]), float(out[0, 1])


def two_gene_agtg_batch(
    params: ModelParams,
    init: TwoGeneState,
    reps: int,
    seed: int,
    *,
    threads: int | None = None,
    max_alive: int = DEFAULT_MAX_ALIVE,
) -> np.ndarray:
    """``(reps, 2)`` array of ``(L1, L2)`` draws."""
    validate(params)

    def worker(gen, b, count):
        out = np.empty((count, 2))
        status, _ = K.two_gene_block(gen, params.rho, params.gamma, init.x, init.y, init.z, max_alive, out)
        if status != K.STATUS_OK:
            raise ResourceLimit(f"alive-line count exceeded {max_alive}")
        return out

    parts = montecarlo.run_blocks(worker, reps, seed, stream_offset=montecarlo.STREAM_TWO_GENE, threads=threads)
    return np.concatenate(parts) if parts else np.empty((0, 2))


def export_graphs(graphs: Iterable[AgtgGraph]) -> str:
    """Concatenate text exports, one block per gene graph, numbered from 1."""
    chunks = []
    for k, g in enumerate(graphs, start=1):
        chunks.append(f"# gene {k}\n" + g.to_text())
    return "".join(chunks)
