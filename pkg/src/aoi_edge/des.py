"""
Discrete-event simulation of the two-hop system.

Every server is bufferless and fully preemptive: an arrival at a transmitter
replaces its packet, a transmitter completion replaces whatever the edge
server holds, and an edge completion delivers the packet to the monitor.  All
clocks are exponential, so the next event is drawn from the race of the
currently active rates.

Per-source AoI areas are accumulated into a fixed number of time bins whose
width doubles whenever the horizon outgrows them; batch means are formed from
contiguous bins after the warm-up is dropped.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import stats

from .scenario import Scenario

N_TIME_BINS = 4096
RNG_CHUNK = 1 << 20
WARMUP_FRACTION = 0.05
N_BATCHES = 32

EVENT_ARRIVAL, EVENT_TRANSMIT, EVENT_DELIVER = 0, 1, 2
EVENT_NAMES = ("arrival", "transmit", "deliver")
TRACE_HEADER = ("time", "source", "event_kind", "aoi_after")

# float state slots
_T, _EDGE_GEN, _WIDTH, _WARM = 0, 1, 2, 3
# int state slots
_EDGE_SRC, _TRACE_N, _DONE = 0, 1, 2


@dataclass(frozen=True, eq=False)
class SimEstimate:
    per_source_mean_aoi: np.ndarray
    half_width_95: np.ndarray
    delivered_counts: np.ndarray
    generated_counts: np.ndarray
    seed: int
    sim_time: float
    replication: int = 0
    n_batches: int = N_BATCHES

    def same_as(self, other: "SimEstimate") -> bool:
        return (
            np.array_equal(self.per_source_mean_aoi, other.per_source_mean_aoi)
            and np.array_equal(self.half_width_95, other.half_width_95)
            and np.array_equal(self.delivered_counts, other.delivered_counts)
            and np.array_equal(self.generated_counts, other.generated_counts)
            and self.sim_time == other.sim_time
            and self.seed == other.seed
        )


@dataclass(frozen=True, eq=False)
class AgeHistogram:
    """Time-weighted AoI histogram; the last bin is ``[edges[-2], inf)``."""

    edges: np.ndarray
    masses: np.ndarray
    sim_time: float


@nb.njit(cache=True, nogil=True)
def _merge_bins(bins, fs):
    K = bins.shape[0]
    half = K // 2
    for k in range(half):
        for n in range(bins.shape[1]):
            bins[k, n] = bins[2 * k, n] + bins[2 * k + 1, n]
    for k in range(half, K):
        for n in range(bins.shape[1]):
            bins[k, n] = 0.0
    fs[_WIDTH] *= 2.0


@nb.njit(cache=True, nogil=True)
def _accumulate(bins, fs, hist, hist_width, tagged, src, a, b, g):
    # area of the sawtooth (s - g) over [a, b], split across time bins
    K = bins.shape[0]
    while b >= K * fs[_WIDTH]:
        _merge_bins(bins, fs)
    w = fs[_WIDTH]
    k = int(a / w)
    if k > K - 1:
        k = K - 1
    lo = a
    while lo < b:
        hi = (k + 1) * w
        if hi > b or k == K - 1:
            hi = b
        bins[k, src] += 0.5 * ((hi - g) * (hi - g) - (lo - g) * (lo - g))
        lo = hi
        k += 1
    if hist.shape[0] > 0 and src == tagged:
        lo = max(a, fs[_WARM])
        if lo < b:
            # ages run over [lo - g, b - g] with unit weight per unit time
            nfin = hist.shape[0] - 1
            x0 = lo - g
            x1 = b - g
            j = int(x0 / hist_width)
            while x0 < x1:
                if j >= nfin:
                    hist[nfin] += x1 - x0
                    break
                edge = (j + 1) * hist_width
                seg = min(edge, x1)
                hist[j] += seg - x0
                x0 = seg
                j += 1


@nb.njit(cache=True, nogil=True)
def _run_chunk(
    lams, mus, sigma, tagged, target, horizon,
    fs, ist, busy, trans_gen, last_gen, flush_t, delivered, generated,
    bins, hist, hist_width, tr_t, tr_src, tr_kind, tr_aoi,
    expo, unif,
):
    N = lams.shape[0]
    lam_total = 0.0
    for n in range(N):
        lam_total += lams[n]
    t = fs[_T]
    used = 0
    for e in range(expo.shape[0]):
        used = e + 1
        rate = lam_total + (sigma if ist[_EDGE_SRC] >= 0 else 0.0)
        for n in range(N):
            if busy[n]:
                rate += mus[n]
        t_next = t + expo[e] / rate
        if t_next > horizon:
            t = horizon
            ist[_DONE] = 1
            break
        t = t_next
        pick = unif[e] * rate
        kind = -1
        src = -1
        for n in range(N):
            if pick < lams[n]:
                kind = EVENT_ARRIVAL
                src = n
                break
            pick -= lams[n]
        if kind < 0:
            for n in range(N):
                if busy[n]:
                    if pick < mus[n]:
                        kind = EVENT_TRANSMIT
                        src = n
                        break
                    pick -= mus[n]
        if kind < 0:
            if ist[_EDGE_SRC] >= 0:
                kind = EVENT_DELIVER
                src = ist[_EDGE_SRC]
            else:
                # rounding left pick just past the last active rate
                for n in range(N - 1, -1, -1):
                    if busy[n]:
                        kind = EVENT_TRANSMIT
                        src = n
                        break
                if kind < 0:
                    kind = EVENT_ARRIVAL
                    src = N - 1
        if kind == EVENT_ARRIVAL:
            busy[src] = True
            trans_gen[src] = t
            generated[src] += 1
        elif kind == EVENT_TRANSMIT:
            busy[src] = False
            ist[_EDGE_SRC] = src
            fs[_EDGE_GEN] = trans_gen[src]
        else:
            g_new = fs[_EDGE_GEN]
            ist[_EDGE_SRC] = -1
            _accumulate(bins, fs, hist, hist_width, tagged, src, flush_t[src], t, last_gen[src])
            flush_t[src] = t
            last_gen[src] = g_new
            delivered[src] += 1
        ntr = ist[_TRACE_N]
        if ntr < tr_t.shape[0]:
            tr_t[ntr] = t
            tr_src[ntr] = src
            tr_kind[ntr] = kind
            tr_aoi[ntr] = t - last_gen[src]
            ist[_TRACE_N] = ntr + 1
        if target > 0 and kind == EVENT_DELIVER and src == tagged and delivered[tagged] >= target:
            ist[_DONE] = 1
            break
    fs[_T] = t
    return used


class _Run:
    """Mutable state of one replication, advanced chunk by chunk."""

    def __init__(self, scenario: Scenario, seed: int, replication: int, trace_cap: int = 0,
                 hist_edges: np.ndarray | None = None, warm_start: float = 0.0):
        self.scenario = scenario
        self.N = scenario.n_sources
        self.lams = np.array(scenario.lambdas, dtype=float)
        self.mus = np.array(scenario.mus, dtype=float)
        self.tagged = scenario.tagged - 1
        self.rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replication,))))
        total = self.lams.sum() + self.mus.sum() + scenario.sigma
        self.fs = np.zeros(4)
        self.fs[_WIDTH] = 1.0 / (64.0 * total)
        self.fs[_WARM] = warm_start
        self.ist = np.zeros(3, dtype=np.int64)
        self.ist[_EDGE_SRC] = -1
        self.busy = np.zeros(self.N, dtype=np.bool_)
        self.trans_gen = np.zeros(self.N)
        self.last_gen = np.zeros(self.N)
        self.flush_t = np.zeros(self.N)
        self.delivered = np.zeros(self.N, dtype=np.int64)
        self.generated = np.zeros(self.N, dtype=np.int64)
        self.bins = np.zeros((N_TIME_BINS, self.N))
        if hist_edges is None:
            self.hist = np.zeros(0)
            self.hist_width = 1.0
        else:
            self.hist = np.zeros(len(hist_edges))  # finite bins plus overflow
            self.hist_width = float(hist_edges[1] - hist_edges[0])
        self.tr_t = np.zeros(trace_cap)
        self.tr_src = np.zeros(trace_cap, dtype=np.int64)
        self.tr_kind = np.zeros(trace_cap, dtype=np.int64)
        self.tr_aoi = np.zeros(trace_cap)

    def run(self, target: int = 0, horizon: float = math.inf):
        while not self.ist[_DONE]:
            expo = self.rng.standard_exponential(RNG_CHUNK)
            unif = self.rng.random(RNG_CHUNK)
            _run_chunk(
                self.lams, self.mus, float(self.scenario.sigma), self.tagged, int(target), float(horizon),
                self.fs, self.ist, self.busy, self.trans_gen, self.last_gen, self.flush_t,
                self.delivered, self.generated, self.bins, self.hist, self.hist_width,
                self.tr_t, self.tr_src, self.tr_kind, self.tr_aoi, expo, unif,
            )
        end = self.fs[_T]
        for n in range(self.N):
            _accumulate(self.bins, self.fs, self.hist, self.hist_width, self.tagged, n,
                        self.flush_t[n], end, self.last_gen[n])
            self.flush_t[n] = end
        return end


def _batch_means(bins: np.ndarray, width: float, end: float, warmup_fraction: float, n_batches: int):
    used = min(bins.shape[0], max(1, math.ceil(end / width)))
    lengths = np.full(used, width)
    lengths[-1] = end - (used - 1) * width
    k0 = min(used - 1, int(round(warmup_fraction * end / width)))
    areas = bins[k0:used]
    lengths = lengths[k0:used]
    mean = areas.sum(axis=0) / lengths.sum()
    nb_eff = min(n_batches, len(lengths))
    if nb_eff < 2:
        return mean, np.full(bins.shape[1], np.nan), nb_eff
    groups = np.array_split(np.arange(len(lengths)), nb_eff)
    batch = np.array([areas[g].sum(axis=0) / lengths[g].sum() for g in groups])
    tcrit = stats.t.ppf(0.975, nb_eff - 1)
    half = tcrit * batch.std(axis=0, ddof=1) / math.sqrt(nb_eff)
    return mean, half, nb_eff


def simulate(
    scenario: Scenario,
    min_delivered: int,
    seed: int,
    replication: int = 0,
    warmup_fraction: float = WARMUP_FRACTION,
    n_batches: int = N_BATCHES,
) -> SimEstimate:
    """
    Time-average AoI of every source with 95% batch-means half-widths.

    The run stops at the delivery that brings the tagged source to
    ``min_delivered`` packets; the first ``warmup_fraction`` of the horizon is
    discarded.  The RNG stream is keyed by ``(seed, replication)``.
    """
    if min_delivered < 1:
        raise ValueError("min_delivered must be >= 1")
    run = _Run(scenario, seed, replication)
    end = run.run(target=min_delivered)
    mean, half, nb_eff = _batch_means(run.bins, run.fs[_WIDTH], end, warmup_fraction, n_batches)
    return SimEstimate(
        per_source_mean_aoi=mean,
        half_width_95=half,
        delivered_counts=run.delivered.copy(),
        generated_counts=run.generated.copy(),
        seed=seed,
        sim_time=float(end),
        replication=replication,
        n_batches=nb_eff,
    )


def empirical_pdf(
    scenario: Scenario,
    bins: int,
    horizon: float,
    seed: int,
    max_age: float | None = None,
    replication: int = 0,
    warmup_fraction: float = WARMUP_FRACTION,
) -> AgeHistogram:
    """
    Time-weighted histogram of the tagged source's AoI over ``[warm-up, horizon]``.

    ``bins - 1`` equal bins cover ``[0, max_age)`` and a final bin collects
    everything above.  ``max_age`` defaults to ten times the sum of the tagged
    source's mean inter-arrival and service times.
    """
    if bins < 10:
        raise ValueError("bins must be >= 10")
    if max_age is None:
        k = scenario.tagged - 1
        max_age = 10.0 * (1.0 / scenario.lambdas[k] + 1.0 / scenario.mus[k] + 1.0 / scenario.sigma)
    edges = np.linspace(0.0, max_age, bins)
    run = _Run(scenario, seed, replication, hist_edges=edges, warm_start=warmup_fraction * horizon)
    end = run.run(horizon=horizon)
    masses = run.hist / run.hist.sum()
    return AgeHistogram(np.append(edges, np.inf), masses, float(end))


def capture_trace(scenario: Scenario, horizon: float, seed: int, max_events: int = 100_000, replication: int = 0):
    """
    Event trace of a short run: list of ``(time, source, event_kind, aoi_after)``.

    ``source`` is 1-based; ``aoi_after`` is that source's AoI right after the event.
    """
    run = _Run(scenario, seed, replication, trace_cap=max_events)
    run.run(horizon=horizon)
    n = int(run.ist[_TRACE_N])
    return [
        (float(run.tr_t[k]), int(run.tr_src[k]) + 1, EVENT_NAMES[run.tr_kind[k]], float(run.tr_aoi[k]))
        for k in range(n)
    ]


def write_trace_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for t, src, kind, aoi in rows:
            w.writerow([repr(t), src, kind, repr(aoi)])
