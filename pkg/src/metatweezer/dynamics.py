"""Single-atom occupancy simulation and photon-count statistics.

Occupancy is a continuous-time Markov chain: during the preparation window
atoms load at ``load_rate`` (at most one with collisional blockade), and at
all times each atom is lost at ``1/lifetime``.  The trace records only the
probe windows, binned; each bin holds a Poisson count with mean
``atom_rate * occupied_time + background_rate * bin``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np
from scipy import stats

from .fitting import FitResult, fit_bias_lifetime, fit_exponential

DEFAULT_PREP = 2.0
DEFAULT_PROBE = 2.0
DEFAULT_BIN = 0.05
GAUSS_PER_TESLA = 1e4


class LifetimeError(ValueError):
    """Not enough dwell events for a lifetime estimate."""


@dataclass(frozen=True)
class DynamicsParams:
    load_rate: float
    lifetime: float
    atom_rate: float
    background_rate: float
    blockade: bool = True
    probe_load_rate: float = 0.0

    def __post_init__(self):
        for key in ("load_rate", "atom_rate", "background_rate", "probe_load_rate"):
            if getattr(self, key) < 0:
                raise ValueError(f"{key} must be non-negative")
        if not self.lifetime > 0:
            raise ValueError("lifetime must be positive")


def preset_params(target_mean: float, background_mean: float, bin_width: float = DEFAULT_BIN,
                  lifetime: float = 1.0, load_rate: float = 1.5) -> DynamicsParams:
    """Rates giving a single-atom histogram peak at ``target_mean`` counts/bin."""
    return DynamicsParams(load_rate=load_rate, lifetime=lifetime,
                          atom_rate=(target_mean - background_mean) / bin_width,
                          background_rate=background_mean / bin_width)


#: Single-atom peaks of the metalens and objective channels at 50 ms bins.
METALENS_PRESET = preset_params(16.3, 1.2)
OBJECTIVE_PRESET = preset_params(59.9, 3.0)


@dataclass(frozen=True)
class TelegraphTrace:
    counts: np.ndarray
    bin_width: float
    prep: float = DEFAULT_PREP
    probe: float = DEFAULT_PROBE
    seed: int | None = None
    source: Literal["simulated", "ingested"] = "simulated"
    #: atom-occupied time per bin (hidden state; simulated traces only)
    occupancy: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1:
            raise ValueError("counts must be 1-D")
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        if not self.bin_width > 0:
            raise ValueError("bin width must be positive")
        if len(c) % self.bins_per_cycle:
            raise ValueError(
                f"{len(c)} bins is not a whole number of {self.bins_per_cycle}-bin probe windows")
        c = c.astype(np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def bins_per_cycle(self) -> int:
        return max(int(round(self.probe / self.bin_width)), 1)

    @property
    def n_cycles(self) -> int:
        return len(self.counts) // self.bins_per_cycle

    @property
    def t_start(self) -> np.ndarray:
        i = np.arange(len(self.counts))
        cycle, j = np.divmod(i, self.bins_per_cycle)
        return cycle * (self.prep + self.probe) + self.prep + j * self.bin_width

    def by_cycle(self) -> np.ndarray:
        return self.counts.reshape(self.n_cycles, self.bins_per_cycle)

    def hidden_state(self) -> np.ndarray:
        """Per-bin truth: occupied for at least half of the bin."""
        if self.occupancy is None:
            raise ValueError("trace carries no hidden state")
        return self.occupancy >= 0.5 * self.bin_width


def trace_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Independent stream for trace ``index`` under master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _evolve(n: int, duration: float, load: float, loss: float, blockade: bool,
            rng: np.random.Generator):
    """Gillespie steps over one window; returns change times, states, final n."""
    t = 0.0
    times = [0.0]
    states = [n]
    while True:
        r_load = load if not (blockade and n >= 1) else 0.0
        r_loss = n * loss
        total = r_load + r_loss
        if total == 0:
            break
        t += rng.exponential(1.0 / total)
        if t >= duration:
            break
        n = n + 1 if rng.random() * total < r_load else n - 1
        times.append(t)
        states.append(n)
    return np.array(times), np.array(states), n


def simulate_trace(params: DynamicsParams, cycles: int, bin_width: float = DEFAULT_BIN,
                   seed: int = 0, prep: float = DEFAULT_PREP, probe: float = DEFAULT_PROBE,
                   trace_index: int = 0, initial_atoms: int = 0) -> TelegraphTrace:
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    rng = trace_rng(seed, trace_index)
    nbin = max(int(round(probe / bin_width)), 1)
    edges = np.arange(nbin + 1) * bin_width
    loss = 1.0 / params.lifetime
    occ = np.empty((cycles, nbin))
    n = initial_atoms
    for c in range(cycles):
        _, _, n = _evolve(n, prep, params.load_rate, loss, params.blockade, rng)
        times, states, n = _evolve(n, probe, params.probe_load_rate, loss, params.blockade, rng)
        # integrate the piecewise-constant atom number at the bin edges
        knots = np.append(times, probe)
        cum = np.concatenate([[0.0], np.cumsum(states * np.diff(knots))])
        occ[c] = np.diff(np.interp(edges, knots, cum))
    mean = params.atom_rate * occ + params.background_rate * bin_width
    counts = rng.poisson(mean).ravel()
    return TelegraphTrace(counts, bin_width, prep, probe, seed, "simulated", occ.ravel())


# ------------------------------------------------------------- histograms


@dataclass(frozen=True)
class HistogramSummary:
    background_mean: float
    atom_mean: float | None
    threshold: int | None
    occupancy_fraction: float
    single_peak: bool
    method: str
    edges: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        return {
            "background_mean": self.background_mean,
            "atom_mean": self.atom_mean,
            "threshold": self.threshold,
            "occupancy_fraction": self.occupancy_fraction,
            "single_peak": self.single_peak,
            "method": self.method,
        }


def _poisson_mixture_em(c: np.ndarray, max_iter: int = 2000, tol: float = 1e-10):
    mu1, mu2 = np.percentile(c, 10) + 0.1, np.percentile(c, 90) + 0.5
    w = 0.5
    ll_old = -np.inf
    for _ in range(max_iter):
        l1 = np.log(1 - w) + stats.poisson.logpmf(c, mu1)
        l2 = np.log(w) + stats.poisson.logpmf(c, mu2)
        m = np.logaddexp(l1, l2)
        ll = float(m.sum())
        g = np.exp(l2 - m)
        w = float(np.clip(g.mean(), 1e-12, 1 - 1e-12))
        mu1 = float(np.sum((1 - g) * c) / np.sum(1 - g)) if np.sum(1 - g) > 0 else mu1
        mu2 = float(np.sum(g * c) / np.sum(g)) if np.sum(g) > 0 else mu2
        mu1 = max(mu1, 1e-9)
        if abs(ll - ll_old) <= tol * abs(ll):
            return mu1, mu2, w, ll, True
        ll_old = ll
    return mu1, mu2, w, ll, False


def _valley_threshold(mu1, mu2, w):
    k = np.arange(int(np.floor(mu1)), int(np.ceil(mu2)) + 1)
    pmf = (1 - w) * stats.poisson.pmf(k, mu1) + w * stats.poisson.pmf(k, mu2)
    return int(k[np.argmin(pmf)])


def histogram(trace: TelegraphTrace | np.ndarray, bins=None) -> HistogramSummary:
    """Two-peak summary of the count histogram.

    Peaks come from a two-component Poisson mixture fitted by EM; the
    threshold is the minimum of the fitted mixture between the two means.
    A single Poisson is returned (``single_peak=True``) when the mixture is
    not justified by BIC or the peaks are not resolved.
    """
    c = np.asarray(trace.counts if isinstance(trace, TelegraphTrace) else trace)
    if c.size == 0:
        raise ValueError("empty trace")
    if bins is None:
        bins = np.arange(int(c.max()) + 2) - 0.5
    values, edges = np.histogram(c, bins=bins)
    mu0 = float(c.mean())
    ll_single = float(stats.poisson.logpmf(c, max(mu0, 1e-12)).sum())
    mu1, mu2, w, ll, ok = _poisson_mixture_em(c)
    method = "em"
    if not ok:
        fallback = _valley_split(values, edges, c)
        if fallback is not None:
            mu1, mu2, w = fallback
            method = "valley"
    delta_bic = 2 * (ll - ll_single) - 2 * np.log(c.size)
    resolved = (mu2 - mu1) > 2 * (np.sqrt(mu1) + np.sqrt(mu2))
    if method == "em" and (delta_bic < 10 or not resolved or min(w, 1 - w) < 1e-4):
        return HistogramSummary(mu0, None, None, 0.0, True, "single", edges, values)
    return HistogramSummary(mu1, mu2, _valley_threshold(mu1, mu2, w), w, False, method, edges, values)


def _valley_split(values, edges, c):
    centers = 0.5 * (edges[1:] + edges[:-1])
    smooth = np.convolve(values, np.ones(3) / 3, mode="same")
    peaks = [i for i in range(1, len(smooth) - 1)
             if smooth[i] >= smooth[i - 1] and smooth[i] > smooth[i + 1]]
    if len(peaks) < 2:
        return None
    p1, p2 = sorted(sorted(peaks, key=lambda i: smooth[i])[-2:])
    cut = centers[p1 + int(np.argmin(smooth[p1:p2 + 1]))]
    lo, hi = c[c <= cut], c[c > cut]
    if lo.size == 0 or hi.size == 0:
        return None
    return float(lo.mean()), float(hi.mean()), hi.size / c.size


def misclassification_probability(summary: HistogramSummary) -> float:
    """Per-bin error rate implied by the mixture and the threshold."""
    if summary.single_peak:
        return 0.0
    th = summary.threshold
    w = summary.occupancy_fraction
    false_pos = stats.poisson.sf(th, summary.background_mean)
    false_neg = stats.poisson.cdf(th, summary.atom_mean)
    return float((1 - w) * false_pos + w * false_neg)


@dataclass(frozen=True)
class Occupancy:
    per_bin: np.ndarray
    per_cycle: np.ndarray
    bins_per_cycle: int


def threshold_classify(trace: TelegraphTrace, threshold: float) -> Occupancy:
    """Bins with counts above ``threshold`` are occupied; a cycle is
    occupied if any of its probe bins is."""
    per_bin = trace.counts > threshold
    per_cycle = per_bin.reshape(trace.n_cycles, trace.bins_per_cycle).any(axis=1)
    return Occupancy(per_bin, per_cycle, trace.bins_per_cycle)


def changepoint_occupancy(trace: TelegraphTrace, summary: HistogramSummary) -> Occupancy:
    """Most likely monotone occupancy path in each probe window.

    With no loading during probing, an atom present at the start of a window
    stays until a single loss, so each window is occupied for its first
    ``m`` bins.  ``m`` maximizes the Poisson likelihood of the counts under
    the two histogram levels.  This removes the isolated misclassified bins
    that would otherwise split one dwell into two.
    """
    if summary.single_peak:
        raise ValueError("no atom level to decode against")
    cyc = trace.by_cycle()
    la = stats.poisson.logpmf(cyc, summary.atom_mean)
    lb = stats.poisson.logpmf(cyc, summary.background_mean)
    zeros = np.zeros((cyc.shape[0], 1))
    a = np.hstack([zeros, np.cumsum(la, axis=1)])
    b = np.hstack([zeros, np.cumsum(lb, axis=1)])
    ll = a + (b[:, -1:] - b)
    m = np.argmax(ll, axis=1)
    per_bin = np.arange(trace.bins_per_cycle)[None, :] < m[:, None]
    return Occupancy(per_bin.ravel(), m > 0, trace.bins_per_cycle)


# -------------------------------------------------------------- lifetimes


@dataclass(frozen=True)
class LifetimeEstimate:
    tau: float
    ci_low: float
    ci_high: float
    n_dwells: int
    n_censored: int
    lower_bound: bool = False

    def as_dict(self) -> dict:
        return {"tau_s": self.tau, "ci_low_s": self.ci_low, "ci_high_s": self.ci_high,
                "n_dwells": self.n_dwells, "n_censored": self.n_censored,
                "lower_bound": self.lower_bound}


def exponential_mle(durations, censored, confidence: float = 0.95) -> LifetimeEstimate:
    """Right-censored exponential MLE ``sum(d)/n_events`` with a Fisher CI.

    When every dwell is censored only a one-sided lower bound exists; it is
    returned with ``lower_bound=True`` and ``tau`` set to that bound.
    """
    d = np.asarray(durations, dtype=float)
    cens = np.asarray(censored, dtype=bool)
    events = int(np.sum(~cens))
    total = float(d.sum())
    if events == 0:
        bound = total / -np.log(1 - confidence)
        return LifetimeEstimate(bound, bound, np.inf, len(d), int(cens.sum()), True)
    tau = total / events
    z = stats.norm.ppf(0.5 + confidence / 2)
    half = z * tau / np.sqrt(events)
    return LifetimeEstimate(tau, max(tau - half, 0.0), tau + half, len(d), int(cens.sum()))


def extract_dwells(per_bin: np.ndarray, bins_per_cycle: int | None = None):
    """Runs of occupied bins within each probe window.

    Returns ``(start, length, censored)`` arrays; a run touching the end of
    its window is right-censored.
    """
    occ = np.asarray(per_bin, dtype=bool)
    if bins_per_cycle is None:
        bins_per_cycle = len(occ)
    grid = occ.reshape(-1, bins_per_cycle)
    padded = np.pad(grid.astype(np.int8), ((0, 0), (1, 1)))
    diff = np.diff(padded, axis=1)
    rows_s, cols_s = np.nonzero(diff == 1)
    rows_e, cols_e = np.nonzero(diff == -1)
    # np.nonzero is row-major, so starts and ends pair up in order
    start = rows_s * bins_per_cycle + cols_s
    length = cols_e - cols_s
    censored = cols_e == bins_per_cycle
    return start, length, censored


def binned_lifetime_mle(lengths, censored, bin_width: float,
                        confidence: float = 0.95) -> LifetimeEstimate:
    """Lifetime from run lengths of a binned exponential dwell.

    For loss time ``T ~ Exp(tau)`` and any fixed occupancy threshold, a run
    of ``n`` classified-occupied bins has ``n - 1`` geometric with per-bin
    survival ``q = exp(-bin/tau)``, so the MLE is
    ``q = S / (S + F)`` with ``S = sum(n - 1)`` survivals and ``F`` losses.
    Censored runs contribute survivals only.
    """
    n = np.asarray(lengths, dtype=float)
    cens = np.asarray(censored, dtype=bool)
    survivals = float(np.sum(n - 1))
    losses = int(np.sum(~cens))
    if losses == 0:
        bound = max(survivals, 1.0) * bin_width / -np.log(1 - confidence)
        return LifetimeEstimate(bound, bound, np.inf, len(n), int(cens.sum()), True)
    if survivals == 0:
        raise LifetimeError("every dwell ended within one bin; lifetime is below the bin width")
    q = survivals / (survivals + losses)
    tau = -bin_width / np.log(q)
    info = survivals / q**2 + losses / (1 - q) ** 2
    sd_tau = bin_width / (q * np.log(q) ** 2) / np.sqrt(info)
    z = stats.norm.ppf(0.5 + confidence / 2)
    return LifetimeEstimate(tau, max(tau - z * sd_tau, 0.0), tau + z * sd_tau, len(n), int(cens.sum()))


def dwell_time_lifetime(occupancy: Occupancy | np.ndarray, bin_width: float,
                        bins_per_cycle: int | None = None, min_dwells: int = 10) -> LifetimeEstimate:
    """Lifetime from occupied dwells in a classified trace.

    Runs are cut at probe-window boundaries; those reaching the end of a
    window are censored.  See :func:`binned_lifetime_mle`.
    """
    if isinstance(occupancy, Occupancy):
        per_bin, bins_per_cycle = occupancy.per_bin, occupancy.bins_per_cycle
    else:
        per_bin = np.asarray(occupancy, dtype=bool)
    _, length, censored = extract_dwells(per_bin, bins_per_cycle)
    if len(length) < min_dwells:
        raise LifetimeError(f"only {len(length)} dwells; need at least {min_dwells}")
    return binned_lifetime_mle(length, censored, bin_width)


def trace_lifetime(trace: TelegraphTrace, summary: HistogramSummary | None = None,
                   monotone: bool = True) -> LifetimeEstimate:
    """Histogram, classify and estimate the lifetime of one trace.

    ``monotone`` decodes each window with :func:`changepoint_occupancy`
    (valid when nothing loads during probing); otherwise bins are
    thresholded independently.
    """
    summary = summary or histogram(trace)
    if summary.single_peak:
        raise LifetimeError("no single-atom signal in the trace")
    if monotone:
        occ = changepoint_occupancy(trace, summary)
    else:
        occ = threshold_classify(trace, summary.threshold)
    return dwell_time_lifetime(occ, trace.bin_width)


@dataclass(frozen=True)
class DecayCurve:
    t: np.ndarray
    mean_counts: np.ndarray
    n_cycles: int

    def points(self) -> np.ndarray:
        return np.column_stack([self.t, self.mean_counts])


def average_decay(trace: TelegraphTrace, threshold: float | None = None,
                  keep_initially_occupied: bool = True, min_cycles: int = 100) -> DecayCurve:
    """Mean counts versus time-in-probe over cycles (bin centres)."""
    cyc = trace.by_cycle()
    if trace.n_cycles < min_cycles:
        raise ValueError(f"need at least {min_cycles} cycles, got {trace.n_cycles}")
    if keep_initially_occupied:
        if threshold is None:
            summary = histogram(trace)
            if summary.single_peak:
                raise ValueError("cannot select occupied cycles: no atom signal")
            threshold = summary.threshold
        cyc = cyc[cyc[:, 0] > threshold]
    t = (np.arange(trace.bins_per_cycle) + 0.5) * trace.bin_width
    mean = cyc.mean(axis=0) if len(cyc) else np.full(trace.bins_per_cycle, np.nan)
    return DecayCurve(t, mean, len(cyc))


def fit_decay(curve: DecayCurve) -> FitResult:
    return fit_exponential(curve.points())


def lifetime_count_consistency(tau: float, probe_window: float, atom_rate: float,
                               bin_width: float = DEFAULT_BIN) -> float:
    """Mean single-atom counts per bin when the atom may escape mid-probe.

    ``atom_rate * bin * (tau/T) * (1 - exp(-T/tau))``.
    """
    if not tau > 0:
        raise ValueError("lifetime must be positive")
    x = probe_window / tau
    # (1 - e^-x)/x, stable for small x
    factor = -np.expm1(-x) / x if x > 0 else 1.0
    return atom_rate * bin_width * factor


# --------------------------------------------------------- bias dependence


@dataclass(frozen=True)
class BiasLifetimeModel:
    """Phenomenological Gaussian peak of lifetime versus bias field."""

    tau_max: float
    tau_floor: float
    b_opt: float
    width: float

    def __post_init__(self):
        if not 0 < self.tau_floor <= self.tau_max:
            raise ValueError("need 0 < tau_floor <= tau_max")
        if not self.width > 0:
            raise ValueError("width must be positive")

    def __call__(self, b):
        g = np.exp(-0.5 * ((np.asarray(b, dtype=float) - self.b_opt) / self.width) ** 2)
        return self.tau_floor + (self.tau_max - self.tau_floor) * g


def gauss(value_g: float) -> float:
    return value_g / GAUSS_PER_TESLA


@dataclass(frozen=True)
class BiasSweep:
    bias: np.ndarray
    lifetimes: np.ndarray
    fit: FitResult

    @property
    def b_opt(self) -> float:
        return self.fit["b_opt"]


def simulate_bias_sweep(model: BiasLifetimeModel, bias_values: Sequence[float],
                        base: DynamicsParams = METALENS_PRESET, cycles: int = 400,
                        seed: int = 0, bin_width: float = DEFAULT_BIN, threads: int = 1,
                        index_offset: int = 0) -> BiasSweep:
    """Simulate a trace at each bias, estimate lifetimes, fit the peak."""
    bias = np.asarray(bias_values, dtype=float)

    def one(i):
        params = replace(base, lifetime=float(model(bias[i])))
        trace = simulate_trace(params, cycles, bin_width, seed, trace_index=index_offset + i)
        return trace_lifetime(trace).tau

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            taus = list(pool.map(one, range(len(bias))))
    else:
        taus = [one(i) for i in range(len(bias))]
    taus = np.array(taus)
    return BiasSweep(bias, taus, fit_bias_lifetime(np.column_stack([bias, taus])))
