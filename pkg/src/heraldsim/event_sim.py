"""Seeded time-tag Monte Carlo of the full herald-and-gate chain.

Per pulse p at t_p = p * rep_period the simulator draws a pair count from
the source family, thins the idler by the source-to-detector transmission,
assigns the survivors to uniform pixels, applies the per-event crosstalk
upgrade, and evaluates the herald selection on the click count.  An accepted
pulse emits a HeraldTrigger tag at t_p and opens the modulator over
[t_p + latency, t_p + latency + gate_length); overlapping gates merge.

Signal photons of pulse p reach the modulator after a fixed optical delay
(by default the smallest whole number of pulse periods >= latency, so the
heralded photons of a pulse meet their own gate just after it opens).  A
photon passes an open gate with probability 1 and a closed gate with the
extinction leakage 10**(-extinction_db / 10), then splits to the two HBT
detectors.  Detectors register at most one click per pulse per channel, at
the modulator-arrival time; dark counts are independent Poisson processes.

Determinism: every random draw happens in per-batch streams keyed by
(seed, batch index), and batches are fixed-size contiguous pulse ranges, so
identical configs produce bit-identical streams for any thread count.  Gate
state is resolved in a sequential stitching pass after all batches.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ParameterError
from .feedforward import HeraldSelection

DEFAULT_BATCH_SIZE = 1 << 20

#: Reserved sub-stream tag for the sequential gate-edge thinning pass; batch
#: indices must stay below this value.
_RAMP_STREAM_TAG = 1 << 48


class Channel(IntEnum):
    HERALD_TRIGGER = 0
    HBT_A = 1
    HBT_B = 2


CHANNEL_NAMES = {
    Channel.HERALD_TRIGGER: "herald_trigger",
    Channel.HBT_A: "hbt_a",
    Channel.HBT_B: "hbt_b",
}
CHANNELS_BY_NAME = {name: ch for ch, name in CHANNEL_NAMES.items()}


try:
    _popcount = np.bitwise_count
except AttributeError:  # numpy < 2.0
    def _popcount(x):
        x = np.asarray(x, dtype=np.uint64)
        out = np.zeros_like(x)
        while np.any(x):
            out += x & 1
            x >>= 1
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    """All physical and run parameters of the event simulation.

    Times are picosecond integers.  ``signal_delay=None`` resolves to the
    smallest multiple of the repetition period that is at least the
    feedforward latency, which keeps the tag streams pulse-aligned while
    letting heralded photons arrive inside their own gate.
    """

    mean_pairs_per_pulse: float
    n_pulses: int
    seed: int
    rep_period: int = 12_500
    source_family: str = "poissonian"
    idler_transmission: float = 0.7
    n_pixels: int = 4
    crosstalk: float = 0.025
    herald_selection: HeraldSelection = HeraldSelection.exactly(1)
    latency: int = 23_000
    gate_length: int = 80_000
    extinction_db: float = 10.2
    signal_transmission: float = 1.0
    hbt_splitting: float = 0.5
    hbt_efficiency: float = 1.0
    dark_rate: float = 100.0
    signal_delay: int | None = None
    retrigger: str = "extend"
    gate_rise_time: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.mean_pairs_per_pulse) and self.mean_pairs_per_pulse >= 0):
            raise ParameterError("mean_pairs_per_pulse must be finite and >= 0")
        if self.n_pulses < 0:
            raise ParameterError("n_pulses must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be an unsigned 64-bit integer")
        if self.rep_period <= 0:
            raise ParameterError("rep_period must be > 0")
        if self.source_family not in ("poissonian", "thermal"):
            raise ParameterError(f"unknown source family {self.source_family!r}")
        for name in ("idler_transmission", "signal_transmission", "hbt_splitting", "hbt_efficiency"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {value!r}")
        if not 1 <= self.n_pixels <= 16:
            raise ParameterError("n_pixels must lie in 1..16")
        if not 0.0 <= self.crosstalk < 1.0:
            raise ParameterError(f"crosstalk must lie in [0, 1), got {self.crosstalk!r}")
        if max(self.herald_selection.accepted_clicks) > self.n_pixels:
            raise ParameterError("herald selection exceeds the pixel count")
        if self.latency < 0 or self.gate_length < 0 or self.gate_rise_time < 0:
            raise ParameterError("latency, gate_length and gate_rise_time must be >= 0")
        if self.extinction_db < 0:
            raise ParameterError("extinction_db must be >= 0")
        if self.dark_rate < 0:
            raise ParameterError("dark_rate must be >= 0")
        if self.retrigger not in ("extend", "ignore"):
            raise ParameterError(f"retrigger must be 'extend' or 'ignore', got {self.retrigger!r}")
        if self.signal_delay is not None and self.signal_delay < 0:
            raise ParameterError("signal_delay must be >= 0")

    @property
    def leakage(self) -> float:
        """Closed-gate intensity transmission, 10**(-extinction_db / 10)."""
        if math.isinf(self.extinction_db):
            return 0.0
        return 10.0 ** (-self.extinction_db / 10.0)

    @property
    def resolved_signal_delay(self) -> int:
        if self.signal_delay is not None:
            return self.signal_delay
        return ((self.latency + self.rep_period - 1) // self.rep_period) * self.rep_period

    @property
    def duration(self) -> int:
        return self.n_pulses * self.rep_period


@dataclass(frozen=True, eq=False)
class TagStream:
    """Finalized per-channel time-tag arrays (int64 ps, sorted)."""

    channels: dict
    duration: int

    def times(self, channel: Channel) -> np.ndarray:
        return self.channels[channel]

    def counts(self) -> dict:
        return {ch: int(arr.size) for ch, arr in self.channels.items()}

    @property
    def duration_seconds(self) -> float:
        return self.duration * 1e-12


@dataclass(frozen=True)
class RunSummary:
    """Aggregate counters of one simulation run."""

    n_pulses: int
    seed: int
    duration: int
    channel_counts: dict
    click_counts: np.ndarray  # pulses per idler click outcome 0..n_pixels
    heralds_accepted: int     # pulses whose click outcome is in the selection
    heralds_emitted: int      # trigger tags after the retrigger policy
    config: ExperimentConfig

    def as_text(self) -> str:
        lines = ["[run]"]
        lines.append(f"pulses = {self.n_pulses}")
        lines.append(f"seed = {self.seed}")
        lines.append(f"duration_ps = {self.duration}")
        lines.append(f"heralds_accepted = {self.heralds_accepted}")
        lines.append(f"heralds_emitted = {self.heralds_emitted}")
        lines.append("")
        lines.append("[counts]")
        for ch in Channel:
            lines.append(f"{CHANNEL_NAMES[ch]} = {self.channel_counts[ch]}")
        lines.append("")
        lines.append("[clicks]")
        for k, count in enumerate(self.click_counts):
            lines.append(f"k{k} = {int(count)}")
        lines.append("")
        lines.append("[config]")
        cfg = self.config
        lines.append(f"mean_pairs_per_pulse = {cfg.mean_pairs_per_pulse!r}")
        lines.append(f"source_family = {cfg.source_family}")
        lines.append(f"rep_period = {cfg.rep_period}")
        lines.append(f"idler_transmission = {cfg.idler_transmission!r}")
        lines.append(f"n_pixels = {cfg.n_pixels}")
        lines.append(f"crosstalk = {cfg.crosstalk!r}")
        lines.append(f"herald_selection = {cfg.herald_selection.label}")
        lines.append(f"latency = {cfg.latency}")
        lines.append(f"gate_length = {cfg.gate_length}")
        lines.append(f"extinction_db = {cfg.extinction_db!r}")
        lines.append(f"signal_transmission = {cfg.signal_transmission!r}")
        lines.append(f"hbt_splitting = {cfg.hbt_splitting!r}")
        lines.append(f"hbt_efficiency = {cfg.hbt_efficiency!r}")
        lines.append(f"dark_rate = {cfg.dark_rate!r}")
        lines.append(f"signal_delay = {cfg.resolved_signal_delay}")
        lines.append(f"retrigger = {cfg.retrigger}")
        lines.append(f"gate_rise_time = {cfg.gate_rise_time}")
        return "\n".join(lines) + "\n"


def modulator_transmission(voltage, v_pi: float, visibility: float = 1.0, bias_phase: float = 0.0):
    """Interferometric transfer T(V), rescaled so the matched maximum is 1.

    T(V) = (1 - visibility * cos(pi V / v_pi + bias_phase)) / (1 + visibility);
    the min/max ratio is (1 - visibility) / (1 + visibility).
    """
    if not 0.0 <= visibility <= 1.0:
        raise ParameterError(f"visibility must lie in [0, 1], got {visibility!r}")
    if v_pi <= 0:
        raise ParameterError(f"v_pi must be > 0, got {v_pi!r}")
    phase = np.pi * np.asarray(voltage, dtype=float) / v_pi + bias_phase
    return (1.0 - visibility * np.cos(phase)) / (1.0 + visibility)


def extinction_to_visibility(extinction_db: float) -> float:
    """Interferometer visibility whose min/max ratio equals the given extinction."""
    if extinction_db < 0:
        raise ParameterError("extinction_db must be >= 0")
    r = 10.0 ** (-extinction_db / 10.0)
    return (1.0 - r) / (1.0 + r)


def merged_gate_intervals(herald_times, latency: int, gate_length: int):
    """Union of [h + latency, h + latency + gate_length) as merged (starts, ends)."""
    h = np.asarray(herald_times, dtype=np.int64)
    if h.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    if np.any(np.diff(h) < 0):
        raise ParameterError("herald times must be sorted ascending")
    starts = h + latency
    ends = starts + gate_length
    run_end = np.maximum.accumulate(ends)
    new_interval = np.empty(h.size, dtype=bool)
    new_interval[0] = True
    new_interval[1:] = starts[1:] > run_end[:-1]
    seg_first = np.nonzero(new_interval)[0]
    seg_last = np.append(seg_first[1:], h.size) - 1
    return starts[seg_first], run_end[seg_last]


def _open_mask(times: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    if starts.size == 0:
        return np.zeros(times.shape, dtype=bool)
    pos = np.searchsorted(starts, times, side="right") - 1
    inside = pos >= 0
    inside[inside] = times[inside] < ends[pos[inside]]
    return inside


def gate_state(t: int, herald_times, config: ExperimentConfig) -> str:
    """'open' iff some herald h satisfies h + latency <= t < h + latency + gate_length."""
    starts, ends = merged_gate_intervals(herald_times, config.latency, config.gate_length)
    return "open" if bool(_open_mask(np.asarray([t], dtype=np.int64), starts, ends)[0]) else "closed"


def _retrigger_filter(herald_times: np.ndarray, latency: int, gate_length: int) -> np.ndarray:
    """Drop heralds that arrive while a previously accepted gate is open."""
    kept = np.empty(herald_times.size, dtype=bool)
    starts: list = []
    ends: list = []
    p = 0
    run_max_end = -1
    for i, h in enumerate(herald_times):
        while p < len(starts) and starts[p] <= h:
            run_max_end = max(run_max_end, ends[p])
            p += 1
        accept = h >= run_max_end
        kept[i] = accept
        if accept:
            starts.append(h + latency)
            ends.append(h + latency + gate_length)
    return herald_times[kept]


def _sample_pair_counts(rng: np.random.Generator, config: ExperimentConfig, size: int) -> np.ndarray:
    mu = config.mean_pairs_per_pulse
    if mu == 0.0:
        return np.zeros(size, dtype=np.int64)
    if config.source_family == "poissonian":
        return rng.poisson(mu, size)
    return rng.geometric(1.0 / (1.0 + mu), size) - 1


def _simulate_batch(config: ExperimentConfig, batch_index: int, start: int, size: int):
    """All random draws for pulses [start, start + size); no gate logic here."""
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, batch_index)))
    n_pix = config.n_pixels
    n = _sample_pair_counts(rng, config, size)
    occ = np.nonzero(n)[0]
    nn = n[occ]

    # idler arm: loss, pixel assignment, crosstalk upgrade
    surviving = rng.binomial(nn, config.idler_transmission)
    clicks = np.zeros(nn.size, dtype=np.int64)
    for count in np.unique(surviving):
        if count == 0:
            continue
        rows = np.nonzero(surviving == count)[0]
        pixels = rng.integers(0, n_pix, size=(rows.size, int(count)))
        masks = np.bitwise_or.reduce(1 << pixels, axis=1)
        clicks[rows] = _popcount(masks)
    upgrade = rng.random(nn.size)
    clicks += ((clicks >= 1) & (clicks <= n_pix - 1) & (upgrade < config.crosstalk)).astype(np.int64)

    click_hist = np.bincount(clicks, minlength=n_pix + 1)
    click_hist[0] += size - occ.size

    accept = np.zeros(n_pix + 1, dtype=bool)
    accept[list(config.herald_selection.accepted_clicks)] = True
    herald_occ = occ[accept[clicks]]
    if accept[0]:
        empty = np.setdiff1d(np.arange(size, dtype=np.int64), occ, assume_unique=True)
        herald_occ = np.sort(np.concatenate([herald_occ, empty]))
    herald_pulse = start + herald_occ.astype(np.int64)

    # signal arm, drawn for both gate outcomes; the stitch pass picks one
    q_a = config.signal_transmission * config.hbt_efficiency * config.hbt_splitting
    q_b = config.signal_transmission * config.hbt_efficiency * (1.0 - config.hbt_splitting)
    a_open = rng.binomial(nn, q_a)
    remaining = nn - a_open
    # sequential multinomial split; the min() guards float round-up past 1
    ratio = 0.0 if q_a >= 1.0 else min(1.0, q_b / (1.0 - q_a))
    b_open = rng.binomial(remaining, ratio)
    leak = config.leakage
    a_closed = rng.binomial(a_open, leak)
    b_closed = rng.binomial(b_open, leak)
    keep = (a_open + b_open) > 0
    cand_pulse = (start + occ[keep]).astype(np.int64)

    # dark counts over this batch's time span
    span = size * config.rep_period
    t0 = start * config.rep_period
    lam = config.dark_rate * span * 1e-12
    dark_a = t0 + rng.integers(0, span, rng.poisson(lam), dtype=np.int64)
    dark_b = t0 + rng.integers(0, span, rng.poisson(lam), dtype=np.int64)

    return (
        herald_pulse,
        cand_pulse,
        a_open[keep],
        a_closed[keep],
        b_open[keep],
        b_closed[keep],
        click_hist,
        dark_a,
        dark_b,
    )


def run(config: ExperimentConfig, threads: int = 1, batch_size: int = DEFAULT_BATCH_SIZE):
    """Simulate the configured run.

    Returns:
        (TagStream, RunSummary).  Output is bit-identical for any ``threads``
        value; see the module docstring for the determinism contract.
    """
    if batch_size <= 0:
        raise ParameterError("batch_size must be > 0")
    if threads < 1:
        raise ParameterError("threads must be >= 1")
    delay = config.resolved_signal_delay
    horizon = config.duration + delay + config.latency + config.gate_length
    if horizon >= 2**63:
        raise ParameterError("timestamp range overflows 64-bit picoseconds; reduce n_pulses")
    n_batches = (config.n_pulses + batch_size - 1) // batch_size
    if n_batches >= _RAMP_STREAM_TAG:
        raise ParameterError("too many batches")

    jobs = [
        (i, i * batch_size, min(batch_size, config.n_pulses - i * batch_size))
        for i in range(n_batches)
    ]
    if threads == 1 or n_batches <= 1:
        results = [_simulate_batch(config, *job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda job: _simulate_batch(config, *job), jobs))

    empty = np.empty(0, dtype=np.int64)
    herald_pulse = np.concatenate([r[0] for r in results]) if results else empty
    cand_pulse = np.concatenate([r[1] for r in results]) if results else empty
    a_open = np.concatenate([r[2] for r in results]) if results else empty
    a_closed = np.concatenate([r[3] for r in results]) if results else empty
    b_open = np.concatenate([r[4] for r in results]) if results else empty
    b_closed = np.concatenate([r[5] for r in results]) if results else empty
    click_counts = (
        np.sum([r[6] for r in results], axis=0)
        if results
        else np.zeros(config.n_pixels + 1, dtype=np.int64)
    )
    dark_a = np.concatenate([r[7] for r in results]) if results else empty
    dark_b = np.concatenate([r[8] for r in results]) if results else empty

    heralds_accepted = herald_pulse.size
    herald_times = herald_pulse * config.rep_period
    if config.retrigger == "ignore":
        herald_times = _retrigger_filter(herald_times, config.latency, config.gate_length)

    starts, ends = merged_gate_intervals(herald_times, config.latency, config.gate_length)
    arrivals = cand_pulse * config.rep_period + delay
    open_gate = _open_mask(arrivals, starts, ends)
    a = np.where(open_gate, a_open, a_closed)
    b = np.where(open_gate, b_open, b_closed)

    if config.gate_rise_time > 0 and starts.size:
        # linear voltage ramp at the first opening edge of each merged gate
        rng_ramp = np.random.default_rng(np.random.SeedSequence((config.seed, _RAMP_STREAM_TAG)))
        pos = np.searchsorted(starts, arrivals, side="right") - 1
        factor = np.ones(arrivals.size)
        idx = np.nonzero(open_gate)[0]
        factor[idx] = np.clip((arrivals[idx] - starts[pos[idx]]) / config.gate_rise_time, 0.0, 1.0)
        partial = factor < 1.0
        if np.any(partial):
            a = a.copy()
            b = b.copy()
            a[partial] = rng_ramp.binomial(a[partial], factor[partial])
            b[partial] = rng_ramp.binomial(b[partial], factor[partial])

    hbt_a = np.sort(np.concatenate([arrivals[a > 0], dark_a]))
    hbt_b = np.sort(np.concatenate([arrivals[b > 0], dark_b]))

    stream = TagStream(
        channels={
            Channel.HERALD_TRIGGER: herald_times,
            Channel.HBT_A: hbt_a,
            Channel.HBT_B: hbt_b,
        },
        duration=config.duration,
    )
    summary = RunSummary(
        n_pulses=config.n_pulses,
        seed=config.seed,
        duration=config.duration,
        channel_counts=stream.counts(),
        click_counts=click_counts,
        heralds_accepted=int(heralds_accepted),
        heralds_emitted=int(herald_times.size),
        config=config,
    )
    return stream, summary


def benchmark(config: ExperimentConfig, threads: int = 1, batch_size: int = DEFAULT_BATCH_SIZE) -> float:
    """Wall-clock throughput of run() in pulses per second."""
    t0 = time.perf_counter()
    run(config, threads=threads, batch_size=batch_size)
    elapsed = time.perf_counter() - t0
    return config.n_pulses / elapsed
