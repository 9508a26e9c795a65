"""Monte-Carlo model of the HBT detection chain.

Per trigger: an emitted photon survives the collection mode and is routed
to one of two APDs (reflected configuration: one mode, 50/50 splitter;
symmetric: two independent modes), each detector adds Poissonian dark
counts inside the detection window, and every event is time-tagged on a
4 ps grid with the trigger itself on channel T.

Randomness is counter-based (Philox keyed by (master seed, purpose), with
the counter advanced to the trigger index), so every trigger owns its
substream: simulating any block partition in any order reproduces the
sequential stream bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import constants as C
from .errors import ConfigError
from .tags import CHANNEL_A, CHANNEL_B, CHANNEL_T, TagStream, WindowCounts
from .wavepacket import WavepacketDensity
from .witness import ClickProbs

_RES_PS = int(round(C.TIMETAG_RESOLUTION / 1e-12))   # tag grid, ps

# stream purposes
_EMIT, _FATE, _ARRIVAL, _MULTI, _FATE2, _ARRIVAL2, _DARK_N_A, _DARK_N_B = range(8)
_DARK_T_BASE = 16

REFLECTED = "reflected"
SYMMETRIC = "symmetric"


@dataclass(frozen=True)
class DetectorModel:
    """APD efficiency and dark rate. Dead time and afterpulsing fields are
    reserved hooks; only zero is accepted (not modeled)."""

    quantum_efficiency: float
    dark_rate: float = 0.0           # counts/s
    label: str = "A"
    dead_time: float = 0.0
    afterpulse_probability: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.quantum_efficiency <= 1.0:
            raise ConfigError("quantum efficiency must lie in [0, 1]")
        if self.dark_rate < 0.0:
            raise ConfigError("dark rate must be >= 0")
        if self.dead_time != 0.0 or self.afterpulse_probability != 0.0:
            raise ConfigError("dead time / afterpulsing are reserved but not modeled")


@dataclass(frozen=True)
class ExponentialArrival:
    """Analytic fallback arrival density: exponential decay, truncated to
    the detection window when sampling."""

    tau: float

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ConfigError("arrival time constant must be positive")


@dataclass(frozen=True)
class SourceModel:
    """Per-trigger emission statistics of the ion source.

    mode_efficiency is a single number in the reflected configuration and
    an (eta_1, eta_2) pair in the symmetric one. p_multi injects a second,
    independently routed photon (impurity model, at most two photons).
    """

    p_emit: float
    arrival: object                   # WavepacketDensity | ExponentialArrival
    mode_efficiency: object = 1.0
    p_multi: float = 0.0

    def __post_init__(self):
        for name, p in (("p_emit", self.p_emit), ("p_multi", self.p_multi)):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not isinstance(self.arrival, (WavepacketDensity, ExponentialArrival)):
            raise ConfigError("arrival must be a WavepacketDensity or ExponentialArrival")

    def efficiencies(self, configuration):
        if configuration == REFLECTED:
            if not np.isscalar(self.mode_efficiency):
                raise ConfigError("reflected configuration takes a single mode efficiency")
            eta = float(self.mode_efficiency)
            if not 0.0 <= eta <= 1.0:
                raise ConfigError("mode efficiency must lie in [0, 1]")
            return eta
        try:
            e1, e2 = (float(x) for x in self.mode_efficiency)
        except (TypeError, ValueError):
            raise ConfigError("symmetric configuration takes (eta_1, eta_2)") from None
        if not (0.0 <= e1 <= 1.0 and 0.0 <= e2 <= 1.0):
            raise ConfigError("mode efficiencies must lie in [0, 1]")
        return e1, e2


@dataclass(frozen=True)
class RunConfig:
    configuration: str
    trigger_period: float
    window: float
    n_triggers: int
    seed: int = 0

    def __post_init__(self):
        if self.configuration not in (REFLECTED, SYMMETRIC):
            raise ConfigError(f"unknown configuration {self.configuration!r}")
        if self.trigger_period <= 0.0 or self.window <= 0.0:
            raise ConfigError("trigger period and window must be positive")
        if self.window > self.trigger_period:
            raise ConfigError("detection window cannot exceed the trigger period")
        if self.n_triggers <= 0:
            raise ConfigError("n_triggers must be > 0")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")

    @property
    def period_ps(self):
        return (int(round(self.trigger_period / 1e-12)) // _RES_PS) * _RES_PS

    @property
    def window_ps(self):
        return (int(round(self.window / 1e-12)) // _RES_PS) * _RES_PS


def _uniforms(seed, purpose, start, count):
    """count uniforms from the (seed, purpose) Philox stream, offset to
    `start` draws (one uint64 word per draw, four words per counter)."""
    bg = np.random.Philox(key=[seed, purpose])
    bg = bg.advance(start // 4)
    skip = start % 4
    if count == 0:
        return np.empty(0)
    return np.random.Generator(bg).random(count + skip)[skip:]


def _detection_probs(source: SourceModel, det_a, det_b, configuration):
    """Per-photon probabilities of landing a click on A / B."""
    if configuration == REFLECTED:
        eta = source.efficiencies(REFLECTED)
        pa = 0.5 * eta * det_a.quantum_efficiency
        pb = 0.5 * eta * det_b.quantum_efficiency
    else:
        e1, e2 = source.efficiencies(SYMMETRIC)
        pa = e1 * det_a.quantum_efficiency
        pb = e2 * det_b.quantum_efficiency
    if pa + pb > 1.0 + 1e-12:
        raise ConfigError("mode efficiencies x quantum efficiencies exceed unity")
    return pa, pb


def _arrival_model(source: SourceModel, cfg: RunConfig):
    """(sampler, in_window) for the arrival density.

    sampler maps uniforms to arrival offsets [s]; in_window is the
    probability that a sampled arrival falls inside the detection window,
    computed from the same cumulative table the sampler uses. The
    exponential fallback is truncated to the window (in_window = 1).
    """
    if isinstance(source.arrival, ExponentialArrival):
        tau = source.arrival.tau
        span = 1.0 - math.exp(-cfg.window / tau)

        def sample(u):
            return -tau * np.log1p(-u * span)

        return sample, 1.0
    wp = source.arrival
    if wp.window > cfg.trigger_period:
        raise ConfigError("arrival density window exceeds the trigger period")
    cdf = np.concatenate([[0.0], np.cumsum(
        0.5 * (wp.density[1:] + wp.density[:-1]) * np.diff(wp.times))])
    if cdf[-1] <= 0.0:
        raise ConfigError("arrival density has zero weight")
    cdf /= cdf[-1]
    in_window = float(np.interp(cfg.window, wp.times, cdf,
                                right=1.0))

    def sample(u):
        return np.interp(u, cdf, wp.times)

    return sample, in_window


def _poisson_cdf_table(lam, q=1e-18):
    """Cumulative Poisson table long enough to make clipping negligible."""
    if lam == 0.0:
        return np.array([1.0])
    cap = 8
    while True:
        k = np.arange(cap + 1)
        logp = k * math.log(lam) - lam - np.array([math.lgamma(i + 1) for i in k])
        cdf = np.cumsum(np.exp(logp))
        if 1.0 - cdf[-1] < q or cap > 4096:
            return np.minimum(cdf, 1.0)
        cap *= 2


def _dark_timestamp(seed, purpose, index):
    """Random-access uniform for one dark event."""
    return _uniforms(seed, purpose, index, 1)[0]


def simulate_block(source, det_a, det_b, cfg, start, stop) -> TagStream:
    """Tag stream for triggers [start, stop); bit-identical to the same
    slice of the sequential run."""
    m = stop - start
    if m <= 0:
        return TagStream(np.empty(0, np.uint8), np.empty(0, np.uint64))
    seed = cfg.seed
    idx = np.arange(start, stop, dtype=np.uint64)
    trig_ps = idx * np.uint64(cfg.period_ps)

    pa, pb = _detection_probs(source, det_a, det_b, cfg.configuration)
    sample_arrival, _ = _arrival_model(source, cfg)

    chans = [np.full(m, CHANNEL_T, np.uint8)]
    times = [trig_ps]

    def photon_tags(emit_mask, fate_purpose, arrival_purpose):
        fate = _uniforms(seed, fate_purpose, start, m)
        to_a = emit_mask & (fate < pa)
        to_b = emit_mask & (fate >= pa) & (fate < pa + pb)
        hit = to_a | to_b
        if not np.any(hit):
            return
        arr = _uniforms(seed, arrival_purpose, start, m)
        dt = sample_arrival(arr[hit])
        dt_ps = (np.floor(dt / C.TIMETAG_RESOLUTION)).astype(np.uint64) * np.uint64(_RES_PS)
        times.append(trig_ps[hit] + dt_ps)
        chans.append(np.where(to_a[hit], CHANNEL_A, CHANNEL_B).astype(np.uint8))

    if source.p_emit > 0.0:
        if source.p_emit >= 1.0:
            emitted = np.ones(m, bool)
        else:
            emitted = _uniforms(seed, _EMIT, start, m) < source.p_emit
        photon_tags(emitted, _FATE, _ARRIVAL)
        if source.p_multi > 0.0:
            second = emitted & (_uniforms(seed, _MULTI, start, m) < source.p_multi)
            photon_tags(second, _FATE2, _ARRIVAL2)

    for det, n_purpose, t_purpose, channel in (
            (det_a, _DARK_N_A, _DARK_T_BASE, CHANNEL_A),
            (det_b, _DARK_N_B, _DARK_T_BASE + 4096, CHANNEL_B)):
        lam = det.dark_rate * cfg.window
        if lam <= 0.0:
            continue
        cdf = _poisson_cdf_table(lam)
        u = _uniforms(seed, n_purpose, start, m)
        counts = np.searchsorted(cdf, u, side="right")
        hot = np.nonzero(counts)[0]
        if hot.size == 0:
            continue
        dark_ch, dark_ts = [], []
        for j in hot:
            trigger = start + int(j)
            for slot in range(int(counts[j])):
                u_t = _dark_timestamp(seed, t_purpose + slot, trigger)
                off = int(u_t * cfg.window / C.TIMETAG_RESOLUTION) * _RES_PS
                dark_ts.append(trig_ps[j] + np.uint64(off))
                dark_ch.append(channel)
        times.append(np.array(dark_ts, np.uint64))
        chans.append(np.array(dark_ch, np.uint8))

    all_ch = np.concatenate(chans)
    all_ts = np.concatenate(times)
    order = np.lexsort((all_ch, all_ts))
    return TagStream(all_ch[order], all_ts[order])


def simulate_blocks(source, det_a, det_b, cfg, block_size=1 << 20):
    """Yield the run as consecutive TagStream blocks."""
    for a in range(0, cfg.n_triggers, block_size):
        yield simulate_block(source, det_a, det_b, cfg, a, min(a + block_size, cfg.n_triggers))


def simulate_run(source, det_a, det_b, cfg: RunConfig) -> TagStream:
    """Materialize the full tag stream of a run (memory ~ 9 bytes/trigger;
    use simulate_blocks for very long runs)."""
    return TagStream.concatenate(list(simulate_blocks(source, det_a, det_b, cfg)))


def analytic_click_probs(source, det_a, det_b, cfg: RunConfig) -> ClickProbs:
    """Exact per-window Ps (exclusive single) and Pc (coincidence) by
    enumerating photon fates x dark occupancies."""
    pa, pb = _detection_probs(source, det_a, det_b, cfg.configuration)
    _, in_window = _arrival_model(source, cfg)
    pa *= in_window
    pb *= in_window

    def fates(p_present):
        return {(0, 0): 1.0 - p_present * (pa + pb),
                (1, 0): p_present * pa,
                (0, 1): p_present * pb}

    f1 = fates(source.p_emit)
    f2 = fates(source.p_emit * source.p_multi)
    da = 1.0 - math.exp(-det_a.dark_rate * cfg.window)
    db = 1.0 - math.exp(-det_b.dark_rate * cfg.window)
    ps = pc = 0.0
    for (a1, b1), q1 in f1.items():
        for (a2, b2), q2 in f2.items():
            for xa, qa in ((0, 1.0 - da), (1, da)):
                for xb, qb in ((0, 1.0 - db), (1, db)):
                    p = q1 * q2 * qa * qb
                    click_a = (a1 + a2 + xa) > 0
                    click_b = (b1 + b2 + xb) > 0
                    if click_a and click_b:
                        pc += p
                    elif click_a or click_b:
                        ps += p
    return ClickProbs(ps=ps, pc=pc)


def sample_window_counts(source, det_a, det_b, cfg: RunConfig, rng=None) -> WindowCounts:
    """Multinomial draw of per-window outcome tallies from the analytic
    probabilities; the counts-level equivalent of a full simulate_run
    (per-window outcomes are iid categorical across triggers)."""
    probs = analytic_click_probs(source, det_a, det_b, cfg)
    rng = rng if rng is not None else np.random.Generator(np.random.Philox(key=[cfg.seed, 2 ** 32]))
    n_c, n_s, _ = rng.multinomial(
        cfg.n_triggers, [probs.pc, probs.ps, 1.0 - probs.pc - probs.ps])
    half = rng.binomial(n_s, 0.5)
    return WindowCounts(n_triggers=cfg.n_triggers, singles_a=int(half),
                        singles_b=int(n_s - half), coincidences=int(n_c),
                        counts_a=0, counts_b=0)
