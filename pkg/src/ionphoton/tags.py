"""Time-tag streams: TTAG binary format, gated g2 histograms, per-window
click statistics, and dark-count-corrected purity bounds.

TTAG layout (little endian):
    header : magic "TTAG" | u16 version=1 | u16 reserved | u64 record count
    record : u64 timestamp [ps] | u8 channel (0=A, 1=B, 2=T) | 7 pad bytes

Records are 16 bytes, timestamps monotone non-decreasing. A CSV
alternative with columns channel,timestamp_ps is accepted as well.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import constants as C
from .errors import ConfigError, DataFormatError, TagIntegrityError
from .stats import clopper_pearson, poisson_upper_limit

MAGIC = b"TTAG"
VERSION = 1
HEADER = struct.Struct("<4sHHQ")
RECORD_DTYPE = np.dtype([("timestamp", "<u8"), ("channel", "u1"), ("pad", "V7")])

CHANNEL_A, CHANNEL_B, CHANNEL_T = 0, 1, 2
_CHANNEL_NAMES = {CHANNEL_A: "A", CHANNEL_B: "B", CHANNEL_T: "T"}
_CHANNEL_CODES = {v: k for k, v in _CHANNEL_NAMES.items()}


@dataclass(frozen=True)
class TagStream:
    """Ordered detector/trigger events: parallel channel and picosecond
    timestamp arrays."""

    channels: np.ndarray      # uint8
    timestamps_ps: np.ndarray  # uint64

    def __post_init__(self):
        ch = np.ascontiguousarray(self.channels, dtype=np.uint8)
        ts = np.ascontiguousarray(self.timestamps_ps, dtype=np.uint64)
        if ch.shape != ts.shape or ch.ndim != 1:
            raise ConfigError("channels and timestamps must be matching 1-D arrays")
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "timestamps_ps", ts)

    def __len__(self):
        return len(self.channels)

    def validate(self):
        if np.any(self.channels > CHANNEL_T):
            bad = int(np.argmax(self.channels > CHANNEL_T))
            raise TagIntegrityError(f"invalid channel code at record {bad}", offset=bad)
        if len(self) > 1 and np.any(np.diff(self.timestamps_ps.astype(np.int64)) < 0):
            bad = int(np.argmax(np.diff(self.timestamps_ps.astype(np.int64)) < 0))
            raise TagIntegrityError(f"timestamps decrease at record {bad + 1}", offset=bad + 1)
        return self

    def channel_times(self, code):
        return self.timestamps_ps[self.channels == code]

    @staticmethod
    def concatenate(blocks):
        blocks = [b for b in blocks if len(b)]
        if not blocks:
            return TagStream(np.empty(0, np.uint8), np.empty(0, np.uint64))
        return TagStream(np.concatenate([b.channels for b in blocks]),
                         np.concatenate([b.timestamps_ps for b in blocks]))


# ----------------------------------------------------------------------
# TTAG binary I/O
# ----------------------------------------------------------------------

def tags_to_bytes(stream: TagStream) -> bytes:
    rec = np.zeros(len(stream), dtype=RECORD_DTYPE)
    rec["timestamp"] = stream.timestamps_ps
    rec["channel"] = stream.channels
    return HEADER.pack(MAGIC, VERSION, 0, len(stream)) + rec.tobytes()


def parse_tags(data) -> TagStream:
    """Parse a TTAG byte stream; structured errors on any malformation."""
    if isinstance(data, (bytearray, memoryview)):
        data = bytes(data)
    if not isinstance(data, bytes):
        raise DataFormatError(f"expected bytes, got {type(data).__name__}")
    if len(data) < HEADER.size:
        raise DataFormatError(f"truncated header: {len(data)} bytes")
    magic, version, _reserved, count = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DataFormatError(f"unsupported version {version}")
    body = len(data) - HEADER.size
    if body != count * RECORD_DTYPE.itemsize:
        raise DataFormatError(
            f"record section is {body} bytes, expected {count * RECORD_DTYPE.itemsize}")
    rec = np.frombuffer(data, dtype=RECORD_DTYPE, offset=HEADER.size)
    stream = TagStream(rec["channel"].copy(), rec["timestamp"].copy())
    return stream.validate()


def read_tags(path) -> TagStream:
    path = str(path)
    if path.endswith(".csv"):
        return read_tags_csv(path)
    with open(path, "rb") as fh:
        return parse_tags(fh.read())


def write_tags(path, stream: TagStream, metadata=None):
    with open(path, "wb") as fh:
        fh.write(tags_to_bytes(stream))
    if metadata is not None:
        write_sidecar(path, metadata)


def write_sidecar(path, metadata):
    with open(str(path) + ".meta.json", "w") as fh:
        json.dump(metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")


class TtagWriter:
    """Streaming TTAG writer; patches the record count on close."""

    def __init__(self, path):
        self._fh = open(path, "wb")
        self._count = 0
        self._fh.write(HEADER.pack(MAGIC, VERSION, 0, 0))

    def append(self, stream: TagStream):
        rec = np.zeros(len(stream), dtype=RECORD_DTYPE)
        rec["timestamp"] = stream.timestamps_ps
        rec["channel"] = stream.channels
        self._fh.write(rec.tobytes())
        self._count += len(stream)

    def close(self):
        self._fh.seek(0)
        self._fh.write(HEADER.pack(MAGIC, VERSION, 0, self._count))
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_tags_csv(path) -> TagStream:
    chans, times = [], []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if ln == 1 and parts[0].strip().lower() == "channel":
                continue
            if len(parts) != 2:
                raise DataFormatError(f"line {ln}: expected 'channel,timestamp_ps'")
            name = parts[0].strip().upper()
            if name not in _CHANNEL_CODES:
                raise DataFormatError(f"line {ln}: unknown channel {parts[0]!r}")
            try:
                t = int(parts[1])
            except ValueError:
                raise DataFormatError(f"line {ln}: bad timestamp {parts[1]!r}") from None
            if t < 0:
                raise DataFormatError(f"line {ln}: negative timestamp")
            chans.append(_CHANNEL_CODES[name])
            times.append(t)
    stream = TagStream(np.array(chans, np.uint8), np.array(times, np.uint64))
    return stream.validate()


def write_tags_csv(path, stream: TagStream):
    with open(path, "w") as fh:
        fh.write("channel,timestamp_ps\n")
        for c, t in zip(stream.channels, stream.timestamps_ps):
            fh.write(f"{_CHANNEL_NAMES[int(c)]},{int(t)}\n")


# ----------------------------------------------------------------------
# Window statistics
# ----------------------------------------------------------------------

def _to_ps(seconds):
    return int(round(seconds / C.TIMETAG_RESOLUTION)) * int(C.TIMETAG_RESOLUTION / 1e-12)


@dataclass(frozen=True)
class WindowCounts:
    """Raw per-window classification tallies (mergeable across blocks)."""

    n_triggers: int = 0
    singles_a: int = 0          # windows with A clicks only
    singles_b: int = 0          # windows with B clicks only
    coincidences: int = 0       # windows with clicks on both
    counts_a: int = 0           # gated tag totals per channel
    counts_b: int = 0

    def __add__(self, other):
        return WindowCounts(*(getattr(self, f) + getattr(other, f)
                              for f in ("n_triggers", "singles_a", "singles_b",
                                        "coincidences", "counts_a", "counts_b")))

    @property
    def exclusive_singles(self):
        return self.singles_a + self.singles_b


def classify_windows(stream: TagStream, window: float) -> WindowCounts:
    """Classify each trigger window as empty / exclusive single / coincidence."""
    trig = stream.channel_times(CHANNEL_T)
    if trig.size == 0:
        raise ConfigError("stream contains no trigger events")
    w_ps = np.uint64(_to_ps(window))
    out = []
    for code in (CHANNEL_A, CHANNEL_B):
        t = stream.channel_times(code)
        lo = np.searchsorted(t, trig, side="left")
        hi = np.searchsorted(t, trig + w_ps, side="left")
        out.append(hi - lo)
    ca, cb = out
    a_any, b_any = ca > 0, cb > 0
    return WindowCounts(
        n_triggers=int(trig.size),
        singles_a=int(np.sum(a_any & ~b_any)),
        singles_b=int(np.sum(b_any & ~a_any)),
        coincidences=int(np.sum(a_any & b_any)),
        counts_a=int(ca.sum()),
        counts_b=int(cb.sum()),
    )


@dataclass(frozen=True)
class ClickStatistics:
    """Per-trigger-window click probabilities with exact 95% intervals.

    alpha = Pc/Ps^2 and the pulsed g2(0) = Nc*NT/(NA*NB) are both
    reported; they coincide only at low flux. Ratios are None when the
    denominator counts vanish.
    """

    n_triggers: int
    window: float
    singles_a: int
    singles_b: int
    coincidences: int
    counts_a: int
    counts_b: int
    ps: float
    pc: float
    ps_ci95: tuple
    pc_ci95: tuple
    alpha: float | None
    alpha_ci95: tuple | None
    g2_zero: float | None
    g2_zero_ci95: tuple | None

    @property
    def exclusive_singles(self):
        return self.singles_a + self.singles_b

    def to_dict(self):
        return {
            "n_triggers": self.n_triggers,
            "window_s": self.window,
            "singles_a": self.singles_a,
            "singles_b": self.singles_b,
            "exclusive_singles": self.exclusive_singles,
            "coincidences": self.coincidences,
            "counts_a": self.counts_a,
            "counts_b": self.counts_b,
            "ps": self.ps,
            "pc": self.pc,
            "ps_ci95": list(self.ps_ci95),
            "pc_ci95": list(self.pc_ci95),
            "alpha": self.alpha,
            "alpha_ci95": list(self.alpha_ci95) if self.alpha_ci95 else None,
            "g2_zero": self.g2_zero,
            "g2_zero_ci95": list(self.g2_zero_ci95) if self.g2_zero_ci95 else None,
        }

    @staticmethod
    def from_dict(d):
        return ClickStatistics(
            n_triggers=d["n_triggers"], window=d["window_s"],
            singles_a=d["singles_a"], singles_b=d["singles_b"],
            coincidences=d["coincidences"], counts_a=d["counts_a"],
            counts_b=d["counts_b"], ps=d["ps"], pc=d["pc"],
            ps_ci95=tuple(d["ps_ci95"]), pc_ci95=tuple(d["pc_ci95"]),
            alpha=d["alpha"],
            alpha_ci95=tuple(d["alpha_ci95"]) if d.get("alpha_ci95") else None,
            g2_zero=d["g2_zero"],
            g2_zero_ci95=tuple(d["g2_zero_ci95"]) if d.get("g2_zero_ci95") else None)

    def summary(self) -> str:
        a = "undefined" if self.alpha is None else f"{self.alpha:.6e}"
        g = "undefined" if self.g2_zero is None else f"{self.g2_zero:.6e}"
        return "\n".join([
            f"triggers       : {self.n_triggers}",
            f"window         : {self.window:.3e} s",
            f"singles A/B    : {self.singles_a} / {self.singles_b}",
            f"coincidences   : {self.coincidences}",
            f"Ps             : {self.ps:.6e} (95% CI {self.ps_ci95[0]:.3e}..{self.ps_ci95[1]:.3e})",
            f"Pc             : {self.pc:.6e} (95% CI {self.pc_ci95[0]:.3e}..{self.pc_ci95[1]:.3e})",
            f"alpha = Pc/Ps^2: {a}",
            f"pulsed g2(0)   : {g}",
        ])


def statistics_from_counts(counts: WindowCounts, window: float) -> ClickStatistics:
    n = counts.n_triggers
    if n <= 0:
        raise ConfigError("no trigger windows")
    ns, nc = counts.exclusive_singles, counts.coincidences
    ps, pc = ns / n, nc / n
    ps_ci = clopper_pearson(ns, n)
    pc_ci = clopper_pearson(nc, n)
    alpha = alpha_ci = None
    if ns > 0:
        alpha = pc / ps ** 2
        alpha_ci = (pc_ci[0] / ps_ci[1] ** 2,
                    (pc_ci[1] / ps_ci[0] ** 2) if ps_ci[0] > 0 else math.inf)
    g2 = g2_ci = None
    if counts.counts_a > 0 and counts.counts_b > 0:
        norm = n / (counts.counts_a * counts.counts_b)
        g2 = nc * norm
        g2_ci = (n * pc_ci[0] * norm, n * pc_ci[1] * norm)
    return ClickStatistics(
        n_triggers=n, window=window, singles_a=counts.singles_a,
        singles_b=counts.singles_b, coincidences=nc,
        counts_a=counts.counts_a, counts_b=counts.counts_b,
        ps=ps, pc=pc, ps_ci95=ps_ci, pc_ci95=pc_ci,
        alpha=alpha, alpha_ci95=alpha_ci, g2_zero=g2, g2_zero_ci95=g2_ci)


def window_statistics(stream: TagStream, window: float) -> ClickStatistics:
    """Classify per-trigger windows and estimate Ps, Pc, alpha, g2(0)."""
    return statistics_from_counts(classify_windows(stream, window), window)


# ----------------------------------------------------------------------
# g2 histogram
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class G2Histogram:
    """Histogram of all A-B pair delays (t_B - t_A) within a tau range."""

    bin_edges: np.ndarray    # seconds, len = nbins+1
    counts: np.ndarray       # int64

    @property
    def bin_centers(self):
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def total_pairs(self):
        return int(self.counts.sum())


def _gate_times(times, trig, w_ps):
    """Keep only tags inside some trigger window."""
    idx = np.searchsorted(trig, times, side="right") - 1
    ok = idx >= 0
    ok[ok] = (times[ok] - trig[idx[ok]]) < w_ps
    return times[ok]


def g2_histogram(stream: TagStream, tau_min: float, tau_max: float,
                 bin_width: float, gating_window: float | None = None) -> G2Histogram:
    """Count all A-B pair delays in [tau_min, tau_max).

    All pairs are formed, not just nearest neighbours (standard at low
    count rate). With gating_window given, only tags inside per-trigger
    windows of that length participate (removes cooling-period light).
    """
    if bin_width <= 0:
        raise ConfigError("bin width must be positive")
    if tau_max <= tau_min:
        raise ConfigError("need tau_max > tau_min")
    a = stream.channel_times(CHANNEL_A).astype(np.int64)
    b = stream.channel_times(CHANNEL_B).astype(np.int64)
    if gating_window is not None:
        trig = stream.channel_times(CHANNEL_T).astype(np.int64)
        if trig.size == 0:
            raise ConfigError("gating requested but stream has no triggers")
        w_ps = _to_ps(gating_window)
        a = _gate_times(a, trig, w_ps)
        b = _gate_times(b, trig, w_ps)
    nbins = int(math.ceil((tau_max - tau_min) / bin_width))
    edges = tau_min + bin_width * np.arange(nbins + 1)
    if a.size == 0 or b.size == 0:
        return G2Histogram(bin_edges=edges, counts=np.zeros(nbins, np.int64))
    lo_ps = int(math.floor(tau_min / 1e-12))
    hi_ps = int(math.ceil(tau_max / 1e-12))
    lo = np.searchsorted(b, a + lo_ps, side="left")
    hi = np.searchsorted(b, a + hi_ps, side="left")
    counts = hi - lo
    total = int(counts.sum())
    if total == 0:
        return G2Histogram(bin_edges=edges, counts=np.zeros(nbins, np.int64))
    # expand [lo_i, hi_i) ranges into one flat index array
    starts = np.repeat(lo - np.concatenate([[0], counts.cumsum()[:-1]]), counts)
    flat = starts + np.arange(total)
    delays = (b[flat] - np.repeat(a, counts)) * 1e-12
    hist, _ = np.histogram(delays, bins=edges)
    return G2Histogram(bin_edges=edges, counts=hist.astype(np.int64))


# ----------------------------------------------------------------------
# Dark-count-corrected purity bound
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DarkCorrectedAlpha:
    """One-sided 95% upper bound on the source's intrinsic alpha."""

    alpha_upper: float
    expected_accidentals: float
    observed_coincidences: int
    residual_upper_counts: float

    def summary(self):
        return (f"expected accidental coincidences: {self.expected_accidentals:.3f}\n"
                f"observed coincidences           : {self.observed_coincidences}\n"
                f"95% upper bound residual counts : {self.residual_upper_counts:.3f}\n"
                f"95% upper bound intrinsic alpha : {self.alpha_upper:.3e}")


def dark_corrected_alpha(stats: ClickStatistics, dark_rate_a: float,
                         dark_rate_b: float | None = None,
                         rate_uncertainty: float = 0.0,
                         level: float = 0.95) -> DarkCorrectedAlpha:
    """Bound the intrinsic alpha after subtracting dark-count accidentals.

    The accidental expectation combines dark x signal and dark x dark
    terms computed from the measured per-channel window occupancies and
    the Poisson dark model. A one-sided Poisson upper limit on the
    residual coincidence count is propagated to alpha = Pc/Ps^2. A dark
    rate uncertainty enters conservatively (less subtraction).
    """
    if dark_rate_a < 0 or (dark_rate_b is not None and dark_rate_b < 0):
        raise ConfigError("dark rates must be >= 0")
    if dark_rate_b is None:
        dark_rate_b = dark_rate_a
    z = 1.6448536269514722
    ra = max(dark_rate_a - z * rate_uncertainty, 0.0)
    rb = max(dark_rate_b - z * rate_uncertainty, 0.0)
    la, lb = ra * stats.window, rb * stats.window
    da, db = 1.0 - math.exp(-la), 1.0 - math.exp(-lb)
    n = stats.n_triggers
    pa_obs = (stats.singles_a + stats.coincidences) / n
    pb_obs = (stats.singles_b + stats.coincidences) / n
    pa_sig = max((pa_obs - da) / (1.0 - da), 0.0) if da < 1.0 else 0.0
    pb_sig = max((pb_obs - db) / (1.0 - db), 0.0) if db < 1.0 else 0.0
    accidentals = n * (pa_sig * db + pb_sig * da + da * db)
    residual = poisson_upper_limit(stats.coincidences, accidentals, level)
    if stats.ps <= 0:
        raise ConfigError("Ps = 0: intrinsic alpha undefined")
    return DarkCorrectedAlpha(
        alpha_upper=(residual / n) / stats.ps ** 2,
        expected_accidentals=accidentals,
        observed_coincidences=stats.coincidences,
        residual_upper_counts=residual)
