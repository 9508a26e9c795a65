"""Zeeman-resolved eight-level Ba+ model: levels, couplings, geometry.

The level set is 6S1/2 (2 sublevels), 6P1/2 (2) and 5D3/2 (4), stored in a
fixed canonical order. All angular-momentum algebra uses the spherical
tensor basis (sigma-, pi, sigma+) tied to the magnetic-field direction;
lab-frame vectors are rotated into that frame on entry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import constants as C
from .errors import ConfigError, InvalidTransitionError
from .pulses import ConstantEnvelope

MANIFOLDS = ("S12", "P12", "D32")

_J = {"S12": Fraction(1, 2), "P12": Fraction(1, 2), "D32": Fraction(3, 2)}

# Canonical sublevel order used for all 8x8 matrices.
_LEVEL_ORDER = (
    ("S12", Fraction(-1, 2)),
    ("S12", Fraction(1, 2)),
    ("P12", Fraction(-1, 2)),
    ("P12", Fraction(1, 2)),
    ("D32", Fraction(-3, 2)),
    ("D32", Fraction(-1, 2)),
    ("D32", Fraction(1, 2)),
    ("D32", Fraction(3, 2)),
)

DECAY_CHANNELS = (("P12", "S12"), ("P12", "D32"))


@dataclass(frozen=True)
class Level:
    manifold: str
    m: Fraction

    def __post_init__(self):
        if self.manifold not in MANIFOLDS:
            raise ConfigError(f"unknown manifold {self.manifold!r}")
        m = Fraction(self.m).limit_denominator(2)
        if m.denominator != 2 or abs(m) > _J[self.manifold]:
            raise ConfigError(f"invalid m_J={self.m} for {self.manifold}")
        object.__setattr__(self, "m", m)

    @property
    def j(self) -> Fraction:
        return _J[self.manifold]

    def __repr__(self):
        return f"{self.manifold}({self.m})"


LEVELS = tuple(Level(man, m) for man, m in _LEVEL_ORDER)


def level_index(level: Level) -> int:
    return LEVELS.index(level)


def manifold_slice(manifold: str) -> slice:
    return {"S12": slice(0, 2), "P12": slice(2, 4), "D32": slice(4, 8)}[manifold]


@dataclass(frozen=True)
class LevelScheme:
    """The 8-level structure with g-factors, decay rates and wavelengths."""

    levels: tuple = LEVELS
    lande_g: dict = field(default_factory=lambda: {
        "S12": C.G_S12, "P12": C.G_P12, "D32": C.G_D32})
    decay_rates: dict = field(default_factory=lambda: {
        ("P12", "S12"): C.GAMMA_P_TO_S, ("P12", "D32"): C.GAMMA_P_TO_D})
    transition_wavelengths: dict = field(default_factory=lambda: {
        ("P12", "S12"): C.WAVELENGTH_COOLING, ("P12", "D32"): C.WAVELENGTH_REPUMP})

    def __post_init__(self):
        if tuple(self.levels) != LEVELS:
            raise ConfigError("level set must be the canonical 8-level Ba+ structure")
        for chan in DECAY_CHANNELS:
            if self.decay_rates.get(chan, 0.0) <= 0.0:
                raise ConfigError(f"decay rate for {chan} must be positive")
            if self.transition_wavelengths.get(chan, 0.0) <= 0.0:
                raise ConfigError(f"wavelength for {chan} must be positive")
        for man in MANIFOLDS:
            if man not in self.lande_g:
                raise ConfigError(f"missing Lande factor for {man}")

    def index(self, level: Level) -> int:
        return level_index(level)


_OVERRIDE_KEYS = {
    "g_s12": ("lande_g", "S12"),
    "g_p12": ("lande_g", "P12"),
    "g_d32": ("lande_g", "D32"),
    "gamma_p_to_s": ("decay_rates", ("P12", "S12")),
    "gamma_p_to_d": ("decay_rates", ("P12", "D32")),
    "wavelength_cooling": ("transition_wavelengths", ("P12", "S12")),
    "wavelength_repump": ("transition_wavelengths", ("P12", "D32")),
}


def build_level_scheme(overrides=None) -> LevelScheme:
    """Default Ba+ scheme, with optional constant overrides.

    Recognized override keys: g_s12, g_p12, g_d32, gamma_p_to_s,
    gamma_p_to_d, wavelength_cooling, wavelength_repump. Rates and
    wavelengths are validated positive.
    """
    scheme = LevelScheme()
    if not overrides:
        return scheme
    lande = dict(scheme.lande_g)
    rates = dict(scheme.decay_rates)
    wl = dict(scheme.transition_wavelengths)
    target = {"lande_g": lande, "decay_rates": rates, "transition_wavelengths": wl}
    for key, value in overrides.items():
        if key not in _OVERRIDE_KEYS:
            raise ConfigError(f"unknown constant override {key!r}")
        if not value > 0.0:
            raise ConfigError(f"override {key}={value} must be positive")
        table, entry = _OVERRIDE_KEYS[key]
        target[table][entry] = float(value)
    return LevelScheme(lande_g=lande, decay_rates=rates, transition_wavelengths=wl)


# ----------------------------------------------------------------------
# Angular momentum algebra
# ----------------------------------------------------------------------

@lru_cache(maxsize=None)
def clebsch_gordan(j1, m1, j2, m2, j, m) -> float:
    """<j1 m1; j2 m2 | j m> via the Racah closed form (exact rationals)."""
    j1, m1, j2, m2, j, m = (Fraction(x) for x in (j1, m1, j2, m2, j, m))
    if m1 + m2 != m:
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(m) > j:
        return 0.0
    if not (abs(j1 - j2) <= j <= j1 + j2):
        return 0.0
    if (j1 + j2 + j).denominator != 1:
        return 0.0

    def fact(x: Fraction) -> int:
        assert x.denominator == 1 and x >= 0
        return math.factorial(int(x))

    pref = Fraction(
        (2 * j + 1).numerator * fact(j + j1 - j2) * fact(j - j1 + j2) * fact(j1 + j2 - j),
        (2 * j + 1).denominator * fact(j1 + j2 + j + 1),
    )
    pref *= Fraction(
        fact(j + m) * fact(j - m) * fact(j1 - m1) * fact(j1 + m1) * fact(j2 - m2) * fact(j2 + m2)
    )
    total = Fraction(0)
    k = 0
    while True:
        args = (
            j1 + j2 - j - k,
            j1 - m1 - k,
            j2 + m2 - k,
            j - j2 + m1 + k,
            j - j1 - m2 + k,
        )
        if min(args[:3]) < 0:
            break
        if min(args) >= 0:
            denom = fact(Fraction(k))
            for a in args:
                denom *= fact(a)
            total += Fraction((-1) ** k, denom)
        k += 1
    value = total * total * pref
    sign = 1.0 if total >= 0 else -1.0
    return sign * math.sqrt(float(value))


def dipole_coupling(scheme: LevelScheme, lower: Level, upper: Level, q: int) -> float:
    """Relative dipole amplitude <J_l m_l; 1 q | J_u m_u> for one spherical
    polarization component q in {-1, 0, +1}.

    Zero unless m_u = m_l + q. Raises for manifold pairs that are not
    dipole-allowed (only S12-P12 and D32-P12 are).
    """
    if q not in (-1, 0, 1):
        raise ConfigError(f"polarization component q={q} not in {{-1,0,+1}}")
    pair = (upper.manifold, lower.manifold)
    if pair not in DECAY_CHANNELS:
        raise InvalidTransitionError(
            f"{lower.manifold}-{upper.manifold} is not a dipole-allowed pair")
    return clebsch_gordan(lower.j, lower.m, 1, q, upper.j, upper.m)


# ----------------------------------------------------------------------
# Fields and geometry
# ----------------------------------------------------------------------

def _unit(v, name):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ConfigError(f"{name} must be a nonzero vector")
    return v / n


@dataclass(frozen=True)
class FieldEnvironment:
    """Static magnetic field; its direction is the quantization axis."""

    b_tesla: float = 0.0
    direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        if self.b_tesla < 0.0:
            raise ConfigError("magnetic field magnitude must be >= 0")
        d = _unit(self.direction, "field direction")
        d.flags.writeable = False
        object.__setattr__(self, "direction", d)


def quantization_triad(bhat):
    """Right-handed orthonormal triad (e1, e2, e3) with e3 along bhat.

    The transverse pair is fixed deterministically; all spherical-basis
    quantities share this gauge.
    """
    e3 = _unit(bhat, "quantization axis")
    ref = np.array([0.0, 0.0, 1.0]) if abs(e3[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = ref - np.dot(ref, e3) * e3
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)
    return e1, e2, e3


def spherical_unit_vectors(bhat):
    """Complex lab-frame unit vectors (e_{-1}, e_0, e_{+1}) about bhat."""
    e1, e2, e3 = quantization_triad(bhat)
    e_minus = (e1 - 1j * e2) / math.sqrt(2.0)
    e_plus = -(e1 + 1j * e2) / math.sqrt(2.0)
    return e_minus, e3.astype(complex), e_plus


def spherical_components(vec_lab, bhat):
    """Components (u_{-1}, u_0, u_{+1}) of a lab-frame complex vector."""
    basis = spherical_unit_vectors(bhat)
    v = np.asarray(vec_lab, dtype=complex)
    return np.array([np.vdot(e, v) for e in basis])


def transverse_polarization(beam_axis, psi, chi=0.0):
    """Lab-frame Jones vector in the plane perpendicular to beam_axis.

    psi is the orientation of the polarization ellipse's major axis within
    the transverse plane, chi its ellipticity angle (0 = linear,
    +-pi/4 = circular).
    """
    t1, t2, _ = quantization_triad(beam_axis)
    major = math.cos(psi) * t1 + math.sin(psi) * t2
    minor = -math.sin(psi) * t1 + math.cos(psi) * t2
    return math.cos(chi) * major + 1j * math.sin(chi) * minor


_TRANSITIONS = {"cooling": ("P12", "S12"), "repump": ("P12", "D32")}


@dataclass(frozen=True)
class LaserField:
    """One driving laser in the rotating-wave description.

    polarization holds the spherical components (sigma-, pi, sigma+)
    relative to the quantization axis, unit norm. Use
    `spherical_components(transverse_polarization(...), bhat)` to build it
    from lab-frame data.
    """

    transition: str
    rabi: float
    detuning: float = 0.0
    polarization: np.ndarray = field(default_factory=lambda: np.array([0, 1, 0], dtype=complex))
    envelope: object = field(default_factory=ConstantEnvelope)

    def __post_init__(self):
        if self.transition not in _TRANSITIONS:
            raise ConfigError(f"unknown transition {self.transition!r}")
        if self.rabi < 0.0:
            raise ConfigError("Rabi frequency must be >= 0")
        pol = np.asarray(self.polarization, dtype=complex)
        if pol.shape != (3,):
            raise ConfigError("polarization must be a 3-vector of spherical components")
        n = np.linalg.norm(pol)
        if abs(n - 1.0) > 1e-6:
            raise ConfigError(f"polarization norm {n} is not 1")
        pol = pol / n
        pol.flags.writeable = False
        object.__setattr__(self, "polarization", pol)

    @property
    def channel(self):
        """(upper, lower) manifold pair addressed by this laser."""
        return _TRANSITIONS[self.transition]

    def with_detuning(self, detuning):
        return replace(self, detuning=detuning)

    def with_envelope(self, envelope):
        return replace(self, envelope=envelope)


@dataclass(frozen=True)
class DetectionGeometry:
    """Collection direction, polarization analyzer, and mode efficiency.

    collection_efficiency lumps solid angle, transmission and coupling: it
    is the probability that a photon radiated into a perfectly matched
    analyzed mode is delivered to the detection beamsplitter.
    """

    direction: np.ndarray
    analyzer: np.ndarray
    collection_efficiency: float = 1.0

    def __post_init__(self):
        d = _unit(self.direction, "observation direction")
        a = np.asarray(self.analyzer, dtype=complex)
        n = np.linalg.norm(a)
        if abs(n - 1.0) > 1e-6:
            raise ConfigError(f"analyzer norm {n} is not 1")
        a = a / n
        if abs(np.dot(a, d)) > 1e-9:
            raise ConfigError("analyzer must be transverse to the observation direction")
        if not 0.0 <= self.collection_efficiency <= 1.0:
            raise ConfigError("collection efficiency must lie in [0, 1]")
        d.flags.writeable = False
        a.flags.writeable = False
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "analyzer", a)


def analyzer_in_plane(direction, angle):
    """Linear analyzer at `angle` within the plane transverse to direction."""
    t1, t2, _ = quantization_triad(direction)
    return math.cos(angle) * t1 + math.sin(angle) * t2


# ----------------------------------------------------------------------
# Zeeman shifts and mode-projected emission weights
# ----------------------------------------------------------------------

def zeeman_shift(scheme: LevelScheme, level: Level, env: FieldEnvironment) -> float:
    """Linear Zeeman shift g_J * m_J * mu_B * B / hbar [rad/s]."""
    if level not in scheme.levels:
        raise ConfigError(f"level {level} not in scheme")
    return scheme.lande_g[level.manifold] * float(level.m) * C.MU_B * env.b_tesla / C.HBAR


def mode_amplitudes(geometry: DetectionGeometry, env: FieldEnvironment):
    """Projection (w_{-1}, w_0, w_{+1}) of the spherical emission basis
    onto the analyzed mode: w_q = <analyzer, e_q>."""
    basis = spherical_unit_vectors(env.direction)
    return np.array([np.vdot(geometry.analyzer, e) for e in basis])


def emission_projection(scheme: LevelScheme, geometry: DetectionGeometry,
                        env: FieldEnvironment) -> dict:
    """Weight of each P12 -> S12 decay amplitude in the analyzed mode.

    Returns {(p_level, s_level): |<analyzer, e_q>|^2 * cg^2} with
    q = m_P - m_S; entries with disallowed q are zero. The classical
    dipole pattern enters through the transverse analyzer projection
    (pi light has a node along the quantization axis, etc.).
    """
    w = mode_amplitudes(geometry, env)
    out = {}
    for p in LEVELS[manifold_slice("P12")]:
        for s in LEVELS[manifold_slice("S12")]:
            q = int(p.m - s.m)
            if abs(q) > 1:
                out[(p, s)] = 0.0
                continue
            cg = dipole_coupling(scheme, s, p, q)
            out[(p, s)] = float(abs(w[q + 1]) ** 2 * cg * cg)
    return out
