"""Liouvillian construction and solvers for the eight-level system.

Builds the rotating-frame Hamiltonian (one frame per laser, detunings and
Zeeman shifts on the diagonal, Clebsch-Gordan-weighted Rabi couplings) plus
Lindblad dissipators for both decay channels, then solves for steady states
and time evolution on the vectorized density matrix.

Matrices act on row-major vec(rho): vec(A rho B) = kron(A, B.T) vec(rho).

An optional `levels` subset restricts the model to a few sublevels (all
couplings and decay amplitudes outside the subset dropped), which is how
the textbook two-level and three-level reductions are produced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.linalg

from . import constants as C
from .atom import (
    LEVELS,
    DetectionGeometry,
    FieldEnvironment,
    LaserField,
    LevelScheme,
    dipole_coupling,
    manifold_slice,
    mode_amplitudes,
    zeeman_shift,
)
from .errors import (
    AmbiguousSteadyStateError,
    ConfigError,
    IntegrationFailureError,
    NumericDomainError,
)
from .pulses import ConstantEnvelope

DEFAULT_ENV = FieldEnvironment(0.0, (0.0, 0.0, 1.0))


# ----------------------------------------------------------------------
# Density-matrix validation
# ----------------------------------------------------------------------

def check_density_matrix(rho, trace_tol=1e-9, herm_tol=1e-10, psd_tol=1e-10):
    """Raise NumericDomainError unless rho is a valid density matrix."""
    rho = np.asarray(rho)
    herm = np.linalg.norm(rho - rho.conj().T)
    if herm >= herm_tol:
        raise NumericDomainError(f"density matrix not Hermitian: defect {herm:.3e}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise NumericDomainError(f"density matrix trace {tr} != 1")
    mineig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    if mineig <= -psd_tol:
        raise NumericDomainError(f"density matrix not PSD: min eigenvalue {mineig:.3e}")
    return rho


def d32_mixture(levels=None):
    """Uniform incoherent mixture over the metastable D32 sublevels."""
    levels = tuple(levels) if levels is not None else LEVELS
    idx = [i for i, lv in enumerate(levels) if lv.manifold == "D32"]
    if not idx:
        raise ConfigError("no D32 levels in the chosen subset")
    rho = np.zeros((len(levels), len(levels)), dtype=complex)
    for i in idx:
        rho[i, i] = 1.0 / len(idx)
    return rho


def ground_state(levels=None, index=0):
    levels = tuple(levels) if levels is not None else LEVELS
    rho = np.zeros((len(levels), len(levels)), dtype=complex)
    rho[index, index] = 1.0
    return rho


# ----------------------------------------------------------------------
# Hamiltonian and jump operators
# ----------------------------------------------------------------------

def _lower_manifold(laser):
    return laser.channel[1]


def _frame_offsets(lasers):
    """Rotating-frame diagonal offsets per manifold.

    One frame per laser; S12 is the reference. With both beams the
    familiar two-color Lambda frame results: P at -Delta_g, D at
    Delta_r - Delta_g.
    """
    cooling = [l for l in lasers if l.transition == "cooling"]
    repump = [l for l in lasers if l.transition == "repump"]
    if len(cooling) > 1 or len(repump) > 1:
        raise ConfigError("at most one laser per transition in the rotating-frame model")
    off = {"S12": 0.0, "P12": 0.0, "D32": 0.0}
    if cooling:
        off["P12"] = -cooling[0].detuning
    elif repump:
        off["P12"] = -repump[0].detuning
    if repump:
        off["D32"] = off["P12"] + repump[0].detuning
    return off


def _coupling_operator(scheme, laser, levels):
    """Raising operator (Omega/2) sum_q u_q cg |upper><lower| for one laser."""
    n = len(levels)
    upper_man, lower_man = laser.channel
    op = np.zeros((n, n), dtype=complex)
    for iu, up in enumerate(levels):
        if up.manifold != upper_man:
            continue
        for il, lo in enumerate(levels):
            if lo.manifold != lower_man:
                continue
            q = int(up.m - lo.m)
            if abs(q) > 1:
                continue
            cg = dipole_coupling(scheme, lo, up, q)
            op[iu, il] += 0.5 * laser.rabi * laser.polarization[q + 1] * cg
    return op


def build_hamiltonian(scheme, lasers, env, levels=None):
    """Static Hamiltonian and per-laser drive terms (rad/s units, hbar=1).

    Returns (H0, [(envelope, H_i), ...]) where H0 carries the diagonal
    (Zeeman + frame offsets) plus couplings of constant-envelope lasers;
    time-dependent lasers contribute (envelope, hermitian coupling) pairs.
    """
    levels = tuple(levels) if levels is not None else LEVELS
    off = _frame_offsets(lasers)
    n = len(levels)
    h0 = np.zeros((n, n), dtype=complex)
    for i, lv in enumerate(levels):
        h0[i, i] = zeeman_shift(scheme, lv, env) + off[lv.manifold]
    drives = []
    for laser in lasers:
        raising = _coupling_operator(scheme, laser, levels)
        herm = raising + raising.conj().T
        envp = laser.envelope
        if isinstance(envp, ConstantEnvelope):
            h0 += envp.value * herm
        else:
            drives.append((envp, herm))
    return h0, drives


def build_jump_operators(scheme, levels=None):
    """Lindblad jump operators: one per decay channel and spherical
    component q, scaled by sqrt(Gamma_channel)."""
    levels = tuple(levels) if levels is not None else LEVELS
    n = len(levels)
    ops = []
    for upper_man, lower_man in (("P12", "S12"), ("P12", "D32")):
        gamma = scheme.decay_rates[(upper_man, lower_man)]
        for q in (-1, 0, 1):
            a = np.zeros((n, n), dtype=complex)
            for iu, up in enumerate(levels):
                if up.manifold != upper_man:
                    continue
                for il, lo in enumerate(levels):
                    if lo.manifold != lower_man or int(up.m - lo.m) != q:
                        continue
                    a[il, iu] = dipole_coupling(scheme, lo, up, q)
            if np.any(a):
                ops.append(math.sqrt(gamma) * a)
    return ops


# ----------------------------------------------------------------------
# Liouvillian
# ----------------------------------------------------------------------

def _coherent_part(h):
    n = h.shape[0]
    eye = np.eye(n)
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def _dissipator(a):
    n = a.shape[0]
    eye = np.eye(n)
    ad_a = a.conj().T @ a
    return np.kron(a, a.conj()) - 0.5 * (np.kron(ad_a, eye) + np.kron(eye, ad_a.T))


@dataclass(frozen=True)
class Liouvillian:
    """Generator of density-matrix evolution on vec(rho).

    base holds every static term; drives holds (envelope, matrix) pairs
    for time-dependent laser couplings: L(t) = base + sum env_i(t) * M_i.
    """

    base: np.ndarray
    drives: tuple = ()
    levels: tuple = LEVELS

    @property
    def dim(self):
        return len(self.levels)

    @property
    def is_static(self):
        return not self.drives

    def matrix(self, t=0.0):
        m = self.base
        for envp, term in self.drives:
            m = m + envp(t) * term
        return m

    def rate_scale(self):
        """Largest generator entry magnitude, used for step control and
        dimensionless residuals."""
        s = float(np.max(np.abs(self.base)))
        for _, term in self.drives:
            s = max(s, float(np.max(np.abs(term))))
        return s


def trace_defect(liouvillian_matrix):
    """Norm of the trace row functional of L, relative to the largest
    entry: exact Lindblad generators give 0 up to roundoff."""
    m = np.asarray(liouvillian_matrix)
    n = int(round(math.sqrt(m.shape[0])))
    w = np.zeros(m.shape[0], dtype=complex)
    w[:: n + 1] = 1.0
    scale = max(float(np.max(np.abs(m))), 1.0)
    return float(np.max(np.abs(w @ m))) / scale


def build_liouvillian(scheme, lasers, env, t=None, levels=None) -> Liouvillian:
    """Assemble the Lindblad generator for the given field configuration.

    With `t` supplied, envelopes are evaluated there and a static
    Liouvillian is returned; otherwise time-dependent envelopes are kept
    as drive terms.
    """
    levels = tuple(levels) if levels is not None else LEVELS
    for laser in lasers:
        if laser.transition not in ("cooling", "repump"):
            raise ConfigError(f"laser on unknown transition {laser.transition!r}")
    h0, hdrives = build_hamiltonian(scheme, lasers, env, levels)
    base = _coherent_part(h0)
    for a in build_jump_operators(scheme, levels):
        base += _dissipator(a)
    drives = []
    for envp, herm in hdrives:
        term = _coherent_part(herm)
        if t is None:
            drives.append((envp, term))
        else:
            base = base + envp(t) * term
    return Liouvillian(base=base, drives=tuple(drives), levels=levels)


# ----------------------------------------------------------------------
# Steady state
# ----------------------------------------------------------------------

def steady_state(liouvillian: Liouvillian, rcond=1e-10):
    """Unique trace-one null vector of a static Liouvillian.

    Solves the bordered least-squares system [L/s; trace] x = [0; 1]. A
    rank-deficient bordered matrix means the null space of L has dimension
    greater than one, which is reported instead of silently averaged.
    """
    if not liouvillian.is_static:
        raise ConfigError("steady state requires a static Liouvillian")
    n = liouvillian.dim
    L = liouvillian.base
    scale = liouvillian.rate_scale()
    if scale == 0.0:
        raise AmbiguousSteadyStateError(n * n)
    trace_row = np.zeros(n * n, dtype=complex)
    trace_row[:: n + 1] = 1.0
    m = np.vstack([L / scale, trace_row])
    b = np.zeros(n * n + 1, dtype=complex)
    b[-1] = 1.0
    x, _, rank, _ = scipy.linalg.lstsq(m, b, cond=rcond, lapack_driver="gelsy")
    if rank < n * n:
        raise AmbiguousSteadyStateError(n * n - rank + 1)
    rho = x.reshape(n, n)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    residual = float(np.linalg.norm((L / scale) @ rho.reshape(-1)))
    if residual > 1e-10:
        raise NumericDomainError(f"steady-state residual {residual:.3e} exceeds 1e-10")
    mineig = float(np.linalg.eigvalsh(rho).min())
    if mineig <= -1e-10:
        raise NumericDomainError(f"steady state not PSD: min eigenvalue {mineig:.3e}")
    return rho


# ----------------------------------------------------------------------
# Time evolution
# ----------------------------------------------------------------------

def evolve(rho0, liouvillian: Liouvillian, t_grid, rtol=1e-9, atol=1e-12,
           max_step=None, method="DOP853"):
    """Propagate rho0 over t_grid; returns array (len(t_grid), n, n).

    The maximum step is bounded by a twentieth of the fastest coherent
    period so Zeeman/Rabi oscillations stay resolved.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 1 or np.any(np.diff(t_grid) <= 0):
        raise ConfigError("t_grid must be strictly increasing")
    n = liouvillian.dim
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (n, n):
        raise ConfigError(f"rho0 must be {n}x{n}")
    if max_step is None:
        scale = liouvillian.rate_scale()
        max_step = (2.0 * math.pi / (20.0 * scale)) if scale > 0 else np.inf

    if liouvillian.is_static:
        L = liouvillian.base

        def rhs(t, y):
            return L @ y
    else:
        base = liouvillian.base
        drives = liouvillian.drives

        def rhs(t, y):
            dy = base @ y
            for envp, term in drives:
                dy += envp(t) * (term @ y)
            return dy

    t0 = t_grid[0]
    sol = scipy.integrate.solve_ivp(
        rhs, (t0, t_grid[-1]), rho0.reshape(-1), t_eval=t_grid,
        method=method, rtol=rtol, atol=atol, max_step=max_step)
    if not sol.success:
        raise IntegrationFailureError(
            f"time integration failed: {sol.message}",
            diagnostics={"status": sol.status, "nfev": sol.nfev, "t_reached": sol.t[-1] if len(sol.t) else t0})
    return sol.y.T.reshape(len(t_grid), n, n)


# ----------------------------------------------------------------------
# Emission rates and scans
# ----------------------------------------------------------------------

def _mode_operator(scheme, geometry, env, levels):
    """Amplitude operator of the analyzed 493 nm detection mode."""
    w = mode_amplitudes(geometry, env)
    n = len(levels)
    d = np.zeros((n, n), dtype=complex)
    for iu, up in enumerate(levels):
        if up.manifold != "P12":
            continue
        for il, lo in enumerate(levels):
            if lo.manifold != "S12":
                continue
            q = int(up.m - lo.m)
            if abs(q) > 1:
                continue
            d[il, iu] += w[q + 1] * dipole_coupling(scheme, lo, up, q)
    return d


def scattering_rate(rho, scheme, geometry=None, env=None, levels=None) -> float:
    """Instantaneous 493 nm photon rate [1/s].

    With a DetectionGeometry: the rate collected into the analyzed mode,
    Gamma_PS * eta * tr(D rho D+), which carries the P12 coherences that
    produce quantum beats. With geometry None: the full unpolarized rate
    Gamma_PS * (total P12 population).
    """
    levels = tuple(levels) if levels is not None else LEVELS
    rho = np.asarray(rho, dtype=complex)
    gamma = scheme.decay_rates[("P12", "S12")]
    if geometry is None:
        pop = sum(rho[i, i].real for i, lv in enumerate(levels) if lv.manifold == "P12")
        rate = gamma * pop
    else:
        env = env if env is not None else DEFAULT_ENV
        d = _mode_operator(scheme, geometry, env, levels)
        rate = geometry.collection_efficiency * gamma * float(
            np.trace(d @ rho @ d.conj().T).real)
    if rate < -1e-12 * max(gamma, 1.0):
        raise NumericDomainError(f"negative emission rate {rate}")
    return max(rate, 0.0)


@dataclass(frozen=True)
class ScanResult:
    """Steady fluorescence rate versus repump detuning."""

    detunings: np.ndarray       # rad/s
    rates: np.ndarray           # 1/s; NaN where the point failed
    errors: tuple = ()          # (index, message) pairs

    @property
    def ok(self):
        return np.isfinite(self.rates)


def _repump_detuning_pattern(levels):
    """d L / d Delta_r: the repump detuning enters the rotating frame only
    through the D32 diagonal, so the scan Liouvillian is linear in it."""
    n = len(levels)
    p_d = np.zeros((n, n), dtype=complex)
    for i, lv in enumerate(levels):
        if lv.manifold == "D32":
            p_d[i, i] = 1.0
    return _coherent_part(p_d)


def dark_resonance_scan(scheme, cooling, repump, env, detunings,
                        geometry=None, levels=None) -> ScanResult:
    """Steady-state fluorescence over a grid of repump detunings.

    Continuous driving: both lasers run with constant unit envelopes. The
    generator is assembled once and shifted linearly in the detuning.
    Failing grid points (degenerate steady states and the like) are marked
    NaN and reported, not fatal.
    """
    detunings = np.asarray(detunings, dtype=float)
    if detunings.size == 0:
        raise ConfigError("detuning grid is empty")
    levels = tuple(levels) if levels is not None else LEVELS
    cooling = cooling.with_envelope(ConstantEnvelope(1.0))
    repump = repump.with_envelope(ConstantEnvelope(1.0)).with_detuning(0.0)
    base = build_liouvillian(scheme, (cooling, repump), env, levels=levels)
    pattern = _repump_detuning_pattern(levels)
    rates = np.empty(detunings.size, dtype=float)
    errors = []
    for i, delta in enumerate(detunings):
        try:
            liou = Liouvillian(base=base.base + delta * pattern, levels=levels)
            rho = steady_state(liou)
            rates[i] = scattering_rate(rho, scheme, geometry, env, levels=levels)
        except (AmbiguousSteadyStateError, NumericDomainError) as exc:
            rates[i] = np.nan
            errors.append((i, str(exc)))
    return ScanResult(detunings=detunings, rates=rates, errors=tuple(errors))
