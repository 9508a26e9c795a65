"""Dark-resonance parameter calibration by weighted least squares.

The model curve is the steady-state fluorescence of the eight-level
system versus repump detuning; free parameters are the two Rabi
frequencies, the cooling detuning, the common polarization angles,
optionally the magnetic field, plus a detection scale and flat background
(measured count rates are not absolute scattering rates).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .atom import (
    FieldEnvironment,
    LaserField,
    build_level_scheme,
    spherical_components,
    transverse_polarization,
)
from .bloch import dark_resonance_scan
from .errors import ConfigError, DataFormatError, NumericError

PARAM_NAMES = ("omega_g", "omega_r", "delta_g", "psi", "chi",
               "b_tesla", "scale", "background")


@dataclass(frozen=True)
class ScanData:
    """Measured fluorescence rate vs repump detuning.

    sigma defaults to sqrt(max(rate, 1)) per point (Poisson scaling of
    counted rates).
    """

    detunings_hz: np.ndarray
    rates_cps: np.ndarray
    sigma_cps: np.ndarray = None

    def __post_init__(self):
        d = np.asarray(self.detunings_hz, dtype=float)
        r = np.asarray(self.rates_cps, dtype=float)
        if self.sigma_cps is None:
            s = np.sqrt(np.maximum(r, 1.0))
        else:
            s = np.asarray(self.sigma_cps, dtype=float)
        if d.shape != r.shape or d.shape != s.shape or d.ndim != 1:
            raise ConfigError("detunings, rates and sigmas must be matching 1-D arrays")
        if np.any(s <= 0.0):
            raise ConfigError("uncertainties must be positive")
        for name, arr in (("detunings_hz", d), ("rates_cps", r), ("sigma_cps", s)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.detunings_hz)


def read_scan_csv(path) -> ScanData:
    """CSV columns: detuning_hz, rate_cps[, sigma_cps]; header optional."""
    det, rate, sig = [], [], []
    have_sigma = None
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if ln == 1 and not _is_number(parts[0]):
                continue
            if len(parts) not in (2, 3):
                raise DataFormatError(f"line {ln}: expected 2 or 3 columns")
            if have_sigma is None:
                have_sigma = len(parts) == 3
            elif have_sigma != (len(parts) == 3):
                raise DataFormatError(f"line {ln}: inconsistent column count")
            try:
                det.append(float(parts[0]))
                rate.append(float(parts[1]))
                if have_sigma:
                    sig.append(float(parts[2]))
            except ValueError:
                raise DataFormatError(f"line {ln}: non-numeric value") from None
    if not det:
        raise DataFormatError("scan file contains no data rows")
    return ScanData(np.array(det), np.array(rate),
                    np.array(sig) if have_sigma else None)


def write_scan_csv(path, data: ScanData):
    with open(path, "w") as fh:
        fh.write("detuning_hz,rate_cps,sigma_cps\n")
        for d, r, s in zip(data.detunings_hz, data.rates_cps, data.sigma_cps):
            fh.write(f"{d:.12e},{r:.12e},{s:.12e}\n")


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


@dataclass(frozen=True)
class FitResult:
    params: dict
    free: tuple
    covariance: np.ndarray          # free x free, PSD
    reduced_chisq: float
    converged: bool
    iterations: int
    singular_jacobian: bool
    message: str

    def stderr(self, name):
        if name not in self.free:
            return 0.0
        i = self.free.index(name)
        return float(math.sqrt(max(self.covariance[i, i], 0.0)))

    def report(self) -> str:
        lines = [f"converged        : {self.converged} ({self.message})",
                 f"function evals   : {self.iterations}",
                 f"reduced chi-sq   : {self.reduced_chisq:.6g}"]
        if self.singular_jacobian:
            lines.append("warning          : singular Jacobian, covariance unreliable")
        for name in PARAM_NAMES:
            v = self.params[name]
            if name in self.free:
                lines.append(f"{name:<17}: {v:.9g} +- {self.stderr(name):.3g}")
            else:
                lines.append(f"{name:<17}: {v:.9g} (fixed)")
        return "\n".join(lines)


def scan_model(params: dict, detunings_hz, scheme=None, b_direction=(0, 0, 1),
               beam_axis=(1, 0, 0), geometry=None, levels=None):
    """Model fluorescence curve [counts/s] for one parameter set."""
    scheme = scheme if scheme is not None else build_level_scheme()
    env = FieldEnvironment(params["b_tesla"], b_direction)
    pol = spherical_components(
        transverse_polarization(beam_axis, params["psi"], params["chi"]),
        env.direction)
    cooling = LaserField("cooling", rabi=params["omega_g"],
                         detuning=params["delta_g"], polarization=pol)
    repump = LaserField("repump", rabi=params["omega_r"], polarization=pol)
    detunings_rad = 2.0 * math.pi * np.asarray(detunings_hz, dtype=float)
    scan = dark_resonance_scan(scheme, cooling, repump, env, detunings_rad,
                               geometry=geometry, levels=levels)
    if scan.errors:
        raise NumericError(f"scan failed at {len(scan.errors)} grid points: "
                           f"{scan.errors[0][1]}")
    return params["scale"] * scan.rates + params["background"]


def fit_residuals(data: ScanData, params: dict, **model_kw):
    """Weighted residuals (measured - model)/sigma at the given parameters."""
    model = scan_model(params, data.detunings_hz, **model_kw)
    return (data.rates_cps - model) / data.sigma_cps


def fit_dark_resonance(data: ScanData, initial: dict, free=None, bounds=None,
                       max_nfev=None, **model_kw) -> FitResult:
    """Local weighted-least-squares fit of the dark-resonance model.

    initial must contain every name in PARAM_NAMES; free lists the
    parameters allowed to vary (default: all but b_tesla and chi). bounds
    maps names to (lo, hi); with any bounds present the trust-region
    reflective variant runs instead of plain Levenberg-Marquardt.
    Jacobian by central differences with relative step 1e-6.
    """
    missing = [n for n in PARAM_NAMES if n not in initial]
    if missing:
        raise ConfigError(f"initial guess is missing {missing}")
    free = tuple(free) if free is not None else tuple(
        n for n in PARAM_NAMES if n not in ("b_tesla", "chi"))
    for n in free:
        if n not in PARAM_NAMES:
            raise ConfigError(f"unknown parameter {n!r}")
    if not free:
        raise ConfigError("no free parameters")
    if len(data) < 2 * len(free):
        raise ConfigError(
            f"{len(data)} points cannot constrain {len(free)} parameters "
            "(need at least 2x)")

    x0 = np.array([float(initial[n]) for n in free])
    lo = np.full(len(free), -np.inf)
    hi = np.full(len(free), np.inf)
    if bounds:
        for n, (a, b) in bounds.items():
            if n in free:
                i = free.index(n)
                lo[i], hi[i] = a, b
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ConfigError("initial guess violates bounds")

    def residual(x):
        params = dict(initial)
        params.update({n: v for n, v in zip(free, x)})
        return fit_residuals(data, params, **model_kw)

    step_floor = np.maximum(np.abs(x0), 1e-12)

    def jacobian(x):
        # central differences, relative step 1e-6
        cols = []
        for j in range(len(x)):
            h = 1e-6 * max(abs(x[j]), step_floor[j])
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            cols.append((residual(xp) - residual(xm)) / (2.0 * h))
        return np.column_stack(cols)

    bounded = np.any(np.isfinite(lo)) or np.any(np.isfinite(hi))
    method = "trf" if bounded else "lm"
    if max_nfev is None:
        max_nfev = 200
    res = scipy.optimize.least_squares(
        residual, x0, jac=jacobian, method=method,
        bounds=(lo, hi) if bounded else (-np.inf, np.inf),
        max_nfev=max_nfev, x_scale="jac")

    params = dict(initial)
    params.update({n: v for n, v in zip(free, res.x)})
    dof = max(len(data) - len(free), 1)
    jtj = res.jac.T @ res.jac
    singular = False
    try:
        cov = np.linalg.inv(jtj)
        if not np.all(np.isfinite(cov)) or np.linalg.cond(jtj) > 1e12:
            singular = True
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(jtj)
        singular = True
    cov = 0.5 * (cov + cov.T)
    return FitResult(
        params=params, free=free, covariance=cov,
        reduced_chisq=float(2.0 * res.cost / dof),
        converged=bool(res.status > 0), iterations=int(res.nfev),
        singular_jacobian=singular, message=str(res.message))
