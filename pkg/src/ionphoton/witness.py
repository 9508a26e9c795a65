"""Non-classicality and quantum non-Gaussianity witnesses on HBT clicks.

The threshold machinery works in the (Ps, Pc) plane of per-trigger
exclusive-single and coincidence probabilities. Gaussian threshold states
are displaced squeezed vacua; their Fock-basis probabilities have closed
forms which are cross-checked against direct phase-space quadrature.
The QNG boundary is the one-parameter curve

    Ps(V) = 1/2 + (1 - V(2+V)) e^{(V-1)/(2V)} / (sqrt(V) (1+V)^2)
    Pc(V) = 1/2 - (1 + V^2)   e^{(V-1)/(2V)} / (sqrt(V) (1+V)^2)

for squeezing variance V in (0, 1]; any measured state with Pc below the
curve at its Ps is incompatible with every convex mixture of Gaussian
states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericDomainError, OutOfRangeError, QuadratureError
from .stats import binomial_se, binomial_upper_bound, clopper_pearson

_ONE_SIDED_Z95 = 1.6448536269514722


@dataclass(frozen=True)
class SqueezedStateParams:
    """Displaced squeezed vacuum: variance V, rotation phi, displacement
    parameter r (the displacement distance is sqrt(r))."""

    V: float
    phi: float = 0.0
    r: float = 0.0

    def __post_init__(self):
        if not self.V > 0.0:
            raise ConfigError("squeezing variance V must be > 0")
        if self.r < 0.0:
            raise ConfigError("displacement parameter r must be >= 0")


@dataclass(frozen=True)
class FockProbs:
    p0: float
    p1: float
    p2plus: float

    def __post_init__(self):
        for name, p in (("p0", self.p0), ("p1", self.p1), ("p2plus", self.p2plus)):
            if not -1e-12 <= p <= 1.0 + 1e-12:
                raise NumericDomainError(f"{name}={p} outside [0, 1]")
        if abs(self.p0 + self.p1 + self.p2plus - 1.0) > 1e-12:
            raise NumericDomainError("Fock probabilities must sum to 1")


@dataclass(frozen=True)
class ClickProbs:
    ps: float
    pc: float

    def __post_init__(self):
        if not -1e-12 <= self.pc <= 1.0:
            raise NumericDomainError(f"pc={self.pc} outside [0, 1]")
        if not -1e-12 <= self.ps <= 1.0:
            raise NumericDomainError(f"ps={self.ps} outside [0, 1]")
        if self.ps + self.pc > 1.0 + 1e-12:
            raise NumericDomainError("ps + pc exceeds 1")


def squeezed_fock_probs(p: SqueezedStateParams) -> FockProbs:
    """Closed-form vacuum/one/many photon probabilities of the displaced
    squeezed state."""
    v, phi, r = p.V, p.phi, p.r
    p0 = (2.0 * math.sqrt(v) / (1.0 + v)) * math.exp(
        r * (-1.0 - v + (v - 1.0) * math.cos(2.0 * phi)) / (4.0 * (1.0 + v)))
    p1 = (r * (1.0 + v * v - (v * v - 1.0) * math.cos(2.0 * phi))
          / (2.0 * (1.0 + v) ** 2)) * p0
    p2plus = 1.0 - p0 - p1
    if p2plus < -1e-12:
        raise NumericDomainError(
            f"invalid parameter region: p0+p1 = {p0 + p1} exceeds 1")
    return FockProbs(p0=p0, p1=p1, p2plus=max(p2plus, 0.0))


def _wigner_squeezed(x, p, params: SqueezedStateParams):
    """Wigner function of the displaced squeezed state on a phase grid."""
    v, phi, r = params.V, params.phi, params.r
    xs = x - math.sqrt(r)
    u = xs * math.cos(phi) + p * math.sin(phi)
    w = -xs * math.sin(phi) + p * math.cos(phi)
    return (1.0 / (2.0 * math.pi)) * np.exp(-0.5 * (u * u / v + v * w * w))


def wigner_fock_overlap(params: SqueezedStateParams, n: int,
                        half_width=12.0, tol=1e-10, max_nodes=512) -> float:
    """P_n for n in {0, 1} by 2-D quadrature of W_n * W_{V,phi,r}.

    Tensor Gauss-Legendre integration on [-hw, hw]^2 with node doubling
    until two refinements agree within tol.
    """
    if n not in (0, 1):
        raise ConfigError("Fock projector overlap implemented for n in {0, 1}")

    def integral(nodes):
        t, w = np.polynomial.legendre.leggauss(nodes)
        t = t * half_width
        w = w * half_width
        xg, pg = np.meshgrid(t, t, indexing="ij")
        r2 = xg * xg + pg * pg
        proj = 2.0 * np.exp(-0.5 * r2)
        if n == 1:
            proj = proj * (r2 - 1.0)
        f = proj * _wigner_squeezed(xg, pg, params)
        return float(w @ f @ w)

    nodes = 64
    prev = integral(nodes)
    while nodes <= max_nodes:
        nodes *= 2
        cur = integral(nodes)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise QuadratureError(
        f"phase-space quadrature not converged at {max_nodes} nodes",
        achieved=abs(cur - prev))


def clicks_from_fock(f: FockProbs) -> ClickProbs:
    """Map Fock probabilities to HBT click probabilities.

    A photon pair splits at the detector with probability 1/2, producing a
    false single: Ps = P1 + P2+/2, Pc = P2+/2.
    """
    return ClickProbs(ps=f.p1 + 0.5 * f.p2plus, pc=0.5 * f.p2plus)


def classical_bound_ps(pc) -> float:
    """Largest Ps attainable by mixtures of coherent states at given Pc:
    Ps <= 2 (sqrt(Pc) - Pc)."""
    pc = float(pc)
    if not 0.0 <= pc <= 1.0:
        raise ConfigError(f"Pc={pc} outside [0, 1]")
    return 2.0 * (math.sqrt(pc) - pc)


def classical_bound_pc(ps) -> float:
    """Inverse of the classical bound: smallest Pc classical light can
    reach at given Ps (lower branch, Ps <= 1/2)."""
    ps = float(ps)
    if not 0.0 <= ps <= 0.5:
        raise ConfigError(f"Ps={ps} outside [0, 1/2]")
    # invert ps = 2(sqrt(pc) - pc) on sqrt(pc) in [0, 1/2]
    s = (1.0 - math.sqrt(1.0 - 2.0 * ps)) / 2.0
    return s * s


def qng_threshold_point(v) -> ClickProbs:
    """(Ps, Pc) of the Gaussian-boundary state with squeezing variance V."""
    v = float(v)
    if not 0.0 < v <= 1.0:
        raise ConfigError(f"squeezing variance V={v} outside (0, 1]")
    e = math.exp((v - 1.0) / (2.0 * v))
    den = math.sqrt(v) * (1.0 + v) ** 2
    ps = 0.5 + (1.0 - v * (2.0 + v)) * e / den
    pc = 0.5 - (1.0 + v * v) * e / den
    return ClickProbs(ps=max(ps, 0.0), pc=max(pc, 0.0))


_V_PEAK = None


def _curve_peak():
    """Locate the maximum of Ps(V) and verify strict decrease beyond it.

    Ps(V) rises above 1/2 as V decreases, peaks near V ~ 0.05, and falls
    back to 1/2 as V -> 0. Only the branch V >= V_peak (strictly
    decreasing to Ps(1) = 0) is used for the inversion; it covers every
    Ps below the peak, which is the entire physically interesting range.
    """
    global _V_PEAK
    if _V_PEAK is not None:
        return _V_PEAK
    vs = np.linspace(1e-4, 1.0, 4000)
    ps = np.array([qng_threshold_point(v).ps for v in vs])
    k = int(np.argmax(ps))
    lo, hi = vs[max(k - 1, 0)], vs[min(k + 1, len(vs) - 1)]
    golden = 0.5 * (3.0 - math.sqrt(5.0))
    a, b = lo, hi
    for _ in range(200):
        d = b - a
        x1, x2 = a + golden * d, b - golden * d
        if qng_threshold_point(x1).ps < qng_threshold_point(x2).ps:
            a = x1
        else:
            b = x2
        if b - a < 1e-12:
            break
    peak = 0.5 * (a + b)
    branch = np.linspace(peak, 1.0, 2000)
    ps_branch = np.array([qng_threshold_point(v).ps for v in branch])
    if not np.all(np.diff(ps_branch) < 0.0):
        raise NumericDomainError(
            "QNG threshold Ps(V) not strictly decreasing beyond its peak")
    _V_PEAK = peak
    return peak


def qng_threshold_pc(ps) -> float:
    """Threshold coincidence probability Pc* at single-click probability Ps.

    Bisects V on the strictly decreasing branch of Ps(V) to tolerance
    1e-12 in Ps. Ps must lie inside the attainable span of the curve.
    """
    ps = float(ps)
    v_peak = _curve_peak()
    ps_max = qng_threshold_point(v_peak).ps
    if not 0.0 < ps < ps_max:
        raise OutOfRangeError(
            f"Ps={ps} outside the QNG curve span (0, {ps_max:.6f})",
            span=(0.0, ps_max))
    lo, hi = v_peak, 1.0   # Ps(lo) = ps_max > ps > 0 = Ps(hi)
    while hi - lo > 1e-16:
        mid = 0.5 * (lo + hi)
        if qng_threshold_point(mid).ps > ps:
            lo = mid
        else:
            hi = mid
        if abs(qng_threshold_point(mid).ps - ps) < 1e-12:
            break
    return qng_threshold_point(0.5 * (lo + hi)).pc


def threshold_displacement(v) -> float:
    """Displacement parameter of the extremal threshold state at V."""
    v = float(v)
    if not 0.0 < v <= 1.0:
        raise ConfigError(f"V={v} outside (0, 1]")
    return (1.0 - v * v) / v


@dataclass(frozen=True)
class QngVerdict:
    """Witness evaluation against the QNG and classical bounds."""

    n_triggers: int
    ps: float
    pc: float
    ps_se: float
    pc_se: float
    ps_ci95: tuple
    pc_ci95: tuple
    threshold_pc: float
    violates_qng: bool
    distance_sd: float
    classical_bound_ps: float
    violates_classical: bool
    zero_coincidences: bool

    def summary(self) -> str:
        lines = [
            f"triggers            : {self.n_triggers}",
            f"Ps                  : {self.ps:.6e} (95% CI {self.ps_ci95[0]:.3e}..{self.ps_ci95[1]:.3e})",
            f"Pc                  : {self.pc:.6e} (95% CI {self.pc_ci95[0]:.3e}..{self.pc_ci95[1]:.3e})",
            f"QNG threshold Pc*   : {self.threshold_pc:.6e}",
            f"QNG violated        : {self.violates_qng} ({self.distance_sd:+.2f} s.d.)",
            f"classical bound Ps  : {self.classical_bound_ps:.6e}",
            f"classical violated  : {self.violates_classical}",
        ]
        if self.zero_coincidences:
            lines.append("note: zero coincidences; Pc s.d. from one-sided 95% bound")
        return "\n".join(lines)


def evaluate_witness(n_triggers, n_singles, n_coincidences) -> QngVerdict:
    """Evaluate both witnesses on raw per-window counts.

    Binomial standard errors and exact 95% intervals for Ps and Pc; the
    QNG distance is (Pc* - Pc)/sigma_Pc. With zero coincidence counts the
    Pc scale comes from the one-sided exact 95% upper bound (sigma = bound
    / z95), a conservative stand-in for the undefined Wald error.
    """
    if n_triggers <= 0:
        raise ConfigError("n_triggers must be > 0")
    if n_singles < 0 or n_coincidences < 0 or n_singles + n_coincidences > n_triggers:
        raise ConfigError("counts inconsistent with trigger number")
    ps = n_singles / n_triggers
    pc = n_coincidences / n_triggers
    ps_ci = clopper_pearson(n_singles, n_triggers)
    pc_ci = clopper_pearson(n_coincidences, n_triggers)
    ps_se = binomial_se(n_singles, n_triggers)
    zero = n_coincidences == 0
    if zero:
        pc_se = binomial_upper_bound(0, n_triggers) / _ONE_SIDED_Z95
    else:
        pc_se = binomial_se(n_coincidences, n_triggers)
    pc_star = qng_threshold_pc(ps) if ps > 0.0 else 0.0
    distance = (pc_star - pc) / pc_se if pc_se > 0 else math.inf * (1 if pc_star > pc else -1)
    cb = classical_bound_ps(pc)
    return QngVerdict(
        n_triggers=int(n_triggers), ps=ps, pc=pc, ps_se=ps_se, pc_se=pc_se,
        ps_ci95=ps_ci, pc_ci95=pc_ci, threshold_pc=pc_star,
        violates_qng=pc < pc_star, distance_sd=float(distance),
        classical_bound_ps=cb, violates_classical=ps > cb,
        zero_coincidences=zero)


def threshold_curve(v_grid=None):
    """(V, Ps, Pc) arrays of the QNG boundary plus the classical bound."""
    if v_grid is None:
        v_grid = np.linspace(0.05, 1.0, 400)
    v_grid = np.asarray(v_grid, dtype=float)
    pts = [qng_threshold_point(v) for v in v_grid]
    ps = np.array([p.ps for p in pts])
    pc = np.array([p.pc for p in pts])
    pc_classical = np.array([classical_bound_pc(min(p, 0.5)) for p in ps])
    return v_grid, ps, pc, pc_classical
