"""YAML experiment configuration: schema validation and object builders.

All frequencies in files are plain Hz (and count rates counts/s); they
are multiplied by 2*pi on the way into the rad/s internals. Field paths
appear in every validation error.

Schema (sections used by the relevant subcommands):

    constants:            # optional overrides, all positive
      g_s12 / g_p12 / g_d32: float
      gamma_p_to_s_hz / gamma_p_to_d_hz: float
      wavelength_cooling_m / wavelength_repump_m: float
    environment:
      b_field_tesla: float >= 0
      b_direction: [x, y, z]
    beam_axis: [x, y, z]
    lasers:
      cooling|repump:
        rabi_hz: float >= 0
        detuning_hz: float
        polarization: {psi_rad: float, chi_rad: float} |
                      {spherical: [[re, im] x3]}
        envelope: {type: constant, value: v} |
                  {type: erf_ramp, t_on_s: t, rise_time_s: r} |
                  {type: square, t_on_s: a, t_off_s: b}
    geometry:
      direction: [x, y, z]
      analyzer_angle_rad: float | analyzer: [[re, im] x3]
      collection_efficiency: float in [0, 1]
    sequence:
      window_s: float; n_points: int
      segments: [{duration_s: float, lasers: [cooling|repump]}]
    scan:
      detuning_min_hz, detuning_max_hz: float; points: int
    fit:
      free: [name]; initial: {...}; bounds: {name: [lo, hi]}
    source:
      p_emit, p_multi: float in [0, 1]
      mode_efficiency: float | [eta1, eta2]
      arrival: {type: exponential, tau_s: t} | {type: wavepacket}
    detectors:
      a|b: {quantum_efficiency: q, dark_rate_cps: d}
    run:
      configuration: reflected|symmetric
      trigger_period_s, window_s: float; n_triggers: int; seed: int
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import yaml

from . import calibration
from .atom import (
    DetectionGeometry,
    FieldEnvironment,
    LaserField,
    analyzer_in_plane,
    build_level_scheme,
    spherical_components,
    transverse_polarization,
)
from .detection import DetectorModel, ExponentialArrival, RunConfig, SourceModel
from .errors import ConfigError
from .pulses import ConstantEnvelope, ErfRamp, PulseSequence, Segment, SquarePulse

TWO_PI = 2.0 * math.pi

_CONSTANT_KEYS = {
    "g_s12": ("g_s12", 1.0),
    "g_p12": ("g_p12", 1.0),
    "g_d32": ("g_d32", 1.0),
    "gamma_p_to_s_hz": ("gamma_p_to_s", TWO_PI),
    "gamma_p_to_d_hz": ("gamma_p_to_d", TWO_PI),
    "wavelength_cooling_m": ("wavelength_cooling", 1.0),
    "wavelength_repump_m": ("wavelength_repump", 1.0),
}


def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _get(mapping, key, path, required=True, default=None):
    if not isinstance(mapping, dict):
        _fail(path, "expected a mapping")
    if key not in mapping:
        if required:
            _fail(path, f"missing required field {key!r}")
        return default
    return mapping[key]


def _number(value, path, minimum=None, maximum=None):
    # YAML 1.1 reads "15.0e6" (no sign after e) as a string; accept it
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            _fail(path, f"expected a number, got {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    v = float(value)
    if minimum is not None and v < minimum:
        _fail(path, f"value {v} below minimum {minimum}")
    if maximum is not None and v > maximum:
        _fail(path, f"value {v} above maximum {maximum}")
    return v


def _integer(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        _fail(path, f"value {value} below minimum {minimum}")
    return value


def _vector3(value, path):
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        _fail(path, "expected a 3-vector [x, y, z]")
    return np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(value)])


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration; builder methods construct model objects."""

    raw: dict
    path: str = "<memory>"

    # -- sections ------------------------------------------------------
    def scheme(self):
        overrides = {}
        section = self.raw.get("constants") or {}
        if not isinstance(section, dict):
            _fail("constants", "expected a mapping")
        for key, value in section.items():
            if key not in _CONSTANT_KEYS:
                _fail(f"constants.{key}", "unknown constant")
            name, factor = _CONSTANT_KEYS[key]
            overrides[name] = _number(value, f"constants.{key}") * factor
        return build_level_scheme(overrides)

    def environment(self):
        sec = _get(self.raw, "environment", "<config>")
        b = _number(_get(sec, "b_field_tesla", "environment"), "environment.b_field_tesla",
                    minimum=0.0)
        direction = _vector3(_get(sec, "b_direction", "environment", required=False,
                                  default=[0.0, 0.0, 1.0]), "environment.b_direction")
        return FieldEnvironment(b, direction)

    def beam_axis(self):
        return _vector3(self.raw.get("beam_axis", [1.0, 0.0, 0.0]), "beam_axis")

    def _polarization(self, spec, path, env):
        if "spherical" in spec:
            comps = spec["spherical"]
            if not isinstance(comps, list) or len(comps) != 3:
                _fail(f"{path}.spherical", "expected three [re, im] pairs")
            vals = []
            for i, pair in enumerate(comps):
                if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                    _fail(f"{path}.spherical[{i}]", "expected [re, im]")
                vals.append(complex(_number(pair[0], f"{path}.spherical[{i}][0]"),
                                    _number(pair[1], f"{path}.spherical[{i}][1]")))
            return np.array(vals)
        psi = _number(_get(spec, "psi_rad", path), f"{path}.psi_rad")
        chi = _number(spec.get("chi_rad", 0.0), f"{path}.chi_rad")
        return spherical_components(
            transverse_polarization(self.beam_axis(), psi, chi), env.direction)

    def _envelope(self, spec, path):
        if spec is None:
            return ConstantEnvelope(1.0)
        kind = _get(spec, "type", path)
        if kind == "constant":
            return ConstantEnvelope(_number(spec.get("value", 1.0), f"{path}.value",
                                            minimum=0.0, maximum=1.0))
        if kind == "erf_ramp":
            return ErfRamp(t_on=_number(_get(spec, "t_on_s", path), f"{path}.t_on_s"),
                           rise_time=_number(_get(spec, "rise_time_s", path),
                                             f"{path}.rise_time_s", minimum=1e-15))
        if kind == "square":
            return SquarePulse(t_on=_number(_get(spec, "t_on_s", path), f"{path}.t_on_s"),
                               t_off=_number(_get(spec, "t_off_s", path), f"{path}.t_off_s"))
        _fail(f"{path}.type", f"unknown envelope type {kind!r}")

    def laser(self, name, env=None):
        env = env if env is not None else self.environment()
        lasers = _get(self.raw, "lasers", "<config>")
        spec = _get(lasers, name, "lasers")
        path = f"lasers.{name}"
        return LaserField(
            transition=name,
            rabi=TWO_PI * _number(_get(spec, "rabi_hz", path), f"{path}.rabi_hz",
                                  minimum=0.0),
            detuning=TWO_PI * _number(spec.get("detuning_hz", 0.0), f"{path}.detuning_hz"),
            polarization=self._polarization(_get(spec, "polarization", path),
                                            f"{path}.polarization", env),
            envelope=self._envelope(spec.get("envelope"), f"{path}.envelope"))

    def geometry(self, env=None):
        sec = self.raw.get("geometry")
        if sec is None:
            return None
        direction = _vector3(_get(sec, "direction", "geometry"), "geometry.direction")
        eta = _number(sec.get("collection_efficiency", 1.0),
                      "geometry.collection_efficiency", minimum=0.0, maximum=1.0)
        if "analyzer" in sec:
            comps = sec["analyzer"]
            if not isinstance(comps, list) or len(comps) != 3:
                _fail("geometry.analyzer", "expected three [re, im] pairs")
            analyzer = np.array([complex(_number(p[0], f"geometry.analyzer[{i}][0]"),
                                         _number(p[1], f"geometry.analyzer[{i}][1]"))
                                 for i, p in enumerate(comps)])
        else:
            angle = _number(sec.get("analyzer_angle_rad", 0.0),
                            "geometry.analyzer_angle_rad")
            analyzer = analyzer_in_plane(direction, angle)
        return DetectionGeometry(direction, analyzer, eta)

    def sequence(self, env=None):
        env = env if env is not None else self.environment()
        sec = _get(self.raw, "sequence", "<config>")
        window = _number(_get(sec, "window_s", "sequence"), "sequence.window_s",
                         minimum=1e-12)
        n_points = _integer(sec.get("n_points", 2001), "sequence.n_points", minimum=16)
        seg_specs = _get(sec, "segments", "sequence")
        if not isinstance(seg_specs, list) or not seg_specs:
            _fail("sequence.segments", "expected a non-empty list")
        segments = []
        for i, sp in enumerate(seg_specs):
            path = f"sequence.segments[{i}]"
            duration = _number(_get(sp, "duration_s", path), f"{path}.duration_s",
                               minimum=1e-15)
            names = sp.get("lasers", [])
            if not isinstance(names, list):
                _fail(f"{path}.lasers", "expected a list of laser names")
            lasers = tuple(self.laser(n, env) for n in names)
            segments.append(Segment(duration=duration, lasers=lasers))
        return PulseSequence(tuple(segments)), window, n_points

    def scan_grid(self):
        sec = _get(self.raw, "scan", "<config>")
        lo = _number(_get(sec, "detuning_min_hz", "scan"), "scan.detuning_min_hz")
        hi = _number(_get(sec, "detuning_max_hz", "scan"), "scan.detuning_max_hz")
        pts = _integer(_get(sec, "points", "scan"), "scan.points", minimum=1)
        if hi < lo:
            _fail("scan.detuning_max_hz", "must be >= detuning_min_hz")
        return np.linspace(lo, hi, pts)

    def fit_spec(self):
        sec = self.raw.get("fit") or {}
        initial = {}
        init = sec.get("initial") or {}
        conv = {"omega_g_hz": ("omega_g", TWO_PI), "omega_r_hz": ("omega_r", TWO_PI),
                "delta_g_hz": ("delta_g", TWO_PI), "psi_rad": ("psi", 1.0),
                "chi_rad": ("chi", 1.0), "b_tesla": ("b_tesla", 1.0),
                "scale": ("scale", 1.0), "background_cps": ("background", 1.0)}
        for key, value in init.items():
            if key not in conv:
                _fail(f"fit.initial.{key}", "unknown parameter")
            name, factor = conv[key]
            initial[name] = _number(value, f"fit.initial.{key}") * factor
        free = sec.get("free")
        if free is not None:
            if not isinstance(free, list) or not free:
                _fail("fit.free", "expected a non-empty list")
            for n in free:
                if n not in calibration.PARAM_NAMES:
                    _fail("fit.free", f"unknown parameter {n!r}")
            free = tuple(free)
        bounds = {}
        for name, pair in (sec.get("bounds") or {}).items():
            if name not in calibration.PARAM_NAMES:
                _fail(f"fit.bounds.{name}", "unknown parameter")
            if not isinstance(pair, list) or len(pair) != 2:
                _fail(f"fit.bounds.{name}", "expected [lo, hi]")
            bounds[name] = (_number(pair[0], f"fit.bounds.{name}[0]"),
                            _number(pair[1], f"fit.bounds.{name}[1]"))
        return initial, free, bounds

    def detectors(self):
        sec = _get(self.raw, "detectors", "<config>")
        out = []
        for label in ("a", "b"):
            spec = _get(sec, label, "detectors")
            path = f"detectors.{label}"
            out.append(DetectorModel(
                quantum_efficiency=_number(_get(spec, "quantum_efficiency", path),
                                           f"{path}.quantum_efficiency",
                                           minimum=0.0, maximum=1.0),
                dark_rate=_number(spec.get("dark_rate_cps", 0.0),
                                  f"{path}.dark_rate_cps", minimum=0.0),
                label=label.upper()))
        return tuple(out)

    def source(self, arrival=None):
        sec = _get(self.raw, "source", "<config>")
        if arrival is None:
            asp = _get(sec, "arrival", "source")
            kind = _get(asp, "type", "source.arrival")
            if kind == "exponential":
                arrival = ExponentialArrival(
                    tau=_number(_get(asp, "tau_s", "source.arrival"),
                                "source.arrival.tau_s", minimum=1e-15))
            elif kind == "wavepacket":
                arrival = self.wavepacket_arrival()
            else:
                _fail("source.arrival.type", f"unknown arrival type {kind!r}")
        eff = sec.get("mode_efficiency", 1.0)
        if isinstance(eff, (list, tuple)):
            eff = tuple(_number(v, f"source.mode_efficiency[{i}]", minimum=0.0,
                                maximum=1.0) for i, v in enumerate(eff))
        else:
            eff = _number(eff, "source.mode_efficiency", minimum=0.0, maximum=1.0)
        return SourceModel(
            p_emit=_number(sec.get("p_emit", 1.0), "source.p_emit",
                           minimum=0.0, maximum=1.0),
            arrival=arrival,
            mode_efficiency=eff,
            p_multi=_number(sec.get("p_multi", 0.0), "source.p_multi",
                            minimum=0.0, maximum=1.0))

    def wavepacket_arrival(self):
        from .wavepacket import photon_wavepacket

        scheme = self.scheme()
        env = self.environment()
        sequence, window, n_points = self.sequence(env)
        return photon_wavepacket(scheme, sequence, env, geometry=self.geometry(env),
                                 window=window, n_points=n_points)

    def run_config(self, seed=None):
        sec = _get(self.raw, "run", "<config>")
        return RunConfig(
            configuration=str(_get(sec, "configuration", "run")),
            trigger_period=_number(_get(sec, "trigger_period_s", "run"),
                                   "run.trigger_period_s", minimum=1e-12),
            window=_number(_get(sec, "window_s", "run"), "run.window_s", minimum=1e-12),
            n_triggers=_integer(_get(sec, "n_triggers", "run"), "run.n_triggers",
                                minimum=1),
            seed=_integer(sec.get("seed", 0) if seed is None else seed, "run.seed",
                          minimum=0))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return ExperimentConfig(raw=raw, path=str(path))
