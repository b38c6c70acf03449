"""Experiment configuration: one schema, per-experiment defaults, INI files.

Files are INI style with sections ``grid``, ``run``, ``data``, ``coefficients``,
``asymptotics`` and ``analysis``; values are Python literals (numbers, strings,
tuples, ``None``). Overrides use dotted keys, e.g. ``run.dt=0.005``.
"""

from __future__ import annotations

import ast
import configparser
import copy
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .coefficients import CoefficientProfile
from .grid import SpatialGrid
from .solver import InitialDataSpec, Profile

EXPERIMENTS = ("local-decay", "interior-decay", "exterior-decay", "energy-growth",
               "weighted-u1", "modified-scattering", "convergence")

# section -> key -> (default, help). Experiment-specific values live in EXPERIMENT_DEFAULTS.
SCHEMA: dict[str, dict[str, tuple[Any, str]]] = {
    "grid": {
        "n": (8192, "grid points (power of two)"),
        "L": (512.0, "box length"),
    },
    "run": {
        "dt": (0.01, "time step"),
        "T_end": (201.0, "final time (data sit at t = 1)"),
        "dt_snap": (0.05, "snapshot cadence"),
    },
    "data": {
        "f_family": ("zero", "u(1) profile: zero, gaussian or sech"),
        "f_amplitude": (1.0, ""),
        "f_width": (1.0, ""),
        "f_center": (0.0, ""),
        "g_family": ("gaussian", "u_t(1) profile"),
        "g_amplitude": (1.0, ""),
        "g_width": (1.0, ""),
        "g_center": (0.0, ""),
        "epsilon": (0.02, "target weighted data norm; None keeps the raw amplitudes"),
        "N": (2, "regularity index"),
    },
    "coefficients": {
        "beta0": (1.0, "constant coefficient"),
        "beta_family": ("gaussian", "zero, gaussian or sech2"),
        "beta_amplitude": (1.0, ""),
        "beta_width": (1.0, ""),
    },
    "asymptotics": {
        "sigma": (0.3, "frequency cutoff exponent: P_{<= rho^sigma}"),
        "Y": (3.0, "y-window half width"),
        "ny": (1024, "y-grid points"),
        "rho0": (4.0, "first rho of the geometric sequence"),
        "per_dyad": (8, "rho samples per doubling"),
        "count": (41, "maximal number of rho samples"),
        "h": (0.05, "rho spacing of slice triples"),
    },
    "analysis": {
        "times": ((4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0), "local decay sweep times"),
        "t_window": ((10.0, 200.0), "time window for interior decay and norm fits"),
        "rho_window": ((8.0, 128.0), "rho window for the energy growth fit"),
        "R": (None, "cone parameter of the sharp cutoff; None means T_end"),
        "envelope": (6.283185307179586, "running-max window for oscillating series"),
        "bands": ((3, 6), "dyadic exterior bands k_min, k_max"),
        "ripple": (0.3, "allowed increase between consecutive bands"),
        "energy_times": ((2.0, 4.0, 8.0, 16.0, 32.0, 64.0), "exterior energy times T"),
        "companion_beta_family": ("gaussian", "beta of the beta0 = 0 companion run"),
        "companion_beta_amplitude": (1.0, ""),
        "companion_beta_width": (1.0, ""),
        "second_epsilon": (0.03, "epsilon of the invariance run; None skips it"),
        "sigma_pair": ((0.25, 0.35), "cutoff exponents of the robustness check"),
        "dt_levels": (5, "number of dt halvings in the convergence study"),
        "drift_T": (20.0, "final time of the Hamiltonian drift study"),
        "residual_rho": (8.0, "rho of the hyperbolic residual check"),
        "residual_epsilon": (0.05, "data norm of the residual check run"),
        "eps_scan": ((), "further epsilons of the interior flatness scan"),
    },
}

EXPERIMENT_DEFAULTS: dict[str, dict[str, Any]] = {
    "local-decay": {"grid.n": 4096, "grid.L": 576.0},
    "interior-decay": {"analysis.eps_scan": (0.05, 0.1)},
    "exterior-decay": {
        "run.T_end": 129.0,
        "data.f_family": "sech", "data.f_width": 2.0, "data.g_family": "zero",
    },
    "energy-growth": {
        "grid.L": 1008.0, "run.dt": 0.05, "run.T_end": 484.0,
        "data.g_width": 2.0, "asymptotics.Y": 2.0, "asymptotics.rho0": 8.0,
        "asymptotics.per_dyad": 4, "asymptotics.count": 17,
    },
    "weighted-u1": {
        "grid.n": 4096, "grid.L": 256.0, "run.T_end": 65.0, "analysis.t_window": (8.0, 64.0),
    },
    "modified-scattering": {
        "grid.L": 2016.0, "run.dt": 0.05, "run.T_end": 965.0, "run.dt_snap": 0.1, "data.g_width": 2.0,
        "data.epsilon": 0.05, "coefficients.beta_family": "zero", "asymptotics.Y": 2.0,
        "asymptotics.count": 49,
    },
    "convergence": {
        "grid.n": 2048, "grid.L": 128.0, "run.dt": 0.04, "run.T_end": 6.0, "run.dt_snap": 1.0,
        "data.f_family": "gaussian", "data.f_amplitude": 0.5, "data.g_amplitude": 0.25,
        "data.epsilon": None, "asymptotics.Y": 2.0, "asymptotics.ny": 512,
    },
}

# experiments run on small data only; the gate is skipped for the others
SMALL_DATA = {"interior-decay", "exterior-decay", "energy-growth", "weighted-u1", "modified-scattering"}
EPS_MAX = 0.1


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str
    values: dict[str, dict[str, Any]] = field(default_factory=dict)
    out_dir: str | None = None

    def __getitem__(self, dotted: str) -> Any:
        sec, key = _split(dotted)
        return self.values[sec][key]

    def section(self, name: str) -> dict[str, Any]:
        return dict(self.values[name])

    def grid(self) -> SpatialGrid:
        return SpatialGrid(int(self["grid.n"]), float(self["grid.L"]))

    def data_spec(self, epsilon: Any = "config") -> InitialDataSpec:
        d = self.values["data"]
        eps = d["epsilon"] if epsilon == "config" else epsilon
        return InitialDataSpec(
            f=Profile(d["f_family"], float(d["f_amplitude"]), float(d["f_width"]), float(d["f_center"])),
            g=Profile(d["g_family"], float(d["g_amplitude"]), float(d["g_width"]), float(d["g_center"])),
            N=int(d["N"]), epsilon=None if eps is None else float(eps))

    def coefficients(self) -> CoefficientProfile:
        c = self.values["coefficients"]
        return CoefficientProfile(float(c["beta0"]), c["beta_family"], float(c["beta_amplitude"]),
                                  float(c["beta_width"]))

    @property
    def R(self) -> float:
        R = self["analysis.R"]
        return float(self["run.T_end"]) if R is None else float(R)

    def to_dict(self) -> dict[str, Any]:
        return {"experiment": self.name, **copy.deepcopy(self.values)}

    def emit(self) -> str:
        """INI text of every effective value; parses back to an identical config."""
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["experiment"] = {"name": repr(self.name)}
        for sec, vals in self.values.items():
            cp[sec] = {k: repr(v) for k, v in vals.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _split(dotted: str) -> tuple[str, str]:
    if "." not in dotted:
        raise ConfigError(f"key {dotted!r} must be of the form section.key")
    sec, key = dotted.split(".", 1)
    if sec not in SCHEMA or key not in SCHEMA[sec]:
        raise ConfigError(f"unknown key {dotted!r}")
    return sec, key


def _literal(text: str) -> Any:
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text.strip()  # bare words are strings


def defaults(name: str) -> ExperimentConfig:
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    values = {sec: {k: copy.deepcopy(v[0]) for k, v in keys.items()} for sec, keys in SCHEMA.items()}
    for dotted, v in EXPERIMENT_DEFAULTS[name].items():
        sec, key = _split(dotted)
        values[sec][key] = v
    return ExperimentConfig(name, values)


def apply_overrides(cfg: ExperimentConfig, overrides: dict[str, Any] | list[str]) -> ExperimentConfig:
    """``overrides``: mapping of dotted keys, or ``KEY=VALUE`` strings."""
    if not isinstance(overrides, dict):
        parsed = {}
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not KEY=VALUE")
            k, v = item.split("=", 1)
            parsed[k.strip()] = _literal(v)
        overrides = parsed
    for dotted, v in overrides.items():
        sec, key = _split(dotted)
        cfg.values[sec][key] = v
    return cfg


def parse_config_text(text: str, name: str | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    file_name = None
    if cp.has_section("experiment"):
        for k, v in cp["experiment"].items():
            if k != "name":
                raise ConfigError(f"unknown key 'experiment.{k}'")
            file_name = _literal(v)
    if name is not None and file_name is not None and name != file_name:
        raise ConfigError(f"config is for {file_name!r}, not {name!r}")
    name = name or file_name
    if name is None:
        raise ConfigError("experiment name missing")
    cfg = defaults(name)
    flat = {}
    for sec in cp.sections():
        if sec == "experiment":
            continue
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for k, v in cp[sec].items():
            flat[f"{sec}.{k}"] = _literal(v)
    return apply_overrides(cfg, flat)


def parse_config(path: str | Path | None, name: str | None = None,
                 overrides: list[str] | dict | None = None) -> ExperimentConfig:
    """Read, apply overrides, validate. ``path=None`` (or an empty file) gives the defaults."""
    text = Path(path).read_text() if path is not None else ""
    cfg = parse_config_text(text, name)
    if overrides:
        apply_overrides(cfg, overrides)
    validate(cfg)
    return cfg


def _num(cfg, key, kind=float, positive=True):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a number, got {v!r}")
    if kind is int and int(v) != v:
        raise ConfigError(f"{key} must be an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{key} must be positive, got {v!r}")
    return kind(v)


def _pair(cfg, key):
    v = cfg[key]
    if not (isinstance(v, (tuple, list)) and len(v) == 2 and v[0] < v[1]):
        raise ConfigError(f"{key} must be an increasing pair, got {v!r}")
    return v


def validate(cfg: ExperimentConfig) -> None:
    """Check types and ranges, then the wrap-safety and small-data rules."""
    try:
        grid = cfg.grid()
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None
    dt = _num(cfg, "run.dt")
    T_end = _num(cfg, "run.T_end")
    snap = _num(cfg, "run.dt_snap")
    if T_end <= 1:
        raise ConfigError(f"run.T_end={T_end} must exceed the initial time 1")
    if snap > 0.25 and cfg.name not in ("convergence", "local-decay"):
        raise ConfigError(f"run.dt_snap={snap} exceeds 0.25")
    ratio = snap / dt
    if abs(ratio - round(ratio)) > 1e-9 * ratio:
        raise ConfigError(f"run.dt_snap={snap} is not a multiple of run.dt={dt}")
    _num(cfg, "data.N", int)
    for key in ("asymptotics.sigma", "asymptotics.Y", "asymptotics.h", "asymptotics.rho0",
                "analysis.envelope", "analysis.ripple"):
        _num(cfg, key)
    for key in ("asymptotics.ny", "asymptotics.per_dyad", "asymptotics.count", "analysis.dt_levels"):
        _num(cfg, key, int)
    for key in ("analysis.t_window", "analysis.rho_window", "analysis.bands", "analysis.sigma_pair"):
        _pair(cfg, key)
    times = cfg["analysis.times"]
    if not isinstance(times, (tuple, list)) or len(times) < 4:
        raise ConfigError("analysis.times needs at least 4 entries")
    scan = cfg["analysis.eps_scan"]
    if not isinstance(scan, (tuple, list)) or any(
            isinstance(e, bool) or not isinstance(e, (int, float)) or not 0 < e <= EPS_MAX for e in scan):
        raise ConfigError(f"analysis.eps_scan entries must lie in (0, {EPS_MAX}]")
    if cfg["analysis.R"] is not None and _num(cfg, "analysis.R") < 1:
        raise ConfigError("analysis.R must be >= 1")
    if cfg.name == "local-decay":
        return
    try:
        spec = cfg.data_spec()
        cfg.coefficients()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    from .solver import make_initial_data, support_width  # validated data, not raw parameters

    try:
        state, eps = make_initial_data(spec, grid)
    except ValueError as exc:
        raise ConfigError(f"data: {exc}") from None
    need = 2 * (T_end - 1) + support_width(state) + 8
    if grid.length < need:
        raise ConfigError(
            f"wrap safety: grid.L={grid.length:g} is below 2(T_end - 1) + support + 8 = {need:g} "
            f"with run.T_end={T_end:g}")
    if cfg.name in SMALL_DATA and eps > EPS_MAX:
        raise ConfigError(f"small-data gate: epsilon={eps:.4g} exceeds {EPS_MAX}")
