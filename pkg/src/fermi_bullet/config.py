"""Run configuration: a flat `section.key = value` text format.

Lines are `section.key = value` with `#` comments and blank lines ignored.
Unknown keys are errors (they are almost always typos); missing keys take
the documented defaults. Exactly one parameter style per run: either the
dimensionless block `params.*` or the laboratory block `lab.*`.

The manifest written next to every run's outputs is this same format plus a
`meta` section, so it can be fed back through parse_config unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .classical import IntegratorConfig
from .errors import ConfigError, InvalidParameterError
from .model import (
    DEFAULT_G,
    DEFAULT_HBAR,
    DEFAULT_OMEGA_EFF,
    DimensionlessParams,
    LabParams,
    scale_to_dimensionless,
    validate_branch_index,
)
from .quantum import GridSpec, PropagatorConfig

MODES = ("windows", "convert", "classical", "quantum", "sweep")


@dataclass(frozen=True)
class ScenarioConfig:
    """What to simulate: time span, recording cadence, and the initial state."""

    t_final: float = 100.0
    record_every: int = 100
    snapshot_every: int = 0
    snapshot_downsample: int = 16
    z0: float = 40.0
    p0: float = 0.0
    dz: float = 0.0
    dp: float = 0.0
    shape: str = "gaussian"
    t0: float = 0.0
    n_points: int = 1000


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    raster: bool = True
    plot_script: bool = True


@dataclass
class RunConfig:
    """Fully resolved configuration for one invocation."""

    mode: str
    seed: int
    threads: int
    param_style: str  # "dimensionless" | "lab"
    params: DimensionlessParams
    lab: LabParams | None
    grid: GridSpec
    classical_cfg: IntegratorConfig
    quantum_cfg: PropagatorConfig
    scenario: ScenarioConfig
    windows_s_max: float
    sweep_parameter: str
    sweep_values: tuple[float, ...]
    output: OutputConfig
    provided: frozenset = field(default_factory=frozenset, compare=False, repr=False)


def _pi_over(denom: float) -> float:
    return 2.0 * math.pi / denom

# Schema: section -> key -> (type tag, default, help). Defaults of None mark
# keys that are only required for certain modes or parameter styles.
SCHEMA: dict[str, dict[str, tuple[str, object, str]]] = {
    "run": {
        "mode": ("str", "quantum", "one of: " + " ".join(MODES)),
        "seed": ("int", 12345, "seed for every stochastic choice in the run"),
        "threads": ("int", 1, "worker processes for sweep mode"),
    },
    "params": {
        "lambda": ("float", 0.0, "modulation strength (required for classical/quantum/sweep)"),
        "kappa": ("float", 5.0, "inverse scaled decay length of the mirror"),
        "v0": ("float", 20.0, "scaled mirror height"),
        "kbar": ("float", None, "effective Planck constant (required)"),
    },
    "lab": {
        "mass": ("float", None, "atom mass, kg"),
        "omega": ("float", None, "modulation angular frequency, rad/s"),
        "epsilon": ("float", None, "intensity-modulation amplitude"),
        "decay_k": ("float", None, "evanescent-field decay rate, 1/m"),
        "g": ("float", DEFAULT_G, "gravitational acceleration, m/s^2"),
        "hbar": ("float", DEFAULT_HBAR, "reduced Planck constant, J s"),
        "omega_eff": ("float", DEFAULT_OMEGA_EFF, "effective Rabi frequency, rad/s"),
    },
    "grid": {
        "z_min": ("float", -10.0, "lower grid edge, scaled units"),
        "z_max": ("float", 2000.0, "upper grid edge, scaled units"),
        "n": ("int", 32768, "grid points (power of two)"),
    },
    "classical": {
        "dt": ("float", _pi_over(2000.0), "trajectory step; recording cadence in hard mode"),
        "mode": ("str", "soft", "soft (leapfrog) or hard (event-driven wall)"),
        "event_tol": ("float", 1e-12, "wall-crossing root tolerance"),
    },
    "quantum": {
        "dt": ("float", _pi_over(2000.0), "split-operator step"),
        "boundary": ("str", "reflecting", "reflecting or absorber"),
        "absorber_width": ("float", 0.1, "absorber ramp as a fraction of the grid"),
        "leak_threshold": ("float", 1e-3, "abort when edge probability exceeds this"),
    },
    "scenario": {
        "t_final": ("float", 100.0, "propagation end time, scaled units"),
        "record_every": ("int", 100, "steps between series rows"),
        "snapshot_every": ("int", 0, "steps between raster snapshots (0 = none)"),
        "snapshot_downsample": ("int", 16, "block-average factor for raster columns"),
        "z0": ("float", 40.0, "initial packet / ensemble center"),
        "p0": ("float", 0.0, "initial mean momentum"),
        "dz": ("float", 0.0, "position width; 0 = minimum-uncertainty sqrt(kbar/2)"),
        "dp": ("float", 0.0, "momentum width (classical); 0 = kbar/(2 dz)"),
        "shape": ("str", "gaussian", "gaussian or uniform (classical ensembles)"),
        "t0": ("float", 0.0, "start time (sets the initial mirror phase)"),
        "n_points": ("int", 1000, "classical ensemble size"),
    },
    "windows": {
        "s_max": ("float", 2.0, "largest acceleration branch index to report"),
    },
    "sweep": {
        "parameter": ("str", "kbar", "swept parameter (kbar)"),
        "values": ("str", "1,4,8,12,14", "comma-separated sweep values"),
    },
    "output": {
        "dir": ("str", "out", "output directory"),
        "raster": ("bool", True, "write raster.pgm when snapshots exist"),
        "plot_script": ("bool", True, "write a gnuplot script next to the CSVs"),
    },
    "meta": {
        "package_version": ("str", "", "written by the manifest; ignored on input"),
        "format_version": ("str", "1", "manifest format marker"),
    },
}


def _convert(kind: str, text: str, line: int, name: str):
    if kind == "float":
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"key {name} expects a number, got {text!r}", line) from None
    if kind == "int":
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"key {name} expects an integer, got {text!r}", line) from None
    if kind == "bool":
        if text.lower() in ("true", "yes", "1"):
            return True
        if text.lower() in ("false", "no", "0"):
            return False
        raise ConfigError(f"key {name} expects true/false, got {text!r}", line)
    return text


def _parse_raw(text: str) -> dict[tuple[str, str], tuple[object, int]]:
    raw: dict[tuple[str, str], tuple[object, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'section.key = value', got {stripped!r}", lineno)
        name, value = (part.strip() for part in stripped.split("=", 1))
        if "." not in name:
            raise ConfigError(f"key {name!r} is missing its section prefix", lineno)
        section, key = name.split(".", 1)
        if section not in SCHEMA:
            raise ConfigError(f"unknown section {section!r} in key {name!r}", lineno)
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {name!r}", lineno)
        if (section, key) in raw:
            raise ConfigError(f"duplicate key {name!r}", lineno)
        kind = SCHEMA[section][key][0]
        raw[(section, key)] = (_convert(kind, value, lineno, name), lineno)
    return raw


def _require(raw, section, key):
    if (section, key) not in raw:
        raise ConfigError(f"missing required key '{section}.{key}'")
    return raw[(section, key)][0]


def _get(raw, section, key):
    if (section, key) in raw:
        return raw[(section, key)][0]
    return SCHEMA[section][key][1]


def _parse_sweep_values(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"sweep.values must be comma-separated numbers, got {text!r}") from None
    if not values:
        raise ConfigError("sweep.values is empty")
    return values


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text into a resolved RunConfig."""
    raw = _parse_raw(text)
    provided = frozenset(f"{s}.{k}" for (s, k) in raw)

    mode = _get(raw, "run", "mode")
    if mode not in MODES:
        raise ConfigError(f"run.mode must be one of {', '.join(MODES)}, got {mode!r}")

    lab_given = any(s == "lab" for s, _ in raw)
    params_given = any(s == "params" for s, _ in raw)
    if lab_given and params_given:
        raise ConfigError("provide either the lab.* block or the params.* block, not both")
    if mode == "convert" and not lab_given:
        raise ConfigError("convert mode requires the lab.* block")

    try:
        if lab_given:
            lab = LabParams(
                mass=_require(raw, "lab", "mass"),
                omega=_require(raw, "lab", "omega"),
                epsilon=_require(raw, "lab", "epsilon"),
                decay_k=_require(raw, "lab", "decay_k"),
                g=_get(raw, "lab", "g"),
                hbar=_get(raw, "lab", "hbar"),
                omega_eff=_get(raw, "lab", "omega_eff"),
            )
            params = scale_to_dimensionless(lab)
            style = "lab"
        else:
            lab = None
            if mode in ("classical", "quantum", "sweep") and ("params", "lambda") not in raw:
                raise ConfigError("missing required key 'params.lambda'")
            params = DimensionlessParams(
                lam=_get(raw, "params", "lambda"),
                kappa=_get(raw, "params", "kappa"),
                v0=_get(raw, "params", "v0"),
                kbar=_require(raw, "params", "kbar"),
            )
            style = "dimensionless"

        grid = GridSpec(z_min=_get(raw, "grid", "z_min"), z_max=_get(raw, "grid", "z_max"),
                        n=_get(raw, "grid", "n"))
        classical_cfg = IntegratorConfig(
            dt=_get(raw, "classical", "dt"),
            mode=_get(raw, "classical", "mode"),
            event_tol=_get(raw, "classical", "event_tol"),
        )
        quantum_cfg = PropagatorConfig(
            dt=_get(raw, "quantum", "dt"),
            boundary=_get(raw, "quantum", "boundary"),
            absorber_width=_get(raw, "quantum", "absorber_width"),
            leak_threshold=_get(raw, "quantum", "leak_threshold"),
        )

        dz = _get(raw, "scenario", "dz")
        if dz == 0.0:
            dz = math.sqrt(params.kbar / 2.0)
        dp = _get(raw, "scenario", "dp")
        if dp == 0.0:
            dp = params.kbar / (2.0 * dz)
        scenario = ScenarioConfig(
            t_final=_get(raw, "scenario", "t_final"),
            record_every=_get(raw, "scenario", "record_every"),
            snapshot_every=_get(raw, "scenario", "snapshot_every"),
            snapshot_downsample=_get(raw, "scenario", "snapshot_downsample"),
            z0=_get(raw, "scenario", "z0"),
            p0=_get(raw, "scenario", "p0"),
            dz=dz,
            dp=dp,
            shape=_get(raw, "scenario", "shape"),
            t0=_get(raw, "scenario", "t0"),
            n_points=_get(raw, "scenario", "n_points"),
        )
        if scenario.shape not in ("gaussian", "uniform"):
            raise ConfigError(f"scenario.shape must be gaussian or uniform, got {scenario.shape!r}")
        if scenario.t_final < scenario.t0:
            raise ConfigError("scenario.t_final must not precede scenario.t0")
        if scenario.record_every < 1:
            raise ConfigError("scenario.record_every must be >= 1")
        if scenario.n_points < 1:
            raise ConfigError("scenario.n_points must be >= 1")

        s_max = validate_branch_index(_get(raw, "windows", "s_max"))
        sweep_parameter = _get(raw, "sweep", "parameter")
        if sweep_parameter != "kbar":
            raise ConfigError(f"sweep.parameter supports only 'kbar', got {sweep_parameter!r}")
        sweep_values = _parse_sweep_values(_get(raw, "sweep", "values"))
        output = OutputConfig(dir=_get(raw, "output", "dir"), raster=_get(raw, "output", "raster"),
                              plot_script=_get(raw, "output", "plot_script"))
    except InvalidParameterError as exc:
        raise ConfigError(str(exc)) from exc

    return RunConfig(
        mode=mode,
        seed=_get(raw, "run", "seed"),
        threads=_get(raw, "run", "threads"),
        param_style=style,
        params=params,
        lab=lab,
        grid=grid,
        classical_cfg=classical_cfg,
        quantum_cfg=quantum_cfg,
        scenario=scenario,
        windows_s_max=s_max,
        sweep_parameter=sweep_parameter,
        sweep_values=sweep_values,
        output=output,
        provided=provided,
    )


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def render_config(config: RunConfig, meta: dict[str, str] | None = None) -> str:
    """Deterministic text for the resolved config; reparses to an equal RunConfig."""
    lines: list[str] = []

    def emit(section: str, key: str, value) -> None:
        lines.append(f"{section}.{key} = {_fmt(value)}")

    emit("run", "mode", config.mode)
    emit("run", "seed", config.seed)
    emit("run", "threads", config.threads)
    if config.param_style == "lab":
        lab = config.lab
        for key in ("mass", "omega", "epsilon", "decay_k", "g", "hbar", "omega_eff"):
            emit("lab", key, getattr(lab, key))
        p = config.params
        lines.append(f"# resolved dimensionless: lambda={_fmt(p.lam)} kappa={_fmt(p.kappa)} "
                     f"v0={_fmt(p.v0)} kbar={_fmt(p.kbar)}")
    else:
        emit("params", "lambda", config.params.lam)
        emit("params", "kappa", config.params.kappa)
        emit("params", "v0", config.params.v0)
        emit("params", "kbar", config.params.kbar)
    emit("grid", "z_min", config.grid.z_min)
    emit("grid", "z_max", config.grid.z_max)
    emit("grid", "n", config.grid.n)
    emit("classical", "dt", config.classical_cfg.dt)
    emit("classical", "mode", config.classical_cfg.mode)
    emit("classical", "event_tol", config.classical_cfg.event_tol)
    emit("quantum", "dt", config.quantum_cfg.dt)
    emit("quantum", "boundary", config.quantum_cfg.boundary)
    emit("quantum", "absorber_width", config.quantum_cfg.absorber_width)
    emit("quantum", "leak_threshold", config.quantum_cfg.leak_threshold)
    sc = config.scenario
    for key in ("t_final", "record_every", "snapshot_every", "snapshot_downsample",
                "z0", "p0", "dz", "dp", "shape", "t0", "n_points"):
        emit("scenario", key, getattr(sc, key))
    emit("windows", "s_max", config.windows_s_max)
    emit("sweep", "parameter", config.sweep_parameter)
    emit("sweep", "values", ",".join(_fmt(v) for v in config.sweep_values))
    emit("output", "dir", config.output.dir)
    emit("output", "raster", config.output.raster)
    emit("output", "plot_script", config.output.plot_script)
    for key, value in (meta or {}).items():
        emit("meta", key, value)
    return "\n".join(lines) + "\n"


def default_config_text() -> str:
    """A fully commented config with every key at its default."""
    lines = ["# fermi-bullet run configuration", "# format: section.key = value", ""]
    for section, keys in SCHEMA.items():
        if section == "meta":
            continue
        if section == "lab":
            lines.append("# lab.* is the alternative to params.*; uncomment to use SI inputs")
        for key, (kind, default, help_text) in keys.items():
            lines.append(f"# {help_text}")
            if default is None:
                lines.append(f"# {section}.{key} = <{kind}>  (required)")
            elif section == "lab":
                lines.append(f"# {section}.{key} = {_fmt(default)}")
            else:
                lines.append(f"{section}.{key} = {_fmt(default)}")
        lines.append("")
    return "\n".join(lines)
