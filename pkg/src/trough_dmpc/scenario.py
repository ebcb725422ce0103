"""Scenario description: plant/controller parameters and exogenous inputs.

Scenario files are TOML.  Omitted numeric fields take the nominal 10-loop
plant values below.  Loop indices in files are 1-based (matching the
``I_1..I_n`` CSV header); they are 0-based everywhere in code.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib
import tomli_w

from .plant import ExogenousInputs, LoopParams


class ScenarioError(ValueError):
    pass


@dataclass
class CloudEvent:
    loops: tuple[int, ...]
    start: float
    end: float
    attenuation: float
    ramp: float = 0.0

    def __post_init__(self):
        self.loops = tuple(int(i) for i in self.loops)
        if not 0.0 <= self.attenuation <= 1.0:
            raise ScenarioError(f"cloud attenuation {self.attenuation} outside [0, 1]")
        if not self.start < self.end:
            raise ScenarioError(f"cloud event start {self.start} must precede end {self.end}")
        if self.ramp < 0:
            raise ScenarioError("cloud ramp must be non-negative")

    def factor(self, t):
        """Fraction of irradiance removed at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        ramp = min(self.ramp, 0.5 * (self.end - self.start))
        if ramp > 0:
            up = np.clip((t - self.start) / ramp, 0.0, 1.0)
            down = np.clip((self.end - t) / ramp, 0.0, 1.0)
            shape = np.minimum(up, down)
        else:
            shape = ((t >= self.start) & (t < self.end)).astype(float)
        return self.attenuation * shape


@dataclass
class IrradianceSpec:
    source: str = "synthetic"
    peak: float = 850.0
    day_length: float | None = None
    day_offset: float = 0.0
    file: str | None = None
    random_events: int = 0
    events: list[CloudEvent] = field(default_factory=list)


@dataclass
class AmbientSpec:
    base: float = 25.0
    amplitude: float = 0.0


@dataclass
class AladinSettings:
    rho0: float = 1.0
    mu0: float = 1e3
    max_iter: int = 50
    sigma: float = 1.0


@dataclass
class ScenarioConfig:
    n_loops: int = 10
    duration: float = 25200.0
    dt_sim: float = 0.5
    dt_control: float = 30.0
    dt_cluster: float = 150.0
    horizon: int = 5
    q_min: float = 0.2e-3
    q_max: float = 2e-3
    t_min: float = 220.0
    t_max: float = 305.0
    q_total: float = 9e-3
    w_e: float = 1e-3
    w_q: float = 1.0
    epsilon: float = 1e-5
    t_ref: float = 250.0
    t_ref_file: str | None = None
    t_init: float | list[float] | None = None
    t_in0: float | None = None
    eta: float | list[float] = 0.6
    A: float = 5.067e-4
    L: float = 142.0
    S: float = 267.4
    seed: int = 0
    n_cl_max: int = 5
    band_penalty: float = 1e6
    warmup: float = 300.0
    irradiance: IrradianceSpec = field(default_factory=IrradianceSpec)
    ambient: AmbientSpec = field(default_factory=AmbientSpec)
    aladin: AladinSettings = field(default_factory=AladinSettings)
    base_dir: str = field(default=".", repr=False, compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.n_loops < 1:
            raise ScenarioError("n_loops must be at least 1")
        for name in ("duration", "dt_sim", "dt_control", "dt_cluster"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"{name} must be positive")
        if not _is_multiple(self.dt_control, self.dt_sim):
            raise ScenarioError(
                f"dt_control={self.dt_control} is not an integer multiple of dt_sim={self.dt_sim}"
            )
        if math.isfinite(self.dt_cluster) and not _is_multiple(self.dt_cluster, self.dt_sim):
            raise ScenarioError(
                f"dt_cluster={self.dt_cluster} is not an integer multiple of dt_sim={self.dt_sim}"
            )
        if not self.q_min < self.q_max:
            raise ScenarioError("q_min must be smaller than q_max")
        if not self.t_min < self.t_max:
            raise ScenarioError("t_min must be smaller than t_max")
        if self.horizon < 1:
            raise ScenarioError("horizon must be at least 1")
        if self.n_loops * self.q_min > self.q_total:
            raise ScenarioError("q_total cannot supply q_min to every loop")
        if self.epsilon <= 0:
            raise ScenarioError("epsilon must be positive")
        if self.n_cl_max < 1:
            raise ScenarioError("n_cl_max must be at least 1")
        if isinstance(self.eta, list) and len(self.eta) != self.n_loops:
            raise ScenarioError(f"eta lists {len(self.eta)} values for {self.n_loops} loops")
        if isinstance(self.t_init, list) and len(self.t_init) != self.n_loops:
            raise ScenarioError(f"t_init lists {len(self.t_init)} values for {self.n_loops} loops")
        if self.irradiance.source not in ("synthetic", "file"):
            raise ScenarioError(f"unknown irradiance source {self.irradiance.source!r}")
        if self.irradiance.source == "file" and not self.irradiance.file:
            raise ScenarioError("irradiance.source = 'file' requires irradiance.file")
        if self.irradiance.peak <= 0:
            raise ScenarioError("irradiance.peak must be positive")
        for ev in self.irradiance.events:
            if any(not 0 <= i < self.n_loops for i in ev.loops):
                raise ScenarioError(f"cloud event references loop outside 1..{self.n_loops}")
        LoopParams(eta=max(self.etas), A=self.A, L=self.L, S=self.S)
        LoopParams(eta=min(self.etas), A=self.A, L=self.L, S=self.S)

    @property
    def delta_c(self) -> int:
        return int(round(self.dt_control / self.dt_sim))

    @property
    def delta_cl(self) -> int | None:
        if not math.isfinite(self.dt_cluster):
            return None
        return int(round(self.dt_cluster / self.dt_sim))

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt_sim))

    @property
    def etas(self) -> list[float]:
        if isinstance(self.eta, list):
            return [float(e) for e in self.eta]
        return [float(self.eta)] * self.n_loops

    @property
    def loop_params(self) -> list[LoopParams]:
        return [LoopParams(eta=e, A=self.A, L=self.L, S=self.S) for e in self.etas]

    def initial_temperatures(self) -> np.ndarray:
        if self.t_init is None:
            return np.full(self.n_loops, self.reference_at(0.0) - 10.0)
        if isinstance(self.t_init, list):
            return np.array(self.t_init, dtype=float)
        return np.full(self.n_loops, float(self.t_init))

    def reference_at(self, t) -> float:
        if self.t_ref_file is None:
            return float(self.t_ref)
        times, values = _reference_table(self._resolve(self.t_ref_file))
        idx = max(int(np.searchsorted(times, t, side="right")) - 1, 0)
        return float(values[idx])

    def _resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p


def _is_multiple(a, b) -> bool:
    r = a / b
    return abs(r - round(r)) <= 1e-9 * max(1.0, abs(r)) and round(r) >= 1


_REF_CACHE: dict[Path, tuple[np.ndarray, np.ndarray]] = {}


def _reference_table(path: Path):
    if path not in _REF_CACHE:
        rows = _read_csv(path)
        if "t_ref" not in rows:
            raise ScenarioError(f"{path}: missing column 't_ref'")
        _REF_CACHE[path] = (rows["t_s"], rows["t_ref"])
    return _REF_CACHE[path]


def _read_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        data = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                data.append([float(v) for v in row])
            except ValueError as exc:
                raise ScenarioError(f"{path}:{lineno}: {exc}") from exc
            if len(row) != len(header):
                raise ScenarioError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
    arr = np.array(data, dtype=float).reshape(-1, len(header))
    if "t_s" not in header:
        raise ScenarioError(f"{path}: missing column 't_s'")
    return {h: arr[:, i] for i, h in enumerate(header)}


# ---------------------------------------------------------------------------
# file round trip

_SECTIONS = {"irradiance": IrradianceSpec, "ambient": AmbientSpec, "aladin": AladinSettings}


def _check_keys(table: dict, cls, where: str):
    allowed = {f.name for f in fields(cls)} - {"base_dir"}
    for key in table:
        if key not in allowed:
            raise ScenarioError(f"{where}: unknown field {key!r}")


def _coerce(cls, table: dict, where: str):
    out = {}
    types = {f.name: f.type for f in fields(cls)}
    for key, value in table.items():
        t = str(types[key])
        if t in ("int",) and not isinstance(value, int):
            raise ScenarioError(f"{where}.{key}: expected an integer, got {value!r}")
        if t == "float" and not isinstance(value, (int, float)):
            raise ScenarioError(f"{where}.{key}: expected a number, got {value!r}")
        if t == "float" and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        out[key] = value
    return out


def scenario_from_dict(doc: dict, base_dir: str = ".") -> ScenarioConfig:
    _check_keys(doc, ScenarioConfig, "scenario")
    top = {k: v for k, v in doc.items() if k not in _SECTIONS}
    if isinstance(top.get("dt_cluster"), str) and top["dt_cluster"].lower() in ("inf", "infinity"):
        top["dt_cluster"] = math.inf
    top = _coerce(ScenarioConfig, top, "scenario")
    kwargs = dict(top)
    for name, cls in _SECTIONS.items():
        section = dict(doc.get(name, {}))
        _check_keys(section, cls, name)
        if name == "irradiance":
            events = []
            for i, ev in enumerate(section.pop("events", [])):
                _check_keys(ev, CloudEvent, f"irradiance.events[{i}]")
                loops = ev.get("loops", [])
                events.append(CloudEvent(
                    loops=tuple(int(j) - 1 for j in loops),
                    start=float(ev["start"]),
                    end=float(ev["end"]),
                    attenuation=float(ev["attenuation"]),
                    ramp=float(ev.get("ramp", 0.0)),
                ))
            section = _coerce(cls, section, name)
            section["events"] = events
        else:
            section = _coerce(cls, section, name)
        kwargs[name] = cls(**section)
    try:
        return ScenarioConfig(base_dir=base_dir, **kwargs)
    except TypeError as exc:
        raise ScenarioError(str(exc)) from exc


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return scenario_from_dict(doc, base_dir=str(path.parent))


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    doc = {}
    for f in fields(cfg):
        if f.name in _SECTIONS or f.name == "base_dir":
            continue
        value = getattr(cfg, f.name)
        if value is None:
            continue
        if isinstance(value, float) and math.isinf(value):
            value = "inf"
        doc[f.name] = value
    irr = asdict(cfg.irradiance)
    irr["events"] = [
        dict(loops=[i + 1 for i in ev.loops], start=ev.start, end=ev.end,
             attenuation=ev.attenuation, ramp=ev.ramp)
        for ev in cfg.irradiance.events
    ]
    doc["irradiance"] = {k: v for k, v in irr.items() if v is not None}
    doc["ambient"] = asdict(cfg.ambient)
    doc["aladin"] = asdict(cfg.aladin)
    return doc


def save_scenario(cfg: ScenarioConfig, path) -> None:
    with open(path, "wb") as fh:
        tomli_w.dump(scenario_to_dict(cfg), fh)


# ---------------------------------------------------------------------------
# exogenous inputs

@dataclass
class ExogenousTable:
    """Piecewise-constant samples: row r holds on [times[r], times[r+1])."""

    times: np.ndarray
    irradiance: np.ndarray
    t_ambient: np.ndarray

    def index(self, t: float) -> int:
        return max(int(np.searchsorted(self.times, t, side="right")) - 1, 0)


def random_events(n_loops, duration, count, rng) -> list[CloudEvent]:
    events = []
    for _ in range(count):
        size = int(rng.integers(1, max(2, n_loops // 2) + 1))
        loops = tuple(sorted(rng.choice(n_loops, size=size, replace=False).tolist()))
        length = float(rng.uniform(600.0, 2400.0))
        start = float(rng.uniform(0.0, max(duration - length, 1.0)))
        events.append(CloudEvent(loops, start, start + length,
                                 float(rng.uniform(0.2, 0.6)), float(rng.uniform(60.0, 300.0))))
    return events


def clear_sky(t, peak, day_length, day_offset=0.0):
    return np.maximum(peak * np.sin(np.pi * (np.asarray(t, float) + day_offset) / day_length), 0.0)


def synth_profile(
    n_loops: int,
    duration: float,
    peak: float,
    events: list[CloudEvent] = (),
    seed: int = 0,
    dt: float = 0.5,
    day_length: float | None = None,
    day_offset: float = 0.0,
    n_random: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Irradiance table (times, I[time, loop]) from a half-sine and cloud events."""
    if peak <= 0:
        raise ScenarioError("peak irradiance must be positive")
    times = np.arange(int(round(duration / dt)) + 1) * dt
    base = clear_sky(times, peak, day_length or duration, day_offset)
    I = np.repeat(base[:, None], n_loops, axis=1)
    evs = list(events)
    if n_random:
        evs += random_events(n_loops, duration, n_random, np.random.default_rng(seed))
    for ev in evs:
        keep = 1.0 - ev.factor(times)
        for i in ev.loops:
            I[:, i] *= keep
    return times, I


def build_exogenous(cfg: ScenarioConfig) -> ExogenousTable:
    spec = cfg.irradiance
    if spec.source == "file":
        rows = _read_csv(cfg._resolve(spec.file))
        cols = [f"I_{i + 1}" for i in range(cfg.n_loops)]
        missing = [c for c in cols + ["T_amb"] if c not in rows]
        if missing:
            raise ScenarioError(f"{spec.file}: missing columns {missing}")
        I = np.column_stack([rows[c] for c in cols])
        if np.any(I < 0):
            raise ScenarioError(f"{spec.file}: negative irradiance")
        return ExogenousTable(rows["t_s"], I, rows["T_amb"])
    times, I = synth_profile(
        cfg.n_loops, cfg.duration, spec.peak, spec.events, cfg.seed, cfg.dt_sim,
        spec.day_length, spec.day_offset, spec.random_events,
    )
    day = spec.day_length or cfg.duration
    amb = cfg.ambient.base + cfg.ambient.amplitude * np.sin(np.pi * (times + spec.day_offset) / day)
    return ExogenousTable(times, I, amb)


def sample_exogenous(cfg: ScenarioConfig, k: int, table: ExogenousTable | None = None) -> ExogenousInputs:
    if not 0 <= k <= cfg.n_steps:
        raise ScenarioError(f"step {k} outside 0..{cfg.n_steps}")
    table = table or build_exogenous(cfg)
    r = table.index(k * cfg.dt_sim)
    return ExogenousInputs(table.irradiance[r].copy(), float(table.t_ambient[r]))
