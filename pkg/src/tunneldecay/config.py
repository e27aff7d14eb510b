"""Scenario configuration (JSON) with strict key checking."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

from .errors import ConfigError

MODELS = ("bathtub", "heidelberg", "segments")

_BATHTUB_KEYS = {"V2", "w", "b", "sigma", "V1", "sigma_in_w"}
_HEIDELBERG_KEYS = {"B_grad", "x_R", "V0_uK", "p", "wavelength_nm", "mu_m", "energy_offset"}
_SEGMENT_KEYS = {"widths", "heights"}


def _take(cls, data: dict, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
    return cls(**data)


@dataclass
class ProfileSpec:
    n_segments: int = 1024
    left_wall: str = "half"
    plateau_depth: float = 6.0
    tail_tol: float = 1e-4
    cutoff_factor: float = 20.0


@dataclass
class InitialSpec:
    w: float = 1.0
    # number (um) or "peak": centre the box on the |u_1|^2 maximum in the well
    x0: float | str = 0.0


@dataclass
class SearchSpec:
    window_khz: list = field(default_factory=lambda: [0.0, 300.0])
    depth_khz: float = 80.0
    seed_grid: list = field(default_factory=lambda: [40, 20])
    n_poles: int = 10


@dataclass
class TimeSpec:
    start: float = 1e-3
    stop: float = 50.0
    n: int = 600


@dataclass
class FitSpec:
    exp_window: list = field(default_factory=lambda: [1.0, 5.0])
    power_window: list | None = None


@dataclass
class OracleSpec:
    enabled: bool = False
    window: list = field(default_factory=lambda: [0.1, 10.0])
    n: int = 60
    dx: float = 0.01
    dt: float = 4e-3
    extent: float | None = None
    probe: bool = True


@dataclass
class SweepSpec:
    param: str = ""
    values: list = field(default_factory=list)


@dataclass
class ScenarioConfig:
    name: str
    model: str
    params: dict
    initial: InitialSpec
    profile: ProfileSpec = field(default_factory=ProfileSpec)
    search: SearchSpec = field(default_factory=SearchSpec)
    time: TimeSpec | None = field(default_factory=TimeSpec)
    fits: FitSpec = field(default_factory=FitSpec)
    oracle: OracleSpec = field(default_factory=OracleSpec)
    sweep: SweepSpec | None = None
    reference: dict = field(default_factory=dict)

    _TOP = ("name", "model", "params", "initial", "profile", "search", "time", "fits",
            "oracle", "sweep", "reference")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("scenario must be a JSON object")
        extra = set(data) - set(cls._TOP)
        if extra:
            raise ConfigError(f"unknown top-level keys {sorted(extra)}")
        for key in ("name", "model", "params", "initial"):
            if key not in data:
                raise ConfigError(f"missing required key {key!r}")
        model = data["model"]
        if model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {model!r}")
        params = data["params"]
        allowed = {"bathtub": _BATHTUB_KEYS, "heidelberg": _HEIDELBERG_KEYS,
                   "segments": _SEGMENT_KEYS}[model]
        if not isinstance(params, dict) or set(params) - allowed:
            raise ConfigError(f"params for {model}: unknown keys "
                              f"{sorted(set(params) - allowed) if isinstance(params, dict) else params}")
        try:
            cfg = cls(
                name=str(data["name"]), model=model, params=dict(params),
                initial=_take(InitialSpec, data["initial"], "initial"),
                profile=_take(ProfileSpec, data.get("profile"), "profile"),
                search=_take(SearchSpec, data.get("search"), "search"),
                time=None if data.get("time", {}) is None else _take(TimeSpec, data.get("time"), "time"),
                fits=_take(FitSpec, data.get("fits"), "fits"),
                oracle=_take(OracleSpec, data.get("oracle"), "oracle"),
                sweep=None if data.get("sweep") is None else _take(SweepSpec, data["sweep"], "sweep"),
                reference=dict(data.get("reference", {})),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    def validate(self):
        p = self.params
        if self.model == "bathtub":
            for k in ("V2", "w", "b", "sigma"):
                if k not in p or not p[k] > 0:
                    raise ConfigError(f"bathtub parameter {k} must be given and positive")
        elif self.model == "heidelberg":
            for k in ("B_grad", "x_R"):
                if k not in p or not p[k] > 0:
                    raise ConfigError(f"heidelberg parameter {k} must be given and positive")
        else:
            w, h = p.get("widths"), p.get("heights")
            if not w or not h or len(w) != len(h) or min(w) <= 0:
                raise ConfigError("segments need equal-length widths (positive) and heights")
        if not self.initial.w > 0:
            raise ConfigError("initial.w must be positive")
        if isinstance(self.initial.x0, str) and self.initial.x0 != "peak":
            raise ConfigError("initial.x0 must be a number or 'peak'")
        lo, hi = self.search.window_khz
        if lo < 0 or hi <= lo or not self.search.depth_khz > 0:
            raise ConfigError("search window must satisfy 0 <= lo < hi and depth > 0")
        if self.search.n_poles < 1:
            raise ConfigError("search.n_poles must be >= 1")
        if self.time is not None and not (0 < self.time.start < self.time.stop and self.time.n >= 2):
            raise ConfigError("time grid needs 0 < start < stop and n >= 2")
        if self.sweep is not None and (not self.sweep.param or not self.sweep.values):
            raise ConfigError("sweep needs a parameter name and at least one value")
        if self.sweep is not None and self.sweep.param not in p:
            raise ConfigError(f"swept parameter {self.sweep.param!r} is not a model parameter")

    def to_dict(self) -> dict:
        out = {"name": self.name, "model": self.model, "params": dict(self.params),
               "initial": asdict(self.initial), "profile": asdict(self.profile),
               "search": asdict(self.search),
               "time": None if self.time is None else asdict(self.time),
               "fits": asdict(self.fits), "oracle": asdict(self.oracle),
               "sweep": None if self.sweep is None else asdict(self.sweep),
               "reference": dict(self.reference)}
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return ScenarioConfig.from_dict(data)


def bundled_names() -> list[str]:
    root = resources.files("tunneldecay") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_config(name: str) -> ScenarioConfig:
    root = resources.files("tunneldecay") / "configs"
    f = root / f"{name}.json"
    if not f.is_file():
        raise ConfigError(f"no bundled scenario {name!r}; have {bundled_names()}")
    return ScenarioConfig.from_dict(json.loads(f.read_text()))
