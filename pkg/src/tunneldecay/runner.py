"""Scenario pipeline: profile -> poles -> states -> dynamics (-> oracle)."""

from __future__ import annotations

import json
import shutil
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig
from .dynamics import (DecaySeries, decompose, fit_exponential_rate, fit_power_exponent,
                       nonescape_full, time_grid, transition_time)
from .errors import DecayError, DynamicsError
from .poles import PoleSet, find_poles, pole_trajectory
from .potentials import (BathtubParams, Grid, HeidelbergParams, PotentialProfile,
                         box_initial_state, build_profile)
from .states import ExpansionSet, build_state, overlaps
from .tdse import TdseConfig, compare, evolve

SERIES_HEADER = "t_ms,t_over_tau,P_full,P_e,P_ene,P_ne,lnP"
POLES_HEADER = "n,Re_kappa,Im_kappa,E_kHz,Gamma_kHz,R"


def fmt(v) -> str:
    """Fixed float formatting shared by every output file."""
    return f"{float(v):.12e}"


@dataclass
class RunReport:
    name: str
    params: dict
    kappa1: complex
    E1_kHz: float
    Gamma1_kHz: float
    R: float
    tau_ms: float
    ReC1sq: float
    n_poles: int
    sum_rule: float
    sum_rule_deficit: float
    t0_lifetimes: float
    winter_lifetimes: float
    fits: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    x0: float = 0.0
    # P(t) below this time (in lifetimes) needs more poles than were kept
    unreliable_below_tau: float | None = None
    version: str = __version__
    wall_time_s: float = 0.0

    def to_dict(self, with_timing: bool = False) -> dict:
        d = {"name": self.name, "params": self.params,
             "kappa1": [self.kappa1.real, self.kappa1.imag], "E1_kHz": self.E1_kHz,
             "Gamma1_kHz": self.Gamma1_kHz, "R": self.R, "tau_ms": self.tau_ms,
             "ReC1sq": self.ReC1sq, "n_poles": self.n_poles, "sum_rule": self.sum_rule,
             "sum_rule_deficit": self.sum_rule_deficit, "t0_lifetimes": self.t0_lifetimes,
             "winter_lifetimes": self.winter_lifetimes, "x0_um": self.x0, "fits": self.fits,
             "unreliable_below_tau": self.unreliable_below_tau,
             "oracle": self.oracle, "version": self.version}
        if with_timing:
            d["wall_time_s"] = self.wall_time_s
        return d


@dataclass
class ScenarioResult:
    report: RunReport
    profile: PotentialProfile
    poles: PoleSet
    expansion: ExpansionSet
    series: DecaySeries | None = None
    oracle_series: DecaySeries | None = None


def make_profile(cfg: ScenarioConfig, params: dict | None = None) -> PotentialProfile:
    p = dict(cfg.params if params is None else params)
    ps = cfg.profile
    if cfg.model == "bathtub":
        return build_profile("bathtub", BathtubParams(**p), ps.n_segments,
                             left_wall=ps.left_wall, plateau_depth=ps.plateau_depth,
                             tail_tol=ps.tail_tol)
    if cfg.model == "heidelberg":
        return build_profile("heidelberg", HeidelbergParams(**p), ps.n_segments,
                             cutoff_factor=ps.cutoff_factor)
    return PotentialProfile.from_segments(list(zip(p["widths"], p["heights"])),
                                          provenance={"model": "segments"})


def _box_origin(cfg, profile, poles):
    x0 = cfg.initial.x0
    if x0 != "peak":
        return float(x0)
    # centre the box on the |u_1|^2 maximum inside the well (left of the barrier top)
    grid = Grid.for_profile(profile, panels=16)
    state = build_state(poles[0], profile, grid)
    x_bar = profile.provenance.get("x_barrier", profile.L)
    m = grid.x <= x_bar
    dens = np.abs(state.values[m]) ** 2
    x_pk = float(grid.x[m][np.argmax(dens)])
    w = cfg.initial.w
    return float(min(max(x_pk - 0.5 * w, 0.0), profile.L - w))


def run_scenario(cfg: ScenarioConfig, *, n_poles: int | None = None, oracle: bool | None = None,
                 seed_grid=None, params: dict | None = None,
                 with_series: bool = True) -> ScenarioResult:
    """Execute the pipeline for one scenario (no file output)."""
    start = time.perf_counter()
    profile = make_profile(cfg, params)
    s = cfg.search
    poles = find_poles(profile, tuple(s.window_khz), s.depth_khz,
                       seed_grid=tuple(seed_grid or s.seed_grid))
    if not len(poles):
        raise DynamicsError(f"{cfg.name}: no pole in the search window")
    x0 = _box_origin(cfg, profile, poles)
    w = cfg.initial.w
    grid = Grid.for_profile(profile, extra_breaks=(x0, x0 + w))
    initial = box_initial_state(w, x0, grid)
    n_use = min(n_poles or s.n_poles, len(poles))
    states = [build_state(p, profile, grid) for p in poles.poles[:n_use]]
    ex = overlaps(states, initial)
    p1 = poles[0]
    tr = transition_time(p1.R)
    report = RunReport(
        name=cfg.name, params=dict(cfg.params if params is None else params),
        kappa1=p1.kappa, E1_kHz=p1.energy, Gamma1_kHz=p1.width, R=p1.R, tau_ms=p1.lifetime,
        ReC1sq=float((ex.C[0] ** 2).real), n_poles=n_use, sum_rule=ex.sum_rule,
        sum_rule_deficit=ex.sum_rule_deficit, t0_lifetimes=tr.t0, winter_lifetimes=tr.winter,
        x0=x0)
    series = None
    if with_series and cfg.time is not None:
        tg = time_grid(p1.lifetime, cfg.time.start, cfg.time.stop, cfg.time.n)
        series = nonescape_full(tg, ex, tau=p1.lifetime)
        dec = decompose(ex, tg)
        series.P_e, series.P_ene, series.P_ne = dec.P_e, dec.P_ene, dec.P_ne
        report.unreliable_below_tau = series.meta["unreliable_below_ms"] / p1.lifetime
        fits = {}
        try:
            fe = fit_exponential_rate(series, tuple(cfg.fits.exp_window))
            fits["exp_rate_per_ms"] = fe.value
            fits["exp_rate_rel_error"] = fe.value / p1.decay_rate - 1.0
            fits["exp_regime"] = fe.regime
        except DynamicsError as exc:
            fits["exp_error"] = str(exc)
        pw = cfg.fits.power_window
        if pw is not None:
            try:
                fits["power_exponent"] = fit_power_exponent(series, tuple(pw)).value
            except DynamicsError as exc:
                fits["power_error"] = str(exc)
        report.fits = fits
    oracle_series = None
    if (cfg.oracle.enabled if oracle is None else oracle):
        o = cfg.oracle
        lo, hi = o.window
        to = time_grid(p1.lifetime, lo, hi, o.n)
        oracle_series = evolve(profile, initial, to, TdseConfig(extent=o.extent, dx=o.dx, dt=o.dt),
                               tau=p1.lifetime, probe=o.probe)
        res = nonescape_full(to, ex, tau=p1.lifetime)
        cmp = compare(res, oracle_series, (lo, hi))
        report.oracle = {"window": [lo, hi], "max_rel": cmp.max_rel, "rms_rel": cmp.rms_rel,
                         "probe_deviation": oracle_series.meta.get("probe_deviation")}
        oracle_series.meta["resonant"] = res.P_full
    report.wall_time_s = time.perf_counter() - start
    return ScenarioResult(report=report, profile=profile, poles=poles, expansion=ex,
                          series=series, oracle_series=oracle_series)


# --------------------------------------------------------------------------
# file output


def poles_csv(poles: PoleSet) -> str:
    lines = [POLES_HEADER]
    for p in poles:
        lines.append(",".join([str(p.n), fmt(p.kappa.real), fmt(p.kappa.imag), fmt(p.energy),
                               fmt(p.width), fmt(p.R)]))
    return "\n".join(lines) + "\n"


def series_csv(series: DecaySeries) -> str:
    n = series.t.size
    cols = [series.t, series.t_over_tau, series.P_full,
            series.P_e if series.P_e is not None else np.full(n, np.nan),
            series.P_ene if series.P_ene is not None else np.full(n, np.nan),
            series.P_ne if series.P_ne is not None else np.full(n, np.nan),
            series.lnP]
    lines = [SERIES_HEADER]
    for row in zip(*cols):
        lines.append(",".join(fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def oracle_csv(series: DecaySeries) -> str:
    lines = ["t_ms,t_over_tau,P_tdse,P_resonant"]
    res = series.meta.get("resonant")
    for i in range(series.t.size):
        lines.append(",".join([fmt(series.t[i]), fmt(series.t_over_tau[i]),
                               fmt(series.P_full[i]), fmt(res[i])]))
    return "\n".join(lines) + "\n"


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o).__name__)


class _Staging:
    """Write into a temporary directory and move files into ``out`` only on
    success, so a failing run leaves no partial outputs."""

    def __init__(self, out):
        self.out = Path(out)

    def __enter__(self):
        self.out.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                for f in sorted(self.tmp.rglob("*")):
                    if f.is_file():
                        dest = self.out / f.relative_to(self.tmp)
                        dest.parent.mkdir(parents=True, exist_ok=True)
                        shutil.move(str(f), dest)
        finally:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def write_outputs(result: ScenarioResult, folder: Path, stem: str = ""):
    pre = f"{stem}_" if stem else ""
    (folder / f"{pre}report.json").write_text(_json(result.report.to_dict()))
    (folder / f"{pre}poles.csv").write_text(poles_csv(result.poles))
    if result.series is not None:
        (folder / f"{pre}series.csv").write_text(series_csv(result.series))
    if result.oracle_series is not None:
        (folder / f"{pre}oracle.csv").write_text(oracle_csv(result.oracle_series))


def run_to_dir(cfg: ScenarioConfig, out, **kw) -> ScenarioResult:
    with _Staging(out) as tmp:
        try:
            result = run_scenario(cfg, **kw)
        except DecayError as exc:
            exc.args = (f"scenario {cfg.name!r}: {exc}",)
            raise
        write_outputs(result, tmp)
    return result


def run_sweep(cfg: ScenarioConfig, out=None, *, n_poles=None, seed_grid=None):
    """Run the scenario once per swept value and continue pole 1 through the
    sweep.  Returns ``(reports, trajectory)``."""
    if cfg.sweep is None:
        raise DynamicsError(f"scenario {cfg.name!r} has no sweep section")
    param, values = cfg.sweep.param, list(cfg.sweep.values)
    results = []
    for v in values:
        params = dict(cfg.params, **{param: v})
        results.append(run_scenario(cfg, params=params, n_poles=n_poles, seed_grid=seed_grid,
                                    oracle=False))

    def prof(v):
        return make_profile(cfg, dict(cfg.params, **{param: v}))

    track = pole_trajectory(prof, values, results[0].poles[0].kappa)
    if out is not None:
        with _Staging(out) as tmp:
            for i, r in enumerate(results):
                write_outputs(r, tmp, stem=f"step{i:03d}")
            lines = [f"{param}," + POLES_HEADER.split(",", 1)[1]]
            for v, p in zip(values, track):
                lines.append(",".join([fmt(v), fmt(p.kappa.real), fmt(p.kappa.imag),
                                       fmt(p.energy), fmt(p.width), fmt(p.R)]))
            (tmp / "trajectory.csv").write_text("\n".join(lines) + "\n")
            summary = [r.report.to_dict() for r in results]
            (tmp / "sweep.json").write_text(_json(summary))
    return [r.report for r in results], track


def poles_only(cfg: ScenarioConfig, out=None, *, seed_grid=None) -> PoleSet:
    profile = make_profile(cfg)
    s = cfg.search
    poles = find_poles(profile, tuple(s.window_khz), s.depth_khz,
                       seed_grid=tuple(seed_grid or s.seed_grid))
    if out is not None:
        with _Staging(out) as tmp:
            (tmp / "poles.csv").write_text(poles_csv(poles))
    return poles


def with_time(cfg: ScenarioConfig, **kw) -> ScenarioConfig:
    return replace(cfg, time=replace(cfg.time, **kw))
