"""Crank-Nicolson reference propagator.

Solves i dPsi/dt = -D Psi'' + 2 pi V(x) Psi on [0, L + extent] with a hard
wall at x = 0, the piecewise-constant profile inside [0, L], V = 0 outside,
and a quadratic complex absorbing potential on the outer part of the domain.
P(t) is the Simpson integral of |Psi|^2 over [0, L].  No resonant-state
machinery is used.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse
from scipy.integrate import simpson
from scipy.sparse.linalg import splu

from .dynamics import DecaySeries
from .errors import OracleError
from .potentials import InitialState, PotentialProfile


@dataclass(frozen=True)
class TdseConfig:
    """``extent`` (um) beyond L (None: the distance a wave at the box
    momentum travels by the last requested time, at least 100 um), node spacing ``dx`` (um), maximal step
    ``dt`` (ms), absorber on the outer ``absorber_fraction`` of the domain
    with peak strength ``absorber_strength`` (1/ms); if that is None the
    strength is set from ``absorber_depth``, the attenuation exponent per pass
    for a wave at the initial box momentum.  ``step_fraction``
    caps the step at that fraction of the current time so short times are
    resolved."""

    extent: float | None = None
    dx: float = 0.005
    dt: float = 1e-3
    absorber: str = "cap"
    absorber_fraction: float = 0.2
    absorber_strength: float | None = None
    absorber_depth: float = 30.0
    step_fraction: float = 0.02

    def __post_init__(self):
        if (self.extent is not None and self.extent <= 0) or self.dx <= 0 or self.dt <= 0:
            raise OracleError("extent, dx and dt must be positive")
        if self.absorber not in ("cap", "none"):
            raise OracleError(f"unknown absorber {self.absorber!r}")
        if not 0 < self.absorber_fraction < 1:
            raise OracleError("absorber_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class Comparison:
    max_rel: float
    rms_rel: float
    n_samples: int
    window: tuple
    interpolated: bool


class _Propagator:
    def __init__(self, profile: PotentialProfile, initial: InitialState, cfg: TdseConfig):
        L = profile.L
        n_in = max(int(np.ceil(L / cfg.dx)), 2)
        n_in += n_in % 2                    # even panel count for Simpson on [0, L]
        h = L / n_in
        n_tot = int(np.ceil((L + cfg.extent) / h))
        x = h * np.arange(n_tot + 1)
        self.h, self.n_in, self.x = h, n_in, x
        D = profile.units.diffusivity
        v = np.zeros(x.size)
        inside = x <= L
        # at a node sitting on an edge use the mean of the adjacent heights
        v[inside] = 0.5 * (profile(np.maximum(x[inside] - 1e-12 * L, 0.0))
                           + profile(np.minimum(x[inside] + 1e-12 * L, L * (1 - 1e-15))))
        pot = 2.0 * np.pi * v.astype(complex)
        if cfg.absorber == "cap":
            x_end = x[-1]
            x_a = x_end - cfg.absorber_fraction * (x_end - L)
            width = x_end - x_a
            eta = cfg.absorber_strength
            if eta is None:
                # amplitude attenuation ~exp(-absorber_depth) per pass for a wave
                # at the box momentum pi/w (group velocity 2 D k)
                v_ref = 2.0 * D * np.pi / initial.w
                eta = 3.0 * cfg.absorber_depth * v_ref / width
            s = np.clip((x - x_a) / width, 0.0, None)
            pot = pot - 1j * eta * s ** 2
        # interior unknowns 1..n_tot-1; Dirichlet at both ends
        m = x.size - 2
        main = 2.0 * D / h ** 2 + pot[1:-1]
        off = -D / h ** 2 * np.ones(m - 1)
        self.H = sparse.diags([off, main, off], [-1, 0, 1], format="csc")
        self.eye = sparse.identity(m, dtype=complex, format="csc")
        psi = np.interp(x, initial.grid.x, initial.values, right=0.0)
        self.psi = psi[1:-1].astype(complex)
        self._lu = {}

    def _solver(self, dt):
        key = round(dt, 15)
        if key not in self._lu:
            if len(self._lu) > 64:
                self._lu.clear()
            A = (self.eye + 0.5j * dt * self.H).tocsc()
            B = (self.eye - 0.5j * dt * self.H).tocsr()
            self._lu[key] = (splu(A), B)
        return self._lu[key]

    def advance(self, delta, dt_max):
        if delta <= 0:
            return
        n = max(int(np.ceil(delta / dt_max - 1e-9)), 1)
        dt = delta / n
        lu, B = self._solver(dt)
        psi = self.psi
        for _ in range(n):
            psi = lu.solve(B @ psi)
        self.psi = psi

    def interior_probability(self) -> float:
        dens = np.abs(self.psi[: self.n_in]) ** 2
        dens = np.concatenate([[0.0], dens])
        return float(simpson(dens, dx=self.h))

    def total_norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.h)


def evolve(profile: PotentialProfile, initial: InitialState, t, config: TdseConfig | None = None,
           *, tau: float = 1.0, probe: bool = True, probe_tol: float = 1e-3,
           probe_floor: float = 1e-12) -> DecaySeries:
    """P(t) on the (sorted) grid ``t``.

    With ``probe`` a second run on a doubled extent is made; a relative
    disagreement above ``probe_tol`` (ignoring P below ``probe_floor``)
    means reflections reach the trap and raises :class:`OracleError`.
    """
    cfg = config or TdseConfig()
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(np.diff(t) <= 0) or t[0] < 0:
        raise OracleError("time grid must be increasing and non-negative")
    if cfg.extent is None:
        v_ref = 2.0 * profile.units.diffusivity * np.pi / initial.w
        cfg = replace(cfg, extent=max(100.0, v_ref * float(t[-1])))
    P = _run(profile, initial, cfg, t)
    meta = {"extent": cfg.extent, "dx": cfg.dx, "dt": cfg.dt}
    if probe:
        P2 = _run(profile, initial, replace(cfg, extent=2.0 * cfg.extent), t)
        m = P2 > probe_floor
        dev = float(np.max(np.abs(P[m] - P2[m]) / P2[m])) if np.any(m) else 0.0
        meta["probe_deviation"] = dev
        if dev > probe_tol:
            raise OracleError(f"boundary reflection detected: doubled extent changes P(t) "
                              f"by {dev:.2e} (> {probe_tol:g})")
    return DecaySeries(t=t, P_full=P, tau=tau, n_poles=0, meta=meta)


def _run(profile, initial, cfg, t):
    prop = _Propagator(profile, initial, cfg)
    out = np.empty(t.size)
    now = 0.0
    for i, ti in enumerate(t):
        # short steps while t is small, capped at cfg.dt
        dt_max = min(cfg.dt, max(cfg.step_fraction * max(now, ti * 0.5), 1e-9))
        prop.advance(ti - now, dt_max)
        now = ti
        out[i] = prop.interior_probability()
    return out


def norm_drift(profile: PotentialProfile, initial: InitialState, config: TdseConfig,
               n_steps: int = 10) -> float:
    """Largest per-step change of the total norm with the absorber off."""
    prop = _Propagator(profile, initial, replace(config, absorber="none"))
    drift = 0.0
    n0 = prop.total_norm()
    for _ in range(n_steps):
        prop.advance(config.dt, config.dt)
        n1 = prop.total_norm()
        drift = max(drift, abs(n1 - n0))
        n0 = n1
    return drift


def compare(a: DecaySeries, b: DecaySeries, window) -> Comparison:
    """Max and RMS relative deviation of ``a`` from ``b`` over ``window``
    (units of b.tau).  ``a`` is interpolated in log P onto ``b``'s grid when
    the grids differ."""
    lo, hi = window
    m = b.window(lo, hi)
    if not np.any(m):
        raise OracleError(f"no samples of the reference in window {window}")
    tb, Pb = b.t[m], b.P_full[m]
    same = a.t.shape == b.t.shape and np.allclose(a.t, b.t, rtol=1e-13, atol=0)
    if same:
        Pa = a.P_full[m]
    else:
        if tb[0] < a.t[0] or tb[-1] > a.t[-1]:
            raise OracleError("series do not overlap on the requested window")
        Pa = np.exp(np.interp(tb, a.t, np.log(np.maximum(a.P_full, 1e-300))))
    rel = np.abs(Pa - Pb) / np.abs(Pb)
    return Comparison(max_rel=float(rel.max()), rms_rel=float(np.sqrt(np.mean(rel ** 2))),
                      n_samples=int(m.sum()), window=(lo, hi), interpolated=not same)
