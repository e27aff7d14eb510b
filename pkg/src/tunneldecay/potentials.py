"""Units, analytic trap models and their piecewise-constant reduction.

Conventions used throughout the package:

* lengths in micrometres, times in milliseconds;
* energies quoted as frequencies V/h in kHz (so 1 kHz = 1/ms);
* ``D = hbar / 2m`` in um^2/ms, so that E/hbar = D kappa^2 (rad/ms) and the
  Schrodinger equation reads ``i dpsi/dt = -D psi'' + 2 pi V(x) psi``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import constants as sc
from scipy.optimize import brentq, minimize_scalar

from .errors import ProfileError

MASS_LI6_ME = 10964.898
KHZ_PER_NEV = 241.8
# k_B/h in kHz per microkelvin, mu_B/h in kHz per gauss
KHZ_PER_UK = sc.k / sc.h * 1e-9
KHZ_PER_GAUSS = sc.physical_constants["Bohr magneton in Hz/T"][0] * 1e-4 * 1e-3


@dataclass(frozen=True)
class UnitSystem:
    mass_me: float = MASS_LI6_ME

    @property
    def diffusivity(self) -> float:
        """hbar/2m in um^2/ms."""
        return sc.hbar / (2.0 * self.mass_me * sc.m_e) * 1e9

    def wavenumber_sq(self, energy_khz):
        """2m E / hbar^2 in 1/um^2 for an energy given as E/h in kHz."""
        return 2.0 * np.pi * np.asarray(energy_khz) / self.diffusivity

    def energy_khz(self, kappa):
        """Complex E/h in kHz for wavenumber ``kappa`` (1/um)."""
        return self.diffusivity * np.asarray(kappa) ** 2 / (2.0 * np.pi)

    def kappa_from_energy(self, energy_khz):
        """Principal-branch wavenumber; maps the lower-right E quadrant to the
        fourth kappa quadrant."""
        return np.sqrt(self.wavenumber_sq(energy_khz) + 0j)


LI6 = UnitSystem()


# --------------------------------------------------------------------------
# analytic models


@dataclass(frozen=True)
class BathtubParams:
    """Tanh-smoothed well with a tall left wall and a finite right barrier.

    ``sigma`` is the smoothing length in units of the well width ``w``
    (smoothing length in um is ``sigma * w``); set ``sigma_in_w=False`` to
    interpret it directly in um.
    """

    V2: float
    w: float
    b: float
    sigma: float
    V1: float = 241.8
    sigma_in_w: bool = True

    def __post_init__(self):
        if min(self.w, self.b, self.sigma) <= 0 or self.V1 <= 0 or self.V2 <= 0:
            raise ProfileError(f"bathtub parameters must be positive: {self}")

    @property
    def L(self) -> float:
        return self.w + self.b

    @property
    def smoothing(self) -> float:
        return self.sigma * self.w if self.sigma_in_w else self.sigma


def bathtub(params: BathtubParams, x):
    """V(x)/h in kHz for the smoothed bathtub trap."""
    x = np.asarray(x, dtype=float)
    s = params.smoothing
    w = params.w
    X1 = (np.abs(x - w / 2) - w / 2) / s
    X2 = (x - params.L) / s
    shape = 0.5 * (np.tanh(X1) - np.tanh(X2))
    return np.where(x < w / 2, params.V1 * shape, params.V2 * shape)


@dataclass(frozen=True)
class HeidelbergParams:
    """Optical dipole trap plus magnetic gradient.

    ``V0_uK`` is the initial trap depth in microkelvin, ``B_grad`` the field
    gradient in G/cm and ``x_R`` the Rayleigh range in um.  ``mu_m`` is the
    magnetic moment in Bohr magnetons.  ``energy_offset`` (kHz) is a constant
    added to the raw potential; it drops out of every result.
    """

    B_grad: float
    x_R: float
    V0_uK: float = 3.326
    p: float = 0.6338
    wavelength_nm: float = 1064.0
    mu_m: float = 1.0
    energy_offset: float = 0.0

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ProfileError(f"trap depth fraction p must be in (0, 1], got {self.p}")
        if self.B_grad <= 0 or self.x_R <= 0 or self.V0_uK <= 0:
            raise ProfileError(f"heidelberg parameters must be positive: {self}")

    @property
    def depth_khz(self) -> float:
        return self.p * self.V0_uK * KHZ_PER_UK

    @property
    def force_khz_per_um(self) -> float:
        # G/cm -> G/um
        return self.mu_m * KHZ_PER_GAUSS * self.B_grad * 1e-4

    @property
    def beam_waist_um(self) -> float:
        return float(np.sqrt(self.x_R * self.wavelength_nm * 1e-3 / np.pi))


def heidelberg(params: HeidelbergParams, x):
    """Raw V(x)/h in kHz (no shift, no truncation)."""
    x = np.asarray(x, dtype=float)
    u = x / params.x_R
    return (params.depth_khz * (1.0 - 1.0 / (1.0 + u * u))
            - params.force_khz_per_um * x + params.energy_offset)


def heidelberg_extrema(params: HeidelbergParams):
    """(x_bottom, x_barrier) for the tilted trap, or ProfileError if the tilt
    leaves no metastable well."""
    xR = params.x_R
    F = params.force_khz_per_um

    def slope(x):
        u = x / xR
        return 2.0 * params.depth_khz * u / (xR * (1.0 + u * u) ** 2) - F

    # the optical force peaks at x = xR/sqrt(3)
    x_peak = xR / np.sqrt(3.0)
    if slope(x_peak) <= 0:
        raise ProfileError(f"no metastable well: gradient {params.B_grad} G/cm too large")
    x_bottom = brentq(slope, -xR, x_peak, xtol=1e-14)
    hi = x_peak
    while slope(hi) > 0:
        hi *= 2.0
    x_barrier = brentq(slope, x_peak, hi, xtol=1e-14)
    return x_bottom, x_barrier


# --------------------------------------------------------------------------
# piecewise-constant profiles


@dataclass(frozen=True, eq=False)
class PotentialProfile:
    """Piecewise-constant V(x) on [0, L] with a hard wall at x = 0 and V = 0
    beyond L.  Heights are in kHz, widths in um.

    ``origin`` is the model coordinate of the hard wall and ``offset`` the
    energy subtracted from the model potential, so model values are
    ``heights + offset`` at model positions ``edges + origin``.
    """

    widths: np.ndarray
    heights: np.ndarray
    origin: float = 0.0
    offset: float = 0.0
    provenance: dict = field(default_factory=dict)
    units: UnitSystem = LI6

    def __post_init__(self):
        widths = np.asarray(self.widths, dtype=float)
        heights = np.asarray(self.heights, dtype=float)
        if widths.ndim != 1 or widths.size < 1 or widths.shape != heights.shape:
            raise ProfileError("profile needs matching 1-D widths and heights")
        if np.any(widths <= 0):
            raise ProfileError("segment widths must be positive")
        widths.setflags(write=False)
        heights.setflags(write=False)
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "heights", heights)

    @classmethod
    def from_segments(cls, segments, **kw) -> "PotentialProfile":
        """Build from ``[(width_um, height_khz), ...]``."""
        seg = np.asarray(segments, dtype=float).reshape(-1, 2)
        return cls(seg[:, 0], seg[:, 1], **kw)

    @property
    def L(self) -> float:
        return float(self.widths.sum())

    @property
    def n_segments(self) -> int:
        return self.widths.size

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.widths)])

    @property
    def k2(self) -> np.ndarray:
        """Segment potentials as 2mV/hbar^2 in 1/um^2."""
        return self.units.wavenumber_sq(self.heights)

    def __call__(self, x):
        """Profile value at positions ``x`` (0 beyond L; inf left of the wall)."""
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, self.n_segments - 1)
        v = self.heights[idx]
        return np.where(x > self.L, 0.0, np.where(x < 0, np.inf, v))

    def segments(self):
        return list(zip(self.widths.tolist(), self.heights.tolist()))


def _sample_midpoints(fn, a, b, n):
    edges = np.linspace(a, b, n + 1)
    return np.diff(edges), fn(0.5 * (edges[1:] + edges[:-1]))


def build_profile(model: str, params, n_segments: int = 1024, *, left_wall: str = "half",
                  plateau_depth: float = 6.0, cutoff_factor: float = 20.0,
                  tail_tol: float = 1e-4, units: UnitSystem = LI6) -> PotentialProfile:
    """Reduce an analytic model to a midpoint-sampled piecewise-constant profile.

    ``model`` is ``"bathtub"``, ``"heidelberg"`` or ``"constant"`` (``params``
    is then ``(length, height)``).

    Bathtub: ``left_wall="half"`` puts the hard wall at x = 0, where the
    smoothed left barrier equals V1/2; ``"plateau"`` keeps the finite left
    barrier and pushes the wall ``plateau_depth`` smoothing lengths into it.
    The outer edge of the profile is placed past x = w + b where the tanh tail
    of the barrier has dropped to ``tail_tol * V2``.

    Heidelberg: the hard wall sits where V rises ``cutoff_factor`` barrier
    heights above the trap bottom, the profile is truncated where the tilted
    potential falls back to the trap-bottom level, and energies are measured
    from the trap bottom (which then coincides with V = 0 outside).
    """
    if model == "constant":
        length, height = params
        return PotentialProfile(np.array([float(length)]), np.array([float(height)]),
                                provenance={"model": "constant", "length": length, "height": height},
                                units=units)
    if n_segments < 16:
        raise ProfileError("n_segments must be >= 16")
    if model == "bathtub":
        if left_wall == "half":
            a = 0.0
        elif left_wall == "plateau":
            a = -plateau_depth * params.smoothing
        else:
            raise ProfileError(f"unknown left_wall mode {left_wall!r}")
        if not 0 < tail_tol < 0.5:
            raise ProfileError("tail_tol must lie in (0, 0.5)")
        # 0.5 (1 - tanh X2) = tail_tol
        b_out = params.L + params.smoothing * np.arctanh(1.0 - 2.0 * tail_tol)
        widths, heights = _sample_midpoints(lambda x: bathtub(params, x), a, b_out, n_segments)
        prov = {"model": "bathtub", **asdict(params), "left_wall": left_wall,
                "tail_tol": tail_tol, "n_segments": n_segments}
        return PotentialProfile(widths, heights, origin=a, offset=0.0, provenance=prov, units=units)
    if model == "heidelberg":
        x_bot, x_bar = heidelberg_extrema(params)
        v_bot = float(heidelberg(params, x_bot))
        height = float(heidelberg(params, x_bar)) - v_bot
        level = v_bot + cutoff_factor * height
        lo = x_bot - params.x_R
        while heidelberg(params, lo) < level:
            lo -= params.x_R
        x_in = brentq(lambda x: heidelberg(params, x) - level, lo, x_bot, xtol=1e-13)
        hi = x_bar + params.x_R
        while heidelberg(params, hi) > v_bot:
            hi += params.x_R
        x_out = brentq(lambda x: heidelberg(params, x) - v_bot, x_bar, hi, xtol=1e-13)
        widths, heights = _sample_midpoints(lambda x: heidelberg(params, x) - v_bot,
                                            x_in, x_out, n_segments)
        prov = {"model": "heidelberg", **asdict(params), "cutoff_factor": cutoff_factor,
                "n_segments": n_segments, "x_bottom": x_bot - x_in, "x_barrier": x_bar - x_in,
                "barrier_height": height}
        return PotentialProfile(widths, heights, origin=x_in, offset=v_bot, provenance=prov,
                                units=units)
    raise ProfileError(f"unknown model {model!r}")


def effective_height(profile: PotentialProfile) -> float:
    """Highest segment to the right of the lowest one (the tunneling barrier)."""
    h = profile.heights
    i = int(np.argmin(h))
    if i == h.size - 1:
        raise ProfileError("profile has no barrier beyond the well")
    return float(h[i + 1:].max())


def barrier_maximum_scan(fn, a, b, n=200_001):
    """Dense-grid location and value of the maximum of ``fn`` on [a, b]."""
    x = np.linspace(a, b, n)
    v = fn(x)
    i = int(np.argmax(v))
    return float(x[i]), float(v[i])


def refine_maximum(fn, a, b):
    res = minimize_scalar(lambda x: -fn(x), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x), float(-res.fun)


# --------------------------------------------------------------------------
# quadrature grid and initial state


@dataclass(frozen=True, eq=False)
class Grid:
    """Nodes on [0, L] with composite-Simpson weights.

    Every profile edge and every extra breakpoint is a node, and each piece
    between consecutive breakpoints carries ``panels`` Simpson panels, so
    integrands that are smooth within pieces are integrated to high order.
    """

    x: np.ndarray
    weights: np.ndarray
    segment: np.ndarray
    breaks: np.ndarray
    panels: int

    @classmethod
    def for_profile(cls, profile: PotentialProfile, extra_breaks=(), panels: int = 8) -> "Grid":
        if panels < 2 or panels % 2:
            raise ValueError("panels must be an even integer >= 2")
        L = profile.L
        extra = [float(b) for b in extra_breaks if 0.0 < b < L]
        breaks = np.unique(np.concatenate([profile.edges, extra]))
        # merge breakpoints closer than round-off
        keep = np.concatenate([[True], np.diff(breaks) > 1e-12 * max(L, 1.0)])
        breaks = breaks[keep]
        breaks[-1] = L
        h = np.diff(breaks) / panels
        sub = np.arange(panels)
        x = (breaks[:-1, None] + h[:, None] * sub[None, :]).ravel()
        x = np.concatenate([x, [L]])
        simpson = np.where(sub % 2 == 0, 2.0, 4.0)
        simpson[0] = 1.0
        w = np.zeros(x.size)
        piece_w = (h[:, None] / 3.0) * simpson[None, :]
        w[:-1] += piece_w.ravel()
        # right endpoint of each piece: weight h/3, added to the next piece's first node
        w[panels::panels] += h / 3.0
        # node -> profile segment; nodes sitting exactly on an edge use the segment to the right
        seg = np.searchsorted(profile.edges, x, side="right") - 1
        seg = np.clip(seg, 0, profile.n_segments - 1)
        return cls(x=x, weights=w, segment=seg, breaks=breaks, panels=panels)

    def integrate(self, values):
        return np.tensordot(np.asarray(values), self.weights, axes=([-1], [0]))

    def coarse(self) -> "Grid":
        """Same breakpoints with half the panels (Richardson companion)."""
        if self.panels % 4:
            raise ValueError("coarse grid needs panels divisible by 4")
        mask = np.zeros(self.x.size, dtype=bool)
        mask[::2] = True
        h2 = np.diff(self.breaks) / (self.panels // 2)
        half = self.panels // 2
        sub = np.arange(half)
        simpson = np.where(sub % 2 == 0, 2.0, 4.0)
        simpson[0] = 1.0
        w = np.zeros(mask.sum())
        w[:-1] += ((h2[:, None] / 3.0) * simpson[None, :]).ravel()
        w[half::half] += h2 / 3.0
        return Grid(x=self.x[mask], weights=w, segment=self.segment[mask], breaks=self.breaks,
                    panels=half)

    def same_as(self, other: "Grid") -> bool:
        return self is other or (self.x.shape == other.x.shape and np.array_equal(self.x, other.x))


@dataclass(frozen=True, eq=False)
class InitialState:
    w: float
    x0: float
    grid: Grid
    values: np.ndarray

    @property
    def norm(self) -> float:
        return float(self.grid.integrate(self.values ** 2))


def box_initial_state(w: float, x0: float, grid: Grid) -> InitialState:
    """Ground state of an infinite box on [x0, x0 + w], sampled on ``grid``
    and normalised with the grid quadrature."""
    L = grid.x[-1]
    if w <= 0 or x0 < -1e-12 or x0 + w > L * (1 + 1e-12):
        raise ProfileError(f"box [{x0}, {x0 + w}] is not inside [0, {L}]")
    xi = grid.x - x0
    inside = (xi > 0) & (xi < w)
    psi = np.where(inside, np.sqrt(2.0 / w) * np.sin(np.pi * np.clip(xi, 0, w) / w), 0.0)
    psi = psi / np.sqrt(grid.integrate(psi ** 2))
    return InitialState(w=w, x0=x0, grid=grid, values=psi)
