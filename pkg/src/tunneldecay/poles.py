"""Outgoing-wave poles of a piecewise-constant profile.

The mismatch ``u'(L) - i kappa u(L)`` of the regular solution (u(0) = 0,
u'(0) = 1) is an entire function of kappa; its zeros in the fourth quadrant
are the decaying-state poles.  Segments are crossed with the exact
constant-potential transfer matrix written in terms of cos(qd) and
sin(qd)/q, both even in q, so the branch of q = sqrt(kappa^2 - v) is
irrelevant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (BoundaryZeroError, ConvergenceError, IncompletePoleSetError,
                     NumericsError, PoleSearchError)
from .numerics import count_zeros, newton_polish
from .potentials import PotentialProfile

_LOG_LIMIT = 700.0


def _cs(q2, d):
    """cos(q d) and sin(q d)/q for complex q^2, with a series near q d = 0."""
    q = np.sqrt(q2 + 0j)
    qd = q * d
    # one complex exponential serves both functions
    e = np.exp(1j * qd)
    ei = 1.0 / e
    c = 0.5 * (e + ei)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = (e - ei) * (-0.5j) / q
    small = np.abs(qd) < 0.05
    if np.any(small):
        c = np.array(c, dtype=complex, ndmin=1)
        s = np.array(s, dtype=complex, ndmin=1)
        small = np.broadcast_to(small, c.shape)
        dd = np.broadcast_to(d, c.shape)[small]
        x = np.broadcast_to(q2, c.shape)[small] * dd * dd
        c[small] = 1 - x / 2 * (1 - x / 12 * (1 - x / 30 * (1 - x / 56)))
        s[small] = dd * (1 - x / 6 * (1 - x / 20 * (1 - x / 42 * (1 - x / 72))))
        c, s = c.reshape(np.shape(qd)), s.reshape(np.shape(qd))
    return c, s


def propagate_edges(kappa, profile: PotentialProfile):
    """Regular solution at every segment edge.

    Returns ``(u, du, log_scale)`` with shapes ``(n_edges,) + kappa.shape``;
    the true values are ``u * exp(log_scale)`` (the rescaling keeps deep
    forbidden regions representable).
    """
    kappa = np.asarray(kappa, dtype=complex)
    n = profile.n_segments
    k2 = kappa * kappa
    u = np.zeros((n + 1,) + kappa.shape, dtype=complex)
    du = np.zeros_like(u)
    logs = np.zeros((n + 1,) + kappa.shape)
    ui = np.zeros(kappa.shape, dtype=complex)
    dui = np.ones(kappa.shape, dtype=complex)
    acc = np.zeros(kappa.shape)
    du[0] = dui
    shape = (n,) + (1,) * kappa.ndim
    Q2 = k2[None, ...] - profile.k2.reshape(shape)
    C, S = _cs(Q2, profile.widths.reshape(shape))
    mod = np.maximum(np.abs(kappa), 1.0)
    for j in range(n):
        q2, c, s = Q2[j], C[j], S[j]
        ui, dui = ui * c + dui * s, -q2 * s * ui + dui * c
        mag = np.abs(ui) * mod + np.abs(dui)
        big = mag > 1e100
        if np.any(big):
            f = np.where(big, mag, 1.0)
            ui = ui / f
            dui = dui / f
            acc = acc + np.log(f)
        u[j + 1], du[j + 1], logs[j + 1] = ui, dui, acc
    return u, du, logs


def _propagate_sequential(kappa, profile):
    kappa = np.asarray(kappa, dtype=complex)
    k2 = kappa * kappa
    ui = np.zeros(kappa.shape, dtype=complex)
    dui = np.ones(kappa.shape, dtype=complex)
    acc = np.zeros(kappa.shape)
    for d, v in zip(profile.widths, profile.k2):
        q2 = k2 - v
        c, s = _cs(q2, d)
        ui, dui = ui * c + dui * s, -q2 * s * ui + dui * c
        mag = np.abs(ui) * np.maximum(np.abs(kappa), 1.0) + np.abs(dui)
        big = mag > 1e100
        if np.any(big):
            f = np.where(big, mag, 1.0)
            ui, dui, acc = ui / f, dui / f, acc + np.log(f)
    return ui, dui, acc


def _tree_product(a, b, g, d):
    """Ordered product of the 2x2 blocks along axis 0 (later rows act from the left)."""
    while a.shape[0] > 1:
        if a.shape[0] % 2:
            one = np.ones((1,) + a.shape[1:], dtype=complex)
            zero = np.zeros_like(one)
            a, b = np.concatenate([a, one]), np.concatenate([b, zero])
            g, d = np.concatenate([g, zero]), np.concatenate([d, one])
        a0, b0, g0, d0 = a[0::2], b[0::2], g[0::2], d[0::2]
        a1, b1, g1, d1 = a[1::2], b[1::2], g[1::2], d[1::2]
        a, b, g, d = (a1 * a0 + b1 * g0, a1 * b0 + b1 * d0,
                      g1 * a0 + d1 * g0, g1 * b0 + d1 * d0)
    return a[0], b[0], g[0], d[0]


def _representable(*arrs):
    return np.logical_and.reduce([np.isfinite(x) & (np.abs(x) < 1e250) for x in arrs])


def _propagate_blocked(flat, profile, block=16):
    """Blocks of ``block`` segments are multiplied out as a tree, then swept
    sequentially with rescaling; columns whose blocks still overflow fall
    back to the per-segment sweep."""
    q2 = (flat * flat)[None, :] - profile.k2[:, None]
    c, s = _cs(q2, profile.widths[:, None])
    a, b, g, d = c, s, -q2 * s, c
    n = a.shape[0]
    pad = (-n) % block
    if pad:
        one = np.ones((pad, flat.size), dtype=complex)
        zero = np.zeros_like(one)
        a, b = np.concatenate([a, one]), np.concatenate([b, zero])
        g, d = np.concatenate([g, zero]), np.concatenate([d, one])
    shape = (-1, block, flat.size)
    # tree product inside every block at once (block axis 1)
    A, B, G, Dd = (x.reshape(shape).transpose(1, 0, 2) for x in (a, b, g, d))
    A, B, G, Dd = _tree_product(A, B, G, Dd)
    ui = np.zeros(flat.shape, dtype=complex)
    dui = np.ones(flat.shape, dtype=complex)
    acc = np.zeros(flat.shape)
    ok = np.ones(flat.shape, dtype=bool)
    mod = np.maximum(np.abs(flat), 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(A.shape[0]):
            ui, dui = A[j] * ui + B[j] * dui, G[j] * ui + Dd[j] * dui
            ok &= _representable(ui, dui)
            mag = np.abs(ui) * mod + np.abs(dui)
            f = np.where(ok & (mag > 1e100), mag, 1.0)
            ui, dui, acc = ui / f, dui / f, acc + np.log(f)
    if not np.all(ok):
        bad = ~ok
        ui[bad], dui[bad], acc[bad] = _propagate_sequential(flat[bad], profile)
    return ui, dui, acc


def _propagate_end(kappa, profile):
    """(u(L), u'(L), log_scale) by a pairwise product of segment matrices;
    columns whose product overflows are redone by the rescaled blocked sweep."""
    kappa = np.asarray(kappa, dtype=complex)
    flat = kappa.reshape(-1)
    q2 = (flat * flat)[None, :] - profile.k2[:, None]
    c, s = _cs(q2, profile.widths[:, None])
    with np.errstate(over="ignore", invalid="ignore"):
        _, u, _, du = _tree_product(c, s, -q2 * s, c)
    acc = np.zeros(flat.shape)
    bad = ~_representable(u, du)
    if np.any(bad):
        u, du = u.copy(), du.copy()
        u[bad], du[bad], acc[bad] = _propagate_blocked(flat[bad], profile)
    return u.reshape(kappa.shape), du.reshape(kappa.shape), acc.reshape(kappa.shape)


def outgoing_mismatch(kappa, profile: PotentialProfile, *, normalized: bool = False,
                      overflow: str = "raise"):
    """u'(L) - i kappa u(L) for the regular solution with u'(0) = 1.

    With ``normalized=True`` the value is divided by the positive boundary
    scale |u'(L)| + |kappa u(L)|: the phase (hence any winding number) is
    unchanged but the result is no longer analytic in kappa.  With
    ``overflow="inf"`` unrepresentable values come back as inf instead of
    raising (used inside batch Newton, which then drops the seed).
    """
    u, du, acc = _propagate_end(kappa, profile)
    kappa = np.asarray(kappa, dtype=complex)
    f = du - 1j * kappa * u
    if normalized:
        out = f / (np.abs(du) + np.abs(kappa * u))
    else:
        over = acc > _LOG_LIMIT
        if np.any(over) and overflow == "raise":
            raise NumericsError("mismatch magnitude exceeds floating-point range")
        out = np.where(over, np.inf, f * np.exp(np.minimum(acc, _LOG_LIMIT)))
    return out[()] if out.ndim == 0 else out


def _mismatch_and_scale(kappa, profile):
    """Mismatch (inf where unrepresentable) and boundary scale from one sweep."""
    u, du, acc = _propagate_end(kappa, profile)
    kappa = np.asarray(kappa, dtype=complex)
    with np.errstate(over="ignore"):
        grow = np.exp(np.minimum(acc, _LOG_LIMIT))
        f = np.where(acc > _LOG_LIMIT, np.inf, (du - 1j * kappa * u) * grow)
        sc = (np.abs(du) + np.abs(kappa * u)) * np.exp(acc)
    return f, sc


def boundary_scale(kappa, profile: PotentialProfile):
    u, du, acc = _propagate_end(kappa, profile)
    with np.errstate(over="ignore"):
        return (np.abs(du) + np.abs(np.asarray(kappa) * u)) * np.exp(acc)


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Pole:
    """Fourth-quadrant pole kappa = alpha - i beta with E/h = Ereal - i Gamma/2 (kHz)."""

    n: int
    kappa: complex
    energy: float
    width: float
    residual: float = 0.0

    @property
    def R(self) -> float:
        return self.energy / self.width

    @property
    def lifetime(self) -> float:
        """tau = hbar / Gamma in ms."""
        return 1.0 / (2.0 * np.pi * self.width)

    @property
    def decay_rate(self) -> float:
        """Gamma / hbar in 1/ms."""
        return 2.0 * np.pi * self.width


def make_pole(n, kappa, profile, residual=0.0) -> Pole:
    E = complex(profile.units.energy_khz(kappa))
    return Pole(n=n, kappa=complex(kappa), energy=E.real, width=-2.0 * E.imag, residual=residual)


@dataclass(frozen=True)
class PoleSet:
    poles: tuple
    provenance: dict = field(default_factory=dict)
    search: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.poles)

    def __getitem__(self, i):
        return self.poles[i]

    def __iter__(self):
        return iter(self.poles)

    @property
    def kappas(self) -> np.ndarray:
        return np.array([p.kappa for p in self.poles], dtype=complex)


def _energy_rect(window, depth):
    e_lo, e_hi = window
    if e_lo < 0 or e_hi <= e_lo or depth <= 0:
        raise PoleSearchError(f"invalid search region window={window} depth={depth}")
    # E plane rectangle: Re E in window, Im E in [-depth, 0]
    return (float(e_lo), float(e_hi), -float(depth), 0.0)


def count_poles(profile: PotentialProfile, window, depth) -> tuple[int, tuple]:
    """Argument-principle pole count in the E/h rectangle.  The rectangle is
    nudged outward slightly if a pole sits on its boundary; the rectangle
    actually used is returned."""
    units = profile.units

    def g(E):
        return outgoing_mismatch(units.kappa_from_energy(E), profile, normalized=True)

    rect = _energy_rect(window, depth)
    for attempt in range(6):
        try:
            return count_zeros(g, rect), rect
        except BoundaryZeroError:
            grow = 1.0 + 0.0137 * (attempt + 1)
            lo = rect[0] / grow if rect[0] > 0 else rect[0]
            rect = (lo, rect[1] * grow, rect[2] * grow, 0.0)
    raise PoleSearchError(f"could not place a pole-free contour near {window}, depth {depth}")


def _dedup(kappas, rel=1e-8, radius=None):
    """Merge roots closer than ``rel`` (relative) or than the sum of their
    uncertainty ``radius``; the first root (in ascending energy) of each
    cluster is kept."""
    kappas = list(kappas)
    radius = [0.0] * len(kappas) if radius is None else list(radius)
    order = sorted(range(len(kappas)), key=lambda i: ((kappas[i] ** 2).real, kappas[i].imag))
    out, out_r = [], []
    for i in order:
        k, r = kappas[i], radius[i]
        if not any(abs(k - o) <= max(rel * abs(o), r + ro) for o, ro in zip(out, out_r)):
            out.append(k)
            out_r.append(r)
    return out, out_r


def _root_radius(profile, z, tol):
    """Position uncertainty tol * scale / |f'| implied by the residual test."""
    h = 1e-6 * np.maximum(np.abs(z), 1.0)
    fp = (outgoing_mismatch(z + h, profile) - outgoing_mismatch(z - h, profile)) / (2 * h)
    return 10.0 * tol * boundary_scale(z, profile) / np.abs(fp)


def find_poles(profile: PotentialProfile, window, depth, *, seed_grid=(40, 20), tol=1e-11,
               refinements=2, check_count=True) -> PoleSet:
    """All poles with ReE/h in ``window`` (kHz) and 0 < Gamma/2 <= ``depth``.

    Seeds a ``seed_grid`` lattice over the E rectangle, polishes every seed by
    Newton in kappa, deduplicates and sorts by energy.  The result must match
    the argument-principle count; the seed lattice is doubled up to
    ``refinements`` times before :class:`IncompletePoleSetError` is raised.
    """
    units = profile.units
    expected, rect = count_poles(profile, window, depth) if check_count else (None, None)
    if rect is None:
        rect = _energy_rect(window, depth)
    nx, ny = seed_grid
    found: list[complex] = []
    radii: list[float] = []
    for level in range(refinements + 1):
        # uniform in Re sqrt(E): pole spacing grows with energy
        er = np.linspace(np.sqrt(rect[0]), np.sqrt(rect[1]), nx + 2)[1:-1] ** 2
        # narrow resonances sit close to the real axis: log-spaced depths
        ei = rect[2] * np.geomspace(1e-4, 1.0, ny)
        seeds = units.kappa_from_energy(er[None, :] + 1j * ei[:, None]).ravel()
        def fs(k):
            return _mismatch_and_scale(k, profile)

        with np.errstate(all="ignore"):
            z, ok, res = newton_polish(fs, seeds, tol, joint=True)
        E = units.energy_khz(z)
        inside = (ok & (E.real >= rect[0]) & (E.real <= rect[1]) & (E.imag >= rect[2])
                  & (E.imag < 0) & (z.real > 0))
        new = z[inside]
        with np.errstate(all="ignore"):
            new_r = _root_radius(profile, new, tol) if new.size else np.zeros(0)
        found, radii = _dedup(found + list(new), radius=radii + list(new_r))
        if expected is None or len(found) == expected:
            break
        nx, ny = 2 * nx, 2 * ny
    else:
        raise IncompletePoleSetError(
            f"found {len(found)} poles but the contour count is {expected} "
            f"(rect={rect}, final seed grid {nx // 2}x{ny // 2})")
    if expected is not None and len(found) != expected:
        raise IncompletePoleSetError(f"found {len(found)} poles, contour count {expected}")
    poles = []
    for i, k in enumerate(found, start=1):
        r = float(np.abs(outgoing_mismatch(k, profile)) / boundary_scale(k, profile))
        poles.append(make_pole(i, k, profile, residual=r))
    return PoleSet(poles=tuple(poles), provenance=dict(profile.provenance),
                   search={"window": list(window), "depth": depth, "rect": list(rect),
                           "count": expected, "seed_grid": [nx, ny]})


def polish_pole(profile: PotentialProfile, kappa0, n=1, tol=1e-11) -> Pole:
    """Newton-polish a single pole from a nearby seed."""
    with np.errstate(all="ignore"):
        z, ok, res = newton_polish(lambda k: _mismatch_and_scale(k, profile), kappa0, tol,
                                   joint=True)
    if not ok or not (z.real > 0 and z.imag < 0):
        raise ConvergenceError(f"pole polish failed from {kappa0!r} (reached {z!r})")
    return make_pole(n, z, profile, residual=float(res / boundary_scale(z, profile)))


def lowest_pole(profile: PotentialProfile, window, depth, **kw) -> Pole:
    ps = find_poles(profile, window, depth, **kw)
    if not len(ps):
        raise PoleSearchError("no pole in the search window")
    return ps[0]


def pole_trajectory(make_profile, values, kappa0, *, n=1, jump=0.25, max_halvings=8):
    """Continue one pole through a parameter sweep.

    ``make_profile(value)`` builds the profile for each parameter value; each
    step seeds Newton from the previous pole.  A step whose pole moves more
    than ``jump`` times |kappa| is treated as a branch jump and subdivided.
    """
    values = list(values)
    track = []
    kappa = complex(kappa0)
    prev_value = values[0]
    for v in values:
        sub = [v]
        depth = 0
        while sub:
            target = sub[0]
            try:
                pole = polish_pole(make_profile(target), kappa, n=n)
                moved = abs(pole.kappa - kappa) > jump * abs(kappa)
            except ConvergenceError:
                pole, moved = None, True
            if moved:
                if depth >= max_halvings:
                    raise PoleSearchError(
                        f"continuation failed between {prev_value} and {target}; last good "
                        f"kappa={kappa!r}")
                sub.insert(0, 0.5 * (prev_value + target))
                depth += 1
                continue
            kappa = pole.kappa
            prev_value = target
            sub.pop(0)
            if not sub:
                track.append(pole)
    return track
