"""Special functions and complex root-finding primitives.

The Faddeeva function in the upper half plane is delegated to
``scipy.special.wofz`` (the Poppe-Wijers / Johnson algorithm family).  The
continuation to the lower half plane, the overflow policy and the Moshinsky
M-function are implemented here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import wofz

from .errors import BoundaryZeroError, ConvergenceError, FaddeevaOverflowError

# exp(x) overflows just above 709.78
_EXP_LIMIT = 709.0

_PHASE_M_PI_4 = np.exp(-0.25j * np.pi)


def faddeeva(z):
    """w(z) = exp(-z**2) erfc(-iz) for scalar or array ``z``.

    For Im z < 0 the value is built from w(z) = 2 exp(-z**2) - w(-z); if
    exp(-z**2) would overflow a :class:`FaddeevaOverflowError` is raised.
    """
    z = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(z)):
        raise ValueError("faddeeva: non-finite argument")
    out = np.empty_like(z)
    upper = z.imag >= 0
    out[upper] = wofz(z[upper])
    lower = ~upper
    if np.any(lower):
        zl = z[lower]
        expo = -(zl * zl)
        if np.any(expo.real > _EXP_LIMIT):
            bad = zl[expo.real > _EXP_LIMIT][0]
            raise FaddeevaOverflowError(f"w(z) overflows at z={bad!r}")
        out[lower] = 2.0 * np.exp(expo) - wofz(-zl)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class MFunctionArgument:
    """Argument y of the M-function together with its Fresnel phase.

    ``y = exp(-i pi/4) * (r - 2 D kappa t) / sqrt(4 D t)`` and the prefactor
    phase is ``r**2 / (4 D t)``, with ``r = x - L`` and ``D = hbar/2m``.
    """

    y: complex | np.ndarray
    phase: float | np.ndarray = 0.0

    @classmethod
    def from_physical(cls, r, t, kappa, diffusivity) -> "MFunctionArgument":
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise ValueError("M-function argument requires t > 0")
        r = np.asarray(r, dtype=float)
        denom = np.sqrt(4.0 * diffusivity * t)
        y = _PHASE_M_PI_4 * (r - 2.0 * diffusivity * kappa * t) / denom
        return cls(y=y, phase=r * r / (4.0 * diffusivity * t))

    def __neg__(self) -> "MFunctionArgument":
        return MFunctionArgument(y=-np.asarray(self.y), phase=self.phase)


def m_function(arg: MFunctionArgument):
    """M(y) = 1/2 exp(i r^2/4Dt) w(i y)."""
    return 0.5 * np.exp(1j * np.asarray(arg.phase)) * faddeeva(1j * np.asarray(arg.y))


def m_boundary(t, kappa, diffusivity):
    """M(y°) at x = L, vectorised over ``t`` and ``kappa`` (broadcast)."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("M-function argument requires t > 0")
    y = -_PHASE_M_PI_4 * np.asarray(kappa) * np.sqrt(diffusivity * t)
    return 0.5 * faddeeva(1j * y)


# --------------------------------------------------------------------------
# root counting and polishing


def _rect_corners(rect):
    x0, x1, y0, y1 = rect
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate rectangle {rect}")
    return [complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1)]


def count_zeros(f, rect, *, points_per_edge=256, max_step=0.3, max_points=200_000,
                boundary_tol=1e-11):
    """Number of zeros of ``f`` inside ``rect = (re_min, re_max, im_min, im_max)``.

    ``f`` must accept complex arrays.  The boundary is sampled adaptively until
    every phase increment and every log-magnitude increment is below
    ``max_step``, then the winding number is summed.  Raises
    :class:`BoundaryZeroError` if ``f`` (nearly) vanishes on the contour:
    shrink or shift the rectangle in that case.
    """
    corners = _rect_corners(rect)
    # uniform points plus geometric grading into every corner, where branch
    # points of a mapped variable (e.g. kappa = sqrt(E) at E = 0) tend to sit
    graded = np.geomspace(1e-7, 0.5, 48)
    s = np.unique(np.concatenate([np.linspace(0.0, 1.0, points_per_edge, endpoint=False),
                                  graded, 1.0 - graded]))
    s = s[s < 1.0]
    pts = np.concatenate([a + (b - a) * s for a, b in zip(corners, corners[1:] + corners[:1])])
    vals = np.asarray(f(pts), dtype=complex)
    span = max(rect[1] - rect[0], rect[3] - rect[2])
    min_gap = span * 1e-12
    while True:
        if not np.all(np.isfinite(vals)):
            raise BoundaryZeroError("non-finite function value on the contour")
        mags = np.abs(vals)
        if mags.min() <= boundary_tol * mags.max():
            raise BoundaryZeroError(
                f"f nearly vanishes on the boundary near {pts[np.argmin(mags)]!r}; "
                "shrink/shift rectangle")
        nxt_pts = np.roll(pts, -1)
        ratio = np.roll(vals, -1) / vals
        dphi = np.angle(ratio)
        # guards against aliasing of a full turn between two samples
        bad = (np.abs(dphi) > max_step) | (np.abs(np.log(np.abs(ratio))) > max_step)
        if not np.any(bad):
            break
        gaps = np.abs(nxt_pts - pts)
        if np.any(gaps[bad] < min_gap):
            raise BoundaryZeroError("phase jump unresolved at minimal step; "
                                    "shrink/shift rectangle")
        if pts.size + bad.sum() > max_points:
            raise BoundaryZeroError("contour refinement exceeded point budget")
        mids = 0.5 * (pts[bad] + nxt_pts[bad])
        mid_vals = np.asarray(f(mids), dtype=complex)
        idx = np.nonzero(bad)[0] + 1
        pts = np.insert(pts, idx, mids)
        vals = np.insert(vals, idx, mid_vals)
    winding = dphi.sum() / (2.0 * np.pi)
    n = int(round(winding))
    if abs(winding - n) > 1e-6:
        raise BoundaryZeroError(f"non-integer winding number {winding}")
    return n


def newton_complex(f, z0, tol=1e-12, *, scale=1.0, max_iter=60, rel_step=1e-7):
    """Newton iteration with a finite-difference derivative.

    ``z0`` may be a scalar or an array of independent seeds (``f`` must then
    be vectorised).  Converged when ``|f(z)| < tol * scale`` or the Newton
    step stalls at the rounding level (see :func:`newton_polish`).  Raises
    :class:`ConvergenceError` if any seed fails; use :func:`newton_polish`
    for a non-raising batch variant.
    """
    z, ok, _ = newton_polish(f, z0, tol, scale=scale, max_iter=max_iter, rel_step=rel_step)
    if not np.all(ok):
        raise ConvergenceError(f"Newton did not converge from {np.asarray(z0)[~ok]!r}")
    return z


def newton_polish(f, z0, tol=1e-12, *, scale=1.0, max_iter=60, rel_step=1e-7, joint=False,
                  step_tol=1e-12, stall_tol=1e-6):
    """Batch Newton with a forward-difference derivative.  Returns
    ``(z, converged_mask, |f(z)|)``.

    ``scale`` may be a callable evaluated at the current iterate.  With
    ``joint=True`` ``f`` returns ``(value, scale)`` and ``scale`` is ignored,
    which saves a second evaluation when both come from the same computation.
    A seed also counts as converged once its Newton step drops below
    ``step_tol`` (relative) with ``|f| < stall_tol * scale``.
    """
    z = np.array(z0, dtype=complex, ndmin=1).copy()
    scalar = np.ndim(z0) == 0
    if joint:
        def fs(x):
            v, sc = f(x)
            return np.asarray(v, dtype=complex), np.asarray(sc, dtype=float)
    else:
        def fs(x):
            sc = scale(x) if callable(scale) else scale
            return (np.asarray(f(x), dtype=complex),
                    np.broadcast_to(np.asarray(sc, dtype=float), np.shape(x)))
    fz, sc = fs(z)
    scale_arr = np.array(np.broadcast_to(sc, z.shape), dtype=float)
    active = np.ones(z.shape, dtype=bool)
    ok = np.zeros(z.shape, dtype=bool)
    for _ in range(max_iter):
        done = np.abs(fz) < tol * scale_arr
        ok |= done & active
        active &= ~done
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        za = z[idx]
        h = rel_step * np.maximum(np.abs(za), 1.0)
        fp = (fs(za + h)[0] - fz[idx]) / h
        tiny = ~np.isfinite(fp) | (np.abs(fp) < 1e-300)
        step = np.where(tiny, 0.0, fz[idx] / np.where(tiny, 1.0, fp))
        z_new = za - step
        finite = np.isfinite(z_new) & ~tiny
        # derivative underflow or blow-up: give up on that seed
        active[idx[~finite]] = False
        keep = idx[finite]
        z[keep] = z_new[finite]
        if keep.size:
            fz[keep], scale_arr[keep] = fs(z[keep])
        # a step at the rounding level pins the root even when cancellation
        # keeps |f| above tol * scale; the looser residual bound rejects
        # stagnation away from a zero
        small = np.abs(step[finite]) <= step_tol * np.maximum(np.abs(z_new[finite]), 1.0)
        conv = keep[small]
        ok[conv] |= np.abs(fz[conv]) < stall_tol * scale_arr[conv]
        active[conv] = False
    ok |= active & (np.abs(fz) < tol * scale_arr)
    if scalar:
        return z[0], ok[0], np.abs(fz[0])
    return z, ok, np.abs(fz)
