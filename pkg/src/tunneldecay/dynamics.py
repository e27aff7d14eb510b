"""Time evolution from the resonant expansion.

Inside the trap the wavefunction is

    Psi(x, t) = sum_n [C_n u_n(x) M(y_n) + C_n^* u_n^*(x) M(y_-n)]

over the fourth-quadrant poles, the third-quadrant partners entering through
kappa_-n = -kappa_n^*, u_-n = u_n^* and C_-n = C_n^* (real initial state).
M(y) at x = L reduces to 1/2 w(i y) with y_n = -exp(-i pi/4) kappa_n sqrt(D t).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import DynamicsError
from .numerics import faddeeva, m_boundary
from .states import ExpansionSet

_E_PI_4 = np.exp(0.25j * np.pi)
_INV_2SQRTPI = 0.5 / np.sqrt(np.pi)


@dataclass
class DecaySeries:
    """Nonescape probability on a time grid (t in ms)."""

    t: np.ndarray
    P_full: np.ndarray
    tau: float
    n_poles: int
    P_e: np.ndarray | None = None
    P_ene: np.ndarray | None = None
    P_ne: np.ndarray | None = None
    imag_residual: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def t_over_tau(self) -> np.ndarray:
        return self.t / self.tau

    @property
    def lnP(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(self.P_full)

    def window(self, lo, hi):
        """Mask of samples with lo <= t/tau <= hi."""
        s = self.t_over_tau
        return (s >= lo) & (s <= hi)


@dataclass(frozen=True)
class SinglePoleDecomposition:
    t: np.ndarray
    P_e: np.ndarray
    P_ene: np.ndarray
    P_ne: np.ndarray
    b: complex
    kappa: complex
    C: complex
    I1: float
    Y1: complex

    @property
    def total(self) -> np.ndarray:
        return self.P_e + self.P_ene + self.P_ne


@dataclass(frozen=True)
class TransitionEstimate:
    R: float
    t0: float
    winter: float


@dataclass(frozen=True)
class FitResult:
    value: float
    intercept: float
    rms_residual: float
    n_samples: int
    regime: str = ""


def time_grid(tau: float, start: float = 1e-3, stop: float = 50.0, n: int = 600,
              include_zero: bool = False) -> np.ndarray:
    """Geometric grid from ``start*tau`` to ``stop*tau`` (ms)."""
    if not (tau > 0 and 0 < start < stop and n >= 2):
        raise DynamicsError("invalid time-grid specification")
    t = tau * np.geomspace(start, stop, n)
    return np.concatenate([[0.0], t]) if include_zero else t


# --------------------------------------------------------------------------
# amplitudes


def _amplitudes(t, ex: ExpansionSet, closure: bool):
    """Coefficients of (u_1..u_N, u_1^*..u_N^*) in Psi(x, t); shape (T, 2N).

    With ``closure`` the leading t^-1/2 asymptote of every M-function is
    removed.  Summed over the complete pole set those terms cancel exactly
    (sum over +-n of C_n u_n / kappa_n = 0), so dropping them is exact for
    the infinite series and removes the slow t^-1/2 leak a truncated set
    would otherwise show at long times.
    """
    t = np.asarray(t, dtype=float)[:, None]
    k = ex.kappas[None, :]
    D = ex.diffusivity
    mp = m_boundary(t, k, D)
    mm = m_boundary(t, -np.conj(k), D)
    if closure:
        sq = np.sqrt(D * t)
        # M(y_n) ~ -i/(2 sqrt(pi) z_n), z_n = e^{i pi/4} kappa_n sqrt(Dt); M(y_-n) ~ +i/(...)
        mp = mp + 1j * _INV_2SQRTPI / (_E_PI_4 * k * sq)
        mm = mm - 1j * _INV_2SQRTPI / (_E_PI_4 * np.conj(k) * sq)
    C = ex.C[None, :]
    return np.hstack([C * mp, np.conj(C) * mm])


def wavefunction_interior(t, expansion: ExpansionSet, states, *, form: str = "m",
                          closure: bool = False):
    """Psi on the state grid at each time in ``t``; shape (T, n_nodes).

    ``form="m"`` sums C_n u_n M(y_n) over both quadrants; ``form="split"``
    writes the fourth-quadrant M as exp(-i E_n t) - M(-y_n), i.e. an explicit
    exponential part minus a nonexponential remainder.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t <= 0):
        raise DynamicsError("wavefunction_interior needs t > 0")
    U = np.array([s.values for s in states])[: expansion.n_poles]
    if U.shape[0] != expansion.n_poles:
        raise DynamicsError("fewer states than expansion coefficients")
    basis = np.vstack([U, U.conj()])
    if form == "m":
        a = _amplitudes(t, expansion, closure)
        return a @ basis
    if form == "split":
        if closure:
            raise DynamicsError("closure correction is only defined for form='m'")
        D = expansion.diffusivity
        k = expansion.kappas[None, :]
        tt = t[:, None]
        expo = np.exp(-1j * D * k * k * tt)
        # M(-y_n) = 1/2 w(-i y_n)
        y = -np.exp(-0.25j * np.pi) * k * np.sqrt(D * tt)
        m_neg = 0.5 * faddeeva(-1j * y)
        m_third = m_boundary(tt, -np.conj(k), D)
        C = expansion.C[None, :]
        exp_part = (C * expo) @ U
        nonexp = (C * m_neg) @ U - (np.conj(C) * m_third) @ U.conj()
        return exp_part - nonexp
    raise DynamicsError(f"unknown form {form!r}")


def wavefunction_long_time(t, expansion: ExpansionSet, states):
    """Leading long-time piece b/2 t^-3/2 sum_n [C_n^* u_n^*/kappa_n^*3 - C_n u_n/kappa_n^3]."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    U = np.array([s.values for s in states])[: expansion.n_poles]
    k, C = expansion.kappas, expansion.C
    b = b_constant(expansion.diffusivity)
    X = (C / k ** 3) @ U
    return 0.5 * b * t[:, None] ** -1.5 * (np.conj(X) - X)[None, :]


def nonescape_full(t, expansion: ExpansionSet, *, tau: float | None = None,
                   closure: bool = True, real_tol: float = 1e-10,
                   short_time: float = 1e-3) -> DecaySeries:
    """P(t) = a G a^H with the Gram matrix of (u_n, u_n^*) on [0, L].

    Samples at t = 0 are reported as the exact initial norm 1.  Near the
    origin the truncated expansion needs many more poles: the highest kept
    pole reaches its asymptotic regime only for t >> 1 / (D |kappa_N|^2), so
    ``meta["unreliable_below_ms"]`` is the larger of ``short_time * tau`` and
    20 / (D |kappa_N|^2).
    """
    t = np.asarray(t, dtype=float)
    if t.ndim != 1:
        raise DynamicsError("time grid must be one-dimensional")
    if np.any(t < 0):
        raise DynamicsError("negative times")
    if tau is None:
        tau = 1.0 / (-2.0 * expansion.diffusivity * (expansion.kappas[0] ** 2).imag)
    G = expansion.gram()
    P = np.ones(t.size)
    pos = t > 0
    imag_res = 0.0
    if np.any(pos):
        a = _amplitudes(t[pos], expansion, closure)
        Pc = np.einsum("ti,ij,tj->t", a, G, a.conj())
        rel = np.abs(Pc.imag) / np.maximum(np.abs(Pc.real), 1e-300)
        imag_res = float(rel.max())
        if imag_res > real_tol:
            raise DynamicsError(f"P(t) has a relative imaginary part {imag_res:.3e} "
                                f"(pole count {expansion.n_poles}; truncation or state error)")
        P[pos] = Pc.real
    t_short = max(short_time * tau,
                  20.0 / (expansion.diffusivity * float(np.max(np.abs(expansion.kappas))) ** 2))
    meta = {"closure": closure, "unreliable_below_ms": t_short,
            "sum_rule": expansion.sum_rule}
    return DecaySeries(t=t, P_full=P, tau=float(tau), n_poles=expansion.n_poles,
                       imag_residual=imag_res, meta=meta)


def b_constant(diffusivity: float) -> complex:
    """b = e^{-i pi/4} / (2 sqrt(pi)) (hbar/2m)^{-3/2}."""
    return np.exp(-0.25j * np.pi) * _INV_2SQRTPI * diffusivity ** -1.5


def nonescape_single_pole(t, kappa, C, I1, Y1, diffusivity) -> SinglePoleDecomposition:
    """Exponential, interference and post-exponential single-pole terms."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DynamicsError("single-pole decomposition needs t > 0")
    kappa, C, Y1 = complex(kappa), complex(C), complex(Y1)
    I1 = float(np.real(I1))
    D = diffusivity
    E = D * kappa * kappa          # complex energy / hbar, 1/ms
    rate = -2.0 * E.imag           # Gamma / hbar
    b = b_constant(D)
    C2 = abs(C) ** 2
    P_e = C2 * I1 * np.exp(-rate * t)
    bracket = C2 * I1 / np.conj(kappa) ** 3 - C * C * Y1 / kappa ** 3
    P_ene = -np.real(bracket * np.conj(b) * np.exp(-1j * E.real * t)) \
        * np.exp(-0.5 * rate * t) * t ** -1.5
    P_ne = 0.5 * abs(b) ** 2 * np.real(C2 * I1 / abs(kappa ** 3) ** 2
                                       - C * C * Y1 / kappa ** 6) * t ** -3.0
    return SinglePoleDecomposition(t=t, P_e=P_e, P_ene=P_ene, P_ne=P_ne, b=b, kappa=kappa,
                                   C=C, I1=I1, Y1=Y1)


def decompose(expansion: ExpansionSet, t) -> SinglePoleDecomposition:
    return nonescape_single_pole(t, expansion.kappas[0], expansion.C[0], expansion.I1,
                                 expansion.Y1, expansion.diffusivity)


def transition_time(R: float) -> TransitionEstimate:
    """Onset of the post-exponential regime in lifetimes, t0 = 5.41 ln R + 12.25."""
    if not R > 0:
        raise DynamicsError("R must be positive")
    lr = float(np.log(R))
    return TransitionEstimate(R=float(R), t0=5.41 * lr + 12.25, winter=5.0 * lr)


# --------------------------------------------------------------------------
# curve diagnostics


def _window_samples(series: DecaySeries, window):
    m = series.window(*window) & (series.P_full > 0) & (series.t > 0)
    if m.sum() < 3:
        raise DynamicsError(f"window {window} holds fewer than 3 usable samples")
    return series.t[m], series.P_full[m]


def fit_exponential_rate(series: DecaySeries, window=(1.0, 5.0), *,
                         residual_flag: float = 1e-2) -> FitResult:
    """Least-squares slope of ln P against t over ``window`` (units of tau).

    ``value`` is the fitted decay rate Gamma/hbar in 1/ms.  A log-residual
    above ``residual_flag`` marks the window as nonexponential.
    """
    t, P = _window_samples(series, window)
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(P), rcond=None)
    rms = float(np.sqrt(np.mean((A @ coef - np.log(P)) ** 2)))
    regime = "exponential" if rms <= residual_flag else "nonexponential"
    return FitResult(value=float(-coef[0]), intercept=float(coef[1]), rms_residual=rms,
                     n_samples=t.size, regime=regime)


def fit_power_exponent(series: DecaySeries, window=(20.0, 40.0)) -> FitResult:
    """Slope of ln P against ln t over ``window`` (units of tau)."""
    t, P = _window_samples(series, window)
    A = np.vstack([np.log(t), np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(P), rcond=None)
    rms = float(np.sqrt(np.mean((A @ coef - np.log(P)) ** 2)))
    return FitResult(value=float(coef[0]), intercept=float(coef[1]), rms_residual=rms,
                     n_samples=t.size, regime="power")


def measured_transition(series: DecaySeries, exp_window=(1.0, 5.0), power_window=None,
                        exponent: float = -3.0) -> float:
    """Crossing (in lifetimes) of the fitted exponential and the fitted
    t^exponent branch.  The power branch is fitted with a fixed exponent over
    ``power_window`` (default: the last fifth of the grid in log time)."""
    ef = fit_exponential_rate(series, exp_window)
    s = series.t_over_tau
    if power_window is None:
        hi = s[-1]
        power_window = (hi * 0.75, hi)
    t, P = _window_samples(series, power_window)
    c = float(np.mean(np.log(P) - exponent * np.log(t)))

    def gap(x):
        tt = x * series.tau
        return (ef.intercept - ef.value * tt) - (c + exponent * np.log(tt))

    lo, hi = exp_window[1], power_window[1]
    if gap(lo) * gap(hi) > 0:
        raise DynamicsError("exponential and power-law branches do not cross in the window")
    return float(brentq(gap, lo, hi, xtol=1e-10))
