"""Normalised resonant states, expansion coefficients and overlap integrals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StateError
from .poles import Pole, _cs, propagate_edges
from .potentials import Grid, InitialState, PotentialProfile


@dataclass(frozen=True, eq=False)
class ResonantState:
    """u_n sampled on ``grid``, normalised so that
    int_0^L u^2 dx + i u(L)^2 / 2 kappa = 1."""

    pole: Pole
    grid: Grid
    values: np.ndarray
    u_L: complex
    du_L: complex
    diffusivity: float

    @property
    def kappa(self) -> complex:
        return self.pole.kappa

    @property
    def norm_residual(self) -> float:
        total = self.grid.integrate(self.values ** 2) + 1j * self.u_L ** 2 / (2 * self.kappa)
        return float(abs(total - 1.0))

    @property
    def boundary_mismatch(self) -> float:
        """|u'(L) - i kappa u(L)| relative to |u'(L)|."""
        return float(abs(self.du_L - 1j * self.kappa * self.u_L) / abs(self.du_L))

    def conjugate_partner(self) -> "ResonantState":
        """The third-quadrant state u_{-n} = u_n^* at kappa_{-n} = -kappa_n^*."""
        k = -np.conj(self.kappa)
        partner = Pole(n=-self.pole.n, kappa=complex(k), energy=self.pole.energy,
                       width=self.pole.width, residual=self.pole.residual)
        return ResonantState(partner, self.grid, np.conj(self.values), np.conj(self.u_L),
                             np.conj(self.du_L), self.diffusivity)


def regular_solution(kappa: complex, profile: PotentialProfile, grid: Grid):
    """u, u' with u(0) = 0, u'(0) = 1 at the grid nodes, plus (u(L), u'(L))."""
    u_e, du_e, logs = propagate_edges(np.asarray(kappa, dtype=complex), profile)
    if np.any(logs > 700):
        raise StateError("regular solution not representable on this profile")
    scale = np.exp(logs)
    u_e, du_e = u_e * scale, du_e * scale
    j = grid.segment
    xi = grid.x - profile.edges[j]
    q2 = kappa * kappa - profile.k2[j]
    c, s = _cs(q2, xi)
    u = u_e[j] * c + du_e[j] * s
    du = -q2 * s * u_e[j] + du_e[j] * c
    return u, du, complex(u_e[-1]), complex(du_e[-1])


def build_state(pole: Pole, profile: PotentialProfile, grid: Grid) -> ResonantState:
    """Shoot from the hard wall with u'(0) = 1 and rescale by the complex
    normalisation constant."""
    u, _, uL, duL = regular_solution(pole.kappa, profile, grid)
    raw = grid.integrate(u ** 2) + 1j * uL ** 2 / (2 * pole.kappa)
    size = grid.integrate(np.abs(u) ** 2) + abs(uL) ** 2 / (2 * abs(pole.kappa))
    if abs(raw) < 1e-10 * size:
        raise StateError(f"degenerate normalisation for pole {pole.kappa!r} (exceptional pole?)")
    nrm = np.sqrt(raw)
    return ResonantState(pole=pole, grid=grid, values=u / nrm, u_L=uL / nrm, du_L=duL / nrm,
                         diffusivity=profile.units.diffusivity)


def coefficient(state: ResonantState, initial: InitialState) -> complex:
    """C_n = int_0^L Psi(x, 0) u_n(x) dx."""
    if not state.grid.same_as(initial.grid):
        raise StateError("initial state and resonant state live on different grids")
    return complex(state.grid.integrate(initial.values * state.values))


@dataclass(frozen=True, eq=False)
class ExpansionSet:
    """Expansion of one initial state over N fourth-quadrant states.

    ``I[m, n] = int u_m u_n^*`` and ``J[m, n] = int u_m u_n``; the
    third-quadrant blocks follow from u_{-n} = u_n^*.
    """

    kappas: np.ndarray
    C: np.ndarray
    I: np.ndarray
    J: np.ndarray
    diffusivity: float

    @property
    def n_poles(self) -> int:
        return self.C.size

    @property
    def I1(self) -> float:
        return float(self.I[0, 0].real)

    @property
    def Y1(self) -> complex:
        return complex(self.J[0, 0])

    @property
    def sum_rule(self) -> float:
        return sum_rule(self)

    @property
    def sum_rule_deficit(self) -> float:
        return 1.0 - self.sum_rule

    def truncate(self, n: int) -> "ExpansionSet":
        return ExpansionSet(self.kappas[:n], self.C[:n], self.I[:n, :n], self.J[:n, :n],
                            self.diffusivity)

    def gram(self) -> np.ndarray:
        """Hermitian Gram matrix of (u_1..u_N, u_1^*..u_N^*)."""
        top = np.hstack([self.I, self.J])
        bottom = np.hstack([self.J.conj(), self.I.conj()])
        return np.vstack([top, bottom])


def sum_rule(expansion: ExpansionSet) -> float:
    """Re sum_n C_n^2 (-> 1 as the pole set grows)."""
    if expansion.C.size == 0:
        return 0.0
    return float(np.sum(expansion.C ** 2).real)


def overlaps(states, initial: InitialState) -> ExpansionSet:
    states = list(states)
    if not states:
        raise StateError("need at least one resonant state")
    grid = states[0].grid
    if not all(s.grid.same_as(grid) for s in states) or not grid.same_as(initial.grid):
        raise StateError("states and initial state must share one grid")
    U = np.array([s.values for s in states])
    Uw = U * grid.weights[None, :]
    I = Uw @ U.conj().T
    J = Uw @ U.T
    C = Uw @ initial.values
    # exact symmetries of the quadrature forms
    I = 0.5 * (I + I.conj().T)
    J = 0.5 * (J + J.T)
    kappas = np.array([s.kappa for s in states], dtype=complex)
    return ExpansionSet(kappas=kappas, C=C.astype(complex), I=I, J=J,
                        diffusivity=states[0].diffusivity)
