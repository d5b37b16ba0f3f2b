"""Explicit conservative finite-volume integration of the rescaled system

    eps d_t rho = div(rho grad f'(rho)) - beta div(rho grad phi),
    sigma phi - eps^2 Lap phi = rho,

with zero flux through the box walls.  The diffusive flux is written as
``grad P(rho)`` with ``P = rho f' - f`` (central differences), the
chemotactic flux uses upwinded densities, and the dissipation
``int rho |v|^2`` is accumulated alongside so the discrete energy inequality
can be monitored.  ``rho v`` is the scheme flux and
``v = grad(beta phi - f'(rho)) / eps`` on faces; their product is summed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .energy import energy_modica
from .errors import DissipationViolation, InvalidParameterError, NumericalError, StepFailure
from .field import Field, Grid, face_difference, integrate
from .geometry import mollified_indicator
from .helmholtz import solver_for

log = logging.getLogger(__name__)


@dataclass
class SimState:
    rho: Field
    t: float
    eps: float
    dissipation: float = 0.0
    steps: int = 0
    clipped_mass: float = 0.0

    def copy(self) -> "SimState":
        return replace(self, rho=self.rho.copy())

    @property
    def mass(self) -> float:
        return integrate(self.rho)


@dataclass(frozen=True)
class StepperConfig:
    cfl_safety: float = 0.9
    flux_scheme: str = "upwind"
    dt_max: float = math.inf
    negativity_clip: bool = True
    dt_min: float = 1e-16

    def __post_init__(self):
        if not 0 < self.cfl_safety <= 1:
            raise InvalidParameterError("cfl_safety must lie in (0, 1]")
        if self.flux_scheme not in ("upwind", "limited"):
            raise InvalidParameterError(f"unknown flux scheme {self.flux_scheme!r}")
        if not self.dt_max > 0:
            raise InvalidParameterError("dt_max must be positive")


def _shift_slices(ndim, axis):
    lo = [slice(None)] * ndim
    hi = [slice(None)] * ndim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    return tuple(lo), tuple(hi)


def _pad_edge(u, axis):
    pad = [(0, 0)] * u.ndim
    pad[axis] = (1, 1)
    return np.pad(u, pad, mode="edge")


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _upwind_density(rho, speed, axis, scheme):
    """Density carried through each face in the direction of ``speed``."""
    p = _pad_edge(rho, axis)
    lo, hi = _shift_slices(rho.ndim, axis)
    left, right = p[lo], p[hi]
    if scheme == "limited":
        d = np.diff(p, axis=axis)
        slope = _minmod(d[lo], d[hi])
        slope = _pad_edge(slope, axis)
        left = left + 0.5 * slope[lo]
        right = right - 0.5 * slope[hi]
    return np.where(speed > 0, left, right)


class Stepper:
    """Time stepper bound to one grid, one eps and one set of potentials."""

    def __init__(self, pot, grid: Grid, eps: float, config: StepperConfig | None = None):
        if not eps > 0:
            raise InvalidParameterError("epsilon must be positive")
        self.pot = pot
        self.grid = grid
        self.eps = float(eps)
        self.config = config or StepperConfig()
        self.solver = solver_for(grid, pot.nl.sigma)
        self.last_dt = math.nan
        self.fused = _kernels.AVAILABLE
        self._factor = None

    def chemoattractant(self, rho):
        return self.solver.solve(rho, self.eps)

    def velocity(self, rho, phi=None):
        """Face velocities grad(beta phi - f'(rho)) / eps (zero on the walls)."""
        nl = self.pot.nl
        if phi is None:
            phi = self.chemoattractant(rho)
        pot_field = nl.beta * phi - nl.fp(rho)
        return [face_difference(pot_field, h, k) / self.eps
                for k, h in enumerate(self.grid.spacing)]

    def fluxes(self, rho, phi):
        nl = self.pot.nl
        P = nl.pressure(rho)
        out, speeds = [], []
        for k, h in enumerate(self.grid.spacing):
            drift = nl.beta * face_difference(phi, h, k)
            carried = _upwind_density(rho, drift, k, self.config.flux_scheme)
            out.append((carried * drift - face_difference(P, h, k)) / self.eps)
            speeds.append(drift)
        return out, speeds

    def stable_dt(self, rho, speeds):
        """cfl * min(h^2 eps / (2 d max rho f''), h eps / (d max |beta grad phi|))."""
        diff = float(np.max(rho * self.pot.nl.fpp(rho)))
        adv = max(float(np.max(np.abs(s))) for s in speeds)
        return self._cfl(diff, adv)

    def dissipation_rate(self, rho, phi, fluxes=None):
        """Discrete int rho |v|^2 as the sum over faces of (rho v) . v.

        rho v is the scheme flux and v the face gradient of
        (beta phi - f'(rho)) / eps, so the rate vanishes at discrete
        equilibria and matches the energy decay of the semi-discrete scheme.
        """
        if fluxes is None:
            fluxes, _ = self.fluxes(rho, phi)
        v = self.velocity(rho, phi)
        total = sum(float(np.sum(F * vk)) for F, vk in zip(fluxes, v))
        return total * self.grid.cell_volume

    def _cfl(self, diff, adv):
        d = self.grid.dim
        h = min(self.grid.spacing)
        dt = math.inf
        if diff > 0:
            dt = min(dt, h * h * self.eps / (2 * d * diff))
        if adv > 0:
            dt = min(dt, h * self.eps / (d * adv))
        return self.config.cfl_safety * dt

    def _choose_dt(self, dt, dt_cap, rho):
        dt = min(dt, self.config.dt_max, dt_cap)
        if math.isinf(dt):
            raise StepFailure("equilibrium state has no intrinsic time step; set dt_max")
        if dt < self.config.dt_min:
            raise StepFailure("time step underflow", dt=dt, max_rho=float(rho.max()))
        return dt

    def advance(self, rho, dt_cap=math.inf):
        """One explicit step; returns (rho_new, dt, dissipation_increment, clipped_mass)."""
        phi = self.chemoattractant(rho)
        if self.fused:
            new, dt, diss = self._advance_fused(rho, phi, dt_cap)
        else:
            fluxes, speeds = self.fluxes(rho, phi)
            dt = self._choose_dt(self.stable_dt(rho, speeds), dt_cap, rho)
            new = rho.copy()
            for k, (F, h) in enumerate(zip(fluxes, self.grid.spacing)):
                new -= dt * np.diff(F, axis=k) / h
            diss = dt * self.dissipation_rate(rho, phi, fluxes)
        return self._finish(rho, new, dt, diss)

    def _advance_fused(self, rho, phi, dt_cap):
        nl = self.pot.nl
        P, fp, rho_fpp = nl.transport_terms(rho)
        mu = nl.beta * phi - fp
        if self.grid.dim == 1:
            (h,) = self.grid.spacing
            adv = nl.beta * _kernels.max_abs_diff_1d(phi, h)
        else:
            hx, hy = self.grid.spacing
            adv = nl.beta * _kernels.max_abs_diff_2d(phi, hx, hy)
        dt = self._choose_dt(self._cfl(float(rho_fpp.max()), adv), dt_cap, rho)
        new = np.empty_like(rho)
        limited = self.config.flux_scheme == "limited"
        if self.grid.dim == 1:
            rate = _kernels.update_1d(rho, phi, P, mu, nl.beta, self.eps, h, dt, limited, new)
        else:
            rate = _kernels.update_2d(rho, phi, P, mu, nl.beta, self.eps, hx, hy, dt, limited, new)
        return new, dt, dt * rate * self.grid.cell_volume

    def advance_until(self, rho, t, t_target, max_steps=None):
        """Step from time ``t`` until ``t_target`` (the last step is shortened).

        Returns ``(rho, t, steps, dissipation, clipped_mass)``.  One-dimensional
        power laws run the whole loop in compiled code with a tridiagonal
        Helmholtz solve, which gives the same discrete solution as the
        spectral solver.
        """
        limit = math.inf if max_steps is None else max_steps
        nl = self.pot.nl
        if self.fused and self.grid.dim == 1 and nl.kind == "power-law":
            if self._factor is None:
                self._factor = _kernels.tridiag_factor(self.grid.cells[0], nl.sigma, self.eps,
                                                       self.grid.spacing[0])
            upper, inv, c = self._factor
            cfg = self.config
            rho = np.array(rho, dtype=float)
            cap = np.iinfo(np.int64).max if math.isinf(limit) else int(limit)
            t_new, steps, diss, clipped, status = _kernels.run_power_1d(
                rho, nl.m, nl.coef, nl.beta, nl.sigma, self.eps, self.grid.spacing[0],
                upper, inv, c, cfg.cfl_safety, cfg.dt_max, cfg.dt_min,
                cfg.flux_scheme == "limited", cfg.negativity_clip, t, t_target, cap)
            if status == 1:
                raise StepFailure("time step underflow", t=t_new, max_rho=float(rho.max()))
            if status == 2:
                raise NumericalError("non-finite density after step", t=t_new)
            return rho, t_new, steps, diss, clipped
        steps = 0
        diss = clipped = 0.0
        while t < t_target * (1 - 1e-14) and steps < limit:
            rho, dt, d, c = self.advance(rho, dt_cap=t_target - t)
            t += dt
            steps += 1
            diss += d
            clipped += c
        return rho, t, steps, diss, clipped

    def _finish(self, rho, new, dt, diss):
        if not np.all(np.isfinite(new)):
            raise NumericalError("non-finite density after step", dt=dt)
        clipped = 0.0
        if self.config.negativity_clip:
            neg = new < 0
            if neg.any():
                clipped = -float(new[neg].sum()) * self.grid.cell_volume
                new[neg] = 0.0
        self.last_dt = dt
        return new, dt, diss, clipped


def velocity(pot, rho: Field, eps: float) -> list:
    return Stepper(pot, rho.grid, eps).velocity(rho.values)


def step(state: SimState, pot, config: StepperConfig | None = None) -> SimState:
    stepper = Stepper(pot, state.rho.grid, state.eps, config)
    new, dt, diss, clipped = stepper.advance(state.rho.values)
    return SimState(Field(state.rho.grid, new), state.t + dt, state.eps,
                    state.dissipation + diss, state.steps + 1, state.clipped_mass + clipped)


@dataclass
class Trajectory:
    states: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    tol_diss: float = 0.0

    def __iter__(self):
        return iter(zip(self.states, self.reports))

    def __len__(self):
        return len(self.states)

    @property
    def energies(self):
        return [r.j_eps_modica for r in self.reports]


def run(state: SimState, pot, config: StepperConfig | None = None, t_end: float = 1.0,
        snapshot_every: float = 0.1, check_dissipation: bool = True, on_snapshot=None,
        max_steps: int | None = None) -> Trajectory:
    """Integrate to ``t_end``, recording a snapshot every ``snapshot_every`` time units.

    Snapshot times are hit exactly by shortening the last step.  At each
    snapshot the discrete dissipation inequality
    ``J(t) + D(t) <= J(0) + tol`` with ``tol = 1e-3 (1 + J(0))`` and
    monotonicity ``J(t_k) <= J(t_{k-1}) + tol`` are checked.
    """
    if not t_end > state.t:
        raise InvalidParameterError("t_end must exceed the current time")
    if not snapshot_every > 0:
        raise InvalidParameterError("snapshot_every must be positive")
    stepper = Stepper(pot, state.rho.grid, state.eps, config)
    state = state.copy()
    base_diss = state.dissipation
    rep = energy_modica(pot, state.rho, state.eps, time=state.t)
    J0 = rep.j_eps_modica
    tol = 1e-3 * (1 + abs(J0))
    traj = Trajectory([state.copy()], [rep], tol)
    if on_snapshot:
        on_snapshot(state, rep)
    prev_J = J0
    rho = state.rho.values.copy()
    next_snap = state.t
    while state.t < t_end * (1 - 1e-14):
        next_snap = min(next_snap + snapshot_every, t_end)
        remaining = None if max_steps is None else max_steps - state.steps
        rho, state.t, n, diss, clipped = stepper.advance_until(rho, state.t, next_snap, remaining)
        state.steps += n
        state.dissipation += diss
        state.clipped_mass += clipped
        state.rho = Field(state.rho.grid, rho.copy())
        rep = energy_modica(pot, state.rho, state.eps, time=state.t)
        J = rep.j_eps_modica
        if check_dissipation:
            excess = J + (state.dissipation - base_diss) - J0
            if excess > tol:
                raise DissipationViolation("energy dissipation inequality violated",
                                           t=state.t, excess=excess, tol=tol)
            if J > prev_J + tol:
                raise DissipationViolation("energy increased between snapshots",
                                           t=state.t, increase=J - prev_J, tol=tol)
        if state.clipped_mass > 1e-10:
            log.warning("negativity clip removed %.3e mass so far", state.clipped_mass)
        prev_J = J
        traj.states.append(state.copy())
        traj.reports.append(rep)
        if on_snapshot:
            on_snapshot(state, rep)
        if max_steps is not None and state.steps >= max_steps:
            break
    return traj


# -- initial data -----------------------------------------------------------

def constant_state(grid: Grid, value: float, eps: float) -> SimState:
    return SimState(Field.constant(grid, value), 0.0, eps)


def indicator_state(shape, grid: Grid, pot, eps: float, cells: float = 3.0) -> SimState:
    """rho_c times the tanh-mollified indicator of ``shape`` (over ``cells`` cells)."""
    return SimState(Field(grid, mollified_indicator(shape, grid, pot.rho_c, cells)), 0.0, eps)


def recovery_state(shape, grid: Grid, pot, eps: float, mass=None) -> SimState:
    from .gammalab import build_recovery

    rec = build_recovery(shape, pot, eps, grid, mass=mass)
    return SimState(rec.rho, 0.0, eps)


def bump(grid: Grid, center, radius: float, height: float) -> np.ndarray:
    """Compactly supported cos^2 bump."""
    X = grid.coords()
    r2 = sum((x - c) ** 2 for x, c in zip(X, np.atleast_1d(center)))
    r = np.sqrt(r2) / radius
    return np.where(r < 1, height * np.cos(0.5 * np.pi * r) ** 2, 0.0)


def bumps_state(grid: Grid, eps: float, count: int = 2, seed: int = 0, height: float = 1.0,
                radius: float | None = None) -> SimState:
    """Sum of ``count`` random compact bumps with reproducible centres."""
    rng = np.random.default_rng(seed)
    radius = radius or 0.1 * min(grid.extents)
    rho = np.zeros(grid.shape)
    for _ in range(count):
        c = [rng.uniform(radius, L - radius) for L in grid.extents]
        rho += bump(grid, c, radius, height * rng.uniform(0.7, 1.0))
    return SimState(Field(grid, rho), 0.0, eps)
