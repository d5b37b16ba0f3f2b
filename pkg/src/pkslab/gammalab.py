"""Gamma-convergence experiments.

The optimal 1D profile solves ``Q' = sqrt(2 g(Q) / beta)`` with
``Q(-inf) = 0``, ``Q(+inf) = rho_c/sigma`` and ``Q(0) = rho_c/(2 sigma)``.
Recovery densities are ``rho = f*'(beta psi - a)`` with
``psi = Q((d + t)/eps)``, ``d`` the signed distance to the boundary of E and
``t`` a scalar shift tuned so the mass hits its target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as sp_integrate
from scipy import optimize
from scipy.interpolate import PchipInterpolator

from .energy import (energy_modica, first_variation_lhs, sharp_first_variation)
from .errors import ConfigurationError, NumericalError
from .field import Field, Grid, integrate, interface_width
from .geometry import FullDomain, signed_distance_on

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)

MIN_CELLS_PER_EPS = 8


class Profile:
    """Tabulated optimal profile Q and its inverse.

    Nodes are placed uniformly in the logistic variable
    ``u = log(q / (s_max - q))`` so that both exponential tails are resolved;
    ``z(q) = int_{s_max/2}^q dq' / sqrt(2 g(q')/beta)`` is accumulated by
    Gauss-Legendre on each node interval (split at the kink ``q = a/beta``).
    """

    def __init__(self, pot, nodes: int = 4001, tail: float = 1e-8):
        self.pot = pot
        nl = pot.nl
        s_max = pot.s_max
        self.s_max = s_max
        U = math.log((1 - tail) / tail)
        u = np.linspace(-U, U, nodes)
        kink = pot.a / nl.beta
        if 0 < kink < s_max:
            u = np.unique(np.concatenate([u, [math.log(kink / (s_max - kink))]]))
        self._u = u

        def dz_du(uu):
            q = s_max / (1 + np.exp(-uu))
            dq = q * (1 - q / s_max)
            rate = np.sqrt(np.maximum(2 * pot.g_accurate(q) / nl.beta, 0.0))
            if np.any(rate <= 0):
                raise NumericalError("profile ODE degenerates inside the wells")
            return dq / rate

        lo, hi = u[:-1], u[1:]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        pts = mid[:, None] + half[:, None] * _GL_X[None, :]
        pieces = (dz_du(pts) * _GL_W[None, :]).sum(axis=1) * half
        z = np.concatenate([[0.0], np.cumsum(pieces)])
        q = s_max / (1 + np.exp(-u))
        # anchor Q(0) = s_max / 2, i.e. u = 0
        z -= np.interp(0.0, u, z)
        if not np.all(np.diff(z) > 0):
            raise NumericalError("profile table is not monotone")
        self.z_nodes = z
        self.q_nodes = q
        self.z_min, self.z_max = float(z[0]), float(z[-1])
        self._Q = PchipInterpolator(z, q, extrapolate=False)

    def Q(self, z):
        """Profile value; exact wells beyond the truncated tails."""
        z = np.asarray(z, dtype=float)
        out = self._Q(np.clip(z, self.z_min, self.z_max))
        out = np.where(z <= self.z_min, 0.0, out)
        out = np.where(z >= self.z_max, self.s_max, out)
        return out

    def dQ(self, z):
        """Q' through the ODE, sqrt(2 g(Q)/beta)."""
        q = self.Q(z)
        return np.sqrt(np.maximum(2 * self.pot.g_accurate(q) / self.pot.nl.beta, 0.0))

    def energy(self, eps: float = 1.0) -> float:
        """1/eps int g(Q(x/eps)) + eps beta/2 |d/dx Q(x/eps)|^2 dx over the tabulated range."""
        beta = self.pot.nl.beta

        def integrand(x):
            z = x / eps
            q = self.Q(z)
            return float(self.pot.g_accurate(q) / eps + 0.5 * beta * eps * (self.dQ(z) / eps) ** 2)

        pieces = np.linspace(self.z_min * eps, self.z_max * eps, 33)
        total = 0.0
        for a, b in zip(pieces[:-1], pieces[1:]):
            total += sp_integrate.quad(integrand, a, b, epsabs=1e-12, epsrel=1e-10, limit=200)[0]
        return total

    def width(self, lo_frac=0.1, hi_frac=0.9) -> float:
        """Width in z between the given fractions of rho_c for the recovered density."""
        pot = self.pot
        rho = pot.g_argmin(self.q_nodes)
        z_lo = np.interp(lo_frac * pot.rho_c, rho, self.z_nodes)
        z_hi = np.interp(hi_frac * pot.rho_c, rho, self.z_nodes)
        return float(z_hi - z_lo)


_PROFILES = {}


def optimal_profile_1d(pot) -> Profile:
    key = id(pot)
    prof = _PROFILES.get(key)
    if prof is None or prof.pot is not pot:
        prof = Profile(pot)
        _PROFILES[key] = prof
    return prof


@dataclass
class RecoveryProfile:
    eps: float
    psi: Field
    rho: Field
    mass_shift: float
    target_mass: float


def _subcell_distance(shape, grid, points):
    """Signed distance at ``points`` Gauss-Legendre nodes per axis inside every cell.

    Returns the distances (grid shape + one trailing sample axis) and the
    matching averaging weights.
    """
    gx, gw = np.polynomial.legendre.leggauss(points)
    axes = grid.axes()
    if grid.dim == 1:
        xs = axes[0][:, None] + 0.5 * grid.spacing[0] * gx[None, :]
        return shape.signed_distance(xs), gw / 2.0
    hx, hy = grid.spacing
    sx = (axes[0][:, None] + 0.5 * hx * gx[None, :])[:, None, :, None]
    sy = (axes[1][:, None] + 0.5 * hy * gx[None, :])[None, :, None, :]
    d = shape.signed_distance(sx, sy)
    n = grid.cells
    w = np.outer(gw, gw).ravel() / 4.0
    return d.reshape(n[0], n[1], points * points), w


def build_recovery(shape, pot, eps: float, grid: Grid, mass: float | None = None,
                   tol: float = 1e-12, subsamples: int | None = None) -> RecoveryProfile:
    """Recovery density for the set ``shape`` at scale ``eps``.

    Cell values are cell averages of the continuum recovery density,
    computed with ``subsamples`` Gauss-Legendre points per axis (default 8
    in 1D, 4 in 2D); ``subsamples=0`` samples cell centres instead.
    ``mass`` defaults to ``rho_c |E|``, the mass of the sharp limit.
    """
    prof = optimal_profile_1d(pot)
    if subsamples is None:
        subsamples = 8 if grid.dim == 1 else 4
    if subsamples:
        d, w = _subcell_distance(shape, grid, subsamples)
    else:
        d, w = signed_distance_on(shape, grid)[..., None], np.ones(1)
    target = pot.rho_c * shape.measure(grid.extents) if mass is None else float(mass)

    def build(t):
        psi = prof.Q((d + t) / eps)
        return psi @ w, pot.g_argmin(psi) @ w

    if isinstance(shape, FullDomain) or not np.any(np.isfinite(d)):
        psi, rho = build(0.0)
        return RecoveryProfile(eps, Field(grid, psi), Field(grid, rho), 0.0,
                               integrate(rho, grid))

    def excess(t):
        return integrate(build(t)[1], grid) - target

    T = eps
    lo, hi = -T, T
    for _ in range(60):
        if excess(lo) < 0 < excess(hi):
            break
        lo, hi = lo - T, hi + T
        T *= 2
        if T > 10 * max(grid.extents):
            raise ConfigurationError(
                "cannot reach the requested mass by shifting the interface; "
                "the domain is too small or the target too large", )
    else:
        raise ConfigurationError("mass bracket search failed")
    t = optimize.brentq(excess, lo, hi, xtol=1e-15 * max(1.0, eps), rtol=1e-15, maxiter=200)
    psi, rho = build(t)
    got = integrate(rho, grid)
    if abs(got - target) > max(1e-8 * target, tol):
        raise NumericalError("mass tuning did not converge", mass=got, target=target)
    return RecoveryProfile(eps, Field(grid, psi), Field(grid, rho), float(t), target)


def _richardson(eps, values, window=3):
    """Least-squares fit values = L + C eps over the last ``window`` points."""
    e = np.asarray(eps[-window:], dtype=float)
    v = np.asarray(values[-window:], dtype=float)
    A = np.stack([np.ones_like(e), e], axis=1)
    (L, C), *_ = np.linalg.lstsq(A, v, rcond=None)
    return float(L), float(C)


def fitted_order(eps, values) -> float:
    """Slope of log|values| against log eps (least squares)."""
    e = np.asarray(eps, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    if np.any(v == 0):
        return math.inf
    return float(np.polyfit(np.log(e), np.log(v), 1)[0])


@dataclass
class LadderResult:
    eps: list
    values: list
    target: float
    limit: float
    slope: float
    label: str = ""
    extras: dict = field(default_factory=dict)
    reports: list = field(default_factory=list)

    def __post_init__(self):
        e = np.asarray(self.eps, dtype=float)
        if len(e) < 4:
            raise ConfigurationError("an epsilon ladder needs at least four points")
        if not np.all(np.diff(e) < 0):
            raise ConfigurationError("epsilon ladder must be strictly decreasing")

    @property
    def gap(self) -> float:
        """Relative distance of the extrapolated limit from the target."""
        if self.target == 0:
            return abs(self.limit)
        return abs(self.limit - self.target) / abs(self.target)

    @property
    def gaps(self) -> list:
        return [abs(v - self.target) / abs(self.target) if self.target else abs(v)
                for v in self.values]

    @property
    def fitted_order(self) -> float:
        """Observed order of |J_eps - limit| along the ladder."""
        dev = np.asarray(self.values) - self.limit
        if np.all(np.abs(dev) < 1e-12 * max(1.0, abs(self.limit))):
            return math.inf
        return fitted_order(self.eps, dev)

    def rows(self):
        order = self.extras.get("residual_order", self.fitted_order)
        return [(e, v, self.target, g, order) for e, v, g in zip(self.eps, self.values, self.gaps)]


def _check_ladder(eps_ladder):
    e = [float(x) for x in eps_ladder]
    if len(e) < 4 or not all(b < a for a, b in zip(e, e[1:])) or e[-1] <= 0:
        raise ConfigurationError("epsilon ladder must hold >= 4 strictly decreasing positive values")
    return e


def check_resolution(grid: Grid, eps: float, min_cells: int = MIN_CELLS_PER_EPS):
    h = max(grid.spacing)
    if eps / h < min_cells:
        raise ConfigurationError(
            f"grid resolves eps={eps:g} with only {eps / h:.2f} cells; need >= {min_cells}")


def ladder_grid(extents, eps: float, eps_ref: float, cells_at_ref: int = MIN_CELLS_PER_EPS,
                power: float = 1.5) -> Grid:
    """Grid with spacing h = (eps_ref / cells_at_ref) (eps/eps_ref)^power.

    ``power > 1`` refines h faster than eps, so the discretization error
    (of relative size (h/eps)^2) vanishes along the ladder as well.
    """
    h = eps_ref / cells_at_ref * (eps / eps_ref) ** power
    cells = tuple(int(math.ceil(L / h)) for L in extents)
    return Grid(cells, tuple(extents))


def _grids(extents, eps_list, grid, power, cells_at_ref):
    if grid is not None:
        grids = [grid] * len(eps_list) if isinstance(grid, Grid) else list(grid)
    else:
        grids = [ladder_grid(extents, e, eps_list[0], cells_at_ref, power) for e in eps_list]
    for g, e in zip(grids, eps_list):
        check_resolution(g, e)
    return grids


def gamma_limsup_experiment(shape, pot, extents, eps_ladder, grid=None, power=1.5,
                            cells_at_ref=MIN_CELLS_PER_EPS, mass=None) -> LadderResult:
    """J_eps along recovery densities; target gamma rho_c P(E)."""
    eps_list = _check_ladder(eps_ladder)
    grids = _grids(extents, eps_list, grid, power, cells_at_ref)
    values, reports, resid, widths, l1 = [], [], [], [], []
    for e, g in zip(eps_list, grids):
        rec = build_recovery(shape, pot, e, g, mass=mass)
        rep = energy_modica(pot, rec.rho, e)
        reports.append(rep)
        values.append(rep.j_eps_modica)
        resid.append(rep.equipartition_residual if rep.j_eps_modica > 0 else 0.0)
        sharp = pot.rho_c * (signed_distance_on(shape, g) > 0)
        l1.append(integrate(np.abs(rec.rho.values - sharp), g))
        try:
            widths.append(interface_width(rec.rho, pot.rho_c))
        except Exception:
            widths.append(math.nan)
    target = pot.constants.gamma0 * shape.perimeter(extents)
    L, C = _richardson(eps_list, values)
    extras = {
        "equipartition_residual": resid,
        "residual_order": fitted_order(eps_list, resid) if any(resid) else math.inf,
        "bv_surrogate": [r.bv_surrogate for r in reports],
        "l1_error": l1,
        "width": widths,
        "cells": [g.cells for g in grids],
    }
    return LadderResult(eps_list, values, target, L, C, "limsup", extras, reports)


def naive_sequence_experiment(shape, pot, extents, eps_ladder, grid=None, power=1.0,
                              cells_at_ref=MIN_CELLS_PER_EPS) -> LadderResult:
    """J_eps of the fixed sharp density rho_c chi_E; target beta rho_c^2/(4 sigma^1.5) P(E)."""
    eps_list = _check_ladder(eps_ladder)
    grids = _grids(extents, eps_list, grid, power, cells_at_ref)
    values, reports = [], []
    for e, g in zip(eps_list, grids):
        rho = Field(g, pot.rho_c * (signed_distance_on(shape, g) > 0))
        rep = energy_modica(pot, rho, e)
        reports.append(rep)
        values.append(rep.j_eps_modica)
    P = shape.perimeter(extents)
    target = pot.constants.gamma_max * pot.rho_c * P
    L, C = _richardson(eps_list, values)
    extras = {
        "gamma_limit": pot.constants.gamma0 * P,
        "margin": L - pot.constants.gamma0 * P,
        "ratio_to_rho_c_perimeter": [v / (pot.rho_c * P) for v in values] if P else [],
    }
    return LadderResult(eps_list, values, target, L, C, "naive", extras, reports)


def first_variation_convergence(shape, pot, extents, eps_ladder, xi_field, grid=None,
                                power=1.0, cells_at_ref=MIN_CELLS_PER_EPS) -> LadderResult:
    """First-variation integral along recovery densities against the sharp geometric value."""
    eps_list = _check_ladder(eps_ladder)
    grids = _grids(extents, eps_list, grid, power, cells_at_ref)
    values = []
    for e, g in zip(eps_list, grids):
        rec = build_recovery(shape, pot, e, g)
        values.append(first_variation_lhs(pot, rec.rho, e, xi_field))
    target = sharp_first_variation(pot, shape, xi_field, extents)
    L, C = _richardson(eps_list, values)
    return LadderResult(eps_list, values, target, L, C, "first-variation",
                        {"cells": [g.cells for g in grids]})
