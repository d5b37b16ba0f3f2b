"""Energy functionals, first variations and the rescaled pressure.

All functions take a :class:`~pkslab.potentials.Potentials` bundle, a
density ``rho`` (Field) and ``eps``.  The chemoattractant is always
recomputed from ``rho``, never passed in, so the algebraic identities
between the primal and Modica forms hold to solver precision.

With chi = beta/(2 sigma):

    primal   J = 1/eps int f(rho) + a rho - beta/2 rho phi
    Modica   J = 1/eps int W(rho) + chi (rho - sigma phi)^2 + eps beta/2 int |grad phi|^2
    lower    F(phi) = 1/eps int g(phi) + eps beta/2 int |grad phi|^2  <=  J
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Callable

import numpy as np

from .errors import DomainError, InvalidParameterError
from .field import (Field, cell_gradient, face_average, face_difference, fsum, integrate,
                    tv_via_F, total_variation)
from .helmholtz import solver_for


@dataclass(frozen=True)
class EnergyReport:
    j_eps_primal: float
    j_eps_modica: float
    f_eps_of_phi: float
    well_term: float
    coupling_term: float
    gradient_term: float
    bv_surrogate: float
    mass: float
    perimeter_estimate: float
    time: float = 0.0

    @property
    def equipartition_residual(self) -> float:
        """(well + coupling - gradient) / J; tends to 0 along optimal sequences."""
        return (self.well_term + self.coupling_term - self.gradient_term) / self.j_eps_modica

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def row(self):
        return [asdict(self)[c] for c in self.columns()]


def _rho(rho):
    v = rho.values
    if v.min() < -1e-12:
        raise DomainError(f"density has negative entries (min {v.min():.3e})")
    return np.maximum(v, 0.0)


def chemoattractant(pot, rho: Field, eps: float) -> np.ndarray:
    return solver_for(rho.grid, pot.nl.sigma).solve(rho.values, eps)


def energy_primal(pot, rho: Field, eps: float) -> float:
    if not eps > 0:
        raise InvalidParameterError("epsilon must be positive")
    r = _rho(rho)
    phi = chemoattractant(pot, rho, eps)
    nl = pot.nl
    dens = nl.f(r) + pot.a * r - 0.5 * nl.beta * r * phi
    return fsum(dens) * rho.grid.cell_volume / eps


def _face_gradient_sq(phi, grid):
    """Sum over faces of |D phi|^2 times the cell volume."""
    return sum(fsum(face_difference(phi, h, k) ** 2)
               for k, h in enumerate(grid.spacing)) * grid.cell_volume


def energy_modica(pot, rho: Field, eps: float, time: float = 0.0,
                  tv_method: str = "isotropic") -> EnergyReport:
    if not eps > 0:
        raise InvalidParameterError("epsilon must be positive")
    r = _rho(rho)
    grid = rho.grid
    nl = pot.nl
    phi = chemoattractant(pot, rho, eps)
    vol = grid.cell_volume
    primal = fsum(nl.f(r) + pot.a * r - 0.5 * nl.beta * r * phi) * vol / eps
    well = fsum(pot.W(r)) * vol / eps
    coupling = fsum(nl.chi * (r - nl.sigma * phi) ** 2) * vol / eps
    grad = 0.5 * nl.beta * eps * _face_gradient_sq(phi, grid)
    lower = fsum(pot.g(phi)) * vol / eps + grad
    bv = tv_via_F(phi, pot, grid, method=tv_method)
    return EnergyReport(
        j_eps_primal=primal,
        j_eps_modica=well + coupling + grad,
        f_eps_of_phi=lower,
        well_term=well,
        coupling_term=coupling,
        gradient_term=grad,
        bv_surrogate=bv,
        mass=integrate(r, grid),
        perimeter_estimate=bv / pot.constants.gamma0,
        time=float(time),
    )


def energy_sharp(pot, rho_limit: Field, tol: float = 1e-6, tv_method: str = "isotropic") -> float:
    """gamma * TV(rho) for a density taking only the values 0 and rho_c."""
    v = rho_limit.values
    rc = pot.rho_c
    two_valued = (np.abs(v) <= tol * rc) | (np.abs(v - rc) <= tol * rc)
    if not np.all(two_valued):
        raise DomainError("sharp energy needs a density with values in {0, rho_c}")
    return pot.gamma * total_variation(rho_limit, method=tv_method)


@dataclass(frozen=True)
class TestVectorField:
    """Closed-form vector field with xi.n = 0 on the box boundary.

    ``xi(*coords)`` returns a tuple of components, ``div`` the divergence and
    ``jac`` the Jacobian as nested tuples ``J[i][j] = d xi_i / d x_j``.
    """

    __test__ = False

    xi: Callable
    div: Callable
    jac: Callable
    dim: int = 2
    name: str = ""

    @classmethod
    def radial_cutoff(cls, center=(0.5, 0.5), r0=0.35, r1=0.48):
        """(x - c) eta(|x - c|) with eta = 1 on r < r0 and 0 beyond r1 (C^2 quintic)."""
        cx, cy = center
        w = r1 - r0

        def eta(r):
            t = np.clip((r - r0) / w, 0.0, 1.0)
            return 1.0 - t**3 * (10 - 15 * t + 6 * t * t)

        def deta(r):
            t = np.clip((r - r0) / w, 0.0, 1.0)
            return -30 * t * t * (1 - t) ** 2 / w

        def xi(x, y):
            r = np.hypot(x - cx, y - cy)
            e = eta(r)
            return ((x - cx) * e, (y - cy) * e)

        def div(x, y):
            r = np.hypot(x - cx, y - cy)
            return 2 * eta(r) + r * deta(r)

        def jac(x, y):
            dx, dy = x - cx, y - cy
            r = np.hypot(dx, dy)
            e = eta(r)
            q = np.where(r > 0, deta(r) / np.where(r > 0, r, 1.0), 0.0)
            return ((e + dx * dx * q, dx * dy * q), (dx * dy * q, e + dy * dy * q))

        return cls(xi, div, jac, 2, "radial-cutoff")

    @classmethod
    def stream(cls, extents=(1.0, 1.0)):
        """Divergence-free (d_y psi, -d_x psi), psi = sin^2(pi x/Lx) sin^2(pi y/Ly)."""
        kx, ky = math.pi / extents[0], math.pi / extents[1]

        def xi(x, y):
            return (np.sin(kx * x) ** 2 * ky * np.sin(2 * ky * y),
                    -kx * np.sin(2 * kx * x) * np.sin(ky * y) ** 2)

        def div(x, y):
            return np.zeros(np.broadcast(x, y).shape)

        def jac(x, y):
            a = kx * ky * np.sin(2 * kx * x) * np.sin(2 * ky * y)
            return ((a, 2 * ky * ky * np.sin(kx * x) ** 2 * np.cos(2 * ky * y)),
                    (-2 * kx * kx * np.cos(2 * kx * x) * np.sin(ky * y) ** 2, -a))

        return cls(xi, div, jac, 2, "stream")

    @classmethod
    def sine_1d(cls, length=1.0, modes=1):
        k = modes * math.pi / length

        def xi(x):
            return (np.sin(k * x),)

        def div(x):
            return k * np.cos(k * x)

        def jac(x):
            return ((k * np.cos(k * x),),)

        return cls(xi, div, jac, 1, "sine")

    def boundary_normal_max(self, grid, samples=257) -> float:
        """Largest |xi.n| over sampled boundary points of the box."""
        worst = 0.0
        for axis in range(self.dim):
            for wall in (0.0, grid.extents[axis]):
                coords = []
                for k in range(self.dim):
                    if k == axis:
                        coords.append(np.full(samples, wall))
                    else:
                        coords.append(np.linspace(0, grid.extents[k], samples))
                comp = self.xi(*coords)[axis]
                worst = max(worst, float(np.max(np.abs(comp))))
        return worst


def _face_xi(xi_field, grid, axis):
    fc = grid.face_coords(axis)
    return xi_field.xi(*fc)[axis]


def first_variation_lhs(pot, rho: Field, eps: float, xi_field: TestVectorField) -> float:
    """1/eps int [f + a rho - beta rho phi] div xi - beta rho grad phi . xi.

    xi is sampled at faces; the divergence term uses the discrete
    divergence of those samples, so it sums to zero exactly for constant
    densities.  The transport term uses the arithmetic mean of rho on faces.
    """
    grid = rho.grid
    r = _rho(rho)
    nl = pot.nl
    phi = chemoattractant(pot, rho, eps)
    vol = grid.cell_volume
    xi_faces = [_face_xi(xi_field, grid, k) for k in range(grid.dim)]
    div = sum(np.diff(xf, axis=k) / h for k, (xf, h) in enumerate(zip(xi_faces, grid.spacing)))
    cell = fsum((nl.f(r) + pot.a * r - nl.beta * r * phi) * div)
    face = 0.0
    for k, h in enumerate(grid.spacing):
        face += fsum(face_average(r, k) * face_difference(phi, h, k) * xi_faces[k])
    return (cell - nl.beta * face) * vol / eps


def first_variation_rhs_discrete(pot, rho: Field, eps: float, xi_field: TestVectorField) -> float:
    """1/eps int [W + chi (rho - sigma phi)^2] div xi
    + eps beta/2 int |grad phi|^2 div xi - eps beta int grad phi (x) grad phi : D xi."""
    grid = rho.grid
    r = _rho(rho)
    nl = pot.nl
    phi = chemoattractant(pot, rho, eps)
    X = grid.coords()
    div = xi_field.div(*X)
    J = xi_field.jac(*X)
    gp = cell_gradient(phi, grid)
    vol = grid.cell_volume
    pot_part = fsum((pot.W(r) + nl.chi * (r - nl.sigma * phi) ** 2) * div) / eps
    g2 = sum(c * c for c in gp)
    stress = sum(gp[i] * gp[j] * J[i][j] for i in range(grid.dim) for j in range(grid.dim))
    grad_part = eps * nl.beta * fsum(0.5 * g2 * div - stress)
    return (pot_part + grad_part) * vol


def sharp_first_variation(pot, shape, xi_field: TestVectorField, extents, n=4096) -> float:
    """gamma rho_c int over the boundary of E of (div xi - nu.(D xi) nu)."""
    pts, nrm, w = shape.boundary_quadrature(extents, n) if shape.dim == 2 else \
        shape.boundary_quadrature(extents)
    if w.size == 0:
        return 0.0
    coords = [pts[:, k] for k in range(pts.shape[1])]
    div = xi_field.div(*coords)
    J = xi_field.jac(*coords)
    d = pts.shape[1]
    nn = sum(nrm[:, i] * nrm[:, j] * J[i][j] for i in range(d) for j in range(d))
    return pot.constants.gamma0 * fsum((div - nn) * w)


def pressure_field(pot, rho: Field, eps: float) -> Field:
    """1/eps [rho (f'(rho) - f'(rho_c)) + beta/sigma rho (rho_c - sigma phi)], mean removed."""
    r = _rho(rho)
    nl = pot.nl
    phi = chemoattractant(pot, rho, eps)
    rc = pot.rho_c
    p = (r * (nl.fp(r) - nl.fp(rc)) + nl.beta / nl.sigma * r * (rc - nl.sigma * phi)) / eps
    mean = fsum(p) / p.size
    p = p - mean
    # second pass removes the rounding left by the first subtraction
    p -= fsum(p) / p.size
    return Field(rho.grid, p)


def gibbs_thomson_jump(pot, rho: Field, eps: float, center, radius, margin=4.0):
    """Mean pressure inside r < R - margin eps minus mean outside r > R + margin eps."""
    p = pressure_field(pot, rho, eps).values
    X, Y = rho.grid.coords()
    r = np.hypot(X - center[0], Y - center[1])
    inner = r < radius - margin * eps
    outer = r > radius + margin * eps
    if not inner.any() or not outer.any():
        raise InvalidParameterError("disk too small or too large for the pressure average")
    return float(p[inner].mean() - p[outer].mean())
