"""Scalar potentials of the nonlinear-diffusion Keller-Segel energy.

Everything here is a pure function of the pressure law ``f`` and the two
constants ``beta`` (cell sensitivity) and ``sigma`` (chemical degradation):

    h(rho) = f(rho)/rho - beta/(2 sigma) rho           (minimised at rho_c, min = -a)
    W(rho) = f(rho) - beta/(2 sigma) rho^2 + a rho      (double well, zeros {0, rho_c})
    g(s)   = inf_{rho>=0} W(rho) + beta/(2 sigma) (rho - sigma s)^2
           = beta sigma s^2 / 2 - f*(beta s - a)
    gamma  = 1/rho_c int_0^{rho_c/sigma} sqrt(2 beta g(s)) ds
    F'(s)  = sqrt(2 beta g(s)) on (0, rho_c/sigma),  F(0) = 0,  F = gamma rho_c beyond.

With ``beta = sigma = 1`` these reduce to the familiar normalized forms
``g(s) = s^2/2 - f*(s - a)`` and ``F' = sqrt(2 g)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, HypothesisViolation, InvalidParameterError, NumericalError

# Gauss-Legendre rule used for the cumulative tables.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


@dataclass(frozen=True)
class Nonlinearity:
    """Pressure law ``f`` together with ``beta`` and ``sigma``.

    The power law is ``f(rho) = coef * rho**m / (m - 1)``.  A custom law is
    given by closed-form evaluators ``(f, f', f'')``; its Legendre transform
    is then obtained by monotone inversion of ``f'``.
    """

    m: float = 3.0
    beta: float = 1.0
    sigma: float = 1.0
    coef: float = 1.0
    kind: str = "power-law"
    evaluators: tuple | None = field(default=None, compare=False, repr=False)
    name: str = ""

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise InvalidParameterError(f"beta must be positive, got {self.beta}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise InvalidParameterError(f"sigma must be positive, got {self.sigma}")
        if self.kind == "power-law":
            if not self.m > 2:
                raise InvalidParameterError(f"m must exceed 2, got {self.m}")
            if not self.coef > 0:
                raise InvalidParameterError(f"coef must be positive, got {self.coef}")
        elif self.kind == "custom":
            if self.evaluators is None or len(self.evaluators) != 3:
                raise InvalidParameterError("custom nonlinearity needs (f, f', f'') evaluators")
            f0 = float(self.evaluators[0](np.array(0.0)))
            fp0 = float(self.evaluators[1](np.array(0.0)))
            if abs(f0) > 1e-12 or abs(fp0) > 1e-12:
                raise InvalidParameterError("custom nonlinearity must satisfy f(0) = f'(0) = 0")
        else:
            raise InvalidParameterError(f"unknown nonlinearity kind {self.kind!r}")

    @classmethod
    def power_law(cls, m=3.0, beta=1.0, sigma=1.0, coef=1.0):
        return cls(m=float(m), beta=float(beta), sigma=float(sigma), coef=float(coef))

    @classmethod
    def custom(cls, f, fp, fpp, beta=1.0, sigma=1.0, name="custom"):
        return cls(m=float("nan"), beta=float(beta), sigma=float(sigma), kind="custom",
                   evaluators=(f, fp, fpp), name=name)

    @property
    def chi(self) -> float:
        """Quadratic attraction coefficient beta / (2 sigma)."""
        return self.beta / (2.0 * self.sigma)

    @property
    def is_normalized(self) -> bool:
        return self.beta == 1.0 and self.sigma == 1.0

    # Negative arguments only arise from roundoff and are clamped to 0.
    def f(self, rho):
        rho = np.maximum(rho, 0.0)
        if self.kind == "power-law":
            return self.coef * rho**self.m / (self.m - 1.0)
        return self.evaluators[0](rho)

    def fp(self, rho):
        rho = np.maximum(rho, 0.0)
        if self.kind == "power-law":
            return self.coef * self.m / (self.m - 1.0) * rho ** (self.m - 1.0)
        return self.evaluators[1](rho)

    def fpp(self, rho):
        rho = np.maximum(rho, 0.0)
        if self.kind == "power-law":
            return self.coef * self.m * rho ** (self.m - 2.0)
        return self.evaluators[2](rho)

    def pressure(self, rho):
        """rho f'(rho) - f(rho); its gradient is rho grad f'(rho)."""
        return self.transport_terms(rho)[0]

    def transport_terms(self, rho):
        """(P, f', rho f'') with P = rho f' - f, sharing one power evaluation."""
        rho = np.maximum(rho, 0.0)
        fp = self.fp(rho)
        if self.kind == "power-law":
            return (self.m - 1.0) / self.m * rho * fp, fp, (self.m - 1.0) * fp
        return rho * fp - self.f(rho), fp, rho * self.fpp(rho)

    def fstar_prime(self, q):
        """(f')^{-1}(q) for q > 0 and 0 for q <= 0."""
        q = np.asarray(q, dtype=float)
        out = np.zeros_like(q)
        pos = q > 0
        if not np.any(pos):
            return out
        if self.kind == "power-law":
            k = self.coef * self.m / (self.m - 1.0)
            out[pos] = (q[pos] / k) ** (1.0 / (self.m - 1.0))
        else:
            out[pos] = _invert_monotone(self.fp, self.fpp, q[pos])
        return out

    def fstar(self, q):
        """Legendre transform sup_{rho>=0} (rho q - f(rho))."""
        q = np.asarray(q, dtype=float)
        out = np.zeros_like(q)
        pos = q > 0
        if np.any(pos):
            r = self.fstar_prime(q[pos])
            if self.kind == "power-law":
                out[pos] = (self.m - 1.0) / self.m * q[pos] * r
            else:
                out[pos] = q[pos] * r - self.f(r)
        return out


def _invert_monotone(fp, fpp, q, bisections=60, polish=3):
    """Solve fp(rho) = q for rho > 0, vectorized; fp increasing with fp(0) = 0."""
    lo = np.zeros_like(q)
    hi = np.ones_like(q)
    for _ in range(2000):
        short = fp(hi) < q
        if not np.any(short):
            break
        hi = np.where(short, 2.0 * hi, hi)
    else:
        raise NumericalError("f' does not reach target value", q_max=float(q.max()))
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        below = fp(mid) < q
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    rho = 0.5 * (lo + hi)
    for _ in range(polish):
        d = fpp(rho)
        step = np.where(d > 0, (fp(rho) - q) / np.where(d > 0, d, 1.0), 0.0)
        trial = rho - step
        rho = np.where((trial >= lo) & (trial <= hi), trial, rho)
    resid = np.abs(fp(rho) - q)
    if np.any(resid > 1e-9 * (1.0 + q)):
        raise NumericalError("Legendre inversion did not converge",
                             max_residual=float(resid.max()))
    return rho


class Normalized(NamedTuple):
    """Result of mapping a system onto beta = sigma = 1."""

    nonlinearity: Nonlinearity
    time_factor: float
    epsilon_scale: float

    def epsilon(self, eps: float) -> float:
        return eps * self.epsilon_scale


def normalize(nl: Nonlinearity) -> Normalized:
    """Rescale to beta = sigma = 1.

    ``f`` becomes ``(sigma/beta) f``, ``phi`` becomes ``sigma phi``,
    ``eps`` becomes ``eps / sqrt(sigma)`` and time is multiplied by
    ``sigma**1.5 / beta``.
    """
    beta, sigma = nl.beta, nl.sigma
    scale = sigma / beta
    if nl.kind == "power-law":
        new = Nonlinearity.power_law(nl.m, 1.0, 1.0, nl.coef * scale)
    else:
        f, fp, fpp = nl.evaluators
        new = Nonlinearity.custom(lambda r: scale * f(r), lambda r: scale * fp(r),
                                  lambda r: scale * fpp(r), name=nl.name)
    return Normalized(new, sigma**1.5 / beta, 1.0 / math.sqrt(sigma))


def h_function(nl: Nonlinearity, rho):
    rho = np.asarray(rho, dtype=float)
    return nl.f(rho) / rho - nl.chi * rho


def phase_constants(nl: Nonlinearity, rho_max: float = 1e6) -> tuple[float, float]:
    """Critical density rho_c and energy offset a = -min h.

    A geometric scan brackets the minimiser of h, golden-section search
    refines it, and the stationarity equation
    ``f'(rho) rho - f(rho) = beta/(2 sigma) rho^2`` is solved inside the
    bracket as a final polish.
    """
    chi = nl.chi
    grid = np.geomspace(1e-8, rho_max, 4001)
    hv = h_function(nl, grid)
    i = int(np.argmin(hv))
    if not hv[i] < 0.0:
        raise HypothesisViolation("h attains its infimum at rho = 0; no positive well")
    if i == len(grid) - 1:
        raise HypothesisViolation("h is not bounded below on the scanned range")
    interior = np.flatnonzero((hv[1:-1] <= hv[:-2]) & (hv[1:-1] <= hv[2:])) + 1
    for j in interior:
        if abs(j - i) > 2 and hv[j] - hv[i] <= 1e-9 * abs(hv[i]):
            raise HypothesisViolation(
                f"minimiser of h is not unique: wells near {grid[i]:.6g} and {grid[j]:.6g}")
    lo, mid, hi = grid[max(i - 1, 0)], grid[i], grid[i + 1]
    res = optimize.minimize_scalar(lambda r: float(h_function(nl, r)),
                                   bracket=(lo, mid, hi), method="golden", tol=1e-10)
    r0 = float(res.x)

    def stationarity(r):
        return float(nl.fp(r) * r - nl.f(r) - chi * r * r)

    a_, b_ = r0 * (1 - 1e-6), r0 * (1 + 1e-6)
    if stationarity(a_) * stationarity(b_) > 0:
        a_, b_ = lo, hi
    try:
        rho_c = optimize.brentq(stationarity, a_, b_, xtol=1e-15, rtol=1e-15, maxiter=500)
    except ValueError as exc:
        raise NumericalError("stationarity polish failed", bracket=(a_, b_)) from exc
    a = -float(h_function(nl, rho_c))
    return float(rho_c), a


def double_well_W(nl: Nonlinearity, a: float, rho):
    """W(rho) = f(rho) - beta/(2 sigma) rho^2 + a rho for rho >= 0."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < -1e-12):
        raise DomainError("W is +infinity for negative densities")
    rho = np.maximum(rho, 0.0)
    return nl.f(rho) - nl.chi * rho * rho + a * rho


def legendre_fstar(nl: Nonlinearity, q):
    return nl.fstar(q)


def legendre_fstar_prime(nl: Nonlinearity, q):
    return nl.fstar_prime(q)


def cell_problem_g(nl: Nonlinearity, a: float, s):
    """Closed form of the cell problem, ``beta sigma s^2/2 - f*(beta s - a)``."""
    s = np.asarray(s, dtype=float)
    return 0.5 * nl.beta * nl.sigma * s * s - nl.fstar(nl.beta * s - a)


def g_argmin(nl: Nonlinearity, a: float, s):
    """Minimising density of the cell problem: ``f*'(beta s - a)``."""
    s = np.asarray(s, dtype=float)
    return nl.fstar_prime(nl.beta * s - a)


def gamma_upper_bound(nl: Nonlinearity, rho_c: float) -> float:
    return nl.beta * rho_c / (4.0 * nl.sigma**1.5)


def _sqrt_2beta_g(nl, a):
    def integrand(s):
        return np.sqrt(np.maximum(2.0 * nl.beta * cell_problem_g(nl, a, s), 0.0))
    return integrand


def surface_tension_gamma(nl: Nonlinearity, rho_c: float, a: float, tol: float = 1e-10,
                          g=None) -> float:
    """Adaptive Gauss-Kronrod quadrature of sqrt(2 beta g) over [0, rho_c/sigma].

    The integrand vanishes at both wells and loses smoothness where
    ``beta s = a``; that point is passed as a breakpoint.  ``g`` may replace
    the closed-form cell problem (used by the brute-force oracle).
    """
    s_max = rho_c / nl.sigma
    if g is None:
        integrand = _sqrt_2beta_g(nl, a)
    else:
        def integrand(s):
            return math.sqrt(max(2.0 * nl.beta * g(s), 0.0))
    kink = a / nl.beta
    points = [kink] if 0.0 < kink < s_max else None
    val, err, info = integrate.quad(lambda s: float(integrand(s)), 0.0, s_max, points=points,
                                    epsabs=tol, epsrel=0.0, limit=500, full_output=True)[:3]
    if err > 10 * tol:
        raise NumericalError("gamma quadrature did not converge", estimate=val, error=err)
    gamma = val / rho_c
    if not gamma > 0:
        raise HypothesisViolation("surface tension is not positive")
    return gamma


@dataclass(frozen=True)
class PhaseConstants:
    rho_c: float
    a: float
    gamma: float
    gamma_max: float

    def __post_init__(self):
        if not self.rho_c > 0:
            raise HypothesisViolation("rho_c must be positive")
        if not (0.0 < self.gamma < self.gamma_max):
            raise HypothesisViolation(
                f"expected 0 < gamma < gamma_max, got gamma={self.gamma}, bound={self.gamma_max}")

    @property
    def gamma0(self) -> float:
        """Surface tension of the sharp-interface limit, gamma * rho_c."""
        return self.gamma * self.rho_c

    @property
    def margin(self) -> float:
        return self.gamma_max - self.gamma


@dataclass(frozen=True)
class HypothesisReport:
    convex: bool
    delta: float | None
    nu: float | None
    C: float | None

    @property
    def ok(self) -> bool:
        return self.convex and self.delta is not None and self.nu is not None


def check_hypotheses(nl: Nonlinearity, rho_max: float = 1e3, samples: int = 20001
                     ) -> HypothesisReport:
    """Sampled check of the structural assumptions on (0, rho_max].

    Tests strict convexity, f'' >= delta for large rho, and the growth
    bound f >= (chi + nu) rho^2 beyond some C.
    """
    rho = np.unique(np.concatenate([np.geomspace(1e-6, rho_max, samples),
                                    np.linspace(0, rho_max, samples)[1:]]))
    fpp = nl.fpp(rho)
    convex = bool(np.all(fpp > 0))
    delta = None
    for k in range(40):
        d = 2.0**-k
        if 1.0 / d > rho_max / 2:
            break
        if fpp[rho >= 1.0 / d].min() >= d:
            delta = d
            break
    nu = C = None
    fv = nl.f(rho)
    for k in range(20):
        n = nl.chi * 2.0**-k
        bad = fv < (nl.chi + n) * rho * rho
        if not bad[-1]:
            last_bad = np.flatnonzero(bad)
            c = 0.0 if last_bad.size == 0 else float(rho[last_bad[-1] + 1])
            if c <= rho_max / 2:
                nu, C = n, c
                break
    return HypothesisReport(convex, delta, nu, C)


class Potentials:
    """All scalar potentials of one nonlinearity, with cached tables.

    Construction computes rho_c, a and gamma and tabulates the Modica-Mortola
    profile function F on ``table_size`` nodes.  The instance is read-only
    afterwards.
    """

    def __init__(self, nl: Nonlinearity, table_size: int = 4096, quad_tol: float = 1e-10):
        self.nl = nl
        self.rho_c, self.a = phase_constants(nl)
        self.gamma = surface_tension_gamma(nl, self.rho_c, self.a, tol=quad_tol)
        self.constants = PhaseConstants(self.rho_c, self.a, self.gamma,
                                        gamma_upper_bound(nl, self.rho_c))
        self.s_max = self.rho_c / nl.sigma
        self._F_nodes, self._F_values = self._tabulate_F(table_size)
        self._F_interp = PchipInterpolator(self._F_nodes, self._F_values, extrapolate=False)
        self.F_max = float(self._F_values[-1])

    def _tabulate_F(self, n):
        nl = self.nl
        nodes = np.linspace(0.0, self.s_max, n)
        kink = self.a / nl.beta
        edges = np.sort(np.unique(np.concatenate([nodes, [kink] if 0 < kink < self.s_max else []])))
        lo, hi = edges[:-1], edges[1:]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        pts = mid[:, None] + half[:, None] * _GL_X[None, :]
        vals = np.sqrt(np.maximum(2 * nl.beta * cell_problem_g(nl, self.a, pts), 0.0))
        pieces = (vals * _GL_W[None, :]).sum(axis=1) * half
        cum = np.concatenate([[0.0], np.cumsum(pieces)])
        keep = np.isin(edges, nodes)
        return edges[keep], cum[keep]

    # -- scalar maps -----------------------------------------------------
    def h(self, rho):
        return h_function(self.nl, rho)

    def W(self, rho):
        return double_well_W(self.nl, self.a, rho)

    def g(self, s):
        return cell_problem_g(self.nl, self.a, s)

    def g_argmin(self, s):
        return g_argmin(self.nl, self.a, s)

    def g_second(self, s):
        """g''(s) = beta sigma - beta^2 / f''(f*'(beta s - a)) for beta s > a."""
        nl = self.nl
        rho = nl.fstar_prime(nl.beta * np.asarray(s, dtype=float) - self.a)
        return nl.beta * nl.sigma - nl.beta**2 / nl.fpp(rho)

    def g_accurate(self, s, window: float = 0.1):
        """g without cancellation near the upper well.

        Within ``window * rho_c/sigma`` of the well the closed form subtracts
        two O(1) numbers; there ``g(s) = int_{s_c}^s (s - t) g''(t) dt`` is
        used instead (Taylor with integral remainder, g(s_c) = g'(s_c) = 0).
        """
        s = np.asarray(s, dtype=float)
        out = np.asarray(self.g(s), dtype=float).copy()
        sc = self.s_max
        near = np.abs(s - sc) < window * sc
        near &= self.nl.beta * s > self.a
        if np.any(near):
            sn = s[near]
            t = sc + 0.5 * (sn - sc)[:, None] * (1 + _GL_X[None, :])
            vals = (sn[:, None] - t) * self.g_second(t)
            out[near] = 0.5 * (sn - sc) * (vals * _GL_W[None, :]).sum(axis=1)
        return out

    def fstar(self, q):
        return self.nl.fstar(q)

    def fstar_prime(self, q):
        return self.nl.fstar_prime(q)

    def F(self, s):
        """Profile function: 0 below 0, tabulated on [0, rho_c/sigma], constant beyond."""
        s = np.asarray(s, dtype=float)
        clipped = np.clip(s, 0.0, self.s_max)
        out = self._F_interp(clipped)
        return np.where(s >= self.s_max, self.F_max, out)

    def F_prime(self, s):
        s = np.asarray(s, dtype=float)
        inside = (s > 0) & (s < self.s_max)
        val = np.sqrt(np.maximum(2 * self.nl.beta * self.g(np.where(inside, s, 0.0)), 0.0))
        return np.where(inside, val, 0.0)

    def __repr__(self):
        c = self.constants
        return (f"Potentials({self.nl!r}, rho_c={c.rho_c:.10g}, a={c.a:.10g}, "
                f"gamma={c.gamma:.10g})")
