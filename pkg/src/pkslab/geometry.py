"""Sets E used as sharp-interface limits, described by signed distance.

Signed distances are positive inside E.  Each shape also reports its
measure, its perimeter relative to the computational box, and a boundary
quadrature (points, unit outer normals, weights) for interface integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ellipe

from .errors import InvalidParameterError


@dataclass(frozen=True)
class Intervals:
    """Finite union of disjoint closed intervals on the line."""

    intervals: tuple

    def __post_init__(self):
        iv = tuple(sorted((float(a), float(b)) for a, b in self.intervals))
        if any(b <= a for a, b in iv):
            raise InvalidParameterError("intervals must have positive length")
        if any(iv[k][1] >= iv[k + 1][0] for k in range(len(iv) - 1)):
            raise InvalidParameterError("intervals must be disjoint")
        object.__setattr__(self, "intervals", iv)

    dim = 1

    def signed_distance(self, x):
        x = np.asarray(x, dtype=float)
        d = np.full(x.shape, -np.inf)
        for a, b in self.intervals:
            d = np.maximum(d, np.minimum(x - a, b - x))
        return d

    def measure(self, extents=None):
        return sum(b - a for a, b in self.intervals)

    def endpoints(self, extents):
        L = extents[0]
        pts = []
        for a, b in self.intervals:
            if 0 < a < L:
                pts.append((a, -1.0))
            if 0 < b < L:
                pts.append((b, 1.0))
        return pts

    def perimeter(self, extents):
        return float(len(self.endpoints(extents)))

    def boundary_quadrature(self, extents, n=None):
        ep = self.endpoints(extents)
        pts = np.array([[p] for p, _ in ep]).reshape(-1, 1)
        nrm = np.array([[s] for _, s in ep]).reshape(-1, 1)
        return pts, nrm, np.ones(len(ep))


@dataclass(frozen=True)
class Disk:
    center: tuple
    radius: float

    dim = 2

    def signed_distance(self, x, y):
        return self.radius - np.hypot(x - self.center[0], y - self.center[1])

    def measure(self, extents=None):
        return math.pi * self.radius**2

    def perimeter(self, extents=None):
        return 2 * math.pi * self.radius

    def curvature(self):
        return 1.0 / self.radius

    def boundary_quadrature(self, extents=None, n=2048):
        th = (np.arange(n) + 0.5) * 2 * np.pi / n
        nrm = np.stack([np.cos(th), np.sin(th)], axis=1)
        pts = np.asarray(self.center) + self.radius * nrm
        return pts, nrm, np.full(n, 2 * np.pi * self.radius / n)


@dataclass(frozen=True)
class Ellipse:
    """Axis-aligned ellipse with semi-axes ``ax`` (along x) and ``ay``."""

    center: tuple
    ax: float
    ay: float

    dim = 2

    def signed_distance(self, x, y, iterations=80):
        x = np.abs(np.asarray(x, dtype=float) - self.center[0])
        y = np.abs(np.asarray(y, dtype=float) - self.center[1])
        a, b = self.ax, self.ay
        if a < b:
            x, y, a, b = y, x, b, a
        x, y = np.broadcast_arrays(x, y)
        dist = np.empty(x.shape)
        # generic points: root of (a x/(t+a^2))^2 + (b y/(t+b^2))^2 = 1 for t > -b^2
        gen = y > 0
        xg, yg = x[gen], y[gen]
        lo = -b * b + b * yg
        hi = -b * b + np.sqrt(a * a * xg * xg + b * b * yg * yg)
        for _ in range(iterations):
            t = 0.5 * (lo + hi)
            val = (a * xg / (t + a * a)) ** 2 + (b * yg / (t + b * b)) ** 2 - 1.0
            lo = np.where(val > 0, t, lo)
            hi = np.where(val > 0, hi, t)
        t = 0.5 * (lo + hi)
        px = a * a * xg / (t + a * a)
        py = b * b * yg / (t + b * b)
        dist[gen] = np.hypot(px - xg, py - yg)
        # points on the major axis
        on = ~gen
        xo = x[on]
        focal = (a * a - b * b) / a
        inner = xo < focal
        px = np.where(inner, a * a * xo / max(a * a - b * b, 1e-300), a)
        py = np.where(inner, b * np.sqrt(np.maximum(1 - (px / a) ** 2, 0.0)), 0.0)
        dist[on] = np.hypot(px - xo, py)
        inside = (x / a) ** 2 + (y / b) ** 2 < 1.0
        return np.where(inside, dist, -dist)

    def measure(self, extents=None):
        return math.pi * self.ax * self.ay

    def perimeter(self, extents=None):
        a, b = max(self.ax, self.ay), min(self.ax, self.ay)
        return 4 * a * float(ellipe(1 - (b / a) ** 2))

    @property
    def aspect_ratio(self):
        return max(self.ax, self.ay) / min(self.ax, self.ay)

    def boundary_quadrature(self, extents=None, n=4096):
        th = (np.arange(n) + 0.5) * 2 * np.pi / n
        c, s = np.cos(th), np.sin(th)
        speed = np.hypot(self.ax * s, self.ay * c)
        pts = np.stack([self.center[0] + self.ax * c, self.center[1] + self.ay * s], axis=1)
        nrm = np.stack([self.ay * c, self.ax * s], axis=1) / speed[:, None]
        return pts, nrm, speed * 2 * np.pi / n


@dataclass(frozen=True)
class Strip:
    """``lo < x_axis < hi`` across a 2D box; use +-inf for a half-plane."""

    axis: int
    lo: float = -math.inf
    hi: float = math.inf

    dim = 2

    def signed_distance(self, x, y):
        c = x if self.axis == 0 else y
        return np.minimum(c - self.lo, self.hi - c)

    def _faces(self, extents):
        L = extents[self.axis]
        return [(v, s) for v, s in ((self.lo, -1.0), (self.hi, 1.0)) if 0 < v < L]

    def measure(self, extents):
        L = extents[self.axis]
        return (min(self.hi, L) - max(self.lo, 0.0)) * extents[1 - self.axis]

    def perimeter(self, extents):
        return len(self._faces(extents)) * extents[1 - self.axis]

    def boundary_quadrature(self, extents, n=2048):
        other = 1 - self.axis
        Lo = extents[other]
        t = (np.arange(n) + 0.5) * Lo / n
        pts, nrm = [], []
        for v, s in self._faces(extents):
            p = np.empty((n, 2))
            p[:, self.axis] = v
            p[:, other] = t
            nv = np.zeros((n, 2))
            nv[:, self.axis] = s
            pts.append(p)
            nrm.append(nv)
        if not pts:
            return np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0)
        return np.concatenate(pts), np.concatenate(nrm), np.full(n * len(pts), Lo / n)


@dataclass(frozen=True)
class FullDomain:
    """E equal to the whole box: no interface."""

    dim: int = 1

    def signed_distance(self, *coords):
        return np.full(np.broadcast(*coords).shape, np.inf)

    def measure(self, extents):
        return float(np.prod(extents))

    def perimeter(self, extents=None):
        return 0.0

    def boundary_quadrature(self, extents=None, n=None):
        return np.zeros((0, self.dim)), np.zeros((0, self.dim)), np.zeros(0)


def signed_distance_on(shape, grid):
    return shape.signed_distance(*grid.coords())


def indicator(shape, grid, value=1.0):
    """Sharp cell-centre indicator of E."""
    return np.where(signed_distance_on(shape, grid) > 0, float(value), 0.0)


def mollified_indicator(shape, grid, value=1.0, cells=3.0):
    """``value/2 (1 + tanh(d / (cells h)))`` with d the signed distance."""
    h = min(grid.spacing)
    d = signed_distance_on(shape, grid)
    return 0.5 * value * (1.0 + np.tanh(d / (cells * h)))
