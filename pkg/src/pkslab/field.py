"""Cell-centred uniform grids on rectangles, discrete calculus and estimators.

Cells sit at ``(i + 1/2) h``.  Face arrays along axis ``k`` have ``N_k + 1``
entries in that axis; the first and last are boundary faces and always
carry zero normal gradient (homogeneous Neumann closure), so ``divergence``
is minus the adjoint of ``gradient`` under the midpoint inner product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import InvalidParameterError, NotFoundError

SNAPSHOT_KEYS = ("dim", "cells", "extent", "time", "epsilon")


@dataclass(frozen=True)
class Grid:
    cells: tuple
    extents: tuple

    def __post_init__(self):
        cells = tuple(int(c) for c in np.atleast_1d(self.cells))
        extents = tuple(float(e) for e in np.atleast_1d(self.extents))
        if len(cells) not in (1, 2) or len(extents) != len(cells):
            raise InvalidParameterError("grid must be 1D or 2D with one extent per axis")
        if any(c < 1 for c in cells) or any(not (e > 0 and math.isfinite(e)) for e in extents):
            raise InvalidParameterError(f"invalid grid cells={cells} extents={extents}")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "extents", extents)

    @classmethod
    def uniform(cls, n, length=1.0, dim=1):
        return cls((n,) * dim, (length,) * dim)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple:
        return self.cells

    @property
    def spacing(self) -> tuple:
        return tuple(e / c for e, c in zip(self.extents, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def face_area(self, axis: int) -> float:
        """Measure of a face normal to ``axis`` (1 in one dimension)."""
        return float(np.prod([h for k, h in enumerate(self.spacing) if k != axis]))

    def axes(self):
        """Cell-centre coordinates per axis."""
        return [(np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.spacing)]

    def coords(self):
        """Cell-centre coordinate arrays broadcast to the grid shape."""
        return np.meshgrid(*self.axes(), indexing="ij")

    def face_coords(self, axis: int):
        """Coordinates of all faces normal to ``axis`` (boundary faces included)."""
        axes = self.axes()
        axes[axis] = np.arange(self.cells[axis] + 1) * self.spacing[axis]
        return np.meshgrid(*axes, indexing="ij")

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(tuple(c * factor for c in self.cells), self.extents)


@dataclass
class Field:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise InvalidParameterError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidParameterError("field contains non-finite values")

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, func) -> "Field":
        return cls(grid, np.broadcast_to(func(*grid.coords()), grid.shape).astype(float))

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)


def _values(u):
    return u.values if isinstance(u, Field) else np.asarray(u, dtype=float)


def fsum(x) -> float:
    """Correctly rounded sum, independent of reduction order."""
    return math.fsum(np.ravel(x).tolist())


def integrate(u, grid: Grid | None = None) -> float:
    """Midpoint rule."""
    grid = u.grid if isinstance(u, Field) else grid
    return fsum(_values(u)) * grid.cell_volume


def face_difference(u: np.ndarray, h: float, axis: int) -> np.ndarray:
    """(u_{i+1} - u_i)/h on all faces normal to ``axis``; zero on the boundary."""
    n = u.shape[axis]
    shape = list(u.shape)
    shape[axis] = n + 1
    out = np.zeros(shape)
    inner = [slice(None)] * u.ndim
    inner[axis] = slice(1, n)
    out[tuple(inner)] = np.diff(u, axis=axis) / h
    return out


def face_average(u: np.ndarray, axis: int) -> np.ndarray:
    """Arithmetic mean of the two neighbouring cells; boundary faces copy the cell value."""
    pad = [(0, 0)] * u.ndim
    pad[axis] = (1, 1)
    up = np.pad(u, pad, mode="edge")
    lo = [slice(None)] * u.ndim
    hi = [slice(None)] * u.ndim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (up[tuple(lo)] + up[tuple(hi)])


def face_to_cell(F: np.ndarray, axis: int) -> np.ndarray:
    """Average the two faces bounding each cell."""
    lo = [slice(None)] * F.ndim
    hi = [slice(None)] * F.ndim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (F[tuple(lo)] + F[tuple(hi)])


def gradient(u, grid: Grid | None = None) -> list:
    grid = u.grid if isinstance(u, Field) else grid
    v = _values(u)
    return [face_difference(v, h, k) for k, h in enumerate(grid.spacing)]


def divergence(fluxes, grid: Grid) -> np.ndarray:
    """Cell divergence of face fluxes (the boundary entries are used as given)."""
    out = np.zeros(grid.shape)
    for k, (F, h) in enumerate(zip(fluxes, grid.spacing)):
        out += np.diff(F, axis=k) / h
    return out


def laplacian(u, grid: Grid | None = None) -> np.ndarray:
    grid = u.grid if isinstance(u, Field) else grid
    return divergence(gradient(u, grid), grid)


def face_inner(a: list, b: list, grid: Grid) -> float:
    """Sum over faces of a*b weighted by the cell volume."""
    return sum(fsum(x * y) for x, y in zip(a, b)) * grid.cell_volume


def cell_gradient(u, grid: Grid | None = None) -> list:
    """Cell-centred gradient components from averaged face differences."""
    grid = u.grid if isinstance(u, Field) else grid
    return [face_to_cell(F, k) for k, F in enumerate(gradient(u, grid))]


def tv_anisotropic(u, grid: Grid | None = None) -> float:
    """Sum over faces of |jump| times face area."""
    grid = u.grid if isinstance(u, Field) else grid
    v = _values(u)
    return sum(fsum(np.abs(np.diff(v, axis=k))) * grid.face_area(k) for k in range(grid.dim))


def tv_isotropic(u, grid: Grid | None = None) -> float:
    """Midpoint rule for the integral of |grad u| with cell-centred gradients."""
    grid = u.grid if isinstance(u, Field) else grid
    comps = cell_gradient(u, grid)
    mag = np.sqrt(sum(c * c for c in comps))
    return fsum(mag) * grid.cell_volume


def total_variation(u, grid: Grid | None = None, method: str = "isotropic") -> float:
    if method == "isotropic":
        return tv_isotropic(u, grid)
    if method == "anisotropic":
        return tv_anisotropic(u, grid)
    raise InvalidParameterError(f"unknown total-variation method {method!r}")


def tv_via_F(phi, potentials, grid: Grid | None = None, method: str = "isotropic") -> float:
    """Total variation of F(phi): the BV surrogate of the energy."""
    grid = phi.grid if isinstance(phi, Field) else grid
    return total_variation(potentials.F(_values(phi)), grid, method)


def _crossings(x, y, level):
    """Linearly interpolated positions where y crosses ``level``."""
    d = y - level
    idx = np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)
    on = np.flatnonzero(d == 0)
    pos = [x[i] + (x[i + 1] - x[i]) * d[i] / (d[i] - d[i + 1]) for i in idx]
    pos.extend(x[on])
    return np.sort(np.asarray(pos, dtype=float))


def _profile_width(x, y, rho_c, lo_frac, hi_frac):
    lo = _crossings(x, y, lo_frac * rho_c)
    hi = _crossings(x, y, hi_frac * rho_c)
    if lo.size == 0 or hi.size == 0:
        raise NotFoundError("transition levels are not crossed along the scan line")
    first = min(lo[0], hi[0])
    if lo[0] == first:
        partner = hi[np.argmin(np.abs(hi - first))]
    else:
        partner = lo[np.argmin(np.abs(lo - first))]
    return abs(partner - first)


def interface_width(rho, rho_c: float, grid: Grid | None = None, center=None, rays: int = 64,
                    lo_frac: float = 0.1, hi_frac: float = 0.9) -> float:
    """Distance between the ``lo_frac`` and ``hi_frac`` level sets of rho / rho_c.

    In 1D the first transition met scanning left to right is measured.  In 2D
    the width is averaged over ``rays`` rays from ``center`` (default: the
    density centroid).  The result is floored at one cell width, the
    resolution limit of a sharp step.
    """
    grid = rho.grid if isinstance(rho, Field) else grid
    v = _values(rho)
    if grid.dim == 1:
        w = _profile_width(grid.axes()[0], v, rho_c, lo_frac, hi_frac)
        return max(w, grid.spacing[0])
    X, Y = grid.coords()
    if center is None:
        total = fsum(v)
        if total <= 0:
            raise NotFoundError("empty density has no interface")
        center = (fsum(v * X) / total, fsum(v * Y) / total)
    hx, hy = grid.spacing
    hmin = min(hx, hy)
    rmax = math.hypot(*grid.extents)
    r = np.arange(0.0, rmax, 0.25 * hmin)
    widths = []
    for th in np.linspace(0, 2 * np.pi, rays, endpoint=False):
        px = center[0] + r * math.cos(th)
        py = center[1] + r * math.sin(th)
        inside = (px >= 0.5 * hx) & (px <= grid.extents[0] - 0.5 * hx) & \
                 (py >= 0.5 * hy) & (py <= grid.extents[1] - 0.5 * hy)
        if inside.sum() < 4:
            continue
        stop = np.argmin(inside) if not inside.all() else inside.size
        ii = px[:stop] / hx - 0.5
        jj = py[:stop] / hy - 0.5
        prof = map_coordinates(v, [ii, jj], order=1, mode="nearest")
        try:
            widths.append(_profile_width(r[:stop], prof, rho_c, lo_frac, hi_frac))
        except NotFoundError:
            continue
    if not widths:
        raise NotFoundError("no ray crosses both transition levels")
    return max(float(np.mean(widths)), hmin)


def save_pksgrid(path, field: Field, time: float = 0.0, epsilon: float = 0.0) -> Path:
    """Text header, then little-endian float64 values in row-major order."""
    path = Path(path)
    g = field.grid
    header = (f"dim {g.dim}\n"
              f"cells {' '.join(str(c) for c in g.cells)}\n"
              f"extent {' '.join(repr(e) for e in g.extents)}\n"
              f"time {float(time)!r}\n"
              f"epsilon {float(epsilon)!r}\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C"))
    return path


def load_pksgrid(path):
    """Returns ``(field, time, epsilon)``."""
    with open(path, "rb") as fh:
        meta = {}
        for key in SNAPSHOT_KEYS:
            line = fh.readline().decode("ascii").split()
            if not line or line[0] != key:
                raise InvalidParameterError(f"malformed snapshot header: expected {key!r}")
            meta[key] = line[1:]
        data = fh.read()
    dim = int(meta["dim"][0])
    cells = tuple(int(c) for c in meta["cells"])
    extents = tuple(float(e) for e in meta["extent"])
    if len(cells) != dim:
        raise InvalidParameterError("snapshot dim does not match cells")
    values = np.frombuffer(data, dtype="<f8")
    if values.size != int(np.prod(cells)):
        raise InvalidParameterError("snapshot payload size does not match header")
    field = Field(Grid(cells, extents), values.reshape(cells).astype(float))
    return field, float(meta["time"][0]), float(meta["epsilon"][0])


def write_csv_1d(path, field: Field, name: str = "value") -> Path:
    if field.grid.dim != 1:
        raise InvalidParameterError("CSV export is for 1D fields")
    path = Path(path)
    x = field.grid.axes()[0]
    with open(path, "w") as fh:
        fh.write("# pks-gamma-lab v1\n")
        fh.write(f"x,{name}\n")
        for xi, vi in zip(x, field.values):
            fh.write(f"{xi:.15g},{vi:.17g}\n")
    return path
