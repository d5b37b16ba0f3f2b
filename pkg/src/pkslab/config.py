"""Strict ``key = value`` experiment configuration.

Lines hold one assignment each; ``#`` starts a comment; groups use dotted
keys (``grid.cells = 256 256``).  List values are whitespace separated.
Every problem found is reported with its line number, not only the first.

Example::

    nonlinearity.m = 3
    grid.cells = 512
    epsilon = 0.05
    initial.kind = indicator
    initial.shape = interval
    initial.intervals = 0.25 0.75
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError

# key -> (type, default); list types carry the element type
_SCHEMA = {
    "nonlinearity.kind": (str, "power"),
    "nonlinearity.m": (float, 3.0),
    "nonlinearity.beta": (float, 1.0),
    "nonlinearity.sigma": (float, 1.0),
    "nonlinearity.coef": (float, None),
    "grid.dim": (int, None),
    "grid.cells": ([int], None),
    "grid.extents": ([float], None),
    "epsilon": (float, None),
    "epsilon_ladder": ([float], None),
    "initial.kind": (str, "indicator"),
    "initial.shape": (str, "interval"),
    "initial.intervals": ([float], None),
    "initial.center": ([float], None),
    "initial.radius": (float, None),
    "initial.axes": ([float], None),
    "initial.mollify_cells": (float, 3.0),
    "initial.value": (float, None),
    "initial.count": (int, 2),
    "initial.seed": (int, 0),
    "initial.height": (float, 1.0),
    "initial.bump_radius": (float, None),
    "stepper.cfl_safety": (float, 0.9),
    "stepper.flux_scheme": (str, "upwind"),
    "stepper.dt_max": (float, float("inf")),
    "stepper.negativity_clip": (bool, True),
    "t_end": (float, 1.0),
    "snapshot_every": (float, None),
    "output": (str, "run"),
}

_CHOICES = {
    "nonlinearity.kind": ("power",),
    "initial.kind": ("indicator", "recovery", "bumps", "constant"),
    "initial.shape": ("interval", "disk", "ellipse", "strip", "full"),
    "stepper.flux_scheme": ("upwind", "limited"),
}

# short spellings accepted for the most common keys
_ALIASES = {"m": "nonlinearity.m", "beta": "nonlinearity.beta", "sigma": "nonlinearity.sigma",
            "cells": "grid.cells", "extents": "grid.extents"}

_BOOLS = {"true": True, "on": True, "yes": True, "1": True,
          "false": False, "off": False, "no": False, "0": False}


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    @property
    def dim(self) -> int:
        return self.values["grid.dim"]

    @property
    def cells(self) -> tuple:
        return tuple(self.values["grid.cells"])

    @property
    def extents(self) -> tuple:
        return tuple(self.values["grid.extents"])

    @property
    def epsilons(self) -> list:
        if self.values["epsilon_ladder"] is not None:
            return list(self.values["epsilon_ladder"])
        return [self.values["epsilon"]]

    def nonlinearity(self):
        from .potentials import Nonlinearity

        v = self.values
        kw = {} if v["nonlinearity.coef"] is None else {"coef": v["nonlinearity.coef"]}
        return Nonlinearity.power_law(v["nonlinearity.m"], v["nonlinearity.beta"],
                                      v["nonlinearity.sigma"], **kw)

    def grid(self):
        from .field import Grid

        return Grid(self.cells, self.extents)

    def shape(self):
        from . import geometry as geo

        v = self.values
        kind = v["initial.shape"]
        if kind == "interval":
            iv = v["initial.intervals"]
            return geo.Intervals(tuple(zip(iv[0::2], iv[1::2])))
        if kind == "disk":
            return geo.Disk(tuple(v["initial.center"]), v["initial.radius"])
        if kind == "ellipse":
            ax, ay = v["initial.axes"]
            return geo.Ellipse(tuple(v["initial.center"]), ax, ay)
        if kind == "strip":
            lo, hi = v["initial.intervals"]
            return geo.Strip(0, lo, hi)
        return geo.FullDomain(self.dim)

    def stepper_config(self):
        from .dynamics import StepperConfig

        v = self.values
        return StepperConfig(cfl_safety=v["stepper.cfl_safety"],
                             flux_scheme=v["stepper.flux_scheme"],
                             dt_max=v["stepper.dt_max"],
                             negativity_clip=v["stepper.negativity_clip"])


def _convert(kind, raw):
    if isinstance(kind, list):
        parts = raw.split()
        if not parts:
            raise ValueError("empty list")
        return [_convert(kind[0], p) for p in parts]
    if kind is bool:
        try:
            return _BOOLS[raw.lower()]
        except KeyError:
            raise ValueError(f"expected a boolean, got {raw!r}") from None
    if kind is int:
        try:
            return int(raw)
        except ValueError:
            raise ValueError(f"expected an integer, got {raw!r}") from None
    if kind is float:
        try:
            return float(raw)
        except ValueError:
            raise ValueError(f"expected a number, got {raw!r}") from None
    return raw


def _type_name(kind):
    if isinstance(kind, list):
        return f"list of {_type_name(kind[0])}"
    return {int: "integer", float: "number", bool: "boolean", str: "string"}[kind]


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises ConfigError listing every problem."""
    problems = []
    seen = {}
    failed = set()
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, raw = (s.strip() for s in body.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in _SCHEMA:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in seen:
            problems.append(f"line {lineno}: duplicate key {key!r} (first set on line {seen[key]})")
            continue
        seen[key] = lineno
        kind = _SCHEMA[key][0]
        try:
            val = _convert(kind, raw)
        except ValueError as exc:
            problems.append(f"line {lineno}: {key}: type mismatch, {_type_name(kind)} required ({exc})")
            failed.add(key)
            continue
        if key in _CHOICES and val not in _CHOICES[key]:
            problems.append(f"line {lineno}: {key} must be one of {', '.join(_CHOICES[key])}")
            failed.add(key)
            continue
        values[key] = val

    for key, (_, default) in _SCHEMA.items():
        values.setdefault(key, default)

    def bad(key, msg):
        if key in failed:
            return  # already reported
        where = f"line {seen[key]}: " if key in seen else ""
        problems.append(f"{where}{msg}")

    _validate(values, bad)
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(values)


def _validate(v, bad):
    if v["nonlinearity.m"] <= 2:
        bad("nonlinearity.m", "m must exceed 2")
    for key in ("nonlinearity.beta", "nonlinearity.sigma"):
        if v[key] <= 0:
            bad(key, f"{key.split('.')[1]} must be positive")
    if v["nonlinearity.coef"] is not None and v["nonlinearity.coef"] <= 0:
        bad("nonlinearity.coef", "coef must be positive")

    cells = v["grid.cells"]
    if cells is None:
        bad("grid.cells", "grid.cells is required")
    else:
        if any(c < 2 for c in cells):
            bad("grid.cells", "grid.cells entries must be at least 2")
        dim = v["grid.dim"]
        if dim is None:
            v["grid.dim"] = dim = len(cells)
        if dim not in (1, 2):
            bad("grid.dim", "grid.dim must be 1 or 2")
        elif len(cells) != dim:
            bad("grid.cells", f"grid.cells needs {dim} entries")
        if v["grid.extents"] is None:
            v["grid.extents"] = [1.0] * len(cells)
        elif len(v["grid.extents"]) != len(cells):
            bad("grid.extents", "grid.extents must match grid.cells in length")
        elif any(e <= 0 for e in v["grid.extents"]):
            bad("grid.extents", "grid.extents must be positive")

    eps, ladder = v["epsilon"], v["epsilon_ladder"]
    if eps is None and ladder is None:
        bad("epsilon", "one of epsilon or epsilon_ladder is required")
    if eps is not None and eps <= 0:
        bad("epsilon", "epsilon must be positive")
    if ladder is not None:
        if any(e <= 0 for e in ladder):
            bad("epsilon_ladder", "epsilon_ladder entries must be positive")
        if any(b >= a for a, b in zip(ladder, ladder[1:])):
            bad("epsilon_ladder", "epsilon_ladder must be strictly decreasing")

    cfl = v["stepper.cfl_safety"]
    if not 0 < cfl <= 1:
        bad("stepper.cfl_safety", "cfl_safety must lie in (0, 1]")
    if v["stepper.dt_max"] <= 0:
        bad("stepper.dt_max", "dt_max must be positive")
    if v["t_end"] <= 0:
        bad("t_end", "t_end must be positive")
    if v["snapshot_every"] is None:
        v["snapshot_every"] = v["t_end"] / 10
    elif v["snapshot_every"] <= 0:
        bad("snapshot_every", "snapshot_every must be positive")

    _validate_initial(v, bad)


def _validate_initial(v, bad):
    kind, shape = v["initial.kind"], v["initial.shape"]
    dim = v["grid.dim"]
    if kind == "constant":
        if v["initial.value"] is None:
            bad("initial.value", "initial.value is required for constant data")
        elif v["initial.value"] < 0:
            bad("initial.value", "initial.value must be non-negative")
        return
    if kind == "bumps":
        if v["initial.count"] < 1:
            bad("initial.count", "initial.count must be at least 1")
        if v["initial.height"] <= 0:
            bad("initial.height", "initial.height must be positive")
        return
    if dim is None:
        return
    needs_2d = shape in ("disk", "ellipse", "strip")
    if needs_2d and dim != 2:
        bad("initial.shape", f"shape {shape!r} needs a 2D grid")
    if shape == "interval" and dim != 1:
        bad("initial.shape", "shape 'interval' needs a 1D grid")
    if shape in ("interval", "strip"):
        iv = v["initial.intervals"]
        if iv is None:
            bad("initial.intervals", "initial.intervals is required")
        elif len(iv) % 2 or (shape == "strip" and len(iv) != 2):
            bad("initial.intervals", "initial.intervals needs lo hi pairs")
        elif any(b <= a for a, b in zip(iv[0::2], iv[1::2])):
            bad("initial.intervals", "initial.intervals must have lo < hi")
    if shape in ("disk", "ellipse"):
        c = v["initial.center"]
        if c is None or len(c) != 2:
            bad("initial.center", "initial.center needs two coordinates")
    if shape == "disk" and (v["initial.radius"] is None or v["initial.radius"] <= 0):
        bad("initial.radius", "initial.radius must be positive")
    if shape == "ellipse":
        ax = v["initial.axes"]
        if ax is None or len(ax) != 2 or min(ax) <= 0:
            bad("initial.axes", "initial.axes needs two positive semi-axes")
