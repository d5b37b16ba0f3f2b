"""Command line entry point ``pkslab``.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
Every CSV starts with the comment line ``# pks-gamma-lab v1``.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

from . import dynamics, gammalab
from .config import parse_config
from .energy import TestVectorField, energy_modica
from .errors import ConfigError, NumericalError, PKSError
from .field import Grid, interface_width, save_pksgrid
from .geometry import Disk, Intervals, Strip
from .helmholtz import manufactured_study
from .potentials import Nonlinearity, Potentials, surface_tension_gamma

CSV_TAG = "# pks-gamma-lab v1"

TIMESERIES_COLUMNS = ["t", "steps", "mass", "j_eps_primal", "j_eps_modica", "dissipation_accum",
                      "perimeter", "width", "f_eps_of_phi", "well_term", "coupling_term",
                      "gradient_term", "bv_surrogate"]

LADDER_COLUMNS = ["eps", "j_eps", "target", "gap", "fitted_order"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt(v):
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return format(v, ".15g")
    return str(v)


def write_csv(out, columns, rows, comments=()):
    out.write(CSV_TAG + "\n")
    for c in comments:
        out.write(f"# {c}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return open(p, "w", newline=""), True


def _emit(path, columns, rows, comments=()):
    fh, close = _open_out(path)
    try:
        write_csv(fh, columns, rows, comments)
    finally:
        if close:
            fh.close()


def _potentials(args):
    nl = Nonlinearity.power_law(args.m, args.beta, args.sigma)
    return Potentials(nl)


def _add_law(p, m_many=False):
    if m_many:
        p.add_argument("--m", type=float, nargs="+", default=[3.0])
    else:
        p.add_argument("--m", type=float, default=3.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1.0)


# -- subcommands -------------------------------------------------------------

def cmd_constants(args):
    rows = []
    for m in args.m:
        c = Potentials(Nonlinearity.power_law(m, args.beta, args.sigma)).constants
        rows.append((c.rho_c, c.a, c.gamma, c.gamma_max))
    cols = ["rho_c", "a", "gamma", "gamma_max"]
    comments = [f"beta={args.beta:g} sigma={args.sigma:g} m={' '.join(f'{m:g}' for m in args.m)}"]
    _emit(args.out, cols, rows, comments)


def cmd_gamma(args):
    pot = _potentials(args)
    c = pot.constants
    g_half = surface_tension_gamma(pot.nl, c.rho_c, c.a, tol=args.tol / 2)
    g_full = surface_tension_gamma(pot.nl, c.rho_c, c.a, tol=args.tol)
    profile = gammalab.optimal_profile_1d(pot)
    prof_e = profile.energy(args.eps)
    if not 0 < c.gamma < c.gamma_max:
        raise NumericalError("surface tension outside (0, gamma_max)", gamma=c.gamma,
                             gamma_max=c.gamma_max)
    cols = ["gamma", "gamma_half_tol", "tol_change", "gamma_max", "margin",
            "gamma_rho_c", "profile_energy", "profile_error"]
    row = (g_full, g_half, abs(g_full - g_half), c.gamma_max, c.margin,
           c.gamma0, prof_e, abs(prof_e - c.gamma0))
    _emit(args.out, cols, [row])


def cmd_helmholtz_test(args):
    rows = manufactured_study(tuple(args.cells), eps=args.eps, sigma=args.sigma)
    _emit(args.out, ["h", "error", "order"], rows)


def initial_state(cfg, pot, grid, eps):
    kind = cfg["initial.kind"]
    if kind == "constant":
        return dynamics.constant_state(grid, cfg["initial.value"], eps)
    if kind == "bumps":
        return dynamics.bumps_state(grid, eps, cfg["initial.count"], cfg["initial.seed"],
                                    cfg["initial.height"], cfg["initial.bump_radius"])
    shape = cfg.shape()
    if kind == "recovery":
        return dynamics.recovery_state(shape, grid, pot, eps)
    return dynamics.indicator_state(shape, grid, pot, eps, cfg["initial.mollify_cells"])


def _load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from None
    return parse_config(text)


def _width(rho, pot):
    try:
        return interface_width(rho, pot.rho_c)
    except PKSError:
        return math.nan


def cmd_simulate(args):
    cfg = _load_config(args.config)
    pot = Potentials(cfg.nonlinearity())
    grid = cfg.grid()
    eps = cfg.epsilons[-1]
    out = Path(args.out or cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    state = initial_state(cfg, pot, grid, eps)
    rows = []
    count = [0]

    def record(st, rep):
        save_pksgrid(out / f"snap_{count[0]:04d}.pksgrid", st.rho, st.t, eps)
        count[0] += 1
        rows.append((st.t, st.steps, rep.mass, rep.j_eps_primal, rep.j_eps_modica,
                     st.dissipation, rep.perimeter_estimate, _width(st.rho, pot),
                     rep.f_eps_of_phi, rep.well_term, rep.coupling_term, rep.gradient_term,
                     rep.bv_surrogate))

    try:
        dynamics.run(state, pot, cfg.stepper_config(), t_end=cfg["t_end"],
                     snapshot_every=cfg["snapshot_every"], on_snapshot=record,
                     max_steps=args.max_steps)
    finally:
        _emit(out / "timeseries.csv", TIMESERIES_COLUMNS, rows,
              [f"epsilon={eps!r} cells={'x'.join(map(str, grid.cells))}"])


def cmd_recover(args):
    cfg = _load_config(args.config)
    pot = Potentials(cfg.nonlinearity())
    grid = cfg.grid()
    shape = cfg.shape()
    out = Path(args.out or cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for k, eps in enumerate(cfg.epsilons):
        rec = gammalab.build_recovery(shape, pot, eps, grid)
        save_pksgrid(out / f"recovery_{k:02d}.pksgrid", rec.rho, 0.0, eps)
        rep = energy_modica(pot, rec.rho, eps)
        rows.append((eps, rep.j_eps_modica, pot.constants.gamma0 * shape.perimeter(grid.extents),
                     rec.mass_shift, rec.target_mass, rep.mass, rep.equipartition_residual,
                     _width(rec.rho, pot)))
    cols = ["eps", "j_eps", "target", "mass_shift", "target_mass", "mass",
            "equipartition_residual", "width"]
    _emit(out / "recovery.csv", cols, rows)


# built-in ladders: (kind, shape, extents, eps ladder, options)
CASES = {
    "interval1d": ("limsup", Intervals(((0.25, 0.75),)), (1.0,), (0.08, 0.04, 0.02, 0.01),
                   {"power": 2.0}),
    "naive1d": ("naive", Intervals(((0.25, 0.75),)), (1.0,), (0.08, 0.04, 0.02, 0.01),
                {"power": 1.0}),
    "disk": ("limsup", Disk((0.5, 0.5), 0.25), (1.0, 1.0), (0.04, 0.03, 0.02, 0.015),
             {"power": 1.0}),
    "firstvar-disk": ("firstvar", Disk((0.5, 0.5), 0.25), (1.0, 1.0),
                      (0.04, 0.03, 0.02, 0.015), {"power": 1.0}),
    "firstvar-halfplane": ("firstvar", Strip(0, 0.5), (1.0, 1.0), (0.04, 0.03, 0.02, 0.015),
                           {"power": 1.0}),
}


def run_case(name, pot):
    kind, shape, extents, ladder, opts = CASES[name]
    if kind == "limsup":
        return gammalab.gamma_limsup_experiment(shape, pot, extents, ladder, **opts)
    if kind == "naive":
        return gammalab.naive_sequence_experiment(shape, pot, extents, ladder, **opts)
    if isinstance(shape, Disk):
        xi = TestVectorField.radial_cutoff(shape.center)
    else:
        xi = TestVectorField.stream(extents)
    return gammalab.first_variation_convergence(shape, pot, extents, ladder, xi, **opts)


def ladder_csv(path, res, name):
    comments = [f"case={name} limit={res.limit!r} target={res.target!r} gap={res.gap!r}"]
    if "margin" in res.extras:
        comments.append(f"gamma_limit={res.extras['gamma_limit']!r} margin={res.extras['margin']!r}")
    _emit(path, LADDER_COLUMNS, res.rows(), comments)


def cmd_gammatest(args):
    pot = _potentials(args)
    res = run_case(args.case, pot)
    ladder_csv(args.out, res, args.case)


def _read_csv(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        raise ConfigError([f"{path}: empty CSV"])
    return header, [r for r in reader if r]


def cmd_report(args):
    rows = []
    for path in args.csv:
        header, data = _read_csv(path)
        for j, col in enumerate(header):
            vals = []
            for r in data:
                try:
                    vals.append(float(r[j]))
                except (ValueError, IndexError):
                    pass
            if not vals:
                continue
            finite = [v for v in vals if math.isfinite(v)]
            lo = min(finite) if finite else math.nan
            hi = max(finite) if finite else math.nan
            rows.append((Path(path).name, col, len(vals), vals[0], vals[-1], lo, hi))
    _emit(args.out, ["source", "column", "count", "first", "last", "min", "max"], rows)


def build_parser():
    p = _Parser(prog="pkslab", description="Keller-Segel phase separation laboratory")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("constants", help="phase constants rho_c, a, gamma, gamma_max")
    _add_law(s, m_many=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_constants)

    s = sub.add_parser("gamma", help="surface tension quadrature and bound check")
    _add_law(s)
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--eps", type=float, default=0.05)
    s.add_argument("--out")
    s.set_defaults(func=cmd_gamma)

    s = sub.add_parser("helmholtz-test", help="manufactured-solution convergence study")
    s.add_argument("--cells", type=int, nargs="+", default=[64, 128, 256])
    s.add_argument("--eps", type=float, default=0.1)
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_helmholtz_test)

    s = sub.add_parser("simulate", help="run the dynamics from a config file")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (overrides the config)")
    s.add_argument("--max-steps", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("recover", help="build and save recovery densities")
    s.add_argument("config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_recover)

    s = sub.add_parser("gammatest", help="epsilon-ladder experiments")
    s.add_argument("--case", choices=sorted(CASES), default="interval1d")
    _add_law(s)
    s.add_argument("--out")
    s.set_defaults(func=cmd_gammatest)

    s = sub.add_parser("report", help="summarize CSV outputs")
    s.add_argument("csv", nargs="+")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return exc.exit_code
    except PKSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
