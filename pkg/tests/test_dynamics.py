import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from pkslab import _kernels
from pkslab.dynamics import (SimState, Stepper, StepperConfig, bump, bumps_state, constant_state,
                             indicator_state, run, step)
from pkslab.energy import energy_modica
from pkslab.errors import DissipationViolation, InvalidParameterError, StepFailure
from pkslab.field import Field, Grid, integrate
from pkslab.geometry import Disk, Intervals


def _numpy_stepper(pot, grid, eps, **kw):
    s = Stepper(pot, grid, eps, StepperConfig(**kw))
    s.fused = False
    return s


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        StepperConfig(cfl_safety=1.2)
    with pytest.raises(InvalidParameterError):
        StepperConfig(flux_scheme="central")
    with pytest.raises(InvalidParameterError):
        StepperConfig(dt_max=0.0)


@pytest.mark.parametrize("value", [0.0, 0.5])
@pytest.mark.parametrize("dim", [1, 2])
def test_wells_are_exact_fixed_points(pot3, value, dim):
    g = Grid((32,) * dim, (1.0,) * dim)
    s = constant_state(g, value, 0.05)
    for _ in range(5):
        s = step(s, pot3, StepperConfig(dt_max=1e-3))
    assert np.all(s.rho.values == value)
    assert s.dissipation == 0.0


def test_equilibrium_without_dt_cap_fails(pot3):
    g = Grid((16,), (1.0,))
    with pytest.raises(StepFailure):
        step(constant_state(g, 0.0, 0.05), pot3)


@pytest.mark.parametrize("scheme", ["upwind", "limited"])
@pytest.mark.parametrize("dim", [1, 2])
def test_fused_matches_numpy(pot3, rng, scheme, dim):
    g = Grid((48,) * dim, (1.0,) * dim)
    rho = rng.uniform(0.0, 0.6, size=g.shape)
    fused = Stepper(pot3, g, 0.05, StepperConfig(flux_scheme=scheme))
    plain = _numpy_stepper(pot3, g, 0.05, flux_scheme=scheme)
    a = fused.advance(rho.copy())
    b = plain.advance(rho.copy())
    assert a[1] == pytest.approx(b[1], rel=1e-13)
    assert_allclose(a[0], b[0], rtol=1e-12, atol=1e-14)
    assert a[2] == pytest.approx(b[2], rel=1e-10)


@pytest.mark.parametrize("scheme", ["upwind", "limited"])
def test_compiled_loop_matches_stepwise(pot3, scheme):
    g = Grid((200,), (1.0,))
    rho0 = bumps_state(g, 0.05, seed=3).rho.values
    fast = Stepper(pot3, g, 0.05, StepperConfig(flux_scheme=scheme))
    slow = _numpy_stepper(pot3, g, 0.05, flux_scheme=scheme)
    a = fast.advance_until(rho0.copy(), 0.0, 2e-3)
    b = slow.advance_until(rho0.copy(), 0.0, 2e-3)
    assert a[1] == pytest.approx(2e-3) and b[1] == pytest.approx(2e-3)
    assert a[2] == b[2]
    assert_allclose(a[0], b[0], atol=1e-12)
    assert a[3] == pytest.approx(b[3], rel=1e-9)


def test_stable_dt_formula(pot3):
    g = Grid((64, 32), (1.0, 0.5))
    rho = indicator_state(Disk((0.5, 0.25), 0.15), g, pot3, 0.05).rho.values
    s = _numpy_stepper(pot3, g, 0.05, cfl_safety=0.5)
    phi = s.chemoattractant(rho)
    _, speeds = s.fluxes(rho, phi)
    h = min(g.spacing)
    diff = np.max(rho * pot3.nl.fpp(rho))
    adv = max(np.max(np.abs(v)) for v in speeds)
    expect = 0.5 * min(h * h * 0.05 / (4 * diff), h * 0.05 / (2 * adv))
    assert s.stable_dt(rho, speeds) == pytest.approx(expect, rel=1e-14)


@pytest.mark.parametrize("dim, n", [(1, 256), (2, 48)])
def test_mass_conserved_over_many_steps(pot3, rng, dim, n):
    g = Grid((n,) * dim, (1.0,) * dim)
    rho = rng.uniform(0.1, 0.5, size=g.shape)
    s = Stepper(pot3, g, 0.05, StepperConfig(negativity_clip=False))
    m0 = integrate(rho, g)
    rho, t, steps, _, _ = s.advance_until(rho, 0.0, math.inf, max_steps=10_000 if dim == 1 else 2000)
    assert abs(integrate(rho, g) - m0) <= 1e-11 * m0


def test_dissipation_rate_vanishes_at_rest(pot3):
    g = Grid((40, 40), (1.0, 1.0))
    s = Stepper(pot3, g, 0.05)
    rho = np.full(g.shape, pot3.rho_c)
    assert s.dissipation_rate(rho, s.chemoattractant(rho)) == 0.0


def test_dissipation_rate_is_nonnegative_for_upwind(pot3, rng):
    # with a central carried density the rate is sum rho_face |v|^2 >= 0;
    # the upwind version stays positive away from equilibrium
    g = Grid((64,), (1.0,))
    s = Stepper(pot3, g, 0.05)
    for _ in range(5):
        rho = rng.uniform(0.0, 0.6, size=g.shape)
        assert s.dissipation_rate(rho, s.chemoattractant(rho)) > 0


@pytest.mark.parametrize("scheme", ["upwind", "limited"])
def test_energy_inequality_along_run(pot3, scheme):
    g = Grid((400,), (1.0,))
    st = bumps_state(g, 0.02, seed=0)
    tr = run(st, pot3, StepperConfig(flux_scheme=scheme), t_end=4e-3, snapshot_every=5e-4)
    J = np.array(tr.energies)
    D = np.array([s.dissipation for s in tr.states])
    assert np.all(J + D <= J[0] + tr.tol_diss)
    assert np.all(np.diff(J) <= tr.tol_diss)
    assert J[-1] < 0.5 * J[0]
    assert tr.states[-1].t == pytest.approx(4e-3)
    assert len(tr) == 9


def test_run_rejects_bad_times(pot3):
    g = Grid((16,), (1.0,))
    s = constant_state(g, 0.2, 0.05)
    with pytest.raises(InvalidParameterError):
        run(s, pot3, t_end=0.0)
    with pytest.raises(InvalidParameterError):
        run(s, pot3, t_end=1.0, snapshot_every=0.0)


def test_run_flags_energy_growth(pot3, monkeypatch):
    # a stepper that pumps mass into the middle must trip the monitor
    g = Grid((64,), (1.0,))
    s = SimState(Field(g, bump(g, 0.5, 0.2, 0.4)), 0.0, 0.05)

    def bad_advance(self, rho, dt_cap=math.inf):
        new = rho.copy()
        new[30:34] += 0.05
        return new, min(1e-4, dt_cap), 0.0, 0.0

    monkeypatch.setattr(Stepper, "advance", bad_advance)
    monkeypatch.setattr(_kernels, "AVAILABLE", False)
    with pytest.raises(DissipationViolation):
        run(s, pot3, StepperConfig(dt_max=1e-4), t_end=1e-2, snapshot_every=1e-3)


def test_max_steps_stops_early(pot3):
    g = Grid((64,), (1.0,))
    tr = run(bumps_state(g, 0.05), pot3, t_end=1.0, snapshot_every=0.5, max_steps=10,
             check_dissipation=False)
    assert tr.states[-1].steps == 10 and tr.states[-1].t < 1.0


def test_indicator_state_mass(pot3):
    g = Grid((400,), (1.0,))
    st = indicator_state(Intervals(((0.25, 0.75),)), g, pot3, 0.02)
    assert st.mass == pytest.approx(0.5 * pot3.rho_c, rel=1e-3)
    rep = energy_modica(pot3, st.rho, 0.02)
    assert rep.mass == pytest.approx(st.mass)


def test_bumps_are_reproducible():
    g = Grid((100,), (1.0,))
    a = bumps_state(g, 0.05, seed=7).rho.values
    b = bumps_state(g, 0.05, seed=7).rho.values
    assert np.array_equal(a, b)
    assert a.min() >= 0 and a.max() <= 2.0
