import math

import numpy as np
import pytest

from cavcool.dynamics import (
    SimOptions,
    SimState,
    SimTrace,
    formal_field_solution,
    integrate,
    mode_function_sq,
    quasi_static_field,
    servo_filter,
    simulate_transit,
    transit_span,
    transverse_energy,
)
from cavcool.errors import ConfigError, IntegrationError
from cavcool.params import CavityConfig, ParticleConfig, derive_cavity, particle_properties


def test_mode_function_antinode_at_origin(red_cavity):
    assert mode_function_sq(0.0, 0.0, 0.0, red_cavity) == 1.0
    quarter = red_cavity.wavelength / 4
    assert mode_function_sq(quarter, 0.0, 0.0, red_cavity) == pytest.approx(0.0, abs=1e-20)
    w = red_cavity.waist
    assert mode_function_sq(0.0, w, 0.0, red_cavity) == pytest.approx(math.exp(-2))


def test_empty_cavity_transient(red_cavity):
    pd = particle_properties(ParticleConfig(), red_cavity)
    opts = SimOptions(rtol=1e-11, atol=1e-14, sample_rate=20 * red_cavity.kappa, gravity=False)
    init = SimState(0.0, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 0j)
    tr = integrate(red_cavity, pd, 0.0, init, (0.0, 20 / red_cavity.kappa), opts)
    gam = complex(red_cavity.kappa, -red_cavity.detuning)
    exact = red_cavity.empty_field * (1 - np.exp(-gam * tr.t))
    assert np.max(np.abs(tr.field - exact)) / abs(red_cavity.empty_field) < 1e-8
    # the deviation decays as exp(-kappa t)
    assert abs(tr.field[-1] - red_cavity.empty_field) / abs(red_cavity.empty_field) < 1e-8


def test_default_start_is_stationary(red_cavity):
    pd = particle_properties(ParticleConfig(), red_cavity)
    tr = simulate_transit(red_cavity, pd, 0.0, 0.1, 1.0, options=SimOptions(sample_rate=1e6))
    assert np.max(np.abs(tr.field / red_cavity.empty_field - 1)) < 1e-9
    assert np.allclose(tr.vx, 0.1)


def test_free_flight_kinematics(red_cavity):
    pd = particle_properties(ParticleConfig(), red_cavity)
    tr = simulate_transit(red_cavity, pd, 0.0, 0.2, 1.0, entry_phase=0.4, options=SimOptions(gravity=False))
    assert np.allclose(tr.x, 0.4 / red_cavity.k + 0.2 * tr.t, rtol=1e-9, atol=1e-15)
    assert np.allclose(tr.z, -3 * red_cavity.waist + 1.0 * tr.t, rtol=1e-9, atol=1e-15)
    assert tr.t[-1] == pytest.approx(transit_span(red_cavity, 1.0)[1], abs=1e-7)


def test_gravity_acts_on_z(red_cavity):
    pd = particle_properties(ParticleConfig(), red_cavity)
    tr = simulate_transit(red_cavity, pd, 0.0, 0.2, 1.0)
    assert tr.vz[-1] == pytest.approx(1.0 - 9.80665 * tr.t[-1], rel=1e-8)
    assert np.all(tr.vy == 0)


def _adiabatic_error(cav, pd, u_x, vz):
    tr = simulate_transit(cav, pd, u_x, 1e-3 * vz, vz, options=SimOptions(gravity=False))
    f2 = mode_function_sq(tr.x, tr.y, tr.z, cav)
    qs = quasi_static_field(f2, cav, u_x)
    return np.max(np.abs(tr.field - qs) / np.abs(qs))


def test_quasi_static_limit(red_cavity, silicon):
    # the lag behind the adiabatic field scales with the transit speed
    u_x = 0.5 * red_cavity.kappa
    fast = _adiabatic_error(red_cavity, silicon, u_x, 3.0)
    slow = _adiabatic_error(red_cavity, silicon, u_x, 0.03)
    assert slow < 1e-3
    assert fast / slow > 50


def test_formal_solution_static_position(red_cavity):
    u_x = 2.3 * red_cavity.kappa
    t = np.linspace(0, 30 / red_cavity.kappa, 3001)
    f2 = np.full_like(t, 0.7)
    a = formal_field_solution(t, f2, red_cavity, u_x)
    target = quasi_static_field(0.7, red_cavity, u_x)
    assert abs(a[-1] - target) / abs(target) < 1e-10


def test_formal_solution_matches_integration(red_cavity, fig3_trace):
    u_x = fig3_trace.metadata["u_x"]
    f2 = mode_function_sq(fig3_trace.x, fig3_trace.y, fig3_trace.z, red_cavity)
    a = formal_field_solution(fig3_trace.t, f2, red_cavity, u_x)
    assert np.max(np.abs(a - fig3_trace.field) / np.abs(fig3_trace.field)) < 1e-4


def test_red_detuning_cools(red_cavity, fig3_trace):
    assert abs(fig3_trace.vx[-1]) < 0.5 * fig3_trace.vx[0]


def test_blue_detuning_heats(silicon):
    cav = derive_cavity(CavityConfig().with_detuning_in_kappa(1.0))
    tr = simulate_transit(cav, silicon, 2.3 * cav.kappa, 0.23, 0.7, entry_phase=2.0)
    assert abs(tr.vx[-1]) > tr.vx[0]


def test_frozen_field_energy(red_cavity, silicon):
    u_x = 2.3 * red_cavity.kappa
    init = SimState(0.0, (0.0, 0.0, 0.0), (0.01, 0.0, 0.0), red_cavity.empty_field)
    opts = SimOptions(rtol=1e-10, atol=1e-14, gravity=False, frozen_field=True, sample_rate=5e6)
    tr = integrate(red_cavity, silicon, u_x, init, (0.0, 2e-4), opts)
    e = transverse_energy(tr, red_cavity, silicon, u_x)
    assert np.max(np.abs(e - e[0])) / abs(e[0]) < 1e-7
    assert np.all(np.abs(tr.field - red_cavity.empty_field) == 0)


def test_deterministic(red_cavity, silicon):
    a = simulate_transit(red_cavity, silicon, 2.3 * red_cavity.kappa, 0.2, 1.0, entry_phase=1.0)
    b = simulate_transit(red_cavity, silicon, 2.3 * red_cavity.kappa, 0.2, 1.0, entry_phase=1.0)
    assert np.array_equal(a.to_array(), b.to_array())


def test_trace_round_trip(tmp_path, fig3_trace):
    path = tmp_path / "trace.csv"
    fig3_trace.save(path)
    back = SimTrace.load(path)
    assert np.array_equal(back.to_array(), fig3_trace.to_array())
    assert back.metadata["u_x"] == fig3_trace.metadata["u_x"]
    header = path.read_text().splitlines()[0]
    assert header == "t,x,y,z,vx,vy,vz,re_a,im_a"


def test_servo_filter_decay():
    rate = 1e6
    out = servo_filter(np.ones(2000), 1e3, rate)
    t = np.arange(2000) / rate
    assert np.allclose(out, np.exp(-2 * math.pi * 1e3 * t), atol=1e-3)
    with pytest.raises(ConfigError):
        servo_filter(np.ones(10), 6e5, rate)


def test_servo_removes_static_shift(red_cavity, silicon):
    opts = SimOptions(servo_corner=2e3, gravity=False)
    tr = simulate_transit(red_cavity, silicon, 2.3 * red_cavity.kappa, 0.23, 0.7, entry_phase=2.0, options=opts)
    assert np.all(np.isfinite(tr.field))
    assert tr.metadata["options"]["servo_corner"] == 2e3


def test_errors(red_cavity, silicon):
    init = SimState(0.0, (0.0, 0.0, 0.0), (0.1, 0.0, 0.0), red_cavity.empty_field)
    with pytest.raises(ConfigError):
        integrate(red_cavity, silicon, 0.0, init, (1.0, 0.0))
    with pytest.raises(ConfigError):
        SimState(float("nan"), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 0j)
    massless = particle_properties(ParticleConfig(radius=0.0), red_cavity)
    with pytest.raises(ConfigError):
        integrate(red_cavity, massless, 1e5, init, (0.0, 1e-5))
    with pytest.raises(IntegrationError):
        integrate(red_cavity, silicon, 2.3 * red_cavity.kappa, init, (0.0, 1e-4), SimOptions(max_steps=5))
