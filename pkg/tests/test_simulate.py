import numpy as np
import pytest

from gridcert import (BusParams, Line, LinearMap, NetworkModel,
                      StaticMonotone, equilibrium_state,
                      passivity_identity_check, perturbed_state, popov_Z,
                      simulate_dae, simulate_ode, solve_equilibrium_dae,
                      storage_S, write_trajectory_csv)
from gridcert.errors import SingularityStopError
from gridcert.simulate import SimState

from conftest import four_area_model, three_bus_dae_model, two_bus_model


def make_equilibrium(model):
    return solve_equilibrium_dae(model)


# ---------------------------------------------------------------------------
# stationarity and convergence
# ---------------------------------------------------------------------------

def test_dae_equilibrium_is_stationary():
    model = three_bus_dae_model()
    sol = make_equilibrium(model)
    state = equilibrium_state(model, sol)
    traj = simulate_dae(model, state, horizon=10.0, dt=0.01,
                        equilibrium=sol, record_every=100)
    last = traj.final_state
    assert np.max(np.abs(last.omega_g - state.omega_g)) < 1e-8
    assert np.max(np.abs(last.phi - state.phi)) < 1e-8
    assert np.max(np.abs(last.xi - state.xi)) < 1e-8
    assert np.max(traj.storage) < 1e-12


def test_ode_equilibrium_is_stationary():
    model = four_area_model(k1=13.0)
    sol = make_equilibrium(model)
    state = equilibrium_state(model, sol)
    traj = simulate_ode(model, state, horizon=10.0, equilibrium=sol)
    last = traj.final_state
    assert np.max(np.abs(last.omega_g - sol.omega_star)) < 1e-8
    assert np.max(np.abs(last.phi - state.phi)) < 1e-7


def test_static_increasing_map_storage_decays():
    # strictly increasing static injection maps keep dS/dt <= 0
    dyn = StaticMonotone(k=LinearMap(1.5), slope=1.5)
    buses = (BusParams(p_star=0.4, M=1.0, D=1.0, dynamics=dyn),
             BusParams(p_star=-0.4, M=2.0, D=1.2, dynamics=dyn))
    model = NetworkModel(buses, (Line(0, 1, 2.0),))
    sol = make_equilibrium(model)
    state = perturbed_state(model, sol, d_omega=[0.08, -0.05],
                            d_phi_g=[0.1])
    traj = simulate_dae(model, state, horizon=20.0, dt=0.01,
                        equilibrium=sol, record_every=10)
    S = traj.storage
    assert S[0] > 1e-3
    assert np.all(np.diff(S) <= 1e-10)
    assert S[-1] < 1e-9


def test_dae_three_bus_converges_when_certified():
    # first-order blocks with slope < 8 D; the secant certificate holds;
    # a five-percent angle perturbation settles within two minutes of
    # simulated time
    model = three_bus_dae_model(slope=2.0)
    sol = make_equilibrium(model)
    state = perturbed_state(model, sol, d_omega=[0.02, -0.02],
                            d_phi_g=0.05 * sol.phi_bar)
    traj = simulate_dae(model, state, horizon=60.0, dt=0.02,
                        equilibrium=sol, record_every=50)
    last = traj.final_state
    assert np.max(np.abs(last.omega_g - sol.omega_star)) < 1e-8


def test_dae_algebraic_residual_stays_small():
    model = three_bus_dae_model()
    sol = make_equilibrium(model)
    state = perturbed_state(model, sol, d_omega=[0.05, -0.04],
                            d_phi_g=[0.08, -0.06])
    traj = simulate_dae(model, state, horizon=2.0, dt=0.01, equilibrium=sol)
    assert np.max(traj.alg_residual) < 1e-10


def test_ode_load_step_reaches_new_frequency():
    from gridcert import sync_frequency_linear
    model = four_area_model(k1=14.0, p_star=(1.0, 0.0, -0.4, 0.0))
    omega_star = sync_frequency_linear(model)
    sol = make_equilibrium(model)
    # start from flat angles and nominal frequency, as after a step change
    n = model.n_bus
    state = SimState(phi_g=np.zeros(n - 1), phi_l=np.zeros(n - 1),
                     omega_g=np.zeros(n), xi=np.zeros(8))
    traj = simulate_ode(model, state, horizon=120.0, equilibrium=sol)
    last = traj.final_state
    np.testing.assert_allclose(last.omega_g, omega_star, atol=1e-6)


def test_ode_zero_coupling_decouples():
    base = four_area_model(k1=5.0)
    buses = tuple(BusParams(p_star=0.0, V=b.V, M=b.M, D=b.D,
                            dynamics=b.dynamics) for b in base.buses)
    isolated = [NetworkModel((buses[i],), ()) for i in range(4)]
    sols = [solve_equilibrium_dae(m) for m in isolated]
    for i, (m, s) in enumerate(zip(isolated, sols)):
        state = perturbed_state(m, s, d_omega=[0.05], d_phi_g=[])
        traj = simulate_ode(m, state, horizon=80.0, equilibrium=s)
        assert abs(traj.final_state.omega_g[0] - s.omega_star) < 1e-7


def test_ode_rotational_invariance():
    model = four_area_model(k1=13.0)
    sol = make_equilibrium(model)
    state = perturbed_state(model, sol, d_omega=[0.03, -0.02, 0.01, 0.0],
                            d_phi_g=[0.05, -0.03, 0.02])
    tgrid = np.linspace(0.0, 5.0, 51)
    a = simulate_ode(model, state, 5.0, equilibrium=sol, t_eval=tgrid)
    # shifting all absolute angles means shifting the reference bus angle,
    # which the relative coordinates do not see; emulate the shift by
    # re-running from identical relative data and comparing invariants
    b = simulate_ode(model, state.copy(), 5.0, equilibrium=sol, t_eval=tgrid)
    np.testing.assert_allclose(a.omega_matrix(), b.omega_matrix(),
                               atol=1e-12)
    eta_a = a.eta_matrix(model)
    eta_b = b.eta_matrix(model)
    np.testing.assert_allclose(eta_a, eta_b, atol=1e-12)


# ---------------------------------------------------------------------------
# storage functions
# ---------------------------------------------------------------------------

def test_storage_zero_at_equilibrium():
    model = three_bus_dae_model()
    sol = make_equilibrium(model)
    state = equilibrium_state(model, sol)
    out = storage_S(model, state, sol)
    assert out.in_region
    assert out.S == pytest.approx(0.0, abs=1e-14)


def test_storage_kinetic_term_only():
    model = two_bus_model()
    buses = (BusParams(p_star=1.0, M=2.0, D=1.0),
             BusParams(p_star=-1.0, M=1.0, D=1.0))
    model = NetworkModel(buses, model.lines)
    sol = make_equilibrium(model)
    state = equilibrium_state(model, sol)
    state.omega_g = state.omega_g + np.array([1.0, 0.0])
    out = storage_S(model, state, sol)
    assert out.S == pytest.approx(1.0, rel=1e-12)


def test_storage_positive_off_equilibrium(rng):
    model = three_bus_dae_model()
    sol = make_equilibrium(model)
    for _ in range(20):
        state = perturbed_state(model, sol, seed=int(rng.integers(1 << 30)),
                                omega_scale=0.1, angle_scale=0.2)
        out = storage_S(model, state, sol)
        if out.in_region:
            assert out.S >= 0.0


def test_popov_Z_cases(rng):
    model = NetworkModel((BusParams(p_star=0.0, M=1.0, D=1.0),
                          BusParams(p_star=0.0, M=1.0, D=1.0)),
                         (Line(0, 1, 1.0),))
    theta_bar = np.zeros(2)
    assert popov_Z(model, theta_bar, theta_bar, rho=1.0) == 0.0
    val = popov_Z(model, np.array([0.0, np.pi / 6]), theta_bar, rho=1.0)
    assert val == pytest.approx(1.0 - np.cos(np.pi / 6), rel=1e-12)
    for _ in range(50):
        theta = rng.uniform(-np.pi / 4, np.pi / 4, 2)
        assert popov_Z(model, theta, theta_bar, rho=2.0) >= 0.0


# ---------------------------------------------------------------------------
# dissipation identity
# ---------------------------------------------------------------------------

def run_frozen_input(dt, horizon=1.0):
    model = three_bus_dae_model()
    sol = make_equilibrium(model)
    state = perturbed_state(model, sol, d_omega=[0.05, -0.03],
                            d_phi_g=[0.06, -0.04])
    traj = simulate_dae(model, state, horizon=horizon, dt=dt,
                        equilibrium=sol, u_override=sol.u_bar)
    return passivity_identity_check(traj, model, sol)


def test_identity_residual_small_and_second_order():
    res_1 = run_frozen_input(1e-3)
    assert res_1 < 1e-5
    res_2 = run_frozen_input(5e-4)
    assert res_2 < res_1 / 3.0  # roughly fourth the size at half the step


def test_identity_zero_on_equilibrium_trajectory():
    model = three_bus_dae_model()
    sol = make_equilibrium(model)
    state = equilibrium_state(model, sol)
    traj = simulate_dae(model, state, horizon=0.5, dt=1e-3,
                        equilibrium=sol, u_override=sol.u_bar)
    assert passivity_identity_check(traj, model, sol) < 1e-12


def test_identity_requires_samples():
    model = three_bus_dae_model()
    sol = make_equilibrium(model)
    state = equilibrium_state(model, sol)
    traj = simulate_dae(model, state, horizon=2e-3, dt=1e-3,
                        equilibrium=sol)
    with pytest.raises(ValueError):
        passivity_identity_check(
            type(traj)(times=traj.times[:2], states=traj.states[:2],
                       storage=traj.storage[:2],
                       dissipation=traj.dissipation[:2], u=traj.u[:2],
                       alg_residual=traj.alg_residual[:2]),
            model, sol)


# ---------------------------------------------------------------------------
# singular stop and CSV export
# ---------------------------------------------------------------------------

def test_singularity_stop_on_load_overload():
    # a load beyond the 4 pu line capacity has no feasible angle profile
    from gridcert.errors import InfeasiblePowerFlowError
    model = three_bus_dae_model(p_load=-4.5)
    with pytest.raises(InfeasiblePowerFlowError):
        solve_equilibrium_dae(model)
    feasible = three_bus_dae_model(p_load=-1.1)
    sol = solve_equilibrium_dae(feasible)
    state = perturbed_state(feasible, sol, d_omega=[1.8, 1.4],
                            d_phi_g=[1.2, 1.2])
    with pytest.raises(SingularityStopError) as err:
        simulate_dae(feasible, state, horizon=30.0, dt=0.02,
                     equilibrium=sol)
    assert err.value.trajectory is not None
    assert err.value.trajectory.times.size >= 1


def test_csv_export_layout(tmp_path):
    model = three_bus_dae_model()
    sol = make_equilibrium(model)
    state = perturbed_state(model, sol, d_omega=[0.02, -0.02],
                            d_phi_g=[0.01, 0.0])
    traj = simulate_dae(model, state, horizon=0.05, dt=0.01,
                        equilibrium=sol)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, model, path)
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    assert header == ["t", "omega_bus0", "omega_bus1", "eta_0_2", "eta_1_2",
                      "storage", "alg_residual"]
    assert len(lines) == traj.times.size + 1
    row = [float(x) for x in lines[1].split(",")]
    assert row[0] == traj.times[0]
