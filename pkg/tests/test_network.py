import numpy as np
import pytest

from gridcert import (BusParams, Line, NetworkModel, active_power,
                      coupling_bound_sigma, edge_weights, incidence_matrix,
                      laplacian)
from gridcert.errors import DisconnectedGraphError, ModelError
from gridcert.network import reduced_incidence, reference_projector

from conftest import four_area_model, random_connected_model


def gen_bus(p=0.0, V=1.0, M=1.0, D=1.0):
    return BusParams(p_star=p, V=V, M=M, D=D)


def test_two_bus_incidence():
    model = NetworkModel((gen_bus(), gen_bus()), (Line(0, 1, 5.0),))
    R = incidence_matrix(model)
    assert R.shape == (2, 1)
    np.testing.assert_array_equal(R, [[-1.0], [1.0]])


def test_ring_columns_sum_to_zero():
    model = four_area_model()
    R = incidence_matrix(model)
    assert R.shape == (4, 4)
    np.testing.assert_allclose(R.sum(axis=0), 0.0)
    assert set(np.abs(R).sum(axis=0)) == {2.0}


def test_random_graph_rank(rng):
    model = random_connected_model(rng, 10, extra_edges=4)
    R = incidence_matrix(model)
    # independent dense-factorization oracle for the rank
    assert np.linalg.matrix_rank(R) == 9


def test_disconnected_graph_named_components():
    buses = tuple(gen_bus() for _ in range(4))
    with pytest.raises(DisconnectedGraphError) as err:
        NetworkModel(buses, (Line(0, 1, 1.0), Line(2, 3, 1.0)))
    assert [0, 1] in err.value.components
    assert [2, 3] in err.value.components


def test_duplicate_and_self_loop_rejected():
    with pytest.raises(ModelError):
        Line(1, 1, 1.0)
    buses = (gen_bus(), gen_bus())
    with pytest.raises(ModelError):
        NetworkModel(buses, (Line(0, 1, 1.0), Line(1, 0, 2.0)))


def test_edge_weights_unit_and_offnominal_voltage():
    model = NetworkModel((gen_bus(), gen_bus()), (Line(0, 1, 5.0),))
    np.testing.assert_allclose(edge_weights(model), [5.0])
    model = NetworkModel((gen_bus(V=1.02), gen_bus(V=0.98)),
                         (Line(0, 1, 5.0),))
    np.testing.assert_allclose(edge_weights(model), [4.998])


def test_four_area_unit_voltage_weights_match_susceptances():
    model = four_area_model(b_abs=1.3)
    np.testing.assert_allclose(edge_weights(model), 1.3)


def test_active_power_zero_at_zero_angles():
    model = four_area_model()
    np.testing.assert_allclose(active_power(model, np.zeros(4)), 0.0)


def test_active_power_shift_invariance(rng):
    model = random_connected_model(rng, 8, extra_edges=3)
    theta = rng.uniform(-1.0, 1.0, 8)
    p1 = active_power(model, theta)
    p2 = active_power(model, theta + 3.7)
    np.testing.assert_allclose(p1, p2, atol=1e-12)


def test_active_power_two_bus_value():
    model = NetworkModel((gen_bus(), gen_bus()), (Line(0, 1, 2.0),))
    p = active_power(model, np.array([0.0, np.pi / 6]))
    np.testing.assert_allclose(p, [-1.0, 1.0], atol=1e-14)


def test_active_power_balance_property(rng):
    for _ in range(20):
        n = int(rng.integers(3, 12))
        model = random_connected_model(rng, n, extra_edges=3)
        theta = rng.uniform(-2.0, 2.0, n)
        assert abs(active_power(model, theta).sum()) < 1e-12


def test_coupling_bound_star_and_isolated():
    center = gen_bus()
    buses = (center, gen_bus(), gen_bus(), gen_bus())
    model = NetworkModel(buses, (Line(0, 1, 1.0), Line(0, 2, 1.0),
                                 Line(0, 3, 1.0)))
    sigma = coupling_bound_sigma(model)
    assert sigma[0] == pytest.approx(6.0)
    np.testing.assert_allclose(sigma[1:], 2.0)


def test_reference_factorization(rng):
    # deleting the reference row and re-adding through E reproduces
    # R^T theta = R_phi^T phi for random angles
    for _ in range(10):
        n = int(rng.integers(3, 10))
        model = random_connected_model(rng, n, extra_edges=2)
        R = incidence_matrix(model)
        Rphi = reduced_incidence(model)
        E = reference_projector(model)
        np.testing.assert_allclose(E @ Rphi, R, atol=1e-14)
        theta = rng.uniform(-3.0, 3.0, n)
        phi = E.T @ theta
        np.testing.assert_allclose(R.T @ theta, Rphi.T @ phi, atol=1e-12)


def test_laplacian_psd_with_ones_kernel(rng):
    model = random_connected_model(rng, 9, extra_edges=4)
    L = laplacian(model)
    np.testing.assert_allclose(L, L.T, atol=1e-14)
    np.testing.assert_allclose(L @ np.ones(9), 0.0, atol=1e-12)
    assert np.linalg.eigvalsh(L)[0] > -1e-12


def test_bus_validation():
    with pytest.raises(ModelError):
        BusParams(p_star=0.0, V=-1.0)
    with pytest.raises(ModelError):
        BusParams(p_star=0.0, M=1.0, D=0.0)
    with pytest.raises(ModelError):
        # loads cannot carry dynamics
        from gridcert import LinearMap, StaticMonotone
        BusParams(p_star=0.0,
                  dynamics=StaticMonotone(k=LinearMap(1.0), slope=1.0))


def test_reference_bus_must_be_generator():
    buses = (BusParams(p_star=0.0), gen_bus())
    with pytest.raises(ModelError):
        NetworkModel(buses, (Line(0, 1, 1.0),), reference_bus=0)
    NetworkModel(buses, (Line(0, 1, 1.0),), reference_bus=1)
