import numpy as np
import pytest

from gridcert import (BusParams, DeadbandMap, FirstOrder, Line, LinearMap,
                      NetworkModel, SecondOrder, StaticMonotone, droop_lag2)

# four-area parameters used throughout: inertia, damping, droop gains
AREA_M = (5.5, 3.98, 4.49, 4.22)
AREA_D = (1.60, 1.22, 1.38, 1.42)
AREA_K = (13.0, 7.0, 8.0, 9.0)


def four_area_model(k1=13.0, p_star=(1.0, 0.0, 0.0, 0.0), b_abs=1.0):
    """Four generator areas on a ring, linear droop behind two lags."""
    ks = (k1,) + AREA_K[1:]
    buses = tuple(
        BusParams(p_star=p_star[i], V=1.0, M=AREA_M[i], D=AREA_D[i],
                  dynamics=droop_lag2(ks[i], 0.5, 1.0))
        for i in range(4))
    lines = (Line(0, 1, b_abs), Line(1, 2, b_abs), Line(2, 3, b_abs),
             Line(0, 3, b_abs))
    return NetworkModel(buses, lines)


def two_bus_model(slope=2.0):
    buses = (
        BusParams(p_star=1.0, M=1.0, D=1.0,
                  dynamics=FirstOrder(tau=1.0, k=LinearMap(slope),
                                      slope=slope)),
        BusParams(p_star=-1.0, M=1.0, D=1.0,
                  dynamics=FirstOrder(tau=1.0, k=LinearMap(slope),
                                      slope=slope)),
    )
    return NetworkModel(buses, (Line(0, 1, 2.0),))


def three_bus_dae_model(deadband=0.05, slope=2.0, p_load=-1.1):
    """Two generators feeding one algebraic load bus through a star."""
    gen = dict(M=2.0, D=1.0,
               dynamics=FirstOrder(tau=0.5,
                                   k=DeadbandMap(gain=slope, width=deadband),
                                   slope=slope))
    buses = (
        BusParams(p_star=0.6, **gen),
        BusParams(p_star=0.5, **gen),
        BusParams(p_star=p_load),
    )
    lines = (Line(0, 2, 2.0), Line(1, 2, 2.0))
    return NetworkModel(buses, lines)


def path3_tree_model():
    buses = tuple(BusParams(p_star=p, M=1.0, D=1.0,
                            dynamics=StaticMonotone(k=LinearMap(1.0),
                                                    slope=1.0))
                  for p in (0.5, 0.0, -0.5))
    return NetworkModel(buses, (Line(0, 1, 1.0), Line(1, 2, 1.0)))


def second_order_dynamics(k_slope=2.0, cost_modulus=3.0, output_slope=None):
    out_map = None if output_slope is None else LinearMap(output_slope)
    return SecondOrder(tau_alpha=0.5, tau_beta=1.0,
                       cost_grad=LinearMap(cost_modulus),
                       cost_modulus=cost_modulus,
                       k=LinearMap(k_slope), k_slope=k_slope,
                       output_map=out_map, output_slope=output_slope)


def random_connected_model(rng, n_bus, extra_edges=2, weight_range=(0.5, 3.0)):
    """Random spanning tree plus extra chords; all buses are generators."""
    lines = []
    used = set()
    for j in range(1, n_bus):
        i = int(rng.integers(0, j))
        lines.append(Line(i, j, float(rng.uniform(*weight_range))))
        used.add((i, j))
    tries = 0
    while extra_edges > 0 and tries < 50 * extra_edges:
        tries += 1
        i, j = sorted(rng.integers(0, n_bus, size=2).tolist())
        if i == j or (i, j) in used:
            continue
        used.add((i, j))
        lines.append(Line(i, j, float(rng.uniform(*weight_range))))
        extra_edges -= 1
    buses = tuple(BusParams(p_star=0.0, M=1.0, D=1.0) for _ in range(n_bus))
    return NetworkModel(buses, tuple(lines))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
