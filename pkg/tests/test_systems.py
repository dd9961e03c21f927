import numpy as np
import pytest

from eqgh.errors import DomainError, RefusalError
from eqgh.group_actions import equivariant_defect
from eqgh.metric_core import FiniteMetricSpace, approx_inverse, cellwise_gha, eps_net, is_eps_isometry
from eqgh.systems import (
    CAT_MAP, EXAMPLE_A, EXAMPLE_B, SCENARIOS, ToralSystem, build_scenario, example_family,
    example_isometry_family, full_shift, grid_size, make_circle, make_torus, product_space,
    rotation_action, torus_dist,
)


def test_circle_examples():
    C = make_circle(1.0, 4)
    assert C.dist[0, 1] == pytest.approx(np.pi / 2)
    assert C.diameter == pytest.approx(np.pi)
    C2 = make_circle(0.5, 2)
    assert C2.dist[0, 1] == pytest.approx(np.pi * 0.5)


def test_torus_grid():
    T = make_torus(8)
    assert T.n == 64
    assert T.diameter == pytest.approx(np.sqrt(2) / 2)
    i, j = T.split(np.arange(T.n))
    coords = np.stack([i, j], axis=1) / 8
    d = torus_dist(coords[:, None], coords[None])
    assert np.allclose(T.dist, d)


def test_product_space_examples():
    C = make_circle(1.0, 5)
    P = product_space(C, FiniteMetricSpace([[0.0]]))
    assert np.allclose(P.dist, C.dist)
    a, b = 1.5, 2.0
    Q = product_space(FiniteMetricSpace([[0, a], [a, 0]]), FiniteMetricSpace([[0, b], [b, 0]]))
    assert Q.diameter == pytest.approx(np.hypot(a, b))


def test_grid_size():
    assert grid_size(1 / 32) == 32
    assert grid_size(32) == 32
    with pytest.raises(DomainError):
        grid_size(1)


def test_toral_system_modes():
    assert ToralSystem({"a": CAT_MAP}).mode == "group"
    assert ToralSystem({"a": EXAMPLE_A, "b": EXAMPLE_B}).mode == "semigroup"
    with pytest.raises(DomainError):
        ToralSystem({"a": CAT_MAP, "b": EXAMPLE_A})
    with pytest.raises(DomainError):
        ToralSystem({"a": [[0.5, 0], [0, 1]]})


def test_grid_action_is_exact_on_grid():
    m = 8
    system = ToralSystem({"a": CAT_MAP})
    act = system.grid_action(m)
    T = act.space
    i, j = T.split(np.arange(T.n))
    pts = np.stack([i, j], axis=1) / m
    moved = system.apply(1, pts)
    k, l = T.split(act.gen_maps["a"])
    assert np.allclose(moved, np.stack([k, l], axis=1) / m)


def test_example_family_n2_trivial_gamma():
    sc = example_family(2, 1 / 8, gamma="trivial")
    assert sc.bound == pytest.approx(2.2214414690791831)
    assert sc.measured["h_net_defect"] == 0


@pytest.mark.parametrize("n", [2, 4, 8])
def test_example_family_defects_below_bound(n):
    sc = example_family(n, 1 / 8)
    lim = sc.bound + sc.slack
    assert sc.slack < 0.15
    for key in ("h_distortion", "h_net_defect", "f_distortion", "f_net_defect", "f_equivariant_defect"):
        assert sc.measured[key] <= lim + 1e-9
    assert sc.measured["h_conjugates_exactly"]
    if n == 8:
        assert sc.bound == pytest.approx(0.5553603672697958)


def test_example_family_h_is_isometry_at_bound():
    sc = example_family(4, 1 / 8)
    ok, cert = is_eps_isometry(sc.maps["h"], sc.bound + sc.slack)
    assert ok


def test_example_family_inverse_and_cellwise_maps():
    sc = example_family(4, 1 / 8)
    f, eps = sc.maps["f"], sc.bound
    g = approx_inverse(f, eps)
    X = f.source
    assert X.d(np.arange(X.n), g.image[f.image]).max() <= 2 * eps + 1e-9
    h = sc.maps["h"]
    f1 = cellwise_gha(h, eps, eps_net(h.source, eps))
    assert f1.source is h.source


def test_isometry_family():
    for n in (1, 2, 4):
        sc = example_isometry_family(n)
        assert sc.bound == pytest.approx(np.pi / n)
        # one grid step on the small circle of radius 1/n
        assert sc.measured["f_equivariant_defect"] == pytest.approx(2 * np.pi / (n * 8))
        assert sc.measured["f_equivariant_defect"] <= sc.bound
    sc = example_isometry_family(3, step=0)
    a, an = sc.actions["alpha"], sc.actions["alpha_n"]
    assert equivariant_defect(sc.maps["f"], a, an) == 0


def test_rotation_action_product_of_circles():
    P = product_space(make_circle(1.0, 4), make_circle(2.0, 6))
    act = rotation_action(P, {"a": (1, 2)})
    i, j = P.split(act.gen_maps["a"])
    i0, j0 = P.split(np.arange(P.n))
    assert np.array_equal(i, (i0 + 1) % 4) and np.array_equal(j, (j0 + 2) % 6)


def test_full_shift_size_guard():
    assert full_shift(2, 5).space.n == 32
    with pytest.raises(RefusalError):
        full_shift(4, 7)


def test_scenario_registry():
    assert set(SCENARIOS) == {"example-family", "isometry-family", "cat-map", "full-shift"}
    sc = build_scenario("isometry-family", n=2)
    d = sc.to_dict()
    assert d["scenario"] == "isometry-family" and d["bound"] == pytest.approx(np.pi / 2)
    with pytest.raises(DomainError):
        build_scenario("nope")
