import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eqgh.errors import DomainError, PreconditionError, RefusalError
from eqgh.group_actions import FiniteAction, GeneratedGroup, Homomorphism, trivial_action
from eqgh.metric_core import FiniteMetricSpace, PointMap, identity_map
from eqgh.oracles import shadow_dense_solve
from eqgh.shadowing import (
    build_conjugacy, expansivity_certificate, make_pseudo_orbit, separation_set,
    shadow_hyperbolic_toral, tracing_constant, tracing_displacements,
)
from eqgh.systems import CAT_MAP, ToralSystem, example_family, full_shift, torus_dist

CAT = ToralSystem({"a": CAT_MAP})
LAMBDA_U = (3 + np.sqrt(5)) / 2
ID_Z = Homomorphism(GeneratedGroup.Z(), GeneratedGroup.Z(), {"a": 1})


def step_errors(po):
    order = np.argsort(po.window)
    v = po.values[order]
    return torus_dist(np.mod(v[:-1] @ CAT_MAP.T, 1.0), v[1:])


# ---------------------------------------------------------------- pseudo-orbits

def test_cat_map_pseudo_orbit_is_valid():
    po = make_pseudo_orbit(CAT, 1e-3, window=50)
    assert len(po.window) == 101
    assert step_errors(po).max() < 1e-3


def test_z2_pseudo_orbit_from_commuting_matrices():
    system = ToralSystem({"a": CAT_MAP, "b": CAT_MAP @ CAT_MAP})
    po = make_pseudo_orbit(system, 1e-3, window=5)
    G = system.group
    for s in G.gen_elements():
        for g in po.window:
            sg = G.multiply(s, g)
            if sg in po.window:
                moved = system.apply(s, po.value(g)[None])
                assert torus_dist(moved, po.value(sg)[None])[0] < 1e-3


def test_pseudo_orbit_window_must_be_connected():
    with pytest.raises(DomainError):
        make_pseudo_orbit(CAT, 1e-3, window=[0, 1, 3])
    with pytest.raises(DomainError):
        make_pseudo_orbit(CAT, 1e-3, window=[1, 2])


# ---------------------------------------------------------------- tracing

def test_true_orbit_traced_by_its_start():
    po = make_pseudo_orbit(CAT, 0.0, window=10)
    tr = shadow_hyperbolic_toral(po)
    assert tr.epsilon == 0
    assert np.array_equal(tr.point, po.value(0))


def test_single_point_window():
    po = make_pseudo_orbit(CAT, 1e-3, window=[0])
    tr = shadow_hyperbolic_toral(po)
    assert tr.epsilon == 0
    assert np.array_equal(tr.point, po.values[0])


def test_tracing_constant_for_cat_map():
    # C = |V| |V^-1| sqrt(sum 1/|1-|lambda||^2) with V orthogonal for a symmetric matrix
    lam_s = 1 / LAMBDA_U
    assert tracing_constant(CAT_MAP) == pytest.approx(np.hypot(1 / (1 - lam_s), 1 / (LAMBDA_U - 1)))
    assert tracing_constant(CAT_MAP) == pytest.approx(np.sqrt(3))


def test_non_hyperbolic_matrix_refused():
    system = ToralSystem({"a": np.array([[1, 1], [0, 1]])})
    with pytest.raises(RefusalError):
        shadow_hyperbolic_toral(make_pseudo_orbit(system, 1e-3, window=5))


@pytest.mark.parametrize("delta", [1e-2, 1e-3, 1e-4])
def test_tracing_within_bound_and_matches_dense_solve(delta):
    po = make_pseudo_orbit(CAT, delta, window=50, seed=2)
    tr = shadow_hyperbolic_toral(po)
    assert tr.epsilon <= tr.constant * delta + tr.truncation + 1e-9
    order = np.argsort(po.window)
    v = po.values[order]
    e = np.mod(v[1:] - v[:-1] @ CAT_MAP.T + 0.5, 1.0) - 0.5
    assert np.abs(shadow_dense_solve(CAT_MAP, e) - tracing_displacements(CAT_MAP, e)).max() <= 1e-8


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1e-2, 1e-3]), st.integers(2, 12))
def test_tracing_point_reverified_by_orbit(seed, delta, radius):
    po = make_pseudo_orbit(CAT, delta, window=radius, seed=seed)
    tr = shadow_hyperbolic_toral(po)
    # independent forward and backward iteration of the tracing point
    inv = np.round(np.linalg.inv(CAT_MAP)).astype(int)
    worst, x, y = 0.0, tr.point.copy(), tr.point.copy()
    for k in range(radius + 1):
        worst = max(worst, torus_dist(x[None], po.value(k)[None])[0])
        worst = max(worst, torus_dist(y[None], po.value(-k)[None])[0])
        x, y = np.mod(CAT_MAP @ x, 1.0), np.mod(inv @ y, 1.0)
    assert worst <= tr.epsilon + 1e-7


def test_tracing_ratio_stable_across_delta():
    ratios = []
    for d in (1e-2, 1e-3, 1e-4):
        tr = shadow_hyperbolic_toral(make_pseudo_orbit(CAT, d, window=50))
        ratios.append(tr.epsilon / d)
    assert (max(ratios) - min(ratios)) / min(ratios) <= 0.05


# ---------------------------------------------------------------- expansivity

def test_cat_map_expansive_on_grid():
    assert expansivity_certificate(CAT.grid_action(16), 0.1, 30).passed


def test_identity_action_not_expansive():
    X = FiniteMetricSpace([[0, 1, 2], [1, 0, 1.5], [2, 1.5, 0]])
    res = expansivity_certificate(trivial_action(GeneratedGroup.Z(), X), 1.0, 5)
    assert not res.passed
    assert res.witness == (0, 1)


def test_full_shift_expansive():
    act = full_shift(2, 6)
    assert act.mode == "semigroup"
    assert expansivity_certificate(act, 0.5, 6).passed


def test_full_shift_metric():
    act = full_shift(2, 4)
    X = act.space
    assert X.dist[0, 0] == 0
    at = {w: i for i, w in enumerate(X.points)}
    assert X.dist[at["0110"], at["1110"]] == 1
    assert X.dist[at["0000"], at["0010"]] == 0.25


def test_separation_set_trivial_when_eps_exceeds_diameter():
    act = CAT.grid_action(8)
    r, ball = separation_set(act, 0, 10.0, 0.3, 5)
    assert r == 0 and ball == [0]


@pytest.mark.parametrize("eps", [0.2, 0.1, 0.05, 0.03])
def test_separation_radius_follows_expansion_rate(eps):
    act = CAT.grid_action(64)
    r, _ = separation_set(act, 0, eps, 0.3, 10)
    assert r == int(np.ceil(np.log(0.3 / eps) / np.log(LAMBDA_U)))


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_full_shift_separation_radius(k):
    r, _ = separation_set(full_shift(2, 6), 0, 2.0 ** -k, 0.5, 8)
    assert r == k


def test_separation_set_refuses_identity_action():
    X = FiniteMetricSpace([[0, 1], [1, 0]])
    with pytest.raises(PreconditionError):
        separation_set(trivial_action(GeneratedGroup.Z(), X), 0, 0.5, 1.0, 3)


# ---------------------------------------------------------------- conjugacy

def test_conjugacy_finite_identity_case():
    X = FiniteMetricSpace([[0, 1, 2], [1, 0, 1], [2, 1, 0]])
    a = trivial_action(GeneratedGroup.Z(), X)
    res = build_conjugacy(identity_map(X), ID_Z, a, a, 1e-9, window=3)
    assert np.array_equal(res.h.image, np.arange(3))
    assert res.equivariance_defect == 0


@pytest.fixture(scope="module")
def cat_family():
    return example_family(2, 1 / 8, matrices={"a": CAT_MAP})


def test_conjugacy_recovers_projection(cat_family):
    sc = cat_family
    U = sc.spaces["X"].coords[sc.maps["h"].image]
    res = build_conjugacy(U, ID_Z, sc.system, sc.actions["beta"], 1e-12, window=15)
    assert res.equivariance_defect <= 1e-9
    assert res.report["d_sup_h_u"] <= res.tolerance + 1e-9


def test_conjugacy_stable_under_noise(cat_family):
    sc = cat_family
    U = sc.spaces["X"].coords[sc.maps["h"].image]
    rng = np.random.default_rng(5)
    delta = 0.01
    noise = rng.uniform(-1, 1, U.shape) * delta / (2 * np.sqrt(2))
    res = build_conjugacy(np.mod(U + noise, 1.0), ID_Z, sc.system, sc.actions["beta"],
                          (1 + sc.system.lipschitz) * delta / 2 * (1 + 1e-6), window=15)
    assert res.report["d_sup_h_u"] <= res.eps1 + 1e-9
    assert res.equivariance_defect <= res.tolerance + 1e-9


def test_conjugacy_rejects_large_steps(cat_family):
    sc = cat_family
    rng = np.random.default_rng(0)
    U = rng.random((sc.spaces["Y"].n, 2))
    with pytest.raises(PreconditionError):
        build_conjugacy(U, ID_Z, sc.system, sc.actions["beta"], 1e-3, window=5)
