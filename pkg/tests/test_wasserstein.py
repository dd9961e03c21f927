import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from eqgh.errors import DomainError, PreconditionError, RefusalError
from eqgh.group_actions import FiniteAction, GeneratedGroup, trivial_action
from eqgh.metric_core import FiniteMetricSpace, PointMap, identity_map
from eqgh.oracles import transport_vertex_oracle
from eqgh.systems import example_family, example_isometry_family, make_circle, rotation_action
from eqgh.wasserstein import (
    Coupling, DiscreteMeasure, amenable_net_constant, averaging_defect_bound, contraction_check,
    folner_average, invariance_defect, invariant_diameter, invariant_net_lift, lift_gha,
    lifted_epsilon, pushforward, transport_cost, wasserstein,
)

from conftest import line_space, plane_points, plane_space


def lp_cost(a, b, C):
    """Reference optimum from a generic LP solver."""
    n, m = C.shape
    A = np.zeros((n + m, n * m))
    for i in range(n):
        A[i, i * m:(i + 1) * m] = 1
    for j in range(m):
        A[n + j, j::m] = 1
    res = linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    return res.fun


@st.composite
def measure_pairs(draw, max_n=6):
    pts = draw(plane_points(min_n=2, max_n=max_n))
    n = len(pts)
    w = st.lists(st.integers(0, 5), min_size=n, max_size=n).filter(lambda v: sum(v) > 0)
    return pts, np.array(draw(w), float), np.array(draw(w), float)


# ---------------------------------------------------------------- measures, couplings

def test_measure_validation():
    X = line_space([0, 1])
    with pytest.raises(DomainError):
        DiscreteMeasure(X, [1, -1])
    with pytest.raises(DomainError):
        DiscreteMeasure(X, [0, 0])
    assert np.allclose(DiscreteMeasure(X, [1, 3]).weights, [0.25, 0.75])


def test_transport_cost_examples():
    X = line_space([0, 1])
    mu = DiscreteMeasure(X, [1, 0])
    nu = DiscreteMeasure(X, [0, 1])
    assert transport_cost(Coupling(np.diag(DiscreteMeasure(X, [.3, .7]).weights),
                                   DiscreteMeasure(X, [.3, .7]), DiscreteMeasure(X, [.3, .7]))) == 0
    assert transport_cost(Coupling(np.outer(mu.weights, nu.weights), mu, nu)) == 1
    L = line_space([0, 1, 3])
    u = DiscreteMeasure.uniform(L)
    assert transport_cost(Coupling(np.full((3, 3), 1 / 9), u, u)) == pytest.approx(4 / 3)


def test_coupling_marginals_checked():
    X = line_space([0, 1])
    mu = DiscreteMeasure(X, [1, 0])
    with pytest.raises(DomainError):
        Coupling(np.eye(2) / 2, mu, mu)


# ---------------------------------------------------------------- W_p

def test_wasserstein_examples():
    L = line_space([0, 1, 2, 3])
    mu = DiscreteMeasure(L, [1, 2, 3, 4])
    assert wasserstein(mu, mu, 2)[0] == 0
    for p in (1, 2, 3):
        assert wasserstein(DiscreteMeasure.dirac(L, 0), DiscreteMeasure.dirac(L, 3), p)[0] == pytest.approx(3)
    a = DiscreteMeasure.uniform(L, [0, 1])
    b = DiscreteMeasure.uniform(L, [2, 3])
    assert wasserstein(a, b, 1)[0] == pytest.approx(2)


def test_wasserstein_rejects_small_p():
    L = line_space([0, 1])
    with pytest.raises(DomainError):
        wasserstein(DiscreteMeasure.dirac(L, 0), DiscreteMeasure.dirac(L, 1), 0.5)


@settings(max_examples=60, deadline=None)
@given(measure_pairs(), st.sampled_from([1, 2]))
def test_wasserstein_matches_vertex_enumeration_and_lp(data, p):
    pts, wa, wb = data
    X = plane_space(pts)
    mu, nu = DiscreteMeasure(X, wa), DiscreteMeasure(X, wb)
    val, cp = wasserstein(mu, nu, p)
    si, sj = mu.support, nu.support
    C = X.pairwise(si, sj) ** p
    ref = lp_cost(mu.weights[si], nu.weights[sj], C)
    assert val ** p == pytest.approx(ref, abs=1e-9)
    if len(si) + len(sj) <= 8:
        assert val ** p == pytest.approx(transport_vertex_oracle(mu.weights[si], nu.weights[sj], C), abs=1e-9)
    assert transport_cost(cp, p=p) == pytest.approx(val ** p, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(plane_points(min_n=2, max_n=6), st.data(), st.sampled_from([1, 2]))
def test_wasserstein_metric_axioms(pts, data, p):
    X = plane_space(pts)
    w = st.lists(st.integers(0, 4), min_size=X.n, max_size=X.n).filter(lambda v: sum(v) > 0)
    a, b, c = (DiscreteMeasure(X, np.array(data.draw(w), float)) for _ in range(3))
    ab, ba = wasserstein(a, b, p)[0], wasserstein(b, a, p)[0]
    assert ab == ba
    assert wasserstein(a, a, p)[0] <= 1e-9
    assert wasserstein(a, c, p)[0] <= ab + wasserstein(b, c, p)[0] + 1e-9
    if ab <= 1e-12:
        assert np.allclose(a.weights, b.weights)


# ---------------------------------------------------------------- pushforward, contraction

def test_pushforward_examples():
    X = line_space([0, 1, 2, 3])
    mu = DiscreteMeasure(X, [0.1, 0.2, 0.3, 0.4])
    assert np.array_equal(pushforward(identity_map(X), mu).weights, mu.weights)
    assert np.array_equal(pushforward(PointMap(X, X, [2] * 4), mu).weights, [0, 0, 1, 0])
    Y = line_space([0, 1])
    assert np.allclose(pushforward(PointMap(X, Y, [0, 0, 1, 1]), mu).weights, [0.3, 0.7])


def test_contraction_examples():
    C = make_circle(1.0, 8)
    mu = DiscreteMeasure.uniform(C)
    f = identity_map(C)
    assert contraction_check(f, f, mu, 1)[:2] == (0, 0)
    g = PointMap(C, C, (np.arange(8) + 1) % 8)
    for p in (1, 2):
        lhs, rhs, ok = contraction_check(f, g, mu, p)
        assert ok and lhs <= rhs + 1e-9
        assert rhs == pytest.approx((2 * np.pi / 8) ** p)


@settings(max_examples=100, deadline=None)
@given(plane_points(min_n=2, max_n=6), st.data(), st.sampled_from([1, 2]))
def test_contraction_never_violated(pts, data, p):
    X = plane_space(pts)
    idx = st.lists(st.integers(0, X.n - 1), min_size=X.n, max_size=X.n)
    f, g = PointMap(X, X, data.draw(idx)), PointMap(X, X, data.draw(idx))
    w = data.draw(st.lists(st.integers(1, 5), min_size=X.n, max_size=X.n))
    lhs, rhs, ok = contraction_check(f, g, DiscreteMeasure(X, w), p)
    assert ok


# ---------------------------------------------------------------- lifted GHA

def test_lift_constants():
    assert lifted_epsilon(0.01, 1, 1, 1) == pytest.approx(0.26)
    assert amenable_net_constant(0.01, 1, 1, 1) == pytest.approx(0.46)
    assert lifted_epsilon(0, 2, 3, 5) == 0


def test_lift_identity_has_zero_defects():
    C = make_circle(1.0, 6)
    rng = np.random.default_rng(0)
    ms = [DiscreteMeasure(C, rng.random(6)) for _ in range(4)]
    a = rotation_action(C, {"a": 1})
    et, rep = lift_gha(identity_map(C), 0, 1, ms, actions=(a, a))
    assert et == 0
    assert rep.pair_defect == 0 and rep.net_defect == 0 and rep.equivariant_defect == 0


def test_lift_requires_eps_isometry():
    X = line_space([0, 1, 3])
    with pytest.raises(PreconditionError):
        lift_gha(PointMap(X, X, [0, 0, 0]), 0.5, 1, [DiscreteMeasure.uniform(X)])


def test_lift_on_example_family():
    sc = example_family(4, 1 / 8)
    f = sc.maps["f"]
    eps = sc.bound
    rng = np.random.default_rng(1)
    X = f.source
    ms = [DiscreteMeasure(X, rng.dirichlet(np.ones(X.n))) for _ in range(20)]
    et, rep = lift_gha(f, eps, 1, ms, actions=(sc.actions["alpha"], sc.actions["beta"]))
    assert et == pytest.approx(lifted_epsilon(eps, 1, X.diameter, f.target.diameter))
    assert not rep.violations


# ---------------------------------------------------------------- Folner averaging

def test_folner_average_of_invariant_measure():
    C = make_circle(1.0, 6)
    a = rotation_action(C, {"a": 1})
    u = DiscreteMeasure.uniform(C)
    assert np.allclose(folner_average(u, a, n=5).weights, u.weights)


def test_folner_average_dirac_full_cycle_is_uniform():
    X = line_space(np.arange(5))
    act = FiniteAction(GeneratedGroup.cyclic(5), X, {"a": (np.arange(5) + 1) % 5})
    avg = folner_average(DiscreteMeasure.dirac(X, 2), act, n=5)
    assert np.allclose(avg.weights, 0.2)


def test_folner_average_grid_rotation_orbit():
    C = make_circle(1.0, 12)
    a = rotation_action(C, {"a": 4})
    avg = folner_average(DiscreteMeasure.dirac(C, 1), a, n=12 // np.gcd(4, 12))
    want = np.zeros(12)
    want[[1, 5, 9]] = 1 / 3
    assert np.allclose(avg.weights, want)


def test_folner_average_refuses_semigroup():
    X = line_space([0, 1, 2])
    act = FiniteAction(GeneratedGroup.Z(), X, {"a": [0, 0, 1]})
    with pytest.raises(RefusalError):
        folner_average(DiscreteMeasure.uniform(X), act, n=3)


def test_invariance_defect_examples():
    C = make_circle(1.0, 10)
    a = rotation_action(C, {"a": 3})
    assert invariance_defect(DiscreteMeasure.uniform(C), a) == pytest.approx(0, abs=1e-12)
    assert invariance_defect(DiscreteMeasure.dirac(C, 0), a) == pytest.approx(3 * 2 * np.pi / 10)


@pytest.mark.parametrize("n", [2, 4, 8, 16])
def test_averaged_defect_within_bounds(n):
    C = make_circle(1.0, 32)
    a = rotation_action(C, {"a": 5})
    d = invariance_defect(folner_average(DiscreteMeasure.dirac(C, 0), a, n=n), a)
    tight, loose = averaging_defect_bound(a, n)
    assert d <= tight + 1e-9 <= loose + 1e-9


def test_invariant_net_lift_identity():
    C = make_circle(1.0, 6)
    a = rotation_action(C, {"a": 1})
    T = [DiscreteMeasure.uniform(C)]
    images, D, rep = invariant_net_lift(T, identity_map(C), 0, 1, 6, a, a)
    assert D == 0
    assert np.allclose(images[0].weights, T[0].weights)


def test_invariant_net_lift_rejects_non_invariant():
    C = make_circle(1.0, 6)
    a = rotation_action(C, {"a": 1})
    with pytest.raises(PreconditionError):
        invariant_net_lift([DiscreteMeasure.dirac(C, 0)], identity_map(C), 0, 1, 6, a, a)


def test_invariant_net_lift_example_family():
    from eqgh.systems import CAT_MAP
    sc = example_family(4, 1 / 8, matrices={"a": CAT_MAP})
    X = sc.spaces["X"]
    alpha, beta = sc.actions["alpha"], sc.actions["beta"]
    # the uniform grid measure and the Dirac at the fixed point 0 are invariant
    T = [DiscreteMeasure.uniform(X), DiscreteMeasure.dirac(X, 0)]
    images, D, rep = invariant_net_lift(T, sc.maps["f"], sc.bound, 1, 4, alpha, beta)
    assert D == pytest.approx(amenable_net_constant(sc.bound, 1, X.diameter, sc.spaces["Y"].diameter))
    assert rep.pair_ok


def test_invariant_net_lift_rotation_pair():
    C8, C4 = make_circle(1.0, 8), make_circle(1.0, 4)
    a8, a4 = rotation_action(C8, {"a": 2}), rotation_action(C4, {"a": 1})
    f = PointMap(C8, C4, np.arange(8) // 2)
    eps = 2 * np.pi / 8
    T = [DiscreteMeasure.uniform(C8), DiscreteMeasure.uniform(C8, [0, 2, 4, 6]),
         DiscreteMeasure.uniform(C8, [1, 3, 5, 7])]
    images, D, rep = invariant_net_lift(T, f, eps, 1, 4, a8, a4,
                                        witnesses=[DiscreteMeasure.uniform(C4)])
    assert D == pytest.approx(amenable_net_constant(eps, 1, C8.diameter, C4.diameter))
    assert rep.pair_ok and rep.witness_ok


def test_invariant_diameter_identity_two_points():
    X = line_space([0, 2.5])
    d, defect, n = invariant_diameter(trivial_action(GeneratedGroup.Z(), X), 1)
    assert d == 2.5 and defect <= 2.5


def test_invariant_diameter_coprime_rotation():
    C = make_circle(1.0, 15)
    d, defect, n = invariant_diameter(rotation_action(C, {"a": 4}), 1, n_samples=15)
    assert n == 15
    assert d <= 2 * np.pi / 15 + defect + 1e-9
    assert d == pytest.approx(0, abs=1e-9)


def test_invariant_diameter_shrinks_with_fibre():
    vals = [invariant_diameter(example_isometry_family(n, 1 / 8).actions["alpha_n"], 1)[0]
            for n in (2, 4, 8)]
    assert vals[0] > vals[1] > vals[2]
