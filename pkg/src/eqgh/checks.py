"""Named numerical checks, shared by the ``paperchecks`` command and the
acceptance tests. Every check returns a CheckResult and never raises on an
inequality failure; bugs in the guarded routines surface as failed rows.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import metric_core as mc
from . import wasserstein as ws
from .errors import TOL, BoundViolation
from .group_actions import GeneratedGroup, Homomorphism, dGH1_upper, equivariant_defect
from .metric_core import FiniteMetricSpace, PointMap
from .oracles import gh_bruteforce, shadow_dense_solve, transport_vertex_oracle
from .shadowing import (_errors_along, build_conjugacy, make_pseudo_orbit,
                        shadow_hyperbolic_toral, tracing_displacements)
from .systems import (CAT_MAP, SECOND_A, ToralSystem, example_family, example_isometry_family,
                      make_circle, rotation_action)


@dataclass
class CheckResult:
    key: int
    name: str
    passed: bool
    seconds: float
    limit: float
    detail: dict = field(default_factory=dict)

    @property
    def line(self):
        status = "PASS" if self.passed and self.seconds < self.limit else "FAIL"
        return f"[{self.key:2d}] {self.name}: {status} ({self.seconds:.1f}s / {self.limit:.0f}s) {self.summary()}"

    def summary(self):
        return ", ".join(f"{k}={_fmt(v)}" for k, v in self.detail.items() if not k.startswith("_"))


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + " ".join(_fmt(x) for x in v) + "]"
    return str(v)


def random_integer_metric(rng, n, top=4):
    D = rng.integers(1, top + 1, size=(n, n)).astype(float)
    D = np.triu(D, 1)
    D = D + D.T
    for k in range(n):
        D = np.minimum(D, D[:, k:k + 1] + D[k:k + 1, :])
    return D


def random_plane_space(rng, n):
    P = rng.random((n, 2))
    return FiniteMetricSpace(np.sqrt(((P[:, None] - P[None]) ** 2).sum(-1)))


def fixture_spaces(count=30, seed=0):
    rng = np.random.default_rng(seed)
    out = [FiniteMetricSpace([[0.0]]), FiniteMetricSpace([[0, 1], [1, 0]]),
           FiniteMetricSpace([[0, 2], [2, 0]])]
    while len(out) < count:
        out.append(FiniteMetricSpace(random_integer_metric(rng, int(rng.integers(3, 6)))))
    return out


def _timed(key, name, limit, fn):
    t = time.perf_counter()
    try:
        passed, detail = fn()
    except BoundViolation as exc:          # guarded inequality failed inside a routine
        passed, detail = False, {"error": str(exc)}
    return CheckResult(key, name, bool(passed), time.perf_counter() - t, limit, detail)


# ---------------------------------------------------------------- checks

def check_gh_oracle(seed=0):
    def run():
        spaces = fixture_spaces(seed=seed)
        worst, pairs = 0.0, 0
        for i in range(len(spaces)):
            for j in range(i, len(spaces)):
                a = mc.gh_exact(spaces[i], spaces[j])
                b = gh_bruteforce(spaces[i].dist, spaces[j].dist)
                worst = max(worst, abs(a - b))
                pairs += 1
        return worst <= 1e-12, {"pairs": pairs, "max_diff": worst}
    return _timed(1, "exact GH equals brute-force enumeration", 10, run)


def check_gha_relations(seed=0, trials=100):
    def run():
        rng = np.random.default_rng(seed)
        bad = 0
        for _ in range(trials):
            X = random_plane_space(rng, int(rng.integers(1, 7)))
            Y = random_plane_space(rng, int(rng.integers(1, 7)))
            certs = mc.gha_search(X, Y, budget=400, seed=int(rng.integers(1 << 30)))
            gh = mc.gh_exact(X, Y)
            if not all(gh <= 2 * c.epsilon + TOL and c.epsilon >= gh - TOL for c in certs):
                bad += 1
        return bad == 0, {"pairs": trials, "violations": bad}
    return _timed(2, "GHA certificates bracket exact GH", 30, run)


def check_approx_inverse(seed=0, trials=200):
    def run():
        rng = np.random.default_rng(seed)
        done = 0
        for _ in range(trials):
            X = random_plane_space(rng, int(rng.integers(1, 11)))
            Y = random_plane_space(rng, int(rng.integers(1, 11)))
            f = PointMap(X, Y, rng.integers(0, Y.n, X.n))
            eps = mc.certify(f).epsilon
            mc.approx_inverse(f, eps)        # raises on any of the three bounds
            done += 1
        return done == trials, {"instances": done}
    return _timed(3, "approximation inverse bounds 3e / 2e / e", 10, run)


def check_example_family(ns=(2, 4, 8), mesh=1 / 32):
    def run():
        rows, ok = [], True
        for n in ns:
            sc = example_family(n, mesh)
            a, b = sc.actions["alpha"], sc.actions["beta"]
            h, f = sc.maps["h"], sc.maps["f"]
            m = sc.measured
            iso = max(m["h_distortion"], m["h_net_defect"], m["f_distortion"], m["f_net_defect"])
            eq = max(m["f_equivariant_defect"], equivariant_defect(h, b, a))
            lim = sc.bound + sc.slack + TOL
            ok &= iso <= lim and eq <= lim and sc.slack < 0.15
            rows.append((n, sc.bound, iso, eq))
        return ok, {"slack": sc.slack, "n": [r[0] for r in rows], "bound": [r[1] for r in rows],
                    "isometry": [r[2] for r in rows], "equivariant": [r[3] for r in rows]}
    return _timed(4, "torus x small circles: defects <= sqrt(2) pi / n + slack", 60, run)


def second_family(n, mesh=1 / 8):
    """alpha: <A> acting on the torus grid, beta: Z2 on Y with (1,0) -> rotation x A
    and (0,1) -> rotation x identity."""
    sc = example_family(n, mesh, matrices={"a": SECOND_A, "b": np.eye(2, dtype=int)})
    X = sc.spaces["X"]
    alpha = ToralSystem({"a": SECOND_A}).grid_action(sc.params["m"], space=X)
    return sc, alpha, sc.actions["beta"]


def check_dgh1_example(ns=(2, 4), mesh=1 / 8, budget=200):
    def run():
        rows, ok = [], True
        for n in ns:
            sc, alpha, beta = second_family(n, mesh)
            rho = Homomorphism(GeneratedGroup.Z(), beta.group, {"a": (1, 0)})
            cert = dGH1_upper(alpha, beta, budget=budget, R_G=6, R_H=1,
                              seeds=[sc.maps["h"]], rhos=[rho])
            lim = sc.bound + sc.slack + TOL
            ok &= cert.epsilon <= lim
            rows.append((n, sc.bound, cert.epsilon, cert.rho.to_dict()["a"]))
        return ok, {"n": [r[0] for r in rows], "bound": [r[1] for r in rows],
                    "certified": [r[2] for r in rows], "window": "ball(6)"}
    return _timed(5, "homomorphism-twisted distance certificate <= sqrt(2) pi / n + slack", 120, run)


def check_shadowing(deltas=(1e-2, 1e-3, 1e-4), radius=50, seed=0):
    def run():
        system = ToralSystem({"a": CAT_MAP}, name="cat")
        ratios, agree, ok = [], 0.0, True
        for d in deltas:
            po = make_pseudo_orbit(system, d, window=radius, seed=seed)
            tr = shadow_hyperbolic_toral(po)
            e = _errors_along(CAT_MAP, po.values[np.argsort(po.window)])
            z_oracle = shadow_dense_solve(CAT_MAP, e)
            agree = max(agree, float(np.abs(z_oracle - tracing_displacements(CAT_MAP, e)).max()))
            ok &= tr.epsilon <= tr.constant * d + tr.truncation + TOL
            ratios.append(tr.epsilon / d)
        spread = (max(ratios) - min(ratios)) / min(ratios)
        ok &= agree <= 1e-8 and spread <= 0.05
        return ok, {"steps": 2 * radius, "ratios": ratios, "spread": spread,
                    "oracle_diff": agree, "C": tr.constant}
    return _timed(6, "cat-map tracing within C delta + truncation", 10, run)


def _noisy_coords(U, radius, seed):
    rng = np.random.default_rng(seed)
    ang = rng.uniform(0, 2 * np.pi, len(U))
    r = radius * rng.random(len(U))
    return np.mod(U + np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1), 1.0)


def check_conjugacy(n=4, mesh=1 / 8, delta=0.01, window=20, seed=0):
    def run():
        sc = example_family(n, mesh, matrices={"a": CAT_MAP})
        X, beta, system = sc.spaces["X"], sc.actions["beta"], sc.system
        U0 = X.coords[sc.maps["h"].image]
        rho = Homomorphism(GeneratedGroup.Z(), GeneratedGroup.Z(), {"a": 1})
        step = (1 + system.lipschitz) * delta / 2
        noisy = build_conjugacy(_noisy_coords(U0, delta / 2, seed), rho, system, beta,
                                step * (1 + 1e-6), window)
        exact = build_conjugacy(U0, rho, system, beta, 1e-12, window)
        ok = (noisy.report["d_sup_h_u"] <= noisy.eps1 + TOL
              and noisy.equivariance_defect <= noisy.report["truncation"] + TOL
              and exact.equivariance_defect <= 1e-9)
        return ok, {"eps1": noisy.eps1, "d_sup_h_u": noisy.report["d_sup_h_u"],
                    "defect": noisy.equivariance_defect, "truncation": noisy.report["truncation"],
                    "exact_defect": exact.equivariance_defect}
    return _timed(7, "conjugacy from tracing points", 60, run)


def _random_measure(rng, X, k):
    w = np.zeros(X.n)
    w[rng.choice(X.n, size=k, replace=False)] = rng.random(k) + 0.05
    return ws.DiscreteMeasure(X, w)


def check_wasserstein_oracle(seed=0, pairs=50, triples=200):
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(pairs):
            X = random_plane_space(rng, 6)
            k1 = int(rng.integers(1, 7))
            k2 = int(rng.integers(1, min(6, 8 - k1) + 1))     # vertex oracle caps n + m at 8
            mu, nu = _random_measure(rng, X, k1), _random_measure(rng, X, k2)
            p = int(rng.integers(1, 3))
            v, _ = ws.wasserstein(mu, nu, p)
            C = X.pairwise(mu.support, nu.support) ** p
            o = transport_vertex_oracle(mu.weights[mu.support], nu.weights[nu.support], C)
            worst = max(worst, abs(v ** p - o))
        bad = 0
        for _ in range(triples):
            X = random_plane_space(rng, 6)
            a, b, c = (_random_measure(rng, X, int(rng.integers(1, 7))) for _ in range(3))
            p = int(rng.integers(1, 3))
            ab, ba = ws.wasserstein(a, b, p)[0], ws.wasserstein(b, a, p)[0]
            bc, ac = ws.wasserstein(b, c, p)[0], ws.wasserstein(a, c, p)[0]
            aa = ws.wasserstein(a, a, p)[0]
            distinct = not np.array_equal(a.weights, b.weights)
            if ab != ba or ac > ab + bc + TOL or aa != 0 or (distinct and ab <= 0):
                bad += 1
        return worst <= 1e-9 and bad == 0, {"max_diff": worst, "axiom_failures": bad}
    return _timed(8, "exact transport equals vertex enumeration; metric axioms", 30, run)


def check_contraction(seed=0, trials=1000):
    def run():
        rng = np.random.default_rng(seed)
        bad = 0
        for _ in range(trials):
            X = random_plane_space(rng, int(rng.integers(1, 7)))
            Y = random_plane_space(rng, int(rng.integers(1, 7)))
            f = PointMap(X, Y, rng.integers(0, Y.n, X.n))
            g = PointMap(X, Y, rng.integers(0, Y.n, X.n))
            mu = ws.DiscreteMeasure(X, rng.random(X.n) + 1e-3)
            try:
                ws.contraction_check(f, g, mu, int(rng.integers(1, 3)))
            except BoundViolation:
                bad += 1
        return bad == 0, {"instances": trials, "violations": bad}
    return _timed(9, "pushforward contraction inequality", 60, run)


def check_lifted_gha(n=4, mesh=1 / 8, pairs=50, p=1, seed=0):
    def run():
        sc = example_family(n, mesh)
        f = sc.maps["f"]
        eps = sc.bound
        rng = np.random.default_rng(seed)
        X = f.source
        measures = [ws.DiscreteMeasure(X, rng.dirichlet(np.ones(X.n))) for _ in range(2 * pairs)]
        et, rep = ws.lift_gha(f, eps, p, measures,
                              actions=(sc.actions["alpha"], sc.actions["beta"]))
        ok = rep.pair_defect <= et + TOL and rep.net_defect <= et + TOL and \
            rep.equivariant_defect <= et + TOL and not rep.violations
        return ok, {"eps": eps, "eps_tilde": et, "pair_defect": rep.pair_defect,
                    "net_defect": rep.net_defect, "equivariant": rep.equivariant_defect,
                    "pairs": rep.pairs}
    return _timed(10, "lifted GHA on measures within eps~", 120, run)


def check_folner(points=64, step=3, ns=(4, 8, 16, 32)):
    def run():
        C = make_circle(1.0, points)
        act = rotation_action(C, {"a": step})
        mu = ws.DiscreteMeasure.dirac(C, 0)
        defects = [ws.invariance_defect(ws.folner_average(mu, act, n=n), act) for n in ns]
        mono = all(b <= a + TOL for a, b in zip(defects, defects[1:]))
        limit = 2 * C.diameter / 32 + 2 * np.pi / points
        return mono and defects[-1] <= limit, {"n": list(ns), "defects": defects, "limit": limit}
    return _timed(11, "Folner averages approach invariance", 30, run)


def check_isometry_trend(ns=(2, 4, 8), mesh=1 / 8, samples=8, seed=0):
    def run():
        vals, ok = [], True
        for n in ns:
            sc = example_isometry_family(n, mesh)
            d, defect, _ = ws.invariant_diameter(sc.actions["alpha_n"], 1, samples, seed=seed)
            ok &= d <= np.pi / n + defect + TOL
            vals.append(d)
        ok &= all(b < a for a, b in zip(vals, vals[1:]))
        return ok, {"n": list(ns), "diameters": vals, "bounds": [np.pi / n for n in ns]}
    return _timed(12, "invariant-measure diameter shrinks with the fibre", 60, run)


ALL = [check_gh_oracle, check_gha_relations, check_approx_inverse, check_example_family,
       check_dgh1_example, check_shadowing, check_conjugacy, check_wasserstein_oracle,
       check_contraction, check_lifted_gha, check_folner, check_isometry_trend]


def run_all(n=None, mesh=None, only=None):
    out = []
    for k, fn in enumerate(ALL, start=1):
        if only and k not in only:
            continue
        kw = {}
        if fn is check_example_family:
            if n is not None:
                kw["ns"] = (n,)
            if mesh is not None:
                kw["mesh"] = mesh
        out.append(fn(**kw))
    return out
