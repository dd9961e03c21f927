"""Exact discrete optimal transport and the measure-level constructions built
on it: pushforwards, the contraction inequality, lifted GH approximations,
Folner averages and invariant measures.

The transport solver is a primal network simplex on the bipartite
transportation graph (MODI potentials, Dantzig pricing with a Bland fallback
after long degenerate runs).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import metric_core as mc
from .errors import TOL, DomainError, PreconditionError, RefusalError, require
from .group_actions import equivariant_defect

__all__ = [
    "DiscreteMeasure", "Coupling", "FolnerSequence", "transport_cost", "wasserstein",
    "transport_plan", "pushforward", "contraction_check", "lifted_epsilon", "lift_gha",
    "folner_average", "invariance_defect", "amenable_net_constant", "invariant_net_lift",
    "invariant_diameter", "averaging_defect_bound",
]


# ---------------------------------------------------------------- measures

class DiscreteMeasure:
    def __init__(self, space, weights):
        w = np.array(weights, dtype=float).reshape(-1)
        if w.size != space.n:
            raise DomainError("one weight per point is required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("weights must be finite and non-negative")
        total = w.sum()
        if total <= 0:
            raise DomainError("weights must have positive mass")
        if abs(total - 1) > 1e-12:
            w = w / total
        self.space = space
        self.weights = w

    @classmethod
    def dirac(cls, space, i):
        w = np.zeros(space.n)
        w[i] = 1.0
        return cls(space, w)

    @classmethod
    def uniform(cls, space, support=None):
        w = np.zeros(space.n)
        w[np.arange(space.n) if support is None else np.asarray(support)] = 1.0
        return cls(space, w)

    @property
    def support(self):
        return np.nonzero(self.weights > 0)[0]

    def to_dict(self):
        return {"space": self.space.name, "weights": self.weights.tolist()}


@dataclass
class Coupling:
    matrix: np.ndarray
    mu: DiscreteMeasure
    nu: DiscreteMeasure

    def __post_init__(self):
        P = np.asarray(self.matrix, float)
        if P.shape != (self.mu.space.n, self.nu.space.n) or np.any(P < -1e-12):
            raise DomainError("coupling must be a non-negative matrix over the two spaces")
        if np.abs(P.sum(axis=1) - self.mu.weights).max() > 1e-9 or \
                np.abs(P.sum(axis=0) - self.nu.weights).max() > 1e-9:
            raise DomainError("coupling marginals do not match")
        self.matrix = np.clip(P, 0, None)


def transport_cost(pi, d=None, p=1):
    """sum_ij pi_ij d(i, j)^p. ``d`` defaults to the measures' space metric."""
    if not isinstance(pi, Coupling):
        raise DomainError("expected a Coupling")
    if d is None:
        D = pi.mu.space.dist
    else:
        D = d.dist if isinstance(d, mc.FiniteMetricSpace) else np.asarray(d, float)
    P = pi.matrix
    nz = P > 0
    return float((P[nz] * D[nz] ** p).sum())


# ---------------------------------------------------------------- network simplex

def _initial_tree(a, b, C):
    """Least-cost start: scan cells by cost, allocate while both lines are open."""
    n, m = C.shape
    ra, rb = a.copy(), b.copy()
    row_open = np.ones(n, bool)
    col_open = np.ones(m, bool)
    rows_left, cols_left = n, m
    basis = []
    flow = {}
    for cell in np.argsort(C, axis=None, kind="stable"):
        if len(basis) == n + m - 1:
            break
        i, j = divmod(int(cell), m)
        if not (row_open[i] and col_open[j]):
            continue
        x = min(ra[i], rb[j])
        basis.append((i, j))
        flow[(i, j)] = x
        ra[i] -= x
        rb[j] -= x
        if rows_left == 1 and cols_left == 1:
            row_open[i] = col_open[j] = False
        elif (ra[i] <= rb[j] and rows_left > 1) or cols_left == 1:
            row_open[i] = False
            rows_left -= 1
            rb[j] = max(rb[j], 0.0)
        else:
            col_open[j] = False
            cols_left -= 1
            ra[i] = max(ra[i], 0.0)
    return flow


def _potentials(n, m, C, adj_r, adj_c):
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    u[0] = 0.0
    todo = deque([("r", 0)])
    while todo:
        kind, k = todo.popleft()
        if kind == "r":
            for j in adj_r[k]:
                if np.isnan(v[j]):
                    v[j] = C[k, j] - u[k]
                    todo.append(("c", j))
        else:
            for i in adj_c[k]:
                if np.isnan(u[i]):
                    u[i] = C[i, k] - v[k]
                    todo.append(("r", i))
    return u, v


def _tree_path(adj_r, adj_c, start_col, end_row):
    """Alternating path of basic cells from column start_col to row end_row."""
    prev = {("c", start_col): None}
    todo = deque([("c", start_col)])
    while todo:
        node = todo.popleft()
        kind, k = node
        if node == ("r", end_row):
            break
        nbrs = [("r", i) for i in adj_c[k]] if kind == "c" else [("c", j) for j in adj_r[k]]
        for nb in nbrs:
            if nb not in prev:
                prev[nb] = node
                todo.append(nb)
    path = []
    node = ("r", end_row)
    while prev[node] is not None:
        p = prev[node]
        cell = (node[1], p[1]) if node[0] == "r" else (p[1], node[1])
        path.append(cell)
        node = p
    return path[::-1]       # cells from the start column outward


def transport_plan(a, b, C, max_iter=None):
    """Optimal plan for supplies a, demands b and costs C (equal totals)."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    C = np.asarray(C, float)
    n, m = C.shape
    if n == 1 or m == 1:
        return np.outer(a, b) / max(a.sum(), 1e-300) if n == 1 else np.outer(a, b) / b.sum()
    flow = _initial_tree(a, b, C)
    adj_r = [set() for _ in range(n)]
    adj_c = [set() for _ in range(m)]
    for i, j in flow:
        adj_r[i].add(j)
        adj_c[j].add(i)
    scale = max(float(np.abs(C).max()), 1.0)
    limit = max_iter or 50 * (n + m) * (n + m)
    degenerate = 0
    for _ in range(limit):
        u, v = _potentials(n, m, C, adj_r, adj_c)
        red = C - u[:, None] - v[None, :]
        if degenerate > n + m:
            neg = np.argwhere(red < -1e-12 * scale)
            if neg.size == 0:
                break
            i, j = map(int, neg[0])
        else:
            k = int(np.argmin(red))
            i, j = divmod(k, m)
            if red[i, j] >= -1e-12 * scale:
                break
        # cycle: entering (i, j) +, then alternate along the tree path j -> i
        path = _tree_path(adj_r, adj_c, j, i)
        minus = path[0::2]
        plus = path[1::2]
        theta = min(flow[c] for c in minus)
        leave = min((c for c in minus if flow[c] <= theta), key=lambda c: c)
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[(i, j)] = theta
        del flow[leave]
        adj_r[leave[0]].discard(leave[1])
        adj_c[leave[1]].discard(leave[0])
        adj_r[i].add(j)
        adj_c[j].add(i)
        degenerate = degenerate + 1 if theta == 0 else 0
    else:
        raise RuntimeError("transport simplex did not converge")
    P = np.zeros((n, m))
    for (i, j), x in flow.items():
        P[i, j] = max(x, 0.0)
    return P


def wasserstein(mu, nu, p=1):
    """Exact W_p and an optimal coupling."""
    if p < 1:
        raise DomainError("p must be at least 1")
    if not mu.space.same_as(nu.space):
        raise DomainError("measures live on different spaces")
    # solve in a canonical orientation so that W(mu, nu) == W(nu, mu) bitwise
    if tuple(nu.weights) < tuple(mu.weights):
        val, cp = wasserstein(nu, mu, p)
        return val, Coupling(cp.matrix.T, mu, nu)
    X = mu.space
    si, sj = mu.support, nu.support
    C = X.pairwise(si, sj) ** p
    P = transport_plan(mu.weights[si], nu.weights[sj], C)
    full = np.zeros((X.n, X.n))
    full[np.ix_(si, sj)] = P
    cost = float((P * C).sum())
    return max(cost, 0.0) ** (1 / p), Coupling(full, mu, nu)


def pushforward(f, mu):
    if not f.source.same_as(mu.space):
        raise DomainError("map does not act on the measure's space")
    w = np.bincount(f.image, weights=mu.weights, minlength=f.target.n)
    out = DiscreteMeasure.__new__(DiscreteMeasure)
    out.space, out.weights = f.target, w
    return out


def contraction_check(f, g, mu, p=1):
    """(W_p^p(f_*mu, g_*mu), sum_i mu_i d(f_i, g_i)^p, lhs <= rhs + TOL)."""
    if not (f.source.same_as(g.source) and f.target.same_as(g.target)):
        raise DomainError("maps must share source and target")
    w, _ = wasserstein(pushforward(f, mu), pushforward(g, mu), p)
    lhs = w ** p
    rhs = float((mu.weights * f.target.d(f.image, g.image) ** p).sum())
    ok = lhs <= rhs + TOL
    require(ok, f"contraction fails: {lhs} > {rhs}")
    return lhs, rhs, ok


# ---------------------------------------------------------------- lifted GHA

def lifted_epsilon(eps, p, diam1, diam2):
    """8 eps + (9 p (D1^(p-1) + D2^(p-1)) eps)^(1/p)."""
    return 8 * eps + (9 * p * (diam1 ** (p - 1) + diam2 ** (p - 1)) * eps) ** (1 / p)


def amenable_net_constant(eps, p, diam1, diam2):
    """28 eps + (9 p (D1^(p-1) + D2^(p-1)) eps)^(1/p)."""
    return 28 * eps + (9 * p * (diam1 ** (p - 1) + diam2 ** (p - 1)) * eps) ** (1 / p)


@dataclass
class LiftReport:
    epsilon_tilde: float
    pair_defect: float = 0.0
    net_defect: float = 0.0
    equivariant_defect: float = 0.0
    equivariant_power_bound: float | None = None
    pairs: int = 0
    witnesses: int = 0
    violations: list = field(default_factory=list)


def lift_gha(f, eps, p, measures, pairs=None, witnesses=None, actions=None, S=None):
    """Checks that f_* behaves as an eps~-GH approximation on sampled measures.

    measures: measures on f's source; pairs: index pairs into measures
    (default: consecutive pairs); witnesses: measures on the target used for
    the net check (default: Diracs at up to 16 target points);
    actions: optional (alpha1, alpha2) for the equivariance check.
    """
    ok, _ = mc.is_eps_isometry(f, eps)
    if not ok:
        raise PreconditionError("map is not an epsilon-isometry")
    X1, X2 = f.source, f.target
    et = lifted_epsilon(eps, p, X1.diameter, X2.diameter)
    rep = LiftReport(et)
    pushed = [pushforward(f, mu) for mu in measures]
    if pairs is None:
        pairs = [(k, k + 1) for k in range(0, len(measures) - 1, 2)]
    for i, j in pairs:
        w0, _ = wasserstein(measures[i], measures[j], p)
        w1, _ = wasserstein(pushed[i], pushed[j], p)
        rep.pair_defect = max(rep.pair_defect, abs(w1 - w0))
        if abs(w1 - w0) > et + TOL:
            rep.violations.append(("pair", i, j, w0, w1))
    rep.pairs = len(pairs)
    if witnesses is None:
        pts = np.unique(np.linspace(0, X2.n - 1, min(16, X2.n)).astype(np.int64))
        witnesses = [DiscreteMeasure.dirac(X2, int(k)) for k in pts]
    finv = mc.approx_inverse(f, eps)
    for nu in witnesses:
        back = pushforward(f, pushforward(finv, nu))
        w, _ = wasserstein(back, nu, p)
        rep.net_defect = max(rep.net_defect, w)
        if w > et + TOL:
            rep.violations.append(("net", w))
    rep.witnesses = len(witnesses)
    if actions is not None:
        a1, a2 = actions
        elems = a1.group.gen_elements() if S is None else S
        eq = equivariant_defect(f, a1, a2, elems)
        rep.equivariant_power_bound = eq
        for mu in measures:
            for s in elems:
                lhs = mc.PointMap(X1, X2, a2.element_map(s)[f.image])
                rhs = mc.PointMap(X1, X2, f.image[a1.element_map(s)])
                w, _ = wasserstein(pushforward(lhs, mu), pushforward(rhs, mu), p)
                rep.equivariant_defect = max(rep.equivariant_defect, w)
                if w > min(et, eq) + TOL:
                    rep.violations.append(("equivariance", w))
    require(not rep.violations, f"lifted GHA bound violated: {rep.violations[:3]}")
    return et, rep


# ---------------------------------------------------------------- Folner averaging

@dataclass(frozen=True)
class FolnerSequence:
    kind: str

    def sets(self, n):
        if self.kind in ("Z", "cyclic"):
            return list(range(n))
        if self.kind == "Z2":
            return [(i, j) for i in range(n) for j in range(n)]
        raise RefusalError(f"no Folner sets for {self.kind}")

    def boundary_ratio(self, n):
        """|s F_n symmetric-difference F_n| / |F_n| for a generator s."""
        return 2 / n


def _orbit_elements(action, n):
    return FolnerSequence(action.group.kind).sets(n)


def folner_average(mu, action, f=None, n=None, F=None):
    """(1/|F|) sum_{g in F} (alpha_g)_* (f_* mu) over the Folner set F_n."""
    if not action.is_group:
        raise RefusalError("averaging needs an invertible action")
    nu = mu if f is None else pushforward(f, mu)
    if not nu.space.same_as(action.space):
        raise DomainError("measure does not live on the action's space")
    F = _orbit_elements(action, n) if F is None else F
    acc = np.zeros(action.space.n)
    for g in F:
        acc += np.bincount(action.element_map(g), weights=nu.weights, minlength=action.space.n)
    return DiscreteMeasure(action.space, acc / len(F))


def invariance_defect(mu, action, S=None, p=1):
    """max over s in S of W_p((alpha_s)_* mu, mu)."""
    if not action.is_group:
        raise PreconditionError("invariance defect needs group mode")
    elems = action.group.gen_elements() if S is None else S
    worst = 0.0
    for s in elems:
        w, _ = wasserstein(pushforward(action.point_map(s), mu), mu, p)
        worst = max(worst, w)
    return worst


def averaging_defect_bound(action, n, p=1):
    """Transport bound diam * (ratio / 2)^(1/p) and the looser mass bound
    2 * diam * ratio for an n-step Folner average."""
    ratio = FolnerSequence(action.group.kind).boundary_ratio(n)
    D = action.space.diameter
    return D * (ratio / 2) ** (1 / p), 2 * D * ratio


@dataclass
class NetLiftReport:
    D: float
    slack: float
    pair_defect: float
    pair_ok: bool
    witness_distance: float | None
    witness_ok: bool | None
    witnesses: int
    note: str


def invariant_net_lift(T, f, eps, p, n, action1, action2, witnesses=(), tol=1e-9):
    """Folner-averaged images of invariant measures and the constant D(eps).

    Pairwise W_p distortion is checked against D + slack; supplied invariant
    witnesses on the target are checked for distance to the image set.
    """
    for mu in T:
        d = invariance_defect(mu, action1, p=p)
        if d > tol:
            raise PreconditionError(f"measure is not invariant (defect {d})")
    ok, _ = mc.is_eps_isometry(f, eps)
    if not ok:
        raise PreconditionError("map is not an epsilon-isometry")
    D = amenable_net_constant(eps, p, f.source.diameter, f.target.diameter)
    images = [folner_average(mu, action2, f, n) for mu in T]
    slack = 2 * tol + averaging_defect_bound(action2, n, p)[0]
    pair = 0.0
    for i in range(len(T)):
        for j in range(i + 1, len(T)):
            w0, _ = wasserstein(T[i], T[j], p)
            w1, _ = wasserstein(images[i], images[j], p)
            pair = max(pair, abs(w1 - w0))
    wdist = None
    for nu in witnesses:
        dmin = min(wasserstein(im, nu, p)[0] for im in images)
        wdist = dmin if wdist is None else max(wdist, dmin)
    rep = NetLiftReport(D, slack, pair, pair <= D + slack + TOL, wdist,
                        None if wdist is None else wdist <= D + slack + TOL, len(witnesses),
                        f"tested against {len(witnesses)} witnesses")
    return images, D, rep


def invariant_diameter(action, p=1, n_samples=8, n=None, seed=0):
    """Largest W_p distance between Folner averages of Diracs.

    W_p is jointly convex and averaging is linear, so the diameter of the
    averaged set is attained at averaged Diracs. Up to ``n_samples`` distinct
    points are used; with every point sampled the value is exact for F_n.
    Returns (estimate, averaging defect bound, n).
    """
    if not action.is_group:
        raise RefusalError("averaging needs an invertible action")
    X = action.space
    if n is None:
        n = _orbit_length(action)
    rng = np.random.default_rng(seed)
    pts = np.arange(X.n) if X.n <= n_samples else np.sort(rng.choice(X.n, n_samples, replace=False))
    avgs = [folner_average(DiscreteMeasure.dirac(X, int(k)), action, n=n) for k in pts]
    best = 0.0
    for i in range(len(avgs)):
        for j in range(i + 1, len(avgs)):
            best = max(best, wasserstein(avgs[i], avgs[j], p)[0])
    return best, averaging_defect_bound(action, n, p)[0], n


def _orbit_length(action, cap=4096):
    """Order of the first generator as a permutation (capped)."""
    a = action.gen_maps[action.group.symbols[0]]
    cur = a.copy()
    ident = np.arange(len(a))
    for k in range(1, cap + 1):
        if np.array_equal(cur, ident):
            return k
        cur = a[cur]
    return cap
