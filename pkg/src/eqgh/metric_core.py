"""Finite metric spaces, Hausdorff and Gromov-Hausdorff distances, and
epsilon-isometry machinery (approximation inverses, nets, cellwise maps).

Every bound assertion adds ``TOL`` to its right-hand side.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import TOL, BoundViolation, DomainError, PreconditionError, RefusalError, require

__all__ = [
    "FiniteMetricSpace", "ProductSpace", "PointMap", "Correspondence", "GhaCertificate",
    "hausdorff_distance", "distortion", "net_defect", "covering_radius", "is_eps_isometry",
    "gh_exact", "gha_search", "approx_inverse", "net_approx_bound", "eps_net", "cellwise_gha",
    "identity_map", "compose",
]

_ids = itertools.count()
_CHUNK = 1 << 22        # max matrix entries materialized at once
DENSE_LIMIT = 4096      # products larger than this never build a full matrix
PRODUCT_LIMIT = 20000


def _fresh_id(prefix="space"):
    return f"{prefix}-{next(_ids)}"


def _idx(a, n=None):
    a = np.asarray(a, dtype=np.int64).reshape(-1)
    if n is not None and a.size and (a.min() < 0 or a.max() >= n):
        raise DomainError("index out of range")
    return a


# ---------------------------------------------------------------- spaces

class FiniteMetricSpace:
    """n points with a dense symmetric distance matrix.

    The metric axioms are verified on construction unless ``check=False``.
    ``coords`` is optional geometric data (e.g. angles) used by generators.
    """

    def __init__(self, dist, points=None, name=None, coords=None, check=True):
        d = np.array(dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] == 0:
            raise DomainError("distance matrix must be square and non-empty")
        self._dist = d
        self.n = d.shape[0]
        self.points = list(points) if points is not None else list(range(self.n))
        if len(self.points) != self.n:
            raise DomainError("points and dist disagree in size")
        self.name = name or _fresh_id()
        self.coords = None if coords is None else np.asarray(coords, dtype=float)
        self._diam = None
        if check:
            self._check_axioms()

    def _check_axioms(self):
        d = self._dist
        if not np.all(np.isfinite(d)):
            raise DomainError("distances must be finite")
        if np.any(np.abs(np.diag(d)) > 0):
            raise DomainError("diagonal must be zero")
        if not np.array_equal(d, d.T):
            if np.max(np.abs(d - d.T)) > TOL:
                raise DomainError("distance matrix is not symmetric")
            self._dist = d = (d + d.T) / 2
        off = d[~np.eye(self.n, dtype=bool)]
        if off.size and off.min() <= 0:
            raise DomainError("distinct points must have positive distance")
        for k in range(self.n):
            if np.any(d > d[:, k, None] + d[None, k, :] + TOL):
                raise DomainError("triangle inequality fails")

    @property
    def dist(self):
        return self._dist

    @property
    def diameter(self):
        if self._diam is None:
            self._diam = float(self._dist.max())
        return self._diam

    def pairwise(self, I, J):
        """Distance block between index arrays I and J."""
        return self._dist[np.ix_(_idx(I), _idx(J))]

    def d(self, I, J):
        """Elementwise distances d(I[k], J[k])."""
        return self._dist[_idx(I), _idx(J)]

    def column(self, j):
        return self._dist[:, j]

    def same_as(self, other):
        return self is other or (self.name == other.name and self.n == other.n)

    def to_dict(self):
        return {"id": self.name, "points": [str(p) for p in self.points], "dist": self.dist.tolist()}

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, n={self.n})"


class ProductSpace(FiniteMetricSpace):
    """l2-product of finite metric spaces, indexed in row-major order.

    The matrix is built lazily and only below DENSE_LIMIT points; everything
    else goes through ``pairwise``/``d``, which work factor by factor.
    """

    def __init__(self, factors, name=None):
        flat = []
        for f in factors:
            flat.extend(f.factors if isinstance(f, ProductSpace) else [f])
        self.factors = flat
        self.sizes = tuple(f.n for f in flat)
        self.n = int(np.prod(self.sizes))
        if self.n > PRODUCT_LIMIT:
            raise DomainError(f"product has {self.n} points, limit is {PRODUCT_LIMIT}")
        self.name = name or _fresh_id("product")
        self.points = None
        self._sq = [f.dist ** 2 for f in flat]
        self._dist = None
        self._diam = float(np.sqrt(sum(f.diameter ** 2 for f in flat)))
        cs = [f.coords for f in flat]
        if all(c is not None and c.ndim == 1 for c in cs):
            grids = np.meshgrid(*cs, indexing="ij")
            self.coords = np.stack([g.reshape(-1) for g in grids], axis=1)
        else:
            self.coords = None

    @property
    def dist(self):
        if self._dist is None:
            if self.n > DENSE_LIMIT:
                raise RefusalError(f"dense matrix for {self.n} points refused")
            a = np.arange(self.n)
            self._dist = self.pairwise(a, a)
        return self._dist

    @property
    def diameter(self):
        return self._diam

    def split(self, I):
        return np.unravel_index(_idx(I), self.sizes)

    def index(self, *parts):
        return np.ravel_multi_index(tuple(np.asarray(p) for p in parts), self.sizes)

    def pairwise(self, I, J):
        if self._dist is not None:
            return self._dist[np.ix_(_idx(I), _idx(J))]
        J = _idx(J)
        if J.size == self.n and J[0] == 0 and np.array_equal(J, np.arange(self.n)):
            return self._rows(I)
        Is, Js = self.split(I), self.split(J)
        acc = np.zeros((len(Is[0]), len(Js[0])))
        for sq, a, b in zip(self._sq, Is, Js):
            acc += sq[np.ix_(a, b)]
        return np.sqrt(acc)

    def _rows(self, I):
        # full rows by broadcasting each factor over its own axis
        Is = self.split(I)
        k = len(self.sizes)
        acc = np.zeros((len(Is[0]),) + self.sizes)
        for a, (sq, ia) in enumerate(zip(self._sq, Is)):
            shape = [len(ia)] + [1] * k
            shape[a + 1] = self.sizes[a]
            acc += sq[ia].reshape(shape)
        return np.sqrt(acc.reshape(len(Is[0]), self.n))

    def d(self, I, J):
        if self._dist is not None:
            return self._dist[_idx(I), _idx(J)]
        Is, Js = self.split(I), self.split(J)
        acc = np.zeros(len(Is[0]))
        for sq, a, b in zip(self._sq, Is, Js):
            acc += sq[a, b]
        return np.sqrt(acc)

    def column(self, j):
        return self.pairwise(np.arange(self.n), [j])[:, 0]

    def to_dict(self):
        return {"id": self.name, "product": [f.name for f in self.factors]}


# ---------------------------------------------------------------- maps

@dataclass
class PointMap:
    source: FiniteMetricSpace
    target: FiniteMetricSpace
    image: np.ndarray

    def __post_init__(self):
        self.image = _idx(self.image)
        if self.image.size != self.source.n:
            raise DomainError("image length must equal source size")
        if self.image.min() < 0 or self.image.max() >= self.target.n:
            raise DomainError("image entry is not a target index")

    def __call__(self, i):
        return self.image[i]

    def to_dict(self):
        return {"source": self.source.name, "target": self.target.name, "map": self.image.tolist()}


def identity_map(X):
    return PointMap(X, X, np.arange(X.n))


def compose(g, f):
    """g after f."""
    if not f.target.same_as(g.source):
        raise DomainError("maps do not compose")
    return PointMap(f.source, g.target, g.image[f.image])


@dataclass
class Correspondence:
    X: FiniteMetricSpace
    Y: FiniteMetricSpace
    pairs: frozenset

    def __post_init__(self):
        xs = {p[0] for p in self.pairs}
        ys = {p[1] for p in self.pairs}
        if xs != set(range(self.X.n)) or ys != set(range(self.Y.n)):
            raise DomainError("correspondence must cover both spaces")

    @classmethod
    def from_maps(cls, f, g):
        pairs = {(i, int(f.image[i])) for i in range(f.source.n)}
        pairs |= {(int(g.image[j]), j) for j in range(g.source.n)}
        return cls(f.source, f.target, frozenset(pairs))

    def distortion(self):
        p = np.array(sorted(self.pairs))
        dx = self.X.pairwise(p[:, 0], p[:, 0])
        dy = self.Y.pairwise(p[:, 1], p[:, 1])
        return float(np.abs(dx - dy).max())


@dataclass
class GhaCertificate:
    epsilon: float
    forward: PointMap
    distortion: float
    net_defect: float
    backward: PointMap | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"epsilon": self.epsilon, "distortion": self.distortion,
               "net_defect": self.net_defect, "map": self.forward.image.tolist(),
               "source": self.forward.source.name, "target": self.forward.target.name}
        if self.backward is not None:
            out["backward_map"] = self.backward.image.tolist()
        out.update(self.extra)
        return out


# ---------------------------------------------------------------- distances

def hausdorff_distance(space, A, B):
    A, B = _idx(A, space.n), _idx(B, space.n)
    if A.size == 0 or B.size == 0:
        raise DomainError("Hausdorff distance needs non-empty sets")
    D = space.pairwise(A, B)
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def _row_chunks(n, width):
    step = max(1, _CHUNK // max(width, 1))
    for s in range(0, n, step):
        yield np.arange(s, min(n, s + step))


def map_distortion(src, tgt, image):
    """Distortion of the index map ``image`` from src to tgt."""
    image = _idx(image)
    allx = np.arange(src.n)
    worst = 0.0
    for I in _row_chunks(src.n, src.n):
        E = np.abs(tgt.pairwise(image[I], image) - src.pairwise(I, allx))
        worst = max(worst, float(E.max()))
    return worst


def image_net_defect(tgt, image):
    """Smallest r with every target point within r of the image."""
    U = np.unique(_idx(image))
    worst = 0.0
    for I in _row_chunks(tgt.n, U.size):
        worst = max(worst, float(tgt.pairwise(I, U).min(axis=1).max()))
    return worst


def covering_radius(space, S):
    return image_net_defect(space, S)


def _check_pair(f):
    if not isinstance(f, PointMap):
        raise DomainError("expected a PointMap")


def distortion(f):
    _check_pair(f)
    return map_distortion(f.source, f.target, f.image)


def net_defect(f):
    _check_pair(f)
    return image_net_defect(f.target, f.image)


def sup_distance(f, g):
    """max_x d(f(x), g(x)) for maps with the same source and target."""
    if not (f.source.same_as(g.source) and f.target.same_as(g.target)):
        raise DomainError("maps must share source and target")
    return float(f.target.d(f.image, g.image).max())


def certify(f, backward=None):
    dis, nd = distortion(f), net_defect(f)
    return GhaCertificate(max(dis, nd), f, dis, nd, backward)


def is_eps_isometry(f, eps):
    if eps < 0:
        raise DomainError("epsilon must be non-negative")
    cert = certify(f)
    return cert.epsilon <= eps + TOL, cert


# ---------------------------------------------------------------- exact GH

def gh_exact(X, Y, budget=None):
    """Exact GH distance by branch-and-bound over correspondences.

    Returns a float when the search finishes, otherwise a (lower, upper)
    tuple. Spaces above 8 points need an explicit node ``budget``.
    """
    if max(X.n, Y.n) > 8 and budget is None:
        raise RefusalError("exact GH refused above 8 points without a budget")
    lo, hi, done = _gh_branch_and_bound(X, Y, budget)
    return hi / 2 if done else (lo / 2, hi / 2)


def _gh_branch_and_bound(X, Y, budget):
    n, m = X.n, Y.n
    dx, dy = X.dist, Y.dist
    # K[(x,y),(x',y')] = |dX(x,x') - dY(y,y')| over pairs p = x*m + y
    K = np.abs(dx[:, None, :, None] - dy[None, :, None, :]).reshape(n * m, n * m)
    best = max(X.diameter, Y.diameter)     # X x Y is always a correspondence
    if n == 1 or m == 1:
        return best, best, True
    state = {"best": best, "nodes": 0, "frontier": np.inf, "stop": False}
    pairs_of_x = [np.arange(x * m, x * m + m) for x in range(n)]
    pairs_of_y = [np.arange(y, n * m, m) for y in range(m)]

    def bound_options(cur, curmax, cx, cy):
        grid = curmax.reshape(n, m)
        rows, cols = grid.min(axis=1), grid.min(axis=0)
        rows = np.where(cx, -np.inf, rows)
        cols = np.where(cy, -np.inf, cols)
        return rows, cols

    def rec(cur, curmax, cx, cy):
        if cx.all() and cy.all():
            if cur < state["best"]:
                state["best"] = cur
            return
        if state["stop"]:
            state["frontier"] = min(state["frontier"], cur)
            return
        state["nodes"] += 1
        if budget is not None and state["nodes"] > budget:
            state["stop"] = True
            state["frontier"] = min(state["frontier"], cur)
            return
        rows, cols = bound_options(cur, curmax, cx, cy)
        r, c = rows.max(), cols.max()
        lb = max(cur, r, c)
        if lb >= state["best"]:
            return
        # branch on the most constrained uncovered element, smallest index on ties
        if r >= c:
            opts = pairs_of_x[int(np.argmax(rows))]
        else:
            opts = pairs_of_y[int(np.argmax(cols))]
        costs = np.maximum(curmax[opts], cur)
        for k in np.argsort(costs, kind="stable"):
            p = int(opts[k])
            val = float(costs[k])
            if val >= state["best"]:
                break
            if state["stop"]:
                state["frontier"] = min(state["frontier"], val)
                continue
            x, y = divmod(p, m)
            nx, ny = cx.copy(), cy.copy()
            nx[x] = ny[y] = True
            rec(val, np.maximum(curmax, K[p]), nx, ny)

    rec(0.0, np.zeros(n * m), np.zeros(n, bool), np.zeros(m, bool))
    best = state["best"]
    if state["stop"]:
        return min(best, state["frontier"]), best, False
    return best, best, True


# ---------------------------------------------------------------- GHA search

def gha_search(X, Y, budget=2000, seed=0):
    """Search for epsilon-GHAs in both directions; returns (forward, backward)
    certificates whose common epsilon is the larger of the two."""
    from ._search import search_map
    if budget <= 0:
        raise DomainError("budget must be positive")
    f, _ = search_map(X, Y, budget=budget, seed=seed)
    g, _ = search_map(Y, X, budget=budget, seed=seed + 1)
    cf, cg = certify(PointMap(X, Y, f)), certify(PointMap(Y, X, g))
    eps = max(cf.epsilon, cg.epsilon)
    return (GhaCertificate(eps, cf.forward, cf.distortion, cf.net_defect, cg.forward),
            GhaCertificate(eps, cg.forward, cg.distortion, cg.net_defect, cf.forward))


# ---------------------------------------------------------------- inverses, nets

def approx_inverse(f, eps):
    ok, _ = is_eps_isometry(f, eps)
    if not ok:
        raise PreconditionError("map is not an epsilon-isometry")
    X, Y = f.source, f.target
    inv = np.empty(Y.n, dtype=np.int64)
    for I in _row_chunks(Y.n, X.n):
        inv[I] = np.argmin(Y.pairwise(I, f.image), axis=1)
    fp = PointMap(Y, X, inv)
    require(distortion(fp) <= 3 * eps + TOL, "inverse distortion above 3 eps")
    require(X.d(np.arange(X.n), inv[f.image]).max() <= 2 * eps + TOL, "x round trip above 2 eps")
    require(Y.d(np.arange(Y.n), f.image[inv]).max() <= eps + TOL, "y round trip above eps")
    return fp


def eps_net(X, eps):
    """Greedy farthest-point eps-net, starting at index 0."""
    if eps <= 0:
        raise DomainError("epsilon must be positive")
    net = [0]
    near = X.column(0).copy()
    while near.max() > eps:
        j = int(np.argmax(near))
        net.append(j)
        near = np.minimum(near, X.column(j))
    return net


def net_approx_bound(X, Y, netX, netY, delta):
    """Bound 2*eps + delta on d_GH from matched nets with distance mismatch below delta."""
    netX, netY = _idx(netX, X.n), _idx(netY, Y.n)
    if netX.size != netY.size or netX.size == 0:
        raise PreconditionError("nets must be non-empty and of equal size")
    gap = np.abs(X.pairwise(netX, netX) - Y.pairwise(netY, netY)).max()
    if not gap < delta:
        raise PreconditionError(f"matched distances differ by {gap} >= delta")
    eps = max(covering_radius(X, netX), covering_radius(Y, netY))
    bound = 2 * eps + delta
    if max(X.n, Y.n) <= 8:
        exact = gh_exact(X, Y)
        require(exact < bound + TOL, f"d_GH {exact} exceeds net bound {bound}")
    return bound


def cellwise_gha(f, eps, net):
    """Map constant on cells; the cell of x is its first net point within eps."""
    X = f.source
    net = _idx(net, X.n)
    if covering_radius(X, net) > eps + TOL:
        raise PreconditionError("net is not an eps-net of the source")
    if not is_eps_isometry(f, eps)[0]:
        raise PreconditionError("map is not an epsilon-isometry")
    cell = np.empty(X.n, dtype=np.int64)
    for I in _row_chunks(X.n, net.size):
        within = X.pairwise(I, net) <= eps + TOL
        cell[I] = net[np.argmax(within, axis=1)]
    f1 = PointMap(X, f.target, f.image[cell])
    require(distortion(f1) <= 5 * eps + TOL, "cellwise distortion above 5 eps")
    require(net_defect(f1) <= 3 * eps + TOL, "cellwise net defect above 3 eps")
    require(sup_distance(f, f1) <= 2 * eps + TOL, "cellwise map moved more than 2 eps")
    return f1
