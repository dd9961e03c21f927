"""Concrete spaces and actions: circle and torus grids, products, integer
matrix actions on the torus, rotations, the torus-times-small-circles family,
the rotation family and a windowed full shift."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import metric_core as mc
from .errors import TOL, DomainError, RefusalError, require
from .group_actions import FiniteAction, GeneratedGroup, equivariant_defect
from .metric_core import FiniteMetricSpace, PointMap, ProductSpace

__all__ = [
    "make_circle", "make_torus", "product_space", "ToralSystem", "torus_wrap", "torus_dist",
    "rotation_action", "example_family", "example_isometry_family", "full_shift",
    "EXAMPLE_A", "EXAMPLE_B", "CAT_MAP", "SCENARIOS", "build_scenario", "grid_size",
]

EXAMPLE_A = np.array([[1, 3], [2, 4]])
EXAMPLE_B = np.array([[-3, 3], [2, 0]])
CAT_MAP = np.array([[2, 1], [1, 1]])
SECOND_A = np.array([[1, 2], [3, 4]])


def grid_size(mesh):
    """Accept either a mesh width (< 1) or a point count (>= 1)."""
    m = int(round(mesh)) if mesh >= 1 else int(round(1 / mesh))
    if m < 2:
        raise DomainError("grid needs at least 2 points per circle")
    return m


# ---------------------------------------------------------------- spaces

def make_circle(r, m, name=None):
    """m equally spaced points on a circle of radius r with arc-length metric.
    coords are positions in turns, k/m."""
    if r <= 0:
        raise DomainError("radius must be positive")
    if m < 2:
        raise DomainError("circle grid needs m >= 2")
    k = np.arange(m)
    steps = np.abs(k[:, None] - k[None, :])
    steps = np.minimum(steps, m - steps)
    return FiniteMetricSpace(2 * np.pi * r * steps / m, name=name or f"circle(r={r:g},m={m})",
                             coords=k / m)


def make_torus(m, name=None):
    """m x m grid on R^2/Z^2 with the l2 product of the quotient metrics."""
    c = make_circle(1 / (2 * np.pi), m, name=f"R/Z(m={m})")
    return ProductSpace([c, c], name=name or f"torus(m={m})")


def product_space(*spaces, name=None):
    return ProductSpace(list(spaces), name=name)


def torus_wrap(v):
    v = np.asarray(v, dtype=float)
    return v - np.round(v)


def torus_dist(p, q):
    return np.sqrt((torus_wrap(np.asarray(p) - np.asarray(q)) ** 2).sum(axis=-1))


# ---------------------------------------------------------------- toral systems

@dataclass
class ToralSystem:
    """Integer matrices acting on the torus R^2/Z^2, one per generator.

    Semigroup mode is forced when some determinant is not +-1.
    """
    matrices: dict
    group: GeneratedGroup | None = None
    name: str = "toral"
    inverses: dict = field(default_factory=dict, init=False)

    def __post_init__(self):
        mats = {}
        for s, A in self.matrices.items():
            A = np.asarray(A)
            if A.shape != (2, 2) or not np.all(A == np.round(A)):
                raise DomainError("toral maps need integer 2x2 matrices")
            mats[s] = A.astype(np.int64)
        if self.group is None:
            self.group = GeneratedGroup("Z" if len(mats) == 1 else "Z2", symbols=tuple(mats))
        if set(self.group.symbols) != set(mats):
            raise DomainError("matrices must match the group's generators")
        self.matrices = mats
        if self.group.kind == "Z2":
            a, b = (mats[s] for s in self.group.symbols)
            require(np.array_equal(a @ b, b @ a), "Z2 matrices must commute", DomainError)
        dets = [round(np.linalg.det(A)) for A in mats.values()]
        self.mode = "group" if all(abs(d) == 1 for d in dets) else "semigroup"
        if self.mode == "group":
            for s, A in mats.items():
                inv = np.round(np.linalg.inv(A)).astype(np.int64)
                require(np.array_equal(A @ inv, np.eye(2, dtype=np.int64)), "bad inverse")
                self.inverses[s] = inv

    @property
    def lipschitz(self):
        return max(float(np.linalg.norm(A, 2)) for A in self.matrices.values())

    def element_matrix(self, g):
        G = self.group
        if self.mode == "semigroup" and not G.is_positive(g):
            raise DomainError("negative powers need an invertible system")
        syms = G.symbols

        def pw(s, k):
            M = self.matrices[s] if k >= 0 else self.inverses[s]
            return np.linalg.matrix_power(M, abs(k))

        if G.kind == "Z":
            return pw(syms[0], int(g))
        if G.kind == "Z2":
            return pw(syms[0], g[0]) @ pw(syms[1], g[1])
        raise RefusalError("toral systems support Z and Z2 only")

    def apply(self, g, pts):
        M = self.element_matrix(g)
        return np.mod(np.asarray(pts, float) @ M.T, 1.0)

    def grid_action(self, m, space=None):
        """Exact action on the m x m torus grid (integer matrices map grid to grid)."""
        X = space if space is not None else make_torus(m)
        i, j = np.divmod(np.arange(m * m), m)
        maps = {}
        for s, A in self.matrices.items():
            ni = (A[0, 0] * i + A[0, 1] * j) % m
            nj = (A[1, 0] * i + A[1, 1] * j) % m
            maps[s] = ni * m + nj
        act = FiniteAction(self.group, X, maps, mode=self.mode if self.mode == "semigroup" else None,
                           name=f"{self.name}(m={m})", flags={"snap_error": 0.0})
        return act


def rotation_action(space, steps, group=None):
    """Rotation of a circle grid (or of each factor of a product of circle
    grids) by integer grid steps. ``steps`` maps generator -> step per factor."""
    group = group or GeneratedGroup("Z" if len(steps) == 1 else "Z2", symbols=tuple(steps))
    maps = {}
    for s, st in steps.items():
        if isinstance(space, ProductSpace):
            parts = space.split(np.arange(space.n))
            st = np.broadcast_to(np.asarray(st), (len(parts),))
            moved = [(p + k) % n for p, k, n in zip(parts, st, space.sizes)]
            maps[s] = space.index(*moved)
        else:
            maps[s] = (np.arange(space.n) + int(st)) % space.n
    return FiniteAction(group, space, maps, flags={"snap_error": 0.0})


# ---------------------------------------------------------------- example families

@dataclass
class Scenario:
    name: str
    params: dict
    spaces: dict
    actions: dict
    maps: dict
    bound: float
    slack: float
    measured: dict
    system: object = None

    def to_dict(self):
        return {"scenario": self.name, "params": self.params, "bound": self.bound,
                "slack": self.slack, "measured": self.measured,
                "spaces": {k: v.name for k, v in self.spaces.items()},
                "actions": {k: a.to_dict() for k, a in self.actions.items()},
                "maps": {k: f.to_dict() for k, f in self.maps.items()}}


def example_family(n, mesh=1 / 32, circle_points=4, matrices=None, gamma="rotation", check=True):
    """Torus grid X, Y = S^1_{1/n} x S^1_{1/n} x X with the product action,
    projection h: Y -> X and section f(x) = (s0, s0, x).

    ``matrices`` maps generator -> integer matrix (default: the commuting
    pair EXAMPLE_A, EXAMPLE_B acting as Z2, which runs in semigroup mode).
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    m = grid_size(mesh)
    mats = matrices if matrices is not None else {"a": EXAMPLE_A, "b": EXAMPLE_B}
    system = ToralSystem(mats, name="toral")
    alpha = system.grid_action(m)
    X = alpha.space
    C = make_circle(1 / n, circle_points, name=f"circle(r=1/{n},m={circle_points})")
    Y = ProductSpace([C, C, X], name=f"Y(n={n},m={m})")
    c1, c2, t1, t2 = Y.split(np.arange(Y.n))
    xidx = t1 * m + t2
    syms = system.group.symbols
    maps = {}
    for k, s in enumerate(syms):
        if gamma == "trivial":
            r1, r2 = c1, c2
        else:
            r1 = (c1 + (1 if k == 0 else 0)) % circle_points
            r2 = (c2 + (1 if k == 1 or len(syms) == 1 else 0)) % circle_points
        ax = alpha.gen_maps[s][xidx]
        maps[s] = Y.index(r1, r2, ax // m, ax % m)
    beta = FiniteAction(system.group, Y, maps, mode=alpha.mode, name=f"product(n={n})")
    h = PointMap(Y, X, xidx)
    i, j = np.divmod(np.arange(X.n), m)
    f = PointMap(X, Y, Y.index(np.zeros_like(i), np.zeros_like(i), i, j))
    bound = np.sqrt(2) * np.pi / n
    snap = alpha.flags.get("snap_error", 0.0)
    slack = 2 * snap * system.lipschitz
    sc = Scenario("example-family", {"n": n, "m": m, "circle_points": circle_points,
                                     "matrices": {s: A.tolist() for s, A in system.matrices.items()},
                                     "gamma": gamma, "mode": alpha.mode},
                  {"X": X, "Y": Y}, {"alpha": alpha, "beta": beta}, {"h": h, "f": f},
                  float(bound), float(slack), {}, system)
    if check:
        _check_family(sc, alpha, beta, h, f)
    return sc


def _check_family(sc, alpha, beta, h, f):
    lim = sc.bound + sc.slack + TOL
    ch, cf = mc.certify(h), mc.certify(f)
    eq = equivariant_defect(f, alpha, beta)
    exact = all(np.array_equal(alpha.gen_maps[s][h.image], h.image[beta.gen_maps[s]])
                for s in alpha.group.symbols)
    sc.measured.update({"h_distortion": ch.distortion, "h_net_defect": ch.net_defect,
                        "f_distortion": cf.distortion, "f_net_defect": cf.net_defect,
                        "f_equivariant_defect": eq, "h_conjugates_exactly": exact})
    require(ch.epsilon <= lim, f"h is not a {lim}-isometry ({ch.epsilon})")
    require(cf.epsilon <= lim, f"f is not a {lim}-isometry ({cf.epsilon})")
    require(eq <= lim, f"f equivariant defect {eq} above {lim}")
    require(exact, "h does not intertwine the actions")


def example_isometry_family(n, mesh=1 / 8, step=1, check=True):
    """X_n = S^1_{1/n} x S^1 with the diagonal rotation, X = S^1 with the
    rotation; h_n projects to the second factor, f_n(z) = (s0, z)."""
    if n < 1:
        raise DomainError("n must be >= 1")
    m = grid_size(mesh)
    small = make_circle(1 / n, m, name=f"circle(r=1/{n},m={m})")
    X = make_circle(1.0, m, name=f"circle(r=1,m={m})")
    Xn = ProductSpace([small, X], name=f"Xn(n={n},m={m})")
    alpha_n = rotation_action(Xn, {"a": step})
    alpha = rotation_action(X, {"a": step})
    s, z = Xn.split(np.arange(Xn.n))
    h = PointMap(Xn, X, z)
    f = PointMap(X, Xn, Xn.index(np.zeros(m, np.int64), np.arange(m)))
    sc = Scenario("isometry-family", {"n": n, "m": m, "step": step}, {"X": X, "Xn": Xn},
                  {"alpha": alpha, "alpha_n": alpha_n}, {"h": h, "f": f},
                  float(np.pi / n), 0.0, {})
    if check:
        _check_family(sc, alpha, alpha_n, h, f)
    return sc


# ---------------------------------------------------------------- full shift

def full_shift(a, k, seed=0, limit=4096):
    """Words of length k over a symbols with d(x, y) = 2^-(first differing index).

    The shift drops the first symbol and appends one fixed symbol (drawn once
    from the seed), so the action is a boundary approximation of the true shift.
    """
    if a < 2 or k < 2:
        raise DomainError("need alphabet >= 2 and window >= 2")
    if a ** k > limit:
        raise RefusalError(f"{a}^{k} words exceed the size guard {limit}")
    words = np.array(list(itertools.product(range(a), repeat=k)), dtype=np.int64)
    diff = words[:, None, :] != words[None, :, :]
    first = np.where(diff.any(axis=2), diff.argmax(axis=2), -1)
    D = np.where(first >= 0, 2.0 ** (-first.astype(float)), 0.0)
    X = FiniteMetricSpace(D, points=["".join(map(str, w)) for w in words],
                          name=f"shift(a={a},k={k})", check=False)
    fill = int(np.random.default_rng(seed).integers(a))
    shifted = np.concatenate([words[:, 1:], np.full((len(words), 1), fill)], axis=1)
    image = shifted @ (a ** np.arange(k - 1, -1, -1))
    return FiniteAction(GeneratedGroup.Z(), X, {"a": image}, mode="semigroup",
                        name=f"shift(a={a},k={k})",
                        flags={"boundary_approximate": True, "fill_symbol": fill})


# ---------------------------------------------------------------- registry

def _cat_map(mesh=1 / 32, **_):
    system = ToralSystem({"a": CAT_MAP}, name="cat")
    return system.grid_action(grid_size(mesh))


SCENARIOS = {
    "example-family": lambda n=4, mesh=1 / 32, **kw: example_family(n, mesh),
    "isometry-family": lambda n=4, mesh=1 / 8, **kw: example_isometry_family(n, mesh),
    "cat-map": lambda mesh=1 / 32, **kw: _cat_map(mesh),
    "full-shift": lambda window=6, seed=0, **kw: full_shift(2, window, seed),
}


def build_scenario(name, **params):
    if name not in SCENARIOS:
        raise DomainError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    return SCENARIOS[name](**{k: v for k, v in params.items() if v is not None})
