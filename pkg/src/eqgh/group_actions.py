"""Generated groups, actions on finite metric spaces and equivariant GH distances.

Convention: alpha_{gh} = alpha_g o alpha_h. Elements are plain values:
ints for Z and cyclic(m), int pairs for Z2, tuples of generator indices
for free monoid words.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import metric_core as mc
from ._search import full_score, search_map
from .errors import TOL, DomainError, PreconditionError, RefusalError, require
from .metric_core import FiniteMetricSpace, PointMap

__all__ = [
    "GeneratedGroup", "FiniteAction", "Homomorphism", "EquivariantCertificate", "Egh1Certificate",
    "d_sup", "d_S", "equivariant_defect", "dGH_S_upper", "quasimetric_report",
    "enumerate_homomorphisms", "dGH1_upper", "dGH2_upper", "egh1_score", "is_isometric_action",
    "compose_egh1",
]

KINDS = ("Z", "Z2", "cyclic", "free_monoid")


# ---------------------------------------------------------------- groups

@dataclass(frozen=True)
class GeneratedGroup:
    kind: str
    order: int | None = None      # cyclic(m)
    rank: int | None = None       # free_monoid(k)
    symbols: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RefusalError(f"unsupported group kind {self.kind!r}")
        if self.kind == "cyclic" and (self.order is None or self.order < 1):
            raise DomainError("cyclic group needs order >= 1")
        if self.kind == "free_monoid" and (self.rank is None or self.rank < 1):
            raise DomainError("free monoid needs rank >= 1")
        if self.symbols is None:
            k = {"Z": 1, "Z2": 2, "cyclic": 1}.get(self.kind, self.rank)
            object.__setattr__(self, "symbols", tuple("abcdefghijklmnop"[:k]))

    @classmethod
    def Z(cls):
        return cls("Z")

    @classmethod
    def Z2(cls):
        return cls("Z2")

    @classmethod
    def cyclic(cls, m):
        return cls("cyclic", order=m)

    @classmethod
    def free_monoid(cls, k):
        return cls("free_monoid", rank=k)

    @property
    def generators(self):
        return self.symbols

    @property
    def identity(self):
        return {"Z": 0, "Z2": (0, 0), "cyclic": 0, "free_monoid": ()}[self.kind]

    @property
    def is_group(self):
        return self.kind != "free_monoid"

    def gen(self, sym):
        k = self.symbols.index(sym)
        if self.kind == "Z2":
            return (1, 0) if k == 0 else (0, 1)
        if self.kind == "free_monoid":
            return (k,)
        return 1

    def gen_elements(self):
        return [self.gen(s) for s in self.symbols]

    def normalize(self, g):
        if self.kind == "cyclic":
            return int(g) % self.order
        if self.kind == "Z2":
            return (int(g[0]), int(g[1]))
        if self.kind == "free_monoid":
            return tuple(int(s) for s in g)
        return int(g)

    def multiply(self, g, h):
        if self.kind == "Z":
            return g + h
        if self.kind == "cyclic":
            return (g + h) % self.order
        if self.kind == "Z2":
            return (g[0] + h[0], g[1] + h[1])
        return tuple(g) + tuple(h)

    def inverse(self, g):
        if self.kind == "free_monoid":
            raise DomainError("free monoid elements have no inverse")
        if self.kind == "Z2":
            return (-g[0], -g[1])
        return -g if self.kind == "Z" else (-g) % self.order

    def power(self, g, k):
        if k < 0:
            return self.power(self.inverse(g), -k)
        out = self.identity
        for _ in range(k):
            out = self.multiply(out, g)
        return out

    def is_positive(self, g):
        """True if g is a product of generators (no inverses needed)."""
        if self.kind == "Z":
            return g >= 0
        if self.kind == "Z2":
            return g[0] >= 0 and g[1] >= 0
        return True

    def length(self, g):
        if self.kind == "Z":
            return abs(g)
        if self.kind == "Z2":
            return abs(g[0]) + abs(g[1])
        if self.kind == "cyclic":
            return min(g % self.order, (-g) % self.order)
        return len(g)

    def ball(self, R, positive=False):
        """Elements of word length <= R, sorted by length then value."""
        if R < 0:
            return []
        if self.kind == "Z":
            out = range(0, R + 1) if positive else range(-R, R + 1)
            return sorted(out, key=lambda g: (abs(g), g < 0))
        if self.kind == "Z2":
            lo = 0 if positive else -R
            out = [(i, j) for i in range(lo, R + 1) for j in range(lo, R + 1) if abs(i) + abs(j) <= R]
            return sorted(out, key=lambda g: (self.length(g), g))
        if self.kind == "cyclic":
            m = self.order
            if positive:
                out = sorted({k % m for k in range(R + 1)}, key=lambda g: (min(g, R + 1), g))
                return out
            return sorted({k % m for k in range(-R, R + 1)}, key=lambda g: (self.length(g), g))
        out = []
        for L in range(R + 1):
            out.extend(itertools.product(range(self.rank), repeat=L))
        return out

    def to_dict(self):
        params = {}
        if self.order is not None:
            params["m"] = self.order
        if self.rank is not None:
            params["k"] = self.rank
        return {"kind": self.kind, "params": params, "generators": list(self.symbols)}


# ---------------------------------------------------------------- actions

class FiniteAction:
    """A group or semigroup acting on a finite metric space through generator maps.

    mode "group" requires bijective generators; "semigroup" evaluates only
    positive words. Relations of the group are checked exactly on construction.
    """

    def __init__(self, group, space, gen_maps, mode=None, name=None, flags=None):
        self.group = group
        self.space = space
        self.name = name or mc._fresh_id("action")
        self.flags = dict(flags or {})
        maps = {}
        for s in group.symbols:
            if s not in gen_maps:
                raise DomainError(f"missing generator map {s!r}")
            a = gen_maps[s].image if isinstance(gen_maps[s], PointMap) else gen_maps[s]
            maps[s] = PointMap(space, space, a).image
        self.gen_maps = maps
        bij = all(np.array_equal(np.sort(a), np.arange(space.n)) for a in maps.values())
        if mode is None:
            mode = "group" if bij and group.is_group else "semigroup"
        if mode not in ("group", "semigroup"):
            raise DomainError("mode must be group or semigroup")
        if mode == "group" and not (bij and group.is_group):
            raise DomainError("group mode needs bijective generators of a group")
        self.mode = mode
        self.inv_maps = {s: np.argsort(a) for s, a in maps.items()} if mode == "group" else {}
        self._cache = {group.identity: np.arange(space.n)}
        self._check_relations()

    def _check_relations(self):
        g = self.group
        if g.kind == "Z2":
            a, b = self.gen_maps[g.symbols[0]], self.gen_maps[g.symbols[1]]
            require(np.array_equal(a[b], b[a]), "Z2 generators do not commute", DomainError)
        if g.kind == "cyclic":
            require(np.array_equal(self.element_map(g.order), np.arange(self.space.n)),
                    "cyclic relation a^m = id fails", DomainError)
        for s, inv in self.inv_maps.items():
            require(np.array_equal(inv[self.gen_maps[s]], np.arange(self.space.n)),
                    "inverse map does not invert", DomainError)

    @property
    def is_group(self):
        return self.mode == "group"

    def allowed(self, g):
        return self.mode == "group" or self.group.is_positive(g)

    def element_map(self, g):
        """Index map of alpha_g."""
        grp = self.group
        if grp.kind != "cyclic":
            g = grp.normalize(g)
        key = g
        if key in self._cache:
            return self._cache[key]
        if not self.allowed(g):
            raise DomainError(f"element {g} needs inverses, action is a semigroup")
        ident = np.arange(self.space.n)

        def pw(sym, k):
            step = self.gen_maps[sym] if k >= 0 else self.inv_maps[sym]
            out = ident
            for _ in range(abs(k)):
                out = step[out]
            return out

        if grp.kind == "Z":
            out = pw(grp.symbols[0], g)
        elif grp.kind == "cyclic":
            out = pw(grp.symbols[0], int(g))
            key = int(g) % grp.order
        elif grp.kind == "Z2":
            out = pw(grp.symbols[0], g[0])[pw(grp.symbols[1], g[1])]
        else:
            out = ident
            for s in reversed(g):
                out = self.gen_maps[grp.symbols[s]][out]
        self._cache[key] = out
        return out

    def point_map(self, g):
        return PointMap(self.space, self.space, self.element_map(g))

    def ball(self, R):
        return self.group.ball(R, positive=not self.is_group)

    def to_dict(self):
        return {"id": self.name, "group": self.group.to_dict(), "space": self.space.name,
                "generators": {s: a.tolist() for s, a in self.gen_maps.items()}, "mode": self.mode}


def trivial_action(group, space):
    return FiniteAction(group, space, {s: np.arange(space.n) for s in group.symbols})


@dataclass
class Homomorphism:
    source: GeneratedGroup
    target: GeneratedGroup
    gen_images: dict

    def __post_init__(self):
        self.gen_images = {s: self.target.normalize(self.gen_images[s]) for s in self.source.symbols}
        G, H = self.source, self.target
        if G.kind == "Z2":
            u, v = (self.gen_images[s] for s in G.symbols)
            require(H.multiply(u, v) == H.multiply(v, u), "images of Z2 generators do not commute",
                    DomainError)
        if G.kind == "cyclic":
            u = self.gen_images[G.symbols[0]]
            require(self._pow(u, G.order) == H.identity, "cyclic relation not preserved", DomainError)

    def _pow(self, u, k):
        H = self.target
        if k < 0:
            if not H.is_group:
                raise DomainError("negative power in a monoid target")
            return H.power(H.inverse(u), -k)
        return H.power(u, k)

    def __call__(self, g):
        G, H = self.source, self.target
        im = [self.gen_images[s] for s in G.symbols]
        if G.kind in ("Z", "cyclic"):
            return H.normalize(self._pow(im[0], int(g)))
        if G.kind == "Z2":
            return H.normalize(H.multiply(self._pow(im[0], g[0]), self._pow(im[1], g[1])))
        out = H.identity
        for s in g:
            out = H.multiply(out, im[s])
        return H.normalize(out)

    def compose(self, other):
        """other after self."""
        return Homomorphism(self.source, other.target,
                            {s: other(self.gen_images[s]) for s in self.source.symbols})

    def key(self):
        return tuple(repr(self.gen_images[s]) for s in self.source.symbols)

    def to_dict(self):
        return {s: (list(v) if isinstance(v, tuple) else v) for s, v in self.gen_images.items()}


def enumerate_homomorphisms(G, H, R):
    """All homomorphisms sending G's generators into H.ball(R)."""
    if G.kind not in KINDS or H.kind not in KINDS:
        raise RefusalError("unsupported group kind")
    cand = H.ball(R)
    k = len(G.symbols)
    out = []
    for imgs in itertools.product(cand, repeat=k):
        try:
            out.append(Homomorphism(G, H, dict(zip(G.symbols, imgs))))
        except DomainError:
            continue
    return out


# ---------------------------------------------------------------- distances

def d_sup(f, g):
    return mc.sup_distance(f, g)


def _elements(alpha, S):
    return alpha.group.gen_elements() if S is None else [alpha.group.normalize(s) for s in S]


def d_S(alpha, beta, S=None):
    if not alpha.space.same_as(beta.space):
        raise DomainError("actions live on different spaces")
    X = alpha.space
    val = max(float(X.d(alpha.element_map(s), beta.element_map(s)).max()) for s in _elements(alpha, S))
    ident = np.arange(X.n)
    terms = _terms(alpha, beta, _elements(alpha, S))
    score, _ = full_score(X, beta.space, ident, terms)
    require(score <= val + TOL, "identity certificate exceeds d_S")
    return val


def equivariant_defect(f, alpha, beta, S=None):
    if not (f.source.same_as(alpha.space) and f.target.same_as(beta.space)):
        raise DomainError("map does not go from alpha's space to beta's space")
    Y = beta.space
    worst = 0.0
    for s in _elements(alpha, S):
        lhs = beta.element_map(s)[f.image]          # beta_s o f
        rhs = f.image[alpha.element_map(s)]         # f o alpha_s
        worst = max(worst, float(Y.d(lhs, rhs).max()))
    return worst


def _terms(alpha, beta, elems):
    """Search terms for f: alpha.space -> beta.space, deduplicated."""
    out, seen = [], set()
    for s in elems:
        pre, post = alpha.element_map(s), beta.element_map(s)
        key = pre.tobytes() + b"|" + post.tobytes()
        if key not in seen:
            seen.add(key)
            out.append((pre, post))
    return out


class EquivariantCertificate(NamedTuple):
    epsilon: float
    f: PointMap
    g: PointMap
    report: dict


def dGH_S_upper(alpha, beta, S=None, budget=2000, seed=0, seeds=()):
    """Certified upper bound on d_GH,S with maps f: X -> Y and g: Y -> X.

    ``seeds`` is a list of (f, g) pairs tried before local search.
    """
    if alpha.group != beta.group:
        raise DomainError("actions of different groups")
    elems = _elements(alpha, S)
    X, Y = alpha.space, beta.space
    fs = [np.asarray(getattr(a, "image", a)) for a, _ in seeds]
    gs = [np.asarray(getattr(b, "image", b)) for _, b in seeds]
    fi, fr = search_map(X, Y, _terms(alpha, beta, elems), budget, seed, fs)
    gi, gr = search_map(Y, X, _terms(beta, alpha, elems), budget, seed + 1, gs)
    eps = max(fr["epsilon"], gr["epsilon"])
    return EquivariantCertificate(eps, PointMap(X, Y, fi), PointMap(Y, X, gi),
                                  {"forward": fr, "backward": gr, "S": [repr(s) for s in elems]})


def _is_conjugacy(f, alpha, beta, elems):
    return all(np.array_equal(beta.element_map(s)[f.image], f.image[alpha.element_map(s)])
               for s in elems)


@dataclass
class QuasimetricReport:
    checks: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(c["passed"] for c in self.checks.values())


def quasimetric_report(alpha, beta, gamma, S=None, budget=1500, seed=0):
    """Checks the quasi-metric properties of d_GH,S on certificates."""
    rep = QuasimetricReport()
    elems = _elements(alpha, S)

    def add(name, passed, **detail):
        rep.checks[name] = {"passed": bool(passed), **detail}

    ab = dGH_S_upper(alpha, beta, S, budget, seed)
    ba = dGH_S_upper(beta, alpha, S, budget, seed, seeds=[(ab.g, ab.f)])
    ab = dGH_S_upper(alpha, beta, S, budget, seed, seeds=[(ba.g, ba.f)])
    add("symmetry", abs(ab.epsilon - ba.epsilon) <= 1e-12, ab=ab.epsilon, ba=ba.epsilon)
    hat = max(mc.certify(ab.f).epsilon, mc.certify(ab.g).epsilon)
    add("plain_gha_below_equivariant", hat <= ab.epsilon + TOL, gha=hat, equivariant=ab.epsilon)
    if alpha.space.same_as(beta.space):
        ds = d_S(alpha, beta, S)
        add("below_d_S", ab.epsilon <= ds + TOL, cert=ab.epsilon, d_S=ds)
    else:
        add("below_d_S", True, skipped="different spaces")
    ag = dGH_S_upper(alpha, gamma, S, budget, seed)
    gb = dGH_S_upper(gamma, beta, S, budget, seed)
    comp = (mc.compose(gb.f, ag.f), mc.compose(ag.g, gb.g))
    ab2 = dGH_S_upper(alpha, beta, S, budget, seed, seeds=[(ab.f, ab.g), comp])
    bound = 2 * (ag.epsilon + gb.epsilon)
    add("relaxed_triangle", ab2.epsilon <= bound + TOL, cert=ab2.epsilon, bound=bound)
    if ab.epsilon <= TOL:
        add("conjugacy", _is_conjugacy(ab.f, alpha, beta, elems) and mc.distortion(ab.f) <= TOL,
            epsilon=ab.epsilon)
    rep.values = {"ab": ab.epsilon, "ba": ba.epsilon, "ag": ag.epsilon, "gb": gb.epsilon,
                  "ab_composed": ab2.epsilon}
    if not alpha.is_group or not beta.is_group:
        rep.values["note"] = "semigroup mode: inverse-generator checks skipped"
    return rep


def is_isometric_action(alpha):
    maps = list(alpha.gen_maps.values()) + list(alpha.inv_maps.values())
    X = alpha.space
    return all(mc.map_distortion(X, X, a) <= TOL for a in maps)


# ---------------------------------------------------------------- d_GH,1 / d_GH,2

class Egh1Certificate(NamedTuple):
    epsilon: float
    rho: Homomorphism
    f: PointMap
    report: dict


def _egh1_terms(alpha, beta, rho, R_G):
    """Terms for f: Y -> X with defect d_X(alpha_g f y, f beta_rho(g) y)."""
    out, seen = [], set()
    for g in alpha.ball(R_G):
        h = rho(g)
        if not beta.allowed(h):
            return None
        pre, post = beta.element_map(h), alpha.element_map(g)
        key = pre.tobytes() + b"|" + post.tobytes()
        if key not in seen:
            seen.add(key)
            out.append((pre, post))
    return out


def egh1_score(f, rho, alpha, beta, R_G=6):
    """max(isometry defect of f, ball-truncated equivariance defect) for f: Y -> X."""
    terms = _egh1_terms(alpha, beta, rho, R_G)
    if terms is None:
        return np.inf
    img = getattr(f, "image", f)
    return full_score(beta.space, alpha.space, np.asarray(img), terms)[0]


def dGH1_upper(alpha, beta, budget=1500, seed=0, R_G=6, R_H=1, seeds=(), rhos=None):
    """Upper bound for d_GH,1(alpha, beta) with rho: G -> H and f: Y -> X.

    The sup over G is evaluated on ball(R_G), so the value is ball-truncated.
    """
    G, H = alpha.group, beta.group
    cands = list(rhos) if rhos is not None else []
    have = {r.key() for r in cands}
    for r in enumerate_homomorphisms(G, H, R_H):
        if r.key() not in have:
            cands.append(r)
    X, Y = alpha.space, beta.space
    seed_imgs = [np.asarray(getattr(s, "image", s)) for s in seeds]
    best, skipped, tried = None, 0, []
    for k, rho in enumerate(cands):
        terms = _egh1_terms(alpha, beta, rho, R_G)
        if terms is None:
            skipped += 1
            continue
        img, rep = search_map(Y, X, terms, budget, seed + k, seed_imgs)
        tried.append((rho.to_dict(), rep["epsilon"]))
        cand = (rep["epsilon"], rho.key(), img, rho, rep)
        if best is None or cand[0] < best[0] - 1e-12 or \
                (abs(cand[0] - best[0]) <= 1e-12 and cand[1] < best[1]):
            best = cand
    if best is None:
        raise RefusalError("no homomorphism is evaluable in this mode")
    report = {"ball_truncated": True, "R_G": R_G, "R_H": R_H, "candidates": len(cands),
              "skipped_needing_inverses": skipped, "search": best[4], "per_rho": tried}
    return Egh1Certificate(best[0], best[3], PointMap(Y, X, best[2]), report)


def compose_egh1(first, second):
    """Certificate seed for alpha->beta from alpha->gamma (rho, f: Z->X) and
    gamma->beta (phi, v: Y->Z): the pair (phi o rho, f o v)."""
    rho = first.rho.compose(second.rho)
    return rho, mc.compose(first.f, second.f)


def dGH2_upper(alpha, beta, budget=1500, seed=0, R_G=6, R_H=1, seeds=((), ()), rhos=(None, None)):
    """Both directions of d_GH,1; the certificate is the larger epsilon.

    Returns (epsilon, rho, f, phi, h, report).
    """
    one = dGH1_upper(alpha, beta, budget, seed, R_G, R_H, seeds[0], rhos[0])
    two = dGH1_upper(beta, alpha, budget, seed, R_G, R_H, seeds[1], rhos[1])
    eps = max(one.epsilon, two.epsilon)
    return eps, one.rho, one.f, two.rho, two.f, {"forward": one, "backward": two}


def egh1_triangle(alpha, gamma, beta, budget=1000, seed=0, R_G=3, R_H=1):
    """Relaxed triangle on d_GH,1 certificates. The gamma->beta certificate is
    evaluated on a ball large enough to cover rho(ball(R_G))."""
    ag = dGH1_upper(alpha, gamma, budget, seed, R_G, R_H)
    lens = [gamma.group.length(ag.rho(s)) for s in alpha.group.gen_elements()]
    R_K = max(1, R_G * max(lens + [1]))
    gb = dGH1_upper(gamma, beta, budget, seed, R_K, R_H)
    rho, f = compose_egh1(ag, gb)
    ab = dGH1_upper(alpha, beta, budget, seed, R_G, R_H, seeds=[f], rhos=[rho])
    bound = 2 * (ag.epsilon + gb.epsilon)
    return {"ab": ab.epsilon, "ag": ag.epsilon, "gb": gb.epsilon, "bound": bound,
            "passed": ab.epsilon <= bound + TOL}
