"""Pseudo-orbits, expansivity checks, explicit shadowing for hyperbolic toral
maps, and construction of a conjugacy from tracing points.

Pseudo-orbits live in continuous torus coordinates (unit square mod 1).
Tracing points are recomputed and re-verified in mpmath so that the
exponential growth along unstable directions cannot hide rounding.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import mpmath as mp
import numpy as np

from . import metric_core as mc
from .errors import TOL, DomainError, PreconditionError, RefusalError, require
from .group_actions import FiniteAction, Homomorphism
from .metric_core import PointMap
from .systems import ToralSystem, torus_dist, torus_wrap

__all__ = [
    "PseudoOrbit", "TracingResult", "make_pseudo_orbit", "shadow_hyperbolic_toral",
    "tracing_constant", "tracing_displacements", "expansivity_certificate", "separation_set",
    "build_conjugacy", "ConjugacyResult",
]

_DYADIC = 2 ** 30


@dataclass
class PseudoOrbit:
    system: ToralSystem
    window: list
    values: np.ndarray
    delta: float
    gen_set: list
    steps: np.ndarray = None      # measured step errors

    def value(self, g):
        return self.values[self.window.index(g)]

    def to_dict(self):
        return {"window": [list(g) if isinstance(g, tuple) else g for g in self.window],
                "values": self.values.tolist(), "delta": self.delta,
                "gen_set": [list(s) if isinstance(s, tuple) else s for s in self.gen_set]}


@dataclass
class TracingResult:
    point: np.ndarray
    epsilon: float
    window: list
    unique: bool
    bound: float = 0.0
    constant: float = 0.0
    truncation: float = 0.0
    delta_measured: float = 0.0
    displacements: np.ndarray = None
    point_hp: tuple = None

    def to_dict(self):
        return {"point": self.point.tolist(), "epsilon": self.epsilon, "unique": self.unique,
                "bound": self.bound, "constant": self.constant, "truncation": self.truncation,
                "delta_measured": self.delta_measured, "window": [self.window[0], self.window[-1]]}


# ---------------------------------------------------------------- pseudo-orbits

def _window(system, window):
    G = system.group
    if isinstance(window, (int, np.integer)):
        return G.ball(int(window), positive=system.mode == "semigroup")
    return [G.normalize(g) for g in window]


def _step_errors(system, window, values, S):
    """Max over s in S and g with s*g in window of d(alpha_s x_g, x_{sg})."""
    G = system.group
    pos = {g: k for k, g in enumerate(window)}
    errs = []
    for s in S:
        src, dst = [], []
        for g, k in pos.items():
            sg = G.multiply(s, g)
            if sg in pos:
                src.append(k)
                dst.append(pos[sg])
        if src:
            moved = system.apply(s, values[src])
            errs.append(torus_dist(moved, values[dst]))
    return np.concatenate(errs) if errs else np.zeros(0)


def _check_connected(G, window, S):
    pos = set(window)
    e = G.identity
    if e not in pos:
        raise DomainError("window must contain the identity")
    seen, todo = {e}, [e]
    while todo:
        g = todo.pop()
        for s in S:
            for h in (G.multiply(s, g),) + ((G.multiply(G.inverse(s), g),) if G.is_group else ()):
                if h in pos and h not in seen:
                    seen.add(h)
                    todo.append(h)
    if len(seen) != len(pos):
        raise DomainError("window is not connected under the generators")


def make_pseudo_orbit(system, delta, S=None, window=50, seed=0):
    """Orbit of a random dyadic point plus seeded perturbations of norm < delta.

    Z windows get an independent error per step; Z2 windows perturb every
    point of a true orbit by less than delta / (1 + |A_s|), which keeps every
    generator step below delta.
    """
    if delta < 0:
        raise DomainError("delta must be non-negative")
    G = system.group
    S = G.gen_elements() if S is None else [G.normalize(s) for s in S]
    win = _window(system, window)
    _check_connected(G, win, S)
    rng = np.random.default_rng(seed)
    x0 = rng.integers(0, _DYADIC, 2) / _DYADIC
    vals = np.zeros((len(win), 2))
    pos = {g: k for k, g in enumerate(win)}
    shrink = 1 - 1e-9

    def noise(k, scale):
        ang = rng.uniform(0, 2 * np.pi, k)
        r = scale * shrink * rng.random(k)
        return np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)

    if G.kind == "Z":
        lo, hi = min(win), max(win)
        if sorted(win) != list(range(lo, hi + 1)):
            raise DomainError("Z windows must be intervals")
        A = system.matrices[G.symbols[0]]
        fwd, bwd = noise(hi, delta), noise(-lo, delta)
        vals[pos[0]] = x0
        x = x0
        for k in range(hi):
            x = np.mod(A @ x + fwd[k], 1.0)
            vals[pos[k + 1]] = x
        if lo < 0:
            Ainv = system.inverses[G.symbols[0]]
            x = x0
            for k in range(-lo):
                x = np.mod(Ainv @ (x - bwd[k]), 1.0)
                vals[pos[-k - 1]] = x
    else:
        scale = delta / (1 + system.lipschitz)
        eta = noise(len(win), scale)
        for g, k in pos.items():
            vals[k] = np.mod(system.apply(g, x0[None])[0] + eta[k], 1.0)
    errs = _step_errors(system, win, vals, S)
    top = float(errs.max()) if errs.size else 0.0
    if delta > 0:
        require(top < delta, f"pseudo-orbit step {top} not below {delta}")
    else:
        require(top == 0.0, "zero-delta pseudo-orbit is not a true orbit")
    return PseudoOrbit(system, win, vals, float(delta), S, errs)


# ---------------------------------------------------------------- toral shadowing

def _eig_checked(A):
    lam, V = np.linalg.eig(np.asarray(A, float))
    if np.any(np.abs(np.abs(lam) - 1) < 1e-6):
        raise RefusalError("matrix is not hyperbolic")
    return lam, V


def tracing_constant(A):
    """C with |tracing displacement| <= C * max step error, from |V| |V^-1| and
    the geometric-series factors 1/(1-|l|) (stable) and 1/(|l|-1) (unstable)."""
    lam, V = _eig_checked(A)
    fac = 1 / np.abs(1 - np.abs(lam))
    return float(np.linalg.norm(V, 2) * np.linalg.norm(np.linalg.inv(V), 2) * np.sqrt((fac ** 2).sum()))


def _truncation(A, N, diam=np.sqrt(2) / 2):
    lam, _ = _eig_checked(A)
    mods = np.abs(lam)
    kappa = max([m for m in mods if m < 1] + [1 / m for m in mods if m > 1])
    return float(diam * kappa ** (N / 2))


def _errors_along(A, values):
    return torus_wrap(values[1:] - values[:-1] @ np.asarray(A).T)


def tracing_displacements(A, errors, origin=0):
    """Bounded solution of z_{k+1} = A z_k - e_k on a finite window.

    Stable eigen-components start at zero at the window start and are summed
    forward; unstable ones vanish at the window end and are summed backward.
    """
    lam, V = _eig_checked(A)
    N = len(errors) + 1
    c = np.linalg.solve(V, np.asarray(errors, complex).T).T if len(errors) else np.zeros((0, 2))
    w = np.zeros((N, 2), complex)
    for i, l in enumerate(lam):
        if abs(l) < 1:
            for k in range(N - 1):
                w[k + 1, i] = l * w[k, i] - c[k, i]
        else:
            for k in range(N - 2, -1, -1):
                w[k, i] = (w[k + 1, i] + c[k, i]) / l
    return (w @ V.T).real


def _mp_tracer(A, values, o, dps):
    """Tracing point at window index o, computed in mpmath."""
    with mp.workdps(dps):
        M = mp.matrix([[int(a) for a in row] for row in A])
        lam, V = mp.eig(M)
        Vinv = mp.inverse(V)
        N = len(values)
        xs = [mp.matrix([mp.mpf(float(v[0])), mp.mpf(float(v[1]))]) for v in values]
        w = [mp.mpc(0), mp.mpc(0)]
        for k in range(N - 1):
            e = xs[k + 1] - M * xs[k]
            e = mp.matrix([e[0] - mp.nint(e[0]), e[1] - mp.nint(e[1])])
            c = Vinv * e
            for i in range(2):
                l = lam[i]
                if abs(l) < 1 and k < o:
                    w[i] -= l ** (o - 1 - k) * c[i]
                elif abs(l) > 1 and k >= o:
                    w[i] += l ** (-(k - o + 1)) * c[i]
        z = V * mp.matrix(w)
        p = [xs[o][i] + mp.re(z[i]) for i in range(2)]
        return tuple(q - mp.floor(q) for q in p)


def _mp_verify(A, point, values, o, dps):
    """max_k torus distance between the true orbit of point and the values."""
    with mp.workdps(dps):
        M = mp.matrix([[int(a) for a in row] for row in A])
        Minv = mp.inverse(M)
        worst = mp.mpf(0)

        def dist(p, v):
            d = [p[i] - mp.mpf(float(v[i])) for i in range(2)]
            d = [t - mp.nint(t) for t in d]
            return mp.sqrt(d[0] ** 2 + d[1] ** 2)

        p = mp.matrix(list(point))
        worst = max(worst, dist(p, values[o]))
        for k in range(o + 1, len(values)):
            p = M * p
            p = mp.matrix([t - mp.floor(t) for t in p])
            worst = max(worst, dist(p, values[k]))
        p = mp.matrix(list(point))
        for k in range(o - 1, -1, -1):
            p = Minv * p
            p = mp.matrix([t - mp.floor(t) for t in p])
            worst = max(worst, dist(p, values[k]))
        return float(worst)


def _precision(A, N):
    lam, _ = _eig_checked(A)
    grow = max(max(abs(lam)), 1 / min(abs(lam)))
    return 30 + int(np.ceil(N * np.log10(grow)))


def _scan_unique(A, z, eps, origin, rings=(0.5, 1.0, 2.0), dirs=16):
    """True when no sampled displacement within 2*eps also traces within eps."""
    if eps <= 0:
        return True
    N = len(z)
    k = np.arange(N) - origin
    powers = np.stack([np.linalg.matrix_power(np.asarray(A, float), int(abs(t))) if t >= 0 else
                       np.linalg.matrix_power(np.linalg.inv(np.asarray(A, float)), int(-t)) for t in k])
    ang = np.linspace(0, 2 * np.pi, dirs, endpoint=False)
    unit = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    for r in rings:
        d = r * eps * unit                               # (dirs, 2)
        moved = np.einsum("kij,dj->dki", powers, d)      # (dirs, N, 2)
        err = np.sqrt((torus_wrap(z[None] + moved) ** 2).sum(axis=2)).max(axis=1)
        if np.any(err < eps):
            return False
    return True


def shadow_hyperbolic_toral(po, A=None, origin=None):
    """Trace a Z-window pseudo-orbit of a hyperbolic integer matrix."""
    G = po.system.group
    if G.kind != "Z":
        raise DomainError("explicit tracing needs a Z window")
    A = np.asarray(po.system.matrices[G.symbols[0]] if A is None else A)
    win = list(po.window)
    order = np.argsort(win)
    win = [win[i] for i in order]
    if win != list(range(win[0], win[-1] + 1)):
        raise DomainError("window must be an interval of Z")
    values = po.values[order]
    o = win.index(0) if origin is None else win.index(origin)
    N = len(win)
    C = tracing_constant(A)
    trunc = _truncation(A, N)
    if N == 1:
        return TracingResult(values[0].copy(), 0.0, win, True, 0.0, C, trunc, 0.0, np.zeros((1, 2)))
    e = _errors_along(A, values)
    dmeas = float(np.sqrt((e ** 2).sum(axis=1)).max())
    z = tracing_displacements(A, e)
    if dmeas == 0.0:
        p = values[o].copy()
        return TracingResult(p, 0.0, win, True, 0.0, C, trunc, 0.0, z)
    dps = _precision(A, N)
    hp = _mp_tracer(A, values, o, dps)
    eps = _mp_verify(A, hp, values, o, dps)
    eps_float = float(np.sqrt((z ** 2).sum(axis=1)).max())
    require(abs(eps - eps_float) <= 1e-9 + 1e-6 * eps, f"tracing re-verification {eps} vs {eps_float}")
    bound = C * dmeas + trunc
    require(eps <= bound + TOL, f"tracing epsilon {eps} above bound {bound}")
    point = np.array([float(hp[0]), float(hp[1])])
    return TracingResult(point, eps, win, _scan_unique(A, z, eps, o), bound, C, trunc, dmeas, z, hp)


# ---------------------------------------------------------------- expansivity

@dataclass
class ExpansivityResult:
    passed: bool
    witness: tuple | None
    horizon: int
    pairs_checked: int
    note: str = "certified only for the sampled pairs and horizon"


def _orbit_sup(action, xs, ys, elems):
    X = action.space
    best = np.zeros(len(xs))
    for g in elems:
        mp_ = action.element_map(g)
        best = np.maximum(best, X.d(mp_[xs], mp_[ys]))
    return best


def expansivity_certificate(action, c, R, pairs=None, sample=5000, seed=0):
    """Checks sup over ball(R) of d(alpha_g x, alpha_g y) > c on sampled pairs."""
    if c <= 0:
        raise DomainError("expansive constant must be positive")
    n = action.space.n
    if pairs is None:
        if n * (n - 1) // 2 <= sample:
            xs, ys = np.triu_indices(n, 1)
        else:
            rng = np.random.default_rng(seed)
            xs, ys = rng.integers(0, n, sample), rng.integers(0, n, sample)
            keep = xs != ys
            xs, ys = xs[keep], ys[keep]
    else:
        xs, ys = (np.asarray(a) for a in zip(*pairs))
    sup = _orbit_sup(action, xs, ys, action.ball(R))
    bad = np.nonzero(sup <= c)[0]
    if bad.size:
        k = bad[0]
        return ExpansivityResult(False, (int(xs[k]), int(ys[k])), R, len(xs))
    return ExpansivityResult(True, None, R, len(xs))


def separation_set(action, x, eps, c, R, ys=None):
    """Smallest r <= R such that orbits staying c-close over ball(r) start eps-close."""
    X = action.space
    ys = np.arange(X.n) if ys is None else np.asarray(ys)
    xs = np.full(len(ys), x)
    run = np.zeros(len(ys))
    seen = set()
    for r in range(R + 1):
        for g in action.ball(r):
            if g in seen:
                continue
            seen.add(g)
            m = action.element_map(g)
            run = np.maximum(run, X.d(m[xs], m[ys]))
        close = (run <= c)
        d0 = X.d(xs, ys)
        if np.all(d0[close] < eps):
            return r, action.ball(r)
    stuck = (run <= c) & (ys != x)
    if stuck.any():
        raise PreconditionError(f"orbits of {x} and {int(ys[stuck][0])} never separate by {c}")
    raise RefusalError(f"no separating ball up to radius {R}")


# ---------------------------------------------------------------- conjugacy

@dataclass
class ConjugacyResult:
    h: np.ndarray                 # continuous coordinates, one row per point of Y
    eps1: float
    isometry_eps: float
    equivariance_defect: float
    tolerance: float
    unique: np.ndarray
    report: dict = field(default_factory=dict)


def build_conjugacy(u, rho, alpha, beta, delta, window=20, S=None):
    """h(y) = tracing point of the pseudo-orbit t -> u(beta_rho(t) y).

    ``alpha`` is a ToralSystem (explicit tracing, u given as continuous
    coordinates per point of Y) or a FiniteAction (exhaustive tracing over
    grid points, u a PointMap). ``delta`` bounds every pseudo-orbit step.
    """
    if isinstance(alpha, FiniteAction):
        return _conjugacy_finite(u, rho, alpha, beta, delta, window, S)
    system = alpha
    G = system.group
    if G.kind != "Z" or system.mode != "group":
        raise RefusalError("explicit conjugacy needs an invertible Z system")
    A = system.matrices[G.symbols[0]]
    Y = beta.space
    U = np.asarray(u, float)
    if U.shape != (Y.n, 2):
        raise DomainError("u must give torus coordinates for every point of Y")
    R = int(window)
    ts = np.arange(-R, R + 2)
    idx = np.stack([beta.element_map(rho(int(t))) for t in ts])      # (T, |Y|)
    P = U[idx]                                                        # (T, |Y|, 2)
    steps = torus_dist(P[1:], np.mod(np.einsum("ij,tyj->tyi", A, P[:-1]), 1.0))
    dstep = float(steps.max())
    if not dstep < delta:
        raise PreconditionError(f"pseudo-orbit step {dstep} is not below delta {delta}")
    lam, V = _eig_checked(A)
    C = tracing_constant(A)
    N = 2 * R + 1
    trunc = _truncation(A, N - 2)
    H = np.zeros((Y.n, 2))
    eps1 = 0.0
    uniq = np.ones(Y.n, bool)
    for y in range(Y.n):
        vals = P[: N, y]
        e = _errors_along(A, vals)
        z = tracing_displacements(A, e)
        H[y] = np.mod(vals[R] + z[R], 1.0)
        e1 = float(np.sqrt((z ** 2).sum(axis=1)).max())
        eps1 = max(eps1, e1)
        uniq[y] = _scan_unique(A, z, e1, R)
    require(eps1 <= C * dstep + trunc + TOL, f"tracing {eps1} above {C * dstep + trunc}")
    dhu = float(torus_dist(H, U).max())
    require(dhu <= eps1 + TOL, "h moved further than the tracing epsilon")
    # isometry defect of u and of h, measured in torus coordinates
    dY = Y.dist if Y.n <= mc.DENSE_LIMIT else None
    du, dh = 0.0, 0.0
    for I in mc._row_chunks(Y.n, Y.n):
        dy = dY[I] if dY is not None else Y.pairwise(I, np.arange(Y.n))
        du = max(du, float(np.abs(torus_dist(U[I, None], U[None]) - dy).max()))
        dh = max(dh, float(np.abs(torus_dist(H[I, None], H[None]) - dy).max()))
    require(dh <= 2 * eps1 + du + TOL, f"h distortion {dh} above 2 eps1 + {du}")
    elems = G.gen_elements() if S is None else S
    elems = list(elems) + [G.inverse(s) for s in elems]
    defect = 0.0
    for t in elems:
        moved = system.apply(t, H)
        defect = max(defect, float(torus_dist(moved, H[beta.element_map(rho(t))]).max()))
    tol = 2 * trunc
    require(defect <= tol + TOL, f"equivariance defect {defect} above truncation {tol}")
    return ConjugacyResult(H, eps1, dh, defect, tol, uniq,
                           {"delta_steps": dstep, "u_distortion": du, "d_sup_h_u": dhu,
                            "constant": C, "truncation": trunc, "window": [-R, R],
                            "non_unique_points": int((~uniq).sum())})


def _conjugacy_finite(u, rho, alpha, beta, delta, window, S):
    X, Y = alpha.space, beta.space
    ts = alpha.ball(int(window))
    pulled = np.stack([u.image[beta.element_map(rho(t))] for t in ts])   # (T, |Y|)
    moved = np.stack([alpha.element_map(t) for t in ts])                 # (T, |X|)
    h = np.zeros(Y.n, np.int64)
    eps1 = 0.0
    uniq = np.ones(Y.n, bool)
    for y in range(Y.n):
        err = np.zeros(X.n)
        for k in range(len(ts)):
            err = np.maximum(err, X.d(moved[k], np.full(X.n, pulled[k, y])))
        best = err.min()
        h[y] = int(np.argmin(err))
        uniq[y] = int((err <= best + TOL).sum()) == 1
        eps1 = max(eps1, float(best))
    H = PointMap(Y, X, h)
    dhu = mc.sup_distance(H, u)
    elems = alpha.group.gen_elements() if S is None else S
    defect = 0.0
    for t in elems:
        defect = max(defect, float(X.d(alpha.element_map(t)[h], h[beta.element_map(rho(t))]).max()))
    return ConjugacyResult(H, eps1, mc.distortion(H), defect, 0.0, uniq,
                           {"d_sup_h_u": dhu, "non_unique_points": int((~uniq).sum())})
