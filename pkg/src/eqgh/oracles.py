"""Independent reference computations used to cross-check the main routines.

They are deliberately naive: exhaustive enumeration or a dense linear solve.
"""
from __future__ import annotations

import itertools

import numpy as np

from .errors import RefusalError

__all__ = ["gh_bruteforce", "transport_vertex_oracle", "shadow_dense_solve"]


def gh_bruteforce(dx, dy):
    """d_GH by enumerating every map pair (f, g).

    The relation graph(f) + graph(g)^T has distortion max(dis f, dis g, codis);
    every correspondence contains such a relation, so the minimum is exact.
    """
    dx, dy = np.asarray(dx, float), np.asarray(dy, float)
    n, m = len(dx), len(dy)
    if n ** m * m ** n > 5e7:
        raise RefusalError("brute force too large")
    F = np.array(list(itertools.product(range(m), repeat=n)), dtype=np.int64)
    G = np.array(list(itertools.product(range(n), repeat=m)), dtype=np.int64)
    disF = np.abs(dy[F[:, :, None], F[:, None, :]] - dx[None]).reshape(len(F), -1).max(axis=1)
    disG = np.abs(dx[G[:, :, None], G[:, None, :]] - dy[None]).reshape(len(G), -1).max(axis=1)
    # C[f, y, x'] = max_x |dX(x, x') - dY(f(x), y)|, codis(f, g) = max_y C[f, y, g(y)]
    C = np.abs(dx[None, :, None, :] - dy[F][:, :, :, None]).max(axis=1)
    # exact pruning: visit f by increasing distortion and keep only g whose
    # distortion is still below the best value found
    fo = np.argsort(disF, kind="stable")
    go = np.argsort(disG, kind="stable")
    disG_sorted = disG[go]
    best = np.inf
    ys = np.arange(m)
    for fi in fo:
        if disF[fi] >= best:
            break
        k = int(np.searchsorted(disG_sorted, best, side="left"))
        if k == 0:
            break
        gs = go[:k]
        cod = C[fi][ys[None, :], G[gs]].max(axis=1)
        val = np.maximum(np.maximum(disF[fi], disG[gs]), cod)
        best = min(best, float(val.min()))
    return best / 2


def shadow_dense_solve(A, errors):
    """Bounded displacements z_{k+1} = A z_k - e_k from one dense linear system.

    Boundary rows: stable spectral components of z_0 and unstable components
    of z_{N-1} vanish. Complex eigenvector rows are split into real and
    imaginary parts.
    """
    A = np.asarray(A, float)
    e = np.asarray(errors, float).reshape(-1, 2)
    N = len(e) + 1
    lam, V = np.linalg.eig(A)
    L = np.linalg.inv(V)                      # rows: left eigenvectors
    M = np.zeros((2 * N, 2 * N))
    rhs = np.zeros(2 * N)
    r = 0
    for k in range(N - 1):
        M[r:r + 2, 2 * (k + 1):2 * (k + 2)] = np.eye(2)
        M[r:r + 2, 2 * k:2 * (k + 1)] = -A
        rhs[r:r + 2] = -e[k]
        r += 2
    rows = []
    for i, l in enumerate(lam):
        col = 0 if abs(l) < 1 else N - 1
        vec = L[i]
        parts = [vec.real] if abs(l.imag) < 1e-14 else ([vec.real, vec.imag] if l.imag > 0 else [])
        rows += [(col, p) for p in parts]
    for col, p in rows:
        M[r, 2 * col:2 * col + 2] = p
        r += 1
    return np.linalg.solve(M, rhs).reshape(N, 2)


def transport_vertex_oracle(a, b, C):
    """Optimal transport cost by enumerating basic solutions of the
    transportation polytope (every vertex has at most n+m-1 positive cells)."""
    a, b, C = (np.asarray(t, float) for t in (a, b, C))
    n, m = C.shape
    if n + m > 8:
        raise RefusalError("vertex enumeration limited to total support 8")
    cells = [(i, j) for i in range(n) for j in range(m)]
    k = n + m - 1
    rhs = np.concatenate([a, b])
    best = np.inf
    for subset in itertools.combinations(range(len(cells)), k):
        M = np.zeros((n + m, k))
        for c, idx in enumerate(subset):
            i, j = cells[idx]
            M[i, c] = 1.0
            M[n + j, c] = 1.0
        if np.linalg.matrix_rank(M) < k:
            continue
        x, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        if np.abs(M @ x - rhs).max() > 1e-10 or x.min() < -1e-12:
            continue
        cost = sum(x[c] * C[cells[idx]] for c, idx in enumerate(subset))
        best = min(best, float(cost))
    return best
