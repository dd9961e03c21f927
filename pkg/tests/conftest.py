import itertools

import numpy as np
import pytest
from hypothesis import strategies as st

from eqgh.metric_core import FiniteMetricSpace


def line_space(xs, name=None):
    xs = np.asarray(xs, dtype=float)
    return FiniteMetricSpace(np.abs(xs[:, None] - xs[None, :]), name=name, coords=xs[:, None])


def gh_by_relations(dx, dy):
    """d_GH as half the least distortion over every relation covering both sides.

    Walks all subsets of X x Y, so keep |X|*|Y| <= 12.
    """
    dx, dy = np.asarray(dx, float), np.asarray(dy, float)
    n, m = len(dx), len(dy)
    cells = list(itertools.product(range(n), range(m)))
    best = np.inf
    for mask in range(1, 1 << len(cells)):
        R = [c for k, c in enumerate(cells) if mask >> k & 1]
        if {i for i, _ in R} != set(range(n)) or {j for _, j in R} != set(range(m)):
            continue
        dis = max(abs(dx[a, c] - dy[b, d]) for a, b in R for c, d in R)
        best = min(best, dis)
    return best / 2


@st.composite
def integer_metrics(draw, min_n=1, max_n=5, top=4):
    """Random metric with integer-ish entries: shortest-path closure of random weights."""
    n = draw(st.integers(min_n, max_n))
    w = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            w[i, j] = w[j, i] = draw(st.integers(1, top))
    for k in range(n):
        w = np.minimum(w, w[:, [k]] + w[[k], :])
    return w


@st.composite
def plane_points(draw, min_n=2, max_n=6):
    n = draw(st.integers(min_n, max_n))
    pts = draw(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), min_size=n,
                        max_size=n, unique=True))
    return np.array(pts, dtype=float)


def plane_space(pts):
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    return FiniteMetricSpace(d, coords=pts)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
