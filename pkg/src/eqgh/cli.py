"""Command-line front end.

    eqgh gh --x A.json --y B.json
    eqgh egh --scenario example-family --n 4 --mesh 8
    eqgh shadow --delta 1e-2,1e-3,1e-4 --window 50 --out shadow.csv
    eqgh ot --space X.json --mu 0.5,0.5,0 --nu 0,0,1 --p 1
    eqgh folner --mesh 64 --step 3 --n 4,8,16,32
    eqgh scenario --scenario example-family --n 2
    eqgh paperchecks --n 4 --mesh 32

All randomness comes from --seed. CSV output starts with a version line.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import metric_core as mc
from . import wasserstein as ws
from .errors import DomainError, PreconditionError, RefusalError
from .group_actions import dGH_S_upper
from .metric_core import FiniteMetricSpace

CSV_HEADER = "# eqgh-csv v1"
COMMANDS = ("gh", "egh", "shadow", "ot", "folner", "scenario", "paperchecks")


@dataclass
class RunConfig:
    command: str
    scenario: str | None = None
    n: int | None = None
    mesh: float | None = None
    p: float = 1.0
    delta: str | None = None
    window: int | None = None
    budget: int = 2000
    seed: int = 0
    out: str | None = None
    tol: float | None = None
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------- io

def load_space(path):
    if path.startswith("bundled:"):
        text = resources.files("eqgh.data").joinpath(path.split(":", 1)[1] + ".json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    obj = json.loads(text)
    return FiniteMetricSpace(obj["dist"], points=obj.get("points"), name=obj.get("id"))


def parse_weights(text, space):
    if os.path.exists(text):
        with open(text) as fh:
            obj = json.load(fh)
        w = obj["weights"] if isinstance(obj, dict) else obj
    else:
        w = [float(t) for t in text.split(",")]
    return ws.DiscreteMeasure(space, w)


def _floats(text):
    return [float(t) for t in str(text).split(",")]


def write_csv(rows, header, out):
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    _emit(buf.getvalue(), out)


def _emit(text, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(obj, out):
    _emit(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n", out)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return str(v)


# ---------------------------------------------------------------- commands

def cmd_gh(cfg):
    X, Y = load_space(cfg.extra["x"]), load_space(cfg.extra["y"])
    try:
        exact = mc.gh_exact(X, Y, budget=cfg.extra.get("nodes"))
    except RefusalError:
        exact = None
    cf, cg = mc.gha_search(X, Y, budget=cfg.budget, seed=cfg.seed)
    tol = 1e-9 if cfg.tol is None else cfg.tol
    isometric = None if exact is None or isinstance(exact, tuple) else exact <= tol
    if isinstance(exact, tuple):
        exact = {"lower": exact[0], "upper": exact[1]}
    _emit_json({"gh_exact": exact, "isometric": isometric, "forward": cf.to_dict(),
                "backward": cg.to_dict()}, cfg.out)
    return 0


def _scenario(cfg):
    from .systems import build_scenario
    return build_scenario(cfg.scenario or "example-family", n=cfg.n, mesh=cfg.mesh,
                          window=cfg.window, seed=cfg.seed)


def cmd_egh(cfg):
    sc = _scenario(cfg)
    if not hasattr(sc, "actions"):
        raise DomainError("egh needs a scenario with two actions")
    names = list(sc.actions)
    a, b = sc.actions[names[0]], sc.actions[names[1]]
    seeds = [(sc.maps["f"], sc.maps["h"])]      # first action lives on the base space
    cert = dGH_S_upper(a, b, budget=cfg.budget, seed=cfg.seed, seeds=seeds)
    _emit_json({"scenario": sc.name, "params": sc.params, "bound": sc.bound, "slack": sc.slack,
                "epsilon": cert.epsilon, "f": cert.f.image, "g": cert.g.image,
                "report": cert.report}, cfg.out)
    return 0


def cmd_shadow(cfg):
    from .shadowing import make_pseudo_orbit, shadow_hyperbolic_toral
    from .systems import CAT_MAP, ToralSystem
    mat = cfg.extra.get("matrix")
    A = np.array(_floats(mat), dtype=int).reshape(2, 2) if mat else CAT_MAP
    system = ToralSystem({"a": A})
    rows = []
    for d in _floats(cfg.delta or "1e-2,1e-3,1e-4"):
        po = make_pseudo_orbit(system, d, window=cfg.window or 50, seed=cfg.seed)
        tr = shadow_hyperbolic_toral(po)
        rows.append((d, tr.epsilon, tr.epsilon / d if d > 0 else 0.0, tr.bound, int(tr.unique)))
    write_csv(rows, ["delta", "epsilon", "ratio", "bound", "unique"], cfg.out)
    return 0


def cmd_ot(cfg):
    X = load_space(cfg.extra["space"])
    mu, nu = parse_weights(cfg.extra["mu"], X), parse_weights(cfg.extra["nu"], X)
    val, cp = ws.wasserstein(mu, nu, cfg.p)
    rows = [("value", "", "", val)]
    for i, j in zip(*np.nonzero(cp.matrix)):
        rows.append(("coupling", int(i), int(j), float(cp.matrix[i, j])))
    write_csv(rows, ["kind", "i", "j", "value"], cfg.out)
    return 0


def cmd_folner(cfg):
    from .systems import grid_size, make_circle, rotation_action
    points = 64 if cfg.mesh is None else grid_size(cfg.mesh)
    step = int(cfg.extra.get("step") or 3)
    ns = [int(v) for v in _floats(cfg.extra.get("ns") or "4,8,16,32")]
    C = make_circle(1.0, points)
    act = rotation_action(C, {"a": step})
    mu = ws.DiscreteMeasure.dirac(C, 0)
    rows = []
    for n in ns:
        avg = ws.folner_average(mu, act, n=n)
        tight, loose = ws.averaging_defect_bound(act, n, cfg.p)
        rows.append((n, ws.invariance_defect(avg, act, p=cfg.p), tight, loose))
    write_csv(rows, ["n", "defect", "transport_bound", "mass_bound"], cfg.out)
    return 0


def cmd_scenario(cfg):
    sc = _scenario(cfg)
    obj = sc.to_dict()
    out = cfg.out
    if out is None:
        base = os.environ.get("EQGH_DATA_DIR")
        if base:
            os.makedirs(base, exist_ok=True)
            out = os.path.join(base, f"{cfg.scenario}.json")
    _emit_json(obj, out)
    return 0


def cmd_paperchecks(cfg):
    from . import checks
    only = {int(k) for k in cfg.extra["only"].split(",")} if cfg.extra.get("only") else None
    results = checks.run_all(n=cfg.n, mesh=cfg.mesh, only=only)
    lines = [r.line for r in results]
    for r in results:
        if r.key == 4:
            status = "PASS" if r.passed else "FAIL"
            for n, b, iso, eq in zip(r.detail["n"], r.detail["bound"], r.detail["isometry"],
                                     r.detail["equivariant"]):
                lines.append(f"torus x small circles n={n}: bound sqrt(2)pi/{n}={b:.6g}, "
                             f"measured {max(iso, eq):.6g} <= bound+slack, {status}")
    _emit("\n".join(lines) + "\n", cfg.out)
    return 0 if all(r.passed and r.seconds < r.limit for r in results) else 1


HANDLERS = {"gh": cmd_gh, "egh": cmd_egh, "shadow": cmd_shadow, "ot": cmd_ot,
            "folner": cmd_folner, "scenario": cmd_scenario, "paperchecks": cmd_paperchecks}


def build_parser():
    ap = argparse.ArgumentParser(prog="eqgh", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--scenario")
    ap.add_argument("--n", type=int)
    ap.add_argument("--mesh", type=float)
    ap.add_argument("--p", type=float, default=1.0)
    ap.add_argument("--delta")
    ap.add_argument("--window", type=int)
    ap.add_argument("--budget", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    ap.add_argument("--tol", type=float)
    ap.add_argument("--x", help="space JSON (or bundled:NAME)")
    ap.add_argument("--y", help="space JSON (or bundled:NAME)")
    ap.add_argument("--space", help="space JSON for ot")
    ap.add_argument("--mu")
    ap.add_argument("--nu")
    ap.add_argument("--matrix", help="2x2 integer matrix as a,b,c,d")
    ap.add_argument("--step", type=int)
    ap.add_argument("--ns", help="comma list of Folner sizes")
    ap.add_argument("--nodes", type=int, help="node budget for exact GH above 8 points")
    ap.add_argument("--only", help="comma list of check numbers")
    return ap


def run(cfg):
    if cfg.command not in HANDLERS:
        raise DomainError(f"unknown command {cfg.command!r}")
    return HANDLERS[cfg.command](cfg)


def main(argv=None):
    ap = build_parser()
    ns = ap.parse_args(argv)
    keys = ("x", "y", "space", "mu", "nu", "matrix", "step", "ns", "nodes", "only")
    extra = {k: getattr(ns, k) for k in keys if getattr(ns, k) is not None}
    need = {"gh": ("x", "y"), "ot": ("space", "mu", "nu")}.get(ns.command, ())
    missing = [k for k in need if k not in extra]
    if missing:
        ap.error(f"{ns.command} needs --{' --'.join(missing)}")
    cfg = RunConfig(ns.command, ns.scenario, ns.n, ns.mesh, ns.p, ns.delta, ns.window,
                    ns.budget, ns.seed, ns.out, ns.tol, extra)
    try:
        return run(cfg)
    except (DomainError, PreconditionError, RefusalError) as exc:
        print(f"eqgh: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
