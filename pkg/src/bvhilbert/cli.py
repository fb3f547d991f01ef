"""Command-line front end: ``bvhilbert <command> --config run.json``.

Results are JSON lines.  Exit codes: 0 success, 2 configuration error,
3 integrity error (invalid Monte Carlo samples, diverging paths), 1 other
library failures.
"""
import argparse
import json
import math
import sys
import time

import numpy as np

from . import __version__
from . import config as C
from .calculus import stretched_gradient, tanh_affine
from .exceptions import BVError, ConfigError, IntegrityError
from .measures import GaussianMeasure, ProductMeasure
from .perimeter import Halfspace, halfspace_perimeter, sublevel_perimeter
from .quadrature import McEngine, McEstimate, RngStream, mc_integrate
from .semigroups import commutation_defect, dirichlet_em_apply
from .variation import direct_variation, semigroup_variation, sup_variation

COMMANDS = ("sample", "moments", "ibp-check", "variation", "perimeter", "semigroup", "commutation")
DEFAULT_SAMPLES = 1 << 16


def _jsonable(obj):
    if isinstance(obj, McEstimate):
        return _jsonable(obj.to_dict())
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _engine(args):
    return McEngine(n_samples=args.samples or DEFAULT_SAMPLES, seed=args.seed, workers=args.workers)


# --------------------------------------------------------------------------
# commands; each yields result dictionaries


def cmd_sample(cfg, args):
    measure = C.guarded(C.build_measure, cfg)
    sample = measure.sample(RngStream(args.seed, 0), cfg["count"])
    X = sample.points
    mean = sample.mean(X)
    var = sample.mean(X * X) - mean**2
    out = {"measure": measure.kind, "count": cfg["count"], "mean": mean, "variance": var,
           "meta": sample.meta}
    if cfg.get("emit_points"):
        out["points"] = X
        if sample.weights is not None:
            out["weights"] = sample.weights
    yield out


def _exact_moments(measure, N):
    if isinstance(measure, ProductMeasure):
        return measure.moment(N)
    if isinstance(measure, GaussianMeasure):
        double_fact = math.prod(range(2 * N - 1, 0, -2)) if N > 0 else 1
        return double_fact * measure.space.eigenvalues**N
    return None


def cmd_moments(cfg, args):
    measure = C.guarded(C.build_measure, cfg)
    orders = cfg.get("orders", [1, 2, 3])
    eng = _engine(args)
    ests = mc_integrate(lambda X: np.concatenate([np.abs(X) ** (2 * N) for N in orders], axis=1),
                        measure, eng.n_samples, eng.stream(0), workers=eng.workers)
    dim = measure.dim
    for j, N in enumerate(orders):
        block = ests[j * dim:(j + 1) * dim]
        exact = _exact_moments(measure, N)
        row = {"order": N, "empirical": [e.value for e in block], "stderr": [e.stderr for e in block]}
        if exact is not None:
            z = [(e.value - x) / e.stderr if e.stderr > 0 else 0.0 for e, x in zip(block, exact)]
            row.update({"exact": exact, "z_scores": z, "within_4_stderr": bool(np.all(np.abs(z) <= 4.0))})
            if isinstance(measure, ProductMeasure):
                row["b_N"] = measure.moment_b(N)
        yield row


def random_ibp_pairs(dim, count, seed):
    """Random ``(phi, z)`` pairs: ``phi`` a tanh ridge on up to two coordinates."""
    gen = RngStream(seed, 0x1B9).generator()
    pairs = []
    for _ in range(count):
        m = min(2, dim)
        idx = np.sort(gen.choice(dim, size=m, replace=False))
        phi = tanh_affine(gen.normal(0, 1.5, m), gen.normal(0, 0.5), 1.0, idx)
        z = gen.standard_normal(dim)
        pairs.append((phi, z))
    return pairs


def ibp_residuals(measure, pairs, engine, stream_id=0):
    """``int <R grad phi, z>`` and ``int v_z phi`` for each pair, on shared draws."""
    space = measure.space

    Z = np.array([z for _, z in pairs])

    def fn(X):
        # one log-derivative evaluation serves every pair
        V = measure.v_many(Z, X)
        cols = []
        for i, (phi, z) in enumerate(pairs):
            lhs = stretched_gradient(space, phi, X) @ z
            rhs = V[:, i] * phi.value(X)
            cols += [lhs, rhs, lhs - rhs]
        return np.stack(cols, axis=1)

    ests = mc_integrate(fn, measure, engine.n_samples, engine.stream(stream_id), workers=engine.workers,
                        chunk_size=engine.chunk_size)
    return [tuple(ests[3 * i:3 * i + 3]) for i in range(len(pairs))]


def cmd_ibp_check(cfg, args):
    measure = C.guarded(C.build_measure, cfg)
    n_sigma = cfg.get("n_sigma", 4.0)
    pairs = random_ibp_pairs(measure.dim, cfg.get("pairs", 20), args.seed)
    res = ibp_residuals(measure, pairs, _engine(args))
    ok_all = True
    for i, ((phi, z), (lhs, rhs, diff)) in enumerate(zip(pairs, res)):
        ok = abs(diff.value) <= n_sigma * diff.stderr
        ok_all &= ok
        yield {"pair": i, "phi_indices": list(phi.indices), "z": z, "lhs": lhs, "rhs": rhs,
               "residual": diff, "passed": bool(ok)}
    yield {"summary": True, "pairs": len(pairs), "passed": bool(ok_all)}


def cmd_variation(cfg, args):
    measure = C.guarded(C.build_measure, cfg)
    u = C.guarded(C.build_candidate, cfg["u"], measure.space)
    eng = _engine(args)
    method = cfg["method"]
    which = cfg.get("which")
    if method == "direct":
        est = direct_variation(measure, u, which or "M", cfg.get("z"), eng)
        yield {"method": method, "which": which or "M", "estimate": est}
    elif method == "sup":
        est, trace = sup_variation(measure, u, which or "V", cfg.get("z"),
                                   C.guarded(C.build_ascent, cfg.get("ascent")), eng)
        selection = [r["selection"] for r in trace["restarts"]]
        yield {"method": method, "which": which or "V", "estimate": est, "restart_selection": selection}
    else:
        if "semigroup" not in cfg:
            raise ConfigError("the semigroup method needs a 'semigroup' block")
        spec = C.guarded(C.build_semigroup, cfg["semigroup"], measure)
        t_grid = cfg["semigroup"].get("t_grid", [0.4, 0.2, 0.1, 0.05, 0.025])
        curve = semigroup_variation(spec, u, t_grid, which or "M", eng)
        yield {"method": method, "which": which or "M", "curve": curve}


def cmd_perimeter(cfg, args):
    measure = C.guarded(C.build_measure, cfg)
    s = cfg["set"]
    target = C.guarded(C.build_set, s, measure.space)
    if isinstance(target, Halfspace):
        which = s.get("which", "p")
        yield {"set": "halfspace", "which": which,
               "estimate": halfspace_perimeter(measure, target, which, _engine(args))}
    else:
        rep = sublevel_perimeter(measure, target, s.get("eps_grid"), _engine(args))
        yield {"set": "sublevel", "report": rep, "estimate": rep.value}


def cmd_semigroup(cfg, args):
    measure = C.guarded(C.build_measure, cfg)
    spec = C.guarded(C.build_semigroup, cfg["semigroup"], measure)
    f = C.guarded(C.build_function, cfg["f"])
    t = cfg["t"]
    X = np.asarray(cfg["points"], dtype=float)
    if X.shape[1] != measure.dim:
        raise ConfigError("points must match the space dimension")
    engine = cfg.get("engine", "auto")
    if spec.kind == "dirichlet_em":
        if t == 0:
            values = [{"value": float(v)} for v in f.value(X)]
        else:
            values = dirichlet_em_apply(spec, f, t, X, RngStream(args.seed, 0),
                                        paths=args.samples or spec.paths)
    else:
        if t == 0:
            values = [{"value": float(v)} for v in f.value(X)]
        else:
            K = spec.kernel(t)
            if engine == "auto":
                engine = "gh" if f.active.size <= 4 else "mc"
            if engine == "gh":
                values = [{"value": float(v)} for v in K.apply(f, X)]
            else:
                values = K.apply_mc(f, X, RngStream(args.seed, 0), args.samples or 4096)
    for x, v in zip(X, values):
        yield {"kind": spec.kind, "t": t, "point": x, "estimate": v}


def cmd_commutation(cfg, args):
    measure = C.guarded(C.build_measure, cfg)
    sg = cfg.get("semigroup", {"kind": "dirichlet_em"})
    spec = C.guarded(C.build_semigroup, sg, measure)
    f = C.guarded(C.build_function, cfg["f"])
    if cfg["k"] >= measure.dim:
        raise ConfigError("direction index k outside the space")
    res = commutation_defect(spec, f, cfg["k"], cfg["t"], cfg["points"], RngStream(args.seed, 0),
                             cfg.get("engine", "em"), args.samples or spec.paths, cfg.get("nodes", 8))
    slack = 4.0 * res.defect.stderr + 2.0 * spec.dt
    yield {"k": cfg["k"], "t": cfg["t"], "lhs": res.lhs, "rhs": res.rhs, "defect": res.defect,
           "budget": slack, "passed": bool(abs(res.defect.value) <= slack)}


HANDLERS = {"sample": cmd_sample, "moments": cmd_moments, "ibp-check": cmd_ibp_check,
            "variation": cmd_variation, "perimeter": cmd_perimeter, "semigroup": cmd_semigroup,
            "commutation": cmd_commutation}


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="bvhilbert", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=_u64, default=0)
        p.add_argument("--samples", type=_positive, default=None)
        p.add_argument("--workers", type=_positive, default=1)
        p.add_argument("--out", default=None, help="output file (default stdout)")
    return parser


def run(argv=None, stdout=None):
    """Execute one command; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    stdout = stdout or sys.stdout
    try:
        cfg = C.load_config(args.config, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    start = time.perf_counter()
    lines = []
    try:
        for result in HANDLERS[args.command](cfg, args):
            warnings = _collect_warnings(result)
            record = {"command": args.command, "params": cfg, "seed": args.seed,
                      "samples": args.samples, "workers": args.workers, "version": __version__,
                      "result": result, "warnings": warnings,
                      "elapsed_ms": round(1000.0 * (time.perf_counter() - start), 3)}
            lines.append(json.dumps(_jsonable(record), sort_keys=True, ensure_ascii=False))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return 3
    except BVError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return 0


def _collect_warnings(result):
    found = []

    def walk(obj):
        if isinstance(obj, McEstimate):
            found.extend(obj.meta.get("warnings", []))
        elif isinstance(obj, dict):
            found.extend(obj.get("warnings", []) if isinstance(obj.get("warnings"), list) else [])
            for v in obj.values():
                if isinstance(v, (dict, list, McEstimate)):
                    walk(v)
        elif isinstance(obj, list):
            for v in obj:
                walk(v)
    walk(result)
    return sorted(set(found))


def main():
    sys.exit(run())
