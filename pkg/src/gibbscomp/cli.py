"""Command-line front end.

Exit codes: 0 success, 2 parse/usage error, 3 oracle guard exceeded,
4 certification failed, 5 infeasible.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import comparison as cmp
from .blockpf import bias_experiment, feasibility_search, variance_experiment
from .core import LocalFunction
from .hmm import EnvelopeError, LatticeHMM, Partition, build_grid_model, geometry
from .io import (
    FormatError,
    dump_factor_model,
    dump_lattice_model,
    json_document,
    load_any_model,
    load_metrics,
)
from .matrices import NEUMANN_MAX_TERMS, NEUMANN_TOL
from .oracle import FactorModel, GuardExceeded, grid_edges, ising_model, jitter_model, normalize, random_pairwise_model
from .core import StateSpace

EXIT_OK, EXIT_PARSE, EXIT_GUARD, EXIT_UNCERTIFIED, EXIT_INFEASIBLE = 0, 2, 3, 4, 5
THREADS_ENV = "GIBBSCOMP_THREADS"


class UsageError(ValueError):
    pass


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _read(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def _write(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _shape(s: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in s.lower().split("x"))
    except ValueError:
        raise UsageError(f"bad shape {s!r}; use e.g. 2x3 or 8") from None


def _tolerances() -> dict:
    return {
        "neumann_tol": NEUMANN_TOL,
        "neumann_max_terms": NEUMANN_MAX_TERMS,
        "power_search_max": cmp.POWER_SEARCH_MAX,
        "invariance_tol": cmp.INVARIANCE_TOL,
        "coupling": cmp.COUPLING_KIND,
    }


# ---------------------------------------------------------------- helpers for factor models


def _factor_model(path: str) -> FactorModel:
    model = load_any_model(_read(path))
    if not isinstance(model, FactorModel):
        raise UsageError(f"{path} is not a factor model")
    return model


def _lattice_model(path: str) -> LatticeHMM:
    model = load_any_model(_read(path))
    if not isinstance(model, LatticeHMM):
        raise UsageError(f"{path} is not a lattice HMM")
    return model


def _cover(spec: str, model: FactorModel, weights: str | None) -> cmp.Cover:
    n = model.space.n_sites
    if spec == "singleton":
        cover = cmp.singleton_cover(n)
    elif spec == "edges":
        cover = cmp.edge_cover([r for r, _ in model.factors if len(r) == 2], n)
    elif spec.startswith("temporal:"):
        try:
            q = int(spec.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad cover {spec!r}") from None
        cover = cmp.temporal_cover(model.space, q)
    else:
        raise UsageError(f"unknown cover {spec!r}")
    if weights:
        try:
            w = [float(x) for x in weights.split(",")]
        except ValueError:
            raise UsageError("weights must be comma-separated numbers") from None
        cover = cmp.Cover(cover.regions, w if len(w) > 1 else w * len(cover.regions))
    return cover


def _metric(spec: str, space):
    if spec in (None, "trivial"):
        return None
    return load_metrics(_read(spec), space)


def _factor_distance(model: FactorModel) -> np.ndarray:
    """Graph distance on sites induced by shared factors (for condition 6)."""
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import shortest_path

    n = model.space.n_sites
    rows, cols = [], []
    for region, _ in model.factors:
        for a in region:
            for b in region:
                if a != b:
                    rows.append(a)
                    cols.append(b)
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    d = shortest_path(adj, directed=False, unweighted=True)
    d[~np.isfinite(d)] = n  # disconnected components: any finite separation works
    return d


def _partition(spec: str, n_vertices: int) -> Partition:
    if spec == "single":
        return Partition.single(n_vertices)
    if spec == "singletons":
        return Partition.contiguous(n_vertices, 1)
    if spec.startswith("blocks:"):
        try:
            return Partition.contiguous(n_vertices, int(spec.split(":", 1)[1]))
        except ValueError:
            raise UsageError(f"bad partition {spec!r}") from None
    try:
        p = Partition(tuple(tuple(int(v) for v in blk.split(",")) for blk in spec.split(";")))
        p.validate(n_vertices)
        return p
    except ValueError as e:
        raise UsageError(f"bad partition {spec!r}: {e}") from None


# ---------------------------------------------------------------- commands


def cmd_gen_model(args) -> int:
    rng = np.random.default_rng(args.seed)
    shape = _shape(args.shape)
    if args.kind == "lattice":
        model = build_grid_model(shape, r=args.r, eps=args.eps, delta_floor=args.delta, kappa=args.kappa,
                                 seed=args.seed, k=args.k, obs_k=args.obs_k, periodic=not args.open)
        _write(dump_lattice_model(model), args.out)
        return EXIT_OK
    rows, cols = (1, shape[0]) if len(shape) == 1 else shape
    space = StateSpace((args.k,) * (rows * cols))
    edges = grid_edges(rows, cols, periodic=args.periodic)
    if args.kind == "pairwise":
        model = random_pairwise_model(space, edges, rng, scale=args.scale)
    elif args.kind == "ising":
        model = ising_model(space, {e: args.beta for e in edges})
    else:  # product
        model = FactorModel(space, [((i,), np.exp(rng.uniform(-args.scale, args.scale, args.k))) for i in range(space.n_sites)])
    if args.jitter:
        model = jitter_model(model, np.random.default_rng([args.seed, 1]), args.jitter)
    _write(dump_factor_model(model), args.out)
    return EXIT_OK


def _functions(args, space) -> list[tuple[str, LocalFunction]]:
    specs = args.function or [f"{i}:{space.cards[i] - 1}" for i in range(space.n_sites)]
    out = []
    for s in specs:
        try:
            i, v = (int(p) for p in s.split(":"))
            out.append((f"1[x_{i}={v}]", LocalFunction.indicator(i, v, space.cards[i])))
        except (ValueError, IndexError):
            raise UsageError(f"bad function {s!r}; use site:value") from None
    return out


def cmd_bound(args) -> int:
    a = _factor_model(args.model)
    b = _factor_model(args.model_b) if args.model_b else a
    if a.space.cards != b.space.cards:
        raise UsageError("models live on different spaces")
    rho, rho_t = normalize(a), normalize(b)
    cover = _cover(args.cover, a, args.weights)
    metric = _metric(args.metric, a.space)
    if args.oneside:
        tau = cmp.site_times(a.space)
        rule = cmp.build_oneside_rule(rho, rho_t, cover, tau, metric)
    else:
        rule = cmp.build_rule(rho, rho_t, cover, metric)
    results = []
    report = None
    for name, f in _functions(args, a.space):
        report = cmp.main_bound(rule, f)
        results.append({"function": name, "bound": report.bound, "exact": report.exact, "oscillation": report.delta_f})
    doc = json_document("bound-report", {
        "seed": args.seed,
        "tolerances": _tolerances(),
        "cover": {"regions": cover.regions, "weights": cover.weights},
        "certified": report.certified,
        "certificate": {"condition": report.certificate.condition, "witness": report.certificate.witness},
        "flags": report.flags,
        "W_diag": np.diag(report.W),
        "R": report.R,
        "a": report.a,
        "results": results,
    })
    _write(doc, args.out)
    return EXIT_OK if report.certified else EXIT_UNCERTIFIED


def cmd_certify(args) -> int:
    a = _factor_model(args.model)
    b = _factor_model(args.model_b) if args.model_b else a
    rho, rho_t = normalize(a), normalize(b)
    cover = _cover(args.cover, a, args.weights)
    metric = _metric(args.metric, a.space)
    rule = cmp.build_rule(rho, rho_t, cover, metric)
    pm = _factor_distance(a) if args.condition == 6 else None
    cert = cmp.certify(rule, args.condition, pseudometric=pm)
    doc = json_document("uniqueness-certificate", {
        "seed": args.seed,
        "tolerances": _tolerances(),
        "condition": cert.condition,
        "passed": cert.passed,
        "witness": cert.witness,
        "cover": {"regions": cover.regions, "weights": cover.weights},
        "flags": rule.flags,
    })
    _write(doc, args.out)
    return EXIT_OK if cert.passed else EXIT_UNCERTIFIED


def cmd_filter_bias(args) -> int:
    model = _lattice_model(args.model)
    part = _partition(args.partition, model.n_vertices)
    seeds = [args.seed + i for i in range(args.seeds)]
    curve = bias_experiment(model, part, args.n, seeds, experiment_id=args.experiment_id or "bias", threads=args.threads)
    _write(curve.to_csv(), args.out)
    return EXIT_OK


def cmd_filter_variance(args) -> int:
    model = _lattice_model(args.model)
    part = _partition(args.partition, model.n_vertices)
    try:
        Ns = [int(x) for x in args.N.split(",")]
        J = tuple(int(x) for x in args.sites.split(","))
    except ValueError:
        raise UsageError("--N and --sites take comma-separated integers") from None
    curve = variance_experiment(model, part, args.n, Ns, args.seeds, obs_seed=args.seed, J=J,
                                experiment_id=args.experiment_id or "variance", threads=args.threads)
    _write(curve.to_csv(), args.out)
    return EXIT_OK


def cmd_feasibility(args) -> int:
    Delta, Delta_K = args.Delta, args.Delta_K
    if args.model:
        model = _lattice_model(args.model)
        geo = geometry(_partition(args.partition, model.n_vertices), model.graph)
        Delta, Delta_K = geo.Delta, geo.Delta_K
    if Delta is None:
        raise UsageError("give --Delta or --model")
    res = feasibility_search(args.eps, args.delta, args.r, Delta, Delta_K)
    doc = json_document("feasibility", {
        "inputs": {"eps": args.eps, "delta": args.delta, "r": args.r, "Delta": Delta, "Delta_K": Delta_K},
        "feasible": res.feasible, "q": res.q, "beta": res.beta, "c_bias": res.c, "c_variance": res.c_variance,
        "regime": res.regime, "rate_exponent": res.rate_exponent, "grid": res.grid,
    })
    _write(doc, args.out)
    return EXIT_OK if res.feasible else EXIT_INFEASIBLE


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gibbscomp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", default=None, help="output path (default stdout)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=_default_threads(),
                        help=f"worker threads (default ${THREADS_ENV} or 1)")

    g = sub.add_parser("gen-model", help="generate a random model file")
    common(g)
    g.add_argument("--kind", choices=["pairwise", "ising", "product", "lattice"], default="pairwise")
    g.add_argument("--shape", default="2x3")
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--scale", type=float, default=0.5)
    g.add_argument("--jitter", type=float, default=0.0)
    g.add_argument("--beta", type=float, default=0.2)
    g.add_argument("--periodic", action="store_true", help="periodic grid edges for factor models")
    g.add_argument("--r", type=int, default=1)
    g.add_argument("--eps", type=float, default=0.9)
    g.add_argument("--delta", type=float, default=0.5)
    g.add_argument("--kappa", type=float, default=0.5)
    g.add_argument("--obs-k", type=int, default=2)
    g.add_argument("--open", action="store_true", help="open (non-periodic) lattice boundary")
    g.set_defaults(func=cmd_gen_model)

    for name, func, helptext in (("bound", cmd_bound, "comparison bound between two models"),
                                 ("certify", cmd_certify, "uniqueness certificate")):
        s = sub.add_parser(name, help=helptext)
        common(s)
        s.add_argument("--model", required=True)
        s.add_argument("--model-b", default=None)
        s.add_argument("--cover", default="singleton", help="singleton | edges | temporal:q")
        s.add_argument("--weights", default=None, help="comma-separated cover weights")
        s.add_argument("--metric", default="trivial", help="trivial or a metric file")
        s.set_defaults(func=func)
    sub.choices["bound"].add_argument("--function", action="append", help="site:value indicator (repeatable)")
    sub.choices["bound"].add_argument("--oneside", action="store_true", help="one-sided rule from time labels")
    sub.choices["certify"].add_argument("--condition", type=int, choices=range(1, 7), default=3)

    fb = sub.add_parser("filter-bias", help="block filter localization error per site")
    common(fb)
    fb.add_argument("--model", required=True)
    fb.add_argument("--partition", default="blocks:2", help="single | singletons | blocks:m | '0,1;2,3'")
    fb.add_argument("--n", type=int, default=10)
    fb.add_argument("--seeds", type=int, default=20, help="number of observation sequences")
    fb.add_argument("--experiment-id", default=None)
    fb.set_defaults(func=cmd_filter_bias)

    fv = sub.add_parser("filter-variance", help="block particle filter sampling error against N")
    common(fv)
    fv.add_argument("--model", required=True)
    fv.add_argument("--partition", default="single")
    fv.add_argument("--n", type=int, default=5)
    fv.add_argument("--N", default="100,400,1600,6400")
    fv.add_argument("--seeds", type=int, default=50, help="number of replicate runs")
    fv.add_argument("--sites", default="0", help="comma-separated sites J")
    fv.add_argument("--experiment-id", default=None)
    fv.set_defaults(func=cmd_filter_variance)

    fe = sub.add_parser("feasibility", help="search (q, beta) making the contraction constant < 1")
    common(fe)
    fe.add_argument("--eps", type=float, required=True)
    fe.add_argument("--delta", type=float, required=True)
    fe.add_argument("--r", type=int, default=1)
    fe.add_argument("--Delta", type=int, default=None)
    fe.add_argument("--Delta-K", type=int, default=None)
    fe.add_argument("--model", default=None, help="take Delta and Delta_K from a lattice model")
    fe.add_argument("--partition", default="single")
    fe.set_defaults(func=cmd_feasibility)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (UsageError, FormatError, EnvelopeError) as e:
        print(f"gibbscomp: error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except GuardExceeded as e:
        print(f"gibbscomp: guard exceeded: {e}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())
