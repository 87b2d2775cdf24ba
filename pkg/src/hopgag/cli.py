"""Command line front door: ``hopgag {entmax,retrieve,attend,iterate,experiment}``.

Exit codes: 0 success, 1 invalid input, 2 numerical failure.
"""
import argparse
import csv
import json
import math
import sys

import numpy as np

from .attention import AttentionBatch, attention, gag_attention
from .errors import HopgagError, InvalidInputError, NumericalError
from .experiments import ExperimentSpec, run_experiment, write_report
from .fixed_point import (
    GuidanceParams,
    affine_operator,
    anderson_iterate,
    gag_iterate,
    hopfield_operator,
    km_iterate,
    picard_iterate,
)
from .hopfield import HopfieldConfig, PatternMatrix, energy, retrieve
from .io import load_json, load_matrix, matrix_from_json, matrix_to_json, vector_from_json
from .probability import alpha_entmax, threshold_and_support

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _emit(obj):
    json.dump(obj, sys.stdout)
    sys.stdout.write("\n")


def cmd_entmax(args):
    logits = load_matrix(args.logits)
    probs, taus, kappas = [], [], []
    for row in logits:
        probs.append(alpha_entmax(row, args.alpha, args.beta))
        rep = threshold_and_support(row, args.alpha, args.beta)
        taus.append(rep.tau)
        kappas.append(rep.kappa)
    _emit({"probs": matrix_to_json(np.stack(probs)), "tau": taus, "kappa": kappas})


def cmd_retrieve(args):
    xi = PatternMatrix(load_matrix(args.patterns))
    query = load_matrix(args.query)
    if query.shape[0] != 1:
        raise InvalidInputError("query must be a vector (rows == 1)")
    x = query[0]
    cfg = HopfieldConfig(alpha=args.alpha, beta=args.beta)
    out = retrieve(x, xi, cfg)
    _emit({"state": matrix_to_json(out), "energy_before": energy(x, xi, cfg),
           "energy_after": energy(out, xi, cfg)})


def _load_batch(path):
    obj = load_json(path)
    if not isinstance(obj, dict) or set(obj) != {"Q", "K", "V"}:
        raise InvalidInputError("batch file must be an object with exactly Q, K and V matrices")
    return AttentionBatch(*(matrix_from_json(obj[k], k) for k in ("Q", "K", "V")))


def cmd_attend(args):
    batch = _load_batch(args.batch)
    if args.lam is None:
        out = attention(batch, args.alpha)
    else:
        params = GuidanceParams(lam=args.lam, zeta=args.zeta, eta=args.eta, alpha=args.alpha)
        out = gag_attention(batch, params)
    _emit({"rows": matrix_to_json(out.rows)})


_ITERATE_KEYS = {"operator", "dense", "x0", "x_star", "tol", "max_iter", "relax", "memory",
                 "omega", "guidance"}


def _operator_from_json(obj):
    if not isinstance(obj, dict) or "kind" not in obj:
        raise InvalidInputError("operator must be an object with a 'kind'")
    kind = obj["kind"]
    if kind == "hopfield":
        extra = set(obj) - {"kind", "patterns", "alpha", "beta"}
        if extra:
            raise InvalidInputError(f"unknown hopfield operator keys: {sorted(extra)}")
        xi = PatternMatrix(matrix_from_json(obj["patterns"], "patterns"))
        return hopfield_operator(xi, obj.get("alpha", 1.0), obj.get("beta")), xi
    if kind == "affine":
        extra = set(obj) - {"kind", "A", "b"}
        if extra:
            raise InvalidInputError(f"unknown affine operator keys: {sorted(extra)}")
        b = vector_from_json(obj["b"], "b") if "b" in obj else None
        return affine_operator(matrix_from_json(obj["A"], "A"), b), None
    raise InvalidInputError(f"unknown operator kind {kind!r}")


def cmd_iterate(args):
    spec = load_json(args.spec)
    if not isinstance(spec, dict):
        raise InvalidInputError("iteration spec must be a JSON object")
    unknown = set(spec) - _ITERATE_KEYS
    if unknown:
        raise InvalidInputError(f"unknown iteration spec keys: {sorted(unknown)}")
    if "operator" not in spec or "x0" not in spec:
        raise InvalidInputError("iteration spec needs 'operator' and 'x0'")
    F, xi = _operator_from_json(spec["operator"])
    x0 = vector_from_json(spec["x0"], "x0")
    tol = float(spec.get("tol", 1e-8))
    max_iter = int(spec.get("max_iter", 1000))

    if args.method == "picard":
        trace = picard_iterate(F, x0, tol, max_iter)
    elif args.method == "km":
        trace = km_iterate(F, x0, float(spec.get("relax", 0.5)), tol, max_iter)
    elif args.method == "aa":
        trace = anderson_iterate(F, x0, int(spec.get("memory", 1)), spec.get("omega"), tol, max_iter)
    else:
        if "dense" in spec:
            D, _ = _operator_from_json(spec["dense"])
        elif xi is not None:
            D = hopfield_operator(xi, 1.0, spec["operator"].get("beta"))
        else:
            raise InvalidInputError("gag needs a 'dense' operator for non-Hopfield maps")
        g = dict(spec.get("guidance", {}))
        if g.get("eta", 0) is None:
            g["eta"] = math.inf
        params = GuidanceParams(**g)
        x_star = vector_from_json(spec["x_star"], "x_star") if "x_star" in spec else None
        trace = gag_iterate(F, D, x0, params, x_star, tol, max_iter)

    rows = trace.to_rows()
    writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: format(v, ".17g") if isinstance(v, float) else v for k, v in row.items()})
    print(f"converged={trace.converged} iterations={trace.iterations_used}", file=sys.stderr)


def cmd_experiment(args):
    spec = ExperimentSpec.from_dict(load_json(args.spec))
    report = run_experiment(spec)
    write_report(report, args.out, args.format)


def build_parser():
    parser = _Parser(prog="hopgag", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("entmax", help="alpha-entmax of each logit row")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--logits", required=True)
    p.set_defaults(func=cmd_entmax)

    p = sub.add_parser("retrieve", help="one Hopfield retrieval step")
    p.add_argument("--patterns", required=True, help="d x M matrix, one pattern per column")
    p.add_argument("--query", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=None, help="defaults to 1/sqrt(d)")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("attend", help="sparse/dense attention, guided when --lambda is given")
    p.add_argument("--batch", required=True)
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--zeta", type=float, default=0.0)
    p.add_argument("--eta", type=float, default=15.0)
    p.set_defaults(func=cmd_attend)

    p = sub.add_parser("iterate", help="run a fixed-point driver, trace as CSV on stdout")
    p.add_argument("--method", choices=["picard", "km", "aa", "gag"], required=True)
    p.add_argument("--spec", required=True)
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("experiment", help="run a seeded experiment and write its report")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except NumericalError as exc:
        print(f"hopgag: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (HopgagError, KeyError, TypeError, ValueError) as exc:
        print(f"hopgag: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
