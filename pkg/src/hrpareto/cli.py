"""Command-line interface.

    hrpareto simulate --params P.json --n N [--seed S] [--workers W] [--family F] [--out F.csv]
    hrpareto density  --params P.json --data X.csv [--out F.csv]
    hrpareto measure  --params P.json [--data X.csv] [--family F] [--seed S] [--out F.json]
    hrpareto fit      --data X.csv [--params P.json] [--model hr|gen] [--tol T] [--out F.json]
    hrpareto lrt      --data X.csv [--params P.json] [--tol T] [--out F.json]
    hrpareto oracle   --params P.json [--n N] [--seed S] [--family F] [--out F.json]

Exit status is 0 on success, 1 for invalid input and 2 for numerical
failures; errors are written to stderr as one line of JSON.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import io
from .core import GenHrParams
from .errors import BadConfig, HrParetoError, NumericalError, ValidationError
from .inference import FitOptions, fit_gen, fit_hr, lrt_equal_alpha
from .measures import (
    MeasureModel,
    breiman_sample,
    ev_copula,
    lambda_density,
    tail_V,
    tail_V_mc,
)
from .pareto import (
    log_density,
    log_density_gen,
    moments,
    norm_const,
    norm_const_mc,
    sample,
    sample_gen,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise BadConfig(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hrpareto", description="Hüsler-Reiss Pareto models")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_, *, params=False, data=False):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--params", required=params, help="JSON parameter file")
        p.add_argument("--data", required=data, help="CSV data file with header x1,...,xd")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--seed", type=int, default=0)
        return p

    p = add("simulate", "draw a sample", params=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--family", help="spectral family for the Breiman sampler")
    p.add_argument("--workers", type=int, default=1)
    add("density", "log density at data rows", params=True, data=True)
    p = add("measure", "limit-measure or normalization quantities", params=True)
    p.add_argument("--family")
    p.add_argument("--tol", type=float, default=1e-8)
    for name in ("fit", "lrt"):
        p = add(name, "maximum likelihood fit" if name == "fit" else "equal tail-index test",
                data=True)
        p.add_argument("--tol", type=float, default=1e-6)
        if name == "fit":
            p.add_argument("--model", choices=("hr", "gen"), default="hr")
    p = add("oracle", "closed forms versus Monte Carlo", params=True)
    p.add_argument("--n", type=int, default=1_000_000)
    p.add_argument("--family")
    return parser


def _is_family(obj: dict, args) -> bool:
    return bool(getattr(args, "family", None)) or "family" in obj


def _vec(x):
    return [float(v) for v in np.ravel(x)]


def _mat(x):
    return [[float(v) for v in row] for row in np.asarray(x)]


def cmd_simulate(args) -> str:
    obj = io.read_json(args.params)
    if args.n < 0:
        raise BadConfig("--n must be non-negative")
    if args.workers < 1:
        raise BadConfig("--workers must be at least 1")
    if _is_family(obj, args):
        model = io.parse_family(obj, args.family)
        X = breiman_sample(model, args.n, args.seed, obj.get("nonstandard_alpha"))
    else:
        p, a = io.parse_model(obj)
        if isinstance(p, GenHrParams):
            X = sample_gen(args.n, a, p, args.seed, workers=args.workers)
        else:
            X = sample(args.n, a, p, args.seed, workers=args.workers)
    return io.format_csv(X)


def cmd_density(args) -> str:
    p, a = io.parse_model(io.read_json(args.params))
    X = io.read_csv(args.data)
    if X.shape[0] and X.shape[1] != p.d:
        raise BadConfig(f"data has {X.shape[1]} columns, parameters have d={p.d}")
    if isinstance(p, GenHrParams):
        vals = log_density_gen(X, a, p) if X.shape[0] else np.zeros(0)
    else:
        vals = log_density(X, a, p) if X.shape[0] else np.zeros(0)
    return io.format_csv(np.atleast_1d(vals), ["logdensity"])


def _measure_family(model: MeasureModel, points: np.ndarray, seed: int) -> dict:
    rows = []
    for x in points:
        row = {"point": _vec(x)}
        try:
            row["lambda"] = float(lambda_density(model, x))
        except ValidationError:
            row["lambda"] = None
        if np.all(x > 0):
            v = tail_V(model, x, seed=seed)
            row["V"] = {"value": v.value, "abs_error": v.error, "method": v.method}
        else:
            row["V"] = None
        if np.all((x > 0) & (x < 1)):
            row["copula"] = ev_copula(model, x, seed=seed)
        else:
            row["copula"] = None
        rows.append(row)
    return {"family": type(model.family).__name__.lower(), "alpha": model.alpha,
            "d": model.d, "evaluations": rows}


def cmd_measure(args) -> str:
    obj = io.read_json(args.params)
    if _is_family(obj, args):
        model = io.parse_family(obj, args.family)
        if args.data:
            pts = io.read_csv(args.data)
        else:
            pts = np.array([np.full(model.d, 0.5), np.ones(model.d), np.full(model.d, 2.0)])
        return io.dumps(_measure_family(model, pts, args.seed))
    p, a = io.parse_model(obj)
    if isinstance(p, GenHrParams):
        raise BadConfig("measure expects standard-model parameters or a family")
    c, err = norm_const(a, p, tol=args.tol)
    m1 = moments(a, p)
    m2 = moments(a, p, rel_step=2e-4)
    return io.dumps({
        "d": p.d,
        "alpha": p.alpha,
        "norm_const": {"value": c, "abs_error": err},
        "moments": {
            "mean_log": {"value": _vec(m1.mean_log),
                         "abs_error": _vec(np.abs(m1.mean_log - m2.mean_log))},
            "cov_log": {"value": _mat(m1.cov_log),
                        "abs_error": _mat(np.abs(m1.cov_log - m2.cov_log))},
        },
    })


def _fit_inputs(args):
    X = io.read_csv(args.data)
    obj = io.read_json(args.params) if args.params else None
    a = io.parse_threshold(obj, X.shape[1])
    return X, a, FitOptions(tol=args.tol, seed=args.seed)


def cmd_fit(args) -> str:
    X, a, opts = _fit_inputs(args)
    rep = (fit_hr if args.model == "hr" else fit_gen)(X, a, opts)
    out = rep.to_dict()
    out["model"] = args.model
    return io.dumps(out)


def cmd_lrt(args) -> str:
    X, a, opts = _fit_inputs(args)
    res = lrt_equal_alpha(X, a, opts)
    out = res.to_dict()
    out["loglik_hr"] = res.fit_hr.loglik
    out["loglik_gen"] = res.fit_gen.loglik
    return io.dumps(out)


def _row(name, closed, err, mc, se) -> dict:
    z = (closed - mc) / math.hypot(se, err) if (se or err) else 0.0
    return {"quantity": name, "closed_form": closed, "closed_form_error": err,
            "monte_carlo": mc, "std_error": se, "z_score": z}


def cmd_oracle(args) -> str:
    obj = io.read_json(args.params)
    if args.n < 2:
        raise BadConfig("--n must be at least 2")
    rows = []
    if _is_family(obj, args):
        model = io.parse_family(obj, args.family)
        for x in (np.ones(model.d), np.linspace(0.5, 2.0, model.d)):
            v = tail_V(model, x, seed=args.seed)
            m = tail_V_mc(model, x, args.n, args.seed + 1)
            rows.append(_row(f"V({','.join(f'{t:g}' for t in x)})", v.value, v.error,
                             m.value, m.error))
        return io.dumps({"family": type(model.family).__name__.lower(), "rows": rows})
    p, a = io.parse_model(obj)
    if isinstance(p, GenHrParams):
        raise BadConfig("oracle expects standard-model parameters or a family")
    c, err = norm_const(a, p)
    mc, se = norm_const_mc(a, p, args.n, args.seed)
    rows.append(_row("norm_const", c, err, mc, se))
    mo = moments(a, p)
    Z = sample(args.n, a, p, args.seed)
    lz = np.log(Z)
    for i in range(p.d):
        rows.append(_row(f"mean_log[{i + 1}]", float(mo.mean_log[i]), 0.0,
                         float(lz[:, i].mean()), float(lz[:, i].std(ddof=1) / math.sqrt(args.n))))
    return io.dumps({"model": "hr", "rows": rows})


COMMANDS = {"simulate": cmd_simulate, "density": cmd_density, "measure": cmd_measure,
            "fit": cmd_fit, "lrt": cmd_lrt, "oracle": cmd_oracle}


def _error_line(exc: Exception) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc)})


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        text = COMMANDS[args.command](args)
        if args.out:
            io.write_text(args.out, text)
        else:
            sys.stdout.write(text)
        return 0
    except ValidationError as exc:
        sys.stderr.write(_error_line(exc) + "\n")
        return 1
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        sys.stderr.write(_error_line(exc) + "\n")
        return 2
    except HrParetoError as exc:
        sys.stderr.write(_error_line(exc) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
