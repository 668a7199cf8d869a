"""Command-line front end.

Exit codes: 0 success, 1 domain failure (validation, contradictory evidence,
oracle disagreement), 2 usage, I/O or parse errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from typing import Any, Sequence

import numpy as np

from . import boolean, gaussian, oracle
from .dsl import DslError, ModelDocument, parse_model, parse_query
from .model import (
    DEFAULT_TOLERANCES,
    BooleanScm,
    ContradictoryEvidenceError,
    LinearScm,
    ModelError,
    Query,
    SingularSystemError,
    validate_linear,
)

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2

DOMAIN_ERRORS = (
    ContradictoryEvidenceError,
    SingularSystemError,
    boolean.TooManyRootsError,
    oracle.ZeroAcceptanceError,
)


class UsageError(Exception):
    pass


class DomainError(Exception):
    pass


# --- helpers --------------------------------------------------------------


def _load(path: str) -> ModelDocument:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return parse_model(data)
    except DslError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _query(args: argparse.Namespace) -> Query:
    if args.query is not None and args.query_file is not None:
        raise UsageError("give the query inline or with --query-file, not both")
    if args.query_file is not None:
        try:
            with open(args.query_file, "rb") as fh:
                text: Any = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read {args.query_file}: {exc.strerror}") from None
    else:
        text = args.query or ""
    try:
        return parse_query(text)
    except DslError as exc:
        raise UsageError(f"query: {exc}") from None


def _require_linear(doc: ModelDocument, command: str) -> LinearScm:
    if not isinstance(doc.body, LinearScm):
        raise UsageError(f"{command} needs a linear model; {doc.name!r} is boolean")
    return doc.body


def _checked_linear(doc: ModelDocument, command: str) -> LinearScm:
    model = _require_linear(doc, command)
    report = validate_linear(model)
    if not report.passed:
        raise DomainError("model failed validation:\n" + str(report))
    return model


def _check_names(variables: Sequence[str], names) -> None:
    unknown = [n for n in names if n not in variables]
    if unknown:
        raise UsageError("unknown variable(s): " + ", ".join(unknown))


def _fmt(x: float) -> str:
    text = f"{x:.2f}"
    return "0.00" if text == "-0.00" else text


def _matrix(m: np.ndarray) -> list[list[float]]:
    return [[float(v) for v in row] for row in m]


def _tolerances() -> dict[str, float]:
    return dataclasses.asdict(DEFAULT_TOLERANCES)


def _kind(query: Query) -> str:
    if query.observations and query.intervention:
        return "counterfactual"
    if query.intervention:
        return "interventional"
    return "conditional"


def _emit(payload: dict[str, Any], text: str, as_json: bool) -> None:
    if as_json:
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    else:
        sys.stdout.write(text.rstrip("\n") + "\n")


def _moments_table(m: gaussian.GaussianMoments) -> str:
    width = max([8, *(len(v) + 2 for v in m.variables)])
    lines = [f"{'variable':<{width}}{'mean':>10}{'variance':>10}"]
    for i, v in enumerate(m.variables):
        lines.append(f"{v:<{width}}{_fmt(m.mean[i]):>10}{_fmt(m.cov[i, i]):>10}")
    if len(m.variables) > 1:
        lines.append("covariance")
        lines.append(" " * width + "".join(f"{v:>10}" for v in m.variables))
        for i, v in enumerate(m.variables):
            lines.append(f"{v:<{width}}" + "".join(f"{_fmt(c):>10}" for c in m.cov[i]))
    return "\n".join(lines)


# --- commands -------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    doc = _load(args.model)
    if isinstance(doc.body, LinearScm):
        report = validate_linear(doc.body)
        payload = {
            "command": "validate",
            "model": doc.name,
            "kind": doc.kind,
            "passed": report.passed,
            "symmetry_defect": report.symmetry_defect,
            "min_eigenvalue": report.min_eigenvalue,
            "rcond": report.rcond,
            "self_loops": list(report.self_loops),
            "messages": list(report.messages),
        }
        _emit(payload, f"{doc.name}: {report}", args.json)
        if not report.passed:
            print("validation failed: " + "; ".join(report.messages), file=sys.stderr)
        return EXIT_OK if report.passed else EXIT_DOMAIN
    body = doc.body
    payload = {
        "command": "validate",
        "model": doc.name,
        "kind": doc.kind,
        "passed": True,
        "roots": len(body.roots),
        "abnormals": len(body.abnormals),
        "messages": [],
    }
    _emit(payload, f"{doc.name}: PASS\n  {len(body.roots)} roots, acyclic", args.json)
    return EXIT_OK


def cmd_describe(args: argparse.Namespace) -> int:
    doc = _load(args.model)
    body = doc.body
    if isinstance(body, LinearScm):
        payload = {
            "command": "describe",
            "model": doc.name,
            "kind": doc.kind,
            "variables": list(body.variables),
            "coeff": _matrix(body.coeff),
            "dist_mean": [float(v) for v in body.dist_mean],
            "dist_cov": _matrix(body.dist_cov),
        }
        lines = [f"linear model {doc.name} ({body.n} variables)"]
        for i, v in enumerate(body.variables):
            terms = [f"{body.coeff[i, j]:+g}*{w}" for j, w in enumerate(body.variables) if body.coeff[i, j] != 0]
            lines.append(f"  {v} = {' '.join(terms + ['+eps'])}".replace("= +", "= "))
            lines.append(f"      eps_{v} ~ N({body.dist_mean[i]:g}, {body.dist_cov[i, i]:g})")
    else:
        payload = {
            "command": "describe",
            "model": doc.name,
            "kind": doc.kind,
            "variables": list(body.variables),
            "roots": list(body.roots),
            "abnormals": list(body.abnormals),
            "equations": {k: e.to_text() for k, e in body.equations.items()},
            "weights": dict(body.weights),
        }
        lines = [f"boolean model {doc.name} ({len(body.variables)} variables)"]
        lines.append("  roots: " + " ".join(body.roots))
        if body.abnormals:
            lines.append("  abnormal: " + " ".join(body.abnormals))
        lines.extend(f"  {k} = {e.to_text()}" for k, e in body.equations.items())
    _emit(payload, "\n".join(lines), args.json)
    return EXIT_OK


def _linear_query(doc: ModelDocument, query: Query, args: argparse.Namespace) -> int:
    model = _checked_linear(doc, "query")
    _check_names(model.variables, query.variables())
    if query.consequent_values:
        raise UsageError("'ask v=value' is only meaningful for boolean models")
    if query.observations and query.intervention:
        result = gaussian.counterfactual(model, query.observations, query.intervention)
    elif query.intervention:
        result = gaussian.intervene(model, query.intervention)
    else:
        result = gaussian.condition(model, query.observations)
    asked = model.variables if (args.full_joint or not query.consequents) else query.consequents
    shown = result.marginal(asked)
    kind = _kind(query)
    payload = {
        "command": "query",
        "model": doc.name,
        "query": query.to_text(),
        "kind": kind,
        "variables": list(shown.variables),
        "mean": [float(v) for v in shown.mean],
        "cov": _matrix(shown.cov),
        "metadata": {"tolerances": _tolerances(), **result.info},
    }
    text = f"{kind} query on {doc.name}: {query.to_text() or '(prior)'}\n" + _moments_table(shown)
    _emit(payload, text, args.json)
    return EXIT_OK


def _boolean_query(doc: ModelDocument, query: Query, args: argparse.Namespace) -> int:
    model = doc.body
    assert isinstance(model, BooleanScm)
    _check_names(model.variables, query.variables())
    asked = query.consequents or tuple(v for v in model.variables if v not in model.roots)
    propositions = {v: query.consequent_values.get(v, 1) for v in asked}
    try:
        verdict = boolean.counterfactual_bool(
            model, query.observations, query.intervention, propositions, max_roots=args.max_roots
        )
        belief = boolean.abduce(model, query.observations, max_roots=args.max_roots)
    except DOMAIN_ERRORS:
        raise
    except ModelError as exc:
        raise UsageError(str(exc)) from None
    worlds = [
        {"roots": w.as_dict(), "outcome": outcome} for w, outcome in verdict.per_world
    ]
    payload: dict[str, Any] = {
        "command": "query",
        "model": doc.name,
        "query": query.to_text(),
        "kind": "boolean-verdict",
        "abnormality_count": belief.abnormality_count,
        "total_consistent": belief.total_consistent,
        "propositions": verdict.propositions,
        "aggregate": {k: v.value for k, v in verdict.aggregate.items()},
        "worlds": worlds,
    }
    if model.weights:
        payload["ranking"] = [
            {"roots": w.as_dict(), "score": score} for w, score in belief.ranked(model)
        ]
    lines = [
        f"boolean query on {doc.name}: {query.to_text()}",
        f"minimal worlds: {len(verdict.per_world)} with {belief.abnormality_count} abnormalities "
        f"({belief.total_consistent} consistent in total)",
    ]
    for w, outcome in verdict.per_world:
        lines.append(f"  {w}  ->  " + ", ".join(f"{k}={v}" for k, v in outcome.items()))
    for k, v in verdict.aggregate.items():
        lines.append(f"{k}={verdict.propositions[k]}: {v.value}")
    _emit(payload, "\n".join(lines), args.json)
    return EXIT_OK


def cmd_query(args: argparse.Namespace) -> int:
    doc = _load(args.model)
    query = _query(args)
    if isinstance(doc.body, LinearScm):
        return _linear_query(doc, query, args)
    return _boolean_query(doc, query, args)


def cmd_compare(args: argparse.Namespace) -> int:
    doc = _load(args.model)
    model = _checked_linear(doc, "compare")
    query = _query(args)
    _check_names(model.variables, query.variables())
    as_observed = {**query.observations, **query.intervention}
    columns = {
        "conditional": gaussian.condition(model, as_observed),
        "interventional": gaussian.intervene(model, query.intervention),
        "counterfactual": gaussian.counterfactual(model, query.observations, query.intervention),
    }
    asked = query.consequents or model.variables
    payload = {
        "command": "compare",
        "model": doc.name,
        "query": query.to_text(),
        "variables": list(asked),
        "columns": {
            name: {
                "mean": [m.mean_of(v) for v in asked],
                "variance": [m.variance(v) for v in asked],
            }
            for name, m in columns.items()
        },
    }
    width = max([10, *(len(v) + 2 for v in asked)])
    lines = [
        f"compare on {doc.name}: {query.to_text() or '(no query)'}",
        " " * width + "".join(f"{name:>16}" for name in columns),
    ]
    for v in asked:
        lines.append(f"{v + ' mean':<{width}}" + "".join(f"{_fmt(m.mean_of(v)):>16}" for m in columns.values()))
        lines.append(f"{v + ' var':<{width}}" + "".join(f"{_fmt(m.variance(v)):>16}" for m in columns.values()))
    _emit(payload, "\n".join(lines), args.json)
    return EXIT_OK


def cmd_oracle_check(args: argparse.Namespace) -> int:
    doc = _load(args.model)
    model = _checked_linear(doc, "oracle-check")
    query = _query(args)
    _check_names(model.variables, query.variables())
    if args.n < 2 or not args.delta > 0:
        raise UsageError("--n must be at least 2 and --delta positive")
    analytic = gaussian.counterfactual(model, query.observations, query.intervention)
    try:
        estimate = oracle.rejection_counterfactual(
            model, query.observations, query.intervention, args.delta, args.n, args.seed
        )
    except oracle.ZeroAcceptanceError:
        raise DomainError(
            f"no draws accepted with n={args.n}, delta={args.delta}; raise --delta or --n"
        ) from None
    asked = query.consequents or model.variables
    rows = []
    for v in asked:
        i = model.variables.index(v)
        diff = abs(float(analytic.mean[i] - estimate.mean[i]))
        bound = 4 * float(estimate.std_err[i]) + 2 * args.delta
        rows.append(
            {
                "variable": v,
                "analytic": float(analytic.mean[i]),
                "oracle": float(estimate.mean[i]),
                "std_err": float(estimate.std_err[i]),
                "abs_diff": diff,
                "bound": bound,
                "pass": diff <= bound,
            }
        )
    passed = all(r["pass"] for r in rows)
    payload = {
        "command": "oracle-check",
        "model": doc.name,
        "query": query.to_text(),
        "n": args.n,
        "delta": args.delta,
        "seed": args.seed,
        "n_accepted": estimate.n_accepted,
        "passed": passed,
        "coordinates": rows,
    }
    lines = [
        f"oracle check on {doc.name}: {query.to_text()}",
        f"n={args.n} delta={args.delta} seed={args.seed} accepted={estimate.n_accepted}",
        f"{'variable':<10}{'analytic':>12}{'oracle':>12}{'|diff|':>12}{'bound':>12}  ok",
    ]
    for r in rows:
        lines.append(
            f"{r['variable']:<10}{r['analytic']:>12.4f}{r['oracle']:>12.4f}"
            f"{r['abs_diff']:>12.4f}{r['bound']:>12.4f}  {'yes' if r['pass'] else 'NO'}"
        )
    lines.append("PASS" if passed else "FAIL")
    _emit(payload, "\n".join(lines), args.json)
    return EXIT_OK if passed else EXIT_DOMAIN


# --- entry point ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="counterfact",
        description="Conditional, interventional and counterfactual queries over structural models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, with_query: bool) -> None:
        p.add_argument("model", help="model file (.scm.txt)")
        if with_query:
            p.add_argument("query", nargs="?", help="query text, e.g. 'observe r=4; do p=7; ask q'")
            p.add_argument("--query-file", help="read the query from a file")
        p.add_argument("--json", action="store_true", help="structured output on stdout")

    p = sub.add_parser("validate", help="check model assumptions")
    common(p, False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("describe", help="print a parsed model summary")
    common(p, False)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("query", help="evaluate a query")
    common(p, True)
    p.add_argument("--full-joint", action="store_true", help="report all variables")
    p.add_argument("--max-roots", type=int, default=boolean.MAX_ROOTS, help="enumeration limit for boolean models")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("compare", help="conditional vs interventional vs counterfactual")
    common(p, True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("oracle-check", help="compare the analytic result to rejection sampling")
    common(p, True)
    p.add_argument("--n", type=int, default=1_000_000, help="number of prior draws")
    p.add_argument("--delta", type=float, default=0.05, help="acceptance band half-width")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
