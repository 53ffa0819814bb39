"""Command-line front end.

Every subcommand reads problem files, runs one module operation and prints a
report: aligned text by default, or JSON (validated against the shipped report
schema) with ``--json``.  Exit codes: 0 success, 1 solver-reported failure,
2 invalid input.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from typing import Any, Sequence

import numpy as np

from . import duality as _du
from . import market as _mk
from . import stopping as _st
from .io import (FORMAT_VERSION, BolzaInput, ConsumptionInput, Diagnostic, MarketInput, ValidationError, build,
                 digest, jsonable, load_problem, load_schema, node_vectors, read_json)
from .tree import AdaptedProcess, ScenarioTree, TreeError

SUBCOMMANDS = ("solve", "dual", "gap", "superhedge", "no-arbitrage", "ftap", "consumption", "stopping-bound", "check")
DEFAULT_TOL = 1e-6


class SolverFailure(Exception):
    """The instance is well formed but the requested quantity is not finite."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 2 with a one-line message, like other validation errors
        self.print_usage(sys.stderr)
        raise ValidationError([Diagnostic("error", "", message)], "arguments")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stochdual", description="Duality computations for stochastic programs on scenario trees.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--json", action="store_true", help="print the report as JSON")
        sp.add_argument("--tol", type=float, default=DEFAULT_TOL, help="tolerance for gap and arbitrage decisions")

    for name, help_ in [("solve", "solve the primal problem"), ("dual", "dual value"), ("gap", "primal, dual and gap")]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--problem", required=True)
        sp.add_argument("--dual-class", choices=["full", "martingale", "orthogonal"], default="full")
        common(sp)
    for name, help_ in [("superhedge", "superhedging cost of the claim in the market file"),
                        ("no-arbitrage", "arbitrage check with certificate"),
                        ("ftap", "no-arbitrage versus martingale-measure existence (liquid models)")]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--market", required=True)
        common(sp)
    sp = sub.add_parser("consumption", help="optimal consumption with dual bound")
    sp.add_argument("--problem", required=True)
    common(sp)
    sp = sub.add_parser("stopping-bound", help="optimal stopping value and martingale upper bound")
    sp.add_argument("--problem")
    sp.add_argument("--tree")
    sp.add_argument("--reward")
    sp.add_argument("--mc", type=int, help="number of Monte Carlo paths")
    sp.add_argument("--seed", type=int, help="random seed (required with --mc)")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--penalty", default="snell", help="snell, zero, or a JSON file of node values")
    common(sp)
    sp = sub.add_parser("check", help="validate an input file")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--problem")
    g.add_argument("--market")
    common(sp)
    return p


# ---------------------------------------------------------------------------
# report assembly


class Report:
    def __init__(self, argv: Sequence[str], subcommand: str, tol: float):
        self.data: dict[str, Any] = {
            "format_version": FORMAT_VERSION,
            "command": list(argv),
            "subcommand": subcommand,
            "input_digest": digest(b""),
            "status": "ok",
            "values": {},
            "solutions": {},
            "diagnostics": [],
            "tolerance": float(tol),
            "solver": {},
            "wall_time": 0.0,
        }
        self._t0 = time.perf_counter()
        self.summary_line: str | None = None

    def __setitem__(self, k, v):
        self.data[k] = v

    def values(self, **kw):
        self.data["values"].update(jsonable(kw))

    def solutions(self, **kw):
        self.data["solutions"].update({k: jsonable(v) for k, v in kw.items() if v is not None})

    def finish(self) -> dict:
        self.data["wall_time"] = round(time.perf_counter() - self._t0, 6)
        if self.summary_line is not None:
            self.data["summary"] = self.summary_line
        out = jsonable(self.data)
        import jsonschema
        jsonschema.validate(out, load_schema("report.schema.json"))
        return out


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.10g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def render_text(rep: dict) -> str:
    if "summary" in rep and rep["subcommand"] == "ftap":
        return rep["summary"]
    lines = []
    if "summary" in rep:
        lines.append(rep["summary"])
    vals = rep["values"]
    if vals:
        w = max(len(k) for k in vals)
        lines += [f"{k.ljust(w)}  {_fmt(v)}" for k, v in vals.items()]
    for d in rep["diagnostics"]:
        lines.append(f"{d['severity']}: {d['pointer'] or '/'}: {d['message']}")
    return "\n".join(lines)


def _emit(rep: dict, as_json: bool) -> None:
    if as_json:
        sys.stdout.write(json.dumps(rep, sort_keys=True, indent=2) + "\n")
    else:
        sys.stdout.write(render_text(rep) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def _gap_values(rep: Report, g: _du.GapReport, tol: float):
    closed = _du.gap_closed(g.primal_value, g.dual_value, tol)
    rep.values(primal=g.primal_value, dual=g.dual_value, gap=g.gap, gap_closed=closed)
    rep["solver"] = {"statuses": g.statuses, "dual_class": g.dual_class}
    dual_sol = g.dual_solution
    if isinstance(dual_sol, np.ndarray):
        dual_sol = dual_sol.tolist()
    rep.solutions(x=g.primal_solution, y=dual_sol)


def _program_like(obj, kind: str):
    if kind == "bolza":
        return _du.bolza_program(obj.tree, obj.d, obj.L, obj.u)
    return obj


def cmd_solve(args, rep: Report):
    obj, kind, warns, raw = load_problem(args.problem, ("program", "bolza", "stopping", "consumption", "market"))
    rep["input_digest"] = digest(raw)
    rep["kind"] = kind
    rep["diagnostics"] = [d.to_json() for d in warns]
    if kind == "stopping":
        sol = _st.solve_stopping_lp(obj)
        rep.values(value=sol.value)
        rep.solutions(x=sol.x, y=sol.y, rule={str(k): v for k, v in sol.rule.items()})
        rep["solver"] = {"status": sol.lp_solution.status.value, "iterations": sol.lp_solution.iterations}
        return
    if kind == "consumption":
        return cmd_consumption(args, rep, (obj, kind, warns, raw))
    if kind == "market":
        return cmd_superhedge(args, rep, (obj, kind, warns, raw))
    prog = _program_like(obj, kind)
    if hasattr(prog, "to_program"):
        prog = prog.to_program()
    pr = _du.solve_primal(prog)
    rep.values(primal=pr.value)
    rep.solutions(x=pr.x)
    rep["solver"] = {"status": pr.status.value, "iterations": pr.solution.iterations}
    if not pr.solution.optimal:
        if pr.solution.certificate is not None:
            rep.solutions(certificate=pr.solution.certificate.tolist())
        raise SolverFailure(f"primal problem is {pr.status.value}")


def _gap_report(args, rep: Report):
    obj, kind, warns, raw = load_problem(args.problem, ("program", "bolza"))
    rep["input_digest"] = digest(raw)
    rep["kind"] = kind
    rep["diagnostics"] = [d.to_json() for d in warns]
    if kind == "bolza" and obj.y is not None and args.command == "dual":
        rep.values(dual=_du.bolza_dual_value(obj.tree, obj.d, obj.L, obj.y))
        rep["solver"] = {"dual_class": "bolza"}
        return None
    prog = _program_like(obj, kind)
    try:
        g = _du.duality_gap(prog, args.dual_class)
    except TypeError as e:
        raise ValidationError([Diagnostic("error", "/payload/form", str(e))], args.problem) from None
    return g


def cmd_gap(args, rep: Report):
    g = _gap_report(args, rep)
    if g is not None:
        _gap_values(rep, g, args.tol)


def cmd_dual(args, rep: Report):
    g = _gap_report(args, rep)
    if g is not None:
        rep.values(dual=g.dual_value)
        rep["solver"] = {"statuses": g.statuses, "dual_class": g.dual_class}
        y = g.dual_solution.tolist() if isinstance(g.dual_solution, np.ndarray) else g.dual_solution
        rep.solutions(y=y)


def _market(args, rep: Report, loaded=None) -> MarketInput:
    obj, kind, warns, raw = loaded or load_problem(args.market, ("market",))
    rep["input_digest"] = digest(raw)
    rep["kind"] = kind
    rep["diagnostics"] = [d.to_json() for d in warns]
    return obj


def cmd_superhedge(args, rep: Report, loaded=None):
    mi = _market(args, rep, loaded)
    if mi.claim is None:
        raise ValidationError([Diagnostic("error", "/payload/claim", "superhedging needs a claim process")], args.market)
    try:
        g = _mk.superhedge_cost(mi.model, mi.claim, mi.premium)
    except _mk.MarketModelError as e:
        raise SolverFailure(str(e)) from None
    _gap_values(rep, g, args.tol)
    rep.values(cost=g.primal_value)
    if not np.isfinite(g.primal_value):
        raise SolverFailure(f"superhedging cost is {g.primal_value}")


def cmd_no_arbitrage(args, rep: Report):
    mi = _market(args, rep)
    r = _mk.check_no_arbitrage(mi.model, tol=args.tol * 1e-3)
    rep.values(no_arbitrage=r.no_arbitrage, lp_value=r.value)
    rep.solutions(claim=r.claim, hedge=r.hedge, price_system=r.price_system)
    rep.summary_line = f"no-arbitrage: {str(r.no_arbitrage).lower()}"


def cmd_ftap(args, rep: Report):
    mi = _market(args, rep)
    try:
        r = _mk.ftap_equivalence(mi.model)
    except _mk.MarketModelError as e:
        raise ValidationError([Diagnostic("error", "/payload", str(e))], args.market) from None
    rep.values(no_arbitrage=r.no_arbitrage, martingale_measure=r.martingale_measure, agree=r.agree,
               Q=None if r.Q is None else r.Q.tolist())
    rep.solutions(price_system=r.price_system, claim=r.arbitrage.claim, hedge=r.arbitrage.hedge)
    rep.summary_line = r.summary()
    if not r.agree:
        raise SolverFailure("no-arbitrage and martingale-measure checks disagree")


def cmd_consumption(args, rep: Report, loaded=None):
    obj, kind, warns, raw = loaded or load_problem(args.problem, ("consumption",))
    rep["input_digest"] = digest(raw)
    rep["kind"] = kind
    rep["diagnostics"] = [d.to_json() for d in warns]
    g = _mk.optimal_consumption(obj.model, obj.utility, obj.endowment)
    rep.values(primal=g.primal_value, dual=g.dual_value, gap=g.gap,
               gap_closed=_du.gap_closed(g.primal_value, g.dual_value, args.tol))
    rep["solver"] = {"statuses": g.statuses, "sense": "max"}
    rep.solutions(c=g.primal_solution, y=g.dual_solution)
    if not np.isfinite(g.primal_value):
        raise SolverFailure(f"optimal consumption value is {g.primal_value}")


def _stopping_problem(args, rep: Report) -> _st.StoppingProblem:
    if args.problem:
        sp, kind, warns, raw = load_problem(args.problem, ("stopping",))
        rep["input_digest"] = digest(raw)
        return sp
    if not (args.tree and args.reward):
        raise ValidationError([Diagnostic("error", "", "give --problem, or both --tree and --reward")], "arguments")
    tdata, traw = read_json(args.tree)
    zdata, zraw = read_json(args.reward)
    rep["input_digest"] = digest(traw, zraw)
    if isinstance(tdata, dict) and "payload" in tdata:
        tdata = tdata["payload"].get("tree", tdata)
    try:
        tree = ScenarioTree.from_json(tdata)
    except (TreeError, ValueError, KeyError, TypeError) as e:
        raise ValidationError([Diagnostic("error", "", str(e.args[0] if e.args else e))], args.tree) from None
    if isinstance(zdata, dict) and "reward" in zdata:
        zdata = zdata["reward"]
    try:
        return _st.StoppingProblem(tree, {k: float(v[0]) for k, v in node_vectors(tree, zdata, 1, "reward").items()})
    except (ValueError, KeyError, TypeError) as e:
        raise ValidationError([Diagnostic("error", "", str(e.args[0] if e.args else e))], args.reward) from None


def cmd_stopping_bound(args, rep: Report):
    if args.mc is not None and args.seed is None:
        raise ValidationError([Diagnostic("error", "", "--mc requires --seed")], "arguments")
    sp = _stopping_problem(args, rep)
    rep["kind"] = "stopping"
    sol = _st.solve_stopping_lp(sp)
    if args.penalty == "snell":
        y = _st.doob_martingale_part(sol.snell)
    elif args.penalty == "zero":
        y = AdaptedProcess.constant(sp.tree, [0.0], "y")
    else:
        pdata, praw = read_json(args.penalty)
        rep["input_digest"] = digest(rep.data["input_digest"].encode(), praw)
        try:
            vals = node_vectors(sp.tree, pdata.get("values", pdata), 1, "penalty")
            y = AdaptedProcess(sp.tree, [1] * (sp.tree.horizon + 1), vals, "y")
        except (ValueError, KeyError, TypeError, AttributeError) as e:
            raise ValidationError([Diagnostic("error", "", str(e.args[0] if e.args else e))], args.penalty) from None
    try:
        b = _st.rogers_bound(sp, y, mc=args.mc, seed=args.seed, workers=args.workers)
    except ValueError as e:
        raise ValidationError([Diagnostic("error", "", str(e))], args.penalty) from None
    rep["seed"] = args.seed
    rep.values(value=sol.value, bound=b.bound, gap=b.bound - sol.value, stderr=b.stderr,
               n_paths=b.n_paths, exact=b.exact, penalty=args.penalty if args.penalty in ("snell", "zero") else "file")
    rep.solutions(rule={str(k): v for k, v in sol.rule.items()}, y=y)
    rep["solver"] = {"status": sol.lp_solution.status.value, "iterations": sol.lp_solution.iterations}


def cmd_check(args, rep: Report):
    path = args.problem or args.market
    data, raw = read_json(path)
    rep["input_digest"] = digest(raw)
    if args.market and isinstance(data, dict) and "kind" not in data:
        data = {"format_version": FORMAT_VERSION, "kind": "market", "payload": data}
    _, diags = build(data)
    rep["diagnostics"] = [d.to_json() for d in diags]
    errs = [d for d in diags if d.severity == "error"]
    rep.values(errors=len(errs), warnings=len(diags) - len(errs))
    if errs:
        rep["status"] = "invalid"
        raise ValidationError(errs, path)


_COMMANDS = {
    "solve": cmd_solve, "dual": cmd_dual, "gap": cmd_gap, "superhedge": cmd_superhedge,
    "no-arbitrage": cmd_no_arbitrage, "ftap": cmd_ftap, "consumption": cmd_consumption,
    "stopping-bound": cmd_stopping_bound, "check": cmd_check,
}


def run(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv``, run the subcommand, print the report; return the exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parser().parse_args(argv)
    except ValidationError as e:
        sys.stderr.write(f"error: {e}\n")
        return 2
    rep = Report(argv, args.command, args.tol)
    code = 0
    try:
        _COMMANDS[args.command](args, rep)
    except ValidationError as e:
        rep["status"] = "invalid"
        known = {(d["pointer"], d["message"]) for d in rep.data["diagnostics"]}
        rep["diagnostics"] = rep.data["diagnostics"] + [d.to_json() for d in e.diagnostics if (d.pointer, d.message) not in known]
        sys.stderr.write(f"error: {e}\n")
        code = 2
    except SolverFailure as e:
        rep["status"] = "failure"
        sys.stderr.write(f"failure: {e}\n")
        code = 1
    except RuntimeError as e:
        rep["status"] = "failure"
        sys.stderr.write(f"failure: {e}\n")
        code = 1
    if code != 2 or args.json:
        _emit(rep.finish(), args.json)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
