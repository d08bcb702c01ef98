"""Command-line front end.

Exit codes: 0 success, 2 bad input or I/O, 3 infeasible design, 4 simulation
warning escalated by ``--strict``.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io as mio
from .design import (
    DesignProblem,
    design,
    normalize_objective,
    read_certificate,
    sample_reachable_weights,
)
from .exceptions import (
    AgreekitError,
    DesignInfeasible,
    PreconditionError,
    SearchBudgetExceeded,
    StiffnessWarning,
)
from .experiments import (
    FORMATION_MODES,
    FormationSpec,
    comm_complexity,
    formation_demo,
    regression_demo,
    regression_preset,
)
from .graph import (
    DEFAULT_SEARCH_BUDGET,
    EXAMPLE3_GRAPH,
    FIG2_GRAPH,
    FIG4B_GRAPH,
    Digraph,
    check_necessary,
    find_sufficient_partition,
    is_strongly_connected,
    read_graph,
    write_graph,
)
from .linalg import build_projection, decompose_projection
from .simulation import InputSignal, plot_trace_svg, simulate_static, simulate_tracking

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_WARNING = 0, 2, 3, 4


class InputFailure(Exception):
    """Bad paths, unparsable files or refused overwrites."""


class Outputs:
    """Collects files for one run and refuses to clobber without ``--force``."""

    def __init__(self, out, force):
        self.dir = Path(out) if out else None
        self.force = force

    def path(self, name):
        if self.dir is None:
            raise InputFailure("this command needs --out")
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        if p.exists() and not self.force:
            raise InputFailure(f"{p} exists; pass --force to overwrite")
        return p

    def text(self, name, text):
        self.path(name).write_text(text)

    def json(self, name, obj):
        self.text(name, mio.dump_json(obj))

    def reserve(self, *names):
        # fail before doing any work if a target is taken
        for name in names:
            self.path(name)


def _load_graph(path):
    try:
        return read_graph(path)
    except FileNotFoundError as exc:
        raise InputFailure(f"graph file not found: {path}") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputFailure(f"malformed graph file {path}: {exc}") from exc


def _load_matrix(path, what):
    try:
        return mio.read_matrix(path)
    except FileNotFoundError as exc:
        raise InputFailure(f"{what} file not found: {path}") from exc
    except (json.JSONDecodeError, ValueError) as exc:
        raise InputFailure(f"malformed {what} file {path}: {exc}") from exc


def _load_weights(path, k=None):
    return decompose_projection(_load_matrix(path, "weights"), k)


def _edges_json(edges):
    return [list(e) for e in edges]


# --------------------------------------------------------------------------
# commands


def cmd_check(args, out):
    g = _load_graph(args.graph)
    report = {
        "n": g.n,
        "edge_count": g.num_edges,
        "strongly_connected": is_strongly_connected(g),
    }
    if args.k is None:
        raise InputFailure("check needs --k")
    if not 1 <= args.k <= g.n:
        raise InputFailure(f"--k must lie in [1, {g.n}]")
    nec = check_necessary(g, args.k)
    report.update({
        "k": args.k,
        "necessary": nec.holds,
        "necessary_bound": nec.bound,
        "max_k": nec.max_k,
    })
    if not nec.holds:
        report["sufficient"] = "fails-necessary"
    elif args.k == g.n:
        report["sufficient"] = "found" if g.is_complete() else "unknown"
    else:
        zeroed = [tuple(e) for e in json.loads(args.zero)] if args.zero else ()
        try:
            part = find_sufficient_partition(g, args.k, zeroed=zeroed, budget=args.budget)
        except SearchBudgetExceeded:
            report["sufficient"] = "unknown"
            report["search"] = "budget exhausted"
        else:
            report["edge_hypothesis"] = part.meets_edge_hypothesis
            report["search_nodes"] = part.explored
            if part.found:
                report["sufficient"] = "found"
                report["a_v"] = _edges_json(part.a_v)
                report["witnesses"] = [_edges_json(w.edges) for w in part.witnesses]
            else:
                report["sufficient"] = "unknown"
                report["search"] = "no partition among enumerated decompositions"
    if out.dir is not None:
        out.json("check.json", report)
    sys.stdout.write(mio.dump_json(report))
    return EXIT_OK


def _problem_from_args(args):
    if args.problem:
        try:
            return DesignProblem.from_json(args.problem)
        except FileNotFoundError as exc:
            raise InputFailure(f"problem file not found: {exc.filename}") from exc
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputFailure(f"malformed problem file: {exc}") from exc
    if not args.graph or not args.weights:
        raise InputFailure("design needs --graph and --weights (or --problem)")
    g = _load_graph(args.graph)
    w = _load_weights(args.weights, args.k)
    objective = args.objective or "feasible"
    return DesignProblem(g, w, normalize_objective(objective), seed=args.seed,
                         iterations=args.budget or 2000)


def cmd_design(args, out):
    problem = _problem_from_args(args)
    out.reserve("certificate.json", "A.csv")
    try:
        cert = design(problem)
    except DesignInfeasible as exc:
        out.json("certificate.json", {"passed": False, "reason": type(exc).__name__, "detail": str(exc)})
        sys.stderr.write(f"infeasible: {exc}\n")
        return EXIT_INFEASIBLE
    out.json("certificate.json", cert.to_json())
    out.text("A.csv", mio.matrix_to_csv(cert.A))
    sys.stdout.write(mio.dump_json({"passed": cert.passed, "essential_abscissa": cert.essential_abscissa,
                                    "objective": cert.objective}))
    return EXIT_OK if cert.passed else EXIT_INFEASIBLE


def _load_protocol(args):
    if not args.weights:
        raise InputFailure("--weights is required")
    weights = _load_weights(args.weights, args.k)
    if args.certificate:
        try:
            A = read_certificate(args.certificate).A
        except FileNotFoundError as exc:
            raise InputFailure(f"certificate not found: {args.certificate}") from exc
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise InputFailure(f"malformed certificate: {exc}") from exc
    elif args.A:
        A = _load_matrix(args.A, "A")
    else:
        raise InputFailure("pass --certificate or --A")
    if A.shape != (weights.n, weights.n):
        raise InputFailure(f"A is {A.shape}, W is {weights.n} x {weights.n}")
    return A, weights


def _vector(args, n, name="x0"):
    path = getattr(args, name)
    if path:
        v = _load_matrix(path, name).reshape(-1)
        if v.size != n:
            raise InputFailure(f"{name} has {v.size} entries, expected {n}")
        return v
    return np.random.default_rng(args.seed).uniform(-1.0, 1.0, n)


def _write_trace(out, trace, title, summary):
    out.text("trace.csv", trace.to_csv())
    plot_trace_svg(out.path("trace.svg"), trace, title)
    out.json("summary.json", summary)


def cmd_simulate(args, out):
    A, weights = _load_protocol(args)
    out.reserve("trace.csv", "trace.svg", "summary.json")
    x0 = _vector(args, weights.n)
    trace = simulate_static(A, x0, args.horizon, args.dt, weights=weights)
    summary = {
        "x0": x0.tolist(),
        "final_state": trace.final_state.tolist(),
        "final_error": trace.final_error,
        "horizon": float(trace.times[-1]),
        "samples": len(trace),
    }
    _write_trace(out, trace, "agreement dynamics", summary)
    sys.stdout.write(mio.dump_json(summary))
    return EXIT_OK


def _signal(args, n):
    target = _vector(args, n, "u")
    if args.input == "constant":
        return InputSignal.constant(target)
    if args.input == "ramp":
        return InputSignal.ramp_hold(target, args.ramp_time)
    if args.input == "sinusoid":
        return InputSignal.sinusoid(target, args.sup_udot, args.omega)
    raise InputFailure(f"unknown input {args.input!r}")


def cmd_track(args, out):
    A, weights = _load_protocol(args)
    out.reserve("trace.csv", "trace.svg", "summary.json")
    signal = _signal(args, weights.n)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", StiffnessWarning)
        trace = simulate_tracking(A, signal, args.horizon, args.dt, weights=weights)
    stiff = [str(w.message) for w in caught if issubclass(w.category, StiffnessWarning)]
    confinement = float(np.abs((trace.states - trace.inputs) @ weights.tau_rows.T).max())
    summary = {
        "input": signal.name,
        "final_error": trace.final_error,
        "max_error": float(trace.error_norms.max()),
        "agreement_mode_drift": confinement,
        "horizon": float(trace.times[-1]),
        "samples": len(trace),
        "warnings": stiff,
    }
    _write_trace(out, trace, f"tracking ({signal.name} input)", summary)
    sys.stdout.write(mio.dump_json(summary))
    if stiff:
        for msg in stiff:
            sys.stderr.write(f"warning: {msg}\n")
        if args.strict:
            return EXIT_WARNING
    return EXIT_OK


def _plot(path, draw):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4.5))
    draw(ax)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def experiment_comm(args, out):
    out.reserve("comm_complexity.json", "comm_complexity.csv", "comm_complexity.svg")
    models = ["erdos_renyi", "barabasi_albert"] if args.model == "both" else [args.model]
    rows = [comm_complexity(m, args.n, args.k, args.trials, args.seed, p=args.p, m=args.m) for m in models]
    out.json("comm_complexity.json", {"results": [r.to_json() for r in rows]})
    csv = "model,per_agent_tx_parallel,per_agent_tx_agreement,ratio\n" + "".join(
        f"{r.model},{mio.format_float(r.per_agent_tx_parallel)},"
        f"{mio.format_float(r.per_agent_tx_agreement)},{mio.format_float(r.ratio)}\n" for r in rows
    )
    out.text("comm_complexity.csv", csv)

    def draw(ax):
        x = np.arange(len(rows))
        ax.bar(x - 0.2, [r.per_agent_tx_parallel for r in rows], 0.4, label=f"{args.k} parallel consensus runs")
        ax.bar(x + 0.2, [r.per_agent_tx_agreement for r in rows], 0.4, label="one agreement run")
        ax.set_xticks(x, [r.model for r in rows])
        ax.set_ylabel("transmissions per iteration per agent")
        ax.legend()

    _plot(out.path("comm_complexity.svg"), draw)
    sys.stdout.write(mio.dump_json({"results": [r.to_json() for r in rows]}))
    return EXIT_OK


def experiment_regression(args, out):
    out.reserve("regression.json", "regression.csv", "regression.svg", "trace.csv")
    H, y, g = regression_preset(seed=args.seed, n=args.n, alpha=args.alpha)
    try:
        result = regression_demo(H, y, g, seed=args.seed)
    except DesignInfeasible as exc:
        sys.stderr.write(f"infeasible: {exc}\n")
        return EXIT_INFEASIBLE
    summary = result.summary(H, y)
    out.json("regression.json", summary)
    data = np.column_stack([np.arange(1, len(y) + 1), y, result.y_hat, result.projection])
    out.text("regression.csv", "i,y,y_hat,projection\n" + mio.matrix_to_csv(data))
    out.text("trace.csv", result.trace.to_csv())

    def draw(ax):
        ax.plot(data[:, 0], y, "o", markersize=3, color="grey", label="measurements y")
        ax.plot(data[:, 0], result.y_hat, "-", color="C0", label="agreement value")
        ax.plot(data[:, 0], result.projection, "--", color="C3", label="least-squares fit")
        ax.set_xlabel("agent")
        ax.legend()

    _plot(out.path("regression.svg"), draw)
    sys.stdout.write(mio.dump_json(summary))
    return EXIT_OK


def experiment_formation(args, out):
    modes = FORMATION_MODES if args.mode == "all" else (args.mode,)
    names = [f"formation_{m}.{ext}" for m in modes for ext in ("json", "csv", "svg")]
    out.reserve(*names)
    spec = FormationSpec.default()
    summaries = {}
    for mode in modes:
        try:
            result = formation_demo(spec, mode, seed=args.seed)
        except DesignInfeasible as exc:
            sys.stderr.write(f"infeasible ({mode}): {exc}\n")
            return EXIT_INFEASIBLE
        summary = result.summary(spec)
        summaries[mode] = summary
        out.json(f"formation_{mode}.json", summary)
        out.text(f"formation_{mode}.csv", result.trace2d.to_csv())
        states = result.trace2d.states

        def draw(ax, states=states, mode=mode):
            ang = np.linspace(0, 2 * np.pi, 200)
            ax.plot(np.cos(ang), np.sin(ang), color="lightgrey")
            for r in range(spec.n_robots):
                ax.plot(states[:, 2 * r], states[:, 2 * r + 1], linewidth=1)
                ax.plot(states[-1, 2 * r], states[-1, 2 * r + 1], "k.")
            ax.set_aspect("equal")
            ax.set_title(f"{mode} weights")

        _plot(out.path(f"formation_{mode}.svg"), draw)
    sys.stdout.write(mio.dump_json(summaries))
    return EXIT_OK


PRESET_GRAPHS = {"fig2": FIG2_GRAPH, "example3": EXAMPLE3_GRAPH, "fig4a": EXAMPLE3_GRAPH, "fig4b": FIG4B_GRAPH}


def cmd_preset(args, out):
    name = args.name
    if name in ("fig1", "fig5", "fig6"):
        sub = {"fig1": "comm-complexity", "fig5": "regression", "fig6": "formation"}[name]
        parsed = build_parser().parse_args(
            ["experiment", sub, "--out", str(out.dir or "."), "--seed", str(args.seed)]
            + (["--force"] if out.force else [])
        )
        return parsed.func(parsed, Outputs(parsed.out, parsed.force))
    if name == "example2":
        g = Digraph.from_edges(3, [(1, 2), (2, 1), (2, 3), (3, 2)], self_loops=True)
        rng = np.random.default_rng(args.seed)
        w = build_projection(rng.standard_normal((3, 2)), rng.standard_normal((3, 2)))
        out.reserve("graph.json", "W.csv")
        write_graph(out.path("graph.json"), g)
        out.text("W.csv", mio.matrix_to_csv(w.W))
        return EXIT_OK
    if name not in PRESET_GRAPHS:
        raise InputFailure(f"unknown preset {name!r}")
    g = PRESET_GRAPHS[name]
    files = ["graph.json"]
    if name == "example3":
        files += ["W.csv", "problem.json"]
    out.reserve(*files)
    write_graph(out.path("graph.json"), g)
    if name == "example3":
        weights, _ = sample_reachable_weights(g, 2, seed=args.seed)
        out.text("W.csv", mio.matrix_to_csv(weights.W))
        out.json("problem.json", {"graph": "graph.json", "weights": "W.csv", "k": 2,
                                  "objective": "deflated_numerical", "seed": args.seed})
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(prog="agreekit", description="k-dimensional agreement protocols")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output directory")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--strict", action="store_true", help="exit 4 on simulation warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common], help="structural feasibility report")
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--budget", type=int, default=DEFAULT_SEARCH_BUDGET)
    p.add_argument("--zero", help='edges fixed to zero, JSON list such as "[[2,2],[3,3]]"')
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("design", parents=[common], help="synthesize and certify A")
    p.add_argument("--graph")
    p.add_argument("--weights")
    p.add_argument("--problem", help="problem JSON (graph, weights, objective, seed)")
    p.add_argument("--k", type=int)
    p.add_argument("--objective", choices=["feasible", "spectral", "numerical"])
    p.add_argument("--budget", type=int, help="optimizer iteration budget (default 2000)")
    p.set_defaults(func=cmd_design)

    for name, func, helptext in (("simulate", cmd_simulate, "simulate x' = A x"),
                                 ("track", cmd_track, "simulate x' = A x + u'(t)")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--weights", required=True)
        p.add_argument("--k", type=int)
        p.add_argument("--certificate")
        p.add_argument("--A")
        p.add_argument("--horizon", type=float)
        p.add_argument("--dt", type=float)
        if name == "simulate":
            p.add_argument("--x0")
        else:
            p.add_argument("--u", help="target input vector file (random when omitted)")
            p.add_argument("--input", choices=["constant", "ramp", "sinusoid"], default="constant")
            p.add_argument("--ramp-time", type=float, default=5.0)
            p.add_argument("--sup-udot", type=float, default=0.1)
            p.add_argument("--omega", type=float, default=1.0)
        p.set_defaults(func=func)

    p = sub.add_parser("experiment", help="application studies")
    esub = p.add_subparsers(dest="experiment", required=True)
    e = esub.add_parser("comm-complexity", parents=[common])
    e.add_argument("--model", choices=["er", "ba", "erdos_renyi", "barabasi_albert", "both"], default="both")
    e.add_argument("--n", type=int, default=20)
    e.add_argument("--k", type=int, default=10)
    e.add_argument("--trials", type=int, default=20)
    e.add_argument("--p", type=float, default=0.4)
    e.add_argument("--m", type=int, default=3)
    e.set_defaults(func=experiment_comm)
    e = esub.add_parser("regression", parents=[common])
    e.add_argument("--n", type=int, default=50)
    e.add_argument("--alpha", type=int, default=4)
    e.set_defaults(func=experiment_regression)
    e = esub.add_parser("formation", parents=[common])
    e.add_argument("--mode", choices=list(FORMATION_MODES) + ["all"], default="all")
    e.set_defaults(func=experiment_formation)

    p = sub.add_parser("preset", parents=[common], help="write or run a named reproduction preset")
    p.add_argument("name", choices=["fig1", "fig2", "fig4a", "fig4b", "fig5", "fig6", "example2", "example3"])
    p.set_defaults(func=cmd_preset)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    out = Outputs(getattr(args, "out", None), getattr(args, "force", False))
    try:
        return args.func(args, out)
    except (InputFailure, PreconditionError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except DesignInfeasible as exc:
        sys.stderr.write(f"infeasible: {exc}\n")
        return EXIT_INFEASIBLE
    except AgreekitError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except OSError as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
