import argparse
import os
import sys

BASE_DIR = os.path.dirname(os.path.abspath(__file__))
sys.path.append(BASE_DIR)

from components.aggregation import derive_org_utility, structure_from_json
from components.database import Database
from components.errors import DegenerateProbability, DimensionMismatch, OrgUtilityError
from components.figures import FIGURE_IDS, Grid, games_from_scenario, load_figure_spec, parse_grid, write_figure
from components.reporting import FORMATS, RunReport, print_runs, render_csv, render_json, status, write_output
from components.risk import Lottery, risk_summary
from components.utils import explicit_seed, load_json_file, resolve_seed

# --- CONFIG ---
DEFAULT_POINTS = 2001
DEFAULT_FIGURE_DIR = "figure_data"


# ==========================================
# 📐 DERIVE
# ==========================================
def derive_rows(org, xs):
    """One row per grid point; points where the organization saturates are flagged, not dropped."""
    members = org.tree.leaves()
    try:
        u_org = org.values(xs)
        flags = [""] * len(xs)
    except DegenerateProbability:
        u_org, flags = [], []
        for x in xs:
            try:
                u_org.append(org.value(x))
                flags.append("")
            except DegenerateProbability:
                u_org.append(float("nan"))
                flags.append("degenerate")
    s_org = org.screening_values(xs)
    member_cols = {}
    for m in members:
        member_cols[f"u_{m.id}"] = m.utility.values(xs)
        member_cols[f"s_{m.id}"] = m.utility.screening_values(xs)

    rows = []
    for i, x in enumerate(xs):
        row = {"x": float(x), "u_org": float(u_org[i]), "s_org": float(s_org[i])}
        for name, col in member_cols.items():
            row[name] = float(col[i])
        row["flag"] = flags[i]
        rows.append(row)
    return rows


def cmd_derive(args, report):
    tree, domain = structure_from_json(load_json_file(args.input))
    if tree.dimension > 1:
        raise DimensionMismatch(tree.dimension, 1)
    grid = parse_grid(args.grid) if args.grid else Grid(domain[0], domain[1], DEFAULT_POINTS)
    org = derive_org_utility(tree, domain)
    rows = derive_rows(org, grid.values())

    if args.format == "json":
        text = render_json({"grid": grid.to_dict(), "closed_form": org.closed_form is not None, "rows": rows})
    else:
        text = render_csv(rows)
    write_output(text, args.output)

    flagged = sum(1 for r in rows if r["flag"])
    report.outputs = {"rows": len(rows), "degenerate_rows": flagged, "closed_form": org.closed_form is not None}
    status(f"✅ derived {len(rows)} points ({flagged} flagged)")


# ==========================================
# 🎲 RISK
# ==========================================
def cmd_risk(args, report):
    tree, domain = structure_from_json(load_json_file(args.input))
    lottery = Lottery.from_json(load_json_file(args.lottery))
    org = derive_org_utility(tree, domain)
    summary = risk_summary(org, lottery)

    if (args.format or "json") == "csv":
        flat = {k: v for k, v in summary.items() if k != "tolerances"}
        flat.update({f"tol_{k}": v for k, v in summary["tolerances"].items()})
        text = render_csv([flat])
    else:
        text = render_json(summary)
    write_output(text, args.output)

    report.outputs = summary
    report.tolerances = summary["tolerances"]
    if summary.get("certainty_equivalent") is None:
        status(f"⚠️ certainty equivalent omitted: {summary.get('certainty_equivalent_reason')}")
    status(f"✅ EU={summary['expected_utility']:.6f}")


# ==========================================
# ♟️ GAMES
# ==========================================
def cmd_games(args, report):
    scenario = load_json_file(args.input)
    rows, cfg = games_from_scenario(scenario, workers=args.workers, seed=explicit_seed(args.seed))
    if hasattr(cfg, "annealing"):
        report.seed = cfg.annealing.seed
    text = render_json({"model": scenario.get("model"), "rows": rows}) if args.format == "json" else render_csv(rows)
    write_output(text, args.output)

    failed = [r["label"] for r in rows if r.get("error")]
    report.outputs = {"rows": len(rows), "failed": failed}
    report.tolerances = {"convergence_tol": getattr(cfg, "convergence_tol", None)}
    for r in rows:
        mark = "❌" if r.get("error") else "✅"
        status(f"{mark} {r['model']} {r['label']} {r.get('error') or ''}".rstrip())


# ==========================================
# 📊 FIGURES
# ==========================================
def cmd_figures(args, report):
    ids = list(FIGURE_IDS) if "all" in args.figure else args.figure
    grid = parse_grid(args.grid) if args.grid else None
    out_dir = args.output or DEFAULT_FIGURE_DIR
    written = []
    for figure_id in ids:
        spec = load_figure_spec(figure_id, grid=grid if figure_id != "games" else None)
        status(f"🔄 building {figure_id}...")
        written.extend(write_figure(spec, out_dir, workers=args.workers, seed=explicit_seed(args.seed)))
    report.outputs = {"files": [os.path.relpath(p, out_dir) for p in written]}
    status(f"✅ wrote {len(written)} files to {out_dir}")


# ==========================================
# 📜 RUN LEDGER
# ==========================================
def cmd_runs(args, report):
    runs = Database().fetch_runs(limit=args.limit, command=args.command_filter)
    print_runs(runs)
    report.outputs = {"listed": len(runs)}


def build_parser():
    parser = argparse.ArgumentParser(prog="orgutil", description="Organizational utility toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", help="output path (stdout when omitted; a directory for figures)")
    common.add_argument("--format", choices=FORMATS, help="csv (default) or json; risk defaults to json")
    common.add_argument("--seed", type=int, help="annealing seed (falls back to ORGUTIL_SEED, then the scenario or config seed)")
    common.add_argument("--report", help="also write the run report as JSON to this path")
    common.add_argument("--no-ledger", action="store_true", help="do not record the run in the sqlite ledger")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derive", parents=[common], help="organizational utility of a structure on a grid")
    p.add_argument("--input", required=True, help="structure JSON")
    p.add_argument("--grid", help="MIN:MAX:POINTS")
    p.set_defaults(handler=cmd_derive)

    p = sub.add_parser("risk", parents=[common], help="EU, CE, acceptance and minimum winning probability")
    p.add_argument("--input", required=True, help="structure JSON")
    p.add_argument("--lottery", required=True, help="lottery JSON")
    p.set_defaults(handler=cmd_risk)

    p = sub.add_parser("games", parents=[common], help="Cournot equilibria or optimal contracts")
    p.add_argument("--input", required=True, help="scenario JSON")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=cmd_games)

    p = sub.add_parser("figures", parents=[common], help="figure datasets from the bundled specs")
    p.add_argument("figure", nargs="+", choices=list(FIGURE_IDS) + ["all"])
    p.add_argument("--grid", help="MIN:MAX:POINTS override for curve figures")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=cmd_figures)

    p = sub.add_parser("runs", parents=[common], help="list recent ledger entries")
    p.add_argument("--limit", type=int, default=20)
    p.add_argument("--command", dest="command_filter")
    p.set_defaults(handler=cmd_runs)
    return parser


def _echo_inputs(args):
    skip = {"handler", "report", "no_ledger"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def main(argv=None):
    args = build_parser().parse_args(argv)
    report = RunReport(command=args.command, inputs=_echo_inputs(args), seed=resolve_seed(args.seed))
    exit_code = 0
    try:
        args.handler(args, report)
        report.finish("ok", 0)
    except OrgUtilityError as e:
        exit_code = e.exit_code
        status(f"❌ {type(e).__name__}: {e}")
        report.finish("error", exit_code, f"{type(e).__name__}: {e}")

    if args.report:
        report.write_json(args.report)
    if not args.no_ledger and args.command != "runs":
        Database().log_run(report)
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
