"""Figure datasets and batched game solves.

Each bundled figures/<figure_id>.json carries the parameter values of one figure;
build_figure turns it into curve rows plus a small summary.
"""
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from components.aggregation import (
    And,
    Or,
    approx_org_utility,
    derive_org_utility,
    leaf,
    synthetic_member,
)
from components.contracts import ContractConfig, solve_principal
from components.cournot import CournotConfig, all_structure_pairs, solve_structure_pair
from components.errors import (
    BadDomain,
    InvalidStructure,
    NoConvergence,
    OrgUtilityError,
    UnknownFigure,
)
from components.reporting import render_csv, render_json
from components.risk import Lottery, risk_summary
from components.utility import error_rates, utility_from_json
from components.utils import config_section, load_json_file, repo_path

FIGURE_IDS = (
    "screening_examples",
    "pipeline_demo",
    "unan_poly_linear",
    "certainty_equiv",
    "vary_n",
    "opposing_views",
    "games",
    "cara_appendix",
    "multivariate_appendix",
)
FIGURES_DIR = repo_path(config_section("system").get("figures_dir", "figures"))


# --- GRID / SPEC ---
@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    points: int

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)) or not self.x_min < self.x_max:
            raise BadDomain(f"grid needs finite x_min < x_max, got {self.x_min}:{self.x_max}")
        if int(self.points) < 2:
            raise BadDomain(f"grid needs at least 2 points, got {self.points}")

    def values(self):
        return np.linspace(self.x_min, self.x_max, int(self.points))

    def to_dict(self):
        return {"x_min": self.x_min, "x_max": self.x_max, "points": int(self.points)}


def parse_grid(text):
    """'MIN:MAX:POINTS' -> Grid."""
    parts = str(text).split(":")
    if len(parts) != 3:
        raise BadDomain(f"grid must look like MIN:MAX:POINTS, got '{text}'")
    try:
        return Grid(float(parts[0]), float(parts[1]), int(parts[2]))
    except ValueError:
        raise BadDomain(f"grid must look like MIN:MAX:POINTS, got '{text}'")


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    grid: Grid
    params: dict = field(default_factory=dict)
    output_path: Optional[str] = None


def load_figure_spec(figure_id, grid=None, figures_dir=None):
    if figure_id not in FIGURE_IDS:
        raise UnknownFigure(f"unknown figure '{figure_id}', expected one of {', '.join(FIGURE_IDS)}")
    data = load_json_file(os.path.join(figures_dir or FIGURES_DIR, f"{figure_id}.json"))
    g = data.get("grid", {})
    spec_grid = grid or Grid(float(g["x_min"]), float(g["x_max"]), int(g["points"]))
    params = {k: v for k, v in data.items() if k not in ("figure_id", "grid")}
    return FigureSpec(figure_id, spec_grid, params)


def _members(params):
    return [leaf(mid, utility_from_json(u)) for mid, u in params["members"].items()]


def _curve_columns(org, prefix, xs, with_screening=True):
    cols = {f"u_{prefix}": org.values(xs)}
    if with_screening:
        cols[f"s_{prefix}"] = org.screening_values(xs)
    return cols


def _rows(columns):
    keys = list(columns)
    n = len(columns[keys[0]])
    return [{k: float(columns[k][i]) for k in keys} for i in range(n)]


# --- BUILDERS ---
def _member_columns(leaves, xs):
    cols = {}
    for lf in leaves:
        u = lf.member.utility
        cols[f"u_{lf.member.id}"] = u.values(xs)
        cols[f"s_{lf.member.id}"] = u.screening_values(xs)
    return cols


def _screening_examples(spec):
    xs = spec.grid.values()
    leaves = _members(spec.params)
    unan, poly = derive_org_utility(And(tuple(leaves))), derive_org_utility(Or(tuple(leaves)))
    cols = {"x": xs, **_member_columns(leaves, xs)}
    cols["s_and"] = unan.screening_values(xs)
    cols["s_or"] = poly.screening_values(xs)
    domain = (spec.grid.x_min, spec.grid.x_max)
    errors = {lf.member.id: error_rates(lf.member.utility, domain) for lf in leaves}
    errors["and"] = error_rates(unan, domain)
    errors["or"] = error_rates(poly, domain)
    return _rows(cols), {"error_rates": errors}


def _pipeline_demo(spec):
    xs = spec.grid.values()
    leaves = _members(spec.params)
    node = And if spec.params.get("structure", "and") == "and" else Or
    org = derive_org_utility(node(tuple(leaves)))
    cols = {"x": xs, **_member_columns(leaves, xs), **_curve_columns(org, "org", xs)}
    return _rows(cols), {"structure": spec.params.get("structure", "and"), "monotonicity": list(org.monotonicity)}


def _unan_poly(spec):
    xs = spec.grid.values()
    leaves = _members(spec.params)
    unan, poly = derive_org_utility(And(tuple(leaves))), derive_org_utility(Or(tuple(leaves)))
    approx_u, approx_p = approx_org_utility(unan.tree), approx_org_utility(poly.tree)
    cols = {"x": xs}
    for lf in leaves:
        cols[f"u_{lf.member.id}"] = lf.member.utility.values(xs)
    cols["u_sum"] = synthetic_member([lf.member for lf in leaves]).values(xs)
    cols["u_unan"] = unan.values(xs)
    cols["u_poly"] = poly.values(xs)
    cols["approx_unan"] = approx_u.values(xs)
    cols["approx_poly"] = approx_p.values(xs)
    point = float(spec.params.get("point", 4.0))
    meta = {
        "point": point,
        "u_unan_at_point": unan.value(point),
        "u_poly_at_point": poly.value(point),
        "approx_unan_at_point": approx_u.value(point),
        "sandwich_width": approx_u.gap,
    }
    return _rows(cols), meta


def _certainty_equiv(spec):
    rows, _ = _unan_poly(spec)
    leaves = _members(spec.params)
    lottery = Lottery.from_json(spec.params["lottery"])
    meta = {
        "lottery": lottery.to_json(),
        "unanimity": risk_summary(derive_org_utility(And(tuple(leaves))), lottery),
        "polyarchy": risk_summary(derive_org_utility(Or(tuple(leaves))), lottery),
    }
    keep = ("x", "u_unan", "u_poly")
    return [{k: r[k] for k in keep} for r in rows], meta


def _vary_n(spec):
    xs = spec.grid.values()
    u = utility_from_json(spec.params.get("member_utility", {"kind": "var"}))
    cols = {"x": xs}
    for n in spec.params.get("sizes", [1, 2, 3, 4, 5]):
        leaves = tuple(leaf(f"M{i + 1}", u) for i in range(int(n)))
        for name, node in (("and", And), ("or", Or)):
            tree = leaves[0] if n == 1 else node(leaves)
            cols[f"{name}_n{n}"] = derive_org_utility(tree).values(xs)
    return _rows(cols), {"sizes": spec.params.get("sizes", [1, 2, 3, 4, 5])}


def _opposing_views(spec):
    xs = spec.grid.values()
    leaves = _members(spec.params)
    unan, poly = derive_org_utility(And(tuple(leaves))), derive_org_utility(Or(tuple(leaves)))
    cols = {"x": xs, **_member_columns(leaves, xs), **_curve_columns(unan, "and", xs), **_curve_columns(poly, "or", xs)}
    step = float(spec.params.get("peak_step", 1e-3))
    fine = np.arange(spec.grid.x_min, spec.grid.x_max + 0.5 * step, step)
    s = unan.screening_values(fine)
    i = int(np.argmax(s))
    meta = {"and_peak_x": float(fine[i]), "and_peak_screening": float(s[i]), "and_monotonicity": list(unan.monotonicity)}
    return _rows(cols), meta


def _cara_appendix(spec):
    xs = spec.grid.values()
    leaves = _members(spec.params)
    unan, poly = derive_org_utility(And(tuple(leaves))), derive_org_utility(Or(tuple(leaves)))
    cols = {"x": xs}
    for lf in leaves:
        cols[f"u_{lf.member.id}"] = lf.member.utility.values(xs)
    cols["u_unan"] = unan.values(xs)
    cols["u_poly"] = poly.values(xs)
    return _rows(cols), {"closed_form": unan.closed_form is not None}


def _multivariate(spec):
    axis = spec.grid.values()
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    X = np.column_stack([x1.ravel(), x2.ravel()])
    leaves = _members(spec.params)
    unan, poly = derive_org_utility(And(tuple(leaves))), derive_org_utility(Or(tuple(leaves)))
    cols = {"x1": X[:, 0], "x2": X[:, 1]}
    for lf in leaves:
        cols[f"u_{lf.member.id}"] = lf.member.utility.values(X)
    cols["u_unan"] = unan.values(X)
    cols["u_poly"] = poly.values(X)
    return _rows(cols), {"points_per_axis": int(spec.grid.points)}


def _games(spec, workers=1, seed=None):
    cournot_cfg = CournotConfig.from_dict(spec.params.get("cournot"))
    contract_cfg = contract_config(spec.params.get("contract"), seed)
    pairs = [tuple(p) for p in spec.params.get("pairs", [])]
    principals = list(spec.params.get("principals", []))
    rows = solve_games("cournot", cournot_cfg, pairs, workers)
    rows += solve_games("contract", contract_cfg, principals, workers)
    return rows, {"pairs": ["".join(p) for p in pairs], "principals": principals}


BUILDERS = {
    "screening_examples": _screening_examples,
    "pipeline_demo": _pipeline_demo,
    "unan_poly_linear": _unan_poly,
    "certainty_equiv": _certainty_equiv,
    "vary_n": _vary_n,
    "opposing_views": _opposing_views,
    "cara_appendix": _cara_appendix,
    "multivariate_appendix": _multivariate,
}


def build_figure(spec, workers=1, seed=None):
    if spec.figure_id == "games":
        return _games(spec, workers, seed)
    if spec.figure_id not in BUILDERS:
        raise UnknownFigure(f"unknown figure '{spec.figure_id}'")
    return BUILDERS[spec.figure_id](spec)


def write_figure(spec, out_dir, workers=1, seed=None):
    """Writes <figure_id>.csv and <figure_id>.meta.json under out_dir; returns both paths."""
    rows, meta = build_figure(spec, workers, seed)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{spec.figure_id}.csv")
    meta_path = os.path.join(out_dir, f"{spec.figure_id}.meta.json")
    with open(csv_path, "w", newline="") as f:
        f.write(render_csv(rows))
    with open(meta_path, "w") as f:
        f.write(render_json({"figure_id": spec.figure_id, "grid": spec.grid.to_dict(), "params": spec.params, "summary": meta}))
    return csv_path, meta_path


# --- GAME BATCHES ---
def contract_config(data=None, seed=None):
    data = dict(data or {})
    if seed is not None:
        data["annealing"] = {**data.get("annealing", {}), "seed": int(seed)}
    return ContractConfig.from_dict(data)


def _solve_one(task):
    model, label, cfg = task
    row = {"model": model, "label": label if isinstance(label, str) else "".join(label), "error": ""}
    try:
        if model == "cournot":
            row.update(solve_structure_pair(label, cfg).to_row())
        else:
            row.update(solve_principal(label, cfg).to_row())
    except NoConvergence as e:
        if e.result is not None:
            row.update(e.result.to_row())
        row["error"] = f"{type(e).__name__}: {e}"
    except OrgUtilityError as e:
        row["error"] = f"{type(e).__name__}: {e}"
    return row


def solve_games(model, cfg, labels, workers=1):
    """One row per structure pair (cournot) or principal code (contract), in input order."""
    tasks = [(model, label, cfg) for label in labels]
    if workers and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=int(workers)) as pool:
            return list(pool.map(_solve_one, tasks))
    return [_solve_one(t) for t in tasks]


def games_from_scenario(data, workers=1, seed=None):
    """Rows for a scenario file {"model": "cournot"|"contract", "config": {...}, "pairs"|"principals": [...]}."""
    model = data.get("model")
    if model == "cournot":
        cfg = CournotConfig.from_dict(data.get("config"))
        labels = [tuple(p) for p in data.get("pairs", all_structure_pairs())]
    elif model == "contract":
        cfg = contract_config(data.get("config"), seed)
        labels = list(data.get("principals", ["N", "U", "P"]))
    else:
        raise InvalidStructure(f"scenario model must be 'cournot' or 'contract', got {model!r}")
    return solve_games(model, cfg, labels, workers), cfg
