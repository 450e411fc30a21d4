"""Aggregation structures and the organizational utility they induce.

Members' utilities are turned into approval probabilities, combined according to
an AND / OR / k-of-N tree (members err independently), and the combined
probability is mapped back to utility space with the logit. Probabilities travel
through the tree as (log p, log(1 - p)) pairs so the logit stays exact when the
organization almost surely approves or rejects.
"""
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from components.errors import (
    BadDomain,
    DegenerateProbability,
    EmptyInput,
    InvalidStructure,
    NotAffine,
)
from components.utility import (
    DEFAULT_DOMAIN,
    Sum,
    UtilityExpr,
    as_affine,
    as_outcome_rows,
    as_outcome_vector,
    log_screening_pair,
    utility_from_json,
    utility_from_log_pair,
    utility_to_json,
)
from components.utils import config_section

_AGG_CFG = config_section("aggregation")
CLOSED_FORM_MAX_MEMBERS = int(_AGG_CFG.get("closed_form_max_members", 20))
MONOTONE_GRID_POINTS = int(_AGG_CFG.get("monotone_grid_points", 2001))
MONOTONE_TOL = float(_AGG_CFG.get("monotone_tol", 1e-12))

LOG_HALF = -math.log(2.0)


def log1mexp(a):
    """log(1 - exp(a)) for a <= 0, accurate on both sides of -log 2."""
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        near_zero = np.log(-np.expm1(a))
        far = np.log1p(-np.exp(a))
    return np.where(a > LOG_HALF, near_zero, far)


# --- TREE ---
@dataclass(frozen=True)
class Member:
    id: str
    utility: UtilityExpr


class AggregationTree:
    kind = "tree"

    def leaves(self):
        raise NotImplementedError

    @property
    def dimension(self):
        return max(m.utility.dimension for m in self.leaves())

    def log_pair(self, X):
        """(log p, log(1 - p)) of approval at each row of X."""
        raise NotImplementedError

    def log_pair_grad(self, X, dim):
        """log_pair plus the derivatives of both logs along outcome dimension `dim`."""
        raise NotImplementedError


@dataclass(frozen=True)
class Leaf(AggregationTree):
    member: Member
    kind = "leaf"

    def leaves(self):
        return [self.member]

    def log_pair(self, X):
        return log_screening_pair(self.member.utility._eval(X))

    def log_pair_grad(self, X, dim):
        u = self.member.utility._eval(X)
        du = self.member.utility._grad(X, dim)
        lp, lq = log_screening_pair(u)
        return lp, lq, np.exp(lq) * du, -np.exp(lp) * du


def _check_children(kind, children, minimum):
    children = tuple(children)
    if len(children) < minimum:
        raise InvalidStructure(f"'{kind}' node needs at least {minimum} children, got {len(children)}")
    for c in children:
        if not isinstance(c, AggregationTree):
            raise InvalidStructure(f"'{kind}' child must be a tree node, got {type(c).__name__}")
    return children


@dataclass(frozen=True)
class And(AggregationTree):
    children: Tuple[AggregationTree, ...]
    kind = "and"

    def __post_init__(self):
        object.__setattr__(self, "children", _check_children("and", self.children, 2))

    def leaves(self):
        return [m for c in self.children for m in c.leaves()]

    def log_pair(self, X):
        lp = sum(c.log_pair(X)[0] for c in self.children)
        return lp, log1mexp(lp)

    def log_pair_grad(self, X, dim):
        lp = 0.0
        dlp = 0.0
        for c in self.children:
            clp, _, cdlp, _ = c.log_pair_grad(X, dim)
            lp = lp + clp
            dlp = dlp + cdlp
        lq = log1mexp(lp)
        return lp, lq, dlp, -np.exp(lp - lq) * dlp


@dataclass(frozen=True)
class Or(AggregationTree):
    children: Tuple[AggregationTree, ...]
    kind = "or"

    def __post_init__(self):
        object.__setattr__(self, "children", _check_children("or", self.children, 2))

    def leaves(self):
        return [m for c in self.children for m in c.leaves()]

    def log_pair(self, X):
        lq = sum(c.log_pair(X)[1] for c in self.children)
        return log1mexp(lq), lq

    def log_pair_grad(self, X, dim):
        lq = 0.0
        dlq = 0.0
        for c in self.children:
            _, clq, _, cdlq = c.log_pair_grad(X, dim)
            lq = lq + clq
            dlq = dlq + cdlq
        lp = log1mexp(lq)
        return lp, lq, -np.exp(lq - lp) * dlq, dlq


def _log_count_pmf(pairs):
    """Log-pmf of the number of approvals among independent children (Poisson-binomial DP)."""
    n_rows = pairs[0][0].shape[0]
    pmf = np.zeros((n_rows, 1))
    for lp, lq in pairs:
        nxt = np.full((n_rows, pmf.shape[1] + 1), -np.inf)
        nxt[:, :-1] = pmf + lq[:, None]
        nxt[:, 1:] = np.logaddexp(nxt[:, 1:], pmf + lp[:, None])
        pmf = nxt
    return pmf


@dataclass(frozen=True)
class KofN(AggregationTree):
    k: int
    children: Tuple[AggregationTree, ...]
    kind = "kofn"

    def __post_init__(self):
        children = _check_children("kofn", self.children, 1)
        k = int(self.k)
        if not (1 <= k <= len(children)):
            raise InvalidStructure(f"kofn needs 1 <= k <= {len(children)}, got k={k}")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "children", children)

    def leaves(self):
        return [m for c in self.children for m in c.leaves()]

    def log_pair(self, X):
        pmf = _log_count_pmf([c.log_pair(X) for c in self.children])
        return logsumexp(pmf[:, self.k:], axis=1), logsumexp(pmf[:, : self.k], axis=1)

    def log_pair_grad(self, X, dim):
        grads = [c.log_pair_grad(X, dim) for c in self.children]
        pairs = [(g[0], g[1]) for g in grads]
        pmf = _log_count_pmf(pairs)
        lp = logsumexp(pmf[:, self.k:], axis=1)
        lq = logsumexp(pmf[:, : self.k], axis=1)
        # dP[>=k]/dp_i = P[exactly k-1 approvals among the other children]
        dlp = 0.0
        for i, (clp, _, cdlp, _) in enumerate(grads):
            others = _log_count_pmf(pairs[:i] + pairs[i + 1:]) if len(pairs) > 1 else np.zeros((clp.shape[0], 1))
            pivot = others[:, self.k - 1] if self.k - 1 < others.shape[1] else np.full(clp.shape[0], -np.inf)
            dlp = dlp + np.exp(pivot + clp - lp) * cdlp
        return lp, lq, dlp, -np.exp(lp - lq) * dlp


def validate_tree(tree):
    if not isinstance(tree, AggregationTree):
        raise InvalidStructure(f"expected an aggregation tree, got {type(tree).__name__}")
    ids = [m.id for m in tree.leaves()]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise InvalidStructure(f"member ids must be unique, duplicated: {dupes}")
    return tree


def synthetic_member(members):
    """The 'A + B + ...' utility that appears as an extra term in the closed forms."""
    return Sum(tuple(m.utility if isinstance(m, Member) else m for m in members))


def _pure_kind(tree):
    """'and' / 'or' when the tree is a single leaf or nested nodes of one kind over leaves."""
    if isinstance(tree, Leaf):
        return "leaf"
    if isinstance(tree, KofN):
        kind = "and" if tree.k == len(tree.children) else "or" if tree.k == 1 else None
    else:
        kind = tree.kind
    if kind is None:
        return None
    for c in tree.children:
        sub = _pure_kind(c)
        if sub not in ("leaf", kind):
            return None
        if sub == "leaf" and not isinstance(c, Leaf):
            return None
    return kind


def org_screening(tree, x):
    """Probability that the organization approves outcome x."""
    validate_tree(tree)
    X = as_outcome_vector(x)
    _check_dimension(tree, X)
    lp, _ = tree.log_pair(X)
    return float(np.exp(lp[0]))


def _check_dimension(tree, X):
    for m in tree.leaves():
        m.utility._check(X)


# --- CLOSED FORMS ---
@dataclass(frozen=True)
class LogSumExpForm:
    """u(x) = sign * log(sum_S exp(arg_S(x))) with affine exponent arguments."""

    sign: int
    terms: Tuple[UtilityExpr, ...]

    def values(self, xs):
        X = as_outcome_rows(xs)
        return self._eval(X)

    def value(self, x):
        return float(self._eval(as_outcome_vector(x))[0])

    def _eval(self, X):
        args = np.column_stack([t._eval(X) for t in self.terms])
        return self.sign * logsumexp(args, axis=1)

    def _grad(self, X, dim):
        args = np.column_stack([t._eval(X) for t in self.terms])
        slopes = np.column_stack([t._grad(X, dim) for t in self.terms])
        weights = np.exp(args - logsumexp(args, axis=1, keepdims=True))
        return self.sign * np.sum(weights * slopes, axis=1)


def _affine_members(members):
    out = []
    for m in members:
        u = m.utility if isinstance(m, Member) else m
        a = as_affine(u) if isinstance(u, UtilityExpr) else None
        if a is None:
            raise NotAffine(f"closed form needs affine member utilities, got {type(u).__name__}")
        out.append(a)
    return out


def _subset_sums(affines, sign):
    if len(affines) > CLOSED_FORM_MAX_MEMBERS:
        raise InvalidStructure(f"closed form is limited to {CLOSED_FORM_MAX_MEMBERS} members, got {len(affines)}")
    terms = []
    for size in range(1, len(affines) + 1):
        for subset in itertools.combinations(affines, size):
            total = subset[0]
            for a in subset[1:]:
                total = total.shifted(a)
            terms.append(total if sign > 0 else total.negated())
    return tuple(terms)


def unanimity_closed_form(members):
    """-log of the sum over non-empty member subsets S of exp(-sum_{i in S} u_i)."""
    affines = _affine_members(members)
    if len(affines) < 2:
        raise InvalidStructure("unanimity closed form needs at least 2 members")
    return LogSumExpForm(-1, _subset_sums(affines, -1))


def polyarchy_closed_form(members):
    """log of the sum over non-empty member subsets S of exp(sum_{i in S} u_i)."""
    affines = _affine_members(members)
    if len(affines) < 2:
        raise InvalidStructure("polyarchy closed form needs at least 2 members")
    return LogSumExpForm(1, _subset_sums(affines, 1))


def lse_with_bounds(args):
    """LogSumExp with its max <= lse <= max + log n sandwich."""
    arr = np.asarray(args, dtype=float).ravel()
    if arr.size == 0:
        raise EmptyInput("LogSumExp needs at least one argument")
    if not np.all(np.isfinite(arr)):
        raise InvalidStructure("LogSumExp arguments must be finite")
    m = float(np.max(arr))
    lse = m + math.log(float(np.sum(np.exp(arr - m))))
    return {"lse": lse, "lower": m, "upper": m + math.log(arr.size)}


@dataclass(frozen=True)
class PiecewiseLinearApprox:
    """min (unanimity) or max (polyarchy) over members and their subset sums."""

    sense: str
    terms: Tuple[UtilityExpr, ...]

    @property
    def gap(self):
        """Width of the sandwich between this approximation and the exact utility."""
        return math.log(len(self.terms))

    def values(self, xs):
        X = as_outcome_rows(xs)
        stacked = np.column_stack([t._eval(X) for t in self.terms])
        return stacked.min(axis=1) if self.sense == "min" else stacked.max(axis=1)

    def value(self, x):
        return float(self.values(as_outcome_vector(x))[0])


def approx_org_utility(tree):
    validate_tree(tree)
    kind = _pure_kind(tree)
    members = tree.leaves()
    affines = _affine_members(members)
    if kind == "leaf":
        return PiecewiseLinearApprox("min", tuple(affines))
    if kind not in ("and", "or"):
        raise InvalidStructure("min/max approximation needs a pure AND or pure OR tree")
    return PiecewiseLinearApprox("min" if kind == "and" else "max", _subset_sums(affines, 1))


# --- ORGANIZATIONAL UTILITY ---
def _monotonicity(evaluate, dimension, domain, points=MONOTONE_GRID_POINTS, tol=MONOTONE_TOL):
    lo, hi = float(domain[0]), float(domain[1])
    grid = np.linspace(lo, hi, points)
    mid = 0.5 * (lo + hi)
    flags = []
    for dim in range(max(dimension, 1)):
        X = np.full((points, max(dimension, 1)), mid)
        X[:, dim] = grid
        try:
            vals = evaluate(X)
        except DegenerateProbability:
            flags.append(None)
            continue
        diffs = np.diff(vals)
        if np.all(diffs > tol):
            flags.append("increasing")
        elif np.all(diffs < -tol):
            flags.append("decreasing")
        else:
            flags.append("none")
    return tuple(flags)


@dataclass(frozen=True)
class OrgUtility:
    tree: AggregationTree
    closed_form: Optional[LogSumExpForm] = None
    domain: Tuple[float, float] = DEFAULT_DOMAIN
    monotonicity: Tuple[Optional[str], ...] = field(default=())

    @property
    def dimension(self):
        return self.tree.dimension

    @property
    def monotone_increasing(self):
        return tuple(None if m is None else m == "increasing" for m in self.monotonicity)

    def is_increasing(self, dim=0):
        return dim < len(self.monotonicity) and self.monotonicity[dim] == "increasing"

    def _rows(self, xs):
        X = as_outcome_rows(xs)
        _check_dimension(self.tree, X)
        return X

    def _eval(self, X):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            lp, lq = self.tree.log_pair(X)
            vals = utility_from_log_pair(lp, lq)
        bad = ~np.isfinite(vals)
        if np.any(bad):
            if self.closed_form is None:
                i = int(np.argmax(bad))
                raise DegenerateProbability("organizational screening saturated", x=X[i].tolist())
            vals = np.where(bad, self.closed_form._eval(X), vals)
        return vals

    def _grad(self, X, dim):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            lp, lq, dlp, dlq = self.tree.log_pair_grad(X, dim)
            grads = dlp - dlq
        bad = ~np.isfinite(grads)
        if np.any(bad):
            if self.closed_form is None:
                i = int(np.argmax(bad))
                raise DegenerateProbability("organizational screening saturated", x=X[i].tolist())
            grads = np.where(bad, self.closed_form._grad(X, dim), grads)
        return grads

    def values(self, xs):
        return self._eval(self._rows(xs))

    def value(self, x):
        X = as_outcome_vector(x)
        _check_dimension(self.tree, X)
        return float(self._eval(X)[0])

    def derivatives(self, xs, dim=0):
        return self._grad(self._rows(xs), dim)

    def derivative(self, x, dim=0):
        X = as_outcome_vector(x)
        _check_dimension(self.tree, X)
        return float(self._grad(X, dim)[0])

    def screening_values(self, xs):
        lp, _ = self.tree.log_pair(self._rows(xs))
        return np.exp(lp)

    def screening(self, x):
        return org_screening(self.tree, x)

    def __call__(self, x):
        return self.value(x)


def check_domain(domain):
    """(lo, hi) as floats; a structure domain must be a finite increasing interval."""
    try:
        lo, hi = (float(v) for v in domain)
    except (TypeError, ValueError):
        raise BadDomain(f"domain must be a [lo, hi] pair, got {domain!r}")
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise BadDomain(f"domain must be a finite interval with lo < hi, got [{lo}, {hi}]")
    return lo, hi


def derive_org_utility(tree, domain=DEFAULT_DOMAIN):
    """Organizational utility of `tree`, with the LogSumExp fast path when it applies."""
    validate_tree(tree)
    kind = _pure_kind(tree)
    closed = None
    members = tree.leaves()
    domain = check_domain(domain)
    if kind in ("and", "or") and len(members) == 1:
        # a k-of-1 node screens exactly like its only member
        kind = "leaf"
    if kind in ("and", "or") and len(members) <= CLOSED_FORM_MAX_MEMBERS:
        try:
            closed = unanimity_closed_form(members) if kind == "and" else polyarchy_closed_form(members)
        except NotAffine:
            closed = None
    elif kind == "leaf":
        affine = as_affine(members[0].utility)
        if affine is not None:
            closed = LogSumExpForm(1, (affine,))
    org = OrgUtility(tree, closed, domain)
    flags = _monotonicity(org._eval, org.dimension, org.domain)
    object.__setattr__(org, "monotonicity", flags)
    return org


# --- JSON ---
def tree_to_json(tree):
    if isinstance(tree, Leaf):
        return {"kind": "leaf", "id": tree.member.id, "utility": utility_to_json(tree.member.utility)}
    if isinstance(tree, KofN):
        return {"kind": "kofn", "k": tree.k, "children": [tree_to_json(c) for c in tree.children]}
    return {"kind": tree.kind, "children": [tree_to_json(c) for c in tree.children]}


def tree_from_json(data):
    if not isinstance(data, dict) or "kind" not in data:
        raise InvalidStructure(f"tree node must be an object with a 'kind' field, got {data!r}")
    kind = data["kind"]
    try:
        if kind == "leaf":
            node = Leaf(Member(str(data["id"]), utility_from_json(data["utility"])))
        elif kind == "and":
            node = And(tuple(tree_from_json(c) for c in data["children"]))
        elif kind == "or":
            node = Or(tuple(tree_from_json(c) for c in data["children"]))
        elif kind == "kofn":
            node = KofN(int(data["k"]), tuple(tree_from_json(c) for c in data["children"]))
        else:
            raise InvalidStructure(f"unknown tree kind '{kind}'")
    except (KeyError, TypeError) as e:
        raise InvalidStructure(f"malformed '{kind}' node: {e}")
    return node


def structure_from_json(data):
    """Top-level structure file: either a bare tree or {"tree": ..., "domain": [lo, hi]}."""
    if isinstance(data, dict) and "tree" in data:
        tree = validate_tree(tree_from_json(data["tree"]))
        domain = check_domain(data.get("domain", DEFAULT_DOMAIN))
        return tree, domain
    return validate_tree(tree_from_json(data)), DEFAULT_DOMAIN


def leaf(member_id, utility):
    return Leaf(Member(member_id, utility))


def configured_leaves(section="members"):
    """Leaves for the member utilities declared in the config (A: 5 + x, B: -5 + 3x by default)."""
    declared = config_section(section)
    if not declared:
        raise InvalidStructure(f"config section '{section}' declares no members")
    return tuple(leaf(member_id, utility_from_json(spec)) for member_id, spec in declared.items())
