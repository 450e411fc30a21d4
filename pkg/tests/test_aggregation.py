"""Screening pipeline, closed forms, approximations and derived organizational utility."""
import math

import numpy as np
import pytest
from scipy.special import expit

from components.aggregation import (
    And,
    KofN,
    Or,
    approx_org_utility,
    derive_org_utility,
    leaf,
    log1mexp,
    lse_with_bounds,
    org_screening,
    polyarchy_closed_form,
    structure_from_json,
    tree_from_json,
    tree_to_json,
    unanimity_closed_form,
)
from components.errors import BadDomain, DegenerateProbability, EmptyInput, InvalidStructure, NotAffine
from components.utility import Affine, ExpCara, Negate, Var

GRID = np.linspace(-10.0, 10.0, 2001)


@pytest.fixture(scope="module")
def running_leaves():
    return (leaf("A", Affine(5.0, (1.0,))), leaf("B", Affine(-5.0, (3.0,))))


@pytest.fixture(scope="module")
def unanimity(running_leaves):
    return derive_org_utility(And(running_leaves))


@pytest.fixture(scope="module")
def polyarchy(running_leaves):
    return derive_org_utility(Or(running_leaves))


class TestScreeningPipeline:
    def test_and_of_two_coin_flips(self):
        tree = And((leaf("A", Var(0)), leaf("B", Var(0))))
        assert org_screening(tree, 0.0) == pytest.approx(0.25, abs=1e-16)

    def test_or_of_two_coin_flips(self):
        tree = Or((leaf("A", Var(0)), leaf("B", Var(0))))
        assert org_screening(tree, 0.0) == pytest.approx(0.75)

    def test_and_or_products(self, running_leaves):
        x = 0.7
        pa, pb = expit(5.0 + x), expit(-5.0 + 3.0 * x)
        assert org_screening(And(running_leaves), x) == pytest.approx(pa * pb, rel=1e-12)
        assert org_screening(Or(running_leaves), x) == pytest.approx(1.0 - (1.0 - pa) * (1.0 - pb), rel=1e-12)

    def test_de_morgan_on_utilities(self):
        rng = np.random.default_rng(42)
        xs = np.linspace(-10.0, 10.0, 201)
        for _ in range(100):
            n = int(rng.integers(2, 5))
            utilities = [Affine(rng.normal(0.0, 2.0), (rng.normal(0.0, 1.0),)) for _ in range(n)]
            poly = derive_org_utility(Or(tuple(leaf(f"M{i}", u) for i, u in enumerate(utilities))))
            unan = derive_org_utility(And(tuple(leaf(f"M{i}", Negate(u)) for i, u in enumerate(utilities))))
            np.testing.assert_allclose(poly.values(xs), -unan.values(xs), rtol=0.0, atol=1e-9)

    def test_nesting_is_associative(self):
        rng = np.random.default_rng(42)
        xs = np.linspace(-10.0, 10.0, 201)
        for _ in range(100):
            n = int(rng.integers(3, 5))
            leaves = tuple(leaf(f"M{i}", Affine(rng.normal(0.0, 2.0), (rng.normal(0.0, 1.0),))) for i in range(n))
            for node in (And, Or):
                nested = derive_org_utility(node((leaves[0], node(leaves[1:])))).values(xs)
                flat = derive_org_utility(node(leaves)).values(xs)
                np.testing.assert_allclose(nested, flat, rtol=0.0, atol=1e-9)

    def test_two_of_three_at_half(self):
        tree = KofN(2, tuple(leaf(f"M{i}", Var(0)) for i in range(3)))
        assert org_screening(tree, 0.0) == pytest.approx(0.5, abs=1e-15)

    def test_kofn_extremes_match_and_or(self, running_leaves):
        for x in (-3.0, 0.0, 2.0):
            assert org_screening(KofN(2, running_leaves), x) == pytest.approx(org_screening(And(running_leaves), x), rel=1e-12)
            assert org_screening(KofN(1, running_leaves), x) == pytest.approx(org_screening(Or(running_leaves), x), rel=1e-12)

    def test_kofn_bounds(self, running_leaves):
        with pytest.raises(InvalidStructure):
            KofN(3, running_leaves)
        with pytest.raises(InvalidStructure):
            KofN(0, running_leaves)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(InvalidStructure):
            derive_org_utility(And((leaf("A", Var(0)), leaf("A", Var(0)))))

    def test_single_child_nodes_rejected(self):
        with pytest.raises(InvalidStructure):
            And((leaf("A", Var(0)),))

    def test_log1mexp_branches(self):
        a = np.array([-1e-20, -0.1, -0.7, -5.0, -50.0])
        np.testing.assert_allclose(log1mexp(a), np.log(-np.expm1(a)), rtol=1e-12)


class TestClosedForms:
    def test_unanimity_matches_pipeline(self, unanimity, running_leaves):
        closed = unanimity_closed_form([lf.member for lf in running_leaves])
        np.testing.assert_allclose(unanimity.values(GRID), closed.values(GRID), atol=1e-8)

    def test_polyarchy_matches_pipeline(self, polyarchy, running_leaves):
        closed = polyarchy_closed_form([lf.member for lf in running_leaves])
        np.testing.assert_allclose(polyarchy.values(GRID), closed.values(GRID), atol=1e-8)

    def test_unanimity_at_four(self, unanimity):
        assert unanimity.value(4.0) == pytest.approx(6.87, abs=0.01)

    def test_polyarchy_tails(self, polyarchy):
        assert polyarchy.value(10.0) == pytest.approx(40.0, abs=1e-4)
        assert polyarchy.value(-10.0) == pytest.approx(-5.0, abs=1e-4)

    def test_unanimity_tails(self, unanimity):
        assert unanimity.value(10.0) == pytest.approx(15.0, abs=1e-4)
        assert unanimity.value(-10.0) == pytest.approx(-40.0, abs=0.01)

    def test_closed_form_needs_affine(self):
        with pytest.raises(NotAffine):
            unanimity_closed_form([leaf("A", ExpCara(10.0, 5.0)).member, leaf("B", Var(0)).member])

    def test_closed_form_needs_two_members(self):
        with pytest.raises(InvalidStructure):
            polyarchy_closed_form([leaf("A", Var(0)).member])

    def test_single_child_kofn_is_its_member(self):
        tree = KofN(1, (leaf("A", Affine(5.0, (1.0,))),))
        org = derive_org_utility(tree)
        assert org.closed_form is not None
        assert org.value(4.0) == pytest.approx(9.0, abs=1e-12)
        np.testing.assert_allclose(org.values(GRID), 5.0 + GRID, atol=1e-9)
        assert org.monotonicity == ("increasing",)

    def test_saturated_points_fall_back_to_closed_form(self):
        tree = And((leaf("A", Affine(0.0, (100.0,))), leaf("B", Affine(0.0, (100.0,)))))
        org = derive_org_utility(tree)
        # both members approve with probability 1 - 1e-434 at x = 10
        assert org.value(10.0) == pytest.approx(1000.0 - math.log(2.0), abs=1e-9)

    def test_saturation_without_closed_form_raises(self):
        saturated = And((leaf("A", Affine(0.0, (100.0,))), leaf("B", Affine(0.0, (100.0,)))))
        org = derive_org_utility(KofN(1, (saturated, leaf("C", Var(0)))))
        assert org.closed_form is None
        with pytest.raises(DegenerateProbability):
            org.value(10.0)


class TestApproximation:
    def test_min_approximation_at_four(self, unanimity):
        approx = approx_org_utility(unanimity.tree)
        assert approx.value(4.0) == pytest.approx(7.0)

    def test_sandwich(self, unanimity, polyarchy):
        rng = np.random.default_rng(42)
        xs = rng.uniform(-10.0, 10.0, size=1000)
        lo, hi = approx_org_utility(unanimity.tree), approx_org_utility(polyarchy.tree)
        u, p = unanimity.values(xs), polyarchy.values(xs)
        assert np.all(u <= lo.values(xs) + 1e-9)
        assert np.all(u >= lo.values(xs) - lo.gap - 1e-9)
        assert np.all(p >= hi.values(xs) - 1e-9)
        assert np.all(p <= hi.values(xs) + hi.gap + 1e-9)

    def test_lse_bounds(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            args = rng.normal(0.0, 10.0, size=int(rng.integers(1, 8)))
            b = lse_with_bounds(args)
            assert b["lower"] <= b["lse"] + 1e-12
            assert b["lse"] <= b["upper"] + 1e-12

    def test_lse_of_three_zeros(self):
        assert lse_with_bounds([0.0, 0.0, 0.0])["lse"] == pytest.approx(math.log(3.0), abs=1e-12)

    def test_lse_empty(self):
        with pytest.raises(EmptyInput):
            lse_with_bounds([])

    def test_mixed_tree_has_no_approximation(self, running_leaves):
        tree = And((Or(running_leaves), leaf("C", Var(0))))
        with pytest.raises(InvalidStructure):
            approx_org_utility(tree)


class TestOrgUtility:
    def test_monotone_flags(self, unanimity, polyarchy):
        assert unanimity.monotonicity == ("increasing",)
        assert polyarchy.is_increasing()

    def test_derivative_matches_finite_difference(self, unanimity):
        h = 1e-6
        for x in (-4.0, 0.5, 3.0):
            fd = (unanimity.value(x + h) - unanimity.value(x - h)) / (2.0 * h)
            assert unanimity.derivative(x) == pytest.approx(fd, rel=1e-5)

    def test_kofn_derivative(self, running_leaves):
        org = derive_org_utility(KofN(2, running_leaves + (leaf("C", Affine(1.0, (-0.5,))),)))
        h = 1e-6
        for x in (-2.0, 1.0):
            fd = (org.value(x + h) - org.value(x - h)) / (2.0 * h)
            assert org.derivative(x) == pytest.approx(fd, rel=1e-5)

    def test_unanimity_grows_more_risk_averse_with_size(self):
        xs = np.array([-2.0, 2.0])
        values = []
        for n in (2, 3, 4):
            org = derive_org_utility(And(tuple(leaf(f"M{i}", Var(0)) for i in range(n))))
            values.append(org.values(xs))
        # more members needed to agree: the approval curve shifts right
        assert values[0][1] > values[1][1] > values[2][1]

    def test_size_scaling_on_grid(self):
        def curve(node, n):
            leaves = tuple(leaf(f"M{i}", Var(0)) for i in range(n))
            return derive_org_utility(leaves[0] if n == 1 else node(leaves)).values(GRID)

        neg, pos = GRID < 0, GRID > 0
        for n in range(1, 5):
            assert np.all(np.diff([curve(And, n)[neg], curve(And, n + 1)[neg]], axis=0) <= 1e-12)
            assert np.all(np.diff([curve(Or, n)[pos], curve(Or, n + 1)[pos]], axis=0) >= -1e-12)

    def test_polyarchy_grows_more_permissive_with_size(self):
        x = np.array([-2.0])
        values = [derive_org_utility(Or(tuple(leaf(f"M{i}", Var(0)) for i in range(n)))).values(x)[0] for n in (2, 3, 4)]
        assert values[0] < values[1] < values[2]

    def test_opposing_views_peak(self, scenario):
        from components.utils import load_json_file

        tree, domain = structure_from_json(load_json_file(scenario("opposing.json")))
        org = derive_org_utility(tree, domain)
        fine = np.arange(-10.0, 10.0 + 5e-4, 1e-3)
        s = org.screening_values(fine)
        i = int(np.argmax(s))
        assert 0 < i < len(fine) - 1
        assert s[i] == pytest.approx(0.19, abs=0.02)
        assert org.monotonicity == ("none",)

    def test_multivariate_members(self):
        tree = And((leaf("A", Affine(0.0, (1.0, 1.0))), leaf("B", Affine(0.0, (2.0, 3.0)))))
        org = derive_org_utility(tree)
        assert org.dimension == 2
        pa, pb = expit(2.0), expit(5.0)
        assert org.screening([1.0, 1.0]) == pytest.approx(pa * pb, rel=1e-12)
        assert org.monotonicity == ("increasing", "increasing")


class TestJson:
    def test_tree_round_trip(self, running_leaves):
        tree = KofN(1, (And(running_leaves), leaf("C", ExpCara(10.0, 5.0))))
        back = tree_from_json(tree_to_json(tree))
        for x in (-1.0, 0.0, 2.0):
            assert org_screening(back, x) == pytest.approx(org_screening(tree, x), rel=1e-14)

    def test_structure_with_domain(self, scenario):
        from components.utils import load_json_file

        tree, domain = structure_from_json(load_json_file(scenario("unanimity.json")))
        assert domain == (-10.0, 10.0)
        assert isinstance(tree, And)

    @pytest.mark.parametrize("domain", [[5.0, 1.0], [2.0, 2.0], [0.0, "inf"], [1.0]])
    def test_bad_domain_rejected(self, domain):
        data = {"domain": domain, "tree": {"kind": "leaf", "id": "A", "utility": {"kind": "var"}}}
        with pytest.raises(BadDomain):
            structure_from_json(data)

    def test_derive_rejects_reversed_domain(self):
        with pytest.raises(BadDomain):
            derive_org_utility(leaf("A", Var(0)), domain=(5.0, 1.0))

    def test_unknown_node(self):
        with pytest.raises(InvalidStructure):
            tree_from_json({"kind": "xor", "children": []})
