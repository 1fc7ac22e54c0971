import itertools

import numpy as np
import pytest

from fcpd import (
    CollinearityProfile,
    InvalidArgumentError,
    KruskalTensor,
    SingularConfigurationError,
    UnfoldingRule,
    advise_unfolding,
    crib4_full,
    crib4_orthomode_rankR,
    crib4_unfold_23,
    crib4_unfold_34,
    crib5_full,
    crib5_unfold_23_45,
    crib5_unfold_345,
    crib6_family,
    crib_numeric,
    crib_ortho_two_modes,
    crib_rank2_general,
    crib_rank2_unfolded,
    estimate_collinearity,
    noise_variance,
    to_db,
)
from fcpd.crib import DB_CAP
from fcpd.synth import collinear_factor

GRID = [0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9]


def equicorrelated_kruskal(c, sizes, rank=2, seed=0):
    rng = np.random.default_rng(seed)
    return KruskalTensor(np.ones(rank), [collinear_factor(i, rank, x, rng) for i, x in zip(sizes, c)])


def fim_bound(c, theta, I1, rank=2):
    """Bound on the first column of mode 1 from the Fisher information matrix."""
    k = equicorrelated_kruskal(c, [I1] + [4] * (len(c) - 1), rank)
    return crib_numeric(k, theta)[0, 0]


class TestBasics:
    def test_to_db(self):
        assert to_db(0.1) == pytest.approx(10.0)
        assert to_db(0) == DB_CAP
        assert to_db(1e-40) == DB_CAP
        assert str(to_db(1.0)) == "0.0"

    def test_profile_validation(self):
        with pytest.raises(InvalidArgumentError):
            CollinearityProfile((0.1, 1.5))
        with pytest.raises(InvalidArgumentError):
            CollinearityProfile((0.1, 0.2), theta=0)
        with pytest.raises(InvalidArgumentError):
            CollinearityProfile((0.1, 0.2), I1=1)
        p = CollinearityProfile((0, 0.5, 0.5, 0.5), theta=1, I1=5)
        assert crib4_full(p).value == crib4_full((0, 0.5, 0.5, 0.5), 1, 5).value

    def test_report_loss(self):
        r = crib4_unfold_34((0, 0.5, 0.6, 0.7), 1.0, 5)
        assert r.loss_db == pytest.approx(-10 * np.log10(r.baseline / r.value))
        d = r.as_dict()
        assert d["rule"] == "1,2,(3,4)" and d["bound_db"] == pytest.approx(to_db(r.value))


class TestRank2General:
    def test_all_zero(self):
        assert crib_rank2_general((0, 0, 0, 0), 1.0, 5).value == pytest.approx(4.0)

    @pytest.mark.parametrize("c1", [1.0, -1.0])
    def test_c1_unit(self, c1):
        c = (c1, 0.5, 0.6, 0.7)
        h1 = 0.5 * 0.6 * 0.7
        assert crib_rank2_general(c, 1.0, 5).value == pytest.approx(4 / (1 - h1 ** 2), rel=1e-12)

    def test_matches_crib4_full(self):
        assert crib_rank2_general((0, 0.5, 0.5, 0.5), 1.0, 5).value == pytest.approx(
            crib4_full((0, 0.5, 0.5, 0.5), 1.0, 5).value, rel=1e-12)

    @pytest.mark.parametrize("c", [(0.2, 0.3, 0.6, 0.9, 0.5), (0.5, 0.5, 0.5), (-0.3, 0.7, 0.4, 0.8),
                                   (0.9, 0.9, 0.9, 0.9, 0.9, 0.9)])
    def test_matches_fisher_information(self, c):
        assert crib_rank2_general(c, 0.5, 7).value == pytest.approx(fim_bound(c, 0.5, 7), rel=1e-9)

    def test_singular(self):
        with pytest.raises(SingularConfigurationError):
            crib_rank2_general((0.3, 1.0, 1.0, 1.0), 1.0, 3)

    def test_positive_and_linear_in_theta(self):
        for c in itertools.product(GRID[1:], repeat=3):
            a = crib_rank2_general((0.4,) + c, 1.0, 4).value
            b = crib_rank2_general((0.4,) + c, 2.5, 4).value
            assert a > 0
            assert b == pytest.approx(2.5 * a, rel=1e-12)


class TestOrder4:
    def test_consistency_grid(self):
        count = 0
        for c2, c3, c4 in itertools.product(GRID, repeat=3):
            c = (0, c2, c3, c4)
            g = crib_rank2_general(c, 1.0, 6).value
            assert crib4_full(c, 1.0, 6).value == pytest.approx(g, rel=1e-10)
            u34 = crib_rank2_unfolded(c, UnfoldingRule.parse("1,2,(3,4)"), 1.0, 6).value
            u23 = crib_rank2_unfolded(c, UnfoldingRule.parse("1,(2,3),4"), 1.0, 6).value
            assert crib4_unfold_34(c, 1.0, 6).value == pytest.approx(u34, rel=1e-10)
            assert crib4_unfold_23(c, 1.0, 6).value == pytest.approx(u23, rel=1e-10)
            count += 1
        assert count >= 100

    def test_orthogonal_mode_is_free(self):
        for c3, c4 in itertools.product(GRID, repeat=2):
            c = (0, 0, c3, c4)
            expected = 6 - 2 + 1 / (1 - c3 ** 2 * c4 ** 2)
            assert crib4_full(c, 1.0, 6).value == pytest.approx(expected, rel=1e-12)
            assert crib4_unfold_34(c, 1.0, 6).value == pytest.approx(expected, rel=1e-12)

    def test_dominance(self):
        for c2, c3, c4 in itertools.product(GRID, repeat=3):
            c = (0, c2, c3, c4)
            full = crib4_full(c, 1.0, 6).value
            u34 = crib4_unfold_34(c, 1.0, 6).value
            assert full <= u34 * (1 + 1e-12)
            if c2 ** 2 <= c4 ** 2:
                assert u34 <= crib4_unfold_23(c, 1.0, 6).value * (1 + 1e-12)

    def test_reference_point(self):
        c = (0, 0.3, 0.6, 0.9)
        assert crib4_full(c, 1.0, 10).value == pytest.approx(fim_bound(c, 1.0, 10), rel=1e-9)
        assert crib4_full(c, 1.0, 10).value == pytest.approx(9.74095871847836, rel=1e-12)

    def test_regime_and_order_checks(self):
        with pytest.raises(InvalidArgumentError):
            crib4_full((0, 0.5, 0.5), 1.0, 3)
        with pytest.raises(InvalidArgumentError):
            crib4_full((0.2, 0.5, 0.5, 0.5), 1.0, 3)
        with pytest.raises(SingularConfigurationError):
            crib4_unfold_34((0, 1.0, 1.0, 1.0), 1.0, 3)


class TestOrthomode:
    def test_symmetry_and_dominance(self):
        for c in GRID:
            a, b, full = crib4_orthomode_rankR(c, c, 1.0, 10, 4)
            assert a.value == pytest.approx(b.value)
        for c2 in np.linspace(-0.95, 0.95, 39):
            a, _, full = crib4_orthomode_rankR(c2, 0.7, 1.0, 10, 3)
            assert full.value <= a.value * (1 + 1e-12)

    def test_reference(self):
        a, b, full = crib4_orthomode_rankR(0.2, 0.8, 1.0, 10, 10)
        assert a.value < b.value
        assert a.value == pytest.approx(10 - 10 + 9 / (1 - 0.04))

    def test_matches_fisher_information(self):
        R = 4
        rng = np.random.default_rng(1)
        fs = [collinear_factor(i, R, x, rng) for i, x in zip((10, 5, 5, 5), (0, 0.6, 0, 0.8))]
        num = crib_numeric(KruskalTensor(np.ones(R), fs), 1.0)[0, 0]
        assert crib4_orthomode_rankR(0.6, 0.8, 1.0, 10, R)[2].value == pytest.approx(num, rel=1e-9)

    def test_errors(self):
        with pytest.raises(SingularConfigurationError):
            crib4_orthomode_rankR(1.0, 0.5)
        with pytest.raises(InvalidArgumentError):
            crib4_orthomode_rankR(0.5, 0.5, R=1)


class TestOrder5:
    def test_consistency_grid(self):
        for c in itertools.product([0.0, 0.3, 0.6, 0.9], repeat=4):
            c = (0,) + c
            g = crib_rank2_general(c, 1.0, 8).value
            assert crib5_full(c, 1.0, 8).value == pytest.approx(g, rel=1e-10)
            u = crib_rank2_unfolded(c, UnfoldingRule.parse("1,2,(3,4,5)"), 1.0, 8).value
            assert crib5_unfold_345(c, 1.0, 8).value == pytest.approx(u, rel=1e-10)
            u = crib_rank2_unfolded(c, UnfoldingRule.parse("1,(2,3),(4,5)"), 1.0, 8).value
            assert crib5_unfold_23_45(c, 1.0, 8).value == pytest.approx(u, rel=1e-10)

    def test_orthogonal_second_mode(self):
        for c in itertools.product(GRID[1:], repeat=3):
            c = (0, 0) + c
            assert crib5_full(c, 1.0, 8).value == pytest.approx(crib5_unfold_345(c, 1.0, 8).value, rel=1e-12)

    def test_rule_ordering(self):
        for c in itertools.product(GRID[1:], repeat=4):
            c = (0,) + c
            if c[1] ** 2 <= (c[3] * c[4]) ** 2:
                assert crib5_unfold_345(c, 1.0, 8).value <= crib5_unfold_23_45(c, 1.0, 8).value * (1 + 1e-12)

    def test_reference(self):
        c = (0, 0.5, 0.5, 0.5, 0.5)
        assert crib5_full(c, 1.0, 10).value == pytest.approx(fim_bound(c, 1.0, 10), rel=1e-9)


class TestOrder6:
    def test_chain(self):
        for c in np.arange(0.05, 0.951, 0.05):
            full, l1, l2, l3, l4, l5 = (r.value for r in crib6_family(c, 1.0, 20))
            assert full < l1 < l5 < l2 < l4 < l3

    def test_zero(self):
        assert all(r.value == pytest.approx(2.0) for r in crib6_family(0.0, 1.0, 3))

    def test_matches_general_forms(self):
        for c in (0.2, 0.5, 0.8):
            fam = crib6_family(c, 1.0, 5)
            assert fam[0].value == pytest.approx(crib_rank2_general((c,) * 6, 1.0, 5).value, rel=1e-10)
            for r in fam[1:]:
                u = crib_rank2_unfolded((c,) * 6, UnfoldingRule.parse(r.rule), 1.0, 5).value
                assert r.value == pytest.approx(u, rel=1e-10)

    def test_losses(self):
        fam = crib6_family(0.9, 1.0, 2)
        assert fam[1].loss_db < 1
        assert fam[3].loss_db - fam[1].loss_db > 4
        # c -> 1 limits: below 1, about 3, 7 and 5 dB
        near = crib6_family(0.9999, 1.0, 2)
        assert near[1].loss_db < 1
        assert near[2].loss_db == pytest.approx(3, abs=0.1)
        assert near[3].loss_db == pytest.approx(7, abs=0.1)
        assert near[4].loss_db == pytest.approx(5.2, abs=0.1)

    def test_singular(self):
        with pytest.raises(SingularConfigurationError):
            crib6_family(1.0)


class TestOrthoTwoModes:
    def test_values(self):
        assert crib_ortho_two_modes((0, 0, 0), 1.0, 10).value == pytest.approx(9.0)
        assert crib_ortho_two_modes((0.5, 0.5), 1.0, 10, 3).value == pytest.approx(9.6667, abs=1e-4)

    def test_rank2_and_unfolding_lossless(self):
        c = (0, 0, 0.3, 0.4, 0.5)
        g = crib_rank2_general(c, 1.0, 7).value
        assert crib_ortho_two_modes((0.3 * 0.4 * 0.5,), 1.0, 7).value == pytest.approx(g, rel=1e-10)
        u = crib_rank2_unfolded(c, UnfoldingRule.parse("1,2,(3,4,5)"), 1.0, 7)
        assert u.value == pytest.approx(g, rel=1e-10)
        assert abs(u.loss_db) < 1e-9

    def test_errors(self):
        with pytest.raises(SingularConfigurationError):
            crib_ortho_two_modes((0.5, 1.0))
        with pytest.raises(InvalidArgumentError):
            crib_ortho_two_modes((0.5,), R=3)


class TestUnfoldedRank2:
    def test_needs_singleton_first_mode(self):
        with pytest.raises(InvalidArgumentError):
            crib_rank2_unfolded((0.1, 0.2, 0.3), UnfoldingRule.parse("(1,2),3"))

    def test_first_mode_anywhere(self):
        c = (0.1, 0.5, 0.6, 0.7)
        a = crib_rank2_unfolded(c, UnfoldingRule.parse("(2,3),1,4")).value
        b = crib_rank2_unfolded(c, UnfoldingRule.parse("1,(2,3),4")).value
        assert a == pytest.approx(b)


class TestNumeric:
    def test_shape_and_positivity(self):
        k = equicorrelated_kruskal((0.1, 0.5, 0.5, 0.5), (5, 5, 5, 5), rank=3)
        b = crib_numeric(k, 0.01)
        assert b.shape == (4, 3)
        assert np.all(b > 0)
        np.testing.assert_allclose(crib_numeric(k, 0.02), 2 * b, rtol=1e-10)

    def test_noise_variance(self):
        k = equicorrelated_kruskal((0, 0, 0), (4, 5, 6))
        s2 = noise_variance(k, 10)
        assert s2 * 120 * 10 == pytest.approx(k.norm() ** 2)


class TestAdvisor:
    @pytest.mark.parametrize(
        "c, M, expected",
        [
            ((0.1, 0.1, 0.9, 0.9), 3, "1,2,(3,4)"),
            ((0.1, 0.7, 0.7, 0.7, 0.8), 3, "1,(2,3),(4,5)"),
            ((0.5,) * 6, 4, "1,2,(3,4),(5,6)"),
            ((0.1, 0.1, 0.9, 0.9, 0.9, 0.9), 3, "1,2,(3,4,5,6)"),
        ],
    )
    def test_examples(self, c, M, expected):
        assert str(advise_unfolding(c, M)) == expected

    def test_orthogonal_modes_stay_apart(self):
        rule = advise_unfolding((0.05, 0.9, 0.05, 0.9, 0.9), 3)
        for g in rule.groups:
            assert not (0 in g and 2 in g)

    def test_permutation_invariance(self):
        c = np.array([0.1, 0.72, 0.35, 0.81, 0.55, 0.93])
        base = advise_unfolding(c, 3)
        for perm in itertools.islice(itertools.permutations(range(6)), 0, 720, 37):
            perm = np.array(perm)
            rule = advise_unfolding(c[perm], 3)
            relabeled = sorted(tuple(sorted(int(perm[k]) for k in g)) for g in rule.groups)
            assert relabeled == sorted(tuple(sorted(g)) for g in base.groups)

    def test_target_order_checks(self):
        with pytest.raises(InvalidArgumentError):
            advise_unfolding((0.1, 0.2, 0.3), 3)

    def test_tie_tolerance(self):
        noisy = (0.1006, 0.7000, 0.7021, 0.6987, 0.7994)
        assert str(advise_unfolding(noisy, 3)) != "1,(2,3),(4,5)"
        assert str(advise_unfolding(noisy, 3, tie_tol=0.02)) == "1,(2,3),(4,5)"


class TestEstimateCollinearity:
    def test_orthogonal_and_identical(self):
        k = KruskalTensor([1, 1, 1], [np.eye(3), np.ones((4, 3)) / 2, np.eye(5)[:, :3]])
        p = estimate_collinearity(k)
        assert p.c == pytest.approx((0.0, 1.0, 0.0))
        assert p.R == 3

    def test_recovers_construction(self):
        k = equicorrelated_kruskal((0.1, 0.7, -0.2), (10, 10, 10), rank=5)
        assert estimate_collinearity(k).c == pytest.approx((0.1, 0.7, 0.2), abs=1e-12)

    def test_rank_one(self):
        with pytest.raises(InvalidArgumentError):
            estimate_collinearity(KruskalTensor([1], [np.ones((2, 1))] * 3))
