import math

import numpy as np
import pytest

from seguq import (
    BinaryMask,
    DegenerateError,
    UncertaintyMap,
    error_map,
    lesion_coverage,
    patch_metrics,
    sueo,
    tau_sweep,
    ueo,
)
from seguq.uq_metrics import _patch_slices

from oracles import brute_lesion_coverage, brute_patch_counts, brute_sueo, brute_ueo

LN2 = math.log(2.0)


def mask(data):
    return BinaryMask(np.asarray(data, dtype=np.uint8))


def umap(data):
    return UncertaintyMap(np.asarray(data, dtype=np.float64))


def random_triple(rng, dims=(6, 6, 6)):
    pred = mask(rng.random(dims) < 0.4)
    gt = mask(rng.random(dims) < 0.4)
    u = umap(rng.random(dims) * LN2)
    return pred, gt, u


class TestSueo:
    def test_binary_match_is_one(self):
        # u == e exactly; values of 1 exceed the entropy range so a plain
        # grid stands in (the metric is defined on raw values).
        from seguq import VoxelGrid

        rng = np.random.default_rng(0)
        e = (rng.random((4, 4, 4)) < 0.3).astype(float)
        e.flat[0] = 1.0
        assert sueo(VoxelGrid(e), mask(e)) == 1.0

    def test_zero_uncertainty_is_zero(self):
        e = np.zeros((3, 3, 3))
        e[1, 1, 1] = 1
        assert sueo(umap(np.zeros((3, 3, 3))), mask(e)) == 0.0

    def test_half_scaled_uncertainty(self):
        e = np.zeros((4, 4, 4))
        e[:2] = 1.0
        # u = 0.5 e: 2*0.5|e| / (|e| + 0.25|e|) = 0.8.
        assert sueo(umap(0.5 * e), mask(e)) == pytest.approx(0.8)

    def test_degenerate(self):
        with pytest.raises(DegenerateError):
            sueo(umap(np.zeros((2, 2, 2))), mask(np.zeros((2, 2, 2))))

    def test_matches_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            _, gt, u = random_triple(rng)
            e = (rng.random((6, 6, 6)) < 0.3)
            if not (e.any() or u.data.any()):
                continue
            assert sueo(u, mask(e)) == pytest.approx(brute_sueo(u.data, e), abs=1e-15)


class TestUeo:
    def test_tau_zero_compares_all_uncertain(self):
        rng = np.random.default_rng(2)
        e = mask(rng.random((4, 4, 4)) < 0.5)
        u = umap(rng.random((4, 4, 4)) * LN2)
        from seguq import dice

        all_on = mask(np.ones((4, 4, 4)))
        assert ueo(u, e, 0.0) == dice(all_on, e)

    def test_matches_composition_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            _, gt, u = random_triple(rng)
            e = (rng.random((6, 6, 6)) < 0.4)
            for tau in (0.0, 0.2, 0.4, LN2):
                assert ueo(u, mask(e), tau) == pytest.approx(
                    brute_ueo(u.data, e, tau), abs=1e-15)

    def test_piecewise_constant_with_breakpoints_in_u(self):
        rng = np.random.default_rng(4)
        vals = rng.choice([0.1, 0.3, 0.5], size=(4, 4, 4))
        u = umap(vals)
        e = mask(rng.random((4, 4, 4)) < 0.4)
        # Between consecutive distinct values of u the score cannot change.
        assert ueo(u, e, 0.11) == ueo(u, e, 0.29)
        assert ueo(u, e, 0.31) == ueo(u, e, 0.49)
        assert ueo(u, e, 0.1) != ueo(u, e, 0.11) or ueo(u, e, 0.3) != ueo(u, e, 0.31)


class TestPatchMetrics:
    def test_perfect_and_certain(self):
        rng = np.random.default_rng(5)
        gt = mask(rng.random((8, 8, 8)) < 0.3)
        stats = patch_metrics(gt, gt, umap(np.zeros((8, 8, 8))), tau=0.1)
        assert stats.n_ac == stats.total == 8
        assert stats.p_acc_given_cert == 1.0
        assert stats.pavpu == 1.0

    def test_counts_match_quadrant_oracle(self):
        rng = np.random.default_rng(6)
        for dims in ((8, 8, 8), (6, 7, 5)):
            pred, gt, u = (mask(rng.random(dims) < 0.4),
                           mask(rng.random(dims) < 0.4),
                           umap(rng.random(dims) * LN2))
            for tau in (0.1, 0.35, 0.6):
                stats = patch_metrics(pred, gt, u, tau)
                want = brute_patch_counts(pred.data, gt.data, u.data, tau, 4, 0.8)
                assert (stats.n_ac, stats.n_au, stats.n_ci, stats.n_ui) == \
                    (want["ac"], want["au"], want["ci"], want["ui"])

    def test_total_constant_across_tau(self):
        rng = np.random.default_rng(7)
        pred, gt, u = random_triple(rng, (8, 8, 8))
        totals = {patch_metrics(pred, gt, u, tau).total
                  for tau in np.linspace(0, LN2, 9)}
        assert len(totals) == 1

    def test_p_uncert_given_inacc_non_increasing(self):
        rng = np.random.default_rng(8)
        pred, gt, u = random_triple(rng, (8, 8, 8))
        vals = []
        for tau in np.linspace(0.0, LN2, 15):
            v = patch_metrics(pred, gt, u, tau).p_uncert_given_inacc
            if v is not None:
                vals.append(v)
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_sliding_window_count(self):
        rng = np.random.default_rng(9)
        pred, gt, u = random_triple(rng, (6, 6, 6))
        stats = patch_metrics(pred, gt, u, 0.3, mode="sliding")
        assert stats.total == 3 * 3 * 3

    def test_empty_conditional_is_none(self):
        gt = mask(np.zeros((4, 4, 4)))
        stats = patch_metrics(gt, gt, umap(np.zeros((4, 4, 4))), tau=0.1)
        assert stats.p_uncert_given_inacc is None  # no inaccurate patches


class TestLesionCoverage:
    def test_fully_uncertain_field(self):
        rng = np.random.default_rng(10)
        gt = mask(rng.random((6, 6, 6)) < 0.2)
        if gt.count == 0:
            gt = mask(np.eye(6)[:, :, None].repeat(6, axis=2) > 0)
        pred = mask(np.zeros((6, 6, 6)))
        u = umap(np.full((6, 6, 6), 0.5))
        cov = lesion_coverage(pred, gt, u, tau=0.4)
        assert cov.coverage == 1.0
        assert cov.undetected_fraction_strict == 0.0
        assert cov.undetected_fraction_rule == 0.0

    def test_three_voxel_component_two_uncertain(self):
        gt = np.zeros((7, 1, 1))
        gt[0:3] = 1
        u = np.zeros((7, 1, 1))
        u[0:2] = 0.5  # 2 of 3 voxels uncertain
        pred = np.zeros((7, 1, 1))
        cov = lesion_coverage(mask(pred), mask(gt), umap(u), tau=0.4)
        comp = cov.components[0]
        assert comp.size == 3 and comp.segmented == 0 and comp.uncertain == 2
        # Strict: any uncertain voxel detects. Rule: needs min(ceil(1.5), 5)=2.
        assert comp.detected_strict and comp.detected_rule
        assert cov.coverage == pytest.approx(2.0 / 3.0)

    def test_silent_failure_under_both_rules(self):
        gt = np.zeros((5, 1, 1))
        gt[0:2] = 1
        cov = lesion_coverage(mask(np.zeros((5, 1, 1))), mask(gt),
                              umap(np.zeros((5, 1, 1))), tau=0.1)
        assert cov.undetected_fraction_strict == 1.0
        assert cov.undetected_fraction_rule == 1.0
        assert cov.mean_undetected_size_strict == 2.0

    def test_no_components_gives_missing(self):
        cov = lesion_coverage(mask(np.zeros((3, 3, 3))), mask(np.zeros((3, 3, 3))),
                              umap(np.zeros((3, 3, 3))), tau=0.1)
        assert cov.coverage is None
        assert cov.undetected_fraction_strict is None

    def test_matches_per_component_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            pred, gt, u = random_triple(rng)
            if gt.count == 0:
                continue
            for tau in (0.1, 0.3, 0.6):
                cov = lesion_coverage(pred, gt, u, tau)
                want = brute_lesion_coverage(pred.data, gt.data, u.data, tau, 26)
                assert cov.undetected_fraction_strict == want["undetected_fraction_strict"]
                assert cov.undetected_fraction_rule == want["undetected_fraction_rule"]
                if want["coverage"] is None:
                    assert cov.coverage is None
                else:
                    assert cov.coverage == pytest.approx(want["coverage"], abs=1e-12)

    def test_monotone_in_tau(self):
        rng = np.random.default_rng(12)
        pred, gt, u = random_triple(rng)
        if gt.count == 0:
            pytest.skip("empty reference draw")
        taus = np.linspace(0.0, LN2, 20)
        coverages = []
        undetected = []
        for tau in taus:
            cov = lesion_coverage(pred, gt, u, tau)
            coverages.append(cov.coverage)
            undetected.append(cov.undetected_fraction_rule)
        pairs = [(a, b) for a, b in zip(coverages, coverages[1:])
                 if a is not None and b is not None]
        assert all(a >= b - 1e-12 for a, b in pairs)
        assert all(a <= b + 1e-12 for a, b in zip(undetected, undetected[1:]))


class TestTauSweep:
    def test_rows_have_stable_keys(self):
        rng = np.random.default_rng(13)
        pred, gt, u = random_triple(rng)
        rows = tau_sweep(pred, gt, u, np.linspace(0, LN2, 5))
        keys = {tuple(sorted(r)) for r in rows}
        assert len(keys) == 1
        assert len(rows) == 5

    def test_error_map_feeds_ueo(self):
        rng = np.random.default_rng(14)
        pred, gt, u = random_triple(rng)
        rows = tau_sweep(pred, gt, u, [0.2])
        e = error_map(pred, gt)
        assert rows[0]["ueo"] == ueo(u, e, 0.2)
