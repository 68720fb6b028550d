import numpy as np
import pytest

from seguq import (
    SynthSpec,
    SynthSpecError,
    binarize,
    extract_features,
    generate,
    generate_cohort,
    mean_probs,
    predictive_entropy,
    sample_logits,
)
from seguq.synth import GRADE_EDGES, grade_of_fraction


class TestGenerate:
    def test_noise_free_mean_recovers_ground_truth(self):
        spec = SynthSpec(seed=3, noise_rank=0, noise_scale=0.0, noise_diag=0.0)
        subject = generate(spec)
        hard = binarize(mean_probs(subject.logit), 0.5)
        np.testing.assert_array_equal(hard.data, subject.gt_lesions.data)

    def test_zero_lesions_give_zero_grades(self):
        spec = SynthSpec(seed=4, pv_grade=0, deep_grade=0)
        subject = generate(spec)
        assert subject.gt_lesions.count == 0
        assert subject.fazekas_proxy == (0, 0)

    def test_same_seed_is_bit_identical(self):
        a = generate(SynthSpec(seed=11))
        b = generate(SynthSpec(seed=11))
        np.testing.assert_array_equal(a.gt_lesions.data, b.gt_lesions.data)
        np.testing.assert_array_equal(a.logit.factor, b.logit.factor)
        assert a.fazekas_proxy == b.fazekas_proxy

    def test_different_seeds_differ(self):
        a = generate(SynthSpec(seed=1, pv_grade=2, deep_grade=2))
        b = generate(SynthSpec(seed=2, pv_grade=2, deep_grade=2))
        assert not np.array_equal(a.gt_lesions.data, b.gt_lesions.data)

    def test_containment_invariants(self):
        subject = generate(SynthSpec(seed=5, pv_grade=3, deep_grade=3))
        brain = subject.brain.data.astype(bool)
        vent = subject.ventricles.data.astype(bool)
        lesions = subject.gt_lesions.data.astype(bool)
        assert np.all(brain[vent])
        assert np.all(brain[lesions])
        assert not np.any(vent & lesions)

    def test_grades_match_fraction_rule(self):
        for seed in range(6):
            subject = generate(SynthSpec(seed=seed))
            deep, pv = subject.fazekas_proxy
            assert grade_of_fraction(subject.group_fractions["pv"]) == pv
            assert grade_of_fraction(subject.group_fractions["deep"]) == deep

    def test_grade_edges_are_ordered(self):
        assert list(GRADE_EDGES) == sorted(GRADE_EDGES)
        assert grade_of_fraction(0.0) == 0
        assert grade_of_fraction(0.03) == 1
        assert grade_of_fraction(0.1) == 2
        assert grade_of_fraction(0.5) == 3

    def test_bad_grade_rejected(self):
        with pytest.raises(SynthSpecError):
            SynthSpec(pv_grade=4)

    def test_lesions_only_in_ring2_leave_other_rings_empty(self):
        spec = SynthSpec(seed=6, pv_grade=0, deep_grade=2, deep_rings=(2,),
                         noise_rank=0, noise_scale=0.0, noise_diag=0.0)
        subject = generate(spec)
        seg = mean_probs(subject.logit)
        unc = predictive_entropy(seg)
        fv = extract_features(seg, unc, subject.rings, t=0.2)
        assert fv.values["seg_r2_volume"] > 0
        for ring in ("r0", "r1", "r3"):
            assert fv.values[f"seg_{ring}_volume"] == 0.0
            assert fv.values[f"seg_{ring}_comp_per_vol"] == 0.0

    def test_oversized_volume_request_fails(self):
        with pytest.raises(SynthSpecError):
            # A tiny grid cannot host a grade-3 burden in one thin ring.
            generate(SynthSpec(dims=(10, 10, 6), spacing=(1.0, 1.0, 1.0),
                               seed=0, deep_grade=3, deep_rings=(3,), pv_grade=0))


class TestSampling:
    def test_noise_creates_sample_diversity(self):
        subject = generate(SynthSpec(seed=7, pv_grade=2, deep_grade=1))
        samples = sample_logits(subject.logit, 4, seed=0)
        stack = samples.stack()
        assert np.any(stack.std(axis=0) > 0.01)

    def test_entropy_nonzero_under_noise(self):
        subject = generate(SynthSpec(seed=8, pv_grade=1, deep_grade=1))
        samples = sample_logits(subject.logit, 6, seed=1)
        u = predictive_entropy(samples)
        assert u.data.max() > 0.05


class TestCohort:
    def test_cohort_deterministic_and_varied(self):
        a = generate_cohort(6, seed=42)
        b = generate_cohort(6, seed=42)
        for s1, s2 in zip(a, b):
            np.testing.assert_array_equal(s1.gt_lesions.data, s2.gt_lesions.data)
            assert s1.fazekas_proxy == s2.fazekas_proxy
        grades = {s.fazekas_proxy for s in a}
        assert len(grades) > 1
