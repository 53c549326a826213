"""Joint probability fusion properties and frozen values."""

import numpy as np
import pytest

from repeatdet.classify import ClassProbabilityVector
from repeatdet.fusion import DegenerateJointError, joint_probability


def vec(*values):
    return ClassProbabilityVector(np.array(values, dtype=np.float64))


def random_vectors(rng, n, c):
    raw = rng.uniform(0, 1, size=(n, c))
    return [ClassProbabilityVector(r / r.sum()) for r in raw]


class TestJointProbability:
    def test_single_vector_is_identity(self):
        p = vec(0.3, 0.7)
        out = joint_probability([p])
        np.testing.assert_allclose(out.probs, p.probs)

    def test_symmetric_pair_unchanged(self):
        out = joint_probability([vec(0.5, 0.5), vec(0.5, 0.5)])
        np.testing.assert_allclose(out.probs, [0.5, 0.5])

    def test_frozen_sharpening_value(self):
        # (0.64, 0.04) / 0.68 by direct arithmetic
        out = joint_probability([vec(0.8, 0.2), vec(0.8, 0.2)])
        np.testing.assert_allclose(out.probs, [0.9412, 0.0588], atol=1e-4)

    def test_disjoint_support_is_degenerate(self):
        with pytest.raises(DegenerateJointError):
            joint_probability([vec(1.0, 0.0), vec(0.0, 1.0)])

    def test_log_space_path_matches_direct(self):
        # 5 vectors forces the log-space branch even at C=3
        rng = np.random.default_rng(0)
        ps = random_vectors(rng, 5, 3)
        out = joint_probability(ps)
        direct = np.prod([p.probs for p in ps], axis=0)
        np.testing.assert_allclose(out.probs, direct / direct.sum(), atol=1e-12)

    def test_underflow_survives_in_log_space(self):
        # 1000-dim near-uniform vectors: the direct product would underflow
        rng = np.random.default_rng(1)
        ps = random_vectors(rng, 300, 1000)
        out = joint_probability(ps)
        assert abs(out.probs.sum() - 1.0) <= 1e-9

    def test_exact_zeros_preserved(self):
        out = joint_probability([vec(0.0, 0.4, 0.6), vec(0.2, 0.3, 0.5)])
        assert out.probs[0] == 0.0
        assert abs(out.probs.sum() - 1.0) <= 1e-12

    def test_one_hot_idempotent(self):
        one_hot = vec(0.0, 1.0, 0.0)
        out = joint_probability([one_hot, one_hot, one_hot])
        np.testing.assert_allclose(out.probs, [0, 1, 0])

    def test_order_invariance(self):
        rng = np.random.default_rng(2)
        ps = random_vectors(rng, 6, 50)
        ref = joint_probability(ps).probs
        for seed in range(5):
            perm = np.random.default_rng(seed).permutation(len(ps))
            out = joint_probability([ps[i] for i in perm]).probs
            np.testing.assert_allclose(out, ref, atol=1e-12)

    def test_sharpening_and_argmax_preservation(self):
        rng = np.random.default_rng(3)
        for p in random_vectors(rng, 50, 20):
            out = joint_probability([p, p])
            assert out.max_prob >= p.max_prob - 1e-15
            assert out.argmax == p.argmax

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            joint_probability([vec(0.5, 0.5), vec(0.2, 0.3, 0.5)])

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            joint_probability([])
