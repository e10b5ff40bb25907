"""Tensor op semantics, optimizer arithmetic, weights format, gradcheck."""

import math

import numpy as np
import pytest

from fusionnet.nn import OptimizerConfig, Tensor, backward, sgd_step, step_lr
from fusionnet.nn import gradcheck as gc
from fusionnet.nn import tensor as T
from fusionnet.nn import weights as W


def conv2d_reference(x, w, b, stride, padding):
    """Direct quadruple-loop cross-correlation, the oracle for conv2d."""
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - k) // stride + 1
    wo = (wd + 2 * padding - k) // stride + 1
    out = np.empty((n, f, ho, wo), dtype=x.dtype)
    for ni in range(n):
        for fi in range(f):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[ni, :, i * stride:i * stride + k, j * stride:j * stride + k]
                    out[ni, fi, i, j] = (patch * w[fi]).sum() + b[fi]
    return out


class TestConv2d:
    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 0), (2, 1), (2, 2)])
    def test_matches_loop_oracle(self, stride, padding):
        rng = np.random.default_rng(stride * 10 + padding)
        x = rng.normal(size=(2, 3, 7, 9))
        w = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=4)
        got = T.conv2d(Tensor(x), Tensor(w), Tensor(b), stride, padding)
        want = conv2d_reference(x, w, b, stride, padding)
        np.testing.assert_allclose(got.data, want, atol=1e-12)

    def test_one_by_one_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(1, 1, 5, 5))
        w = np.ones((1, 1, 1, 1))
        b = np.array([0.25])
        out = T.conv2d(Tensor(x), Tensor(w), Tensor(b))
        np.testing.assert_allclose(out.data, x + 0.25, atol=1e-15)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.normal(size=(1, 2, 4, 4)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 2, 2, 2)), requires_grad=True)
        b = Tensor(rng.normal(size=3), requires_grad=True)
        coeffs = rng.normal(size=(1, 3, 3, 3))

        def loss():
            return float((T.conv2d(x, w, b).data * coeffs).sum())

        out = T.conv2d(x, w, b)
        backward(T._node(np.asarray((out.data * coeffs).sum()), (out,),
                         lambda g: T._accumulate(out, g * coeffs)))
        for t in (x, w, b):
            flat = t.data.reshape(-1)
            gflat = t.grad.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + 1e-6
                fp = loss()
                flat[i] = orig - 1e-6
                fm = loss()
                flat[i] = orig
                assert abs(gflat[i] - (fp - fm) / 2e-6) < 1e-7

    def test_shape_validation(self):
        x, w, b = Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((3, 2, 2, 2))), Tensor(np.zeros(3))
        with pytest.raises(ValueError):
            T.conv2d(x, Tensor(np.zeros((3, 9, 2, 2))), b)  # channel mismatch
        with pytest.raises(ValueError):
            T.conv2d(x, Tensor(np.zeros((3, 2, 2, 3))), b)  # non-square
        with pytest.raises(ValueError):
            T.conv2d(x, w, Tensor(np.zeros(4)))             # bias size
        with pytest.raises(ValueError):
            T.conv2d(x, w, b, stride=3)                     # non-integral output

    def test_dtype_preserved(self):
        x = Tensor(np.zeros((1, 1, 3, 3), dtype=np.float32))
        w = Tensor(np.zeros((1, 1, 2, 2), dtype=np.float32))
        b = Tensor(np.zeros(1, dtype=np.float32))
        assert T.conv2d(x, w, b).dtype == np.float32


class TestRelu:
    def test_values_and_grad(self):
        x = Tensor(np.array([[-2.0, 0.0, 3.0]]), requires_grad=True)
        out = T.relu(x)
        np.testing.assert_array_equal(out.data, [[0.0, 0.0, 3.0]])
        backward(T._node(np.asarray(out.data.sum()), (out,),
                         lambda g: T._accumulate(out, np.ones_like(out.data) * g)))
        # subgradient at exactly zero is zero
        np.testing.assert_array_equal(x.grad, [[0.0, 0.0, 1.0]])


class TestMaxpool2d:
    def test_hand_example(self):
        x = np.arange(16, dtype=float).reshape(1, 1, 4, 4)
        out = T.maxpool2d(Tensor(x), size=2)
        np.testing.assert_array_equal(out.data.reshape(2, 2), [[5, 7], [13, 15]])

    def test_tie_takes_first_window_slot(self):
        x = Tensor(np.full((1, 1, 2, 2), 3.0), requires_grad=True)
        out = T.maxpool2d(x, size=2)
        backward(T._node(np.asarray(out.data.sum()), (out,),
                         lambda g: T._accumulate(out, np.ones_like(out.data) * g)))
        np.testing.assert_array_equal(x.grad.reshape(4), [1.0, 0.0, 0.0, 0.0])

    def test_grad_routes_to_argmax(self):
        x = Tensor(np.arange(16, dtype=float).reshape(1, 1, 4, 4), requires_grad=True)
        out = T.maxpool2d(x, size=2)
        backward(T._node(np.asarray(out.data.sum()), (out,),
                         lambda g: T._accumulate(out, np.ones_like(out.data) * g)))
        expected = np.zeros((4, 4))
        expected[1, 1] = expected[1, 3] = expected[3, 1] = expected[3, 3] = 1.0
        np.testing.assert_array_equal(x.grad.reshape(4, 4), expected)

    def test_indivisible_rejected(self):
        with pytest.raises(ValueError):
            T.maxpool2d(Tensor(np.zeros((1, 1, 5, 4))), size=2)


class TestViewMaxpool:
    def test_columnwise_max(self):
        x = np.array([[1.0, 9.0, 2.0], [5.0, 3.0, 2.0]])
        out = T.view_maxpool(Tensor(x))
        np.testing.assert_array_equal(out.data, [5.0, 9.0, 2.0])

    def test_tie_prefers_lowest_view(self):
        x = Tensor(np.array([[4.0, 1.0], [4.0, 2.0]]), requires_grad=True)
        out = T.view_maxpool(x)
        backward(T._node(np.asarray(out.data.sum()), (out,),
                         lambda g: T._accumulate(out, np.ones_like(out.data) * g)))
        np.testing.assert_array_equal(x.grad, [[1.0, 0.0], [0.0, 1.0]])

    def test_rank_validation(self):
        with pytest.raises(ValueError):
            T.view_maxpool(Tensor(np.zeros((2, 3, 4))))


class TestDropout:
    def test_mask_and_scale(self):
        x = np.ones((2, 4))
        mask = np.array([[True, False, True, True], [False, True, True, False]])
        out = T.dropout(Tensor(x), mask, rate=0.5)
        np.testing.assert_allclose(out.data, mask * 2.0)

    def test_zero_rate_identity(self):
        x = np.arange(6, dtype=float).reshape(2, 3)
        out = T.dropout(Tensor(x), np.ones((2, 3), dtype=bool), rate=0.0)
        np.testing.assert_array_equal(out.data, x)

    def test_expectation_preserved(self):
        """Inverted scaling keeps E[dropout(x)] == x; with 4000 masks the
        element-averaged deviation settles near zero."""
        rng = np.random.default_rng(0)
        x = np.ones((8, 8))
        rate = 0.5
        acc = np.zeros_like(x)
        trials = 4000
        for _ in range(trials):
            mask = T.make_dropout_mask(rng, x.shape, rate)
            acc += T.dropout(Tensor(x), mask, rate).data
        assert abs(acc.mean() / trials - 1.0) < 0.02

    def test_validation(self):
        x = Tensor(np.ones((2, 2)))
        with pytest.raises(ValueError):
            T.dropout(x, np.ones((2, 2), dtype=bool), rate=1.0)
        with pytest.raises(ValueError):
            T.dropout(x, np.ones((2, 3), dtype=bool), rate=0.5)


class TestFullyConnected:
    def test_hand_affine(self):
        x = Tensor(np.array([[1.0, 2.0]]))
        w = Tensor(np.array([[3.0, 4.0], [5.0, 6.0], [7.0, 8.0]]))
        b = Tensor(np.array([0.1, 0.2, 0.3]))
        out = T.fully_connected(x, w, b)
        np.testing.assert_allclose(out.data, [[11.1, 17.2, 23.3]])

    def test_flattens_feature_maps(self):
        x = Tensor(np.arange(8, dtype=float).reshape(1, 2, 2, 2))
        w = Tensor(np.ones((1, 8)))
        b = Tensor(np.zeros(1))
        out = T.fully_connected(x, w, b)
        assert out.data.reshape(()) == 28.0

    def test_single_row_matches_batch_row_bitwise(self):
        """A sample's activations must not depend on its batch mates, down
        to the last bit, so cached per-model scores are reproducible."""
        rng = np.random.default_rng(5)
        a = rng.normal(size=(1, 64)).astype(np.float32)
        other = rng.normal(size=(3, 64)).astype(np.float32)
        w = Tensor(rng.normal(size=(16, 64)).astype(np.float32))
        b = Tensor(rng.normal(size=16).astype(np.float32))
        alone = T.fully_connected(Tensor(a), w, b).data
        stacked = T.fully_connected(Tensor(np.vstack([a, other])), w, b).data
        assert np.array_equal(alone[0], stacked[0])

    def test_input_width_validated(self):
        with pytest.raises(ValueError):
            T.fully_connected(Tensor(np.zeros((1, 5))), Tensor(np.zeros((2, 4))),
                              Tensor(np.zeros(2)))


class TestConcat:
    def test_values_and_grad_split(self):
        a = Tensor(np.ones((2, 2)), requires_grad=True)
        b = Tensor(np.full((2, 3), 2.0), requires_grad=True)
        out = T.concat([a, b], axis=1)
        assert out.shape == (2, 5)
        coeffs = np.arange(10, dtype=float).reshape(2, 5)
        backward(T._node(np.asarray((out.data * coeffs).sum()), (out,),
                         lambda g: T._accumulate(out, g * coeffs)))
        np.testing.assert_array_equal(a.grad, coeffs[:, :2])
        np.testing.assert_array_equal(b.grad, coeffs[:, 2:])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            T.concat([Tensor(np.zeros((2, 2))), Tensor(np.zeros((3, 2)))], axis=1)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            T.concat([])


class TestSoftmaxLoss:
    def test_uniform_scores_give_log_k(self):
        for k in (2, 10, 40):
            scores = Tensor(np.zeros((4, k)))
            loss = T.softmax_loss(scores, np.zeros(4, dtype=int))
            assert abs(float(loss.data) - math.log(k)) < 1e-12

    def test_hand_example(self):
        # two classes, scores (ln 3, 0): p(correct) = 3/4 for label 0
        scores = Tensor(np.array([[math.log(3.0), 0.0]]))
        loss = T.softmax_loss(scores, np.array([0]))
        assert abs(float(loss.data) - (-math.log(0.75))) < 1e-12

    def test_grad_rows_sum_to_zero(self):
        rng = np.random.default_rng(2)
        scores = Tensor(rng.normal(size=(5, 7)), requires_grad=True)
        loss = T.softmax_loss(scores, rng.integers(0, 7, size=5))
        backward(loss)
        np.testing.assert_allclose(scores.grad.sum(axis=1), 0.0, atol=1e-15)

    def test_extreme_scores_stable(self):
        scores = Tensor(np.array([[1e4, -1e4], [-1e4, 1e4]]))
        loss = T.softmax_loss(scores, np.array([0, 1]))
        assert np.isfinite(float(loss.data))
        assert float(loss.data) < 1e-12

    def test_label_validation(self):
        scores = Tensor(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            T.softmax_loss(scores, np.array([0, 3]))
        with pytest.raises(ValueError):
            T.softmax_loss(scores, np.array([0]))


class TestSoftmaxProbs:
    def test_rows_normalized(self):
        rng = np.random.default_rng(3)
        p = T.softmax_probs(rng.normal(size=(6, 9)) * 50)
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)
        assert (p >= 0).all()


class TestBackward:
    def test_leaf_without_tape_rejected(self):
        with pytest.raises(ValueError):
            backward(Tensor(np.zeros(3)))

    def test_grad_accumulates_over_reuse(self):
        x = Tensor(np.array([[2.0, 3.0]]), requires_grad=True)
        a = T.relu(x)
        out = T.concat([a, a], axis=1)
        backward(T._node(np.asarray(out.data.sum()), (out,),
                         lambda g: T._accumulate(out, np.ones_like(out.data) * g)))
        np.testing.assert_array_equal(x.grad, [[2.0, 2.0]])

    def test_no_tape_for_frozen_inputs(self):
        # ops on tensors that need no grad record nothing
        out = T.relu(Tensor(np.ones((2, 2))))
        assert out._backward is None and out._parents == ()


class TestSgd:
    def test_momentum_recurrence(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        p.grad = np.array([0.5])
        cfg = OptimizerConfig(learning_rate=0.1, momentum=0.9)
        state = {}
        sgd_step({"w": p}, state, cfg)
        np.testing.assert_allclose(p.data, [0.95])
        np.testing.assert_allclose(state["w"], [-0.05])
        p.grad = np.array([0.5])
        sgd_step({"w": p}, state, cfg)
        # v2 = 0.9*(-0.05) - 0.1*0.5 = -0.095
        np.testing.assert_allclose(state["w"], [-0.095])
        np.testing.assert_allclose(p.data, [0.855])

    def test_weight_decay_adds_to_gradient(self):
        p = Tensor(np.array([2.0]), requires_grad=True)
        p.grad = np.array([0.0])
        cfg = OptimizerConfig(learning_rate=0.1, momentum=0.0, weight_decay=0.01)
        sgd_step({"w": p}, {}, cfg)
        np.testing.assert_allclose(p.data, [2.0 - 0.1 * 0.01 * 2.0])

    def test_frozen_and_gradless_params_untouched(self):
        frozen = Tensor(np.array([1.0]), requires_grad=False)
        frozen.grad = np.array([9.0])
        fresh = Tensor(np.array([1.0]), requires_grad=True)  # grad is None
        cfg = OptimizerConfig(learning_rate=0.5)
        state = {}
        sgd_step({"a": frozen, "b": fresh}, state, cfg)
        assert frozen.data[0] == 1.0 and fresh.data[0] == 1.0
        assert state == {}

    def test_learning_rate_override(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        p.grad = np.array([1.0])
        sgd_step({"w": p}, {}, OptimizerConfig(learning_rate=0.1, momentum=0.0),
                 learning_rate=0.01)
        np.testing.assert_allclose(p.data, [0.99])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            OptimizerConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            OptimizerConfig(learning_rate=0.1, momentum=1.0)
        with pytest.raises(ValueError):
            OptimizerConfig(learning_rate=0.1, weight_decay=-1.0)


class TestStepLr:
    def test_decay_boundaries(self):
        assert step_lr(0.1, 0, 20, 0.1) == 0.1
        assert step_lr(0.1, 19, 20, 0.1) == 0.1
        assert abs(step_lr(0.1, 20, 20, 0.1) - 0.01) < 1e-15
        assert abs(step_lr(0.1, 40, 20, 0.1) - 0.001) < 1e-16

    def test_disabled_schedule(self):
        assert step_lr(0.1, 100, 0, 0.1) == 0.1


class TestWeightsFormat:
    def test_roundtrip_bit_exact(self):
        rng = np.random.default_rng(0)
        arrays = {
            "conv1.w": rng.normal(size=(4, 3, 3, 3)).astype(np.float32),
            "conv1.b": rng.normal(size=4).astype(np.float32),
            "fc.w": rng.normal(size=(10, 36)).astype(np.float32),
        }
        back = W.read_weights(W.write_weights(arrays))
        assert list(back) == list(arrays)
        for k in arrays:
            assert back[k].dtype == np.float32
            assert np.array_equal(back[k], arrays[k])

    def test_scalar_promoted_to_one_element_vector(self):
        back = W.read_weights(W.write_weights({"s": np.float32(2.5)}))
        assert back["s"].shape == (1,) and back["s"][0] == 2.5

    def test_deterministic_bytes(self):
        arrays = {"a": np.ones((2, 2), dtype=np.float32)}
        assert W.write_weights(arrays) == W.write_weights(arrays)

    def test_bad_magic_rejected(self):
        with pytest.raises(W.WeightsError):
            W.read_weights(b"XXXX" + bytes(16))

    def test_truncation_rejected(self):
        data = W.write_weights({"a": np.ones((3, 3), dtype=np.float32)})
        with pytest.raises(W.WeightsError):
            W.read_weights(data[:-2])

    def test_duplicate_names_rejected(self):
        one = W.write_weights({"a": np.ones(2, dtype=np.float32)})
        with pytest.raises(W.WeightsError):
            W.read_weights(one + one[4:])

    def test_checkpoint_split_inverse(self):
        params = {"w": np.ones(2, dtype=np.float32)}
        state = {"w": np.full(2, 0.5, dtype=np.float32)}
        merged = W.make_checkpoint(params, state)
        assert set(merged) == {"w", "w.m"}
        p2, s2 = W.split_checkpoint(merged)
        assert np.array_equal(p2["w"], params["w"])
        assert np.array_equal(s2["w"], state["w"])


class TestGradcheck:
    def test_every_case_passes_two_seeds(self):
        results = gc.run_suite([0, 1])
        assert len(results) == 2 * len(gc.CASES)
        for r in results:
            assert r.passed, (r.case, r.seed, r.max_rel_err)
            assert r.max_rel_err < gc.DEFAULT_TOLERANCE

    def test_result_threshold(self):
        assert gc.CheckResult("x", 0, 9.9e-5, 1).passed
        assert not gc.CheckResult("x", 0, 1.1e-4, 1).passed

    def test_unknown_case_rejected(self):
        with pytest.raises(KeyError):
            gc.run_case("nope", 0)
