"""Oracle and gradient tests for the reverse-mode tensor ops."""

import numpy as np
import pytest

from langcorr import autodiff as ad


def naive_conv1d(x, w, b, kernel, stride):
    B, L, cin = x.shape
    F = w.shape[1]
    lout = (L - kernel) // stride + 1
    out = np.zeros((B, lout, F), dtype=np.float64)
    for bi in range(B):
        for t in range(lout):
            patch = x[bi, t * stride:t * stride + kernel].reshape(-1)
            out[bi, t] = patch @ w + b
    return out


def naive_conv2d(x, w, b, kh, kw, stride):
    B, H, W, cin = x.shape
    F = w.shape[1]
    hout = (H - kh) // stride + 1
    wout = (W - kw) // stride + 1
    out = np.zeros((B, hout, wout, F), dtype=np.float64)
    for bi in range(B):
        for i in range(hout):
            for j in range(wout):
                patch = x[bi, i * stride:i * stride + kh,
                          j * stride:j * stride + kw].reshape(-1)
                out[bi, i, j] = patch @ w + b
    return out


class TestConvOracles:
    def test_conv1d_matches_naive_loops_100_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            B = int(rng.integers(1, 5))
            kernel = int(rng.integers(1, 4))
            stride = int(rng.integers(1, 3))
            L = int(rng.integers(kernel, kernel + 8))
            cin = int(rng.integers(1, 6))
            F = int(rng.integers(1, 6))
            x = rng.standard_normal((B, L, cin)).astype(np.float64)
            w = rng.standard_normal((kernel * cin, F)).astype(np.float64)
            b = rng.standard_normal(F).astype(np.float64)
            got = ad.conv1d(ad.Var(x), ad.Var(w), ad.Var(b), kernel, stride)
            want = naive_conv1d(x, w, b, kernel, stride)
            np.testing.assert_allclose(got.data, want, rtol=1e-12, atol=1e-12)

    def test_conv2d_matches_naive_loops_100_instances(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            B = int(rng.integers(1, 4))
            kh, kw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            stride = int(rng.integers(1, 3))
            H = int(rng.integers(kh, kh + 6))
            W = int(rng.integers(kw, kw + 6))
            cin = int(rng.integers(1, 5))
            F = int(rng.integers(1, 5))
            x = rng.standard_normal((B, H, W, cin)).astype(np.float64)
            w = rng.standard_normal((kh * kw * cin, F)).astype(np.float64)
            b = rng.standard_normal(F).astype(np.float64)
            got = ad.conv2d(ad.Var(x), ad.Var(w), ad.Var(b), (kh, kw), stride)
            want = naive_conv2d(x, w, b, kh, kw, stride)
            np.testing.assert_allclose(got.data, want, rtol=1e-12, atol=1e-12)

    def test_conv2d_large_batch_skinny_filter_path(self):
        # the padded-GEMM shortcut kicks in above 4096 rows; same numbers
        rng = np.random.default_rng(9)
        x = rng.standard_normal((200, 7, 7, 30)).astype(np.float32)
        w = rng.standard_normal((120, 4)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        got = ad.conv2d(ad.Var(x), ad.Var(w), ad.Var(b), (2, 2), 1)
        want = naive_conv2d(x.astype(np.float64), w.astype(np.float64),
                            b.astype(np.float64), 2, 2, 1)
        np.testing.assert_allclose(got.data, want, rtol=2e-4, atol=2e-4)


def fd_grad(fn, arrs, h=1e-6):
    """Central-difference gradients of scalar fn(list of arrays)."""
    grads = []
    for k, a in enumerate(arrs):
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = fn(arrs)
            flat[i] = orig - h
            dn = fn(arrs)
            flat[i] = orig
            gf[i] = (up - dn) / (2 * h)
        grads.append(g)
    return grads


def check_op(build, arrs, rtol=1e-6):
    """build(list of param Vars) -> scalar Var; compares backward to FD."""
    leaves = [ad.Var(a, is_param=True) for a in arrs]
    loss = build(leaves)
    loss.backward()

    def scalar(xs):
        return float(build([ad.Var(x, is_param=True) for x in xs]).data)

    fd = fd_grad(scalar, [a.copy() for a in arrs])
    for leaf, g in zip(leaves, fd):
        got = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        np.testing.assert_allclose(got, g, rtol=rtol, atol=1e-7)


class TestGradients:
    rng = np.random.default_rng(21)

    def test_affine_gradients(self):
        x = self.rng.standard_normal((3, 5))
        w = self.rng.standard_normal((4, 5))
        b = self.rng.standard_normal(4)
        check_op(lambda v: ad.mean(ad.relu(ad.affine(v[0], v[1], v[2]))),
                 [x, w, b])

    def test_conv1d_gradients(self):
        x = self.rng.standard_normal((2, 6, 3))
        w = self.rng.standard_normal((6, 4))
        b = self.rng.standard_normal(4)
        check_op(lambda v: ad.mean(ad.conv1d(v[0], v[1], v[2], 2, 1)),
                 [x, w, b])

    def test_conv2d_gradients(self):
        x = self.rng.standard_normal((2, 5, 5, 3))
        w = self.rng.standard_normal((12, 4))
        b = self.rng.standard_normal(4)
        check_op(lambda v: ad.mean(ad.conv2d(v[0], v[1], v[2], (2, 2), 1)),
                 [x, w, b])

    def test_embedding_gradients(self):
        table = self.rng.standard_normal((7, 4))
        tokens = np.array([[1, 2, 2, 0], [6, 5, 1, 1]])
        check_op(lambda v: ad.mean(ad.embedding(v[0], tokens)), [table])

    def test_segment_mean_gradients(self):
        x = self.rng.standard_normal((6, 3))
        seg = np.array([0, 0, 1, 2, 2, 2])
        check_op(lambda v: ad.mean(ad.segment_mean(v[0], seg, 4)), [x])

    def test_concat_reshape_gradients(self):
        a = self.rng.standard_normal((3, 2))
        b = self.rng.standard_normal((3, 4))
        check_op(lambda v: ad.mean(ad.reshape(ad.concat([v[0], v[1]]), (2, 9))),
                 [a, b])

    def test_softmax_cross_entropy_gradients(self):
        logits = self.rng.standard_normal((5, 4))
        targets = np.array([0, 3, 1, 2, 2])
        check_op(lambda v: ad.softmax_cross_entropy(v[0], targets)[0],
                 [logits])


class TestCrossEntropy:
    def test_matches_high_precision_log_sum_exp(self):
        rng = np.random.default_rng(3)
        logits = rng.standard_normal((64, 6)).astype(np.float32) * 5
        targets = rng.integers(0, 6, size=64)
        loss, probs = ad.softmax_cross_entropy(ad.Var(logits), targets)
        z = logits.astype(np.float64)
        lse = np.log(np.sum(np.exp(z - z.max(axis=1, keepdims=True)), axis=1)) \
            + z.max(axis=1)
        want = float(np.mean(lse - z[np.arange(64), targets]))
        assert abs(float(loss.data) - want) < 1e-5
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-5)

    def test_uniform_logits_give_log_n_actions(self):
        loss, _ = ad.softmax_cross_entropy(ad.Var(np.zeros((10, 6),
                                                           dtype=np.float32)),
                                           np.arange(10) % 6)
        assert abs(float(loss.data) - np.log(6)) < 1e-6

    def test_out_of_range_target_rejected(self):
        with pytest.raises(ValueError):
            ad.softmax_cross_entropy(ad.Var(np.zeros((2, 4))), np.array([0, 4]))


class TestEmbedding:
    def test_lookup_rows(self):
        table = np.arange(12, dtype=np.float32).reshape(4, 3)
        out = ad.embedding(ad.Var(table), np.array([[3, 0], [1, 1]]))
        np.testing.assert_array_equal(out.data[0, 0], table[3])
        np.testing.assert_array_equal(out.data[1, 1], table[1])

    def test_out_of_range_token_rejected(self):
        with pytest.raises(ValueError):
            ad.embedding(ad.Var(np.zeros((4, 3))), np.array([[4]]))


class TestLeafSkipping:
    def test_plain_data_leaf_gets_no_grad(self):
        x = ad.Var(np.ones((3, 4), dtype=np.float32))  # data, not a parameter
        w = ad.Var(np.ones((2, 4), dtype=np.float32), is_param=True)
        b = ad.Var(np.zeros(2, dtype=np.float32), is_param=True)
        loss = ad.mean(ad.affine(x, w, b))
        loss.backward()
        assert x.grad is None
        assert w.grad is not None

    def test_param_leaf_and_interior_node_get_grads(self):
        x = ad.Var(np.ones((3, 4), dtype=np.float32), is_param=True)
        w = ad.Var(np.ones((2, 4), dtype=np.float32), is_param=True)
        b = ad.Var(np.zeros(2, dtype=np.float32), is_param=True)
        h = ad.relu(ad.affine(x, w, b))
        loss = ad.mean(h)
        loss.backward()
        assert x.grad is not None
        assert h.grad is not None
