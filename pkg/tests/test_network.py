"""Convolutional superresolver: forward, exact gradients, merged loss, training."""

import numpy as np
import pytest

from wppsr.images import bicubic_upsample, extract_patches, merge_distributions
from wppsr.network import (
    NetworkParams,
    TrainConfig,
    backward_net,
    forward_net,
    init_network,
    load_params,
    merged_batch_loss,
    save_params,
    train,
)
from wppsr.operators import STRIDED, ForwardOperator, apply_forward, gaussian_kernel
from wppsr.transport import DualAscentConfig, w2_exact_lp

from conftest import random_distribution


def tiny_net(seed, depth=2, channels=4, factor=1, randomize_last=True):
    theta = init_network(depth, channels, factor, seed)
    if randomize_last:
        rg = np.random.default_rng(seed + 1000)
        theta.weights[-1][:] = 0.2 * rg.standard_normal(theta.weights[-1].shape)
        theta.biases[-1][:] = 0.1 * rg.standard_normal(theta.biases[-1].shape)
    return theta


def small_op():
    return ForwardOperator(kernel=gaussian_kernel(4, 1.0), stride=2, mode=STRIDED)


class TestForward:
    def test_zero_weights_give_exact_bicubic(self, rng):
        theta = init_network(3, 4, 2, seed=0)
        for l in range(theta.depth):
            theta.weights[l][:] = 0.0
            theta.biases[l][:] = 0.0
        y = rng.random((9, 11))
        assert np.array_equal(forward_net(theta, y), bicubic_upsample(y, 2))

    def test_default_init_starts_at_bicubic(self, rng):
        # zeroed last layer: the residual branch contributes nothing yet
        theta = init_network(4, 8, 3, seed=2)
        y = rng.random((7, 7))
        assert np.allclose(forward_net(theta, y), bicubic_upsample(y, 3), atol=1e-12)

    def test_factor_4_dims(self):
        theta = init_network(2, 3, 4, seed=0)
        assert forward_net(theta, np.zeros((25, 25))).shape == (100, 100)

    def test_factor_8_dims(self):
        theta = init_network(2, 3, 8, seed=0)
        assert forward_net(theta, np.zeros((20, 20))).shape == (160, 160)

    def test_chain_validation(self):
        w = [np.zeros((4, 1, 3, 3)), np.zeros((1, 3, 3, 3))]
        b = [np.zeros(4), np.zeros(1)]
        with pytest.raises(Exception):
            NetworkParams(w, b, 1)


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self, rng):
        theta = tiny_net(0)
        gw, gb = backward_net(theta, rng.random((6, 6)), np.zeros((6, 6)))
        assert all(np.all(g == 0) for g in gw)
        assert all(np.all(g == 0) for g in gb)

    def test_single_linear_layer_is_correlation(self, rng):
        # one conv layer, no activation: d<out, u>/dW[0,0,a,b] is the
        # correlation of the padded input with the upstream field
        w = [np.zeros((1, 1, 3, 3))]
        b = [np.zeros(1)]
        theta = NetworkParams(w, b, 1)
        y = rng.random((5, 5))
        up = rng.standard_normal((5, 5))
        gw, gb = backward_net(theta, y, up)
        ypad = np.pad(y, 1)
        for a in range(3):
            for c in range(3):
                expected = (ypad[a : a + 5, c : c + 5] * up).sum()
                assert gw[0][0, 0, a, c] == pytest.approx(expected, rel=1e-12)
        assert gb[0][0] == pytest.approx(up.sum(), rel=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_finite_differences(self, seed):
        theta = tiny_net(seed)
        rg = np.random.default_rng(seed + 77)
        y = rg.random((6, 6))
        up = rg.standard_normal((6, 6))
        gw, gb = backward_net(theta, y, up)
        h = 1e-6
        worst = 0.0
        for l in range(theta.depth):
            for arr, grad in ((theta.weights[l], gw[l]), (theta.biases[l], gb[l])):
                it = np.nditer(arr, flags=["multi_index"])
                for _ in it:
                    ix = it.multi_index
                    old = arr[ix]
                    arr[ix] = old + h
                    fp = float((forward_net(theta, y) * up).sum())
                    arr[ix] = old - h
                    fm = float((forward_net(theta, y) * up).sum())
                    arr[ix] = old
                    fd = (fp - fm) / (2 * h)
                    rel = abs(fd - grad[ix]) / max(1e-6, abs(fd), abs(grad[ix]))
                    worst = max(worst, rel)
        assert worst < 1e-3


class TestMergedLoss:
    def test_lambda_zero_is_mean_fidelity(self, rng):
        theta = tiny_net(1, factor=2)
        op = small_op()
        batch = [rng.random((6, 6)) for _ in range(3)]
        ref = random_distribution(rng, 8, (3, 3))
        cfg = TrainConfig(lam=0.0, patch_size=(3, 3),
                          dual=DualAscentConfig(steps=4, minibatch=0))
        loss, _, _ = merged_batch_loss(theta, batch, op, ref, cfg)
        expected = np.mean(
            [((apply_forward(forward_net(theta, y), op) - y) ** 2).sum() for y in batch]
        )
        assert loss == pytest.approx(expected, rel=1e-12)

    def test_tiny_batch_matches_lp_assembly(self, rng):
        theta = tiny_net(2, factor=2)
        op = small_op()
        batch = [rng.random((6, 6)) for _ in range(2)]
        ref = random_distribution(rng, 10, (3, 3))
        cfg = TrainConfig(lam=3.0, patch_size=(3, 3),
                          dual=DualAscentConfig(steps=800, step_size=1.0, minibatch=0))
        loss, _, _ = merged_batch_loss(theta, batch, op, ref, cfg)
        fid = np.mean(
            [((apply_forward(forward_net(theta, y), op) - y) ** 2).sum() for y in batch]
        )
        merged = merge_distributions(
            [extract_patches(forward_net(theta, y), 3, 3) for y in batch]
        )
        w2, _ = w2_exact_lp(merged, ref)
        hand = fid + 3.0 * w2
        assert abs(loss - hand) <= 1e-3 * abs(hand)

    def test_batch_of_one_equals_merged_with_b1(self, rng):
        theta = tiny_net(3, factor=2)
        op = small_op()
        y = rng.random((6, 6))
        ref = random_distribution(rng, 10, (3, 3))
        cfg = TrainConfig(lam=2.0, patch_size=(3, 3),
                          dual=DualAscentConfig(steps=100, minibatch=0))
        loss_batch, _, _ = merged_batch_loss(theta, [y], op, ref, cfg)
        fid = ((apply_forward(forward_net(theta, y), op) - y) ** 2).sum()
        single = extract_patches(forward_net(theta, y), 3, 3)
        w2, _ = w2_exact_lp(single, ref)
        assert abs(loss_batch - (fid + 2.0 * w2)) <= 1e-3 * abs(loss_batch)

    def test_loss_gradient_matches_fd(self, rng):
        # frozen dual (0 ascent steps): the whole batch loss is a
        # deterministic function of theta, so its exact gradient must
        # match finite differences through data term AND patch term
        theta = tiny_net(4, factor=1)
        op = ForwardOperator(kernel=np.array([[1.0]]), stride=1, mode=STRIDED)
        batch = [rng.random((5, 5)) for _ in range(2)]
        ref = random_distribution(rng, 6, (2, 2))
        cfg = TrainConfig(lam=1.5, patch_size=(2, 2),
                          dual=DualAscentConfig(steps=0, minibatch=0))
        loss, (gw, gb), _ = merged_batch_loss(theta, batch, op, ref, cfg)
        h = 1e-6
        worst = 0.0
        for l in range(theta.depth):
            for arr, grad in ((theta.weights[l], gw[l]), (theta.biases[l], gb[l])):
                it = np.nditer(arr, flags=["multi_index"])
                for _ in it:
                    ix = it.multi_index
                    old = arr[ix]
                    arr[ix] = old + h
                    fp, _, _ = merged_batch_loss(theta, batch, op, ref, cfg)
                    arr[ix] = old - h
                    fm, _, _ = merged_batch_loss(theta, batch, op, ref, cfg)
                    arr[ix] = old
                    fd = (fp - fm) / (2 * h)
                    rel = abs(fd - grad[ix]) / max(1e-5, abs(fd), abs(grad[ix]))
                    worst = max(worst, rel)
        assert worst < 1e-3

    def test_empty_batch_rejected(self, rng):
        theta = tiny_net(0)
        with pytest.raises(ValueError):
            merged_batch_loss(theta, [], small_op(),
                              random_distribution(rng, 3, (2, 2)), TrainConfig())


class TestTrain:
    def small_setup(self, rng, n=4):
        op = small_op()
        hrs = [rng.random((8, 8)) for _ in range(n)]
        lrs = [apply_forward(h, op) for h in hrs]
        ref = extract_patches(rng.random((10, 10)), 3, 3)
        return op, lrs, ref

    def cfg(self, epochs, lam=1.0):
        return TrainConfig(
            lam=lam, batch_size=2, epochs=epochs, learning_rate=1e-3,
            patch_size=(3, 3), depth=2, channels=4, reference_subsample=30,
            subsample_seed=0, seed=0,
            dual=DualAscentConfig(steps=5, step_size=1.0, minibatch=0),
        )

    def test_zero_epochs_returns_initial(self, rng):
        op, lrs, ref = self.small_setup(rng)
        theta, trace = train(lrs, op, ref, self.cfg(0))
        init = init_network(2, 4, 2, 0)
        assert trace == []
        assert all(np.array_equal(a, b) for a, b in zip(theta.weights, init.weights))

    def test_smoke_loss_decreases(self, rng):
        op, lrs, ref = self.small_setup(rng, n=8)
        theta, trace = train(lrs, op, ref, self.cfg(4))
        assert all(np.isfinite(t) for t in trace)
        assert trace[-1] < trace[0]

    def test_lambda_zero_fits_data(self, rng):
        op, lrs, ref = self.small_setup(rng, n=4)
        _, trace = train(lrs, op, ref, self.cfg(6, lam=0.0))
        assert trace[-1] < trace[0]

    def test_deterministic(self, rng):
        op, lrs, ref = self.small_setup(rng)
        t1, tr1 = train(lrs, op, ref, self.cfg(2))
        t2, tr2 = train(lrs, op, ref, self.cfg(2))
        assert tr1 == tr2
        assert all(np.array_equal(a, b) for a, b in zip(t1.weights, t2.weights))
        assert all(np.array_equal(a, b) for a, b in zip(t1.biases, t2.biases))


class TestSerialization:
    def test_round_trip(self, rng, tmp_path):
        theta = tiny_net(5, depth=3, channels=6, factor=4)
        path = tmp_path / "net.npz"
        save_params(theta, path)
        loaded = load_params(path)
        assert loaded.factor == 4 and loaded.depth == 3
        assert all(np.array_equal(a, b) for a, b in zip(loaded.weights, theta.weights))
        assert all(np.array_equal(a, b) for a, b in zip(loaded.biases, theta.biases))
