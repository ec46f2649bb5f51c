"""Autodiff engine checks against independent oracles: hand-derived
chain products, nested-loop convolution, and central finite differences
of the smooth (relaxed) forward pass."""

import numpy as np
import pytest

import spikebit.autodiff as ad
from spikebit.autodiff import Parameter, Variable, backward, cross_entropy
from spikebit.network import (
    _IfRun,
    build_arch,
    flatten,
    forward_sequence,
    if_neuron,
    init_params,
    linear,
    sew_block,
)
from spikebit.network import conv2d as conv_spec
from spikebit.neuron import IfLayerState, NeuronConfig, if_step, surrogate_grad
from spikebit.tensor import SeededRng


def fd_grads(loss_fn, params, h=1e-5):
    """Central finite differences of loss_fn with respect to each parameter."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        it = np.nditer(p.data, flags=["multi_index"])
        while not it.finished:
            i = it.multi_index
            orig = p.data[i]
            p.data[i] = orig + h
            fp = loss_fn()
            p.data[i] = orig - h
            fm = loss_fn()
            p.data[i] = orig
            g[i] = (fp - fm) / (2 * h)
            it.iternext()
        grads.append(g)
    return grads


class TestEngineBasics:
    def test_add_mul_grads(self):
        a = Parameter(np.array([2.0, 3.0]), "a")
        b = Parameter(np.array([5.0, 7.0]), "b")
        out = ad.add(ad.mul(a, b), a)
        backward(out)
        assert np.array_equal(a.grad, b.data + 1.0)
        assert np.array_equal(b.grad, a.data)

    def test_shared_node_accumulates(self):
        a = Parameter(np.array([3.0]), "a")
        out = ad.mul(a, a)  # d(a^2)/da = 2a
        backward(out)
        assert a.grad[0] == pytest.approx(6.0)

    def test_bias_broadcast_grad(self):
        x = ad.constant(np.ones((4, 3)))
        b = Parameter(np.zeros(3), "b")
        out = ad.add(x, b)
        backward(out)
        assert np.array_equal(b.grad, np.full(3, 4.0))

    def test_matmul_grads(self):
        rng = np.random.default_rng(0)
        a = Parameter(rng.normal(size=(2, 3)), "a")
        w = Parameter(rng.normal(size=(3, 4)), "w")
        seed = rng.normal(size=(2, 4))
        backward(ad.matmul(a, w), seed)
        assert np.allclose(a.grad, seed @ w.data.T)
        assert np.allclose(w.grad, a.data.T @ seed)

    def test_detach_cuts_gradient(self):
        a = Parameter(np.array([2.0]), "a")
        out = ad.mul(ad.detach(a), a)  # only the undetached path contributes
        backward(out)
        assert a.grad[0] == pytest.approx(2.0)

    def test_zero_seed_gives_zero_grads(self):
        a = Parameter(np.array([1.0, 2.0]), "a")
        out = ad.mul(a, a)
        backward(out, np.zeros(2))
        assert np.array_equal(a.grad, np.zeros(2))

    def test_reshape_round_trip(self):
        a = Parameter(np.arange(6.0).reshape(2, 3), "a")
        out = ad.reshape(a, (3, 2))
        backward(out, np.ones((3, 2)))
        assert np.array_equal(a.grad, np.ones((2, 3)))


class TestCrossEntropy:
    def test_uniform_readout(self):
        readout = ad.constant(np.zeros((5, 10)))
        loss = cross_entropy(readout, np.zeros(5, dtype=np.int64))
        assert float(loss.data) == pytest.approx(np.log(10.0), abs=1e-12)

    def test_large_margin_drives_loss_to_zero(self):
        z = np.zeros((1, 4))
        z[0, 2] = 1000.0
        loss = cross_entropy(ad.constant(z), np.array([2]))
        assert float(loss.data) < 1e-9

    def test_known_value(self):
        # softmax([1,2,3]) -> p[2] = 1 / (1 + e^-1 + e^-2); freeze -log p[2]
        expected = -np.log(1.0 / (1.0 + np.exp(-1.0) + np.exp(-2.0)))
        loss = cross_entropy(ad.constant(np.array([[1.0, 2.0, 3.0]])), np.array([2]))
        assert float(loss.data) == pytest.approx(expected, abs=1e-12)
        assert float(loss.data) == pytest.approx(0.40761, abs=5e-6)

    def test_label_out_of_range_rejected(self):
        z = ad.constant(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            cross_entropy(z, np.array([0, 3]))
        with pytest.raises(ValueError):
            cross_entropy(z, np.array([-1, 0]))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        z = Parameter(rng.normal(size=(4, 5)), "z")
        labels = np.array([0, 2, 4, 1])
        loss = cross_entropy(z, labels)
        backward(loss)
        fd = fd_grads(lambda: float(cross_entropy(z, labels).data), [z])[0]
        np.testing.assert_allclose(z.grad, fd, rtol=1e-6, atol=1e-10)


def conv_oracle(x, w, b, stride, pad):
    """Nested-loop cross-correlation, independent of the engine's im2col."""
    n, c, h, wid = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wid + 2 * pad - kw) // stride + 1
    out = np.zeros((n, o, oh, ow))
    for ni in range(n):
        for oi in range(o):
            for yi in range(oh):
                for xi in range(ow):
                    patch = xp[ni, :, yi * stride : yi * stride + kh,
                               xi * stride : xi * stride + kw]
                    out[ni, oi, yi, xi] = (patch * w[oi]).sum() + b[oi]
    return out


class TestConvAndPool:
    @pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 0), (2, 1)])
    def test_conv_forward_matches_oracle(self, stride, pad):
        rng = np.random.default_rng(10 + stride + pad)
        x = rng.normal(size=(2, 2, 5, 5))
        w = rng.normal(size=(3, 2, 3, 3))
        b = rng.normal(size=3)
        out = ad.conv2d(ad.constant(x), ad.constant(w), ad.constant(b), stride, pad)
        np.testing.assert_allclose(out.data, conv_oracle(x, w, b, stride, pad), atol=1e-12)

    def test_conv_forward_matches_scipy(self):
        from scipy.signal import correlate2d

        rng = np.random.default_rng(14)
        x = rng.normal(size=(1, 2, 6, 6))
        w = rng.normal(size=(2, 2, 3, 3))
        out = ad.conv2d(ad.constant(x), ad.constant(w), ad.constant(np.zeros(2)), 1, 0)
        for oi in range(2):
            want = sum(correlate2d(x[0, ci], w[oi, ci], mode="valid") for ci in range(2))
            np.testing.assert_allclose(out.data[0, oi], want, atol=1e-12)

    @pytest.mark.parametrize("stride,pad", [(1, 1), (2, 0)])
    def test_conv_grads_match_finite_differences(self, stride, pad):
        rng = np.random.default_rng(20 + stride)
        x = Parameter(rng.normal(size=(2, 2, 4, 4)), "x")
        w = Parameter(rng.normal(size=(2, 2, 3, 3)), "w")
        b = Parameter(rng.normal(size=2), "b")
        weight = rng.normal(size=ad.conv2d(x, w, b, stride, pad).shape)

        def loss_fn():
            return float((ad.conv2d(x, w, b, stride, pad).data * weight).sum())

        out = ad.conv2d(x, w, b, stride, pad)
        backward(out, weight)
        fd = fd_grads(loss_fn, [x, w, b])
        for p, g in zip((x, w, b), fd):
            np.testing.assert_allclose(p.grad, g, rtol=1e-5, atol=1e-8)

    def test_avg_pool_forward_and_grad(self):
        rng = np.random.default_rng(30)
        x = Parameter(rng.normal(size=(2, 3, 4, 4)), "x")
        out = ad.avg_pool2d(x, 2)
        want = x.data.reshape(2, 3, 2, 2, 2, 2).mean(axis=(3, 5))
        np.testing.assert_allclose(out.data, want, atol=1e-12)
        weight = rng.normal(size=out.shape)
        backward(out, weight)
        fd = fd_grads(lambda: float((ad.avg_pool2d(x, 2).data * weight).sum()), [x])[0]
        np.testing.assert_allclose(x.grad, fd, rtol=1e-5, atol=1e-8)

    def test_avg_pool_rejects_indivisible(self):
        with pytest.raises(ValueError):
            ad.avg_pool2d(ad.constant(np.zeros((1, 1, 5, 5))), 2)


class TestSpikeOps:
    def test_spike_forward_is_hard_threshold(self):
        u = ad.constant(np.array([0.5, 1.0, 1.5]))
        out = ad.spike(u, 1.0, 2.0)
        assert list(out.data) == [0.0, 1.0, 1.0]

    def test_spike_backward_uses_surrogate(self):
        u = Parameter(np.array([0.3, 1.2]), "u")
        out = ad.spike(u, 1.0, 2.0)
        backward(out, np.ones(2))
        np.testing.assert_allclose(u.grad, surrogate_grad(u.data - 1.0, 2.0))

    def test_relaxed_spike_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        u = Parameter(rng.normal(size=10), "u")
        out = ad.spike_relaxed(u, 1.0, 2.0)
        backward(out, np.ones(10))
        fd = fd_grads(lambda: float(ad.spike_relaxed(u, 1.0, 2.0).data.sum()), [u])[0]
        np.testing.assert_allclose(u.grad, fd, rtol=1e-6, atol=1e-9)


class TestEngineIfAgainstReference:
    def test_spiking_trace_matches_if_step(self):
        rng = np.random.default_rng(40)
        cfg = NeuronConfig()
        run = _IfRun(cfg, relaxed=False)
        state = IfLayerState.initial((4, 6))
        for _ in range(12):
            drive = rng.uniform(-0.5, 1.5, (4, 6))
            s_engine = run.step(ad.constant(drive))
            state, s_ref = if_step(state, drive, cfg)
            assert np.array_equal(s_engine.data, s_ref)
            assert np.allclose(run.u.data, state.u)


class TestBpttHandChains:
    def test_one_neuron_one_step(self):
        # single linear weight, one input spike: dL/dw = surrogate(w + b - v_th)
        w0, b0 = 0.7, 0.1
        net = [flatten(), linear(1, 1), if_neuron()]
        params = [Parameter(np.array([[w0]]), "w"), Parameter(np.array([b0]), "b")]
        frames = np.ones((1, 1, 1, 1, 1))
        readout, _ = forward_sequence(net, params, frames)
        backward(readout, np.ones((1, 1)))
        expected = surrogate_grad(np.array([w0 + b0 - 1.0]), 2.0)[0]
        assert params[0].grad[0, 0] == pytest.approx(expected, rel=1e-12)
        assert params[1].grad[0] == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("w0", [0.8, 1.2])
    def test_two_step_detached_reset_chain(self, w0):
        # hand-computed BPTT sum with the reset gate held constant:
        #   u1 = w, s1 = H(u1 - 1), u2 = (1 - s1) u1 + w, s2 = H(u2 - 1)
        #   readout = (s1 + s2) / 2
        #   dL/dw = 1/2 surr(u1-1) + 1/2 surr(u2-1) ((1-s1) + 1)
        net = [flatten(), linear(1, 1), if_neuron()]
        params = [Parameter(np.array([[w0]]), "w"), Parameter(np.zeros(1), "b")]
        frames = np.ones((2, 1, 1, 1, 1))
        readout, _ = forward_sequence(net, params, frames)
        backward(readout, np.ones((1, 1)))

        u1 = w0
        s1 = 1.0 if u1 - 1.0 >= 0 else 0.0
        u2 = (1.0 - s1) * u1 + w0
        expected = 0.5 * surrogate_grad(np.array([u1 - 1.0]), 2.0)[0] \
            + 0.5 * surrogate_grad(np.array([u2 - 1.0]), 2.0)[0] * ((1.0 - s1) + 1.0)
        assert params[0].grad[0, 0] == pytest.approx(expected, rel=1e-12)

    def test_zero_loss_grad_means_zero_param_grads(self):
        rng = SeededRng(77)
        net = build_arch("mlp", (1, 4, 4), 2)
        params = init_params(net, rng)
        frames = np.ones((3, 2, 1, 4, 4))
        readout, _ = forward_sequence(net, params, frames)
        backward(readout, np.zeros((2, 2)))
        for p in params:
            assert p.grad is None or not p.grad.any()


def random_tiny_net(rng: np.random.Generator):
    """A net with at most 10 parameters and a short random bit train."""
    d, hdim, k = [(2, 1, 2), (1, 2, 2), (2, 2, 1), (3, 1, 2)][int(rng.integers(0, 4))]
    net = [flatten(), linear(d, hdim), if_neuron(), linear(hdim, k), if_neuron()]
    params = [
        Parameter(rng.normal(scale=0.9, size=(d, hdim)), "w1"),
        Parameter(rng.normal(scale=0.4, size=hdim), "b1"),
        Parameter(rng.normal(scale=0.9, size=(hdim, k)), "w2"),
        Parameter(rng.normal(scale=0.4, size=k), "b2"),
    ]
    assert sum(p.data.size for p in params) <= 10
    t = int(rng.integers(1, 5))
    n = 2
    frames = rng.integers(0, 2, (t, n, 1, 1, d)).astype(np.float64)
    labels = rng.integers(0, k, n)
    return net, params, frames, labels


def relaxed_bptt_vs_fd(net, params, frames, labels, rtol=1e-4):
    def loss_fn():
        readout, _ = forward_sequence(net, params, frames, relaxed=True)
        return float(cross_entropy(readout, labels).data)

    readout, _ = forward_sequence(net, params, frames, relaxed=True)
    loss = cross_entropy(readout, labels)
    for p in params:
        p.zero_grad()
    backward(loss)
    fd = fd_grads(loss_fn, params)
    for p, g in zip(params, fd):
        got = p.grad if p.grad is not None else np.zeros_like(p.data)
        np.testing.assert_allclose(got, g, rtol=rtol, atol=1e-8)


class TestBpttFiniteDifferenceOracle:
    def test_pure_linear_path_tight_tolerance(self):
        # no spike layers anywhere: grads must match to 1e-6 relative
        rng = np.random.default_rng(50)
        net = [flatten(), linear(3, 4), linear(4, 2)]
        params = [
            Parameter(rng.normal(size=(3, 4)), "w1"),
            Parameter(rng.normal(size=4), "b1"),
            Parameter(rng.normal(size=(4, 2)), "w2"),
            Parameter(rng.normal(size=2), "b2"),
        ]
        frames = rng.normal(size=(2, 3, 1, 1, 3))
        labels = np.array([0, 1, 0])

        def loss_fn():
            readout, _ = forward_sequence(net, params, frames)
            return float(cross_entropy(readout, labels).data)

        readout, _ = forward_sequence(net, params, frames)
        backward(cross_entropy(readout, labels))
        fd = fd_grads(loss_fn, params)
        for p, g in zip(params, fd):
            np.testing.assert_allclose(p.grad, g, rtol=1e-6, atol=1e-10)

    def test_relaxed_spiking_nets_against_fd(self):
        rng = np.random.default_rng(60)
        for _ in range(30):
            net, params, frames, labels = random_tiny_net(rng)
            relaxed_bptt_vs_fd(net, params, frames, labels)

    def test_relaxed_conv_sew_net_against_fd(self):
        # exercises conv, pooling, and every sew combine mode through time
        for mode in ("add", "and", "iand"):
            rng = np.random.default_rng(hash(mode) % 2 ** 31)
            net = [conv_spec(1, 2), if_neuron(), sew_block(2, mode.upper()),
                   flatten(), linear(2 * 4 * 4, 2), if_neuron()]
            params = init_params(net, SeededRng(5))
            for p in params:
                p.data = rng.normal(scale=0.5, size=p.shape)
            frames = rng.integers(0, 2, (2, 1, 1, 4, 4)).astype(np.float64)
            labels = np.array([1])
            relaxed_bptt_vs_fd(net, params, frames, labels)


class TestStability:
    def test_repeated_frames_never_nan(self):
        # doubling T with an identical input frame must keep grads finite
        rng = np.random.default_rng(70)
        for _ in range(100):
            net, params, frame, labels = random_tiny_net(rng)
            base = frame[:1]
            for t_total in (frame.shape[0], 2 * frame.shape[0]):
                frames = np.repeat(base, t_total, axis=0)
                readout, _ = forward_sequence(net, params, frames)
                loss = cross_entropy(readout, labels)
                for p in params:
                    p.zero_grad()
                backward(loss)
                assert np.isfinite(float(loss.data))
                for p in params:
                    if p.grad is not None:
                        assert np.isfinite(p.grad).all()
