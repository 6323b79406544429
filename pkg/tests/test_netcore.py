import math

import numpy as np
import pytest

from densesr.netcore import (AdamConfig, AdamState, Graph, Tensor, adam_step, add, backward,
                             concat_channels, conv2d, leaky_relu, logcosh, logcosh_loss, relu)
from densesr.netcore.gradcheck import composition_checks, op_checks, project


def conv_oracle(x, w, b, padding):
    """Quadruple loop over (n, o, i, j) with an explicit tap sum; returns out and an
    index map used by the gradient oracle."""
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    r = k // 2
    out = np.zeros((n, o, h, wd))
    taps = []
    for ni in range(n):
        for oi in range(o):
            for i in range(h):
                for j in range(wd):
                    s = 0.0 if b is None else b[oi]
                    for ci in range(c):
                        for di in range(k):
                            for dj in range(k):
                                y, z = i + di - r, j + dj - r
                                if padding == "edge":
                                    y, z = min(max(y, 0), h - 1), min(max(z, 0), wd - 1)
                                elif not (0 <= y < h and 0 <= z < wd):
                                    continue
                                s += w[oi, ci, di, dj] * x[ni, ci, y, z]
                                taps.append((ni, oi, i, j, ci, di, dj, y, z))
                    out[ni, oi, i, j] = s
    return out, taps


def conv_grad_oracle(x, w, g, taps):
    dx, dw = np.zeros_like(x), np.zeros_like(w)
    for ni, oi, i, j, ci, di, dj, y, z in taps:
        dx[ni, ci, y, z] += g[ni, oi, i, j] * w[oi, ci, di, dj]
        dw[oi, ci, di, dj] += g[ni, oi, i, j] * x[ni, ci, y, z]
    return dx, dw


class TestConv:
    @pytest.mark.parametrize("k", [1, 3])
    @pytest.mark.parametrize("padding", ["zeros", "edge"])
    def test_against_loop_oracle(self, rng, k, padding):
        x = rng.standard_normal((2, 3, 4, 5))
        w = rng.standard_normal((2, 3, k, k))
        b = rng.standard_normal(2)
        g = rng.standard_normal((2, 2, 4, 5))
        xt, wt, bt = (Tensor(a, requires_grad=True, dtype=np.float64) for a in (x, w, b))
        with Graph() as graph:
            loss = project(conv2d(xt, wt, bt, padding), g)
        ref, taps = conv_oracle(x, w, b, padding)
        out = conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64), Tensor(b, dtype=np.float64), padding)
        assert np.abs(out.data - ref).max() < 1e-10
        backward(graph, loss)
        dx, dw = conv_grad_oracle(x, w, g, taps)
        assert np.abs(xt.grad - dx).max() < 1e-10
        assert np.abs(wt.grad - dw).max() < 1e-10
        assert np.abs(bt.grad - g.sum(axis=(0, 2, 3))).max() < 1e-10

    def test_single_channel_float32(self, rng):
        x = rng.standard_normal((1, 1, 4, 4)).astype(np.float32)
        w = rng.standard_normal((1, 1, 3, 3)).astype(np.float32)
        xt, wt = Tensor(x, requires_grad=True), Tensor(w, requires_grad=True)
        g = np.ones((1, 1, 4, 4))
        with Graph() as graph:
            loss = project(conv2d(xt, wt), g)
        ref, taps = conv_oracle(x.astype(np.float64), w.astype(np.float64), None, "zeros")
        assert np.abs(conv2d(Tensor(x), Tensor(w)).data - ref).max() < 1e-5
        backward(graph, loss)
        dx, dw = conv_grad_oracle(x.astype(np.float64), w.astype(np.float64), g, taps)
        assert np.abs(xt.grad - dx).max() < 1e-5 and np.abs(wt.grad - dw).max() < 1e-5

    def test_selector_and_zero_weights(self, rng):
        x = Tensor(rng.standard_normal((1, 3, 5, 5)))
        sel = np.zeros((1, 3, 1, 1), np.float32)
        sel[0, 1] = 1
        assert np.array_equal(conv2d(x, Tensor(sel)).data[0, 0], x.data[0, 1])
        assert not conv2d(x, Tensor(np.zeros((2, 3, 3, 3)))).data.any()

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))
        with pytest.raises(ValueError):
            conv2d(Tensor(np.zeros((1, 1, 4, 4))), Tensor(np.zeros((1, 1, 5, 5))))

    def test_linear_in_input(self, rng):
        w = Tensor(rng.standard_normal((2, 2, 3, 3)), dtype=np.float64)
        a, b = rng.standard_normal((2, 1, 2, 6, 6))
        lhs = conv2d(Tensor(2 * a + 3 * b, dtype=np.float64), w).data
        rhs = 2 * conv2d(Tensor(a, dtype=np.float64), w).data + 3 * conv2d(Tensor(b, dtype=np.float64), w).data
        assert np.abs(lhs - rhs).max() < 1e-10


class TestPointwise:
    def test_relu(self):
        assert relu(Tensor([-1.0, 2.0])).data.tolist() == [0, 2]

    def test_leaky(self):
        assert leaky_relu(Tensor([-1.0, 2.0])).data.tolist() == pytest.approx([-0.01, 2])

    def test_add_zero(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 3, 3)))
        assert np.array_equal(add(x, Tensor(np.zeros(x.shape))).data, x.data)

    def test_concat_split(self, rng):
        a = Tensor(rng.standard_normal((1, 1, 3, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal((1, 64, 3, 3)), requires_grad=True)
        g = rng.standard_normal((1, 65, 3, 3))
        with Graph() as graph:
            out = concat_channels([a, b])
            loss = project(out, g)
        assert out.shape == (1, 65, 3, 3)
        backward(graph, loss)
        assert np.allclose(a.grad, g[:, :1]) and np.allclose(b.grad, g[:, 1:])

    def test_add_shape_mismatch(self):
        with pytest.raises(ValueError):
            add(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 2, 3))))


class TestLogcosh:
    def test_zero(self):
        x = Tensor(np.ones((1, 1, 2, 2)))
        assert logcosh_loss(x, x).item() == 0

    def test_unit_and_large(self):
        assert float(logcosh(np.array(1.0))) == pytest.approx(math.log(math.cosh(1)), abs=1e-12)
        assert math.log(math.cosh(1)) == pytest.approx(0.4338, abs=5e-5)
        big = float(logcosh(np.array(50.0)))
        assert math.isfinite(big) and big == pytest.approx(50 - math.log(2), abs=1e-12)
        assert float(logcosh(np.array(1000.0))) == pytest.approx(1000 - math.log(2))


class TestBackward:
    def test_unused_parameter_has_zero_grad(self, rng):
        a = Tensor(rng.standard_normal((1, 1, 2, 2)), requires_grad=True)
        unused = Tensor(rng.standard_normal((1, 1, 2, 2)), requires_grad=True)
        unused.zero_grad()
        with Graph() as graph:
            loss = logcosh_loss(relu(a), Tensor(np.zeros((1, 1, 2, 2))))
        backward(graph, loss)
        assert not unused.grad.any()

    def test_disconnected_subgraphs(self, rng):
        a = Tensor(rng.standard_normal((1, 1, 2, 2)), requires_grad=True)
        b = Tensor(rng.standard_normal((1, 1, 2, 2)), requires_grad=True)
        z = Tensor(np.zeros((1, 1, 2, 2)))
        with Graph() as graph:
            la = logcosh_loss(a, z)
            logcosh_loss(b, z)
        backward(graph, la)
        assert a.grad is not None and b.grad is None

    def test_no_recording_outside_graph(self, rng):
        a = Tensor(rng.standard_normal((1, 1, 2, 2)), requires_grad=True)
        relu(a)
        with Graph() as graph:
            pass
        assert not graph.nodes

    def test_reuse_rejected(self, rng):
        a = Tensor(rng.standard_normal((1, 1, 2, 2)), requires_grad=True)
        with Graph() as graph:
            loss = logcosh_loss(a, Tensor(np.zeros((1, 1, 2, 2))))
        backward(graph, loss)
        with pytest.raises(RuntimeError):
            backward(graph, loss)

    def test_fan_out_accumulates(self, rng):
        a = Tensor(rng.standard_normal((1, 1, 2, 2)), requires_grad=True, dtype=np.float64)
        r = rng.standard_normal((1, 1, 2, 2))
        with Graph() as graph:
            loss = project(add(a, a), r)
        backward(graph, loss)
        assert np.allclose(a.grad, 2 * r)


class TestFiniteDifferences:
    def test_every_op(self):
        for res in op_checks(seed=3):
            assert res.passed(1e-4), res

    def test_random_compositions(self):
        for res in composition_checks(20, seed=11):
            assert res.passed(1e-4), res


class TestAdam:
    def test_zero_grad_no_change(self):
        p = {"w": np.array([1.0, -2.0])}
        st = AdamState()
        adam_step(p, {"w": np.zeros(2)}, st)
        assert p["w"].tolist() == [1.0, -2.0]

    @pytest.mark.parametrize("g", [3.0, -0.02, 1e-9])
    def test_first_step_oracle(self, g):
        cfg = AdamConfig()
        p = {"w": np.array([0.5])}
        adam_step(p, {"w": np.array([g])}, AdamState(), cfg)
        m_hat = (1 - cfg.beta1) * g / (1 - cfg.beta1)
        v_hat = (1 - cfg.beta2) * g * g / (1 - cfg.beta2)
        expect = 0.5 - cfg.lr * m_hat / (math.sqrt(v_hat) + cfg.eps)
        assert p["w"][0] == pytest.approx(expect, rel=1e-12, abs=1e-15)
        if abs(g) > 1e-3:
            assert abs(p["w"][0] - 0.5) == pytest.approx(cfg.lr, rel=1e-5)

    def test_identical_parameters_evolve_identically(self, rng):
        p = {"a": np.ones(4), "b": np.ones(4)}
        st = AdamState()
        for _ in range(5):
            g = rng.standard_normal(4)
            adam_step(p, {"a": g, "b": g.copy()}, st)
        assert np.array_equal(p["a"], p["b"])
        assert st.t == 5

    def test_bad_config(self):
        with pytest.raises(ValueError):
            AdamConfig(beta1=1.0)
