"""Engine ops: forward values, gradient rules, tape behaviour, optimizer."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import gradient_check, wrap_input
from hsifreq import tensor as T
from hsifreq.optim import Adam, cosine_lr
from hsifreq.tensor import Param, ShapeError, Tape, Tensor


class TestMatmul:
    def test_identity(self):
        a = Tensor(np.eye(2))
        out = T.matmul(a, Tensor(np.eye(2)))
        assert np.array_equal(out.data, np.eye(2, dtype=np.float32))

    def test_hand_product(self):
        out = T.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[0.0], [1.0]]))
        assert np.array_equal(out.data, np.array([[2.0], [4.0]], dtype=np.float32))

    def test_zero_annihilates(self, rng):
        z = Tensor(np.zeros((3, 4)))
        b = Tensor(rng.standard_normal((4, 5)))
        assert np.all(T.matmul(z, b).data == 0.0)

    def test_shape_mismatch_names_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_identity_associativity_bitwise(self, rng):
        a = Tensor(rng.standard_normal((4, 4)).astype(np.float32))
        b = Tensor(rng.standard_normal((4, 4)).astype(np.float32))
        i = Tensor(np.eye(4, dtype=np.float32))
        left = T.matmul(T.matmul(a, i), b)
        right = T.matmul(a, b)
        assert np.array_equal(left.data, right.data)


class TestSoftmax:
    def test_uniform(self):
        out = T.softmax(Tensor([3.0, 3.0, 3.0, 3.0]), axis=0)
        assert np.allclose(out.data, 0.25)

    def test_closed_form_ratio(self):
        out = T.softmax(Tensor([0.0, math.log(3.0)]), axis=0)
        assert np.allclose(out.data, [0.25, 0.75], atol=1e-7)

    def test_saturation_direction(self):
        out = T.softmax(Tensor([20.0, 0.0], dtype=np.float64), axis=0)
        assert out.data[0] > 1.0 - 1e-8

    def test_bad_axis(self):
        with pytest.raises(ShapeError):
            T.softmax(Tensor(np.zeros((2, 2))), axis=5)

    @given(st.integers(2, 6), st.integers(1, 4), st.integers(0, 1))
    @settings(max_examples=30, deadline=None)
    def test_slices_sum_to_one(self, n, m, axis):
        vals = np.random.default_rng(n * 13 + m * 7 + axis).normal(size=(m, n)) * 30
        out = T.softmax(Tensor(vals), axis=axis)
        sums = out.data.sum(axis=axis)
        assert np.allclose(sums, 1.0, atol=1e-6)


class TestGelu:
    def test_zero(self):
        assert T.gelu(Tensor([0.0])).item() == 0.0

    def test_asymptote(self):
        out = T.gelu(Tensor([10.0], dtype=np.float64)).item()
        assert abs(out - 10.0) / 10.0 < 1e-6

    def test_scalar_formula_at_one(self):
        expect = 0.5 * (1.0 + math.tanh(math.sqrt(2 / math.pi) * (1 + 0.044715)))
        assert abs(T.gelu(Tensor([1.0], dtype=np.float64)).item() - expect) < 1e-12


class TestConv2d:
    def test_one_by_one_identity(self, rng):
        x = Tensor(rng.standard_normal((5, 6, 3)))
        k = Tensor(np.eye(3).reshape(1, 1, 3, 3))
        out = T.conv2d(x, k)
        assert np.allclose(out.data, x.data, atol=1e-6)

    def test_depthwise_ones_on_constant(self):
        x = Tensor(np.full((6, 6, 2), 2.5))
        k = Tensor(np.ones((3, 3, 1, 2)))
        out = T.conv2d(x, k, groups=2, padding="same")
        assert np.allclose(out.data[1:-1, 1:-1, :], 9 * 2.5, atol=1e-5)

    def test_depthwise_matches_loop_oracle(self, rng):
        x = rng.standard_normal((4, 4, 2))
        k = rng.standard_normal((3, 3, 1, 2))
        out = T.conv2d(Tensor(x), Tensor(k), groups=2, padding="same").data
        expect = np.zeros_like(out)
        xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
        for i in range(4):
            for j in range(4):
                for c in range(2):
                    acc = 0.0
                    for u in range(3):
                        for v in range(3):
                            acc += xp[i + u, j + v, c] * k[u, v, 0, c]
                    expect[i, j, c] = acc
        assert np.allclose(out, expect, atol=1e-5)

    def test_full_conv_matches_loop_oracle(self, rng):
        x = rng.standard_normal((4, 5, 3))
        k = rng.standard_normal((3, 3, 3, 2))
        out = T.conv2d(Tensor(x), Tensor(k), padding="valid").data
        expect = np.zeros((2, 3, 2))
        for i in range(2):
            for j in range(3):
                for o in range(2):
                    expect[i, j, o] = np.sum(x[i:i + 3, j:j + 3, :] * k[:, :, :, o])
        assert np.allclose(out, expect, atol=1e-5)

    def test_group_mismatch(self):
        with pytest.raises(ShapeError):
            T.conv2d(Tensor(np.zeros((4, 4, 3))), Tensor(np.zeros((3, 3, 1, 3))), groups=2)

    def test_strided_needs_matching_kernel(self):
        with pytest.raises(ShapeError):
            T.conv2d(Tensor(np.zeros((4, 4, 2))), Tensor(np.zeros((3, 3, 2, 2))),
                     padding="valid", stride=2)

    def test_transpose_then_strided_conv_shapes(self, rng):
        x = Tensor(rng.standard_normal((4, 4, 3)))
        kt = Tensor(rng.standard_normal((2, 2, 3, 5)))
        up = T.conv2d_transpose(x, kt, stride=2)
        assert up.shape == (8, 8, 5)
        kd = Tensor(rng.standard_normal((2, 2, 5, 3)))
        down = T.conv2d(up, kd, padding="valid", stride=2)
        assert down.shape == (4, 4, 3)


class TestBackward:
    def test_sum_gives_ones(self, f64):
        p = Param(np.arange(6.0).reshape(2, 3), name="p")
        with Tape() as tape:
            tape.backward(T.sum_all(p.value), [p])
        assert np.array_equal(p.grad, np.ones((2, 3)))

    def test_squared_norm_gives_2p(self, f64):
        p = Param(np.array([1.0, -2.0, 0.5]), name="p")
        with Tape() as tape:
            tape.backward(T.sum_all(T.mul(p.value, p.value)), [p])
        assert np.allclose(p.grad, 2 * p.value.data)

    def test_non_scalar_loss_rejected(self):
        p = Param(np.ones(3))
        with Tape() as tape:
            out = T.mul(p.value, p.value)
            with pytest.raises(ShapeError):
                tape.backward(out, [p])

    def test_unreachable_param_keeps_zero_grad(self, f64):
        p = Param(np.ones(3), name="used")
        q = Param(np.ones(3), name="unused")
        with Tape() as tape:
            tape.backward(T.sum_all(p.value), [p, q])
        assert np.all(q.grad == 0.0)

    def test_composite_matches_finite_differences(self, f64, rng):
        w = Param(rng.standard_normal((3, 3)), name="w")
        x = wrap_input(rng.standard_normal((4, 3)))

        def build():
            h = T.gelu(T.matmul(x.value, w.value))
            s = T.softmax(h, axis=-1)
            return T.sqrt(T.sum_all(T.mul(s, h)))

        gradient_check(build, [w, x], rel_tol=1e-5, eps=1e-6, samples=9)


class TestOpGradients:
    """Central finite differences for each differentiable op at 64-bit."""

    def test_elementwise_and_reductions(self, f64, rng):
        a = wrap_input(rng.standard_normal((3, 4)) + 2.0, "a")
        b = wrap_input(rng.standard_normal((3, 4)) + 3.0, "b")
        s = wrap_input(np.array(0.7), "s")

        def build():
            z = T.div(T.mul(a.value, b.value), T.add(s.value, Tensor(np.full((3, 4), 2.0))))
            z = T.sub(z, T.neg(a.value))
            return T.sum_all(T.sqrt(T.add(T.mul(z, z), 1.0)))

        gradient_check(build, [a, b, s], rel_tol=1e-5, samples=8)

    def test_activations(self, f64, rng):
        x = wrap_input(rng.standard_normal((5, 3)), "x")

        def build():
            z = T.add(T.gelu(x.value), T.sigmoid(x.value))
            z = T.add(z, T.softplus(x.value))
            return T.sum_all(T.mul(z, T.softmax(x.value, axis=-1)))

        gradient_check(build, [x], rel_tol=1e-5, samples=10)

    def test_layer_norm(self, f64, rng):
        x = wrap_input(rng.standard_normal((4, 4, 3)), "x")
        g = Param(0.5 + rng.random(3), name="gamma")
        b = Param(rng.standard_normal(3), name="beta")

        def build():
            return T.sum_all(T.mul(T.layer_norm(x.value, g.value, b.value),
                                   Tensor(np.arange(48.0).reshape(4, 4, 3))))

        gradient_check(build, [x, g, b], rel_tol=1e-5, samples=8)

    def test_matmul_bmm(self, f64, rng):
        a = wrap_input(rng.standard_normal((4, 3)), "a")
        b = wrap_input(rng.standard_normal((3, 2)), "b")
        c = wrap_input(rng.standard_normal((2, 4, 3)), "c")
        d = wrap_input(rng.standard_normal((2, 3, 2)), "d")

        def build():
            m = T.matmul(a.value, b.value)
            n = T.bmm(c.value, d.value)
            n2 = T.bmm(c.value, b.value)
            return T.add(T.sum_all(T.mul(m, m)),
                         T.add(T.sum_all(T.mul(n, n)), T.sum_all(n2)))

        gradient_check(build, [a, b, c, d], rel_tol=1e-5, samples=6)

    def test_layout_ops(self, f64, rng):
        x = wrap_input(rng.standard_normal((4, 6, 2)), "x")
        p = wrap_input(rng.standard_normal((2, 3, 3)), "p")

        def build():
            t = T.transpose(T.reshape(x.value, (2, 2, 6, 2)), (1, 0, 2, 3))
            t = T.reshape(t, (4, 6, 2))
            cat = T.concat([t, x.value], axis=2)
            tiled = T.tile_batch(p.value, 3)
            return T.add(T.sum_all(T.mul(cat, cat)), T.sum_all(T.mul(tiled, tiled)))

        gradient_check(build, [x, p], rel_tol=1e-5, samples=8)

    def test_conv_ops(self, f64, rng):
        x = wrap_input(rng.standard_normal((4, 4, 2)), "x")
        k1 = Param(rng.standard_normal((3, 3, 2, 3)), name="k1")
        b1 = Param(rng.standard_normal(3), name="b1")
        kd = Param(rng.standard_normal((3, 3, 1, 2)), name="kd")
        ks = Param(rng.standard_normal((2, 2, 2, 4)), name="ks")
        kt = Param(rng.standard_normal((2, 2, 2, 3)), name="kt")

        def build():
            c1 = T.conv2d(x.value, k1.value, bias=b1.value, padding="same")
            c2 = T.conv2d(x.value, kd.value, groups=2, padding="same")
            c3 = T.conv2d(x.value, ks.value, padding="valid", stride=2)
            c4 = T.conv2d_transpose(x.value, kt.value, stride=2)
            return T.add(T.add(T.sum_all(T.mul(c1, c1)), T.sum_all(T.mul(c2, c2))),
                         T.add(T.sum_all(T.mul(c3, c3)), T.sum_all(T.mul(c4, c4))))

        gradient_check(build, [x, k1, b1, kd, ks, kt], rel_tol=1e-5, samples=6)

    def test_misc_ops(self, f64, rng):
        x = wrap_input(rng.standard_normal((4, 4, 3)), "x")
        s = wrap_input(rng.standard_normal((4, 4)), "s")
        b = Param(rng.standard_normal(3), name="bias")
        c = Param(0.5 + rng.random(3), name="gains")

        def build():
            z = T.pixel_scale(x.value, s.value)
            z = T.add_bias(z, b.value)
            z = T.channel_scale(z, c.value)
            v = T.spatial_mean(z)
            picked = T.take_scalar(v, 1)
            return T.add(T.sum_all(T.mul(v, v)), T.mul(picked, picked))

        gradient_check(build, [x, s, b, c], rel_tol=1e-5, samples=8)


class TestTape:
    def test_topological_order(self, rng):
        p = Param(rng.standard_normal((3, 3)))
        with Tape() as tape:
            h = T.matmul(p.value, p.value)
            T.sum_all(T.gelu(h))
        produced_at = {}
        for i, node in enumerate(tape.nodes):
            for pid in node.parent_ids:
                if pid in produced_at:
                    assert produced_at[pid] < i
            produced_at[node.out_id] = i

    def test_backward_visits_each_node_once(self, rng):
        p = Param(rng.standard_normal(4), name="p")
        calls = []
        with Tape() as tape:
            a = T.mul(p.value, p.value)
            b = T.add(a, a)  # diamond: a consumed twice
            out = T.sum_all(b)
            for node in tape.nodes:
                orig = node.backward_fn

                def counted(g, orig=orig, nid=id(node)):
                    calls.append(nid)
                    return orig(g)

                node.backward_fn = counted
            tape.backward(out, [p])
        assert len(calls) == len(set(calls)) == len(tape.nodes)
        assert np.allclose(p.grad, 4 * p.value.data)

    def test_no_nesting(self):
        with Tape():
            with pytest.raises(RuntimeError):
                with Tape():
                    pass

    def test_forward_determinism(self):
        def run():
            rng = np.random.default_rng(7)
            x = Tensor(rng.standard_normal((6, 6, 4)).astype(np.float32))
            k = Tensor(rng.standard_normal((3, 3, 4, 4)).astype(np.float32))
            return T.softmax(T.conv2d(x, k), axis=-1).data

        assert np.array_equal(run(), run())


class TestAdam:
    def test_zero_grad_fixed_point(self):
        p = Param(np.array([1.0, -2.0]))
        opt = Adam([p], lr=0.1)
        before = p.value.data.copy()
        for _ in range(5):
            opt.step()
        assert np.array_equal(p.value.data, before)

    def test_one_step_closed_form(self):
        g = np.array([0.3, -0.7])
        p = Param(np.zeros(2))
        opt = Adam([p], lr=0.01, eps=1e-8)
        p.grad[...] = g
        opt.step()
        # with zero state and bias correction: update = lr * g / (|g| + eps)
        expect = -0.01 * g / (np.abs(g) + 1e-8)
        assert np.allclose(p.value.data, expect, atol=1e-9)

    def test_minimizes_quadratic(self):
        p = Param(np.array([1.0]))
        opt = Adam([p], lr=0.1)
        for _ in range(200):
            opt.zero_grad()
            p.grad[...] = 2.0 * p.value.data
            opt.step()
        assert abs(p.value.data[0]) < 1e-2


class TestCosineLr:
    def test_endpoints_and_midpoint(self):
        assert cosine_lr(0, 100, 4e-4) == pytest.approx(4e-4)
        assert cosine_lr(100, 100, 4e-4) == pytest.approx(0.0, abs=1e-12)
        assert cosine_lr(50, 100, 4e-4) == pytest.approx(2e-4)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            cosine_lr(101, 100, 1e-3)


class TestDtypeSwitch:
    def test_float32_default_and_float64_context(self):
        assert Tensor([1.0]).dtype == np.float32
        with T.using_dtype(np.float64):
            assert Tensor([1.0]).dtype == np.float64
        assert Tensor([1.0]).dtype == np.float32

    def test_scalar_broadcast_only(self):
        with pytest.raises(ShapeError):
            T.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))
