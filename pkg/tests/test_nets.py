import numpy as np
import pytest

from monocurve.errors import TapeMismatch
from monocurve.nets import (
    IcnnNet,
    forward_batch,
    init_icnn,
    init_plain,
    net_forward,
    net_from_record,
    net_input_curvature,
    net_input_grad,
    net_param_grads,
    net_to_record,
    project_nonneg,
)


def make_nets(seed=0, depth=4, width=16):
    rng = np.random.default_rng(seed)
    return init_icnn(rng, depth, width), init_plain(rng, depth, width)


def combined_loss(net, xs, cy, cdy):
    # scalar probe loss mixing the value and the input-derivative outputs
    y, dy, _, _ = forward_batch(net, xs, order=1)
    return float(cy @ y + cdy @ dy)


def fd_param_grad(net, name, idx, xs, cy, cdy, h=1e-5):
    arr = dict(net.param_arrays())[name]
    flat = arr.reshape(-1)
    keep = flat[idx]
    flat[idx] = keep + h
    up = combined_loss(net, xs, cy, cdy)
    flat[idx] = keep - h
    dn = combined_loss(net, xs, cy, cdy)
    flat[idx] = keep
    return (up - dn) / (2 * h)


class TestForward:
    def test_zero_params_give_zero(self):
        icnn, plain = make_nets()
        for net in (icnn, plain):
            for _, arr in net.param_arrays():
                arr[...] = 0.0
            assert net_forward(net, 1.7) == 0.0
            assert net_forward(net, -3.0) == 0.0
            assert net_input_grad(net, 0.5) == 0.0

    def test_single_unit_identity_path(self):
        # one active unit per layer with unit weights: response is x for x > 0
        net, _ = make_nets(width=8)
        for _, arr in net.param_arrays():
            arr[...] = 0.0
        net.w_in[0] = 1.0
        for l in range(net.depth - 1):
            net.a_hidden[l, 0, 0] = 1.0
        net.a_out[0] = 1.0
        for x in (0.3, 0.7, 2.5):
            assert net_forward(net, x) == pytest.approx(x)
            assert net_input_grad(net, x) == pytest.approx(1.0)
        # negative side: nested ELU chain, hand value for one composition
        v = x = -1.0
        for _ in range(net.depth):
            v = np.expm1(v)
        assert net_forward(net, x) == pytest.approx(v)

    def test_determinism(self):
        rng1 = np.random.default_rng(42)
        rng2 = np.random.default_rng(42)
        a = init_icnn(rng1)
        b = init_icnn(rng2)
        xs = np.linspace(-2, 2, 17)
        ya, _, _, _ = forward_batch(a, xs)
        yb, _, _, _ = forward_batch(b, xs)
        assert np.array_equal(ya, yb)

    def test_input_grad_matches_fd(self):
        icnn, plain = make_nets(seed=3)
        for net in (icnn, plain):
            for x in (-1.3, 0.37, 2.1):
                h = 1e-5
                fd = (net_forward(net, x + h) - net_forward(net, x - h)) / (2 * h)
                assert net_input_grad(net, x) == pytest.approx(fd, rel=1e-4)

    def test_input_curvature_matches_fd(self):
        icnn, plain = make_nets(seed=4)
        for net in (icnn, plain):
            for x in (-0.9, 0.41, 1.7):
                h = 1e-4
                fd = (net_input_grad(net, x + h) - net_input_grad(net, x - h)) / (2 * h)
                assert net_input_curvature(net, x) == pytest.approx(fd, rel=1e-3, abs=1e-7)


class TestParamGrads:
    def test_zero_upstream_gives_zero_grads(self):
        net, _ = make_nets(seed=5)
        xs = np.linspace(-1, 1, 7)
        _, _, _, tape = forward_batch(net, xs, order=1, want_cache=True)
        grads, _ = net_param_grads(net, tape, np.zeros(7), np.zeros(7))
        for g in grads.values():
            assert np.all(g == 0.0)

    def test_one_unit_chain_rule(self):
        # quadratic value loss on one sample through a single linear path
        net, _ = make_nets(width=4)
        for _, arr in net.param_arrays():
            arr[...] = 0.0
        net.w_in[0] = 1.0
        for l in range(net.depth - 1):
            net.a_hidden[l, 0, 0] = 1.0
        net.a_out[0] = 1.0
        x = np.array([2.0])
        y, _, _, tape = forward_batch(net, x, order=1, want_cache=True)
        assert y[0] == pytest.approx(2.0)
        # loss = y^2/2 so gy = y; d loss / d a_out[0] = y * z4 = 2 * 2
        grads, _ = net_param_grads(net, tape, gy=y)
        assert grads["a_out"][0] == pytest.approx(4.0)
        assert grads["b_out"] == pytest.approx(2.0)
        # d loss / d w_in[0] = y * (chain of unit weights) * x = 2 * 1 * 2
        assert grads["w_in"][0] == pytest.approx(4.0)

    @pytest.mark.parametrize("which", ["icnn", "plain"])
    def test_matches_finite_differences(self, which):
        rng = np.random.default_rng(11)
        icnn, plain = make_nets(seed=11, width=12)
        net = icnn if which == "icnn" else plain
        xs = rng.uniform(-2, 2, 5)
        cy = rng.standard_normal(5)
        cdy = rng.standard_normal(5)
        _, _, _, tape = forward_batch(net, xs, order=1, want_cache=True)
        grads, gx = net_param_grads(net, tape, cy, cdy, want_input_grad=True)
        for name, arr in net.param_arrays():
            flat_g = grads[name].reshape(-1)
            take = rng.choice(arr.size, size=min(10, arr.size), replace=False)
            for idx in take:
                fd = fd_param_grad(net, name, idx, xs, cy, cdy)
                assert flat_g[idx] == pytest.approx(fd, rel=1e-4, abs=1e-8), (name, idx)
        # input gradient of the same probe loss
        h = 1e-6
        for m in range(len(xs)):
            bumped = xs.copy()
            bumped[m] = xs[m] + h
            up = combined_loss(net, bumped, cy, cdy)
            bumped[m] = xs[m] - h
            dn = combined_loss(net, bumped, cy, cdy)
            assert gx[m] == pytest.approx((up - dn) / (2 * h), rel=1e-3, abs=1e-6)

    def test_tape_mismatch(self):
        a, _ = make_nets(seed=1)
        b, _ = make_nets(seed=2)
        xs = np.linspace(-1, 1, 5)
        _, _, _, tape = forward_batch(a, xs, order=1, want_cache=True)
        with pytest.raises(TapeMismatch):
            net_param_grads(b, tape, np.zeros(5))
        with pytest.raises(TapeMismatch):
            net_param_grads(a, tape, np.zeros(6))
        with pytest.raises(TapeMismatch):
            net_param_grads(a, None, np.zeros(5))


class TestConvexity:
    def test_projection_clamps(self):
        net, _ = make_nets(seed=8)
        net.a_hidden[0, 0, 0] = -0.3
        net.a_hidden[1, 2, 3] = 0.7
        net.a_out[1] = -2.0
        project_nonneg(net)
        assert net.a_hidden[0, 0, 0] == 0.0
        assert net.a_hidden[1, 2, 3] == 0.7
        assert net.a_out[1] == 0.0

    def test_midpoint_convexity_after_projection(self):
        rng = np.random.default_rng(13)
        for trial in range(4):
            net = init_icnn(np.random.default_rng(100 + trial), width=24)
            # knock the constraint weights around, then project
            net.a_hidden += rng.normal(0, 0.2, net.a_hidden.shape)
            net.a_out += rng.normal(0, 0.2, net.a_out.shape)
            project_nonneg(net)
            x = rng.uniform(-4, 4, 1000)
            y = rng.uniform(-4, 4, 1000)
            fx, _, _, _ = forward_batch(net, x)
            fy, _, _, _ = forward_batch(net, y)
            fm, _, _, _ = forward_batch(net, 0.5 * (x + y))
            assert np.all(fm <= 0.5 * (fx + fy) + 1e-7)

    def test_input_grad_nondecreasing_for_icnn(self):
        net = init_icnn(np.random.default_rng(77))
        xs = np.linspace(-5, 5, 301)
        _, dy, _, _ = forward_batch(net, xs, order=1)
        assert np.all(np.diff(dy) >= -1e-6)

    def test_trained_quadratic_fit_has_linear_gradient(self):
        # small pre-training fixture: shape the derivative toward the base
        # quadratic's (the identity), then probe the gradient on [-2, 2]
        net = init_icnn(np.random.default_rng(29), width=16)
        xs = np.linspace(-3.0, 3.0, 256)
        probe = np.linspace(-2, 2, 41)
        state = {}
        lr, b1, b2, eps = 0.03, 0.9, 0.999, 1e-8
        err = np.inf
        for t in range(1, 2001):
            y, dy, _, tape = forward_batch(net, xs, order=1, want_cache=True)
            gdy = 2.0 * (dy - xs) / len(xs)
            grads, _ = net_param_grads(net, tape, np.zeros_like(y), gdy)
            for name, arr in net.param_arrays():
                g = grads[name]
                m, v = state.get(name, (np.zeros_like(arr), np.zeros_like(arr)))
                m = b1 * m + (1 - b1) * g
                v = b2 * v + (1 - b2) * g * g
                state[name] = (m, v)
                arr -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
            project_nonneg(net)
            if t % 250 == 0:
                _, d, _, _ = forward_batch(net, probe, order=1)
                err = np.max(np.abs(d - probe))
                if err < 0.045:
                    break
        assert err < 0.05


class TestSerialization:
    def test_roundtrip_bits(self):
        for net in make_nets(seed=17):
            rec = net_to_record(net)
            back = net_from_record(rec)
            assert type(back) is type(net)
            xs = np.linspace(-3, 3, 23)
            y0, _, _, _ = forward_batch(net, xs)
            y1, _, _, _ = forward_batch(back, xs)
            assert np.array_equal(y0, y1)

    def test_version_check(self):
        net, _ = make_nets()
        rec = net_to_record(net)
        rec["format_version"] = 99
        with pytest.raises(ValueError):
            net_from_record(rec)

    def test_icnn_class(self):
        net, _ = make_nets()
        assert isinstance(net, IcnnNet)
        assert net.has_skip
