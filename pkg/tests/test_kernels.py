"""Conv kernel tests: hand-worked values, a brute-force oracle, and
agreement between the compiled and numpy backends."""

import numpy as np
import pytest

from ecotrain import kernels
from ecotrain.errors import ShapeError
from ecotrain.kernels import reference


def brute_conv(x, w, stride, pad):
    """Sliding dot products written as plain loops; the oracle."""
    n, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    xp = np.zeros((n, cin, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad : pad + h, pad : pad + wd] = x
    y = np.zeros((n, cout, ho, wo))
    for ni in range(n):
        for co in range(cout):
            for oh in range(ho):
                for ow in range(wo):
                    patch = xp[ni, :, oh * stride : oh * stride + k,
                               ow * stride : ow * stride + k]
                    y[ni, co, oh, ow] = np.sum(patch * w[co])
    return y


def test_scalar_conv_is_product():
    x = np.full((1, 1, 1, 1), 2.0)
    w = np.full((1, 1, 1, 1), 3.0)
    assert kernels.conv2d_forward(x, w, 1, 0)[0, 0, 0, 0] == 6.0


def test_zero_input_gives_zero_output(rng):
    x = np.zeros((2, 3, 5, 5))
    w = rng.normal(size=(4, 3, 3, 3))
    assert not kernels.conv2d_forward(x, w, 1, 1).any()


def test_hand_computed_3x3_example():
    x = np.arange(1.0, 10.0).reshape(1, 1, 3, 3)
    w = np.array([1.0, 0.0, 0.0, 1.0]).reshape(1, 1, 2, 2)
    y = kernels.conv2d_forward(x, w, 1, 0)
    assert np.array_equal(y.ravel(), [6.0, 8.0, 12.0, 14.0])


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0), (3, 2)])
def test_forward_matches_brute_force(rng, stride, pad):
    x = rng.normal(size=(2, 3, 9, 9))
    w = rng.normal(size=(4, 3, 3, 3))
    got = kernels.conv2d_forward(x, w, stride, pad)
    want = brute_conv(x, w, stride, pad)
    assert np.allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
def test_backward_matches_finite_differences(rng, stride, pad):
    x = rng.normal(size=(1, 2, 6, 6))
    w = rng.normal(size=(3, 2, 3, 3))
    probe = rng.normal(size=kernels.conv2d_forward(x, w, stride, pad).shape)
    eps = 1e-6

    def loss(xv, wv):
        return float(np.sum(kernels.conv2d_forward(xv, wv, stride, pad) * probe))

    gx = kernels.conv2d_backward_input(w, probe, 6, 6, stride, pad)
    gw = kernels.conv2d_backward_weight(x, probe, 3, stride, pad)
    for arr, grad in [(x, gx), (w, gw)]:
        flat = arr.reshape(-1)
        idx = rng.choice(flat.size, 12, replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + eps
            up = loss(x, w)
            flat[i] = keep - eps
            down = loss(x, w)
            flat[i] = keep
            cd = (up - down) / (2 * eps)
            assert abs(grad.reshape(-1)[i] - cd) < 1e-5 * max(1.0, abs(cd))


def test_backends_agree(rng):
    backends = kernels.available_backends()
    if "compiled" not in backends:
        pytest.skip("compiled extension not built")
    from ecotrain.kernels import _conv

    for stride, pad in [(1, 0), (1, 1), (2, 1), (2, 0)]:
        x = rng.normal(size=(2, 3, 9, 9))
        w = rng.normal(size=(4, 3, 3, 3))
        y_np = reference.conv2d_forward(x, w, stride, pad)
        y_cy = _conv.conv2d_forward(x, w, stride, pad)
        assert np.allclose(y_np, y_cy, atol=1e-12)
        gy = rng.normal(size=y_np.shape)
        assert np.allclose(
            reference.conv2d_backward_input(w, gy, 9, 9, stride, pad),
            _conv.conv2d_backward_input(w, gy, 9, 9, stride, pad), atol=1e-12)
        assert np.allclose(
            reference.conv2d_backward_weight(x, gy, 3, stride, pad),
            _conv.conv2d_backward_weight(x, gy, 3, stride, pad), atol=1e-12)


def test_shape_errors_name_the_axis(rng):
    x = rng.normal(size=(1, 3, 5, 5))
    w = rng.normal(size=(2, 4, 3, 3))
    with pytest.raises(ShapeError, match="channel axis"):
        kernels.conv2d_forward(x, w, 1, 1)
    with pytest.raises(ShapeError, match="stride"):
        kernels.conv2d_forward(x, rng.normal(size=(2, 3, 3, 3)), 0, 1)
    with pytest.raises(ShapeError, match="spatial"):
        kernels.conv2d_forward(rng.normal(size=(1, 3, 2, 2)),
                               rng.normal(size=(2, 3, 3, 3)), 1, 0)


def test_out_size_rule():
    # floor((H + 2*pad - K) / stride) + 1 over a grid
    for h in range(3, 12):
        for k in (1, 3, 5):
            for s in (1, 2, 3):
                for p in (0, 1, 2):
                    if h + 2 * p < k:
                        continue
                    n = 0
                    pos = 0
                    while pos + k <= h + 2 * p:
                        n += 1
                        pos += s
                    assert kernels.conv_out_size(h, k, s, p) == n
