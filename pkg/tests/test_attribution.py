"""The six attribution methods, checked against finite differences and
closed-form special cases."""

import numpy as np
import pytest

from selectivity.attribution import (
    SmoothGradConfig,
    channel_reduce,
    gbp_x_image,
    grad_cam,
    guided_backprop,
    input_gradient,
    score_cam,
    smoothgrad_gbp,
    vanilla_gradient,
)
from selectivity.engine import GateMode, finite_difference_gradient
from selectivity.errors import GraphError
from selectivity.grids import bilinear_resize, minmax_normalize
from selectivity.layers import LayerKind
from selectivity.maps import MapKind

from conftest import build_graph, layer


def _gap_linear_model(conv_bias=0.0, fc_scale=1.0, seed=13):
    """conv -> relu -> gap -> flatten -> fc(2 classes) on 1x6x6 input."""
    rng = np.random.default_rng(seed)
    layers = (
        layer("conv", LayerKind.CONV2D, kernel=(3, 3), stride=(1, 1), padding=(1, 1),
              weights={"weight": "conv.weight", "bias": "conv.bias"}),
        layer("relu", LayerKind.RELU),
        layer("gap", LayerKind.GLOBAL_AVG_POOL),
        layer("flatten", LayerKind.FLATTEN),
        layer("fc", LayerKind.LINEAR, weights={"weight": "fc.weight"}),
    )
    params = {
        "conv": {"weight": rng.standard_normal((4, 1, 3, 3)) * 0.5,
                 "bias": np.full(4, conv_bias)},
        "fc": {"weight": rng.standard_normal((2, 4)) * fc_scale},
    }
    return build_graph(layers, params, (1, 6, 6)), params


# ---------------------------------------------------------------------------
# channel_reduce
# ---------------------------------------------------------------------------

def test_channel_reduce_mean_abs_then_normalize():
    raw = np.stack([np.array([[1.0, -3.0]]), np.array([[-1.0, 1.0]])])
    m = channel_reduce(raw)  # mean|.| = [[1, 2]] -> [[0, 1]]
    np.testing.assert_allclose(m.grid, [[0.0, 1.0]])
    assert m.kind is MapKind.VANILLA_GRAD


def test_channel_reduce_rejects_2d():
    with pytest.raises(ValueError):
        channel_reduce(np.zeros((4, 4)))


# ---------------------------------------------------------------------------
# gradients against finite differences
# ---------------------------------------------------------------------------

def test_input_gradient_matches_fd_of_class_logit(tiny_conv_model, rng):
    x = rng.standard_normal((1, 8, 8))
    for c in (0, 1):
        g = input_gradient(tiny_conv_model, x, c)

        def logit_c(v):
            logits, _ = tiny_conv_model.predict(v)
            return float(logits[c])

        fd = finite_difference_gradient(logit_c, x)
        assert np.abs(g - fd).max() < 1e-6


def test_softmax_is_not_in_the_backward_path(tiny_conv_model, rng):
    # attribution differentiates the raw logit: seeding past the softmax
    # cannot reproduce the probability gradient, which is strictly smaller
    x = rng.standard_normal((1, 8, 8))
    g = input_gradient(tiny_conv_model, x, 0)

    def prob_0(v):
        _, probs = tiny_conv_model.predict(v)
        return float(probs[0])

    fd_prob = finite_difference_gradient(prob_0, x)
    assert np.abs(g - fd_prob).max() > 1e-4


def test_vanilla_map_equals_reduced_fd_gradient(tiny_conv_model, rng):
    x = rng.standard_normal((1, 8, 8))
    m = vanilla_gradient(tiny_conv_model, x, class_index=1, image_id="img")

    def logit(v):
        return float(tiny_conv_model.predict(v)[0][1])

    fd = finite_difference_gradient(logit, x)
    expected, _ = minmax_normalize(np.abs(fd).mean(axis=0))
    np.testing.assert_allclose(m.grid, expected, atol=1e-5)
    assert m.image_id == "img"
    assert m.shape == (8, 8)


def test_top1_class_is_the_default(tiny_conv_model, rng):
    x = rng.standard_normal((1, 8, 8))
    logits, _ = tiny_conv_model.predict(x)
    top = int(np.argmax(logits))
    auto = vanilla_gradient(tiny_conv_model, x)
    explicit = vanilla_gradient(tiny_conv_model, x, class_index=top)
    np.testing.assert_array_equal(auto.grid, explicit.grid)


def test_class_index_out_of_range(tiny_conv_model, rng):
    with pytest.raises(IndexError):
        vanilla_gradient(tiny_conv_model, rng.standard_normal((1, 8, 8)), class_index=7)


# ---------------------------------------------------------------------------
# guided backprop and its products
# ---------------------------------------------------------------------------

def test_guided_uses_the_guided_gate(tiny_conv_model, rng):
    x = rng.standard_normal((1, 8, 8))
    g_guided = input_gradient(tiny_conv_model, x, 0, GateMode.GUIDED_RELU)
    g_std = input_gradient(tiny_conv_model, x, 0, GateMode.STANDARD)
    assert np.abs(g_guided - g_std).max() > 1e-9
    m = guided_backprop(tiny_conv_model, x, class_index=0)
    expected, _ = minmax_normalize(np.abs(g_guided).mean(axis=0))
    np.testing.assert_allclose(m.grid, expected, atol=1e-12)
    assert m.kind is MapKind.GBP


def test_gbp_x_image_multiplies_by_normalized_input(tiny_conv_model, rng):
    x = rng.standard_normal((1, 8, 8))
    grad = input_gradient(tiny_conv_model, x, 0, GateMode.GUIDED_RELU)
    norm_x = (x - x.min()) / (x.max() - x.min())
    expected, _ = minmax_normalize(np.abs(grad * norm_x).mean(axis=0))
    m = gbp_x_image(tiny_conv_model, x, class_index=0)
    np.testing.assert_allclose(m.grid, expected, atol=1e-12)
    assert m.kind is MapKind.GBP_X_IMAGE


def test_gbp_x_image_constant_input_is_degenerate(tiny_conv_model):
    m = gbp_x_image(tiny_conv_model, np.full((1, 8, 8), 0.3), class_index=0)
    assert m.degenerate
    np.testing.assert_array_equal(m.grid, 0.0)


# ---------------------------------------------------------------------------
# SmoothGrad over guided backprop
# ---------------------------------------------------------------------------

def test_smoothgrad_zero_noise_equals_gbp(tiny_conv_model, rng):
    x = rng.standard_normal((1, 8, 8))
    cfg = SmoothGradConfig(sample_count=5, noise_level=0.0)
    sg = smoothgrad_gbp(tiny_conv_model, x, class_index=0, cfg=cfg)
    gbp = guided_backprop(tiny_conv_model, x, class_index=0)
    np.testing.assert_allclose(sg.grid, gbp.grid, atol=1e-12)
    assert sg.kind is MapKind.SGBP


def test_smoothgrad_is_deterministic_per_seed(tiny_conv_model, rng):
    x = rng.standard_normal((1, 8, 8))
    cfg = SmoothGradConfig(sample_count=4, noise_level=0.1, rng_seed=5)
    a = smoothgrad_gbp(tiny_conv_model, x, class_index=0, cfg=cfg)
    b = smoothgrad_gbp(tiny_conv_model, x, class_index=0, cfg=cfg)
    np.testing.assert_array_equal(a.grid, b.grid)
    other = smoothgrad_gbp(
        tiny_conv_model, x, class_index=0,
        cfg=SmoothGradConfig(sample_count=4, noise_level=0.1, rng_seed=6),
    )
    assert np.abs(a.grid - other.grid).max() > 0.0


def test_smoothgrad_variance_shrinks_with_sample_count(tiny_conv_model, rng):
    # Monte-Carlo averaging: across seeds, maps at n=16 scatter about half as
    # much as maps at n=4
    x = rng.standard_normal((1, 8, 8))

    def spread(n):
        grids = [
            smoothgrad_gbp(
                tiny_conv_model, x, class_index=0,
                cfg=SmoothGradConfig(sample_count=n, noise_level=0.15, rng_seed=s),
            ).grid
            for s in range(12)
        ]
        return np.std(np.stack(grids), axis=0).mean()

    s4, s16 = spread(4), spread(16)
    assert s16 < s4
    assert 1.3 < s4 / s16 < 3.5


def test_smoothgrad_config_validation():
    with pytest.raises(ValueError):
        SmoothGradConfig(sample_count=0)
    with pytest.raises(ValueError):
        SmoothGradConfig(noise_level=1.0)


# ---------------------------------------------------------------------------
# Grad-CAM
# ---------------------------------------------------------------------------

def test_grad_cam_closed_form_on_gap_head(rng):
    # with everything post-conv positive, d logit_c/d act_k = w[c,k]/(H*W),
    # so the CAM is relu(sum_k w[c,k] * act_k) up to the constant 1/(H*W)
    model, params = _gap_linear_model(conv_bias=5.0)
    x = rng.uniform(0, 1, (1, 6, 6))
    tape = model.record_tape(x)
    acts = tape.value_at("conv")
    assert acts.min() > 0  # bias pushed everything positive
    w = params["fc"]["weight"]
    for c in (0, 1):
        cam = np.tensordot(w[c], acts, axes=1)
        cam = np.where(cam > 0, cam, 0.0)
        expected, _ = minmax_normalize(bilinear_resize(cam, 6, 6))
        m = grad_cam(model, x, class_index=c)
        np.testing.assert_allclose(m.grid, expected, atol=1e-10)
        assert m.kind is MapKind.GRAD_CAM


def test_grad_cam_invariant_to_positive_logit_scaling(rng):
    m1, _ = _gap_linear_model(conv_bias=1.0, fc_scale=1.0)
    m10, _ = _gap_linear_model(conv_bias=1.0, fc_scale=10.0)
    x = rng.uniform(0, 1, (1, 6, 6))
    a = grad_cam(m1, x, class_index=0)
    b = grad_cam(m10, x, class_index=0)
    np.testing.assert_allclose(a.grid, b.grid, atol=1e-10)


def test_grad_cam_uses_named_layer(tiny_conv_model, rng):
    x = rng.standard_normal((1, 8, 8))
    default = grad_cam(tiny_conv_model, x, class_index=0)
    explicit = grad_cam(tiny_conv_model, x, class_index=0, layer_name="conv2")
    np.testing.assert_array_equal(default.grid, explicit.grid)
    early = grad_cam(tiny_conv_model, x, class_index=0, layer_name="conv1")
    assert np.abs(early.grid - default.grid).max() > 1e-9


def test_cam_rejects_non_conv_layer(tiny_conv_model, rng):
    with pytest.raises(GraphError, match="not Conv2d"):
        grad_cam(tiny_conv_model, rng.standard_normal((1, 8, 8)),
                 class_index=0, layer_name="relu1")
    with pytest.raises(GraphError, match="no layer named"):
        grad_cam(tiny_conv_model, rng.standard_normal((1, 8, 8)),
                 class_index=0, layer_name="ghost")


def test_cam_requires_some_conv_layer(rng):
    layers = (
        layer("fl", LayerKind.FLATTEN),
        layer("fc", LayerKind.LINEAR, weights={"weight": "fc.w"}),
    )
    params = {"fc": {"weight": rng.standard_normal((2, 16))}}
    model = build_graph(layers, params, (1, 4, 4))
    with pytest.raises(GraphError, match="no convolutional layer"):
        grad_cam(model, rng.standard_normal((1, 4, 4)), class_index=0)


# ---------------------------------------------------------------------------
# Score-CAM
# ---------------------------------------------------------------------------

def test_score_cam_matches_naive_reimplementation(tiny_conv_model, rng):
    x = rng.standard_normal((1, 8, 8))
    name = tiny_conv_model.target_layer
    tape = tiny_conv_model.record_tape(x)
    acts = tape.value_at(name)

    cam = np.zeros(acts.shape[1:])
    for k in range(acts.shape[0]):
        a = acts[k]
        if a.max() > a.min():
            mask = (a - a.min()) / (a.max() - a.min())
        else:
            mask = np.zeros_like(a)
        up = bilinear_resize(mask, 8, 8)
        _, probs = tiny_conv_model.predict(x * up[None])
        cam += float(probs[0]) * a
    cam = np.where(cam > 0, cam, 0.0)
    expected, _ = minmax_normalize(bilinear_resize(cam, 8, 8))

    m = score_cam(tiny_conv_model, x, class_index=0)
    np.testing.assert_allclose(m.grid, expected, atol=1e-12)
    assert m.kind is MapKind.SCORE_CAM


def test_score_cam_is_deterministic(tiny_conv_model, rng):
    x = rng.standard_normal((1, 8, 8))
    a = score_cam(tiny_conv_model, x, class_index=1)
    b = score_cam(tiny_conv_model, x, class_index=1)
    np.testing.assert_array_equal(a.grid, b.grid)


# ---------------------------------------------------------------------------
# shared output contract
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("method", [
    vanilla_gradient, guided_backprop, gbp_x_image, smoothgrad_gbp, grad_cam, score_cam,
])
def test_every_method_outputs_normalized_input_sized_map(method, tiny_conv_model, rng):
    x = rng.standard_normal((1, 8, 8))
    m = method(tiny_conv_model, x, class_index=0)
    assert m.shape == (8, 8)
    assert m.grid.min() >= 0.0
    assert m.grid.max() <= 1.0
    if not m.degenerate:
        assert m.grid.max() == pytest.approx(1.0)
