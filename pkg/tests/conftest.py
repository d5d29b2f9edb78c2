"""Shared model builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from siglass.model_ir import parse_model, tensor_to_json


def make_doc(inputs, outputs, nodes, initializers=None):
    return {
        "ir_version": 1,
        "inputs": [{"name": n, "shape": list(s)} for n, s in inputs],
        "outputs": [{"name": n, "shape": list(s)} for n, s in outputs],
        "initializers": [
            tensor_to_json(arr, name) for name, arr in (initializers or {}).items()
        ],
        "nodes": nodes,
    }


def node(name, op_type, inputs, outputs, **attrs):
    return {
        "name": name,
        "op_type": op_type,
        "inputs": list(inputs),
        "outputs": list(outputs),
        "attrs": attrs,
    }


def conv_relu_conv(seed=0, side=8, channels=3, weight_scale=None, bias_scale=0.1):
    """Conv(3x3) -> Relu -> Conv(3x3) scorer mapping 1xSxS to 1xSxS."""
    rng = np.random.default_rng(seed)
    scale = weight_scale if weight_scale is not None else 1.0 / 3.0
    w1 = rng.normal(0, scale, (channels, 1, 3, 3))
    b1 = rng.normal(0, bias_scale, (channels,))
    w2 = rng.normal(0, scale, (1, channels, 3, 3))
    b2 = rng.normal(0, bias_scale, (1,))
    doc = make_doc(
        [("x", (1, 1, side, side))],
        [("y", (1, 1, side, side))],
        [
            node("c1", "Conv", ["x", "w1", "b1"], ["h1"], kernel_shape=[3, 3], pads=[1, 1, 1, 1]),
            node("r1", "Relu", ["h1"], ["h2"]),
            node("c2", "Conv", ["h2", "w2", "b2"], ["y"], kernel_shape=[3, 3], pads=[1, 1, 1, 1]),
        ],
        {"w1": w1, "b1": b1, "w2": w2, "b2": b2},
    )
    return parse_model(doc)


def random_small_net(seed, side=8):
    """Random scorer with at most 3 piecewise layers and 1xSxS score output.

    Rotates through architecture templates exercising Conv, ConvTranspose,
    MaxPool+Upsample, LeakyRelu, Abs, BatchNorm and skip connections.
    """
    rng = np.random.default_rng(seed)
    template = seed % 4
    ch = int(rng.integers(2, 5))
    init = {}
    nodes = []

    def conv(name, src, dst, cin, cout, k=3):
        w = rng.normal(0, 1.0 / (k * np.sqrt(cin)), (cout, cin, k, k))
        b = rng.normal(0, 0.1, (cout,))
        init[f"{name}_w"] = w
        init[f"{name}_b"] = b
        pad = (k - 1) // 2
        nodes.append(
            node(name, "Conv", [src, f"{name}_w", f"{name}_b"], [dst],
                 kernel_shape=[k, k], pads=[pad] * 4)
        )

    if template == 0:
        conv("c1", "x", "h1", 1, ch)
        nodes.append(node("r1", "Relu", ["h1"], ["h2"]))
        conv("c2", "h2", "y", ch, 1)
    elif template == 1:
        conv("c1", "x", "h1", 1, ch)
        nodes.append(node("r1", "LeakyRelu", ["h1"], ["h2"], alpha=0.1))
        conv("c2", "h2", "h3", ch, ch)
        nodes.append(node("r2", "Relu", ["h3"], ["h4"]))
        conv("c3", "h4", "y", ch, 1)
    elif template == 2:
        conv("c1", "x", "h1", 1, ch)
        nodes.append(node("r1", "Relu", ["h1"], ["h2"]))
        nodes.append(node("p1", "MaxPool", ["h2"], ["h3"], kernel_shape=[2, 2], strides=[2, 2]))
        nodes.append(node("u1", "UpsampleNearest", ["h3"], ["h4"], scales=[1, 1, 2, 2]))
        conv("c2", "h4", "y", ch, 1)
    else:
        conv("c1", "x", "h1", 1, ch)
        nodes.append(node("a1", "Abs", ["h1"], ["h2"]))
        conv("c2", "h2", "h3", ch, 1)
        conv("c3", "x", "h4", 1, 1)
        nodes.append(node("add", "Add", ["h3", "h4"], ["y"]))
    doc = make_doc([("x", (1, 1, side, side))], [("y", (1, 1, side, side))], nodes, init)
    return parse_model(doc)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
