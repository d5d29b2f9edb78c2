"""Reference execution semantics for the supported operators.

Every operator here is linear or piecewise-linear except the terminal
Sigmoid.  The same windowing helpers back both the concrete forward pass
and the affine propagation, so piece boundaries land on identical floats.

Forward evaluation is batch-polymorphic: an input whose trailing dims match
the declared signature may carry any leading batch size, which the line
sweep's grid oracles exploit.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeMismatch
from .model_ir import ModelGraph, slice_indices


def _as_f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def sliding_windows(x, kernel, strides, pads, dilations=(1, 1), pad_value=0.0):
    """Extract NCHW pooling/conv windows -> (N, C, OH, OW, kh, kw)."""
    kh, kw = kernel
    sh, sw = strides
    pt, pl, pb, pr = pads
    dh, dw = dilations
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)), constant_values=pad_value)
    span_h = dh * (kh - 1) + 1
    span_w = dw * (kw - 1) + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (span_h, span_w), axis=(2, 3))
    win = win[:, :, ::sh, ::sw, ::dh, ::dw]
    return win


def conv2d(x, w, bias, strides, pads, dilations, group):
    n, c, _, _ = x.shape
    m = w.shape[0]
    kernel = w.shape[2:]
    outs = []
    cg = c // group
    mg = m // group
    for g in range(group):
        xg = x[:, g * cg : (g + 1) * cg]
        wg = w[g * mg : (g + 1) * mg]
        win = sliding_windows(xg, kernel, strides, pads, dilations)
        # (mg, cg, kh, kw) x (n, cg, oh, ow, kh, kw) -> (mg, n, oh, ow)
        og = np.tensordot(wg, win, axes=([1, 2, 3], [1, 4, 5]))
        outs.append(np.moveaxis(og, 0, 1))
    out = outs[0] if group == 1 else np.concatenate(outs, axis=1)
    if bias is not None:
        out = out + bias.reshape(1, m, 1, 1)
    return np.ascontiguousarray(out)


def conv_transpose2d(x, w, bias, strides, pads, output_padding, group):
    n, c, h, wdt = x.shape
    kh, kw = w.shape[2:]
    sh, sw = strides
    pt, pl, pb, pr = pads
    mg = w.shape[1]
    m = mg * group
    full_h = (h - 1) * sh + kh + output_padding[0]
    full_w = (wdt - 1) * sw + kw + output_padding[1]
    out = np.zeros((n, m, full_h, full_w), dtype=np.float64)
    cg = c // group
    for g in range(group):
        xg = x[:, g * cg : (g + 1) * cg]
        wg = w[g * cg : (g + 1) * cg]  # (cg, mg, kh, kw)
        contrib = np.einsum("ncij,cmpq->nmijpq", xg, wg)
        for p in range(kh):
            for q in range(kw):
                out[:, g * mg : (g + 1) * mg, p : p + sh * h : sh, q : q + sw * wdt : sw] += (
                    contrib[:, :, :, :, p, q]
                )
    out = out[:, :, pt : full_h - pb, pl : full_w - pr]
    if bias is not None:
        out = out + bias.reshape(1, m, 1, 1)
    return np.ascontiguousarray(out)


def average_pool(x, kernel, strides, pads, count_include_pad):
    win = sliding_windows(x, kernel, strides, pads)
    sums = win.sum(axis=(4, 5))
    if count_include_pad:
        return sums / (kernel[0] * kernel[1])
    ones = np.ones((1, 1) + x.shape[2:], dtype=np.float64)
    counts = sliding_windows(ones, kernel, strides, pads).sum(axis=(4, 5))
    return sums / counts


def upsample_nearest(x, scales):
    out = x
    for axis, s in enumerate(scales):
        if s != 1:
            out = np.repeat(out, s, axis=axis)
    return out


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _conv_params(node, w_shape):
    kernel = node.attr("kernel_shape", list(w_shape[2:]))
    return (
        [int(k) for k in kernel],
        [int(s) for s in node.attr("strides", [1, 1])],
        [int(p) for p in node.attr("pads", [0, 0, 0, 0])],
        [int(d) for d in node.attr("dilations", [1, 1])],
        int(node.attr("group", 1)),
    )


def eval_node(node, inputs):
    """Concrete semantics of one node; inputs/outputs are float64 arrays."""
    op = node.op_type
    if op == "Conv":
        kernel, strides, pads, dilations, group = _conv_params(node, inputs[1].shape)
        bias = inputs[2] if len(inputs) > 2 else None
        return [conv2d(inputs[0], inputs[1], bias, strides, pads, dilations, group)]
    if op == "ConvTranspose":
        kernel, strides, pads, _, group = _conv_params(node, inputs[1].shape)
        out_pad = [int(p) for p in node.attr("output_padding", [0, 0])]
        bias = inputs[2] if len(inputs) > 2 else None
        return [conv_transpose2d(inputs[0], inputs[1], bias, strides, pads, out_pad, group)]
    if op == "Gemm":
        a, b = inputs[0], inputs[1]
        if node.attr("transA", 0):
            a = a.T
        if node.attr("transB", 0):
            b = b.T
        out = float(node.attr("alpha", 1.0)) * (a @ b)
        if len(inputs) > 2:
            out = out + float(node.attr("beta", 1.0)) * inputs[2]
        return [out]
    if op == "MatMul":
        return [inputs[0] @ inputs[1]]
    if op == "Add":
        return [inputs[0] + inputs[1]]
    if op == "Sub":
        return [inputs[0] - inputs[1]]
    if op == "Neg":
        return [-inputs[0]]
    if op == "MulScalar":
        return [inputs[0] * float(node.attrs["value"])]
    if op == "Relu":
        return [np.where(inputs[0] > 0.0, inputs[0], 0.0)]
    if op == "LeakyRelu":
        alpha = float(node.attr("alpha", 0.01))
        return [np.where(inputs[0] > 0.0, inputs[0], alpha * inputs[0])]
    if op == "Abs":
        return [np.where(inputs[0] > 0.0, inputs[0], -inputs[0])]
    if op == "MaxPool":
        kernel = [int(k) for k in node.attr("kernel_shape")]
        strides = [int(s) for s in node.attr("strides", [1, 1])]
        pads = [int(p) for p in node.attr("pads", [0, 0, 0, 0])]
        win = sliding_windows(inputs[0], kernel, strides, pads, pad_value=-np.inf)
        return [win.max(axis=(4, 5))]
    if op == "AveragePool":
        kernel = [int(k) for k in node.attr("kernel_shape")]
        strides = [int(s) for s in node.attr("strides", [1, 1])]
        pads = [int(p) for p in node.attr("pads", [0, 0, 0, 0])]
        cip = int(node.attr("count_include_pad", 0))
        return [average_pool(inputs[0], kernel, strides, pads, cip)]
    if op == "GlobalAveragePool":
        return [inputs[0].mean(axis=(2, 3), keepdims=True)]
    if op == "BatchNormalization":
        x, scale, b, mean, var = inputs[:5]
        eps = float(node.attr("epsilon", 1e-5))
        g = scale / np.sqrt(var + eps)
        h = b - g * mean
        shape = (1, -1) + (1,) * (x.ndim - 2)
        return [x * g.reshape(shape) + h.reshape(shape)]
    if op == "Flatten":
        axis = int(node.attr("axis", 1))
        if axis < 0:
            axis += inputs[0].ndim
        lead = math.prod(inputs[0].shape[:axis]) if axis else 1
        return [inputs[0].reshape(lead, -1)]
    if op == "Reshape":
        target = [int(d) for d in node.attr("shape")]
        shape = [inputs[0].shape[i] if d == 0 else d for i, d in enumerate(target)]
        return [inputs[0].reshape(shape)]
    if op == "Transpose":
        perm = node.attr("perm", list(range(inputs[0].ndim - 1, -1, -1)))
        return [inputs[0].transpose([int(p) for p in perm])]
    if op == "Concat":
        axis = int(node.attr("axis", 0))
        return [np.concatenate(inputs, axis=axis)]
    if op == "Slice":
        table = slice_indices(node, inputs[0].shape)
        sl = [slice(None)] * inputs[0].ndim
        for ax, (s, e, st) in table.items():
            sl[ax] = slice(s, e, st)
        return [np.ascontiguousarray(inputs[0][tuple(sl)])]
    if op == "UpsampleNearest":
        return [upsample_nearest(inputs[0], [int(s) for s in node.attr("scales")])]
    if op == "Sigmoid":
        return [sigmoid(inputs[0])]
    raise AssertionError(f"unhandled op {op}")  # registry guards this


def _batch_of(declared, actual, name):
    """Validate an input against its signature; returns the batch factor."""
    if tuple(actual) == tuple(declared):
        return 1
    if len(actual) == len(declared) and tuple(actual[1:]) == tuple(declared[1:]):
        return actual[0]
    raise ShapeMismatch(name, f"expected {list(declared)}, got {list(actual)}")


def eval_graph(graph: ModelGraph, inputs):
    """Run a forward pass; returns the full value environment (name -> array).

    Batched evaluation: all inputs may share a common leading batch size that
    replaces the declared leading dim.  Reshape/Flatten/Gemm stay consistent
    because batch replaces the declared leading dim uniformly.
    """
    if len(inputs) != len(graph.inputs):
        raise ShapeMismatch("inputs", f"expected {len(graph.inputs)} tensors, got {len(inputs)}")
    env = {}
    batches = set()
    for (name, declared), arr in zip(graph.inputs, inputs):
        arr = _as_f64(arr)
        batches.add(_batch_of(declared, arr.shape, name))
        env[name] = arr
    batches.discard(1)
    if len(batches) > 1:
        raise ShapeMismatch("inputs", f"inconsistent batch sizes {sorted(batches)}")
    batched = batches.pop() if batches else None
    env.update(graph.initializers)
    for node in graph.nodes:
        args = [env[i] for i in node.inputs]
        if batched is not None and node.op_type in ("Reshape", "Flatten"):
            # Declared leading dim is 1; rescale reshape targets to the batch.
            if node.op_type == "Reshape":
                target = [int(d) for d in node.attr("shape")]
                target[0] = batched if target[0] == 1 else target[0]
                node = type(node)(node.name, node.op_type, node.inputs, node.outputs,
                                  {**node.attrs, "shape": target})
        outs = eval_node(node, args)
        for name, arr in zip(node.outputs, outs):
            env[name] = _as_f64(arr)
    return env


def forward(graph: ModelGraph, inputs):
    """Standard forward pass; returns the graph outputs in declared order."""
    env = eval_graph(graph, inputs)
    return [env[name] for name in graph.output_names]
