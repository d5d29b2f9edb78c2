"""Exact affine propagation along a one-dimensional input line.

Feeding the line x(z) = a + b*z through the graph yields, for every
activation element, an affine map bias + coeff*z that is exact on the
interval where the network's current piece signature (ReLU branches,
pooling argmaxes, absolute-value signs) stays fixed.  Piecewise nodes
tighten that interval; linear nodes never do.

A PropagationSession memoizes per-node results keyed by node name: a cached
entry stores the node's output coefficients together with the cumulative
interval on which they are valid (its own piece intersected with all
ancestors'), so a query strictly inside that interval can reuse the entry
without touching its ancestors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, ops
from .errors import InternalInconsistency, NonFiniteActivation, ShapeMismatch
from .model_ir import ModelGraph


@dataclass(frozen=True)
class Interval:
    """Closed z-axis interval; endpoints may be infinite."""

    lo: float
    hi: float

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi) or self.lo > self.hi:
            raise InternalInconsistency(f"bad interval [{self.lo}, {self.hi}]")

    def contains(self, z, strict=False):
        if strict:
            return self.lo < z < self.hi
        return self.lo <= z <= self.hi

    def intersect(self, other):
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if lo > hi:
            raise InternalInconsistency(
                f"empty intersection of [{self.lo}, {self.hi}] and [{other.lo}, {other.hi}]"
            )
        return Interval(lo, hi)


FULL_LINE = Interval(-math.inf, math.inf)


@dataclass
class ParamTensor:
    """Affine tensor family bias + coeff*z; bias and coeff share a shape."""

    bias: np.ndarray
    coeff: np.ndarray

    def __post_init__(self):
        if self.bias.shape != self.coeff.shape:
            raise ShapeMismatch("param-tensor", "bias and coeff shapes differ")

    @property
    def shape(self):
        return self.bias.shape

    def at(self, z):
        return self.bias + self.coeff * z

    @classmethod
    def constant(cls, array):
        array = np.asarray(array, dtype=np.float64)
        return cls(array, np.zeros_like(array))


def relu_piece(a, b, interval, z):
    """Active ReLU piece of a + b*z at z and the sub-interval where it holds.

    Returns (a', b', Interval).  The positive branch is taken iff
    a + b*z > 0 strictly; a zero input keeps the zero branch.
    """
    if not interval.contains(z):
        raise InternalInconsistency(f"z={z} outside {interval}")
    ob = np.empty(1)
    oc = np.empty(1)
    lo, hi = kernels.two_piece_update(
        np.array([float(a)]), np.array([float(b)]), z, 0.0, interval.lo, interval.hi, ob, oc
    )
    return float(ob[0]), float(oc[0]), Interval(lo, hi)


def max_piece(candidates, interval, z):
    """Argmax piece among affine candidates [(a, b), ...] at z.

    Ties resolve to the lowest index.  The returned interval intersects the
    input with every pairwise dominance half-line.
    """
    if not candidates:
        raise InternalInconsistency("max_piece needs at least one candidate")
    if not interval.contains(z):
        raise InternalInconsistency(f"z={z} outside {interval}")
    arr = np.asarray(candidates, dtype=np.float64)
    ob = np.empty(1)
    oc = np.empty(1)
    lo, hi = kernels.maxpool_update(
        np.ascontiguousarray(arr[:, 0].reshape(1, -1)),
        np.ascontiguousarray(arr[:, 1].reshape(1, -1)),
        None,
        z,
        interval.lo,
        interval.hi,
        ob,
        oc,
    )
    return float(ob[0]), float(oc[0]), Interval(lo, hi)


def _flat(pt):
    return (
        np.ascontiguousarray(pt.bias.reshape(-1)),
        np.ascontiguousarray(pt.coeff.reshape(-1)),
    )


def two_piece_apply(pt, z, lo, hi, neg_slope):
    """Elementwise two-piece op (ReLU/LeakyReLU/Abs) on a ParamTensor."""
    fb, fc = _flat(pt)
    ob = np.empty_like(fb)
    oc = np.empty_like(fc)
    lo, hi = kernels.two_piece_update(fb, fc, z, neg_slope, lo, hi, ob, oc)
    return ParamTensor(ob.reshape(pt.shape), oc.reshape(pt.shape)), lo, hi


def _maxpool_apply(node, pt, z, lo, hi):
    kernel = [int(k) for k in node.attr("kernel_shape")]
    strides = [int(s) for s in node.attr("strides", [1, 1])]
    pads = [int(p) for p in node.attr("pads", [0, 0, 0, 0])]
    win_b = ops.sliding_windows(pt.bias, kernel, strides, pads)
    win_c = ops.sliding_windows(pt.coeff, kernel, strides, pads)
    out_shape = win_b.shape[:4]
    kk = kernel[0] * kernel[1]
    win_b = np.ascontiguousarray(win_b.reshape(-1, kk))
    win_c = np.ascontiguousarray(win_c.reshape(-1, kk))
    valid = None
    if any(pads):
        ones = np.ones((1, 1) + pt.shape[2:], dtype=np.float64)
        vwin = ops.sliding_windows(ones, kernel, strides, pads)
        vwin = np.broadcast_to(vwin, out_shape + tuple(kernel))
        valid = np.ascontiguousarray((vwin > 0.0).reshape(-1, kk)).astype(np.uint8)
    ob = np.empty(win_b.shape[0])
    oc = np.empty(win_b.shape[0])
    lo, hi = kernels.maxpool_update(win_b, win_c, valid, z, lo, hi, ob, oc)
    return ParamTensor(ob.reshape(out_shape), oc.reshape(out_shape)), lo, hi


def _lift(value):
    if isinstance(value, ParamTensor):
        return value
    return ParamTensor.constant(value)


def _affine_node(node, inputs, z, lo, hi):
    """Affine semantics of one node. `inputs` entries are ParamTensor for
    line-dependent values, plain ndarrays for constants."""
    op = node.op_type
    var = [isinstance(x, ParamTensor) for x in inputs]

    if op in ("Relu", "LeakyRelu", "Abs"):
        slope = {"Relu": 0.0, "Abs": -1.0}.get(op)
        if slope is None:
            slope = float(node.attr("alpha", 0.01))
        pt, lo, hi = two_piece_apply(inputs[0], z, lo, hi, slope)
        return [pt], lo, hi
    if op == "MaxPool":
        pt, lo, hi = _maxpool_apply(node, inputs[0], z, lo, hi)
        return [pt], lo, hi
    if op == "Sigmoid":
        # Monotone terminal activation: passed through untransformed; the
        # hypothesis layer thresholds the pre-activation score via logit.
        return [inputs[0]], lo, hi

    if op in ("Conv", "ConvTranspose"):
        x = inputs[0]
        w = inputs[1]
        b = inputs[2] if len(inputs) > 2 else None
        _, strides, pads, dilations, group = ops._conv_params(node, w.shape)
        if op == "Conv":
            nb = ops.conv2d(x.bias, w, b, strides, pads, dilations, group)
            nc = ops.conv2d(x.coeff, w, None, strides, pads, dilations, group)
        else:
            out_pad = [int(p) for p in node.attr("output_padding", [0, 0])]
            nb = ops.conv_transpose2d(x.bias, w, b, strides, pads, out_pad, group)
            nc = ops.conv_transpose2d(x.coeff, w, None, strides, pads, out_pad, group)
        return [ParamTensor(nb, nc)], lo, hi
    if op == "Gemm":
        a, bm = inputs[0], inputs[1]
        alpha = float(node.attr("alpha", 1.0))
        beta = float(node.attr("beta", 1.0))
        ta, tb = node.attr("transA", 0), node.attr("transB", 0)

        def gemm(x, y):
            return alpha * ((x.T if ta else x) @ (y.T if tb else y))

        if var[0]:
            nb, nc = gemm(a.bias, bm), gemm(a.coeff, bm)
        else:
            nb, nc = gemm(a, bm.bias), gemm(a, bm.coeff)
        if len(inputs) > 2:
            nb = nb + beta * inputs[2]
        return [ParamTensor(nb, nc)], lo, hi
    if op == "MatMul":
        a, bm = inputs[0], inputs[1]
        if var[0]:
            nb, nc = a.bias @ bm, a.coeff @ bm
        else:
            nb, nc = a @ bm.bias, a @ bm.coeff
        return [ParamTensor(nb, nc)], lo, hi
    if op in ("Add", "Sub"):
        sign = 1.0 if op == "Add" else -1.0
        x, y = _lift(inputs[0]), _lift(inputs[1])
        return [ParamTensor(x.bias + sign * y.bias, x.coeff + sign * y.coeff)], lo, hi
    if op == "Neg":
        return [ParamTensor(-inputs[0].bias, -inputs[0].coeff)], lo, hi
    if op == "MulScalar":
        c = float(node.attrs["value"])
        return [ParamTensor(c * inputs[0].bias, c * inputs[0].coeff)], lo, hi
    if op == "BatchNormalization":
        x, scale, b, mean, varr = inputs[:5]
        eps = float(node.attr("epsilon", 1e-5))
        g = scale / np.sqrt(varr + eps)
        h = b - g * mean
        shape = (1, -1) + (1,) * (x.bias.ndim - 2)
        g = g.reshape(shape)
        return [ParamTensor(x.bias * g + h.reshape(shape), x.coeff * g)], lo, hi
    if op == "Concat":
        axis = int(node.attr("axis", 0))
        pts = [_lift(x) for x in inputs]
        nb = np.concatenate([p.bias for p in pts], axis=axis)
        nc = np.concatenate([p.coeff for p in pts], axis=axis)
        return [ParamTensor(nb, nc)], lo, hi

    # Remaining ops are shape rearrangements or fixed linear maps with no
    # additive constant: apply the concrete semantics to bias and coeff.
    pt = inputs[0]
    nb = ops.eval_node(node, [pt.bias])[0]
    nc = ops.eval_node(node, [pt.coeff])[0]
    return [ParamTensor(nb, nc)], lo, hi


@dataclass
class _CacheEntry:
    outputs: dict
    lo: float
    hi: float


@dataclass
class PropagationSession:
    """Single-owner propagation state for one (a, b) line over one graph."""

    graph: ModelGraph
    var_input: int = 0
    fixed_inputs: dict = field(default_factory=dict)
    memoization: bool = True

    def __post_init__(self):
        self._live = self.graph.live_nodes()
        self._cache = {}
        self.stats = {"node_evaluations": 0, "cache_hits": 0, "propagate_calls": 0}

    def clear(self):
        self._cache.clear()


def session_advance(session, z_new):
    """Drop cached entries that are not valid strictly inside z_new.

    Cached intervals are cumulative (own piece intersected with ancestors'),
    so descendants of an invalidated node are invalidated by their own
    entries; no graph walk is needed.
    """
    stale = [
        name
        for name, entry in session._cache.items()
        if not entry.lo < z_new < entry.hi
    ]
    for name in stale:
        del session._cache[name]


def propagate(session, a, b, z):
    """Propagate the affine family a + b*z through the session's graph.

    Returns (outputs, valid): one ParamTensor per graph output, exact on the
    returned Interval, which is the intersection of every piece interval
    encountered and always contains z.
    """
    graph = session.graph
    if not math.isfinite(z):
        raise InternalInconsistency(f"non-finite query z={z}")
    session.stats["propagate_calls"] += 1
    if not session.memoization:
        session._cache.clear()

    var_name, var_shape = graph.inputs[session.var_input]
    a = np.asarray(a, dtype=np.float64).reshape(var_shape)
    b = np.asarray(b, dtype=np.float64).reshape(var_shape)

    env = {}
    ivs = {}
    for name, arr in graph.initializers.items():
        env[name] = arr
    for idx, (name, shape) in enumerate(graph.inputs):
        if idx == session.var_input:
            env[name] = ParamTensor(a, b)
        else:
            if name not in session.fixed_inputs:
                raise ShapeMismatch(name, "no fixed value provided for this graph input")
            env[name] = np.asarray(session.fixed_inputs[name], dtype=np.float64).reshape(shape)

    for node in session._live:
        entry = session._cache.get(node.name)
        if entry is not None and entry.lo < z < entry.hi:
            session.stats["cache_hits"] += 1
            env.update(entry.outputs)
            for out in node.outputs:
                ivs[out] = (entry.lo, entry.hi)
            continue
        lo, hi = -math.inf, math.inf
        for inp in node.inputs:
            ilo, ihi = ivs.get(inp, (-math.inf, math.inf))
            lo = max(lo, ilo)
            hi = min(hi, ihi)
        args = [env[i] for i in node.inputs]
        if not any(isinstance(x, ParamTensor) for x in args):
            outs = [np.asarray(o, dtype=np.float64) for o in ops.eval_node(node, args)]
        else:
            outs, lo, hi = _affine_node(node, args, z, lo, hi)
        session.stats["node_evaluations"] += 1
        if lo > hi or not lo <= z <= hi:
            raise InternalInconsistency(
                f"node '{node.name}': piece interval [{lo}, {hi}] excludes z={z}"
            )
        out_map = {}
        for name, out in zip(node.outputs, outs):
            if isinstance(out, ParamTensor):
                if not (np.isfinite(out.bias).all() and np.isfinite(out.coeff).all()):
                    raise NonFiniteActivation(f"node '{node.name}' produced non-finite values")
            out_map[name] = out
            env[name] = out
            ivs[name] = (lo, hi)
        if session.memoization:
            session._cache[node.name] = _CacheEntry(out_map, lo, hi)

    lo, hi = -math.inf, math.inf
    outputs = []
    for name in graph.output_names:
        value = env[name]
        outputs.append(value if isinstance(value, ParamTensor) else ParamTensor.constant(value))
        ilo, ihi = ivs.get(name, (-math.inf, math.inf))
        lo = max(lo, ilo)
        hi = min(hi, ihi)
    if lo > hi or not lo <= z <= hi:
        raise InternalInconsistency(f"global validity [{lo}, {hi}] excludes z={z}")
    return outputs, Interval(lo, hi)
