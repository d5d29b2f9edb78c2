"""Generate the toy .onnx fixtures and their golden forward outputs.

The ONNX files are emitted by a minimal protobuf writer (no onnx package
needed); golden outputs for the probe inputs come from torch executing the
same weights in float64, so the converter tests compare three independent
runtimes: torch (recorded here), the TypeScript evaluator, and the engine.

Run from the repository root:
    python converter/fixtures/make_fixtures.py
"""

import json
import struct
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

OUT = Path(__file__).resolve().parent

# --- minimal protobuf wire format -------------------------------------------


def varint(value):
    value &= (1 << 64) - 1
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def tag(field, wire):
    return varint((field << 3) | wire)


def ld(field, payload):
    return tag(field, 2) + varint(len(payload)) + payload


def vint(field, value):
    return tag(field, 0) + varint(value)


def string(field, text):
    return ld(field, text.encode("utf-8"))


def packed_int64(field, values):
    return ld(field, b"".join(varint(v) for v in values))


def tensor_proto(name, array):
    array = np.asarray(array)
    body = packed_int64(1, list(array.shape))
    if array.dtype == np.float32:
        body += vint(2, 1)  # FLOAT
        body += ld(9, array.astype("<f4").tobytes())
    elif array.dtype == np.int64:
        body += vint(2, 7)  # INT64
        body += ld(9, array.astype("<i8").tobytes())
    elif array.dtype == np.float64:
        body += vint(2, 11)  # DOUBLE
        body += ld(9, array.astype("<f8").tobytes())
    else:
        raise TypeError(array.dtype)
    body += string(8, name)
    return body


def attr_int(name, value):
    return string(1, name) + tag(3, 0) + varint(value) + vint(20, 2)


def attr_float(name, value):
    return string(1, name) + tag(2, 5) + struct.pack("<f", value) + vint(20, 1)


def attr_ints(name, values):
    return string(1, name) + packed_int64(8, values) + vint(20, 7)


def node_proto(op_type, inputs, outputs, name, attrs=()):
    body = b"".join(string(1, i) for i in inputs)
    body += b"".join(string(2, o) for o in outputs)
    body += string(3, name)
    body += string(4, op_type)
    body += b"".join(ld(5, a) for a in attrs)
    return body


def value_info(name, shape):
    dims = b"".join(ld(1, vint(1, d)) for d in shape)
    tensor_type = vint(1, 1) + ld(2, dims)  # elem_type FLOAT + shape
    return string(1, name) + ld(2, ld(1, tensor_type))


def model_proto(graph_name, nodes, inputs, outputs, initializers):
    graph = b"".join(ld(1, n) for n in nodes)
    graph += string(2, graph_name)
    graph += b"".join(ld(5, tensor_proto(n, a)) for n, a in initializers)
    graph += b"".join(ld(11, value_info(n, s)) for n, s in inputs)
    graph += b"".join(ld(12, value_info(n, s)) for n, s in outputs)
    model = vint(1, 8)  # ir_version
    model += string(2, "siglass-fixtures")
    model += ld(8, string(1, "") + vint(2, 17))  # opset_import
    model += ld(7, graph)
    return model


# --- fixture models ----------------------------------------------------------


def f32(t):
    return t.detach().numpy().astype(np.float32)


def conv_attrs(k=3, pad=1, stride=1):
    return [
        attr_ints("kernel_shape", [k, k]),
        attr_ints("strides", [stride, stride]),
        attr_ints("pads", [pad, pad, pad, pad]),
    ]


def make_conv_relu(rng):
    c1 = nn.Conv2d(1, 4, 3, padding=1)
    c2 = nn.Conv2d(4, 1, 3, padding=1)
    torch_model = nn.Sequential(c1, nn.ReLU(), c2).double()
    nodes = [
        node_proto("Conv", ["x", "c1.w", "c1.b"], ["h1"], "conv1", conv_attrs()),
        node_proto("Relu", ["h1"], ["h2"], "relu1"),
        node_proto("Conv", ["h2", "c2.w", "c2.b"], ["y"], "conv2", conv_attrs()),
    ]
    inits = [
        ("c1.w", f32(c1.weight)), ("c1.b", f32(c1.bias)),
        ("c2.w", f32(c2.weight)), ("c2.b", f32(c2.bias)),
    ]
    blob = model_proto("conv_relu", nodes, [("x", (1, 1, 8, 8))], [("y", (1, 1, 8, 8))], inits)
    return blob, torch_model, (1, 1, 8, 8)


class UNetMini(nn.Module):
    def __init__(self):
        super().__init__()
        self.enc = nn.Conv2d(1, 4, 3, padding=1)
        self.down = nn.Conv2d(4, 8, 3, padding=1)
        self.up = nn.ConvTranspose2d(8, 4, 2, stride=2)
        self.fuse = nn.Conv2d(8, 4, 3, padding=1)
        self.head = nn.Conv2d(4, 1, 3, padding=1)

    def forward(self, x):
        e = torch.relu(self.enc(x))
        d = torch.relu(self.down(torch.max_pool2d(e, 2)))
        u = self.up(d)
        f = torch.relu(self.fuse(torch.cat([u, e], dim=1)))
        return torch.sigmoid(self.head(f))


def make_unet_mini(rng):
    m = UNetMini().double()
    nodes = [
        node_proto("Conv", ["x", "enc.w", "enc.b"], ["e0"], "enc", conv_attrs()),
        node_proto("Relu", ["e0"], ["e"], "enc_relu"),
        node_proto("MaxPool", ["e"], ["p"], "pool",
                   [attr_ints("kernel_shape", [2, 2]), attr_ints("strides", [2, 2])]),
        node_proto("Conv", ["p", "down.w", "down.b"], ["d0"], "down", conv_attrs()),
        node_proto("Relu", ["d0"], ["d"], "down_relu"),
        node_proto("ConvTranspose", ["d", "up.w", "up.b"], ["u"], "up",
                   [attr_ints("kernel_shape", [2, 2]), attr_ints("strides", [2, 2])]),
        node_proto("Concat", ["u", "e"], ["cat"], "skip", [attr_int("axis", 1)]),
        node_proto("Conv", ["cat", "fuse.w", "fuse.b"], ["f0"], "fuse", conv_attrs()),
        node_proto("Relu", ["f0"], ["f"], "fuse_relu"),
        node_proto("Conv", ["f", "head.w", "head.b"], ["logit"], "head", conv_attrs()),
        node_proto("Sigmoid", ["logit"], ["y"], "sig"),
    ]
    inits = [
        ("enc.w", f32(m.enc.weight)), ("enc.b", f32(m.enc.bias)),
        ("down.w", f32(m.down.weight)), ("down.b", f32(m.down.bias)),
        ("up.w", f32(m.up.weight)), ("up.b", f32(m.up.bias)),
        ("fuse.w", f32(m.fuse.weight)), ("fuse.b", f32(m.fuse.bias)),
        ("head.w", f32(m.head.weight)), ("head.b", f32(m.head.bias)),
    ]
    blob = model_proto("unet_mini", nodes, [("x", (1, 1, 8, 8))], [("y", (1, 1, 8, 8))], inits)
    return blob, m, (1, 1, 8, 8)


class CamHead(nn.Module):
    def __init__(self):
        super().__init__()
        self.c1 = nn.Conv2d(1, 8, 3, padding=1)
        self.bn = nn.BatchNorm2d(8, eps=1e-5)
        self.c2 = nn.Conv2d(8, 8, 3, padding=1)
        self.fc = nn.Linear(8, 2)
        with torch.no_grad():
            self.bn.running_mean.normal_(0.0, 0.3)
            self.bn.running_var.uniform_(0.5, 1.5)
            self.bn.weight.uniform_(0.5, 1.5)
            self.bn.bias.normal_(0.0, 0.2)
        self.bn.eval()

    def forward(self, x):
        h = torch.relu(self.bn(self.c1(x)))
        h = torch.relu(self.c2(h))
        g = h.mean(dim=(2, 3))
        return self.fc(g)


def make_cam_head(rng):
    m = CamHead().double()
    nodes = [
        node_proto("Conv", ["x", "c1.w", "c1.b"], ["h1"], "conv1", conv_attrs()),
        node_proto("BatchNormalization",
                   ["h1", "bn.s", "bn.b", "bn.m", "bn.v"], ["hb"], "bn1",
                   [attr_float("epsilon", 1e-5)]),
        node_proto("Relu", ["hb"], ["r1"], "relu1"),
        node_proto("Conv", ["r1", "c2.w", "c2.b"], ["h2"], "conv2", conv_attrs()),
        node_proto("Relu", ["h2"], ["r2"], "relu2"),
        node_proto("GlobalAveragePool", ["r2"], ["g"], "gap"),
        node_proto("Flatten", ["g"], ["gf"], "flat", [attr_int("axis", 1)]),
        node_proto("Gemm", ["gf", "fc.w", "fc.b"], ["y"], "fc",
                   [attr_int("transB", 1), attr_float("alpha", 1.0), attr_float("beta", 1.0)]),
    ]
    inits = [
        ("c1.w", f32(m.c1.weight)), ("c1.b", f32(m.c1.bias)),
        ("bn.s", f32(m.bn.weight)), ("bn.b", f32(m.bn.bias)),
        ("bn.m", f32(m.bn.running_mean)), ("bn.v", f32(m.bn.running_var)),
        ("c2.w", f32(m.c2.weight)), ("c2.b", f32(m.c2.bias)),
        ("fc.w", f32(m.fc.weight)), ("fc.b", f32(m.fc.bias)),
    ]
    blob = model_proto("cam_head", nodes, [("x", (1, 1, 8, 8))], [("y", (1, 2))], inits)
    return blob, m, (1, 1, 8, 8)


class MiscOps(nn.Module):
    """Exercises the converter's attribute-folding paths."""

    def __init__(self):
        super().__init__()
        self.w = nn.Parameter(torch.randn(64, 3))

    def forward(self, x):
        m = 0.5 * x
        u = nn.functional.interpolate(m, scale_factor=2, mode="nearest")
        s = u[:, :, :, :4]
        r = s.reshape(1, -1)
        return r @ self.w


def make_misc_ops(rng):
    m = MiscOps().double()
    nodes = [
        node_proto("Identity", ["x"], ["x2"], "ident"),
        node_proto("Mul", ["x2", "half"], ["m"], "scale"),
        node_proto("Upsample", ["m", "scales"], ["u"], "upsample",
                   [string(1, "mode") + ld(4, b"nearest") + vint(20, 3)]),
        node_proto("Slice", ["u", "sl.starts", "sl.ends", "sl.axes"], ["s"], "crop"),
        node_proto("Reshape", ["s", "rshape"], ["r"], "flatten_all"),
        node_proto("MatMul", ["r", "w"], ["y"], "project"),
    ]
    inits = [
        ("half", np.array([0.5], dtype=np.float32)),
        ("scales", np.array([1.0, 1.0, 2.0, 2.0], dtype=np.float32)),
        ("sl.starts", np.array([0, 0], dtype=np.int64)),
        ("sl.ends", np.array([8, 4], dtype=np.int64)),
        ("sl.axes", np.array([2, 3], dtype=np.int64)),
        ("rshape", np.array([1, -1], dtype=np.int64)),
        ("w", f32(m.w)),
    ]
    blob = model_proto("misc_ops", nodes, [("x", (1, 2, 4, 4))], [("y", (1, 3))], inits)
    return blob, m, (1, 2, 4, 4)


def make_tanh_model(rng):
    c = nn.Conv2d(1, 1, 3, padding=1).double()
    nodes = [
        node_proto("Conv", ["x", "c.w", "c.b"], ["h"], "conv", conv_attrs()),
        node_proto("Tanh", ["h"], ["y"], "tanh"),
    ]
    inits = [("c.w", f32(c.weight)), ("c.b", f32(c.bias))]
    blob = model_proto("tanh_model", nodes, [("x", (1, 1, 8, 8))], [("y", (1, 1, 8, 8))], inits)
    return blob, None, (1, 1, 8, 8)


def load_float32_weights(model, named):
    """Round the torch weights to the float32 values stored in the ONNX file
    so every runtime sees identical parameters."""
    state = {}
    for name, arr in named:
        state[name] = torch.from_numpy(arr.astype(np.float64))
    return state


def main():
    torch.manual_seed(20250)
    rng = np.random.default_rng(20250)
    builders = {
        "conv_relu": make_conv_relu,
        "unet_mini": make_unet_mini,
        "cam_head": make_cam_head,
        "misc_ops": make_misc_ops,
        "tanh_model": make_tanh_model,
    }
    for name, builder in builders.items():
        blob, torch_model, in_shape = builder(rng)
        (OUT / f"{name}.onnx").write_bytes(blob)
        if torch_model is None:
            continue
        # round parameters to their serialized float32 values
        with torch.no_grad():
            for pname, param in torch_model.named_parameters():
                param.copy_(param.float().double())
        probes = []
        for i in range(8):
            x = rng.standard_normal(in_shape)
            with torch.no_grad():
                y = torch_model(torch.from_numpy(x)).numpy()
            probes.append({
                "input": {"shape": list(in_shape), "data": x.ravel().tolist()},
                "expected": {"shape": list(y.shape), "data": y.ravel().tolist()},
            })
        payload = {"model": f"{name}.onnx", "input_shape": list(in_shape), "probes": probes}
        (OUT / f"{name}.golden.json").write_text(json.dumps(payload))
        print(f"wrote {name}.onnx + golden ({len(blob)} bytes)")


if __name__ == "__main__":
    main()
