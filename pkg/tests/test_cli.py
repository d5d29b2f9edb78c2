import json
import math
from pathlib import Path

import numpy as np
import pytest

from siglass.cli import main, parse_post_process
from siglass.hypotheses import PostProcessSpec
from siglass.model_ir import serialize_model, tensor_to_json

from conftest import conv_relu_conv, make_doc, node


@pytest.fixture
def workdir(tmp_path, rng):
    g = conv_relu_conv(seed=31)
    model = tmp_path / "model.json"
    model.write_text(json.dumps(serialize_model(g)))
    x = rng.normal(size=(1, 1, 8, 8))
    image = tmp_path / "x.json"
    image.write_text(json.dumps(tensor_to_json(x)))
    return tmp_path, model, image, x


def test_post_process_parsing():
    chain = parse_post_process("input-diff,abs,gaussian:5:2.0,average:3,neg")
    assert chain == (
        PostProcessSpec("InputDiff"),
        PostProcessSpec("Abs"),
        PostProcessSpec("GaussianFilter", kernel_size=5, sigma=2.0),
        PostProcessSpec("AverageFilter", kernel_size=3),
        PostProcessSpec("Neg"),
    )
    assert parse_post_process("") == ()
    with pytest.raises(ValueError):
        parse_post_process("sharpen")


def test_infer_writes_result(workdir):
    tmp, model, image, _ = workdir
    out = tmp / "result.json"
    code = main([
        "infer", "--model", str(model), "--input", str(image),
        "--threshold", "0.5", "--var", "1.0", "--out", str(out),
    ])
    assert code == 0
    payload = json.loads(out.read_text())
    assert 0.0 <= payload["p_value"] <= 1.0
    assert any(lo - 1e-9 <= payload["z_obs"] <= hi + 1e-9
               for lo, hi in payload["truncation_region"])
    assert payload["mode"] == "parametric"


def test_infer_missing_model_exit_1(workdir, capsys):
    tmp, _, image, _ = workdir
    code = main([
        "infer", "--model", str(tmp / "nope.json"), "--input", str(image),
        "--threshold", "0.5",
    ])
    assert code == 1
    assert "nope.json" in capsys.readouterr().err


def test_infer_degenerate_exit_2(workdir):
    tmp, model, image, _ = workdir
    code = main([
        "infer", "--model", str(model), "--input", str(image),
        "--threshold", "1e9",
    ])
    assert code == 2


def test_over_conditioning_single_segment(workdir):
    tmp, model, image, _ = workdir
    out = tmp / "oc.json"
    code = main([
        "infer", "--model", str(model), "--input", str(image),
        "--threshold", "0.5", "--mode", "over_conditioning", "--out", str(out),
    ])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["mode"] == "over_conditioning"
    assert len(payload["truncation_region"]) == 1


def test_model_info_supported(workdir, capsys):
    _, model, _, _ = workdir
    assert main(["model-info", str(model)]) == 0
    out = capsys.readouterr().out
    assert "verdict: supported" in out
    assert "Conv: 2" in out


def test_model_info_unsupported(tmp_path, capsys):
    doc = make_doc([("x", (1, 4))], [("y", (1, 4))], [node("e", "Exp", ["x"], ["y"])])
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert main(["model-info", str(path)]) == 0
    out = capsys.readouterr().out
    assert "verdict: unsupported" in out and "e (Exp)" in out


def test_forward_matches_api(workdir):
    tmp, model, image, x = workdir
    out = tmp / "fwd.json"
    assert main(["forward", "--model", str(model), "--input", str(image),
                 "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    from siglass.model_ir import tensor_from_json
    from siglass.ops import forward

    got = tensor_from_json(payload["outputs"][0])
    want = forward(conv_relu_conv(seed=31), [x])[0]
    np.testing.assert_array_equal(got, want)


def test_datagen_writes_samples(tmp_path):
    out_dir = tmp_path / "data"
    code = main([
        "datagen", "--out", str(out_dir), "--trials", "3", "--shape", "1,8,8",
        "--signal", "2.0", "--seed", "4",
    ])
    assert code == 0
    images = sorted(out_dir.glob("sample_*.json"))
    sidecars = sorted(out_dir.glob("sample_*.sidecar.json"))
    assert len(images) == 6 and len(sidecars) == 3  # sidecars match *.json too
    meta = json.loads(sidecars[0].read_text())
    assert meta["label"] == 1
    from siglass.model_ir import tensor_from_json

    mask = tensor_from_json(meta["mask"])
    assert mask.sum() == 4  # floor(8/3) = 2 -> 2x2 square


def test_simulate_one_trial(workdir):
    tmp, model, _, _ = workdir
    out = tmp / "sim.json"
    code = main([
        "simulate", "--model", str(model), "--trials", "1", "--threshold", "0.5",
        "--seed", "3", "--out", str(out),
    ])
    assert code == 0
    payload = json.loads(out.read_text())
    done = payload["completed"]
    assert done + payload["degenerate_count"] == 1
    for key in ("selective", "naive", "bonferroni"):
        assert len(payload["p_values"][key]) == done


def test_simulate_linear_model_selective_equals_naive(tmp_path, rng):
    """One polytope: the truncation region is the whole searched window."""
    w = rng.normal(0, 1e-8, (1, 1, 3, 3))
    offset = np.where(rng.random((1, 1, 4, 4)) < 0.5, -3.0, 3.0)
    doc = make_doc(
        [("x", (1, 1, 4, 4))],
        [("y", (1, 1, 4, 4))],
        [
            node("c", "Conv", ["x", "w"], ["h"], kernel_shape=[3, 3], pads=[1, 1, 1, 1]),
            node("a", "Add", ["h", "off"], ["y"]),
        ],
        {"w": w, "off": offset},
    )
    model = tmp_path / "linear.json"
    model.write_text(json.dumps(doc))
    out = tmp_path / "sim.json"
    code = main([
        "simulate", "--model", str(model), "--trials", "8", "--threshold", "0.0",
        "--seed", "0", "--out", str(out),
    ])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["completed"] == 8
    for p_sel, p_naive in zip(payload["p_values"]["selective"], payload["p_values"]["naive"]):
        assert math.isclose(p_sel, p_naive, rel_tol=1e-6)


def test_simulate_reference_preset(workdir):
    tmp, model, _, _ = workdir
    out = tmp / "simref.json"
    code = main([
        "simulate", "--model", str(model), "--trials", "2", "--threshold", "0.5",
        "--hypothesis", "reference-mean-diff", "--seed", "1", "--out", str(out),
    ])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["completed"] + payload["degenerate_count"] == 2


def test_infer_reference_requires_flag(workdir, capsys):
    tmp, model, image, _ = workdir
    code = main([
        "infer", "--model", str(model), "--input", str(image),
        "--threshold", "0.5", "--hypothesis", "reference-mean-diff",
    ])
    assert code == 1
    assert "--reference" in capsys.readouterr().err
