"""Command-line interface.

Subcommands:
    infer       run one selective inference and emit the result JSON
    simulate    repeated synthetic-data inferences with summary statistics
    datagen     write synthetic samples (image + mask/label sidecar) to a dir
    model-info  structural report and supported/unsupported verdict
    forward     plain forward pass (used for cross-runtime validation)

Exit codes: 0 success, 1 error, 2 degenerate hypothesis (no test direction).
SIGLASS_LOG sets the diagnostic verbosity (DEBUG/INFO/WARNING/ERROR).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .engine import Covariance, inference
from .errors import DegenerateHypothesis, SiglassError
from .hypotheses import HypothesisConfig, PostProcessSpec
from .model_ir import describe_model, load_model, tensor_from_json, tensor_to_json
from .synthdata import SynthSpec, sample

log = logging.getLogger("siglass")

_PRESET_BY_FLAG = {
    "back-mean-diff": "BackMeanDiff",
    "neighbor-mean-diff": "NeighborMeanDiff",
    "reference-mean-diff": "ReferenceMeanDiff",
}

ALPHAS = (0.01, 0.05, 0.1)


def _read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _read_tensor(path):
    return tensor_from_json(_read_json(path), context=str(path))


def _write_json(payload, out):
    text = json.dumps(payload, indent=2)
    if out is None or out == "-":
        print(text)
    else:
        Path(out).write_text(text + "\n", encoding="utf-8")


def parse_post_process(spec_text):
    """Parse 'input-diff,abs,gaussian:3:1.0' style chains."""
    if not spec_text:
        return ()
    chain = []
    for token in spec_text.split(","):
        parts = token.strip().split(":")
        name = parts[0].lower()
        if name == "input-diff":
            chain.append(PostProcessSpec("InputDiff"))
        elif name == "abs":
            chain.append(PostProcessSpec("Abs"))
        elif name == "neg":
            chain.append(PostProcessSpec("Neg"))
        elif name == "average":
            size = int(parts[1]) if len(parts) > 1 else 3
            chain.append(PostProcessSpec("AverageFilter", kernel_size=size))
        elif name == "gaussian":
            size = int(parts[1]) if len(parts) > 1 else 3
            sigma = float(parts[2]) if len(parts) > 2 else 1.0
            chain.append(PostProcessSpec("GaussianFilter", kernel_size=size, sigma=sigma))
        else:
            raise ValueError(f"unknown post-process '{token}'")
    return tuple(chain)


def _covariance_from_args(args):
    picked = [args.var is not None, args.cov_diag is not None, args.cov_matrix is not None]
    if sum(picked) > 1:
        raise ValueError("choose exactly one of --var / --cov-diag / --cov-matrix")
    if args.cov_diag:
        return Covariance.from_diagonal(_read_tensor(args.cov_diag))
    if args.cov_matrix:
        return Covariance.from_matrix(_read_tensor(args.cov_matrix))
    return Covariance.from_scalar(args.var if args.var is not None else 1.0)


def _config_from_args(args):
    mask = _read_tensor(args.mask) if args.mask else None
    return HypothesisConfig(
        preset=_PRESET_BY_FLAG[args.hypothesis],
        threshold=args.threshold,
        i_idx=args.i_idx,
        o_idx=args.o_idx,
        post_process=parse_post_process(args.post_process),
        use_norm=args.use_norm,
        neighborhood_range=args.neighborhood_range,
        mask=mask,
    )


def _add_hypothesis_flags(p):
    p.add_argument("--hypothesis", choices=sorted(_PRESET_BY_FLAG), default="back-mean-diff")
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--use-norm", action="store_true")
    p.add_argument("--post-process", default="", help="e.g. input-diff,abs,gaussian:3:1.0")
    p.add_argument("--neighborhood-range", type=int, default=1)
    p.add_argument("--mask", help="tensor JSON; nonzero pixels are excluded")
    p.add_argument("--i-idx", type=int, default=0)
    p.add_argument("--o-idx", type=int, default=0)


def _add_inference_flags(p):
    p.add_argument("--var", type=float, help="scalar noise variance (default 1.0)")
    p.add_argument("--cov-diag", help="tensor JSON with per-pixel variances")
    p.add_argument("--cov-matrix", help="tensor JSON with a full covariance matrix")
    p.add_argument("--mode", choices=["parametric", "over_conditioning"], default="parametric")
    p.add_argument("--z-range", type=float, default=10.0)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--no-memoization", action="store_true")


def cmd_infer(args):
    graph = load_model(args.model)
    config = _config_from_args(args)
    cov = _covariance_from_args(args)
    inputs = [_read_tensor(p) for p in args.input]
    x = inputs if len(inputs) > 1 else inputs[0]
    if config.preset == "ReferenceMeanDiff":
        if not args.reference:
            raise ValueError("reference-mean-diff requires --reference")
        x = (x, _read_tensor(args.reference))
    result = inference(
        graph,
        config,
        x,
        cov,
        mode=args.mode,
        z_range=args.z_range,
        epsilon=args.epsilon,
        memoization=not args.no_memoization,
    )
    log.info("p=%.6g naive=%.6g z=%.6g", result.p_value, result.naive_p_value, result.z_obs)
    _write_json(result.to_json_dict(), args.out)
    return 0


def _rejections(p_values):
    return {str(a): float(np.mean([p <= a for p in p_values])) for a in ALPHAS}


def cmd_simulate(args):
    from scipy.stats import kstest

    graph = load_model(args.model)
    config = _config_from_args(args)
    cov = _covariance_from_args(args)
    in_shape = graph.inputs[config.i_idx][1]
    chw = in_shape[1:] if len(in_shape) == 4 else in_shape
    spec = SynthSpec(
        n_samples=args.trials, shape=chw, local_signal=args.signal, seed=args.seed
    )
    ref_spec = None
    if config.preset == "ReferenceMeanDiff":
        ref_spec = SynthSpec(n_samples=args.trials, shape=chw, local_signal=0.0,
                             seed=args.seed + 1)

    n_pixels = int(np.prod(chw))
    log_comp = args.log_num_comparisons
    if log_comp is None:
        log_comp = n_pixels * math.log(2.0)

    selective, naive, bonferroni = [], [], []
    degenerate = []
    for i in range(args.trials):
        image, _, _ = sample(spec, i)
        x = image if ref_spec is None else (image, sample(ref_spec, i)[0])
        try:
            result = inference(
                graph, config, x, cov,
                mode=args.mode, z_range=args.z_range, epsilon=args.epsilon,
                memoization=not args.no_memoization,
            )
        except DegenerateHypothesis as exc:
            degenerate.append({"trial": i, "error": type(exc).__name__})
            log.info("trial %d degenerate: %s", i, exc)
            continue
        selective.append(result.p_value)
        naive.append(result.naive_p_value)
        bonferroni.append(result.bonferroni_p_value(log_comp))
        log.debug("trial %d p=%.4g naive=%.4g", i, result.p_value, result.naive_p_value)

    summary = {
        "trials": args.trials,
        "completed": len(selective),
        "degenerate_count": len(degenerate),
        "degenerate_trials": degenerate,
        "signal": args.signal,
        "log_num_comparisons": log_comp,
        "p_values": {
            "selective": selective,
            "naive": naive,
            "bonferroni": bonferroni,
        },
        "sorted_p_values": {
            "selective": sorted(selective),
            "naive": sorted(naive),
            "bonferroni": sorted(bonferroni),
        },
        "rejection_rates": {
            "selective": _rejections(selective),
            "naive": _rejections(naive),
            "bonferroni": _rejections(bonferroni),
        },
    }
    if selective:
        ks = kstest(selective, "uniform")
        summary["ks_selective_vs_uniform"] = {
            "statistic": float(ks.statistic),
            "p_value": float(ks.pvalue),
        }
    _write_json(summary, args.out)
    return 0


def cmd_datagen(args):
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    chw = tuple(int(d) for d in args.shape.split(","))
    spec = SynthSpec(
        n_samples=args.trials,
        shape=chw,
        loc=args.loc,
        scale=args.scale,
        local_signal=args.signal,
        local_size=args.local_size,
        seed=args.seed,
    )
    for i in range(spec.n_samples):
        image, mask, label = sample(spec, i)
        stem = out_dir / f"sample_{i:05d}"
        _write_json(tensor_to_json(image), f"{stem}.json")
        _write_json({"label": label, "mask": tensor_to_json(mask)}, f"{stem}.sidecar.json")
    print(f"wrote {spec.n_samples} samples to {out_dir}")
    return 0


def cmd_model_info(args):
    with open(args.model, "rb") as fh:
        report = describe_model(fh.read())
    print(f"nodes: {report['node_count']}")
    for sig, label in ((report["inputs"], "input"), (report["outputs"], "output")):
        for entry in sig:
            print(f"{label}: {entry.get('name')} {tuple(entry.get('shape', ()))}")
    print("ops:")
    for op, count in report["op_histogram"].items():
        print(f"  {op}: {count}")
    if report["supported"]:
        print("verdict: supported")
    else:
        print("verdict: unsupported")
        for name, op in report["unsupported"]:
            print(f"  offending node: {name} ({op})")
        if "validation_error" in report:
            print(f"  {report['validation_error']}")
    return 0


def cmd_forward(args):
    from .ops import forward

    graph = load_model(args.model)
    inputs = [_read_tensor(p) for p in args.input]
    shaped = []
    for (name, shape), arr in zip(graph.inputs, inputs):
        shaped.append(np.asarray(arr, dtype=np.float64).reshape(shape))
    outputs = forward(graph, shaped)
    payload = {
        "outputs": [
            tensor_to_json(arr, name) for name, arr in zip(graph.output_names, outputs)
        ]
    }
    _write_json(payload, args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="siglass",
        description="Selective inference for ROIs detected by piecewise-linear networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="test the ROI detected in one image")
    p.add_argument("--model", required=True)
    p.add_argument("--input", action="append", required=True)
    p.add_argument("--reference")
    _add_hypothesis_flags(p)
    _add_inference_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("simulate", help="synthetic-data simulation study")
    p.add_argument("--model", required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--signal", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log-num-comparisons", type=float)
    _add_hypothesis_flags(p)
    _add_inference_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("datagen", help="write synthetic samples to a directory")
    p.add_argument("--out", required=True)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--shape", default="1,16,16")
    p.add_argument("--loc", type=float, default=0.0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--signal", type=float, default=0.0)
    p.add_argument("--local-size", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("model-info", help="inspect a model document")
    p.add_argument("model")
    p.set_defaults(func=cmd_model_info)

    p = sub.add_parser("forward", help="plain forward pass on tensor files")
    p.add_argument("--model", required=True)
    p.add_argument("--input", action="append", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_forward)
    return parser


def main(argv=None):
    level = os.environ.get("SIGLASS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DegenerateHypothesis as exc:
        print(f"degenerate hypothesis: {exc}", file=sys.stderr)
        return 2
    except (SiglassError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
