"""Selective inference for ROIs detected by piecewise-linear neural networks.

Typical usage:

    import siglass

    graph = siglass.load_model("model.json")
    config = siglass.HypothesisConfig(preset="BackMeanDiff", threshold=0.5)
    result = siglass.inference(graph, config, image, cov=1.0)
    print(result.p_value, result.naive_p_value)
"""

from .affine import (
    Interval,
    ParamTensor,
    PropagationSession,
    max_piece,
    propagate,
    relu_piece,
    session_advance,
)
from .engine import (
    Covariance,
    InferenceResult,
    LineParams,
    inference,
    line_params,
    oc_region,
    parametric_search,
)
from .errors import *  # noqa: F401,F403 - typed error surface
from .hypotheses import (
    HypothesisConfig,
    PostProcessSpec,
    Roi,
    build_eta,
    extract_roi,
    neighborhood,
    score_map,
    selection_constraints,
)
from .kernels import backend_name
from .model_ir import (
    ModelGraph,
    NodeSpec,
    load_model,
    parse_model,
    save_model,
    serialize_model,
)
from .ops import forward
from .synthdata import SynthSpec, generate, sample
from .truncnorm import IntervalUnion, log_gauss_mass, naive_two_sided, two_sided_p

__version__ = "0.1.0"
