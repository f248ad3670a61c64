"""Batch front-end: ``polycover <subcommand> [--config FILE] [--out DIR] [--seed N] [--threads N]``.

Every run writes ``result.json``, one CSV table and ``manifest.json`` to the
output directory.  The manifest echoes the fully resolved configuration, so
``polycover <subcommand> --config DIR/manifest.json`` repeats the run and
reproduces ``result.json`` byte for byte.

``threads`` (flag, ``$POLYCOVER_THREADS`` or config field; 0 = all cores)
sizes the worker pool of the cover recursion, whose results are merged in
a fixed order.  BLAS is always limited to one thread: multithreaded BLAS
reductions change the last bits of sums with the thread count, and the
pipelines amplify such differences through their thresholds.

Exit status: 0 on success, 2 when the configuration is malformed or a
precondition gate rejects the input, 1 on any other failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import platform
import sys
import time
import traceback
from pathlib import Path
from typing import Annotated, Any, Literal, Union

import numpy as np
import pydantic
import scipy
import threadpoolctl
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__
from .cover import CoverParams, compute_cover, grid_soundness
from .errors import PreconditionError
from .estimators import SampleSet, frobenius_error_scale, glm_moment_tensor, gmm_moment_tensor, \
    hyperplane_moment_tensor, mlr_moment_tensor, relu_moment_tensor
from .learners import (
    GLMConfig,
    GMMConfig,
    HyperplaneConfig,
    MLRConfig,
    glm_learn,
    gmm_density_estimate,
    gmm_parameter_estimate,
    hyperplane_learn,
    l2_distance_sq,
    mlr_density_estimate,
    mlr_parameter_estimate,
    relu_pac_learn,
)
from .models import (
    GaussianMixtureDensity,
    GLMParams,
    GMMParams,
    HyperplaneParams,
    MLRParams,
    RegressionMixtureDensity,
    min_separation,
)
from .polyspace import HomogeneousPoly, monomial_array, orthonormalize
from .selftest import CHECKS, run_selftest
from .synth import GenSpec, match_error, sample, tv_estimate

THREADS_ENV = "POLYCOVER_THREADS"
MANIFEST_VERSION = 1
SUBCOMMANDS = ("cover", "moments", "learn-gmm", "learn-relu", "learn-glm", "learn-mlr", "learn-hyperplanes",
               "selftest")


# ---------------------------------------------------------------------------
# configuration schema
# ---------------------------------------------------------------------------

class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


Seed = Annotated[int, Field(ge=0, lt=2 ** 64)]
Threads = Annotated[int, Field(ge=0)]
Vector = list[float]


class GMMModel(Strict):
    kind: Literal["gmm"] = "gmm"
    weights: Vector | None = None          # None means uniform
    means: list[Vector]

    def params(self) -> GMMParams:
        k = len(self.means)
        return GMMParams(self.weights if self.weights is not None else np.full(k, 1.0 / k), self.means)


class GLMModel(Strict):
    kind: Literal["glm"] = "glm"
    a: Vector
    W: list[Vector]
    sigma: float = 0.0
    activation: Literal["relu", "abs", "identity", "tanh", "square"] = "relu"

    def params(self) -> GLMParams:
        return GLMParams(self.a, self.W, self.sigma, self.activation)


class MLRModel(Strict):
    kind: Literal["mlr"] = "mlr"
    weights: Vector | None = None
    betas: list[Vector]
    sigma: float = 0.0

    def params(self) -> MLRParams:
        k = len(self.betas)
        return MLRParams(self.weights if self.weights is not None else np.full(k, 1.0 / k), self.betas, self.sigma)


class HyperplaneModel(Strict):
    kind: Literal["hyperplane"] = "hyperplane"
    weights: Vector | None = None
    normals: list[Vector]

    def params(self) -> HyperplaneParams:
        k = len(self.normals)
        return HyperplaneParams(self.weights if self.weights is not None else np.full(k, 1.0 / k), self.normals)


AnyModel = Annotated[Union[GMMModel, GLMModel, MLRModel, HyperplaneModel], Field(discriminator="kind")]


class Data(Strict):
    n: Annotated[int, Field(gt=0)]
    model: AnyModel


class RunBase(Strict):
    seed: Seed = 0
    threads: Threads = 0
    out: str | None = None


class CoverRun(RunBase):
    m: Annotated[int, Field(ge=1)] = 2
    d: Annotated[int, Field(ge=1)] = 2
    # each polynomial is a list of [exponent vector, coefficient] terms
    polys: list[list[tuple[list[int], float]]] = [[([1, 1], 1.0)]]
    R: float = 1.0
    eps: float = 0.3
    delta: float = 0.01
    C: float = 1.0
    prune: bool = True
    ambient_reduce: bool = False
    max_points: int = 2_000_000
    grid_step: Annotated[float, Field(gt=0)] | None = 0.05   # None skips the in-run grid check


class MomentsRun(RunBase):
    data: Data = Data(n=100_000, model=GMMModel(means=[[2.0, 0.0], [-2.0, 0.0]]))
    estimator: Literal["gmm", "relu", "glm", "mlr", "hyperplane"] = "gmm"
    d: Annotated[int, Field(ge=1)] = 2
    activation: str = "relu"


def _default_gmm() -> Data:
    return Data(n=100_000, model=GMMModel(means=[[10.0] + [0.0] * 7, [-10.0] + [0.0] * 7]))


class GMMRun(RunBase):
    data: Data = Field(default_factory=_default_gmm)
    task: Literal["parameters", "density"] = "parameters"
    k: int | None = None                  # None: number of planted components
    p_min: float | None = None            # None: smallest planted weight
    eps: float = 0.1
    d: int = 2
    practical: bool = True
    constants: dict[str, Any] = {}
    tv_samples: int = 1_000_000


class ReluRun(RunBase):
    data: Data = Data(n=200_000, model=GLMModel(a=[1.0, 1.0], W=[[1.0, 0, 0, 0, 0], [0, 1.0, 0, 0, 0]], sigma=0.1))
    k: int | None = None
    d: int = 2
    eps: float = 0.15
    constants: dict[str, Any] = {}


class GLMRun(RunBase):
    data: Data = Data(n=200_000, model=GLMModel(a=[1.0], W=[[1.0, 0, 0, 0]], sigma=0.0, activation="abs"))
    k: int | None = None
    d: int = 2
    eps: float = 0.15
    activation: str | None = None         # None: the planted activation
    L: float = 1.0
    l2_samples: int = 1_000_000
    constants: dict[str, Any] = {}


def _default_mlr() -> Data:
    e = np.eye(6)
    return Data(n=20_000, model=MLRModel(betas=[list(3 * e[0]), list(-2 * e[1])], sigma=0.01))


class MLRRun(RunBase):
    data: Data = Field(default_factory=_default_mlr)
    task: Literal["parameters", "density"] = "parameters"
    noiseless: bool = False               # forces the planted sigma to 0
    k: int | None = None
    p_min: float | None = None
    sigma: float | None = None            # None: the planted sigma
    Delta: float | None = None            # None: the planted separation
    eps: float = 0.05
    practical: bool = True
    constants: dict[str, Any] = {}
    tv_samples: int = 1_000_000


class HyperplaneRun(RunBase):
    data: Data = Data(n=20_000, model=HyperplaneModel(
        normals=[[1.0, 0, 0, 0, 0], [math.sqrt(0.5), math.sqrt(0.5), 0, 0, 0]]))
    k: int | None = None
    Delta: float | None = None
    d: int = 2
    practical: bool = True
    constants: dict[str, Any] = {}


class SelftestRun(RunBase):
    pass


SCHEMAS: dict[str, type[RunBase]] = {
    "cover": CoverRun, "moments": MomentsRun, "learn-gmm": GMMRun, "learn-relu": ReluRun, "learn-glm": GLMRun,
    "learn-mlr": MLRRun, "learn-hyperplanes": HyperplaneRun, "selftest": SelftestRun,
}


def json_schema(subcommand: str) -> dict:
    """JSON schema of the configuration accepted by ``subcommand``."""
    return SCHEMAS[subcommand].model_json_schema()


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending field path."""


def _model_required(data: Data, kind: str, sub: str):
    if data.model.kind != kind:
        raise ConfigError(f"data.model.kind: {sub} needs a '{kind}' model, got '{data.model.kind}'")
    return data.model.params()


def _constants(cls, base, constants: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    for key in constants:
        if key not in names:
            raise ConfigError(f"constants.{key}: unknown constant for {cls.__name__}")
    return dataclasses.replace(base, **constants)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    text = "%.17g" % x
    # keep integral values recognisably floating point
    return text if any(c in text for c in ".en") else text + ".0"


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float printed to 17 significant digits (non-finite floats as null)."""
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (np.floating, float)):
        return _fmt(float(obj))
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if obj is None or isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + dumps(v, indent, _level + 1) for v in obj) + "\n" + pad + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _param_table(params, name: str):
    P = params.parameters()
    header = ["component", "weight"] + [f"{name}_{i + 1}" for i in range(P.shape[1])]
    rows = [[j, float(params.weights[j])] + [float(v) for v in P[j]] for j in range(P.shape[0])]
    return header, rows


# ---------------------------------------------------------------------------
# subcommands: each returns (result dict, (csv name, header, rows))
# ---------------------------------------------------------------------------

def _run_cover(cfg: CoverRun, threads: int):
    polys = []
    for i, terms in enumerate(cfg.polys):
        for j, (alpha, _) in enumerate(terms):
            if len(alpha) != cfg.m or sum(alpha) != cfg.d or min(alpha) < 0:
                raise ConfigError(f"polys.{i}.{j}: exponent {alpha} is not a degree-{cfg.d} monomial in {cfg.m} variables")
        polys.append(HomogeneousPoly.from_dict(cfg.m, cfg.d, {tuple(a): c for a, c in terms}))
    V = orthonormalize(polys, m=cfg.m, d=cfg.d)
    params = CoverParams(R=cfg.R, eps=cfg.eps, delta=cfg.delta, C=cfg.C, prune=cfg.prune,
                         ambient_reduce=cfg.ambient_reduce, max_points=cfg.max_points,
                         threads=threads or (os.cpu_count() or 1))
    cov = compute_cover(V, params)
    result = {"m": cfg.m, "d": cfg.d, "subspace_dim": V.dim, "codim": V.codim, "size": len(cov),
              "points": cov.points, "tags": list(cov.tags)}
    if cfg.grid_step is not None:
        chk = grid_soundness(V, cov, cfg.grid_step)
        result["soundness"] = {"sound": chk.sound, "grid_step": chk.step, "grid_points_in_set": chk.n_grid_in_set,
                               "max_distance": chk.max_distance}
    else:
        result["soundness"] = None
    header = [f"x{i + 1}" for i in range(cfg.m)] + ["tag"]
    rows = [[float(v) for v in p] + [t] for p, t in zip(cov.points, cov.trace)]
    return result, ("points.csv", header, rows)


def _run_moments(cfg: MomentsRun, threads: int):
    s = sample(GenSpec(cfg.data.model.params(), cfg.data.n, cfg.seed))
    needs_y = cfg.estimator in ("relu", "glm", "mlr")
    if needs_y != (s.ys is not None):
        raise ConfigError(f"estimator: '{cfg.estimator}' does not fit a '{cfg.data.model.kind}' model")
    if cfg.estimator == "gmm":
        T, se = gmm_moment_tensor(s, cfg.d, return_stderr=True)
    elif cfg.estimator == "relu":
        T, se = relu_moment_tensor(s, cfg.d, return_stderr=True)
    elif cfg.estimator == "glm":
        T, se = glm_moment_tensor(s, cfg.d, activation=cfg.activation, return_stderr=True)
    elif cfg.estimator == "mlr":
        T, se = mlr_moment_tensor(s, cfg.d, return_stderr=True, seed=cfg.seed)
    else:
        T, se = hyperplane_moment_tensor(s, cfg.d, return_stderr=True)
    alphas = monomial_array(T.m, T.order)
    # the MLR estimator works in a rotated frame, so only its Frobenius error scale is available
    per_entry = None if isinstance(se, float) else se.values
    result = {"estimator": cfg.estimator, "m": T.m, "order": T.order, "orbits": alphas.tolist(),
              "values": T.values, "stderr": per_entry,
              "stderr_frobenius": se if per_entry is None else frobenius_error_scale(se), "norm": T.norm()}
    header = [f"alpha_{i + 1}" for i in range(T.m)] + ["multiplicity", "value", "stderr"]
    errs = per_entry if per_entry is not None else [""] * len(T.values)
    rows = [list(map(int, a)) + [int(mu), float(v), e if e == "" else float(e)]
            for a, mu, v, e in zip(alphas, T.multiplicities, T.values, errs)]
    return result, ("tensor.csv", header, rows)


def _mixture_table(hyp):
    C = hyp.components.centers if hasattr(hyp.components, "centers") else hyp.components.betas
    header = ["candidate", "weight"] + [f"c_{i + 1}" for i in range(C.shape[1])]
    return header, [[j, float(hyp.weights[j])] + [float(v) for v in C[j]] for j in range(C.shape[0])]


def _monotone(hist) -> bool:
    return bool(np.all(np.diff(np.asarray(hist)) >= -1e-12))


def _run_gmm(cfg: GMMRun, threads: int):
    truth = _model_required(cfg.data, "gmm", "learn-gmm")
    s = sample(GenSpec(truth, cfg.data.n, cfg.seed))
    base = GMMConfig.practical() if cfg.practical else GMMConfig()
    gcfg = _constants(GMMConfig, base, cfg.constants)
    k = cfg.k or truth.k
    if cfg.task == "parameters":
        p_min = cfg.p_min if cfg.p_min is not None else float(truth.weights.min())
        est = gmm_parameter_estimate(s, k, p_min, cfg.eps, gcfg)
        perr, werr = match_error(est, truth)
        result = {"task": "parameters", "estimate": {"weights": est.weights, "means": est.means},
                  "match_error": {"parameter": perr, "weight": werr}}
        return result, ("params.csv", *_param_table(est, "mu"))
    hyp = gmm_density_estimate(s, k, cfg.d, cfg.eps, gcfg)
    tv, se = tv_estimate(hyp, GaussianMixtureDensity.from_params(truth), cfg.tv_samples, cfg.seed)
    result = {"task": "density", "n_candidates": len(hyp.weights), "weights": hyp.weights,
              "objective_monotone": _monotone(hyp.objective_history), "iterations": len(hyp.objective_history) - 1,
              "tv": {"estimate": tv, "stderr": se}}
    return result, ("candidates.csv", *_mixture_table(hyp))


def _glm_result(fit, truth: GLMParams, F_norm_sq: float, err: float):
    return {"estimate": {"a": fit.params.a, "W": fit.params.W, "activation": fit.params.activation},
            "n_candidates": fit.n_candidates, "reduced_dim": fit.reduced_dim, "scale": fit.scale,
            "l2_error_sq": err, "target_norm_sq": F_norm_sq}


def _glm_table(fit):
    W = fit.params.W
    header = ["component", "a"] + [f"w_{i + 1}" for i in range(W.shape[1])]
    return header, [[j, float(fit.params.a[j])] + [float(v) for v in W[j]] for j in range(W.shape[0])]


def _zero_like(F: GLMParams) -> GLMParams:
    return GLMParams(np.zeros(0), np.zeros((0, F.m)), 0.0, F.activation)


def _run_relu(cfg: ReluRun, threads: int):
    truth = _model_required(cfg.data, "glm", "learn-relu")
    if truth.activation != "relu":
        raise ConfigError("data.model.activation: learn-relu needs a relu model")
    s = sample(GenSpec(truth, cfg.data.n, cfg.seed))
    fit = relu_pac_learn(s, cfg.k or truth.k, cfg.d, cfg.eps, _constants(GLMConfig, GLMConfig(), cfg.constants))
    err = l2_distance_sq(fit.params, truth)
    F2 = l2_distance_sq(_zero_like(truth), truth)
    result = _glm_result(fit, truth, F2, err)
    result["bound"] = cfg.eps ** 2 * (F2 + truth.sigma ** 2)
    result["within_bound"] = bool(err <= result["bound"])
    return result, ("params.csv", *_glm_table(fit))


def _run_glm(cfg: GLMRun, threads: int):
    truth = _model_required(cfg.data, "glm", "learn-glm")
    activation = cfg.activation or truth.activation
    s = sample(GenSpec(truth, cfg.data.n, cfg.seed))
    gcfg = _constants(GLMConfig, GLMConfig(gram_seed=cfg.seed), cfg.constants)
    fit = glm_learn(s, cfg.k or truth.k, cfg.d, cfg.eps, activation, cfg.L, gcfg)
    err = l2_distance_sq(fit.params, truth, n_mc=cfg.l2_samples, seed=cfg.seed)
    F2 = l2_distance_sq(_zero_like(truth), truth, n_mc=cfg.l2_samples, seed=cfg.seed)
    result = _glm_result(fit, truth, F2, err)
    result["relative_l2"] = math.sqrt(err / F2) if F2 > 0 else math.sqrt(err)
    return result, ("params.csv", *_glm_table(fit))


def _run_mlr(cfg: MLRRun, threads: int):
    truth = _model_required(cfg.data, "mlr", "learn-mlr")
    if cfg.noiseless and truth.sigma != 0:
        raise ConfigError("noiseless: set while data.model.sigma is nonzero")
    s = sample(GenSpec(truth, cfg.data.n, cfg.seed))
    base = MLRConfig.practical() if cfg.practical else MLRConfig()
    mcfg = _constants(MLRConfig, base, cfg.constants)
    k = cfg.k or truth.k
    p_min = cfg.p_min if cfg.p_min is not None else float(truth.weights.min())
    sigma = cfg.sigma if cfg.sigma is not None else truth.sigma
    if cfg.task == "parameters":
        Delta = cfg.Delta if cfg.Delta is not None else min_separation(truth)
        est, covers = mlr_parameter_estimate(s, k, p_min, sigma, Delta, cfg.eps, sigma == 0, mcfg,
                                             return_trace=True)
        perr, werr = match_error(est, truth)
        result = {"task": "parameters", "estimate": {"weights": est.weights, "betas": est.betas},
                  "match_error": {"parameter": perr, "weight": werr},
                  "cover_radii": [c.r for c in covers], "cover_sizes": [c.s for c in covers],
                  "true_radii": [c.radius_to(truth.betas) for c in covers]}
        return result, ("params.csv", *_param_table(est, "beta"))
    hyp = mlr_density_estimate(s, k, p_min, sigma, cfg.eps, mcfg)
    tv, se = tv_estimate(hyp, RegressionMixtureDensity.from_params(truth), cfg.tv_samples, cfg.seed)
    result = {"task": "density", "n_candidates": len(hyp.weights), "weights": hyp.weights,
              "objective_monotone": _monotone(hyp.objective_history), "tv": {"estimate": tv, "stderr": se}}
    return result, ("candidates.csv", *_mixture_table(hyp))


def _run_hyperplanes(cfg: HyperplaneRun, threads: int):
    truth = _model_required(cfg.data, "hyperplane", "learn-hyperplanes")
    s = sample(GenSpec(truth, cfg.data.n, cfg.seed))
    base = HyperplaneConfig.practical() if cfg.practical else HyperplaneConfig()
    hcfg = _constants(HyperplaneConfig, base, cfg.constants)
    Delta = cfg.Delta if cfg.Delta is not None else min_separation(truth, up_to_sign=True)
    est = hyperplane_learn(s, cfg.k or truth.k, Delta, cfg.d, hcfg)
    perr, werr = match_error(est, truth, up_to_sign=True)
    result = {"estimate": {"weights": est.weights, "normals": est.normals},
              "match_error": {"parameter": perr, "weight": werr}}
    return result, ("params.csv", *_param_table(est, "v"))


RUNNERS = {"cover": _run_cover, "moments": _run_moments, "learn-gmm": _run_gmm, "learn-relu": _run_relu,
           "learn-glm": _run_glm, "learn-mlr": _run_mlr, "learn-hyperplanes": _run_hyperplanes}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polycover", description="Polynomial-subspace covers and moment learners.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", type=Path, help="JSON configuration or a manifest.json from an earlier run")
    p.add_argument("--out", type=Path, help="output directory (default polycover-out/<subcommand>)")
    p.add_argument("--seed", type=int, help="64-bit seed overriding the configuration")
    p.add_argument("--threads", type=int, help=f"thread count, 0 = all cores (overrides ${THREADS_ENV})")
    p.add_argument("--noiseless", action="store_true", help="learn-mlr: planted sigma 0, exact recovery")
    p.add_argument("--schema", action="store_true", help="print the configuration JSON schema and exit")
    return p


def _load_config(sub: str, path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: the top level must be a JSON object")
    if "manifest_version" in raw:
        if raw.get("subcommand") != sub:
            raise ConfigError(f"subcommand: manifest was written by '{raw.get('subcommand')}', not '{sub}'")
        raw = raw.get("config")
        if not isinstance(raw, dict):
            raise ConfigError("config: manifest has no configuration object")
    return raw


def _resolve_threads(flag: int | None, cfg_threads: int) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(THREADS_ENV)
    if env not in (None, ""):
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"${THREADS_ENV}: expected a non-negative integer, got {env!r}") from None
        if value < 0:
            raise ConfigError(f"${THREADS_ENV}: expected a non-negative integer, got {env!r}")
        return value
    return cfg_threads


def _versions() -> dict:
    return {"polycover": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pydantic": pydantic.__version__, "threadpoolctl": threadpoolctl.__version__}


def _validation_message(exc: ValidationError) -> str:
    lines = []
    for e in exc.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"config error at {loc}: {e['msg']}")
    return "\n".join(lines)


def run(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    sub = args.subcommand
    if args.schema:
        print(json.dumps(json_schema(sub), indent=2))
        return 0
    try:
        raw = _load_config(sub, args.config)
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.out is not None:
            raw["out"] = str(args.out)
        if args.noiseless:
            if sub != "learn-mlr":
                raise ConfigError("--noiseless: only learn-mlr accepts this flag")
            raw["noiseless"] = True
        cfg = SCHEMAS[sub].model_validate(raw)
        if sub == "learn-mlr" and cfg.noiseless and cfg.data.model.sigma != 0:
            dump = cfg.model_dump()
            dump["data"]["model"]["sigma"] = 0.0
            cfg = MLRRun.model_validate(dump)
        threads = _resolve_threads(args.threads, cfg.threads)
    except ValidationError as exc:
        print(_validation_message(exc), file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return 2

    if sub == "selftest":
        with threadpoolctl.threadpool_limits(limits=1):
            failures = run_selftest()
        print(f"{len(CHECKS) - failures} passed, {failures} failed")
        return 0 if failures == 0 else 1

    out = Path(cfg.out) if cfg.out is not None else Path("polycover-out") / sub
    t0 = time.perf_counter()
    try:
        with threadpoolctl.threadpool_limits(limits=1):
            result, (csv_name, header, rows) = RUNNERS[sub](cfg, threads)
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return 2
    except PreconditionError as exc:
        print(f"precondition rejected: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1
    wall = time.perf_counter() - t0

    out.mkdir(parents=True, exist_ok=True)
    result = {"subcommand": sub, "seed": cfg.seed, **result}
    text = dumps(result) + "\n"
    (out / "result.json").write_text(text)
    _write_csv(out / csv_name, header, rows)
    manifest = {"manifest_version": MANIFEST_VERSION, "subcommand": sub, "seed": cfg.seed, "threads": threads, "blas_threads": 1,
                "config": cfg.model_dump(mode="json"), "versions": _versions(), "wall_time_s": wall,
                "argv": list(sys.argv[1:] if argv is None else argv),
                "result_sha256": hashlib.sha256(text.encode()).hexdigest(), "csv": csv_name}
    (out / "manifest.json").write_text(dumps(manifest) + "\n")
    print(f"{sub}: wrote {out / 'result.json'} ({wall:.2f} s)")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
