"""Command-line driver: generate, train, tear, truncate, eval, pipeline.

Every command reads an optional JSON config and applies flag overrides on top
of it.  Primary artifacts depend only on the resolved config and seed; wall
times and timestamps go to ``manifest.json`` alone.

Exit codes: 0 success, 2 usage, 3 data error, 4 infeasible tear,
5 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import datetime as _dt
import hashlib
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .daggnn import GnnArch, SingularMixingError, model_to_dict, train_daggnn
from .datagen import prior_lower_triangular, random_triangular_w, sample_nonlinear
from .graph import is_acyclic, nonzero_streams
from .io import (
    DataError,
    read_csv,
    read_json,
    read_matrix,
    read_prior,
    write_csv,
    write_json,
    write_matrix,
    write_prior,
)
from .linear import TrainConfig, TrainingDivergedError, train_linear
from .metrics import score_report
from .milp import InfeasibleTearError
from .postprocess import TearConfig, TearError, preprocess, tear_until_acyclic, truncate_until_acyclic

log = logging.getLogger("tearlearn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4, 5
SCORES_SCHEMA = "tearlearn.scores"
SCORES_VERSION = 1
MODELS = ("linear", "daggnn")


class UsageError(ValueError):
    pass


# Per-model training defaults.  The variational model needs mini-batches and
# clipping to make progress in a few epochs.
MODEL_TRAIN_DEFAULTS = {
    "linear": {"grad_clip": 1.0},
    "daggnn": {
        "epochs": 20,
        "learning_rate": 0.03,
        "batch_size": 100,
        "grad_clip": 5.0,
        "h_mode": {"variant": "poly", "gamma": None},
    },
}
# Pipeline-level thinning; ``TearConfig`` itself defaults to no threshold.
PIPELINE_TEAR_DEFAULTS = {"omega": 0.1}


@dataclass
class GenerateConfig:
    d: int = 10
    n: int = 5000
    edge_prob: float = 0.3
    weight_low: float = 0.5
    weight_high: float = 2.0
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.d < 2:
            raise UsageError("generate.d must be at least 2")
        if self.n < 1:
            raise UsageError("generate.n must be at least 1")


@dataclass
class PipelineConfig:
    seed: int = 0
    model: str = "daggnn"
    output_dir: str = "out"
    data: str | None = None
    prior: str | None = None
    truth: str | None = None
    matrix: str | None = None
    standardize: bool = True
    use_prior: bool = True
    generate: GenerateConfig = field(default_factory=GenerateConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    arch: GnnArch = field(default_factory=GnnArch)
    tear: TearConfig = field(default_factory=TearConfig)

    def to_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        for key in ("generate", "train", "arch", "tear"):
            out[key] = asdict(out[key])
        return out

    @classmethod
    def from_dict(cls, obj, pipeline=False):
        obj = dict(obj)
        unknown = set(obj) - {f.name for f in fields(cls)}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        model = obj.get("model", "daggnn")
        if model not in MODELS:
            raise UsageError(f"model must be one of {MODELS}, got {model!r}")
        train = {**MODEL_TRAIN_DEFAULTS[model], **obj.get("train", {})}
        tear = {**(PIPELINE_TEAR_DEFAULTS if pipeline else {}), **obj.get("tear", {})}
        try:
            obj["generate"] = GenerateConfig(**obj.get("generate", {}))
            obj["train"] = TrainConfig(**train)
            obj["arch"] = GnnArch(**obj.get("arch", {}))
            obj["tear"] = TearConfig(**tear)
            cfg = cls(**obj)
        except TypeError as exc:
            raise UsageError(f"bad config: {exc}") from exc
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        cfg.train.seed = cfg.seed
        return cfg


def config_hash(cfg):
    text = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _versions():
    import scipy

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "tearlearn": __version__,
    }


class Manifest:
    """Collects per-command timing; the only artifact allowed to vary between runs."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.config = cfg.to_dict()
        self.config_sha256 = config_hash(cfg)
        self.steps = {}

    def record(self, name, start, extra=None):
        self.steps[name] = {
            "started": _dt.datetime.fromtimestamp(start, _dt.timezone.utc).isoformat(),
            "wall_time_s": round(time.time() - start, 3),
            **(extra or {}),
        }

    def write(self):
        path = os.path.join(self.cfg.output_dir, "manifest.json")
        write_json(
            path,
            {
                "config": self.config,
                "config_sha256": self.config_sha256,
                "seeds": {"run": self.cfg.seed, "train": self.cfg.train.seed},
                "standardized": self.cfg.standardize,
                "versions": _versions(),
                "written": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                "steps": self.steps,
            },
        )


def _out(cfg, *parts):
    return os.path.join(cfg.output_dir, *parts)


def _standardize(X):
    sd = X.std(axis=0)
    if np.any(sd == 0):
        raise DataError(f"constant columns cannot be standardized: {np.flatnonzero(sd == 0).tolist()}")
    return (X - X.mean(axis=0)) / sd


def _load_data(cfg):
    if cfg.data is None:
        raise UsageError("no data file given (--data or config 'data')")
    X, names = read_csv(cfg.data)
    return (_standardize(X) if cfg.standardize else X), names


def _load_prior(cfg, d):
    if cfg.prior is None or not cfg.use_prior:
        return None
    prior = read_prior(cfg.prior)
    if prior.dim != d:
        raise DataError(f"prior has dim {prior.dim}, expected {d}")
    return prior


def _load_truth(path):
    obj = read_json(path)
    try:
        d = int(obj["dim"])
        return np.asarray(obj["values"], dtype=float).reshape(d, d)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed truth: {exc}") from exc


def cmd_generate(cfg, manifest):
    t0 = time.time()
    g = cfg.generate
    seq = np.random.SeedSequence(cfg.seed)
    w_seed, noise_seed = (int(s.generate_state(1)[0]) for s in seq.spawn(2))
    truth = random_triangular_w(g.d, g.edge_prob, (g.weight_low, g.weight_high), seed=w_seed)
    truth.seed = cfg.seed
    X = sample_nonlinear(truth, g.n, noise_seed, g.noise_scale)
    write_csv(_out(cfg, "data.csv"), X)
    write_json(_out(cfg, "truth.json"), truth.to_dict())
    write_prior(_out(cfg, "prior.json"), prior_lower_triangular(g.d))
    manifest.record("generate", t0)
    cfg.data = cfg.data or _out(cfg, "data.csv")
    cfg.truth = cfg.truth or _out(cfg, "truth.json")
    cfg.prior = cfg.prior or _out(cfg, "prior.json")


def cmd_train(cfg, manifest):
    t0 = time.time()
    X, _ = _load_data(cfg)
    if cfg.model == "linear":
        res = train_linear(X, cfg.train)
    else:
        res = train_daggnn(X, cfg.train, cfg.arch)
        write_json(_out(cfg, "checkpoint.json"), model_to_dict(res.model, cfg.seed))
    write_matrix(_out(cfg, "a_best.json"), res.a_best)
    write_json(
        _out(cfg, "train_log.json"),
        {
            "model": cfg.model,
            "h_trajectory": [{"outer": k, "h": h} for k, h in res.h_trajectory],
            "alpha_trajectory": res.alpha_trajectory,
            "beta_trajectory": res.beta_trajectory,
            "l1_trajectory": res.l1_trajectory,
            "final_h": res.final_h,
            "best_h": res.best_h,
            "loss_best": res.loss_best,
            "converged": res.converged,
        },
    )
    manifest.record("train", t0, {"final_h": res.final_h})
    cfg.matrix = cfg.matrix or _out(cfg, "a_best.json")
    return res


def _write_repair(cfg, subdir, report, method):
    if not is_acyclic(nonzero_streams(report.a_final), report.a_final.shape[0]):
        raise TearError(f"{method} produced a cyclic matrix")
    write_matrix(_out(cfg, subdir, "a_final.json"), report.a_final)
    write_json(_out(cfg, subdir, "tear_report.json"), {"method": method, **report.to_dict()})


def _matrix(cfg):
    if cfg.matrix is None:
        raise UsageError("no matrix given (--matrix or config 'matrix')")
    return read_matrix(cfg.matrix)


def cmd_tear(cfg, manifest, subdir=""):
    t0 = time.time()
    A = _matrix(cfg)
    prior = _load_prior(cfg, A.shape[0])
    report = tear_until_acyclic(preprocess(A, prior, cfg.tear.omega), prior, cfg.tear)
    _write_repair(cfg, subdir, report, "tear")
    manifest.record("tear", t0, {"rounds": report.rounds})
    return report


def cmd_truncate(cfg, manifest, subdir=""):
    t0 = time.time()
    report = truncate_until_acyclic(_matrix(cfg))
    _write_repair(cfg, subdir, report, "truncate")
    manifest.record("truncate", t0)
    return report


def _scores(cfg, estimates):
    truth = _load_truth(cfg.truth) if cfg.truth else None
    X = _load_data(cfg)[0] if cfg.data else None
    if truth is None and X is None:
        raise UsageError("eval needs a truth file, a data file, or both")
    results = {}
    for label, A in estimates.items():
        acyclic = is_acyclic(nonzero_streams(A), A.shape[0])
        if X is not None and X.shape[1] != A.shape[0]:
            raise DataError(f"data has {X.shape[1]} columns, matrix has dim {A.shape[0]}")
        rep = score_report(A, truth, X if acyclic else None)
        results[label] = {**rep.to_dict(), "acyclic": acyclic, "edges": int(np.count_nonzero(A))}
    return {"schema": SCORES_SCHEMA, "schema_version": SCORES_VERSION, "results": results}


def cmd_eval(cfg, manifest, estimates=None):
    t0 = time.time()
    if estimates is None:
        estimates = {"estimate": _matrix(cfg)}
    scores = _scores(cfg, estimates)
    write_json(_out(cfg, "scores.json"), scores)
    manifest.record("eval", t0)
    return scores


def cmd_pipeline(cfg, manifest):
    if cfg.data is None:
        cmd_generate(cfg, manifest)
    cmd_train(cfg, manifest)
    tear = cmd_tear(cfg, manifest, "tear")
    trunc = cmd_truncate(cfg, manifest, "truncate")
    return cmd_eval(cfg, manifest, {"tear": tear.a_final, "truncate": trunc.a_final})


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "tear": cmd_tear,
    "truncate": cmd_truncate,
    "eval": cmd_eval,
    "pipeline": cmd_pipeline,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--model", choices=MODELS)
    common.add_argument("--h-mode", choices=("exp", "poly"))
    common.add_argument("--omega", type=float)
    common.add_argument("--weight-mode", choices=("abs", "square"))
    common.add_argument("--out", help="output directory")
    common.add_argument("--data", help="dataset CSV")
    common.add_argument("--prior", help="prior JSON")
    common.add_argument("--truth", help="ground-truth JSON")
    common.add_argument("--matrix", help="weight matrix JSON")
    common.add_argument("--d", type=int, help="generate: number of variables")
    common.add_argument("--n", type=int, help="generate: number of samples")
    common.add_argument("--no-standardize", action="store_true")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="tearlearn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def resolve_config(args):
    raw = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        if not text.strip():
            raise UsageError(f"{args.config}: config file is empty")
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
        if not isinstance(raw, dict) or not raw:
            raise UsageError(f"{args.config}: config must be a non-empty JSON object")
    raw = copy.deepcopy(raw)
    for key, attr in (("seed", "seed"), ("model", "model"), ("output_dir", "out"), ("data", "data"),
                      ("prior", "prior"), ("truth", "truth"), ("matrix", "matrix")):
        if getattr(args, attr) is not None:
            raw[key] = getattr(args, attr)
    if args.no_standardize:
        raw["standardize"] = False
    if args.h_mode is not None:
        raw.setdefault("train", {})["h_mode"] = {"variant": args.h_mode, "gamma": None}
    for key, attr in (("omega", "omega"), ("weight_mode", "weight_mode")):
        if getattr(args, attr) is not None:
            raw.setdefault("tear", {})[key] = getattr(args, attr)
    for key in ("d", "n"):
        if getattr(args, key) is not None:
            raw.setdefault("generate", {})[key] = getattr(args, key)
    return PipelineConfig.from_dict(raw, pipeline=args.command == "pipeline")


def _thread_limit():
    value = os.environ.get("TEARLEARN_THREADS")
    if not value:
        return None
    try:
        n = int(value)
    except ValueError:
        raise UsageError(f"TEARLEARN_THREADS must be a positive integer, got {value!r}") from None
    if n < 1:
        raise UsageError("TEARLEARN_THREADS must be a positive integer")
    return n


def run(args):
    cfg = resolve_config(args)
    limit = _thread_limit()
    manifest = Manifest(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    if limit is None:
        COMMANDS[args.command](cfg, manifest)
    else:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=limit):
            COMMANDS[args.command](cfg, manifest)
    manifest.write()


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleTearError as exc:
        print(f"infeasible tear: {exc}", file=sys.stderr)
        for s in exc.streams:
            print(f"  untearable stream {s}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (TrainingDivergedError, SingularMixingError, FloatingPointError, OverflowError, TearError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ValueError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
