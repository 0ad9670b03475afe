"""Command-line front end: ``simulate``, ``filter`` and ``validate``.

Observations are read from CSV (``time,y`` or ``time,y1,...,yK``) and
results are written as JSON lines, one record per observation, with floats
printed to 17 significant digits so that output is bit-stable.

Exit codes: 0 success, 1 input error, 2 numerical error (including a failed
validation verdict), 3 internal error.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import filtering, oracle
from .errors import InputError, NumericalError
from .models import Model, Observation, WFModel, make_model

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_INTERNAL = 0, 1, 2, 3

MODEL_KEYS = ("delta", "gamma", "sigma2", "lambda_em", "alpha")
DEFAULTS = {
    "prune_eps": filtering.DEFAULT_PRUNE_EPS,
    "seed": 0,
    "particles": 10_000,
    "replicates": 20,
    "full_mixture": False,
    "n_obs": 50,
    "gap": 0.1,
    "wf_total": 10,
    "wf_step": oracle.WF_STEP,
    "corrupt_flow": None,
}
FILE_KEYS = {"model", "obs", "out", "signal_out", *MODEL_KEYS, *DEFAULTS}


@dataclass
class RunConfig:
    subcommand: str
    model: Model
    obs: str | None = None
    out: str | None = None
    signal_out: str | None = None
    prune_eps: float = filtering.DEFAULT_PRUNE_EPS
    seed: int = 0
    particles: int = 10_000
    replicates: int = 20
    full_mixture: bool = False
    n_obs: int = 50
    gap: float = 0.1
    wf_total: int = 10
    wf_step: float = oracle.WF_STEP
    corrupt_flow: float | None = None
    extra: dict = field(default_factory=dict)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualfilter", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in ("simulate", "filter", "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file of flat key/value settings mirroring the flags")
        p.add_argument("--model", choices=["cir", "ou", "wf"])
        p.add_argument("--delta", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--sigma2", type=float)
        p.add_argument("--lambda-em", dest="lambda_em", type=float)
        p.add_argument("--alpha", help="OU stationary variance, or comma-separated WF mutation parameters")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--seed", type=int)
        if name in ("filter", "validate"):
            p.add_argument("--obs", help="observation CSV")
            p.add_argument("--prune-eps", dest="prune_eps", type=float)
        if name == "filter":
            p.add_argument("--full-mixture", dest="full_mixture", action="store_const", const=True)
        if name == "validate":
            p.add_argument("--particles", type=int)
            p.add_argument("--replicates", type=int)
            p.add_argument("--wf-step", dest="wf_step", type=float)
            p.add_argument("--corrupt-flow", dest="corrupt_flow", type=float, help=argparse.SUPPRESS)
        if name == "simulate":
            p.add_argument("--n-obs", dest="n_obs", type=int)
            p.add_argument("--gap", type=float)
            p.add_argument("--wf-total", dest="wf_total", type=int)
            p.add_argument("--wf-step", dest="wf_step", type=float)
            p.add_argument("--signal-out", dest="signal_out")
    return parser


def _parse_alpha(value, variant: str):
    if value is None:
        return None
    if variant == "wf":
        if isinstance(value, str):
            parts = [v for v in value.split(",") if v.strip()]
        elif isinstance(value, (list, tuple)):
            parts = list(value)
        else:
            parts = [value]
        try:
            return tuple(float(v) for v in parts)
        except ValueError:
            raise InputError(f"--alpha must be a comma-separated list of numbers, got {value!r}") from None
    try:
        return float(value)
    except (TypeError, ValueError):
        raise InputError(f"--alpha must be a number for the {variant} model, got {value!r}") from None


def parse_config(argv: Sequence[str] | None = None) -> RunConfig:
    """Merge defaults, an optional JSON config file and command-line flags (highest precedence)."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:
            raise
        raise InputError("invalid command line") from None
    settings: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config file {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise InputError("config file must hold a flat JSON object")
        loaded = {k.replace("-", "_"): v for k, v in loaded.items()}
        unknown = sorted(set(loaded) - FILE_KEYS)
        if unknown:
            raise InputError(f"unknown config key(s): {', '.join(unknown)}")
        settings.update(loaded)
    for key, value in vars(args).items():
        if key in ("config", "subcommand") or value is None:
            continue
        settings[key] = value

    variant = settings.pop("model", None)
    if variant is None:
        raise InputError("missing required setting: model")
    variant = str(variant).lower()
    params = {k: settings.pop(k) for k in MODEL_KEYS if k in settings}
    if "alpha" in params:
        params["alpha"] = _parse_alpha(params["alpha"], variant)
    model = make_model(variant, **params)

    cfg = dict(DEFAULTS)
    cfg.update(settings)
    config = RunConfig(subcommand=args.subcommand, model=model, **cfg)
    _validate(config)
    return config


def _validate(config: RunConfig) -> None:
    if not 0 <= config.prune_eps < 1:
        raise InputError(f"prune threshold must lie in [0, 1), got {config.prune_eps}")
    if config.subcommand in ("filter", "validate"):
        if not config.obs:
            raise InputError("missing required setting: obs")
        if not os.path.isfile(config.obs):
            raise InputError(f"observation file not found: {config.obs}")
    for path in (config.out, config.signal_out):
        if path:
            parent = os.path.dirname(os.path.abspath(path))
            if not os.path.isdir(parent):
                raise InputError(f"output directory does not exist: {parent}")
    if config.particles < 100:
        raise InputError(f"particle count must be at least 100, got {config.particles}")
    if config.replicates < 2:
        raise InputError(f"need at least two replicates, got {config.replicates}")


def read_observations(path: str, model: Model) -> list[Observation]:
    """Parse an observation CSV for ``model``, validating times and counts."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if isinstance(model, WFModel):
        expected = ["time"] + [f"y{j + 1}" for j in range(model.dim)]
    else:
        expected = ["time", "y"]
    if header != expected:
        raise InputError(f"{path}:1: expected header {','.join(expected)}, got {','.join(header)}")
    out: list[Observation] = []
    prev = -math.inf
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(expected):
            raise InputError(f"{path}:{lineno}: expected {len(expected)} fields, got {len(row)}")
        try:
            t = float(row[0])
        except ValueError:
            raise InputError(f"{path}:{lineno}: bad time {row[0]!r}") from None
        if not math.isfinite(t) or t < 0:
            raise InputError(f"{path}:{lineno}: time must be finite and non-negative, got {row[0]!r}")
        if t <= prev:
            raise InputError(f"{path}:{lineno}: times must be strictly increasing ({t} after {prev})")
        prev = t
        try:
            if model.variant == "ou":
                y = float(row[1])
            else:
                vals = [float(c) for c in row[1:]]
                if any(v < 0 or not v.is_integer() for v in vals):
                    raise InputError(f"{path}:{lineno}: counts must be non-negative integers, got {row[1:]}")
                y = tuple(int(v) for v in vals) if isinstance(model, WFModel) else int(vals[0])
            y = model.check_observation(y)
        except ValueError as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"{path}:{lineno}: bad value in {row[1:]}") from None
        out.append(Observation(t, y))
    return out


def _num(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x):
            text = format(x, ".17g")
            return text if any(c in text for c in ".en") else text + ".0"
        return json.dumps(x)
    return None


def dumps(obj) -> str:
    """JSON with every float printed to 17 significant digits."""
    s = _num(obj)
    if s is not None:
        return s
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    if isinstance(obj, (np.integer,)):
        return str(int(obj))
    return json.dumps(obj)


def _theta_out(theta):
    if theta is None:
        return None
    if isinstance(theta, tuple):
        return list(theta)
    return float(theta)


def _open_out(path: str | None):
    if path:
        return open(path, "w", newline="")
    return contextlib.nullcontext(sys.stdout)


def filter_records(trace: filtering.FilterTrace, full_mixture: bool = False) -> list[dict]:
    cum = 0.0
    records = []
    for i, rec in enumerate(trace):
        cum += rec.log_density
        mean, var = filtering.moments(rec.state)
        out = {
            "step": i,
            "time": float(rec.time),
            "theta": _theta_out(rec.state.theta),
            "support_size": len(rec.state),
            "pruned_mass": float(rec.pruned_mass),
            "mean": mean,
            "variance": var,
            "log_density": float(rec.log_density),
            "cumulative_log_likelihood": cum,
            "outside_proof_range": bool(rec.outside_proof_range),
        }
        if full_mixture and rec.state.support is not None:
            out["mixture"] = [[list(m), w] for m, w in zip(rec.state.support, rec.state.weights.tolist())]
        records.append(out)
    return records


def run_filter(config: RunConfig) -> int:
    obs = read_observations(config.obs, config.model)
    if not obs:
        raise InputError(f"{config.obs}: no observations")
    trace = filtering.run_filter(config.model, obs, prune_eps=config.prune_eps)
    with _open_out(config.out) as fh:
        for rec in filter_records(trace, config.full_mixture):
            fh.write(dumps(rec) + "\n")
    return EXIT_OK


class _CorruptedFlow:
    """Wraps a model so its dual-parameter flow runs ``factor`` times too fast."""

    def __init__(self, model: Model, factor: float):
        self._model = model
        self._factor = factor

    def __getattr__(self, name):
        return getattr(self._model, name)

    def theta_flow(self, theta, t):
        return self._model.theta_flow(theta, self._factor * t)


def run_validate(config: RunConfig) -> int:
    obs = read_observations(config.obs, config.model)
    if not obs:
        raise InputError(f"{config.obs}: no observations")
    exact_model = config.model
    if config.corrupt_flow is not None:
        exact_model = _CorruptedFlow(config.model, config.corrupt_flow)
    trace = filtering.run_filter(exact_model, obs, prune_eps=config.prune_eps)
    pf = oracle.particle_filter(config.model, obs, config.particles, seed=config.seed,
                                replicates=config.replicates, wf_step=config.wf_step)
    worst = 0.0
    ll = trace.cumulative_log_likelihood()
    with _open_out(config.out) as fh:
        for i, rec in enumerate(trace):
            mean, var = filtering.moments(rec.state)
            zm = (np.asarray(mean) - pf.mean[i]) / pf.mean_se[i]
            zv = (np.asarray(var) - pf.var[i]) / pf.var_se[i]
            zl = (ll[i] - pf.loglik[i]) / pf.loglik_se[i]
            worst = max(worst, float(np.max(np.abs(zm))), float(np.max(np.abs(zv))), abs(float(zl)))
            fh.write(dumps({"step": i, "time": float(rec.time), "z_mean": zm, "z_variance": zv,
                            "z_log_likelihood": float(zl)}) + "\n")
        verdict = "pass" if worst < 3.0 else "fail"
        fh.write(dumps({"verdict": verdict, "max_abs_z": worst, "particles": config.particles,
                        "replicates": config.replicates}) + "\n")
    return EXIT_OK if verdict == "pass" else EXIT_NUMERICAL


def run_simulate(config: RunConfig) -> int:
    sim = oracle.SimulationConfig(config.model, config.n_obs, config.gap, seed=config.seed,
                                  wf_step=config.wf_step, wf_total=config.wf_total)
    times, path, obs = oracle.simulate_hmm(sim)
    wf = isinstance(config.model, WFModel)
    K = config.model.dim
    with _open_out(config.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time"] + ([f"y{j + 1}" for j in range(K)] if wf else ["y"]))
        for o in obs:
            ys = list(o.y) if wf else [o.y]
            w.writerow([format(o.time, ".17g")] + [v if isinstance(v, int) else format(v, ".17g") for v in ys])
    if config.signal_out:
        with open(config.signal_out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time"] + ([f"x{j + 1}" for j in range(K)] if wf else ["x"]))
            for t, x in zip(times, path):
                xs = list(np.atleast_1d(x))
                w.writerow([format(float(t), ".17g")] + [format(float(v), ".17g") for v in xs])
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = parse_config(argv)
        handler = {"simulate": run_simulate, "filter": run_filter, "validate": run_validate}
        return handler[config.subcommand](config)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        logger.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
