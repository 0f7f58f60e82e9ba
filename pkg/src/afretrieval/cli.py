"""Command-line interface.

Every option can also come from ``--config FILE.json`` or an environment
variable ``AFRETRIEVAL_<OPTION>`` (upper case, dashes as underscores). The
order of precedence is flag, then config file, then environment, then the
built-in default. Data or result paths go to stdout, logs to stderr.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .ambiguity import ambiguity_map, inner_product_map
from .harness import DEFAULT_DELTA_GRID, ExperimentConfig, init_comparison, run_scenario, success_rate_map
from .initializer import ConvergenceError, InitConfig, run_initialization
from .io import (
    dumps_json,
    read_af,
    read_json,
    read_mask,
    read_signal,
    write_af,
    write_inner_product_map,
    write_json,
    write_mask,
    write_signal,
    write_trace,
)
from .sampling import NoiseSpec, add_noise, apply_mask, make_mask
from .solver import DivergenceError
from .waveform import SupportError, WaveformRecipe, generate

logger = logging.getLogger("afretrieval")
ENV_PREFIX = "AFRETRIEVAL_"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {v!r}")


def _floats(v):
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(x) for x in str(v).split(",") if x.strip()]


# (flag, type, default, help); default None means "unset"
COMMON = [
    ("--seed", int, 0, "base random seed"),
    ("--deterministic", _bool, True, "omit wall-clock timings so repeated runs are byte-identical"),
    ("--threads", int, 1, "worker processes for experiment batches"),
    ("--log-level", str, "WARNING", "logging level for stderr"),
]

INIT_OPTS = [
    ("--iters-T", int, 2, "initializer iterations"),
    ("--lam", float, 10.0, "proximal regularization weight"),
    ("--lam-mode", str, "fixed", "fixed | premise"),
    ("--scale-mode", str, "fit_scale", "fit_scale | fourth_root"),
    ("--power-iters", int, 200, "power-iteration budget"),
    ("--power-tol", float, 1e-10, "power-iteration tolerance"),
]

SOLVER_OPTS = [
    ("--gamma1", float, 0.1, "smoothing decay factor"),
    ("--gamma", float, 0.1, "decay trigger ratio"),
    ("--alpha", float, 0.6, "step size"),
    ("--mu0", float, 65.0, "initial smoothing"),
    ("--epsilon", float, 1e-10, "gradient-norm stopping tolerance"),
    ("--max-iters", int, 10000, "iteration budget per solve"),
    ("--batch-size", int, None, "minibatch size (default N)"),
    ("--radius0", float, 0.1, "trust radius for mu0, in units of the signal norm"),
    ("--mask-mode", str, "exclude", "exclude | zero_fill"),
]

COMMANDS = {
    "generate": (
        "synthesize a test waveform",
        [
            ("--kind", str, "gaussian_spectrum", "gaussian_spectrum | lfm | nlfm"),
            ("--n-len", int, 128, "number of samples N"),
            ("--limit", str, "band", "band | time (gaussian_spectrum only)"),
            ("--width", int, None, "support width (default ceil((N-1)/2))"),
            ("--center-hz", float, 800.0, "spectrum centre"),
            ("--cutoff", float, 150.0, "Gaussian std in usec^-1"),
            ("--pulse-T", float, None, "chirp duration in seconds"),
            ("--sweep-df", float, 128e3, "chirp sweep"),
            ("--nlfm-L", int, 1, "number of NLFM cosine terms"),
            ("--dt", float, None, "sampling interval in seconds"),
            ("--out", str, None, "output signal CSV"),
        ],
    ),
    "af": (
        "compute the AF of a signal",
        [
            ("--in", str, None, "input signal CSV"),
            ("--out", str, None, "output AF CSV"),
            ("--complex", _bool, False, "write the complex inner-product map instead"),
        ],
    ),
    "mask": (
        "build a sampling mask, optionally applying it to an AF",
        [
            ("--kind", str, "full", "full | uniform_delay | uniform_removal | block_delay | block_doppler"),
            ("--n-len", int, None, "N (taken from --af when given)"),
            ("--keep-every", int, 2, "uniform_delay spacing"),
            ("--fraction", float, 0.5, "uniform_removal fraction"),
            ("--frac-first", float, 0.25, "block: leading fraction removed"),
            ("--frac-last", float, 0.25, "block: trailing fraction removed"),
            ("--centered", _bool, None, "block fractions along the signed axis (default: Doppler yes, delay no)"),
            ("--mode", str, "exclude", "exclude | zero_fill"),
            ("--af", str, None, "AF CSV to mask"),
            ("--af-out", str, None, "where to write the masked AF"),
            ("--out", str, None, "output mask CSV"),
        ],
    ),
    "noise": (
        "add SNR-calibrated Gaussian noise to an AF",
        [
            ("--af", str, None, "input AF CSV"),
            ("--snr-db", float, math.inf, "signal-to-noise ratio in dB (inf = none)"),
            ("--clamp-negative", _bool, True, "clip negative values to zero"),
            ("--out", str, None, "output AF CSV"),
        ],
    ),
    "init": (
        "spectral initialization from an AF",
        [
            ("--af", str, None, "input AF CSV"),
            ("--mask", str, None, "mask CSV"),
            *INIT_OPTS,
            ("--out", str, None, "output signal CSV"),
            ("--diagnostics", str, None, "diagnostics JSON"),
        ],
    ),
    "recover": (
        "recover a waveform from an AF",
        [
            ("--af", str, None, "input AF CSV"),
            ("--mask", str, None, "mask CSV"),
            ("--x0", str, None, "start point CSV (default: spectral initialization)"),
            ("--support-kind", str, "none", "none | band_limited | time_limited"),
            ("--support-width", int, None, "support width"),
            ("--restarts", int, 3, "independent restarts"),
            *INIT_OPTS,
            *SOLVER_OPTS,
            ("--out", str, None, "output signal CSV"),
            ("--trace", str, None, "solver trace CSV"),
            ("--report", str, None, "report JSON"),
        ],
    ),
    "scenario": (
        "run a batch of seeded recovery trials",
        [
            ("--trials", int, None, "number of trials (default from config, else 10)"),
            ("--full-scale", _bool, False, "use 100 trials"),
            ("--out", str, None, "aggregate JSON (stdout when omitted)"),
            ("--per-trial", str, None, "per-trial CSV"),
        ],
    ),
    "success-map": (
        "success rate versus start perturbation and delay removal",
        [
            ("--deltas", _floats, list(DEFAULT_DELTA_GRID), "comma-separated perturbation sizes"),
            ("--removals", _floats, [0.0, 0.25, 0.5, 0.75], "comma-separated removed-delay fractions"),
            ("--trials", int, None, "trials per cell"),
            ("--full-scale", _bool, False, "use 100 trials"),
            ("--out", str, None, "output JSON (stdout when omitted)"),
            ("--csv", str, None, "plot-ready CSV delta,removal,rate"),
        ],
    ),
    "init-compare": (
        "initializer error versus delay removal and SNR",
        [
            ("--removals", _floats, [0.0, 0.25, 0.5], "comma-separated removed-delay fractions"),
            ("--snrs", _floats, [math.inf], "comma-separated SNRs in dB"),
            ("--trials", int, None, "trials per cell"),
            ("--full-scale", _bool, False, "use 100 trials"),
            ("--out", str, None, "output JSON (stdout when omitted)"),
            ("--csv", str, None, "plot-ready CSV"),
        ],
    ),
}

REQUIRED = {
    "generate": ["out"],
    "af": ["in", "out"],
    "mask": ["out"],
    "noise": ["af", "out"],
    "init": ["af", "out"],
    "recover": ["af", "out"],
}


def _dest(flag: str) -> str:
    return flag.lstrip("-").replace("-", "_")


def _add(parser, flag, cast, default, help_):
    # values stay unparsed strings here; Options casts them after merging sources
    extra = {"nargs": "?", "const": "true"} if cast is _bool else {}
    parser.add_argument(flag, dest=_dest(flag), default=None, help=f"{help_} (default {default})", **extra)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    for flag, cast, default, help_ in COMMON:
        _add(common, flag, cast, default, help_)
    common.add_argument("--config", default=None, help="JSON file supplying option values")
    parser = _Parser(prog="afretrieval", description="Radar waveform recovery from ambiguity-function magnitudes.", parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, (help_, opts) in COMMANDS.items():
        p = sub.add_parser(name, help=help_, description=help_, parents=[common])
        for flag, cast, default, ohelp in opts:
            _add(p, flag, cast, default, ohelp)
    return parser


class Options:
    """Option lookup with flag > config > environment > default precedence."""

    def __init__(self, args, specs, config):
        self._args = args
        self._specs = {_dest(flag): (cast, default) for flag, cast, default, _ in specs}
        self._config = config

    def __getattr__(self, name):
        if name.startswith("_"):
            raise AttributeError(name)
        cast, default = self._specs[name]
        raw = getattr(self._args, name, None)
        if raw is None and name in self._config:
            raw = self._config[name]
        if raw is None:
            raw = os.environ.get(ENV_PREFIX + name.upper())
        if raw is None:
            return default
        try:
            if cast is float and isinstance(raw, str) and raw.strip().lower() in ("inf", "+inf", "infinity"):
                return math.inf
            return cast(raw)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for --{name.replace('_', '-')}: {raw!r}") from exc

    def resolved(self) -> dict:
        return {name: getattr(self, name) for name in self._specs}


def _flat_config(path) -> dict:
    if path is None:
        return {}
    data = read_json(path)
    flat = {}
    for key, value in data.items():
        if key in ("init", "solver") and isinstance(value, dict):
            flat.update({k.replace("-", "_"): v for k, v in value.items()})
        else:
            flat[key.replace("-", "_")] = value
    return flat


def _init_config(o, seed) -> InitConfig:
    return InitConfig(
        iters_T=o.iters_T,
        lam=o.lam,
        power_iters=o.power_iters,
        power_tol=o.power_tol,
        seed=seed,
        scale_mode=o.scale_mode,
        lam_mode=o.lam_mode,
    )


def _load_af_with_mask(o):
    A = read_af(o.af)
    if o.mask:
        A = apply_mask(A, read_mask(o.mask))
    return A


# -- commands ----------------------------------------------------------------------

def cmd_generate(o, g):
    recipe = WaveformRecipe(
        kind=o.kind, n_len=o.n_len, center_hz=o.center_hz, cutoff=o.cutoff, pulse_T=o.pulse_T,
        sweep_df=o.sweep_df, nlfm_L=o.nlfm_L, dt=o.dt, seed=g.seed, limit=o.limit, width=o.width,
    )
    write_signal(o.out, generate(recipe))
    return o.out


def cmd_af(o, g):
    x = read_signal(getattr(o, "in"))
    if o.complex:
        write_inner_product_map(o.out, inner_product_map(x))
    else:
        write_af(o.out, ambiguity_map(x))
    return o.out


def cmd_mask(o, g):
    A = read_af(o.af) if o.af else None
    n_len = A.shape[0] if A is not None else (o.n_len or 128)
    params = {
        "uniform_delay": {"keep_every": o.keep_every},
        "uniform_removal": {"fraction": o.fraction},
        "block_delay": {"frac_first": o.frac_first, "frac_last": o.frac_last},
        "block_doppler": {"frac_first": o.frac_first, "frac_last": o.frac_last},
    }.get(o.kind, {})
    if o.kind.startswith("block_") and o.centered is not None:
        params["centered"] = o.centered
    mask = make_mask(o.kind, params, n_len, mode=o.mode)
    write_mask(o.out, mask)
    if A is not None and o.af_out:
        write_af(o.af_out, apply_mask(A, mask))
        return o.af_out
    return o.out


def cmd_noise(o, g):
    A = read_af(o.af)
    write_af(o.out, add_noise(A, NoiseSpec(o.snr_db, g.seed, o.clamp_negative)))
    return o.out


def cmd_init(o, g):
    A = _load_af_with_mask(o)
    x0, _, diag = run_initialization(A, _init_config(o, g.seed))
    write_signal(o.out, x0)
    if o.diagnostics:
        write_json(o.diagnostics, {"config": _init_config(o, g.seed).to_dict(), **diag.to_dict()})
    return o.out


def cmd_recover(o, g):
    from .estimator import AmbiguityPhaseRetriever

    A = _load_af_with_mask(o)
    est = AmbiguityPhaseRetriever(
        support_kind=o.support_kind, support_width=o.support_width, n_restarts=o.restarts,
        iters_T=o.iters_T, lam=o.lam, scale_mode=o.scale_mode, gamma1=o.gamma1, gamma=o.gamma,
        alpha=o.alpha, mu0=o.mu0, epsilon=o.epsilon, max_iters=o.max_iters, batch_size=o.batch_size,
        radius0=o.radius0, mask_mode=o.mask_mode, random_state=g.seed,
    )
    x0 = read_signal(o.x0) if o.x0 else None
    est.fit(A, x0=x0)
    write_signal(o.out, est.signal_)
    if o.trace:
        write_trace(o.trace, est.result_.trace)
    if o.report:
        res = est.result_
        write_json(o.report, {
            "af_distance": est.fit_,
            "candidate_fits": est.candidate_fits_,
            "iterations": res.iterations,
            "converged": res.converged,
            "mu_final": res.mu_final,
            "grad_norm_initial": res.grad_norm_initial,
            "grad_norm_final": res.grad_norm_final,
            "seconds": res.seconds,
            "params": est.get_params(),
            "signal": {"re": res.signal.real, "im": res.signal.imag},
        })
    return o.out


def _experiment(o, g, raw_config):
    cfg = ExperimentConfig.from_dict(raw_config) if raw_config else ExperimentConfig()
    if g.seed_given:
        cfg.base_seed = g.seed
    if o.full_scale:
        cfg.trials = 100
    if o.trials is not None:
        cfg.trials = o.trials
    cfg.workers = max(1, g.threads)
    return cfg


def _emit(path, payload):
    if path:
        write_json(path, payload)
        return path
    return dumps_json(payload)


def cmd_scenario(o, g, raw):
    cfg = _experiment(o, g, raw)
    result = run_scenario(cfg)
    agg = result.aggregate()
    if o.per_trial:
        with open(o.per_trial, "w") as fh:
            fh.write("trial,rel_error,timing,error\n" if not g.deterministic else "trial,rel_error,error\n")
            for r in result.reports:
                timing = "" if g.deterministic else f"{r.timing:.3f},"
                fh.write(f"{r.trial},{r.rel_error!r},{timing}{json.dumps(r.error or '')}\n")
    if agg["failed"] == agg["trials"]:
        raise DivergenceError("every trial failed: " + "; ".join(r.error for r in result.reports))
    return _emit(o.out, agg)


def cmd_success_map(o, g, raw):
    cfg = _experiment(o, g, raw)
    out = success_rate_map(cfg, o.deltas, o.removals)
    if o.csv:
        with open(o.csv, "w") as fh:
            fh.write("delta,removal,rate\n")
            for i, d in enumerate(out["delta"]):
                for j, f in enumerate(out["removal"]):
                    fh.write(f"{d!r},{f!r},{out['rate'][i][j]!r}\n")
    return _emit(o.out, out)


def cmd_init_compare(o, g, raw):
    cfg = _experiment(o, g, raw)
    rows = init_comparison(cfg, o.removals, o.snrs)
    if o.csv:
        keys = list(rows[0])
        with open(o.csv, "w") as fh:
            fh.write(",".join(keys) + "\n")
            for row in rows:
                fh.write(",".join(str(row[k]) for k in keys) + "\n")
    return _emit(o.out, {"rows": rows, "config": cfg.to_dict()})


HANDLERS = {
    "generate": cmd_generate,
    "af": cmd_af,
    "mask": cmd_mask,
    "noise": cmd_noise,
    "init": cmd_init,
    "recover": cmd_recover,
}
EXPERIMENTS = {"scenario": cmd_scenario, "success-map": cmd_success_map, "init-compare": cmd_init_compare}


def _fail(code: int, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required; see --help")
        experiment = args.command in EXPERIMENTS
        raw = read_json(args.config) if args.config else {}
        flat = {} if experiment else _flat_config(args.config)
        g = Options(args, COMMON, flat)
        g.seed_given = args.seed is not None or "seed" in flat or (ENV_PREFIX + "SEED") in os.environ
        logging.basicConfig(level=getattr(logging, str(g.log_level).upper(), logging.WARNING), stream=sys.stderr)
        o = Options(args, COMMANDS[args.command][1], flat)
        for name in REQUIRED.get(args.command, []):
            if not getattr(o, name):
                raise UsageError(f"--{name.replace('_', '-')} is required")
        if experiment:
            result = EXPERIMENTS[args.command](o, g, raw)
        else:
            result = HANDLERS[args.command](o, g)
        sys.stdout.write(f"{result}\n")
        return 0
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except (DivergenceError, ConvergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail(2, exc)
    except (UsageError, ValueError, KeyError, TypeError, OSError, SupportError) as exc:
        return _fail(1, exc)


if __name__ == "__main__":
    sys.exit(main())
