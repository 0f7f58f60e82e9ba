"""Seeded end-to-end experiments: generate, measure, degrade, recover, score."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .ambiguity import IdentifiabilityReport, af_distance, ambiguity_map, identifiability_check
from .estimator import AmbiguityPhaseRetriever
from .initializer import InitConfig, run_initialization
from .sampling import NoiseSpec, add_noise, apply_mask, make_mask
from .solver import SolverConfig, SolverTrace, run_recovery
from .waveform import WaveformRecipe, generate, recipe_support

logger = logging.getLogger(__name__)

DEFAULT_DELTA_GRID = tuple(round(0.1 * i, 1) for i in range(11))


@dataclass
class ExperimentConfig:
    """Everything needed to rerun a batch of recovery trials.

    ``mask_kind``/``mask_params`` follow :func:`make_mask`. With
    ``use_support_prior`` the recipe's support width is handed to the
    estimator. Trial ``i`` derives its seeds from ``(base_seed, i)``.
    """

    recipe: WaveformRecipe = field(default_factory=WaveformRecipe)
    mask_kind: str = "full"
    mask_params: dict = field(default_factory=dict)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    init: InitConfig = field(default_factory=InitConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    trials: int = 10
    success_threshold: float = 1e-6
    base_seed: int = 0
    n_restarts: int = 3
    use_support_prior: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.success_threshold > 0:
            raise ValueError("success_threshold must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def resolved(self) -> "ExperimentConfig":
        cfg = ExperimentConfig(**{**self.__dict__, "recipe": self.recipe.resolved()})
        cfg.mask_params = dict(make_mask(self.mask_kind, self.mask_params, cfg.recipe.n_len).params)
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise"]["snr_db"] = _json_float(self.noise.snr_db)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
        if "recipe" in d:
            d["recipe"] = WaveformRecipe.from_dict(d["recipe"])
        if "noise" in d:
            noise = dict(d["noise"])
            noise["snr_db"] = float(noise.get("snr_db", math.inf))
            d["noise"] = NoiseSpec(**noise)
        if "init" in d:
            d["init"] = InitConfig(**d["init"])
        if "solver" in d:
            d["solver"] = SolverConfig(**d["solver"])
        return cls(**d)


def _json_float(v: float):
    return "inf" if math.isinf(v) and v > 0 else v


def trial_seeds(base_seed: int, trial: int) -> dict:
    """Independent seeds for one trial, reproducible from ``(base_seed, trial)`` alone."""
    state = np.random.SeedSequence([int(base_seed), int(trial)]).generate_state(4)
    return dict(zip(("signal", "noise", "init", "solver"), (int(s) for s in state)))


@dataclass
class RecoveryReport:
    trial: int
    recovered: Optional[np.ndarray]
    rel_error: float
    trace: Optional[SolverTrace]
    identifiability: Optional[IdentifiabilityReport]
    timing: float
    seeds: dict = field(default_factory=dict)
    error: Optional[str] = None

    def summary(self) -> dict:
        return {
            "trial": self.trial,
            "rel_error": self.rel_error,
            "timing": self.timing,
            "seeds": self.seeds,
            "error": self.error,
        }


@dataclass
class ScenarioResult:
    reports: list
    config: ExperimentConfig

    def aggregate(self) -> dict:
        errs = np.array([r.rel_error for r in self.reports if r.error is None])
        ident = self.reports[0].identifiability if self.reports else None
        return {
            "trials": len(self.reports),
            "failed": sum(r.error is not None for r in self.reports),
            "median_rel_error": float(np.median(errs)) if errs.size else None,
            "mean_rel_error": float(np.mean(errs)) if errs.size else None,
            "min_rel_error": float(np.min(errs)) if errs.size else None,
            "max_rel_error": float(np.max(errs)) if errs.size else None,
            "success_rate": float(np.mean(errs < self.config.success_threshold)) if errs.size else 0.0,
            "identifiability": asdict(ident) if ident is not None else None,
            "config": self.config.to_dict(),
        }


def degrade(A, config: ExperimentConfig, noise_seed: int):
    """Noisy, masked measurement of a clean AF according to ``config``."""
    mask = make_mask(config.mask_kind, config.mask_params, A.shape[0], mode="exclude")
    noisy = add_noise(A, NoiseSpec(config.noise.snr_db, noise_seed, config.noise.clamp_negative))
    return apply_mask(noisy, mask), mask


def run_trial(config: ExperimentConfig, trial: int) -> RecoveryReport:
    seeds = trial_seeds(config.base_seed, trial)
    start = time.perf_counter()
    recipe = WaveformRecipe(**{**config.recipe.to_dict(), "seed": seeds["signal"]})
    support = recipe_support(recipe)
    ident = None
    try:
        x = generate(recipe)
        A = ambiguity_map(x)
        measured, mask = degrade(A, config, seeds["noise"])
        ident = identifiability_check(mask, support)
        if ident.verdict != "ok":
            logger.warning("trial %d: identifiability verdict %s", trial, ident.verdict)
        est = AmbiguityPhaseRetriever(
            support_kind=support.kind if config.use_support_prior else "none",
            support_width=support.width if config.use_support_prior else None,
            n_restarts=config.n_restarts,
            iters_T=config.init.iters_T,
            lam=config.init.lam,
            scale_mode=config.init.scale_mode,
            gamma1=config.solver.gamma1,
            gamma=config.solver.gamma,
            alpha=config.solver.alpha,
            mu0=config.solver.mu0,
            epsilon=config.solver.epsilon,
            max_iters=config.solver.max_iters,
            batch_size=config.solver.batch_size,
            radius0=config.solver.radius0,
            mask_mode=config.solver.mask_mode,
            random_state=seeds["solver"],
        ).fit(measured)
        rel = af_distance(A, ambiguity_map(est.signal_))
        return RecoveryReport(trial, est.signal_, rel, est.result_.trace, ident, time.perf_counter() - start, seeds)
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        logger.warning("trial %d failed: %s", trial, exc)
        return RecoveryReport(trial, None, math.nan, None, ident, time.perf_counter() - start, seeds, error=f"{type(exc).__name__}: {exc}")


def _map(fn, args, workers):
    if workers <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*args)))


def run_scenario(config: ExperimentConfig) -> ScenarioResult:
    """Run ``config.trials`` independent trials; failures are recorded, not raised.

    Results are ordered by trial index regardless of ``workers``.
    """
    config = config.resolved()
    reports = _map(run_trial, [(config, i) for i in range(config.trials)], config.workers)
    return ScenarioResult(sorted(reports, key=lambda r: r.trial), config)


# -- statistical studies --------------------------------------------------------------

def _removal_mask(n_len: int, fraction: float):
    if fraction <= 0:
        return make_mask("full", None, n_len)
    return make_mask("uniform_removal", {"fraction": fraction}, n_len)


def _success_trial(config, delta, fraction, trial):
    seeds = trial_seeds(config.base_seed, trial)
    recipe = WaveformRecipe(**{**config.recipe.to_dict(), "seed": seeds["signal"]})
    x = generate(recipe)
    A = ambiguity_map(x)
    mask = _removal_mask(x.shape[0], fraction)
    rng = np.random.default_rng(seeds["init"])
    zeta = rng.choice([-1.0, 1.0], size=x.shape[0])
    x0 = x + delta * zeta
    try:
        res = run_recovery(apply_mask(A, mask), x0, SolverConfig(**{**asdict(config.solver), "seed": seeds["solver"]}))
    except (ArithmeticError, RuntimeError) as exc:
        logger.warning("success-map trial failed: %s", exc)
        return False
    return af_distance(A, ambiguity_map(res.signal)) < config.success_threshold


def success_rate_map(config: ExperimentConfig, delta_grid=DEFAULT_DELTA_GRID, removal_grid=(0.0, 0.25, 0.5, 0.75)) -> dict:
    """Empirical success rate of the solver started at ``x + delta * zeta``.

    ``zeta`` has i.i.d. entries in {-1, +1}; a fraction of delays is removed
    uniformly; success means an AF distance to the clean AF below
    ``config.success_threshold``. Returns ``{"delta": [...], "removal": [...],
    "rate": [[...]]}`` with ``rate[i][j]`` for ``delta_grid[i]`` and
    ``removal_grid[j]``.
    """
    if not len(delta_grid) or not len(removal_grid):
        raise ValueError("grids must be non-empty")
    config = config.resolved()
    args = [(config, d, f, t) for d in delta_grid for f in removal_grid for t in range(config.trials)]
    ok = np.array(_map(_success_trial, args, config.workers), dtype=float)
    rate = ok.reshape(len(delta_grid), len(removal_grid), config.trials).mean(axis=2)
    return {
        "delta": [float(d) for d in delta_grid],
        "removal": [float(f) for f in removal_grid],
        "rate": rate.tolist(),
        "trials": config.trials,
        "threshold": config.success_threshold,
        "delta_grid_default": list(DEFAULT_DELTA_GRID),
        "config": config.to_dict(),
    }


def _init_trial(config, fraction, snr, trial):
    seeds = trial_seeds(config.base_seed, trial)
    recipe = WaveformRecipe(**{**config.recipe.to_dict(), "seed": seeds["signal"]})
    x = generate(recipe)
    A = ambiguity_map(x)
    noisy = add_noise(A, NoiseSpec(snr, seeds["noise"]))
    measured = apply_mask(noisy, _removal_mask(x.shape[0], fraction))
    x0, _, diag = run_initialization(measured, InitConfig(**{**asdict(config.init), "seed": seeds["init"]}), truth=x)
    return af_distance(A, ambiguity_map(diag.x_init)), af_distance(A, ambiguity_map(x0)), diag.error_init, diag.error_x0


def init_comparison(config: ExperimentConfig, removal_grid=(0.0, 0.25, 0.5), snr_list=(math.inf,)) -> list:
    """Mean AF distance (and correlation-matrix error) of ``x_init`` versus ``x0``.

    One row per ``(snr_db, removal)`` cell, averaged over ``config.trials``.
    """
    config = config.resolved()
    rows = []
    for snr in snr_list:
        for fraction in removal_grid:
            vals = np.array(_map(_init_trial, [(config, fraction, snr, t) for t in range(config.trials)], config.workers))
            rows.append(
                {
                    "snr_db": _json_float(float(snr)),
                    "removal": float(fraction),
                    "rel_error_init": float(vals[:, 0].mean()),
                    "rel_error_x0": float(vals[:, 1].mean()),
                    "corr_error_init": float(vals[:, 2].mean()),
                    "corr_error_x0": float(vals[:, 3].mean()),
                    "trials": config.trials,
                }
            )
    return rows
