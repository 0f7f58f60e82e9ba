"""Estimator-style wrappers around the forward model, the initializer and the solver."""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_signal, split_masked
from .ambiguity import af_distance, ambiguity_map, inner_product_map
from .initializer import InitConfig, run_initialization
from .sampling import infer_provenance
from .solver import DivergenceError, SolverConfig, align_residue_phases, run_recovery
from .waveform import SupportSpec, best_support_offset

logger = logging.getLogger(__name__)


class AmbiguityTransformer(TransformerMixin, BaseEstimator):
    """Map signals (rows of ``X``) to their AFs; stateless."""

    def __init__(self, complex_output: bool = False):
        self.complex_output = complex_output

    def fit(self, X, y=None):
        X = np.atleast_2d(np.asarray(X))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = np.atleast_2d(np.asarray(X))
        fn = inner_product_map if self.complex_output else ambiguity_map
        return np.stack([fn(row) for row in X])


class SpectralInitializer(BaseEstimator):
    """Spectral starting point from an AF; ``transform`` returns ``x0``."""

    def __init__(self, iters_T: int = 2, lam: float = 10.0, scale_mode: str = "fit_scale", lam_mode: str = "fixed", power_iters: int = 200, power_tol: float = 1e-10, random_state: int = 0):
        self.iters_T = iters_T
        self.lam = lam
        self.scale_mode = scale_mode
        self.lam_mode = lam_mode
        self.power_iters = power_iters
        self.power_tol = power_tol
        self.random_state = random_state

    def _config(self, seed=None) -> InitConfig:
        return InitConfig(
            iters_T=self.iters_T,
            lam=self.lam,
            power_iters=self.power_iters,
            power_tol=self.power_tol,
            seed=self.random_state if seed is None else seed,
            scale_mode=self.scale_mode,
            lam_mode=self.lam_mode,
        )

    def fit(self, A, y=None, mask=None, truth=None):
        self.x0_, self.state_, self.diagnostics_ = run_initialization(A, self._config(), mask=mask, truth=truth)
        self.n_features_in_ = self.x0_.shape[0]
        return self

    def transform(self, A, mask=None):
        return run_initialization(A, self._config(), mask=mask)[0]

    def fit_transform(self, A, y=None, mask=None, truth=None):
        return self.fit(A, mask=mask, truth=truth).x0_


class AmbiguityPhaseRetriever(BaseEstimator):
    """Recover a waveform from (possibly masked, noisy) AF magnitudes.

    ``fit`` runs the spectral initializer and the trust-region solver from
    ``n_restarts`` independent seeds and keeps the candidate that best fits
    the kept AF cells. When a support prior is given (``support_kind`` and
    ``support_width``), each restart additionally refines the unconstrained
    solution inside the best support window, and refines the spectral start
    point inside its own window; only these support-consistent candidates
    compete. With delays kept on a regular grid (``keep_every > 1``, inferred
    from the mask when ``"auto"``) the unconstrained solution first has the
    residual ``c[n mod d]`` phase pattern aligned to the support.

    Parameters
    ----------
    support_kind : {"none", "band_limited", "time_limited"}
    support_width : int, optional
        Width of the support window; required unless ``support_kind="none"``.
    keep_every : int or "auto"
    n_restarts : int
    early_stop_fit : float
        Stop restarting once a candidate's AF distance on the kept cells is
        at most this value.
    random_state : int
        Base seed; restart ``r`` derives its seeds from ``(random_state, r)``.

    Attributes
    ----------
    signal_ : ndarray
        Recovered waveform (defined up to the trivial ambiguities).
    result_ : SolverResult
        Solver output for the selected candidate.
    fit_ : float
        AF distance of ``signal_`` on the kept cells.
    candidate_fits_ : list of float
    init_diagnostics_ : list of InitDiagnostics
    """

    def __init__(
        self,
        support_kind: str = "none",
        support_width: Optional[int] = None,
        keep_every="auto",
        n_restarts: int = 3,
        early_stop_fit: float = 1e-6,
        iters_T: int = 2,
        lam: float = 10.0,
        scale_mode: str = "fit_scale",
        gamma1: float = 0.1,
        gamma: float = 0.1,
        alpha: float = 0.6,
        mu0: float = 65.0,
        epsilon: float = 1e-10,
        max_iters: int = 10000,
        batch_size: Optional[int] = None,
        radius0: float = 0.1,
        mask_mode: str = "exclude",
        random_state: int = 0,
    ):
        self.support_kind = support_kind
        self.support_width = support_width
        self.keep_every = keep_every
        self.n_restarts = n_restarts
        self.early_stop_fit = early_stop_fit
        self.iters_T = iters_T
        self.lam = lam
        self.scale_mode = scale_mode
        self.gamma1 = gamma1
        self.gamma = gamma
        self.alpha = alpha
        self.mu0 = mu0
        self.epsilon = epsilon
        self.max_iters = max_iters
        self.batch_size = batch_size
        self.radius0 = radius0
        self.mask_mode = mask_mode
        self.random_state = random_state

    # config builders keep the estimator and the functional API in sync
    def init_config(self, seed: int = 0) -> InitConfig:
        return InitConfig(iters_T=self.iters_T, lam=self.lam, scale_mode=self.scale_mode, seed=seed)

    def solver_config(self, seed: int = 0) -> SolverConfig:
        return SolverConfig(
            gamma1=self.gamma1,
            gamma=self.gamma,
            alpha=self.alpha,
            mu0=self.mu0,
            epsilon=self.epsilon,
            max_iters=self.max_iters,
            batch_size=self.batch_size,
            seed=seed,
            mask_mode=self.mask_mode,
            radius0=self.radius0,
        )

    def _support(self, n_len: int) -> Optional[SupportSpec]:
        if self.support_kind == "none":
            return None
        if self.support_width is None:
            raise ValueError("support_width is required with a support prior")
        return SupportSpec(self.support_kind, int(self.support_width)).validate(n_len)

    def _keep_every(self, kept) -> int:
        if self.keep_every != "auto":
            return int(self.keep_every)
        kind, params = infer_provenance(kept)
        return int(params["keep_every"]) if kind == "uniform_delay" else 1

    def fit(self, A, y=None, mask=None, x0=None):
        """Recover a waveform from the AF ``A``.

        Parameters
        ----------
        A : array_like or numpy.ma.MaskedArray, shape (N, N)
        y : ignored
        mask : SamplingMask or bool array, optional
        x0 : array_like, optional
            Start point; replaces the spectral initializer on the first restart.
        """
        values, kept = split_masked(A, mask)
        n_len = values.shape[0]
        masked_A = np.ma.MaskedArray(values, mask=~kept)
        spec = self._support(n_len)
        d = self._keep_every(kept) if spec is not None else 1
        seeds = np.random.SeedSequence(self.random_state).spawn(self.n_restarts)

        candidates, fits, diags = [], [], []
        for r, ss in enumerate(seeds):
            init_seed, solve_seed = (int(s) for s in ss.generate_state(2))
            if r == 0 and x0 is not None:
                start = check_signal(x0, "x0")
            else:
                start, _, diag = run_initialization(masked_A, self.init_config(init_seed))
                diags.append(diag)
            cfg = self.solver_config(solve_seed)
            for res in self._refine(masked_A, start, cfg, spec, d):
                candidates.append(res)
                fits.append(res.af_distance)
            if fits and min(fits) <= self.early_stop_fit:
                break
        if not candidates:
            raise DivergenceError("every candidate diverged")
        best = int(np.argmin(fits))
        self.result_ = candidates[best]
        self.signal_ = self.result_.signal
        self.fit_ = fits[best]
        self.candidate_fits_ = fits
        self.init_diagnostics_ = diags
        self.n_features_in_ = n_len
        return self

    def _solve(self, A, start, cfg, support=None):
        try:
            return run_recovery(A, start, cfg, support=support)
        except DivergenceError as exc:
            logger.warning("candidate dropped: %s", exc)
            return None

    def _refine(self, A, start, cfg, spec, d):
        free = self._solve(A, start, cfg)
        if spec is None:
            return [free] if free is not None else []
        out = []
        if free is not None:
            z = align_residue_phases(free.signal, spec, d) if d > 1 else free.signal
            window = replace(spec, offset=best_support_offset(z, spec.kind, spec.width))
            out.append(self._solve(A, z, replace(cfg, seed=cfg.seed + 1), window))
        window = replace(spec, offset=best_support_offset(start, spec.kind, spec.width))
        out.append(self._solve(A, start, replace(cfg, seed=cfg.seed + 2), window))
        return [c for c in out if c is not None]

    def fit_transform(self, A, y=None, mask=None, x0=None):
        return self.fit(A, mask=mask, x0=x0).signal_

    def predict(self, A=None):
        """AF of the recovered waveform (``A`` is accepted for API symmetry and ignored)."""
        check_is_fitted(self, "signal_")
        return ambiguity_map(self.signal_)

    def score(self, A, y=None, mask=None):
        """Negative AF distance of the recovered waveform to ``A`` (higher is better)."""
        check_is_fitted(self, "signal_")
        return -af_distance(A, self.predict(), mask)
