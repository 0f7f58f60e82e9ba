"""Spectral initialization: estimate the rank-one correlation matrix ``x x^H``
band by band from the Fourier-transformed AF and take its leading eigenvector.

Diagonal band ``l`` of ``X = x x^H`` is ``x_l[j] = X[j, j + l]``. Row ``l`` of
the transformed data obeys ``Y[:, l] = G_l x_l`` where ``G_l`` is circulant and
built from the signal itself, so the bands are refit with the previous
eigenvector in ``G_l`` and a proximal term tying them to the previous bands.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Literal, Optional

import numpy as np

from ._validation import check_positive_int, check_signal, check_square, split_masked
from .ambiguity import ambiguity_map, correlation_error, transformed_data

logger = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """Power iteration did not reach the requested tolerance."""


class ConditioningWarning(UserWarning):
    """The proximal normal equations are badly conditioned."""


@dataclass
class InitConfig:
    """Parameters of :func:`run_initialization`.

    ``lam`` weights the data term against the proximal term. With
    ``lam_mode="premise"`` each band uses ``max(lam, 1 / sigma_min(G_l)^2)``,
    which satisfies ``lam * sigma_min^2 > 1/2``. ``scale_mode`` chooses how the
    unit eigenvector is scaled: ``"fourth_root"`` uses the fourth root of
    the positive zero-lag band entries, ``"fit_scale"`` the least-squares fit
    of the resulting AF magnitude to the data.
    """

    iters_T: int = 2
    lam: float = 10.0
    power_iters: int = 200
    power_tol: float = 1e-10
    seed: int = 0
    scale_mode: Literal["fourth_root", "fit_scale"] = "fit_scale"
    lam_mode: Literal["fixed", "premise"] = "fixed"
    cond_bound: float = 1e12
    eigen_fallback: Literal["dense", "raise"] = "dense"

    def __post_init__(self):
        check_positive_int(self.iters_T, "iters_T")
        check_positive_int(self.power_iters, "power_iters")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.power_tol > 0:
            raise ValueError("power_tol must be positive")
        if self.scale_mode not in ("fourth_root", "fit_scale"):
            raise ValueError(f"unknown scale_mode {self.scale_mode!r}")
        if self.lam_mode not in ("fixed", "premise"):
            raise ValueError(f"unknown lam_mode {self.lam_mode!r}")
        if self.eigen_fallback not in ("dense", "raise"):
            raise ValueError(f"unknown eigen_fallback {self.eigen_fallback!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class InitState:
    """Final iterate of the band updates."""

    X0: np.ndarray
    w: np.ndarray
    x_ell: np.ndarray  # row l holds band l
    eigenvalue: float


@dataclass
class InitDiagnostics:
    x_init: np.ndarray
    step_norms: list = field(default_factory=list)  # ||X0^(t) - X0^(t-1)||_F per iteration
    beta4: float = 0.0
    scale: float = 0.0
    masked: bool = False
    error_init: Optional[float] = None
    error_x0: Optional[float] = None
    contraction_ratio: Optional[float] = None
    degenerate_eigen: bool = False
    dense_fallbacks: int = 0

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "x_init"}
        return d


# -- building blocks -----------------------------------------------------------------

def seed_vector(A, seed=0, mask=None) -> np.ndarray:
    """Random-phase starting vector ``v[p] exp(i theta[p])`` with ``v[p] = mean_k A[p, k]``.

    For an exact AF, ``v[p] = sum_n |x[n]|^2 |x[n - p]|^2``. Masked cells are
    zero-filled. ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    values, kept = split_masked(A, mask)
    values = np.where(kept, values, 0.0)
    rng = np.random.default_rng(seed)
    v = values.mean(axis=1)
    return v * np.exp(2j * np.pi * rng.random(values.shape[0]))


def band_generators(w) -> np.ndarray:
    """``C[l, m] = conj(w[m]) w[m + l]``; row ``l`` generates ``G_l``."""
    w = check_signal(w, "w")
    n_len = w.shape[0]
    idx = (np.arange(n_len)[None, :] + np.arange(n_len)[:, None]) % n_len
    return np.conj(w)[None, :] * w[idx]


def build_G(w, ell: int) -> np.ndarray:
    """Dense circulant ``G_l[p, n] = conj(w[n - p]) w[n - p + l]``."""
    w = check_signal(w, "w")
    if np.linalg.norm(w) == 0:
        raise ValueError("w must be nonzero")
    n_len = w.shape[0]
    c = np.conj(w) * np.roll(w, -int(ell))
    return c[(np.arange(n_len)[None, :] - np.arange(n_len)[:, None]) % n_len]


def circulant_eigenvalues(c) -> np.ndarray:
    """Eigenvalues of the circulant ``G[p, n] = c[n - p]`` (DFT of ``c[-m]``)."""
    c = np.asarray(c)
    n_len = c.shape[-1]
    return np.fft.fft(c[..., (-np.arange(n_len)) % n_len], axis=-1)


def prox_ls_update(G, y, x_prev, lam: float, cond_bound: float = 1e12) -> np.ndarray:
    """Solve ``(G^H G + I/(2 lam)) x = G^H y + x_prev/(2 lam)`` densely.

    Issues a :class:`ConditioningWarning` if the system's condition number
    exceeds ``cond_bound``.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    G = np.asarray(G, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    x_prev = np.asarray(x_prev, dtype=np.complex128)
    B = G.conj().T @ G + np.eye(G.shape[1]) / (2 * lam)
    e = G.conj().T @ y + x_prev / (2 * lam)
    if np.linalg.cond(B) > cond_bound:
        warnings.warn("proximal normal equations are ill-conditioned", ConditioningWarning, stacklevel=2)
    return np.linalg.solve(B, e)


def _prox_all_bands(C, Y, x_prev, lam):
    """Every band's proximal update through the circulant diagonalization."""
    eig = circulant_eigenvalues(C)  # (N, N): row l = eigenvalues of G_l
    lam = np.asarray(lam, dtype=float).reshape(-1, 1)
    rhs = np.conj(eig) * np.fft.fft(Y.T, axis=1) + np.fft.fft(x_prev, axis=1) / (2 * lam)
    return np.fft.ifft(rhs / (np.abs(eig) ** 2 + 1 / (2 * lam)), axis=1), eig


def bands_to_matrix(x_ell) -> np.ndarray:
    n_len = x_ell.shape[0]
    j = np.arange(n_len)
    X = np.empty((n_len, n_len), dtype=np.complex128)
    for ell in range(n_len):
        X[j, (j + ell) % n_len] = x_ell[ell]
    return X


def matrix_to_bands(X) -> np.ndarray:
    n_len = X.shape[0]
    j = np.arange(n_len)
    return np.stack([X[j, (j + ell) % n_len] for ell in range(n_len)])


@dataclass
class EigenResult:
    vector: np.ndarray
    value: float
    iterations: int
    degenerate: bool


def _power(H, v, iters, tol):
    rho = np.vdot(v, H @ v).real
    for it in range(1, iters + 1):
        u = H @ v
        nu = np.linalg.norm(u)
        if nu == 0:
            return v, 0.0, it, True
        v = u / nu
        new = np.vdot(v, H @ v).real
        if abs(new - rho) <= tol * max(abs(new), np.finfo(float).tiny):
            return v, new, it, True
        rho = new
    return v, rho, iters, False


def leading_eigenvector(X0, iters: int = 200, tol: float = 1e-10, seed=0, start=None) -> EigenResult:
    """Unit eigenvector for the largest eigenvalue of ``(X0 + X0^H) / 2``.

    Power iteration with a Rayleigh-quotient stopping rule. If the dominant
    eigenvalue in magnitude is negative the iteration is rerun on the matrix
    shifted by its Frobenius norm, which makes the largest eigenvalue
    dominant. ``degenerate`` flags a (near-)repeated top eigenvalue, in which
    case any vector of the top eigenspace is returned.

    Raises
    ------
    ConvergenceError
        After ``iters`` iterations without convergence; the message carries
        the top eigenvalue estimates and their gap.
    """
    X0 = check_square(X0, "X0", dtype=np.complex128)
    H = (X0 + X0.conj().T) / 2
    n_len = H.shape[0]
    if start is None:
        rng = np.random.default_rng(seed)
        start = rng.standard_normal(n_len) + 1j * rng.standard_normal(n_len)
    v = np.asarray(start, dtype=np.complex128)
    v = v / np.linalg.norm(v)
    vec, rho, it, ok = _power(H, v, iters, tol)
    shift = 0.0
    if rho < 0 or not ok:
        shift = np.linalg.norm(H)
        if shift == 0:
            return EigenResult(v, 0.0, it, True)
        vec, rho, it2, ok = _power(H + shift * np.eye(n_len), v, iters, tol)
        rho -= shift
        it += it2
    if not ok:
        top = np.linalg.eigvalsh(H)[-2:]
        raise ConvergenceError(
            f"power iteration did not converge in {iters} steps; top eigenvalues "
            f"{top[-1]:.6g}, {top[0]:.6g}, gap {top[-1] - top[0]:.3g}"
        )
    # a second sweep on the deflated matrix reveals a repeated top eigenvalue
    deflated = H - rho * np.outer(vec, vec.conj()) + max(shift, np.linalg.norm(H)) * np.eye(n_len)
    probe = v - np.vdot(vec, v) * vec
    degenerate = False
    if np.linalg.norm(probe) > 0:
        _, rho2, _, _ = _power(deflated, probe / np.linalg.norm(probe), min(iters, 50), tol)
        rho2 -= max(shift, np.linalg.norm(H))
        degenerate = bool(rho2 >= rho - 1e-8 * max(abs(rho), 1e-300))
    return EigenResult(vec, float(rho), it, degenerate)


def _fit_scale(A, kept, w) -> float:
    a = np.sqrt(np.clip(A, 0, None))[kept]
    b = np.sqrt(ambiguity_map(w))[kept]
    bb = float(np.dot(b, b))
    return float(np.sqrt(max(np.dot(a, b), 0.0) / bb)) if bb > 0 else 0.0


# -- driver --------------------------------------------------------------------------

def run_initialization(A, config: Optional[InitConfig] = None, mask=None, truth=None):
    """Spectral initialization from a (possibly masked) AF.

    Parameters
    ----------
    A : array_like or numpy.ma.MaskedArray, shape (N, N)
        Measured AF. Masked cells are zero-filled, which makes the band
        equations approximate.
    config : InitConfig, optional
    mask : SamplingMask or bool array, optional
    truth : array_like, optional
        Ground-truth signal; when given the diagnostics report the
        alignment-minimized correlation-matrix errors of ``x_init`` and ``x0``.

    Returns
    -------
    x0 : ndarray
        Scaled leading eigenvector.
    state : InitState
    diag : InitDiagnostics
    """
    config = config or InitConfig()
    values, kept = split_masked(A, mask)
    masked = not kept.all()
    values = np.where(kept, values, 0.0)
    n_len = values.shape[0]
    rng = np.random.default_rng(config.seed)

    x_init = seed_vector(values, rng)
    if masked:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            Y = transformed_data(np.ma.MaskedArray(values, mask=~kept))
    else:
        Y = transformed_data(values)
    X = np.outer(x_init, np.conj(x_init))
    x_ell = matrix_to_bands(X)
    norm0 = np.linalg.norm(x_init)
    if norm0 == 0:
        raise ValueError("AF has no energy on the kept cells")
    w = x_init / norm0
    diag = InitDiagnostics(x_init=x_init, masked=masked)
    eig = None
    for t in range(config.iters_T):
        C = band_generators(w)
        if config.lam_mode == "premise":
            smin2 = np.abs(circulant_eigenvalues(C)).min(axis=1) ** 2
            lam = np.minimum(np.maximum(config.lam, 1.0 / np.maximum(smin2, 1e-300)), config.cond_bound)
        else:
            lam = np.full(n_len, config.lam)
        x_ell, ev = _prox_all_bands(C, Y, x_ell, lam)
        cond = (np.abs(ev) ** 2 + 1 / (2 * lam[:, None])).max() / (np.abs(ev) ** 2 + 1 / (2 * lam[:, None])).min()
        if cond > config.cond_bound:
            warnings.warn("proximal normal equations are ill-conditioned", ConditioningWarning, stacklevel=2)
        X_new = bands_to_matrix(x_ell)
        diag.step_norms.append(float(np.linalg.norm(X_new - X)))
        X = X_new
        try:
            eig = leading_eigenvector(X, config.power_iters, config.power_tol, start=w)
        except ConvergenceError as exc:
            if config.eigen_fallback == "raise":
                raise
            logger.warning("%s; using a dense eigendecomposition", exc)
            vals, vecs = np.linalg.eigh((X + X.conj().T) / 2)
            eig = EigenResult(vecs[:, -1], float(vals[-1]), config.power_iters, bool(vals[-1] - vals[-2] <= 1e-8 * abs(vals[-1])))
            diag.dense_fallbacks += 1
        w = eig.vector
        diag.degenerate_eigen = diag.degenerate_eigen or eig.degenerate
        logger.debug("init iteration %d: step %.3e eigenvalue %.3e", t, diag.step_norms[-1], eig.value)

    d0 = x_ell[0].real
    diag.beta4 = float(d0[d0 > 0].sum())
    if config.scale_mode == "fourth_root":
        diag.scale = diag.beta4**0.25
    else:
        diag.scale = _fit_scale(values, kept, w)
    x0 = diag.scale * w
    if truth is not None:
        truth = check_signal(truth, "truth")
        diag.error_init = correlation_error(x_init, truth)
        diag.error_x0 = correlation_error(x0, truth)
        diag.contraction_ratio = diag.error_x0 / diag.error_init if diag.error_init > 0 else float("inf")
    state = InitState(X0=X, w=w, x_ell=x_ell, eigenvalue=eig.value)
    return x0, state, diag

