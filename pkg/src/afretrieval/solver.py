"""Trust-region refinement of a waveform estimate against measured AF magnitudes.

The objective is the smoothed amplitude misfit

    h(z, mu) = (1/N^2) sum_{kept p,k} (phi_mu(|S_z[p, k]|) - sqrt(A[p, k]))^2,
    phi_mu(w) = sqrt(w^2 + mu^2),

minimized by Cauchy-point steps along minibatch Wirtinger gradients, with the
smoothing ``mu`` shrunk by ``gamma1`` whenever the sampled gradient falls
below ``gamma * mu``.

Scale handling: the iteration runs on ``u = z / s`` against ``sqrt(A) / s^2``
where ``s`` is the fourth root of the largest kept AF value (the signal norm
for exact data). Internally the smoothing, the trust radius and the decay
test all use ``mu_int = radius0 * mu / mu0``, so a run is invariant to the
overall signal scale and the user-facing ``mu`` keeps its usual units
(starting at ``mu0`` and shrinking by ``gamma1`` per decay).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numba
import numpy as np

from ._validation import check_positive_int, check_signal, split_masked
from .ambiguity import af_distance, ambiguity_map, inner_product_map
from .waveform import SupportSpec, project_support

logger = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """The objective grew beyond the configured multiple of its starting value."""


@dataclass
class SolverConfig:
    """Parameters of :func:`run_recovery`.

    ``batch_size=None`` means ``Q = N``. ``radius0`` is the trust radius, in
    units of the signal norm, that corresponds to ``mu0``. ``mask_mode``
    decides whether removed cells leave the objective (``"exclude"``) or
    enter it as zero measurements (``"zero_fill"``).
    """

    gamma1: float = 0.1
    gamma: float = 0.1
    alpha: float = 0.6
    mu0: float = 65.0
    epsilon: float = 1e-10
    max_iters: int = 10000
    batch_size: Optional[int] = None
    seed: int = 0
    mask_mode: str = "exclude"
    radius0: float = 0.1
    divergence_factor: float = 10.0
    trace_every: int = 10
    check_every: int = 100

    def __post_init__(self):
        for name in ("gamma1", "gamma"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        for name in ("alpha", "mu0", "epsilon", "radius0", "divergence_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        check_positive_int(self.max_iters, "max_iters")
        check_positive_int(self.trace_every, "trace_every")
        check_positive_int(self.check_every, "check_every")
        if self.batch_size is not None:
            check_positive_int(self.batch_size, "batch_size")
        if self.mask_mode not in ("exclude", "zero_fill"):
            raise ValueError(f"unknown mask_mode {self.mask_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolverTrace:
    """Sampled iteration history.

    ``mu`` is in user units, ``grad_norm`` is the norm of the batch-mean
    gradient in the normalized frame and ``objective`` is ``h`` at the
    smoothing actually in force (``mu_int * s^2`` in data units).
    """

    t: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    dist_truth: list = field(default_factory=list)
    decay_iters: list = field(default_factory=list)

    def rows(self):
        has_truth = len(self.dist_truth) == len(self.t) and len(self.t) > 0
        for i in range(len(self.t)):
            row = [self.t[i], self.mu[i], self.grad_norm[i], self.objective[i]]
            if has_truth:
                row.append(self.dist_truth[i])
            yield row


@dataclass
class SolverResult:
    signal: np.ndarray
    trace: SolverTrace
    af_distance: float  # against the input AF on the cells the objective used
    iterations: int
    converged: bool
    mu_final: float
    grad_norm_initial: float
    grad_norm_final: float
    scale: float
    seconds: float = 0.0


# -- objective and gradients -------------------------------------------------------

def _residual(S, sqrtA, mu):
    phi = np.sqrt(S.real**2 + S.imag**2 + mu * mu)
    with np.errstate(invalid="ignore", divide="ignore"):
        R = np.where(phi > 0, S - sqrtA * S / phi, 0.0)
    return R, phi


def _kept_or_all(sqrtA, mask):
    if mask is None:
        return np.ones(np.shape(sqrtA), dtype=bool)
    return np.asarray(getattr(mask, "kept", mask), dtype=bool)


def smoothed_objective(z, sqrtA, mask=None, mu: float = 0.0) -> float:
    """``h(z, mu)`` over the kept cells (all cells when ``mask`` is None)."""
    if mu < 0:
        raise ValueError("mu must be non-negative")
    S = inner_product_map(z)
    kept = _kept_or_all(sqrtA, mask)
    phi = np.sqrt(np.abs(S) ** 2 + mu * mu)
    n_len = S.shape[0]
    return float(np.sum(((phi - sqrtA) ** 2)[kept]) / n_len**2)


def wirtinger_gradient(z, sqrtA, mask=None, mu: float = 0.0) -> np.ndarray:
    """Gradient of ``h`` with respect to ``conj(z)``.

    For real perturbations ``dh/d Re z_j = 2 Re g_j`` and
    ``dh/d Im z_j = 2 Im g_j``. Cells where ``phi_mu(|S|) = 0`` (only possible
    at ``mu = 0``) contribute nothing.
    """
    z = check_signal(z, "z")
    n_len = z.shape[0]
    S = inner_product_map(z)
    R, phi = _residual(S, sqrtA, mu)
    if mu == 0 and np.any(phi == 0):
        logger.debug("skipping %d cells with |S| = 0 at mu = 0", int(np.sum(phi == 0)))
    R = np.where(_kept_or_all(sqrtA, mask), R, 0.0)
    p = np.arange(n_len)[:, None]
    n = np.arange(n_len)[None, :]
    # first sum: sum_p z[l-p] sum_k R[p,k] w^{lk}
    t1 = np.sum(z[(n - p) % n_len] * (n_len * np.fft.ifft(R, axis=1)), axis=0)
    # second sum: sum_p z[l+p] sum_k conj(R[p,k]) w^{-(l+p)k}
    F = np.fft.fft(np.conj(R), axis=1)
    idx = (n + p) % n_len
    t2 = np.sum(z[idx] * np.take_along_axis(F, idx, axis=1), axis=0)
    return (t1 + t2) / n_len**2


@numba.njit(cache=True)
def _batch_gradient_kernel(u, a, mu, P, K, tw):
    n_len = u.shape[0]
    g = np.zeros(n_len, np.complex128)
    uc = np.conj(u)
    for q in range(P.shape[0]):
        p = P[q]
        k = K[q]
        s = 0j
        j = n_len - p if p > 0 else 0
        t = 0
        for n in range(n_len):
            s += u[n] * uc[j] * tw[t]
            j += 1
            if j == n_len:
                j = 0
            t += k
            if t >= n_len:
                t -= n_len
        phi = np.sqrt(s.real * s.real + s.imag * s.imag + mu * mu)
        if phi == 0.0:
            continue
        r = s - a[p, k] * s / phi
        rc = np.conj(r)
        j = n_len - p if p > 0 else 0
        m = p
        t = 0
        tm = (p * k) % n_len
        for ell in range(n_len):
            g[ell] += r * u[j] * np.conj(tw[t]) + rc * u[m] * tw[tm]
            j += 1
            if j == n_len:
                j = 0
            m += 1
            if m == n_len:
                m = 0
            t += k
            if t >= n_len:
                t -= n_len
            tm += k
            if tm >= n_len:
                tm -= n_len
    return g


def _batch_gradient_numpy(u, a, mu, P, K):
    n_len = u.shape[0]
    n = np.arange(n_len)
    tw = np.exp(-2j * np.pi * n / n_len)
    W = tw[np.outer(K, n) % n_len]
    shifted = u[(n[None, :] - P[:, None]) % n_len]
    S = np.sum(u[None, :] * np.conj(shifted) * W, axis=1)
    R, _ = _residual(S, a[P, K], mu)
    t1 = R @ (shifted * np.conj(W))
    plus = (n[None, :] + P[:, None]) % n_len
    t2 = np.conj(R) @ (u[plus] * tw[(K[:, None] * plus) % n_len])
    return t1 + t2


def minibatch_gradient(z, sqrtA, mask=None, mu: float = 0.0, batch=None, backend: str = "numba") -> np.ndarray:
    """Gradient sum restricted to the cells in ``batch``, without the ``1/N^2`` factor.

    Parameters
    ----------
    batch : tuple of int arrays ``(rows, cols)`` or an (Q, 2) array
        Delay and Doppler indices of the sampled cells; each must be kept by
        ``mask``.
    backend : {"numba", "numpy"}
        Compiled loop or vectorized reference; both give the same sums.
    """
    z = check_signal(z, "z")
    if batch is None:
        raise ValueError("batch is required")
    if isinstance(batch, tuple):
        P, K = (np.asarray(b, dtype=np.int64).ravel() for b in batch)
    else:
        arr = np.asarray(batch, dtype=np.int64).reshape(-1, 2)
        P, K = arr[:, 0].copy(), arr[:, 1].copy()
    if P.size == 0:
        raise ValueError("empty batch")
    n_len = z.shape[0]
    if P.min() < 0 or K.min() < 0 or P.max() >= n_len or K.max() >= n_len:
        raise ValueError("batch indices out of range")
    if mask is not None and not _kept_or_all(sqrtA, mask)[P, K].all():
        raise ValueError("batch contains cells removed by the mask")
    a = np.ascontiguousarray(sqrtA, dtype=np.float64)
    if backend == "numpy":
        return _batch_gradient_numpy(z, a, float(mu), P, K)
    tw = np.exp(-2j * np.pi * np.arange(n_len) / n_len)
    return _batch_gradient_kernel(z, a, float(mu), P, K, tw)


# -- main loop ----------------------------------------------------------------------

def _prepare(A, mask, mode):
    values, kept = split_masked(A, mask)
    if mode == "zero_fill":
        values = np.where(kept, values, 0.0)
        kept = np.ones_like(kept)
    return np.sqrt(np.clip(values, 0, None)), kept


def run_recovery(A, x0, config: Optional[SolverConfig] = None, mask=None, support: Optional[SupportSpec] = None, truth_af=None) -> SolverResult:
    """Refine ``x0`` so that its AF magnitude matches ``A``.

    Parameters
    ----------
    A : array_like or numpy.ma.MaskedArray, shape (N, N)
        Measured AF; negative entries are clipped before the square root.
    x0 : array_like, shape (N,)
        Starting point, normally from the spectral initializer.
    config : SolverConfig, optional
    mask : SamplingMask or bool array, optional
        Cells to use (combined with the mask of ``A``).
    support : SupportSpec, optional
        When given, the start point is projected onto the support window and
        each step is restricted to it.
    truth_af : array_like, optional
        Clean AF used only to record ``dist_truth`` in the trace.

    Returns
    -------
    SolverResult

    Raises
    ------
    DivergenceError
        If the objective exceeds ``divergence_factor`` times its initial value.
    """
    config = config or SolverConfig()
    sqrtA, kept = _prepare(A, mask, config.mask_mode)
    n_len = sqrtA.shape[0]
    x0 = check_signal(x0, "x0")
    if x0.shape[0] != n_len:
        raise ValueError(f"x0 has length {x0.shape[0]}, AF has N={n_len}")
    cells = np.flatnonzero(kept.ravel())
    Q = min(config.batch_size or n_len, cells.size)
    rng = np.random.default_rng(config.seed)

    scale = float(sqrtA[kept].max()) ** 0.5
    if scale == 0:
        raise ValueError("AF is zero on every kept cell")
    a = sqrtA / scale**2
    u = x0 / scale
    project = support is not None and support.kind != "none"
    if project:
        u = project_support(u, support)
    tw = np.exp(-2j * np.pi * np.arange(n_len) / n_len)
    kept_mask = None if kept.all() else kept

    nu = 1.0  # mu / mu0
    mu_int = config.radius0
    trace = SolverTrace()
    start = time.perf_counter()

    def objective(v, m):
        return smoothed_objective(v, a, kept_mask, m)

    def record(t, gnorm):
        trace.t.append(t)
        trace.mu.append(config.mu0 * nu)
        trace.grad_norm.append(gnorm)
        trace.objective.append(objective(u, mu_int) * scale**4)
        if truth_af is not None:
            trace.dist_truth.append(af_distance(truth_af, ambiguity_map(u * scale)))

    def full_grad(v, m):
        g = wirtinger_gradient(v, a, kept_mask, m)
        if project:
            g = project_support(g, support)
        return float(np.linalg.norm(g))

    grad_initial = full_grad(u, mu_int)
    h0 = objective(u, mu_int)
    converged = False
    t = 0
    for t in range(config.max_iters):
        idx = rng.choice(cells, Q, replace=False)
        P, K = np.divmod(idx, n_len)
        d = _batch_gradient_kernel(u, a, mu_int, P, K, tw) / Q
        if project:
            d = project_support(d, support)
        dnorm = float(np.linalg.norm(d))
        if t % config.trace_every == 0:
            record(t, dnorm)
        if dnorm < config.epsilon:
            converged = True
            break
        u = u - (config.alpha * mu_int / dnorm) * d
        if dnorm < config.gamma * mu_int:
            nu *= config.gamma1
            mu_int *= config.gamma1
            trace.decay_iters.append(t)
        if (t + 1) % config.check_every == 0:
            h = objective(u, mu_int)
            if not math.isfinite(h) or h > config.divergence_factor * max(h0, np.finfo(float).tiny):
                raise DivergenceError(
                    f"objective {h:.3e} exceeded {config.divergence_factor}x its initial value {h0:.3e} at iteration {t + 1}"
                )
    if not trace.t or trace.t[-1] != t:
        record(t, dnorm)

    z = u * scale
    W = ambiguity_map(z)
    dist = af_distance(sqrtA**2, W, kept)
    return SolverResult(
        signal=z,
        trace=trace,
        af_distance=dist,
        iterations=t + 1,
        converged=converged,
        mu_final=config.mu0 * nu,
        grad_norm_initial=grad_initial,
        grad_norm_final=full_grad(u, mu_int),
        scale=scale,
        seconds=time.perf_counter() - start,
    )


def align_residue_phases(z, spec: SupportSpec, keep_every: int) -> np.ndarray:
    """Undo the phase pattern left unresolved by keeping every ``keep_every``-th delay.

    Multiplying ``z[n]`` by any unit-modulus sequence ``c[n mod d]`` leaves the
    AF unchanged on delays that are multiples of ``d``. Among those
    sequences this picks the one concentrating the most energy inside a
    ``spec.width``-wide window of the support domain (searched over all
    window offsets), and returns ``z * c[n mod d]`` with ``c[0] = 1``.
    """
    z = check_signal(z, "z")
    d = int(keep_every)
    if d <= 1 or spec.kind == "none":
        return z.copy()
    n_len = z.shape[0]
    parts = np.zeros((d, n_len), dtype=np.complex128)
    for r in range(d):
        parts[r, r::d] = z[r::d]
    if spec.kind == "band_limited":
        parts = np.fft.fft(parts, axis=1)
    best_energy, best_c = -np.inf, np.ones(d, dtype=np.complex128)
    for offset in range(n_len):
        idx = (offset + np.arange(spec.width)) % n_len
        F = parts[:, idx]
        M = np.conj(F) @ F.T  # ||sum_r c_r F_r||^2 = c^H M c
        _, vecs = np.linalg.eigh(M)
        c = np.exp(1j * np.angle(vecs[:, -1]))
        for _ in range(20):
            c = np.exp(1j * np.angle(M @ c))
        energy = float(np.real(np.conj(c) @ M @ c))
        if energy > best_energy:
            best_energy, best_c = energy, c
    return z * (best_c / best_c[0])[np.arange(n_len) % d]
