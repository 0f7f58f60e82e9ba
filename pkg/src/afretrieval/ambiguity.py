"""Discrete ambiguity function (AF), its Fourier-domain relatives, the AF
distance, property checks and the sampling-count identifiability validator.

Conventions: ``S[p, k] = sum_n x[n] conj(x[n - p]) exp(-2j*pi*n*k/N)`` with
row ``p`` the delay and column ``k`` the Doppler bin, both taken modulo ``N``.
The AF is ``A = |S|**2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._validation import check_signal, check_square, split_masked
from .waveform import SupportSpec, reflect


class ApproximationWarning(UserWarning):
    """Issued when a quantity that needs the complete AF is built from a masked one."""


def _shift_stack(x: np.ndarray) -> np.ndarray:
    """Matrix whose row ``p`` is ``x[n - p]``."""
    n_len = x.shape[0]
    idx = (np.arange(n_len)[None, :] - np.arange(n_len)[:, None]) % n_len
    return x[idx]


def inner_product_map(x) -> np.ndarray:
    """Complex AF ``S[p, k]``, one forward FFT per delay row.

    Parameters
    ----------
    x : array_like, shape (N,)
        Complex waveform.

    Returns
    -------
    ndarray, shape (N, N), complex128
    """
    x = check_signal(x)
    return np.fft.fft(x[None, :] * np.conj(_shift_stack(x)), axis=1)


def cross_inner_product_map(z, x) -> np.ndarray:
    """``C[a, b] = sum_n z[n] conj(x[n - a]) exp(-2j*pi*n*b/N)``."""
    z, x = check_signal(z, "z"), check_signal(x, "x")
    if z.shape != x.shape:
        raise ValueError("signals must have equal length")
    return np.fft.fft(z[None, :] * np.conj(_shift_stack(x)), axis=1)


def ambiguity_map(x) -> np.ndarray:
    """AF magnitude-squared ``A[p, k] = |S[p, k]|**2`` (real, non-negative)."""
    S = inner_product_map(x)
    return S.real**2 + S.imag**2


def transformed_data(A, mask=None) -> np.ndarray:
    """Row-wise normalized DFT of the AF, ``Y[p, l] = (1/N) sum_k A[p, k] e^{-2 pi i k l / N}``.

    Masked cells (from a ``MaskedArray`` or ``mask``) are zero-filled and an
    :class:`ApproximationWarning` is issued, since the identity with the
    quartic time-domain sum only holds for the complete AF.
    """
    values, kept = split_masked(A, mask)
    if not kept.all():
        warnings.warn(
            "transformed data computed from a masked AF with zero-fill; result is approximate",
            ApproximationWarning,
            stacklevel=2,
        )
        values = np.where(kept, values, 0.0)
    return np.fft.fft(values, axis=1) / values.shape[0]


def af_distance(A, W, mask=None) -> float:
    """Relative distance ``||sqrt(A) - sqrt(W)||_F / ||sqrt(A)||_F``.

    Negative entries (e.g. from noise) are clipped to zero before the square
    root. With ``mask`` (or a masked ``A``) only kept cells enter both norms.

    Raises
    ------
    ZeroDivisionError
        If ``sqrt(A)`` has zero norm over the kept cells.
    """
    a, kept = split_masked(A, mask)
    w = check_square(np.ma.getdata(W), "W")
    if w.shape != a.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {w.shape}")
    ra = np.sqrt(np.clip(a, 0, None))[kept]
    rw = np.sqrt(np.clip(w, 0, None))[kept]
    denom = np.linalg.norm(ra)
    if denom == 0:
        raise ZeroDivisionError("reference AF has zero norm")
    return float(np.linalg.norm(ra - rw) / denom)


def correlation_error(z, x, align: bool = True) -> float:
    """Frobenius error ``||z z^H - x x^H||_F``.

    With ``align`` the error is minimized over the trivial ambiguities of
    ``x`` (circular shift, integer modulation and reflection; a global
    rotation leaves ``x x^H`` unchanged). Since
    ``||z z^H - y y^H||^2 = ||z||^4 + ||y||^4 - 2 |<z, y>|^2``, the best
    shift and modulation maximize the cross inner-product map; the error is
    then evaluated directly for the aligned signal.
    """
    z, x = check_signal(z, "z"), check_signal(x, "x")
    y = x
    if align:
        best = -1.0
        for cand in (x, reflect(x)):
            C = cross_inner_product_map(z, cand)
            a, b = np.unravel_index(np.argmax(np.abs(C)), C.shape)
            if abs(C[a, b]) > best:
                best = abs(C[a, b])
                n = np.arange(x.shape[0])
                y = np.roll(cand, a) * np.exp(2j * np.pi * n * b / x.shape[0])
    return float(np.linalg.norm(np.outer(z, z.conj()) - np.outer(y, y.conj())))


# -- property checks ---------------------------------------------------------------

@dataclass
class PropertyReport:
    """Outcome of :func:`check_properties`; each ``*_slack`` is a relative deviation."""

    peak_at_origin: bool
    peak_slack: float
    volume: bool
    volume_slack: float
    symmetry: bool
    symmetry_slack: float
    shear: Optional[bool] = None
    shear_slack: Optional[float] = None
    shear_coefficient: Optional[int] = None

    @property
    def all_ok(self) -> bool:
        return self.peak_at_origin and self.volume and self.symmetry and self.shear in (None, True)


def _shear_coefficient(n_len: int) -> int:
    # exp(i pi c n^2 / N) is N-periodic only when c*N is even
    return 1 if n_len % 2 == 0 else 2


def chirp_multiply(x, c: int) -> np.ndarray:
    """``x[n] exp(i pi c n^2 / N)``; needs ``c * N`` even to stay periodic."""
    x = check_signal(x)
    n_len = x.shape[0]
    if (c * n_len) % 2:
        raise ValueError("c * N must be even for a periodic quadratic phase")
    n = np.arange(n_len)
    return x * np.exp(1j * np.pi * ((c * n * n) % (2 * n_len)) / n_len)


def shear_map(A, c: int) -> np.ndarray:
    """``A'[p, k] = A[p, (k - c p) mod N]``, the AF of :func:`chirp_multiply`."""
    A = check_square(A)
    n_len = A.shape[0]
    p = np.arange(n_len)[:, None]
    k = np.arange(n_len)[None, :]
    return A[p, (k - c * p) % n_len]


def check_properties(A, signal=None, tol: float = 1e-9) -> PropertyReport:
    """Check the AF properties that survive discretization.

    * peak at the origin, ``A[0, 0] >= A[p, k]``;
    * discrete volume, ``sum A = N * A[0, 0]``, which makes the total volume
      a function of the signal energy only and hence invariant under the
      trivial transforms;
    * point symmetry ``A[p, k] = A[-p, -k]``;
    * shear under a quadratic phase, only when ``signal`` is given, using the
      smallest integer coefficient that keeps the chirp on the grid.
    """
    A = check_square(A)
    n_len = A.shape[0]
    scale = max(float(A[0, 0]), np.finfo(float).tiny)
    peak_slack = max(float(A.max() - A[0, 0]), 0.0) / scale
    vol_slack = abs(float(A.sum()) - n_len * float(A[0, 0])) / (n_len * scale)
    flipped = A[(-np.arange(n_len)) % n_len][:, (-np.arange(n_len)) % n_len]
    sym_slack = float(np.abs(A - flipped).max()) / scale
    report = PropertyReport(
        peak_at_origin=peak_slack <= tol,
        peak_slack=peak_slack,
        volume=vol_slack <= tol,
        volume_slack=vol_slack,
        symmetry=sym_slack <= tol,
        symmetry_slack=sym_slack,
    )
    if signal is not None:
        c = _shear_coefficient(n_len)
        sheared = ambiguity_map(chirp_multiply(signal, c))
        report.shear_coefficient = c
        report.shear_slack = float(np.abs(sheared - shear_map(ambiguity_map(signal), c)).max()) / scale
        report.shear = report.shear_slack <= tol
    return report


# -- identifiability ---------------------------------------------------------------

@dataclass
class IdentifiabilityReport:
    """Sampling-count verdict for recovering a band- or time-limited signal.

    ``kept_count`` counts retained (delay, Doppler) cells. ``kept_rows`` and
    ``kept_columns`` give the alternative reading in which whole delay rows or
    Doppler columns are counted. ``rows_preserved`` maps each critical line
    (``"delay p"`` or ``"doppler k"``) to whether the mask retains it.
    """

    kept_count: int
    required_count: int
    rows_preserved: dict = field(default_factory=dict)
    verdict: str = "ok"
    kept_rows: int = 0
    kept_columns: int = 0


def identifiability_check(mask, spec: SupportSpec, spectrum_known: bool = False, strict_rows: bool = False) -> IdentifiabilityReport:
    """Compare the number of kept AF cells against the uniqueness bounds.

    The bound is ``3 * width`` cells, or ``2 * width`` when the power spectrum
    (band-limited) or the signal modulus (time-limited) is known a priori. The
    two extreme lines of the support pyramid must also survive: Doppler
    columns ``0`` and ``width - 1`` for band-limited signals, delay rows ``0``
    and ``width - 1`` for time-limited ones. A line counts as preserved when it
    keeps at least ``width`` cells, or all ``N`` cells with ``strict_rows``.

    Parameters
    ----------
    mask : SamplingMask or array_like of bool, shape (N, N)
    spec : SupportSpec
        Must not be of kind ``"none"``.
    spectrum_known : bool
        Whether the magnitude information that lowers the bound is available.
    strict_rows : bool
        Demand the critical lines be kept in full.
    """
    kept = np.asarray(getattr(mask, "kept", mask), dtype=bool)
    if kept.ndim != 2 or kept.shape[0] != kept.shape[1]:
        raise ValueError("mask must be square")
    if spec.kind == "none":
        raise ValueError("identifiability needs a band- or time-limited support")
    n_len = kept.shape[0]
    spec.validate(n_len)
    width = spec.width
    required = (2 if spectrum_known else 3) * width
    need = n_len if strict_rows else min(width, n_len)
    preserved = {}
    for idx in sorted({0, width - 1}):
        if spec.kind == "band_limited":
            preserved[f"doppler {idx}"] = bool(kept[:, idx].sum() >= need)
        else:
            preserved[f"delay {idx}"] = bool(kept[idx, :].sum() >= need)
    count = int(kept.sum())
    if count < required:
        verdict = "under_sampled"
    elif not all(preserved.values()):
        verdict = "critical_rows_missing"
    else:
        verdict = "ok"
    return IdentifiabilityReport(
        kept_count=count,
        required_count=required,
        rows_preserved=preserved,
        verdict=verdict,
        kept_rows=int(kept.any(axis=1).sum()),
        kept_columns=int(kept.any(axis=0).sum()),
    )
