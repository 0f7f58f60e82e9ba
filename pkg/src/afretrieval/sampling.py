"""Undersampling masks over the (delay, Doppler) grid and SNR-calibrated noise."""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from ._validation import check_square

MaskMode = Literal["exclude", "zero_fill"]
MASK_KINDS = ("full", "uniform_delay", "uniform_removal", "block_delay", "block_doppler", "custom")


@dataclass
class SamplingMask:
    """Boolean ``kept`` grid plus how it was made.

    ``mode`` says how removed cells are treated downstream: ``"exclude"``
    drops them from objectives, ``"zero_fill"`` replaces them with zeros.
    """

    kept: np.ndarray
    mode: MaskMode = "exclude"
    provenance: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kept = np.asarray(self.kept, dtype=bool)
        if self.kept.ndim != 2 or self.kept.shape[0] != self.kept.shape[1]:
            raise ValueError(f"mask must be square, got shape {self.kept.shape}")
        if not self.kept.any():
            raise ValueError("mask keeps no cells")
        if self.mode not in ("exclude", "zero_fill"):
            raise ValueError(f"unknown mask mode {self.mode!r}")
        if self.provenance not in MASK_KINDS:
            raise ValueError(f"unknown mask provenance {self.provenance!r}")

    @property
    def n_len(self) -> int:
        return self.kept.shape[0]

    @property
    def kept_count(self) -> int:
        return int(self.kept.sum())


def _signed(n_len: int) -> np.ndarray:
    k = np.arange(n_len)
    return np.where(k < (n_len + 1) // 2, k, k - n_len)


def _block_keep(n_len: int, frac_first: float, frac_last: float, centered: bool) -> np.ndarray:
    if not (0 <= frac_first <= 1 and 0 <= frac_last <= 1):
        raise ValueError("block fractions must lie in [0, 1]")
    n_first = int(round(frac_first * n_len))
    n_last = int(round(frac_last * n_len))
    if n_first + n_last >= n_len:
        raise ValueError("block fractions remove every line")
    if not centered:
        order = np.arange(n_len)
    else:
        # lines ordered by signed index -N/2 .. N/2-1, i.e. the fftshifted axis
        order = np.argsort(_signed(n_len), kind="stable")
    keep = np.zeros(n_len, dtype=bool)
    keep[order[n_first : n_len - n_last]] = True
    return keep


def make_mask(kind: str, params: Optional[dict] = None, n_len: int = 128, mode: MaskMode = "exclude") -> SamplingMask:
    """Build a structured sampling mask.

    Parameters
    ----------
    kind : {"full", "uniform_delay", "uniform_removal", "block_delay", "block_doppler", "custom"}
    params : dict
        ``uniform_delay``: ``keep_every`` (delays 0, d, 2d, ... are kept).
        ``uniform_removal``: ``fraction`` of delay rows removed at evenly
        spread positions, delay 0 always kept (0.5 equals ``keep_every=2``).
        Block kinds: ``frac_first``, ``frac_last`` and optional ``centered``.
        With ``centered=False`` the fractions count from index 0 and N-1 of
        the stored axis; with ``centered=True`` they count along the signed
        axis ``-N/2 .. N/2-1``, so the low-|index| centre is kept. Delay
        blocks default to the stored axis, Doppler blocks to the signed one.
        ``custom``: ``kept`` (N x N booleans).
    n_len : int
    mode : {"exclude", "zero_fill"}
    """
    params = dict(params or {})
    if n_len < 2:
        raise ValueError("N must be >= 2")
    if kind == "full":
        kept = np.ones((n_len, n_len), dtype=bool)
    elif kind == "uniform_delay":
        d = int(params.setdefault("keep_every", 2))
        if d < 1:
            raise ValueError("keep_every must be >= 1")
        kept = np.zeros((n_len, n_len), dtype=bool)
        kept[::d, :] = True
    elif kind == "uniform_removal":
        frac = Fraction(str(params.setdefault("fraction", 0.5)))
        if not 0 <= frac < 1:
            raise ValueError("fraction must lie in [0, 1)")
        p = np.arange(n_len)
        removed = np.array([math.floor((i + 1) * frac) - math.floor(i * frac) for i in p]) > 0
        kept = np.repeat(~removed[:, None], n_len, axis=1)
    elif kind in ("block_delay", "block_doppler"):
        line = _block_keep(
            n_len,
            float(params.setdefault("frac_first", 0.25)),
            float(params.setdefault("frac_last", 0.25)),
            bool(params.setdefault("centered", kind == "block_doppler")),
        )
        kept = np.repeat(line[:, None], n_len, axis=1) if kind == "block_delay" else np.repeat(line[None, :], n_len, axis=0)
    elif kind == "custom":
        if "kept" not in params:
            raise ValueError("custom mask needs params['kept']")
        kept = np.asarray(params.pop("kept"), dtype=bool)
        if kept.shape != (n_len, n_len):
            raise ValueError(f"custom mask shape {kept.shape} does not match N={n_len}")
    else:
        raise ValueError(f"unknown mask kind {kind!r}; expected one of {MASK_KINDS}")
    if not kept.any():
        raise ValueError("mask keeps no cells")
    return SamplingMask(kept=kept, mode=mode, provenance=kind, params=params)


def infer_provenance(kept) -> tuple[str, dict]:
    """Recover ``(kind, params)`` for a structured mask, else ``("custom", {})``."""
    kept = np.asarray(kept, dtype=bool)
    n_len = kept.shape[0]
    if kept.all():
        return "full", {}
    rows = kept.any(axis=1)
    cols = kept.any(axis=0)
    candidates = []
    if cols.all():
        idx = np.flatnonzero(rows)
        if len(idx) > 1:
            d = int(idx[1] - idx[0])
            candidates.append(("uniform_delay", {"keep_every": d}))
        for centered in (False, True):
            axis = np.argsort(_signed(n_len), kind="stable") if centered else np.arange(n_len)
            on = np.flatnonzero(rows[axis])
            candidates.append(("block_delay", {"frac_first": on[0] / n_len, "frac_last": (n_len - 1 - on[-1]) / n_len, "centered": centered}))
    if rows.all():
        for centered in (False, True):
            axis = np.argsort(_signed(n_len), kind="stable") if centered else np.arange(n_len)
            on = np.flatnonzero(cols[axis])
            candidates.append(("block_doppler", {"frac_first": on[0] / n_len, "frac_last": (n_len - 1 - on[-1]) / n_len, "centered": centered}))
    for kind, params in candidates:
        try:
            if np.array_equal(make_mask(kind, params, n_len).kept, kept):
                return kind, params
        except ValueError:
            continue
    return "custom", {}


def apply_mask(A, mask: SamplingMask):
    """Apply ``mask`` to an AF.

    ``zero_fill`` returns a plain array with removed cells set to 0;
    ``exclude`` returns a ``numpy.ma.MaskedArray`` whose masked cells are
    ignored by the distance and the solver. Both are idempotent.
    """
    if isinstance(A, np.ma.MaskedArray):
        prior = ~np.ma.getmaskarray(A)
        A = np.ma.getdata(A)
    else:
        prior = None
    A = check_square(A)
    if A.shape != mask.kept.shape:
        raise ValueError(f"mask shape {mask.kept.shape} does not match AF shape {A.shape}")
    kept = mask.kept if prior is None else (mask.kept & prior)
    if mask.mode == "zero_fill":
        return np.where(kept, A, 0.0)
    return np.ma.MaskedArray(A.copy(), mask=~kept)


@dataclass
class NoiseSpec:
    """Additive white Gaussian noise at ``snr_db`` over the whole AF.

    ``snr_db = inf`` means no noise.
    """

    snr_db: float = math.inf
    seed: int = 0
    clamp_negative: bool = True

    def __post_init__(self):
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError("snr_db must be a number or +inf")


def noise_sigma(A, snr_db: float) -> float:
    """Per-cell standard deviation giving expected ``||E||_F^2 = ||A||_F^2 10^(-snr/10)``."""
    A = np.asarray(A)
    return float(np.linalg.norm(A) * 10 ** (-snr_db / 20) / A.shape[0])


def add_noise(A, spec: NoiseSpec):
    """Add i.i.d. zero-mean Gaussian noise to every AF cell.

    The variance is ``||A||_F^2 10^(-snr/10) / N^2`` per cell, so the expected
    noise energy matches the requested SNR. Negative results are clipped to
    zero when ``spec.clamp_negative``. A masked input keeps its mask.
    """
    if math.isinf(spec.snr_db):
        return A.copy()
    mask = np.ma.getmaskarray(A) if isinstance(A, np.ma.MaskedArray) else None
    values = check_square(np.ma.getdata(A))
    rng = np.random.default_rng(spec.seed)
    noisy = values + noise_sigma(values, spec.snr_db) * rng.standard_normal(values.shape)
    if spec.clamp_negative:
        noisy = np.maximum(noisy, 0.0)
    return noisy if mask is None else np.ma.MaskedArray(noisy, mask=mask)
