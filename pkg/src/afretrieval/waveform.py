"""Complex waveforms on a periodic grid: DFT convention, trivial transforms,
support (band/time-limitedness) checks and the test-waveform generators.

All signals are plain 1-D ``complex128`` numpy arrays indexed modulo ``N``.
The DFT is unnormalized in the forward direction and carries ``1/N`` in the
inverse, which is the convention used everywhere in the package.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Literal, Optional

import numpy as np

from ._validation import check_signal

SupportKind = Literal["band_limited", "time_limited", "none"]


class SupportError(ValueError):
    """Raised when a waveform's support is too wide for unique recovery (> N/2)."""


def dft(x) -> np.ndarray:
    """Unnormalized forward DFT, ``X[k] = sum_n x[n] exp(-2j*pi*n*k/N)``."""
    return np.fft.fft(check_signal(x))


def idft(X) -> np.ndarray:
    """Inverse of :func:`dft` (carries the ``1/N`` factor)."""
    return np.fft.ifft(check_signal(X, "spectrum"))


# -- trivial ambiguities -----------------------------------------------------

def rotate(x, phi: float) -> np.ndarray:
    return np.exp(1j * phi) * check_signal(x)


def shift(x, a: int) -> np.ndarray:
    """Circular delay, ``y[n] = x[n - a]``."""
    return np.roll(check_signal(x), int(a))


def reflect(x) -> np.ndarray:
    """Circular time reversal, ``y[n] = x[-n mod N]``."""
    x = check_signal(x)
    return x[(-np.arange(x.shape[0])) % x.shape[0]]


def modulate(x, b: int) -> np.ndarray:
    """Integer frequency shift, ``y[n] = exp(2j*pi*b*n/N) x[n]``."""
    x = check_signal(x)
    n = np.arange(x.shape[0])
    # reduce b*n mod N before the exponent so large products stay exact
    return np.exp(2j * np.pi * ((int(b) * n) % x.shape[0]) / x.shape[0]) * x


_TRANSFORMS = {"rotate", "shift", "reflect", "modulate"}


def apply_trivial_transform(x, transform: str, param=None) -> np.ndarray:
    """Apply one of the AF-preserving transforms by name.

    ``transform`` is ``"rotate"`` (``param`` = angle), ``"shift"`` (integer
    delay), ``"reflect"`` (no parameter) or ``"modulate"`` (integer bin).
    """
    if transform not in _TRANSFORMS:
        raise ValueError(f"unknown transform {transform!r}; expected one of {sorted(_TRANSFORMS)}")
    if transform == "reflect":
        return reflect(x)
    if param is None:
        raise ValueError(f"transform {transform!r} needs a parameter")
    if transform in ("shift", "modulate") and int(param) != param:
        raise ValueError(f"{transform} needs an integer parameter, got {param!r}")
    return {"rotate": rotate, "shift": shift, "modulate": modulate}[transform](x, param)


# -- support -------------------------------------------------------------------

@dataclass(frozen=True)
class SupportSpec:
    """A cyclic run of ``width`` possibly-nonzero entries starting at ``offset``.

    ``kind`` selects the domain: the DFT for ``band_limited``, the samples
    themselves for ``time_limited``.
    """

    kind: SupportKind = "none"
    width: int = 1
    offset: int = 0

    def __post_init__(self):
        if self.kind not in ("band_limited", "time_limited", "none"):
            raise ValueError(f"unknown support kind {self.kind!r}")
        if self.width < 1:
            raise ValueError("support width must be positive")

    def validate(self, n_len: int) -> "SupportSpec":
        if self.kind != "none" and self.width > n_len // 2:
            raise SupportError(
                f"support width {self.width} exceeds floor(N/2) = {n_len // 2}; "
                "the AF no longer determines the signal uniquely"
            )
        if not 0 <= self.offset < n_len:
            raise ValueError(f"support offset {self.offset} outside [0, {n_len})")
        return self

    def indices(self, n_len: int) -> np.ndarray:
        return (self.offset + np.arange(self.width)) % n_len


def _support_domain(x: np.ndarray, kind: str) -> np.ndarray:
    return np.fft.fft(x) if kind == "band_limited" else x


def check_support(x, spec: SupportSpec, tol: float = 0.0) -> bool:
    """True when ``x`` has a cyclic run of ``N - width`` entries with ``|.| <= tol``
    in the domain selected by ``spec.kind`` (anywhere on the circle)."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    x = check_signal(x)
    if spec.kind == "none":
        return True
    n_len = x.shape[0]
    run = n_len - spec.width
    if run <= 0:
        return True
    small = (np.abs(_support_domain(x, spec.kind)) <= tol).astype(np.int64)
    counts = np.convolve(np.concatenate([small, small[: run - 1]]), np.ones(run, np.int64), "valid")
    return bool(np.any(counts[:n_len] == run))


def best_support_offset(x, kind: str, width: int) -> int:
    """Offset of the width-``width`` cyclic window holding the most energy."""
    x = check_signal(x)
    n_len = x.shape[0]
    energy = np.abs(_support_domain(x, kind)) ** 2
    windowed = np.convolve(np.concatenate([energy, energy[: width - 1]]), np.ones(width), "valid")
    return int(np.argmax(windowed[:n_len]))


def project_support(x, spec: SupportSpec) -> np.ndarray:
    """Zero everything outside the window described by ``spec``."""
    x = check_signal(x)
    if spec.kind == "none":
        return x.copy()
    n_len = x.shape[0]
    keep = np.zeros(n_len, dtype=bool)
    keep[spec.indices(n_len)] = True
    v = _support_domain(x, spec.kind).copy()
    v[~keep] = 0.0
    return np.fft.ifft(v) if spec.kind == "band_limited" else v


# -- waveform generators ----------------------------------------------------------

@dataclass
class WaveformRecipe:
    """Parameters of a test waveform.

    ``gaussian_spectrum`` draws unit-modulus random phases over a sampled
    Gaussian magnitude (std ``cutoff`` in usec^-1, centred at ``center_hz``)
    and hard-zeroes everything outside a ``width``-wide window, either in
    frequency (``limit="band"``) or in time (``limit="time"``). ``lfm`` and
    ``nlfm`` are rectangular pulses of duration ``pulse_T`` sampled every ``dt``.

    ``dt=None`` resolves to ``1 / (8 * cutoff * 1e6)`` for the Gaussian recipe
    (Gaussian std of N/8 bins) and to 0.4 us for the chirps. ``pulse_T=None``
    resolves to ``(N // 2 - 1) * dt``; ``width=None`` to ``ceil((N - 1) / 2)``.
    """

    kind: Literal["gaussian_spectrum", "lfm", "nlfm"] = "gaussian_spectrum"
    n_len: int = 128
    center_hz: float = 800.0
    cutoff: float = 150.0
    pulse_T: Optional[float] = None
    sweep_df: float = 128e3
    nlfm_L: int = 1
    dt: Optional[float] = None
    seed: int = 0
    limit: Literal["band", "time"] = "band"
    width: Optional[int] = None

    def resolved(self) -> "WaveformRecipe":
        """Copy with every ``None`` default materialized."""
        r = WaveformRecipe(**asdict(self))
        if r.kind not in ("gaussian_spectrum", "lfm", "nlfm"):
            raise ValueError(f"unknown waveform kind {r.kind!r}")
        if r.n_len < 2:
            raise ValueError("n_len must be >= 2")
        if r.dt is None:
            r.dt = 1.0 / (8.0 * r.cutoff * 1e6) if r.kind == "gaussian_spectrum" else 0.4e-6
        if r.pulse_T is None:
            r.pulse_T = (r.n_len // 2 - 1) * r.dt
        if r.width is None:
            r.width = math.ceil((r.n_len - 1) / 2)
        for name in ("cutoff", "dt", "pulse_T"):
            if getattr(r, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if r.nlfm_L < 1:
            raise ValueError("nlfm_L must be a positive integer")
        return r

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "WaveformRecipe":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown recipe fields: {sorted(unknown)}")
        return cls(**d)


def _chirp_samples(r: WaveformRecipe) -> np.ndarray:
    n = np.arange(r.n_len)
    t = r.dt * n
    # small slack so n*dt == T survives rounding
    envelope = (t <= r.pulse_T * (1 + 1e-12)).astype(float)
    k = r.sweep_df / r.pulse_T
    phase = np.pi * k * t**2
    if r.kind == "nlfm":
        for ell in range(1, r.nlfm_L + 1):
            phase = phase + (0.4 * r.pulse_T / ell) * np.cos(2 * np.pi * ell * t / r.pulse_T)
    return envelope * np.exp(1j * np.pi * phase)


def recipe_support(recipe: WaveformRecipe) -> SupportSpec:
    """Support that :func:`generate` guarantees for ``recipe``."""
    r = recipe.resolved()
    if r.kind == "gaussian_spectrum":
        if r.limit == "band":
            center = int(round(r.center_hz * r.n_len * r.dt)) % r.n_len
            return SupportSpec("band_limited", r.width, (center - r.width // 2) % r.n_len)
        return SupportSpec("time_limited", r.width, 0)
    count = int(np.count_nonzero(_chirp_samples(r)))
    return SupportSpec("time_limited", count, 0)


def generate(recipe: WaveformRecipe) -> np.ndarray:
    """Synthesize the waveform described by ``recipe``.

    Raises
    ------
    SupportError
        If the resulting support is wider than ``N // 2``.
    """
    r = recipe.resolved()
    spec = recipe_support(r)
    spec.validate(r.n_len)
    if r.kind != "gaussian_spectrum":
        return _chirp_samples(r)

    rng = np.random.default_rng(r.seed)
    phases = np.exp(2j * np.pi * rng.random(r.n_len))
    sigma_bins = r.cutoff * 1e6 * r.n_len * r.dt
    keep = np.zeros(r.n_len, dtype=bool)
    keep[spec.indices(r.n_len)] = True
    if r.limit == "band":
        center = r.center_hz * r.n_len * r.dt
        offset = (np.arange(r.n_len) - center + r.n_len / 2) % r.n_len - r.n_len / 2
        mag = np.exp(-(offset**2) / (2 * sigma_bins**2)) * keep
        return np.fft.ifft(mag * phases)
    center = (r.width - 1) / 2
    mag = np.exp(-((np.arange(r.n_len) - center) ** 2) / (2 * sigma_bins**2)) * keep
    return mag * phases
