"""Synthetic multi-domain phantoms and k-space motion corruption.

Clean images are nested-ellipse phantoms whose appearance (intensity gamma,
noise level, blur, background) is drawn per image from domain-specific
ranges.  Motion artifacts are injected by replacing a sinusoidally selected
subset of k-space lines with lines from a circularly translated copy of the
image, then reconstructing via inverse FFT magnitude.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Union

import numpy as np

from .data import Dataset, Sample, is_power_of_two, validate_image
from .seeds import derive_seed, rng_for

AXES = ("rows", "columns")


@dataclass(frozen=True)
class CorruptionParams:
    """One concrete corruption: which lines get replaced, and by how much
    translation.  Lines k with sin(2*pi*frequency*k + phase) > threshold are
    taken from the shifted copy."""

    shift_pixels: int
    frequency: float
    phase: float = 0.0
    threshold: float = 0.5
    axis: str = "rows"

    def __post_init__(self) -> None:
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.frequency < 0:
            raise ValueError("frequency must be >= 0")
        if not -1.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [-1, 1]")


@dataclass(frozen=True)
class CorruptionRanges:
    """Per-image sampling ranges for corruption parameters.

    shift is drawn uniformly from the integer range (inclusive), frequency
    and threshold uniformly from their intervals, phase uniformly in
    [0, 2*pi).  The line-selection rule sin(.) > threshold and these default
    ranges are config-visible choices.
    """

    shift_range: tuple[int, int] = (2, 5)
    frequency_range: tuple[float, float] = (0.05, 0.3)
    threshold_range: tuple[float, float] = (0.3, 0.7)
    axis: str = "rows"

    def __post_init__(self) -> None:
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        if self.shift_range[0] < 1:
            raise ValueError("shift range must start at >= 1 pixel")
        if self.shift_range[1] < self.shift_range[0]:
            raise ValueError("invalid shift range")

    def sample(self, rng: np.random.Generator) -> CorruptionParams:
        return CorruptionParams(
            shift_pixels=int(rng.integers(self.shift_range[0], self.shift_range[1] + 1)),
            frequency=float(rng.uniform(*self.frequency_range)),
            phase=float(rng.uniform(0.0, 2.0 * np.pi)),
            threshold=float(rng.uniform(*self.threshold_range)),
            axis=self.axis,
        )


Range = tuple[float, float]


def _as_range(v: Union[float, tuple, list]) -> Range:
    if isinstance(v, (int, float)):
        return (float(v), float(v))
    lo, hi = v
    if hi < lo:
        raise ValueError(f"invalid range ({lo}, {hi})")
    return (float(lo), float(hi))


@dataclass(frozen=True)
class DomainParams:
    """Appearance recipe for one synthetic domain.

    gamma, noise_sigma, blur_radius and background are per-image sampling
    ranges (a scalar means a degenerate range); wide ranges give a visually
    diverse domain, narrow ranges a homogeneous one.
    """

    domain_id: int
    name: str = ""
    ellipse_count: tuple[int, int] = (3, 5)
    gamma: Union[float, Range] = 1.0
    noise_sigma: Union[float, Range] = 0.02
    blur_radius: Union[float, Range] = 0.0
    background: Union[float, Range] = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        for fname in ("gamma", "noise_sigma", "blur_radius", "background"):
            object.__setattr__(self, fname, _as_range(getattr(self, fname)))
        if self.ellipse_count[0] < 1:
            raise ValueError("need at least one ellipse")
        if not self.name:
            object.__setattr__(self, "name", f"domain{self.domain_id}")


def fft2(image: np.ndarray) -> np.ndarray:
    """Un-normalised forward 2-D FFT (DC bin of a constant image c is c*H*W)."""
    arr = np.asarray(image)
    h, w = arr.shape
    if not (is_power_of_two(h) and is_power_of_two(w)):
        raise ValueError(f"FFT requires power-of-two sides, got {h}x{w}")
    return np.fft.fft2(arr)


def ifft2(spectrum: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft2`; ifft2(fft2(x)) == x up to float error."""
    arr = np.asarray(spectrum)
    h, w = arr.shape
    if not (is_power_of_two(h) and is_power_of_two(w)):
        raise ValueError(f"FFT requires power-of-two sides, got {h}x{w}")
    return np.fft.ifft2(arr)


def translate_circular(image: np.ndarray, shift: int, axis: str = "rows") -> np.ndarray:
    """Circular shift: pixel (r, c) moves to ((r+shift) mod H, c) for rows."""
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    return np.roll(image, shift, axis=0 if axis == "rows" else 1)


def respiratory_mask(n_lines: int, params: CorruptionParams) -> np.ndarray:
    """Boolean per k-space line: True where the sinusoid exceeds threshold."""
    if n_lines < 1:
        raise ValueError("n_lines must be >= 1")
    k = np.arange(n_lines)
    return np.sin(2.0 * np.pi * params.frequency * k + params.phase) > params.threshold


def corrupt_kspace(image: np.ndarray, params: CorruptionParams) -> np.ndarray:
    """Replace masked k-space lines with lines from the translated image.

    Output is the magnitude of the inverse FFT of the combined spectrum,
    clamped to [0, 1].  Zero shift or an empty mask returns the input image
    (up to float round-off).
    """
    arr = validate_image(image).astype(np.float64, copy=False)
    spec = fft2(arr)
    shifted_spec = fft2(translate_circular(arr, params.shift_pixels, params.axis))
    n_lines = arr.shape[0] if params.axis == "rows" else arr.shape[1]
    mask = respiratory_mask(n_lines, params)
    combined = spec.copy()
    if params.axis == "rows":
        combined[mask, :] = shifted_spec[mask, :]
    else:
        combined[:, mask] = shifted_spec[:, mask]
    out = np.abs(ifft2(combined))
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def _gaussian_blur(image: np.ndarray, radius: float) -> np.ndarray:
    # Circular blur via the FFT pair already required by the corruption step.
    h, w = image.shape
    yy = np.minimum(np.arange(h), h - np.arange(h))[:, None]
    xx = np.minimum(np.arange(w), w - np.arange(w))[None, :]
    kernel = np.exp(-0.5 * (yy**2 + xx**2) / radius**2)
    kernel /= kernel.sum()
    return np.real(np.fft.ifft2(np.fft.fft2(image) * np.fft.fft2(kernel)))


def _ellipse_mask(
    size: int, cy: float, cx: float, ry: float, rx: float, angle: float
) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size]
    yc, xc = y - cy, x - cx
    ca, sa = np.cos(angle), np.sin(angle)
    u = ca * xc + sa * yc
    v = -sa * xc + ca * yc
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def gen_phantom(params: DomainParams, seed: int, size: int = 32) -> np.ndarray:
    """Deterministic nested-ellipse phantom with domain appearance applied."""
    if not is_power_of_two(size):
        raise ValueError("phantom size must be a power of two")
    rng = rng_for(derive_seed(params.seed, "domain", params.domain_id), "phantom", seed)

    background = rng.uniform(*params.background)
    img = np.full((size, size), background, dtype=np.float64)

    # One large body ellipse, then smaller interior structures drawn on top.
    n_ellipses = int(rng.integers(params.ellipse_count[0], params.ellipse_count[1] + 1))
    cy, cx = rng.uniform(0.42 * size, 0.58 * size, size=2)
    ry = rng.uniform(0.26 * size, 0.42 * size)
    rx = rng.uniform(0.26 * size, 0.42 * size)
    body = _ellipse_mask(size, cy, cx, ry, rx, rng.uniform(0, np.pi))
    img[body] = rng.uniform(0.45, 0.75)
    for _ in range(n_ellipses - 1):
        ecy = cy + rng.uniform(-0.18, 0.18) * size
        ecx = cx + rng.uniform(-0.18, 0.18) * size
        ery = rng.uniform(0.04, 0.16) * size
        erx = rng.uniform(0.04, 0.16) * size
        inner = _ellipse_mask(size, ecy, ecx, ery, erx, rng.uniform(0, np.pi))
        img[inner] = rng.uniform(0.1, 1.0)

    img = np.clip(img, 0.0, 1.0) ** rng.uniform(*params.gamma)
    radius = rng.uniform(*params.blur_radius)
    if radius > 1e-6:
        img = _gaussian_blur(img, radius)
    sigma = rng.uniform(*params.noise_sigma)
    if sigma > 0:
        img = img + rng.normal(0.0, sigma, img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def build_domain_dataset(
    params: DomainParams,
    corruption: Union[CorruptionParams, CorruptionRanges],
    n_per_class: int,
    seed: int,
    size: int = 32,
) -> Dataset:
    """Balanced two-class dataset: clean phantoms vs corrupted fresh phantoms.

    Corrupted images are generated from phantoms never used in the clean
    class, so no pixel content is shared across classes.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if isinstance(corruption, CorruptionParams) and corruption.shift_pixels == 0:
        raise ValueError("shift_pixels = 0 would make the classes indistinguishable")

    samples: list[Sample] = []
    for i in range(n_per_class):
        img = gen_phantom(params, derive_seed(seed, "clean", i), size)
        samples.append(Sample(image=img, label=0, domain_id=params.domain_id))
    for i in range(n_per_class):
        img = gen_phantom(params, derive_seed(seed, "artifact-source", i), size)
        if isinstance(corruption, CorruptionRanges):
            cp = corruption.sample(rng_for(seed, "corruption", i))
        else:
            cp = corruption
        samples.append(
            Sample(image=corrupt_kspace(img, cp), label=1, domain_id=params.domain_id)
        )
    return Dataset(name=params.name, domain_id=params.domain_id, samples=samples)


def domain_params_to_dict(p: DomainParams) -> dict:
    return dataclasses.asdict(p)


def domain_params_from_dict(d: dict) -> DomainParams:
    d = dict(d)
    for key in ("ellipse_count", "gamma", "noise_sigma", "blur_radius", "background"):
        if key in d and isinstance(d[key], list):
            d[key] = tuple(d[key])
    return DomainParams(**d)
