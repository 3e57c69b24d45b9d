"""Datasets, labels, domains, splits and the labelled/unlabelled partition.

Images are ``(H, W)`` float32 arrays with intensities in [0, 1]; H and W must
be powers of two (the spectral corruption step requires it).  A dataset is an
ordered list of samples sharing one domain id.  Splitting, k-fold assignment
and labelled-subset selection are pure functions of their inputs and a seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .seeds import rng_for


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def validate_image(image: np.ndarray) -> np.ndarray:
    """Check the image contract: 2-D, power-of-two sides, finite, in [0, 1]."""
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {arr.shape}")
    h, w = arr.shape
    if not (is_power_of_two(h) and is_power_of_two(w)):
        raise ValueError(f"image sides must be powers of two, got {h}x{w}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image intensities must lie in [0, 1]")
    return arr


@dataclass
class Sample:
    """One image with an optional binary label (0 clean, 1 artifact)."""

    image: np.ndarray
    label: Optional[int]
    domain_id: int

    def __post_init__(self) -> None:
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"label must be 0, 1 or None, got {self.label}")


@dataclass
class Dataset:
    """Named, single-domain ordered collection of samples."""

    name: str
    domain_id: int
    samples: list[Sample] = field(default_factory=list)

    def __post_init__(self) -> None:
        for s in self.samples:
            if s.domain_id != self.domain_id:
                raise ValueError(
                    f"sample domain {s.domain_id} != dataset domain {self.domain_id}"
                )

    def __len__(self) -> int:
        return len(self.samples)

    def labels(self) -> np.ndarray:
        """Label vector; -1 marks unlabelled samples."""
        return np.array(
            [-1 if s.label is None else s.label for s in self.samples], dtype=np.int64
        )

    def class_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for s in self.samples:
            if s.label is not None:
                counts[s.label] = counts.get(s.label, 0) + 1
        return counts

    def images(self, indices: Optional[Sequence[int]] = None) -> np.ndarray:
        """Stack images into an (N, H, W) float32 array."""
        sel = self.samples if indices is None else [self.samples[i] for i in indices]
        return np.stack([s.image for s in sel]).astype(np.float32, copy=False)

    def subset(self, indices: Sequence[int]) -> list[Sample]:
        return [self.samples[i] for i in indices]


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint train/test index lists covering a dataset exactly once."""

    train_indices: tuple[int, ...]
    test_indices: tuple[int, ...]
    seed: int
    fold_id: Optional[int] = None


@dataclass
class TargetPartition:
    """Tiny labelled subset plus the label-stripped remainder of a target set."""

    labelled: list[Sample]
    unlabelled: list[Sample]

    def __post_init__(self) -> None:
        if any(s.label is None for s in self.labelled):
            raise ValueError("labelled partition contains a sample without a label")
        if any(s.label is not None for s in self.unlabelled):
            raise ValueError("unlabelled partition contains a labelled sample")

    def all_samples(self) -> list[Sample]:
        return list(self.labelled) + list(self.unlabelled)


def _strata(ds: Dataset) -> dict[int, list[int]]:
    """Indices grouped by label; unlabelled samples form stratum -1."""
    groups: dict[int, list[int]] = {}
    for i, s in enumerate(ds.samples):
        groups.setdefault(-1 if s.label is None else s.label, []).append(i)
    return groups


def split_dataset(ds: Dataset, test_fraction: float, seed: int) -> SplitSpec:
    """Stratified train/test split with |test| = round(test_fraction * |ds|)."""
    if len(ds) == 0:
        raise ValueError("cannot split an empty dataset")
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in [0, 1), got {test_fraction}")

    n_test_total = int(round(test_fraction * len(ds)))
    groups = _strata(ds)
    keys = sorted(groups)
    # Largest-remainder apportionment keeps the total exact while staying
    # proportional per class.
    quotas = {k: test_fraction * len(groups[k]) for k in keys}
    base = {k: int(np.floor(quotas[k])) for k in keys}
    short = n_test_total - sum(base.values())
    by_remainder = sorted(keys, key=lambda k: (-(quotas[k] - base[k]), k))
    for k in by_remainder[:short]:
        base[k] += 1

    rng = rng_for(seed, "split")
    test: list[int] = []
    for k in keys:
        idx = np.array(groups[k])
        rng.shuffle(idx)
        if base[k] > len(idx):
            raise ValueError(f"stratum {k} too small for requested test fraction")
        test.extend(int(i) for i in idx[: base[k]])
    test_set = set(test)
    train = [i for i in range(len(ds)) if i not in test_set]
    return SplitSpec(tuple(train), tuple(sorted(test)), seed=seed)


def make_kfold(ds: Dataset, k: int, seed: int) -> list[SplitSpec]:
    """Stratified k-fold: test partitions are disjoint and cover the dataset."""
    if k < 2 or k > len(ds):
        raise ValueError(f"k must satisfy 2 <= k <= {len(ds)}, got {k}")
    folds: list[list[int]] = [[] for _ in range(k)]
    rng = rng_for(seed, "kfold")
    for key in sorted(_strata(ds)):
        idx = np.array(_strata(ds)[key])
        rng.shuffle(idx)
        for j, i in enumerate(idx):
            folds[j % k].append(int(i))
    specs = []
    for f, test in enumerate(folds):
        test_sorted = tuple(sorted(test))
        train = tuple(i for i in range(len(ds)) if i not in set(test_sorted))
        specs.append(SplitSpec(train, test_sorted, seed=seed, fold_id=f))
    return specs


def select_labelled_subset(ds: Dataset, n_per_class: int, seed: int) -> TargetPartition:
    """Pick a class-balanced labelled subset; strip labels from the rest."""
    if n_per_class < 0:
        raise ValueError("n_per_class must be >= 0")
    groups = _strata(ds)
    for cls in (0, 1):
        have = len(groups.get(cls, []))
        if have < n_per_class:
            raise ValueError(
                f"class {cls} has only {have} labelled samples, need {n_per_class}"
            )
    rng = rng_for(seed, "labelled-subset")
    chosen: set[int] = set()
    for cls in (0, 1):
        idx = np.array(groups.get(cls, []), dtype=np.int64)
        rng.shuffle(idx)
        chosen.update(int(i) for i in idx[:n_per_class])
    labelled = [ds.samples[i] for i in sorted(chosen)]
    unlabelled = [
        replace(ds.samples[i], label=None)
        for i in range(len(ds))
        if i not in chosen
    ]
    return TargetPartition(labelled=labelled, unlabelled=unlabelled)


# --- manifest + flat-pixel persistence ------------------------------------

def save_dataset(ds: Dataset, out_dir: Path | str) -> Path:
    """Write ``<name>.manifest.json`` plus one flat little-endian float32
    pixel file, samples concatenated row-major in manifest order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if len(ds) == 0:
        raise ValueError("refusing to save an empty dataset")
    h, w = ds.samples[0].image.shape
    for s in ds.samples:
        if s.image.shape != (h, w):
            raise ValueError("all samples in a dataset must share one image shape")
    pixels = out / f"{ds.name}.pixels.f32"
    stack = np.stack([s.image for s in ds.samples]).astype("<f4")
    pixels.write_bytes(stack.tobytes())
    manifest = {
        "name": ds.name,
        "domain_id": ds.domain_id,
        "image_shape": [int(h), int(w)],
        "pixel_file": pixels.name,
        "samples": [{"label": s.label} for s in ds.samples],
    }
    path = out / f"{ds.name}.manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def load_dataset(manifest_path: Path | str) -> Dataset:
    path = Path(manifest_path)
    manifest = json.loads(path.read_text())
    h, w = manifest["image_shape"]
    raw = np.frombuffer((path.parent / manifest["pixel_file"]).read_bytes(), dtype="<f4")
    n = len(manifest["samples"])
    if raw.size != n * h * w:
        raise ValueError(
            f"pixel payload holds {raw.size} floats, expected {n * h * w}"
        )
    stack = raw.reshape(n, h, w)
    samples = [
        Sample(image=stack[i].copy(), label=rec["label"], domain_id=manifest["domain_id"])
        for i, rec in enumerate(manifest["samples"])
    ]
    return Dataset(name=manifest["name"], domain_id=manifest["domain_id"], samples=samples)
