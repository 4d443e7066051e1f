"""PK mini-batches over tagged feature rows, and the grayscale view of visible rows."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from .core import RngStream, as_vector
from .errors import ConfigError, DimensionError, NumericError, SamplingError

if TYPE_CHECKING:  # pragma: no cover
    from .synthdata import SynthDataset


class Modality(str, Enum):
    """Source modality of a feature row; grayscale rows derive from visible ones."""

    VIS = "vis"
    GRAY = "gray"
    IR = "ir"


MODALITY_CODES = tuple(m.value for m in Modality)


class Stage(Enum):
    """Training phase. STAGE1 batches mix grayscale+infrared, STAGE2 visible+infrared."""

    STAGE1 = 1
    STAGE2 = 2

    @property
    def modality_pair(self) -> tuple[str, str]:
        if self is Stage.STAGE1:
            return (Modality.GRAY.value, Modality.IR.value)
        return (Modality.VIS.value, Modality.IR.value)


@dataclass(frozen=True)
class FeatureLayout:
    """Block structure of synthetic feature vectors: [shared | color | modality]."""

    shared_dims: int
    color_dims: int
    modality_dims: int

    def __post_init__(self):
        for name in ("shared_dims", "color_dims", "modality_dims"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def total_dims(self) -> int:
        return self.shared_dims + self.color_dims + self.modality_dims

    @property
    def shared_slice(self) -> slice:
        return slice(0, self.shared_dims)

    @property
    def color_slice(self) -> slice:
        return slice(self.shared_dims, self.shared_dims + self.color_dims)

    @property
    def modality_slice(self) -> slice:
        return slice(self.shared_dims + self.color_dims, self.total_dims)


def grayscale_of(visible, layout: FeatureLayout) -> np.ndarray:
    """Replace the color block with its mean; all other coordinates pass through.

    This is the feature-level analogue of dropping chroma while keeping
    luminance. Applying it twice gives the same result as applying it once.
    """
    v = as_vector(visible)
    if v.shape[0] != layout.total_dims:
        raise DimensionError(
            f"vector has {v.shape[0]} dims, layout expects {layout.total_dims}"
        )
    out = v.copy()
    out[layout.color_slice] = out[layout.color_slice].mean()
    return out


@dataclass(frozen=True)
class BatchSpec:
    """P identities times K rows per modality per identity."""

    p: int
    k: int

    def __post_init__(self):
        if int(self.p) < 2:
            raise ConfigError("batch spec needs p >= 2 identities")
        if int(self.k) < 2:
            raise ConfigError("batch spec needs k >= 2 rows per modality")

    @property
    def rows(self) -> int:
        return 2 * self.p * self.k


@dataclass
class LabeledBatch:
    """Feature rows with a per-row identity label and modality tag."""

    features: np.ndarray
    labels: np.ndarray
    modalities: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.modalities = np.asarray(self.modalities, dtype=np.str_)
        if self.features.ndim != 2:
            raise DimensionError(f"features must be 2-D, got shape {self.features.shape}")
        n = self.features.shape[0]
        if self.labels.shape != (n,) or self.modalities.shape != (n,):
            raise DimensionError("features, labels, and modalities disagree on row count")
        for code in np.unique(self.modalities):
            if code not in MODALITY_CODES:
                raise ConfigError(f"unknown modality tag {code!r}")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def identity_values(self) -> np.ndarray:
        return np.unique(self.labels)

    def modality_values(self) -> tuple[str, ...]:
        return tuple(np.unique(self.modalities).tolist())

    def cell_count(self) -> int:
        """Rows per (identity, modality) cell; raises ConfigError on uneven cells."""
        counts = {
            int(((self.labels == i) & (self.modalities == m)).sum())
            for i in self.identity_values()
            for m in self.modality_values()
        }
        if len(counts) != 1:
            raise ConfigError(f"uneven (identity, modality) cells: sizes {sorted(counts)}")
        return counts.pop()

    def validate(self) -> "LabeledBatch":
        """Check batch invariants: finite rows, exactly two modalities, even cells."""
        if not np.isfinite(self.features).all():
            raise NumericError("batch features contain NaN or Inf")
        mods = self.modality_values()
        if len(mods) != 2:
            raise ConfigError(f"batch must mix exactly two modalities, got {mods}")
        self.cell_count()
        return self


def sample_batch(
    dataset: "SynthDataset", spec: BatchSpec, stage: Stage, rng: RngStream
) -> LabeledBatch:
    """Draw P identities, then K rows per stage modality each, without replacement.

    Stage 1 draws grayscale+infrared rows, stage 2 visible+infrared. Identity
    choice is uniform; the same stream always reproduces the same batch.
    """
    pair = stage.modality_pair
    ids = dataset.identities
    if len(ids) < spec.p:
        raise SamplingError(f"dataset has {len(ids)} identities, batch needs {spec.p}")
    for mod in pair:
        for ident in ids:
            have = dataset.count_of(ident, mod)
            if have < spec.k:
                raise SamplingError(
                    f"identity {ident} has {have} {mod!r} rows, batch needs {spec.k}"
                )
    chosen = rng.choice(len(ids), size=spec.p, replace=False)
    row_idx: list[int] = []
    for ci in chosen:
        ident = ids[int(ci)]
        for mod in pair:
            rows = dataset.rows_of(ident, mod)
            pick = rng.choice(len(rows), size=spec.k, replace=False)
            row_idx.extend(int(r) for r in rows[pick])
    idx = np.asarray(row_idx, dtype=np.int64)
    return LabeledBatch(
        dataset.features[idx], dataset.labels[idx], dataset.modalities[idx]
    ).validate()
