"""Tabular dataset ingestion and DIR-style curation.

A raw CSV is binned along its regression target, a balanced validation/test
set is drawn per bin, the remainder stays as the naturally imbalanced train
split, and bins are tagged many/med/few from their *train* counts. Feature
standardization statistics come from train rows only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import seeds
from .fileio import read_json, sha256_file, write_json


class DataError(ValueError):
    """Malformed input data or an inconsistent dataset manifest."""


# (bin_width, few_max, med_max) defaults per tabular task
DATASET_DEFAULTS = {
    "airfoil": (1.0, 10, 40),
    "abalone": (1.0, 100, 400),
    "real_estate": (0.1, 3, 10),
    "concrete": (1.0, 5, 15),
}


@dataclass
class RawTable:
    features: np.ndarray       # (M, d)
    targets: np.ndarray        # (M,)
    feature_names: list[str]
    target_name: str
    n_rejected: int = 0
    source: str = ""


def load_csv(path, target_column: str) -> RawTable:
    """Parse a headered CSV; rows with any non-numeric cell are dropped.

    All non-target columns become features, in file order.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if target_column not in header:
            raise DataError(f"{path}: no column named {target_column!r}")
        t_idx = header.index(target_column)
        rows, rejected = [], 0
        for cells in reader:
            if len(cells) != len(header):
                rejected += 1
                continue
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                rejected += 1
    if not rows:
        raise DataError(f"{path}: no numeric rows")
    data = np.asarray(rows, dtype=np.float64)
    f_idx = [i for i in range(len(header)) if i != t_idx]
    return RawTable(
        features=data[:, f_idx],
        targets=data[:, t_idx],
        feature_names=[header[i] for i in f_idx],
        target_name=target_column,
        n_rejected=rejected,
        source=str(path),
    )


@dataclass(frozen=True)
class BinSpec:
    """Equal-width binning anchored at the observed minimum."""
    width: float
    origin: float

    def id_of(self, values) -> np.ndarray:
        return np.floor((np.asarray(values) - self.origin) / self.width).astype(int)

    def center(self, ids) -> np.ndarray:
        return self.origin + (np.asarray(ids) + 0.5) * self.width


def bin_labels(values, bin_width: float):
    """Bin ids plus the spec mapping ids back to center values."""
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    values = np.asarray(values, dtype=np.float64)
    spec = BinSpec(width=float(bin_width), origin=float(values.min()))
    return spec.id_of(values), spec


def shot_regions(train_counts: dict[int, int], thresholds) -> dict[int, str]:
    """many <=> count > med_max; few <=> count < few_max; med otherwise."""
    few_max, med_max = thresholds
    if not (0 < few_max < med_max):
        raise ValueError(f"thresholds must satisfy 0 < few_max < med_max, "
                         f"got {thresholds}")
    out = {}
    for b, c in train_counts.items():
        if c > med_max:
            out[int(b)] = "many"
        elif c < few_max:
            out[int(b)] = "few"
        else:
            out[int(b)] = "med"
    return out


@dataclass
class DirDataset:
    """Curated imbalanced-train / balanced-eval dataset.

    ``bin_regions`` covers every bin id seen in any split; bins absent from
    train count as zero and therefore land in the few region.
    """
    features: np.ndarray           # (M, d), standardized by train statistics
    targets: np.ndarray            # (M,) regression targets, original units
    bin_values: np.ndarray         # (M,) quantity that was binned
    bin_ids: np.ndarray            # (M,) int
    split: np.ndarray              # (M,) 'train' | 'val' | 'test'
    bin_spec: BinSpec
    bin_regions: dict[int, str]
    meta: dict = field(default_factory=dict)

    def rows(self, split: str):
        mask = self.split == split
        regions = np.array([self.bin_regions[int(b)] for b in self.bin_ids[mask]])
        return (self.features[mask], self.targets[mask],
                self.bin_ids[mask], regions)

    def train_bins(self):
        """Sorted unique train bin ids with centers and counts."""
        ids, counts = np.unique(self.bin_ids[self.split == "train"],
                                return_counts=True)
        return ids, self.bin_spec.center(ids), counts

    def n_rows(self, split: str) -> int:
        return int((self.split == split).sum())


def _standardize(features: np.ndarray, train_mask: np.ndarray):
    mean = features[train_mask].mean(axis=0)
    std = features[train_mask].std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)  # constant columns pass through
    return (features - mean) / std, mean, std


def curate_split(raw: RawTable, seed: int, test_per_bin: int, val_per_bin: int,
                 bin_width: float, thresholds, bin_on=None) -> DirDataset:
    """Assign splits per bin (test, then val, remainder train) and standardize.

    Each bin contributes up to the quotas but never empties below one train
    row; draws are deterministic per seed. ``bin_on`` selects the quantity to
    bin (defaults to the regression target).
    """
    if test_per_bin < 1 or val_per_bin < 0:
        raise ValueError("quotas must be positive")
    values = raw.targets if bin_on is None else np.asarray(bin_on)
    if values.shape[0] == 0:
        raise DataError("dataset is empty; no train rows possible")
    bin_ids, spec = bin_labels(values, bin_width)
    rng = seeds.rng(seed, seeds.SPLIT)
    split = np.full(values.shape[0], "train", dtype="<U5")
    for b in np.unique(bin_ids):
        idxs = np.flatnonzero(bin_ids == b)
        perm = idxs[rng.permutation(idxs.shape[0])]
        n = perm.shape[0]
        n_test = min(test_per_bin, max(0, n - 1))
        n_val = min(val_per_bin, max(0, n - 1 - n_test))
        split[perm[:n_test]] = "test"
        split[perm[n_test:n_test + n_val]] = "val"
    train_mask = split == "train"
    if not train_mask.any():
        raise DataError("curation left no train rows")

    features, mean, std = _standardize(raw.features, train_mask)
    ids, counts = np.unique(bin_ids[train_mask], return_counts=True)
    regions = shot_regions(dict(zip(ids.tolist(), counts.tolist())), thresholds)
    for b in np.unique(bin_ids):
        regions.setdefault(int(b), "few")  # zero train rows

    meta = {
        "source": raw.source,
        "target_column": raw.target_name,
        "seed": seed,
        "bin_width": float(bin_width),
        "bin_origin": spec.origin,
        "thresholds": [int(thresholds[0]), int(thresholds[1])],
        "test_per_bin": int(test_per_bin),
        "val_per_bin": int(val_per_bin),
        "n_rejected": raw.n_rejected,
        "standardization": {"mean": mean.tolist(), "std": std.tolist()},
    }
    return DirDataset(features=features, targets=raw.targets.copy(),
                      bin_values=np.asarray(values, dtype=np.float64),
                      bin_ids=bin_ids, split=split, bin_spec=spec,
                      bin_regions=regions, meta=meta)


def save_manifest(path, ds: DirDataset) -> None:
    manifest = dict(ds.meta)
    manifest["kind"] = "uci-dataset"
    if ds.meta.get("source"):
        manifest["source_sha256"] = sha256_file(ds.meta["source"])
    manifest["rows"] = [
        {"i": i, "split": s, "bin": int(b), "region": ds.bin_regions[int(b)]}
        for i, (s, b) in enumerate(zip(ds.split.tolist(), ds.bin_ids.tolist()))
    ]
    write_json(path, manifest)


def load_from_manifest(path) -> DirDataset:
    """Rebuild the exact dataset from its manifest plus the source CSV."""
    manifest = read_json(path)
    if manifest.get("kind") != "uci-dataset":
        raise DataError(f"{path}: not a dataset manifest")
    source = manifest["source"]
    digest = sha256_file(source)
    if digest != manifest.get("source_sha256"):
        raise DataError(f"{source}: digest mismatch against manifest")
    raw = load_csv(source, manifest["target_column"])
    rows = manifest["rows"]
    if len(rows) != raw.targets.shape[0]:
        raise DataError(f"{path}: row count mismatch against source")
    split = np.array([r["split"] for r in rows], dtype="<U5")
    bin_ids = np.array([r["bin"] for r in rows], dtype=int)
    regions = {int(r["bin"]): r["region"] for r in rows}
    features, _, _ = _standardize(raw.features, split == "train")
    spec = BinSpec(width=manifest["bin_width"], origin=manifest["bin_origin"])
    meta = {k: manifest[k] for k in
            ("source", "target_column", "seed", "bin_width", "bin_origin",
             "thresholds", "test_per_bin", "val_per_bin", "n_rejected",
             "standardization")}
    return DirDataset(features=features, targets=raw.targets.copy(),
                      bin_values=raw.targets.copy(), bin_ids=bin_ids,
                      split=split, bin_spec=spec, bin_regions=regions,
                      meta=meta)


# --------------------------------------------------------------- stand-ins


def synthetic_airfoil(seed: int = 0) -> RawTable:
    """Deterministic stand-in shaped like the Airfoil Self-Noise task.

    1503 rows, 5 physical features, a dB-scale target in roughly [103, 141]
    with a strongly imbalanced unimodal histogram. Used when the real UCI
    file is not available locally; it is NOT the real dataset.
    """
    rng = seeds.rng(seed, seeds.SAMPLE)
    n = 1503
    freq = 10.0 ** rng.uniform(np.log10(200.0), np.log10(20000.0), n)
    angle = rng.beta(1.3, 3.2, n) * 22.0
    chord = rng.choice([0.0254, 0.0508, 0.1016, 0.1524, 0.2286, 0.3048], n)
    velocity = rng.choice([31.7, 39.6, 55.5, 71.3], n)
    thickness = 0.0004 + rng.beta(1.2, 4.0, n) * 0.055 * (0.25 + angle / 22.0)

    strouhal = freq * chord / velocity
    stall = np.maximum(angle - 12.0, 0.0)  # rare regime, carries its own physics
    spl = (
        127.0
        - 5.2 * (np.log10(strouhal) - 0.35) ** 2
        + 9.5 * np.log10(velocity / 40.0)
        - 0.16 * angle * np.log10(freq / 1500.0)
        - 90.0 * thickness * np.log10(freq / 800.0)
        - 0.12 * stall ** 2 * (1.0 + np.log10(freq / 2000.0))
        + rng.normal(0.0, 2.0, n)
    )
    return RawTable(
        features=np.stack([freq, angle, chord, velocity, thickness], axis=1),
        targets=spl,
        feature_names=["frequency_hz", "angle_deg", "chord_m",
                       "velocity_mps", "thickness_m"],
        target_name="sound_pressure_db",
        source=f"synthetic_airfoil(seed={seed})",
    )


def write_csv(path, table: RawTable) -> None:
    """Write a RawTable back out as a headered CSV (cells via repr)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.feature_names + [table.target_name])
        for x, y in zip(table.features, table.targets):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(y))])
