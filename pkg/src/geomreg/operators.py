"""Synthetic operator-learning benchmark with imbalanced query locations.

Input functions are Gaussian random fields on m fixed sensors over [0, 1].
The linear task maps a field to its running integral evaluated at a query
location y; the nonlinear task treats the field as log-diffusivity of a 1-D
elliptic problem and evaluates the solution at y. Training queries are drawn
from few/med/many bands with a controlled mix; test queries are uniform.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_banded

from . import seeds
from .datasets import BinSpec, DirDataset
from .fileio import read_blob, read_json, sha256_file, write_blob, write_json

OL_BIN_WIDTH = 0.01  # 100 label bins across the unit query domain

# query bands; region of a sample is the band holding its bin center
FEW_BANDS = ((0.0, 0.2), (0.8, 1.0))
MED_BANDS = ((0.2, 0.4), (0.6, 0.8))
MANY_BANDS = ((0.4, 0.6),)
DEFAULT_TRAIN_MIX = (10, 30, 60)  # percent of train queries in few/med/many


@dataclass(frozen=True)
class GrfSpec:
    m: int = 100
    length_scale: float = 0.2
    variance: float = 1.0
    seed: int = 0

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.m)


def rbf_kernel(grid: np.ndarray, length_scale: float, variance: float) -> np.ndarray:
    if length_scale <= 0:
        raise ValueError("length scale must be positive")
    diff = grid[:, None] - grid[None, :]
    return variance * np.exp(-(diff * diff) / (2.0 * length_scale ** 2))


class GrfSampler:
    """Cholesky-based sampler; the factor is computed once per spec.

    The RBF kernel at these length scales is numerically rank-deficient, so a
    jitter ladder (starting at 1e-10 * mean diagonal, x10 per retry, capped at
    1e-6) is applied until the factorization succeeds.
    """

    def __init__(self, spec: GrfSpec):
        self.spec = spec
        self.grid = spec.grid
        kernel = rbf_kernel(self.grid, spec.length_scale, spec.variance)
        jitter = 1e-10 * np.trace(kernel) / spec.m
        self.jitter = None
        while jitter <= 1e-6:
            try:
                self.chol = np.linalg.cholesky(kernel + jitter * np.eye(spec.m))
                self.jitter = jitter
                break
            except np.linalg.LinAlgError:
                jitter *= 10.0
        if self.jitter is None:
            raise np.linalg.LinAlgError(
                "kernel Cholesky failed even at the maximum jitter 1e-6")

    def sample(self, seed: int) -> np.ndarray:
        g = np.random.default_rng(seed).standard_normal(self.spec.m)
        return self.chol @ g


def sample_grf(spec: GrfSpec) -> np.ndarray:
    """One field drawn with the spec's own seed (factorizes per call)."""
    return GrfSampler(spec).sample(spec.seed)


def antiderivative(u_values, grid, y: float) -> float:
    """Running trapezoid integral of the sensor values, interpolated at y."""
    if not (0.0 <= y <= 1.0):
        raise ValueError(f"query location {y} outside [0, 1]")
    s = cumulative_trapezoid(np.asarray(u_values, dtype=np.float64),
                             np.asarray(grid, dtype=np.float64), initial=0.0)
    return float(np.interp(y, grid, s))


def solve_elliptic(b_values, grid, f_const: float = 10.0) -> np.ndarray:
    """div(e^b grad u) = f on [0, 1] with u(0) = u(1) = 0.

    Conservative second-order scheme: face diffusivity e^b at the midpoints
    between nodes (b averaged), one tridiagonal solve. Boundary values are
    exactly zero by construction.
    """
    b = np.asarray(b_values, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    m = grid.shape[0]
    if b.shape != (m,):
        raise ValueError("one diffusivity value per grid node required")
    if not np.isfinite(b).all():
        raise ValueError("non-finite diffusivity field")
    h = grid[1] - grid[0]
    face = np.exp(0.5 * (b[:-1] + b[1:]))  # m-1 faces, strictly positive
    n = m - 2
    diag = -(face[:-1] + face[1:])
    ab = np.zeros((3, n))
    ab[0, 1:] = face[1:-1]   # upper diagonal
    ab[1, :] = diag
    ab[2, :-1] = face[1:-1]  # lower diagonal
    rhs = np.full(n, f_const * h * h)
    interior = solve_banded((1, 1), ab, rhs)
    u = np.zeros(m)
    u[1:-1] = interior
    return u


def region_of_query(y) -> np.ndarray:
    """Region by the band containing the query's bin center."""
    y = np.asarray(y, dtype=np.float64)
    ids = np.clip(np.floor(y / OL_BIN_WIDTH).astype(int), 0, 99)
    centers = (ids + 0.5) * OL_BIN_WIDTH
    out = np.where(centers < 0.2, "few",
                   np.where(centers < 0.4, "med",
                            np.where(centers <= 0.6, "many",
                                     np.where(centers <= 0.8, "med", "few"))))
    return out


def _draw_query(rng, region: str) -> float:
    bands = {"few": FEW_BANDS, "med": MED_BANDS, "many": MANY_BANDS}[region]
    lo, hi = bands[rng.integers(len(bands))]
    return float(rng.uniform(lo, hi))


def _make_rows(operator: str, sampler: GrfSampler, seed: int, split_tag: int,
               count: int, mix) -> np.ndarray:
    grid = sampler.grid
    m = sampler.spec.m
    probs = np.asarray(mix, dtype=np.float64) / 100.0
    rows = np.empty((count, m + 2), dtype=np.float32)
    for i in range(count):
        rng = seeds.rng(seed, seeds.SAMPLE, split_tag, i)
        field = rng.standard_normal(m)
        field = sampler.chol @ field
        if split_tag == 0:
            region = ("few", "med", "many")[rng.choice(3, p=probs)]
            y = _draw_query(rng, region)
        else:
            y = float(rng.uniform(0.0, 1.0))
        # quantize inputs first so targets are recomputable from file contents
        field32 = field.astype(np.float32)
        y32 = np.float32(y)
        if operator == "linear":
            target = antiderivative(field32.astype(np.float64), grid, float(y32))
        else:
            u = solve_elliptic(field32.astype(np.float64), grid)
            target = float(np.interp(float(y32), grid, u))
        rows[i, :m] = field32
        rows[i, m] = y32
        rows[i, m + 1] = np.float32(target)
    return rows


def generate_oldir(out_dir, operator: str, n_train: int, n_test: int, seed: int,
                   mix=DEFAULT_TRAIN_MIX, m: int = 100,
                   length_scale: float = 0.2, variance: float = 1.0) -> str:
    """Write train/test sample files plus a manifest; returns manifest path."""
    if operator not in ("linear", "nonlinear"):
        raise ValueError(f"unknown operator {operator!r}")
    if len(mix) != 3 or sum(mix) != 100 or any(p < 0 for p in mix):
        raise ValueError(f"train mix must be three nonnegative percents "
                         f"summing to 100, got {mix}")
    os.makedirs(out_dir, exist_ok=True)
    sampler = GrfSampler(GrfSpec(m=m, length_scale=length_scale,
                                 variance=variance, seed=seed))
    paths, region_lists = {}, {}
    for split_tag, (name, count) in enumerate((("train", n_train),
                                               ("test", n_test))):
        rows = _make_rows(operator, sampler, seed, split_tag, count, mix)
        header = {
            "kind": "ol-samples",
            "operator": operator,
            "m": m,
            "grid": sampler.grid.tolist(),
            "length_scale": length_scale,
            "variance": variance,
            "bands": {"few": FEW_BANDS, "med": MED_BANDS, "many": MANY_BANDS},
            "mix": list(mix),
            "seed": seed,
            "split": name,
            "count": count,
            "bin_width": OL_BIN_WIDTH,
        }
        path = os.path.join(out_dir, f"{name}.bin")
        write_blob(path, header, {"rows": rows})
        paths[name] = path
        region_lists[name] = region_of_query(rows[:, m]).tolist()
    manifest = {
        "kind": "ol-dataset",
        "operator": operator,
        "m": m,
        "mix": list(mix),
        "seed": seed,
        "bin_width": OL_BIN_WIDTH,
        "counts": {"train": n_train, "test": n_test},
        "files": {k: {"path": v, "sha256": sha256_file(v)}
                  for k, v in paths.items()},
        "regions": region_lists,
    }
    mpath = os.path.join(out_dir, "dataset.json")
    write_json(mpath, manifest)
    return mpath


def load_oldir(manifest_path) -> DirDataset:
    """Rebuild a DirDataset (train/test, no val) from generated sample files."""
    manifest = read_json(manifest_path)
    if manifest.get("kind") != "ol-dataset":
        raise ValueError(f"{manifest_path}: not an ol-dataset manifest")
    feats, targets, splits = [], [], []
    for name in ("train", "test"):
        entry = manifest["files"][name]
        if sha256_file(entry["path"]) != entry["sha256"]:
            raise ValueError(f"{entry['path']}: digest mismatch against manifest")
        header, arrays = read_blob(entry["path"])
        rows = arrays["rows"].astype(np.float64)
        m = header["m"]
        feats.append(rows[:, :m + 1])  # sensor values plus the query location
        targets.append(rows[:, m + 1])
        splits.extend([name] * rows.shape[0])
    features = np.concatenate(feats)
    targets = np.concatenate(targets)
    split = np.asarray(splits, dtype="<U5")
    y = features[:, -1]
    spec = BinSpec(width=OL_BIN_WIDTH, origin=0.0)
    bin_ids = np.clip(spec.id_of(y), 0, 99)
    regions = {int(b): str(region_of_query(np.array([spec.center(b)]))[0])
               for b in range(100)}
    meta = {
        "source": str(manifest_path),
        "operator": manifest["operator"],
        "mix": manifest["mix"],
        "seed": manifest["seed"],
        "bin_width": OL_BIN_WIDTH,
    }
    return DirDataset(features=features, targets=targets, bin_values=y.copy(),
                      bin_ids=bin_ids, split=split, bin_spec=spec,
                      bin_regions=regions, meta=meta)
