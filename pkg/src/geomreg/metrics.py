"""Evaluation over All/Many/Med/Few partitions: MAE, GM, MSE, Pearson."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS_GM = 1e-6  # floor inside the geometric mean; log(0) is undefined
REGION_ORDER = ("all", "many", "med", "few")


@dataclass
class RegionStats:
    count: int
    mae: float | None = None
    gm: float | None = None
    mse: float | None = None
    pearson: float | None = None


@dataclass
class RegionReport:
    regions: dict[str, RegionStats]

    def __getitem__(self, key: str) -> RegionStats:
        return self.regions[key]

    def to_dict(self) -> dict:
        out = {}
        for name, st in self.regions.items():
            entry: dict = {"count": st.count}
            for field in ("mae", "gm", "mse", "pearson"):
                value = getattr(st, field)
                if value is not None:
                    entry[field] = value
            out[name] = entry
        return out


def _stats(preds: np.ndarray, targets: np.ndarray) -> RegionStats:
    n = preds.shape[0]
    if n == 0:
        return RegionStats(count=0)
    err = np.abs(preds - targets)
    st = RegionStats(
        count=n,
        mae=float(err.mean()),
        gm=float(np.exp(np.log(err + EPS_GM).mean())),
        mse=float((err * err).mean()),
    )
    if n >= 2 and preds.std() > 0 and targets.std() > 0:
        st.pearson = float(np.corrcoef(preds, targets)[0, 1])
    return st


def region_metrics(preds, targets, regions) -> RegionReport:
    """Metrics over the full split and each shot region.

    Empty regions are reported with their count and no metric values rather
    than fabricated zeros.
    """
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    regions = np.asarray(regions)
    if not (preds.shape == targets.shape == regions.shape) or preds.ndim != 1:
        raise ValueError("preds, targets and regions must be equal-length 1-D")
    if preds.shape[0] < 1:
        raise ValueError("need at least one sample")
    report = {"all": _stats(preds, targets)}
    for name in REGION_ORDER[1:]:
        mask = regions == name
        report[name] = _stats(preds[mask], targets[mask])
    return RegionReport(regions=report)


def format_table(report: RegionReport, title: str = "") -> str:
    """Fixed-width table, one row per metric, one column per region."""
    header = f"{'Metric':<10}" + "".join(f"{r.capitalize():>12}" for r in REGION_ORDER)
    lines = [title, header, "-" * len(header)] if title else [header, "-" * len(header)]
    for field in ("mae", "gm", "mse", "pearson"):
        row = f"{field.upper():<10}"
        for name in REGION_ORDER:
            value = getattr(report[name], field)
            row += f"{value:>12.4f}" if value is not None else f"{'-':>12}"
        lines.append(row)
    row = f"{'COUNT':<10}" + "".join(f"{report[n].count:>12d}" for n in REGION_ORDER)
    lines.append(row)
    return "\n".join(lines)
