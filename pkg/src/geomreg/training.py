"""Training loop: MSE warmup epoch, per-batch surrogate refill, combined loss.

Epoch 0 trains on MSE only while accumulating the epoch-mean surrogate; from
epoch 1 on, every batch refills the stored surrogate with its own centroids
and minimizes MSE + weighted geometric losses + contrastive loss. The stored
surrogate is momentum-blended at each epoch end. A vanilla mode runs the same
loop with the geometric machinery never evaluated.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import seeds
from .fileio import read_blob, write_blob
from .geometry import sample_hypersphere, enveloping_loss, homogeneity_loss
from .metrics import RegionReport, region_metrics
from .nn import AdamWState, Mlp, adamw_step, encode, init_mlp, mlp_apply, regress
from .surrogate import (RunningMean, Surrogate, batch_centroids,
                        contrastive_loss, momentum_update, refill)

MODES = ("srl", "vanilla")


@dataclass
class TrainConfig:
    mode: str = "srl"
    lambda_e: float = 1e-2
    lambda_h: float = 1e-2
    contrastive: bool = True
    tau: float = 0.1
    alpha: float = 0.9
    n_sphere: int = 1000
    lr: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 256
    epochs: int = 100
    seed: int = 0
    hidden_dims: tuple = (20, 30)
    rep_dim: int = 10
    activation: str = "relu"
    dtype: str = "float64"
    bin_width: float | None = None  # provenance; binning lives in the dataset

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        for name in ("tau", "lr", "batch_size", "epochs", "rep_dim", "n_sphere"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1]")
        if self.lambda_e < 0 or self.lambda_h < 0 or self.weight_decay < 0:
            raise ValueError("loss weights and weight decay must be nonnegative")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")
        self.hidden_dims = tuple(int(d) for d in self.hidden_dims)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: tuple(v) if k == "hidden_dims" else v
                      for k, v in d.items()})


@dataclass
class TrainResult:
    encoder: Mlp
    head: Mlp
    surrogate: Surrogate | None
    history: list[dict]
    best_epoch: int
    config: TrainConfig
    elapsed: float = 0.0

    def history_payload(self) -> dict:
        return {"config": self.config.to_dict(), "best_epoch": self.best_epoch,
                "epochs": self.history}


def _positions_for(bin_ids: np.ndarray, train_ids: np.ndarray) -> np.ndarray:
    pos = np.searchsorted(train_ids, bin_ids)
    if (pos >= train_ids.shape[0]).any() or \
            (train_ids[np.minimum(pos, train_ids.shape[0] - 1)] != bin_ids).any():
        raise ValueError("row bin missing from the training bins")
    return pos


def train(config: TrainConfig, dataset) -> TrainResult:
    """Run the full loop on a curated dataset; deterministic per seed."""
    t_start = time.perf_counter()
    dtype = np.float64 if config.dtype == "float64" else np.float32
    x_train, y_train, bins_train, _ = dataset.rows("train")
    n = x_train.shape[0]
    train_ids, centers, _counts = dataset.train_bins()
    positions = _positions_for(bins_train, train_ids)
    k = train_ids.shape[0]
    srl = config.mode == "srl"

    encoder = init_mlp([x_train.shape[1], *config.hidden_dims, config.rep_dim],
                       config.activation,
                       seed=seeds.derive(config.seed, seeds.INIT_ENCODER))
    head = init_mlp([config.rep_dim, 1], config.activation,
                    seed=seeds.derive(config.seed, seeds.INIT_HEAD))
    head.biases[0][0] = y_train.mean()  # start predictions at the train mean
    params = encoder.params() + head.params()
    n_enc = len(encoder.params())
    opt = AdamWState.for_params(params, lr=config.lr,
                                weight_decay=config.weight_decay)

    sphere = None
    if srl and config.lambda_e > 0.0:
        sphere = sample_hypersphere(config.n_sphere, config.rep_dim,
                                    seed=seeds.derive(config.seed, seeds.SPHERE))
    shuffle_rng = seeds.rng(config.seed, seeds.SHUFFLE)

    has_val = dataset.n_rows("val") > 0
    surrogate: Surrogate | None = None
    history: list[dict] = []
    best = (np.inf, -1, None)  # (val mae, epoch, params snapshot)

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        accum = RunningMean(k, config.rep_dim) if srl else None
        sums = {"reg": 0.0, "env": 0.0, "homo": 0.0, "con": 0.0, "total": 0.0}
        seen = {"env": False, "homo": False, "con": False}
        n_batches = 0

        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            try:
                tape = ad.Tape(dtype=dtype)
                pvars = [tape.leaf(p) for p in params]
                xb = tape.constant(x_train[idx])
                yb = tape.constant(y_train[idx][:, None])
                z = ad.l2_normalize(mlp_apply(pvars[:n_enc], xb,
                                              config.activation))
                pred = mlp_apply(pvars[n_enc:], z, config.activation)
                d = ad.sub(pred, yb)
                loss_reg = ad.mean_all(ad.mul(d, d))
                total = loss_reg

                bc = batch_centroids(z, positions[idx]) if srl else None
                if srl and epoch >= 1:
                    filled = refill(bc, surrogate)
                    if config.lambda_e > 0.0:
                        env = ad.mul(enveloping_loss(sphere.points, filled),
                                     config.lambda_e)
                        total = ad.add(total, env)
                        sums["env"] += float(env.data)
                        seen["env"] = True
                    if config.lambda_h > 0.0:
                        homo = ad.mul(homogeneity_loss(filled, centers),
                                      config.lambda_h)
                        total = ad.add(total, homo)
                        sums["homo"] += float(homo.data)
                        seen["homo"] = True
                    if config.contrastive:
                        # batch mean: the summed form couples the loss balance
                        # to batch size and swamps the (mean) regression term
                        con = ad.div(contrastive_loss(z, positions[idx],
                                                      filled, config.tau),
                                     idx.shape[0])
                        total = ad.add(total, con)
                        sums["con"] += float(con.data)
                        seen["con"] = True

                grads_all = tape.backward(total)
                grads = [np.asarray(grads_all[v.idx], dtype=np.float64)
                         if grads_all[v.idx] is not None else np.zeros_like(p)
                         for v, p in zip(pvars, params)]
                params = adamw_step(params, grads, opt)
            except ad.NumericError as err:
                raise ad.NumericError(
                    f"epoch {epoch}, batch {n_batches}: {err}") from err

            if srl:
                accum.update(bc)
            sums["reg"] += float(loss_reg.data)
            sums["total"] += float(total.data)
            n_batches += 1

        if srl:
            running = accum.finalize(surrogate, centers)
            if surrogate is None:
                running.epoch = 1
                surrogate = running
            else:
                surrogate = momentum_update(surrogate, running, config.alpha)

        record = {"epoch": epoch,
                  "reg": sums["reg"] / n_batches,
                  "total": sums["total"] / n_batches}
        for name in ("env", "homo", "con"):
            record[name] = sums[name] / n_batches if seen[name] else None

        if has_val:
            enc_now = encoder.replace_params(params[:n_enc])
            head_now = head.replace_params(params[n_enc:])
            x_val, y_val, _, _ = dataset.rows("val")
            preds = regress(head_now, encode(enc_now, x_val))
            val_mae = float(np.mean(np.abs(preds - y_val)))
            record["val_mae"] = val_mae
            if val_mae <= best[0]:  # ties resolve to the later epoch
                best = (val_mae, epoch, [p.copy() for p in params])
        else:
            record["val_mae"] = None
        history.append(record)

    if best[2] is not None:
        params = best[2]
        best_epoch = best[1]
    else:
        best_epoch = config.epochs - 1
    encoder = encoder.replace_params(params[:n_enc])
    head = head.replace_params(params[n_enc:])
    return TrainResult(encoder=encoder, head=head, surrogate=surrogate,
                       history=history, best_epoch=best_epoch, config=config,
                       elapsed=time.perf_counter() - t_start)


def evaluate(encoder: Mlp, head: Mlp, dataset, split: str) -> RegionReport:
    """Predict a split and score it over All/Many/Med/Few."""
    x, y, _, regions = dataset.rows(split)
    preds = regress(head, encode(encoder, x))
    return region_metrics(preds, y, regions)


def export_embeddings(path, encoder: Mlp, dataset, split: str) -> None:
    """Unit-norm representations plus bin id and region tag per row."""
    x, _, bins, regions = dataset.rows(split)
    z = encode(encoder, x)
    ids = sorted(int(b) for b in np.unique(bins))
    header = {
        "kind": "embeddings",
        "split": split,
        "bins": [{"id": b, "center": float(dataset.bin_spec.center(b)),
                  "region": dataset.bin_regions[b]} for b in ids],
        "regions": regions.tolist(),
    }
    write_blob(path, header, {"z": z.astype(np.float32),
                              "bin_ids": bins.astype(np.float32)})


def load_embeddings(path):
    header, arrays = read_blob(path)
    if header.get("kind") != "embeddings":
        raise ValueError(f"{path}: not an embeddings file")
    return (arrays["z"].astype(np.float64),
            arrays["bin_ids"].astype(int), header)


def save_surrogate(path, surrogate: Surrogate, regions: list[str],
                   meta: dict | None = None) -> None:
    header = dict(meta or {})
    header.update({
        "kind": "surrogate",
        "bins": surrogate.bin_values.tolist(),
        "k": surrogate.k,
        "epoch": surrogate.epoch,
        "regions": list(regions),
    })
    write_blob(path, header, {"centroids": surrogate.centroids.astype(np.float32)})


def load_surrogate(path):
    header, arrays = read_blob(path)
    if header.get("kind") != "surrogate":
        raise ValueError(f"{path}: not a surrogate dump")
    s = Surrogate(bin_values=np.asarray(header["bins"]),
                  centroids=arrays["centroids"].astype(np.float64),
                  epoch=header["epoch"])
    return s, header
