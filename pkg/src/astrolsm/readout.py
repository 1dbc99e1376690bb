"""Three-layer MLP readout trained with Adam on mean squared error."""
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .persist import load_bundle, save_bundle

OUTPUT_DIM = 150


class TrainingDivergence(ArithmeticError):
    pass


@dataclass
class MlpParams:
    weights: List[np.ndarray]   # each (fan_in, fan_out)
    biases: List[np.ndarray]

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def arrays(self):
        return self.weights + self.biases

    def copy(self):
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def save(self, stem, meta=None):
        arrays = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"W{k}"] = w
            arrays[f"b{k}"] = b
        meta = dict(meta or {}, layer_sizes=self.sizes,
                    convention="hidden = relu(x @ W + b); output layer linear")
        return save_bundle(stem, arrays, meta)

    @classmethod
    def load(cls, path):
        arrays, meta = load_bundle(path)
        n = len(meta["layer_sizes"]) - 1
        return cls([arrays[f"W{k}"] for k in range(n)], [arrays[f"b{k}"] for k in range(n)])


def init_mlp(sizes: Sequence[int], seed=0) -> MlpParams:
    """He-normal weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def _as_batch(features, dim):
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != dim:
        raise ValueError(f"feature length {x.shape[1]} does not match input layer {dim}")
    return x, single


def _forward_cache(params, x):
    acts = [x]
    pre = []
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        h = z if k == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts, pre


def forward(params: MlpParams, features):
    """ReLU hidden layers, linear output.  Accepts one feature vector or a (B, d) batch."""
    x, single = _as_batch(features, params.weights[0].shape[0])
    out = _forward_cache(params, x)[0][-1]
    return out[0] if single else out


def mse_loss(prediction, target):
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise ValueError(f"shape mismatch: {prediction.shape} vs {target.shape}")
    return float(np.mean((prediction - target) ** 2))


def backward(params: MlpParams, features, target):
    """Loss and exact gradients of ``mse_loss(forward(features), target)``.

    The loss averages over every element of the batch, matching ``mse_loss``.
    Returns ``(loss, MlpParams of gradients)``.
    """
    x, single = _as_batch(features, params.weights[0].shape[0])
    t = np.asarray(target, dtype=np.float64).reshape(x.shape[0], -1)
    acts, pre = _forward_cache(params, x)
    out = acts[-1]
    if t.shape != out.shape:
        raise ValueError(f"target shape {t.shape} does not match output {out.shape}")
    diff = out - t
    loss = float(np.mean(diff ** 2))
    delta = 2.0 * diff / diff.size
    gw = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for k in range(len(params.weights) - 1, -1, -1):
        gw[k] = acts[k].T @ delta
        gb[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ params.weights[k].T) * (pre[k - 1] > 0.0)
    return loss, MlpParams(gw, gb)


@dataclass
class OptimizerState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, **hyper):
        zeros = [np.zeros_like(a) for a in params.arrays()]
        return cls(m=zeros, v=[z.copy() for z in zeros], **hyper)


def adam_step(params: MlpParams, grads: MlpParams, opt: OptimizerState):
    """Bias-corrected Adam.  Updates ``params`` and ``opt`` in place and returns both."""
    opt.step += 1
    c1 = 1.0 - opt.beta1 ** opt.step
    c2 = 1.0 - opt.beta2 ** opt.step
    for p, g, m, v in zip(params.arrays(), grads.arrays(), opt.m, opt.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        p -= opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    return params, opt


@dataclass
class LossHistory:
    batch_epoch: List[int] = field(default_factory=list)
    batch_index: List[int] = field(default_factory=list)
    batch_loss: List[float] = field(default_factory=list)
    epoch_train: List[float] = field(default_factory=list)
    epoch_val: List[float] = field(default_factory=list)

    def write_csv(self, batches_path, epochs_path):
        batches_path, epochs_path = Path(batches_path), Path(epochs_path)
        batches_path.parent.mkdir(parents=True, exist_ok=True)
        with open(batches_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "batch_index", "train_loss"])
            for row in zip(self.batch_epoch, self.batch_index, self.batch_loss):
                w.writerow([row[0], row[1], repr(float(row[2]))])
        with open(epochs_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss"])
            for e, (tr, va) in enumerate(zip(self.epoch_train, self.epoch_val)):
                w.writerow([e + 1, repr(float(tr)), repr(float(va))])

    @classmethod
    def read_epochs_csv(cls, path):
        hist = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                hist.epoch_train.append(float(row["train_loss"]))
                hist.epoch_val.append(float(row["val_loss"]))
        return hist


@dataclass
class TrainConfig:
    hidden: Tuple[int, ...] = (256, 256)
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 500
    batch_size: int = 32


def fit(train_x, train_y, val_x, val_y, cfg: TrainConfig, seed=0, callback=None):
    """Train an MLP on precomputed features.  Targets are (k, 150) flattened windows."""
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.float64).reshape(train_x.shape[0], -1)
    if train_x.shape[0] == 0:
        raise ValueError("training split is empty")
    if cfg.epochs < 1 or cfg.batch_size < 1:
        raise ValueError("epochs and batch_size must be >= 1")
    val_x = np.asarray(val_x, dtype=np.float64)
    val_y = np.asarray(val_y, dtype=np.float64).reshape(val_x.shape[0], train_y.shape[1])

    init_seed, shuffle_seed = np.random.SeedSequence(seed).generate_state(2)
    params = init_mlp([train_x.shape[1], *cfg.hidden, train_y.shape[1]], seed=int(init_seed))
    opt = OptimizerState.for_params(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
                                    eps=cfg.eps)
    rng = np.random.default_rng(int(shuffle_seed))
    hist = LossHistory()
    n = train_x.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            loss, grads = backward(params, train_x[idx], train_y[idx])
            if not np.isfinite(loss):
                raise TrainingDivergence(f"non-finite training loss at epoch {epoch + 1}, batch {b}")
            adam_step(params, grads, opt)
            losses.append(loss)
            hist.batch_epoch.append(epoch + 1)
            hist.batch_index.append(b)
            hist.batch_loss.append(loss)
        hist.epoch_train.append(float(np.mean(losses)))
        if val_x.shape[0]:
            val = mse_loss(forward(params, val_x), val_y)
            if not np.isfinite(val):
                raise TrainingDivergence(f"non-finite validation loss at epoch {epoch + 1}")
        else:
            val = float("nan")
        hist.epoch_val.append(val)
        if callback is not None:
            callback(epoch + 1, hist)
    return params, hist


def dataset_features(weights, spec, dataset):
    """Reservoir features and flattened normalised targets for every split.

    Reservoir weights are frozen, so features are computed once per window and
    reused across epochs.
    """
    from .reservoir import run_batch

    out = {}
    for name in ("train", "val", "test"):
        x, y = dataset.split(name)
        if x.shape[0]:
            feats = run_batch(weights, spec, dataset.normalize(x))
        else:
            feats = np.zeros((0, spec.feature_dim))
        out[name] = (feats, dataset.normalize(y).reshape(y.shape[0], OUTPUT_DIM))
    return out


def train(spec, weights, dataset, cfg: TrainConfig, seed=0, callback=None):
    """Full readout training for one reservoir; returns ``(params, history, features)``."""
    feats = dataset_features(weights, spec, dataset)
    params, hist = fit(*feats["train"], *feats["val"], cfg, seed=seed, callback=callback)
    return params, hist, feats
